use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bevscope::auction::{expected_max_bid, simulate_network_impact, synthetic_revenue_fees, AuctionScenario};
use bevscope::fork::{threshold_curve, DEFAULT_MAX_DEPTH};
use bevscope::replay::scan_replayable;
use bevscope::report::{scan_trace, Detector, DetectorSet, ReportError};
use bevscope::trace::{diff_private_transactions, generate_fixture, load_trace, FixtureSpec, MempoolLog};
use bevscope::Address;

const THREADS_ENV: &str = "BEVSCOPE_THREADS";

#[derive(Parser)]
#[command(name = "bevscope", version, about = "BEV detectors, replay scans and auction/fork models")]
struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write tab-separated plot sidecars next to the output.
    #[arg(long)]
    emit_plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sandwich, arbitrage, liquidation and clogging detectors.
    Detect {
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated subset of detectors.
        #[arg(long, value_delimiter = ',')]
        only: Vec<Detector>,
        #[command(flatten)]
        output: Output,
    },
    /// Find transactions an adversary could profitably replay.
    ReplayScan {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "0x00000000000000000000000000000000000000ad")]
        adversary: Address,
        #[command(flatten)]
        output: Output,
    },
    /// Relay-auction Monte Carlo and P2P network impact.
    AuctionSim {
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long, default_value_t = 1.0)]
        rmax: f64,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        /// Relay shares for the network-impact curve.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        alpha: Vec<f64>,
        /// Synthetic revenue/fee draws for the network-impact curve.
        #[arg(long, default_value_t = 0)]
        impact_draws: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Forking threshold over a grid of BEV multiples.
    ForkThreshold {
        /// Comma-separated BEV multiples.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,10,100,600")]
        v: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Generate a synthetic trace, its ground truth and a mempool log.
    FixtureGen {
        /// JSON fixture spec; defaults apply when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transactions mined without passing through the public mempool.
    PrivateDiff {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        mempool: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

enum Failure {
    Usage(String),
    Validation(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn plots_dir(out: &Option<PathBuf>) -> PathBuf {
    match out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".plots");
            PathBuf::from(s)
        }
        None => PathBuf::from("plots"),
    }
}

fn write_lines<T: Serialize>(w: &mut dyn Write, items: &[T]) -> Result<(), Failure> {
    for item in items {
        serde_json::to_writer(&mut *w, item).map_err(invalid)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_tsv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(File::create(dir.join(name))?);
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    f.flush()?;
    Ok(())
}

fn flags(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Detect { trace, only, output } => {
            let t = load_trace(&trace).map_err(invalid)?;
            let set = if only.is_empty() { DetectorSet::all() } else { DetectorSet::only(&only) };
            let names: Vec<&str> = set.0.iter().map(|d| d.name()).collect();
            let report = scan_trace(&t, &set, Some(seed), flags(&[("only", names.join(","))])).map_err(|e| match e {
                ReportError::Invariant(m) => Failure::Invariant(m),
                ReportError::Io(e) => invalid(e),
            })?;
            let mut w = sink(&output.out)?;
            report.write_jsonl(&mut w)?;
            w.flush()?;
            if output.emit_plots {
                report.write_plot_sidecars(&plots_dir(&output.out))?;
            }
        }
        Command::ReplayScan { trace, adversary, output } => {
            let t = load_trace(&trace).map_err(invalid)?;
            let scan = scan_replayable(&t, &adversary);
            let mut w = sink(&output.out)?;
            write_lines(&mut *w, &[&scan])?;
            if output.emit_plots {
                let c = &scan.capital;
                let rows = [
                    format!("0\t{}", c.zero),
                    format!("(0,10]\t{}", c.up_to_10),
                    format!("(10,100]\t{}", c.up_to_100),
                    format!(">100\t{}", c.above_100),
                ];
                write_tsv(&plots_dir(&output.out), "replay_capital.tsv", "capital_native\tcount", &rows)?;
            }
        }
        Command::AuctionSim { n, rmax, trials, alpha, impact_draws, output } => {
            let scenario = AuctionScenario { alpha: alpha.first().copied().unwrap_or(0.0), n, r_max: rmax, trials, seed };
            let est = expected_max_bid(&scenario).map_err(invalid)?;
            let mut w = sink(&output.out)?;
            #[derive(Serialize)]
            struct Line<'a> {
                scenario: &'a AuctionScenario,
                estimate: bevscope::auction::MaxBidEstimate,
                z_score: f64,
            }
            write_lines(&mut *w, &[Line { scenario: &scenario, estimate: est, z_score: est.z_score() }])?;
            if impact_draws > 0 {
                let txs = synthetic_revenue_fees(impact_draws, 1.5, seed);
                let impact = simulate_network_impact(&txs, &alpha, seed).map_err(invalid)?;
                write_lines(&mut *w, &[&impact])?;
                if output.emit_plots {
                    let rows: Vec<String> = impact
                        .alphas
                        .iter()
                        .zip(&impact.prevented_fraction)
                        .map(|(a, p)| format!("{a}\t{p}"))
                        .collect();
                    write_tsv(&plots_dir(&output.out), "network_impact.tsv", "alpha\tprevented_fraction", &rows)?;
                }
            }
        }
        Command::ForkThreshold { v, depth, output } => {
            if depth == 0 {
                return Err(Failure::Usage("--depth must be at least 1".into()));
            }
            let curve = threshold_curve(&v, depth);
            let mut w = sink(&output.out)?;
            write_lines(&mut *w, &curve)?;
            if output.emit_plots {
                let rows: Vec<String> = curve.iter().map(|r| format!("{}\t{}", r.v, r.alpha)).collect();
                write_tsv(&plots_dir(&output.out), "fork_threshold.tsv", "v\talpha_star", &rows)?;
            }
        }
        Command::FixtureGen { spec, out } => {
            let mut s = match spec {
                Some(p) => serde_json::from_reader(File::open(p)?).map_err(invalid)?,
                None => FixtureSpec::default(),
            };
            s.seed = seed;
            let fx = generate_fixture(&s).map_err(invalid)?;
            fx.trace.save(&out).map_err(invalid)?;
            let stem = out.as_os_str().to_owned();
            let with = |suffix: &str| {
                let mut p = stem.clone();
                p.push(suffix);
                PathBuf::from(p)
            };
            let mut tw = BufWriter::new(File::create(with(".truth.json"))?);
            serde_json::to_writer_pretty(&mut tw, &fx.truth).map_err(invalid)?;
            tw.write_all(b"\n")?;
            tw.flush()?;
            fx.mempool.save(with(".mempool.jsonl")).map_err(invalid)?;
        }
        Command::PrivateDiff { trace, mempool, output } => {
            let t = load_trace(&trace).map_err(invalid)?;
            let log = MempoolLog::load(&mempool).map_err(invalid)?;
            let sets = diff_private_transactions(&t, &log);
            let mut w = sink(&output.out)?;
            #[derive(Serialize)]
            struct Counts {
                not_broadcast: usize,
                zero_gas_price: usize,
                union: usize,
            }
            let counts = Counts {
                not_broadcast: sets.not_broadcast.len(),
                zero_gas_price: sets.zero_gas_price.len(),
                union: sets.union.len(),
            };
            serde_json::to_writer(&mut *w, &counts).map_err(invalid)?;
            w.write_all(b"\n")?;
            write_lines(&mut *w, &[&sets])?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {v:?}");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Usage(m) => ("usage", m),
                Failure::Validation(m) => ("invalid input", m),
                Failure::Invariant(m) => ("internal invariant", m),
            };
            eprintln!("error ({kind}): {msg}");
            ExitCode::from(f.code())
        }
    }
}
