use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use super::io::{MempoolEntry, Trace, TraceError};
use crate::chain::TxHash;

/// First-seen timestamps of transactions observed on the P2P network.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MempoolLog {
    first_seen: BTreeMap<TxHash, u64>,
}

impl MempoolLog {
    /// Records an observation; duplicates collapse to the earliest timestamp.
    pub fn observe(&mut self, hash: TxHash, first_seen_ms: u64) {
        self.first_seen
            .entry(hash)
            .and_modify(|t| *t = (*t).min(first_seen_ms))
            .or_insert(first_seen_ms);
    }

    pub fn contains(&self, hash: &TxHash) -> bool {
        self.first_seen.contains_key(hash)
    }

    pub fn first_seen(&self, hash: &TxHash) -> Option<u64> {
        self.first_seen.get(hash).copied()
    }

    pub fn len(&self) -> usize {
        self.first_seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_seen.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = MempoolEntry> + '_ {
        self.first_seen.iter().map(|(h, t)| MempoolEntry {
            hash: *h,
            first_seen_ms: *t,
        })
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, TraceError> {
        let mut log = MempoolLog::default();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: MempoolEntry = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            log.observe(e.hash, e.first_seen_ms);
        }
        Ok(log)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::read_from(File::open(path)?)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        for e in self.entries() {
            serde_json::to_writer(&mut w, &e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

impl FromIterator<(TxHash, u64)> for MempoolLog {
    fn from_iter<I: IntoIterator<Item = (TxHash, u64)>>(iter: I) -> Self {
        let mut log = MempoolLog::default();
        for (h, t) in iter {
            log.observe(h, t);
        }
        log
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PrivateTxSets {
    /// Mined but never seen in the mempool log.
    pub not_broadcast: BTreeSet<TxHash>,
    /// Mined with a zero gas price.
    pub zero_gas_price: BTreeSet<TxHash>,
    pub union: BTreeSet<TxHash>,
}

pub fn diff_private_transactions(trace: &Trace, mempool: &MempoolLog) -> PrivateTxSets {
    let mut out = PrivateTxSets::default();
    for tx in trace.blocks.iter().flat_map(|b| &b.transactions) {
        if !mempool.contains(&tx.hash) {
            out.not_broadcast.insert(tx.hash);
        }
        if tx.is_zero_gas_price() {
            out.zero_gas_price.insert(tx.hash);
        }
    }
    out.union = out.not_broadcast.union(&out.zero_gas_price).copied().collect();
    out
}
