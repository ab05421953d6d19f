//! Domain types shared by every detector, plus exact AMM arithmetic and
//! native-currency valuation.
//!
//! All token arithmetic is integer (base units) with floor rounding; prices
//! are exact rationals.

pub mod amm;
pub mod codec;
mod types;
mod value;

pub use amm::{amm_swap_out, constant_product_out, AmmError, SwapResult};
pub use types::*;
pub use value::{exact_value, gas_cost, value_in_native, Valuation};
