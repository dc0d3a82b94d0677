//! Minimum adversarial attack power for a classical LDPC-coded chain and a
//! learned joint source-channel (DeepJSCC) chain.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod bounds;
pub mod classical;
pub mod deepjscc;
pub mod error;
pub mod gms;
pub mod harness;
pub mod ldpc;
pub mod math;
pub mod modem;
pub mod nn;
pub mod pga;
pub mod source;
pub mod vs_attack;
pub mod vuln;

pub use error::{Error, Result};
