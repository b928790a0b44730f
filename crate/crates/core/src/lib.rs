//! Minimal-variance pricing and deep hedging of European calls in
//! jump-diffusion markets.
//!
//! - [`market`]: models, increments and Euler paths
//! - [`pricing`]: closed forms, series, Monte Carlo under the minimal-variance measure
//! - [`tensor`], [`nn`]: reverse-mode autodiff and the LSTM hedging network
//! - [`deephedge`]: training, evaluation and comparison of hedging strategies

pub mod deephedge;
pub mod error;
pub mod market;
pub mod nn;
pub mod pricing;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use market::{GridSpec, Increments, JumpComponent, JumpSpec, MarketModel, PathBatch, Scheme};
pub use nn::{HedgeNet, NetSpec};
pub use pricing::{CallClaim, PriceMethod, PriceResult};
pub use tensor::{Tape, Tensor, Var};
