//! Call prices and hedging coefficients.
//!
//! Closed forms (Black–Scholes, Merton series), Monte Carlo under the
//! minimal-variance martingale measure `Q*` with density `Z*`, the
//! Brownian/jump coefficients `beta`, `kappa` of the call, and the
//! feedback-form optimal portfolio.

mod black_scholes;
mod crosscheck;
mod measure;
mod series;
mod surface;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use black_scholes::{analytic_price, bs_delta, bs_delta_portfolio, bs_price};
pub use crosscheck::{crosscheck_price, feedback_portfolio, LogNormalQuadrature, CROSSCHECK_NODES};
pub use measure::{
    check_zstar_support, compute_g, density_mean, mc_minimal_variance_price, sample_terminal_stock,
    simulate_zm, simulate_zstar, Density, DensityPaths, ExactSampler, ExactState,
};
pub use series::{beta_series, kappa_series, merton_series_price, MertonSeries, DEFAULT_J_MAX};
pub use surface::{price_surface, SurfaceParam, SurfaceRow};

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// European call `(S(T) - K)^+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallClaim {
    strike: f64,
    maturity: f64,
}

impl CallClaim {
    pub fn new(strike: f64, maturity: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::InvalidParameter(format!("strike must be > 0, got {strike}")));
        }
        if !(maturity > 0.0) || !maturity.is_finite() {
            return Err(Error::InvalidParameter(format!("maturity must be > 0, got {maturity}")));
        }
        Ok(CallClaim { strike, maturity })
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn payoff(&self, s: f64) -> f64 {
        (s - self.strike).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceMethod {
    Analytic,
    Series,
    Mc,
    Crosscheck,
}

impl std::str::FromStr for PriceMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(PriceMethod::Analytic),
            "series" => Ok(PriceMethod::Series),
            "mc" => Ok(PriceMethod::Mc),
            "crosscheck" => Ok(PriceMethod::Crosscheck),
            other => Err(Error::InvalidParameter(format!("unknown pricing route '{other}'"))),
        }
    }
}

/// Price estimate with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub method: PriceMethod,
    pub price: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub seed: Option<u64>,
    pub signed_measure_used: bool,
    pub params: BTreeMap<String, f64>,
}

impl PriceResult {
    pub(crate) fn exact(method: PriceMethod, price: f64) -> Self {
        PriceResult {
            method,
            price,
            stderr: 0.0,
            n_paths: 0,
            seed: None,
            signed_measure_used: false,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("price result serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-14);
        assert!((normal_cdf(-8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
        assert!((normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
    }

    #[test]
    fn json_key_order_is_fixed() {
        let r = PriceResult::exact(PriceMethod::Analytic, 0.5)
            .with_param("sigma", 0.2)
            .with_param("K", 0.5);
        let j = r.to_json();
        let keys = ["method", "price", "stderr", "n_paths", "seed", "signed_measure_used", "params"];
        let pos: Vec<usize> = keys.iter().map(|k| j.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(j.contains("\"analytic\""));
        let back: PriceResult = serde_json::from_str(&j).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn claim_validation() {
        assert!(CallClaim::new(0.5, 1.0).is_ok());
        assert!(CallClaim::new(0.0, 1.0).is_err());
        assert!(CallClaim::new(0.5, -1.0).is_err());
        assert_eq!(CallClaim::new(0.5, 1.0).unwrap().payoff(0.3), 0.0);
    }
}
