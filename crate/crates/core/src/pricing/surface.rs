use serde::Serialize;

use super::{mc_minimal_variance_price, merton_series_price, CallClaim, DEFAULT_J_MAX};
use crate::error::{Error, Result};
use crate::market::MarketModel;

/// Parameter of a single-component log-normal jump model that a price
/// surface can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceParam {
    Lambda,
    Mu,
    Delta,
    Sigma,
    Alpha,
}

impl std::str::FromStr for SurfaceParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(Self::Lambda),
            "mu" => Ok(Self::Mu),
            "delta" => Ok(Self::Delta),
            "sigma" => Ok(Self::Sigma),
            "alpha" => Ok(Self::Alpha),
            other => Err(Error::InvalidParameter(format!("unknown surface parameter '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub param1: f64,
    pub param2: f64,
    pub price_merton: f64,
    pub price_mv: f64,
    pub diff: f64,
}

fn with_params(base: &MarketModel, sets: &[(SurfaceParam, f64)]) -> Result<MarketModel> {
    let (mut lambda, mut mu, mut delta) = base
        .merton_params()
        .ok_or_else(|| Error::UnsupportedModel("price surfaces need a log-normal jump model".into()))?;
    let mut sigma = base.sigma_norm();
    let mut alpha = base.alpha0();
    for (p, v) in sets {
        match p {
            SurfaceParam::Lambda => lambda = *v,
            SurfaceParam::Mu => mu = *v,
            SurfaceParam::Delta => delta = *v,
            SurfaceParam::Sigma => sigma = *v,
            SurfaceParam::Alpha => alpha = *v,
        }
    }
    MarketModel::merton(alpha, sigma, base.s0(), lambda, mu, delta)
}

/// Merton series price against the minimal-variance Monte Carlo price on a
/// two-parameter grid.
pub fn price_surface(
    base: &MarketModel,
    claim: &CallClaim,
    axis1: (SurfaceParam, &[f64]),
    axis2: (SurfaceParam, &[f64]),
    m: usize,
    seed: u64,
) -> Result<Vec<SurfaceRow>> {
    let mut rows = Vec::with_capacity(axis1.1.len() * axis2.1.len());
    for &v1 in axis1.1 {
        for &v2 in axis2.1 {
            let model = with_params(base, &[(axis1.0, v1), (axis2.0, v2)])?;
            let merton = merton_series_price(&model, claim, DEFAULT_J_MAX)?.price;
            let mv = mc_minimal_variance_price(&model, claim, m, seed)?.price;
            rows.push(SurfaceRow {
                param1: v1,
                param2: v2,
                price_merton: merton,
                price_mv: mv,
                diff: mv - merton,
            });
        }
    }
    Ok(rows)
}
