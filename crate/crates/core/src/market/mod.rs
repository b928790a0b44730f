//! Jump-diffusion market models and their Euler–Maruyama discretization.
//!
//! A [`MarketModel`] describes the stock
//!
//! ```text
//! dS = S [ alpha0 dt + sigma0 . dB + gamma0 sum_l (y_l - 1) dÑ_l ]
//! ```
//!
//! with constant coefficients, `d_B` independent Brownian motions and `d_N`
//! independent compound Poisson components. [`sample_increments`] draws the
//! noise once; [`evolve_wealth`] and [`simulate_stock`] replay it under either
//! the direct or the logarithmic update rule.

mod io;
mod jumps;
mod paths;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_increments, write_increments, write_paths_csv, INCREMENTS_MAGIC, INCREMENTS_VERSION};
pub use jumps::{jump_moments, mix_compound_poisson, JumpMoments, JumpSpec};
pub use paths::{
    evolve_wealth, sample_increments, simulate_paths, simulate_stock, step_return, Increments,
    PathBatch, Trajectories,
};

/// Wealth update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `x_{i+1} = x_i + x_i pi_i r_i`
    #[default]
    Direct,
    /// Euler step of `log x`, then exponentiate.
    Log,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Scheme::Direct),
            "log" => Ok(Scheme::Log),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

/// One compound Poisson component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpComponent {
    pub intensity: f64,
    pub law: JumpSpec,
}

/// Constant-coefficient jump-diffusion market with zero interest rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    alpha0: f64,
    sigma0: Vec<f64>,
    gamma0: bool,
    jumps: Vec<JumpComponent>,
    s0: f64,
}

impl MarketModel {
    pub fn new(
        alpha0: f64,
        sigma0: Vec<f64>,
        gamma0: bool,
        jumps: Vec<JumpComponent>,
        s0: f64,
    ) -> Result<Self> {
        if !alpha0.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha0 = {alpha0}")));
        }
        if sigma0.is_empty() || sigma0.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(
                "sigma0 needs at least one finite component".into(),
            ));
        }
        if !(s0 > 0.0) || !s0.is_finite() {
            return Err(Error::InvalidParameter(format!("s0 must be positive, got {s0}")));
        }
        for c in &jumps {
            if !(c.intensity >= 0.0) || !c.intensity.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "jump intensity must be >= 0, got {}",
                    c.intensity
                )));
            }
            c.law.validate()?;
            c.law.mean_jump()?;
        }
        let model = MarketModel {
            alpha0,
            sigma0,
            gamma0,
            jumps,
            s0,
        };
        // Non-degeneracy: sigma'sigma + gamma0 sum lambda_l m_l > 0.
        if model.sigma_sq() <= 0.0 {
            let jump_var = if gamma0 {
                model
                    .jumps
                    .iter()
                    .map(|c| jump_moments(&c.law).map(|m| c.intensity * m.m).unwrap_or(f64::INFINITY))
                    .sum::<f64>()
            } else {
                0.0
            };
            if !(jump_var > 0.0) {
                return Err(Error::InvalidParameter(
                    "degenerate market: no Brownian volatility and no jump variance".into(),
                ));
            }
        }
        Ok(model)
    }

    /// Geometric Brownian motion.
    pub fn black_scholes(alpha0: f64, sigma0: f64, s0: f64) -> Result<Self> {
        Self::new(alpha0, vec![sigma0], false, Vec::new(), s0)
    }

    /// Several independent Brownian drivers, no jumps.
    pub fn multi_brownian(alpha0: f64, sigma0: Vec<f64>, s0: f64) -> Result<Self> {
        Self::new(alpha0, sigma0, false, Vec::new(), s0)
    }

    /// Single-component Merton model with log-normal jumps.
    pub fn merton(alpha0: f64, sigma0: f64, s0: f64, lambda: f64, mu: f64, delta: f64) -> Result<Self> {
        Self::new(
            alpha0,
            vec![sigma0],
            true,
            vec![JumpComponent {
                intensity: lambda,
                law: JumpSpec::log_normal(mu, delta)?,
            }],
            s0,
        )
    }

    /// Kou model with double-exponential jumps.
    pub fn kou(alpha0: f64, sigma0: f64, s0: f64, lambda: f64, eta1: f64, eta2: f64, p: f64) -> Result<Self> {
        Self::new(
            alpha0,
            vec![sigma0],
            true,
            vec![JumpComponent {
                intensity: lambda,
                law: JumpSpec::double_exponential(eta1, eta2, p)?,
            }],
            s0,
        )
    }

    /// Same market with all jump components merged into one compound Poisson
    /// process with a mixture jump law.
    pub fn mixed(&self) -> Result<Self> {
        if self.jumps.len() <= 1 {
            return Ok(self.clone());
        }
        let active: Vec<&JumpComponent> = self.jumps.iter().filter(|c| c.intensity > 0.0).collect();
        if active.is_empty() {
            return Self::new(self.alpha0, self.sigma0.clone(), self.gamma0, Vec::new(), self.s0);
        }
        let lambdas: Vec<f64> = active.iter().map(|c| c.intensity).collect();
        let laws: Vec<JumpSpec> = active.iter().map(|c| c.law.clone()).collect();
        let (intensity, law) = mix_compound_poisson(&lambdas, &laws)?;
        Self::new(
            self.alpha0,
            self.sigma0.clone(),
            self.gamma0,
            vec![JumpComponent { intensity, law }],
            self.s0,
        )
    }

    /// Copy with a different initial price.
    pub fn with_s0(&self, s0: f64) -> Result<Self> {
        Self::new(self.alpha0, self.sigma0.clone(), self.gamma0, self.jumps.clone(), s0)
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn sigma0(&self) -> &[f64] {
        &self.sigma0
    }

    pub fn gamma0(&self) -> bool {
        self.gamma0
    }

    pub fn gamma(&self) -> f64 {
        if self.gamma0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn jumps(&self) -> &[JumpComponent] {
        &self.jumps
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn d_b(&self) -> usize {
        self.sigma0.len()
    }

    pub fn d_n(&self) -> usize {
        self.jumps.len()
    }

    /// `sigma0' sigma0`
    pub fn sigma_sq(&self) -> f64 {
        self.sigma0.iter().map(|s| s * s).sum()
    }

    /// Euclidean norm of `sigma0`.
    pub fn sigma_norm(&self) -> f64 {
        self.sigma_sq().sqrt()
    }

    /// `gamma0 * lambda' k`, the jump compensator in the drift.
    pub fn compensator(&self) -> f64 {
        if !self.gamma0 {
            return 0.0;
        }
        // validated at construction, so mean_jump cannot fail here
        self.jumps
            .iter()
            .map(|c| c.intensity * c.law.mean_jump().unwrap_or(0.0))
            .sum()
    }

    /// `gamma0 * sum_l lambda_l m_l`.
    pub fn jump_variance_rate(&self) -> Result<f64> {
        if !self.gamma0 {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for c in &self.jumps {
            if c.intensity > 0.0 {
                acc += c.intensity * jump_moments(&c.law)?.m;
            }
        }
        Ok(acc)
    }

    /// True when jumps are active with positive intensity.
    pub fn has_jumps(&self) -> bool {
        self.gamma0 && self.jumps.iter().any(|c| c.intensity > 0.0)
    }

    /// Parameters of a single-component log-normal model, if that is what this is.
    pub fn merton_params(&self) -> Option<(f64, f64, f64)> {
        if !self.has_jumps() {
            return Some((0.0, 0.0, 1.0));
        }
        let active: Vec<&JumpComponent> = self.jumps.iter().filter(|c| c.intensity > 0.0).collect();
        match active.as_slice() {
            [c] => match c.law {
                JumpSpec::LogNormal { mu, delta } => Some((c.intensity, mu, delta)),
                _ => None,
            },
            _ => None,
        }
    }
}

/// Uniform time grid on `[0, T]` with `R` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    maturity: f64,
    steps: usize,
}

impl GridSpec {
    pub fn new(maturity: f64, steps: usize) -> Result<Self> {
        if !(maturity > 0.0) || !maturity.is_finite() {
            return Err(Error::InvalidParameter(format!("maturity must be > 0, got {maturity}")));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("at least one time step required".into()));
        }
        Ok(GridSpec { maturity, steps })
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    /// `t_i`, computed from the index so that `time(R) == T` exactly.
    pub fn time(&self, i: usize) -> f64 {
        self.maturity * (i as f64 / self.steps as f64)
    }
}
