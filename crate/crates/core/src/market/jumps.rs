use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of the log jump size `Y`; the relative price jump is `e^Y - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum JumpSpec {
    /// `Y ~ N(mu, delta^2)` (Merton).
    LogNormal { mu: f64, delta: f64 },
    /// Upward `Exp(eta1)` with probability `p`, downward `-Exp(eta2)` otherwise (Kou).
    DoubleExponential { eta1: f64, eta2: f64, p: f64 },
    /// Categorical mixture of other laws; weights sum to one.
    Mixture {
        weights: Vec<f64>,
        components: Vec<JumpSpec>,
    },
}

/// First two moments of the relative jump `y - 1`, `y = e^Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpMoments {
    /// `E[y - 1]`
    pub k: f64,
    /// `E[(y - 1)^2]`
    pub m: f64,
}

impl JumpSpec {
    pub fn log_normal(mu: f64, delta: f64) -> Result<Self> {
        let spec = JumpSpec::LogNormal { mu, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn double_exponential(eta1: f64, eta2: f64, p: f64) -> Result<Self> {
        let spec = JumpSpec::DoubleExponential { eta1, eta2, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JumpSpec::LogNormal { mu, delta } => {
                if !mu.is_finite() || !delta.is_finite() || *delta <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "log-normal jump needs finite mu and delta > 0 (mu = {mu}, delta = {delta})"
                    )));
                }
            }
            JumpSpec::DoubleExponential { eta1, eta2, p } => {
                if !(*eta1 > 1.0) || !(*eta2 > 0.0) || !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidParameter(format!(
                        "double-exponential jump needs eta1 > 1, eta2 > 0, p in [0, 1] \
                         (eta1 = {eta1}, eta2 = {eta2}, p = {p})"
                    )));
                }
            }
            JumpSpec::Mixture {
                weights,
                components,
            } => {
                if components.is_empty() {
                    return Err(Error::EmptyMixture);
                }
                if weights.len() != components.len() {
                    return Err(Error::InvalidParameter(
                        "mixture weights and components differ in length".into(),
                    ));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::InvalidParameter("negative mixture weight".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "mixture weights sum to {total}"
                    )));
                }
                for c in components {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    /// `E[y - 1]`; defined whenever the law is valid.
    pub fn mean_jump(&self) -> Result<f64> {
        match self {
            JumpSpec::LogNormal { mu, delta } => Ok((mu + 0.5 * delta * delta).exp_m1()),
            JumpSpec::DoubleExponential { eta1, eta2, p } => {
                if *eta1 <= 1.0 {
                    return Err(Error::MomentUndefined(format!(
                        "E[e^Y] needs eta1 > 1, got {eta1}"
                    )));
                }
                Ok(p * eta1 / (eta1 - 1.0) + (1.0 - p) * eta2 / (eta2 + 1.0) - 1.0)
            }
            JumpSpec::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| c.mean_jump().map(|k| w * k))
                .sum(),
        }
    }

    /// `E[e^{2Y}]`.
    fn second_exp_moment(&self) -> Result<f64> {
        match self {
            JumpSpec::LogNormal { mu, delta } => Ok((2.0 * mu + 2.0 * delta * delta).exp()),
            JumpSpec::DoubleExponential { eta1, eta2, p } => {
                if *eta1 <= 2.0 {
                    return Err(Error::MomentUndefined(format!(
                        "E[e^(2Y)] needs eta1 > 2, got {eta1}"
                    )));
                }
                Ok(p * eta1 / (eta1 - 2.0) + (1.0 - p) * eta2 / (eta2 + 2.0))
            }
            JumpSpec::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| c.second_exp_moment().map(|e| w * e))
                .sum(),
        }
    }

    /// Draw one log jump `Y`.
    pub fn sample_log_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpSpec::LogNormal { mu, delta } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + delta * z
            }
            JumpSpec::DoubleExponential { eta1, eta2, p } => {
                let u: f64 = rng.random();
                if u < *p {
                    Exp::new(*eta1).expect("validated rate").sample(rng)
                } else {
                    -Exp::new(*eta2).expect("validated rate").sample(rng)
                }
            }
            JumpSpec::Mixture {
                weights,
                components,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    acc += w;
                    if u < acc {
                        return c.sample_log_jump(rng);
                    }
                }
                components
                    .last()
                    .expect("non-empty mixture")
                    .sample_log_jump(rng)
            }
        }
    }

    /// Probability that a single relative jump satisfies `1 + g (y - 1) <= 0`.
    pub fn nonpositive_factor_probability(&self, g: f64) -> f64 {
        // 1 + g(y - 1) <= 0  <=>  y >= 1 - 1/g  (g < 0)  or  y <= 1 - 1/g  (g > 1)
        if g == 0.0 || (0.0..=1.0).contains(&g) {
            return 0.0;
        }
        let threshold = 1.0 - 1.0 / g;
        let upper_tail = g < 0.0;
        match self {
            JumpSpec::LogNormal { mu, delta } => {
                let z = (threshold.ln() - mu) / delta;
                if upper_tail {
                    crate::pricing::normal_cdf(-z)
                } else {
                    crate::pricing::normal_cdf(z)
                }
            }
            JumpSpec::DoubleExponential { eta1, eta2, p } => {
                let y = threshold.ln();
                if upper_tail {
                    if y <= 0.0 {
                        *p + (1.0 - p) * (eta2 * y).exp()
                    } else {
                        p * (-eta1 * y).exp()
                    }
                } else if y >= 0.0 {
                    (1.0 - p) + p * (1.0 - (-eta1 * y).exp())
                } else {
                    (1.0 - p) * (eta2 * y).exp()
                }
            }
            JumpSpec::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.nonpositive_factor_probability(g))
                .sum(),
        }
    }

    pub(crate) fn contains_double_exponential(&self) -> bool {
        match self {
            JumpSpec::LogNormal { .. } => false,
            JumpSpec::DoubleExponential { .. } => true,
            JumpSpec::Mixture { components, .. } => {
                components.iter().any(JumpSpec::contains_double_exponential)
            }
        }
    }
}

/// Compensator `k = E[y-1]` and second moment `m = E[(y-1)^2]` of a jump law.
pub fn jump_moments(spec: &JumpSpec) -> Result<JumpMoments> {
    let k = spec.mean_jump()?;
    // E[(y-1)^2] = E[y^2] - 2E[y] + 1 = E[e^{2Y}] - 2(k + 1) + 1
    let m = match spec {
        JumpSpec::LogNormal { mu, delta } => {
            // Evaluated as (e^a - 1) - 2(e^b - 1) to stay accurate when delta -> 0.
            let a = 2.0 * mu + 2.0 * delta * delta;
            let b = mu + 0.5 * delta * delta;
            a.exp_m1() - 2.0 * b.exp_m1()
        }
        _ => spec.second_exp_moment()? - 2.0 * (k + 1.0) + 1.0,
    };
    Ok(JumpMoments { k, m })
}

/// Single-component representation of a sum of independent compound Poisson
/// processes: summed intensity and a categorical mixture of the jump laws.
pub fn mix_compound_poisson(intensities: &[f64], specs: &[JumpSpec]) -> Result<(f64, JumpSpec)> {
    if intensities.is_empty() || specs.is_empty() {
        return Err(Error::EmptyMixture);
    }
    if intensities.len() != specs.len() {
        return Err(Error::InvalidParameter(
            "intensities and jump laws differ in length".into(),
        ));
    }
    if let Some(bad) = intensities.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mixture intensities must be positive, got {bad}"
        )));
    }
    for s in specs {
        s.validate()?;
    }
    let total: f64 = intensities.iter().sum();
    if specs.len() == 1 {
        return Ok((total, specs[0].clone()));
    }
    let mut weights: Vec<f64> = intensities.iter().map(|l| l / total).collect();
    // absorb rounding so the weights sum to one exactly enough for validate()
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    *weights.last_mut().expect("non-empty") += drift;
    Ok((
        total,
        JumpSpec::Mixture {
            weights,
            components: specs.to_vec(),
        },
    ))
}
