use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::{CallClaim, PriceMethod, PriceResult};
use crate::error::{Error, Result};
use crate::market::{GridSpec, Increments, MarketModel};
use crate::rng::stream_rng;
use crate::stats::{MeanEstimate, RunningMoments};

/// `G = -alpha0 / (sigma0' sigma0 + gamma0 sum_l lambda_l m_l)`.
pub fn compute_g(model: &MarketModel) -> Result<f64> {
    let denom = model.sigma_sq() + model.jump_variance_rate()?;
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter("degenerate market: zero total variance rate".into()));
    }
    Ok(-model.alpha0() / denom)
}

/// Refuse `Z*` for jump laws where `1 + G(e^Y - 1) > 0` fails with positive
/// probability and the law is double-exponential.
///
/// Log-normal laws are accepted; non-positive factors are then recorded as a
/// signed measure by the simulators.
pub fn check_zstar_support(model: &MarketModel, g: f64) -> Result<()> {
    if !model.gamma0() {
        return Ok(());
    }
    for c in model.jumps().iter().filter(|c| c.intensity > 0.0) {
        if c.law.contains_double_exponential() {
            let violation = c.law.nonpositive_factor_probability(g);
            if violation > 0.0 {
                return Err(Error::MeasureUnavailable { g, violation });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Density {
    /// Minimal-variance density `Z*`.
    MinimalVariance,
    /// Merton's density `Z^M` (Brownian drift removal only).
    Merton,
}

/// Running state of one exactly simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactState {
    pub log_s: f64,
    /// `Z*` in product form; may be non-positive.
    pub z_star: f64,
    pub z_merton: f64,
    pub signed: bool,
}

impl ExactState {
    pub fn new(s0: f64) -> Self {
        ExactState {
            log_s: s0.ln(),
            z_star: 1.0,
            z_merton: 1.0,
            signed: false,
        }
    }

    pub fn stock(&self) -> f64 {
        self.log_s.exp()
    }
}

/// Exact transition of the stock and both densities over a fixed interval:
/// Gaussian Brownian increment, Poisson jump count per component, and every
/// individual jump mark.
#[derive(Debug, Clone)]
pub struct ExactSampler<'a> {
    model: &'a MarketModel,
    g: f64,
    dt: f64,
    sqrt_dt: f64,
    counts: Vec<Option<Poisson<f64>>>,
    log_drift: f64,
    zstar_rate: f64,
    zm_rate: f64,
    zm_scale: f64,
}

impl<'a> ExactSampler<'a> {
    pub fn new(model: &'a MarketModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("interval must be > 0, got {dt}")));
        }
        let g = compute_g(model)?;
        let counts = model
            .jumps()
            .iter()
            .map(|c| {
                if model.gamma0() && c.intensity > 0.0 {
                    Poisson::new(c.intensity * dt)
                        .map(Some)
                        .map_err(|e| Error::InvalidParameter(e.to_string()))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let s2 = model.sigma_sq();
        let comp = model.compensator();
        let alpha = model.alpha0();
        let (zm_rate, zm_scale) = if s2 > 0.0 {
            (-alpha * alpha / (2.0 * s2), -alpha / s2)
        } else {
            (0.0, 0.0)
        };
        Ok(ExactSampler {
            model,
            g,
            dt,
            sqrt_dt: dt.sqrt(),
            counts,
            log_drift: alpha - 0.5 * s2 - comp,
            zstar_rate: -0.5 * g * g * s2 - g * comp,
            zm_rate,
            zm_scale,
        })
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    /// Advance `state` by one interval.
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R, state: &mut ExactState) {
        let mut sb = 0.0;
        for s in self.model.sigma0() {
            let z: f64 = StandardNormal.sample(rng);
            sb += s * z * self.sqrt_dt;
        }
        let mut log_jumps = 0.0;
        let mut factor = 1.0;
        for (c, count) in self.model.jumps().iter().zip(&self.counts) {
            let Some(count) = count else { continue };
            let n = count.sample(rng) as u64;
            for _ in 0..n {
                let y = c.law.sample_log_jump(rng);
                log_jumps += y;
                let f = 1.0 + self.g * y.exp_m1();
                if f <= 0.0 {
                    state.signed = true;
                }
                factor *= f;
            }
        }
        state.log_s += self.log_drift * self.dt + sb + log_jumps;
        state.z_star *= (self.zstar_rate * self.dt + self.g * sb).exp() * factor;
        state.z_merton *= (self.zm_rate * self.dt + self.zm_scale * sb).exp();
    }
}

fn terminal_states(model: &MarketModel, maturity: f64, m: usize, seed: u64) -> Result<(f64, Vec<ExactState>)> {
    let sampler = ExactSampler::new(model, maturity)?;
    let states = (0..m)
        .map(|j| {
            let mut rng = stream_rng(seed, j as u64);
            let mut st = ExactState::new(model.s0());
            sampler.step(&mut rng, &mut st);
            st
        })
        .collect();
    Ok((sampler.g(), states))
}

/// Terminal stock values drawn exactly.
pub fn sample_terminal_stock(model: &MarketModel, maturity: f64, m: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(terminal_states(model, maturity, m, seed)?
        .1
        .iter()
        .map(ExactState::stock)
        .collect())
}

/// Monte Carlo estimate of `E[Z(T)]`.
pub fn density_mean(model: &MarketModel, maturity: f64, density: Density, m: usize, seed: u64) -> Result<MeanEstimate> {
    if density == Density::Merton && model.sigma_sq() <= 0.0 {
        return Err(Error::ZeroVolatility);
    }
    let (g, states) = terminal_states(model, maturity, m, seed)?;
    if density == Density::MinimalVariance {
        check_zstar_support(model, g)?;
    }
    let mut acc = RunningMoments::default();
    for st in &states {
        acc.push(match density {
            Density::MinimalVariance => st.z_star,
            Density::Merton => st.z_merton,
        });
    }
    Ok(acc.estimate())
}

/// `E[F Z*(T)]` from `m` exact terminal draws.
pub fn mc_minimal_variance_price(model: &MarketModel, claim: &CallClaim, m: usize, seed: u64) -> Result<PriceResult> {
    if m < 1000 {
        return Err(Error::InvalidParameter(format!(
            "at least 1000 paths needed for a meaningful standard error, got {m}"
        )));
    }
    let sampler = ExactSampler::new(model, claim.maturity())?;
    let g = sampler.g();
    check_zstar_support(model, g)?;
    let mut acc = RunningMoments::default();
    let mut signed = false;
    for j in 0..m {
        let mut rng = stream_rng(seed, j as u64);
        let mut st = ExactState::new(model.s0());
        sampler.step(&mut rng, &mut st);
        signed |= st.signed;
        acc.push(claim.payoff(st.stock()) * st.z_star);
    }
    let est = acc.estimate();
    Ok(PriceResult {
        method: PriceMethod::Mc,
        price: est.mean,
        stderr: est.stderr,
        n_paths: m as u64,
        seed: Some(seed),
        signed_measure_used: signed,
        params: Default::default(),
    }
    .with_param("G", g)
    .with_param("K", claim.strike())
    .with_param("T", claim.maturity())
    .with_param("s0", model.s0()))
}

/// Density paths on a grid, `m x (R+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPaths {
    steps: usize,
    values: Vec<f64>,
    pub signed_measure_used: bool,
}

impl DensityPaths {
    pub fn paths(&self) -> usize {
        self.values.len() / (self.steps + 1)
    }

    pub fn get(&self, path: usize, step: usize) -> f64 {
        self.values[path * (self.steps + 1) + step]
    }

    pub fn terminal(&self) -> Vec<f64> {
        (0..self.paths()).map(|p| self.get(p, self.steps)).collect()
    }
}

fn check_dims(model: &MarketModel, grid: &GridSpec, inc: &Increments) -> Result<()> {
    if inc.d_b() != model.d_b() || inc.d_n() != model.d_n() || inc.steps() != grid.steps() {
        return Err(Error::ShapeMismatch("increments do not match model and grid".into()));
    }
    Ok(())
}

/// `Z*(t_i) = exp((-G^2|sigma|^2/2 - G lambda'k) t_i + G sigma.B(t_i)) prod (1 + G J)`
/// on the Euler increments.
pub fn simulate_zstar(model: &MarketModel, grid: &GridSpec, inc: &Increments) -> Result<DensityPaths> {
    check_dims(model, grid, inc)?;
    let g = compute_g(model)?;
    let rate = -0.5 * g * g * model.sigma_sq() - g * model.compensator();
    let (m, r) = (inc.paths(), grid.steps());
    let sqrt_dt = grid.dt().sqrt();
    let mut values = vec![0.0; m * (r + 1)];
    let mut signed = false;
    for p in 0..m {
        let row = &mut values[p * (r + 1)..(p + 1) * (r + 1)];
        row[0] = 1.0;
        let mut sb = 0.0;
        let mut prod = 1.0;
        for i in 0..r {
            sb += model
                .sigma0()
                .iter()
                .enumerate()
                .map(|(c, s)| s * inc.brownian(p, c, i))
                .sum::<f64>()
                * sqrt_dt;
            if model.gamma0() {
                for l in 0..inc.d_n() {
                    let j = inc.jump(p, l, i);
                    if j != 0.0 {
                        let f = 1.0 + g * j;
                        signed |= f <= 0.0;
                        prod *= f;
                    }
                }
            }
            row[i + 1] = (rate * grid.time(i + 1) + g * sb).exp() * prod;
        }
    }
    Ok(DensityPaths {
        steps: r,
        values,
        signed_measure_used: signed,
    })
}

/// `Z^M(t_i) = exp(-alpha^2 t_i / (2|sigma|^2) - (alpha/|sigma|^2) sigma.B(t_i))`.
pub fn simulate_zm(model: &MarketModel, grid: &GridSpec, inc: &Increments) -> Result<DensityPaths> {
    check_dims(model, grid, inc)?;
    let s2 = model.sigma_sq();
    if s2 <= 0.0 {
        return Err(Error::ZeroVolatility);
    }
    let a = model.alpha0();
    let (m, r) = (inc.paths(), grid.steps());
    let sqrt_dt = grid.dt().sqrt();
    let mut values = vec![0.0; m * (r + 1)];
    for p in 0..m {
        let row = &mut values[p * (r + 1)..(p + 1) * (r + 1)];
        row[0] = 1.0;
        let mut sb = 0.0;
        for i in 0..r {
            sb += model
                .sigma0()
                .iter()
                .enumerate()
                .map(|(c, s)| s * inc.brownian(p, c, i))
                .sum::<f64>()
                * sqrt_dt;
            row[i + 1] = (-a * a * grid.time(i + 1) / (2.0 * s2) - a / s2 * sb).exp();
        }
    }
    Ok(DensityPaths {
        steps: r,
        values,
        signed_measure_used: false,
    })
}
