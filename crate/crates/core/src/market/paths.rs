use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GridSpec, MarketModel, Scheme};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Discretized noise for a batch of `m` paths.
///
/// `b` holds standard normal draws indexed `[path][component][step]`
/// (`m x d_B x R`); `j` holds jump marks `e^Y - 1` (or 0) with the same
/// layout over the `d_N` jump components.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    m: usize,
    d_b: usize,
    d_n: usize,
    steps: usize,
    seed: u64,
    b: Vec<f64>,
    j: Vec<f64>,
}

/// Noise entering one Euler step of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepNoise {
    /// `sqrt(dt) * sum_c sigma_c B_c`
    pub diffusion: f64,
    /// `gamma0 * sum_l J^l`
    pub jump: f64,
}

impl Increments {
    pub fn from_parts(
        m: usize,
        d_b: usize,
        d_n: usize,
        steps: usize,
        seed: u64,
        b: Vec<f64>,
        j: Vec<f64>,
    ) -> Result<Self> {
        if b.len() != m * d_b * steps || j.len() != m * d_n * steps {
            return Err(Error::ShapeMismatch(format!(
                "increments of {m} x ({d_b}, {d_n}) x {steps} got buffers of {} and {}",
                b.len(),
                j.len()
            )));
        }
        Ok(Increments {
            m,
            d_b,
            d_n,
            steps,
            seed,
            b,
            j,
        })
    }

    pub fn paths(&self) -> usize {
        self.m
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    pub fn d_n(&self) -> usize {
        self.d_n
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn brownian(&self, path: usize, comp: usize, step: usize) -> f64 {
        self.b[(path * self.d_b + comp) * self.steps + step]
    }

    pub fn jump(&self, path: usize, comp: usize, step: usize) -> f64 {
        self.j[(path * self.d_n + comp) * self.steps + step]
    }

    pub fn brownian_raw(&self) -> &[f64] {
        &self.b
    }

    pub fn jump_raw(&self) -> &[f64] {
        &self.j
    }

    #[cfg(test)]
    pub(crate) fn brownian_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    /// Rows `start..end` as a standalone batch.
    pub fn rows(&self, start: usize, end: usize) -> Increments {
        assert!(start <= end && end <= self.m, "row range out of bounds");
        let bw = self.d_b * self.steps;
        let jw = self.d_n * self.steps;
        Increments {
            m: end - start,
            d_b: self.d_b,
            d_n: self.d_n,
            steps: self.steps,
            seed: self.seed,
            b: self.b[start * bw..end * bw].to_vec(),
            j: self.j[start * jw..end * jw].to_vec(),
        }
    }

    /// Noise of step `step` on `path` under `model`.
    pub fn step_noise(&self, model: &MarketModel, grid: &GridSpec, path: usize, step: usize) -> StepNoise {
        let sqrt_dt = grid.dt().sqrt();
        let diffusion: f64 = model
            .sigma0()
            .iter()
            .enumerate()
            .map(|(c, s)| s * self.brownian(path, c, step))
            .sum::<f64>()
            * sqrt_dt;
        let jump = if model.gamma0() {
            (0..self.d_n).map(|l| self.jump(path, l, step)).sum()
        } else {
            0.0
        };
        StepNoise { diffusion, jump }
    }

    pub(crate) fn check(&self, model: &MarketModel, grid: &GridSpec) -> Result<()> {
        if self.d_b != model.d_b() || self.d_n != model.d_n() || self.steps != grid.steps() {
            return Err(Error::ShapeMismatch(format!(
                "increments ({}, {}, {}) do not match model/grid ({}, {}, {})",
                self.d_b,
                self.d_n,
                self.steps,
                model.d_b(),
                model.d_n(),
                grid.steps()
            )));
        }
        Ok(())
    }
}

/// Draw `m` paths of Brownian and jump increments.
///
/// Each jump component fires at most once per step, with probability
/// `lambda_l * dt`, so the discrete compensator `lambda' k dt` is exact.
pub fn sample_increments(model: &MarketModel, grid: &GridSpec, m: usize, seed: u64) -> Result<Increments> {
    if m == 0 {
        return Err(Error::InvalidParameter("batch size must be >= 1".into()));
    }
    let dt = grid.dt();
    let probs: Vec<f64> = model.jumps().iter().map(|c| c.intensity * dt).collect();
    if let Some(p) = probs.iter().find(|p| **p > 1.0) {
        return Err(Error::GridTooCoarse(*p));
    }
    let (d_b, d_n, r) = (model.d_b(), model.d_n(), grid.steps());
    let mut b = vec![0.0; m * d_b * r];
    let mut j = vec![0.0; m * d_n * r];
    for path in 0..m {
        let mut rng = stream_rng(seed, path as u64);
        for step in 0..r {
            for c in 0..d_b {
                b[(path * d_b + c) * r + step] = StandardNormal.sample(&mut rng);
            }
            for (l, comp) in model.jumps().iter().enumerate() {
                let u: f64 = rng.random();
                if u < probs[l] {
                    j[(path * d_n + l) * r + step] = comp.law.sample_log_jump(&mut rng).exp_m1();
                }
            }
        }
    }
    Increments::from_parts(m, d_b, d_n, r, seed, b, j)
}

/// Simulated trajectories, `m x (R+1)` row-major, with paths that left the
/// admissible region flagged rather than dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    steps: usize,
    values: Vec<f64>,
    flagged: Vec<bool>,
    scheme: Scheme,
}

impl Trajectories {
    pub fn paths(&self) -> usize {
        self.flagged.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, path: usize, step: usize) -> f64 {
        self.values[path * (self.steps + 1) + step]
    }

    pub fn path(&self, path: usize) -> &[f64] {
        &self.values[path * (self.steps + 1)..(path + 1) * (self.steps + 1)]
    }

    pub fn terminal(&self) -> Vec<f64> {
        (0..self.paths()).map(|p| self.get(p, self.steps)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flagged(&self) -> &[bool] {
        &self.flagged
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }

    /// Fail if any path was flagged.
    pub fn require_clean(self) -> Result<Self> {
        let paths = self.flagged_count();
        if paths == 0 {
            Ok(self)
        } else if self.scheme == Scheme::Log {
            Err(Error::LogArgumentNonpositive { paths })
        } else {
            Err(Error::NonpositiveValue { paths })
        }
    }
}

/// Drift-plus-noise return `r_i` of the direct rule, `x_{i+1} = x_i (1 + pi_i r_i)`.
pub fn step_return(model: &MarketModel, grid: &GridSpec, noise: StepNoise) -> f64 {
    (model.alpha0() - model.compensator()) * grid.dt() + noise.diffusion + noise.jump
}

/// Wealth under the portfolio fractions `pi` (`m x R`, row-major).
///
/// Under the direct scheme paths that reach a non-positive value are flagged
/// and keep evolving; under the log scheme a non-positive log argument flags
/// the path and fills the rest of it with NaN.
pub fn evolve_wealth(
    increments: &Increments,
    model: &MarketModel,
    grid: &GridSpec,
    x0: f64,
    pi: &[f64],
    scheme: Scheme,
) -> Result<Trajectories> {
    increments.check(model, grid)?;
    let (m, r) = (increments.paths(), grid.steps());
    if pi.len() != m * r {
        return Err(Error::ShapeMismatch(format!(
            "portfolio has {} entries, expected {m} x {r}",
            pi.len()
        )));
    }
    if !(x0 > 0.0) || !x0.is_finite() {
        return Err(Error::InvalidParameter(format!("x0 must be > 0, got {x0}")));
    }
    if let Some(bad) = pi.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite portfolio value {bad}")));
    }
    let dt = grid.dt();
    let drift = model.alpha0() - model.compensator();
    let half_var = 0.5 * model.sigma_sq();
    let mut values = vec![0.0; m * (r + 1)];
    let mut flagged = vec![false; m];
    for path in 0..m {
        let row = &mut values[path * (r + 1)..(path + 1) * (r + 1)];
        row[0] = x0;
        match scheme {
            Scheme::Direct => {
                let mut x = x0;
                for i in 0..r {
                    let noise = increments.step_noise(model, grid, path, i);
                    let p = pi[path * r + i];
                    x += x * p * (drift * dt + noise.diffusion + noise.jump);
                    if x <= 0.0 {
                        flagged[path] = true;
                    }
                    row[i + 1] = x;
                }
            }
            Scheme::Log => {
                let mut y = x0.ln();
                for i in 0..r {
                    let noise = increments.step_noise(model, grid, path, i);
                    let p = pi[path * r + i];
                    let arg = 1.0 + p * noise.jump;
                    if arg <= 0.0 || flagged[path] {
                        flagged[path] = true;
                        row[i + 1] = f64::NAN;
                        continue;
                    }
                    y += (drift * p - p * p * half_var) * dt + p * noise.diffusion + arg.ln();
                    row[i + 1] = y.exp();
                }
            }
        }
    }
    Ok(Trajectories {
        steps: r,
        values,
        flagged,
        scheme,
    })
}

/// Stock paths: the wealth rule with `x0 = s0` and `pi = 1`.
pub fn simulate_stock(
    model: &MarketModel,
    grid: &GridSpec,
    increments: &Increments,
    scheme: Scheme,
) -> Result<Trajectories> {
    let ones = vec![1.0; increments.paths() * grid.steps()];
    evolve_wealth(increments, model, grid, model.s0(), &ones, scheme)
}

/// Stock and wealth paths generated from the same noise.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub stock: Trajectories,
    pub wealth: Trajectories,
    pub increments: Increments,
    pub grid: GridSpec,
}

/// Simulate `m` stock paths and the wealth of a constant-fraction portfolio.
pub fn simulate_paths(
    model: &MarketModel,
    grid: &GridSpec,
    m: usize,
    seed: u64,
    x0: f64,
    pi: f64,
    scheme: Scheme,
) -> Result<PathBatch> {
    let increments = sample_increments(model, grid, m, seed)?;
    let stock = simulate_stock(model, grid, &increments, scheme)?;
    let fractions = vec![pi; m * grid.steps()];
    let wealth = evolve_wealth(&increments, model, grid, x0, &fractions, scheme)?;
    Ok(PathBatch {
        stock,
        wealth,
        increments,
        grid: *grid,
    })
}
