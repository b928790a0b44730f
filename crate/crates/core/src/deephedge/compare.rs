use serde::Serialize;

use super::PROBE_TAG;
use crate::error::{Error, Result};
use crate::market::{sample_increments, simulate_stock, GridSpec, MarketModel, Scheme, Trajectories};
use crate::nn::{rollout, Checkpoint, HedgeNet};
use crate::pricing::{bs_delta_portfolio, feedback_portfolio, mc_minimal_variance_price, CallClaim, MertonSeries, DEFAULT_J_MAX};
use crate::stats::{mean, quantile, skewness};

/// Learned strategy on an evaluation batch. Matrices are path-major.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub x0: f64,
    /// Quadratic loss over the unflagged paths.
    pub loss: f64,
    pub steps: usize,
    /// `M x R`
    pub pi: Vec<f64>,
    /// `M x (R+1)`
    pub wealth: Vec<f64>,
    /// `M x (R+1)`
    pub stock: Vec<f64>,
    /// `x_R - F` on the unflagged paths.
    pub residuals: Vec<f64>,
    /// Paths excluded because the update rule left its domain.
    pub flagged: Vec<bool>,
}

impl Evaluation {
    pub fn paths(&self) -> usize {
        self.flagged.len()
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }
}

/// Run `net` on `m` fresh paths drawn with `seed`; no weights change.
pub fn evaluate(
    net: &HedgeNet,
    model: &MarketModel,
    claim: &CallClaim,
    grid: &GridSpec,
    m: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<Evaluation> {
    let inc = sample_increments(model, grid, m, seed)?;
    let stock = simulate_stock(model, grid, &inc, scheme)?;
    let ro = rollout(net, &inc, model, grid, scheme)?;
    let r = grid.steps();
    let flagged: Vec<bool> = ro.flagged.iter().zip(stock.flagged()).map(|(a, b)| *a || *b).collect();
    let residuals: Vec<f64> = (0..m)
        .filter(|j| !flagged[*j])
        .map(|j| ro.wealth[j * (r + 1) + r] - claim.payoff(stock.get(j, r)))
        .collect();
    let loss = if residuals.is_empty() {
        f64::NAN
    } else {
        0.5 * residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64
    };
    Ok(Evaluation {
        x0: ro.x0,
        loss,
        steps: r,
        pi: ro.pi,
        wealth: ro.wealth,
        stock: stock.values().to_vec(),
        residuals,
        flagged,
    })
}

/// [`evaluate`] for a saved checkpoint, refusing one trained on another grid.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    model: &MarketModel,
    claim: &CallClaim,
    grid: &GridSpec,
    m: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<Evaluation> {
    let recorded = |k: &str| ck.meta.get(k).and_then(|v| v.parse::<f64>().ok());
    if let Some(steps) = recorded("steps") {
        if steps != grid.steps() as f64 {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint trained with {steps} steps, grid has {}",
                grid.steps()
            )));
        }
    }
    if let Some(t) = recorded("maturity") {
        if (t - grid.maturity()).abs() > 1e-12 {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint trained to maturity {t}, grid ends at {}",
                grid.maturity()
            )));
        }
    }
    evaluate(&ck.net, model, claim, grid, m, seed, scheme)
}

/// `(1/M) sum_j sqrt(sum_i (pi_ij - phi_ij)^2 dt)` for path-major `M x R` inputs.
pub fn l2_distance(pi_hat: &[f64], phi: &[f64], steps: usize, dt: f64) -> Result<f64> {
    if pi_hat.len() != phi.len() || steps == 0 || pi_hat.len() % steps != 0 || pi_hat.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "portfolios of length {} and {} with {steps} steps",
            pi_hat.len(),
            phi.len()
        )));
    }
    let m = pi_hat.len() / steps;
    let total: f64 = pi_hat
        .chunks(steps)
        .zip(phi.chunks(steps))
        .map(|(a, b)| (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * dt).sqrt())
        .sum();
    Ok(total / m as f64)
}

/// Delta-hedge fractions `Delta(t_i, S_i) S_i / x_i` along the learned
/// wealth `x_i` of an evaluation, using the Black–Scholes delta without
/// jumps and the Merton-price delta with log-normal jumps.
pub fn reference_portfolio(model: &MarketModel, claim: &CallClaim, grid: &GridSpec, eval: &Evaluation) -> Result<Vec<f64>> {
    let r = grid.steps();
    let m = eval.paths();
    let series = if model.has_jumps() {
        Some(MertonSeries::new(model, claim, DEFAULT_J_MAX)?)
    } else {
        None
    };
    let mut phi = vec![0.0; m * r];
    for j in 0..m {
        for i in 0..r {
            let (t, s, x) = (grid.time(i), eval.stock[j * (r + 1) + i], eval.wealth[j * (r + 1) + i]);
            phi[j * r + i] = match &series {
                None => bs_delta_portfolio(t, s, x, model.sigma_norm(), claim.strike(), claim.maturity())?,
                Some(ms) => {
                    if !(x > 0.0) {
                        return Err(Error::DivisionByZeroWealth(x));
                    }
                    ms.q_delta(t, s)? * s / x
                }
            };
        }
    }
    Ok(phi)
}

/// Self-financing share-holding hedge.
#[derive(Debug, Clone)]
pub struct DeltaHedge {
    pub x0: f64,
    /// `M x (R+1)`
    pub wealth: Vec<f64>,
    /// Shares held on each step, `M x R`.
    pub shares: Vec<f64>,
}

/// Hedge holding `dC/ds` shares of the Merton price function (the
/// Poisson-weighted Black–Scholes deltas), started from the Merton price.
/// Without jumps this is the Black–Scholes delta hedge.
pub fn delta_hedge(model: &MarketModel, claim: &CallClaim, grid: &GridSpec, stock: &Trajectories) -> Result<DeltaHedge> {
    let ms = MertonSeries::new(model, claim, DEFAULT_J_MAX)?;
    let r = grid.steps();
    let m = stock.paths();
    let x0 = ms.q_price(0.0, model.s0())?;
    let mut wealth = vec![0.0; m * (r + 1)];
    let mut shares = vec![0.0; m * r];
    for j in 0..m {
        let mut x = x0;
        wealth[j * (r + 1)] = x;
        for i in 0..r {
            let (s, s_next) = (stock.get(j, i), stock.get(j, i + 1));
            let delta = ms.q_delta(grid.time(i), s)?;
            shares[j * r + i] = delta;
            x += delta * (s_next - s);
            wealth[j * (r + 1) + i + 1] = x;
        }
    }
    Ok(DeltaHedge { x0, wealth, shares })
}

/// Feedback-form hedge with series coefficients, run along `stock`.
fn feedback_hedge(model: &MarketModel, claim: &CallClaim, grid: &GridSpec, stock: &Trajectories, x0: f64) -> Result<Vec<f64>> {
    let ms = MertonSeries::new(model, claim, DEFAULT_J_MAX)?;
    let r = grid.steps();
    let mut terminal = Vec::with_capacity(stock.paths());
    for j in 0..stock.paths() {
        let mut x = x0;
        for i in 0..r {
            let (t, s) = (grid.time(i), stock.get(j, i));
            // a ruined hedge stays flat
            if x > 0.0 {
                let pi = feedback_portfolio(x, ms.p_value(t, s)?, ms.beta(t, s)?, |y| ms.jump_coefficient(t, s, y), model)?;
                x += x * pi * (stock.get(j, i + 1) / s - 1.0);
            }
        }
        terminal.push(x);
    }
    Ok(terminal)
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyResiduals {
    pub name: String,
    pub x0: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    pub mean: f64,
    pub skewness: f64,
    pub q01: f64,
    pub q99: f64,
}

impl StrategyResiduals {
    fn new(name: &str, x0: f64, residuals: Vec<f64>) -> Self {
        StrategyResiduals {
            name: name.to_string(),
            x0,
            mean: mean(&residuals),
            skewness: skewness(&residuals),
            q01: quantile(&residuals, 0.01),
            q99: quantile(&residuals, 0.99),
            residuals,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub paths: usize,
    pub strategies: Vec<StrategyResiduals>,
}

impl Comparison {
    pub fn get(&self, name: &str) -> Option<&StrategyResiduals> {
        self.strategies.iter().find(|s| s.name == name)
    }
}

/// Terminal hedging errors `x_R - F` of the learned hedge (`learned`), the
/// Merton delta hedge (`merton_delta`) and optionally the feedback-form
/// hedge (`feedback`), all on the same `m` paths.
///
/// Paths flagged by the learned rollout are dropped from every strategy.
#[allow(clippy::too_many_arguments)]
pub fn compare_residuals(
    net: &HedgeNet,
    model: &MarketModel,
    claim: &CallClaim,
    grid: &GridSpec,
    m: usize,
    seed: u64,
    scheme: Scheme,
    include_feedback: bool,
) -> Result<Comparison> {
    let inc = sample_increments(model, grid, m, seed)?;
    let stock = simulate_stock(model, grid, &inc, scheme)?;
    let ro = rollout(net, &inc, model, grid, scheme)?;
    let r = grid.steps();
    let keep: Vec<usize> = (0..m).filter(|j| !ro.flagged[*j] && !stock.flagged()[*j]).collect();
    let payoff = |j: usize| claim.payoff(stock.get(j, r));

    let learned: Vec<f64> = keep.iter().map(|&j| ro.wealth[j * (r + 1) + r] - payoff(j)).collect();
    let dh = delta_hedge(model, claim, grid, &stock)?;
    let merton: Vec<f64> = keep.iter().map(|&j| dh.wealth[j * (r + 1) + r] - payoff(j)).collect();
    let mut strategies = vec![
        StrategyResiduals::new("learned", ro.x0, learned),
        StrategyResiduals::new("merton_delta", dh.x0, merton),
    ];
    if include_feedback {
        let x0 = mc_minimal_variance_price(model, claim, 200_000, seed ^ PROBE_TAG)?.price;
        let term = feedback_hedge(model, claim, grid, &stock, x0)?;
        let fb = keep.iter().map(|&j| term[j] - payoff(j)).collect();
        strategies.push(StrategyResiduals::new("feedback", x0, fb));
    }
    Ok(Comparison {
        paths: keep.len(),
        strategies,
    })
}
