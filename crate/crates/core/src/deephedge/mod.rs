//! Training the hedging network against the quadratic hedging loss, and
//! evaluating the learned strategy against closed-form hedges.

mod compare;
mod csv;
mod sweep;

pub use compare::{
    compare_residuals, delta_hedge, evaluate, evaluate_checkpoint, l2_distance, reference_portfolio, Comparison, DeltaHedge,
    Evaluation, StrategyResiduals,
};
pub use csv::{write_loss_curve, write_residuals, write_sweep};
pub use sweep::{checkpoint_name, reference_price, sweep, SweepCell, SweepRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{sample_increments, simulate_stock, GridSpec, MarketModel, Scheme};
use crate::nn::{hedge_forward, Adam, Checkpoint, HedgeNet, NetSpec};
use crate::pricing::CallClaim;
use crate::rng::derive_seed;
use crate::tensor::{Tape, Tensor};

/// Seed tags for the independent random streams of a run.
pub const INIT_TAG: u64 = 0x1;
pub const EVAL_TAG: u64 = 0x2;
pub const PROBE_TAG: u64 = 0x3;
/// Epoch `e` draws its batch from tag `EPOCH_TAG + e`.
pub const EPOCH_TAG: u64 = 0x100;

/// `(1/2) mean_j (x_j - (s_j - K)^+)^2`.
pub fn quadratic_loss(x_r: &[f64], s_r: &[f64], strike: f64) -> Result<f64> {
    if x_r.len() != s_r.len() || x_r.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} terminal wealths vs {} terminal stocks",
            x_r.len(),
            s_r.len()
        )));
    }
    let sum: f64 = x_r
        .iter()
        .zip(s_r)
        .map(|(x, s)| (x - (s - strike).max(0.0)).powi(2))
        .sum();
    Ok(0.5 * sum / x_r.len() as f64)
}

/// What to do with a batch where some path left the domain of the update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativePathPolicy {
    /// Skip the optimizer step for that batch.
    #[default]
    DiscardBatch,
    /// Train under the logarithmic scheme (batches are still discarded if `1 + pi J <= 0`).
    LogScheme,
}

impl std::str::FromStr for NegativePathPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discard-batch" => Ok(Self::DiscardBatch),
            "log-scheme" => Ok(Self::LogScheme),
            other => Err(Error::InvalidParameter(format!("unknown negative-path policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub hidden: usize,
    pub lr: f64,
    /// Number of time steps; the horizon is the claim maturity.
    pub steps: usize,
    pub scheme: Scheme,
    pub seed: u64,
    pub eval_size: usize,
    pub negative_path_policy: NegativePathPolicy,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip: Option<f64>,
    /// Record the portfolio distance to the delta hedge every this many
    /// epochs (continuous models only).
    pub probe_every: Option<usize>,
    pub probe_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1500,
            batch: 256,
            hidden: 64,
            lr: 0.0005,
            steps: 40,
            scheme: Scheme::Direct,
            seed: 0,
            eval_size: 10_000,
            negative_path_policy: NegativePathPolicy::DiscardBatch,
            clip: Some(10.0),
            probe_every: None,
            probe_size: 1000,
        }
    }
}

impl TrainConfig {
    pub fn grid(&self, claim: &CallClaim) -> Result<GridSpec> {
        GridSpec::new(claim.maturity(), self.steps)
    }

    pub fn effective_scheme(&self) -> Scheme {
        match self.negative_path_policy {
            NegativePathPolicy::LogScheme => Scheme::Log,
            NegativePathPolicy::DiscardBatch => self.scheme,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.epochs == 0 || self.batch == 0 || self.hidden == 0 || self.steps == 0 {
            return bad("epochs, batch, hidden and steps must be > 0");
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be > 0");
        }
        if matches!(self.clip, Some(c) if !(c > 0.0)) {
            return bad("clip threshold must be > 0");
        }
        if self.probe_every == Some(0) {
            return bad("probe interval must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub x0: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// One entry per epoch that produced an optimizer step.
    pub loss_curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_loss: f64,
    /// Weights at `best_epoch`, before that epoch's update.
    pub checkpoint: Checkpoint,
    /// Weights after the last update.
    pub last: HedgeNet,
    pub discarded_batches: usize,
    /// `(epoch, l2 distance to the delta hedge)` when probing is enabled.
    pub probe_curve: Vec<(usize, f64)>,
    /// Epoch at which a non-finite loss stopped training.
    pub nonfinite_at: Option<usize>,
}

impl TrainReport {
    /// `Err(NonFiniteLoss)` if training was aborted.
    pub fn status(&self) -> Result<()> {
        match self.nonfinite_at {
            Some(epoch) => Err(Error::NonFiniteLoss { epoch }),
            None => Ok(()),
        }
    }
}

fn clip_gradients(grads: &mut [Tensor], ceiling: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_sq()).sum::<f64>().sqrt();
    if norm > ceiling {
        let c = ceiling / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= c);
        }
    }
    norm
}

/// Train a fresh network; every epoch draws a new batch of increments.
pub fn train(model: &MarketModel, claim: &CallClaim, config: &TrainConfig) -> Result<TrainReport> {
    let net = HedgeNet::init(NetSpec { hidden: config.hidden }, derive_seed(config.seed, INIT_TAG))?;
    train_from(net, model, claim, config)
}

/// Train starting from the given weights.
pub fn train_from(mut net: HedgeNet, model: &MarketModel, claim: &CallClaim, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if net.hidden() != config.hidden {
        return Err(Error::CheckpointMismatch(format!(
            "net hidden dim {} vs config {}",
            net.hidden(),
            config.hidden
        )));
    }
    let grid = config.grid(claim)?;
    let scheme = config.effective_scheme();
    let shapes: Vec<Vec<usize>> = net.params().iter().map(|p| p.shape().to_vec()).collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut opt = Adam::new(config.lr, &shape_refs);

    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut probe_curve = Vec::new();
    let mut best: Option<(usize, f64, HedgeNet)> = None;
    let mut discarded = 0;
    let mut nonfinite_at = None;
    let mut tape = Tape::new();

    for epoch in 1..=config.epochs {
        if let Some(every) = config.probe_every {
            if (epoch - 1) % every == 0 && !model.has_jumps() {
                let probe = derive_seed(config.seed, PROBE_TAG);
                let eval = evaluate(&net, model, claim, &grid, config.probe_size, probe, scheme)?;
                let phi = reference_portfolio(model, claim, &grid, &eval)?;
                probe_curve.push((epoch - 1, l2_distance(&eval.pi, &phi, grid.steps(), grid.dt())?));
            }
        }

        let inc = sample_increments(model, &grid, config.batch, derive_seed(config.seed, EPOCH_TAG + epoch as u64))?;
        let stock = simulate_stock(model, &grid, &inc, scheme)?;
        if stock.flagged_count() > 0 {
            discarded += 1;
            continue;
        }
        let payoff: Vec<f64> = stock.terminal().iter().map(|s| claim.payoff(*s)).collect();

        tape.clear();
        let bound = net.bind(&mut tape);
        let graph = hedge_forward(&mut tape, &bound, &inc, model, &grid, scheme)?;
        if graph.flagged.iter().any(|f| *f) {
            discarded += 1;
            continue;
        }
        let f = tape.constant(Tensor::column(payoff));
        let diff = tape.sub(graph.terminal(), f)?;
        let sq = tape.square(diff);
        let mean = tape.mean(sq);
        let loss = tape.scale(mean, 0.5);
        let lv = tape.value(loss).item()?;
        let x0 = tape.value(graph.x0).item()?;
        if !lv.is_finite() {
            nonfinite_at = Some(epoch);
            break;
        }
        loss_curve.push(EpochRecord { epoch, loss: lv, x0 });
        if best.as_ref().is_none_or(|(_, b, _)| lv < *b) {
            best = Some((epoch, lv, net.clone()));
        }

        let mut grads_map = tape.backward(loss)?;
        let mut grads: Vec<Tensor> = bound
            .vars()
            .iter()
            .zip(net.params())
            .map(|(v, p)| grads_map.take(*v).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        if grads.iter().any(|g| !g.is_finite()) {
            nonfinite_at = Some(epoch);
            break;
        }
        if let Some(c) = config.clip {
            clip_gradients(&mut grads, c);
        }
        opt.step(&mut net.params_mut(), &grads)?;
    }

    let (best_epoch, best_loss, best_net) = best.unwrap_or_else(|| (0, f64::INFINITY, net.clone()));
    let checkpoint = Checkpoint::new(best_net)
        .with_meta("epoch", best_epoch)
        .with_meta("loss", best_loss)
        .with_meta("lr", config.lr)
        .with_meta("batch", config.batch)
        .with_meta("steps", config.steps)
        .with_meta("maturity", claim.maturity())
        .with_meta("strike", claim.strike())
        .with_meta("scheme", format!("{scheme:?}").to_lowercase())
        .with_meta("seed", config.seed);
    Ok(TrainReport {
        loss_curve,
        best_epoch,
        best_loss,
        checkpoint,
        last: net,
        discarded_batches: discarded,
        probe_curve,
        nonfinite_at,
    })
}
