use std::collections::BTreeMap;

use serde::Serialize;

use super::{evaluate, l2_distance, reference_portfolio, train, TrainConfig, EVAL_TAG};
use crate::error::Result;
use crate::market::{GridSpec, MarketModel};
use crate::nn::Checkpoint;
use crate::pricing::{bs_price, mc_minimal_variance_price, CallClaim};
use crate::rng::derive_seed;

/// Draws used for Monte Carlo reference prices of jump models.
const REFERENCE_DRAWS: usize = 500_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub maturity: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: String,
    pub maturity: f64,
    pub steps: usize,
    pub loss: Option<f64>,
    pub x0: Option<f64>,
    pub reference: Option<f64>,
    pub abs_price_err: Option<f64>,
    /// Distance to the delta hedge; continuous models only.
    pub l2: Option<f64>,
    pub error: Option<String>,
    /// Best weights of the cell's training run.
    #[serde(skip)]
    pub checkpoint: Option<Checkpoint>,
}

/// `<model>_<T>_<R>_<seed>.ckpt`
pub fn checkpoint_name(model: &str, maturity: f64, steps: usize, seed: u64) -> String {
    format!("{model}_{maturity}_{steps}_{seed}.ckpt")
}

/// Black–Scholes closed form without jumps, minimal-variance Monte Carlo otherwise.
pub fn reference_price(model: &MarketModel, claim: &CallClaim, seed: u64) -> Result<f64> {
    if model.has_jumps() {
        Ok(mc_minimal_variance_price(model, claim, REFERENCE_DRAWS, seed)?.price)
    } else {
        Ok(bs_price(0.0, model.s0(), model.sigma_norm(), 0.0, claim.maturity(), claim.strike()))
    }
}

fn run_cell(model: &MarketModel, name: &str, strike: f64, cell: SweepCell, config: &TrainConfig, reference: Result<f64>) -> SweepRow {
    let mut row = SweepRow {
        model: name.to_string(),
        maturity: cell.maturity,
        steps: cell.steps,
        loss: None,
        x0: None,
        reference: None,
        abs_price_err: None,
        l2: None,
        error: None,
        checkpoint: None,
    };
    let outcome = (|| -> Result<()> {
        let reference = reference?;
        row.reference = Some(reference);
        let claim = CallClaim::new(strike, cell.maturity)?;
        let cfg = TrainConfig {
            steps: cell.steps,
            ..*config
        };
        let report = train(model, &claim, &cfg)?;
        report.status()?;
        let grid = GridSpec::new(cell.maturity, cell.steps)?;
        let net = &report.checkpoint.net;
        let eval = evaluate(net, model, &claim, &grid, cfg.eval_size, derive_seed(cfg.seed, EVAL_TAG), cfg.effective_scheme())?;
        row.loss = Some(eval.loss);
        row.x0 = Some(eval.x0);
        row.abs_price_err = Some((eval.x0 - reference).abs());
        if !model.has_jumps() {
            let phi = reference_portfolio(model, &claim, &grid, &eval)?;
            row.l2 = Some(l2_distance(&eval.pi, &phi, grid.steps(), grid.dt())?);
        }
        row.checkpoint = Some(report.checkpoint);
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    row
}

/// One training run and evaluation per cell, on up to `jobs` threads.
/// A failing cell is reported in its row and does not stop the others.
pub fn sweep(model: &MarketModel, name: &str, strike: f64, cells: &[SweepCell], config: &TrainConfig, jobs: usize) -> Vec<SweepRow> {
    let mut references: BTreeMap<u64, Result<f64>> = BTreeMap::new();
    for cell in cells {
        references.entry(cell.maturity.to_bits()).or_insert_with(|| {
            CallClaim::new(strike, cell.maturity)
                .and_then(|c| reference_price(model, &c, derive_seed(config.seed, EVAL_TAG)))
        });
    }
    let jobs = jobs.clamp(1, cells.len().max(1));
    let mut rows: Vec<Option<SweepRow>> = vec![None; cells.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let references = &references;
                scope.spawn(move || {
                    (w..cells.len())
                        .step_by(jobs)
                        .map(|k| {
                            let reference = references[&cells[k].maturity.to_bits()].clone();
                            (k, run_cell(model, name, strike, cells[k], config, reference))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (k, row) in h.join().expect("sweep worker panicked") {
                rows[k] = Some(row);
            }
        }
    });
    rows.into_iter().map(|r| r.expect("every cell ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_failures() {
        assert_eq!(checkpoint_name("bs", 0.5, 40, 7), "bs_0.5_40_7.ckpt");
        let model = MarketModel::black_scholes(0.2, 0.2, 1.0).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch: 8,
            hidden: 2,
            eval_size: 50,
            ..TrainConfig::default()
        };
        let cells = [
            SweepCell { maturity: 0.5, steps: 4 },
            SweepCell { maturity: -1.0, steps: 4 },
            SweepCell { maturity: 1.0, steps: 4 },
        ];
        let rows = sweep(&model, "bs", 0.5, &cells, &cfg, 2);
        assert_eq!(rows.len(), 3);
        assert!(rows[0].error.is_none() && rows[0].l2.is_some());
        assert!(rows[1].error.is_some() && rows[1].loss.is_none());
        assert!(rows[2].abs_price_err.is_some());
        assert_eq!(rows, sweep(&model, "bs", 0.5, &cells, &cfg, 1));
    }
}
