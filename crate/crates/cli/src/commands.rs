use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use qhedge::deephedge::{
    self, checkpoint_name, compare_residuals, evaluate_checkpoint, l2_distance, reference_portfolio, write_loss_curve,
    write_residuals, write_sweep, SweepCell, EVAL_TAG,
};
use qhedge::market::{simulate_paths, write_increments, write_paths_csv, GridSpec, MarketModel, Scheme};
use qhedge::nn::Checkpoint;
use qhedge::pricing::{analytic_price, crosscheck_price, mc_minimal_variance_price, merton_series_price, PriceMethod, DEFAULT_J_MAX};
use qhedge::rng::derive_seed;
use serde_json::json;

use crate::config::{parse_sweep_grid, RunConfig};
use crate::CliError;

const CROSSCHECK_PATHS: usize = 2000;

struct Setup {
    model: MarketModel,
    seed: u64,
    out: PathBuf,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let model = cfg.model.build()?;
    let seed = cfg.resolve_seed(std::env::var("QHEDGE_SEED").ok().as_deref())?;
    Ok(Setup {
        model,
        seed,
        out: cfg.out_dir(),
    })
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    fs::create_dir_all(dir).map_err(qhedge::Error::from)?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(qhedge::Error::from)?;
    Ok((path, BufWriter::new(file)))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<String, CliError> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    fs::create_dir_all(dir).map_err(qhedge::Error::from)?;
    fs::write(dir.join(name), format!("{text}\n")).map_err(qhedge::Error::from)?;
    Ok(text)
}

pub fn price(cfg: &RunConfig, output: Option<&Path>) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let claim = cfg.claim()?;
    let j_max = cfg.price.j_max.unwrap_or(DEFAULT_J_MAX);
    let result = match cfg.price.route.unwrap_or(PriceMethod::Analytic) {
        PriceMethod::Analytic => analytic_price(&s.model, &claim)?,
        PriceMethod::Series => merton_series_price(&s.model, &claim, j_max)?,
        PriceMethod::Mc => mc_minimal_variance_price(&s.model, &claim, cfg.price.paths.unwrap_or(1_000_000), s.seed)?,
        PriceMethod::Crosscheck => {
            let grid = GridSpec::new(claim.maturity(), cfg.steps(&s.model))?;
            crosscheck_price(&s.model, &claim, &grid, cfg.price.paths.unwrap_or(CROSSCHECK_PATHS), j_max, s.seed)?
        }
    };
    let text = result.to_json();
    if let Some(path) = output {
        fs::write(path, format!("{text}\n")).map_err(qhedge::Error::from)?;
    }
    println!("{text}");
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let claim = cfg.claim()?;
    let grid = GridSpec::new(claim.maturity(), cfg.steps(&s.model))?;
    let m = cfg.simulate.paths.unwrap_or(10);
    let scheme = cfg.train.scheme.unwrap_or_default();
    let batch = simulate_paths(
        &s.model,
        &grid,
        m,
        s.seed,
        cfg.simulate.x0.unwrap_or(1.0),
        cfg.simulate.pi.unwrap_or(1.0),
        scheme,
    )?;
    let (_, w) = create(&s.out, "paths.csv")?;
    write_paths_csv(&grid, &batch.stock, &batch.wealth, w)?;
    if cfg.simulate.write_increments.unwrap_or(false) {
        let (_, w) = create(&s.out, "increments.qhin")?;
        write_increments(&batch.increments, w)?;
    }
    let summary = json!({
        "paths": m,
        "steps": grid.steps(),
        "seed": s.seed,
        "flagged_stock": batch.stock.flagged_count(),
        "flagged_wealth": batch.wealth.flagged_count(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json values serialize"));
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let claim = cfg.claim()?;
    let steps = cfg.steps(&s.model);
    let tc = cfg.train_config(s.seed, steps);
    let report = deephedge::train(&s.model, &claim, &tc)?;

    let (_, w) = create(&s.out, "loss_curve.csv")?;
    write_loss_curve(&report.loss_curve, w)?;
    let name = checkpoint_name(cfg.model.kind.name(), claim.maturity(), steps, s.seed);
    let ckpt_path = s.out.join(&name);
    report.checkpoint.save(&ckpt_path)?;

    let mut summary = json!({
        "model": cfg.model.kind.name(),
        "checkpoint": name,
        "epochs_recorded": report.loss_curve.len(),
        "best_epoch": report.best_epoch,
        "best_loss": report.best_loss,
        "discarded_batches": report.discarded_batches,
    });
    if report.status().is_ok() {
        let grid = tc.grid(&claim)?;
        let eval = evaluate_checkpoint(
            &report.checkpoint,
            &s.model,
            &claim,
            &grid,
            tc.eval_size,
            derive_seed(s.seed, EVAL_TAG),
            tc.effective_scheme(),
        )?;
        summary["x0"] = json!(eval.x0);
        summary["eval_loss"] = json!(eval.loss);
        summary["eval_flagged"] = json!(eval.flagged_count());
    }
    println!("{}", write_json(&s.out, "train_summary.json", &summary)?);
    report.status()?;
    Ok(())
}

struct Loaded {
    ck: Checkpoint,
    grid: GridSpec,
    scheme: Scheme,
}

/// Checkpoint plus the grid and scheme it was trained on, unless overridden.
fn load_checkpoint(cfg: &RunConfig, maturity: f64) -> Result<Loaded, CliError> {
    let path = cfg
        .eval
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("a checkpoint is required (--checkpoint or [eval] checkpoint)".into()))?;
    let ck = Checkpoint::load(path)?;
    let recorded_steps = ck.meta.get("steps").and_then(|v| v.parse::<usize>().ok());
    let steps = cfg
        .grid
        .steps
        .or(recorded_steps)
        .ok_or_else(|| CliError::Config("checkpoint records no step count; pass --steps".into()))?;
    let recorded_scheme = ck.meta.get("scheme").and_then(|v| v.parse::<Scheme>().ok());
    let scheme = cfg.train.scheme.or(recorded_scheme).unwrap_or_default();
    Ok(Loaded {
        grid: GridSpec::new(maturity, steps)?,
        ck,
        scheme,
    })
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let claim = cfg.claim()?;
    let l = load_checkpoint(cfg, claim.maturity())?;
    let m = cfg.eval.paths.unwrap_or(10_000);
    let eval = evaluate_checkpoint(&l.ck, &s.model, &claim, &l.grid, m, derive_seed(s.seed, EVAL_TAG), l.scheme)?;
    let mut summary = json!({
        "x0": eval.x0,
        "loss": eval.loss,
        "paths": m,
        "flagged": eval.flagged_count(),
        "steps": l.grid.steps(),
    });
    if !s.model.has_jumps() {
        let phi = reference_portfolio(&s.model, &claim, &l.grid, &eval)?;
        summary["l2"] = json!(l2_distance(&eval.pi, &phi, l.grid.steps(), l.grid.dt())?);
    }
    println!("{}", write_json(&s.out, "evaluation.json", &summary)?);
    Ok(())
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let claim = cfg.claim()?;
    let l = load_checkpoint(cfg, claim.maturity())?;
    let m = cfg.eval.compare_paths.unwrap_or(1000);
    let cmp = compare_residuals(
        &l.ck.net,
        &s.model,
        &claim,
        &l.grid,
        m,
        derive_seed(s.seed, EVAL_TAG),
        l.scheme,
        cfg.eval.feedback.unwrap_or(false),
    )?;
    let (_, w) = create(&s.out, "residuals.csv")?;
    write_residuals(&cmp, w)?;
    let summary = serde_json::to_value(&cmp).expect("comparison serializes");
    println!("{}", write_json(&s.out, "comparison.json", &summary)?);
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let claim = cfg.claim()?;
    let (ts, rs) = parse_sweep_grid(cfg.sweep.grid.as_deref().unwrap_or("T=0.5,1,2;R=40,80,160"))?;
    if ts.iter().any(|t| !(*t > 0.0)) || rs.contains(&0) {
        return Err(CliError::Config("sweep maturities and step counts must be positive".into()));
    }
    let cells: Vec<SweepCell> = ts
        .iter()
        .flat_map(|&maturity| rs.iter().map(move |&steps| SweepCell { maturity, steps }))
        .collect();
    let tc = cfg.train_config(s.seed, rs[0]);
    let name = cfg.model.kind.name();
    let rows = deephedge::sweep(&s.model, name, claim.strike(), &cells, &tc, cfg.jobs.unwrap_or(1));

    let (_, w) = create(&s.out, "sweep.csv")?;
    write_sweep(&rows, w)?;
    let mut failures = 0;
    for row in &rows {
        if let Some(ck) = &row.checkpoint {
            ck.save(&s.out.join(checkpoint_name(name, row.maturity, row.steps, s.seed)))?;
        }
        if let Some(e) = &row.error {
            failures += 1;
            eprintln!("qhedge: cell T={} R={} failed: {e}", row.maturity, row.steps);
        }
    }
    println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
    if failures > 0 {
        return Err(CliError::Numeric(format!("{failures} sweep cell(s) failed")));
    }
    Ok(())
}
