//! Run configuration: a TOML file with optional sections, overridden by flags.

use std::path::{Path, PathBuf};

use qhedge::deephedge::{NegativePathPolicy, TrainConfig};
use qhedge::market::{JumpComponent, JumpSpec, MarketModel, Scheme};
use qhedge::pricing::{CallClaim, PriceMethod};
use serde::Deserialize;

use crate::CliError;

/// Printed by `--help`.
pub const CONFIG_KEYS: &str = "\
CONFIG FILE KEYS (TOML; command-line flags take precedence)
  seed = 0                        falls back to $QHEDGE_SEED, then 0
  out_dir = \".\"
  jobs = 1                        parallel sweep cells
  [model]
  type = \"bs\"                     bs | bsmb | merton | merton-multi | kou
  s0 = 1.0
  alpha0                          bs, bsmb: 0.3   merton, merton-multi: 0.2   kou: 0.15
  sigma0                          0.2 (bsmb: [0.11, 0.16, 0.05]); a number or a list
  lambda, mu, delta               merton: 5.0, -0.2, 0.05
  lambdas, mus, deltas            merton-multi: [3, 5, 2], [0.1, 0.1, 0.05], [0.05, 0.02, 0.01]
  lambda, eta1, eta2, p           kou: 10.0, 50.0, 25.0, 0.3
  [claim]
  strike = 0.5
  maturity = 1.0
  [grid]
  steps                           40 without jumps, 150 with jumps
  [price]
  route = \"analytic\"              analytic | series | mc | crosscheck
  paths = 1000000                 mc draws (crosscheck: 2000 paths)
  j_max = 60                      series truncation
  [train]
  epochs = 1500
  batch = 256
  hidden = 64
  lr = 0.0005
  scheme = \"direct\"               direct | log
  negative_path_policy = \"discard-batch\"   discard-batch | log-scheme
  clip = 10.0                     gradient-norm ceiling; 0 disables
  eval_size = 10000
  probe_every = 0                 0 disables the delta-hedge distance probe
  probe_size = 1000
  [eval]
  checkpoint = \"\"                 required by evaluate and compare
  paths = 10000                   evaluate
  compare_paths = 1000            compare
  feedback = false                compare also runs the feedback-form hedge
  [simulate]
  paths = 10
  x0 = 1.0
  pi = 1.0
  write_increments = false
  [sweep]
  grid = \"T=0.5,1,2;R=40,80,160\"
";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub model: ModelSection,
    pub claim: ClaimSection,
    pub grid: GridSection,
    pub price: PriceSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub simulate: SimulateSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Bs,
    Bsmb,
    Merton,
    MertonMulti,
    Kou,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bs => "bs",
            ModelKind::Bsmb => "bsmb",
            ModelKind::Merton => "merton",
            ModelKind::MertonMulti => "merton-multi",
            ModelKind::Kou => "kou",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Volatility {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    #[serde(rename = "type")]
    pub kind: ModelKind,
    pub s0: Option<f64>,
    pub alpha0: Option<f64>,
    pub sigma0: Option<Volatility>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub mus: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClaimSection {
    pub strike: Option<f64>,
    pub maturity: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriceSection {
    pub route: Option<PriceMethod>,
    pub paths: Option<usize>,
    pub j_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub hidden: Option<usize>,
    pub lr: Option<f64>,
    pub scheme: Option<Scheme>,
    pub negative_path_policy: Option<NegativePathPolicy>,
    pub clip: Option<f64>,
    pub eval_size: Option<usize>,
    pub probe_every: Option<usize>,
    pub probe_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    pub paths: Option<usize>,
    pub compare_paths: Option<usize>,
    pub feedback: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub paths: Option<usize>,
    pub x0: Option<f64>,
    pub pi: Option<f64>,
    pub write_increments: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub grid: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Explicit seed, then `$QHEDGE_SEED`, then 0.
    pub fn resolve_seed(&self, env: Option<&str>) -> Result<u64, CliError> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match env {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("QHEDGE_SEED must be an unsigned integer, got '{v}'"))),
            None => Ok(0),
        }
    }

    pub fn claim(&self) -> Result<CallClaim, CliError> {
        Ok(CallClaim::new(
            self.claim.strike.unwrap_or(0.5),
            self.claim.maturity.unwrap_or(1.0),
        )?)
    }

    pub fn steps(&self, model: &MarketModel) -> usize {
        self.grid.steps.unwrap_or(if model.has_jumps() { 150 } else { 40 })
    }

    pub fn train_config(&self, seed: u64, steps: usize) -> TrainConfig {
        let d = TrainConfig::default();
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs.unwrap_or(d.epochs),
            batch: t.batch.unwrap_or(d.batch),
            hidden: t.hidden.unwrap_or(d.hidden),
            lr: t.lr.unwrap_or(d.lr),
            steps,
            scheme: t.scheme.unwrap_or(d.scheme),
            seed,
            eval_size: t.eval_size.unwrap_or(d.eval_size),
            negative_path_policy: t.negative_path_policy.unwrap_or(d.negative_path_policy),
            clip: match t.clip {
                Some(c) if c == 0.0 => None,
                Some(c) => Some(c),
                None => d.clip,
            },
            probe_every: t.probe_every.filter(|n| *n > 0),
            probe_size: t.probe_size.unwrap_or(d.probe_size),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

impl ModelSection {
    fn reject(&self, kind: &str, fields: &[(&str, bool)]) -> Result<(), CliError> {
        for (name, present) in fields {
            if *present {
                return Err(CliError::Config(format!("model key '{name}' does not apply to {kind}")));
            }
        }
        Ok(())
    }

    fn sigma(&self, default: &[f64]) -> Vec<f64> {
        match &self.sigma0 {
            Some(Volatility::One(s)) => vec![*s],
            Some(Volatility::Many(v)) => v.clone(),
            None => default.to_vec(),
        }
    }

    pub fn build(&self) -> Result<MarketModel, CliError> {
        let kind = self.kind.name();
        let s0 = self.s0.unwrap_or(1.0);
        let single_jump = [
            ("lambda", self.lambda.is_some()),
            ("mu", self.mu.is_some()),
            ("delta", self.delta.is_some()),
        ];
        let multi_jump = [
            ("lambdas", self.lambdas.is_some()),
            ("mus", self.mus.is_some()),
            ("deltas", self.deltas.is_some()),
        ];
        let kou = [
            ("eta1", self.eta1.is_some()),
            ("eta2", self.eta2.is_some()),
            ("p", self.p.is_some()),
        ];
        let model = match self.kind {
            ModelKind::Bs | ModelKind::Bsmb => {
                self.reject(kind, &single_jump)?;
                self.reject(kind, &multi_jump)?;
                self.reject(kind, &kou)?;
                let default: &[f64] = if self.kind == ModelKind::Bs { &[0.2] } else { &[0.11, 0.16, 0.05] };
                MarketModel::multi_brownian(self.alpha0.unwrap_or(0.3), self.sigma(default), s0)?
            }
            ModelKind::Merton => {
                self.reject(kind, &multi_jump)?;
                self.reject(kind, &kou)?;
                MarketModel::new(
                    self.alpha0.unwrap_or(0.2),
                    self.sigma(&[0.2]),
                    true,
                    vec![JumpComponent {
                        intensity: self.lambda.unwrap_or(5.0),
                        law: JumpSpec::log_normal(self.mu.unwrap_or(-0.2), self.delta.unwrap_or(0.05))?,
                    }],
                    s0,
                )?
            }
            ModelKind::MertonMulti => {
                self.reject(kind, &single_jump)?;
                self.reject(kind, &kou)?;
                let lambdas = self.lambdas.clone().unwrap_or_else(|| vec![3.0, 5.0, 2.0]);
                let mus = self.mus.clone().unwrap_or_else(|| vec![0.1, 0.1, 0.05]);
                let deltas = self.deltas.clone().unwrap_or_else(|| vec![0.05, 0.02, 0.01]);
                if lambdas.len() != mus.len() || lambdas.len() != deltas.len() {
                    return Err(CliError::Config("lambdas, mus and deltas must have equal length".into()));
                }
                let jumps = lambdas
                    .iter()
                    .zip(&mus)
                    .zip(&deltas)
                    .map(|((l, m), d)| {
                        Ok(JumpComponent {
                            intensity: *l,
                            law: JumpSpec::log_normal(*m, *d)?,
                        })
                    })
                    .collect::<qhedge::Result<Vec<_>>>()?;
                MarketModel::new(self.alpha0.unwrap_or(0.2), self.sigma(&[0.2]), true, jumps, s0)?
            }
            ModelKind::Kou => {
                self.reject(kind, &[("mu", self.mu.is_some()), ("delta", self.delta.is_some())])?;
                self.reject(kind, &multi_jump)?;
                MarketModel::new(
                    self.alpha0.unwrap_or(0.15),
                    self.sigma(&[0.2]),
                    true,
                    vec![JumpComponent {
                        intensity: self.lambda.unwrap_or(10.0),
                        law: JumpSpec::double_exponential(
                            self.eta1.unwrap_or(50.0),
                            self.eta2.unwrap_or(25.0),
                            self.p.unwrap_or(0.3),
                        )?,
                    }],
                    s0,
                )?
            }
        };
        Ok(model)
    }
}

/// Parse `"T=0.5,1,2;R=40,80,160"` into (maturities, step counts).
pub fn parse_sweep_grid(spec: &str) -> Result<(Vec<f64>, Vec<usize>), CliError> {
    let bad = || CliError::Config(format!("sweep grid must look like 'T=0.5,1;R=40,80', got '{spec}'"));
    let mut ts = None;
    let mut rs = None;
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part.split_once('=').ok_or_else(bad)?;
        let values: Vec<&str> = values.split(',').map(str::trim).collect();
        match key.trim() {
            "T" => ts = Some(values.iter().map(|v| v.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?),
            "R" => rs = Some(values.iter().map(|v| v.parse::<usize>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?),
            _ => return Err(bad()),
        }
    }
    match (ts, rs) {
        (Some(t), Some(r)) if !t.is_empty() && !r.is_empty() => Ok((t, r)),
        _ => Err(bad()),
    }
}
