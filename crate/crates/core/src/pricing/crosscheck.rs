use std::sync::OnceLock;

use gauss_quad::hermite::GaussHermite;

use super::measure::{check_zstar_support, compute_g, ExactSampler, ExactState};
use super::{CallClaim, MertonSeries, PriceMethod, PriceResult};
use crate::error::{Error, Result};
use crate::market::{GridSpec, JumpSpec, MarketModel};
use crate::rng::stream_rng;
use crate::stats::RunningMoments;

/// Number of Gauss–Hermite nodes used for integrals against a log-normal jump law.
pub const CROSSCHECK_NODES: usize = 64;

/// Standard-normal nodes and probability weights.
fn standard_nodes() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let rule = GaussHermite::new(CROSSCHECK_NODES).expect("degree >= 2");
        let norm = std::f64::consts::PI.sqrt();
        rule.as_node_weight_pairs()
            .iter()
            .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
            // nodes whose weight cannot move an O(1) sum are skipped
            .filter(|(_, w)| *w > 1e-18)
            .collect()
    })
}

/// Quadrature for `E[f(y)]` with `log y ~ N(mu, delta^2)`.
#[derive(Debug, Clone)]
pub struct LogNormalQuadrature {
    nodes: Vec<(f64, f64)>,
}

impl LogNormalQuadrature {
    pub fn new(mu: f64, delta: f64) -> Self {
        let nodes = standard_nodes()
            .iter()
            .map(|(z, w)| ((mu + delta * z).exp(), *w))
            .collect();
        LogNormalQuadrature { nodes }
    }

    pub fn for_law(law: &JumpSpec) -> Result<Self> {
        match law {
            JumpSpec::LogNormal { mu, delta } => Ok(Self::new(*mu, *delta)),
            _ => Err(Error::UnsupportedModel(
                "jump integrals are only available for log-normal jumps".into(),
            )),
        }
    }

    /// Jump sizes `y` and their weights.
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().map(|(y, w)| w * f(*y)).sum()
    }

    pub fn try_expect(&self, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (y, w) in &self.nodes {
            acc += w * f(*y)?;
        }
        Ok(acc)
    }
}

fn model_quadrature(model: &MarketModel) -> Result<Option<(f64, LogNormalQuadrature)>> {
    if !model.has_jumps() {
        return Ok(None);
    }
    match model.merton_params() {
        Some((lambda, mu, delta)) => Ok(Some((lambda, LogNormalQuadrature::new(mu, delta)))),
        None => Err(Error::UnsupportedModel(
            "jump integrals need a single log-normal jump component".into(),
        )),
    }
}

/// Minimal-variance price through the martingale representation of the call:
///
/// `z = E[F] + int_0^T G { |sigma| E[Z*_t beta_t] + lambda E_y[(y-1) E[Z*_t kappa_t(y)]] } dt`
///
/// `E[F]` is the physical-measure series value; the time integral uses the
/// left-endpoint rule on `grid` with `m` exactly simulated paths. The jump
/// coefficient is the value change `E[(yS_T-K)^+ - (S_T-K)^+ | S_t]`.
pub fn crosscheck_price(
    model: &MarketModel,
    claim: &CallClaim,
    grid: &GridSpec,
    m: usize,
    j_max: usize,
    seed: u64,
) -> Result<PriceResult> {
    if m < 2 {
        return Err(Error::InvalidParameter("at least two paths needed".into()));
    }
    let ms = MertonSeries::new(model, claim, j_max)?;
    let g = compute_g(model)?;
    check_zstar_support(model, g)?;
    let quad = model_quadrature(model)?;
    let e_f = ms.p_value(0.0, model.s0())?;
    let sampler = ExactSampler::new(model, grid.dt())?;
    let dt = grid.dt();
    let sigma = model.sigma_norm();

    let mut acc = RunningMoments::default();
    let mut signed = false;
    for j in 0..m {
        let mut rng = stream_rng(seed, j as u64);
        let mut st = ExactState::new(model.s0());
        let mut integral = 0.0;
        for i in 0..grid.steps() {
            let t = grid.time(i);
            let s = st.stock();
            let mut inner = sigma * ms.beta(t, s)?;
            if let Some((lambda, q)) = &quad {
                let base = ms.p_value(t, s)?;
                inner += lambda * q.try_expect(|y| Ok((y - 1.0) * (ms.p_value(t, y * s)? - base)))?;
            }
            integral += g * st.z_star * inner * dt;
            sampler.step(&mut rng, &mut st);
        }
        signed |= st.signed;
        acc.push(integral);
    }
    let est = acc.estimate();
    Ok(PriceResult {
        method: PriceMethod::Crosscheck,
        price: e_f + est.mean,
        stderr: est.stderr,
        n_paths: m as u64,
        seed: Some(seed),
        signed_measure_used: signed,
        params: Default::default(),
    }
    .with_param("E_F", e_f)
    .with_param("G", g)
    .with_param("R", grid.steps() as f64)
    .with_param("K", claim.strike())
    .with_param("T", claim.maturity()))
}

/// Feedback-form optimal fraction
/// `[F_t alpha + |sigma| beta_t + int gamma kappa dnu - x alpha] / [x (|sigma|^2 + int gamma^2 dnu)]`.
///
/// `kappa_fn(y)` is the jump coefficient at relative jump size `y`; the jump
/// integral uses Gauss–Hermite nodes of the model's log-normal law.
pub fn feedback_portfolio(
    x: f64,
    f_t: f64,
    beta_t: f64,
    kappa_fn: impl Fn(f64) -> Result<f64>,
    model: &MarketModel,
) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DivisionByZeroWealth(x));
    }
    let alpha = model.alpha0();
    let jump = match model_quadrature(model)? {
        Some((lambda, q)) => lambda * q.try_expect(|y| Ok((y - 1.0) * kappa_fn(y)?))?,
        None => 0.0,
    };
    let denom = x * (model.sigma_sq() + model.jump_variance_rate()?);
    Ok((f_t * alpha + model.sigma_norm() * beta_t + jump - x * alpha) / denom)
}
