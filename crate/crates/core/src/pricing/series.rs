use super::{bs_delta, bs_price, normal_cdf, CallClaim, PriceMethod, PriceResult};
use crate::error::{Error, Result};
use crate::market::MarketModel;

pub const DEFAULT_J_MAX: usize = 60;

/// `sum_j Pois(mean)_j f(j).0`, stopping once the terms are negligible.
///
/// `f(j)` returns the term value and a bound on its magnitude; if the
/// Poisson-weighted bounds beyond `j_max` exceed `1e-9 * scale` the sum is
/// rejected.
fn poisson_sum<F>(mean: f64, j_max: usize, scale: f64, mut f: F) -> Result<f64>
where
    F: FnMut(usize) -> (f64, f64),
{
    let mut w = (-mean).exp();
    let mut acc = 0.0;
    for j in 0..=j_max {
        if j > 0 {
            w *= mean / j as f64;
        }
        let (v, bound) = f(j);
        acc += w * v;
        if j as f64 > mean && w * bound <= 1e-17 * scale {
            return Ok(acc);
        }
    }
    let mut tail = 0.0;
    for j in j_max + 1..j_max + 500 {
        w *= mean / j as f64;
        let (_, bound) = f(j);
        tail += w * bound;
        if w * bound < 1e-300 {
            break;
        }
    }
    if tail > 1e-9 * scale {
        Err(Error::TruncationNotConverged { j_max, bound: tail })
    } else {
        Ok(acc)
    }
}

/// `E[(e^X - K)^+]` for `X ~ N(m, v)`.
fn lognormal_call(m: f64, v: f64, strike: f64) -> f64 {
    if v <= 0.0 {
        return (m.exp() - strike).max(0.0);
    }
    let sd = v.sqrt();
    let lk = strike.ln();
    (m + 0.5 * v).exp() * normal_cdf((m + v - lk) / sd) - strike * normal_cdf((m - lk) / sd)
}

/// `E[e^X 1{e^X >= K}]` for `X ~ N(m, v)`.
fn lognormal_partial(m: f64, v: f64, strike: f64) -> f64 {
    if v <= 0.0 {
        return if m >= strike.ln() { m.exp() } else { 0.0 };
    }
    (m + 0.5 * v).exp() * normal_cdf((m + v - strike.ln()) / v.sqrt())
}

/// `P(X <= x)` for `X ~ N(0, v)`, with a point mass when `v = 0`.
fn centered_cdf(x: f64, v: f64) -> f64 {
    if v <= 0.0 {
        if x >= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        normal_cdf(x / v.sqrt())
    }
}

/// Poisson-mixture formulas for a call in a single-component log-normal
/// jump-diffusion (or a pure diffusion when `lambda = 0`).
///
/// Several Brownian drivers enter only through `|sigma0|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MertonSeries {
    alpha: f64,
    sigma: f64,
    lambda: f64,
    mu: f64,
    delta: f64,
    k: f64,
    strike: f64,
    maturity: f64,
    j_max: usize,
}

impl MertonSeries {
    pub fn new(model: &MarketModel, claim: &CallClaim, j_max: usize) -> Result<Self> {
        let (lambda, mu, delta) = model.merton_params().ok_or_else(|| {
            Error::UnsupportedModel("series formulas need at most one log-normal jump component".into())
        })?;
        Ok(Self::from_params(
            model.alpha0(),
            model.sigma_norm(),
            lambda,
            mu,
            delta,
            claim.strike(),
            claim.maturity(),
            j_max,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_params(
        alpha: f64,
        sigma: f64,
        lambda: f64,
        mu: f64,
        delta: f64,
        strike: f64,
        maturity: f64,
        j_max: usize,
    ) -> Self {
        let k = if lambda > 0.0 {
            (mu + 0.5 * delta * delta).exp_m1()
        } else {
            0.0
        };
        MertonSeries {
            alpha,
            sigma,
            lambda,
            mu,
            delta,
            k,
            strike,
            maturity,
            j_max,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn compensator(&self) -> f64 {
        self.lambda * self.k
    }

    pub fn log_jump_params(&self) -> (f64, f64) {
        (self.mu, self.delta)
    }

    fn tau(&self, t: f64) -> f64 {
        (self.maturity - t).max(0.0)
    }

    /// `log L(t) = log s + (alpha - sigma^2/2 - lambda k)(T - t)`.
    fn log_l(&self, t: f64, s: f64) -> f64 {
        s.ln() + (self.alpha - 0.5 * self.sigma * self.sigma - self.lambda * self.k) * self.tau(t)
    }

    /// Call value under Merton's martingale measure (jump risk left unpriced).
    pub fn q_price(&self, t: f64, s: f64) -> Result<f64> {
        let tau = self.tau(t);
        if tau <= 0.0 {
            return Ok((s - self.strike).max(0.0));
        }
        let lam_q = self.lambda * (self.k + 1.0);
        poisson_sum(lam_q * tau, self.j_max, s, |j| {
            let jf = j as f64;
            let vol = (self.sigma * self.sigma + jf * self.delta * self.delta / tau).sqrt();
            let r = (jf * self.mu + 0.5 * jf * self.delta * self.delta) / tau - self.lambda * self.k;
            (bs_price(0.0, s, vol, r, tau, self.strike), s)
        })
    }

    /// `d/ds` of [`q_price`](Self::q_price), term by term.
    pub fn q_delta(&self, t: f64, s: f64) -> Result<f64> {
        let tau = self.tau(t);
        if tau <= 0.0 {
            return Ok(if s > self.strike { 1.0 } else { 0.0 });
        }
        let lam_q = self.lambda * (self.k + 1.0);
        poisson_sum(lam_q * tau, self.j_max, 1.0, |j| {
            let jf = j as f64;
            let vol = (self.sigma * self.sigma + jf * self.delta * self.delta / tau).sqrt();
            let r = (jf * self.mu + 0.5 * jf * self.delta * self.delta) / tau - self.lambda * self.k;
            (bs_delta(0.0, s, vol, r, tau, self.strike), 1.0)
        })
    }

    /// `E[(S(T) - K)^+ | S(t) = s]` under the physical measure.
    pub fn p_value(&self, t: f64, s: f64) -> Result<f64> {
        let tau = self.tau(t);
        let ll = self.log_l(t, s);
        let vb = self.sigma * self.sigma * tau;
        poisson_sum(self.lambda * tau, self.j_max, s, |j| {
            let jf = j as f64;
            let m = ll + jf * self.mu;
            let v = jf * self.delta * self.delta + vb;
            (lognormal_call(m, v, self.strike), (m + 0.5 * v).exp())
        })
    }

    /// Brownian coefficient `beta(t) = sigma E[S(T) 1{S(T) >= K} | S(t) = s]`.
    pub fn beta(&self, t: f64, s: f64) -> Result<f64> {
        let tau = self.tau(t);
        let ll = self.log_l(t, s);
        let vb = self.sigma * self.sigma * tau;
        let sum = poisson_sum(self.lambda * tau, self.j_max, s, |j| {
            let jf = j as f64;
            let m = ll + jf * self.mu;
            let v = jf * self.delta * self.delta + vb;
            (lognormal_partial(m, v, self.strike), (m + 0.5 * v).exp())
        })?;
        Ok(self.sigma * sum)
    }

    /// `P(y S(T) >= K) - P(S(T) >= K)` given `S(t) = s`.
    pub fn kappa(&self, t: f64, s: f64, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::InvalidParameter(format!("jump size y must be > 0, got {y}")));
        }
        let tau = self.tau(t);
        let ll = self.log_l(t, s);
        let ly = y.ln();
        let lk = self.strike.ln();
        let vb = self.sigma * self.sigma * tau;
        poisson_sum(self.lambda * tau, self.j_max, 1.0, |j| {
            let jf = j as f64;
            let v = jf * self.delta * self.delta + vb;
            let a = centered_cdf(lk - ll - jf * self.mu, v);
            let b = centered_cdf(lk - (ly + ll) - jf * self.mu, v);
            (a - b, 1.0)
        })
    }

    /// Jump coefficient of the call's martingale representation,
    /// `E[(y S(T) - K)^+ - (S(T) - K)^+ | S(t) = s]`.
    pub fn jump_coefficient(&self, t: f64, s: f64, y: f64) -> Result<f64> {
        Ok(self.p_value(t, y * s)? - self.p_value(t, s)?)
    }
}

/// Merton's series price at time 0.
pub fn merton_series_price(model: &MarketModel, claim: &CallClaim, j_max: usize) -> Result<PriceResult> {
    let ms = MertonSeries::new(model, claim, j_max)?;
    let price = ms.q_price(0.0, model.s0())?;
    Ok(PriceResult::exact(PriceMethod::Series, price)
        .with_param("s0", model.s0())
        .with_param("K", claim.strike())
        .with_param("T", claim.maturity())
        .with_param("sigma", ms.sigma)
        .with_param("lambda", ms.lambda)
        .with_param("mu", ms.mu)
        .with_param("delta", ms.delta)
        .with_param("j_max", j_max as f64))
}

pub fn beta_series(t: f64, s: f64, model: &MarketModel, claim: &CallClaim, j_max: usize) -> Result<f64> {
    MertonSeries::new(model, claim, j_max)?.beta(t, s)
}

pub fn kappa_series(
    t: f64,
    s: f64,
    y: f64,
    model: &MarketModel,
    claim: &CallClaim,
    j_max: usize,
) -> Result<f64> {
    MertonSeries::new(model, claim, j_max)?.kappa(t, s, y)
}
