use super::{normal_cdf, CallClaim, PriceMethod, PriceResult};
use crate::error::{Error, Result};
use crate::market::MarketModel;

/// Black–Scholes call value at time `t` with maturity `maturity`.
///
/// Zero time to maturity or zero volatility give the intrinsic value
/// `(s - K e^{-r tau})^+`.
pub fn bs_price(t: f64, s: f64, sigma: f64, r: f64, maturity: f64, strike: f64) -> f64 {
    let tau = maturity - t;
    let disc_k = strike * (-r * tau.max(0.0)).exp();
    if strike <= 0.0 {
        return s - disc_k;
    }
    if tau <= 0.0 || sigma <= 0.0 || s <= 0.0 {
        return (s - disc_k).max(0.0);
    }
    let sd = sigma * tau.sqrt();
    let d1 = ((s / strike).ln() + (r + 0.5 * sigma * sigma) * tau) / sd;
    let d2 = d1 - sd;
    s * normal_cdf(d1) - disc_k * normal_cdf(d2)
}

/// `dC/ds` of [`bs_price`].
pub fn bs_delta(t: f64, s: f64, sigma: f64, r: f64, maturity: f64, strike: f64) -> f64 {
    let tau = maturity - t;
    if strike <= 0.0 {
        return 1.0;
    }
    if tau <= 0.0 || sigma <= 0.0 {
        let disc_k = strike * (-r * tau.max(0.0)).exp();
        return if s > disc_k { 1.0 } else { 0.0 };
    }
    let sd = sigma * tau.sqrt();
    normal_cdf(((s / strike).ln() + (r + 0.5 * sigma * sigma) * tau) / sd)
}

/// Wealth fraction `Phi(d) s / x` held in the stock by the delta hedge.
pub fn bs_delta_portfolio(t: f64, s: f64, x: f64, sigma: f64, strike: f64, maturity: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DivisionByZeroWealth(x));
    }
    Ok(bs_delta(t, s, sigma, 0.0, maturity, strike) * s / x)
}

/// Closed-form price for a market without jumps, with volatility `|sigma0|`.
pub fn analytic_price(model: &MarketModel, claim: &CallClaim) -> Result<PriceResult> {
    if model.has_jumps() {
        return Err(Error::UnsupportedModel("closed form needs a market without jumps".into()));
    }
    let sigma = model.sigma_norm();
    let price = bs_price(0.0, model.s0(), sigma, 0.0, claim.maturity(), claim.strike());
    Ok(PriceResult::exact(PriceMethod::Analytic, price)
        .with_param("s0", model.s0())
        .with_param("K", claim.strike())
        .with_param("T", claim.maturity())
        .with_param("sigma", sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_route() {
        let claim = CallClaim::new(0.5, 1.0).unwrap();
        let bsmb = MarketModel::multi_brownian(0.3, vec![0.11, 0.16, 0.05], 1.0).unwrap();
        let r = analytic_price(&bsmb, &claim).unwrap();
        assert_eq!(r.price, bs_price(0.0, 1.0, bsmb.sigma_norm(), 0.0, 1.0, 0.5));
        assert_eq!(r.method, PriceMethod::Analytic);
        let merton = MarketModel::merton(0.2, 0.2, 1.0, 5.0, -0.2, 0.05).unwrap();
        assert!(matches!(analytic_price(&merton, &claim), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn reference_price() {
        let p = bs_price(0.0, 1.0, 0.2, 0.0, 1.0, 0.5);
        assert!((p - 0.500).abs() < 5e-4);
        // independent evaluation: 1*Phi(3.5657) - 0.5*Phi(3.3657)
        assert!((p - 0.500_009_4).abs() < 1e-7, "{p}");
    }

    #[test]
    fn limits() {
        assert_eq!(bs_price(0.0, 1.3, 0.2, 0.0, 1.0, 0.0), 1.3);
        assert_eq!(bs_price(0.0, 1.3, 0.0, 0.0, 1.0, 0.5), 0.8);
        assert_eq!(bs_price(0.0, 0.3, 0.0, 0.0, 1.0, 0.5), 0.0);
        assert!((bs_price(0.0, 1.3, 1e-9, 0.0, 1.0, 0.5) - 0.8).abs() < 1e-12);
        assert_eq!(bs_price(1.0, 1.3, 0.2, 0.0, 1.0, 0.5), 0.8);
    }

    #[test]
    fn put_call_parity() {
        // C - P = s - K e^{-r tau}; P from the reflected formula
        let (s, k, sig, r, tau) = (1.1, 0.9, 0.3, 0.05, 0.7);
        let c = bs_price(0.0, s, sig, r, tau, k);
        let sd = sig * f64::sqrt(tau);
        let d1 = ((s / k).ln() + (r + 0.5 * sig * sig) * tau) / sd;
        let put = k * (-r * tau).exp() * normal_cdf(-(d1 - sd)) - s * normal_cdf(-d1);
        assert!((c - put - (s - k * (-r * tau).exp())).abs() < 1e-14);
    }

    #[test]
    fn delta_portfolio_examples() {
        let phi = bs_delta_portfolio(0.0, 1.0, 0.5, 0.2, 0.5, 1.0).unwrap();
        // d = (ln 2 + 0.02) / 0.2 = 3.56574
        let d = (2.0f64.ln() + 0.02) / 0.2;
        assert!((d - 3.565_74).abs() < 1e-5);
        assert!((phi - 2.0 * normal_cdf(d)).abs() < 1e-15);
        assert!((phi - 1.999_64).abs() < 1e-5);
        let deep = bs_delta_portfolio(0.0, 50.0, 2.0, 0.2, 0.5, 1.0).unwrap();
        assert!((deep - 25.0).abs() < 1e-12);
        let same = bs_delta_portfolio(0.3, 0.8, 0.8, 0.2, 0.5, 1.0).unwrap();
        assert!(same <= 1.0);
        assert!(matches!(bs_delta_portfolio(0.0, 1.0, 0.0, 0.2, 0.5, 1.0), Err(Error::DivisionByZeroWealth(_))));
    }

    #[test]
    fn delta_matches_finite_difference() {
        let h = 1e-6;
        for s in [0.4, 0.5, 0.7, 1.0] {
            let fd = (bs_price(0.2, s + h, 0.25, 0.0, 1.0, 0.5) - bs_price(0.2, s - h, 0.25, 0.0, 1.0, 0.5)) / (2.0 * h);
            assert!((fd - bs_delta(0.2, s, 0.25, 0.0, 1.0, 0.5)).abs() < 1e-8);
        }
    }
}
