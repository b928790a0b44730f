use super::{linear_forward, lstm_step, BoundNet, HedgeNet};
use crate::error::{Error, Result};
use crate::market::{step_return, GridSpec, Increments, MarketModel, Scheme};
use crate::tensor::{Tape, Tensor, Var};

/// `softplus(A [s0, ..., s0] + b)` as a `1 x 1` node.
pub fn price_head_forward(tape: &mut Tape, net: &BoundNet, s0: f64) -> Result<Var> {
    let y = tape.constant(Tensor::full(&[1, net.hidden], s0));
    let z = linear_forward(tape, net.price_head, y)?;
    Ok(tape.softplus(z))
}

/// Taped unrolled network over one batch.
#[derive(Debug, Clone)]
pub struct HedgeGraph {
    pub x0: Var,
    /// `pi_0 .. pi_{R-1}`, each `M x 1`.
    pub pi: Vec<Var>,
    /// `x_0 .. x_R`, each `M x 1`.
    pub wealth: Vec<Var>,
    /// Paths where wealth left the positive axis (direct) or `1 + pi J <= 0` (log).
    pub flagged: Vec<bool>,
}

impl HedgeGraph {
    pub fn terminal(&self) -> Var {
        *self.wealth.last().expect("wealth holds x_0")
    }

    /// Portfolio values as a path-major `M x R` vector.
    pub fn pi_values(&self, tape: &Tape) -> Vec<f64> {
        gather(tape, &self.pi)
    }

    /// Wealth values as a path-major `M x (R+1)` vector.
    pub fn wealth_values(&self, tape: &Tape) -> Vec<f64> {
        gather(tape, &self.wealth)
    }
}

fn gather(tape: &Tape, cols: &[Var]) -> Vec<f64> {
    let m = cols.first().map_or(0, |v| tape.value(*v).numel());
    let r = cols.len();
    let mut out = vec![0.0; m * r];
    for (i, v) in cols.iter().enumerate() {
        for (j, x) in tape.value(*v).data().iter().enumerate() {
            out[j * r + i] = *x;
        }
    }
    out
}

/// Per-step noise columns used by the wealth update.
struct StepColumns {
    /// Direct: the full one-step return. Log: drift and diffusion part only.
    base: Vec<f64>,
    jump: Vec<f64>,
}

fn step_columns(inc: &Increments, model: &MarketModel, grid: &GridSpec, step: usize, scheme: Scheme) -> StepColumns {
    let m = inc.paths();
    let drift = (model.alpha0() - model.compensator()) * grid.dt();
    let mut base = Vec::with_capacity(m);
    let mut jump = Vec::with_capacity(m);
    for p in 0..m {
        let noise = inc.step_noise(model, grid, p, step);
        match scheme {
            Scheme::Direct => base.push(step_return(model, grid, noise)),
            Scheme::Log => base.push(drift + noise.diffusion),
        }
        jump.push(noise.jump);
    }
    StepColumns { base, jump }
}

fn check_inputs(inc: &Increments, model: &MarketModel, grid: &GridSpec, hidden: usize, lstm_width: usize) -> Result<()> {
    inc.check(model, grid)?;
    if hidden != lstm_width {
        return Err(Error::ShapeMismatch(format!("net hidden dim {hidden} vs lstm width {lstm_width}")));
    }
    Ok(())
}

/// Unroll the network over `grid`, threading LSTM states across time and
/// feeding each wealth value back as the next input.
///
/// The head output after `x_R` is computed and dropped, so the graph has
/// the same shape as the figure it mirrors.
pub fn hedge_forward(
    tape: &mut Tape,
    net: &BoundNet,
    inc: &Increments,
    model: &MarketModel,
    grid: &GridSpec,
    scheme: Scheme,
) -> Result<HedgeGraph> {
    let lstm_width = tape.value(net.lstm1.w_hh).dims2()?.1;
    check_inputs(inc, model, grid, net.hidden, lstm_width)?;
    let (m, r, d) = (inc.paths(), grid.steps(), net.hidden);
    let half_var_dt = 0.5 * model.sigma_sq() * grid.dt();

    let x0 = price_head_forward(tape, net, model.s0())?;
    let mut x = tape.repeat_rows(x0, m)?;
    let mut y = match scheme {
        Scheme::Log => Some(tape.log(x)),
        Scheme::Direct => None,
    };
    let zeros = Tensor::zeros(&[m, d]);
    let (mut h1, mut c1) = (tape.constant(zeros.clone()), tape.constant(zeros.clone()));
    let (mut h2, mut c2) = (tape.constant(zeros.clone()), tape.constant(zeros));

    let mut pi = Vec::with_capacity(r);
    let mut wealth = vec![x];
    let mut flagged = vec![false; m];
    for i in 0..=r {
        (h1, c1) = lstm_step(tape, net.lstm1, x, h1, c1)?;
        (h2, c2) = lstm_step(tape, net.lstm2, h1, h2, c2)?;
        let p = linear_forward(tape, net.out_head, h2)?;
        if i == r {
            break;
        }
        pi.push(p);
        let cols = step_columns(inc, model, grid, i, scheme);
        match scheme {
            Scheme::Direct => {
                let ret = tape.constant(Tensor::column(cols.base));
                let xp = tape.mul(x, p)?;
                let dx = tape.mul(xp, ret)?;
                x = tape.add(x, dx)?;
                for (f, v) in flagged.iter_mut().zip(tape.value(x).data()) {
                    *f |= *v <= 0.0;
                }
            }
            Scheme::Log => {
                let base = tape.constant(Tensor::column(cols.base));
                let jump = tape.constant(Tensor::column(cols.jump));
                let a = tape.mul(p, base)?;
                let sq = tape.square(p);
                let b = tape.scale(sq, -half_var_dt);
                let pj = tape.mul(p, jump)?;
                let arg = tape.add_scalar(pj, 1.0);
                for (f, v) in flagged.iter_mut().zip(tape.value(arg).data()) {
                    *f |= *v <= 0.0;
                }
                let l = tape.log(arg);
                let mut yn = tape.add(y.expect("log state"), a)?;
                yn = tape.add(yn, b)?;
                yn = tape.add(yn, l)?;
                y = Some(yn);
                x = tape.exp(yn);
            }
        }
        wealth.push(x);
    }
    Ok(HedgeGraph { x0, pi, wealth, flagged })
}

/// Untaped forward pass over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub x0: f64,
    /// Path-major `M x R`.
    pub pi: Vec<f64>,
    /// Path-major `M x (R+1)`.
    pub wealth: Vec<f64>,
    pub flagged: Vec<bool>,
    pub steps: usize,
}

impl Rollout {
    pub fn paths(&self) -> usize {
        self.flagged.len()
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.wealth.chunks(self.steps + 1).map(|w| w[self.steps]).collect()
    }
}

/// Same arithmetic as [`hedge_forward`] without recording a tape; memory
/// stays `O(M d)` however long the grid is.
pub fn rollout(net: &HedgeNet, inc: &Increments, model: &MarketModel, grid: &GridSpec, scheme: Scheme) -> Result<Rollout> {
    check_inputs(inc, model, grid, net.hidden(), net.lstm1.hidden())?;
    let (m, r, d) = (inc.paths(), grid.steps(), net.hidden());
    let half_var_dt = 0.5 * model.sigma_sq() * grid.dt();
    let x0 = net.price(model.s0());

    let mut x = vec![x0; m];
    let mut y: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let zeros = Tensor::zeros(&[m, d]);
    let (mut h1, mut c1, mut h2, mut c2) = (zeros.clone(), zeros.clone(), zeros.clone(), zeros);
    let mut pi = vec![0.0; m * r];
    let mut wealth = vec![0.0; m * (r + 1)];
    let mut flagged = vec![false; m];
    for (j, v) in x.iter().enumerate() {
        wealth[j * (r + 1)] = *v;
    }
    for i in 0..=r {
        let input = Tensor::column(x.clone());
        (h1, c1) = net.lstm1.step(&input, &h1, &c1)?;
        (h2, c2) = net.lstm2.step(&h1, &h2, &c2)?;
        let p = net.out_head.apply(&h2)?;
        if i == r {
            break;
        }
        let cols = step_columns(inc, model, grid, i, scheme);
        for j in 0..m {
            let pj = p.data()[j];
            pi[j * r + i] = pj;
            match scheme {
                Scheme::Direct => {
                    x[j] = x[j] + x[j] * pj * cols.base[j];
                    flagged[j] |= x[j] <= 0.0;
                }
                Scheme::Log => {
                    let arg = pj * cols.jump[j] + 1.0;
                    flagged[j] |= arg <= 0.0;
                    y[j] = y[j] + pj * cols.base[j] + pj * pj * -half_var_dt + arg.ln();
                    x[j] = y[j].exp();
                }
            }
            wealth[j * (r + 1) + i + 1] = x[j];
        }
    }
    Ok(Rollout {
        x0,
        pi,
        wealth,
        flagged,
        steps: r,
    })
}
