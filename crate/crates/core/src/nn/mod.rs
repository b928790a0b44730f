//! Hedging network: a softplus price head and two stacked LSTM layers with a
//! linear portfolio head, plus Adam and a text checkpoint format.

mod adam;
mod checkpoint;
mod forward;
pub mod hexfloat;
mod linear;
mod lstm;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use forward::{hedge_forward, price_head_forward, rollout, HedgeGraph, Rollout};
pub use linear::{linear_forward, LinearLayer, LinearVars};
pub use lstm::{lstm_step, lstm_step_reference, LstmCell, LstmVars};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::{softplus, Tape, Tensor, Var};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    /// Width of the price-head input and of both LSTM layers.
    pub hidden: usize,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec { hidden: 64 }
    }
}

/// Parameter names in storage order.
pub const PARAM_NAMES: [&str; 10] = [
    "price_head.weight",
    "price_head.bias",
    "lstm1.w_ih",
    "lstm1.w_hh",
    "lstm1.bias",
    "lstm2.w_ih",
    "lstm2.w_hh",
    "lstm2.bias",
    "out_head.weight",
    "out_head.bias",
];

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeNet {
    pub spec: NetSpec,
    pub price_head: LinearLayer,
    pub lstm1: LstmCell,
    pub lstm2: LstmCell,
    pub out_head: LinearLayer,
}

/// Tape handles of every [`HedgeNet`] parameter.
#[derive(Debug, Clone, Copy)]
pub struct BoundNet {
    pub hidden: usize,
    pub price_head: LinearVars,
    pub lstm1: LstmVars,
    pub lstm2: LstmVars,
    pub out_head: LinearVars,
}

impl BoundNet {
    pub fn vars(&self) -> [Var; 10] {
        [
            self.price_head.weight,
            self.price_head.bias,
            self.lstm1.w_ih,
            self.lstm1.w_hh,
            self.lstm1.bias,
            self.lstm2.w_ih,
            self.lstm2.w_hh,
            self.lstm2.bias,
            self.out_head.weight,
            self.out_head.bias,
        ]
    }
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let a = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::new(vec![rows, cols], data).expect("consistent shape")
}

fn lstm_bias(d: usize) -> Tensor {
    let mut b = Tensor::zeros(&[1, 4 * d]);
    b.data_mut()[d..2 * d].iter_mut().for_each(|v| *v = 1.0);
    b
}

impl HedgeNet {
    /// Weights uniform on `+-1/sqrt(fan_in)`, forget-gate biases 1, other biases 0.
    pub fn init(spec: NetSpec, seed: u64) -> Result<Self> {
        let d = spec.hidden;
        if d == 0 {
            return Err(Error::InvalidParameter("hidden dimension must be > 0".into()));
        }
        let mut rng = stream_rng(seed, u64::MAX);
        Ok(HedgeNet {
            spec,
            price_head: LinearLayer::new(uniform(&mut rng, 1, d), Tensor::zeros(&[1, 1]))?,
            lstm1: LstmCell::new(uniform(&mut rng, 4 * d, 1), uniform(&mut rng, 4 * d, d), lstm_bias(d))?,
            lstm2: LstmCell::new(uniform(&mut rng, 4 * d, d), uniform(&mut rng, 4 * d, d), lstm_bias(d))?,
            out_head: LinearLayer::new(uniform(&mut rng, 1, d), Tensor::zeros(&[1, 1]))?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.spec.hidden
    }

    pub fn params(&self) -> [&Tensor; 10] {
        [
            &self.price_head.weight,
            &self.price_head.bias,
            &self.lstm1.w_ih,
            &self.lstm1.w_hh,
            &self.lstm1.bias,
            &self.lstm2.w_ih,
            &self.lstm2.w_hh,
            &self.lstm2.bias,
            &self.out_head.weight,
            &self.out_head.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.price_head.weight,
            &mut self.price_head.bias,
            &mut self.lstm1.w_ih,
            &mut self.lstm1.w_hh,
            &mut self.lstm1.bias,
            &mut self.lstm2.w_ih,
            &mut self.lstm2.w_hh,
            &mut self.lstm2.bias,
            &mut self.out_head.weight,
            &mut self.out_head.bias,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Rebuild from tensors in [`PARAM_NAMES`] order.
    pub fn from_params(spec: NetSpec, p: Vec<Tensor>) -> Result<Self> {
        let Ok::<[Tensor; 10], _>([phw, phb, a_ih, a_hh, a_b, b_ih, b_hh, b_b, ohw, ohb]) = p.try_into() else {
            return Err(Error::CheckpointMismatch("expected 10 parameter tensors".into()));
        };
        let mismatch = |e: Error| Error::CheckpointMismatch(e.to_string());
        let net = HedgeNet {
            spec,
            price_head: LinearLayer::new(phw, phb).map_err(mismatch)?,
            lstm1: LstmCell::new(a_ih, a_hh, a_b).map_err(mismatch)?,
            lstm2: LstmCell::new(b_ih, b_hh, b_b).map_err(mismatch)?,
            out_head: LinearLayer::new(ohw, ohb).map_err(mismatch)?,
        };
        let d = spec.hidden;
        let dims_ok = net.price_head.inputs() == d
            && net.price_head.outputs() == 1
            && net.lstm1.inputs() == 1
            && net.lstm1.hidden() == d
            && net.lstm2.inputs() == d
            && net.lstm2.hidden() == d
            && net.out_head.inputs() == d
            && net.out_head.outputs() == 1;
        if !dims_ok {
            return Err(Error::CheckpointMismatch(format!("parameter shapes do not match hidden dim {d}")));
        }
        Ok(net)
    }

    fn bind_with(&self, tape: &mut Tape, leaf: bool) -> BoundNet {
        let mut put = |t: &Tensor| if leaf { tape.leaf(t.clone()) } else { tape.constant(t.clone()) };
        BoundNet {
            hidden: self.spec.hidden,
            price_head: LinearVars {
                weight: put(&self.price_head.weight),
                bias: put(&self.price_head.bias),
            },
            lstm1: LstmVars {
                w_ih: put(&self.lstm1.w_ih),
                w_hh: put(&self.lstm1.w_hh),
                bias: put(&self.lstm1.bias),
            },
            lstm2: LstmVars {
                w_ih: put(&self.lstm2.w_ih),
                w_hh: put(&self.lstm2.w_hh),
                bias: put(&self.lstm2.bias),
            },
            out_head: LinearVars {
                weight: put(&self.out_head.weight),
                bias: put(&self.out_head.bias),
            },
        }
    }

    /// Record every parameter as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundNet {
        self.bind_with(tape, true)
    }

    /// Record every parameter as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundNet {
        self.bind_with(tape, false)
    }

    /// Initial wealth `softplus(A [s0, ..., s0] + b)`.
    pub fn price(&self, s0: f64) -> f64 {
        let y = Tensor::full(&[1, self.spec.hidden], s0);
        let z = self.price_head.apply(&y).expect("price head input width is the hidden dim");
        softplus(z.data()[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_unit_forget_bias() {
        let spec = NetSpec { hidden: 8 };
        let a = HedgeNet::init(spec, 5).unwrap();
        assert_eq!(a, HedgeNet::init(spec, 5).unwrap());
        assert_ne!(a, HedgeNet::init(spec, 6).unwrap());
        for cell in [&a.lstm1, &a.lstm2] {
            let b = cell.bias.data();
            assert!(b[8..16].iter().all(|v| *v == 1.0));
            assert!(b[..8].iter().chain(&b[16..]).all(|v| *v == 0.0));
        }
        assert_eq!(a.params().len(), PARAM_NAMES.len());
        assert!(HedgeNet::init(NetSpec { hidden: 0 }, 1).is_err());
    }

    #[test]
    fn weight_spread_matches_uniform_law() {
        let net = HedgeNet::init(NetSpec { hidden: 512 }, 11).unwrap();
        let w = net.lstm2.w_hh.data();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let theory = 1.0 / (3.0f64 * 512.0).sqrt();
        assert!((std / theory - 1.0).abs() < 0.1, "{std} vs {theory}");
        let bound = 1.0 / 512f64.sqrt();
        assert!(w.iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn price_head_values() {
        let mut net = HedgeNet::init(NetSpec { hidden: 4 }, 1).unwrap();
        net.price_head = LinearLayer::zeros(4, 1);
        assert_eq!(net.price(1.0), 2f64.ln());
        let mut last = 0.0;
        for b in [-3.0, -1.0, 0.0, 2.0] {
            net.price_head.bias = Tensor::scalar(b);
            let x0 = net.price(1.0);
            assert!((x0 - softplus(b)).abs() < 1e-15 && x0 > last);
            last = x0;
        }
    }

    #[test]
    fn from_params_round_trip_and_mismatch() {
        let net = HedgeNet::init(NetSpec { hidden: 3 }, 2).unwrap();
        let p: Vec<Tensor> = net.params().iter().map(|t| (*t).clone()).collect();
        assert_eq!(HedgeNet::from_params(net.spec, p.clone()).unwrap(), net);
        assert!(matches!(
            HedgeNet::from_params(NetSpec { hidden: 4 }, p.clone()),
            Err(Error::CheckpointMismatch(_))
        ));
        assert!(HedgeNet::from_params(net.spec, p[..9].to_vec()).is_err());
    }
}
