use crate::error::{Error, Result};
use crate::tensor::{gemm, sigmoid, Backward, Tape, Tensor, Var};

/// LSTM cell with the four gates stacked row-wise in the order
/// input, forget, output, candidate.
///
/// `w_ih: 4d x d_in`, `w_hh: 4d x d`, `bias: 1 x 4d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

/// Tape handles of an [`LstmCell`].
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

impl LstmCell {
    pub fn new(w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> Result<Self> {
        let (rows, _) = w_ih.dims2()?;
        if rows % 4 != 0 || rows == 0 {
            return Err(Error::ShapeMismatch(format!("w_ih has {rows} rows, expected 4d")));
        }
        let d = rows / 4;
        if w_hh.shape() != [4 * d, d] || bias.shape() != [1, 4 * d] {
            return Err(Error::ShapeMismatch(format!(
                "w_hh {:?} / bias {:?} for hidden dim {d}",
                w_hh.shape(),
                bias.shape()
            )));
        }
        Ok(LstmCell { w_ih, w_hh, bias })
    }

    pub fn zeros(d_in: usize, d: usize) -> Self {
        LstmCell {
            w_ih: Tensor::zeros(&[4 * d, d_in]),
            w_hh: Tensor::zeros(&[4 * d, d]),
            bias: Tensor::zeros(&[1, 4 * d]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    pub fn inputs(&self) -> usize {
        self.w_ih.shape()[1]
    }

    /// Untaped step; returns `(h', c')`.
    pub fn step(&self, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let k = Kernel::check(x, h, c, &self.w_ih, &self.w_hh, &self.bias)?;
        let (_, out) = k.forward(x.data(), h.data(), c.data(), &self.w_ih, &self.w_hh, &self.bias);
        split(k.m, k.d, &out)
    }
}

fn split(m: usize, d: usize, out: &[f64]) -> Result<(Tensor, Tensor)> {
    let mut h = Vec::with_capacity(m * d);
    let mut c = Vec::with_capacity(m * d);
    for row in out.chunks(2 * d) {
        h.extend_from_slice(&row[..d]);
        c.extend_from_slice(&row[d..]);
    }
    Ok((Tensor::matrix(m, d, h)?, Tensor::matrix(m, d, c)?))
}

#[derive(Debug, Clone, Copy)]
struct Kernel {
    m: usize,
    d_in: usize,
    d: usize,
}

impl Kernel {
    fn check(x: &Tensor, h: &Tensor, c: &Tensor, w_ih: &Tensor, w_hh: &Tensor, b: &Tensor) -> Result<Self> {
        let (m, d_in) = x.dims2()?;
        let d = w_hh.dims2()?.1;
        let ok = h.shape() == [m, d]
            && c.shape() == [m, d]
            && w_ih.shape() == [4 * d, d_in]
            && w_hh.shape() == [4 * d, d]
            && b.shape() == [1, 4 * d];
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "lstm step x {:?}, h {:?}, c {:?}, w_ih {:?}, w_hh {:?}, b {:?}",
                x.shape(),
                h.shape(),
                c.shape(),
                w_ih.shape(),
                w_hh.shape(),
                b.shape()
            )));
        }
        Ok(Kernel { m, d_in, d })
    }

    /// Activated gates (`m x 4d`) and the stacked output `[h' | c']` (`m x 2d`).
    fn forward(&self, x: &[f64], h: &[f64], c: &[f64], w_ih: &Tensor, w_hh: &Tensor, b: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let Kernel { m, d_in, d } = *self;
        let g4 = 4 * d;
        let mut gates: Vec<f64> = (0..m).flat_map(|_| b.data().iter().copied()).collect();
        gemm(m, d_in, g4, x, d_in, 1, w_ih.data(), 1, d_in, &mut gates, true);
        gemm(m, d, g4, h, d, 1, w_hh.data(), 1, d, &mut gates, true);
        let mut out = vec![0.0; m * 2 * d];
        for r in 0..m {
            let g = &mut gates[r * g4..(r + 1) * g4];
            g[..3 * d].iter_mut().for_each(|v| *v = sigmoid(*v));
            g[3 * d..].iter_mut().for_each(|v| *v = v.tanh());
            let o = &mut out[r * 2 * d..(r + 1) * 2 * d];
            for j in 0..d {
                let cn = g[d + j] * c[r * d + j] + g[j] * g[3 * d + j];
                o[d + j] = cn;
                o[j] = g[2 * d + j] * cn.tanh();
            }
        }
        (gates, out)
    }
}

struct LstmRule {
    k: Kernel,
    gates: Vec<f64>,
}

impl Backward for LstmRule {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let Kernel { m, d_in, d } = self.k;
        let g4 = 4 * d;
        let (x, h, c, w_ih, w_hh) = (inputs[0], inputs[1], inputs[2], inputs[3], inputs[4]);
        let out = output.data();
        let gr = grad.data();

        // gradient with respect to the gate pre-activations, and to c
        let mut da = vec![0.0; m * g4];
        let mut dc_prev = vec![0.0; m * d];
        for r in 0..m {
            let g = &self.gates[r * g4..(r + 1) * g4];
            for j in 0..d {
                let (i, f, o, cand) = (g[j], g[d + j], g[2 * d + j], g[3 * d + j]);
                let tc = out[r * 2 * d + d + j].tanh();
                let dh = gr[r * 2 * d + j];
                let dc = gr[r * 2 * d + d + j] + dh * o * (1.0 - tc * tc);
                let a = &mut da[r * g4..(r + 1) * g4];
                a[j] = dc * cand * i * (1.0 - i);
                a[d + j] = dc * c.data()[r * d + j] * f * (1.0 - f);
                a[2 * d + j] = dh * tc * o * (1.0 - o);
                a[3 * d + j] = dc * i * (1.0 - cand * cand);
                dc_prev[r * d + j] = dc * f;
            }
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; 6];
        if needs[0] {
            let mut gx = vec![0.0; m * d_in];
            gemm(m, g4, d_in, &da, g4, 1, w_ih.data(), d_in, 1, &mut gx, false);
            grads[0] = Tensor::matrix(m, d_in, gx).ok();
        }
        if needs[1] {
            let mut gh = vec![0.0; m * d];
            gemm(m, g4, d, &da, g4, 1, w_hh.data(), d, 1, &mut gh, false);
            grads[1] = Tensor::matrix(m, d, gh).ok();
        }
        if needs[2] {
            grads[2] = Tensor::matrix(m, d, dc_prev).ok();
        }
        if needs[3] {
            let mut gw = vec![0.0; g4 * d_in];
            gemm(g4, m, d_in, &da, 1, g4, x.data(), d_in, 1, &mut gw, false);
            grads[3] = Tensor::matrix(g4, d_in, gw).ok();
        }
        if needs[4] {
            let mut gw = vec![0.0; g4 * d];
            gemm(g4, m, d, &da, 1, g4, h.data(), d, 1, &mut gw, false);
            grads[4] = Tensor::matrix(g4, d, gw).ok();
        }
        if needs[5] {
            let mut gb = vec![0.0; g4];
            for row in da.chunks(g4) {
                gb.iter_mut().zip(row).for_each(|(s, v)| *s += v);
            }
            grads[5] = Tensor::matrix(1, g4, gb).ok();
        }
        grads
    }
}

/// One fused LSTM step on the tape; returns `(h', c')`.
pub fn lstm_step(tape: &mut Tape, cell: LstmVars, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let k = Kernel::check(
        tape.value(x),
        tape.value(h),
        tape.value(c),
        tape.value(cell.w_ih),
        tape.value(cell.w_hh),
        tape.value(cell.bias),
    )?;
    let (gates, out) = k.forward(
        tape.value(x).data(),
        tape.value(h).data(),
        tape.value(c).data(),
        tape.value(cell.w_ih),
        tape.value(cell.w_hh),
        tape.value(cell.bias),
    );
    let stacked = tape.custom(
        &[x, h, c, cell.w_ih, cell.w_hh, cell.bias],
        Tensor::matrix(k.m, 2 * k.d, out)?,
        Box::new(LstmRule { k, gates }),
    );
    let h_next = tape.slice_cols(stacked, 0, k.d)?;
    let c_next = tape.slice_cols(stacked, k.d, 2 * k.d)?;
    Ok((h_next, c_next))
}

/// The same step composed from primitive tape operations.
pub fn lstm_step_reference(tape: &mut Tape, cell: LstmVars, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let d = tape.value(cell.w_hh).dims2()?.1;
    let a = tape.matmul_nt(x, cell.w_ih)?;
    let b = tape.matmul_nt(h, cell.w_hh)?;
    let pre = tape.add(a, b)?;
    let pre = tape.add_row(pre, cell.bias)?;
    let block = |tape: &mut Tape, k: usize| tape.slice_cols(pre, k * d, (k + 1) * d);
    let (i, f, o, g) = (block(tape, 0)?, block(tape, 1)?, block(tape, 2)?, block(tape, 3)?);
    let (i, f, o, g) = (tape.sigmoid(i), tape.sigmoid(f), tape.sigmoid(o), tape.tanh(g));
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next);
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}
