use crate::error::{Error, Result};
use crate::tensor::{gemm, Tape, Tensor, Var};

/// Affine map `y -> A y + b` with `A: out x in`.
///
/// Batches are row-major, one sample per row, so the batched form is
/// `Y A^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearLayer {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (out, _) = weight.dims2()?;
        if bias.shape() != [1, out] {
            return Err(Error::ShapeMismatch(format!(
                "bias {:?} for a layer with {out} outputs",
                bias.shape()
            )));
        }
        Ok(LinearLayer { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        LinearLayer {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[1, outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Untaped batched forward.
    pub fn apply(&self, y: &Tensor) -> Result<Tensor> {
        let (m, n) = y.dims2()?;
        if n != self.inputs() {
            return Err(Error::ShapeMismatch(format!(
                "input width {n} for a layer with {} inputs",
                self.inputs()
            )));
        }
        let out = self.outputs();
        let mut data = vec![0.0; m * out];
        gemm(m, n, out, y.data(), n, 1, self.weight.data(), 1, n, &mut data, false);
        for row in data.chunks_mut(out) {
            row.iter_mut().zip(self.bias.data()).for_each(|(v, b)| *v += b);
        }
        Tensor::matrix(m, out, data)
    }
}

/// Tape handles of a [`LinearLayer`].
#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

/// `Y A^T + b` on the tape.
pub fn linear_forward(tape: &mut Tape, layer: LinearVars, y: Var) -> Result<Var> {
    let z = tape.matmul_nt(y, layer.weight)?;
    tape.add_row(z, layer.bias)
}
