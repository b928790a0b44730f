use std::collections::BTreeMap;
use std::path::Path;

use super::{hexfloat, HedgeNet, NetSpec, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const HEADER: &str = "qhedge-checkpoint 1";

/// Network weights plus free-form metadata (training config, epoch, loss).
///
/// Text layout, one item per line:
///
/// ```text
/// qhedge-checkpoint 1
/// hidden 64
/// meta <key> <value>
/// tensor <name> <rows> <cols>
/// <hex floats, row-major, space separated>
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: HedgeNet,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(net: HedgeNet) -> Self {
        Checkpoint {
            net,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\nhidden {}\n", self.net.hidden());
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in PARAM_NAMES.iter().zip(self.net.params()) {
            let (r, c) = t.dims2().expect("parameters are matrices");
            out.push_str(&format!("tensor {name} {r} {c}\n"));
            let vals: Vec<String> = t.data().iter().map(|v| hexfloat::format(*v)).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::Parse("not a qhedge checkpoint (bad header)".into()));
        }
        let hidden: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("hidden "))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse("missing 'hidden' line".into()))?;
        let mut meta = BTreeMap::new();
        let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
        while let Some(line) = lines.next() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                let [name, r, c] = f[..] else {
                    return Err(Error::Parse(format!("bad tensor line '{line}'")));
                };
                let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad dimension '{s}'")));
                let (r, c) = (dim(r)?, dim(c)?);
                let values = lines
                    .next()
                    .ok_or_else(|| Error::Parse(format!("tensor {name} has no values")))?
                    .split_whitespace()
                    .map(hexfloat::parse)
                    .collect::<Result<Vec<f64>>>()?;
                if values.len() != r * c {
                    return Err(Error::Parse(format!("tensor {name}: {} values for {r}x{c}", values.len())));
                }
                tensors.insert(name.to_string(), Tensor::matrix(r, c, values)?);
            } else {
                return Err(Error::Parse(format!("unexpected line '{line}'")));
            }
        }
        let mut params = Vec::with_capacity(PARAM_NAMES.len());
        for name in PARAM_NAMES {
            params.push(
                tensors
                    .remove(name)
                    .ok_or_else(|| Error::CheckpointMismatch(format!("missing tensor {name}")))?,
            );
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::CheckpointMismatch(format!("unknown tensor {extra}")));
        }
        let net = HedgeNet::from_params(NetSpec { hidden }, params)?;
        Ok(Checkpoint { net, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Fail unless the stored net has hidden dimension `hidden`.
    pub fn expect_hidden(&self, hidden: usize) -> Result<()> {
        if self.net.hidden() != hidden {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint hidden dim {} but {hidden} requested",
                self.net.hidden()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_bit_exact() {
        let net = HedgeNet::init(NetSpec { hidden: 3 }, 9).unwrap();
        let ck = Checkpoint::new(net).with_meta("epoch", 17).with_meta("lr", 0.0005);
        let back = Checkpoint::parse(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.net.params().iter().zip(ck.net.params()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bs_1_40_7.ckpt");
        let ck = Checkpoint::new(HedgeNet::init(NetSpec { hidden: 2 }, 1).unwrap());
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn corrupt_or_mismatched_inputs() {
        let text = Checkpoint::new(HedgeNet::init(NetSpec { hidden: 2 }, 1).unwrap()).to_text();
        assert!(matches!(Checkpoint::parse("hello"), Err(Error::Parse(_))));
        let wrong_hidden = text.replacen("hidden 2", "hidden 3", 1);
        assert!(matches!(Checkpoint::parse(&wrong_hidden), Err(Error::CheckpointMismatch(_))));
        let missing = text.replacen("tensor out_head.bias", "tensor out_head.extra", 1);
        assert!(matches!(Checkpoint::parse(&missing), Err(Error::CheckpointMismatch(_))));
        let ck = Checkpoint::parse(&text).unwrap();
        assert!(ck.expect_hidden(2).is_ok());
        assert!(matches!(ck.expect_hidden(64), Err(Error::CheckpointMismatch(_))));
    }
}
