use std::io::{Read, Write};

use super::{GridSpec, Increments, Trajectories};
use crate::error::{Error, Result};

pub const INCREMENTS_MAGIC: [u8; 4] = *b"QHIN";
pub const INCREMENTS_VERSION: u32 = 1;

/// Write increments as a little-endian binary blob.
///
/// Layout: magic, version (u32), then `m, d_B, d_N, R, seed` (u64 each),
/// then the Brownian and jump buffers as f64.
pub fn write_increments<W: Write>(inc: &Increments, mut w: W) -> Result<()> {
    w.write_all(&INCREMENTS_MAGIC)?;
    w.write_all(&INCREMENTS_VERSION.to_le_bytes())?;
    for v in [inc.paths(), inc.d_b(), inc.d_n(), inc.steps()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&inc.seed().to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * (inc.brownian_raw().len() + inc.jump_raw().len()));
    for x in inc.brownian_raw().iter().chain(inc.jump_raw()) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Parse("truncated increments header".into()))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_increments<R: Read>(mut r: R) -> Result<Increments> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Parse("truncated increments header".into()))?;
    if magic != INCREMENTS_MAGIC {
        return Err(Error::Parse("not an increments file".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)
        .map_err(|_| Error::Parse("truncated increments header".into()))?;
    let version = u32::from_le_bytes(v);
    if version != INCREMENTS_VERSION {
        return Err(Error::Parse(format!("unsupported increments version {version}")));
    }
    let m = read_u64(&mut r)? as usize;
    let d_b = read_u64(&mut r)? as usize;
    let d_n = read_u64(&mut r)? as usize;
    let steps = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let nb = m
        .checked_mul(d_b)
        .and_then(|x| x.checked_mul(steps))
        .ok_or_else(|| Error::Parse("increments dimensions overflow".into()))?;
    let nj = m
        .checked_mul(d_n)
        .and_then(|x| x.checked_mul(steps))
        .ok_or_else(|| Error::Parse("increments dimensions overflow".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != 8 * (nb + nj) {
        return Err(Error::Parse(format!(
            "increments payload has {} bytes, expected {}",
            payload.len(),
            8 * (nb + nj)
        )));
    }
    let mut vals = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let b: Vec<f64> = vals.by_ref().take(nb).collect();
    let j: Vec<f64> = vals.collect();
    Increments::from_parts(m, d_b, d_n, steps, seed, b, j)
}

/// CSV with columns `path,step,time,stock,wealth`.
pub fn write_paths_csv<W: Write>(
    grid: &GridSpec,
    stock: &Trajectories,
    wealth: &Trajectories,
    mut w: W,
) -> Result<()> {
    if stock.paths() != wealth.paths() || stock.steps() != wealth.steps() || stock.steps() != grid.steps() {
        return Err(Error::ShapeMismatch("stock and wealth trajectories differ in shape".into()));
    }
    writeln!(w, "path,step,time,stock,wealth")?;
    for p in 0..stock.paths() {
        for i in 0..=stock.steps() {
            writeln!(
                w,
                "{p},{i},{},{},{}",
                grid.time(i),
                stock.get(p, i),
                wealth.get(p, i)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{sample_increments, simulate_paths, MarketModel, Scheme};

    #[test]
    fn blob_round_trip_is_bit_exact() {
        let model = MarketModel::merton(0.2, 0.2, 1.0, 5.0, -0.2, 0.05).unwrap();
        let g = GridSpec::new(1.0, 25).unwrap();
        let inc = sample_increments(&model, &g, 7, 31).unwrap();
        let mut buf = Vec::new();
        write_increments(&inc, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"QHIN");
        let back = read_increments(buf.as_slice()).unwrap();
        assert_eq!(back, inc);
    }

    #[test]
    fn corrupt_blobs_are_rejected() {
        assert!(matches!(read_increments(&b"XXXX"[..]), Err(Error::Parse(_))));
        let model = MarketModel::black_scholes(0.3, 0.2, 1.0).unwrap();
        let g = GridSpec::new(1.0, 4).unwrap();
        let inc = sample_increments(&model, &g, 2, 1).unwrap();
        let mut buf = Vec::new();
        write_increments(&inc, &mut buf).unwrap();
        buf.pop();
        assert!(matches!(read_increments(buf.as_slice()), Err(Error::Parse(_))));
    }

    #[test]
    fn csv_has_one_row_per_grid_point() {
        let model = MarketModel::black_scholes(0.3, 0.2, 1.0).unwrap();
        let g = GridSpec::new(1.0, 5).unwrap();
        let batch = simulate_paths(&model, &g, 3, 9, 0.5, 1.0, Scheme::Direct).unwrap();
        let mut out = Vec::new();
        write_paths_csv(&g, &batch.stock, &batch.wealth, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path,step,time,stock,wealth");
        assert_eq!(lines.len(), 1 + 3 * 6);
        assert!(lines[1].starts_with("0,0,0,1,0.5"));
    }
}
