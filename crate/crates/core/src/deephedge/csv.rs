use std::io::Write;

use super::{Comparison, EpochRecord, SweepRow};
use crate::error::Result;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `epoch,loss,x0`
pub fn write_loss_curve<W: Write>(records: &[EpochRecord], mut w: W) -> Result<()> {
    writeln!(w, "epoch,loss,x0")?;
    for r in records {
        writeln!(w, "{},{},{}", r.epoch, r.loss, r.x0)?;
    }
    Ok(())
}

/// `strategy,path,residual`
pub fn write_residuals<W: Write>(cmp: &Comparison, mut w: W) -> Result<()> {
    writeln!(w, "strategy,path,residual")?;
    for s in &cmp.strategies {
        for (j, e) in s.residuals.iter().enumerate() {
            writeln!(w, "{},{j},{e}", s.name)?;
        }
    }
    Ok(())
}

/// `model,T,R,loss,abs_price_err,l2`; missing values are left empty.
pub fn write_sweep<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "model,T,R,loss,abs_price_err,l2")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.model,
            r.maturity,
            r.steps,
            opt(r.loss),
            opt(r.abs_price_err),
            opt(r.l2)
        )?;
    }
    Ok(())
}
