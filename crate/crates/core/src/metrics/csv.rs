//! CSV writers. Floats use 17 significant digits so reruns are byte-identical.

use std::io::Write;

use super::{BreakdownRow, Histogram, ObjectivePoint, StalenessDecomposition, VarianceSeries};
use crate::error::Result;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_staleness(mut w: impl Write, h: &Histogram) -> Result<()> {
    writeln!(w, "differential,count,normalized")?;
    for b in &h.bins {
        writeln!(w, "{},{},{}", b.differential, b.count, fmt_f64(b.normalized))?;
    }
    Ok(())
}

pub fn write_objective(mut w: impl Write, points: &[ObjectivePoint]) -> Result<()> {
    writeln!(w, "clock,virtual_time,objective,squared_loss")?;
    for p in points {
        writeln!(w, "{},{},{},{}", p.clock, p.time, fmt_f64(p.objective), fmt_f64(p.squared_loss))?;
    }
    Ok(())
}

pub fn write_regret(mut w: impl Write, series: &[(u64, f64)]) -> Result<()> {
    writeln!(w, "T,regret_over_T")?;
    for (t, r) in series {
        writeln!(w, "{t},{}", fmt_f64(*r))?;
    }
    Ok(())
}

pub fn write_gamma(mut w: impl Write, series: &[StalenessDecomposition], bound: f64) -> Result<()> {
    writeln!(w, "t,u_bar,gamma_norm,bound")?;
    for d in series {
        writeln!(w, "{},{},{},{}", d.t, fmt_f64(d.u_bar), fmt_f64(d.gamma_norm), fmt_f64(bound))?;
    }
    Ok(())
}

pub fn write_variance(mut w: impl Write, v: &VarianceSeries) -> Result<()> {
    writeln!(w, "t,var_t")?;
    for (t, var) in &v.points {
        writeln!(w, "{t},{}", fmt_f64(*var))?;
    }
    Ok(())
}

pub fn write_breakdown(mut w: impl Write, rows: &[BreakdownRow]) -> Result<()> {
    writeln!(w, "staleness,model,compute_ticks,wait_ticks")?;
    for r in rows {
        let s = r.staleness.map(|s| s.to_string()).unwrap_or_default();
        writeln!(w, "{s},{},{},{}", r.model, r.compute_ticks, r.wait_ticks)?;
    }
    Ok(())
}
