//! Flat CSV serialization for the report types and the companion plot
//! scripts that reproduce the standard log-log and ratio plots from the CSV
//! files.

use crate::diag::{
    CaccioppoliReport, ComparisonReport, DecayFit, ExcessTable, LinearizationReport, SingularFlags,
};
use crate::fem::Mesh;
use crate::tensor::audit::InequalityAudit;
use std::io::Write;

type IoResult = std::io::Result<()>;

pub fn excess_table_csv<W: Write>(t: &ExcessTable, mut w: W) -> IoResult {
    writeln!(w, "level,radius,excess,ratio_to_prev,flagged")?;
    for (k, r) in t.radii.iter().enumerate() {
        let ratio = if k == 0 { String::new() } else { format!("{}", t.ratios[k - 1]) };
        let flagged = if k == 0 { String::new() } else { format!("{}", t.flagged[k - 1]) };
        writeln!(w, "{k},{r},{},{ratio},{flagged}", t.excess[k])?;
    }
    Ok(())
}

pub fn decay_fit_csv<W: Write>(f: &DecayFit, mut w: W) -> IoResult {
    writeln!(w, "radius,mass")?;
    for (r, m) in f.radii.iter().zip(&f.mass) {
        writeln!(w, "{r},{m}")?;
    }
    Ok(())
}

pub fn caccioppoli_csv<W: Write>(r: &CaccioppoliReport, mut w: W) -> IoResult {
    writeln!(w, "term,value")?;
    writeln!(w, "lhs,{}", r.lhs)?;
    for (name, value) in &r.rhs_terms {
        writeln!(w, "{name},{value}")?;
    }
    writeln!(w, "empirical_c,{}", r.empirical_c)?;
    Ok(())
}

pub fn comparison_csv<W: Write>(r: &ComparisonReport, mut w: W) -> IoResult {
    writeln!(w, "quantity,value")?;
    writeln!(w, "lhs2,{}", r.lhs2)?;
    writeln!(w, "gap2,{}", r.gap2)?;
    writeln!(w, "v_distance_over_gap,{}", r.v_distance_over_gap)?;
    writeln!(w, "excess_u,{}", r.excess_u)?;
    writeln!(w, "excess_w,{}", r.excess_w)?;
    writeln!(w, "excess_ratio,{}", r.excess_ratio)?;
    writeln!(w, "mean_strain_drift,{}", r.mean_strain_drift)?;
    for (i, e) in r.entries.iter().enumerate() {
        writeln!(w, "lhs1_{i},{}", e.lhs1)?;
        writeln!(w, "rhs1_{i},{}", e.rhs1)?;
        writeln!(w, "ratio1_{i},{}", e.ratio)?;
    }
    Ok(())
}

pub fn linearization_csv<W: Write>(r: &LinearizationReport, mut w: W) -> IoResult {
    writeln!(w, "lambda,rescaled_error")?;
    for (l, e) in r.lambda_sequence.iter().zip(&r.rescaled_error) {
        writeln!(w, "{l},{e}")?;
    }
    Ok(())
}

pub fn flags_csv<W: Write>(f: &SingularFlags, mesh: &Mesh, mut w: W) -> IoResult {
    writeln!(w, "node,x,y,z,evaluated,sigma1,sigma2,sigma3,sigma4")?;
    for node in 0..mesh.num_nodes() {
        let p = mesh.node(node);
        writeln!(
            w,
            "{node},{},{},{},{},{},{},{},{}",
            p[0],
            p[1],
            p[2],
            f.evaluated[node],
            f.sigma1[node],
            f.sigma2[node],
            f.sigma3[node],
            f.sigma4[node]
        )?;
    }
    Ok(())
}

pub fn audits_csv<W: Write>(audits: &[InequalityAudit], mut w: W) -> IoResult {
    writeln!(w, "lemma,samples,empirical_lo,empirical_hi,violated,violations")?;
    for a in audits {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            a.lemma_id, a.samples, a.empirical_lo, a.empirical_hi, a.violated, a.violations
        )?;
    }
    Ok(())
}

/// Plot-script kinds matched to report CSV layouts.
#[derive(Debug, Clone, Copy)]
pub enum PlotKind {
    /// log-log mass vs radius with the fitted slope (decay fits).
    LogLog,
    /// per-level contraction ratios vs radius (excess tables).
    Ratio,
    /// log-log rescaled error vs lambda (linearization).
    Linearization,
}

/// A small self-contained matplotlib script reading the named CSV.
pub fn plot_script(kind: PlotKind, csv_name: &str) -> String {
    match kind {
        PlotKind::LogLog => format!(
            r#"#!/usr/bin/env python3
"""Log-log plot of ball mass vs radius with a least-squares slope."""
import csv, math
import matplotlib.pyplot as plt

radii, mass = [], []
with open("{csv_name}") as f:
    for row in csv.DictReader(f):
        r, m = float(row["radius"]), float(row["mass"])
        if m > 0:
            radii.append(r)
            mass.append(m)
lx = [math.log(r) for r in radii]
ly = [math.log(m) for m in mass]
n = len(lx)
xbar, ybar = sum(lx) / n, sum(ly) / n
slope = sum((a - xbar) * (b - ybar) for a, b in zip(lx, ly)) / sum((a - xbar) ** 2 for a in lx)
plt.loglog(radii, mass, "o-", label="mass")
plt.loglog(radii, [math.exp(ybar + slope * (x - xbar)) for x in lx], "--",
           label=f"fit slope {{slope:.3f}}")
plt.xlabel("radius")
plt.ylabel("V-mass")
plt.legend()
plt.savefig("{csv_name}.png", dpi=150)
"#
        ),
        PlotKind::Ratio => format!(
            r#"#!/usr/bin/env python3
"""Per-level excess contraction ratios against the radius."""
import csv
import matplotlib.pyplot as plt

radius, ratio = [], []
with open("{csv_name}") as f:
    for row in csv.DictReader(f):
        if row["ratio_to_prev"]:
            radius.append(float(row["radius"]))
            ratio.append(float(row["ratio_to_prev"]))
plt.semilogx(radius, ratio, "o-")
plt.axhline(0.25, linestyle="--", color="grey", label="tau^2 for tau = 1/2")
plt.xlabel("radius")
plt.ylabel("excess ratio")
plt.legend()
plt.savefig("{csv_name}.png", dpi=150)
"#
        ),
        PlotKind::Linearization => format!(
            r#"#!/usr/bin/env python3
"""Rescaled linearization error along the shrinking lambda sequence."""
import csv
import matplotlib.pyplot as plt

lam, err = [], []
with open("{csv_name}") as f:
    for row in csv.DictReader(f):
        lam.append(float(row["lambda"]))
        err.append(float(row["rescaled_error"]))
plt.loglog(lam, err, "o-")
plt.xlabel("lambda")
plt.ylabel("rescaled error")
plt.savefig("{csv_name}.png", dpi=150)
"#
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excess_csv_layout() {
        let t = ExcessTable {
            center: vec![0.0, 0.0],
            tau: 0.5,
            radii: vec![0.4, 0.2],
            excess: vec![1.0, 0.25],
            mean_strain: vec![],
            ratios: vec![0.25],
            flagged: vec![false],
            decay_constant: 6.0,
        };
        let mut buf = Vec::new();
        excess_table_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("level,radius,excess"));
        assert!(text.contains("1,0.2,0.25,0.25,false"));
    }

    #[test]
    fn plot_scripts_reference_their_csv() {
        for kind in [PlotKind::LogLog, PlotKind::Ratio, PlotKind::Linearization] {
            let s = plot_script(kind, "some_report.csv");
            assert!(s.contains("some_report.csv"));
            assert!(s.starts_with("#!/usr/bin/env python3"));
        }
    }
}
