//! CSV emission for paths, ensembles and measure reports.
//!
//! Every file starts with a '#'-prefixed metadata block (enough to replay
//! the run) and a header row; floats are printed with 17 significant
//! digits so identical runs are byte-identical.

use std::fmt::Write as _;

use crate::chaplygin::MeasureReport;
use crate::geometry::ConfigPoint;
use crate::sde::{Ensemble, Path};

/// 17 significant digits: round-trips f64 exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn metadata_block(metadata: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out
}

/// Reduce periodic coordinates to [0, 2π) for output.
fn output_coords(state: &nalgebra::DVector<f64>, periodic: &[bool]) -> Vec<f64> {
    state
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if periodic.get(i).copied().unwrap_or(false) {
                x.rem_euclid(std::f64::consts::TAU)
            } else {
                x
            }
        })
        .collect()
}

/// One trajectory: t, q1..qn, exploded.
pub fn path_csv(path: &Path, periodic: &[bool], metadata: &[(String, String)]) -> String {
    let mut out = metadata_block(metadata);
    let dim = path.states.first().map(|s| s.len()).unwrap_or(0);
    let mut header = String::from("t");
    for i in 1..=dim {
        let _ = write!(header, ",q{i}");
    }
    header.push_str(",exploded");
    let _ = writeln!(out, "{header}");
    for (i, state) in path.states.iter().enumerate() {
        let mut row = fmt_float(path.grid.time(i));
        for x in output_coords(state, periodic) {
            let _ = write!(row, ",{}", fmt_float(x));
        }
        let _ = write!(row, ",0");
        let _ = writeln!(out, "{row}");
    }
    if let Some(step) = path.exploded_at {
        let _ = writeln!(
            out,
            "{},{}1",
            fmt_float(path.grid.time(step)),
            "nan,".repeat(dim)
        );
    }
    out
}

/// All paths of an ensemble: t, q1..qn, path_id, exploded.
pub fn ensemble_csv(
    ensemble: &Ensemble,
    periodic: &[bool],
    metadata: &[(String, String)],
) -> String {
    let mut out = metadata_block(metadata);
    let dim = ensemble
        .paths
        .first()
        .and_then(|p| p.states.first())
        .map(|s| s.len())
        .unwrap_or(0);
    let mut header = String::from("t");
    for i in 1..=dim {
        let _ = write!(header, ",q{i}");
    }
    header.push_str(",path_id,exploded");
    let _ = writeln!(out, "{header}");
    for (pid, path) in ensemble.paths.iter().enumerate() {
        let exploded = path.exploded_at.is_some();
        for (i, state) in path.states.iter().enumerate() {
            let mut row = fmt_float(path.grid.time(i));
            for x in output_coords(state, periodic) {
                let _ = write!(row, ",{}", fmt_float(x));
            }
            let _ = write!(row, ",{pid},{}", u8::from(exploded));
            let _ = writeln!(out, "{row}");
        }
    }
    out
}

/// Mean trajectory with per-time standard errors and alive counts:
/// t, q1..qn, stderr1..stderrn, alive.
pub fn mean_csv(
    times: &[f64],
    means: &[nalgebra::DVector<f64>],
    stderrs: Option<&[nalgebra::DVector<f64>]>,
    alive: Option<&[usize]>,
    periodic: &[bool],
    metadata: &[(String, String)],
) -> String {
    let mut out = metadata_block(metadata);
    let dim = means.first().map(|s| s.len()).unwrap_or(0);
    let mut header = String::from("t");
    for i in 1..=dim {
        let _ = write!(header, ",q{i}");
    }
    if stderrs.is_some() {
        for i in 1..=dim {
            let _ = write!(header, ",stderr{i}");
        }
    }
    if alive.is_some() {
        header.push_str(",alive");
    }
    let _ = writeln!(out, "{header}");
    for (i, mean) in means.iter().enumerate() {
        let mut row = fmt_float(times[i]);
        for x in output_coords(mean, periodic) {
            let _ = write!(row, ",{}", fmt_float(x));
        }
        if let Some(se) = stderrs {
            for x in se[i].iter() {
                let _ = write!(row, ",{}", fmt_float(*x));
            }
        }
        if let Some(counts) = alive {
            let _ = write!(row, ",{}", counts[i]);
        }
        let _ = writeln!(out, "{row}");
    }
    out
}

/// Measure report: summary block (verdict, periods) then one row per grid
/// node with x, β, b and the dβ norm.
pub fn measure_report_csv(report: &MeasureReport, metadata: &[(String, String)]) -> String {
    let mut out = metadata_block(metadata);
    let _ = writeln!(out, "# verdict: {}", report.verdict);
    for (i, p) in report.periods.iter().enumerate() {
        let _ = writeln!(out, "# period_loop_{}: {}", i + 1, fmt_float(*p));
    }
    let m = report.shape_dim;
    let mut header = String::new();
    for i in 1..=m {
        let _ = write!(header, "x{i},");
    }
    for i in 1..=m {
        let _ = write!(header, "beta_{i},");
    }
    for i in 1..=m {
        let _ = write!(header, "b_{i},");
    }
    header.push_str("dbeta_norm");
    if report.potential.is_some() {
        header.push_str(",potential");
    }
    let _ = writeln!(out, "{header}");
    for idx in 0..report.points.len() {
        let mut row = String::new();
        for x in report.points[idx].iter() {
            let _ = write!(row, "{},", fmt_float(*x));
        }
        for x in report.beta[idx].iter() {
            let _ = write!(row, "{},", fmt_float(*x));
        }
        for x in report.b[idx].iter() {
            let _ = write!(row, "{},", fmt_float(*x));
        }
        let _ = write!(row, "{}", fmt_float(report.dbeta_norm[idx]));
        if let Some(f) = &report.potential {
            let _ = write!(row, ",{}", fmt_float(f[idx]));
        }
        let _ = writeln!(out, "{row}");
    }
    out
}

/// Human-readable verdict summary for the measure test.
pub fn measure_summary(report: &MeasureReport) -> String {
    let mut out = String::new();
    match report.verdict {
        crate::chaplygin::MeasureVerdict::Exact => {
            let _ = writeln!(
                out,
                "EXACT: preserved measure exists; reduced diffusion is symmetric (time-reversible given an equilibrium)."
            );
            if let Some(f) = &report.potential {
                let (lo, hi) = f
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                if hi - lo < 1e-9 {
                    let _ = writeln!(out, "density N = e^F is constant (F ≡ {})", fmt_float(lo));
                } else {
                    let _ = writeln!(
                        out,
                        "density N = e^F with F in [{}, {}]",
                        fmt_float(lo),
                        fmt_float(hi)
                    );
                }
            }
        }
        crate::chaplygin::MeasureVerdict::ClosedNotExact => {
            let _ = writeln!(
                out,
                "CLOSED_NOT_EXACT: no smooth preserved measure; diffusion not time-reversible."
            );
        }
        crate::chaplygin::MeasureVerdict::NotClosed => {
            let _ = writeln!(out, "NOT_CLOSED: dβ ≠ 0; no preserved measure.");
        }
    }
    for (i, p) in report.periods.iter().enumerate() {
        let _ = writeln!(out, "loop {} period: {}", i + 1, fmt_float(*p));
    }
    out
}

/// Reduce a point for serialization (periodic coordinates to [0, 2π)).
pub fn point_csv_row(point: &ConfigPoint) -> String {
    point
        .reduced_coords()
        .iter()
        .map(|x| fmt_float(*x))
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::TimeGrid;
    use nalgebra::DVector;

    #[test]
    fn float_format_round_trips() {
        for x in [1.0, -0.1, 3.25e-17, 1234.5678901234567, f64::MIN_POSITIVE] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn path_csv_has_metadata_header_and_rows() {
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let path = Path {
            grid,
            states: vec![
                DVector::from_row_slice(&[0.0, 7.0]),
                DVector::from_row_slice(&[0.5, 7.5]),
                DVector::from_row_slice(&[1.0, 8.0]),
            ],
            exploded_at: None,
            path_seed: 9,
        };
        let csv = path_csv(
            &path,
            &[false, true],
            &[("seed".into(), "9".into())],
        );
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# seed: 9");
        assert_eq!(lines[1], "t,q1,q2,exploded");
        assert_eq!(lines.len(), 5);
        // q2 is periodic: 8.0 reduces to 8 − 2π
        assert!(lines[4].contains(&fmt_float(8.0 - std::f64::consts::TAU)));
    }
}
