//! CSV and JSON artifacts.
//!
//! Floats are written in shortest round-trip form, so a field exported and
//! read back is bit-identical. Exterior nodes are not written.

use std::io::{BufRead, Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::dpp_solver::{ProbeTable, ValueField};
use crate::game_engine::{DriftReport, EpisodeRecord};
use crate::geometry::{GeometryError, NodeClass, SpaceTimeLattice};
use crate::problem_data::Problem;
use crate::validation::{ComparisonReport, ConvergenceTable, ModulusReport};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("malformed input at record {record}: {reason}")]
    Format { record: usize, reason: String },
}

const AXES: [&str; 3] = ["x0", "x1", "x2"];

/// Writes `node, level, time, class, x0[, x1, x2], value`, one row per
/// non-exterior node and level.
pub fn write_field_csv<W: Write>(field: &ValueField, out: W) -> Result<(), IoError> {
    let lattice = field.lattice();
    let dim = lattice.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["node", "level", "time", "class"];
    header.extend_from_slice(&AXES[..dim]);
    header.push("value");
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for level in 0..lattice.level_count() {
        let t = lattice.time(level);
        for node in lattice.active_nodes() {
            row.clear();
            row.push(node.to_string());
            row.push(level.to_string());
            row.push(t.to_string());
            row.push(lattice.class(node).as_str().to_string());
            let x = lattice.coords(node);
            row.extend(x.as_slice().iter().map(|c| c.to_string()));
            row.push(field.get(node, level).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`] onto the lattice of
/// `problem` with spacing `h`.
pub fn read_field_csv<R: Read>(input: R, problem: &Problem, h: f64) -> Result<ValueField, IoError> {
    let lattice = SpaceTimeLattice::new(problem.domain.clone(), problem.params.eps, h, problem.params.t_final)?;
    let n = lattice.node_count();
    let dim = lattice.dim();
    let mut values = vec![f64::NAN; n * lattice.level_count()];
    let mut seen = vec![false; values.len()];
    let mut r = csv::Reader::from_reader(input);
    let value_col = 4 + dim;
    for (record, row) in r.records().enumerate() {
        let row = row?;
        let bad = |reason: String| IoError::Format { record, reason };
        if row.len() != value_col + 1 {
            return Err(bad(format!("expected {} columns, found {}", value_col + 1, row.len())));
        }
        let node: usize = row[0].parse().map_err(|e| bad(format!("node: {e}")))?;
        let level: usize = row[1].parse().map_err(|e| bad(format!("level: {e}")))?;
        if node >= n || level >= lattice.level_count() {
            return Err(bad(format!("node {node} / level {level} outside the lattice")));
        }
        if lattice.class(node) == NodeClass::Exterior || lattice.class(node).as_str() != &row[3] {
            return Err(bad(format!("class {} does not match node {node}", &row[3])));
        }
        let value: f64 = row[value_col].parse().map_err(|e| bad(format!("value: {e}")))?;
        let idx = level * n + node;
        if seen[idx] {
            return Err(bad(format!("duplicate node {node} at level {level}")));
        }
        seen[idx] = true;
        values[idx] = value;
    }
    for level in 0..lattice.level_count() {
        if let Some(node) = lattice.active_nodes().find(|&node| !seen[level * n + node]) {
            return Err(IoError::Format {
                record: 0,
                reason: format!("missing node {node} at level {level}"),
            });
        }
    }
    Ok(ValueField::from_values(lattice, problem.clone(), values))
}

/// One JSON object per line.
pub fn write_episodes_jsonl<W: Write>(episodes: &[EpisodeRecord], mut out: W) -> Result<(), IoError> {
    for e in episodes {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_episodes_jsonl<R: BufRead>(input: R) -> Result<Vec<EpisodeRecord>, IoError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_rows<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `eps, h, error`. Runtimes are left out so reruns compare byte for byte.
pub fn write_convergence_csv<W: Write>(table: &ConvergenceTable, out: W) -> Result<(), IoError> {
    write_rows(
        out,
        &["eps", "h", "error"],
        table
            .rows
            .iter()
            .map(|r| vec![r.eps.to_string(), r.h.to_string(), r.error.to_string()]),
    )
}

/// Long format for plotting: `series, eps, error`.
pub fn write_convergence_long_csv<W: Write>(table: &ConvergenceTable, out: W) -> Result<(), IoError> {
    write_rows(
        out,
        &["series", "eps", "error"],
        table
            .rows
            .iter()
            .map(|r| vec![format!("p={}", table.p), r.eps.to_string(), r.error.to_string()]),
    )
}

/// `eps, h, class, pairs, max_quotient` for each report of a ladder.
pub fn write_modulus_csv<W: Write>(reports: &[ModulusReport], out: W) -> Result<(), IoError> {
    write_rows(
        out,
        &["eps", "h", "class", "pairs", "max_quotient"],
        reports.iter().flat_map(|r| {
            r.classes.iter().map(move |c| {
                vec![
                    r.eps.to_string(),
                    r.h.to_string(),
                    c.class.as_str().to_string(),
                    c.pairs.to_string(),
                    c.max_quotient.to_string(),
                ]
            })
        }),
    )
}

/// `p, n, seed, index, worst_margin, passed`.
pub fn write_comparison_csv<W: Write>(reports: &[ComparisonReport], out: W) -> Result<(), IoError> {
    write_rows(
        out,
        &["p", "n", "seed", "index", "worst_margin", "passed"],
        reports.iter().flat_map(|r| {
            r.pairs.iter().map(move |o| {
                vec![
                    r.p.to_string(),
                    r.n.to_string(),
                    r.seed.to_string(),
                    o.index.to_string(),
                    o.worst_margin.to_string(),
                    o.passed.to_string(),
                ]
            })
        }),
    )
}

/// `eps, h, scaled, target_lo, target_hi, gap, rel_gap`.
pub fn write_probe_csv<W: Write>(table: &ProbeTable, out: W) -> Result<(), IoError> {
    write_rows(
        out,
        &["eps", "h", "scaled", "target_lo", "target_hi", "gap", "rel_gap"],
        table.rows.iter().map(|r| {
            vec![
                r.eps.to_string(),
                r.h.to_string(),
                r.scaled.to_string(),
                r.target_lo.to_string(),
                r.target_hi.to_string(),
                r.gap.to_string(),
                r.rel_gap.to_string(),
            ]
        }),
    )
}

/// `step, count, mean, std_error, mean_sq, std_error_sq`.
pub fn write_drift_csv<W: Write>(report: &DriftReport, out: W) -> Result<(), IoError> {
    write_rows(
        out,
        &["step", "count", "mean", "std_error", "mean_sq", "std_error_sq"],
        report.steps.iter().map(|s| {
            vec![
                s.step.to_string(),
                s.count.to_string(),
                s.mean.to_string(),
                s.std_error.to_string(),
                s.mean_sq.to_string(),
                s.std_error_sq.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpp_solver::solve_time_marching;
    use crate::game_engine::{simulate_episodes, GameSetup, Stationary, StoppingRule};
    use crate::geometry::{Domain, Point};
    use crate::problem_data::{BoundaryData, Expr, GameParameters, Obstacle};

    fn problem(n: usize) -> Problem {
        let domain = if n == 1 {
            Domain::interval(-1.0, 1.0).unwrap()
        } else {
            Domain::ball(Point::zeros(2), 1.0).unwrap()
        };
        Problem::new(
            GameParameters::new(3.0, n, 0.2, 0.06).unwrap(),
            domain,
            BoundaryData {
                f: Expr::Trig {
                    amplitude: 1.0 / 3.0,
                    wave: vec![0.7, 0.3],
                    phase: 0.1,
                    decay: 1.0,
                },
                lipschitz: 2.0,
            },
            Obstacle {
                psi: Expr::constant(-1.0),
                lipschitz: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn field_round_trip_is_bit_exact() {
        for n in [1, 2] {
            let p = problem(n);
            let u = solve_time_marching(&p, 0.05).unwrap();
            let mut buf = Vec::new();
            write_field_csv(&u, &mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.starts_with("node,level,time,class,x0"));
            let back = read_field_csv(buf.as_slice(), &p, 0.05).unwrap();
            for (a, b) in u.values().iter().zip(back.values()) {
                assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }

    #[test]
    fn truncated_field_rejected() {
        let p = problem(1);
        let u = solve_time_marching(&p, 0.05).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&u, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_field_csv(cut.as_bytes(), &p, 0.05), Err(IoError::Format { .. })));
    }

    #[test]
    fn episodes_round_trip() {
        let p = problem(1);
        let setup = GameSetup {
            problem: &p,
            start: Point::new(&[0.1]),
            start_level: 3,
            player_one: &Stationary,
            player_two: &Stationary,
            rule: StoppingRule::BoundaryOnly,
        };
        let eps = simulate_episodes(&setup, 20, 5, true).unwrap();
        let mut buf = Vec::new();
        write_episodes_jsonl(&eps, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 20);
        let back = read_episodes_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, eps);
        assert!(String::from_utf8(buf).unwrap().contains("\"schema\":\"tugobs.episode/1\""));
    }
}
