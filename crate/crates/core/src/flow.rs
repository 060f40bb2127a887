//! Shared flow configuration, trajectory records, and the CSV time-series
//! format used by both labs.

use crate::lattice::Scheme;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FlowConfig {
    pub max_steps: usize,
    /// convergence tolerance on `sup |Q - Id|`
    pub tol_sup_q: f64,
    /// initial step is `step_factor * min(h)^2`
    pub step_factor: f64,
    pub max_halvings: usize,
    /// Armijo acceptance fraction of the predicted decrease
    pub armijo_c1: f64,
    /// growth applied after a step accepted without halving
    pub step_growth: f64,
    /// cap on step growth, as a multiple of the initial step
    pub step_cap_factor: f64,
    pub scheme: Scheme,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            max_steps: 20_000,
            tol_sup_q: 1e-6,
            step_factor: 0.2,
            max_halvings: 60,
            armijo_c1: 0.1,
            step_growth: 1.3,
            step_cap_factor: 64.0,
            scheme: Scheme::Centered2,
        }
    }
}

/// Extra per-step diagnostics recorded by the connection lab.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnExtras {
    pub bianchi_res: f64,
    pub sign_flips: i64,
    pub interior_volume: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajRow {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub vol: f64,
    pub sup_q_dev: f64,
    pub min_eig_q: f64,
    pub step_size: f64,
    pub ls_halvings: usize,
    pub extras: Option<ConnExtras>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlowOutcome {
    Converged,
    StepBudgetExhausted,
    Stationary,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub rows: Vec<TrajRow>,
    pub outcome: FlowOutcome,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv: {0}")]
    Malformed(String),
}

const BASE_COLUMNS: &str = "step,t,F,vol,sup_Q_dev,min_eig_Q,step_size,ls_halvings";
const CONN_COLUMNS: &str = ",bianchi_res,sign_flips,interior_volume";

impl Trajectory {
    pub fn final_row(&self) -> &TrajRow {
        self.rows.last().expect("trajectory has at least one row")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), CsvError> {
        let with_extras = self.rows.iter().any(|r| r.extras.is_some());
        if with_extras {
            writeln!(w, "{BASE_COLUMNS}{CONN_COLUMNS}")?;
        } else {
            writeln!(w, "{BASE_COLUMNS}")?;
        }
        for r in &self.rows {
            write!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.step, r.t, r.energy, r.vol, r.sup_q_dev, r.min_eig_q, r.step_size, r.ls_halvings
            )?;
            if with_extras {
                let e = r.extras.unwrap_or(ConnExtras {
                    bianchi_res: 0.0,
                    sign_flips: 0,
                    interior_volume: 0.0,
                });
                write!(w, ",{},{},{}", e.bianchi_res, e.sign_flips, e.interior_volume)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<TrajRow>, CsvError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| CsvError::Malformed("empty file".into()))??;
        let with_extras = if header == BASE_COLUMNS {
            false
        } else if header == format!("{BASE_COLUMNS}{CONN_COLUMNS}") {
            true
        } else {
            return Err(CsvError::Malformed(format!("unknown header: {header}")));
        };
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let expect = if with_extras { 11 } else { 8 };
            if parts.len() != expect {
                return Err(CsvError::Malformed(format!(
                    "row has {} fields, expected {expect}",
                    parts.len()
                )));
            }
            let f = |s: &str| -> Result<f64, CsvError> {
                s.parse()
                    .map_err(|_| CsvError::Malformed(format!("bad number: {s}")))
            };
            let u = |s: &str| -> Result<usize, CsvError> {
                s.parse()
                    .map_err(|_| CsvError::Malformed(format!("bad integer: {s}")))
            };
            rows.push(TrajRow {
                step: u(parts[0])?,
                t: f(parts[1])?,
                energy: f(parts[2])?,
                vol: f(parts[3])?,
                sup_q_dev: f(parts[4])?,
                min_eig_q: f(parts[5])?,
                step_size: f(parts[6])?,
                ls_halvings: u(parts[7])?,
                extras: if with_extras {
                    Some(ConnExtras {
                        bianchi_res: f(parts[8])?,
                        sign_flips: parts[9]
                            .parse()
                            .map_err(|_| CsvError::Malformed("bad integer".into()))?,
                        interior_volume: f(parts[10])?,
                    })
                } else {
                    None
                },
            });
        }
        if rows.is_empty() {
            return Err(CsvError::Malformed("no data rows".into()));
        }
        Ok(rows)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySummary {
    pub rows: usize,
    pub monotone: bool,
    pub first_violation: Option<usize>,
    /// decay rate of `sup |Q - Id|`: minus the slope of a log-linear fit
    pub decay_rate: Option<f64>,
    pub fit_r2: Option<f64>,
    /// final `F - 3 vol` (the energy gap over the pointwise bound)
    pub energy_gap: f64,
    pub final_sup_q_dev: f64,
}

/// Monotonicity verdict, log-linear convergence rate, and energy gap of a
/// recorded trajectory.
pub fn summarize(rows: &[TrajRow]) -> TrajectorySummary {
    let mut monotone = true;
    let mut first_violation = None;
    for w in rows.windows(2) {
        if w[1].energy > w[0].energy * (1.0 + 1e-14) + 1e-300 {
            monotone = false;
            first_violation = Some(w[1].step);
            break;
        }
    }
    // least-squares fit of ln(sup_q_dev) against t
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sup_q_dev > 0.0)
        .map(|r| (r.t, r.sup_q_dev.ln()))
        .collect();
    let (decay_rate, fit_r2) = if pts.len() >= 3 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() > 1e-300 {
            let slope = (n * sxy - sx * sy) / denom;
            let intercept = (sy - slope * sx) / n;
            let ss_tot: f64 = pts.iter().map(|p| (p.1 - sy / n).powi(2)).sum();
            let ss_res: f64 = pts
                .iter()
                .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
                .sum();
            let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
            (Some(-slope), Some(r2))
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };
    let last = rows.last().expect("nonempty rows");
    TrajectorySummary {
        rows: rows.len(),
        monotone,
        first_violation,
        decay_rate,
        fit_r2,
        energy_gap: last.energy - 3.0 * last.vol,
        final_sup_q_dev: last.sup_q_dev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: usize, t: f64, e: f64, dev: f64) -> TrajRow {
        TrajRow {
            step,
            t,
            energy: e,
            vol: 1.0,
            sup_q_dev: dev,
            min_eig_q: 0.9,
            step_size: 1e-3,
            ls_halvings: 0,
            extras: None,
        }
    }

    #[test]
    fn csv_roundtrip() {
        let traj = Trajectory {
            rows: vec![row(0, 0.0, 3.5, 0.1), row(1, 1e-3, 3.2, 0.05)],
            outcome: FlowOutcome::Converged,
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let rows = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, traj.rows);
    }

    #[test]
    fn summary_monotonicity_and_rate() {
        let rows: Vec<TrajRow> = (0..50)
            .map(|k| {
                let t = k as f64 * 0.1;
                row(k, t, 3.0 + (-2.0 * t).exp(), 0.1 * (-1.5 * t).exp())
            })
            .collect();
        let s = summarize(&rows);
        assert!(s.monotone);
        let rate = s.decay_rate.unwrap();
        assert!((rate - 1.5).abs() < 1e-6, "rate {rate}");
        assert!(s.fit_r2.unwrap() > 0.999999);

        let mut bad = rows.clone();
        bad[10].energy = 10.0;
        let s2 = summarize(&bad);
        assert!(!s2.monotone);
        assert_eq!(s2.first_violation, Some(10));
    }
}
