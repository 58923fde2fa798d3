//! Experiment runner: lockstep PBVI/DPBVI comparison, traces and reports.

mod policy;
mod trace;

pub use policy::{
    export_policy, import_policy, Evaluation, Policy, PolicyKind, POLICY_FORMAT_VERSION,
};
pub use trace::{export_trace, import_trace, read_trace, write_trace, TRACE_HEADER};

use crate::dist::SupportGrid;
use crate::dpbvi::{self, PsiSet};
use crate::model::{Belief, Pomdp};
use crate::pbvi::{self, ValueSet};
use crate::solver::{Backup, Iteration, SolveOptions};
use serde::Serialize;
use std::io;
use std::path::Path;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Floor on the relative-error denominator.
pub const REL_ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub max_rel_error: f64,
    pub residual_pbvi: f64,
    pub residual_dpbvi: f64,
}

/// Per-iteration comparison of the two solvers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTrace {
    rows: Vec<TraceRow>,
}

impl ErrorTrace {
    /// Checks that iterations run 1, 2, … and every value is finite and
    /// nonnegative.
    pub fn new(rows: Vec<TraceRow>) -> Result<Self, HarnessError> {
        for (i, row) in rows.iter().enumerate() {
            if row.iteration != i + 1 {
                return Err(HarnessError::Format(format!(
                    "row {} has iteration {}, expected {}",
                    i + 1,
                    row.iteration,
                    i + 1
                )));
            }
            for (name, v) in [
                ("max_rel_error", row.max_rel_error),
                ("residual_pbvi", row.residual_pbvi),
                ("residual_dpbvi", row.residual_dpbvi),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(HarnessError::Format(format!(
                        "iteration {}: {name} = {v} is not finite and nonnegative",
                        row.iteration
                    )));
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmReport {
    pub algorithm: String,
    pub iterations: usize,
    pub seconds: f64,
    pub converged: bool,
    pub final_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridReport {
    pub z_min: f64,
    pub z_max: f64,
    pub num_atoms: usize,
}

impl From<SupportGrid> for GridReport {
    fn from(g: SupportGrid) -> Self {
        Self {
            z_min: g.z_min(),
            z_max: g.z_max(),
            num_atoms: g.num_atoms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub environment: String,
    pub epsilon: f64,
    pub max_iters: usize,
    pub algorithms: Vec<AlgorithmReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridReport>,
}

impl RunReport {
    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|a| a.algorithm == name)
    }

    pub fn all_converged(&self) -> bool {
        self.algorithms.iter().all(|a| a.converged)
    }
}

fn rel_error_values(pbvi_values: &[f64], dpbvi_values: &[f64]) -> f64 {
    pbvi_values
        .iter()
        .zip(dpbvi_values)
        .map(|(v, g)| (g - v).abs() / v.abs().max(REL_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// Largest relative gap between the expected values of `psis` and the
/// values of `alphas` over `beliefs`.
pub fn rel_error(alphas: &ValueSet, psis: &PsiSet, beliefs: &[Belief]) -> f64 {
    let v: Vec<f64> = beliefs.iter().map(|b| alphas.value_at(b).0).collect();
    let g: Vec<f64> = beliefs.iter().map(|b| psis.best(b).1).collect();
    rel_error_values(&v, &g)
}

/// Everything [`compare_run`] produces.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub trace: ErrorTrace,
    pub report: RunReport,
    pub pbvi: ValueSet,
    pub dpbvi: PsiSet,
}

fn timed_step<B: Backup>(it: &mut Iteration<B>, clock: &mut Duration) -> f64 {
    let start = Instant::now();
    let r = it.step();
    *clock += start.elapsed();
    r
}

/// Runs both solvers side by side, one backup each per round, until both
/// have stopped. A solver that has stopped keeps its last residual in the
/// trace while the other continues.
pub fn compare_run(
    env_id: &str,
    model: &Pomdp,
    beliefs: &[Belief],
    grid: SupportGrid,
    opts: &SolveOptions,
) -> Comparison {
    let mut p = pbvi::iteration(model, beliefs);
    let mut d = dpbvi::iteration(model, beliefs, grid);
    let (mut p_time, mut d_time) = (Duration::ZERO, Duration::ZERO);
    let mut rows = Vec::new();
    loop {
        let p_done = p.is_finished(opts);
        let d_done = d.is_finished(opts);
        if p_done && d_done {
            break;
        }
        if !p_done {
            timed_step(&mut p, &mut p_time);
        }
        if !d_done {
            timed_step(&mut d, &mut d_time);
        }
        rows.push(TraceRow {
            iteration: rows.len() + 1,
            max_rel_error: rel_error_values(p.values(), d.values()),
            residual_pbvi: p.last_residual().unwrap_or(0.0),
            residual_dpbvi: d.last_residual().unwrap_or(0.0),
        });
    }
    let report_of = |name: &str, iterations, time: Duration, converged, last| AlgorithmReport {
        algorithm: name.to_string(),
        iterations,
        seconds: time.as_secs_f64(),
        converged,
        final_residual: last,
    };
    let report = RunReport {
        environment: env_id.to_string(),
        epsilon: opts.epsilon,
        max_iters: opts.max_iters,
        algorithms: vec![
            report_of(
                "pbvi",
                p.iterations(),
                p_time,
                p.has_converged(opts.epsilon),
                p.last_residual(),
            ),
            report_of(
                "dpbvi",
                d.iterations(),
                d_time,
                d.has_converged(opts.epsilon),
                d.last_residual(),
            ),
        ],
        grid: Some(grid.into()),
    };
    Comparison {
        trace: ErrorTrace { rows },
        report,
        pbvi: p.current().clone(),
        dpbvi: d.current().clone(),
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::CategoricalMeasure;
    use crate::dpbvi::PsiVector;
    use crate::envs;
    use crate::pbvi::AlphaVector;

    fn constant_pair(v: f64, g: f64) -> (ValueSet, PsiSet, Vec<Belief>) {
        let grid = SupportGrid::new(0.0, 4.0, 5).unwrap();
        let alphas = ValueSet::new(vec![AlphaVector::new(vec![v, v], 0)]);
        let psi = PsiVector::new(vec![CategoricalMeasure::dirac(grid, g); 2], 0);
        let beliefs = vec![Belief::one_hot(2, 0), Belief::uniform(2)];
        (alphas, PsiSet::new(vec![psi]), beliefs)
    }

    #[test]
    fn identical_values_have_zero_error() {
        let (a, p, b) = constant_pair(2.0, 2.0);
        assert_eq!(rel_error(&a, &p, &b), 0.0);
    }

    #[test]
    fn relative_gap_arithmetic() {
        assert!((rel_error_values(&[1.0, 1.0], &[1.0 + 1e-7, 1.0]) - 1e-7).abs() < 1e-15);
        assert_eq!(rel_error_values(&[0.0], &[1e-12]), 1.0);
        let (a, p, b) = constant_pair(2.0, 3.0);
        assert!((rel_error(&a, &p, &b) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trace_validation() {
        let row = |i| TraceRow {
            iteration: i,
            max_rel_error: 0.0,
            residual_pbvi: 1.0,
            residual_dpbvi: 1.0,
        };
        assert!(ErrorTrace::new(vec![row(1), row(2)]).is_ok());
        assert!(ErrorTrace::new(vec![row(2)]).is_err());
        let mut bad = row(1);
        bad.max_rel_error = f64::NAN;
        assert!(ErrorTrace::new(vec![bad]).is_err());
    }

    #[test]
    fn doorkey_lockstep_matches_standalone_runs() {
        let (m, b) = envs::build_doorkey();
        let grid = SupportGrid::new(0.0, 5.0, 51).unwrap();
        let opts = SolveOptions::new(1e-3, 100);
        let c = compare_run("doorkey", &m, &b, grid, &opts);
        let alone = pbvi::solve(&m, &b, &opts);
        let alone_d = dpbvi::solve(&m, &b, grid, &opts);
        assert_eq!(
            c.report.algorithm("pbvi").unwrap().iterations,
            alone.iterations
        );
        assert_eq!(
            c.report.algorithm("dpbvi").unwrap().iterations,
            alone_d.iterations
        );
        assert_eq!(c.trace.len(), 11);
        assert!(c.report.all_converged());
        let again = compare_run("doorkey", &m, &b, grid, &opts);
        assert_eq!(again.trace, c.trace);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
    }
}
