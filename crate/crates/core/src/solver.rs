//! Iteration driver shared by the scalar and distributional solvers.
//!
//! Both solvers stop on the same statistic: the largest absolute change of
//! the (expected) value over the fixed belief set between two successive
//! backups. The iteration count includes the backup whose residual passes.

/// One point-based backup operator over a fixed belief set.
pub trait Backup {
    type Set: Clone;

    /// The set the iteration starts from.
    fn initial(&self) -> Self::Set;

    fn backup(&self, prev: &Self::Set) -> Self::Set;

    /// Value of `set` at every belief of the belief set, in order.
    fn values(&self, set: &Self::Set) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub epsilon: f64,
    pub max_iters: usize,
}

impl SolveOptions {
    pub fn new(epsilon: f64, max_iters: usize) -> Self {
        assert!(epsilon > 0.0, "epsilon must be positive");
        Self { epsilon, max_iters }
    }
}

/// Result of a run. `converged == false` is the non-convergence flag: the
/// iteration limit was reached before the residual fell to epsilon.
#[derive(Debug, Clone)]
pub struct Solution<S> {
    pub set: S,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Stepwise driver. Keeps the latest set and its values at the beliefs.
#[derive(Debug, Clone)]
pub struct Iteration<B: Backup> {
    backup: B,
    current: B::Set,
    values: Vec<f64>,
    residuals: Vec<f64>,
}

impl<B: Backup> Iteration<B> {
    pub fn new(backup: B) -> Self {
        let current = backup.initial();
        let values = backup.values(&current);
        Self {
            backup,
            current,
            values,
            residuals: Vec::new(),
        }
    }

    /// Performs one backup and returns its residual.
    pub fn step(&mut self) -> f64 {
        let next = self.backup.backup(&self.current);
        let values = self.backup.values(&next);
        let residual = max_abs_change(&self.values, &values);
        self.current = next;
        self.values = values;
        self.residuals.push(residual);
        residual
    }

    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn last_residual(&self) -> Option<f64> {
        self.residuals.last().copied()
    }

    pub fn has_converged(&self, epsilon: f64) -> bool {
        self.last_residual().is_some_and(|r| r <= epsilon)
    }

    /// Converged, or out of iterations.
    pub fn is_finished(&self, opts: &SolveOptions) -> bool {
        self.has_converged(opts.epsilon) || self.iterations() >= opts.max_iters
    }

    pub fn current(&self) -> &B::Set {
        &self.current
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn backup_operator(&self) -> &B {
        &self.backup
    }

    pub fn run(mut self, opts: &SolveOptions) -> Solution<B::Set> {
        while !self.is_finished(opts) {
            self.step();
        }
        self.into_solution(opts.epsilon)
    }

    pub fn into_solution(self, epsilon: f64) -> Solution<B::Set> {
        let converged = self.has_converged(epsilon);
        Solution {
            set: self.current,
            iterations: self.residuals.len(),
            residuals: self.residuals,
            converged,
        }
    }
}

pub(crate) fn max_abs_change(prev: &[f64], next: &[f64]) -> f64 {
    prev.iter()
        .zip(next)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Index of the first maximum; later entries must be strictly larger to win.
pub(crate) fn argmax_first(values: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best
}
