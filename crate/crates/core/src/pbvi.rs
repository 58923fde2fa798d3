//! Point-based value iteration with α-vectors.
//!
//! One backup over a belief set `B`:
//! 1. project every α of the previous set through each (action, observation),
//! 2. for each belief and action, cross-sum the best projection per
//!    observation onto the immediate reward vector,
//! 3. keep the best action's vector per belief.
//!
//! Candidates are enumerated actions ascending, observations ascending,
//! previous vectors in set order; every argmax keeps the lowest index on
//! ties. The distributional solver uses the same order.

use crate::model::{Belief, Pomdp};
use crate::solver::{self, argmax_first, Backup, Iteration, Solution, SolveOptions};

/// Per-state expected return of one conditional plan, tagged with its
/// first action.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    pub values: Vec<f64>,
    pub action: usize,
}

impl AlphaVector {
    pub fn new(values: Vec<f64>, action: usize) -> Self {
        Self { values, action }
    }

    pub fn zero(num_states: usize, action: usize) -> Self {
        Self::new(vec![0.0; num_states], action)
    }

    pub fn dot(&self, b: &Belief) -> f64 {
        b.dot(&self.values)
    }
}

/// The value function `V(b) = max_α α·b` as a deduplicated list of α-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSet {
    alphas: Vec<AlphaVector>,
}

impl ValueSet {
    /// Drops exact duplicates, keeping first occurrences in order.
    pub fn new(alphas: Vec<AlphaVector>) -> Self {
        let mut out: Vec<AlphaVector> = Vec::with_capacity(alphas.len());
        for a in alphas {
            if !out.contains(&a) {
                out.push(a);
            }
        }
        Self { alphas: out }
    }

    /// Keeps the vectors as given, duplicates included.
    pub fn from_vectors(alphas: Vec<AlphaVector>) -> Self {
        Self { alphas }
    }

    /// The single all-zero vector tagged with action 0.
    pub fn zero(num_states: usize) -> Self {
        Self::new(vec![AlphaVector::zero(num_states, 0)])
    }

    pub fn alphas(&self) -> &[AlphaVector] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Index of the maximizing vector at `b` and its value.
    pub fn best(&self, b: &Belief) -> (usize, f64) {
        argmax_first(self.alphas.iter().map(|a| a.dot(b))).expect("value set is empty")
    }

    /// `(max_α α·b, action of the maximizer)`.
    pub fn value_at(&self, b: &Belief) -> (f64, usize) {
        let (i, v) = self.best(b);
        (v, self.alphas[i].action)
    }
}

/// `Γ^{a,*}` and `Γ^{a,o'}` from one set of α-vectors.
#[derive(Debug, Clone)]
pub struct Projections {
    /// `reward[a][s] = R(s, a)`
    pub reward: Vec<Vec<f64>>,
    /// `by_obs[a][o][i][s] = γ Σ_{s'} T(s,a,s') Ω(o|s',a) α_i(s')`
    pub by_obs: Vec<Vec<Vec<Vec<f64>>>>,
}

pub fn project_alpha(model: &Pomdp, prev: &ValueSet) -> Projections {
    assert!(!prev.is_empty(), "cannot project an empty value set");
    let (ns, na, no) = (model.num_states(), model.num_actions(), model.num_obs());
    let gamma = model.discount();
    let reward = (0..na)
        .map(|a| (0..ns).map(|s| model.reward(s, a)).collect())
        .collect();
    let by_obs = (0..na)
        .map(|a| {
            (0..no)
                .map(|o| {
                    prev.alphas()
                        .iter()
                        .map(|alpha| {
                            (0..ns)
                                .map(|s| {
                                    let cont: f64 = (0..ns)
                                        .map(|next| {
                                            model.branch_weight(s, a, next, o) * alpha.values[next]
                                        })
                                        .sum();
                                    gamma * cont
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Projections { reward, by_obs }
}

/// `Γ_b^a = Γ^{a,*} + Σ_{o'} argmax_{α ∈ Γ^{a,o'}} α·b`.
pub fn cross_sum_best(proj: &Projections, b: &Belief, a: usize) -> AlphaVector {
    let mut values = proj.reward[a].clone();
    for candidates in &proj.by_obs[a] {
        let (best, _) =
            argmax_first(candidates.iter().map(|c| b.dot(c))).expect("no projected candidates");
        for (acc, v) in values.iter_mut().zip(&candidates[best]) {
            *acc += v;
        }
    }
    AlphaVector::new(values, a)
}

/// The best action's cross-sum at one belief.
pub fn backup_belief(model: &Pomdp, proj: &Projections, b: &Belief) -> AlphaVector {
    let per_action: Vec<AlphaVector> = (0..model.num_actions())
        .map(|a| cross_sum_best(proj, b, a))
        .collect();
    let (best, _) = argmax_first(per_action.iter().map(|v| v.dot(b))).expect("no actions");
    per_action.into_iter().nth(best).unwrap()
}

pub fn backup(model: &Pomdp, prev: &ValueSet, beliefs: &[Belief]) -> ValueSet {
    assert!(!beliefs.is_empty(), "belief set is empty");
    let proj = project_alpha(model, prev);
    ValueSet::new(
        beliefs
            .iter()
            .map(|b| backup_belief(model, &proj, b))
            .collect(),
    )
}

/// [`Backup`] adaptor for the shared iteration driver.
#[derive(Debug, Clone, Copy)]
pub struct PbviBackup<'a> {
    pub model: &'a Pomdp,
    pub beliefs: &'a [Belief],
}

impl Backup for PbviBackup<'_> {
    type Set = ValueSet;

    fn initial(&self) -> ValueSet {
        ValueSet::zero(self.model.num_states())
    }

    fn backup(&self, prev: &ValueSet) -> ValueSet {
        backup(self.model, prev, self.beliefs)
    }

    fn values(&self, set: &ValueSet) -> Vec<f64> {
        self.beliefs.iter().map(|b| set.value_at(b).0).collect()
    }
}

pub fn iteration<'a>(model: &'a Pomdp, beliefs: &'a [Belief]) -> Iteration<PbviBackup<'a>> {
    Iteration::new(PbviBackup { model, beliefs })
}

/// Iterates backups from the zero vector until the residual over `beliefs`
/// drops to `opts.epsilon` or `opts.max_iters` backups have run.
pub fn solve(model: &Pomdp, beliefs: &[Belief], opts: &SolveOptions) -> Solution<ValueSet> {
    iteration(model, beliefs).run(opts)
}

/// Residual between two value sets over `beliefs`.
pub fn residual(prev: &ValueSet, next: &ValueSet, beliefs: &[Belief]) -> f64 {
    let a: Vec<f64> = beliefs.iter().map(|b| prev.value_at(b).0).collect();
    let b: Vec<f64> = beliefs.iter().map(|b| next.value_at(b).0).collect();
    solver::max_abs_change(&a, &b)
}
