//! Distributional point-based value iteration with ψ-vectors.
//!
//! A ψ-vector keeps one categorical return distribution per state. A backup
//! runs four steps per belief set:
//! 1. per (action, observation, previous ψ), build for every state `s` the
//!    subnormalized measure `Σ_{s'} T(s,a,s') Ω(o'|s',a) · (R(s,a) + γ ψ^{s'})`,
//! 2. project it onto the shared grid (once per candidate and state),
//! 3. for each belief and action, sum over observations the candidate whose
//!    belief mixture has the largest mean,
//! 4. keep the action whose summed vector has the largest mean at the belief.
//!
//! Selection is risk-neutral throughout and uses the same enumeration order
//! and lowest-index tie rule as [`crate::pbvi`], so both solvers make the
//! same choices whenever their expected values agree.

use crate::dist::{
    affine, mix, project_categorical, AtomicMeasure, CategoricalMeasure, Measure, Projector,
    SupportGrid,
};
use crate::model::{Belief, Pomdp};
use crate::pbvi::{AlphaVector, ValueSet};
use crate::solver::{argmax_first, Backup, Iteration, Solution, SolveOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct PsiVector {
    dists: Vec<CategoricalMeasure>,
    pub action: usize,
}

impl PsiVector {
    pub fn new(dists: Vec<CategoricalMeasure>, action: usize) -> Self {
        assert!(!dists.is_empty(), "ψ-vector needs at least one state");
        let grid = dists[0].grid();
        assert!(
            dists.iter().all(|d| d.grid() == grid),
            "ψ-vector components must share one grid"
        );
        Self { dists, action }
    }

    /// Every state's distribution is a unit mass at 0 (projected onto the grid).
    pub fn zero(num_states: usize, grid: SupportGrid, action: usize) -> Self {
        Self::new(
            vec![CategoricalMeasure::dirac(grid, 0.0); num_states],
            action,
        )
    }

    pub fn dists(&self) -> &[CategoricalMeasure] {
        &self.dists
    }

    pub fn grid(&self) -> &SupportGrid {
        self.dists[0].grid()
    }

    pub fn num_states(&self) -> usize {
        self.dists.len()
    }

    /// `E⟨Ψ, b⟩ = Σ_s b(s) E[ψ^s]`.
    pub fn expected(&self, b: &Belief) -> f64 {
        b.probs()
            .iter()
            .zip(&self.dists)
            .map(|(p, d)| p * d.mean())
            .sum()
    }

    /// The α-vector `E[Ψ]`.
    pub fn expectation_image(&self) -> AlphaVector {
        AlphaVector::new(self.dists.iter().map(|d| d.mean()).collect(), self.action)
    }

    /// `⟨Ψ, b⟩` kept on the grid.
    pub fn mixture_on_grid(&self, b: &Belief) -> CategoricalMeasure {
        CategoricalMeasure::mixture(*self.grid(), b.probs().iter().copied().zip(&self.dists))
    }

    /// State-wise sum of two candidates.
    fn sum(&self, other: &PsiVector) -> PsiVector {
        PsiVector {
            dists: self
                .dists
                .iter()
                .zip(&other.dists)
                .map(|(a, b)| a.sum(b))
                .collect(),
            action: self.action,
        }
    }
}

/// `⟨Ψ, b⟩`: the mixture of the per-state distributions weighted by `b`.
pub fn psi_inner(psi: &PsiVector, b: &Belief) -> AtomicMeasure {
    assert_eq!(psi.num_states(), b.len(), "belief dimension mismatch");
    mix(b.probs().iter().copied().zip(&psi.dists))
}

/// What a ψ-set says about one belief.
#[derive(Debug, Clone)]
pub struct PsiValue {
    pub distribution: AtomicMeasure,
    pub value: f64,
    pub action: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiSet {
    psis: Vec<PsiVector>,
}

impl PsiSet {
    /// Drops exact duplicates, keeping first occurrences in order.
    pub fn new(psis: Vec<PsiVector>) -> Self {
        let mut out: Vec<PsiVector> = Vec::with_capacity(psis.len());
        for p in psis {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Self { psis: out }
    }

    /// One vector, action 0, every state a unit mass at zero.
    pub fn initial(num_states: usize, grid: SupportGrid) -> Self {
        Self::new(vec![PsiVector::zero(num_states, grid, 0)])
    }

    pub fn psis(&self) -> &[PsiVector] {
        &self.psis
    }

    pub fn len(&self) -> usize {
        self.psis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psis.is_empty()
    }

    /// Index and expected value of the best vector at `b`.
    pub fn best(&self, b: &Belief) -> (usize, f64) {
        argmax_first(self.psis.iter().map(|p| p.expected(b))).expect("ψ-set is empty")
    }

    pub fn value_at(&self, b: &Belief) -> PsiValue {
        let (index, value) = self.best(b);
        let psi = &self.psis[index];
        PsiValue {
            distribution: psi_inner(psi, b),
            value,
            action: psi.action,
            index,
        }
    }

    /// `{E[Ψ] : Ψ ∈ Γ}` without deduplication, so indices line up.
    pub fn expectation_image(&self) -> ValueSet {
        ValueSet::from_vectors(self.psis.iter().map(|p| p.expectation_image()).collect())
    }
}

/// The exact (unprojected) state-`s` component of the (a, o') candidate
/// built from `psi`: `Σ_{s'} T(s,a,s') Ω(o'|s',a) · affine(ψ^{s'}, γ, R(s,a))`.
pub fn candidate_component(
    model: &Pomdp,
    psi: &PsiVector,
    a: usize,
    o: usize,
    s: usize,
) -> AtomicMeasure {
    let reward = model.reward(s, a);
    let shifted: Vec<(f64, AtomicMeasure)> = (0..model.num_states())
        .map(|next| {
            (
                model.branch_weight(s, a, next, o),
                affine(&psi.dists[next], model.discount(), reward),
            )
        })
        .collect();
    mix(shifted.iter().map(|(w, m)| (*w, m)))
}

/// Projected (a, o') candidates, one per vector of `prev`, in order.
///
/// Each component is Π_c of [`candidate_component`]; the atoms are fed
/// straight into the projector instead of being collected first.
pub fn project_psi_ao(
    model: &Pomdp,
    prev: &PsiSet,
    a: usize,
    o: usize,
    grid: SupportGrid,
) -> Vec<PsiVector> {
    assert!(!prev.is_empty(), "cannot project an empty ψ-set");
    let gamma = model.discount();
    prev.psis
        .iter()
        .map(|psi| {
            let dists = (0..model.num_states())
                .map(|s| {
                    let reward = model.reward(s, a);
                    let mut proj = Projector::new(grid);
                    for (next, dist) in psi.dists.iter().enumerate() {
                        let w = model.branch_weight(s, a, next, o);
                        if w == 0.0 {
                            continue;
                        }
                        for atom in dist.atoms().filter(|atom| atom.mass > 0.0) {
                            proj.add(gamma * atom.loc + reward, w * atom.mass);
                        }
                    }
                    proj.finish()
                })
                .collect();
            PsiVector::new(dists, a)
        })
        .collect()
}

/// Slow reference for [`project_psi_ao`]: build each exact component, then
/// project it.
pub fn project_psi_ao_exact(
    model: &Pomdp,
    prev: &PsiSet,
    a: usize,
    o: usize,
    grid: SupportGrid,
) -> Vec<PsiVector> {
    prev.psis
        .iter()
        .map(|psi| {
            let dists = (0..model.num_states())
                .map(|s| project_categorical(&candidate_component(model, psi, a, o, s), grid))
                .collect();
            PsiVector::new(dists, a)
        })
        .collect()
}

/// Per observation, the candidate with the largest expected mixture at `b`,
/// summed state-wise.
pub fn best_combo(candidates_by_obs: &[Vec<PsiVector>], b: &Belief, a: usize) -> PsiVector {
    let mut total: Option<PsiVector> = None;
    for candidates in candidates_by_obs {
        let (best, _) = argmax_first(candidates.iter().map(|c| c.expected(b)))
            .expect("no candidates for an observation");
        let chosen = &candidates[best];
        total = Some(match total {
            None => chosen.clone(),
            Some(acc) => acc.sum(chosen),
        });
    }
    let mut out = total.expect("no observations");
    out.action = a;
    out
}

/// Largest expected mixture over actions; lowest action wins ties.
pub fn select_psi(per_action: Vec<PsiVector>, b: &Belief) -> PsiVector {
    let (best, _) = argmax_first(per_action.iter().map(|p| p.expected(b))).expect("no actions");
    per_action.into_iter().nth(best).unwrap()
}

pub fn backup(model: &Pomdp, prev: &PsiSet, beliefs: &[Belief], grid: SupportGrid) -> PsiSet {
    assert!(!beliefs.is_empty(), "belief set is empty");
    let candidates: Vec<Vec<Vec<PsiVector>>> = (0..model.num_actions())
        .map(|a| {
            (0..model.num_obs())
                .map(|o| project_psi_ao(model, prev, a, o, grid))
                .collect()
        })
        .collect();
    PsiSet::new(
        beliefs
            .iter()
            .map(|b| {
                let per_action = candidates
                    .iter()
                    .enumerate()
                    .map(|(a, by_obs)| best_combo(by_obs, b, a))
                    .collect();
                select_psi(per_action, b)
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct DpbviBackup<'a> {
    pub model: &'a Pomdp,
    pub beliefs: &'a [Belief],
    pub grid: SupportGrid,
}

impl Backup for DpbviBackup<'_> {
    type Set = PsiSet;

    fn initial(&self) -> PsiSet {
        PsiSet::initial(self.model.num_states(), self.grid)
    }

    fn backup(&self, prev: &PsiSet) -> PsiSet {
        backup(self.model, prev, self.beliefs, self.grid)
    }

    fn values(&self, set: &PsiSet) -> Vec<f64> {
        self.beliefs.iter().map(|b| set.best(b).1).collect()
    }
}

pub fn iteration<'a>(
    model: &'a Pomdp,
    beliefs: &'a [Belief],
    grid: SupportGrid,
) -> Iteration<DpbviBackup<'a>> {
    Iteration::new(DpbviBackup {
        model,
        beliefs,
        grid,
    })
}

/// Same stopping rule as [`crate::pbvi::solve`], applied to expected values.
pub fn solve(
    model: &Pomdp,
    beliefs: &[Belief],
    grid: SupportGrid,
    opts: &SolveOptions,
) -> Solution<PsiSet> {
    iteration(model, beliefs, grid).run(opts)
}
