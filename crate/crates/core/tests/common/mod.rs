//! Independent oracles and seeded generators shared by the integration
//! tests and the acceptance target. Nothing here calls into the solvers'
//! backup code; the oracles recompute from the raw model tables.

#![allow(dead_code)]

use dpbvi_core::dist::{
    affine, mix, project_categorical, sup_wasserstein, wasserstein, Atom, AtomicMeasure, BeliefMap,
    Measure, SupportGrid, WassersteinOrder,
};
use dpbvi_core::model::{Belief, Pomdp, PomdpTables};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    // exponential spacings give a uniform draw on the simplex
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn random_belief(rng: &mut impl Rng, n: usize) -> Belief {
    Belief::new(random_simplex(rng, n)).expect("simplex draw is a belief")
}

/// A random valid model. Some rows are made sparse so that impossible
/// observations and exact zeros get exercised.
pub fn random_model(rng: &mut impl Rng) -> Pomdp {
    let ns = rng.random_range(1..=5);
    let na = rng.random_range(1..=4);
    let no = rng.random_range(1..=4);
    let mut t = PomdpTables::zeroed(ns, na, no);
    for s in 0..ns {
        for a in 0..na {
            for (n, p) in sparse_row(rng, ns).into_iter().enumerate() {
                t.set_transition(s, a, n, p);
            }
            t.set_reward(s, a, rng.random_range(-10.0..10.0));
        }
    }
    for a in 0..na {
        for n in 0..ns {
            for (o, p) in sparse_row(rng, no).into_iter().enumerate() {
                t.set_sensor(a, n, o, p);
            }
        }
    }
    t.discount = rng.random_range(0.0..0.999);
    if rng.random_bool(0.5) {
        t.initial_belief = Some(random_belief(rng, ns));
    }
    if rng.random_bool(0.5) {
        t.state_names = (0..ns).map(|i| format!("st{i}")).collect();
        t.action_names = (0..na).map(|i| format!("act-{i}")).collect();
        t.obs_names = (0..no).map(|i| format!("o_{i}")).collect();
    }
    Pomdp::new(t).expect("generated model is valid")
}

fn sparse_row(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    if n > 1 && rng.random_bool(0.3) {
        let mut row = vec![0.0; n];
        row[rng.random_range(0..n)] = 1.0;
        row
    } else {
        random_simplex(rng, n)
    }
}

pub fn random_atomic(rng: &mut impl Rng, lo: f64, hi: f64, max_atoms: usize) -> AtomicMeasure {
    let k = rng.random_range(1..=max_atoms);
    let masses = random_simplex(rng, k);
    AtomicMeasure::new(
        masses
            .into_iter()
            .map(|m| Atom::new(rng.random_range(lo..=hi), m))
            .collect(),
    )
    .expect("random atoms are valid")
}

/// Brute-force point-based backup value at `b`: enumerate every conditional
/// plan (an action plus one previous vector per observation) and keep the
/// best. Works from the raw tables only.
pub fn brute_force_backup_value(model: &Pomdp, prev: &[Vec<f64>], b: &Belief) -> f64 {
    let ns = model.num_states();
    let no = model.num_obs();
    let k = prev.len();
    let plans = k.pow(no as u32);
    let mut best = f64::NEG_INFINITY;
    for a in 0..model.num_actions() {
        for plan in 0..plans {
            let mut choice = plan;
            let mut value = 0.0;
            let picks: Vec<usize> = (0..no)
                .map(|_| {
                    let c = choice % k;
                    choice /= k;
                    c
                })
                .collect();
            for s in 0..ns {
                let mut future = 0.0;
                for (o, &pick) in picks.iter().enumerate() {
                    for (n, v) in prev[pick].iter().enumerate() {
                        future += model.transition(s, a, n) * model.sensor(a, n, o) * v;
                    }
                }
                value += b.probs()[s] * (model.reward(s, a) + model.discount() * future);
            }
            best = best.max(value);
        }
    }
    best
}

/// A plain textbook PBVI written against the raw tables: greedy backup at
/// each belief, no deduplication, lowest index on ties. Returns the value
/// at every belief after `backups` backups from the zero vector.
pub fn reference_pbvi_values(model: &Pomdp, beliefs: &[Belief], backups: usize) -> Vec<f64> {
    let ns = model.num_states();
    let (na, no) = (model.num_actions(), model.num_obs());
    let g = model.discount();
    let mut alphas: Vec<Vec<f64>> = vec![vec![0.0; ns]];
    for _ in 0..backups {
        let mut next = Vec::with_capacity(beliefs.len());
        for b in beliefs {
            let mut best: Option<(f64, Vec<f64>)> = None;
            for a in 0..na {
                let mut vec_a: Vec<f64> = (0..ns).map(|s| model.reward(s, a)).collect();
                for o in 0..no {
                    let mut pick: Option<(f64, Vec<f64>)> = None;
                    for alpha in &alphas {
                        let proj: Vec<f64> = (0..ns)
                            .map(|s| {
                                g * (0..ns)
                                    .map(|n| {
                                        model.transition(s, a, n) * model.sensor(a, n, o) * alpha[n]
                                    })
                                    .sum::<f64>()
                            })
                            .collect();
                        let v = dot(b.probs(), &proj);
                        if pick.as_ref().is_none_or(|(pv, _)| v > *pv) {
                            pick = Some((v, proj));
                        }
                    }
                    let (_, proj) = pick.unwrap();
                    for s in 0..ns {
                        vec_a[s] += proj[s];
                    }
                }
                let v = dot(b.probs(), &vec_a);
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, vec_a));
                }
            }
            next.push(best.unwrap().1);
        }
        alphas = next;
    }
    beliefs
        .iter()
        .map(|b| {
            alphas
                .iter()
                .map(|a| dot(b.probs(), a))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Value iteration on a two-state belief MDP, with the value stored on a
/// uniform grid over `b(s1)` and linearly interpolated in between. For a
/// convex value function the interpolant lies above it, so the fixed point
/// bounds the optimal value from above.
pub fn two_state_grid_upper_bound(model: &Pomdp, points: usize, sweeps: usize) -> Vec<f64> {
    assert_eq!(model.num_states(), 2);
    let g = model.discount();
    let step = 1.0 / (points - 1) as f64;
    let interp = |v: &[f64], p: f64| {
        let x = (p / step).clamp(0.0, (points - 1) as f64);
        let i = (x.floor() as usize).min(points - 2);
        let f = x - i as f64;
        v[i] * (1.0 - f) + v[i + 1] * f
    };
    // precompute per (point, action) the rewards and (weight, successor) pairs
    let mut table = Vec::with_capacity(points);
    for i in 0..points {
        let p = i as f64 * step;
        let b = Belief::new(vec![1.0 - p, p]).unwrap();
        let mut per_action = Vec::new();
        for a in 0..model.num_actions() {
            let r = model.belief_reward(&b, a);
            let mut branches = Vec::new();
            for o in 0..model.num_obs() {
                let w = model.observation_prob(&b, a, o);
                if w > 0.0 {
                    let next = model.belief_update(&b, a, o).unwrap();
                    branches.push((w, next.probs()[1]));
                }
            }
            per_action.push((r, branches));
        }
        table.push(per_action);
    }
    let mut v = vec![0.0; points];
    for _ in 0..sweeps {
        v = table
            .iter()
            .map(|per_action| {
                per_action
                    .iter()
                    .map(|(r, branches)| {
                        r + g * branches
                            .iter()
                            .map(|(w, p)| w * interp(&v, *p))
                            .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    v
}

/// One exact distributional backup of a belief-indexed map with a fixed
/// action per belief: `Σ_o P(o|b,a) · (R(b,a) + γ Z(τ(b,a,o)))`.
pub fn fixed_action_backup(
    model: &Pomdp,
    eta: &BeliefMap<AtomicMeasure>,
    beliefs: &[(Belief, usize)],
) -> BeliefMap<AtomicMeasure> {
    beliefs
        .iter()
        .map(|(b, a)| {
            let r = model.belief_reward(b, *a);
            let parts: Vec<(f64, AtomicMeasure)> = (0..model.num_obs())
                .filter_map(|o| {
                    let w = model.observation_prob(b, *a, o);
                    (w > 0.0).then(|| {
                        let next = model.belief_update(b, *a, o).unwrap();
                        let z = eta.get(&next).expect("successor is in the domain");
                        (w, affine(z, model.discount(), r))
                    })
                })
                .collect();
            (
                b.clone(),
                mix(parts.iter().map(|(w, m)| (*w, m))).canonicalize(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ContractionTrial {
    pub p: f64,
    pub before: f64,
    pub after: f64,
}

impl ContractionTrial {
    pub fn holds(&self, gamma: f64) -> bool {
        self.after <= gamma * self.before + 1e-9
    }

    pub fn ratio(&self) -> f64 {
        if self.before > 0.0 {
            self.after / self.before
        } else {
            0.0
        }
    }
}

/// Seeded contraction probe on `model`: each trial samples a few beliefs
/// with fixed actions, closes the set under one step of belief updates,
/// draws two random maps over it and compares sup-W_p before and after one
/// exact backup, for each order in `orders`.
pub fn contraction_suite(
    model: &Pomdp,
    trials: usize,
    orders: &[f64],
    seed: u64,
) -> Vec<ContractionTrial> {
    let mut rng = rng(seed);
    let ns = model.num_states();
    let horizon = 1.0 / (1.0 - model.discount());
    let (rmin, rmax) = model.reward_bounds();
    let (lo, hi) = ((rmin * horizon).min(0.0), (rmax * horizon).max(0.0));
    let mut out = Vec::new();
    for _ in 0..trials {
        let k = rng.random_range(1..=6);
        let roots: Vec<(Belief, usize)> = (0..k)
            .map(|_| {
                (
                    random_belief(&mut rng, ns),
                    rng.random_range(0..model.num_actions()),
                )
            })
            .collect();
        let mut domain: Vec<Belief> = roots.iter().map(|(b, _)| b.clone()).collect();
        for (b, a) in &roots {
            for o in 0..model.num_obs() {
                if model.observation_prob(b, *a, o) > 0.0 {
                    let next = model.belief_update(b, *a, o).unwrap();
                    if !domain.contains(&next) {
                        domain.push(next);
                    }
                }
            }
        }
        let eta: BeliefMap<AtomicMeasure> = domain
            .iter()
            .map(|b| (b.clone(), random_atomic(&mut rng, lo, hi, 6)))
            .collect();
        let eta2: BeliefMap<AtomicMeasure> = domain
            .iter()
            .map(|b| (b.clone(), random_atomic(&mut rng, lo, hi, 6)))
            .collect();
        let t1 = fixed_action_backup(model, &eta, &roots);
        let t2 = fixed_action_backup(model, &eta2, &roots);
        for &p in orders {
            let order = WassersteinOrder::Finite(p);
            out.push(ContractionTrial {
                p,
                before: sup_wasserstein(&eta, &eta2, order).unwrap(),
                after: sup_wasserstein(&t1, &t2, order).unwrap(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectionStats {
    pub worst_mass_error: f64,
    pub worst_mean_error: f64,
    /// Largest `W1(Πμ, Πν) − W1(μ, ν)`; nonexpansion means this is ≤ 0.
    pub worst_expansion: f64,
}

/// Seeded in-grid projection probe over `pairs` random measure pairs.
pub fn projection_suite(grid: SupportGrid, pairs: usize, seed: u64) -> ProjectionStats {
    let mut rng = rng(seed);
    let mut stats = ProjectionStats {
        worst_expansion: f64::NEG_INFINITY,
        ..Default::default()
    };
    let w1 = WassersteinOrder::Finite(1.0);
    for _ in 0..pairs {
        let mu = random_atomic(&mut rng, grid.z_min(), grid.z_max(), 8);
        let nu = random_atomic(&mut rng, grid.z_min(), grid.z_max(), 8);
        let (pm, pn) = (
            project_categorical(&mu, grid),
            project_categorical(&nu, grid),
        );
        for (orig, proj) in [(&mu, &pm), (&nu, &pn)] {
            stats.worst_mass_error = stats
                .worst_mass_error
                .max((orig.total_mass() - proj.total_mass()).abs());
            stats.worst_mean_error = stats
                .worst_mean_error
                .max((orig.mean() - proj.mean()).abs());
        }
        let before = wasserstein(&mu, &nu, w1).unwrap();
        let after = wasserstein(&pm, &pn, w1).unwrap();
        stats.worst_expansion = stats.worst_expansion.max(after - before);
    }
    stats
}

/// Largest absolute difference over every table entry, or infinity when the
/// shapes or names differ.
pub fn table_distance(a: &Pomdp, b: &Pomdp) -> f64 {
    let (ta, tb) = (a.to_tables(), b.to_tables());
    let same_shape = (ta.num_states, ta.num_actions, ta.num_obs)
        == (tb.num_states, tb.num_actions, tb.num_obs)
        && ta.state_names == tb.state_names
        && ta.action_names == tb.action_names
        && ta.obs_names == tb.obs_names;
    if !same_shape {
        return f64::INFINITY;
    }
    let pairs = ta
        .transition
        .iter()
        .zip(&tb.transition)
        .chain(ta.sensor.iter().zip(&tb.sensor))
        .chain(ta.reward.iter().zip(&tb.reward))
        .chain(
            a.initial_belief()
                .probs()
                .iter()
                .zip(b.initial_belief().probs()),
        )
        .chain(std::iter::once((&ta.discount, &tb.discount)));
    pairs.map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
