mod common;

use dpbvi_core::dist::{Measure, SupportGrid};
use dpbvi_core::dpbvi::{self, candidate_component, PsiSet};
use dpbvi_core::envs::{self, BeliefSet};
use dpbvi_core::harness::compare_run;
use dpbvi_core::model::{Belief, Pomdp};
use dpbvi_core::pbvi;
use dpbvi_core::solver::SolveOptions;

fn domains() -> Vec<(&'static str, Pomdp, BeliefSet, SupportGrid)> {
    let (ts, tb) = envs::build_two_state();
    let (dk, db) = envs::build_doorkey();
    vec![
        (
            "two-state",
            ts,
            tb,
            SupportGrid::new(0.0, 100.0, 51).unwrap(),
        ),
        ("doorkey", dk, db, SupportGrid::new(0.0, 5.0, 51).unwrap()),
    ]
}

fn trajectory(m: &Pomdp, b: &[Belief], grid: SupportGrid, steps: usize) -> Vec<PsiSet> {
    let mut it = dpbvi::iteration(m, b, grid);
    let mut out = vec![it.current().clone()];
    for _ in 0..steps {
        it.step();
        out.push(it.current().clone());
    }
    out
}

#[test]
fn every_state_distribution_stays_normalized() {
    for (name, m, b, grid) in domains() {
        for set in trajectory(&m, &b, grid, 120) {
            for psi in set.psis() {
                for d in psi.dists() {
                    assert!(
                        (d.total_mass() - 1.0).abs() <= 1e-9,
                        "{name}: mass {}",
                        d.total_mass()
                    );
                }
            }
        }
    }
}

#[test]
fn backup_atoms_never_leave_the_support() {
    for (name, m, b, grid) in domains() {
        for set in trajectory(&m, &b, grid, 60) {
            for psi in set.psis() {
                for a in 0..m.num_actions() {
                    for o in 0..m.num_obs() {
                        for s in 0..m.num_states() {
                            let c = candidate_component(&m, psi, a, o, s);
                            for atom in c.as_slice().iter().filter(|a| a.mass > 0.0) {
                                assert!(grid.contains(atom.loc), "{name}: atom at {}", atom.loc);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn expected_backup_equals_scalar_backup_of_expectation_image() {
    for (name, m, b, grid) in domains() {
        for prev in trajectory(&m, &b, grid, 40) {
            let next = dpbvi::backup(&m, &prev, &b, grid);
            let scalar = pbvi::backup(&m, &prev.expectation_image(), &b);
            for belief in b.iter() {
                let (d, p) = (next.best(belief).1, scalar.value_at(belief).0);
                assert!((d - p).abs() <= 1e-9, "{name}: {d} vs {p}");
            }
        }
    }
}

#[test]
fn expected_value_is_linear_in_the_belief() {
    let mut r = common::rng(3);
    for (_, m, b, grid) in domains() {
        let sol = dpbvi::solve(&m, &b, grid, &SolveOptions::new(1e-3, 10_000));
        let image = sol.set.expectation_image();
        for _ in 0..1000 {
            let belief = common::random_belief(&mut r, m.num_states());
            for (psi, alpha) in sol.set.psis().iter().zip(image.alphas()) {
                let via_mixture = dpbvi::psi_inner(psi, &belief).mean();
                assert!((via_mixture - alpha.dot(&belief)).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn solvers_agree_on_values_and_actions() {
    for (name, m, b, grid) in domains() {
        let c = compare_run(name, &m, &b, grid, &SolveOptions::new(1e-3, 10_000));
        let bound = if name == "doorkey" { 1e-5 } else { 1e-3 };
        assert!(c.trace.peak() <= bound, "{name}: peak {}", c.trace.peak());
        for belief in b.iter() {
            assert_eq!(
                c.pbvi.value_at(belief).1,
                c.dpbvi.value_at(belief).action,
                "{name}"
            );
        }
    }
}

#[test]
fn stay_wins_in_the_rewarding_state() {
    let (m, b) = envs::build_two_state();
    let grid = SupportGrid::new(0.0, 100.0, 51).unwrap();
    let sol = dpbvi::solve(&m, &b, grid, &SolveOptions::new(1e-3, 10_000));
    let at_s1 = sol.set.value_at(&Belief::one_hot(2, 1));
    assert_eq!(at_s1.action, envs::TWO_STATE_STAY);
    let at_s0 = sol.set.value_at(&Belief::one_hot(2, 0));
    assert_eq!(at_s0.action, envs::TWO_STATE_GO);
}

#[test]
fn distributional_solver_is_the_slower_one() {
    let (m, b) = envs::build_two_state();
    let grid = SupportGrid::new(0.0, 100.0, 51).unwrap();
    let c = compare_run("two-state", &m, &b, grid, &SolveOptions::new(1e-3, 10_000));
    let secs = |name| c.report.algorithm(name).unwrap().seconds;
    assert!(
        secs("dpbvi") > secs("pbvi"),
        "dpbvi {} s, pbvi {} s",
        secs("dpbvi"),
        secs("pbvi")
    );
}
