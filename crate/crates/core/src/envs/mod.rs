//! Built-in experiment domains and the plaintext model format.

mod format;

pub use format::{parse_pomdp, serialize_pomdp, EnvError};

use crate::model::{Belief, Pomdp, PomdpTables};
use std::ops::Deref;

pub const TWO_STATE_GO: usize = 0;
pub const TWO_STATE_STAY: usize = 1;
pub const TWO_STATE_REPORT_S0: usize = 0;
pub const TWO_STATE_REPORT_S1: usize = 1;

/// Number of cells on the DoorKey optimal path.
pub const DOORKEY_PATH_LEN: usize = 10;
/// Absorbing goal state, one past the last path cell.
pub const DOORKEY_GOAL: usize = DOORKEY_PATH_LEN;
pub const DOORKEY_ADVANCE: usize = 0;

/// Beliefs closer than this (max-abs) count as duplicates.
const DUPLICATE_TOL: f64 = 1e-12;

/// An ordered, nonempty list of distinct beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSet(Vec<Belief>);

impl BeliefSet {
    pub fn new(beliefs: Vec<Belief>) -> Result<Self, EnvError> {
        if beliefs.is_empty() {
            return Err(EnvError::BeliefSet("belief set is empty".into()));
        }
        let n = beliefs[0].len();
        for (i, b) in beliefs.iter().enumerate() {
            if b.len() != n {
                return Err(EnvError::BeliefSet(format!(
                    "belief {i} has {} entries, expected {n}",
                    b.len()
                )));
            }
            if let Some(j) = beliefs[..i]
                .iter()
                .position(|other| other.max_abs_diff(b) <= DUPLICATE_TOL)
            {
                return Err(EnvError::BeliefSet(format!(
                    "beliefs {j} and {i} are duplicates"
                )));
            }
        }
        Ok(Self(beliefs))
    }

    /// Every one-hot belief followed by the model's initial belief, if it is
    /// not one of them.
    pub fn corners_and_start(model: &Pomdp) -> Self {
        let n = model.num_states();
        let mut beliefs: Vec<Belief> = (0..n).map(|s| Belief::one_hot(n, s)).collect();
        let start = model.initial_belief();
        if beliefs
            .iter()
            .all(|b| b.max_abs_diff(start) > DUPLICATE_TOL)
        {
            beliefs.push(start.clone());
        }
        Self(beliefs)
    }

    pub fn into_inner(self) -> Vec<Belief> {
        self.0
    }
}

impl Deref for BeliefSet {
    type Target = [Belief];

    fn deref(&self) -> &[Belief] {
        &self.0
    }
}

/// Two hidden states; `Go` switches state w.p. 0.9, `Stay` keeps it w.p.
/// 0.9; the sensor reports the true state w.p. 0.6; reward 1 per step
/// spent in `s1`; γ = 0.99. Beliefs: 20 evenly spaced points on the
/// segment between the two corners.
pub fn build_two_state() -> (Pomdp, BeliefSet) {
    let mut t = PomdpTables::zeroed(2, 2, 2);
    for s in 0..2 {
        let other = 1 - s;
        t.set_transition(s, TWO_STATE_GO, other, 0.9);
        t.set_transition(s, TWO_STATE_GO, s, 0.1);
        t.set_transition(s, TWO_STATE_STAY, s, 0.9);
        t.set_transition(s, TWO_STATE_STAY, other, 0.1);
        for a in [TWO_STATE_GO, TWO_STATE_STAY] {
            t.set_sensor(a, s, s, 0.6);
            t.set_sensor(a, s, other, 0.4);
        }
    }
    for a in [TWO_STATE_GO, TWO_STATE_STAY] {
        t.set_reward(1, a, 1.0);
    }
    t.discount = 0.99;
    t.state_names = vec!["s0".into(), "s1".into()];
    t.action_names = vec!["Go".into(), "Stay".into()];
    t.obs_names = vec!["report-s0".into(), "report-s1".into()];
    let model = Pomdp::new(t).expect("two-state model is valid");

    let beliefs = (0..20)
        .map(|k| {
            let p = k as f64 / 19.0;
            Belief::new(vec![1.0 - p, p]).expect("segment point is a belief")
        })
        .collect();
    (model, BeliefSet::new(beliefs).expect("distinct beliefs"))
}

/// The DoorKey optimal path as a deterministic chain: cells `0..10`, then
/// an absorbing goal. `advance` moves one cell forward and earns 1.0 on the
/// step into the goal; the two misstep actions stay put. The sensor
/// reports the current state exactly. γ = 0.9. Beliefs: one-hot on each
/// path cell.
pub fn build_doorkey() -> (Pomdp, BeliefSet) {
    let n = DOORKEY_PATH_LEN + 1;
    let mut t = PomdpTables::zeroed(n, 3, n);
    for s in 0..n {
        t.set_transition(s, DOORKEY_ADVANCE, (s + 1).min(DOORKEY_GOAL), 1.0);
        t.set_transition(s, 1, s, 1.0);
        t.set_transition(s, 2, s, 1.0);
        for a in 0..3 {
            t.set_sensor(a, s, s, 1.0);
        }
    }
    t.set_reward(DOORKEY_PATH_LEN - 1, DOORKEY_ADVANCE, 1.0);
    t.discount = 0.9;
    t.initial_belief = Some(Belief::one_hot(n, 0));
    let cell_name = |s: usize| {
        if s == DOORKEY_GOAL {
            "goal".to_string()
        } else {
            format!("cell{s}")
        }
    };
    t.state_names = (0..n).map(cell_name).collect();
    t.action_names = vec!["advance".into(), "misstep-a".into(), "misstep-b".into()];
    t.obs_names = (0..n).map(|s| format!("see-{}", cell_name(s))).collect();
    let model = Pomdp::new(t).expect("doorkey model is valid");

    let beliefs = (0..DOORKEY_PATH_LEN)
        .map(|s| Belief::one_hot(n, s))
        .collect();
    (model, BeliefSet::new(beliefs).expect("distinct beliefs"))
}
