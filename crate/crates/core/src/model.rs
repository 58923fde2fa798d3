//! Finite POMDP model and belief arithmetic.
//!
//! Tables are dense and indexed as
//! - transition `T[s][a][s']`
//! - sensor `Ω[a][s'][o']`
//! - reward `R[s][a]`
//!
//! The belief update is the usual Bayes filter
//!
//! ```text
//! τ(b, a, o')(s') ∝ Ω(o' | s', a) · Σ_s T(s, a, s') b(s)
//! ```

use thiserror::Error;

/// Row-sum tolerance for `T` and `Ω` rows and for beliefs.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Normalizers at or below this are treated as impossible observations.
pub const MIN_NORMALIZER: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model must have at least one state, action and observation")]
    EmptyDimension,
    #[error("{table} table has {found} entries, expected {expected}")]
    Shape {
        table: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{table} entry {index} is not a probability: {value}")]
    ProbabilityOutOfRange {
        table: &'static str,
        index: usize,
        value: f64,
    },
    #[error("transition row for state {state}, action {action} sums to {sum}")]
    TransitionRow {
        state: usize,
        action: usize,
        sum: f64,
    },
    #[error("sensor row for action {action}, next state {next_state} sums to {sum}")]
    SensorRow {
        action: usize,
        next_state: usize,
        sum: f64,
    },
    #[error("reward for state {state}, action {action} is not finite")]
    NonFiniteReward { state: usize, action: usize },
    #[error("discount must lie in [0, 1), got {0}")]
    Discount(f64),
    #[error("{kind} name list has {found} entries, expected {expected}")]
    Names {
        kind: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("observation {observation} has zero probability after action {action}")]
    ZeroProbabilityObservation { action: usize, observation: usize },
}

/// A probability distribution over states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::InvalidBelief("empty".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(ModelError::InvalidBelief(format!("entry {i} is {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(ModelError::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalizes nonnegative weights into a belief.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, ModelError> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ModelError::InvalidBelief(format!(
                "weights {weights:?} cannot be normalized"
            )));
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn one_hot(num_states: usize, state: usize) -> Self {
        assert!(state < num_states, "state {state} out of range");
        let mut probs = vec![0.0; num_states];
        probs[state] = 1.0;
        Self(probs)
    }

    pub fn uniform(num_states: usize) -> Self {
        assert!(num_states > 0);
        Self(vec![1.0 / num_states as f64; num_states])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.0.len());
        self.0.iter().zip(values).map(|(p, v)| p * v).sum()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Belief) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Raw tables handed to [`Pomdp::new`] for validation.
#[derive(Debug, Clone)]
pub struct PomdpTables {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_obs: usize,
    /// Flattened `T[s][a][s']`.
    pub transition: Vec<f64>,
    /// Flattened `Ω[a][s'][o']`.
    pub sensor: Vec<f64>,
    /// Flattened `R[s][a]`.
    pub reward: Vec<f64>,
    pub discount: f64,
    /// `None` means uniform.
    pub initial_belief: Option<Belief>,
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    pub obs_names: Vec<String>,
}

impl PomdpTables {
    /// Zero-filled tables with index names.
    pub fn zeroed(num_states: usize, num_actions: usize, num_obs: usize) -> Self {
        let names = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self {
            num_states,
            num_actions,
            num_obs,
            transition: vec![0.0; num_states * num_actions * num_states],
            sensor: vec![0.0; num_actions * num_states * num_obs],
            reward: vec![0.0; num_states * num_actions],
            discount: 0.0,
            initial_belief: None,
            state_names: names("s", num_states),
            action_names: names("a", num_actions),
            obs_names: names("o", num_obs),
        }
    }

    pub fn set_transition(&mut self, s: usize, a: usize, next: usize, p: f64) {
        let idx = (s * self.num_actions + a) * self.num_states + next;
        self.transition[idx] = p;
    }

    pub fn set_sensor(&mut self, a: usize, next: usize, o: usize, p: f64) {
        let idx = (a * self.num_states + next) * self.num_obs + o;
        self.sensor[idx] = p;
    }

    pub fn set_reward(&mut self, s: usize, a: usize, r: f64) {
        self.reward[s * self.num_actions + a] = r;
    }
}

/// A validated finite POMDP ⟨S, A, O, T, Ω, b0, R, γ⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp {
    num_states: usize,
    num_actions: usize,
    num_obs: usize,
    transition: Vec<f64>,
    sensor: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    initial_belief: Belief,
    state_names: Vec<String>,
    action_names: Vec<String>,
    obs_names: Vec<String>,
}

impl Pomdp {
    pub fn new(tables: PomdpTables) -> Result<Self, ModelError> {
        let PomdpTables {
            num_states: ns,
            num_actions: na,
            num_obs: no,
            transition,
            sensor,
            reward,
            discount,
            initial_belief,
            state_names,
            action_names,
            obs_names,
        } = tables;
        if ns == 0 || na == 0 || no == 0 {
            return Err(ModelError::EmptyDimension);
        }
        check_len("transition", ns * na * ns, transition.len())?;
        check_len("sensor", na * ns * no, sensor.len())?;
        check_len("reward", ns * na, reward.len())?;
        check_names("state", ns, &state_names)?;
        check_names("action", na, &action_names)?;
        check_names("observation", no, &obs_names)?;
        check_probs("transition", &transition)?;
        check_probs("sensor", &sensor)?;

        for (row, chunk) in transition.chunks(ns).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ModelError::TransitionRow {
                    state: row / na,
                    action: row % na,
                    sum,
                });
            }
        }
        for (row, chunk) in sensor.chunks(no).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ModelError::SensorRow {
                    action: row / ns,
                    next_state: row % ns,
                    sum,
                });
            }
        }
        if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
            return Err(ModelError::NonFiniteReward {
                state: i / na,
                action: i % na,
            });
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(ModelError::Discount(discount));
        }
        let initial_belief = match initial_belief {
            Some(b) if b.len() != ns => {
                return Err(ModelError::InvalidBelief(format!(
                    "initial belief has {} entries for {ns} states",
                    b.len()
                )))
            }
            Some(b) => b,
            None => Belief::uniform(ns),
        };
        Ok(Self {
            num_states: ns,
            num_actions: na,
            num_obs: no,
            transition,
            sensor,
            reward,
            discount,
            initial_belief,
            state_names,
            action_names,
            obs_names,
        })
    }

    /// Copies the tables back out, e.g. to build a variant of this model.
    pub fn to_tables(&self) -> PomdpTables {
        PomdpTables {
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_obs: self.num_obs,
            transition: self.transition.clone(),
            sensor: self.sensor.clone(),
            reward: self.reward.clone(),
            discount: self.discount,
            initial_belief: Some(self.initial_belief.clone()),
            state_names: self.state_names.clone(),
            action_names: self.action_names.clone(),
            obs_names: self.obs_names.clone(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.initial_belief
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn obs_names(&self) -> &[String] {
        &self.obs_names
    }

    /// `T(s, a, s')`
    #[inline]
    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + next]
    }

    /// The row `T(s, a, ·)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// `Ω(o' | s', a)`
    #[inline]
    pub fn sensor(&self, a: usize, next: usize, o: usize) -> f64 {
        self.sensor[(a * self.num_states + next) * self.num_obs + o]
    }

    /// `R(s, a)`
    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        self.reward
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            })
    }

    /// Joint weight `T(s, a, s') · Ω(o' | s', a)` of one branch.
    #[inline]
    pub fn branch_weight(&self, s: usize, a: usize, next: usize, o: usize) -> f64 {
        self.transition(s, a, next) * self.sensor(a, next, o)
    }

    /// `P(o' | s, a) = Σ_{s'} T(s, a, s') Ω(o' | s', a)`.
    pub fn obs_prob_from_state(&self, s: usize, a: usize, o: usize) -> f64 {
        (0..self.num_states)
            .map(|next| self.branch_weight(s, a, next, o))
            .sum()
    }

    /// Predicted next-state distribution `Σ_s b(s) T(s, a, ·)`.
    pub fn predict(&self, b: &Belief, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states];
        for (s, &p) in b.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (acc, t) in out.iter_mut().zip(self.transition_row(s, a)) {
                *acc += p * t;
            }
        }
        out
    }

    /// The belief update τ(b, a, o').
    pub fn belief_update(&self, b: &Belief, a: usize, o: usize) -> Result<Belief, ModelError> {
        self.check_belief(b);
        let mut unnorm = self.predict(b, a);
        for (next, w) in unnorm.iter_mut().enumerate() {
            *w *= self.sensor(a, next, o);
        }
        let norm: f64 = unnorm.iter().sum();
        if norm <= MIN_NORMALIZER {
            return Err(ModelError::ZeroProbabilityObservation {
                action: a,
                observation: o,
            });
        }
        for w in &mut unnorm {
            *w /= norm;
        }
        // renormalize once more so long chains of updates do not drift
        let sum: f64 = unnorm.iter().sum();
        for w in &mut unnorm {
            *w /= sum;
        }
        Ok(Belief(unnorm))
    }

    /// `P(o' | b, a) = Σ_{s,s'} b(s) T(s, a, s') Ω(o' | s', a)`.
    pub fn observation_prob(&self, b: &Belief, a: usize, o: usize) -> f64 {
        self.check_belief(b);
        self.predict(b, a)
            .iter()
            .enumerate()
            .map(|(next, p)| p * self.sensor(a, next, o))
            .sum()
    }

    /// `R(b, a) = E_{s∼b} R(s, a)`.
    pub fn belief_reward(&self, b: &Belief, a: usize) -> f64 {
        self.check_belief(b);
        b.probs()
            .iter()
            .enumerate()
            .map(|(s, p)| p * self.reward(s, a))
            .sum()
    }

    fn check_belief(&self, b: &Belief) {
        assert_eq!(
            b.len(),
            self.num_states,
            "belief dimension does not match the model"
        );
    }
}

fn check_len(table: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::Shape {
            table,
            expected,
            found,
        });
    }
    Ok(())
}

fn check_names(kind: &'static str, expected: usize, names: &[String]) -> Result<(), ModelError> {
    if names.len() != expected {
        return Err(ModelError::Names {
            kind,
            expected,
            found: names.len(),
        });
    }
    Ok(())
}

fn check_probs(table: &'static str, values: &[f64]) -> Result<(), ModelError> {
    match values
        .iter()
        .position(|p| !(0.0..=1.0 + STOCHASTIC_TOL).contains(p))
    {
        Some(index) => Err(ModelError::ProbabilityOutOfRange {
            table,
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two states, actions {go, stay}, noisy sensor reporting the state
    /// correctly w.p. 0.6.
    fn noisy_two_state() -> Pomdp {
        let mut t = PomdpTables::zeroed(2, 2, 2);
        for s in 0..2 {
            t.set_transition(s, 0, 1 - s, 0.9);
            t.set_transition(s, 0, s, 0.1);
            t.set_transition(s, 1, s, 0.9);
            t.set_transition(s, 1, 1 - s, 0.1);
            for a in 0..2 {
                t.set_sensor(a, s, s, 0.6);
                t.set_sensor(a, s, 1 - s, 0.4);
                t.set_reward(1, a, 1.0);
            }
        }
        t.discount = 0.99;
        Pomdp::new(t).unwrap()
    }

    fn identity_model(n: usize) -> Pomdp {
        let mut t = PomdpTables::zeroed(n, 1, n);
        for s in 0..n {
            t.set_transition(s, 0, s, 1.0);
            t.set_sensor(0, s, s, 1.0);
        }
        Pomdp::new(t).unwrap()
    }

    #[test]
    fn belief_update_noisy_sensor() {
        let m = noisy_two_state();
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let next = m.belief_update(&b, 1, 1).unwrap();
        assert!((next.probs()[0] - 0.4).abs() < 1e-15);
        assert!((next.probs()[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn impossible_observation_is_an_error() {
        let m = identity_model(3);
        let b = Belief::one_hot(3, 0);
        let err = m.belief_update(&b, 0, 2).unwrap_err();
        assert_eq!(
            err,
            ModelError::ZeroProbabilityObservation {
                action: 0,
                observation: 2
            }
        );
    }

    #[test]
    fn identity_model_collapses_to_observation() {
        let m = identity_model(4);
        let b = Belief::uniform(4);
        for o in 0..4 {
            assert_eq!(m.belief_update(&b, 0, o).unwrap(), Belief::one_hot(4, o));
        }
    }

    #[test]
    fn observation_prob_examples() {
        let m = noisy_two_state();
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        assert!((m.observation_prob(&b, 1, 1) - 0.5).abs() < 1e-15);

        let id = identity_model(3);
        let b = Belief::one_hot(3, 1);
        assert_eq!(id.observation_prob(&b, 0, 1), 1.0);
        assert_eq!(id.observation_prob(&b, 0, 0), 0.0);

        let mut t = PomdpTables::zeroed(2, 1, 4);
        for s in 0..2 {
            t.set_transition(s, 0, s, 1.0);
            for o in 0..4 {
                t.set_sensor(0, s, o, 0.25);
            }
        }
        let uniform = Pomdp::new(t).unwrap();
        let b = Belief::new(vec![0.3, 0.7]).unwrap();
        for o in 0..4 {
            assert!((uniform.observation_prob(&b, 0, o) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn belief_reward_examples() {
        let m = noisy_two_state();
        let b = Belief::new(vec![0.3, 0.7]).unwrap();
        assert!((m.belief_reward(&b, 0) - 0.7).abs() < 1e-15);
        assert_eq!(m.belief_reward(&Belief::one_hot(2, 1), 1), 1.0);
        assert_eq!(identity_model(2).belief_reward(&Belief::uniform(2), 0), 0.0);
    }

    #[test]
    fn validation_rejects_bad_rows() {
        let mut t = PomdpTables::zeroed(2, 1, 1);
        t.set_transition(0, 0, 0, 1.0);
        t.set_transition(1, 0, 1, 0.95);
        t.set_sensor(0, 0, 0, 1.0);
        t.set_sensor(0, 1, 0, 1.0);
        match Pomdp::new(t.clone()) {
            Err(ModelError::TransitionRow { state, action, .. }) => {
                assert_eq!((state, action), (1, 0))
            }
            other => panic!("unexpected {other:?}"),
        }
        t.set_transition(1, 0, 1, 1.0);
        t.set_sensor(0, 1, 0, 0.5);
        assert!(matches!(
            Pomdp::new(t.clone()),
            Err(ModelError::SensorRow {
                action: 0,
                next_state: 1,
                ..
            })
        ));
        t.set_sensor(0, 1, 0, 1.0);
        t.discount = 1.0;
        assert_eq!(Pomdp::new(t.clone()), Err(ModelError::Discount(1.0)));
        t.discount = 0.5;
        t.set_reward(0, 0, f64::NAN);
        assert!(matches!(
            Pomdp::new(t),
            Err(ModelError::NonFiniteReward {
                state: 0,
                action: 0
            })
        ));
    }

    #[test]
    fn belief_constructor_checks() {
        assert!(Belief::new(vec![0.5, 0.4]).is_err());
        assert!(Belief::new(vec![1.5, -0.5]).is_err());
        assert!(Belief::new(vec![]).is_err());
        let b = Belief::from_weights(vec![1.0, 3.0]).unwrap();
        assert_eq!(b.probs(), &[0.25, 0.75]);
    }
}
