//! Finite MDPs, observation channels with an infection time, and stepping.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, invalid, Error, Result};
use crate::linalg;
use crate::rng::sample_index;
use crate::scalar::Scalar;

/// Serialized form of an MDP (and optionally its observation channel).
///
/// Tensors are nested as `transitions[s][a][s']` and `rewards[s][a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub states: usize,
    pub actions: usize,
    pub gamma: f64,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub start_state: usize,
    /// Declared `[r_min, r_max]`; the observed reward range when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelDocument>,
}

/// Serialized observation channel. Kernels are nested as `kernel[a][s'][o]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDocument {
    pub observations: usize,
    /// Identity when omitted (requires `observations >= states`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_before: Option<Vec<Vec<Vec<f64>>>>,
    /// Same as `kernel_before` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_after: Option<Vec<Vec<Vec<f64>>>>,
    /// `null` means the channel is never infected.
    #[serde(default)]
    pub infection_time: Option<u64>,
}

/// Outcome of [`validate_mdp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Shape problems. When non-empty the remaining fields are best-effort.
    pub structural_errors: Vec<String>,
    /// Strong connectivity of the positive-probability transition graph.
    pub communicating: bool,
    /// States not reachable from the start state.
    pub unreachable_from_start: Vec<usize>,
    pub rewards_bounded: bool,
    pub reward_range: [f64; 2],
    /// Largest `|sum(P(.|s,a)) - 1|` over all rows.
    pub max_row_residual: f64,
    pub negative_entries: usize,
    pub discount_valid: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.structural_errors.is_empty()
            && self.rewards_bounded
            && self.negative_entries == 0
            && self.max_row_residual <= 1e-12
            && self.discount_valid
    }
}

/// Checks shapes, row-stochasticity, reward bounds and whether the MDP is
/// communicating. Never panics on malformed input.
pub fn validate_mdp(doc: &MdpDocument) -> ValidationReport {
    let n = doc.states;
    let m = doc.actions;
    let mut errors = Vec::new();
    if n == 0 {
        errors.push("states must be positive".to_string());
    }
    if m == 0 {
        errors.push("actions must be positive".to_string());
    }
    check_tensor(&doc.transitions, n, m, n, "transitions", &mut errors);
    check_tensor(&doc.rewards, n, m, n, "rewards", &mut errors);
    if doc.start_state >= n.max(1) {
        errors.push(format!("start_state {} out of range", doc.start_state));
    }

    let mut max_residual: f64 = 0.0;
    let mut negatives = 0;
    let mut adjacency = vec![Vec::new(); n];
    for (s, per_action) in doc.transitions.iter().enumerate().take(n) {
        for row in per_action.iter().take(m) {
            let sum: f64 = row.iter().sum();
            max_residual = max_residual.max((sum - 1.0).abs());
            for (next, &p) in row.iter().enumerate().take(n) {
                if p < 0.0 || p.is_nan() {
                    negatives += 1;
                } else if p > 0.0 && !adjacency[s].contains(&next) {
                    adjacency[s].push(next);
                }
            }
        }
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut finite = true;
    for r in doc.rewards.iter().flatten().flatten() {
        finite &= r.is_finite();
        lo = lo.min(*r);
        hi = hi.max(*r);
    }
    let (rmin, rmax) = match doc.reward_bounds {
        Some([a, b]) => (a, b),
        None => (lo, hi),
    };
    let rewards_bounded = finite
        && rmin.is_finite()
        && rmax.is_finite()
        && rmin <= rmax
        && lo >= rmin
        && hi <= rmax;

    let (communicating, unreachable) = if n > 0 {
        let start = doc.start_state.min(n - 1);
        let forward = reachable(&adjacency, start);
        let mut reverse = vec![Vec::new(); n];
        for (s, nexts) in adjacency.iter().enumerate() {
            for &t in nexts {
                reverse[t].push(s);
            }
        }
        let backward = reachable(&reverse, start);
        let unreachable: Vec<usize> = (0..n).filter(|&s| !forward[s]).collect();
        let communicating = forward.iter().all(|&x| x) && backward.iter().all(|&x| x);
        (communicating, unreachable)
    } else {
        (false, Vec::new())
    };

    ValidationReport {
        communicating: communicating && errors.is_empty(),
        structural_errors: errors,
        unreachable_from_start: unreachable,
        rewards_bounded,
        reward_range: [rmin, rmax],
        max_row_residual: max_residual,
        negative_entries: negatives,
        discount_valid: (0.0..1.0).contains(&doc.gamma),
    }
}

fn check_tensor(
    t: &[Vec<Vec<f64>>],
    d0: usize,
    d1: usize,
    d2: usize,
    name: &str,
    errors: &mut Vec<String>,
) {
    if t.len() != d0 {
        errors.push(format!("{name}: expected {d0} outer entries, found {}", t.len()));
    }
    for (i, mid) in t.iter().enumerate() {
        if mid.len() != d1 {
            errors.push(format!("{name}[{i}]: expected {d1} entries, found {}", mid.len()));
        }
        for (j, row) in mid.iter().enumerate() {
            if row.len() != d2 {
                errors.push(format!(
                    "{name}[{i}][{j}]: row length {} != {d2}",
                    row.len()
                ));
            }
        }
    }
}

fn reachable(adjacency: &[Vec<usize>], from: usize) -> Vec<bool> {
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(s) = queue.pop_front() {
        for &t in &adjacency[s] {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen
}

/// A finite MDP with rewards on `(s, a, s')` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<S> {
    n_states: usize,
    n_actions: usize,
    transition: Vec<S>,
    reward: Vec<S>,
    discount: S,
    start_state: usize,
    reward_min: S,
    reward_max: S,
}

impl<S: Scalar> TabularMdp<S> {
    /// Builds an MDP from flat `[s][a][s']` tensors. Rejects anything that
    /// [`validate_mdp`] would flag, except for the communicating property.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<S>,
        reward: Vec<S>,
        discount: S,
        start_state: usize,
        reward_bounds: Option<(S, S)>,
    ) -> Result<Self> {
        let size = n_states * n_actions * n_states;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Shape("MDP needs at least one state and action".into()));
        }
        if transition.len() != size || reward.len() != size {
            return Err(Error::Shape(format!(
                "expected {size} entries in transition and reward tensors, found {} and {}",
                transition.len(),
                reward.len()
            )));
        }
        check_index("start state", start_state, n_states)?;
        if !(discount >= S::zero() && discount < S::one()) {
            return Err(invalid("gamma", format!("{discount} not in [0, 1)")));
        }
        let tol = S::simplex_tolerance(n_states);
        for (i, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|p| !(*p >= S::zero())) {
                return Err(invalid("transitions", format!("row {i} has a negative entry")));
            }
            let sum: S = row.iter().copied().sum();
            if (sum - S::one()).abs() > tol {
                return Err(invalid(
                    "transitions",
                    format!("row (s={}, a={}) sums to {sum}", i / n_actions, i % n_actions),
                ));
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(invalid("rewards", "non-finite reward"));
        }
        let lo = crate::scalar::min_of(&reward);
        let hi = crate::scalar::max_of(&reward);
        let (reward_min, reward_max) = reward_bounds.unwrap_or((lo, hi));
        if !(reward_min <= reward_max) || lo < reward_min || hi > reward_max {
            return Err(invalid(
                "reward_bounds",
                format!("rewards span [{lo}, {hi}] outside declared [{reward_min}, {reward_max}]"),
            ));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            start_state,
            reward_min,
            reward_max,
        })
    }

    pub fn from_document(doc: &MdpDocument) -> Result<Self> {
        let report = validate_mdp(doc);
        if let Some(e) = report.structural_errors.first() {
            return Err(Error::Shape(e.clone()));
        }
        let flat = |t: &Vec<Vec<Vec<f64>>>| -> Vec<S> {
            t.iter().flatten().flatten().map(|&x| S::lit(x)).collect()
        };
        Self::new(
            doc.states,
            doc.actions,
            flat(&doc.transitions),
            flat(&doc.rewards),
            S::lit(doc.gamma),
            doc.start_state,
            doc.reward_bounds.map(|[a, b]| (S::lit(a), S::lit(b))),
        )
    }

    pub fn to_document(&self) -> MdpDocument {
        let nest = |flat: &[S]| -> Vec<Vec<Vec<f64>>> {
            flat.chunks(self.n_states * self.n_actions)
                .map(|per_state| {
                    per_state
                        .chunks(self.n_states)
                        .map(|row| row.iter().map(|x| x.as_f64()).collect())
                        .collect()
                })
                .collect()
        };
        MdpDocument {
            states: self.n_states,
            actions: self.n_actions,
            gamma: self.discount.as_f64(),
            transitions: nest(&self.transition),
            rewards: nest(&self.reward),
            start_state: self.start_state,
            reward_bounds: Some([self.reward_min.as_f64(), self.reward_max.as_f64()]),
            channel: None,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_mdp(&self.to_document())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> S {
        self.discount
    }

    pub fn start_state(&self) -> usize {
        self.start_state
    }

    pub fn reward_bounds(&self) -> (S, S) {
        (self.reward_min, self.reward_max)
    }

    /// `P(. | s, a)`.
    pub fn transition_row(&self, state: usize, action: usize) -> &[S] {
        let base = (state * self.n_actions + action) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn reward(&self, state: usize, action: usize, next: usize) -> S {
        self.reward[(state * self.n_actions + action) * self.n_states + next]
    }

    /// `R(s, a) = E_{s' ~ P(.|s,a)} R(s, a, s')`.
    pub fn expected_reward(&self, state: usize, action: usize) -> S {
        self.transition_row(state, action)
            .iter()
            .enumerate()
            .map(|(next, &p)| p * self.reward(state, action, next))
            .sum()
    }

    /// Samples `s' ~ P(.|s, a)` and returns it with `R(s, a, s')`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        rng: &mut R,
    ) -> Result<(usize, S)> {
        check_index("state", state, self.n_states)?;
        check_index("action", action, self.n_actions)?;
        let next = sample_index(self.transition_row(state, action), rng);
        Ok((next, self.reward(state, action, next)))
    }
}

/// Observation function with a susceptible phase (`t < t'`) and an infected
/// phase (`t >= t'`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationChannel<S> {
    n_states: usize,
    n_actions: usize,
    n_observations: usize,
    /// `[a][s'][o]`.
    before: Vec<S>,
    after: Vec<S>,
    infection_time: Option<u64>,
    /// Deterministic observation of each state before infection.
    susceptible_map: Vec<usize>,
}

impl<S: Scalar> ObservationChannel<S> {
    /// Identity channel that is never infected.
    pub fn identity(n_states: usize, n_actions: usize) -> Self {
        let map: Vec<usize> = (0..n_states).collect();
        Self::from_map(n_states, n_actions, n_states, &map, None)
            .expect("identity channel is well formed")
    }

    /// Deterministic, action-independent channel `s -> map[s]`, with an
    /// optional infected kernel applied from `infection_time` on.
    pub fn from_map(
        n_states: usize,
        n_actions: usize,
        n_observations: usize,
        map: &[usize],
        infected: Option<(u64, Vec<S>)>,
    ) -> Result<Self> {
        if map.len() != n_states {
            return Err(Error::Shape(format!(
                "observation map has {} entries for {n_states} states",
                map.len()
            )));
        }
        let mut before = vec![S::zero(); n_actions * n_states * n_observations];
        for a in 0..n_actions {
            for (s, &o) in map.iter().enumerate() {
                check_index("observation", o, n_observations)?;
                before[(a * n_states + s) * n_observations + o] = S::one();
            }
        }
        let (infection_time, after) = match infected {
            Some((t, kernel)) => (Some(t), kernel),
            None => (None, before.clone()),
        };
        Self::new(n_states, n_actions, n_observations, before, after, infection_time)
    }

    pub fn new(
        n_states: usize,
        n_actions: usize,
        n_observations: usize,
        before: Vec<S>,
        after: Vec<S>,
        infection_time: Option<u64>,
    ) -> Result<Self> {
        let size = n_actions * n_states * n_observations;
        if before.len() != size || after.len() != size {
            return Err(Error::Shape(format!(
                "channel kernels must have {size} entries, found {} and {}",
                before.len(),
                after.len()
            )));
        }
        let tol = S::simplex_tolerance(n_observations);
        for kernel in [&before, &after] {
            for row in kernel.chunks(n_observations) {
                let sum: S = row.iter().copied().sum();
                if row.iter().any(|p| !(*p >= S::zero())) || (sum - S::one()).abs() > tol {
                    return Err(invalid("channel", "kernel rows must be probability vectors"));
                }
            }
        }
        let mut susceptible_map = vec![0; n_states];
        for s in 0..n_states {
            let mut seen = None;
            for a in 0..n_actions {
                let row = &before[(a * n_states + s) * n_observations..][..n_observations];
                let o = row.iter().position(|&p| p == S::one()).ok_or_else(|| {
                    invalid("kernel_before", format!("state {s} is not observed deterministically"))
                })?;
                match seen {
                    None => seen = Some(o),
                    Some(prev) if prev != o => {
                        return Err(invalid(
                            "kernel_before",
                            format!("state {s} observed differently under different actions"),
                        ))
                    }
                    _ => {}
                }
            }
            susceptible_map[s] = seen.unwrap_or(0);
        }
        if infection_time.is_none() && before != after {
            return Err(invalid(
                "kernel_after",
                "a channel that is never infected must have identical kernels",
            ));
        }
        Ok(Self {
            n_states,
            n_actions,
            n_observations,
            before,
            after,
            infection_time,
            susceptible_map,
        })
    }

    pub fn from_document(doc: &ChannelDocument, n_states: usize, n_actions: usize) -> Result<Self> {
        let flatten = |k: &Vec<Vec<Vec<f64>>>| -> Result<Vec<S>> {
            let mut errors = Vec::new();
            check_tensor(k, n_actions, n_states, doc.observations, "channel kernel", &mut errors);
            match errors.into_iter().next() {
                Some(e) => Err(Error::Shape(e)),
                None => Ok(k.iter().flatten().flatten().map(|&x| S::lit(x)).collect()),
            }
        };
        let before = match &doc.kernel_before {
            Some(k) => flatten(k)?,
            None => {
                if doc.observations < n_states {
                    return Err(Error::Shape(
                        "identity channel needs at least as many observations as states".into(),
                    ));
                }
                let map: Vec<usize> = (0..n_states).collect();
                Self::from_map(n_states, n_actions, doc.observations, &map, None)?.before
            }
        };
        let after = match &doc.kernel_after {
            Some(k) => flatten(k)?,
            None => before.clone(),
        };
        Self::new(n_states, n_actions, doc.observations, before, after, doc.infection_time)
    }

    pub fn to_document(&self) -> ChannelDocument {
        let nest = |flat: &[S]| -> Vec<Vec<Vec<f64>>> {
            flat.chunks(self.n_states * self.n_observations)
                .map(|per_action| {
                    per_action
                        .chunks(self.n_observations)
                        .map(|row| row.iter().map(|x| x.as_f64()).collect())
                        .collect()
                })
                .collect()
        };
        ChannelDocument {
            observations: self.n_observations,
            kernel_before: Some(nest(&self.before)),
            kernel_after: Some(nest(&self.after)),
            infection_time: self.infection_time,
        }
    }

    pub fn n_observations(&self) -> usize {
        self.n_observations
    }

    pub fn infection_time(&self) -> Option<u64> {
        self.infection_time
    }

    /// True iff `time >= t'` for a channel that does get infected.
    pub fn is_infected(&self, time: u64) -> bool {
        matches!(self.infection_time, Some(t) if time >= t)
    }

    /// The observation emitted by `state` during the susceptible phase.
    pub fn susceptible_observation(&self, state: usize) -> usize {
        self.susceptible_map[state]
    }

    pub fn susceptible_map(&self) -> &[usize] {
        &self.susceptible_map
    }

    /// `O(. | a, s')` at `time`.
    pub fn kernel_row(&self, time: u64, action: usize, next_state: usize) -> &[S] {
        let kernel = if self.is_infected(time) { &self.after } else { &self.before };
        let base = (action * self.n_states + next_state) * self.n_observations;
        &kernel[base..base + self.n_observations]
    }

    /// Samples the observation of `next_state` reached by `action`, emitted at
    /// `time`. The susceptible phase is deterministic and draws nothing.
    pub fn observe<R: Rng + ?Sized>(
        &self,
        time: u64,
        action: usize,
        next_state: usize,
        rng: &mut R,
    ) -> Result<usize> {
        check_index("action", action, self.n_actions)?;
        check_index("state", next_state, self.n_states)?;
        if !self.is_infected(time) {
            return Ok(self.susceptible_map[next_state]);
        }
        Ok(sample_index(self.kernel_row(time, action, next_state), rng))
    }
}

/// One step of experience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition<S> {
    pub time: u64,
    pub state: usize,
    pub observation: usize,
    pub action: usize,
    pub reward: S,
    pub next_state: usize,
    pub next_observation: usize,
    /// Whether the interruption policy chose `action`.
    pub interrupted: bool,
}

/// Exact state values of a stationary stochastic policy (`policy[s * |A| + a]`)
/// by solving `(I - gamma P_pi) V = r_pi`.
pub fn evaluate_policy<S: Scalar>(mdp: &TabularMdp<S>, policy: &[S]) -> Result<Vec<S>> {
    let n = mdp.n_states();
    let m = mdp.n_actions();
    if policy.len() != n * m {
        return Err(Error::Shape(format!(
            "policy has {} entries, expected {}",
            policy.len(),
            n * m
        )));
    }
    let gamma = mdp.discount();
    let mut a = vec![S::zero(); n * n];
    let mut b = vec![S::zero(); n];
    for s in 0..n {
        a[s * n + s] = S::one();
        for act in 0..m {
            let pi = policy[s * m + act];
            if pi == S::zero() {
                continue;
            }
            b[s] = b[s] + pi * mdp.expected_reward(s, act);
            for (next, &p) in mdp.transition_row(s, act).iter().enumerate() {
                a[s * n + next] = a[s * n + next] - gamma * pi * p;
            }
        }
    }
    linalg::solve(a, b)
}

/// `Q(s, a) = R(s, a) + gamma sum_s' P(s'|s,a) V(s')`, flattened `[s][a]`.
pub fn q_from_values<S: Scalar>(mdp: &TabularMdp<S>, values: &[S]) -> Vec<S> {
    let gamma = mdp.discount();
    let mut q = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let future: S = mdp
                .transition_row(s, a)
                .iter()
                .zip(values)
                .map(|(&p, &v)| p * v)
                .sum();
            q.push(mdp.expected_reward(s, a) + gamma * future);
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamLabel};

    fn doc(transitions: Vec<Vec<Vec<f64>>>, rewards: Vec<Vec<Vec<f64>>>) -> MdpDocument {
        MdpDocument {
            states: transitions.len(),
            actions: transitions[0].len(),
            gamma: 0.9,
            transitions,
            rewards,
            start_state: 0,
            reward_bounds: None,
            channel: None,
        }
    }

    #[test]
    fn two_cycle_is_communicating() {
        let d = doc(
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]],
        );
        let report = validate_mdp(&d);
        assert!(report.communicating);
        assert!(report.is_valid());
    }

    #[test]
    fn absorbing_state_breaks_communication() {
        let d = doc(
            vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
            vec![vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]],
        );
        assert!(!validate_mdp(&d).communicating);
    }

    #[test]
    fn malformed_rows_are_structural_errors() {
        let d = doc(
            vec![vec![vec![0.0, 1.0, 0.0]], vec![vec![1.0]]],
            vec![vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]],
        );
        let report = validate_mdp(&d);
        assert!(!report.structural_errors.is_empty());
        assert!(!report.communicating);
        assert!(TabularMdp::<f64>::from_document(&d).is_err());
    }

    #[test]
    fn residuals_and_negatives_reported() {
        let d = doc(
            vec![vec![vec![0.5, 0.6]], vec![vec![1.2, -0.2]]],
            vec![vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]],
        );
        let report = validate_mdp(&d);
        assert!((report.max_row_residual - 0.1).abs() < 1e-12);
        assert_eq!(report.negative_entries, 1);
        assert!(!report.is_valid());
    }

    #[test]
    fn step_is_point_mass_on_deterministic_row() {
        let mdp = TabularMdp::new(
            2,
            1,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, -100.0, 0.0, 0.0],
            0.9,
            0,
            None,
        )
        .unwrap();
        let mut rng = stream(3, StreamLabel::Transition);
        for _ in 0..100 {
            assert_eq!(mdp.step(0, 0, &mut rng).unwrap(), (1, -100.0));
        }
        assert!(mdp.step(2, 0, &mut rng).is_err());
        assert!(mdp.step(0, 1, &mut rng).is_err());
    }

    #[test]
    fn fair_coin_frequency() {
        // 1e5 draws of a fair coin: the 0.01 band is > 6 standard deviations.
        let mdp = TabularMdp::new(2, 1, vec![0.5, 0.5, 0.5, 0.5], vec![0.0; 4], 0.5, 0, None)
            .unwrap();
        let mut rng = stream(11, StreamLabel::Transition);
        let hits = (0..100_000)
            .filter(|_| mdp.step(0, 0, &mut rng).unwrap().0 == 1)
            .count();
        let freq = hits as f64 / 1e5;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn infection_boundary() {
        let mut after = vec![0.0; 3 * 3];
        // state 2 observed as 1 after infection
        after[0] = 1.0;
        after[4] = 1.0;
        after[7] = 1.0;
        let ch = ObservationChannel::<f64>::from_map(3, 1, 3, &[0, 1, 2], Some((100, after)))
            .unwrap();
        assert!(!ch.is_infected(99));
        assert!(ch.is_infected(100));
        let mut rng = stream(0, StreamLabel::Observation);
        assert_eq!(ch.observe(99, 0, 2, &mut rng).unwrap(), 2);
        assert_eq!(ch.observe(100, 0, 2, &mut rng).unwrap(), 1);
        assert_eq!(ch.observe(100, 0, 0, &mut rng).unwrap(), 0);

        let never = ObservationChannel::<f64>::identity(3, 2);
        assert!(!never.is_infected(u64::MAX));
        for t in [0, 10, 1_000_000] {
            assert_eq!(never.observe(t, 1, 2, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn never_infected_channel_rejects_differing_kernels() {
        let before = vec![1.0, 0.0, 0.0, 1.0];
        let after = vec![0.0, 1.0, 0.0, 1.0];
        assert!(ObservationChannel::<f64>::new(2, 1, 2, before, after, None).is_err());
    }

    #[test]
    fn document_round_trip() {
        let mdp = TabularMdp::new(2, 1, vec![0.3, 0.7, 1.0, 0.0], vec![1.0, 2.0, 0.0, 0.0], 0.5, 1, None)
            .unwrap();
        let json = serde_json::to_string(&mdp.to_document()).unwrap();
        let back: MdpDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(TabularMdp::<f64>::from_document(&back).unwrap(), mdp);
    }
}
