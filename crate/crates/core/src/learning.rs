//! Q-tables, learning-rate schedules, the three bootstrap targets and the
//! interaction loop.

use serde::{Deserialize, Serialize};

use crate::backup::BackupOperator;
use crate::error::{check_index, invalid, Error, Result};
use crate::exploration::ExplorationStrategy;
use crate::interruption::InterruptionScheme;
use crate::mdp::{ObservationChannel, TabularMdp, Transition};
use crate::rng::{sample_index, RngStreams};
use crate::scalar::Scalar;

/// Q-values and visit counters keyed by `(observation, action)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable<S> {
    n_observations: usize,
    n_actions: usize,
    values: Vec<S>,
    visit_counts: Vec<u64>,
    obs_counts: Vec<u64>,
}

impl<S: Scalar> QTable<S> {
    pub fn new(n_observations: usize, n_actions: usize, initial: S) -> Self {
        Self {
            n_observations,
            n_actions,
            values: vec![initial; n_observations * n_actions],
            visit_counts: vec![0; n_observations * n_actions],
            obs_counts: vec![0; n_observations],
        }
    }

    pub fn n_observations(&self) -> usize {
        self.n_observations
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn value(&self, observation: usize, action: usize) -> S {
        self.values[observation * self.n_actions + action]
    }

    pub fn set_value(&mut self, observation: usize, action: usize, value: S) {
        self.values[observation * self.n_actions + action] = value;
    }

    pub fn row(&self, observation: usize) -> &[S] {
        &self.values[observation * self.n_actions..(observation + 1) * self.n_actions]
    }

    /// Flattened `[o][a]`.
    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn visits(&self, observation: usize, action: usize) -> u64 {
        self.visit_counts[observation * self.n_actions + action]
    }

    /// `n_t(o)`: updates made at `observation` so far.
    pub fn obs_visits(&self, observation: usize) -> u64 {
        self.obs_counts[observation]
    }

    /// Applies `Q(o,a) += alpha (target - Q(o,a))` after counting the visit;
    /// returns the learning rate used.
    pub fn update(
        &mut self,
        observation: usize,
        action: usize,
        target: S,
        schedule: &LearningRate<S>,
    ) -> Result<S> {
        check_index("observation", observation, self.n_observations)?;
        check_index("action", action, self.n_actions)?;
        let i = observation * self.n_actions + action;
        self.visit_counts[i] += 1;
        self.obs_counts[observation] += 1;
        let alpha = schedule.rate(self.visit_counts[i])?;
        self.values[i] = self.values[i] + alpha * (target - self.values[i]);
        Ok(alpha)
    }

    /// `max |Q(map[s], a) - reference[s][a]|` over states `s`, where `map`
    /// sends states to observations.
    pub fn sup_distance(&self, reference: &[S], map: &[usize]) -> S {
        let m = self.n_actions;
        map.iter()
            .enumerate()
            .flat_map(|(s, &o)| (0..m).map(move |a| (s, o, a)))
            .map(|(s, o, a)| (self.value(o, a) - reference[s * m + a]).abs())
            .fold(S::zero(), S::max)
    }
}

/// `alpha_n = scale / n^kappa` with `0.5 < kappa <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LearningRate<S> {
    PowerLaw { kappa: S, scale: S },
}

impl<S: Scalar> LearningRate<S> {
    pub fn power_law(kappa: S, scale: S) -> Result<Self> {
        let schedule = Self::PowerLaw { kappa, scale };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        let Self::PowerLaw { kappa, scale } = *self;
        if !(kappa > S::lit(0.5) && kappa <= S::one()) {
            return Err(invalid("kappa", format!("{kappa} not in (0.5, 1]")));
        }
        if !(scale > S::zero() && scale <= S::one()) {
            return Err(invalid("scale", format!("{scale} not in (0, 1]")));
        }
        Ok(())
    }

    /// Learning rate for the `n`-th visit of a pair.
    pub fn rate(&self, n: u64) -> Result<S> {
        if n == 0 {
            return Err(invalid("n", "visit counts start at 1"));
        }
        let Self::PowerLaw { kappa, scale } = *self;
        Ok((scale / S::lit(n as f64).powf(kappa)).min(S::one()))
    }
}

/// `learning_rate(schedule, n)`.
pub fn learning_rate<S: Scalar>(schedule: &LearningRate<S>, n: u64) -> Result<S> {
    schedule.rate(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    QLearning,
    Sarsa0,
    SafeSarsa0,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::QLearning => "q_learning",
            Self::Sarsa0 => "sarsa0",
            Self::SafeSarsa0 => "safe_sarsa0",
        }
    }
}

/// `Y = r + gamma * bootstrap`, where the bootstrap is `op(Q(o', .))` for
/// Q-learning, `Q(o', a')` on the executed next action for Sarsa(0), and
/// `Q(o', a')` on a non-interrupted base-policy sample for Safe-Sarsa(0).
pub fn target_value<S: Scalar>(
    kind: AlgorithmKind,
    transition: &Transition<S>,
    q: &QTable<S>,
    gamma: S,
    operator: Option<&BackupOperator<S>>,
    realized_next_action: Option<usize>,
    noninterrupted_sample: Option<usize>,
) -> Result<S> {
    let o = transition.next_observation;
    check_index("observation", o, q.n_observations())?;
    let bootstrap = match kind {
        AlgorithmKind::QLearning => operator
            .ok_or(Error::MissingArgument {
                kind: "q_learning",
                what: "operator",
            })?
            .apply(q.row(o))?,
        AlgorithmKind::Sarsa0 => {
            let a = realized_next_action.ok_or(Error::MissingArgument {
                kind: "sarsa0",
                what: "realized next action",
            })?;
            check_index("action", a, q.n_actions())?;
            q.value(o, a)
        }
        AlgorithmKind::SafeSarsa0 => {
            let a = noninterrupted_sample.ok_or(Error::MissingArgument {
                kind: "safe_sarsa0",
                what: "non-interrupted action sample",
            })?;
            check_index("action", a, q.n_actions())?;
            q.value(o, a)
        }
    };
    Ok(transition.reward + gamma * bootstrap)
}

/// Eq-2 update of the experienced pair; returns the learning rate used.
pub fn q_update<S: Scalar>(
    q: &mut QTable<S>,
    transition: &Transition<S>,
    target: S,
    schedule: &LearningRate<S>,
) -> Result<S> {
    q.update(transition.observation, transition.action, target, schedule)
}

/// Everything about a learner that is not the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<S> {
    pub kind: AlgorithmKind,
    pub learning_rate: LearningRate<S>,
    /// Q-learning bootstrap operator; the strategy's own operator at the live
    /// parameters of the next observation when unset.
    #[serde(default)]
    pub operator: Option<BackupOperator<S>>,
    #[serde(default)]
    pub initial_q: S,
    /// Stop updating from this global step on.
    #[serde(default)]
    pub freeze_learning_at: Option<u64>,
    /// Entering one of these states ends an episode.
    #[serde(default)]
    pub terminal_states: Vec<usize>,
}

impl<S: Scalar> TrainConfig<S> {
    pub fn new(kind: AlgorithmKind, learning_rate: LearningRate<S>) -> Self {
        Self {
            kind,
            learning_rate,
            operator: None,
            initial_q: S::zero(),
            freeze_learning_at: None,
            terminal_states: Vec::new(),
        }
    }

    pub fn with_operator(mut self, operator: BackupOperator<S>) -> Self {
        self.operator = Some(operator);
        self
    }
}

/// An executed-action choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: usize,
    pub interrupted: bool,
}

/// A learner interacting with an environment, one step at a time.
#[derive(Debug, Clone)]
pub struct Agent<'a, S> {
    mdp: &'a TabularMdp<S>,
    channel: &'a ObservationChannel<S>,
    strategy: &'a ExplorationStrategy<S>,
    scheme: Option<&'a InterruptionScheme<S>>,
    config: &'a TrainConfig<S>,
    q: QTable<S>,
    rngs: RngStreams,
    time: u64,
    state: usize,
    observation: usize,
    /// Sarsa(0) picks its next action before updating.
    pending: Option<Decision>,
}

impl<'a, S: Scalar> Agent<'a, S> {
    pub fn new(
        mdp: &'a TabularMdp<S>,
        channel: &'a ObservationChannel<S>,
        strategy: &'a ExplorationStrategy<S>,
        scheme: Option<&'a InterruptionScheme<S>>,
        config: &'a TrainConfig<S>,
        seed: u64,
    ) -> Result<Self> {
        let m = mdp.n_actions();
        config.learning_rate.validate()?;
        strategy.validate(m)?;
        if let Some(op) = &config.operator {
            op.validate(m)?;
        }
        if let Some(scheme) = scheme {
            scheme.validate(channel.n_observations(), m)?;
        }
        let mut rngs = RngStreams::new(seed);
        let state = mdp.start_state();
        let observation = channel.observe(0, 0, state, &mut rngs.observation)?;
        Ok(Self {
            mdp,
            channel,
            strategy,
            scheme,
            config,
            q: QTable::new(channel.n_observations(), m, config.initial_q),
            rngs,
            time: 0,
            state,
            observation,
            pending: None,
        })
    }

    pub fn q(&self) -> &QTable<S> {
        &self.q
    }

    pub fn q_mut(&mut self) -> &mut QTable<S> {
        &mut self.q
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn observation(&self) -> usize {
        self.observation
    }

    pub fn rngs_mut(&mut self) -> &mut RngStreams {
        &mut self.rngs
    }

    pub fn set_scheme(&mut self, scheme: Option<&'a InterruptionScheme<S>>) {
        self.scheme = scheme;
    }

    /// Replaces every random stream, e.g. to branch coupled trials.
    pub fn reseed(&mut self, seed: u64) {
        self.rngs = RngStreams::new(seed);
    }

    /// Returns to the start state (a harness-level reset).
    pub fn reset(&mut self) -> Result<()> {
        self.state = self.mdp.start_state();
        self.observation = self
            .channel
            .observe(self.time, 0, self.state, &mut self.rngs.observation)?;
        self.pending = None;
        Ok(())
    }

    /// Whether updates are still being made.
    pub fn learning(&self) -> bool {
        self.config.freeze_learning_at.is_none_or(|t| self.time < t)
    }

    /// Clock value of `observation`, counting the visit about to happen.
    fn clock(&self, observation: usize, extra: u64) -> u64 {
        let visits = self.q.obs_visits(observation) + 1 + extra;
        self.strategy.clock_value(visits, self.time + 1)
    }

    /// The base (non-interrupted) policy at `observation`.
    pub fn base_distribution(&self, observation: usize, extra: u64) -> Result<Vec<S>> {
        self.strategy
            .distribution(observation, self.q.row(observation), self.clock(observation, extra))
    }

    /// Samples from `INT^theta(pi)` at `observation`. The base action always
    /// comes from the action stream; the interruption draw and the
    /// interruption-policy action come from the interruption stream.
    pub fn select(&mut self, observation: usize, extra: u64) -> Result<Decision> {
        let base = self.base_distribution(observation, extra)?;
        let action = sample_index(&base, &mut self.rngs.action);
        let Some(scheme) = self.scheme else {
            return Ok(Decision {
                action,
                interrupted: false,
            });
        };
        let visits = self.q.obs_visits(observation) + 1 + extra;
        let gate = scheme.theta(visits)? * scheme.initiation(observation);
        let u = crate::rng::uniform(&mut self.rngs.interruption);
        let forced = sample_index(scheme.policy(observation), &mut self.rngs.interruption);
        Ok(if S::lit(u) < gate {
            Decision {
                action: forced,
                interrupted: true,
            }
        } else {
            Decision {
                action,
                interrupted: false,
            }
        })
    }

    /// One interaction step with the agent's own action choice.
    pub fn step(&mut self) -> Result<Transition<S>> {
        let decision = match self.pending.take() {
            Some(d) => d,
            None => self.select(self.observation, 0)?,
        };
        self.step_with(decision)
    }

    /// One interaction step executing `decision`.
    pub fn step_with(&mut self, decision: Decision) -> Result<Transition<S>> {
        self.pending = None;
        let (next_state, reward) =
            self.mdp
                .step(self.state, decision.action, &mut self.rngs.transition)?;
        let next_observation = self.channel.observe(
            self.time + 1,
            decision.action,
            next_state,
            &mut self.rngs.observation,
        )?;
        let transition = Transition {
            time: self.time,
            state: self.state,
            observation: self.observation,
            action: decision.action,
            reward,
            next_state,
            next_observation,
            interrupted: decision.interrupted,
        };
        if self.learning() {
            self.learn(&transition)?;
        } else if self.config.kind == AlgorithmKind::Sarsa0 {
            self.pending = Some(self.select(next_observation, 0)?);
        }
        self.time += 1;
        self.state = next_state;
        self.observation = next_observation;
        Ok(transition)
    }

    fn learn(&mut self, transition: &Transition<S>) -> Result<()> {
        let o2 = transition.next_observation;
        let extra = u64::from(o2 == transition.observation);
        let m = self.mdp.n_actions();
        let target = match self.config.kind {
            AlgorithmKind::QLearning => {
                let live;
                let op = match &self.config.operator {
                    Some(op) => op,
                    None => {
                        live = self.strategy.operator(o2, self.clock(o2, extra), m);
                        &live
                    }
                };
                target_value(
                    AlgorithmKind::QLearning,
                    transition,
                    &self.q,
                    self.mdp.discount(),
                    Some(op),
                    None,
                    None,
                )?
            }
            AlgorithmKind::Sarsa0 => {
                let next = self.select(o2, extra)?;
                self.pending = Some(next);
                target_value(
                    AlgorithmKind::Sarsa0,
                    transition,
                    &self.q,
                    self.mdp.discount(),
                    None,
                    Some(next.action),
                    None,
                )?
            }
            AlgorithmKind::SafeSarsa0 => {
                let base = self.base_distribution(o2, extra)?;
                let sample = sample_index(&base, &mut self.rngs.bootstrap);
                target_value(
                    AlgorithmKind::SafeSarsa0,
                    transition,
                    &self.q,
                    self.mdp.discount(),
                    None,
                    None,
                    Some(sample),
                )?
            }
        };
        q_update(&mut self.q, transition, target, &self.config.learning_rate)?;
        Ok(())
    }

    /// Whether `transition` ended an episode.
    pub fn is_terminal(&self, transition: &Transition<S>) -> bool {
        self.config.terminal_states.contains(&transition.next_state)
    }
}

/// Runs `episodes` episodes of at most `horizon` steps and returns the final
/// table with the full trace. An episode ends on entering a terminal state or
/// after `horizon` steps. Each episode starts from the start state.
#[allow(clippy::too_many_arguments)]
pub fn train<S: Scalar>(
    mdp: &TabularMdp<S>,
    channel: &ObservationChannel<S>,
    strategy: &ExplorationStrategy<S>,
    scheme: Option<&InterruptionScheme<S>>,
    config: &TrainConfig<S>,
    episodes: u64,
    horizon: u64,
    seed: u64,
) -> Result<(QTable<S>, Vec<Transition<S>>)> {
    let mut trace = Vec::new();
    let q = train_with(mdp, channel, strategy, scheme, config, episodes, horizon, seed, |_, t| {
        trace.push(*t);
    })?;
    Ok((q, trace))
}

/// [`train`] that hands each transition to `observe` (with its episode index)
/// instead of storing the trace.
#[allow(clippy::too_many_arguments)]
pub fn train_with<S: Scalar, F>(
    mdp: &TabularMdp<S>,
    channel: &ObservationChannel<S>,
    strategy: &ExplorationStrategy<S>,
    scheme: Option<&InterruptionScheme<S>>,
    config: &TrainConfig<S>,
    episodes: u64,
    horizon: u64,
    seed: u64,
    mut observe: F,
) -> Result<QTable<S>>
where
    F: FnMut(u64, &Transition<S>),
{
    if horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    let mut agent = Agent::new(mdp, channel, strategy, scheme, config, seed)?;
    for episode in 0..episodes {
        for _ in 0..horizon {
            let t = agent.step()?;
            observe(episode, &t);
            if agent.is_terminal(&t) {
                break;
            }
        }
        agent.reset()?;
    }
    Ok(agent.q)
}
