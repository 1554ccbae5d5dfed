//! Interruption schemes, their schedules, the exploration check for
//! interruptible policies and a dynamic safe interruptibility test.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, invalid, Error, Result};
use crate::exploration::ExplorationStrategy;
use crate::learning::{Agent, AlgorithmKind, Decision, TrainConfig};
use crate::mdp::{ObservationChannel, TabularMdp};
use crate::rng::derive_seed;
use crate::scalar::{min_of, Scalar};
use crate::stats::{decade_checkpoints, divergence_evidence, ks_two_sample, DivergenceEvidence};

/// Compliance schedule `theta_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ThetaSchedule<S> {
    /// `1 - c' / sqrt(n)`.
    Sqrt { c_prime: S },
    /// `1 - c' / n`.
    Linear { c_prime: S },
    Constant { value: S },
}

impl<S: Scalar> ThetaSchedule<S> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Sqrt { c_prime } | Self::Linear { c_prime } => {
                if c_prime > S::zero() && c_prime <= S::one() {
                    Ok(())
                } else {
                    Err(invalid("c_prime", format!("{c_prime} not in (0, 1]")))
                }
            }
            Self::Constant { value } => {
                if value >= S::zero() && value <= S::one() {
                    Ok(())
                } else {
                    Err(invalid("theta", format!("{value} not in [0, 1]")))
                }
            }
        }
    }

    /// `theta_n`, clamped to `[0, 1]`.
    pub fn value(&self, n: u64) -> Result<S> {
        if n == 0 {
            return Err(invalid("n", "observation counts start at 1"));
        }
        let n = S::lit(n as f64);
        let v = match *self {
            Self::Sqrt { c_prime } => S::one() - c_prime / n.sqrt(),
            Self::Linear { c_prime } => S::one() - c_prime / n,
            Self::Constant { value } => value,
        };
        Ok(v.max(S::zero()).min(S::one()))
    }
}

/// The triple `(I, theta, pi_INT)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterruptionScheme<S> {
    /// `I(o)` per observation.
    pub initiation: Vec<S>,
    pub theta: ThetaSchedule<S>,
    /// `pi_INT(. | o)` per observation.
    pub pi_int: Vec<Vec<S>>,
    /// Overrides the schedule when set (used to force `theta` to 0 or 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_theta: Option<S>,
}

impl<S: Scalar> InterruptionScheme<S> {
    pub fn new(initiation: Vec<S>, theta: ThetaSchedule<S>, pi_int: Vec<Vec<S>>) -> Result<Self> {
        let scheme = Self {
            initiation,
            theta,
            pi_int,
            forced_theta: None,
        };
        let m = scheme.pi_int.first().map_or(0, Vec::len);
        scheme.validate(scheme.initiation.len(), m)?;
        Ok(scheme)
    }

    /// Binary initiation on `zone` with a deterministic `action` there.
    pub fn deterministic(
        n_observations: usize,
        n_actions: usize,
        zone: &[usize],
        action: usize,
        theta: ThetaSchedule<S>,
    ) -> Result<Self> {
        check_index("action", action, n_actions)?;
        let mut initiation = vec![S::zero(); n_observations];
        for &o in zone {
            check_index("observation", o, n_observations)?;
            initiation[o] = S::one();
        }
        let mut row = vec![S::zero(); n_actions];
        row[action] = S::one();
        Self::new(initiation, theta, vec![row; n_observations])
    }

    pub fn validate(&self, n_observations: usize, n_actions: usize) -> Result<()> {
        self.theta.validate()?;
        if self.initiation.len() != n_observations || self.pi_int.len() != n_observations {
            return Err(Error::Shape(format!(
                "scheme covers {} / {} observations, expected {n_observations}",
                self.initiation.len(),
                self.pi_int.len()
            )));
        }
        if self
            .initiation
            .iter()
            .any(|i| !(*i >= S::zero() && *i <= S::one()))
        {
            return Err(invalid("initiation", "values must lie in [0, 1]"));
        }
        let tol = S::simplex_tolerance(n_actions);
        for row in &self.pi_int {
            let sum: S = row.iter().copied().sum();
            if row.len() != n_actions
                || row.iter().any(|p| !(*p >= S::zero()))
                || (sum - S::one()).abs() > tol
            {
                return Err(invalid("pi_int", "rows must be distributions over the actions"));
            }
        }
        if let Some(v) = self.forced_theta {
            if !(v >= S::zero() && v <= S::one()) {
                return Err(invalid("forced_theta", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn with_forced_theta(&self, theta: Option<S>) -> Self {
        Self {
            forced_theta: theta,
            ..self.clone()
        }
    }

    pub fn initiation(&self, observation: usize) -> S {
        self.initiation[observation]
    }

    pub fn policy(&self, observation: usize) -> &[S] {
        &self.pi_int[observation]
    }

    /// `theta` for the `n`-th visit of an observation.
    pub fn theta(&self, n: u64) -> Result<S> {
        match self.forced_theta {
            Some(v) => Ok(v),
            None => self.theta.value(n),
        }
    }

    /// Observations where interruption can be initiated.
    pub fn zone(&self) -> Vec<usize> {
        (0..self.initiation.len())
            .filter(|&o| self.initiation[o] > S::zero())
            .collect()
    }
}

/// `theta(scheme, n)`.
pub fn theta<S: Scalar>(scheme: &InterruptionScheme<S>, n: u64) -> Result<S> {
    scheme.theta(n)
}

/// `INT^theta(pi)(. | o) = theta I(o) pi_INT(. | o) + (1 - theta I(o)) pi(. | o)`.
pub fn interruptible_distribution<S: Scalar>(
    scheme: &InterruptionScheme<S>,
    base: &[S],
    observation: usize,
    n: u64,
) -> Result<Vec<S>> {
    check_index("observation", observation, scheme.initiation.len())?;
    let pi_int = scheme.policy(observation);
    if pi_int.len() != base.len() {
        return Err(Error::Shape("base policy and pi_INT differ in length".into()));
    }
    let gate = scheme.theta(n)? * scheme.initiation(observation);
    Ok(base
        .iter()
        .zip(pi_int)
        .map(|(&p, &q)| gate * q + (S::one() - gate) * p)
        .collect())
}

/// Rank weight of the interruptible RRR schedule for the `n`-th visit.
///
/// For `k >= 2` this is `(1 - T_inf(k)) T_first(k) / sqrt(n) + T_inf(k)`;
/// rank 1 takes the complement. `t_inf` and `t_first` hold ranks `2..=|A|`.
pub fn rrr_interruptible_t<S: Scalar>(t_inf: &[S], t_first: &[S], n: u64, k: usize) -> Result<S> {
    if t_inf.len() != t_first.len() {
        return Err(Error::Shape("t_inf and t_first differ in length".into()));
    }
    if n == 0 {
        return Err(invalid("n", "visit counts start at 1"));
    }
    if k == 0 || k > t_inf.len() + 1 {
        return Err(invalid("k", format!("rank {k} out of range")));
    }
    let tail = |i: usize| -> Result<S> {
        let (inf, first) = (t_inf[i], t_first[i]);
        if !(inf >= S::zero() && inf < S::one()) {
            return Err(invalid("t_inf", format!("{inf} not in [0, 1)")));
        }
        if !(first > S::zero()) {
            return Err(invalid("t_first", format!("{first} must be positive")));
        }
        Ok((S::one() - inf) * first / S::lit(n as f64).sqrt() + inf)
    };
    if k >= 2 {
        return tail(k - 2);
    }
    let mut rest = S::zero();
    for i in 0..t_inf.len() {
        rest = rest + tail(i)?;
    }
    let t1 = S::one() - rest;
    if t1 < S::zero() {
        return Err(invalid("t_first", format!("rank-1 complement {t1} is negative")));
    }
    Ok(t1)
}

/// `(1 - eps_inf) c / sqrt(n) + eps_inf`; `c` may be 0 only if `eps_inf > 0`.
pub fn eps_interruptible<S: Scalar>(c: S, eps_inf: S, n: u64) -> Result<S> {
    let unit = |x: S| x >= S::zero() && x <= S::one();
    if !unit(c) || !unit(eps_inf) {
        return Err(invalid("c", "c and eps_inf must lie in [0, 1]"));
    }
    if c == S::zero() && eps_inf == S::zero() {
        return Err(invalid("c", "c = 0 requires eps_inf > 0"));
    }
    if n == 0 {
        return Err(invalid("n", "visit counts start at 1"));
    }
    Ok((S::one() - eps_inf) * c / S::lit(n as f64).sqrt() + eps_inf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfiniteExplorationReport {
    /// The observation with the largest `I(o)`, whose bound is summed.
    pub observation: usize,
    pub evidence: DivergenceEvidence,
    pub divergent: bool,
}

/// Sums the per-visit lower bound `min_a INT^theta(pi)(a | o)` over visits
/// `i <= horizon` at the observation with the largest `I(o)`, using `probe_row`
/// (an indicator row if `None`) as the Q-row.
pub fn verify_infinite_exploration<S: Scalar>(
    scheme: &InterruptionScheme<S>,
    strategy: &ExplorationStrategy<S>,
    n_actions: usize,
    horizon: u64,
    probe_row: Option<&[S]>,
) -> Result<InfiniteExplorationReport> {
    let observation = (0..scheme.initiation.len())
        .max_by(|&a, &b| {
            scheme.initiation[a]
                .partial_cmp(&scheme.initiation[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.cmp(&a))
        })
        .ok_or_else(|| Error::Shape("scheme has no observations".into()))?;
    let probe = probe_row.map(<[S]>::to_vec).unwrap_or_else(|| {
        let mut row = vec![S::zero(); n_actions];
        row[0] = S::one();
        row
    });
    let mut failure = None;
    let evidence = divergence_evidence(&decade_checkpoints(horizon), |i| {
        let bound = strategy
            .distribution(observation, &probe, i)
            .and_then(|base| interruptible_distribution(scheme, &base, observation, i));
        match bound {
            Ok(p) => min_of(&p).as_f64(),
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(InfiniteExplorationReport {
        observation,
        divergent: evidence.divergent,
        evidence,
    })
}

/// Settings for [`test_dynamic_safe_interruptibility`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsiOptions {
    /// Steps of ordinary training before contexts are frozen.
    pub warmup_steps: u64,
    pub contexts: usize,
    pub trials: usize,
    pub significance: f64,
    pub seed: u64,
}

impl Default for DsiOptions {
    fn default() -> Self {
        Self {
            warmup_steps: 20_000,
            contexts: 20,
            trials: 10_000,
            significance: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsiContext {
    pub time: u64,
    pub observation: usize,
    pub action: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsiReport {
    pub algorithm: AlgorithmKind,
    /// Per-context threshold after the Bonferroni correction.
    pub threshold: f64,
    pub contexts: Vec<DsiContext>,
    /// Largest KS statistic over contexts.
    pub statistic: f64,
    /// Smallest p-value over contexts.
    pub p_value: f64,
    pub passes: bool,
}

/// Freezes `contexts` mid-training snapshots `(Q_t, s_t, a_t)` and, for each,
/// draws `trials` next-step updates with `theta` forced to 0 and to 1 under
/// coupled seeds. The two samples of `Q_{t+1}(o_t, a_t)` are compared with a
/// two-sample KS test at `significance / contexts`.
///
/// Contexts are drawn from the second half of the warm-up among steps whose
/// next observation can be interrupted, falling back to all steps there.
/// Entering a terminal state of `config` restarts from the start state.
#[allow(clippy::too_many_arguments)]
pub fn test_dynamic_safe_interruptibility<S: Scalar>(
    mdp: &TabularMdp<S>,
    channel: &ObservationChannel<S>,
    strategy: &ExplorationStrategy<S>,
    scheme: &InterruptionScheme<S>,
    config: &TrainConfig<S>,
    options: &DsiOptions,
) -> Result<DsiReport> {
    if options.trials < 1000 {
        return Err(invalid("trials", "at least 1000 trials are required"));
    }
    if options.contexts == 0 || options.warmup_steps < 2 {
        return Err(invalid("contexts", "need at least one context and two warm-up steps"));
    }
    let half = options.warmup_steps / 2;
    let mut candidates = Vec::new();
    let mut fallback = Vec::new();
    {
        let mut agent = Agent::new(mdp, channel, strategy, Some(scheme), config, options.seed)?;
        for _ in 0..options.warmup_steps {
            let t = agent.step()?;
            if agent.is_terminal(&t) {
                agent.reset()?;
            }
            if t.time >= half {
                fallback.push(t.time);
                if scheme.initiation(t.next_observation) > S::zero() {
                    candidates.push(t.time);
                }
            }
        }
    }
    if candidates.len() < options.contexts {
        candidates = fallback;
    }
    let mut picker = ChaCha8Rng::seed_from_u64(derive_seed(options.seed, 0xD51));
    let count = options.contexts.min(candidates.len());
    let mut chosen: Vec<u64> = sample(&mut picker, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    chosen.sort_unstable();

    let off = scheme.with_forced_theta(Some(S::zero()));
    let on = scheme.with_forced_theta(Some(S::one()));
    let threshold = options.significance / options.contexts as f64;
    let mut contexts = Vec::with_capacity(count);
    let mut agent = Agent::new(mdp, channel, strategy, Some(scheme), config, options.seed)?;
    let mut decisions = Vec::new();
    for &time in &chosen {
        while agent.time() < time {
            let t = agent.step()?;
            if agent.is_terminal(&t) {
                agent.reset()?;
            }
        }
        // The step at `time` as the live run took it fixes a_t.
        let mut probe = agent.clone();
        let executed = probe.step()?;
        decisions.push(executed.action);
        let frozen = Decision {
            action: executed.action,
            interrupted: false,
        };
        let (o, a) = (executed.observation, executed.action);
        let context_seed = derive_seed(options.seed, 1 + time);
        let mut samples = [Vec::with_capacity(options.trials), Vec::with_capacity(options.trials)];
        for trial in 0..options.trials {
            let trial_seed = derive_seed(context_seed, trial as u64);
            for (arm, forced) in [&off, &on].into_iter().enumerate() {
                let mut branch = agent.clone();
                branch.set_scheme(Some(forced));
                branch.reseed(trial_seed);
                branch.step_with(frozen)?;
                samples[arm].push(branch.q().value(o, a).as_f64());
            }
        }
        let ks = ks_two_sample(&samples[0], &samples[1]);
        contexts.push(DsiContext {
            time,
            observation: o,
            action: a,
            statistic: ks.statistic,
            p_value: ks.p_value,
            rejected: ks.p_value < threshold,
        });
    }
    let statistic = contexts.iter().map(|c| c.statistic).fold(0.0, f64::max);
    let p_value = contexts.iter().map(|c| c.p_value).fold(1.0, f64::min);
    Ok(DsiReport {
        algorithm: config.kind,
        threshold,
        passes: contexts.iter().all(|c| !c.rejected),
        contexts,
        statistic,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn theta_examples() {
        let sqrt = ThetaSchedule::Sqrt { c_prime: 1.0 };
        assert_eq!(sqrt.value(4).unwrap(), 0.5);
        assert_eq!(sqrt.value(1).unwrap(), 0.0);
        assert!(sqrt.value(0).is_err());
        let lin = ThetaSchedule::Linear { c_prime: 0.5 };
        assert_relative_eq!(lin.value(10).unwrap(), 0.95, epsilon = 1e-15);
    }

    #[test]
    fn mixture_examples() {
        let scheme = InterruptionScheme::deterministic(
            1,
            2,
            &[0],
            0,
            ThetaSchedule::Constant { value: 0.5 },
        )
        .unwrap();
        let p = interruptible_distribution(&scheme, &[0.5, 0.5], 0, 1).unwrap();
        assert_eq!(p, vec![0.75, 0.25]);
        let p = interruptible_distribution(&scheme.with_forced_theta(Some(0.0)), &[0.3, 0.7], 0, 1)
            .unwrap();
        assert_eq!(p, vec![0.3, 0.7]);
        let p = interruptible_distribution(&scheme.with_forced_theta(Some(1.0)), &[0.3, 0.7], 0, 1)
            .unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn compliance_and_interruptible_tail_examples() {
        assert_relative_eq!(rrr_interruptible_t(&[0.1], &[0.3], 9, 2).unwrap(), 0.19, epsilon = 1e-15);
        assert_relative_eq!(rrr_interruptible_t(&[0.1], &[0.3], 9, 1).unwrap(), 0.81, epsilon = 1e-15);
        assert_relative_eq!(rrr_interruptible_t(&[0.0], &[0.4], 16, 2).unwrap(), 0.1, epsilon = 1e-15);
        assert!(rrr_interruptible_t(&[0.5, 0.4], &[1.0, 1.0], 1, 1).is_err());
        assert_relative_eq!(eps_interruptible(1.0, 0.1, 4).unwrap(), 0.55, epsilon = 1e-15);
        assert_eq!(eps_interruptible(1.0, 0.0, 1).unwrap(), 1.0);
        assert_eq!(eps_interruptible(0.0, 0.1, 77).unwrap(), 0.1);
        assert!(eps_interruptible(0.0, 0.0, 1).is_err());
    }

    #[test]
    fn constant_full_interruption_does_not_explore() {
        let scheme =
            InterruptionScheme::deterministic(1, 3, &[0], 0, ThetaSchedule::Constant { value: 1.0 })
                .unwrap();
        let strategy = ExplorationStrategy::eps_greedy(0.3);
        let r = verify_infinite_exploration(&scheme, &strategy, 3, 100_000, None).unwrap();
        assert!(!r.divergent);
    }
}
