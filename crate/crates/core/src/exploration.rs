//! Exploration strategies, their action distributions, the generalized
//! exploration parameter and NGLIE validation.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backup::{
    boltzmann_weights, check_non_expansion, mellowmax_backup, validate_omega,
    validate_rank_weights, BackupOperator, NonExpansionReport,
};
use crate::error::{invalid, Error, Result};
use crate::ranking::{rank_actions, TieBreak};
use crate::scalar::{max_of, min_of, Scalar};
use crate::stats::{decade_checkpoints, divergence_evidence, DivergenceEvidence};

/// A parameter as a function of the clock value `n >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Schedule<S> {
    Constant { value: S },
    /// `(1 - limit) * c / sqrt(n) + limit`.
    InverseSqrt { limit: S, c: S },
    /// `intercept + slope * n`.
    Linear { slope: S, intercept: S },
    /// `low` for `n` in the first `period` values, then `high`, and so on.
    Alternating { period: u64, low: S, high: S },
}

impl<S: Scalar> Schedule<S> {
    pub fn constant(value: S) -> Self {
        Self::Constant { value }
    }

    pub fn value(&self, n: u64) -> S {
        let n = n.max(1);
        match *self {
            Self::Constant { value } => value,
            Self::InverseSqrt { limit, c } => {
                (S::one() - limit) * c / S::lit(n as f64).sqrt() + limit
            }
            Self::Linear { slope, intercept } => intercept + slope * S::lit(n as f64),
            Self::Alternating { period, low, high } => {
                if ((n - 1) / period.max(1)) % 2 == 0 {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// Pointwise limit as `n -> inf`, if it exists (possibly infinite).
    pub fn limit(&self) -> Option<S> {
        match *self {
            Self::Constant { value } => Some(value),
            Self::InverseSqrt { limit, .. } => Some(limit),
            Self::Linear { slope, intercept } => Some(if slope > S::zero() {
                S::infinity()
            } else if slope < S::zero() {
                S::neg_infinity()
            } else {
                intercept
            }),
            Self::Alternating { low, high, .. } => (low == high).then_some(low),
        }
    }
}

/// What the schedule index `n` counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Visits to the current observation.
    #[default]
    Visits,
    /// Global step count.
    Global,
}

/// Strategy family with its parameter schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind<S> {
    EpsGreedy { epsilon: Schedule<S> },
    /// Schedules for `T(2), ..., T(|A|)`; `T(1)` is the complement.
    Rrr { tail: Vec<Schedule<S>> },
    Boltzmann { beta: Schedule<S> },
    Mellowmax { omega: Schedule<S> },
    RrrMellowmax { t1: Schedule<S>, omega: Schedule<S> },
}

/// Parameters of a strategy at one clock value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LiveParams<S> {
    EpsGreedy { epsilon: S },
    /// Full rank weights `T(1..=|A|)`.
    Rrr { weights: Vec<S> },
    Boltzmann { beta: S },
    Mellowmax { omega: S },
    RrrMellowmax { t1: S, omega: S },
}

impl<S: Scalar> StrategyKind<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EpsGreedy { .. } => "eps_greedy",
            Self::Rrr { .. } => "rrr",
            Self::Boltzmann { .. } => "boltzmann",
            Self::Mellowmax { .. } => "mellowmax",
            Self::RrrMellowmax { .. } => "rrr_mellowmax",
        }
    }

    pub fn params(&self, n: u64) -> LiveParams<S> {
        match self {
            Self::EpsGreedy { epsilon } => LiveParams::EpsGreedy {
                epsilon: epsilon.value(n),
            },
            Self::Rrr { tail } => LiveParams::Rrr {
                weights: rrr_weights(&tail.iter().map(|s| s.value(n)).collect::<Vec<_>>()),
            },
            Self::Boltzmann { beta } => LiveParams::Boltzmann { beta: beta.value(n) },
            Self::Mellowmax { omega } => LiveParams::Mellowmax {
                omega: omega.value(n),
            },
            Self::RrrMellowmax { t1, omega } => LiveParams::RrrMellowmax {
                t1: t1.value(n),
                omega: omega.value(n),
            },
        }
    }

    /// Parameters at the schedule limits.
    pub fn limit_params(&self) -> Result<LiveParams<S>> {
        let lim = |s: &Schedule<S>, name: &'static str| {
            s.limit()
                .ok_or_else(|| invalid(name, "schedule has no limit"))
        };
        Ok(match self {
            Self::EpsGreedy { epsilon } => LiveParams::EpsGreedy {
                epsilon: lim(epsilon, "epsilon")?,
            },
            Self::Rrr { tail } => LiveParams::Rrr {
                weights: rrr_weights(
                    &tail
                        .iter()
                        .map(|s| lim(s, "tail"))
                        .collect::<Result<Vec<_>>>()?,
                ),
            },
            Self::Boltzmann { beta } => LiveParams::Boltzmann {
                beta: lim(beta, "beta")?,
            },
            Self::Mellowmax { omega } => LiveParams::Mellowmax {
                omega: lim(omega, "omega")?,
            },
            Self::RrrMellowmax { t1, omega } => LiveParams::RrrMellowmax {
                t1: lim(t1, "t1")?,
                omega: lim(omega, "omega")?,
            },
        })
    }
}

/// `T(1) = 1 - sum(tail)` followed by the tail.
pub fn rrr_weights<S: Scalar>(tail: &[S]) -> Vec<S> {
    let rest: S = tail.iter().copied().sum();
    std::iter::once(S::one() - rest).chain(tail.iter().copied()).collect()
}

impl<S: Scalar> LiveParams<S> {
    pub fn validate(&self, n_actions: usize) -> Result<()> {
        match self {
            Self::EpsGreedy { epsilon } => {
                if *epsilon >= S::zero() && *epsilon <= S::one() {
                    Ok(())
                } else {
                    Err(invalid("epsilon", format!("{epsilon} not in [0, 1]")))
                }
            }
            Self::Rrr { weights } => validate_rank_weights(weights, n_actions, true),
            Self::Boltzmann { beta } => {
                if beta.is_nan() {
                    Err(invalid("beta", "NaN"))
                } else {
                    Ok(())
                }
            }
            Self::Mellowmax { omega } => {
                if omega.is_infinite() {
                    Ok(())
                } else {
                    validate_omega(*omega)
                }
            }
            Self::RrrMellowmax { t1, omega } => {
                if n_actions < 2 {
                    return Err(invalid("rrr_mellowmax", "needs at least two actions"));
                }
                if !(*t1 >= S::zero() && *t1 <= S::one()) {
                    return Err(invalid("t1", format!("{t1} not in [0, 1]")));
                }
                if omega.is_infinite() {
                    Ok(())
                } else {
                    validate_omega(*omega)
                }
            }
        }
    }

    /// The backup operator whose value is this policy's expectation.
    pub fn operator(&self, n_actions: usize) -> BackupOperator<S> {
        match self {
            Self::EpsGreedy { epsilon } => BackupOperator::RankAverage {
                weights: eps_weights(*epsilon, n_actions),
            },
            Self::Rrr { weights } => BackupOperator::RankAverage {
                weights: weights.clone(),
            },
            Self::Boltzmann { beta } if *beta == S::infinity() => BackupOperator::Max,
            Self::Boltzmann { beta } => BackupOperator::Boltzmann { beta: *beta },
            Self::Mellowmax { omega } if *omega == S::infinity() => BackupOperator::Max,
            Self::Mellowmax { omega } => BackupOperator::Mellowmax { omega: *omega },
            Self::RrrMellowmax { t1, omega } if *omega == S::infinity() => {
                let mut weights = vec![S::zero(); n_actions];
                weights[0] = *t1;
                weights[1] = S::one() - *t1;
                BackupOperator::RankAverage { weights }
            }
            Self::RrrMellowmax { t1, omega } => BackupOperator::RrrMellowmax {
                t1: *t1,
                omega: *omega,
            },
        }
    }

    /// Action distribution for a Q-row.
    pub fn distribution(&self, row: &[S], tie_break: TieBreak) -> Result<Vec<S>> {
        let m = row.len();
        if m == 0 {
            return Err(Error::EmptyRow);
        }
        self.validate(m)?;
        let ranking = rank_actions(row, tie_break);
        Ok(match self {
            Self::EpsGreedy { epsilon } => {
                let mut p = vec![*epsilon / S::lit(m as f64); m];
                let g = ranking.greedy();
                p[g] = p[g] + S::one() - *epsilon;
                p
            }
            Self::Rrr { weights } => (0..m).map(|a| weights[ranking.rank_of(a) - 1]).collect(),
            Self::Boltzmann { beta } => boltzmann_weights(row, *beta),
            Self::Mellowmax { omega } => {
                if omega.is_infinite() {
                    boltzmann_weights(row, *omega)
                } else {
                    boltzmann_weights(row, mellowmax_beta(row, *omega)?)
                }
            }
            Self::RrrMellowmax { t1, omega } => {
                let mut p = vec![S::zero(); m];
                p[ranking.greedy()] = *t1;
                let tail_actions = &ranking.order()[1..];
                let tail: Vec<S> = tail_actions.iter().map(|&a| row[a]).collect();
                let beta = if omega.is_infinite() {
                    *omega
                } else {
                    mellowmax_beta(&tail, *omega)?
                };
                let w = if omega.is_infinite() {
                    // All tail mass on rank 2.
                    let mut w = vec![S::zero(); tail.len()];
                    w[0] = S::one();
                    w
                } else {
                    boltzmann_weights(&tail, beta)
                };
                for (&a, &wa) in tail_actions.iter().zip(&w) {
                    p[a] = (S::one() - *t1) * wa;
                }
                p
            }
        })
    }

    /// `1 - op(delta)` for the indicator row `delta`.
    pub fn psi(&self, n_actions: usize) -> S {
        let mut indicator = vec![S::zero(); n_actions];
        indicator[0] = S::one();
        let value = self
            .operator(n_actions)
            .apply(&indicator)
            .unwrap_or(S::one());
        S::one() - value
    }
}

fn eps_weights<S: Scalar>(epsilon: S, n_actions: usize) -> Vec<S> {
    let share = epsilon / S::lit(n_actions as f64);
    let mut w = vec![share; n_actions];
    w[0] = w[0] + S::one() - epsilon;
    w
}

/// A strategy: a family, its clock, a tie-break rule and optional
/// per-observation overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationStrategy<S> {
    #[serde(flatten)]
    pub kind: StrategyKind<S>,
    #[serde(default)]
    pub clock: Clock,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<usize, StrategyKind<S>>,
}

impl<S: Scalar> ExplorationStrategy<S> {
    pub fn new(kind: StrategyKind<S>) -> Self {
        Self {
            kind,
            clock: Clock::Visits,
            tie_break: TieBreak::LowerIndex,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn eps_greedy(epsilon: S) -> Self {
        Self::new(StrategyKind::EpsGreedy {
            epsilon: Schedule::constant(epsilon),
        })
    }

    /// Fixed rank weights `T(1..=|A|)`.
    pub fn rrr(weights: &[S]) -> Self {
        Self::new(StrategyKind::Rrr {
            tail: weights[1..].iter().map(|&w| Schedule::constant(w)).collect(),
        })
    }

    pub fn boltzmann(beta: S) -> Self {
        Self::new(StrategyKind::Boltzmann {
            beta: Schedule::constant(beta),
        })
    }

    pub fn mellowmax(omega: S) -> Self {
        Self::new(StrategyKind::Mellowmax {
            omega: Schedule::constant(omega),
        })
    }

    pub fn rrr_mellowmax(t1: S, omega: S) -> Self {
        Self::new(StrategyKind::RrrMellowmax {
            t1: Schedule::constant(t1),
            omega: Schedule::constant(omega),
        })
    }

    pub fn kind_for(&self, observation: usize) -> &StrategyKind<S> {
        self.overrides.get(&observation).unwrap_or(&self.kind)
    }

    fn kinds(&self) -> impl Iterator<Item = &StrategyKind<S>> {
        std::iter::once(&self.kind).chain(self.overrides.values())
    }

    /// The schedule index for an observation visited `visits` times at global
    /// step `global`.
    pub fn clock_value(&self, visits: u64, global: u64) -> u64 {
        match self.clock {
            Clock::Visits => visits,
            Clock::Global => global,
        }
        .max(1)
    }

    pub fn params(&self, observation: usize, n: u64) -> LiveParams<S> {
        self.kind_for(observation).params(n)
    }

    /// Checks every family against `n_actions` at a spread of clock values.
    pub fn validate(&self, n_actions: usize) -> Result<()> {
        for kind in self.kinds() {
            if let StrategyKind::Rrr { tail } = kind {
                if tail.len() + 1 != n_actions {
                    return Err(invalid(
                        "tail",
                        format!("{} tail weights for {n_actions} actions", tail.len()),
                    ));
                }
            }
            for n in sample_clock(1_000_000) {
                kind.params(n).validate(n_actions)?;
            }
        }
        Ok(())
    }

    /// Action distribution at `observation` for `row` and clock value `n`.
    pub fn distribution(&self, observation: usize, row: &[S], n: u64) -> Result<Vec<S>> {
        self.params(observation, n).distribution(row, self.tie_break)
    }

    /// Expectation operator at the live parameters.
    pub fn operator(&self, observation: usize, n: u64, n_actions: usize) -> BackupOperator<S> {
        self.params(observation, n).operator(n_actions)
    }

    /// Expectation operator at the schedule limits.
    pub fn limit_operator(&self, observation: usize, n_actions: usize) -> Result<BackupOperator<S>> {
        Ok(self.kind_for(observation).limit_params()?.operator(n_actions))
    }

    /// Generalized exploration parameter at clock value `n`: one minus the
    /// largest operator value on an indicator row, over all observations.
    pub fn psi(&self, n_actions: usize, n: u64) -> S {
        self.kinds()
            .map(|k| k.params(n).psi(n_actions))
            .fold(S::infinity(), S::min)
    }

    /// `psi` at the schedule limits.
    pub fn limit_psi(&self, n_actions: usize) -> Option<S> {
        self.kinds()
            .map(|k| k.limit_params().ok().map(|p| p.psi(n_actions)))
            .try_fold(S::infinity(), |acc, p| p.map(|p| acc.min(p)))
    }
}

/// Clock values `1..=100` followed by a geometric grid up to `horizon`.
pub fn sample_clock(horizon: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (1..=horizon.min(100)).collect();
    let mut x = 100.0f64;
    while (x as u64) < horizon {
        x *= 1.1;
        out.push((x as u64).min(horizon));
    }
    out.dedup();
    out
}

/// `policy_distribution(strategy, row, n)` at observation 0.
pub fn policy_distribution<S: Scalar>(
    strategy: &ExplorationStrategy<S>,
    row: &[S],
    n: u64,
) -> Result<Vec<S>> {
    strategy.distribution(0, row, n)
}

/// The `beta` whose Boltzmann weights average `row` to `mellowmax(row, omega)`.
///
/// The weighted mean is increasing in `beta`, so the root is bracketed by
/// doubling and refined by safeguarded Newton steps. Constant rows give 0.
pub fn mellowmax_beta<S: Scalar>(row: &[S], omega: S) -> Result<S> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    validate_omega(omega)?;
    let hi_q = max_of(row);
    let lo_q = min_of(row);
    if hi_q == lo_q {
        return Ok(S::zero());
    }
    let target = mellowmax_backup(row, omega)?;
    if target >= hi_q {
        return Ok(S::infinity());
    }
    if target <= lo_q {
        return Ok(S::neg_infinity());
    }
    let residual = |beta: S| softmax_moments(row, beta, target).0;
    let two = S::lit(2.0);
    let (mut lo, mut hi) = if residual(S::zero()) < S::zero() {
        let (mut lo, mut hi) = (S::zero(), S::one());
        while residual(hi) < S::zero() {
            lo = hi;
            hi = hi * two;
            if !hi.is_finite() {
                return Ok(S::infinity());
            }
        }
        (lo, hi)
    } else {
        let (mut lo, mut hi) = (-S::one(), S::zero());
        while residual(lo) > S::zero() {
            hi = lo;
            lo = lo * two;
            if !lo.is_finite() {
                return Ok(S::neg_infinity());
            }
        }
        (lo, hi)
    };
    // Safeguarded Newton: d/dbeta of the weighted mean is the weighted variance.
    let mut beta = (lo + hi) / two;
    for _ in 0..200 {
        let (r, var) = softmax_moments(row, beta, target);
        if r == S::zero() {
            return Ok(beta);
        }
        if r < S::zero() {
            lo = beta;
        } else {
            hi = beta;
        }
        let newton = beta - r / var;
        if var > S::zero() && (newton - beta).abs() <= S::lit(4.0) * S::epsilon() * beta.abs() {
            return Ok(newton.max(lo).min(hi));
        }
        let next = if var > S::zero() && newton > lo && newton < hi {
            newton
        } else {
            (lo + hi) / two
        };
        if next == beta || hi - lo <= S::epsilon() * hi.abs().max(lo.abs()) {
            return Ok(next);
        }
        beta = next;
    }
    Ok(beta)
}

/// Softmax-weighted `mean(q - target)` and variance of `q` at finite `beta`,
/// without allocating.
fn softmax_moments<S: Scalar>(row: &[S], beta: S, target: S) -> (S, S) {
    let top = if beta >= S::zero() { max_of(row) } else { min_of(row) };
    let (mut total, mut first, mut second) = (S::zero(), S::zero(), S::zero());
    for &q in row {
        let e = (beta * (q - top)).exp();
        let d = q - target;
        total = total + e;
        first = first + e * d;
        second = second + e * d * d;
    }
    let mean = first / total;
    (mean, (second / total - mean * mean).max(S::zero()))
}

/// Boltzmann inverse temperature whose indicator-row weight is `1 - psi`.
pub fn boltzmann_beta_for_psi<S: Scalar>(psi: S, n_actions: usize) -> S {
    if psi <= S::zero() {
        return S::infinity();
    }
    let rest = S::lit((n_actions - 1) as f64);
    ((S::one() - psi) * rest / psi).ln()
}

/// Mellowmax `omega` whose indicator-row value is `1 - psi`, for
/// `0 < psi < 1 - 1/|A|`.
pub fn mellowmax_omega_for_psi<S: Scalar>(psi: S, n_actions: usize) -> Option<S> {
    let uniform = S::one() - S::one() / S::lit(n_actions as f64);
    if !(psi > S::zero() && psi < uniform) {
        return None;
    }
    let mut indicator = vec![S::zero(); n_actions];
    indicator[0] = S::one();
    let psi_of = |omega: S| S::one() - mellowmax_backup(&indicator, omega).unwrap_or(S::one());
    let two = S::lit(2.0);
    let mut hi = S::one();
    while psi_of(hi) > psi {
        hi = hi * two;
        if hi > S::lit(1e12) {
            return None;
        }
    }
    let mut lo = S::zero();
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if psi_of(mid) > psi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo + hi) / two)
}

/// Settings for [`validate_nglie`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NglieOptions<S> {
    pub horizon: u64,
    pub target_psi_inf: S,
    pub tol: S,
    pub non_expansion_trials: usize,
    pub search_budget: usize,
    /// Row used for the minimum action probability; an indicator row if unset.
    pub probe_row: Option<Vec<S>>,
}

impl<S: Scalar> NglieOptions<S> {
    pub fn new(horizon: u64, target_psi_inf: S, tol: S) -> Self {
        Self {
            horizon,
            target_psi_inf,
            tol,
            non_expansion_trials: 10_000,
            search_budget: 4_000,
            probe_row: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfiniteExplorationCheck {
    pub evidence: DivergenceEvidence,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitOperatorCheck<S> {
    pub operator: Option<BackupOperator<S>>,
    pub report: Option<NonExpansionReport<S>>,
    pub note: String,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPsiCheck<S> {
    pub psi_at_horizon: S,
    pub target: S,
    pub passes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Decreasing,
    Increasing,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentCheck<S> {
    pub psi_0: S,
    pub orientation: Orientation,
    /// Clock values whose `psi` left `[min(psi_0, psi_inf), max(psi_0, psi_inf)]`.
    pub violations: Vec<u64>,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NglieReport<S> {
    pub infinite_exploration: InfiniteExplorationCheck,
    pub limit_operator: LimitOperatorCheck<S>,
    pub limit_psi: LimitPsiCheck<S>,
    pub containment: ContainmentCheck<S>,
    pub passes: bool,
}

/// Checks the four NGLIE requirements at finite scale.
///
/// 1. the partial sums of the smallest action probability on the probe row
///    diverge (see [`divergence_evidence`]);
/// 2. the operator of the strategy's family that attains `psi_inf` is a
///    non-expansion (for eps-greedy, Boltzmann and mellowmax this inverts
///    `psi_inf`; for the rank-based families it is the schedule limit);
/// 3. `|psi_horizon - psi_inf| <= tol`;
/// 4. `psi_n` stays between `psi_1` and `psi_inf` on a grid of clock values.
pub fn validate_nglie<S: Scalar, R: Rng + ?Sized>(
    strategy: &ExplorationStrategy<S>,
    n_actions: usize,
    options: &NglieOptions<S>,
    rng: &mut R,
) -> Result<NglieReport<S>> {
    if options.horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    strategy.validate(n_actions)?;
    let probe = options.probe_row.clone().unwrap_or_else(|| {
        let mut row = vec![S::zero(); n_actions];
        row[0] = S::one();
        row
    });
    let psi_inf = options.target_psi_inf;

    let mut min_probs: BTreeMap<u64, f64> = BTreeMap::new();
    let mut failure = None;
    let evidence = divergence_evidence(&decade_checkpoints(options.horizon.max(1000)), |n| {
        let mut lowest = f64::INFINITY;
        for kind in strategy.kinds() {
            match kind.params(n).distribution(&probe, strategy.tie_break) {
                Ok(p) => lowest = lowest.min(min_of(&p).as_f64()),
                Err(e) => failure = Some(e),
            }
        }
        if n <= 10 {
            min_probs.insert(n, lowest);
        }
        lowest
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let infinite_exploration = InfiniteExplorationCheck {
        passes: evidence.divergent,
        evidence,
    };

    let limit_operator = limit_operator_check(strategy, n_actions, options, rng)?;

    let psi_at_horizon = strategy.psi(n_actions, options.horizon);
    let limit_psi = LimitPsiCheck {
        psi_at_horizon,
        target: psi_inf,
        passes: (psi_at_horizon - psi_inf).abs() <= options.tol,
    };

    let psi_0 = strategy.psi(n_actions, 1);
    let slack = S::lit(1e-12);
    let (lo, hi) = (psi_0.min(psi_inf) - slack, psi_0.max(psi_inf) + slack);
    let violations: Vec<u64> = sample_clock(options.horizon)
        .into_iter()
        .filter(|&n| {
            let psi = strategy.psi(n_actions, n);
            psi < lo || psi > hi
        })
        .collect();
    let orientation = if (psi_0 - psi_inf).abs() <= slack {
        Orientation::Constant
    } else if psi_0 > psi_inf {
        Orientation::Decreasing
    } else {
        Orientation::Increasing
    };
    let containment = ContainmentCheck {
        psi_0,
        orientation,
        passes: violations.is_empty(),
        violations,
    };

    let passes = infinite_exploration.passes
        && limit_operator.passes
        && limit_psi.passes
        && containment.passes;
    Ok(NglieReport {
        infinite_exploration,
        limit_operator,
        limit_psi,
        containment,
        passes,
    })
}

fn limit_operator_check<S: Scalar, R: Rng + ?Sized>(
    strategy: &ExplorationStrategy<S>,
    n_actions: usize,
    options: &NglieOptions<S>,
    rng: &mut R,
) -> Result<LimitOperatorCheck<S>> {
    let psi = options.target_psi_inf;
    let uniform = S::one() - S::one() / S::lit(n_actions as f64);
    let mut operators = Vec::new();
    let mut notes = Vec::new();
    for kind in strategy.kinds() {
        let op = match kind {
            StrategyKind::EpsGreedy { .. } => {
                let eps = psi * S::lit(n_actions as f64) / S::lit((n_actions - 1) as f64);
                if eps > S::one() {
                    notes.push(format!("psi_inf {psi} is out of reach for eps-greedy"));
                    None
                } else {
                    Some(LiveParams::EpsGreedy { epsilon: eps }.operator(n_actions))
                }
            }
            StrategyKind::Boltzmann { .. } => {
                let beta = boltzmann_beta_for_psi(psi, n_actions);
                notes.push(format!("boltzmann beta attaining psi_inf: {beta}"));
                Some(LiveParams::Boltzmann { beta }.operator(n_actions))
            }
            StrategyKind::Mellowmax { .. } => {
                if psi <= S::zero() {
                    Some(BackupOperator::Max)
                } else if (psi - uniform).abs() <= S::lit(1e-12) {
                    Some(LiveParams::EpsGreedy { epsilon: S::one() }.operator(n_actions))
                } else {
                    match mellowmax_omega_for_psi(psi, n_actions) {
                        Some(omega) => {
                            notes.push(format!("mellowmax omega attaining psi_inf: {omega}"));
                            Some(BackupOperator::Mellowmax { omega })
                        }
                        None => {
                            notes.push(format!("psi_inf {psi} is out of reach for mellowmax"));
                            None
                        }
                    }
                }
            }
            StrategyKind::Rrr { .. } | StrategyKind::RrrMellowmax { .. } => match kind.limit_params() {
                Ok(p) => Some(p.operator(n_actions)),
                Err(e) => {
                    notes.push(e.to_string());
                    None
                }
            },
        };
        operators.push(op);
    }
    let mut passes = true;
    let mut worst: Option<(BackupOperator<S>, NonExpansionReport<S>)> = None;
    for op in operators {
        let Some(op) = op else {
            passes = false;
            continue;
        };
        let report = check_non_expansion(
            &op,
            n_actions,
            options.non_expansion_trials,
            options.search_budget,
            rng,
        )?;
        passes &= report.holds;
        let replace = match &worst {
            None => true,
            Some((_, w)) => !report.holds && w.holds,
        };
        if replace {
            worst = Some((op, report));
        }
    }
    let (operator, report) = match worst {
        Some((op, r)) => (Some(op), Some(r)),
        None => (None, None),
    };
    Ok(LimitOperatorCheck {
        operator,
        report,
        note: notes.join("; "),
        passes,
    })
}
