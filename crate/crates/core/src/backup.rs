//! Backup operators, an empirical non-expansion checker and a generalized
//! value-iteration solver.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, invalid, Error, Result};
use crate::mdp::TabularMdp;
use crate::ranking::{near_ties, rank_actions, ActionRanking, TieBreak};
use crate::scalar::{max_of, mean_of, min_of, Scalar};

/// An aggregation `Q(s', .) -> R` used in the Bellman target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackupOperator<S> {
    Max,
    /// `sum_k weights[k] * (value at rank k + 1)`.
    RankAverage { weights: Vec<S> },
    /// Softmax-weighted mean with inverse temperature `beta`.
    Boltzmann { beta: S },
    Mellowmax { omega: S },
    /// `t1 * rank-1 value + (1 - t1) * mellowmax over ranks 2..`.
    RrrMellowmax { t1: S, omega: S },
    /// Value at the 1-based `rank`.
    RankSelect { rank: usize },
}

impl<S: Scalar> BackupOperator<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Max => "max",
            Self::RankAverage { .. } => "rank_average",
            Self::Boltzmann { .. } => "boltzmann",
            Self::Mellowmax { .. } => "mellowmax",
            Self::RrrMellowmax { .. } => "rrr_mellowmax",
            Self::RankSelect { .. } => "rank_select",
        }
    }

    /// Checks parameters against an action count.
    pub fn validate(&self, n_actions: usize) -> Result<()> {
        if n_actions == 0 {
            return Err(Error::EmptyRow);
        }
        match self {
            Self::Max => Ok(()),
            Self::RankAverage { weights } => validate_rank_weights(weights, n_actions, true),
            Self::Boltzmann { beta } => {
                if beta.is_nan() {
                    Err(invalid("beta", "NaN"))
                } else {
                    Ok(())
                }
            }
            Self::Mellowmax { omega } => validate_omega(*omega),
            Self::RrrMellowmax { t1, omega } => {
                if n_actions < 2 {
                    return Err(invalid("rrr_mellowmax", "needs at least two actions"));
                }
                if !(*t1 >= S::zero() && *t1 <= S::one()) {
                    return Err(invalid("t1", format!("{t1} not in [0, 1]")));
                }
                validate_omega(*omega)
            }
            Self::RankSelect { rank } => {
                if *rank == 0 || *rank > n_actions {
                    Err(invalid("rank", format!("{rank} not in 1..={n_actions}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Applies the operator to one row, ranking it with the index tie-break
    /// when the operator is rank-based.
    pub fn apply(&self, row: &[S]) -> Result<S> {
        if row.is_empty() {
            return Err(Error::EmptyRow);
        }
        match self {
            Self::Max => max_backup(row),
            Self::Boltzmann { beta } => boltzmann_backup(row, *beta),
            Self::Mellowmax { omega } => mellowmax_backup(row, *omega),
            Self::RankAverage { weights } => {
                rank_average_backup(row, weights, &rank_actions(row, TieBreak::LowerIndex))
            }
            Self::RrrMellowmax { t1, omega } => {
                rrr_mellowmax_backup(row, *t1, *omega, &rank_actions(row, TieBreak::LowerIndex))
            }
            Self::RankSelect { rank } => {
                rank_select_backup(row, *rank, &rank_actions(row, TieBreak::LowerIndex))
            }
        }
    }

    /// Whether the operator depends on the action ranking.
    pub fn is_rank_based(&self) -> bool {
        matches!(
            self,
            Self::RankAverage { .. } | Self::RrrMellowmax { .. } | Self::RankSelect { .. }
        )
    }
}

pub(crate) fn validate_omega<S: Scalar>(omega: S) -> Result<()> {
    if omega == S::zero() || !omega.is_finite() {
        Err(invalid("omega", format!("{omega} must be finite and nonzero")))
    } else {
        Ok(())
    }
}

/// Rank weights must be nonnegative and non-increasing; `normalized` also
/// requires them to sum to one.
pub(crate) fn validate_rank_weights<S: Scalar>(
    weights: &[S],
    n_actions: usize,
    normalized: bool,
) -> Result<()> {
    if weights.len() != n_actions {
        return Err(invalid(
            "rank_weights",
            format!("{} weights for {n_actions} actions", weights.len()),
        ));
    }
    if weights.iter().any(|w| !(*w >= S::zero())) {
        return Err(invalid("rank_weights", "negative weight"));
    }
    let slack = S::simplex_tolerance(n_actions);
    if weights.windows(2).any(|w| w[1] > w[0] + slack) {
        return Err(invalid("rank_weights", "weights must be non-increasing over ranks"));
    }
    if normalized {
        let sum: S = weights.iter().copied().sum();
        if (sum - S::one()).abs() > slack {
            return Err(invalid("rank_weights", format!("weights sum to {sum}")));
        }
    }
    Ok(())
}

pub fn max_backup<S: Scalar>(row: &[S]) -> Result<S> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    Ok(max_of(row))
}

pub fn rank_average_backup<S: Scalar>(
    row: &[S],
    weights: &[S],
    ranking: &ActionRanking,
) -> Result<S> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    if weights.len() != row.len() || ranking.len() != row.len() {
        return Err(Error::Shape(format!(
            "row of {} actions with {} weights and a ranking of {}",
            row.len(),
            weights.len(),
            ranking.len()
        )));
    }
    Ok(ranking
        .order()
        .iter()
        .zip(weights)
        .map(|(&a, &w)| w * row[a])
        .sum())
}

/// `log(mean(exp(omega * row))) / omega`, shifted by the row extreme and
/// evaluated through `ln_1p`/`exp_m1` so small `omega` stays accurate.
pub fn mellowmax_backup<S: Scalar>(row: &[S], omega: S) -> Result<S> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    validate_omega(omega)?;
    let pivot = if omega > S::zero() { max_of(row) } else { min_of(row) };
    let shifted: Vec<S> = row.iter().map(|&q| (omega * (q - pivot)).exp_m1()).collect();
    Ok(pivot + mean_of(&shifted).ln_1p() / omega)
}

/// Softmax weights `exp(beta q) / sum exp(beta q)`, shifted for stability.
pub fn boltzmann_weights<S: Scalar>(row: &[S], beta: S) -> Vec<S> {
    if beta == S::zero() {
        return vec![S::one() / S::lit(row.len() as f64); row.len()];
    }
    if beta.is_infinite() {
        // Uniform over the arg-max (or arg-min) set.
        let target = if beta > S::zero() { max_of(row) } else { min_of(row) };
        let hits = S::lit(row.iter().filter(|&&q| q == target).count() as f64);
        return row
            .iter()
            .map(|&q| if q == target { S::one() / hits } else { S::zero() })
            .collect();
    }
    let z: Vec<S> = row.iter().map(|&q| beta * q).collect();
    let top = max_of(&z);
    let e: Vec<S> = z.iter().map(|&x| (x - top).exp()).collect();
    let total: S = e.iter().copied().sum();
    e.into_iter().map(|x| x / total).collect()
}

pub fn boltzmann_backup<S: Scalar>(row: &[S], beta: S) -> Result<S> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    if beta.is_nan() {
        return Err(invalid("beta", "NaN"));
    }
    let w = boltzmann_weights(row, beta);
    let value: S = w.iter().zip(row).map(|(&w, &q)| w * q).sum();
    // Guard the convex-combination bound against rounding.
    Ok(value.max(min_of(row)).min(max_of(row)))
}

pub fn rrr_mellowmax_backup<S: Scalar>(
    row: &[S],
    t1: S,
    omega: S,
    ranking: &ActionRanking,
) -> Result<S> {
    if row.len() < 2 {
        return Err(invalid("rrr_mellowmax", "needs at least two actions"));
    }
    if ranking.len() != row.len() {
        return Err(Error::Shape("ranking does not match row".into()));
    }
    if !(t1 >= S::zero() && t1 <= S::one()) {
        return Err(invalid("t1", format!("{t1} not in [0, 1]")));
    }
    let sorted = ranking.sorted(row);
    let tail = mellowmax_backup(&sorted[1..], omega)?;
    Ok(t1 * sorted[0] + (S::one() - t1) * tail)
}

pub fn rank_select_backup<S: Scalar>(row: &[S], rank: usize, ranking: &ActionRanking) -> Result<S> {
    if rank == 0 {
        return Err(invalid("rank", "ranks start at 1"));
    }
    check_index("rank", rank - 1, row.len())?;
    if ranking.len() != row.len() {
        return Err(Error::Shape("ranking does not match row".into()));
    }
    Ok(row[ranking.action_at(rank)])
}

/// A pair of rows and how far the operator separates them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness<S> {
    pub q: Vec<S>,
    pub q_prime: Vec<S>,
    /// `|op(q') - op(q)|`.
    pub output_gap: S,
    /// `max_a |q'(a) - q(a)|`.
    pub input_gap: S,
    /// `output_gap - input_gap`; positive means a violation.
    pub excess: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonExpansionReport<S> {
    pub operator: String,
    pub n_actions: usize,
    pub trials: usize,
    pub search_evaluations: usize,
    /// Random pairs whose excess went beyond the slack.
    pub random_violations: usize,
    /// The pair with the largest excess found by either phase.
    pub worst: Witness<S>,
    pub holds: bool,
}

/// Absolute slack granted to rounding, scaled by the row magnitude.
pub const NON_EXPANSION_SLACK: f64 = 1e-12;

fn witness<S: Scalar>(op: &BackupOperator<S>, q: Vec<S>, q_prime: Vec<S>) -> Result<Witness<S>> {
    let output_gap = (op.apply(&q_prime)? - op.apply(&q)?).abs();
    let input_gap = q
        .iter()
        .zip(&q_prime)
        .map(|(&a, &b)| (a - b).abs())
        .fold(S::zero(), S::max);
    Ok(Witness {
        q,
        q_prime,
        output_gap,
        input_gap,
        excess: output_gap - input_gap,
    })
}

fn allowed_slack<S: Scalar>(w: &Witness<S>) -> S {
    let magnitude = w
        .q
        .iter()
        .chain(&w.q_prime)
        .fold(S::one(), |m, x| m.max(x.abs()));
    S::lit(NON_EXPANSION_SLACK) * magnitude
}

fn random_pair<S: Scalar, R: Rng + ?Sized>(n: usize, trial: usize, rng: &mut R) -> (Vec<S>, Vec<S>) {
    const SCALES: [f64; 4] = [0.01, 1.0, 10.0, 100.0];
    const SPREADS: [f64; 3] = [1.0, 0.1, 0.001];
    let scale = SCALES[trial % SCALES.len()];
    let spread = SPREADS[(trial / SCALES.len()) % SPREADS.len()] * scale;
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    let mut q_prime: Vec<f64> = q.iter().map(|&x| x + rng.random_range(-spread..spread)).collect();
    // Every seventh pair shares some coordinates, exercising ties.
    if trial % 7 == 3 {
        for (i, x) in q_prime.iter_mut().enumerate() {
            if i % 2 == 0 {
                *x = q[i];
            }
        }
    }
    (
        q.into_iter().map(S::lit).collect(),
        q_prime.into_iter().map(S::lit).collect(),
    )
}

/// Tests `|op(q') - op(q)| <= max|q' - q|` on `trials` random row pairs, then
/// spends `search_budget` operator evaluations on a coordinate hill-climb that
/// maximizes the excess `|op(q') - op(q)| - max|q' - q|`.
pub fn check_non_expansion<S: Scalar, R: Rng + ?Sized>(
    op: &BackupOperator<S>,
    n_actions: usize,
    trials: usize,
    search_budget: usize,
    rng: &mut R,
) -> Result<NonExpansionReport<S>> {
    op.validate(n_actions)?;
    if trials == 0 {
        return Err(invalid("trials", "at least one trial is required"));
    }
    let mut violations = 0;
    let mut worst: Option<Witness<S>> = None;
    for trial in 0..trials {
        let (q, q_prime) = random_pair(n_actions, trial, rng);
        let w = witness(op, q, q_prime)?;
        if w.excess > allowed_slack(&w) {
            violations += 1;
        }
        if worst.as_ref().is_none_or(|b| w.excess > b.excess) {
            worst = Some(w);
        }
    }
    let mut worst = worst.expect("at least one trial");

    let rounds = 4;
    let per_round = search_budget / rounds;
    let mut evaluations = 0;
    for round in 0..rounds {
        if per_round == 0 {
            break;
        }
        let start = if round == 0 {
            worst.clone()
        } else {
            let (q, q_prime) = random_pair(n_actions, 4 * round + 1, rng);
            witness(op, q, q_prime)?
        };
        let best = hill_climb(op, start, per_round, rng)?;
        evaluations += per_round;
        if best.excess > worst.excess {
            worst = best;
        }
    }

    let holds = violations == 0 && worst.excess <= allowed_slack(&worst);
    Ok(NonExpansionReport {
        operator: op.name().to_string(),
        n_actions,
        trials,
        search_evaluations: evaluations,
        random_violations: violations,
        worst,
        holds,
    })
}

fn hill_climb<S: Scalar, R: Rng + ?Sized>(
    op: &BackupOperator<S>,
    start: Witness<S>,
    budget: usize,
    rng: &mut R,
) -> Result<Witness<S>> {
    let n = start.q.len();
    let mut best = start;
    let magnitude = best
        .q
        .iter()
        .chain(&best.q_prime)
        .fold(S::zero(), |m, x| m.max(x.abs()));
    let mut step = magnitude.max(S::lit(1e-3)) * S::lit(0.25);
    let floor = step * S::lit(1e-9);
    let mut failures = 0;
    let mut used = 0;
    while used + 2 <= budget {
        let coord = rng.random_range(0..2 * n);
        let mut improved = false;
        for sign in [S::one(), -S::one()] {
            let mut q = best.q.clone();
            let mut q_prime = best.q_prime.clone();
            if coord < n {
                q[coord] = q[coord] + sign * step;
            } else {
                q_prime[coord - n] = q_prime[coord - n] + sign * step;
            }
            let candidate = witness(op, q, q_prime)?;
            used += 1;
            if candidate.excess > best.excess {
                best = candidate;
                improved = true;
                break;
            }
        }
        if improved {
            failures = 0;
        } else {
            failures += 1;
            if failures >= 2 * n {
                step = step * S::lit(0.5);
                failures = 0;
                if step < floor {
                    break;
                }
            }
        }
    }
    Ok(best)
}

/// Result of generalized value iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint<S> {
    pub n_states: usize,
    pub n_actions: usize,
    /// Flattened `[s][a]`.
    pub q: Vec<S>,
    pub iterations: usize,
    /// Sup-norm change of the final sweep.
    pub residual: S,
    /// Certified `||Q - Q*|| <= residual * gamma / (1 - gamma)`.
    pub error_bound: S,
    /// Sup-norm change of every sweep.
    pub residuals: Vec<S>,
    /// `(state, rank)` pairs whose value is within 1e-9 of the next rank.
    pub ties: Vec<(usize, usize)>,
}

impl<S: Scalar> FixedPoint<S> {
    pub fn value(&self, state: usize, action: usize) -> S {
        self.q[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[S] {
        &self.q[state * self.n_actions..(state + 1) * self.n_actions]
    }
}

/// Tolerance for reporting near-ties in the converged table.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Synchronous value iteration `Q <- R + gamma P op(Q)` until the sup-norm
/// change is at most `tolerance`. Rank-based operators re-rank every sweep.
pub fn solve_fixed_point<S: Scalar>(
    mdp: &TabularMdp<S>,
    op: &BackupOperator<S>,
    tolerance: S,
    max_iters: usize,
) -> Result<FixedPoint<S>> {
    op.validate(mdp.n_actions())?;
    solve_fixed_point_with(mdp, |_, row| op.apply(row), tolerance, max_iters)
}

/// [`solve_fixed_point`] with a per-state backup `backup(state, row)`.
pub fn solve_fixed_point_with<S: Scalar, F>(
    mdp: &TabularMdp<S>,
    backup: F,
    tolerance: S,
    max_iters: usize,
) -> Result<FixedPoint<S>>
where
    F: Fn(usize, &[S]) -> Result<S>,
{
    if !(tolerance > S::zero()) {
        return Err(invalid("tolerance", "must be positive"));
    }
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let gamma = mdp.discount();
    let rewards: Vec<S> = (0..n * m).map(|i| mdp.expected_reward(i / m, i % m)).collect();
    let sparse: Vec<Vec<(usize, S)>> = (0..n * m)
        .map(|i| {
            mdp.transition_row(i / m, i % m)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > S::zero())
                .map(|(s, &p)| (s, p))
                .collect()
        })
        .collect();

    let mut q = rewards.clone();
    let mut values = vec![S::zero(); n];
    let mut residuals = Vec::new();
    for iteration in 1..=max_iters {
        for s in 0..n {
            values[s] = backup(s, &q[s * m..(s + 1) * m])?;
        }
        let mut residual = S::zero();
        for i in 0..n * m {
            let future: S = sparse[i].iter().map(|&(s, p)| p * values[s]).sum();
            let next = rewards[i] + gamma * future;
            residual = residual.max((next - q[i]).abs());
            q[i] = next;
        }
        residuals.push(residual);
        if residual <= tolerance {
            let ties = (0..n)
                .flat_map(|s| {
                    let row = &q[s * m..(s + 1) * m];
                    let ranking = rank_actions(row, TieBreak::LowerIndex);
                    near_ties(row, &ranking, S::lit(TIE_TOLERANCE))
                        .into_iter()
                        .map(move |k| (s, k))
                })
                .collect();
            return Ok(FixedPoint {
                n_states: n,
                n_actions: m,
                q,
                iterations: iteration,
                residual,
                error_bound: residual * gamma / (S::one() - gamma),
                residuals,
                ties,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual: residuals.last().map_or(f64::INFINITY, |r| r.as_f64()),
    })
}
