//! Property suites behind `vsrl check`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vsrl_core::backup::{check_non_expansion, NonExpansionReport};
use vsrl_core::exploration::NglieReport;
use vsrl_core::interruption::{verify_infinite_exploration, DsiReport, InfiniteExplorationReport};
use vsrl_core::safety::SweepReport;
use vsrl_core::Operator;

use crate::config::ExperimentConfig;
use crate::envs::build_env;
use crate::error::{HarnessError, Result};
use crate::report::{default_sweep_row, interruptibility_item, nglie_item, resilience_item};
use crate::runner::{resolve_scheme, solve_oracle};

/// A check verdict with its evidence.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome<T> {
    pub passes: bool,
    pub summary: String,
    pub evidence: T,
}

pub fn non_expansion(
    op: &Operator,
    n_actions: usize,
    trials: usize,
    search_budget: usize,
    seed: u64,
) -> Result<CheckOutcome<NonExpansionReport<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = check_non_expansion(op, n_actions, trials, search_budget, &mut rng)?;
    let summary = if report.holds {
        format!(
            "{} is a non-expansion on {} random pairs with |A| = {} (largest excess {:.3e})",
            report.operator, report.trials, n_actions, report.worst.excess
        )
    } else {
        format!(
            "{} violates non-expansion: |op(q') - op(q)| = {:.6} > max|q' - q| = {:.6} at q = {:?}, q' = {:?}",
            report.operator, report.worst.output_gap, report.worst.input_gap, report.worst.q, report.worst.q_prime
        )
    };
    Ok(CheckOutcome {
        passes: report.holds,
        summary,
        evidence: report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NglieEvidence {
    pub nglie: NglieReport<f64>,
    /// Present when the configuration has an interruption scheme.
    pub interruptible: Option<InfiniteExplorationReport>,
}

/// NGLIE validation, plus infinite exploration under the interruption scheme
/// when there is one.
pub fn nglie(config: &ExperimentConfig) -> Result<CheckOutcome<NglieEvidence>> {
    let env = build_env(&config.env)?;
    let m = env.mdp.n_actions();
    let psi_inf = match config.analysis.declared_psi_inf {
        Some(p) => p,
        None => config.strategy.limit_psi(m).ok_or_else(|| HarnessError::Config {
            path: "analysis.declared_psi_inf".into(),
            reason: "the strategy has no finite limit; declare psi_inf".into(),
        })?,
    };
    let report = nglie_item(config, m, psi_inf)?;
    let interruptible = match resolve_scheme(config, &env)? {
        Some(scheme) => Some(verify_infinite_exploration(
            &scheme,
            &config.strategy,
            m,
            config.analysis.nglie_horizon,
            None,
        )?),
        None => None,
    };
    let passes = report.passes && interruptible.as_ref().is_none_or(|r| r.divergent);
    let summary = format!(
        "infinite exploration {}, limit operator {}, limit psi {} ({:.6} vs {}), containment {}{}",
        verdict(report.infinite_exploration.passes),
        verdict(report.limit_operator.passes),
        verdict(report.limit_psi.passes),
        report.limit_psi.psi_at_horizon,
        report.limit_psi.target,
        verdict(report.containment.passes),
        interruptible
            .as_ref()
            .map(|r| format!(", interruptible exploration {}", verdict(r.divergent)))
            .unwrap_or_default()
    );
    Ok(CheckOutcome {
        passes,
        summary,
        evidence: NglieEvidence {
            nglie: report,
            interruptible,
        },
    })
}

pub fn resilience(config: &ExperimentConfig) -> Result<CheckOutcome<SweepReport<f64>>> {
    let env = build_env(&config.env)?;
    let m = env.mdp.n_actions();
    let oracle = solve_oracle(config, &env)?;
    let row = config
        .analysis
        .resilience_row
        .clone()
        .unwrap_or_else(|| default_sweep_row(m));
    let report = resilience_item(&config.strategy, &env.by_observation(&oracle.q), m, &row)?;
    let (lo, hi) = report
        .curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.sigma), hi.max(p.sigma)));
    let summary = format!(
        "{:?} at mu = {:.6}: sigma spans [{lo:.3e}, {hi:.3e}] of sigma_max {:.3e}; strong = {}{}",
        report.family,
        report.mu,
        report.sigma_max,
        report.strong,
        if report.note.is_empty() {
            String::new()
        } else {
            format!(" ({})", report.note)
        }
    );
    Ok(CheckOutcome {
        passes: report.strong,
        summary,
        evidence: report,
    })
}

pub fn interruptibility(config: &ExperimentConfig) -> Result<CheckOutcome<DsiReport>> {
    let env = build_env(&config.env)?;
    let report = interruptibility_item(config, &env)?;
    let summary = format!(
        "{}: {} of {} contexts rejected (largest KS {:.4}, smallest p {:.3e}, threshold {:.1e})",
        report.algorithm.name(),
        report.contexts.iter().filter(|c| c.rejected).count(),
        report.contexts.len(),
        report.statistic,
        report.p_value,
        report.threshold
    );
    Ok(CheckOutcome {
        passes: report.passes,
        summary,
        evidence: report,
    })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}
