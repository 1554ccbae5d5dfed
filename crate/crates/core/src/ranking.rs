//! Action rankings by Q-value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How equal Q-values are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// The lower action index gets the better rank.
    #[default]
    LowerIndex,
    HigherIndex,
}

/// A bijection between actions and ranks `1..=|A|`, rank 1 being greedy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRanking {
    /// `order[k]` is the action holding rank `k + 1`.
    order: Vec<usize>,
    /// `rank[a]` is the 1-based rank of action `a`.
    rank: Vec<usize>,
}

impl ActionRanking {
    /// Builds a ranking from actions listed best first.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut rank = vec![0; n];
        for (k, &a) in order.iter().enumerate() {
            if a >= n || rank[a] != 0 {
                return Err(Error::Shape(format!("{order:?} is not a permutation")));
            }
            rank[a] = k + 1;
        }
        Ok(Self { order, rank })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based rank of `action`.
    pub fn rank_of(&self, action: usize) -> usize {
        self.rank[action]
    }

    /// Action holding the 1-based `rank`.
    pub fn action_at(&self, rank: usize) -> usize {
        self.order[rank - 1]
    }

    pub fn greedy(&self) -> usize {
        self.order[0]
    }

    /// Actions best first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Ranks indexed by action.
    pub fn ranks(&self) -> &[usize] {
        &self.rank
    }

    /// Row values rearranged in rank order.
    pub fn sorted<S: Scalar>(&self, row: &[S]) -> Vec<S> {
        self.order.iter().map(|&a| row[a]).collect()
    }
}

/// Ranks actions by descending Q-value.
pub fn rank_actions<S: Scalar>(row: &[S], tie_break: TieBreak) -> ActionRanking {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&i, &j| {
        row[j]
            .partial_cmp(&row[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| match tie_break {
                TieBreak::LowerIndex => i.cmp(&j),
                TieBreak::HigherIndex => j.cmp(&i),
            })
    });
    let mut rank = vec![0; row.len()];
    for (k, &a) in order.iter().enumerate() {
        rank[a] = k + 1;
    }
    ActionRanking { order, rank }
}

/// Ranks `k` whose value is within `tol` of the value at rank `k + 1`.
pub fn near_ties<S: Scalar>(row: &[S], ranking: &ActionRanking, tol: S) -> Vec<usize> {
    let sorted = ranking.sorted(row);
    (1..sorted.len())
        .filter(|&k| (sorted[k - 1] - sorted[k]).abs() <= tol)
        .collect()
}
