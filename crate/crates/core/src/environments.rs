//! The cliff-walking gridworld, a small continuing gridworld and the
//! three-state susceptible MDP.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::interruption::{InterruptionScheme, ThetaSchedule};
use crate::learning::QTable;
use crate::mdp::{evaluate_policy, ObservationChannel, TabularMdp, Transition};
use crate::ranking::{rank_actions, TieBreak};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSet {
    /// North, East, South, West.
    #[default]
    FourMoves,
    /// The four moves plus Stay.
    FiveWithStay,
}

impl ActionSet {
    pub fn len(self) -> usize {
        match self {
            Self::FourMoves => 4,
            Self::FiveWithStay => 5,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

pub const NORTH: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const WEST: usize = 3;
pub const STAY: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliffParams<S> {
    pub rows: usize,
    pub cols: usize,
    pub step_reward: S,
    pub cliff_reward: S,
    /// Reward for the step that enters the goal.
    pub goal_reward: S,
    pub action_set: ActionSet,
    pub discount: S,
    pub cliff_is_interruption_zone: bool,
}

impl<S: Scalar> Default for CliffParams<S> {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 12,
            step_reward: S::lit(-1.0),
            cliff_reward: S::lit(-100.0),
            goal_reward: S::lit(-1.0),
            action_set: ActionSet::FourMoves,
            discount: S::lit(0.9),
            cliff_is_interruption_zone: false,
        }
    }
}

/// A constructed cliff world.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffWorld<S> {
    pub params: CliffParams<S>,
    pub mdp: TabularMdp<S>,
    pub channel: ObservationChannel<S>,
    /// Present when the cliff edge is an interruption zone.
    pub scheme: Option<InterruptionScheme<S>>,
    pub start: usize,
    pub goal: usize,
    pub cliff: Vec<usize>,
    /// Non-cliff, non-goal cells next to a cliff cell.
    pub edge: Vec<usize>,
}

impl<S: Scalar> CliffWorld<S> {
    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.params.cols + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.params.cols, cell % self.params.cols)
    }

    pub fn is_cliff(&self, cell: usize) -> bool {
        self.cliff.contains(&cell)
    }

    /// Rows between `cell` and the cliff row.
    pub fn cliff_distance(&self, cell: usize) -> usize {
        self.params.rows - 1 - self.coords(cell).0
    }

    /// Cell reached by `action` from `cell` before the cliff sends it back.
    pub fn move_target(&self, cell: usize, action: usize) -> usize {
        move_target(self.params.rows, self.params.cols, cell, action)
    }

    /// Greedy rollout from the start until the goal, a fall, a repeated cell
    /// or `|S|` steps. A fall is recorded as the cliff cell stepped into.
    pub fn greedy_path(&self, q: &QTable<S>) -> Vec<usize> {
        let mut path = vec![self.start];
        let mut cell = self.start;
        for _ in 0..self.mdp.n_states() {
            let action = rank_actions(q.row(cell), TieBreak::LowerIndex).greedy();
            let next = self.move_target(cell, action);
            path.push(next);
            if next == self.goal || self.is_cliff(next) || path[..path.len() - 1].contains(&next) {
                break;
            }
            cell = next;
        }
        path
    }

    /// Whether a transition stepped off the cliff.
    pub fn is_fall(&self, transition: &Transition<S>) -> bool {
        transition.reward == self.params.cliff_reward
            && self.is_cliff(self.move_target(transition.state, transition.action))
    }

    /// Smallest cliff distance over the path cells that lie above a cliff
    /// column (a cliff cell itself counts as 0). `None` if there are none.
    pub fn path_cliff_distance(&self, path: &[usize]) -> Option<usize> {
        let cols = self.params.cols;
        path.iter()
            .filter(|&&c| (1..cols - 1).contains(&(c % cols)))
            .map(|&c| self.cliff_distance(c))
            .min()
    }

    pub fn reaches_goal(&self, path: &[usize]) -> bool {
        path.last() == Some(&self.goal)
    }
}

fn move_target(rows: usize, cols: usize, cell: usize, action: usize) -> usize {
    let (r, c) = (cell / cols, cell % cols);
    let (nr, nc) = match action {
        NORTH => (r.saturating_sub(1), c),
        EAST => (r, (c + 1).min(cols - 1)),
        SOUTH => ((r + 1).min(rows - 1), c),
        WEST => (r, c.saturating_sub(1)),
        _ => (r, c),
    };
    nr * cols + nc
}

/// Builds the grid. Moves are clipped at walls. Stepping into a cliff cell
/// pays `cliff_reward` and returns to the start. Entering the goal pays
/// `goal_reward`, after which the goal is absorbing with reward 0. Cliff
/// cells are never occupied; their rows also lead back to the start.
pub fn make_cliff<S: Scalar>(params: &CliffParams<S>) -> Result<CliffWorld<S>> {
    let (rows, cols) = (params.rows, params.cols);
    if rows < 2 || cols < 2 {
        return Err(invalid("rows", "grid must be at least 2x2"));
    }
    if !(params.cliff_reward < params.step_reward) {
        return Err(invalid("cliff_reward", "must be below step_reward"));
    }
    let n = rows * cols;
    let m = params.action_set.len();
    let cell = |r: usize, c: usize| r * cols + c;
    let start = cell(rows - 1, 0);
    let goal = cell(rows - 1, cols - 1);
    let cliff: Vec<usize> = (1..cols - 1).map(|c| cell(rows - 1, c)).collect();
    let mut transition = vec![S::zero(); n * m * n];
    let mut reward = vec![S::zero(); n * m * n];
    for s in 0..n {
        for a in 0..m {
            let base = (s * m + a) * n;
            if s == goal {
                transition[base + goal] = S::one();
                continue;
            }
            if cliff.contains(&s) {
                transition[base + start] = S::one();
                continue;
            }
            let target = move_target(rows, cols, s, a);
            let (next, r) = if cliff.contains(&target) {
                (start, params.cliff_reward)
            } else if target == goal {
                (goal, params.goal_reward)
            } else {
                (target, params.step_reward)
            };
            transition[base + next] = S::one();
            reward[base + next] = r;
        }
    }
    let lo = params.cliff_reward.min(S::zero());
    let hi = params.step_reward.max(params.goal_reward).max(S::zero());
    let mdp = TabularMdp::new(n, m, transition, reward, params.discount, start, Some((lo, hi)))?;
    let channel = ObservationChannel::identity(n, m);
    let edge: Vec<usize> = (0..n)
        .filter(|&s| s != goal && !cliff.contains(&s))
        .filter(|&s| {
            let (r, c) = (s / cols, s % cols);
            let mut neighbours = vec![];
            if r > 0 {
                neighbours.push(cell(r - 1, c));
            }
            if r + 1 < rows {
                neighbours.push(cell(r + 1, c));
            }
            if c > 0 {
                neighbours.push(cell(r, c - 1));
            }
            if c + 1 < cols {
                neighbours.push(cell(r, c + 1));
            }
            neighbours.iter().any(|x| cliff.contains(x))
        })
        .collect();
    let scheme = if params.cliff_is_interruption_zone {
        Some(InterruptionScheme::deterministic(
            n,
            m,
            &edge,
            NORTH,
            ThetaSchedule::Sqrt { c_prime: S::one() },
        )?)
    } else {
        None
    };
    Ok(CliffWorld {
        params: params.clone(),
        mdp,
        channel,
        scheme,
        start,
        goal,
        cliff,
        edge,
    })
}

/// A continuing gridworld: reaching the goal pays `goal_reward` and the next
/// action from the goal returns to the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams<S> {
    pub rows: usize,
    pub cols: usize,
    pub step_reward: S,
    pub goal_reward: S,
    /// Probability that a move goes in a uniformly random direction instead.
    pub slip: S,
    pub discount: S,
}

impl<S: Scalar> Default for GridParams<S> {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 4,
            step_reward: S::zero(),
            goal_reward: S::one(),
            slip: S::lit(0.1),
            discount: S::lit(0.9),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<S> {
    pub params: GridParams<S>,
    pub mdp: TabularMdp<S>,
    pub channel: ObservationChannel<S>,
    pub start: usize,
    pub goal: usize,
}

/// Start in the South-West corner, goal in the North-East corner, four moves.
pub fn make_grid<S: Scalar>(params: &GridParams<S>) -> Result<Grid<S>> {
    let (rows, cols) = (params.rows, params.cols);
    if rows < 2 || cols < 2 {
        return Err(invalid("rows", "grid must be at least 2x2"));
    }
    if !(params.slip >= S::zero() && params.slip <= S::one()) {
        return Err(invalid("slip", "must lie in [0, 1]"));
    }
    let (n, m) = (rows * cols, 4);
    let start = (rows - 1) * cols;
    let goal = cols - 1;
    let mut transition = vec![S::zero(); n * m * n];
    let mut reward = vec![S::zero(); n * m * n];
    let share = params.slip / S::lit(m as f64);
    for s in 0..n {
        for a in 0..m {
            let base = (s * m + a) * n;
            if s == goal {
                transition[base + start] = S::one();
                continue;
            }
            for d in 0..m {
                let p = if d == a { S::one() - params.slip + share } else { share };
                let next = move_target(rows, cols, s, d);
                transition[base + next] = transition[base + next] + p;
                reward[base + next] = if next == goal {
                    params.goal_reward
                } else {
                    params.step_reward
                };
            }
        }
    }
    let lo = params.step_reward.min(params.goal_reward).min(S::zero());
    let hi = params.step_reward.max(params.goal_reward).max(S::zero());
    let mdp = TabularMdp::new(n, m, transition, reward, params.discount, start, Some((lo, hi)))?;
    Ok(Grid {
        params: params.clone(),
        channel: ObservationChannel::identity(n, m),
        mdp,
        start,
        goal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThreeStateParams<S> {
    /// Reward for `a` in `y` when staying in `y`.
    pub r_loop_y: S,
    /// Reward for `b` in `y`.
    pub r_safe_y: S,
    /// Reward for `a` in `z`.
    pub r_trap_z: S,
    /// Probability `q` that `a` in `y` lands in `z`.
    pub slip_to_z: S,
    pub discount: S,
    /// `None` means never infected.
    pub infection_time: Option<u64>,
    /// Probability of entering `y^UN` rather than `y^INT`.
    pub signal_prob: S,
    /// Makes `z` absorbing under both actions.
    pub absorbing_trap: bool,
}

impl<S: Scalar> Default for ThreeStateParams<S> {
    fn default() -> Self {
        Self {
            r_loop_y: S::one(),
            r_safe_y: S::lit(0.5),
            r_trap_z: S::lit(-20.0),
            slip_to_z: S::lit(0.1),
            discount: S::lit(0.9),
            infection_time: None,
            signal_prob: S::lit(0.5),
            absorbing_trap: false,
        }
    }
}

/// Action labels.
pub const A: usize = 0;
pub const B: usize = 1;

/// State indices.
pub const X: usize = 0;
pub const Y_UN: usize = 1;
pub const Y_INT: usize = 2;
pub const Z: usize = 3;

/// Observation indices.
pub const O_X: usize = 0;
pub const O_Y: usize = 1;
pub const O_Z: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeState<S> {
    pub params: ThreeStateParams<S>,
    pub mdp: TabularMdp<S>,
    pub channel: ObservationChannel<S>,
    pub scheme: InterruptionScheme<S>,
}

/// Builds `{x, y^UN, y^INT, z}` with observations `{o^x, o^y, o^z}`. After the
/// infection time `z` is observed as `o^y`. Interruption is possible only at
/// `o^y`, where the interruption policy plays `b`.
pub fn make_three_state<S: Scalar>(params: &ThreeStateParams<S>) -> Result<ThreeState<S>> {
    let p = params;
    if !(p.r_trap_z < S::zero() && S::zero() < p.r_safe_y && p.r_safe_y < p.r_loop_y) {
        return Err(invalid("rewards", "need r_trap_z < 0 < r_safe_y < r_loop_y"));
    }
    let unit_open = |x: S| x > S::zero() && x < S::one();
    if !unit_open(p.slip_to_z) {
        return Err(invalid("slip_to_z", "must lie in (0, 1)"));
    }
    if !(p.signal_prob >= S::zero() && p.signal_prob <= S::one()) {
        return Err(invalid("signal_prob", "must lie in [0, 1]"));
    }
    let (n, m) = (4, 2);
    let mut transition = vec![S::zero(); n * m * n];
    let mut reward = vec![S::zero(); n * m * n];
    let idx = |s: usize, a: usize, s2: usize| (s * m + a) * n + s2;
    let sp = p.signal_prob;
    let q = p.slip_to_z;
    for a in [A, B] {
        transition[idx(X, a, Y_UN)] = sp;
        transition[idx(X, a, Y_INT)] = S::one() - sp;
    }
    for y in [Y_UN, Y_INT] {
        transition[idx(y, A, Y_UN)] = (S::one() - q) * sp;
        transition[idx(y, A, Y_INT)] = (S::one() - q) * (S::one() - sp);
        transition[idx(y, A, Z)] = q;
        reward[idx(y, A, Y_UN)] = p.r_loop_y;
        reward[idx(y, A, Y_INT)] = p.r_loop_y;
        transition[idx(y, B, X)] = S::one();
        reward[idx(y, B, X)] = p.r_safe_y;
    }
    transition[idx(Z, A, Z)] = S::one();
    reward[idx(Z, A, Z)] = p.r_trap_z;
    if p.absorbing_trap {
        transition[idx(Z, B, Z)] = S::one();
    } else {
        transition[idx(Z, B, X)] = S::one();
    }
    let lo = p.r_trap_z;
    let hi = p.r_loop_y;
    let mdp = TabularMdp::new(n, m, transition, reward, p.discount, X, Some((lo, hi)))?;

    let map = [O_X, O_Y, O_Y, O_Z];
    let infected = p.infection_time.map(|t| {
        let mut after = vec![S::zero(); m * n * 3];
        for a in 0..m {
            for (s, &o) in map.iter().enumerate() {
                let o = if s == Z { O_Y } else { o };
                after[(a * n + s) * 3 + o] = S::one();
            }
        }
        (t, after)
    });
    let channel = ObservationChannel::from_map(n, m, 3, &map, infected)?;
    let scheme = InterruptionScheme::deterministic(3, m, &[O_Y], B, ThetaSchedule::Sqrt {
        c_prime: S::one(),
    })?;
    Ok(ThreeState {
        params: params.clone(),
        mdp,
        channel,
        scheme,
    })
}

/// Exact value of `y^UN` when `y` plays `in_y` and `z` plays `b`, each with
/// probability `1 - eps` (the other action taking `eps`).
fn restricted_value<S: Scalar>(mdp: &TabularMdp<S>, in_y: usize, eps: S) -> Result<S> {
    let mut policy = vec![S::lit(0.5); 8];
    let mut set = |s: usize, preferred: usize| {
        policy[s * 2 + preferred] = S::one() - eps;
        policy[s * 2 + (1 - preferred)] = eps;
    };
    set(Y_UN, in_y);
    set(Y_INT, in_y);
    set(Z, B);
    Ok(evaluate_policy(mdp, &policy)?[Y_UN])
}

/// Smallest non-greedy probability on a grid of step `resolution` over
/// `[0, 1 - 1/|A|]` at which playing `b` in `y` strictly beats playing `a`,
/// both evaluated exactly with `b` preferred in `z`.
pub fn epsilon_crossover<S: Scalar>(params: &ThreeStateParams<S>, resolution: S) -> Result<Option<S>> {
    if !(resolution > S::zero()) {
        return Err(invalid("resolution", "must be positive"));
    }
    let env = make_three_state(params)?;
    let top = S::lit(0.5);
    let steps = (top / resolution).floor().to_u64().unwrap_or(0);
    for i in 0..=steps {
        let eps = resolution * S::lit(i as f64);
        let value_a = restricted_value(&env.mdp, A, eps)?;
        let value_b = restricted_value(&env.mdp, B, eps)?;
        if value_b > value_a {
            return Ok(Some(eps));
        }
    }
    Ok(None)
}

/// The crossover located by bisection to `tol` (for fixtures), or `None`.
pub fn epsilon_crossover_exact<S: Scalar>(params: &ThreeStateParams<S>, tol: S) -> Result<Option<S>> {
    let env = make_three_state(params)?;
    let gap = |eps: S| -> Result<S> {
        Ok(restricted_value(&env.mdp, B, eps)? - restricted_value(&env.mdp, A, eps)?)
    };
    if gap(S::zero())? > S::zero() {
        return Ok(Some(S::zero()));
    }
    // At 1/2 both policies coincide, so bracket on a coarse grid first.
    let coarse = 1000;
    let step = S::lit(0.5 / coarse as f64);
    let mut bracket = None;
    for i in 1..coarse {
        let eps = step * S::lit(i as f64);
        if gap(eps)? > S::zero() {
            bracket = Some((eps - step, eps));
            break;
        }
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Ok(None);
    };
    while hi - lo > tol {
        let mid = (lo + hi) / S::lit(2.0);
        if gap(mid)? > S::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some((lo + hi) / S::lit(2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cliff_counts() {
        let w = make_cliff::<f64>(&CliffParams::default()).unwrap();
        assert_eq!(w.mdp.n_states(), 48);
        assert_eq!(w.cliff.len(), 10);
        assert_eq!(w.mdp.n_actions(), 4);
        let five = make_cliff::<f64>(&CliffParams {
            action_set: ActionSet::FiveWithStay,
            ..CliffParams::default()
        })
        .unwrap();
        assert_eq!(five.mdp.n_actions(), 5);
    }

    #[test]
    fn cliff_entry_reward() {
        let w = make_cliff::<f64>(&CliffParams::default()).unwrap();
        let above = w.cell(2, 4);
        assert_eq!(w.mdp.reward(above, SOUTH, w.start), -100.0);
        assert_eq!(w.mdp.transition_row(above, SOUTH)[w.start], 1.0);
        assert_eq!(w.mdp.transition_row(w.goal, WEST)[w.goal], 1.0);
        assert_eq!(w.mdp.reward(w.cell(2, 11), SOUTH, w.goal), -1.0);
    }

    #[test]
    fn edge_zone() {
        let w = make_cliff::<f64>(&CliffParams {
            cliff_is_interruption_zone: true,
            ..CliffParams::default()
        })
        .unwrap();
        assert_eq!(w.edge.len(), 11);
        assert!(w.edge.contains(&w.start));
        let scheme = w.scheme.clone().unwrap();
        assert_eq!(scheme.initiation(w.cell(2, 5)), 1.0);
        assert_eq!(scheme.initiation(w.cell(1, 5)), 0.0);
        assert_eq!(scheme.policy(w.start)[NORTH], 1.0);
    }

    #[test]
    fn three_state_rows_match_for_y_copies() {
        let env = make_three_state::<f64>(&ThreeStateParams::default()).unwrap();
        for a in [A, B] {
            assert_eq!(env.mdp.transition_row(Y_UN, a), env.mdp.transition_row(Y_INT, a));
        }
    }

    #[test]
    fn crossover_default() {
        let p = ThreeStateParams::<f64>::default();
        let exact = epsilon_crossover_exact(&p, 1e-12).unwrap().unwrap();
        assert!((exact - 0.25165044198276837).abs() < 1e-9);
        let grid = epsilon_crossover(&p, 5e-4).unwrap().unwrap();
        assert!((grid - 0.252).abs() < 1e-12);
        let near_one = ThreeStateParams { slip_to_z: 0.99, ..p };
        assert_eq!(epsilon_crossover(&near_one, 5e-4).unwrap(), Some(0.0));
    }

    #[test]
    fn no_crossover_when_trap_is_mild() {
        let p = ThreeStateParams::<f64> {
            r_loop_y: 100.0,
            r_trap_z: -1.0,
            ..ThreeStateParams::default()
        };
        assert_eq!(epsilon_crossover(&p, 5e-4).unwrap(), None);
    }

    #[test]
    fn grid_is_communicating() {
        let g = make_grid(&GridParams::<f64>::default()).unwrap();
        assert_eq!(g.mdp.n_states(), 16);
        assert!(g.mdp.validate().is_valid());
        assert_eq!(g.mdp.transition_row(g.goal, 2)[g.start], 1.0);
        assert_eq!(g.mdp.reward(g.goal - 1, 1, g.goal), 1.0);
    }
}
