//! Frozen reference values and independent cross-checks.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vsrl_core::backup::*;
use vsrl_core::environments::*;
use vsrl_core::exploration::*;
use vsrl_core::interruption::*;
use vsrl_core::learning::*;
use vsrl_core::mdp::*;
use vsrl_core::ranking::{rank_actions, TieBreak};

fn bandit(rewards: [f64; 2], gamma: f64) -> TabularMdp<f64> {
    TabularMdp::new(1, 2, vec![1.0, 1.0], rewards.to_vec(), gamma, 0, None).unwrap()
}

/// `V = (I - gamma P_pi)^-1 r_pi` with nalgebra.
fn policy_values(mdp: &TabularMdp<f64>, policy: &[f64]) -> Vec<f64> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        for act in 0..m {
            let p = policy[s * m + act];
            b[s] += p * mdp.expected_reward(s, act);
            for (s2, &t) in mdp.transition_row(s, act).iter().enumerate() {
                a[(s, s2)] -= mdp.discount() * p * t;
            }
        }
    }
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

#[test]
fn mellowmax_closed_form() {
    let expected = ((1f64.exp() + 1.0) / 2.0).ln();
    assert_relative_eq!(mellowmax_backup(&[1.0, 0.0], 1.0).unwrap(), expected, epsilon = 1e-15);
    assert_relative_eq!(expected, 0.6201145069582775, epsilon = 1e-15);
    let near = mellowmax_backup(&[1.0, 0.0], 100.0).unwrap();
    assert!(near <= 1.0 && 1.0 - near <= 2f64.ln() / 100.0 + 1e-15);
}

#[test]
fn rrr_mellowmax_composition() {
    let row = [2.0, 1.0, 0.0];
    let ranking = rank_actions(&row, TieBreak::LowerIndex);
    let v = rrr_mellowmax_backup(&row, 0.9, 1.0, &ranking).unwrap();
    assert_relative_eq!(v, 1.8620114506958278, epsilon = 1e-14);
}

#[test]
fn boltzmann_ln3() {
    let beta = 3f64.ln();
    assert_relative_eq!(boltzmann_backup(&[1.0, 0.0], beta).unwrap(), 0.75, epsilon = 1e-15);
    let p = LiveParams::Boltzmann { beta }.distribution(&[1.0, 0.0], TieBreak::LowerIndex).unwrap();
    assert_relative_eq!(p[0], 0.75, epsilon = 1e-15);
    assert_relative_eq!(p[1], 0.25, epsilon = 1e-15);
}

#[test]
fn mellowmax_beta_two_actions() {
    // On [1, 0] the weighted-mean condition has the closed form
    // beta = ln(mm / (1 - mm)).
    for (omega, frozen) in [
        (1.0, 0.490034276419214),
        (2.0, 0.9290889430549005),
        (10.0, 2.597334288604036),
        (50.0, 4.264575994393086),
    ] {
        let beta = mellowmax_beta(&[1.0, 0.0], omega).unwrap();
        let mm = mellowmax_backup(&[1.0, 0.0], omega).unwrap();
        assert_relative_eq!(beta, (mm / (1.0_f64 - mm)).ln(), epsilon = 1e-9);
        assert_relative_eq!(beta, frozen, epsilon = 1e-9);
    }
    assert_eq!(mellowmax_beta(&[3.0, 3.0], 2.0).unwrap(), 0.0);
}

#[test]
fn rank_weighted_examples() {
    let row = [3.0, 1.0, 0.0];
    let r = rank_actions(&row, TieBreak::LowerIndex);
    assert_relative_eq!(rank_average_backup(&row, &[0.8, 0.15, 0.05], &r).unwrap(), 2.55, epsilon = 1e-15);
    let r2 = rank_actions(&[3.0, 1.0], TieBreak::LowerIndex);
    assert_eq!(rank_average_backup(&[3.0, 1.0], &[1.0, 0.0], &r2).unwrap(), 3.0);
    assert_eq!(rank_average_backup(&[3.0, 1.0], &[0.5, 0.5], &r2).unwrap(), 2.0);
    let r3 = rank_actions(&[5.0, 2.0, 9.0], TieBreak::LowerIndex);
    assert_eq!(rank_select_backup(&[5.0, 2.0, 9.0], 1, &r3).unwrap(), 9.0);
    assert_eq!(rank_select_backup(&[5.0, 2.0, 9.0], 3, &r3).unwrap(), 2.0);
}

#[test]
fn bandit_fixed_points_match_linear_solves() {
    let mdp = bandit([1.0, 0.0], 0.5);
    let fp = solve_fixed_point(&mdp, &BackupOperator::Max, 1e-13, 10_000).unwrap();
    assert_relative_eq!(fp.value(0, 0), 2.0, epsilon = 1e-11);
    assert_relative_eq!(fp.value(0, 1), 1.0, epsilon = 1e-11);

    // Q1 = 1 + 0.25 (Q1 + Q2), Q2 = 0.25 (Q1 + Q2), so Q1 - Q2 = 1 and Q1 + Q2 = 2.
    let a = DMatrix::from_row_slice(2, 2, &[0.75, -0.25, -0.25, 0.75]);
    let exact = a.lu().solve(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
    let op = BackupOperator::RankAverage { weights: vec![0.5, 0.5] };
    let fp = solve_fixed_point(&mdp, &op, 1e-13, 10_000).unwrap();
    assert_relative_eq!(fp.value(0, 0), exact[0], epsilon = 1e-11);
    assert_relative_eq!(fp.value(0, 1), exact[1], epsilon = 1e-11);
    assert_relative_eq!(exact[0], 1.5, epsilon = 1e-14);
    assert_relative_eq!(exact[1], 0.5, epsilon = 1e-14);
    assert!(fp.error_bound <= 1e-13);
}

#[test]
fn three_state_fixed_point_matches_greedy_policy_evaluation() {
    let env = make_three_state::<f64>(&ThreeStateParams::default()).unwrap();
    let fp = solve_fixed_point(&env.mdp, &BackupOperator::Max, 1e-12, 10_000).unwrap();
    let m = 2;
    let mut policy = vec![0.0; 8];
    for s in 0..4 {
        let g = rank_actions(fp.row(s), TieBreak::LowerIndex).greedy();
        policy[s * m + g] = 1.0;
    }
    assert_eq!(rank_actions(fp.row(Y_UN), TieBreak::LowerIndex).greedy(), A);
    assert_eq!(rank_actions(fp.row(Z), TieBreak::LowerIndex).greedy(), B);
    let v = policy_values(&env.mdp, &policy);
    let q = q_from_values(&env.mdp, &v);
    for (a, b) in fp.q.iter().zip(&q) {
        assert_relative_eq!(*a, *b, epsilon = 1e-9);
    }
    assert_relative_eq!(fp.value(X, A), 6.917164816396241, epsilon = 1e-9);
    assert_relative_eq!(fp.value(Y_UN, A), 7.685738684884712, epsilon = 1e-9);
    assert_relative_eq!(fp.value(Y_UN, B), 6.725448334756617, epsilon = 1e-9);
    assert_relative_eq!(fp.value(Z, A), -14.397096498719044, epsilon = 1e-9);
    assert_relative_eq!(fp.value(Z, B), 6.225448334756617, epsilon = 1e-9);
}

#[test]
fn greedy_agent_stuck_in_trap_returns_geometric_series() {
    let p = ThreeStateParams::<f64>::default();
    let env = make_three_state(&p).unwrap();
    let mut policy = vec![0.0; 8];
    for s in 0..4 {
        policy[s * 2 + A] = 1.0;
    }
    let v = policy_values(&env.mdp, &policy);
    assert_relative_eq!(v[Z], p.r_trap_z / (1.0 - p.discount), epsilon = 1e-12);
}

#[test]
fn validation_examples() {
    let env = make_three_state::<f64>(&ThreeStateParams::default()).unwrap();
    assert!(env.mdp.validate().communicating);
    let small = make_cliff::<f64>(&CliffParams {
        rows: 2,
        cols: 2,
        ..CliffParams::default()
    })
    .unwrap();
    let report = small.mdp.validate();
    assert!(report.structural_errors.is_empty());
    assert!(report.rewards_bounded);
}

#[test]
fn learning_rate_oracle() {
    let lr = LearningRate::power_law(0.8, 1.0).unwrap();
    assert_relative_eq!(lr.rate(10).unwrap(), 10f64.powf(-0.8), epsilon = 1e-16);
    assert_relative_eq!(lr.rate(10).unwrap(), 0.15848931924611134, epsilon = 1e-16);
}

#[test]
fn strategy_examples() {
    let row = [9.0, 0.0, 0.0, 0.0, 0.0];
    let p = LiveParams::EpsGreedy { epsilon: 0.2 }.distribution(&row, TieBreak::LowerIndex).unwrap();
    assert_relative_eq!(p[0], 0.84, epsilon = 1e-15);
    assert!(p[1..].iter().all(|&x| (x - 0.04_f64).abs() < 1e-15));
    let p = LiveParams::Rrr { weights: vec![0.9, 0.07, 0.03] }
        .distribution(&[1.0, 5.0, 2.0], TieBreak::LowerIndex)
        .unwrap();
    assert_eq!(p, vec![0.03, 0.9, 0.07]);
    let p = LiveParams::Boltzmann { beta: 0.0 }.distribution(&[1.0, 2.0, 3.0, 4.0], TieBreak::LowerIndex).unwrap();
    assert!(p.iter().all(|&x| (x - 0.25_f64).abs() < 1e-15));

    assert_relative_eq!(LiveParams::EpsGreedy { epsilon: 0.2 }.psi(5), 0.16, epsilon = 1e-15);
    assert_relative_eq!(LiveParams::Rrr { weights: vec![0.9, 0.05, 0.05] }.psi(3), 0.1, epsilon = 1e-15);
    assert_relative_eq!(LiveParams::Boltzmann { beta: 0.0 }.psi(4), 0.75, epsilon = 1e-15);
}

#[test]
fn interruption_examples() {
    let sqrt = ThetaSchedule::Sqrt { c_prime: 1.0 };
    assert_eq!(sqrt.value(4).unwrap(), 0.5);
    assert_eq!(sqrt.value(1).unwrap(), 0.0);
    assert!(sqrt.value(0).is_err());
    assert_relative_eq!(ThetaSchedule::Linear { c_prime: 0.5 }.value(10).unwrap(), 0.95, epsilon = 1e-15);

    assert_relative_eq!(rrr_interruptible_t(&[0.1], &[0.3], 9, 2).unwrap(), 0.19, epsilon = 1e-15);
    assert_relative_eq!(rrr_interruptible_t(&[0.0], &[0.3], 9, 2).unwrap(), 0.1, epsilon = 1e-15);
    let far = rrr_interruptible_t(&[0.1], &[0.3], 1_000_000_000_000, 2).unwrap();
    assert!((far - 0.1_f64).abs() < 1e-5 * 0.3);

    assert_relative_eq!(eps_interruptible(1.0, 0.1, 4).unwrap(), 0.55, epsilon = 1e-15);
    assert_eq!(eps_interruptible(1.0, 0.0, 1).unwrap(), 1.0);
    assert_relative_eq!(eps_interruptible(0.0, 0.1, 77).unwrap(), 0.1, epsilon = 1e-15);
    assert!(eps_interruptible(0.0, 0.0, 1).is_err());

    let scheme = InterruptionScheme::deterministic(1, 2, &[0], 0, ThetaSchedule::Constant { value: 0.5 }).unwrap();
    let mixed = interruptible_distribution(&scheme, &[0.5, 0.5], 0, 3).unwrap();
    assert_relative_eq!(mixed[0], 0.75, epsilon = 1e-15);
    assert_relative_eq!(mixed[1], 0.25, epsilon = 1e-15);
}

#[test]
fn non_expansion_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = check_non_expansion(&BackupOperator::<f64>::Max, 3, 10_000, 1_000, &mut rng).unwrap();
    assert!(r.holds);
    let op = BackupOperator::RrrMellowmax { t1: 0.7, omega: 3.0 };
    let r = check_non_expansion(&op, 4, 10_000, 2_000, &mut rng).unwrap();
    assert!(r.holds);
    let r = check_non_expansion(&BackupOperator::Boltzmann { beta: 5.0 }, 2, 10_000, 2_000, &mut rng).unwrap();
    assert!(!r.holds);
    assert!(r.worst.excess > 1e-3);
}

#[test]
fn nglie_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = ExplorationStrategy::new(StrategyKind::EpsGreedy {
        epsilon: Schedule::InverseSqrt { limit: 0.125, c: 1.0 },
    });
    let r = validate_nglie(&eps, 5, &NglieOptions::new(100_000, 0.1, 0.01), &mut rng).unwrap();
    assert!(r.passes, "{r:?}");

    let boltz = ExplorationStrategy::new(StrategyKind::Boltzmann {
        beta: Schedule::Linear { slope: 1.0, intercept: 0.0 },
    });
    let r = validate_nglie(&boltz, 3, &NglieOptions::new(10_000, 0.3, 0.01), &mut rng).unwrap();
    assert!(!r.limit_operator.passes);
    assert!(!r.passes);

    let rrr_mm = ExplorationStrategy::new(StrategyKind::RrrMellowmax {
        t1: Schedule::InverseSqrt { limit: 0.9, c: 1.0 },
        omega: Schedule::InverseSqrt { limit: 4.0, c: 0.5 },
    });
    let r = validate_nglie(&rrr_mm, 3, &NglieOptions::new(100_000, 0.1, 0.01), &mut rng).unwrap();
    assert!(r.passes, "{r:?}");
}

#[test]
fn bandit_training_reaches_fixed_points() {
    let mdp = bandit([1.0, 0.0], 0.5);
    let channel = ObservationChannel::identity(1, 2);
    let lr = LearningRate::power_law(0.8, 1.0).unwrap();
    let q_cfg = TrainConfig::new(AlgorithmKind::QLearning, lr.clone()).with_operator(BackupOperator::Max);
    let strategy = ExplorationStrategy::eps_greedy(0.1);
    let (q, _) = train(&mdp, &channel, &strategy, None, &q_cfg, 1, 100_000, 3).unwrap();
    assert!((q.value(0, 0) - 2.0).abs() < 0.05 && (q.value(0, 1) - 1.0).abs() < 0.05);

    let s_cfg = TrainConfig::new(AlgorithmKind::Sarsa0, lr);
    let strategy = ExplorationStrategy::eps_greedy(0.2);
    let (q, _) = train(&mdp, &channel, &strategy, None, &s_cfg, 1, 100_000, 3).unwrap();
    let op = BackupOperator::RankAverage { weights: vec![0.9, 0.1] };
    let fp = solve_fixed_point(&mdp, &op, 1e-12, 10_000).unwrap();
    assert!((q.value(0, 0) - fp.value(0, 0)).abs() < 0.05);
    assert!((q.value(0, 0) - 2.0).abs() > 0.05);
}

#[test]
fn zero_rewards_keep_zero_table() {
    let mdp = bandit([0.0, 0.0], 0.9);
    let channel = ObservationChannel::identity(1, 2);
    let cfg = TrainConfig::new(AlgorithmKind::SafeSarsa0, LearningRate::power_law(1.0, 1.0).unwrap());
    let (q, _) = train(&mdp, &channel, &ExplorationStrategy::eps_greedy(0.3), None, &cfg, 1, 1_000, 0).unwrap();
    assert!(q.values().iter().all(|&v| v == 0.0));
}

#[test]
fn fair_coin_transition_frequency() {
    let mdp = TabularMdp::new(2, 1, vec![0.5, 0.5, 0.5, 0.5], vec![0.0; 4], 0.9, 0, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ones = (0..100_000).filter(|_| mdp.step(0, 0, &mut rng).unwrap().0 == 1).count();
    assert!((ones as f64 / 1e5 - 0.5).abs() < 0.01);
}

#[test]
fn infected_channel_observes_trap_as_y() {
    let env = make_three_state::<f64>(&ThreeStateParams {
        infection_time: Some(100),
        ..ThreeStateParams::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(env.channel.observe(99, A, Z, &mut rng).unwrap(), O_Z);
    assert_eq!(env.channel.observe(100, A, Z, &mut rng).unwrap(), O_Y);
    assert_eq!(env.channel.observe(100, B, X, &mut rng).unwrap(), O_X);
    assert!(!env.channel.is_infected(99));
    assert!(env.channel.is_infected(100));
}
