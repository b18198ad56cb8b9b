use curriculum_core::analysis::{action_proportions, probe_q_network, steps_to_best};
use curriculum_core::baselines::{BaselineKind, BaselineScheduler};
use curriculum_core::dqn::{
    batch_gradient, soft_update, EpsilonSchedule, ReplayBuffer, Transition,
};
use curriculum_core::envs::{
    EvalTarget, StateVector, StudentEnvironment, SyntheticTransferStudent,
};
use curriculum_core::neural::MlpParams;
use curriculum_core::tscl::ReturnTable;
use curriculum_core::{
    DecisionSource, ExperimentLog, ExperimentRng, Score, StepRecord, TaskId, TaskSet,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn score(v: f64) -> Score {
    Score::new(v).unwrap()
}

fn total_variation(counts: &[u64], target: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(target)
        .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
        .sum::<f64>()
        / 2.0
}

fn log_of(actions: &[usize]) -> ExperimentLog {
    let mut log = ExperimentLog::new(
        0,
        "test",
        TaskSet::eight_task_default(),
        serde_json::Value::Null,
    );
    log.records = actions
        .iter()
        .enumerate()
        .map(|(i, &a)| StepRecord {
            step: i as u64 + 1,
            action: TaskId(a),
            reward: None,
            score: None,
            epsilon: None,
            decision_source: DecisionSource::Random,
        })
        .collect();
    log
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ewma_contracts_geometrically(q0 in -5.0..5.0f64, r in -2.0..2.0f64, alpha in 0.01..1.0f64, m in 1usize..60) {
        let mut t = ReturnTable::new(1, []);
        t.q[0] = q0;
        // with h at 0 every observation yields reward r
        for _ in 0..m {
            t.h[0] = 0.0;
            t.observe(TaskId(0), score(r), alpha);
        }
        let expected = (1.0 - alpha).powi(m as i32) * (q0 - r).abs();
        prop_assert!(((t.q[0] - r).abs() - expected).abs() <= 1e-12 * (1.0 + (q0 - r).abs()));
    }

    #[test]
    fn greedy_choice_ignores_reward_sign(scores in prop::collection::vec((0usize..4, -10.0..10.0f64), 1..80)) {
        let mut plus = ReturnTable::new(4, []);
        let mut minus = ReturnTable::new(4, []);
        for &(a, x) in &scores {
            let rp = plus.observe(TaskId(a), score(x), 0.1);
            let rm = minus.observe(TaskId(a), score(-x), 0.1);
            prop_assert_eq!(rp, -rm);
        }
        prop_assert_eq!(plus.greedy(), minus.greedy());
    }

    #[test]
    fn epsilon_is_monotone_and_bounded(w in 0u64..50_000, horizon in 1u64..80_000, a in 0u64..200_000, b in 0u64..200_000) {
        let s = EpsilonSchedule::new(1.0, 0.01, w, horizon).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(s.epsilon_at(lo) >= s.epsilon_at(hi));
        prop_assert!((0.01..=1.0).contains(&s.epsilon_at(lo)));
    }

    #[test]
    fn replay_never_exceeds_capacity(cap in 1usize..20, min_frac in 0.0..1.0f64, pushes in 0usize..60) {
        let min = ((cap as f64 * min_frac) as usize).max(1);
        let mut buf = ReplayBuffer::new(cap, min, 2).unwrap();
        let mut rng = ExperimentRng::seed_from_u64(1);
        let s = StateVector::new(vec![1.0, 2.0], 1).unwrap();
        for i in 0..pushes {
            prop_assert_eq!(buf.sample(1, &mut rng).is_ok(), buf.len() >= min);
            buf.push(Transition { state_prev: s.clone(), action: TaskId(0), reward: i as f64, state_next: s.clone() }).unwrap();
            prop_assert!(buf.len() <= cap);
        }
        let kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        let expected: Vec<f64> = (pushes.saturating_sub(cap)..pushes).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn soft_update_converges_geometrically(seed in 0u64..1000, tau in 0.0..1.0f64, m in 1i32..50) {
        let mut rng = ExperimentRng::seed_from_u64(seed);
        let online = MlpParams::init_uniform(&[3, 4, 2], &mut rng).unwrap();
        let start = MlpParams::init_uniform(&[3, 4, 2], &mut rng).unwrap();
        let mut target = start.clone();
        for _ in 0..m {
            soft_update(&online, &mut target, tau).unwrap();
        }
        let factor = (1.0 - tau).powi(m);
        for ((t, s), o) in target.values().zip(start.values()).zip(online.values()) {
            prop_assert!(((t - o).abs() - factor * (s - o).abs()).abs() <= 1e-12);
        }
        let mut same = online.clone();
        soft_update(&online, &mut same, tau).unwrap();
        prop_assert_eq!(&same, &online);
    }

    #[test]
    fn untaken_actions_do_not_affect_the_gradient(seed in 0u64..1000, shift in -3.0..3.0f64) {
        let mut rng = ExperimentRng::seed_from_u64(seed);
        let net = MlpParams::init_uniform(&[2, 5, 3], &mut rng).unwrap();
        let s = |v: &[f64]| StateVector::new(v.to_vec(), 1).unwrap();
        let batch = [
            Transition { state_prev: s(&[0.3, 0.7]), action: TaskId(1), reward: 0.2, state_next: s(&[0.1, 0.4]) },
            Transition { state_prev: s(&[0.9, 0.2]), action: TaskId(1), reward: -0.1, state_next: s(&[0.5, 0.5]) },
        ];
        let refs: Vec<&Transition> = batch.iter().collect();
        let targets = [0.4, -0.2];
        let (_, base) = batch_gradient(&net, &refs, &targets, 1.0).unwrap();
        let mut shifted = net.clone();
        let last = shifted.layers_mut().len() - 1;
        shifted.layers_mut()[last].biases[0] += shift;
        shifted.layers_mut()[last].biases[2] -= shift;
        let (_, moved) = batch_gradient(&shifted, &refs, &targets, 1.0).unwrap();
        prop_assert_eq!(base, moved);
    }

    #[test]
    fn proportions_ignore_order_within_windows(seed in 0u64..1000, len in 1usize..3000) {
        let mut rng = ExperimentRng::seed_from_u64(seed);
        let actions: Vec<usize> = (0..len).map(|_| rand::Rng::gen_range(&mut rng, 0..8)).collect();
        let mut shuffled = actions.clone();
        for chunk in shuffled.chunks_mut(500) {
            chunk.shuffle(&mut rng);
        }
        let a = action_proportions(&log_of(&actions), 500).unwrap();
        let b = action_proportions(&log_of(&shuffled), 500).unwrap();
        prop_assert_eq!(&a, &b);

        let mut json = Vec::new();
        log_of(&actions).write_json(&mut json).unwrap();
        let back = ExperimentLog::read_json(json.as_slice()).unwrap();
        prop_assert_eq!(action_proportions(&back, 500).unwrap(), a);
    }

    #[test]
    fn width_one_is_plain_argmax(values in prop::collection::vec(-100.0..100.0f64, 1..50)) {
        let trace: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as u64 * 10, v)).collect();
        let mut best = 0;
        for i in 1..values.len() {
            if values[i] > values[best] {
                best = i;
            }
        }
        prop_assert_eq!(steps_to_best(&trace, 1).unwrap(), best as u64 * 10);
    }

    #[test]
    fn probe_rows_are_distributions(seed in 0u64..1000, amp in 0.0..20.0f64, task in 0usize..4) {
        let mut rng = ExperimentRng::seed_from_u64(seed);
        let net = MlpParams::init_uniform(&[8, 6, 4], &mut rng).unwrap();
        let base = StateVector::new((0..8).map(|i| 1.0 + i as f64 * 0.3).collect(), 2).unwrap();
        let row = probe_q_network(&net, &base, TaskId(task), amp).unwrap();
        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(row.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn evaluation_is_read_only(seed in 0u64..1000, schedule in prop::collection::vec(0usize..8, 1..200)) {
        let mut quiet = SyntheticTransferStudent::eight_task_default();
        let mut busy = SyntheticTransferStudent::eight_task_default();
        quiet.reset(seed);
        busy.reset(seed);
        let mut rq = ExperimentRng::seed_from_u64(seed);
        let mut rb = ExperimentRng::seed_from_u64(seed);
        for &a in &schedule {
            let _ = busy.eval_score(EvalTarget::Task(TaskId(a))).unwrap();
            let _ = busy.observe_state();
            let _ = busy.eval_score(EvalTarget::Mixed).unwrap();
            quiet.train_on(TaskId(a), &mut rq).unwrap();
            busy.train_on(TaskId(a), &mut rb).unwrap();
        }
        prop_assert_eq!(quiet.losses(), busy.losses());
        prop_assert_eq!(quiet.observe_state(), busy.observe_state());
    }
}

#[test]
fn baseline_draws_match_their_targets() {
    let tasks = TaskSet::eight_task_default();
    let run = curriculum_core::RunConfig::new(100_000, 1, 0, 0);
    for (kind, target) in [
        (BaselineKind::Uniform, vec![0.125; 8]),
        (BaselineKind::Proportional, tasks.weights()),
    ] {
        let sched = BaselineScheduler::new(kind, &run, &tasks).unwrap();
        let mut rng = ExperimentRng::seed_from_u64(2024);
        let mut counts = vec![0u64; 8];
        for step in 0..100_000 {
            counts[sched.select(step, &mut rng).0 .0] += 1;
        }
        let tv = total_variation(&counts, &target);
        assert!(tv < 0.01, "{kind:?}: total variation {tv}");
    }
}

#[test]
fn single_task_baseline_always_picks_it() {
    let tasks = TaskSet::from_weights(&[("only", 1.0, true)]).unwrap();
    let run = curriculum_core::RunConfig::new(100, 1, 0, 0);
    let mut rng = ExperimentRng::seed_from_u64(3);
    for kind in [BaselineKind::Uniform, BaselineKind::Proportional] {
        let sched = BaselineScheduler::new(kind, &run, &tasks).unwrap();
        assert!((0..100).all(|s| sched.select(s, &mut rng).0 == TaskId(0)));
    }
}
