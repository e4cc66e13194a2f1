//! Acceptance gate: one test per criterion, each printing a `criterion N:
//! pass` line. Heavy artifacts (trained runs, sweeps) are built once and
//! shared. Run with `cargo test --test acceptance -- --nocapture` to watch
//! the lines appear.

use std::collections::BTreeMap;
use std::process::Command;

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridtalk::analysis::{
    self, bootstrap_mean_ci, flow_ascii, message_map_ascii, probe_flow_map,
    probe_message_map,
};
use gridtalk::config::ExperimentConfig;
use gridtalk::env::{
    count_shortest_paths, make_layout, min_shortest_path_cover, shortest_distances,
    theoretical_max_return, Layout, LayoutName, MessageSeq,
};
use gridtalk::nn::{DenseNet, GradientSet, NetInput};
use gridtalk::training::{evaluate, sweep, train, Channel, SweepGrid, SweepRun, TrainOutput};

const LAYOUTS: [&str; 5] = ["empty_room", "pong", "two_room", "four_room", "flower"];

fn layout(name: &str) -> Layout {
    make_layout(name.parse::<LayoutName>().unwrap())
}

fn desk_base() -> ExperimentConfig {
    ExperimentConfig {
        vocab: 25,
        total_steps: 2_000_000,
        ..ExperimentConfig::default()
    }
}

fn eval_of(run: &SweepRun) -> f64 {
    run.outcome
        .as_ref()
        .map(|o| o.record.final_eval.normalized_return)
        .unwrap_or(f64::NEG_INFINITY)
}

/// Criterion 4 artifact: the default 3x3 grid (learning rate x epsilon) at
/// the desk budget on empty_room, M=1, N=25.
static GRID9: Lazy<Vec<SweepRun>> = Lazy::new(|| {
    let grid = SweepGrid::new(desk_base(), 1).default_axes();
    sweep(&grid, 1).expect("grid sweep runs")
});

static BEST: Lazy<&'static SweepRun> = Lazy::new(|| {
    GRID9
        .iter()
        .max_by(|a, b| eval_of(a).total_cmp(&eval_of(b)))
        .expect("non-empty sweep")
});

fn best_output() -> &'static TrainOutput {
    BEST.outcome.as_ref().expect("best run finished")
}

/// Criterion 8 artifact: a trained 5-sender setup at the desk budget.
static FIVE_SENDER: Lazy<TrainOutput> = Lazy::new(|| {
    let mut config = ExperimentConfig {
        senders: 5,
        vocab: 3,
        lr_sender: 1e-4,
        lr_receiver: 1e-4,
        epsilon_sender: 0.2,
        epsilon_receiver: 0.2,
        ..desk_base()
    };
    config.seed = config.derive_seed(8, 0);
    train(&config).expect("5S-1R run")
});

#[test]
fn c1_oracle_exactness() {
    let expected_counts = [
        ("empty_room", 64),
        ("flower", 44),
        ("two_room", 32),
        ("four_room", 22),
        ("pong", 14),
    ];
    for (name, count) in expected_counts {
        let l = layout(name);
        assert_eq!(count_shortest_paths(&l), count, "path count for {name}");
        let cover = min_shortest_path_cover(&l);
        let expected_cover = if name == "pong" { 4 } else { 8 };
        assert_eq!(cover.size, expected_cover, "cover size for {name}");
    }
    println!("criterion 1: pass - path counts {{64,44,32,22,14}} and covers {{8,8,8,8,4}} exact");
}

#[test]
fn c2_theoretical_max_vs_monte_carlo() {
    // independent oracle: walk a shortest path; survive d-1 termination
    // draws to collect the terminal reward
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let episodes = 1_000_000;
    for name in LAYOUTS {
        let l = layout(name);
        let distances = shortest_distances(&l);
        let goals = l.goal_candidates();
        for gamma in [2.0 / 3.0, 0.8, 0.9] {
            let analytic = theoretical_max_return::<f64>(&l, gamma);
            let mut hits = 0u64;
            for _ in 0..episodes {
                let d = distances.get(goals[rng.gen_range(0..goals.len())]).unwrap();
                let survived = (1..d).all(|_| rng.gen::<f64>() < gamma);
                if survived {
                    hits += 1;
                }
            }
            let mc = hits as f64 / episodes as f64;
            assert!(
                (analytic - mc).abs() < 1e-2,
                "{name} gamma={gamma}: analytic {analytic} vs MC {mc}"
            );
        }
    }
    let er = theoretical_max_return::<f64>(&layout("empty_room"), 0.8);
    assert!((er - 0.732).abs() < 1e-3, "empty_room gamma=0.8: {er}");
    println!("criterion 2: pass - analytic max within 1e-2 of 10^6-episode MC for 5 layouts x 3 gammas; empty_room 0.8 -> {er:.4}");
}

#[test]
fn c3_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        // alternate between the sender (linear 25->N) and receiver
        // (25+M*N -> H -> 4) architectures
        let dims: Vec<usize> = if case % 2 == 0 {
            vec![25, 2 + case % 7]
        } else {
            vec![25 + (1 + case % 3) * 4, 4 + case % 9, 4]
        };
        let mut net: DenseNet<f64> = DenseNet::init(&dims, &mut rng, 0.3).unwrap();
        for layer in &mut net.layers {
            for b in &mut layer.bias {
                *b = rng.gen_range(-0.3..0.3);
            }
        }
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out_grad: Vec<f64> = (0..*dims.last().unwrap())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let cache = net.forward_cached(NetInput::Dense(&input)).unwrap();
        let analytic = net.backward(&cache, &out_grad).unwrap();

        let scalar_loss = |net: &DenseNet<f64>| -> f64 {
            net.forward(&input)
                .unwrap()
                .iter()
                .zip(&out_grad)
                .map(|(o, g)| o * g)
                .sum()
        };
        let h = 1e-6;
        let mut numeric = GradientSet::zeros_like(&net);
        for li in 0..net.layers.len() {
            for wi in 0..net.layers[li].weights.len() {
                let orig = net.layers[li].weights[wi];
                net.layers[li].weights[wi] = orig + h;
                let up = scalar_loss(&net);
                net.layers[li].weights[wi] = orig - h;
                let down = scalar_loss(&net);
                net.layers[li].weights[wi] = orig;
                numeric.layers[li].0[wi] = (up - down) / (2.0 * h);
            }
            for bi in 0..net.layers[li].bias.len() {
                let orig = net.layers[li].bias[bi];
                net.layers[li].bias[bi] = orig + h;
                let up = scalar_loss(&net);
                net.layers[li].bias[bi] = orig - h;
                let down = scalar_loss(&net);
                net.layers[li].bias[bi] = orig;
                numeric.layers[li].1[bi] = (up - down) / (2.0 * h);
            }
        }
        for (li, ((aw, ab), (nw, nb))) in
            analytic.layers.iter().zip(&numeric.layers).enumerate()
        {
            for (i, (&a, &n)) in aw.iter().zip(nw).chain(ab.iter().zip(nb)).enumerate()
            {
                let scale = a.abs().max(n.abs()).max(1.0);
                let rel = (a - n).abs() / scale;
                worst = worst.max(rel);
                assert!(
                    rel <= 1e-4,
                    "case {case} layer {li} param {i}: analytic {a} vs numeric {n}"
                );
            }
        }
    }
    println!("criterion 3: pass - backward vs central differences, 100 nets, max rel err {worst:.2e}");
}

#[test]
fn c4_desk_scale_convergence() {
    let output = best_output();
    let eval = &output.record.final_eval;
    assert_eq!(eval.episodes, 1000);
    assert!(
        eval.normalized_return >= 0.90,
        "best-of-grid normalized return {} < 0.90 (config {})",
        eval.normalized_return,
        BEST.config
    );
    println!(
        "criterion 4: pass - best of default grid (lr={}, eps={}) reaches normalized {:.4} >= 0.90",
        BEST.config.lr_receiver, BEST.config.epsilon_receiver, eval.normalized_return
    );
}

#[test]
fn c5_baseline_ordering_on_every_layout() {
    let best = &BEST.config;
    let mut lines = Vec::new();
    for name in LAYOUTS {
        let mut config = ExperimentConfig {
            layout: name.into(),
            ..best.clone()
        };
        config.seed = config.derive_seed(1, 0);
        let mut comm = train(&config).unwrap();

        let mut random_config = ExperimentConfig {
            mode: gridtalk::config::RunMode::RandomMessages,
            ..config.clone()
        };
        random_config.seed = random_config.derive_seed(1, 0);
        let mut rand_run = train(&random_config).unwrap();

        let l = layout(name);
        let gamma = config.gamma;
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let (_, comm_returns) = evaluate(
            &l,
            &mut comm.channel,
            &mut comm.receiver,
            gamma,
            1000,
            &mut rng,
        )
        .unwrap();
        let (_, rand_returns) = evaluate(
            &l,
            &mut rand_run.channel,
            &mut rand_run.receiver,
            gamma,
            1000,
            &mut rng,
        )
        .unwrap();

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mut boot = ChaCha8Rng::seed_from_u64(56);
        let comm_ci = bootstrap_mean_ci(&comm_returns, 10_000, &mut boot);
        let rand_ci = bootstrap_mean_ci(&rand_returns, 10_000, &mut boot);
        assert!(
            mean(&rand_returns) > 0.0,
            "{name}: random baseline never reaches the goal"
        );
        assert!(
            comm_ci.0 > rand_ci.1,
            "{name}: communication CI ({:.3}, {:.3}) overlaps random CI ({:.3}, {:.3})",
            comm_ci.0,
            comm_ci.1,
            rand_ci.0,
            rand_ci.1
        );
        lines.push(format!(
            "{name} comm {:.3} > random {:.3}",
            mean(&comm_returns),
            mean(&rand_returns)
        ));
    }
    println!(
        "criterion 5: pass - non-overlapping 95% CIs on all layouts ({})",
        lines.join("; ")
    );
}

#[test]
fn c6_capacity_monotonicity() {
    // per capacity: stable sub-grid of the default axes, 3 seeds per
    // config, best config by mean normalized eval return
    let capacities = [3usize, 4, 6, 9, 25];
    let mut grid = SweepGrid::new(desk_base(), 2);
    grid.vocabs = capacities.to_vec();
    grid.learning_rates = vec![1e-3, 1e-4];
    grid.epsilons = vec![0.1, 0.2];
    grid.replicates = 3;
    let runs = sweep(&grid, 1).unwrap();

    let mut best: BTreeMap<usize, (f64, f64)> = BTreeMap::new(); // C -> (mean, se)
    let mut by_config: BTreeMap<(usize, u64, u64), Vec<f64>> = BTreeMap::new();
    for run in &runs {
        let key = (
            run.config.vocab,
            run.config.lr_receiver.to_bits(),
            run.config.epsilon_receiver.to_bits(),
        );
        by_config.entry(key).or_default().push(eval_of(run));
    }
    for ((vocab, _, _), evals) in &by_config {
        assert_eq!(evals.len(), 3);
        let mean = evals.iter().sum::<f64>() / 3.0;
        let var = evals.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / 2.0;
        let se = (var / 3.0).sqrt();
        let entry = best.entry(*vocab).or_insert((f64::NEG_INFINITY, 0.0));
        if mean > entry.0 {
            *entry = (mean, se);
        }
    }

    let points: Vec<(usize, f64, f64)> =
        capacities.iter().map(|&c| (c, best[&c].0, best[&c].1)).collect();
    for pair in points[..4].windows(2) {
        let (c0, m0, s0) = pair[0];
        let (c1, m1, s1) = pair[1];
        let pooled = (s0 * s0 + s1 * s1).sqrt();
        assert!(
            m1 >= m0 - pooled,
            "C={c1} mean {m1:.3} below C={c0} mean {m0:.3} by more than pooled SE {pooled:.3}"
        );
    }
    let (_, m3, _) = points[0];
    let (_, m25, _) = points[4];
    assert!(
        m25 >= m3 + 0.15,
        "C=25 mean {m25:.3} does not exceed C=3 mean {m3:.3} by 0.15"
    );
    let summary: Vec<String> = points
        .iter()
        .map(|(c, m, _)| format!("C={c}: {m:.3}"))
        .collect();
    println!(
        "criterion 6: pass - capacity curve non-decreasing within pooled SE ({})",
        summary.join(", ")
    );
}

#[test]
fn c7_probe_determinism_and_totality() {
    let output = best_output();
    let l = layout("empty_room");
    let senders = match &output.channel {
        Channel::Learned(s) => s,
        _ => unreachable!("criterion 4 trains learned senders"),
    };

    let map_a = probe_message_map(senders, &l).unwrap();
    let map_b = probe_message_map(senders, &l).unwrap();
    assert_eq!(map_a, map_b, "message probe must be deterministic");
    assert_eq!(map_a.entries.len(), 24, "message map total over goal cells");
    assert!(
        map_a.distinct_messages() >= 8,
        "a near-optimal C=25 protocol must use at least the 8 cover paths, got {}",
        map_a.distinct_messages()
    );

    let msg = MessageSeq::new(vec![map_a.entries[0].symbols[0]], 25).unwrap();
    let flow_a = probe_flow_map(&output.receiver, &msg, &l).unwrap();
    let flow_b = probe_flow_map(&output.receiver, &msg, &l).unwrap();
    assert_eq!(flow_a, flow_b, "flow probe must be deterministic");
    assert_eq!(flow_a.entries.len(), 25, "flow map total over free cells");

    let center = |text: &str| text.lines().nth(2).unwrap().as_bytes()[2];
    assert_eq!(center(&message_map_ascii(&map_a, &l).unwrap()), b' ');
    assert_eq!(center(&flow_ascii(&flow_a, &l)), b' ');
    println!(
        "criterion 7: pass - probes deterministic and total; {} distinct messages; ASCII center blank",
        map_a.distinct_messages()
    );
}

#[test]
fn c8_dominance_report_sanity() {
    let output = &*FIVE_SENDER;
    let senders = match &output.channel {
        Channel::Learned(s) => s.as_slice(),
        _ => unreachable!(),
    };
    let l = layout("empty_room");
    let report =
        analysis::dominance_scramble(senders, &output.receiver, &l, 1000, 17).unwrap();
    assert!(report.baseline_mean > 0.0, "trained baseline finds goals");
    for pair in report.entries.windows(2) {
        assert!(pair[0].drop_pct >= pair[1].drop_pct, "drops must be sorted");
    }
    for e in &report.entries {
        assert!(
            e.scrambled_mean <= report.baseline_mean || e.scrambled_ci.0 <= report.baseline_ci.1,
            "sender {}: scrambled {:.3} above baseline {:.3} beyond CI overlap",
            e.sender,
            e.scrambled_mean,
            report.baseline_mean
        );
    }

    // synthetic ignored sender: zero the receiver's first-layer weights on
    // sender 2's message block; its drop must be exactly zero
    let ignored = 2usize;
    let mut deaf = output.receiver.clone();
    let in_dim = deaf.net.layers[0].in_dim;
    for row in 0..deaf.net.layers[0].out_dim {
        for col in 25 + ignored * 3..25 + (ignored + 1) * 3 {
            deaf.net.layers[0].weights[row * in_dim + col] = 0.0;
        }
    }
    let deaf_report = analysis::dominance_scramble(senders, &deaf, &l, 1000, 17).unwrap();
    let entry = deaf_report
        .entries
        .iter()
        .find(|e| e.sender == ignored)
        .unwrap();
    assert_eq!(entry.drop_pct, 0.0, "ignored sender must drop exactly 0");
    assert_eq!(entry.drop_ci_pct, (0.0, 0.0));

    let drops: Vec<String> = report
        .entries
        .iter()
        .map(|e| format!("s{} {:.0}%", e.sender, e.drop_pct))
        .collect();
    println!(
        "criterion 8: pass - baseline {:.3}, drops sorted ({}), ignored-sender drop exactly 0",
        report.baseline_mean,
        drops.join(", ")
    );
}

#[test]
fn c9_byte_identical_reruns() {
    let bin = env!("CARGO_BIN_EXE_gridtalk");
    let base = tempfile::tempdir().unwrap();
    let dirs = [base.path().join("a"), base.path().join("b")];
    for dir in &dirs {
        let status = Command::new(bin)
            .args([
                "train",
                "--vocab",
                "6",
                "--total-steps",
                "50000",
                "--metrics-every",
                "10000",
                "--window-episodes",
                "200",
                "--eval-episodes",
                "100",
                "--seed",
                "99",
                "--out",
                dir.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let runs_a = std::fs::read_dir(&dirs[0])
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.is_dir())
        .unwrap();
    let runs_b = dirs[1].join(runs_a.file_name().unwrap());
    assert!(runs_b.is_dir(), "rerun must produce the same fingerprint dir");
    for file in ["metrics.jsonl", "sender_0.json", "receiver.json"] {
        let a = std::fs::read(runs_a.join(file)).unwrap();
        let b = std::fs::read(runs_b.join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between identical reruns");
    }
    println!("criterion 9: pass - metrics and checkpoints byte-identical across reruns");
}

/// Not one of the numbered criteria: merging messages can never improve a
/// trained protocol, checked by simulation on three checkpoints.
#[test]
fn coarsening_cannot_help() {
    let mut sorted: Vec<&SweepRun> = GRID9.iter().collect();
    sorted.sort_by(|a, b| eval_of(b).total_cmp(&eval_of(a)));
    for run in sorted.iter().take(3) {
        let output = run.outcome.as_ref().unwrap();
        let senders = match &output.channel {
            Channel::Learned(s) => s,
            _ => unreachable!(),
        };
        let l = layout("empty_room");
        let map = probe_message_map(senders, &l).unwrap();
        let gamma = run.config.gamma;

        // merge the two most-used messages into one and replay greedily
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &map.entries {
            *counts.entry(e.symbols[0]).or_default() += 1;
        }
        let mut by_use: Vec<(usize, usize)> =
            counts.into_iter().map(|(m, c)| (c, m)).collect();
        by_use.sort_unstable_by(|a, b| b.cmp(a));
        let (keep, merge) = (by_use[0].1, by_use[1].1);

        let episodes = 2000;
        let mut base_sum = 0.0;
        let mut coarse_sum = 0.0;
        for variant in 0..2 {
            let mut rng = ChaCha8Rng::seed_from_u64(1234);
            for _ in 0..episodes {
                let mut state = gridtalk::env::reset(&l, &mut rng);
                let ctx =
                    gridtalk::env::encode_sender_context(&l, state.goal).unwrap();
                let mut symbol = senders[0].greedy(&ctx);
                if variant == 1 && symbol == merge {
                    symbol = keep;
                }
                let msg = MessageSeq::new(vec![symbol], 25).unwrap();
                state.set_messages(msg.clone()).unwrap();
                while !state.done {
                    let obs = gridtalk::env::encode_receiver_observation(
                        state.position,
                        &msg,
                    )
                    .unwrap();
                    let action = output.receiver.greedy(&obs);
                    gridtalk::env::step(&l, &mut state, action, &mut rng, 1.0 - gamma)
                        .unwrap();
                }
                let r = if state.goal_reached { 1.0 } else { 0.0 };
                if variant == 0 {
                    base_sum += r;
                } else {
                    coarse_sum += r;
                }
            }
        }
        let (base, coarse) =
            (base_sum / episodes as f64, coarse_sum / episodes as f64);
        let sigma = (2.0 * base * (1.0 - base) / episodes as f64).sqrt();
        assert!(
            coarse <= base + 3.0 * sigma.max(1e-3),
            "coarsening improved return: {base:.3} -> {coarse:.3}"
        );
    }
    println!("invariant: pass - message coarsening never helps (3 checkpoints)");
}
