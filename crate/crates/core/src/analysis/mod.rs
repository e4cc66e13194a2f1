//! Post-hoc interrogation of trained policies: message maps, flow maps,
//! capacity curves, structure correlations, dominance scrambling, and
//! compositional partition reports.

mod render;

pub use render::{
    capacity_csv, dominance_csv, flow_ascii, flow_csv, message_map_ascii,
    message_map_csv,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::fnv1a64;
use crate::env::{
    self, count_shortest_paths, encode_receiver_observation, encode_sender_context,
    Layout, MessageSeq, NavAction, Position,
};
use crate::training::RunRecord;
use crate::{Error, ReceiverAgent64, Result, SenderAgent64};

/// Greedy message (tuple) per candidate goal cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageMap {
    pub layout: String,
    pub senders: usize,
    pub vocab_size: usize,
    /// One entry per free non-start cell, row-major order.
    pub entries: Vec<MessageMapEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageMapEntry {
    pub cell: Position,
    pub symbols: Vec<usize>,
}

impl MessageMap {
    pub fn get(&self, cell: Position) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|e| e.cell == cell)
            .map(|e| e.symbols.as_slice())
    }

    /// Cells a given sender maps to a given symbol.
    pub fn region(&self, sender: usize, symbol: usize) -> BTreeSet<Position> {
        self.entries
            .iter()
            .filter(|e| e.symbols[sender] == symbol)
            .map(|e| e.cell)
            .collect()
    }

    /// Distinct message tuples in use.
    pub fn distinct_messages(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.symbols.clone())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Probes every candidate goal cell with each sender's greedy policy.
pub fn probe_message_map(senders: &[SenderAgent64], layout: &Layout) -> Result<MessageMap> {
    if senders.is_empty() {
        return Err(Error::Usage("no senders to probe".into()));
    }
    let vocab_size = senders[0].vocab_size;
    let entries = layout
        .goal_candidates()
        .into_iter()
        .map(|cell| {
            let ctx = encode_sender_context(layout, cell)?;
            Ok(MessageMapEntry {
                cell,
                symbols: senders.iter().map(|s| s.greedy(&ctx)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MessageMap {
        layout: layout.name.clone(),
        senders: senders.len(),
        vocab_size,
        entries,
    })
}

/// Greedy receiver action per free cell for a fixed message, plus the
/// induced trajectory from the start (cut at the first revisited cell).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMap {
    pub layout: String,
    pub message: Vec<usize>,
    pub entries: Vec<FlowEntry>,
    pub trajectory: Vec<Position>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEntry {
    pub cell: Position,
    pub action: NavAction,
}

impl FlowMap {
    pub fn action_at(&self, cell: Position) -> Option<NavAction> {
        self.entries
            .iter()
            .find(|e| e.cell == cell)
            .map(|e| e.action)
    }
}

pub fn probe_flow_map(
    receiver: &ReceiverAgent64,
    message: &MessageSeq,
    layout: &Layout,
) -> Result<FlowMap> {
    let mut actions = BTreeMap::new();
    for cell in layout.free_cells() {
        let obs = encode_receiver_observation(cell, message)?;
        actions.insert(cell, receiver.greedy(&obs));
    }
    // deterministic rollout from the start until a cell repeats
    let mut trajectory = vec![layout.start];
    let mut seen: BTreeSet<Position> = BTreeSet::from([layout.start]);
    loop {
        let here = *trajectory.last().unwrap();
        let action = actions[&here];
        let (dx, dy) = action.delta();
        let (nx, ny) = (here.x as i16 + dx, here.y as i16 + dy);
        let next = if layout.in_bounds(nx, ny) {
            let p = Position {
                x: nx as u8,
                y: ny as u8,
            };
            if layout.is_wall(p) {
                here
            } else {
                p
            }
        } else {
            here
        };
        if !seen.insert(next) {
            break;
        }
        trajectory.push(next);
    }
    Ok(FlowMap {
        layout: layout.name.clone(),
        message: message.symbols.clone(),
        entries: actions
            .into_iter()
            .map(|(cell, action)| FlowEntry { cell, action })
            .collect(),
        trajectory,
    })
}

/// A flow trajectory sweeps region `R` Hamiltonian-style when it visits
/// every cell of `R` exactly once before revisiting any cell.
pub fn is_hamiltonian_sweep(flow: &FlowMap, region: &BTreeSet<Position>) -> bool {
    // trajectory is revisit-free by construction
    region.iter().all(|cell| flow.trajectory.contains(cell))
}

/// Mean normalized return per channel capacity C = N^M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurvePoint {
    pub capacity: u64,
    pub mean_normalized_return: f64,
    pub runs: usize,
    pub layout: String,
}

/// Pools evaluated runs of one layout by capacity and averages the
/// normalized returns (per-run weighting). Capacities without runs are
/// simply absent.
pub fn sweep_capacity_curve(
    records: &[&RunRecord],
    layout: &str,
) -> Vec<CapacityCurvePoint> {
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for record in records {
        if record.config.layout != layout {
            continue;
        }
        groups
            .entry(record.config.capacity())
            .or_default()
            .push(record.final_eval.normalized_return);
    }
    groups
        .into_iter()
        .map(|(capacity, returns)| CapacityCurvePoint {
            capacity,
            mean_normalized_return: returns.iter().sum::<f64>() / returns.len() as f64,
            runs: returns.len(),
            layout: layout.to_string(),
        })
        .collect()
}

/// Pearson correlation with a two-sided p-value from the t-distribution.
pub fn correlate(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Usage(format!(
            "correlate needs equal-length series of at least 3 points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Usage(
            "correlation undefined for zero-variance input".into(),
        ));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = n - 2.0;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::Runtime(format!("t-distribution: {e}")))?;
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((r, p))
}

/// Inverse of the total shortest-path count; higher means a more
/// constrained environment.
pub fn structure_measure(layout: &Layout) -> f64 {
    1.0 / count_shortest_paths(layout) as f64
}

/// Per-sender performance drops under message scrambling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub layout: String,
    pub episodes: usize,
    pub baseline_mean: f64,
    pub baseline_ci: (f64, f64),
    /// Sorted by relative drop, descending.
    pub entries: Vec<DominanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceEntry {
    pub sender: usize,
    pub scrambled_mean: f64,
    pub scrambled_ci: (f64, f64),
    /// (baseline - scrambled) / baseline, in percent.
    pub drop_pct: f64,
    pub drop_ci_pct: (f64, f64),
}

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

/// Evaluates a 5S-1R setup for `episodes` greedy episodes, then re-runs the
/// same episodes with each sender's symbol resampled uniformly (once per
/// episode). Episode-level randomness is seeded per episode, so a scramble
/// that the receiver provably ignores reproduces the baseline exactly.
pub fn dominance_scramble(
    senders: &[SenderAgent64],
    receiver: &ReceiverAgent64,
    layout: &Layout,
    episodes: usize,
    seed: u64,
) -> Result<DominanceReport> {
    if senders.len() != 5 {
        return Err(Error::Usage(format!(
            "dominance scrambling is defined for M = 5 senders, got {}",
            senders.len()
        )));
    }
    let gamma = receiver.gamma;
    let baseline = scramble_pass(senders, receiver, layout, episodes, seed, gamma, None)?;
    let mut boot_rng = ChaCha8Rng::seed_from_u64(seed ^ BOOTSTRAP_STREAM);
    let baseline_mean = mean(&baseline);
    let baseline_ci = bootstrap_mean_ci(&baseline, BOOTSTRAP_RESAMPLES, &mut boot_rng);
    let mut entries = Vec::new();
    for sender in 0..5 {
        let returns = scramble_pass(
            senders,
            receiver,
            layout,
            episodes,
            seed,
            gamma,
            Some(sender),
        )?;
        let scrambled_mean = mean(&returns);
        let scrambled_ci = bootstrap_mean_ci(&returns, BOOTSTRAP_RESAMPLES, &mut boot_rng);
        let rel_drop = |m: f64| 100.0 * (baseline_mean - m) / baseline_mean;
        // paired resampling: the same episodes enter both means, so a
        // scramble the receiver ignores gives a degenerate (0, 0) interval
        let drop_ci_pct = paired_drop_ci(
            &baseline,
            &returns,
            BOOTSTRAP_RESAMPLES,
            &mut boot_rng,
        );
        entries.push(DominanceEntry {
            sender,
            scrambled_mean,
            scrambled_ci,
            drop_pct: rel_drop(scrambled_mean),
            drop_ci_pct,
        });
    }
    entries.sort_by(|a, b| b.drop_pct.total_cmp(&a.drop_pct));
    Ok(DominanceReport {
        layout: layout.name.clone(),
        episodes,
        baseline_mean,
        baseline_ci,
        entries,
    })
}

/// Keeps bootstrap draws off the environment and scramble streams.
const BOOTSTRAP_STREAM: u64 = 0x6f6f_7473_7472_6170;

fn scramble_pass(
    senders: &[SenderAgent64],
    receiver: &ReceiverAgent64,
    layout: &Layout,
    episodes: usize,
    seed: u64,
    gamma: f64,
    scrambled: Option<usize>,
) -> Result<Vec<f64>> {
    let p_term = 1.0 - gamma;
    let vocab = senders[0].vocab_size;
    // Scramble draws come from their own stream so the environment stream
    // stays aligned with the baseline pass.
    let mut scramble_rng = ChaCha8Rng::seed_from_u64(
        seed ^ fnv1a64(&(scrambled.unwrap_or(99) as u64).to_le_bytes()),
    );
    let mut returns = Vec::with_capacity(episodes);
    for episode in 0..episodes as u64 {
        let mut env_rng = ChaCha8Rng::seed_from_u64(
            fnv1a64(&[seed.to_le_bytes(), episode.to_le_bytes()].concat()),
        );
        let mut state = env::reset(layout, &mut env_rng);
        let ctx = encode_sender_context(layout, state.goal)?;
        let mut symbols: Vec<usize> = senders.iter().map(|s| s.greedy(&ctx)).collect();
        if let Some(i) = scrambled {
            symbols[i] = scramble_rng.gen_range(0..vocab);
        }
        let messages = MessageSeq::new(symbols, vocab)?;
        state.set_messages(messages.clone())?;
        while !state.done {
            let obs = encode_receiver_observation(state.position, &messages)?;
            let action = receiver.greedy(&obs);
            env::step(layout, &mut state, action, &mut env_rng, p_term)?;
        }
        returns.push(if state.goal_reached { 1.0 } else { 0.0 });
    }
    Ok(returns)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Percentile bootstrap CI (95%) for the sample mean.
pub fn bootstrap_mean_ci<R: Rng>(
    samples: &[f64],
    resamples: usize,
    rng: &mut R,
) -> (f64, f64) {
    bootstrap_stat_ci(samples, resamples, rng, |m| m)
}

/// 95% percentile CI for the relative drop, resampling episode indices
/// jointly from the paired baseline/scrambled returns.
fn paired_drop_ci<R: Rng>(
    baseline: &[f64],
    scrambled: &[f64],
    resamples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let n = baseline.len();
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut b = 0.0;
            let mut s = 0.0;
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                b += baseline[i];
                s += scrambled[i];
            }
            if b == 0.0 {
                0.0
            } else {
                100.0 * (b - s) / b
            }
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let lo = stats[((resamples as f64) * 0.025) as usize];
    let hi = stats[(((resamples as f64) * 0.975) as usize).min(resamples - 1)];
    (lo, hi)
}

fn bootstrap_stat_ci<R: Rng, S: Fn(f64) -> f64>(
    samples: &[f64],
    resamples: usize,
    rng: &mut R,
    stat_of_mean: S,
) -> (f64, f64) {
    let n = samples.len();
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let s: f64 = (0..n).map(|_| samples[rng.gen_range(0..n)]).sum();
            stat_of_mean(s / n as f64)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let lo = stats[((resamples as f64) * 0.025) as usize];
    let hi = stats[(((resamples as f64) * 0.975) as usize).min(resamples - 1)];
    (lo, hi)
}

/// Per-sender spatial partitions and their pairwise coordination metrics.
/// Axis-alignment and mutual information are artifact-defined summaries of
/// the qualitative structure (they are not taken from any external
/// definition of compositionality).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionalReport {
    pub layout: String,
    pub per_sender: Vec<SenderPartition>,
    /// Mutual information in bits between each pair of sender labelings.
    pub pairwise_mutual_information: Vec<PairMi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenderPartition {
    pub sender: usize,
    pub regions: usize,
    pub entropy_bits: f64,
    /// Fraction of cells whose region lies entirely in one closed
    /// left/right half-space.
    pub axis_score_x: f64,
    /// Same for the up/down split.
    pub axis_score_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMi {
    pub sender_a: usize,
    pub sender_b: usize,
    pub mutual_information_bits: f64,
}

/// Summarizes how a multi-sender message map partitions the goal space.
pub fn compositional_report(map: &MessageMap, layout: &Layout) -> Result<CompositionalReport> {
    if map.senders < 2 {
        return Err(Error::Usage(
            "compositional report needs at least 2 senders".into(),
        ));
    }
    if map.layout != layout.name {
        return Err(Error::Usage(format!(
            "message map belongs to layout {:?}, not {:?}",
            map.layout, layout.name
        )));
    }
    let cells: Vec<Position> = map.entries.iter().map(|e| e.cell).collect();
    let labeling = |s: usize| -> Vec<usize> {
        map.entries.iter().map(|e| e.symbols[s]).collect()
    };
    let mut per_sender = Vec::new();
    for s in 0..map.senders {
        let labels = labeling(s);
        let regions: BTreeSet<usize> = labels.iter().copied().collect();
        per_sender.push(SenderPartition {
            sender: s,
            regions: regions.len(),
            entropy_bits: entropy_bits(&labels),
            axis_score_x: axis_score(&cells, &labels, |p| p.x),
            axis_score_y: axis_score(&cells, &labels, |p| p.y),
        });
    }
    let mut pairwise = Vec::new();
    for a in 0..map.senders {
        for b in a + 1..map.senders {
            pairwise.push(PairMi {
                sender_a: a,
                sender_b: b,
                mutual_information_bits: mutual_information_bits(
                    &labeling(a),
                    &labeling(b),
                ),
            });
        }
    }
    Ok(CompositionalReport {
        layout: layout.name.clone(),
        per_sender,
        pairwise_mutual_information: pairwise,
    })
}

pub fn entropy_bits(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1.0;
    }
    -counts
        .values()
        .map(|c| {
            let p = c / n;
            p * p.log2()
        })
        .sum::<f64>()
}

pub fn mutual_information_bits(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut ma: BTreeMap<usize, f64> = BTreeMap::new();
    let mut mb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *ma.entry(x).or_default() += 1.0;
        *mb.entry(y).or_default() += 1.0;
    }
    joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c / n;
            pxy * (pxy / ((ma[&x] / n) * (mb[&y] / n))).log2()
        })
        .sum()
}

/// Fraction of cells whose whole region fits in one closed half-space
/// along the given coordinate (center line 2 belongs to both halves, so
/// single-cell and center-line regions count as aligned).
fn axis_score(cells: &[Position], labels: &[usize], coord: impl Fn(Position) -> u8) -> f64 {
    let mut aligned = 0usize;
    let regions: BTreeSet<usize> = labels.iter().copied().collect();
    for region in regions {
        let members: Vec<Position> = cells
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == region)
            .map(|(&c, _)| c)
            .collect();
        let in_low = members.iter().all(|&p| coord(p) <= 2);
        let in_high = members.iter().all(|&p| coord(p) >= 2);
        if in_low || in_high {
            aligned += members.len();
        }
    }
    aligned as f64 / cells.len() as f64
}
