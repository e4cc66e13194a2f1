//! Command-line interface: `train`, `sweep`, `probe`, and `oracle`.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for
//! runtime failures.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    self, capacity_csv, dominance_csv, flow_ascii, flow_csv, message_map_ascii,
    message_map_csv,
};
use crate::config::{apply_key_values, parse_key_values, ExperimentConfig, RunMode};
use crate::env::{make_layout, min_shortest_path_cover, shortest_distances, Layout,
    MessageSeq, count_shortest_paths, theoretical_max_return};
use crate::store::RunStore;
use crate::training::{restore_agents, sweep, train, Channel, SweepGrid};
use crate::{Error, ReceiverAgent64, Result, SenderAgent64};

#[derive(Parser)]
#[command(
    name = "gridtalk",
    about = "Emergent-communication laboratory for gridworld navigation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train one sender/receiver pair (or a baseline) and save the run.
    Train(TrainArgs),
    /// Run a hyperparameter sweep from a grid file.
    Sweep(SweepArgs),
    /// Interrogate a saved run (message map, flow map, dominance, composition).
    Probe(ProbeArgs),
    /// Print exact oracle quantities for a layout.
    Oracle(OracleArgs),
}

/// Config-file plus flag overrides; flags win.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    layout: Option<String>,
    /// Sender count M (1..=5).
    #[arg(long)]
    senders: Option<usize>,
    /// Vocabulary size N per sender.
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon_sender: Option<f64>,
    #[arg(long)]
    epsilon_receiver: Option<f64>,
    #[arg(long)]
    lr_sender: Option<f64>,
    #[arg(long)]
    lr_receiver: Option<f64>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    metrics_every: Option<u64>,
    #[arg(long)]
    window_episodes: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// communication | q_baseline | random_messages
    #[arg(long)]
    mode: Option<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            apply_key_values(&mut config, &parse_key_values(&text)?)?;
        }
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    config.$field = v.clone();
                })*
            };
        }
        set!(
            layout, senders, vocab, gamma, epsilon_sender, epsilon_receiver,
            lr_sender, lr_receiver, hidden_width, init_scale, total_steps,
            metrics_every, window_episodes, eval_episodes, seed
        );
        if let Some(mode) = &self.mode {
            config.mode = mode.parse::<RunMode>()?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output root for run directories (default: $GRIDTALK_RUNS or runs/).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid file: config keys plus list-valued `layouts`, `senders_list`,
    /// `vocabs`, `gammas`, `learning_rates`, `epsilons`, and scalar
    /// `replicates`, `master_seed`.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// messages | flow | dominance | composition
    #[arg(long)]
    kind: String,
    /// Saved run directory (as printed by `train`).
    #[arg(long)]
    run: PathBuf,
    /// ascii | csv | json
    #[arg(long, default_value = "ascii")]
    format: String,
    /// Comma-separated symbols, one per sender (flow probe only; default:
    /// every single-sender message).
    #[arg(long)]
    message: Option<String>,
    /// Evaluation episodes (dominance probe).
    #[arg(long, default_value_t = 1_000)]
    episodes: usize,
    /// Evaluation seed (dominance probe).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    /// Canonical layout name.
    #[arg(long, conflicts_with = "file")]
    layout: Option<String>,
    /// Custom layout file (5x5 text map: '#' wall, '.' free, 'S' start).
    #[arg(long)]
    file: Option<PathBuf>,
    /// Extra discount row besides the standard 2/3, 0.8, 0.9.
    #[arg(long)]
    gamma: Option<f64>,
}

/// Parses and executes; returns the process exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too and are not errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gridtalk: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Oracle(args) => cmd_oracle(args),
    }
}

fn store_for(out: Option<PathBuf>) -> RunStore {
    RunStore::new(out.unwrap_or_else(RunStore::default_root))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = args.config.build()?;
    let store = store_for(args.out);
    println!("run {} [{}]", config.fingerprint(), config);
    let start = Instant::now();
    let output = train(&config)?;
    let wall = start.elapsed().as_secs_f64();
    let dir = store.save(&output, wall)?;
    let record = &output.record;
    println!(
        "done: {} episodes, {} steps, window return {:.4}, eval return {:.4} \
         (normalized {:.4}), {:.1}s",
        record.episodes,
        record.steps,
        record.final_window_return(),
        record.final_eval.mean_return,
        record.final_eval.normalized_return,
        wall
    );
    println!("saved {}", dir.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.grid)?;
    let grid = SweepGrid::from_key_values(&text)?;
    let store = store_for(args.out);
    let start = Instant::now();
    let runs = sweep(&grid, args.workers)?;
    let wall = start.elapsed().as_secs_f64();
    let mut failures = 0;
    for run in &runs {
        match &run.outcome {
            Ok(output) => {
                store.save(output, wall / runs.len() as f64)?;
                println!(
                    "ok   {} [{}] window {:.4} eval {:.4}",
                    run.config.fingerprint(),
                    run.config,
                    output.record.final_window_return(),
                    output.record.final_eval.normalized_return
                );
            }
            Err(msg) => {
                failures += 1;
                store.record_failure(&run.config)?;
                println!("FAIL {} [{}]: {msg}", run.config.fingerprint(), run.config);
            }
        }
    }
    println!("\nbest per (layout, M, N):");
    let best = crate::training::select_best(&runs);
    for run in &best {
        let record = run.record().expect("selected runs finished");
        println!(
            "  {} lr={} eps={} window {:.4} eval {:.4}",
            run.config,
            run.config.lr_receiver,
            run.config.epsilon_receiver,
            record.final_window_return(),
            record.final_eval.normalized_return
        );
    }
    let layouts: BTreeSet<&str> =
        runs.iter().map(|r| r.config.layout.as_str()).collect();
    let records: Vec<_> = runs.iter().filter_map(|r| r.record()).collect();
    for layout in layouts {
        let curve = analysis::sweep_capacity_curve(&records, layout);
        if curve.len() > 1 {
            println!("\ncapacity curve ({layout}):");
            print!("{}", capacity_csv(&curve));
        }
    }
    // partial failure is tolerated as long as something finished
    if failures == runs.len() {
        return Err(Error::Runtime("every sweep run failed".into()));
    }
    Ok(())
}

/// Loads the trained agents saved under a run directory.
fn load_run(run: &Path) -> Result<(Layout, Channel, ReceiverAgent64)> {
    let store = RunStore::new(run.parent().unwrap_or(run));
    let summary = store.load_summary(run)?;
    let layout = make_layout(summary.config.layout_name()?);
    let checkpoints = store.load_checkpoints(run)?;
    let (channel, receiver) = restore_agents(&checkpoints, &summary.config.layout)?;
    Ok((layout, channel, receiver))
}

fn learned_senders(channel: &Channel) -> Result<&[SenderAgent64]> {
    match channel {
        Channel::Learned(senders) => Ok(senders),
        _ => Err(Error::Usage(
            "this probe needs a run with learned senders (mode=communication)".into(),
        )),
    }
}

fn emit(format: &str, ascii: String, csv: String, json: String) -> Result<()> {
    match format {
        "ascii" => print!("{ascii}"),
        "csv" => print!("{csv}"),
        "json" => println!("{json}"),
        other => {
            return Err(Error::Usage(format!(
                "unknown format {other:?} (expected ascii, csv, or json)"
            )))
        }
    }
    Ok(())
}

fn cmd_probe(args: ProbeArgs) -> Result<()> {
    let (layout, channel, receiver) = load_run(&args.run)?;
    match args.kind.as_str() {
        "messages" => {
            let senders = learned_senders(&channel)?;
            let map = analysis::probe_message_map(senders, &layout)?;
            emit(
                &args.format,
                message_map_ascii(&map, &layout)?,
                message_map_csv(&map),
                serde_json::to_string_pretty(&map)?,
            )
        }
        "flow" => {
            let (senders_n, vocab) = match &channel {
                Channel::Learned(s) => (s.len(), s[0].vocab_size),
                Channel::Random { senders, vocab } => (*senders, *vocab),
                Channel::GoalVisible => {
                    return Err(Error::Usage(
                        "flow probe is undefined for the q_baseline mode".into(),
                    ))
                }
            };
            let messages: Vec<MessageSeq> = match &args.message {
                Some(spec) => {
                    let symbols = spec
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<usize>().map_err(|e| {
                                Error::Usage(format!("bad symbol {s:?}: {e}"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if symbols.len() != senders_n {
                        return Err(Error::Usage(format!(
                            "expected {senders_n} symbols, got {}",
                            symbols.len()
                        )));
                    }
                    vec![MessageSeq::new(symbols, vocab)?]
                }
                None if senders_n == 1 => (0..vocab)
                    .map(|m| MessageSeq::new(vec![m], vocab))
                    .collect::<Result<Vec<_>>>()?,
                None => {
                    return Err(Error::Usage(
                        "--message is required when M > 1".into(),
                    ))
                }
            };
            for message in messages {
                let flow = analysis::probe_flow_map(&receiver, &message, &layout)?;
                if args.format == "ascii" && flow.message.len() == 1 {
                    println!("message {}:", flow.message[0]);
                }
                emit(
                    &args.format,
                    flow_ascii(&flow, &layout),
                    flow_csv(&flow),
                    serde_json::to_string_pretty(&flow)?,
                )?;
            }
            Ok(())
        }
        "dominance" => {
            let senders = learned_senders(&channel)?;
            let report = analysis::dominance_scramble(
                senders,
                &receiver,
                &layout,
                args.episodes,
                args.seed,
            )?;
            let mut ascii = format!(
                "baseline return {:.4} [{:.4}, {:.4}] over {} episodes\n",
                report.baseline_mean,
                report.baseline_ci.0,
                report.baseline_ci.1,
                report.episodes
            );
            for e in &report.entries {
                ascii.push_str(&format!(
                    "sender {}: scrambled {:.4} [{:.4}, {:.4}], drop {:.1}% \
                     [{:.1}%, {:.1}%]\n",
                    e.sender,
                    e.scrambled_mean,
                    e.scrambled_ci.0,
                    e.scrambled_ci.1,
                    e.drop_pct,
                    e.drop_ci_pct.0,
                    e.drop_ci_pct.1
                ));
            }
            emit(
                &args.format,
                ascii,
                dominance_csv(&report),
                serde_json::to_string_pretty(&report)?,
            )
        }
        "composition" => {
            let senders = learned_senders(&channel)?;
            let map = analysis::probe_message_map(senders, &layout)?;
            let report = analysis::compositional_report(&map, &layout)?;
            let mut ascii = message_map_ascii(&map, &layout)?;
            ascii.push('\n');
            for p in &report.per_sender {
                ascii.push_str(&format!(
                    "sender {}: {} regions, entropy {:.3} bits, axis x {:.2}, \
                     axis y {:.2}\n",
                    p.sender, p.regions, p.entropy_bits, p.axis_score_x, p.axis_score_y
                ));
            }
            for m in &report.pairwise_mutual_information {
                ascii.push_str(&format!(
                    "mi({}, {}) = {:.3} bits\n",
                    m.sender_a, m.sender_b, m.mutual_information_bits
                ));
            }
            let mut csv = String::from(
                "sender,regions,entropy_bits,axis_score_x,axis_score_y\n",
            );
            for p in &report.per_sender {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.sender, p.regions, p.entropy_bits, p.axis_score_x, p.axis_score_y
                ));
            }
            emit(
                &args.format,
                ascii,
                csv,
                serde_json::to_string_pretty(&report)?,
            )
        }
        other => Err(Error::Usage(format!(
            "unknown probe kind {other:?} (expected messages, flow, dominance, \
             or composition)"
        ))),
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let mut gammas = vec![2.0 / 3.0, 0.8, 0.9];
    if let Some(g) = args.gamma {
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie strictly in (0,1), got {g}"
            )));
        }
        if !gammas.contains(&g) {
            gammas.push(g);
        }
    }
    let layout = match (&args.layout, &args.file) {
        (Some(name), None) => make_layout(name.parse()?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("custom");
            Layout::from_text(name, &text)?
        }
        _ => {
            return Err(Error::Usage(
                "pass exactly one of --layout or --file".into(),
            ))
        }
    };
    print!("{}", layout.render());
    let distances = shortest_distances(&layout);
    println!("shortest-path count: {}", count_shortest_paths(&layout));
    let cover = min_shortest_path_cover(&layout);
    println!("minimal shortest-path cover: {}", cover.size);
    println!(
        "structure measure: {:.6}",
        analysis::structure_measure(&layout)
    );
    for g in gammas {
        println!(
            "theoretical max return (gamma={g:.4}): {:.6}",
            theoretical_max_return::<f64>(&layout, g)
        );
    }
    let mut ds: Vec<u32> = layout
        .goal_candidates()
        .iter()
        .filter_map(|&p| distances.get(p))
        .collect();
    ds.sort_unstable();
    println!(
        "goal distances: min {}, max {}",
        ds.first().unwrap(),
        ds.last().unwrap()
    );
    Ok(())
}
