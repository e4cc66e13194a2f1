//! Cartesian-product hyperparameter sweeps with derived per-run seeds.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};

use super::{train, RunRecord, TrainOutput};
use crate::config::{parse_key_values, ExperimentConfig};
use crate::{Error, Result};

/// Lists per swept hyperparameter; axes left empty inherit the base value.
/// Learning rates and exploration rates apply to both roles jointly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub base: ExperimentConfig,
    pub layouts: Vec<String>,
    pub senders: Vec<usize>,
    pub vocabs: Vec<usize>,
    pub gammas: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Seeds per configuration.
    pub replicates: u64,
    pub master_seed: u64,
}

impl SweepGrid {
    pub fn new(base: ExperimentConfig, master_seed: u64) -> Self {
        SweepGrid {
            base,
            layouts: vec![],
            senders: vec![],
            vocabs: vec![],
            gammas: vec![],
            learning_rates: vec![],
            epsilons: vec![],
            replicates: 1,
            master_seed,
        }
    }

    /// The default grid: learning rates {1e-2, 1e-3, 1e-4} x epsilon
    /// {0.05, 0.1, 0.2}, shared between the two roles.
    pub fn default_axes(mut self) -> Self {
        self.learning_rates = vec![1e-2, 1e-3, 1e-4];
        self.epsilons = vec![0.05, 0.1, 0.2];
        self
    }

    /// Parses a flat key=value grid file. List-valued keys take
    /// comma-separated values; any `ExperimentConfig` key is accepted for
    /// the base config.
    pub fn from_key_values(text: &str) -> Result<SweepGrid> {
        let mut map = parse_key_values(text)?;
        let mut grid = SweepGrid::new(ExperimentConfig::default(), 0);
        fn take_list<T: std::str::FromStr>(
            map: &mut BTreeMap<String, String>,
            key: &str,
        ) -> Result<Vec<T>>
        where
            T::Err: std::fmt::Display,
        {
            match map.remove(key) {
                None => Ok(vec![]),
                Some(v) => v
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<T>().map_err(|e| {
                            Error::Config(format!("grid key {key}: bad value {s:?}: {e}"))
                        })
                    })
                    .collect(),
            }
        }
        grid.layouts = take_list(&mut map, "layouts")?;
        grid.senders = take_list(&mut map, "senders_list")?;
        grid.vocabs = take_list(&mut map, "vocabs")?;
        grid.gammas = take_list(&mut map, "gammas")?;
        grid.learning_rates = take_list(&mut map, "learning_rates")?;
        grid.epsilons = take_list(&mut map, "epsilons")?;
        if let Some(v) = map.remove("replicates") {
            grid.replicates = v
                .parse()
                .map_err(|e| Error::Config(format!("replicates: {e}")))?;
        }
        if let Some(v) = map.remove("master_seed") {
            grid.master_seed = v
                .parse()
                .map_err(|e| Error::Config(format!("master_seed: {e}")))?;
        }
        crate::config::apply_key_values(&mut grid.base, &map)?;
        Ok(grid)
    }

    /// Expands to the Cartesian product, one config per (point, replicate),
    /// each with its own derived seed.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        fn axis<T: Clone>(list: &[T], base: T) -> Vec<T> {
            if list.is_empty() {
                vec![base]
            } else {
                list.to_vec()
            }
        }
        let mut out = Vec::new();
        for layout in axis(&self.layouts, self.base.layout.clone()) {
            for &senders in &axis(&self.senders, self.base.senders) {
                for &vocab in &axis(&self.vocabs, self.base.vocab) {
                    for &gamma in &axis(&self.gammas, self.base.gamma) {
                        for &lr in &axis(&self.learning_rates, self.base.lr_receiver) {
                            for &eps in &axis(&self.epsilons, self.base.epsilon_receiver)
                            {
                                for rep in 0..self.replicates.max(1) {
                                    let mut c = self.base.clone();
                                    c.layout = layout.clone();
                                    c.senders = senders;
                                    c.vocab = vocab;
                                    c.gamma = gamma;
                                    c.lr_sender = lr;
                                    c.lr_receiver = lr;
                                    c.epsilon_sender = eps;
                                    c.epsilon_receiver = eps;
                                    c.seed = c.derive_seed(self.master_seed, rep);
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One sweep entry: the config and either the finished run or the failure
/// message.
pub struct SweepRun {
    pub config: ExperimentConfig,
    pub outcome: std::result::Result<TrainOutput, String>,
}

impl SweepRun {
    pub fn record(&self) -> Option<&RunRecord> {
        self.outcome.as_ref().ok().map(|o| &o.record)
    }
}

/// Runs every expanded config on `workers` threads. Individual run failures
/// are recorded and the sweep continues. Results come back in expansion
/// order regardless of completion order.
pub fn sweep(grid: &SweepGrid, workers: usize) -> Result<Vec<SweepRun>> {
    let configs = grid.expand();
    if configs.is_empty() {
        return Err(Error::Config("sweep grid expands to no runs".into()));
    }
    let workers = workers.max(1).min(configs.len());
    let queue: Arc<Mutex<Vec<(usize, ExperimentConfig)>>> = Arc::new(Mutex::new(
        configs.iter().cloned().enumerate().rev().collect(),
    ));
    let (tx, rx) = mpsc::channel::<(usize, SweepRun)>();
    thread::scope(|scope| {
        for _ in 0..workers {
            let queue = Arc::clone(&queue);
            let tx = tx.clone();
            scope.spawn(move || loop {
                let job = queue.lock().expect("queue lock").pop();
                let Some((idx, config)) = job else { break };
                let outcome = train(&config).map_err(|e| e.to_string());
                let run = SweepRun {
                    config,
                    outcome,
                };
                if tx.send((idx, run)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
    });
    let mut results: Vec<(usize, SweepRun)> = rx.into_iter().collect();
    results.sort_by_key(|(i, _)| *i);
    Ok(results.into_iter().map(|(_, r)| r).collect())
}

/// Best run per (layout, senders, vocab) by final-window training return;
/// ties go to the lower learning rate.
pub fn select_best(runs: &[SweepRun]) -> Vec<&SweepRun> {
    let mut best: BTreeMap<(String, usize, usize), &SweepRun> = BTreeMap::new();
    for run in runs {
        let Some(record) = run.record() else { continue };
        let key = (
            run.config.layout.clone(),
            run.config.senders,
            run.config.vocab,
        );
        best.entry(key)
            .and_modify(|current| {
                let (a, b) = (record.final_window_return(), {
                    current.record().unwrap().final_window_return()
                });
                let better = a > b
                    || (a == b && run.config.lr_receiver < current.config.lr_receiver);
                if better {
                    *current = run;
                }
            })
            .or_insert(run);
    }
    best.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_base() -> ExperimentConfig {
        ExperimentConfig {
            vocab: 3,
            total_steps: 2_000,
            metrics_every: 1_000,
            window_episodes: 100,
            eval_episodes: 50,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn two_by_two_grid_expands_to_four_runs() {
        let mut grid = SweepGrid::new(tiny_base(), 9);
        grid.learning_rates = vec![1e-2, 1e-3];
        grid.epsilons = vec![0.1, 0.2];
        let runs = sweep(&grid, 4).unwrap();
        assert_eq!(runs.len(), 4);
        assert!(runs.iter().all(|r| r.outcome.is_ok()));
    }

    #[test]
    fn derived_seeds_are_distinct_and_reproducible() {
        let mut grid = SweepGrid::new(tiny_base(), 9);
        grid.learning_rates = vec![1e-2, 1e-3];
        grid.replicates = 2;
        let a = grid.expand();
        let b = grid.expand();
        let seeds: Vec<u64> = a.iter().map(|c| c.seed).collect();
        assert_eq!(seeds, b.iter().map(|c| c.seed).collect::<Vec<_>>());
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
    }

    #[test]
    fn failed_runs_are_recorded_and_sweep_continues() {
        let mut grid = SweepGrid::new(tiny_base(), 9);
        grid.vocabs = vec![3];
        grid.layouts = vec!["empty_room".into(), "nonexistent".into()];
        let runs = sweep(&grid, 2).unwrap();
        assert_eq!(runs.len(), 2);
        assert!(runs.iter().any(|r| r.outcome.is_ok()));
        assert!(runs.iter().any(|r| r.outcome.is_err()));
    }

    #[test]
    fn best_selection_prefers_lower_learning_rate_on_ties() {
        let mut grid = SweepGrid::new(
            ExperimentConfig {
                total_steps: 0,
                ..tiny_base()
            },
            9,
        );
        grid.learning_rates = vec![1e-2, 1e-3];
        let runs = sweep(&grid, 2).unwrap();
        // zero-step runs all have final-window return 0 -> tie
        let best = select_best(&runs);
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].config.lr_receiver, 1e-3);
    }

    #[test]
    fn grid_file_parses() {
        let text = "layouts = empty_room, pong\nlearning_rates = 0.01, 0.001\n\
                    epsilons = 0.1\nreplicates = 2\nmaster_seed = 5\nvocab = 9\n\
                    total_steps = 1000\n";
        let grid = SweepGrid::from_key_values(text).unwrap();
        assert_eq!(grid.layouts.len(), 2);
        assert_eq!(grid.base.vocab, 9);
        assert_eq!(grid.expand().len(), 2 * 2 * 1 * 2);
    }
}
