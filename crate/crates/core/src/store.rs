//! On-disk run store. Each run gets a directory named by its config
//! fingerprint; replayable artifacts (metrics, checkpoints) carry no
//! wall-clock data, so a rerun of the same config reproduces them byte for
//! byte. Timing lives only in `run.json`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::AgentCheckpoint;
use crate::config::ExperimentConfig;
use crate::training::{RunRecord, TrainOutput};
use crate::{Error, Result};

/// Overrides the default `runs/` output root.
pub const RUNS_DIR_ENV: &str = "GRIDTALK_RUNS";

/// Summary block of `run.json`; everything except `wall_seconds` is a pure
/// function of the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub episodes: u64,
    pub steps: u64,
    pub final_window_return: f64,
    pub eval_mean_return: f64,
    pub eval_normalized_return: f64,
    pub wall_seconds: f64,
}

pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunStore { root: root.into() }
    }

    /// `$GRIDTALK_RUNS` if set, else `runs/` under the working directory.
    pub fn default_root() -> PathBuf {
        std::env::var_os(RUNS_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.root.join(config.fingerprint())
    }

    /// Writes all artifacts of a finished run and appends the manifest row.
    /// Returns the run directory. An existing directory for the same
    /// fingerprint is overwritten file by file.
    pub fn save(&self, output: &TrainOutput, wall_seconds: f64) -> Result<PathBuf> {
        let record = &output.record;
        let dir = self.run_dir(&record.config);
        fs::create_dir_all(&dir)?;

        let mut metrics = String::new();
        for row in &record.series {
            metrics.push_str(&serde_json::to_string(row)?);
            metrics.push('\n');
        }
        fs::write(dir.join("metrics.jsonl"), metrics)?;

        let summary = RunSummary {
            config: record.config.clone(),
            fingerprint: record.config.fingerprint(),
            episodes: record.episodes,
            steps: record.steps,
            final_window_return: record.final_window_return(),
            eval_mean_return: record.final_eval.mean_return,
            eval_normalized_return: record.final_eval.normalized_return,
            wall_seconds,
        };
        fs::write(
            dir.join("run.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;

        for ckpt in output.checkpoints() {
            fs::write(
                dir.join(checkpoint_file_name(&ckpt)),
                serde_json::to_string(&ckpt)?,
            )?;
        }

        self.append_manifest(&summary, "ok")?;
        Ok(dir)
    }

    /// Records a run that failed to finish; no artifacts are written.
    pub fn record_failure(&self, config: &ExperimentConfig) -> Result<()> {
        let summary = RunSummary {
            config: config.clone(),
            fingerprint: config.fingerprint(),
            episodes: 0,
            steps: 0,
            final_window_return: 0.0,
            eval_mean_return: 0.0,
            eval_normalized_return: 0.0,
            wall_seconds: 0.0,
        };
        self.append_manifest(&summary, "error")
    }

    /// One CSV row per run, append-only across saves.
    fn append_manifest(&self, summary: &RunSummary, status: &str) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        let path = self.root.join("manifest.csv");
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)?;
        if file.metadata()?.len() == 0 {
            writeln!(
                file,
                "fingerprint,layout,mode,senders,vocab,gamma,seed,steps,\
                 final_window_return,eval_normalized_return,wall_seconds,status"
            )?;
        }
        let c = &summary.config;
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            summary.fingerprint,
            c.layout,
            c.mode.as_str(),
            c.senders,
            c.vocab,
            c.gamma,
            c.seed,
            summary.steps,
            summary.final_window_return,
            summary.eval_normalized_return,
            summary.wall_seconds,
            status
        )?;
        Ok(())
    }

    pub fn load_summary(&self, dir: &Path) -> Result<RunSummary> {
        let text = fs::read_to_string(dir.join("run.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load_record(&self, dir: &Path) -> Result<RunRecord> {
        let summary = self.load_summary(dir)?;
        let text = fs::read_to_string(dir.join("metrics.jsonl"))?;
        let series = text
            .lines()
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(RunRecord {
            config: summary.config,
            series,
            episodes: summary.episodes,
            steps: summary.steps,
            final_eval: crate::training::EvalReport {
                episodes: 0,
                mean_return: summary.eval_mean_return,
                normalized_return: summary.eval_normalized_return,
            },
        })
    }

    /// Loads every checkpoint in a run directory, senders in index order,
    /// receiver last.
    pub fn load_checkpoints(&self, dir: &Path) -> Result<Vec<AgentCheckpoint>> {
        let mut names: Vec<String> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n == "receiver.json" || n.starts_with("sender_"))
            .collect();
        if names.is_empty() {
            return Err(Error::Usage(format!(
                "no checkpoints found in {}",
                dir.display()
            )));
        }
        // "receiver.json" sorts after "sender_*.json" only by accident of
        // spelling; order explicitly
        names.sort_by_key(|n| (n == "receiver.json", n.clone()));
        names
            .iter()
            .map(|n| {
                let text = fs::read_to_string(dir.join(n))?;
                Ok(serde_json::from_str(&text)?)
            })
            .collect()
    }

    /// Run directories present under the root, sorted by name.
    pub fn list_runs(&self) -> Result<Vec<PathBuf>> {
        if !self.root.exists() {
            return Ok(vec![]);
        }
        let mut dirs: Vec<PathBuf> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir() && p.join("run.json").exists())
            .collect();
        dirs.sort();
        Ok(dirs)
    }
}

fn checkpoint_file_name(ckpt: &AgentCheckpoint) -> String {
    match ckpt.role {
        crate::agents::AgentRole::Sender => format!("sender_{}.json", ckpt.index),
        crate::agents::AgentRole::Receiver => "receiver.json".into(),
    }
}
