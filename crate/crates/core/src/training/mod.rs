//! Episode loop wiring senders, receiver, and environment together, plus
//! baselines, evaluation, and hyperparameter sweeps.

mod sweep;

pub use sweep::{select_best, sweep, SweepGrid, SweepRun};

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentCheckpoint, AgentRole, CHECKPOINT_VERSION};
use crate::config::{ExperimentConfig, RunMode};
use crate::env::{
    self, encode_receiver_observation, encode_sender_context, make_layout, Layout,
    MessageSeq, Position, CELLS,
};
use crate::{Error, ReceiverAgent64, Result, SenderAgent64};

/// The receiver's message source.
pub enum Channel {
    /// Learned senders, one message each.
    Learned(Vec<SenderAgent64>),
    /// Uniform random symbols.
    Random { senders: usize, vocab: usize },
    /// Q-learning baseline: the goal cell itself, encoded as a single
    /// pseudo-message block of width 25, so the receiver sees
    /// position ⊕ goal (50 inputs) and no learned sender exists.
    GoalVisible,
}

impl Channel {
    pub fn from_config<R: Rng>(config: &ExperimentConfig, rng: &mut R) -> Result<Channel> {
        match config.mode {
            RunMode::Communication => {
                let senders = (0..config.senders)
                    .map(|_| {
                        SenderAgent64::new(
                            config.vocab,
                            config.epsilon_sender,
                            config.lr_sender,
                            config.init_scale,
                            rng,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Channel::Learned(senders))
            }
            RunMode::RandomMessages => Ok(Channel::Random {
                senders: config.senders,
                vocab: config.vocab,
            }),
            RunMode::QBaseline => Ok(Channel::GoalVisible),
        }
    }

    /// Width of one message block in the receiver observation.
    pub fn block_vocab(&self, config_vocab: usize) -> usize {
        match self {
            Channel::GoalVisible => CELLS,
            _ => config_vocab,
        }
    }

    pub fn block_count(&self, config_senders: usize) -> usize {
        match self {
            Channel::GoalVisible => 1,
            _ => config_senders,
        }
    }

    fn emit<R: Rng>(
        &self,
        layout: &Layout,
        goal: Position,
        rng: &mut R,
        greedy: bool,
    ) -> Result<MessageSeq> {
        match self {
            Channel::Learned(senders) => {
                let ctx = encode_sender_context(layout, goal)?;
                let symbols = senders
                    .iter()
                    .map(|s| s.act(&ctx, rng, greedy))
                    .collect::<Vec<_>>();
                MessageSeq::new(symbols, senders[0].vocab_size)
            }
            Channel::Random { senders, vocab } => {
                let symbols = (0..*senders).map(|_| rng.gen_range(0..*vocab)).collect();
                MessageSeq::new(symbols, *vocab)
            }
            Channel::GoalVisible => MessageSeq::new(vec![goal.index()], CELLS),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeOutcome {
    pub ret: f64,
    pub steps: u64,
}

/// Runs one episode: senders emit at t=0 (consuming no environment step),
/// then the receiver moves until the goal is reached or the episode
/// terminates. With `train`, the receiver updates per transition and each
/// sender updates once at episode end with the shared return.
pub fn run_episode<R: Rng>(
    layout: &Layout,
    channel: &mut Channel,
    receiver: &mut ReceiverAgent64,
    rng: &mut R,
    p_term: f64,
    train: bool,
    greedy: bool,
) -> Result<EpisodeOutcome> {
    let mut state = env::reset(layout, rng);
    run_episode_inner(layout, channel, receiver, rng, p_term, train, greedy, &mut state)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_episode_inner<R: Rng>(
    layout: &Layout,
    channel: &mut Channel,
    receiver: &mut ReceiverAgent64,
    rng: &mut R,
    p_term: f64,
    train: bool,
    greedy: bool,
    state: &mut env::EpisodeState,
) -> Result<EpisodeOutcome> {
    let goal = state.goal;
    let messages = channel.emit(layout, goal, rng, greedy)?;
    state.set_messages(messages.clone())?;

    let mut steps = 0u64;
    let mut obs = encode_receiver_observation(state.position, &messages)?;
    while !state.done {
        let action = receiver.act(&obs, rng, greedy);
        let reward = env::step(layout, state, action, rng, p_term)?;
        let next_obs = encode_receiver_observation(state.position, &messages)?;
        steps += 1;
        if train {
            receiver.update(&crate::agents::Transition {
                obs,
                action,
                reward,
                next_obs: next_obs.clone(),
                terminal: state.done,
            })?;
        }
        obs = next_obs;
    }
    let ret = if state.goal_reached { 1.0 } else { 0.0 };
    if train {
        if let Channel::Learned(senders) = channel {
            let ctx = encode_sender_context(layout, goal)?;
            for (i, sender) in senders.iter_mut().enumerate() {
                sender.update(&ctx, messages.symbols[i], ret)?;
            }
        }
    }
    Ok(EpisodeOutcome { ret, steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    /// Mean return divided by the layout's theoretical maximum.
    pub normalized_return: f64,
}

/// Everything a finished training run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub series: Vec<MetricsRow>,
    pub episodes: u64,
    pub steps: u64,
    pub final_eval: EvalReport,
}

impl RunRecord {
    /// Mean training return over the final sliding window.
    pub fn final_window_return(&self) -> f64 {
        self.series.last().map_or(0.0, |r| r.mean_return)
    }
}

/// A finished run: the record plus the trained agents.
pub struct TrainOutput {
    pub record: RunRecord,
    pub channel: Channel,
    pub receiver: ReceiverAgent64,
}

/// Trains until the receiver has taken at least `total_steps` environment
/// steps, recording the sliding-window training return at the metrics
/// cadence.
pub fn train(config: &ExperimentConfig) -> Result<TrainOutput> {
    config.validate()?;
    let layout = make_layout(config.layout_name()?);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut channel = Channel::from_config(config, &mut rng)?;
    let input_dim =
        CELLS + channel.block_count(config.senders) * channel.block_vocab(config.vocab);
    let mut receiver = ReceiverAgent64::new(
        input_dim,
        config.hidden_width,
        config.gamma,
        config.epsilon_receiver,
        config.lr_receiver,
        config.init_scale,
        &mut rng,
    )?;

    let p_term = config.p_term();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(config.window_episodes);
    let mut window_sum = 0.0;
    let mut series = Vec::new();
    let mut steps_done = 0u64;
    let mut episodes = 0u64;
    let mut next_tick = config.metrics_every;

    while steps_done < config.total_steps {
        let outcome = run_episode(
            &layout,
            &mut channel,
            &mut receiver,
            &mut rng,
            p_term,
            true,
            false,
        )?;
        steps_done += outcome.steps;
        episodes += 1;
        if window.len() == config.window_episodes {
            window_sum -= window.pop_front().unwrap();
        }
        window.push_back(outcome.ret);
        window_sum += outcome.ret;
        while next_tick <= steps_done {
            series.push(MetricsRow {
                step: next_tick,
                mean_return: window_sum / window.len() as f64,
            });
            next_tick += config.metrics_every;
        }
    }

    let mut eval_rng = ChaCha8Rng::seed_from_u64(eval_seed(config.seed));
    let (final_eval, _) = evaluate(
        &layout,
        &mut channel,
        &mut receiver,
        config.gamma,
        config.eval_episodes,
        &mut eval_rng,
    )?;
    Ok(TrainOutput {
        record: RunRecord {
            config: config.clone(),
            series,
            episodes,
            steps: steps_done,
            final_eval,
        },
        channel,
        receiver,
    })
}

fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x632be59bd9b4e019)
}

/// Greedy (epsilon = 0) evaluation over `episodes` fresh episodes; returns
/// the report and the per-episode returns for bootstrap analyses.
pub fn evaluate<R: Rng>(
    layout: &Layout,
    channel: &mut Channel,
    receiver: &mut ReceiverAgent64,
    gamma: f64,
    episodes: usize,
    rng: &mut R,
) -> Result<(EvalReport, Vec<f64>)> {
    if episodes == 0 {
        return Err(Error::Usage("need at least one evaluation episode".into()));
    }
    let p_term = 1.0 - gamma;
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let outcome =
            run_episode(layout, channel, receiver, rng, p_term, false, true)?;
        returns.push(outcome.ret);
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    let max = env::theoretical_max_return(layout, gamma);
    Ok((
        EvalReport {
            episodes,
            mean_return: mean,
            normalized_return: mean / max,
        },
        returns,
    ))
}

/// Trains the single non-communicating Q-learner that sees the goal.
pub fn baseline_q_learner(config: &ExperimentConfig) -> Result<TrainOutput> {
    let mut config = config.clone();
    config.mode = RunMode::QBaseline;
    train(&config)
}

/// Trains the receiver against a sender emitting uniform random messages.
pub fn baseline_random_messages(config: &ExperimentConfig) -> Result<TrainOutput> {
    let mut config = config.clone();
    config.mode = RunMode::RandomMessages;
    train(&config)
}

impl TrainOutput {
    /// Checkpoints for every trained agent (senders in order, receiver
    /// last).
    pub fn checkpoints(&self) -> Vec<AgentCheckpoint> {
        let config = &self.record.config;
        let rng_desc = format!("chacha8 seed {}", config.seed);
        let mut out = Vec::new();
        if let Channel::Learned(senders) = &self.channel {
            for (i, s) in senders.iter().enumerate() {
                out.push(AgentCheckpoint {
                    version: CHECKPOINT_VERSION,
                    role: AgentRole::Sender,
                    layout: config.layout.clone(),
                    senders: config.senders,
                    vocab_size: s.vocab_size,
                    epsilon: s.epsilon,
                    gamma: config.gamma,
                    index: i,
                    rng: rng_desc.clone(),
                    net: s.net.clone(),
                    optimizer: s.optimizer.clone(),
                });
            }
        }
        out.push(AgentCheckpoint {
            version: CHECKPOINT_VERSION,
            role: AgentRole::Receiver,
            layout: config.layout.clone(),
            senders: config.senders,
            vocab_size: config.vocab,
            epsilon: self.receiver.epsilon,
            gamma: self.receiver.gamma,
            index: 0,
            rng: rng_desc,
            net: self.receiver.net.clone(),
            optimizer: self.receiver.optimizer.clone(),
        });
        out
    }
}

/// Rebuilds agents from checkpoints, verifying they belong to `layout`.
pub fn restore_agents(
    checkpoints: &[AgentCheckpoint],
    layout: &str,
) -> Result<(Channel, ReceiverAgent64)> {
    let mut senders = Vec::new();
    let mut receiver = None;
    for ckpt in checkpoints {
        if ckpt.layout != layout {
            return Err(Error::Usage(format!(
                "checkpoint layout {:?} does not match requested {:?}",
                ckpt.layout, layout
            )));
        }
        match ckpt.role {
            AgentRole::Sender => senders.push((
                ckpt.index,
                SenderAgent64::from_parts(
                    ckpt.net.clone(),
                    ckpt.epsilon,
                    ckpt.optimizer.clone(),
                ),
            )),
            AgentRole::Receiver => {
                receiver = Some(ReceiverAgent64::from_parts(
                    ckpt.net.clone(),
                    ckpt.gamma,
                    ckpt.epsilon,
                    ckpt.optimizer.clone(),
                ));
            }
        }
    }
    let receiver =
        receiver.ok_or_else(|| Error::Usage("no receiver checkpoint found".into()))?;
    senders.sort_by_key(|(i, _)| *i);
    let channel = if senders.is_empty() {
        // Receiver trained against the visible goal iff its input is 50-wide.
        if receiver.net.input_dim() == 2 * CELLS {
            Channel::GoalVisible
        } else {
            return Err(Error::Usage(
                "no sender checkpoints for a communication-mode receiver".into(),
            ));
        }
    } else {
        Channel::Learned(senders.into_iter().map(|(_, s)| s).collect())
    };
    Ok((channel, receiver))
}
