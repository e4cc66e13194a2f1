//! Sender (contextual N-armed bandit) and receiver (Q-learning) agents:
//! epsilon-greedy action selection and the squared-loss gradients feeding
//! the shared RMSProp minibatch accumulators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{NavAction, ReceiverObservation, SenderContext, CELLS};
use crate::nn::{DenseNet, NetInput, RmsProp};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Greedy argmax with ties broken toward the lowest index.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Contextual bandit over `N` message actions, backed by a single linear
/// layer 25 -> N.
#[derive(Debug, Clone)]
pub struct SenderAgent<F: Scalar> {
    pub net: DenseNet<F>,
    pub vocab_size: usize,
    pub epsilon: f64,
    pub optimizer: RmsProp<F>,
}

impl<F: Scalar> SenderAgent<F> {
    pub fn new<R: Rng>(
        vocab_size: usize,
        epsilon: f64,
        learning_rate: f64,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::Config(format!(
                "vocabulary size must be at least 2, got {vocab_size}"
            )));
        }
        let net = DenseNet::init(&[CELLS, vocab_size], rng, F::from_f64(init_scale))?;
        let optimizer = RmsProp::with_defaults(&net, F::from_f64(learning_rate));
        Ok(SenderAgent {
            net,
            vocab_size,
            epsilon,
            optimizer,
        })
    }

    pub fn from_parts(net: DenseNet<F>, epsilon: f64, optimizer: RmsProp<F>) -> Self {
        let vocab_size = net.output_dim();
        SenderAgent {
            net,
            vocab_size,
            epsilon,
            optimizer,
        }
    }

    /// Epsilon-greedy message selection; `greedy` forces epsilon = 0.
    pub fn act<R: Rng>(&self, context: &SenderContext, rng: &mut R, greedy: bool) -> usize {
        if !greedy && rng.gen::<f64>() < self.epsilon {
            return rng.gen_range(0..self.vocab_size);
        }
        self.greedy(context)
    }

    /// Deterministic argmax message, ties to the lowest symbol.
    pub fn greedy(&self, context: &SenderContext) -> usize {
        argmax(&self.net.forward_hot(&[context.hot]))
    }

    /// End-of-episode bandit update: squared error between the selected
    /// message's value estimate and the episode return. Returns the loss.
    pub fn update(
        &mut self,
        context: &SenderContext,
        message: usize,
        episode_return: f64,
    ) -> Result<f64> {
        if message >= self.vocab_size {
            return Err(Error::Usage(format!(
                "message {message} out of vocabulary (N={})",
                self.vocab_size
            )));
        }
        let hot = [context.hot];
        let cache = self.net.forward_cached(NetInput::Hot {
            indices: &hot,
            len: CELLS,
        })?;
        let q = cache.output()[message].to_f64_lossy();
        let err = q - episode_return;
        let mut out_grad = vec![F::zero(); self.vocab_size];
        out_grad[message] = F::from_f64(2.0 * err);
        self.net
            .backward_accumulate(&cache, &out_grad, self.optimizer.accum_mut())?;
        self.optimizer.contribute(&mut self.net)?;
        Ok(err * err)
    }
}

/// Q-learning navigator with a one-hidden-layer rectifier network
/// `25 + M*N -> hidden -> 4`.
#[derive(Debug, Clone)]
pub struct ReceiverAgent<F: Scalar> {
    pub net: DenseNet<F>,
    pub gamma: f64,
    pub epsilon: f64,
    pub optimizer: RmsProp<F>,
}

/// One receiver step, as consumed by the TD update.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: ReceiverObservation,
    pub action: NavAction,
    pub reward: f64,
    pub next_obs: ReceiverObservation,
    /// True when the episode ended at this step, by reaching the goal or by
    /// random termination; either way the target does not bootstrap.
    pub terminal: bool,
}

impl<F: Scalar> ReceiverAgent<F> {
    pub fn new<R: Rng>(
        input_dim: usize,
        hidden_width: usize,
        gamma: f64,
        epsilon: f64,
        learning_rate: f64,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0,1), got {gamma}"
            )));
        }
        let dims: Vec<usize> = if hidden_width == 0 {
            vec![input_dim, 4]
        } else {
            vec![input_dim, hidden_width, 4]
        };
        let net = DenseNet::init(&dims, rng, F::from_f64(init_scale))?;
        let optimizer = RmsProp::with_defaults(&net, F::from_f64(learning_rate));
        Ok(ReceiverAgent {
            net,
            gamma,
            epsilon,
            optimizer,
        })
    }

    pub fn from_parts(
        net: DenseNet<F>,
        gamma: f64,
        epsilon: f64,
        optimizer: RmsProp<F>,
    ) -> Self {
        ReceiverAgent {
            net,
            gamma,
            epsilon,
            optimizer,
        }
    }

    pub fn q_values(&self, obs: &ReceiverObservation) -> Vec<F> {
        self.net.forward_hot(&obs.hot_indices())
    }

    /// Epsilon-greedy navigation action; `greedy` forces epsilon = 0.
    pub fn act<R: Rng>(
        &self,
        obs: &ReceiverObservation,
        rng: &mut R,
        greedy: bool,
    ) -> NavAction {
        if !greedy && rng.gen::<f64>() < self.epsilon {
            return NavAction::from_index(rng.gen_range(0..4));
        }
        self.greedy(obs)
    }

    /// Deterministic argmax action, ties to the lowest action index.
    pub fn greedy(&self, obs: &ReceiverObservation) -> NavAction {
        NavAction::from_index(argmax(&self.q_values(obs)))
    }

    /// Semi-gradient TD update. The bootstrap target is treated as a
    /// constant; terminal transitions (goal or random termination) use the
    /// bare reward as the target. Returns the loss.
    pub fn update(&mut self, tr: &Transition) -> Result<f64> {
        if tr.reward == 1.0 && !tr.terminal {
            return Err(Error::Usage(
                "reward 1 implies a terminal transition".into(),
            ));
        }
        let target = if tr.terminal {
            tr.reward
        } else {
            let next_q = self.q_values(&tr.next_obs);
            tr.reward + self.gamma * next_q[argmax(&next_q)].to_f64_lossy()
        };
        let hot = tr.obs.hot_indices();
        let cache = self.net.forward_cached(NetInput::Hot {
            indices: &hot,
            len: tr.obs.len(),
        })?;
        let q = cache.output()[tr.action.index()].to_f64_lossy();
        let err = q - target;
        let mut out_grad = vec![F::zero(); 4];
        out_grad[tr.action.index()] = F::from_f64(2.0 * err);
        self.net
            .backward_accumulate(&cache, &out_grad, self.optimizer.accum_mut())?;
        self.optimizer.contribute(&mut self.net)?;
        Ok(err * err)
    }
}

/// Agent checkpoint: versioned JSON embedding the network, optimizer state,
/// and setup metadata. Round-trips bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub role: AgentRole,
    pub layout: String,
    pub senders: usize,
    pub vocab_size: usize,
    pub epsilon: f64,
    pub gamma: f64,
    /// Sender index within the population; 0 for the receiver.
    pub index: usize,
    /// Description of the random stream that drove the producing run.
    pub rng: String,
    pub net: DenseNet<f64>,
    pub optimizer: RmsProp<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Sender,
    Receiver,
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        encode_receiver_observation, make_layout, reset_with_goal,
        step, LayoutName, MessageSeq, Position,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn context(hot: usize) -> SenderContext {
        SenderContext { hot }
    }

    fn obs(pos: usize, msg: usize, n: usize) -> ReceiverObservation {
        ReceiverObservation {
            position_hot: pos,
            message_hots: vec![msg],
            senders: 1,
            vocab_size: n,
        }
    }

    #[test]
    fn greedy_sender_is_argmax() {
        let mut r = rng(0);
        let mut sender: SenderAgent<f64> =
            SenderAgent::new(4, 0.0, 0.01, 0.05, &mut r).unwrap();
        // hand-set a clear winner for context 7
        for m in 0..4 {
            sender.net.layers[0].weights[m * CELLS + 7] = if m == 2 { 1.0 } else { 0.0 };
        }
        for _ in 0..20 {
            assert_eq!(sender.act(&context(7), &mut r, false), 2);
        }
    }

    #[test]
    fn zero_net_greedy_ties_to_message_zero() {
        let mut r = rng(1);
        let mut sender: SenderAgent<f64> =
            SenderAgent::new(5, 0.5, 0.01, 0.0, &mut r).unwrap();
        sender.epsilon = 0.0;
        assert_eq!(sender.act(&context(3), &mut r, false), 0);
        assert_eq!(sender.act(&context(3), &mut r, true), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut r = rng(2);
        let n = 5usize;
        let sender: SenderAgent<f64> = SenderAgent::new(n, 1.0, 0.01, 0.05, &mut r).unwrap();
        let draws = 100_000;
        let mut counts = vec![0u32; n];
        for _ in 0..draws {
            counts[sender.act(&context(0), &mut r, false)] += 1;
        }
        let p = 1.0 / n as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn receiver_greedy_and_tie_break() {
        let mut r = rng(3);
        let mut receiver: ReceiverAgent<f64> =
            ReceiverAgent::new(29, 0, 0.8, 0.0, 0.01, 0.0, &mut r).unwrap();
        // zero net: all Q equal, ties break Up < Down < Left < Right
        assert_eq!(receiver.act(&obs(12, 0, 4), &mut r, true), NavAction::Up);
        // hand-set Q-values via the bias of the single linear layer
        receiver.net.layers[0].bias = vec![0.1, 0.9, 0.2, 0.3];
        assert_eq!(receiver.act(&obs(12, 0, 4), &mut r, true), NavAction::Down);
    }

    #[test]
    fn receiver_full_exploration_uniform() {
        let mut r = rng(4);
        let receiver: ReceiverAgent<f64> =
            ReceiverAgent::new(29, 8, 0.8, 1.0, 0.01, 0.05, &mut r).unwrap();
        let draws = 40_000;
        let mut counts = [0u32; 4];
        for _ in 0..draws {
            counts[receiver.act(&obs(12, 1, 4), &mut r, false).index()] += 1;
        }
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * 0.25).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn argmax_invariant_under_constant_shift() {
        let mut r = rng(5);
        let receiver: ReceiverAgent<f64> =
            ReceiverAgent::new(29, 16, 0.8, 0.0, 0.01, 0.05, &mut r).unwrap();
        let o = obs(7, 2, 4);
        let q = receiver.q_values(&o);
        let shifted: Vec<f64> = q.iter().map(|v| v + 123.456).collect();
        assert_eq!(argmax(&q), argmax(&shifted));
    }

    #[test]
    fn sender_update_loss_values() {
        let mut r = rng(6);
        let mut sender: SenderAgent<f64> =
            SenderAgent::new(4, 0.1, 0.01, 0.0, &mut r).unwrap();
        // Q(c, 1) = 0.3 via bias
        sender.net.layers[0].bias[1] = 0.3;
        let loss = sender.update(&context(5), 1, 1.0).unwrap();
        assert!((loss - 0.49).abs() < 1e-12);
        // exact match -> zero loss and zero accumulated gradient
        let mut sender2: SenderAgent<f64> =
            SenderAgent::new(4, 0.1, 0.01, 0.0, &mut r).unwrap();
        sender2.net.layers[0].bias[2] = 1.0;
        let loss = sender2.update(&context(5), 2, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(sender2.optimizer.accum_mut().max_abs(), 0.0);
    }

    #[test]
    fn sender_gradient_support_is_selected_row_and_hot_column() {
        let mut r = rng(7);
        let mut sender: SenderAgent<f64> =
            SenderAgent::new(6, 0.1, 0.01, 0.05, &mut r).unwrap();
        sender.update(&context(9), 3, 0.0).unwrap();
        let accum = sender.optimizer.accum_mut();
        let (wg, bg) = &accum.layers[0];
        for m in 0..6 {
            for i in 0..CELLS {
                let g = wg[m * CELLS + i];
                if m == 3 && i == 9 {
                    assert_ne!(g, 0.0);
                } else {
                    assert_eq!(g, 0.0, "unexpected gradient at row {m} col {i}");
                }
            }
            if m == 3 {
                assert_ne!(bg[m], 0.0);
            } else {
                assert_eq!(bg[m], 0.0);
            }
        }
    }

    #[test]
    fn receiver_update_targets() {
        let mut r = rng(8);
        // terminal with reward 1, Q = 0.4 -> loss 0.36
        let mut receiver: ReceiverAgent<f64> =
            ReceiverAgent::new(29, 0, 0.8, 0.0, 0.01, 0.0, &mut r).unwrap();
        receiver.net.layers[0].bias[NavAction::Up.index()] = 0.4;
        let tr = Transition {
            obs: obs(12, 0, 4),
            action: NavAction::Up,
            reward: 1.0,
            next_obs: obs(13, 0, 4),
            terminal: true,
        };
        let loss = receiver.update(&tr).unwrap();
        assert!((loss - 0.36).abs() < 1e-12);

        // non-terminal bootstrap: target = 0 + 0.8 * 0.5 = Q -> zero loss
        let mut receiver: ReceiverAgent<f64> =
            ReceiverAgent::new(29, 0, 0.8, 0.0, 0.01, 0.0, &mut r).unwrap();
        receiver.net.layers[0].bias = vec![0.4, 0.5, 0.0, 0.0];
        // Q(next, Down) = 0.5 is the max; Q(obs, Up) = 0.4
        let tr = Transition {
            obs: obs(12, 0, 4),
            action: NavAction::Up,
            reward: 0.0,
            next_obs: obs(12, 0, 4),
            terminal: false,
        };
        let loss = receiver.update(&tr).unwrap();
        assert!(loss.abs() < 1e-12);

        // random-termination terminal: target is 0 regardless of next_obs
        let mut receiver: ReceiverAgent<f64> =
            ReceiverAgent::new(29, 0, 0.8, 0.0, 0.01, 0.0, &mut r).unwrap();
        receiver.net.layers[0].bias = vec![0.4, 99.0, 0.0, 0.0];
        let tr = Transition {
            obs: obs(12, 0, 4),
            action: NavAction::Up,
            reward: 0.0,
            next_obs: obs(24, 3, 4),
            terminal: true,
        };
        let loss = receiver.update(&tr).unwrap();
        assert!((loss - 0.16).abs() < 1e-12);
    }

    #[test]
    fn terminal_update_ignores_next_obs_contents() {
        let mut r = rng(9);
        let make = || -> ReceiverAgent<f64> {
            ReceiverAgent::new(29, 8, 0.8, 0.0, 0.01, 0.05, &mut rng(99)).unwrap()
        };
        let mut a = make();
        let mut b = make();
        let _ = &mut r;
        let tr = |next: ReceiverObservation| Transition {
            obs: obs(12, 0, 4),
            action: NavAction::Left,
            reward: 0.0,
            next_obs: next,
            terminal: true,
        };
        a.update(&tr(obs(0, 0, 4))).unwrap();
        b.update(&tr(obs(24, 3, 4))).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.optimizer, b.optimizer);
    }

    #[test]
    fn malformed_transition_is_usage_error() {
        let mut r = rng(10);
        let mut receiver: ReceiverAgent<f64> =
            ReceiverAgent::new(29, 8, 0.8, 0.0, 0.01, 0.05, &mut r).unwrap();
        let tr = Transition {
            obs: obs(12, 0, 4),
            action: NavAction::Up,
            reward: 1.0,
            next_obs: obs(13, 0, 4),
            terminal: false,
        };
        assert!(matches!(receiver.update(&tr), Err(Error::Usage(_))));
    }

    #[test]
    fn tabular_convergence_to_shortest_path() {
        // Fixed goal (4,2), fixed message, linear net over one-hot inputs:
        // the greedy policy must become a shortest path (2 steps from start).
        let layout = make_layout(LayoutName::EmptyRoom);
        let goal = Position { x: 4, y: 2 };
        let gamma = 0.8;
        let mut r = rng(11);
        let mut receiver: ReceiverAgent<f64> =
            ReceiverAgent::new(29, 0, gamma, 0.2, 0.05, 0.0, &mut r).unwrap();
        let messages = MessageSeq::new(vec![1], 4).unwrap();
        for _ in 0..6_000 {
            let mut state = reset_with_goal(&layout, goal).unwrap();
            state.set_messages(messages.clone()).unwrap();
            while !state.done {
                let o = encode_receiver_observation(state.position, &messages).unwrap();
                let action = receiver.act(&o, &mut r, false);
                let reward = step(&layout, &mut state, action, &mut r, 1.0 - gamma).unwrap();
                let next = encode_receiver_observation(state.position, &messages).unwrap();
                receiver
                    .update(&Transition {
                        obs: o,
                        action,
                        reward,
                        next_obs: next,
                        terminal: state.done,
                    })
                    .unwrap();
            }
        }
        // greedy rollout without termination
        let mut state = reset_with_goal(&layout, goal).unwrap();
        state.set_messages(messages.clone()).unwrap();
        let mut steps = 0;
        while !state.done && steps < 10 {
            let o = encode_receiver_observation(state.position, &messages).unwrap();
            let action = receiver.act(&o, &mut r, true);
            step(&layout, &mut state, action, &mut r, 0.0).unwrap();
            steps += 1;
        }
        assert!(state.goal_reached, "greedy policy failed to reach the goal");
        assert_eq!(steps, 2, "greedy policy is not a shortest path");
    }
}
