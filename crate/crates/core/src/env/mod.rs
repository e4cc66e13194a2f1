//! Gridworld environment: layouts, episode dynamics with random
//! termination, observation encodings, and exact graph oracles.

mod layout;
mod oracle;

pub use layout::{make_layout, Layout, LayoutName, CELLS, GRID};
pub use oracle::{
    count_shortest_paths, min_shortest_path_cover, shortest_distances,
    theoretical_max_return, DistanceMap, PathCover,
};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::{Error, Result};

/// A cell in the 5x5 grid. `x` is the column, `y` the row; "up" decreases
/// `y`. Row-major flattening index is `y * 5 + x`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Position {
    pub x: u8,
    pub y: u8,
}

impl Position {
    pub fn new(x: u8, y: u8) -> Result<Position> {
        if (x as usize) < GRID && (y as usize) < GRID {
            Ok(Position { x, y })
        } else {
            Err(Error::Usage(format!("position ({x},{y}) out of bounds")))
        }
    }

    pub fn index(self) -> usize {
        self.y as usize * GRID + self.x as usize
    }

    pub fn from_index(i: usize) -> Position {
        debug_assert!(i < CELLS);
        Position {
            x: (i % GRID) as u8,
            y: (i / GRID) as u8,
        }
    }
}

/// The four navigation actions, in tie-break order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum NavAction {
    Up,
    Down,
    Left,
    Right,
}

impl NavAction {
    pub const ALL: [NavAction; 4] = [
        NavAction::Up,
        NavAction::Down,
        NavAction::Left,
        NavAction::Right,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> NavAction {
        NavAction::ALL[i]
    }

    pub fn delta(self) -> (i16, i16) {
        match self {
            NavAction::Up => (0, -1),
            NavAction::Down => (0, 1),
            NavAction::Left => (-1, 0),
            NavAction::Right => (1, 0),
        }
    }

    pub fn glyph(self) -> char {
        match self {
            NavAction::Up => '^',
            NavAction::Down => 'v',
            NavAction::Left => '<',
            NavAction::Right => '>',
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NavAction::Up => "up",
            NavAction::Down => "down",
            NavAction::Left => "left",
            NavAction::Right => "right",
        }
    }
}

/// The ordered symbols emitted by the M senders at t=0; constant for the
/// rest of the episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSeq {
    pub symbols: Vec<usize>,
    pub vocab_size: usize,
}

impl MessageSeq {
    pub fn new(symbols: Vec<usize>, vocab_size: usize) -> Result<MessageSeq> {
        if symbols.is_empty() || symbols.len() > 5 {
            return Err(Error::Usage(format!(
                "message sequence length {} outside 1..=5",
                symbols.len()
            )));
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s >= vocab_size) {
            return Err(Error::Usage(format!(
                "symbol {bad} out of vocabulary (N={vocab_size})"
            )));
        }
        Ok(MessageSeq {
            symbols,
            vocab_size,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// One-hot goal context seen by a sender: length-25 vector with the hot
/// index at the goal's row-major cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SenderContext {
    pub hot: usize,
}

impl SenderContext {
    pub fn len(&self) -> usize {
        CELLS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec<F: Scalar>(&self) -> Vec<F> {
        let mut v = vec![F::zero(); CELLS];
        v[self.hot] = F::one();
        v
    }
}

/// Multi-hot receiver observation: one-hot position (25) followed by M
/// one-hot message blocks (N each).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverObservation {
    pub position_hot: usize,
    pub message_hots: Vec<usize>,
    pub senders: usize,
    pub vocab_size: usize,
}

impl ReceiverObservation {
    pub fn len(&self) -> usize {
        CELLS + self.senders * self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Indices of the M+1 hot entries in the flattened observation.
    pub fn hot_indices(&self) -> Vec<usize> {
        let mut hot = Vec::with_capacity(1 + self.senders);
        hot.push(self.position_hot);
        for (i, &sym) in self.message_hots.iter().enumerate() {
            hot.push(CELLS + i * self.vocab_size + sym);
        }
        hot
    }

    pub fn to_vec<F: Scalar>(&self) -> Vec<F> {
        let mut v = vec![F::zero(); self.len()];
        for i in self.hot_indices() {
            v[i] = F::one();
        }
        v
    }
}

/// Encodes a goal cell as the sender's one-hot context.
pub fn encode_sender_context(layout: &Layout, goal: Position) -> Result<SenderContext> {
    if layout.is_wall(goal) {
        return Err(Error::Usage(format!(
            "goal ({},{}) is a wall cell",
            goal.x, goal.y
        )));
    }
    Ok(SenderContext { hot: goal.index() })
}

/// Concatenates the position one-hot with the message one-hot blocks.
pub fn encode_receiver_observation(
    position: Position,
    messages: &MessageSeq,
) -> Result<ReceiverObservation> {
    if messages.is_empty() {
        return Err(Error::Usage("messages not set".into()));
    }
    Ok(ReceiverObservation {
        position_hot: position.index(),
        message_hots: messages.symbols.clone(),
        senders: messages.len(),
        vocab_size: messages.vocab_size,
    })
}

/// Mutable per-episode state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeState {
    pub position: Position,
    pub goal: Position,
    pub messages: Option<MessageSeq>,
    pub t: u32,
    pub done: bool,
    pub goal_reached: bool,
}

impl EpisodeState {
    /// Stores the senders' messages; allowed exactly once, at t=0.
    pub fn set_messages(&mut self, messages: MessageSeq) -> Result<()> {
        if self.t != 0 || self.messages.is_some() {
            return Err(Error::Usage("messages may be set only once, at t=0".into()));
        }
        self.messages = Some(messages);
        Ok(())
    }
}

/// Starts an episode: receiver at the start cell, goal uniform over free
/// cells excluding the start.
pub fn reset<R: Rng>(layout: &Layout, rng: &mut R) -> EpisodeState {
    let goal = *layout
        .goal_candidates()
        .choose(rng)
        .expect("layout invariants guarantee a goal candidate");
    episode_with_goal(layout, goal)
}

/// Starts an episode with a fixed goal (used by probes and tests).
pub fn reset_with_goal(layout: &Layout, goal: Position) -> Result<EpisodeState> {
    if layout.is_wall(goal) || goal == layout.start {
        return Err(Error::Usage(format!(
            "goal ({},{}) must be a free non-start cell",
            goal.x, goal.y
        )));
    }
    Ok(episode_with_goal(layout, goal))
}

fn episode_with_goal(layout: &Layout, goal: Position) -> EpisodeState {
    EpisodeState {
        position: layout.start,
        goal,
        messages: None,
        t: 0,
        done: false,
        goal_reached: false,
    }
}

/// Advances the episode by one receiver move and returns the reward.
///
/// Bumping into a wall or the boundary leaves the position unchanged but
/// still counts as a step. The goal check precedes the termination draw, so
/// a move that reaches the goal always pays out.
pub fn step<R: Rng>(
    layout: &Layout,
    state: &mut EpisodeState,
    action: NavAction,
    rng: &mut R,
    p_term: f64,
) -> Result<f64> {
    if state.done {
        return Err(Error::Usage("step called on a finished episode".into()));
    }
    let (dx, dy) = action.delta();
    let (nx, ny) = (state.position.x as i16 + dx, state.position.y as i16 + dy);
    if layout.in_bounds(nx, ny) {
        let next = Position {
            x: nx as u8,
            y: ny as u8,
        };
        if !layout.is_wall(next) {
            state.position = next;
        }
    }
    state.t += 1;
    if state.position == state.goal {
        state.done = true;
        state.goal_reached = true;
        return Ok(1.0);
    }
    if rng.gen::<f64>() < p_term {
        state.done = true;
    }
    Ok(0.0)
}
