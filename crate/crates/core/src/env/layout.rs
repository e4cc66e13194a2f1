//! Gridworld layouts: the five canonical 5x5 maps and the text loader.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::oracle;
use super::Position;
use crate::{Error, Result};

pub const GRID: usize = 5;
pub const CELLS: usize = GRID * GRID;

/// The five canonical environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutName {
    EmptyRoom,
    Pong,
    TwoRoom,
    FourRoom,
    Flower,
}

impl LayoutName {
    pub const ALL: [LayoutName; 5] = [
        LayoutName::EmptyRoom,
        LayoutName::Pong,
        LayoutName::TwoRoom,
        LayoutName::FourRoom,
        LayoutName::Flower,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayoutName::EmptyRoom => "empty_room",
            LayoutName::Pong => "pong",
            LayoutName::TwoRoom => "two_room",
            LayoutName::FourRoom => "four_room",
            LayoutName::Flower => "flower",
        }
    }

    /// Registered total shortest-path count for the canonical map.
    pub fn registered_path_count(self) -> u64 {
        match self {
            LayoutName::EmptyRoom => 64,
            LayoutName::Pong => 14,
            LayoutName::TwoRoom => 32,
            LayoutName::FourRoom => 22,
            LayoutName::Flower => 44,
        }
    }

    /// Registered minimal shortest-path cover size.
    pub fn registered_cover_size(self) -> usize {
        match self {
            LayoutName::Pong => 4,
            _ => 8,
        }
    }

    fn map_text(self) -> &'static str {
        match self {
            LayoutName::EmptyRoom => include_str!("../../layouts/empty_room.txt"),
            LayoutName::Pong => include_str!("../../layouts/pong.txt"),
            LayoutName::TwoRoom => include_str!("../../layouts/two_room.txt"),
            LayoutName::FourRoom => include_str!("../../layouts/four_room.txt"),
            LayoutName::Flower => include_str!("../../layouts/flower.txt"),
        }
    }
}

impl FromStr for LayoutName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayoutName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown layout {s:?}; expected one of empty_room, pong, two_room, four_room, flower"
                ))
            })
    }
}

impl fmt::Display for LayoutName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A validated 5x5 occupancy grid with a start cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub name: String,
    pub width: usize,
    pub height: usize,
    walls: BTreeSet<Position>,
    pub start: Position,
}

/// Builds the canonical layout for `name`, validating all invariants
/// including the registered path-count and cover-size checks.
pub fn make_layout(name: LayoutName) -> Layout {
    Layout::from_text(name.as_str(), name.map_text())
        .expect("canonical layout data must validate")
}

impl Layout {
    /// Parses the plain-text map format: 5 lines x 5 chars, `#` wall,
    /// `.` free, `S` start. If `name` is one of the canonical names the
    /// registered oracle values are enforced as well.
    pub fn from_text(name: &str, text: &str) -> Result<Layout> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() != GRID {
            return Err(Error::Config(format!(
                "layout {name:?}: expected {GRID} lines, got {}",
                lines.len()
            )));
        }
        let mut walls = BTreeSet::new();
        let mut start = None;
        for (y, line) in lines.iter().enumerate() {
            let chars: Vec<char> = line.trim_end().chars().collect();
            if chars.len() != GRID {
                return Err(Error::Config(format!(
                    "layout {name:?}: line {y} has {} chars, expected {GRID}",
                    chars.len()
                )));
            }
            for (x, c) in chars.iter().enumerate() {
                let pos = Position::new(x as u8, y as u8)?;
                match c {
                    '#' => {
                        walls.insert(pos);
                    }
                    '.' => {}
                    'S' => {
                        if start.replace(pos).is_some() {
                            return Err(Error::Config(format!(
                                "layout {name:?}: multiple start cells"
                            )));
                        }
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "layout {name:?}: unexpected char {other:?} at ({x},{y})"
                        )));
                    }
                }
            }
        }
        let start = start
            .ok_or_else(|| Error::Config(format!("layout {name:?}: no start cell 'S'")))?;
        let layout = Layout {
            name: name.to_string(),
            width: GRID,
            height: GRID,
            walls,
            start,
        };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&self) -> Result<()> {
        if self.walls.contains(&self.start) {
            return Err(Error::Config(format!(
                "layout {:?}: start cell is a wall",
                self.name
            )));
        }
        if self.neighbors(self.start).next().is_none() {
            return Err(Error::Config(format!(
                "layout {:?}: start has no free neighbor",
                self.name
            )));
        }
        let dist = oracle::shortest_distances(self);
        for pos in self.free_cells() {
            if dist.get(pos).is_none() {
                return Err(Error::Config(format!(
                    "layout {:?}: cell ({},{}) unreachable from start",
                    self.name, pos.x, pos.y
                )));
            }
        }
        if let Ok(canonical) = LayoutName::from_str(&self.name) {
            if self.start != (Position { x: 2, y: 2 }) {
                return Err(Error::Config(format!(
                    "layout {:?}: canonical start must be (2,2)",
                    self.name
                )));
            }
            let count = oracle::count_shortest_paths(self);
            if count != canonical.registered_path_count() {
                return Err(Error::Config(format!(
                    "layout {:?}: shortest-path count {count} does not match registered {}",
                    self.name,
                    canonical.registered_path_count()
                )));
            }
        }
        Ok(())
    }

    pub fn is_wall(&self, pos: Position) -> bool {
        self.walls.contains(&pos)
    }

    pub fn in_bounds(&self, x: i16, y: i16) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// All non-wall cells in row-major order.
    pub fn free_cells(&self) -> impl Iterator<Item = Position> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| {
                let pos = Position {
                    x: x as u8,
                    y: y as u8,
                };
                (!self.is_wall(pos)).then_some(pos)
            })
        })
    }

    /// Candidate goal cells: free cells excluding the start.
    pub fn goal_candidates(&self) -> Vec<Position> {
        self.free_cells().filter(|&p| p != self.start).collect()
    }

    /// 4-connected free neighbors.
    pub fn neighbors(&self, pos: Position) -> impl Iterator<Item = Position> + '_ {
        const DELTAS: [(i16, i16); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
        DELTAS.into_iter().filter_map(move |(dx, dy)| {
            let (nx, ny) = (pos.x as i16 + dx, pos.y as i16 + dy);
            if !self.in_bounds(nx, ny) {
                return None;
            }
            let n = Position {
                x: nx as u8,
                y: ny as u8,
            };
            (!self.is_wall(n)).then_some(n)
        })
    }

    /// Renders the layout in the same text format the loader accepts.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity((GRID + 1) * GRID);
        for y in 0..self.height {
            for x in 0..self.width {
                let pos = Position {
                    x: x as u8,
                    y: y as u8,
                };
                out.push(if self.is_wall(pos) {
                    '#'
                } else if pos == self.start {
                    'S'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}
