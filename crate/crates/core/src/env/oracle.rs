//! Exact graph oracles over a layout: BFS distances, shortest-path counts,
//! minimal shortest-path covers, and the theoretical-maximum return.

use std::collections::VecDeque;

use num_traits::Float;

use super::layout::{Layout, CELLS};
use super::Position;

/// BFS distance from the start cell to every reachable free cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMap {
    dist: [Option<u32>; CELLS],
}

impl DistanceMap {
    pub fn get(&self, pos: Position) -> Option<u32> {
        self.dist[pos.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Position, u32)> + '_ {
        self.dist.iter().enumerate().filter_map(|(i, d)| {
            d.map(|d| (Position::from_index(i), d))
        })
    }
}

/// Breadth-first distances from `layout.start` under 4-connectivity.
pub fn shortest_distances(layout: &Layout) -> DistanceMap {
    let mut dist = [None; CELLS];
    dist[layout.start.index()] = Some(0);
    let mut queue = VecDeque::from([layout.start]);
    while let Some(pos) = queue.pop_front() {
        let d = dist[pos.index()].unwrap();
        for next in layout.neighbors(pos) {
            if dist[next.index()].is_none() {
                dist[next.index()] = Some(d + 1);
                queue.push_back(next);
            }
        }
    }
    DistanceMap { dist }
}

/// Number of distinct shortest paths from start to each cell, by counting
/// over the BFS level DAG.
fn per_cell_path_counts(layout: &Layout, dist: &DistanceMap) -> [u64; CELLS] {
    let mut cells: Vec<(Position, u32)> = dist.iter().collect();
    cells.sort_by_key(|&(_, d)| d);
    let mut count = [0u64; CELLS];
    count[layout.start.index()] = 1;
    for (pos, d) in cells {
        if pos == layout.start {
            continue;
        }
        count[pos.index()] = layout
            .neighbors(pos)
            .filter(|&n| dist.get(n) == Some(d - 1))
            .map(|n| count[n.index()])
            .sum();
    }
    count
}

/// Total number of distinct shortest paths from the start, summed over all
/// free non-start cells. The inverse of this value is the layout's
/// structure measure.
pub fn count_shortest_paths(layout: &Layout) -> u64 {
    let dist = shortest_distances(layout);
    let counts = per_cell_path_counts(layout, &dist);
    layout
        .free_cells()
        .filter(|&p| p != layout.start)
        .map(|p| counts[p.index()])
        .sum()
}

/// A minimal set of maximal shortest paths covering every free non-start
/// cell.
#[derive(Debug, Clone)]
pub struct PathCover {
    pub size: usize,
    pub paths: Vec<Vec<Position>>,
}

/// Exact minimum shortest-path cover, by enumerating all maximal shortest
/// paths from the start and solving the set cover by branch and bound.
/// Instances are tiny (at most 24 cells to cover).
pub fn min_shortest_path_cover(layout: &Layout) -> PathCover {
    let dist = shortest_distances(layout);
    let successors = |pos: Position| -> Vec<Position> {
        let d = dist.get(pos).unwrap();
        layout
            .neighbors(pos)
            .filter(|&n| dist.get(n) == Some(d + 1))
            .collect()
    };

    // Enumerate maximal paths in the BFS DAG as (cell bitmask, path).
    let mut paths: Vec<(u32, Vec<Position>)> = Vec::new();
    let mut stack = vec![layout.start];
    fn descend(
        pos: Position,
        stack: &mut Vec<Position>,
        start: Position,
        successors: &dyn Fn(Position) -> Vec<Position>,
        paths: &mut Vec<(u32, Vec<Position>)>,
    ) {
        let succ = successors(pos);
        if succ.is_empty() {
            let cells: Vec<Position> =
                stack.iter().copied().filter(|&p| p != start).collect();
            let mask = cells.iter().fold(0u32, |m, p| m | (1 << p.index()));
            paths.push((mask, cells));
            return;
        }
        for next in succ {
            stack.push(next);
            descend(next, stack, start, successors, paths);
            stack.pop();
        }
    }
    descend(layout.start, &mut stack, layout.start, &successors, &mut paths);
    paths.sort_by_key(|(mask, _)| *mask);
    paths.dedup_by_key(|(mask, _)| *mask);

    let universe: u32 = layout
        .free_cells()
        .filter(|&p| p != layout.start)
        .fold(0u32, |m, p| m | (1 << p.index()));

    let mut best: Option<Vec<usize>> = None;
    let mut chosen: Vec<usize> = Vec::new();
    branch(universe, 0, &paths, &mut chosen, &mut best);
    let best = best.expect("cover always exists: every cell lies on some maximal path");
    PathCover {
        size: best.len(),
        paths: best.iter().map(|&i| paths[i].1.clone()).collect(),
    }
}

fn branch(
    uncovered: u32,
    covered_so_far: u32,
    paths: &[(u32, Vec<Position>)],
    chosen: &mut Vec<usize>,
    best: &mut Option<Vec<usize>>,
) {
    if uncovered & !covered_so_far == 0 {
        if best.as_ref().is_none_or(|b| chosen.len() < b.len()) {
            *best = Some(chosen.clone());
        }
        return;
    }
    if let Some(b) = best {
        if chosen.len() + 1 >= b.len() {
            return;
        }
    }
    // Branch on the uncovered cell lying on the fewest paths.
    let remaining = uncovered & !covered_so_far;
    let mut pivot = None;
    let mut pivot_count = usize::MAX;
    for bit in 0..25 {
        if remaining & (1 << bit) != 0 {
            let n = paths.iter().filter(|(m, _)| m & (1 << bit) != 0).count();
            if n < pivot_count {
                pivot_count = n;
                pivot = Some(bit);
            }
        }
    }
    let pivot = 1u32 << pivot.unwrap();
    for (i, (mask, _)) in paths.iter().enumerate() {
        if mask & pivot != 0 {
            chosen.push(i);
            branch(uncovered, covered_so_far | mask, paths, chosen, best);
            chosen.pop();
        }
    }
}

/// Mean over all goal candidates of `gamma^(d(g)-1)`: the expected return of
/// a shortest-path-optimal policy when each step that does not reach the
/// goal terminates the episode with probability `1 - gamma`.
pub fn theoretical_max_return<F: Float>(layout: &Layout, gamma: F) -> F {
    let dist = shortest_distances(layout);
    let goals = layout.goal_candidates();
    let n = F::from(goals.len()).unwrap();
    let total = goals
        .iter()
        .map(|&g| {
            let d = dist.get(g).expect("goal reachable by layout invariant");
            gamma.powi(d as i32 - 1)
        })
        .fold(F::zero(), |a, b| a + b);
    total / n
}
