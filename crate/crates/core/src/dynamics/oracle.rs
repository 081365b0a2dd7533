//! Exhaustive and greedy adversaries.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use crate::game::{Color, ConsensusGame, Vertex};

use super::{can_switch, DynamicsError, EntryRule, Schedule, Trace, UncertaintyRule};

pub const MAX_ORACLE_VERTICES: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub initial_bad: u64,
    pub max_bad: u64,
    /// Shortest schedule reaching a maximizing coloring.
    pub witness: Schedule,
    pub states: usize,
}

/// Breadth-first search over all colorings reachable by permitted switches.
///
/// States are bitmasks with bit `v` set when `v` is red.
pub fn bfs_oracle_max_bad_edges(
    game: &ConsensusGame,
    rule: &UncertaintyRule,
    state_limit: usize,
) -> Result<OracleResult, DynamicsError> {
    let n = game.n();
    if n > MAX_ORACLE_VERTICES {
        return Err(DynamicsError::TooManyVertices {
            n,
            max: MAX_ORACLE_VERTICES,
        });
    }
    let nbr: Vec<u32> = (0..n as Vertex)
        .map(|v| game.neighbors(v).iter().fold(0u32, |m, &w| m | (1 << w)))
        .collect();
    let start: u32 = (0..n)
        .filter(|&v| game.colors()[v] == Color::Red)
        .fold(0, |m, v| m | (1 << v));

    // parent pointer and the vertex switched to get here
    let mut seen: HashMap<u32, (u32, Vertex)> = HashMap::new();
    seen.insert(start, (start, Vertex::MAX));
    let mut queue = VecDeque::from([(start, game.bad_edges())]);
    let (mut best_state, mut best) = (start, game.bad_edges());
    while let Some((state, bad)) = queue.pop_front() {
        if bad > best {
            best = bad;
            best_state = state;
        }
        for (v, &adj) in nbr.iter().enumerate() {
            let red = state >> v & 1 == 1;
            let opposite = if red { !state } else { state };
            let b = (adj & opposite).count_ones();
            let g = adj.count_ones() - b;
            if !rule.permits(b, g) {
                continue;
            }
            let next = state ^ (1 << v);
            if let Entry::Vacant(e) = seen.entry(next) {
                e.insert((state, v as Vertex));
                if seen.len() > state_limit {
                    return Err(DynamicsError::StateLimitExceeded { limit: state_limit });
                }
                queue.push_back((next, bad + g as u64 - b as u64));
            }
        }
    }
    let mut witness = Vec::new();
    let mut s = best_state;
    while s != start {
        let (parent, v) = seen[&s];
        witness.push(v);
        s = parent;
    }
    witness.reverse();
    Ok(OracleResult {
        initial_bad: game.bad_edges(),
        max_bad: best,
        witness: Schedule(witness),
        states: seen.len(),
    })
}

/// Repeatedly plays the permitted switch with the largest increase in bad
/// edges (lowest vertex id on ties) until no switch increases the cost or
/// `step_limit` moves were made.
pub fn greedy_adversary(
    game: &mut ConsensusGame,
    rule: &UncertaintyRule,
    step_limit: usize,
) -> Trace {
    let initial = game.clone();
    let mut moves = Vec::new();
    while moves.len() < step_limit {
        let mut pick: Option<(i64, Vertex)> = None;
        for v in 0..game.n() as Vertex {
            if !can_switch(game, rule, v) {
                continue;
            }
            let delta = game.good_degree(v) as i64 - game.player_cost(v) as i64;
            if delta > 0 && pick.is_none_or(|(d, _)| delta > d) {
                pick = Some((delta, v));
            }
        }
        let Some((_, v)) = pick else { break };
        let mut rec = game.flip(v);
        rec.step = moves.len();
        moves.push(rec);
    }
    Trace::new(&initial, moves, EntryRule::FirstSwitch)
}
