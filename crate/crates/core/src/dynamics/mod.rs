//! Uncertain best-response dynamics.
//!
//! A vertex with `b` bad and `g` good neighbors may switch when `g <= κ·b`,
//! where the perturbation factor κ depends on ε and on the [`RuleVariant`].
//! All comparisons are exact.

mod io;
mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{ConsensusGame, GameError, MoveRecord, Vertex};
use crate::rational::{Eps, Kappa};

pub use io::{
    read_schedule, read_trace_csv, write_schedule, write_trace_csv, TraceIoError, TRACE_HEADER,
};
pub use oracle::{bfs_oracle_max_bad_edges, greedy_adversary, OracleResult, MAX_ORACLE_VERTICES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleVariant {
    /// κ = 1 + ε
    OneSided,
    /// κ = (1 + ε)²
    TwoSided,
    /// κ = 1 + 2ε
    HalfDegree,
}

impl fmt::Display for RuleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleVariant::OneSided => "one-sided",
            RuleVariant::TwoSided => "two-sided",
            RuleVariant::HalfDegree => "half-degree",
        })
    }
}

impl FromStr for RuleVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-sided" => Ok(RuleVariant::OneSided),
            "two-sided" => Ok(RuleVariant::TwoSided),
            "half-degree" => Ok(RuleVariant::HalfDegree),
            other => Err(format!(
                "unknown rule {other:?} (one-sided, two-sided, half-degree)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UncertaintyRule {
    pub eps: Eps,
    pub variant: RuleVariant,
    kappa: Kappa,
}

impl UncertaintyRule {
    pub fn new(eps: Eps, variant: RuleVariant) -> Self {
        let (p, q) = (eps.num() as u128, eps.den() as u128);
        let kappa = match variant {
            RuleVariant::OneSided => Kappa::new(q + p, q),
            RuleVariant::TwoSided => Kappa::new((q + p) * (q + p), q * q),
            RuleVariant::HalfDegree => Kappa::new(q + 2 * p, q),
        };
        UncertaintyRule {
            eps,
            variant,
            kappa,
        }
    }

    pub fn two_sided(eps: Eps) -> Self {
        Self::new(eps, RuleVariant::TwoSided)
    }

    pub fn kappa(&self) -> Kappa {
        self.kappa
    }

    /// `κ - 1`, the uncertainty that actually governs the dynamics.
    pub fn effective_eps(&self) -> f64 {
        self.kappa.excess()
    }

    #[inline]
    pub fn permits(&self, b: u32, g: u32) -> bool {
        self.kappa.permits(b as u64, g as u64)
    }
}

impl fmt::Display for UncertaintyRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} eps={}", self.variant, self.eps)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("invalid move at step {step}: vertex {vertex} has b = {b}, g = {g}")]
    InvalidMove {
        step: usize,
        vertex: Vertex,
        b: u32,
        g: u32,
    },
    #[error("cached counters disagree with a direct scan at step {step}")]
    Bookkeeping { step: usize },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("oracle explored more than {limit} states")]
    StateLimitExceeded { limit: usize },
    #[error("oracle supports at most {max} vertices, instance has {n}")]
    TooManyVertices { n: usize, max: usize },
    #[error("initial social cost is zero")]
    ZeroInitialCost,
    #[error("trace contains no cost-increasing move")]
    NoIncrease,
    #[error("bad edge not incident to S_{k} before first response of vertex {vertex} ({outside} such edges)")]
    Containment {
        k: usize,
        vertex: Vertex,
        outside: u64,
    },
}

/// `g <= κ·b` for the current state of `v`. Ties are permitted.
pub fn can_switch(game: &ConsensusGame, rule: &UncertaintyRule, v: Vertex) -> bool {
    rule.permits(game.player_cost(v), game.good_degree(v))
}

/// A permitted switch that strictly increases the number of bad edges.
pub fn is_uncertain_best_response(game: &ConsensusGame, rule: &UncertaintyRule, v: Vertex) -> bool {
    let (b, g) = (game.player_cost(v), game.good_degree(v));
    g > b && rule.permits(b, g)
}

/// Ordered list of vertices to switch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<Vertex>);

impl Schedule {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vertex> {
        self.0.iter()
    }

    pub fn concat(&self, other: &Schedule) -> Schedule {
        Schedule(self.0.iter().chain(other.0.iter()).copied().collect())
    }
}

impl From<Vec<Vertex>> for Schedule {
    fn from(v: Vec<Vertex>) -> Self {
        Schedule(v)
    }
}

/// When a vertex outside `S_0` joins the ordered set `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntryRule {
    /// At its first switch of any kind. Keeps every bad edge incident to
    /// `S_k`, because nothing outside `S_k` ever changes color.
    #[default]
    FirstSwitch,
    /// Only at its first strictly cost-increasing switch.
    FirstIncrease,
}

/// `S_0`, the ordered first responders `V`, and the remaining vertices `L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub s0: Vec<Vertex>,
    pub responders: Vec<Vertex>,
    /// Step index of each responder's entry into `V`.
    pub entry_steps: Vec<usize>,
    pub rest: Vec<Vertex>,
}

impl Partition {
    pub fn build(initial: &ConsensusGame, moves: &[MoveRecord], entry: EntryRule) -> Partition {
        let n = initial.n();
        let mut in_s = vec![false; n];
        let s0: Vec<Vertex> = (0..n as Vertex)
            .filter(|&v| initial.player_cost(v) > 0)
            .collect();
        for &v in &s0 {
            in_s[v as usize] = true;
        }
        let mut responders = Vec::new();
        let mut entry_steps = Vec::new();
        for (i, rec) in moves.iter().enumerate() {
            let v = rec.vertex as usize;
            let joins = match entry {
                EntryRule::FirstSwitch => true,
                EntryRule::FirstIncrease => rec.delta_bad_edges > 0,
            };
            if !in_s[v] && joins {
                in_s[v] = true;
                responders.push(rec.vertex);
                entry_steps.push(i);
            }
        }
        let rest = (0..n as Vertex).filter(|&v| !in_s[v as usize]).collect();
        Partition {
            s0,
            responders,
            entry_steps,
            rest,
        }
    }

    pub fn m(&self) -> usize {
        self.responders.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub moves: Vec<MoveRecord>,
    pub initial_bad: u64,
    pub final_bad: u64,
    pub partition: Partition,
}

impl Trace {
    pub fn new(initial: &ConsensusGame, moves: Vec<MoveRecord>, entry: EntryRule) -> Trace {
        let partition = Partition::build(initial, &moves, entry);
        let final_bad = moves
            .last()
            .map_or(initial.bad_edges(), |m| m.bad_edges_after);
        Trace {
            initial_bad: initial.bad_edges(),
            final_bad,
            moves,
            partition,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule(self.moves.iter().map(|m| m.vertex).collect())
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }
}

/// Applies `schedule` to `game`, rejecting any switch the rule does not
/// permit. With `strict`, each move's `b`/`g` is also re-derived by a direct
/// neighbor scan and compared against the cached counters.
pub fn run_schedule(
    game: &mut ConsensusGame,
    rule: &UncertaintyRule,
    schedule: &Schedule,
    strict: bool,
) -> Result<Trace, DynamicsError> {
    let initial = game.clone();
    let mut moves = Vec::with_capacity(schedule.len());
    for (step, &v) in schedule.iter().enumerate() {
        game.check_vertex(v)?;
        let (b, g) = (game.player_cost(v), game.good_degree(v));
        if !rule.permits(b, g) {
            return Err(DynamicsError::InvalidMove {
                step,
                vertex: v,
                b,
                g,
            });
        }
        if strict {
            let c = game.color(v);
            let scanned = game
                .neighbors(v)
                .iter()
                .filter(|&&w| game.color(w) != c)
                .count() as u32;
            if scanned != b || (g > b && !is_uncertain_best_response(game, rule, v)) {
                return Err(DynamicsError::Bookkeeping { step });
            }
        }
        let mut rec = game.flip(v);
        rec.step = step;
        moves.push(rec);
    }
    if strict && game.recount() != (game.bad_edges(), game.bad_degrees().to_vec()) {
        return Err(DynamicsError::Bookkeeping {
            step: schedule.len(),
        });
    }
    Ok(Trace::new(&initial, moves, EntryRule::FirstSwitch))
}

/// Ratio of final to initial social cost.
pub fn price_of_uncertainty(trace: &Trace) -> Result<f64, DynamicsError> {
    if trace.initial_bad == 0 {
        return Err(DynamicsError::ZeroInitialCost);
    }
    Ok(trace.final_bad as f64 / trace.initial_bad as f64)
}

/// The first cost-increasing move of a trace and the bad-edge floor it implies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FirstIncrease {
    pub step: usize,
    pub b: u32,
    pub g: u32,
    /// `ceil((g - b) / (κ - 1))`
    pub lower_bound: u64,
    pub initial_bad: u64,
    pub holds: bool,
}

pub fn first_increase(
    trace: &Trace,
    rule: &UncertaintyRule,
) -> Result<FirstIncrease, DynamicsError> {
    let rec = trace
        .moves
        .iter()
        .find(|m| m.delta_bad_edges > 0)
        .ok_or(DynamicsError::NoIncrease)?;
    let k = rule.kappa();
    let gap = (rec.g - rec.b) as u128;
    let lower_bound = (gap * k.den).div_ceil(k.num - k.den) as u64;
    let holds = rec.b as u64 >= lower_bound && trace.initial_bad >= lower_bound;
    Ok(FirstIncrease {
        step: rec.step,
        b: rec.b,
        g: rec.g,
        lower_bound,
        initial_bad: trace.initial_bad,
        holds,
    })
}

/// Whether the first increasing move had `b >= (g-b)/(κ-1)` and the initial
/// bad-edge count already met that floor.
pub fn first_increase_threshold_check(
    trace: &Trace,
    rule: &UncertaintyRule,
) -> Result<bool, DynamicsError> {
    first_increase(trace, rule).map(|f| f.holds)
}

/// Replays `trace` from `initial` and checks that, right before each
/// responder's first switch, every bad edge has an endpoint in `S_k`.
///
/// The count of bad edges with both endpoints outside `S` is maintained
/// incrementally in `O(deg)` per move. Returns that count at every entry
/// event (all zeros on success).
pub fn check_containment(
    initial: &ConsensusGame,
    trace: &Trace,
) -> Result<Vec<u64>, DynamicsError> {
    let mut game = initial.clone();
    let n = game.n();
    let mut in_s = vec![false; n];
    for &v in &trace.partition.s0 {
        in_s[v as usize] = true;
    }
    let mut outside: u64 = game
        .edges()
        .filter(|&(u, v)| !in_s[u as usize] && !in_s[v as usize] && game.color(u) != game.color(v))
        .count() as u64;
    let mut entries = trace
        .partition
        .entry_steps
        .iter()
        .zip(&trace.partition.responders)
        .peekable();
    let mut observed = Vec::with_capacity(trace.partition.m());
    for (step, rec) in trace.moves.iter().enumerate() {
        let v = rec.vertex;
        if let Some(&(&at, &who)) = entries.peek() {
            if at == step {
                debug_assert_eq!(who, v);
                let k = observed.len();
                if outside != 0 {
                    return Err(DynamicsError::Containment {
                        k,
                        vertex: v,
                        outside,
                    });
                }
                observed.push(outside);
                let c = game.color(v);
                let leaving = game
                    .neighbors(v)
                    .iter()
                    .filter(|&&w| !in_s[w as usize] && game.color(w) != c)
                    .count() as u64;
                outside -= leaving;
                in_s[v as usize] = true;
                entries.next();
            }
        }
        if !in_s[v as usize] {
            // a vertex outside S switches: its edges to the outside toggle
            let c = game.color(v);
            for &w in game.neighbors(v) {
                if !in_s[w as usize] {
                    if game.color(w) != c {
                        outside -= 1;
                    } else {
                        outside += 1;
                    }
                }
            }
        }
        game.flip(v);
    }
    Ok(observed)
}
