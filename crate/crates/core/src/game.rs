//! Consensus game state.
//!
//! Vertices are dense ids `0..n`. The graph is stored in compressed sparse row
//! form and every flip updates the cached bad degrees and the global bad-edge
//! count in `O(deg(v))`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vertex = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Color {
    White = 0,
    Red = 1,
}

impl Color {
    #[inline]
    pub fn flipped(self) -> Color {
        match self {
            Color::White => Color::Red,
            Color::Red => Color::White,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Color::White => 'W',
            Color::Red => 'R',
        }
    }

    pub fn from_char(c: char) -> Option<Color> {
        match c {
            'W' | 'w' => Some(Color::White),
            'R' | 'r' => Some(Color::Red),
            _ => None,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("self-loop on vertex {0}")]
    SelfLoop(Vertex),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(Vertex, Vertex),
    #[error("vertex {vertex} out of range for n = {n}")]
    OutOfRange { vertex: Vertex, n: usize },
    #[error("color string has length {got}, expected {expected}")]
    ColorLength { got: usize, expected: usize },
    #[error("invalid color character {0:?}")]
    BadColor(char),
}

/// One executed switch.
///
/// `b` and `g` are the bad and good degree of the vertex immediately before
/// the switch, so `delta_bad_edges == g - b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveRecord {
    pub step: usize,
    pub vertex: Vertex,
    pub from: Color,
    pub to: Color,
    pub b: u32,
    pub g: u32,
    pub delta_bad_edges: i64,
    pub bad_edges_after: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusGame {
    offsets: Vec<usize>,
    neighbors: Vec<Vertex>,
    colors: Vec<Color>,
    bad_degree: Vec<u32>,
    bad_edges: u64,
    steps: usize,
}

impl ConsensusGame {
    /// Builds a game from an undirected simple edge list.
    pub fn new(
        n: usize,
        edges: &[(Vertex, Vertex)],
        colors: Vec<Color>,
    ) -> Result<Self, GameError> {
        if colors.len() != n {
            return Err(GameError::ColorLength {
                got: colors.len(),
                expected: n,
            });
        }
        let mut degree = vec![0usize; n];
        for &(u, v) in edges {
            for w in [u, v] {
                if w as usize >= n {
                    return Err(GameError::OutOfRange { vertex: w, n });
                }
            }
            if u == v {
                return Err(GameError::SelfLoop(u));
            }
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0; offsets[n]];
        for &(u, v) in edges {
            neighbors[fill[u as usize]] = v;
            fill[u as usize] += 1;
            neighbors[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        for v in 0..n {
            let row = &mut neighbors[offsets[v]..offsets[v + 1]];
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                let (a, b) = (v as Vertex, w[0]);
                return Err(GameError::DuplicateEdge(a.min(b), a.max(b)));
            }
        }
        let mut game = ConsensusGame {
            offsets,
            neighbors,
            colors,
            bad_degree: vec![0; n],
            bad_edges: 0,
            steps: 0,
        };
        let (bad_edges, bad_degree) = game.recount();
        game.bad_edges = bad_edges;
        game.bad_degree = bad_degree;
        Ok(game)
    }

    pub fn from_color_str(
        n: usize,
        edges: &[(Vertex, Vertex)],
        colors: &str,
    ) -> Result<Self, GameError> {
        let parsed = parse_colors(colors, n)?;
        Self::new(n, edges, parsed)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.colors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: Vertex) -> u32 {
        let v = v as usize;
        (self.offsets[v + 1] - self.offsets[v]) as u32
    }

    #[inline]
    pub fn color(&self, v: Vertex) -> Color {
        self.colors[v as usize]
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    /// Number of opposite-colored neighbors of `v`.
    #[inline]
    pub fn player_cost(&self, v: Vertex) -> u32 {
        self.bad_degree[v as usize]
    }

    #[inline]
    pub fn good_degree(&self, v: Vertex) -> u32 {
        self.degree(v) - self.bad_degree[v as usize]
    }

    pub fn bad_degrees(&self) -> &[u32] {
        &self.bad_degree
    }

    /// Social cost: the number of bicolored edges.
    #[inline]
    pub fn bad_edges(&self) -> u64 {
        self.bad_edges
    }

    /// Number of flips applied since construction.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn check_vertex(&self, v: Vertex) -> Result<(), GameError> {
        if (v as usize) < self.n() {
            Ok(())
        } else {
            Err(GameError::OutOfRange {
                vertex: v,
                n: self.n(),
            })
        }
    }

    /// Switches the color of `v`. Panics if `v` is out of range; use
    /// [`ConsensusGame::try_flip`] for untrusted input.
    pub fn flip(&mut self, v: Vertex) -> MoveRecord {
        let vi = v as usize;
        let from = self.colors[vi];
        let to = from.flipped();
        let b = self.bad_degree[vi];
        let g = self.degree(v) - b;
        self.colors[vi] = to;
        for i in self.offsets[vi]..self.offsets[vi + 1] {
            let w = self.neighbors[i] as usize;
            if self.colors[w] == to {
                // edge was bad, now good
                self.bad_degree[w] -= 1;
            } else {
                self.bad_degree[w] += 1;
            }
        }
        self.bad_degree[vi] = g;
        self.bad_edges = self.bad_edges + g as u64 - b as u64;
        let record = MoveRecord {
            step: self.steps,
            vertex: v,
            from,
            to,
            b,
            g,
            delta_bad_edges: g as i64 - b as i64,
            bad_edges_after: self.bad_edges,
        };
        self.steps += 1;
        record
    }

    pub fn try_flip(&mut self, v: Vertex) -> Result<MoveRecord, GameError> {
        self.check_vertex(v)?;
        Ok(self.flip(v))
    }

    /// Recomputes bad-edge count and bad degrees from scratch.
    pub fn recount(&self) -> (u64, Vec<u32>) {
        let n = self.n();
        let mut bad_degree = vec![0u32; n];
        let mut twice = 0u64;
        for (v, slot) in bad_degree.iter_mut().enumerate() {
            let c = self.colors[v];
            let bad = self
                .neighbors(v as Vertex)
                .iter()
                .filter(|&&w| self.colors[w as usize] != c)
                .count() as u32;
            *slot = bad;
            twice += bad as u64;
        }
        (twice / 2, bad_degree)
    }

    /// Iterates over every edge once as `(u, v)` with `u < v`, in
    /// lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        (0..self.n() as Vertex).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn color_string(&self) -> String {
        self.colors.iter().map(|c| c.as_char()).collect()
    }

    /// Resets colors (and all cached counters) without touching the graph.
    pub fn set_colors(&mut self, colors: Vec<Color>) -> Result<(), GameError> {
        if colors.len() != self.n() {
            return Err(GameError::ColorLength {
                got: colors.len(),
                expected: self.n(),
            });
        }
        self.colors = colors;
        let (bad_edges, bad_degree) = self.recount();
        self.bad_edges = bad_edges;
        self.bad_degree = bad_degree;
        self.steps = 0;
        Ok(())
    }

    pub fn to_instance(&self) -> Instance {
        Instance {
            n: self.n(),
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
            colors: self.color_string(),
        }
    }
}

pub fn parse_colors(s: &str, n: usize) -> Result<Vec<Color>, GameError> {
    let colors = s
        .chars()
        .map(|c| Color::from_char(c).ok_or(GameError::BadColor(c)))
        .collect::<Result<Vec<_>, _>>()?;
    if colors.len() != n {
        return Err(GameError::ColorLength {
            got: colors.len(),
            expected: n,
        });
    }
    Ok(colors)
}

/// Serialized form of a game: `{"n": .., "edges": [[u,v],..], "colors": "WR.."}`.
///
/// Edges are written with `u < v`, sorted lexicographically, so serializing
/// the same game twice yields identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    pub edges: Vec<[Vertex; 2]>,
    pub colors: String,
}

impl Instance {
    pub fn into_game(self) -> Result<ConsensusGame, GameError> {
        let edges: Vec<(Vertex, Vertex)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        ConsensusGame::from_color_str(self.n, &edges, &self.colors)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serialization cannot fail")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
