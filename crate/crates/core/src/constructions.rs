//! Adversarial instances and their schedules.
//!
//! The layered lower-bound instance is made of three parts, assembled in id
//! order:
//!
//! 1. *Initializer* layers. Odd layers cycle through sizes `k..=2k`, even
//!    layers have size `s` with `s` doubling once per cycle up to `k`. A
//!    layer of size `2k` is wired to the next layer so that every vertex
//!    there sees exactly `k` of its vertices; every other pair of
//!    consecutive layers is complete bipartite. The last two layers form
//!    `K_{k,k}`, and a *parallel* white layer of `k` vertices is attached to
//!    the last one.
//! 2. *Secondary* layers, starting at the initializer's last layer (the
//!    freely flippable layer `F`). Same pattern with even sizes capped at
//!    `2k`, ending in `K_{2k,2k}`.
//! 3. *Boosting* layers, growing from `2k+1` by a factor `1 + 1/(2k)` until
//!    a size of `floor(c·n/k)` is reached, consecutive layers complete.
//!
//! Layers before `F` together with the parallel layer are frozen: no
//! schedule ever touches them. `F` always keeps `k` frozen neighbors of each
//! color, so it can switch whenever needed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Schedule, UncertaintyRule};
use crate::game::{Color, ConsensusGame, Vertex};
use crate::rational::Eps;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstructionError {
    #[error("instance too small: n = {n}, at least {needed} vertices required")]
    InstanceTooSmall { n: usize, needed: usize },
    #[error("boosting layers need {needed} vertices but only {n} are available")]
    BudgetExceeded { n: usize, needed: usize },
    #[error("k = ceil(1/eps) = {0} is below the supported minimum of 2")]
    KTooSmall(u64),
    #[error("gadget size m = {m} too small for the rule, need m >= {min}")]
    MTooSmall { m: u32, min: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    Initializer,
    ParallelWhite,
    Secondary,
    Boost,
}

/// Wiring from a layer to the next layer of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wiring {
    Complete,
    /// Every vertex of the next layer is joined to `per_next` vertices of
    /// this one, spread as evenly as possible.
    Regular {
        per_next: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    pub size: u32,
    pub role: LayerRole,
    pub first_id: Vertex,
    /// `None` for the last layer of the chain and for the parallel layer.
    pub wiring: Option<Wiring>,
    /// Layer the parallel layer is completely joined to.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attached_to: Option<usize>,
}

impl LayerSpec {
    pub fn ids(&self) -> std::ops::Range<Vertex> {
        self.first_id..self.first_id + self.size
    }
}

#[derive(Debug, Default)]
struct Layout {
    layers: Vec<LayerSpec>,
    edges: Vec<(Vertex, Vertex)>,
    next_id: Vertex,
}

impl Layout {
    fn push(&mut self, size: u32, role: LayerRole) -> usize {
        let index = self.layers.len();
        self.layers.push(LayerSpec {
            index,
            size,
            role,
            first_id: self.next_id,
            wiring: None,
            attached_to: None,
        });
        self.next_id += size;
        index
    }

    fn complete(&mut self, a: usize, b: usize) {
        let (la, lb) = (self.layers[a].ids(), self.layers[b].ids());
        for u in la {
            self.edges.extend(lb.clone().map(|v| (u, v)));
        }
    }

    fn wire(&mut self, from: usize, to: usize, wiring: Wiring) {
        self.layers[from].wiring = Some(wiring);
        match wiring {
            Wiring::Complete => self.complete(from, to),
            Wiring::Regular { per_next } => {
                let src = self.layers[from].clone();
                let dst = self.layers[to].clone();
                for (j, v) in dst.ids().enumerate() {
                    for t in 0..per_next {
                        let offset = (j as u32 * per_next + t) % src.size;
                        self.edges.push((src.first_id + offset, v));
                    }
                }
            }
        }
    }

    /// Pushes `size` and joins it to `prev` completely.
    fn chain(&mut self, prev: usize, size: u32, role: LayerRole) -> usize {
        let next = self.push(size, role);
        self.wire(prev, next, Wiring::Complete);
        next
    }

    fn vertex_count(&self) -> usize {
        self.next_id as usize
    }
}

/// Layer list with its edge list.
pub type Layers = (Vec<LayerSpec>, Vec<(Vertex, Vertex)>);

fn check_k(k: u32) -> Result<(), ConstructionError> {
    if k < 2 {
        return Err(ConstructionError::KTooSmall(k as u64));
    }
    Ok(())
}

/// Appends one sweep of odd sizes `k+1..=2k` interleaved with even layers of
/// size `even`, starting after the odd layer `prev`. Returns the last odd
/// layer (size `2k`).
fn odd_sweep(layout: &mut Layout, mut prev: usize, k: u32, even: u32, role: LayerRole) -> usize {
    for odd in k + 1..=2 * k {
        let e = layout.chain(prev, even, role);
        prev = layout.chain(e, odd, role);
    }
    prev
}

/// Returns `(F, parallel)` layer indices.
fn append_initializer(layout: &mut Layout, k: u32) -> (usize, usize) {
    let role = LayerRole::Initializer;
    let mut prev = layout.push(k, role);
    let mut even = 1;
    let f = loop {
        let wide = odd_sweep(layout, prev, k, even, role);
        let next_even = (2 * even).min(k);
        let e = layout.push(next_even, role);
        layout.wire(wide, e, Wiring::Regular { per_next: k });
        prev = layout.chain(e, k, role);
        if next_even == k {
            break prev;
        }
        even = next_even;
    };
    let parallel = layout.push(k, LayerRole::ParallelWhite);
    layout.layers[parallel].attached_to = Some(f);
    layout.complete(parallel, f);
    (f, parallel)
}

/// Continues from the freely flippable layer `f`; returns the last layer
/// (one side of the closing `K_{2k,2k}`).
fn append_secondary(layout: &mut Layout, f: usize, k: u32) -> usize {
    let role = LayerRole::Secondary;
    let mut prev = f;
    let mut even = 1;
    loop {
        let wide = odd_sweep(layout, prev, k, even, role);
        if even == 2 * k {
            return layout.chain(wide, 2 * k, role);
        }
        let next_even = (2 * even).min(2 * k);
        let e = layout.push(next_even, role);
        layout.wire(wide, e, Wiring::Regular { per_next: k });
        prev = layout.chain(e, k, role);
        even = next_even;
    }
}

/// Initializer layers (with the parallel white layer last) and their edges,
/// ids starting at 0.
pub fn build_initializer(k: u32) -> Result<Layers, ConstructionError> {
    check_k(k)?;
    let mut layout = Layout::default();
    append_initializer(&mut layout, k);
    Ok((layout.layers, layout.edges))
}

/// Secondary layers on their own: layer 0 stands for the freely flippable
/// layer shared with the initializer.
pub fn build_secondary(k: u32) -> Result<Layers, ConstructionError> {
    check_k(k)?;
    let mut layout = Layout::default();
    let f = layout.push(k, LayerRole::Secondary);
    append_secondary(&mut layout, f, k);
    Ok((layout.layers, layout.edges))
}

/// Boosting scale `c = 2^-shift`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoostConstant {
    pub shift: u32,
}

impl BoostConstant {
    pub const GRID: std::ops::RangeInclusive<u32> = 1..=40;

    pub fn value(self) -> f64 {
        (0.5f64).powi(self.shift as i32)
    }

    /// `floor(c · n / k)`, the size the last boosting layer must reach.
    pub fn target(self, k: u32, n: usize) -> u64 {
        (n as u64 >> self.shift) / k as u64
    }
}

/// Boosting layer sizes: `2k+1` first, then rounded growth by `1 + 1/(2k)`
/// (never below the previous size plus one) up to the first size that is at
/// least `target`.
pub fn boost_sizes(k: u32, target: u64) -> Vec<u64> {
    let k = k as u64;
    let mut sizes = vec![2 * k + 1];
    while let Some(&last) = sizes.last() {
        if last >= target {
            break;
        }
        let grown = (last * (2 * k + 1) + k) / (2 * k);
        sizes.push(grown.max(last + 1));
    }
    sizes
}

/// Boosting layers on their own. Layer 0 stands for the secondary's last
/// layer (`2k` vertices), followed by the sizes of [`boost_sizes`] for
/// `c·n/k`. Fails when the boosting layers alone need more than `n`
/// vertices.
pub fn build_boosting(k: u32, n: usize, c: BoostConstant) -> Result<Layers, ConstructionError> {
    check_k(k)?;
    let mut layout = Layout::default();
    let base = layout.push(2 * k, LayerRole::Secondary);
    append_boosting(&mut layout, base, k, c.target(k, n));
    let needed = layout.vertex_count() - 2 * k as usize;
    if needed > n {
        return Err(ConstructionError::BudgetExceeded { n, needed });
    }
    Ok((layout.layers, layout.edges))
}

fn append_boosting(layout: &mut Layout, mut prev: usize, k: u32, target: u64) {
    for size in boost_sizes(k, target) {
        prev = layout.chain(prev, size as u32, LayerRole::Boost);
    }
}

fn base_vertex_count(k: u32) -> usize {
    let mut layout = Layout::default();
    let (f, _) = append_initializer(&mut layout, k);
    append_secondary(&mut layout, f, k);
    layout.vertex_count()
}

/// Largest `c` on the grid `1/2, 1/4, ...` for which the full construction
/// fits in `n` vertices.
pub fn choose_c(k: u32, n: usize) -> Result<BoostConstant, ConstructionError> {
    check_k(k)?;
    let base = base_vertex_count(k);
    if 2 * base > n {
        return Err(ConstructionError::InstanceTooSmall {
            n,
            needed: 2 * base,
        });
    }
    BoostConstant::GRID
        .map(|shift| BoostConstant { shift })
        .find(|&c| base + boost_sizes(k, c.target(k, n)).iter().sum::<u64>() as usize <= n)
        .ok_or(ConstructionError::InstanceTooSmall {
            n,
            needed: base + 2 * k as usize + 1,
        })
}

/// Layered description of the lower-bound instance and its two-phase
/// schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionPlan {
    pub k: u32,
    pub eps: Eps,
    pub n_budget: usize,
    pub total_vertices: usize,
    pub layers: Vec<LayerSpec>,
    pub frozen: Vec<Vertex>,
    pub c: f64,
    pub c_shift: u32,
    pub target_last_size: u64,
    #[serde(skip)]
    pub phase1: Schedule,
    #[serde(skip)]
    pub phase2: Schedule,
    pub predicted_initial_bad: u64,
    pub predicted_phase1_bad: u64,
    pub predicted_final_bad: u64,
}

impl ConstructionPlan {
    /// Layer indices in chain order, skipping the parallel layer.
    pub fn chain(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.role != LayerRole::ParallelWhite)
            .map(|l| l.index)
            .collect()
    }

    /// The layer adjacent to both frozen parts, if the plan has one.
    pub fn free_layer(&self) -> Option<&LayerSpec> {
        self.layers
            .iter()
            .find(|l| l.role == LayerRole::ParallelWhite)
            .and_then(|p| p.attached_to)
            .map(|i| &self.layers[i])
    }

    /// The boosting region: the layer right before the first boost layer
    /// (when there is one) and every boost layer.
    pub fn boost_region(&self) -> Vec<&LayerSpec> {
        let chain = self.chain();
        let Some(pos) = chain
            .iter()
            .position(|&i| self.layers[i].role == LayerRole::Boost)
        else {
            return Vec::new();
        };
        chain[pos.saturating_sub(1)..]
            .iter()
            .map(|&i| &self.layers[i])
            .filter(|l| l.role == LayerRole::Boost || l.wiring == Some(Wiring::Complete))
            .collect()
    }

    pub fn boost_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.role == LayerRole::Boost)
    }

    /// Bad edges between `F` and the frozen layers. Always `|F| · k`, since
    /// `F` has `k` frozen neighbors of each color whatever its own color.
    pub fn frozen_residual(&self) -> u64 {
        self.free_layer()
            .map_or(0, |f| f.size as u64 * self.k as u64)
    }

    /// Product of the last two layer sizes of the chain.
    pub fn last_pair_product(&self) -> u64 {
        let chain = self.chain();
        match chain.as_slice() {
            [.., a, b] => self.layers[*a].size as u64 * self.layers[*b].size as u64,
            _ => 0,
        }
    }

    pub fn plan_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialization cannot fail")
    }
}

/// Sum of products of adjacent layer sizes in the boosting region: the bad
/// edges between boosting layers once their colors alternate.
pub fn boost_alternating_bad_edges(plan: &ConstructionPlan) -> u64 {
    plan.boost_region()
        .windows(2)
        .map(|w| w[0].size as u64 * w[1].size as u64)
        .sum()
}

/// Exact bad-edge count at the end of phase 2: alternating boosting region
/// plus the frozen residual around `F`.
pub fn predicted_final_bad_edges(plan: &ConstructionPlan) -> u64 {
    boost_alternating_bad_edges(plan) + plan.frozen_residual()
}

/// Assembles the full lower-bound instance for budget `n` and uncertainty
/// `eps`, with `k = ceil(1/eps)`.
pub fn build_full(
    n: usize,
    eps: Eps,
) -> Result<(ConsensusGame, ConstructionPlan), ConstructionError> {
    let k64 = eps.ceil_inverse();
    if k64 < 2 {
        return Err(ConstructionError::KTooSmall(k64));
    }
    let k = u32::try_from(k64).map_err(|_| ConstructionError::InstanceTooSmall {
        n,
        needed: usize::MAX,
    })?;
    let c = choose_c(k, n)?;
    let target = c.target(k, n);

    let mut layout = Layout::default();
    let (f, _parallel) = append_initializer(&mut layout, k);
    let last_secondary = append_secondary(&mut layout, f, k);
    append_boosting(&mut layout, last_secondary, k, target);

    let total = layout.vertex_count();
    let mut colors = vec![Color::White; total];
    for v in layout.layers[0].ids() {
        colors[v as usize] = Color::Red;
    }
    let game = ConsensusGame::new(total, &layout.edges, colors)
        .expect("construction produces a simple graph");

    let frozen: Vec<Vertex> = layout
        .layers
        .iter()
        .filter(|l| l.index < f || l.role == LayerRole::ParallelWhite)
        .flat_map(|l| l.ids())
        .collect();

    let mut plan = ConstructionPlan {
        k,
        eps,
        n_budget: n,
        total_vertices: total,
        layers: layout.layers,
        frozen,
        c: c.value(),
        c_shift: c.shift,
        target_last_size: target,
        phase1: Schedule::default(),
        phase2: Schedule::default(),
        predicted_initial_bad: k as u64,
        predicted_phase1_bad: 0,
        predicted_final_bad: 0,
    };
    let (phase1, phase2) = phase_schedules(&plan, f);
    plan.phase1 = phase1;
    plan.phase2 = phase2;
    plan.predicted_phase1_bad = plan.last_pair_product() + plan.frozen_residual();
    plan.predicted_final_bad = predicted_final_bad_edges(&plan);
    Ok((game, plan))
}

/// Phase 1 turns every chain layer after the first red, up to the
/// second-to-last. Phase 2 then sends waves from `F`: wave `w` flips the
/// chain from `F` up to `w` layers before the previous wave's end, so the
/// alternating suffix grows by one layer per wave. The last wave ends at
/// the layer in front of the first boost layer.
fn phase_schedules(plan: &ConstructionPlan, f: usize) -> (Schedule, Schedule) {
    let chain = plan.chain();
    let ids = |pos: usize| plan.layers[chain[pos]].ids();
    let last = chain.len() - 1;
    let phase1 = (1..last).flat_map(ids).collect();

    let f_pos = chain
        .iter()
        .position(|&i| i == f)
        .expect("F is on the chain");
    let first_boost = chain
        .iter()
        .position(|&i| plan.layers[i].role == LayerRole::Boost)
        .expect("at least one boost layer");
    let mut phase2 = Vec::new();
    // after phase 1 the chain is uniform up to `last - 1`
    let mut end = last - 1;
    while end > first_boost - 1 {
        end -= 1;
        phase2.extend((f_pos..=end).flat_map(ids));
    }
    (Schedule(phase1), Schedule(phase2))
}

/// The doubling gadget: `V` joined to `m` white vertices (each also joined
/// to a white hub `W`) and `m+1` red vertices (each also joined to a red hub
/// `R`).
///
/// Ids: `V = 0`, white neighbors `1..=m`, red neighbors `m+1..=2m+1`,
/// `W = 2m+2`, `R = 2m+3`.
///
/// The schedule alternates one neighbor switch with one switch of `V`,
/// starting with a red neighbor, until every neighbor has switched once.
/// Each neighbor switch is a tie and each switch of `V` goes from `m` bad to
/// `m+1` bad edges, so every switch of `V` adds one bad edge.
pub fn build_double_gadget(
    m: u32,
    rule: &UncertaintyRule,
) -> Result<(ConsensusGame, Schedule), ConstructionError> {
    let min = min_gadget_m(rule);
    if m < min || m == 0 {
        return Err(ConstructionError::MTooSmall { m, min: min.max(1) });
    }
    let n = 2 * m as usize + 4;
    let (v, w_hub, r_hub) = (0, 2 * m + 2, 2 * m + 3);
    let white: Vec<Vertex> = (1..=m).collect();
    let red: Vec<Vertex> = (m + 1..=2 * m + 1).collect();
    let mut edges = Vec::with_capacity(4 * m as usize + 2);
    for &a in &white {
        edges.push((v, a));
        edges.push((a, w_hub));
    }
    for &b in &red {
        edges.push((v, b));
        edges.push((b, r_hub));
    }
    let mut colors = vec![Color::White; n];
    for &b in &red {
        colors[b as usize] = Color::Red;
    }
    colors[r_hub as usize] = Color::Red;
    let game = ConsensusGame::new(n, &edges, colors).expect("gadget is a simple graph");

    let mut schedule = Vec::with_capacity(4 * m as usize + 2);
    for i in 0..m as usize {
        schedule.extend([red[i], v, white[i], v]);
    }
    schedule.extend([red[m as usize], v]);
    Ok((game, Schedule(schedule)))
}

/// Smallest `m` with `m + 1 <= κ·m`, i.e. `ceil(1/(κ-1))`.
pub fn min_gadget_m(rule: &UncertaintyRule) -> u32 {
    let k = rule.kappa();
    k.den.div_ceil(k.num - k.den).min(u32::MAX as u128) as u32
}
