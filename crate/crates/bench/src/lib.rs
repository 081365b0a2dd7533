//! Fixtures shared by the benchmarks.

use pou_core::constructions::build_full;
use pou_core::{ConsensusGame, ConstructionPlan, Eps, Schedule, UncertaintyRule};

pub fn eps(p: u64, q: u64) -> Eps {
    Eps::new(p, q).expect("positive epsilon")
}

/// Lower-bound instance for `n` vertices at `eps = 1/2`, with the full
/// schedule.
pub fn construction(n: usize) -> (ConsensusGame, ConstructionPlan, Schedule) {
    let (g, plan) = build_full(n, eps(1, 2)).expect("feasible size");
    let sched = plan.phase1.concat(&plan.phase2);
    (g, plan, sched)
}

pub fn rule() -> UncertaintyRule {
    UncertaintyRule::two_sided(eps(1, 2))
}

/// Dense pseudo-random graph on `n` vertices, deterministic in `seed`.
pub fn dense_game(n: usize, seed: u64) -> ConsensusGame {
    let mut state = seed;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        state >> 33
    };
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            if next() % 2 == 0 {
                edges.push((u, v));
            }
        }
    }
    let colors = (0..n)
        .map(|_| {
            if next() % 2 == 0 {
                pou_core::Color::Red
            } else {
                pou_core::Color::White
            }
        })
        .collect();
    ConsensusGame::new(n, &edges, colors).expect("simple graph")
}
