//! The integer-sequence abstraction of first responses.
//!
//! For a growing vertex set `S`, the sequence `E` lists, for every vertex
//! outside `S`, the number of its edges into `S`. When a vertex with `z`
//! such edges first responds it joins `S`: its entry `z` is removed and its
//! remaining neighbors outside `S` gain one each. Replaying that process
//! backwards gives *reversed moves*, whose effect on `(ΣE, ΣE²)` is bounded
//! by the *strong* reversed move. Those bounds chain into a bound on the
//! final number of bad edges, which [`verify_upper_bound_chain`] checks on
//! concrete traces.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{DynamicsError, Trace, UncertaintyRule};
use crate::game::{ConsensusGame, Vertex};
use crate::rational::Kappa;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MoveGameError {
    #[error("value {0} is not in the sequence")]
    ZNotPresent(u64),
    #[error("move needs {expected} targets, got {got}")]
    WrongTargetCount { expected: u64, got: usize },
    #[error("index {0} used twice")]
    DuplicateIndex(usize),
    #[error("element at index {0} is not positive")]
    NonpositiveElement(usize),
    #[error("a reversed move needs at least one element")]
    EmptyReversal,
    #[error("transition {k} (vertex {vertex}): {increments} increments exceed floor(kappa*z) = {allowed}")]
    IllegalTransition {
        k: usize,
        vertex: Vertex,
        increments: u64,
        allowed: u64,
    },
    #[error("inequality {which} violated at step {step}")]
    ViolatedInequality { step: usize, which: &'static str },
    #[error("upper-bound chain violated: {0}")]
    ChainViolation(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Nonzero entries in descending order, followed by infinitely many zeros.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EkSequence {
    values: Vec<u64>,
    #[serde(skip)]
    sum: u64,
    #[serde(skip)]
    sum_sq: u128,
}

impl EkSequence {
    pub fn new(mut values: Vec<u64>) -> Self {
        values.retain(|&v| v > 0);
        values.sort_unstable_by(|a, b| b.cmp(a));
        let sum = values.iter().sum();
        let sum_sq = values.iter().map(|&v| v as u128 * v as u128).sum();
        EkSequence {
            values,
            sum,
            sum_sq,
        }
    }

    /// Nonzero entries, descending.
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len_nonzero(&self) -> usize {
        self.values.len()
    }

    pub fn sum(&self) -> u64 {
        self.sum
    }

    pub fn sum_sq(&self) -> u128 {
        self.sum_sq
    }

    /// Entry `i`, zero past the stored part.
    pub fn get(&self, i: usize) -> u64 {
        self.values.get(i).copied().unwrap_or(0)
    }

    /// Removes one `z` and adds one to each target. Targets index the
    /// sequence after the removal; indices past its nonzero part are
    /// distinct zeros. Exactly `floor(kappa*z)` targets are required.
    pub fn apply_move(
        &self,
        z: u64,
        targets: &[usize],
        kappa: Kappa,
    ) -> Result<EkSequence, MoveGameError> {
        let mut rest = self.values.clone();
        if z > 0 {
            let pos = rest
                .iter()
                .position(|&v| v == z)
                .ok_or(MoveGameError::ZNotPresent(z))?;
            rest.remove(pos);
        }
        let expected = kappa.floor_mul(z);
        if targets.len() as u64 != expected {
            return Err(MoveGameError::WrongTargetCount {
                expected,
                got: targets.len(),
            });
        }
        check_distinct(targets)?;
        let mut zeros = 0;
        for &t in targets {
            match rest.get_mut(t) {
                Some(v) => *v += 1,
                None => zeros += 1,
            }
        }
        rest.extend(std::iter::repeat_n(1, zeros));
        Ok(EkSequence::new(rest))
    }

    /// Subtracts one from each indexed (positive) element and inserts
    /// `z = ceil(alpha/kappa)`. Returns the new sequence, `alpha` and `z`.
    pub fn apply_reversed_move(
        &self,
        indices: &[usize],
        kappa: Kappa,
    ) -> Result<(EkSequence, u64, u64), MoveGameError> {
        if indices.is_empty() {
            return Err(MoveGameError::EmptyReversal);
        }
        check_distinct(indices)?;
        let mut rest = self.values.clone();
        for &i in indices {
            match rest.get_mut(i) {
                Some(v) => *v -= 1,
                None => return Err(MoveGameError::NonpositiveElement(i)),
            }
        }
        let alpha = indices.len() as u64;
        let z = kappa.ceil_div(alpha);
        rest.push(z);
        Ok((EkSequence::new(rest), alpha, z))
    }
}

fn check_distinct(indices: &[usize]) -> Result<(), MoveGameError> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    match sorted.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(MoveGameError::DuplicateIndex(w[0])),
        None => Ok(()),
    }
}

/// Real-valued `(ΣE, ΣE²)` evolved by strong reversed moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongState {
    pub sum_e: f64,
    pub sum_e2: f64,
}

impl StrongState {
    pub fn new(sum_e: f64, sum_e2: f64) -> Self {
        assert!(sum_e >= 0.0, "sum of entries must be nonnegative");
        StrongState { sum_e, sum_e2 }
    }

    pub fn of(seq: &EkSequence) -> Self {
        StrongState::new(seq.sum() as f64, seq.sum_sq() as f64)
    }

    /// `(ΣE − εα, ΣE² − 2ΣE + (1−ε)²α²)`.
    pub fn apply_strong_reversed_move(self, alpha: f64, eps: f64) -> StrongState {
        StrongState {
            sum_e: self.sum_e - eps * alpha,
            sum_e2: self.sum_e2 - 2.0 * self.sum_e + (1.0 - eps).powi(2) * alpha * alpha,
        }
    }
}

/// Sequences of strong reversed moves, starting from the final state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversedTrace {
    pub alphas: Vec<f64>,
    pub states: Vec<StrongState>,
}

impl ReversedTrace {
    pub fn run(start: StrongState, alphas: &[f64], eps: f64) -> ReversedTrace {
        let mut states = Vec::with_capacity(alphas.len());
        let mut s = start;
        for &a in alphas {
            s = s.apply_strong_reversed_move(a, eps);
            states.push(s);
        }
        ReversedTrace {
            alphas: alphas.to_vec(),
            states,
        }
    }
}

/// `S_0` plus responders in order, and `T_k`, the number of edges inside
/// `S_k`, for `k = 0..=m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SetsPartition {
    pub s0: Vec<Vertex>,
    pub order: Vec<Vertex>,
    pub t: Vec<u64>,
}

impl SetsPartition {
    pub fn m(&self) -> usize {
        self.order.len()
    }

    pub fn s_k(&self, k: usize) -> Vec<Vertex> {
        let mut s: Vec<Vertex> = self.s0.iter().chain(&self.order[..k]).copied().collect();
        s.sort_unstable();
        s
    }
}

/// Sums of one forward transition `E_{k-1} -> E_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub k: usize,
    pub vertex: Vertex,
    /// Edges from the responder into `S_{k-1}`.
    pub z: u64,
    /// Neighbors outside `S_k`, incremented for real.
    pub increments: u64,
    /// Fresh entries of value one padding the move to `floor(kappa*z)`
    /// targets.
    pub padding: u64,
    /// `floor(kappa*z)`, the size of the matching reversed move.
    pub alpha: u64,
    pub sum_prev: u64,
    pub sum_sq_prev: u128,
    pub sum: u64,
    pub sum_sq: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EkTrace {
    pub partition: SetsPartition,
    pub initial: EkSequence,
    /// Final sequence including padding entries.
    pub final_abstract: EkSequence,
    /// Final sequence of real edge counts.
    pub final_real: EkSequence,
    pub transitions: Vec<Transition>,
}

impl EkTrace {
    pub fn m(&self) -> usize {
        self.transitions.len()
    }

    pub fn sum_alpha(&self) -> u64 {
        self.transitions.iter().map(|t| t.alpha).sum()
    }
}

/// Rebuilds `E_0..E_m` from the trace's `S_0` and responder order.
///
/// Each transition is checked to be a legal move: a responder with `z`
/// edges into `S_{k-1}` may have at most `floor(kappa*z)` neighbors outside
/// `S_k`. Missing targets are made up with fresh ones so that the abstract
/// sequence follows exact moves.
pub fn extract_ek_trace(
    initial: &ConsensusGame,
    trace: &Trace,
    kappa: Kappa,
) -> Result<EkTrace, MoveGameError> {
    let n = initial.n();
    let part = &trace.partition;
    let mut in_s = vec![false; n];
    for &v in &part.s0 {
        in_s[v as usize] = true;
    }
    // edges into S for every vertex
    let mut into_s = vec![0u64; n];
    let mut t = 0u64;
    for (u, v) in initial.edges() {
        match (in_s[u as usize], in_s[v as usize]) {
            (true, true) => t += 1,
            (true, false) => into_s[v as usize] += 1,
            (false, true) => into_s[u as usize] += 1,
            _ => {}
        }
    }
    let outside_counts = |in_s: &[bool], into_s: &[u64]| {
        EkSequence::new((0..n).filter(|&v| !in_s[v]).map(|v| into_s[v]).collect())
    };
    let e0 = outside_counts(&in_s, &into_s);
    let (mut sum, mut sum_sq) = (e0.sum(), e0.sum_sq());
    let mut padding_total = 0u64;
    let mut ts = vec![t];
    let mut transitions = Vec::with_capacity(part.responders.len());

    for (i, &v) in part.responders.iter().enumerate() {
        let k = i + 1;
        let z = into_s[v as usize];
        let allowed = kappa.floor_mul(z);
        let (sum_prev, sum_sq_prev) = (sum, sum_sq);
        in_s[v as usize] = true;
        sum -= z;
        sum_sq -= z as u128 * z as u128;
        let mut increments = 0;
        for &w in initial.neighbors(v) {
            if !in_s[w as usize] {
                let c = into_s[w as usize];
                sum += 1;
                sum_sq += 2 * c as u128 + 1;
                into_s[w as usize] = c + 1;
                increments += 1;
            }
        }
        if increments > allowed {
            return Err(MoveGameError::IllegalTransition {
                k,
                vertex: v,
                increments,
                allowed,
            });
        }
        let padding = allowed - increments;
        sum += padding;
        sum_sq += padding as u128;
        padding_total += padding;
        t += z;
        ts.push(t);
        transitions.push(Transition {
            k,
            vertex: v,
            z,
            increments,
            padding,
            alpha: allowed,
            sum_prev,
            sum_sq_prev,
            sum,
            sum_sq,
        });
    }

    let final_real = outside_counts(&in_s, &into_s);
    let mut padded = final_real.values().to_vec();
    padded.extend(std::iter::repeat_n(1, padding_total as usize));
    Ok(EkTrace {
        partition: SetsPartition {
            s0: part.s0.clone(),
            order: part.responders.clone(),
            t: ts,
        },
        initial: e0,
        final_abstract: EkSequence::new(padded),
        final_real,
        transitions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonovariantReport {
    pub steps: usize,
    /// Smallest `ΔΣE + ε̂α` over all steps (reversed direction).
    pub worst_sum_slack: f64,
    /// Smallest `ΔΣE² + 2ΣE_k − (1−ε̂)²α²` over all steps.
    pub worst_sq_slack: f64,
}

/// Checks, for every transition read backwards as a reversed move of size
/// `α`, that `ΣE_{k−1} − ΣE_k ≥ −ε̂α` and
/// `ΣE²_{k−1} − ΣE²_k ≥ −2ΣE_k + (1−ε̂)²α²`, with `ε̂ = κ − 1`, exactly.
pub fn check_monovariants(
    transitions: &[Transition],
    kappa: Kappa,
) -> Result<MonovariantReport, MoveGameError> {
    let (num, den) = (kappa.num as i128, kappa.den as i128);
    let mut report = MonovariantReport {
        steps: transitions.len(),
        worst_sum_slack: f64::INFINITY,
        worst_sq_slack: f64::INFINITY,
    };
    for (step, tr) in transitions.iter().enumerate() {
        let alpha = tr.alpha as i128;
        // scaled by den
        let sum_slack = (tr.sum_prev as i128 - tr.sum as i128) * den + (num - den) * alpha;
        // scaled by den²
        let sq_slack =
            (tr.sum_sq_prev as i128 - tr.sum_sq as i128 + 2 * tr.sum as i128) * den * den
                - (2 * den - num).pow(2) * alpha * alpha;
        if sum_slack < 0 {
            return Err(MoveGameError::ViolatedInequality { step, which: "sum" });
        }
        if sq_slack < 0 {
            return Err(MoveGameError::ViolatedInequality {
                step,
                which: "sum-squares",
            });
        }
        report.worst_sum_slack = report.worst_sum_slack.min(sum_slack as f64 / den as f64);
        report.worst_sq_slack = report
            .worst_sq_slack
            .min(sq_slack as f64 / (den * den) as f64);
    }
    Ok(report)
}

/// Upper bound on `Σα_j` over `m` reversed moves:
/// `[ε(2m−1) + √(ε²(2m−1)² + 4(1−ε)²/m · (ΣE₀² + 2mΣE₀))] / ((1−ε)²/m)`.
///
/// This is twice the larger root of
/// `(1−ε)²/m · x² − ε(2m−1) · x − (ΣE₀² + 2mΣE₀)`, so it is a valid but
/// loose bound.
///
/// The derivation needs `1/(1+ε) ≥ |1−ε|`, which holds for `ε ≤ √2`. At
/// `ε = 1` the quadratic degenerates and there is no bound; both that case
/// and `ε > √2` return infinity.
pub fn sum_alpha_bound(m: u64, eps: f64, sum_e0: f64, sum_e0_sq: f64) -> f64 {
    assert!(m >= 1 && sum_e0 >= 0.0 && sum_e0_sq >= 0.0 && eps > 0.0);
    if eps == 1.0 || eps > std::f64::consts::SQRT_2 {
        return f64::INFINITY;
    }
    let m = m as f64;
    let lead = (1.0 - eps).powi(2) / m;
    let lin = eps * (2.0 * m - 1.0);
    let c = sum_e0_sq + 2.0 * m * sum_e0;
    (lin + (lin * lin + 4.0 * lead * c).sqrt()) / lead
}

pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub m: usize,
    pub sum_alpha: u64,
    pub bound: f64,
    #[serde(rename = "T0")]
    pub t0: u64,
    #[serde(rename = "Tm")]
    pub tm: u64,
    #[serde(rename = "sumE0")]
    pub sum_e0: u64,
    #[serde(rename = "sumEm")]
    pub sum_em: u64,
    #[serde(rename = "sumEm_real")]
    pub sum_em_real: u64,
    pub s0: usize,
    pub final_bad: u64,
    pub eps_hat: f64,
    pub slack: f64,
    pub violations: Vec<String>,
    /// Checks that hold by construction, recorded for completeness.
    pub notes: Vec<String>,
}

impl ChainReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<ChainReport, MoveGameError> {
        match self.violations.first() {
            Some(v) => Err(MoveGameError::ChainViolation(v.clone())),
            None => Ok(self),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Extracts the sequence trace and checks the whole upper-bound chain:
///
/// * each transition is a legal move and satisfies both monovariants,
/// * `Σα ≤ sum_alpha_bound(m, ε̂, ΣE₀, ΣE₀²)`,
/// * `ε̂(T_m − T_0) − m ≤ ΣE_m − ΣE_0`,
/// * `|S_0| ≥ 1/ε̂` when some switch increases the bad-edge count,
/// * final bad edges `≤ T_m + ΣE_m`.
pub fn verify_upper_bound_chain(
    initial: &ConsensusGame,
    trace: &Trace,
    rule: &UncertaintyRule,
) -> Result<ChainReport, MoveGameError> {
    let kappa = rule.kappa();
    let ek = extract_ek_trace(initial, trace, kappa)?;
    let eps_hat = kappa.excess();
    let (num, den) = (kappa.num as i128, kappa.den as i128);
    let m = ek.m();
    let t0 = ek.partition.t[0];
    let tm = *ek.partition.t.last().expect("T_0 is always present");
    let mut violations = Vec::new();
    let mut notes = Vec::new();

    if let Err(e) = check_monovariants(&ek.transitions, kappa) {
        violations.push(e.to_string());
    }

    let sum_alpha = ek.sum_alpha();
    let (bound, slack) = if m == 0 {
        (0.0, 0.0)
    } else {
        let b = sum_alpha_bound(
            m as u64,
            eps_hat,
            ek.initial.sum() as f64,
            ek.initial.sum_sq() as f64,
        );
        if (sum_alpha as f64) > b * (1.0 + BOUND_TOLERANCE) {
            violations.push(format!("sum of alphas {sum_alpha} exceeds bound {b}"));
        }
        (b, b - sum_alpha as f64)
    };

    let sum_e0 = ek.initial.sum();
    let sum_em = ek.final_abstract.sum();
    // ε̂(T_m − T_0) − m ≤ ΣE_m − ΣE_0, times den
    let lhs = (num - den) * (tm - t0) as i128 - m as i128 * den;
    let rhs = (sum_em as i128 - sum_e0 as i128) * den;
    if lhs > rhs {
        violations.push(format!(
            "eps_hat*(Tm-T0) - m = {} exceeds sumEm - sumE0 = {}",
            lhs as f64 / den as f64,
            sum_em as i128 - sum_e0 as i128
        ));
    }

    let s0 = ek.partition.s0.len();
    if trace.moves.iter().any(|mv| mv.g > mv.b) && (s0 as i128) * (num - den) < den {
        violations.push(format!(
            "|S0| = {s0} is below 1/eps_hat = {}",
            1.0 / eps_hat
        ));
    }

    let sum_em_real = ek.final_real.sum();
    if trace.final_bad > tm + sum_em_real {
        violations.push(format!(
            "final bad edges {} exceed Tm + sumEm = {}",
            trace.final_bad,
            tm + sum_em_real
        ));
    }

    if m > 0 {
        let alphas: Vec<f64> = ek.transitions.iter().map(|t| t.alpha as f64).collect();
        let sq: f64 = alphas.iter().map(|a| a * a).sum();
        let cs = (sum_alpha as f64).powi(2) / m as f64;
        if sq < cs * (1.0 - BOUND_TOLERANCE) {
            violations.push(format!("Cauchy-Schwarz: sum alpha^2 = {sq} below {cs}"));
        }
    }
    let e0 = ek.initial.sum_sq();
    let e0_sum_sq = ek.initial.sum() as u128 * ek.initial.sum() as u128;
    if e0 > ek.initial.sum() as u128 {
        notes.push(format!(
            "sumE0^2 = {e0} exceeds sumE0 = {}; checked against (sumE0)^2 = {e0_sum_sq} instead",
            ek.initial.sum()
        ));
    }
    if e0 > e0_sum_sq {
        violations.push(format!("sumE0^2 = {e0} exceeds (sumE0)^2 = {e0_sum_sq}"));
    }
    if bound.is_infinite() {
        notes.push(format!(
            "no finite bound on sum of alphas for eps_hat = {eps_hat}"
        ));
    }

    Ok(ChainReport {
        m,
        sum_alpha,
        bound,
        t0,
        tm,
        sum_e0,
        sum_em,
        sum_em_real,
        s0,
        final_bad: trace.final_bad,
        eps_hat,
        slack,
        violations,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run_schedule, RuleVariant, Schedule};
    use crate::game::Color::*;
    use crate::rational::Eps;
    use proptest::prelude::*;

    fn k54() -> Kappa {
        Kappa::new(5, 4)
    }

    #[test]
    fn move_example() {
        let e = EkSequence::new(vec![4, 3]);
        let e2 = e.apply_move(4, &[0, 1, 2, 3, 4], k54()).unwrap();
        assert_eq!(e2.values(), &[4, 1, 1, 1, 1]);
        assert_eq!((e.sum(), e2.sum()), (7, 8));
        assert_eq!(e.apply_move(0, &[], k54()).unwrap(), e);
        assert_eq!(
            e.apply_move(5, &[], k54()),
            Err(MoveGameError::ZNotPresent(5))
        );
        assert_eq!(
            e.apply_move(3, &[0, 1], k54()),
            Err(MoveGameError::WrongTargetCount {
                expected: 3,
                got: 2
            })
        );
        assert_eq!(
            e.apply_move(3, &[0, 1, 1], k54()),
            Err(MoveGameError::DuplicateIndex(1))
        );
    }

    #[test]
    fn reversed_example() {
        let e = EkSequence::new(vec![4, 1, 1, 1, 1]);
        let (back, alpha, z) = e.apply_reversed_move(&[0, 1, 2, 3, 4], k54()).unwrap();
        assert_eq!((back.values(), alpha, z), (&[4, 3][..], 5, 4));
        let (one, _, z) = EkSequence::new(vec![1])
            .apply_reversed_move(&[0], k54())
            .unwrap();
        assert_eq!((one.values(), z), (&[1][..], 1));
        assert_eq!(
            e.apply_reversed_move(&[5], k54()),
            Err(MoveGameError::NonpositiveElement(5))
        );
        assert_eq!(
            e.apply_reversed_move(&[], k54()),
            Err(MoveGameError::EmptyReversal)
        );
    }

    #[test]
    fn strong_reversed_example() {
        let s = StrongState::new(8.0, 20.0).apply_strong_reversed_move(5.0, 0.25);
        assert_eq!((s.sum_e, s.sum_e2), (6.75, 18.0625));
        let s = StrongState::new(8.0, 20.0).apply_strong_reversed_move(0.0, 0.25);
        assert_eq!((s.sum_e, s.sum_e2), (8.0, 4.0));
    }

    #[test]
    fn bound_values() {
        let b = sum_alpha_bound(100, 0.25, 10.0, 30.0);
        assert!((b - 17770.0).abs() < 5.0, "{b}");
        let b = sum_alpha_bound(1, 0.25, 0.0, 0.0);
        assert!((b - 2.0 * 0.25 / 0.5625).abs() < 1e-12);
        assert!(sum_alpha_bound(3, 1.0, 1.0, 1.0).is_infinite());
        assert!(sum_alpha_bound(3, 1.5, 1.0, 1.0).is_infinite());
        assert!(sum_alpha_bound(3, 1.25, 1.0, 1.0).is_finite());
    }

    #[test]
    fn bound_monotone_on_grid() {
        for eps in [0.1, 0.25, 0.5, 0.9, 1.1, 1.25, 1.4] {
            let mut prev_m = 0.0;
            for m in 1..50 {
                let b = sum_alpha_bound(m, eps, 5.0, 9.0);
                assert!(b >= prev_m);
                prev_m = b;
                let mut prev = 0.0;
                for s in 0..20 {
                    let b1 = sum_alpha_bound(m, eps, s as f64, 10.0);
                    let b2 = sum_alpha_bound(m, eps, 3.0, s as f64 * 3.0);
                    assert!(b1 >= prev);
                    assert!(b2 >= sum_alpha_bound(m, eps, 3.0, 0.0));
                    prev = b1;
                }
            }
        }
    }

    /// S0 = {0..3 white, 4 red} with four bad edges; vertex 5 sees four of
    /// S0 and vertex 6 sees three.
    fn worked_example() -> ConsensusGame {
        let mut edges = vec![(0, 4), (1, 4), (2, 4), (3, 4)];
        edges.extend([(0, 5), (1, 5), (2, 5), (3, 5), (0, 6), (1, 6), (2, 6)]);
        ConsensusGame::new(
            7,
            &edges,
            vec![White, White, White, White, Red, White, White],
        )
        .unwrap()
    }

    #[test]
    fn worked_example_initial_sequence() {
        let g = worked_example();
        let trace = Trace::new(&g, vec![], Default::default());
        let ek = extract_ek_trace(&g, &trace, k54()).unwrap();
        assert_eq!(ek.initial.values(), &[4, 3]);
        assert_eq!(ek.initial.get(2), 0);
        assert_eq!(ek.partition.t, vec![4]);
        let rule = UncertaintyRule::new(Eps::new(1, 4).unwrap(), RuleVariant::OneSided);
        let report = verify_upper_bound_chain(&g, &trace, &rule).unwrap();
        assert!(report.ok());
        assert_eq!(report.m, 0);
    }

    #[test]
    fn gadget_chain_holds() {
        let rule = UncertaintyRule::two_sided(Eps::new(1, 4).unwrap());
        let (g, s) = crate::constructions::build_double_gadget(8, &rule).unwrap();
        let mut sim = g.clone();
        let trace = run_schedule(&mut sim, &rule, &s, true).unwrap();
        let ek = extract_ek_trace(&g, &trace, rule.kappa()).unwrap();
        // the red hub sees all m+1 red neighbors, each white neighbor sees V
        let mut expected = vec![9];
        expected.extend([1; 8]);
        assert_eq!(ek.initial.values(), &expected[..]);
        let report = verify_upper_bound_chain(&g, &trace, &rule).unwrap();
        assert!(report.ok(), "{:?}", report.violations);
        assert!(report.final_bad <= report.tm + report.sum_em_real);
    }

    #[test]
    fn construction_chain_holds() {
        let eps = Eps::new(1, 2).unwrap();
        let rule = UncertaintyRule::two_sided(eps);
        let (g, plan) = crate::constructions::build_full(2000, eps).unwrap();
        let mut sim = g.clone();
        let trace =
            run_schedule(&mut sim, &rule, &plan.phase1.concat(&plan.phase2), false).unwrap();
        let report = verify_upper_bound_chain(&g, &trace, &rule).unwrap();
        assert!(report.ok(), "{:?}", report.violations);
        assert!(report.slack > 0.0);
        let ek = extract_ek_trace(&g, &trace, rule.kappa()).unwrap();
        for t in &ek.transitions {
            assert_eq!(t.sum + t.z, t.sum_prev + rule.kappa().floor_mul(t.z));
        }
        let t = &ek.partition.t;
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empty_trace_is_trivial() {
        let g = ConsensusGame::new(2, &[(0, 1)], vec![White, Red]).unwrap();
        let rule = UncertaintyRule::two_sided(Eps::new(1, 2).unwrap());
        let trace = Trace::new(&g, vec![], Default::default());
        let r = verify_upper_bound_chain(&g, &trace, &rule).unwrap();
        assert!(r.ok());
        assert_eq!((r.m, r.sum_alpha), (0, 0));
    }

    #[test]
    fn illegal_transition_detected() {
        // S0 = {0, 5}; after 5 turns red, vertex 1 responds with one edge
        // into S0 and three outside, too many for κ < 3
        let edges = [(0, 5), (5, 1), (1, 2), (1, 3), (1, 4)];
        let g =
            ConsensusGame::new(6, &edges, vec![Red, White, White, White, White, White]).unwrap();
        let mut sim = g.clone();
        let lax = UncertaintyRule::new(Eps::new(3, 1).unwrap(), RuleVariant::OneSided);
        let trace = run_schedule(&mut sim, &lax, &Schedule(vec![5, 1]), true).unwrap();
        let tight = Kappa::new(5, 4);
        assert!(matches!(
            extract_ek_trace(&g, &trace, tight),
            Err(MoveGameError::IllegalTransition {
                k: 1,
                vertex: 1,
                ..
            })
        ));
    }

    #[test]
    fn extraction_matches_explicit_moves() {
        let rule = UncertaintyRule::two_sided(Eps::new(1, 4).unwrap());
        let (g, s) = crate::constructions::build_double_gadget(4, &rule).unwrap();
        let mut sim = g.clone();
        let trace = run_schedule(&mut sim, &rule, &s, true).unwrap();
        let ek = extract_ek_trace(&g, &trace, rule.kappa()).unwrap();
        // replay each transition as an explicit move on the materialized
        // sequence; targets are chosen by value, then padded with zeros
        let mut e = ek.initial.clone();
        let mut counts = vec![0u64; g.n()];
        let mut in_s = vec![false; g.n()];
        for &v in &ek.partition.s0 {
            in_s[v as usize] = true;
        }
        for (v, c) in counts.iter_mut().enumerate() {
            *c = g
                .neighbors(v as Vertex)
                .iter()
                .filter(|&&w| in_s[w as usize])
                .count() as u64;
        }
        for t in &ek.transitions {
            in_s[t.vertex as usize] = true;
            let rest_len = e.len_nonzero() - usize::from(t.z > 0);
            let mut after_removal = e.values().to_vec();
            if let Some(p) = after_removal.iter().position(|&x| x == t.z) {
                after_removal.remove(p);
            }
            let mut targets = Vec::new();
            let mut used = vec![false; rest_len];
            let mut zeros = rest_len;
            for &w in g.neighbors(t.vertex) {
                if in_s[w as usize] {
                    continue;
                }
                let c = counts[w as usize];
                if c == 0 {
                    targets.push(zeros);
                    zeros += 1;
                } else {
                    let p = (0..rest_len)
                        .find(|&i| !used[i] && after_removal[i] == c)
                        .unwrap();
                    used[p] = true;
                    targets.push(p);
                }
                counts[w as usize] += 1;
            }
            while targets.len() < t.alpha as usize {
                targets.push(zeros);
                zeros += 1;
            }
            e = e.apply_move(t.z, &targets, rule.kappa()).unwrap();
            assert_eq!((e.sum(), e.sum_sq()), (t.sum, t.sum_sq));
        }
        assert_eq!(e, ek.final_abstract);
    }

    fn kappa_strategy() -> impl Strategy<Value = Kappa> {
        (1u128..=8, 1u128..=8).prop_map(|(p, q)| {
            // ε = p/(4q) between 1/32 and 2, two-sided κ = (1+ε)²
            let (en, ed) = (p, 4 * q);
            Kappa::new((ed + en) * (ed + en), ed * ed)
        })
    }

    proptest! {
        #[test]
        fn move_then_reverse_is_identity(
            values in proptest::collection::vec(0u64..12, 0..10),
            pick in any::<proptest::sample::Index>(),
            seed in any::<u64>(),
            kappa in kappa_strategy(),
        ) {
            let e = EkSequence::new(values);
            let z = if e.len_nonzero() == 0 { 0 } else { e.values()[pick.index(e.len_nonzero())] };
            let need = kappa.floor_mul(z) as usize;
            let rest = e.len_nonzero() - usize::from(z > 0);
            let pool = rest + need;
            // deterministic shuffle of candidate indices
            let mut idx: Vec<usize> = (0..pool).collect();
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (s >> 33) as usize % (i + 1));
            }
            idx.truncate(need);
            let moved = e.apply_move(z, &idx, kappa).unwrap();
            if need == 0 {
                let mut after = e.values().to_vec();
                if let Some(p) = after.iter().position(|&v| v == z) {
                    after.remove(p);
                }
                prop_assert_eq!(moved, EkSequence::new(after));
            } else {
                // incremented elements: locate by matching values after sorting
                let mut after = e.values().to_vec();
                if z > 0 {
                    let p = after.iter().position(|&v| v == z).unwrap();
                    after.remove(p);
                }
                let mut bumped: Vec<u64> = idx.iter().map(|&i| after.get(i).copied().unwrap_or(0) + 1).collect();
                bumped.sort_unstable_by(|a, b| b.cmp(a));
                let mut taken = vec![false; moved.len_nonzero()];
                let mut rev = Vec::new();
                for b in bumped {
                    let p = (0..moved.len_nonzero()).find(|&i| !taken[i] && moved.values()[i] == b).unwrap();
                    taken[p] = true;
                    rev.push(p);
                }
                let (back, alpha, zz) = moved.apply_reversed_move(&rev, kappa).unwrap();
                prop_assert_eq!(alpha as usize, need);
                prop_assert_eq!(zz, z);
                prop_assert_eq!(back, e);
            }
        }

        #[test]
        fn reversed_moves_satisfy_monovariants(
            values in proptest::collection::vec(1u64..20, 1..12),
            mask in any::<u16>(),
            kappa in kappa_strategy(),
        ) {
            let e = EkSequence::new(values);
            let mut idx: Vec<usize> = (0..e.len_nonzero()).filter(|i| mask >> i & 1 == 1).collect();
            if idx.is_empty() { idx.push(0); }
            let (prev, alpha, _) = e.apply_reversed_move(&idx, kappa).unwrap();
            let tr = Transition {
                k: 1, vertex: 0, z: 0, increments: 0, padding: 0, alpha,
                sum_prev: prev.sum(), sum_sq_prev: prev.sum_sq(), sum: e.sum(), sum_sq: e.sum_sq(),
            };
            let eps_hat = kappa.excess();
            if eps_hat <= std::f64::consts::SQRT_2 {
                prop_assert!(check_monovariants(&[tr], kappa).is_ok());
                // the strong move is dominated by the real one
                let strong = StrongState::of(&e).apply_strong_reversed_move(alpha as f64, eps_hat);
                prop_assert!(strong.sum_e <= prev.sum() as f64 + 1e-9);
                prop_assert!(strong.sum_e2 <= prev.sum_sq() as f64 + 1e-9);
            }
        }
    }
}
