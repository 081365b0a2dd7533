//! Experiment rows, sweeps, power-law fits and trace verification.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::constructions::{build_full, ConstructionError, ConstructionPlan};
use crate::dynamics::{
    check_containment, first_increase, run_schedule, DynamicsError, EntryRule, RuleVariant,
    Schedule, Trace, UncertaintyRule,
};
use crate::game::{ConsensusGame, MoveRecord};
use crate::move_game::{
    check_monovariants, extract_ek_trace, verify_upper_bound_chain, ChainReport, MoveGameError,
};
use crate::rational::Eps;

pub const CSV_HEADER: [&str; 8] = [
    "n",
    "eps",
    "rule",
    "initial_bad",
    "final_bad",
    "pou",
    "moves",
    "ms",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot fit a power law: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    MoveGame(#[from] MoveGameError),
    #[error("recorded move {step} does not match replay: {msg}")]
    TraceMismatch { step: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// True when the error means a check failed, as opposed to bad input
    /// or an infeasible request.
    pub fn is_violation(&self) -> bool {
        match self {
            HarnessError::MoveGame(_) | HarnessError::TraceMismatch { .. } => true,
            HarnessError::Dynamics(e) => matches!(
                e,
                DynamicsError::InvalidMove { .. }
                    | DynamicsError::Bookkeeping { .. }
                    | DynamicsError::Containment { .. }
            ),
            _ => false,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            HarnessError::Construction(
                ConstructionError::InstanceTooSmall { .. } | ConstructionError::KTooSmall(_)
            ) | HarnessError::Construction(ConstructionError::BudgetExceeded { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub eps: Eps,
    pub rule: RuleVariant,
    pub initial_bad: u64,
    pub final_bad: u64,
    pub pou: f64,
    pub moves: usize,
    pub ms: f64,
}

impl ExperimentRow {
    pub fn from_trace(n: usize, rule: &UncertaintyRule, trace: &Trace, ms: f64) -> Self {
        ExperimentRow {
            n,
            eps: rule.eps,
            rule: rule.variant,
            initial_bad: trace.initial_bad,
            final_bad: trace.final_bad,
            pou: if trace.initial_bad == 0 {
                f64::NAN
            } else {
                trace.final_bad as f64 / trace.initial_bad as f64
            },
            moves: trace.len(),
            ms,
        }
    }
}

pub fn write_rows_csv<W: Write>(out: W, rows: &[ExperimentRow]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least squares on `(ln x, ln y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<FitResult, HarnessError> {
    if points.len() < 2 {
        return Err(HarnessError::DegenerateFit(format!(
            "{} point(s)",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(HarnessError::DegenerateFit(
            "coordinates must be positive".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::DegenerateFit("all x values equal".into()));
    }
    let exponent = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        exponent,
        intercept: my - exponent * mx,
        r2,
        points: points.len(),
    })
}

/// Which part of the construction schedule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phases {
    First,
    Both,
}

#[derive(Debug, Clone)]
pub struct ConstructionRun {
    pub initial: ConsensusGame,
    pub plan: ConstructionPlan,
    pub trace: Trace,
    pub row: ExperimentRow,
}

/// Builds the lower-bound instance for `(n, eps)` and runs its schedule.
pub fn run_construction(
    n: usize,
    eps: Eps,
    variant: RuleVariant,
    phases: Phases,
) -> Result<ConstructionRun, HarnessError> {
    let rule = UncertaintyRule::new(eps, variant);
    let (initial, plan) = build_full(n, eps)?;
    let schedule = match phases {
        Phases::First => plan.phase1.clone(),
        Phases::Both => plan.phase1.concat(&plan.phase2),
    };
    let mut game = initial.clone();
    let start = Instant::now();
    let trace = run_schedule(&mut game, &rule, &schedule, false)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let row = ExperimentRow::from_trace(initial.n(), &rule, &trace, ms);
    Ok(ConstructionRun {
        initial,
        plan,
        trace,
        row,
    })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<ExperimentRow>,
    pub failures: Vec<(usize, Eps, String)>,
    /// Fit of pou against n for each eps.
    pub fits_vs_n: Vec<(Eps, Result<FitResult, String>)>,
    /// Fit of pou against eps for each n.
    pub fits_vs_eps: Vec<(usize, Result<FitResult, String>)>,
}

/// Runs every `(n, eps)` pair concurrently; rows come back in input order.
/// Fits use the requested budget `n`; rows record the built vertex count.
pub fn sweep(ns: &[usize], epss: &[Eps], variant: RuleVariant) -> SweepOutcome {
    let pairs: Vec<(usize, Eps)> = epss
        .iter()
        .flat_map(|&e| ns.iter().map(move |&n| (n, e)))
        .collect();
    let results: Vec<_> = pairs
        .par_iter()
        .map(|&(n, e)| run_construction(n, e, variant, Phases::Both).map(|r| r.row))
        .collect();
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (&(n, e), r) in pairs.iter().zip(results) {
        match r {
            Ok(row) => done.push((n, row)),
            Err(err) => failures.push((n, e, err.to_string())),
        }
    }
    let fit = |pts: Vec<(f64, f64)>| fit_power_law(&pts).map_err(|e| e.to_string());
    let fits_vs_n = epss
        .iter()
        .map(|&e| {
            let pts = done
                .iter()
                .filter(|(_, r)| r.eps == e)
                .map(|(n, r)| (*n as f64, r.pou))
                .collect();
            (e, fit(pts))
        })
        .collect();
    let fits_vs_eps = ns
        .iter()
        .map(|&n| {
            let pts = done
                .iter()
                .filter(|(m, _)| *m == n)
                .map(|(_, r)| (r.eps.as_f64(), r.pou))
                .collect();
            (n, fit(pts))
        })
        .collect();
    SweepOutcome {
        rows: done.into_iter().map(|(_, r)| r).collect(),
        failures,
        fits_vs_n,
        fits_vs_eps,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub moves: usize,
    /// Steps whose switch the rule does not permit.
    pub invalid_moves: Vec<usize>,
    pub containment_ok: bool,
    pub first_increase_ok: Option<bool>,
    pub worst_sum_slack: f64,
    pub worst_sq_slack: f64,
    pub chain: ChainReport,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.invalid_moves.is_empty()
            && self.containment_ok
            && self.first_increase_ok != Some(false)
            && self.chain.ok()
    }
}

/// Replays recorded moves on `initial` and runs every check: recorded
/// costs against the replay, rule validity, containment of bad edges in
/// `S_k`, the first-increase bound, sequence extraction, monovariants and
/// the upper-bound chain.
pub fn verify_trace(
    initial: &ConsensusGame,
    recorded: &[MoveRecord],
    rule: &UncertaintyRule,
) -> Result<VerifyReport, HarnessError> {
    let mut game = initial.clone();
    let mut moves = Vec::with_capacity(recorded.len());
    let mut invalid_moves = Vec::new();
    for (step, rec) in recorded.iter().enumerate() {
        game.check_vertex(rec.vertex).map_err(DynamicsError::from)?;
        let (b, g) = (game.player_cost(rec.vertex), game.good_degree(rec.vertex));
        if (b, g, game.color(rec.vertex)) != (rec.b, rec.g, rec.from) {
            return Err(HarnessError::TraceMismatch {
                step,
                msg: format!(
                    "vertex {} recorded ({}, b={}, g={}), replay ({}, b={b}, g={g})",
                    rec.vertex,
                    rec.from,
                    rec.b,
                    rec.g,
                    game.color(rec.vertex)
                ),
            });
        }
        if !rule.permits(b, g) {
            invalid_moves.push(step);
        }
        let mut m = game.flip(rec.vertex);
        m.step = step;
        if m.bad_edges_after != rec.bad_edges_after {
            return Err(HarnessError::TraceMismatch {
                step,
                msg: format!(
                    "bad edges {} recorded, {} replayed",
                    rec.bad_edges_after, m.bad_edges_after
                ),
            });
        }
        moves.push(m);
    }
    let trace = Trace::new(initial, moves, EntryRule::FirstSwitch);
    let containment_ok = check_containment(initial, &trace).is_ok();
    let first_increase_ok = first_increase(&trace, rule).ok().map(|f| f.holds);
    let ek = extract_ek_trace(initial, &trace, rule.kappa())?;
    let mono = check_monovariants(&ek.transitions, rule.kappa())?;
    let chain = verify_upper_bound_chain(initial, &trace, rule)?;
    Ok(VerifyReport {
        moves: trace.len(),
        invalid_moves,
        containment_ok,
        first_increase_ok,
        worst_sum_slack: mono.worst_sum_slack,
        worst_sq_slack: mono.worst_sq_slack,
        chain,
    })
}

/// Runs `schedule` and verifies the resulting trace.
pub fn simulate_and_verify(
    initial: &ConsensusGame,
    schedule: &Schedule,
    rule: &UncertaintyRule,
) -> Result<(Trace, VerifyReport), HarnessError> {
    let mut game = initial.clone();
    let trace = run_schedule(&mut game, rule, schedule, false)?;
    let report = verify_trace(initial, &trace.moves, rule)?;
    Ok((trace, report))
}
