//! Acceptance criteria. Every criterion runs and prints one PASS/FAIL line;
//! the process exits nonzero if any failed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pou_core::constructions::{
    boost_alternating_bad_edges, build_double_gadget, build_full, predicted_final_bad_edges,
};
use pou_core::dynamics::{
    bfs_oracle_max_bad_edges, can_switch, first_increase, greedy_adversary, read_schedule,
    run_schedule, write_schedule, Schedule, Trace,
};
use pou_core::harness::fit_power_law;
use pou_core::move_game::{
    check_monovariants, extract_ek_trace, verify_upper_bound_chain, EkSequence, Transition,
};
use pou_core::{Color, ConsensusGame, Eps, Instance, Kappa, RuleVariant, UncertaintyRule, Vertex};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn eps(p: u64, q: u64) -> Eps {
    Eps::new(p, q).unwrap()
}

fn two_sided(p: u64, q: u64) -> UncertaintyRule {
    UncertaintyRule::two_sided(eps(p, q))
}

fn random_game(rng: &mut ChaCha8Rng, n_min: usize, n_max: usize) -> ConsensusGame {
    let n = rng.gen_range(n_min..=n_max);
    let p = rng.gen_range(0.2..0.6);
    let mut edges = Vec::new();
    for u in 0..n as Vertex {
        for v in u + 1..n as Vertex {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let colors = (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                Color::Red
            } else {
                Color::White
            }
        })
        .collect();
    ConsensusGame::new(n, &edges, colors).unwrap()
}

/// Random sequence of permitted switches; returns the schedule and the
/// largest bad-edge count seen along it.
fn random_walk(
    game: &ConsensusGame,
    rule: &UncertaintyRule,
    rng: &mut ChaCha8Rng,
    steps: usize,
) -> (Schedule, u64) {
    let mut g = game.clone();
    let mut out = Vec::new();
    let mut peak = g.bad_edges();
    for _ in 0..steps {
        let options: Vec<Vertex> = (0..g.n() as Vertex)
            .filter(|&v| can_switch(&g, rule, v))
            .collect();
        if options.is_empty() {
            break;
        }
        let v = options[rng.gen_range(0..options.len())];
        g.flip(v);
        peak = peak.max(g.bad_edges());
        out.push(v);
    }
    (Schedule(out), peak)
}

/// Random instances with random walks under two-sided 1/2; shared by the
/// first-increase and chain criteria.
fn random_traces(count: usize) -> Vec<(ConsensusGame, Trace)> {
    let rule = two_sided(1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    (0..count)
        .map(|_| {
            let g = random_game(&mut rng, 6, 30);
            let steps = 3 * g.n();
            let (sched, _) = random_walk(&g, &rule, &mut rng, steps);
            let mut sim = g.clone();
            let t = run_schedule(&mut sim, &rule, &sched, true).unwrap();
            (g, t)
        })
        .collect()
}

fn construction_trace(n: usize, e: Eps, both: bool) -> (ConsensusGame, Trace) {
    let (g, plan) = build_full(n, e).unwrap();
    let sched = if both {
        plan.phase1.concat(&plan.phase2)
    } else {
        plan.phase1.clone()
    };
    let mut sim = g.clone();
    let t = run_schedule(&mut sim, &UncertaintyRule::two_sided(e), &sched, false).unwrap();
    (g, t)
}

fn gadget_trace(m: u32) -> (ConsensusGame, Trace) {
    let rule = two_sided(1, 4);
    let (g, sched) = build_double_gadget(m, &rule).unwrap();
    let mut sim = g.clone();
    let t = run_schedule(&mut sim, &rule, &sched, true).unwrap();
    (g, t)
}

/// Generates each instance, round-trips it and its schedules through their
/// file formats, then simulates under the two-sided rule.
fn lower_bound_reproduction() -> Outcome {
    let rule = two_sided(1, 2);
    let mut points = Vec::new();
    let mut notes = Vec::new();
    let mut pass = true;
    let mut largest_s = 0.0;
    for n in [500usize, 1000, 2000, 4000] {
        let start = Instant::now();
        let (game, plan) = match build_full(n, rule.eps) {
            Ok(x) => x,
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: format!("generate n={n} failed: {e}"),
                }
            }
        };
        let json = game.to_instance().to_json();
        let mut sched_file = Vec::new();
        write_schedule(&mut sched_file, &plan.phase1.concat(&plan.phase2)).unwrap();

        let mut loaded = Instance::from_json(&json).unwrap().into_game().unwrap();
        let schedule = read_schedule(&sched_file[..]).unwrap();
        let result = run_schedule(&mut loaded, &rule, &schedule, false);
        let secs = start.elapsed().as_secs_f64();
        let t = match result {
            Ok(t) => t,
            Err(e) => {
                pass = false;
                notes.push(format!("n={n}: {e}"));
                continue;
            }
        };
        let pou = t.final_bad as f64 / t.initial_bad as f64;
        points.push((n as f64, pou));
        notes.push(format!("n={n} pou={pou:.1}"));
        largest_s = secs;
    }
    match fit_power_law(&points) {
        Ok(f) => {
            let ok = (f.exponent - 2.0).abs() <= 0.2 && f.r2 >= 0.98 && largest_s <= 60.0;
            Outcome {
                pass: pass && ok,
                detail: format!(
                    "exponent={:.3} r2={:.5} largest={:.2}s, zero invalid moves; {}",
                    f.exponent,
                    f.r2,
                    largest_s,
                    notes.join(", ")
                ),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: format!("fit failed: {e}; {}", notes.join(", ")),
        },
    }
}

fn phase_contrast() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (n, e) in [
        (500, eps(1, 2)),
        (1000, eps(1, 2)),
        (2000, eps(1, 2)),
        (4000, eps(1, 2)),
        (2000, eps(1, 3)),
    ] {
        let (g, plan) = build_full(n, e).unwrap();
        let rule = UncertaintyRule::two_sided(e);
        let mut sim = g.clone();
        let t1 = run_schedule(&mut sim, &rule, &plan.phase1, false).unwrap();
        let t2 = run_schedule(&mut sim, &rule, &plan.phase2, false).unwrap();
        let product = plan.last_pair_product();
        let predicted = predicted_final_bad_edges(&plan);
        let phase1_ok = t1.final_bad == product;
        let final_ok = t2.final_bad == predicted;
        pass &= phase1_ok && final_ok;
        notes.push(format!(
            "n={n} eps={e}: phase1 {} vs product {product} ({}), frozen residual {}, final {} vs predicted {predicted} ({}), boost-region alternating edges {}",
            t1.final_bad,
            if phase1_ok { "equal" } else { "differs" },
            plan.frozen_residual(),
            t2.final_bad,
            if final_ok { "equal" } else { "differs" },
            boost_alternating_bad_edges(&plan),
        ));
    }
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

fn first_increase_bound() -> Outcome {
    let mut traces: Vec<(String, UncertaintyRule, Trace)> = Vec::new();
    for n in [500, 2000] {
        traces.push((
            format!("construction n={n}"),
            two_sided(1, 2),
            construction_trace(n, eps(1, 2), true).1,
        ));
    }
    for m in [4, 8, 16, 32] {
        traces.push((format!("gadget m={m}"), two_sided(1, 4), gadget_trace(m).1));
    }
    let random = random_traces(1000);
    let mut with_increase = 0;
    let mut failures = Vec::new();
    let all = traces
        .iter()
        .map(|(name, r, t)| (name.clone(), *r, t))
        .chain(
            random
                .iter()
                .enumerate()
                .map(|(i, (_, t))| (format!("random #{i}"), two_sided(1, 2), t)),
        );
    for (name, rule, t) in all {
        let Ok(fi) = first_increase(t, &rule) else {
            continue;
        };
        with_increase += 1;
        let k = rule.kappa();
        let b_ok = fi.b as u128 * (k.num - k.den) >= (fi.g - fi.b) as u128 * k.den;
        if !b_ok || !fi.holds {
            failures.push(format!(
                "{name}: b={} g={} initial={}",
                fi.b, fi.g, fi.initial_bad
            ));
        }
    }
    Outcome {
        pass: failures.is_empty() && with_increase >= 6,
        detail: format!(
            "{with_increase} traces with an increasing move (6 constructed, {} random); {} violations {}",
            with_increase - 6,
            failures.len(),
            failures.join(", ")
        ),
    }
}

fn doubling_gadget() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for m in [4u32, 8, 16, 32] {
        let (_, t) = gadget_trace(m);
        let m64 = m as u64;
        let ok =
            t.initial_bad == m64 + 1 && t.final_bad == 2 * m64 + 1 && t.len() as u64 == 4 * m64 + 2;
        pass &= ok;
        notes.push(format!(
            "m={m}: initial {} (want {}), final {} (want {}), switches {} (want {}), increase {}",
            t.initial_bad,
            m64 + 1,
            t.final_bad,
            2 * m64 + 1,
            t.len(),
            4 * m64 + 2,
            t.final_bad - t.initial_bad
        ));
    }
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let rule = two_sided(1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut failures = Vec::new();
    let mut states = 0;
    for i in 0..200 {
        let g = random_game(&mut rng, 3, 12);
        let r = bfs_oracle_max_bad_edges(&g, &rule, 1 << 22).unwrap();
        states += r.states;
        let mut gg = g.clone();
        let greedy = greedy_adversary(&mut gg, &rule, 10_000);
        let (_, peak) = random_walk(&g, &rule, &mut rng, 4 * g.n());
        if greedy.final_bad > r.max_bad || peak > r.max_bad {
            failures.push(format!(
                "#{i}: greedy {} walk {} oracle {}",
                greedy.final_bad, peak, r.max_bad
            ));
        }
    }
    let grule = two_sided(1, 4);
    let (g, sched) = build_double_gadget(2, &grule).unwrap();
    let r = bfs_oracle_max_bad_edges(&g, &grule, 1 << 22).unwrap();
    let mut sim = g.clone();
    let t = run_schedule(&mut sim, &grule, &sched, true).unwrap();
    let mut gg = g.clone();
    let greedy = greedy_adversary(&mut gg, &grule, 10_000);
    if t.final_bad > r.max_bad || greedy.final_bad > r.max_bad {
        failures.push(format!(
            "gadget m=2: schedule {} greedy {} oracle {}",
            t.final_bad, greedy.final_bad, r.max_bad
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: failures.is_empty() && secs <= 300.0,
        detail: format!(
            "200 random instances ({states} states explored), gadget m=2 schedule {} / greedy {} / oracle {}; {:.2}s; {} violations {}",
            t.final_bad,
            greedy.final_bad,
            r.max_bad,
            secs,
            failures.len(),
            failures.join(", ")
        ),
    }
}

fn random_kappa(rng: &mut ChaCha8Rng) -> Kappa {
    let variant = [
        RuleVariant::OneSided,
        RuleVariant::TwoSided,
        RuleVariant::HalfDegree,
    ][rng.gen_range(0..3)];
    // ε in (0, 1/2], giving κ − 1 at most 1.25
    let q = rng.gen_range(2..=16);
    let p = rng.gen_range(1..=q / 2);
    UncertaintyRule::new(eps(p, q), variant).kappa()
}

fn move_game_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let cases = 100_000;
    let mut inversion_failures = 0;
    for _ in 0..cases {
        let kappa = random_kappa(&mut rng);
        let len = rng.gen_range(0..12);
        let e = EkSequence::new((0..len).map(|_| rng.gen_range(0..15)).collect());
        let z = if e.len_nonzero() == 0 || rng.gen_bool(0.05) {
            0
        } else {
            e.values()[rng.gen_range(0..e.len_nonzero())]
        };
        let need = kappa.floor_mul(z) as usize;
        let rest = e.len_nonzero() - usize::from(z > 0);
        let mut pool: Vec<usize> = (0..rest + need).collect();
        for i in (1..pool.len()).rev() {
            pool.swap(i, rng.gen_range(0..=i));
        }
        pool.truncate(need);
        let moved = e.apply_move(z, &pool, kappa).unwrap();
        if need == 0 {
            let mut after = e.values().to_vec();
            if let Some(p) = after.iter().position(|&v| v == z) {
                after.remove(p);
            }
            if moved != EkSequence::new(after) {
                inversion_failures += 1;
            }
            continue;
        }
        // locate the incremented elements by value in the sorted result
        let mut after = e.values().to_vec();
        if z > 0 {
            let p = after.iter().position(|&v| v == z).unwrap();
            after.remove(p);
        }
        let mut bumped: Vec<u64> = pool
            .iter()
            .map(|&i| after.get(i).copied().unwrap_or(0) + 1)
            .collect();
        bumped.sort_unstable_by(|a, b| b.cmp(a));
        let mut taken = vec![false; moved.len_nonzero()];
        let idx: Vec<usize> = bumped
            .iter()
            .map(|&b| {
                let p = (0..moved.len_nonzero())
                    .find(|&i| !taken[i] && moved.values()[i] == b)
                    .unwrap();
                taken[p] = true;
                p
            })
            .collect();
        let (back, alpha, zz) = moved.apply_reversed_move(&idx, kappa).unwrap();
        if back != e || zz != z || alpha as usize != need {
            inversion_failures += 1;
        }
    }

    let mut inequality_failures = 0;
    for _ in 0..cases {
        let kappa = random_kappa(&mut rng);
        let len = rng.gen_range(1..15);
        let e = EkSequence::new((0..len).map(|_| rng.gen_range(1..25)).collect());
        let mut idx: Vec<usize> = (0..e.len_nonzero()).filter(|_| rng.gen_bool(0.5)).collect();
        if idx.is_empty() {
            idx.push(rng.gen_range(0..e.len_nonzero()));
        }
        let (prev, alpha, _) = e.apply_reversed_move(&idx, kappa).unwrap();
        let tr = Transition {
            k: 1,
            vertex: 0,
            z: 0,
            increments: 0,
            padding: 0,
            alpha,
            sum_prev: prev.sum(),
            sum_sq_prev: prev.sum_sq(),
            sum: e.sum(),
            sum_sq: e.sum_sq(),
        };
        if check_monovariants(&[tr], kappa).is_err() {
            inequality_failures += 1;
        }
    }
    Outcome {
        pass: inversion_failures == 0 && inequality_failures == 0,
        detail: format!(
            "{cases} move/reverse pairs with {inversion_failures} inversion failures; {cases} reversed moves with {inequality_failures} inequality violations"
        ),
    }
}

fn upper_bound_chain() -> Outcome {
    let mut runs: Vec<(String, ConsensusGame, Trace, UncertaintyRule)> = Vec::new();
    for n in [500, 1000, 2000, 4000] {
        for both in [false, true] {
            let (g, t) = construction_trace(n, eps(1, 2), both);
            runs.push((
                format!("construction n={n} both={both}"),
                g,
                t,
                two_sided(1, 2),
            ));
        }
    }
    for m in [4, 8, 16, 32] {
        let (g, t) = gadget_trace(m);
        runs.push((format!("gadget m={m}"), g, t, two_sided(1, 4)));
    }
    for (i, (g, t)) in random_traces(1000).into_iter().enumerate() {
        runs.push((format!("random #{i}"), g, t, two_sided(1, 2)));
    }
    let mut failures = Vec::new();
    let mut min_slack = f64::INFINITY;
    let mut checked = 0;
    for (name, g, t, rule) in &runs {
        match verify_upper_bound_chain(g, t, rule) {
            Ok(r) => {
                if !r.ok() {
                    failures.push(format!("{name}: {}", r.violations.join("; ")));
                } else if r.m > 0 {
                    checked += 1;
                    if r.slack <= 0.0 {
                        failures.push(format!("{name}: slack {}", r.slack));
                    }
                    min_slack = min_slack.min(r.slack);
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{} traces, {checked} with responders; minimum slack of the sum-of-alphas bound {min_slack:.3}; {} failures {}",
            runs.len(),
            failures.len(),
            failures.iter().take(5).cloned().collect::<Vec<_>>().join(", ")
        ),
    }
}

fn worked_example() -> Outcome {
    // S0: four white vertices around one red; vertex 5 sees four of them,
    // vertex 6 sees three
    let inst = Instance {
        n: 7,
        edges: vec![
            [0, 4],
            [1, 4],
            [2, 4],
            [3, 4],
            [0, 5],
            [1, 5],
            [2, 5],
            [3, 5],
            [0, 6],
            [1, 6],
            [2, 6],
        ],
        colors: "WWWWRWW".into(),
    };
    let g = inst.into_game().unwrap();
    let t = Trace::new(&g, vec![], Default::default());
    let ek = extract_ek_trace(&g, &t, two_sided(1, 4).kappa()).unwrap();
    let got = ek.initial.values().to_vec();
    Outcome {
        pass: got == [4, 3] && ek.initial.get(2) == 0,
        detail: format!("E0 = {got:?} followed by zeros"),
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("lower-bound reproduction", lower_bound_reproduction),
        ("phase contrast", phase_contrast),
        ("initial-cost bound", first_increase_bound),
        ("doubling gadget", doubling_gadget),
        ("oracle equivalence", oracle_equivalence),
        ("move-game soundness", move_game_soundness),
        ("upper-bound chain", upper_bound_chain),
        ("worked example", worked_example),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {status} [{:.1}s] {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
