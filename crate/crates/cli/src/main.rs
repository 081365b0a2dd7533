use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pou_core::constructions::{build_double_gadget, build_full, ConstructionError};
use pou_core::dynamics::{
    bfs_oracle_max_bad_edges, greedy_adversary, read_schedule, read_trace_csv, run_schedule,
    write_schedule, write_trace_csv, DynamicsError, RuleVariant, Schedule, UncertaintyRule,
};
use pou_core::harness::{sweep, verify_trace, write_rows_csv, ExperimentRow, HarnessError};
use pou_core::move_game::sum_alpha_bound;
use pou_core::{Eps, Instance};

/// Uncertain best-response dynamics in consensus games.
#[derive(Parser)]
#[command(name = "pou", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct RuleArgs {
    /// Uncertainty level as p/q.
    #[arg(long, default_value = "1/2")]
    eps: Eps,
    #[arg(long, default_value = "two-sided")]
    rule: RuleVariant,
}

impl RuleArgs {
    fn rule(&self) -> UncertaintyRule {
        UncertaintyRule::new(self.eps, self.rule)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the lower-bound instance (or the doubling gadget) and its schedules.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        /// Build the doubling gadget with this many white neighbors instead.
        #[arg(long, conflicts_with = "n")]
        gadget: Option<u32>,
        #[command(flatten)]
        rule: RuleArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run schedules on an instance and print the experiment row.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// Schedule files, run one after the other.
        #[arg(long, required = true, num_args = 1..)]
        schedule: Vec<PathBuf>,
        #[command(flatten)]
        rule: RuleArgs,
        /// Write the move trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the row as CSV instead of JSON.
        #[arg(long)]
        csv: bool,
        /// Recount every cost after each move.
        #[arg(long)]
        strict: bool,
    },
    /// Exhaustive search for the worst reachable coloring (n <= 24).
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long, default_value_t = 1 << 24)]
        state_limit: usize,
    },
    /// Run the construction over a grid of sizes and levels and fit exponents.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<Eps>,
        #[arg(long, default_value = "two-sided")]
        rule: RuleVariant,
        /// Write rows as CSV here (stdout when absent).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check a recorded trace against the rule and the upper-bound chain.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        rule: RuleArgs,
    },
    /// Print the bound on the sum of reversed-move sizes.
    Bound {
        #[arg(long)]
        m: u64,
        /// Effective uncertainty as p/q; with --rule, kappa - 1 for that rule.
        #[arg(long)]
        eps: Eps,
        #[arg(long)]
        rule: Option<RuleVariant>,
        #[arg(long, default_value_t = 0.0)]
        sum_e0: f64,
        #[arg(long, default_value_t = 0.0)]
        sum_e0_sq: f64,
    },
}

enum Failure {
    Violation(anyhow::Error),
    Infeasible(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Violation(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ConstructionError> for Failure {
    fn from(e: ConstructionError) -> Self {
        match e {
            ConstructionError::MTooSmall { .. } => Failure::Other(e.into()),
            _ => Failure::Infeasible(e.into()),
        }
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::InvalidMove { .. }
            | DynamicsError::Bookkeeping { .. }
            | DynamicsError::Containment { .. } => Failure::Violation(e.into()),
            DynamicsError::StateLimitExceeded { .. } | DynamicsError::TooManyVertices { .. } => {
                Failure::Infeasible(e.into())
            }
            _ => Failure::Other(e.into()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_violation() {
            Failure::Violation(e.into())
        } else if e.is_infeasible() {
            Failure::Infeasible(e.into())
        } else {
            Failure::Other(e.into())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Violation(e) | Failure::Infeasible(e) | Failure::Other(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Instance::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn save_schedule(path: &Path, schedule: &Schedule) -> Result<()> {
    let f = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    write_schedule(BufWriter::new(f), schedule)?;
    Ok(())
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Generate {
            n,
            gadget,
            rule,
            out,
        } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            if let Some(m) = gadget {
                let (game, schedule) = build_double_gadget(m, &rule.rule())?;
                write_file(&out.join("instance.json"), &game.to_instance().to_json())?;
                save_schedule(&out.join("schedule.txt"), &schedule)?;
                println!(
                    "{}",
                    json!({"gadget_m": m, "n": game.n(), "initial_bad": game.bad_edges(), "moves": schedule.len()})
                );
                return Ok(());
            }
            let n = n.context("either --n or --gadget is required")?;
            let (game, plan) = build_full(n, rule.eps)?;
            write_file(&out.join("instance.json"), &game.to_instance().to_json())?;
            write_file(&out.join("plan.json"), &plan.plan_json())?;
            save_schedule(&out.join("phase1.txt"), &plan.phase1)?;
            save_schedule(&out.join("phase2.txt"), &plan.phase2)?;
            println!(
                "{}",
                json!({
                    "k": plan.k,
                    "n": plan.total_vertices,
                    "c": plan.c,
                    "layers": plan.layers.len(),
                    "initial_bad": game.bad_edges(),
                    "predicted_phase1_bad": plan.predicted_phase1_bad,
                    "predicted_final_bad": plan.predicted_final_bad,
                })
            );
            Ok(())
        }
        Command::Simulate {
            instance,
            schedule,
            rule,
            trace,
            csv,
            strict,
        } => {
            let mut game = read_instance(&instance)?
                .into_game()
                .context("invalid instance")?;
            let mut full = Schedule::default();
            for path in &schedule {
                let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
                full = full.concat(&read_schedule(BufReader::new(f)).context("invalid schedule")?);
            }
            let rule = rule.rule();
            let start = std::time::Instant::now();
            let t = run_schedule(&mut game, &rule, &full, strict)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            if let Some(path) = trace {
                let f =
                    File::create(&path).with_context(|| format!("writing {}", path.display()))?;
                write_trace_csv(BufWriter::new(f), &t.moves).context("writing trace")?;
            }
            let mut row = ExperimentRow::from_trace(game.n(), &rule, &t, ms);
            if t.is_empty() && t.initial_bad == 0 {
                row.pou = 1.0;
            }
            if csv {
                write_rows_csv(std::io::stdout().lock(), &[row])?;
            } else {
                println!(
                    "{}",
                    serde_json::to_string(&row).context("serializing row")?
                );
            }
            Ok(())
        }
        Command::Oracle {
            instance,
            rule,
            state_limit,
        } => {
            let game = read_instance(&instance)?
                .into_game()
                .context("invalid instance")?;
            let rule = rule.rule();
            let r = bfs_oracle_max_bad_edges(&game, &rule, state_limit)?;
            let mut g = game.clone();
            let greedy = greedy_adversary(&mut g, &rule, 100 * game.n().max(1));
            println!(
                "{}",
                json!({
                    "initial_bad": r.initial_bad,
                    "max_bad": r.max_bad,
                    "states": r.states,
                    "witness": r.witness.0,
                    "greedy_bad": greedy.final_bad,
                    "greedy_moves": greedy.len(),
                })
            );
            Ok(())
        }
        Command::Sweep { n, eps, rule, csv } => {
            let out = sweep(&n, &eps, rule);
            match csv {
                Some(path) => {
                    let f = File::create(&path)
                        .with_context(|| format!("writing {}", path.display()))?;
                    write_rows_csv(BufWriter::new(f), &out.rows)?;
                }
                None => write_rows_csv(std::io::stdout().lock(), &out.rows)?,
            }
            for (n, e, msg) in &out.failures {
                eprintln!("n={n} eps={e}: {msg}");
            }
            for (e, fit) in &out.fits_vs_n {
                match fit {
                    Ok(f) => eprintln!("eps={e}: pou ~ n^{:.3} (r2 = {:.4})", f.exponent, f.r2),
                    Err(msg) => eprintln!("eps={e}: no fit against n ({msg})"),
                }
            }
            for (n, fit) in &out.fits_vs_eps {
                match fit {
                    Ok(f) => eprintln!("n={n}: pou ~ eps^{:.3} (r2 = {:.4})", f.exponent, f.r2),
                    Err(msg) => eprintln!("n={n}: no fit against eps ({msg})"),
                }
            }
            if out.rows.is_empty() && !out.failures.is_empty() {
                return Err(Failure::Infeasible(anyhow::anyhow!(
                    "no feasible (n, eps) pair"
                )));
            }
            Ok(())
        }
        Command::Verify {
            instance,
            trace,
            rule,
        } => {
            let game = read_instance(&instance)?
                .into_game()
                .context("invalid instance")?;
            let f = File::open(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let moves = read_trace_csv(BufReader::new(f)).context("invalid trace")?;
            let report = verify_trace(&game, &moves, &rule.rule())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).context("serializing report")?
            );
            if report.ok() {
                Ok(())
            } else {
                Err(Failure::Violation(anyhow::anyhow!("verification failed")))
            }
        }
        Command::Bound {
            m,
            eps,
            rule,
            sum_e0,
            sum_e0_sq,
        } => {
            if m == 0 || sum_e0 < 0.0 || sum_e0_sq < 0.0 {
                return Err(anyhow::anyhow!("need m >= 1 and nonnegative sums").into());
            }
            let e = match rule {
                Some(v) => UncertaintyRule::new(eps, v).kappa().excess(),
                None => eps.as_f64(),
            };
            println!("{}", sum_alpha_bound(m, e, sum_e0, sum_e0_sq));
            Ok(())
        }
    }
}
