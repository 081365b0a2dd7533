//! Uncertain best-response dynamics in two-color consensus games.
//!
//! * [`game`]: graph, coloring and incremental bad-edge bookkeeping.
//! * [`dynamics`]: the switching rule, schedule execution and small-instance
//!   adversaries.
//! * [`constructions`]: the layered lower-bound instance and the doubling
//!   gadget, each with its schedule.
//! * [`move_game`]: the integer-sequence abstraction of first responses and
//!   the monovariant checks built on it.
//! * [`harness`]: experiment rows, sweeps and power-law fits.

pub mod constructions;
pub mod dynamics;
pub mod game;
pub mod harness;
pub mod move_game;
pub mod rational;

pub use constructions::{build_double_gadget, build_full, ConstructionError, ConstructionPlan};
pub use dynamics::{
    can_switch, is_uncertain_best_response, price_of_uncertainty, run_schedule, DynamicsError,
    RuleVariant, Schedule, Trace, UncertaintyRule,
};
pub use game::{Color, ConsensusGame, GameError, Instance, MoveRecord, Vertex};
pub use harness::{fit_power_law, ExperimentRow, FitResult, HarnessError};
pub use move_game::{
    verify_upper_bound_chain, ChainReport, EkSequence, MoveGameError, StrongState,
};
pub use rational::{Eps, Kappa};
