//! Budget-constrained probe scheduling for complex monitoring profiles.
//!
//! A proxy watches volatile pull-only resources on behalf of clients whose
//! needs are sets of complex execution intervals (CEIs): bundles of per
//! resource time windows that must each receive one probe for the bundle to
//! count. Under a per-chronon probe budget, online policies decide what to
//! probe next; the crate bundles the domain model, four policies, the
//! simulation loop, a synthetic workload generator, an exact offline oracle
//! for small instances, and a sweep harness for reproducible experiments.

pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod policy;
pub mod oracle;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use model::{
    gained_completeness, BudgetVector, CeiId, Chronon, ComplexExecutionInterval, EiId, Epoch,
    ExecutionInterval, Profile, ProfileId, ProfileSet, ResourceId, Schedule,
};
pub use policy::{CaptureState, InactiveRule, PolicyKind, Preemption, ScoreKind};
pub use sim::{run, single_ei_upper_bound, MetricsReport, RunOutput, SimConfig, SimState};
