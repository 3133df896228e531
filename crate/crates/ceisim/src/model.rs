//! Core domain types: epochs, resources, execution intervals, complex
//! execution intervals (CEIs), profiles, budgets, schedules, and the pure
//! functions over them (capture indicators, rank, feasibility, gained
//! completeness).

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// An indivisible unit of time. Chronons are indexed 1..=K within an epoch.
pub type Chronon = u32;

/// A monitoring horizon of K consecutive chronons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch(u32);

impl Epoch {
    pub fn new(chronons: u32) -> Result<Self> {
        if chronons == 0 {
            return Err(Error::EmptyEpoch);
        }
        Ok(Epoch(chronons))
    }

    /// Number of chronons K.
    pub fn chronons(&self) -> u32 {
        self.0
    }

    pub fn contains(&self, t: Chronon) -> bool {
        t >= 1 && t <= self.0
    }
}

/// A pollable resource, identified by its 1-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourceId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EiId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CeiId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProfileId(pub u32);

macro_rules! display_as_index {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    )*};
}
display_as_index!(ResourceId, EiId, CeiId, ProfileId);

/// A time window [start, finish] on one resource during which a single probe
/// suffices to capture it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutionInterval {
    pub id: EiId,
    pub resource: ResourceId,
    pub start: Chronon,
    pub finish: Chronon,
}

impl ExecutionInterval {
    pub fn new(id: EiId, resource: ResourceId, start: Chronon, finish: Chronon) -> Result<Self> {
        if start < 1 || start > finish {
            return Err(Error::InvalidInterval { start, finish });
        }
        Ok(ExecutionInterval {
            id,
            resource,
            start,
            finish,
        })
    }

    /// Window length in chronons.
    pub fn width(&self) -> u32 {
        self.finish - self.start + 1
    }

    pub fn is_active_at(&self, t: Chronon) -> bool {
        self.start <= t && t <= self.finish
    }
}

/// A set of execution intervals, all of which must be captured for the CEI
/// to count toward completeness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexExecutionInterval {
    pub id: CeiId,
    pub profile: ProfileId,
    pub eis: Vec<ExecutionInterval>,
}

impl ComplexExecutionInterval {
    pub fn new(id: CeiId, profile: ProfileId, eis: Vec<ExecutionInterval>) -> Result<Self> {
        if eis.is_empty() {
            return Err(Error::EmptyCei);
        }
        Ok(ComplexExecutionInterval { id, profile, eis })
    }

    /// Number of execution intervals |eta|.
    pub fn size(&self) -> u32 {
        self.eis.len() as u32
    }

    /// The chronon at which the CEI becomes known: the earliest start of its
    /// intervals.
    pub fn arrival(&self) -> Chronon {
        self.eis
            .iter()
            .map(|ei| ei.start)
            .min()
            .expect("CEI holds at least one interval")
    }

    /// Sum of interval widths, the per-CEI term of the competitive bound.
    pub fn total_width(&self) -> u64 {
        self.eis.iter().map(|ei| u64::from(ei.width())).sum()
    }
}

/// One client's collection of CEIs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub id: ProfileId,
    pub ceis: Vec<ComplexExecutionInterval>,
}

impl Profile {
    /// Maximal CEI size in the profile; 0 for a profile with no CEIs.
    pub fn rank(&self) -> u32 {
        self.ceis.iter().map(|c| c.size()).max().unwrap_or(0)
    }

    /// Number of CEIs |p|.
    pub fn size(&self) -> u32 {
        self.ceis.len() as u32
    }
}

/// All profiles managed by the proxy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileSet {
    pub profiles: Vec<Profile>,
}

impl ProfileSet {
    pub fn new(profiles: Vec<Profile>) -> Self {
        ProfileSet { profiles }
    }

    pub fn rank(&self) -> u32 {
        self.profiles.iter().map(|p| p.rank()).max().unwrap_or(0)
    }

    /// True iff every interval of every CEI spans exactly one chronon.
    pub fn is_width_one(&self) -> bool {
        self.iter_eis().all(|ei| ei.width() == 1)
    }

    pub fn total_ceis(&self) -> u64 {
        self.profiles.iter().map(|p| u64::from(p.size())).sum()
    }

    pub fn total_eis(&self) -> u64 {
        self.iter_eis().count() as u64
    }

    pub fn iter_ceis(&self) -> impl Iterator<Item = &ComplexExecutionInterval> {
        self.profiles.iter().flat_map(|p| p.ceis.iter())
    }

    pub fn iter_eis(&self) -> impl Iterator<Item = &ExecutionInterval> {
        self.iter_ceis().flat_map(|c| c.eis.iter())
    }

    /// Checks that every interval lies within the epoch.
    pub fn validate_within(&self, epoch: Epoch) -> Result<()> {
        for ei in self.iter_eis() {
            if !epoch.contains(ei.start) || !epoch.contains(ei.finish) {
                return Err(Error::IntervalOutsideEpoch {
                    start: ei.start,
                    finish: ei.finish,
                    chronons: epoch.chronons(),
                });
            }
        }
        Ok(())
    }
}

/// Per-chronon probe allowance C_1..C_K.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetVector {
    per_chronon: Vec<u32>,
}

impl BudgetVector {
    pub fn new(per_chronon: Vec<u32>) -> Self {
        BudgetVector { per_chronon }
    }

    /// The common case: the same allowance at every chronon.
    pub fn uniform(budget: u32, epoch: Epoch) -> Self {
        BudgetVector {
            per_chronon: vec![budget; epoch.chronons() as usize],
        }
    }

    pub fn len(&self) -> usize {
        self.per_chronon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_chronon.is_empty()
    }

    /// Allowance at chronon t (1-based).
    pub fn at(&self, t: Chronon) -> u32 {
        self.per_chronon[(t - 1) as usize]
    }
}

/// A sparse probe schedule: the set of (resource, chronon) pairs probed.
/// Equivalent to the dense 0/1 matrix over resources x chronons.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    probes: BTreeSet<(ResourceId, Chronon)>,
}

impl Schedule {
    pub fn new() -> Self {
        Schedule::default()
    }

    /// Records a probe. Duplicate probes of the same (resource, chronon) are
    /// idempotent and count once against the budget.
    pub fn add_probe(&mut self, resource: ResourceId, t: Chronon) {
        self.probes.insert((resource, t));
    }

    pub fn contains(&self, resource: ResourceId, t: Chronon) -> bool {
        self.probes.contains(&(resource, t))
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    /// Probes in (resource, chronon) order.
    pub fn iter(&self) -> impl Iterator<Item = (ResourceId, Chronon)> + '_ {
        self.probes.iter().copied()
    }

    /// Number of probes issued at chronon t.
    pub fn probes_at(&self, t: Chronon) -> usize {
        self.probes.iter().filter(|&&(_, tj)| tj == t).count()
    }

    /// True iff some chronon within the interval's window probes its resource.
    pub fn captures_ei(&self, ei: &ExecutionInterval) -> bool {
        self.probes
            .range((ei.resource, ei.start)..=(ei.resource, ei.finish))
            .next()
            .is_some()
    }

    /// True iff every interval of the CEI is captured (product semantics).
    pub fn captures_cei(&self, cei: &ComplexExecutionInterval) -> bool {
        cei.eis.iter().all(|ei| self.captures_ei(ei))
    }

    /// True iff per-chronon probe counts never exceed the budget.
    pub fn is_feasible(&self, budget: &BudgetVector) -> bool {
        let mut counts = vec![0u32; budget.len()];
        for &(_, t) in &self.probes {
            let idx = (t as usize).wrapping_sub(1);
            if idx >= counts.len() {
                return false;
            }
            counts[idx] += 1;
        }
        counts
            .iter()
            .zip(1..)
            .all(|(&c, t)| c <= budget.at(t as Chronon))
    }
}

/// Fraction of CEIs fully captured by the schedule.
///
/// Errors with [`Error::UndefinedMetric`] when the profile set holds no CEIs.
pub fn gained_completeness(profiles: &ProfileSet, schedule: &Schedule) -> Result<f64> {
    let total = profiles.total_ceis();
    if total == 0 {
        return Err(Error::UndefinedMetric);
    }
    let captured = profiles
        .iter_ceis()
        .filter(|cei| schedule.captures_cei(cei))
        .count() as u64;
    Ok(captured as f64 / total as f64)
}
