//! Online scoring policies and per-chronon probe selection.
//!
//! Four policies are provided: single-interval earliest deadline first
//! (`s-edf`), minimal residual stub first (`mrsf`), the summed-deadline
//! multi-interval variant (`m-edf`), and the uniform-urgency `wic` baseline.
//! Each runs preemptively or non-preemptively; non-preemptive selection gives
//! candidates of already-probed CEIs a strictly higher priority tier.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CeiId, Chronon, EiId, ExecutionInterval, ProfileSet, ResourceId};

/// Which scoring function drives selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    Sedf,
    Mrsf,
    Medf,
    Wic,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [
        ScoreKind::Sedf,
        ScoreKind::Mrsf,
        ScoreKind::Medf,
        ScoreKind::Wic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScoreKind::Sedf => "s-edf",
            ScoreKind::Mrsf => "mrsf",
            ScoreKind::Medf => "m-edf",
            ScoreKind::Wic => "wic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preemption {
    Preemptive,
    NonPreemptive,
}

impl Preemption {
    pub fn suffix(&self) -> &'static str {
        match self {
            Preemption::Preemptive => "p",
            Preemption::NonPreemptive => "np",
        }
    }
}

/// How M-EDF scores a sibling that has not become active yet. The default
/// charges the sibling's full window length; the alternative evaluates the
/// deadline term at T=0, which differs whenever the sibling starts after
/// chronon 1. Kept switchable for sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InactiveRule {
    #[default]
    FullLength,
    LiteralTZero,
}

/// A policy choice: scoring kind plus preemption mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicyKind {
    pub score: ScoreKind,
    pub preemption: Preemption,
    pub medf_inactive: InactiveRule,
}

impl PolicyKind {
    pub fn new(score: ScoreKind, preemption: Preemption) -> Self {
        PolicyKind {
            score,
            preemption,
            medf_inactive: InactiveRule::default(),
        }
    }

    /// All eight policy variants in a fixed reporting order.
    pub fn all_variants() -> Vec<PolicyKind> {
        let mut out = Vec::new();
        for score in ScoreKind::ALL {
            for pre in [Preemption::Preemptive, Preemption::NonPreemptive] {
                out.push(PolicyKind::new(score, pre));
            }
        }
        out
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.score.name(), self.preemption.suffix())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    /// Parses `s-edf`, `mrsf`, `m-edf`, `wic`, with an optional `-p` / `-np`
    /// suffix (bare names default to preemptive).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (kind_str, pre) = if let Some(rest) = lower.strip_suffix("-np") {
            (rest.to_string(), Preemption::NonPreemptive)
        } else if let Some(rest) = lower.strip_suffix("-p") {
            (rest.to_string(), Preemption::Preemptive)
        } else {
            (lower.clone(), Preemption::Preemptive)
        };
        let score = match kind_str.as_str() {
            "s-edf" | "sedf" => ScoreKind::Sedf,
            "mrsf" => ScoreKind::Mrsf,
            "m-edf" | "medf" => ScoreKind::Medf,
            "wic" => ScoreKind::Wic,
            _ => return Err(Error::InvalidConfig(format!("unknown policy '{s}'"))),
        };
        Ok(PolicyKind::new(score, pre))
    }
}

struct CeiRec {
    id: CeiId,
    arrival: Chronon,
    members: Vec<u32>,
    profile_rank: u32,
}

/// Capture bookkeeping over a fixed profile set: per-EI captured flags plus
/// derived per-CEI state (probed, failed, complete). Built once per run and
/// mutated only by the simulation loop between policy calls.
pub struct CaptureState {
    eis: Vec<ExecutionInterval>,
    ei_parent: Vec<u32>,
    ei_index: HashMap<EiId, u32>,
    ceis: Vec<CeiRec>,
    captured: Vec<bool>,
    captured_count: Vec<u32>,
    failed: Vec<bool>,
    failed_at: Vec<Chronon>,
}

impl CaptureState {
    pub fn new(profiles: &ProfileSet) -> Result<Self> {
        let mut state = CaptureState {
            eis: Vec::new(),
            ei_parent: Vec::new(),
            ei_index: HashMap::new(),
            ceis: Vec::new(),
            captured: Vec::new(),
            captured_count: Vec::new(),
            failed: Vec::new(),
            failed_at: Vec::new(),
        };
        let mut cei_ids = BTreeSet::new();
        for profile in &profiles.profiles {
            let rank = profile.rank();
            for cei in &profile.ceis {
                if !cei_ids.insert(cei.id) {
                    return Err(Error::DuplicateId(format!("CEI {}", cei.id)));
                }
                let cei_idx = state.ceis.len() as u32;
                let mut members = Vec::with_capacity(cei.eis.len());
                for ei in &cei.eis {
                    let ei_idx = state.eis.len() as u32;
                    if state.ei_index.insert(ei.id, ei_idx).is_some() {
                        return Err(Error::DuplicateId(format!("EI {}", ei.id)));
                    }
                    state.eis.push(*ei);
                    state.ei_parent.push(cei_idx);
                    members.push(ei_idx);
                }
                state.ceis.push(CeiRec {
                    id: cei.id,
                    arrival: cei.arrival(),
                    members,
                    profile_rank: rank,
                });
            }
        }
        state.captured = vec![false; state.eis.len()];
        state.failed = vec![false; state.ceis.len()];
        state.failed_at = vec![0; state.ceis.len()];
        state.captured_count = vec![0; state.ceis.len()];
        Ok(state)
    }

    pub fn ei_count(&self) -> usize {
        self.eis.len()
    }

    pub fn cei_count(&self) -> usize {
        self.ceis.len()
    }

    fn ei_idx(&self, id: EiId) -> Result<u32> {
        self.ei_index.get(&id).copied().ok_or(Error::UnknownEi(id))
    }

    pub fn parent_of(&self, id: EiId) -> Option<CeiId> {
        let idx = *self.ei_index.get(&id)?;
        Some(self.ceis[self.ei_parent[idx as usize] as usize].id)
    }

    pub fn is_captured(&self, id: EiId) -> bool {
        self.ei_index
            .get(&id)
            .map(|&i| self.captured[i as usize])
            .unwrap_or(false)
    }

    pub fn mark_captured(&mut self, id: EiId) {
        let idx = self.ei_idx(id).expect("marking an unknown EI") as usize;
        self.mark_captured_idx(idx);
    }

    pub(crate) fn mark_captured_idx(&mut self, idx: usize) {
        if !self.captured[idx] {
            self.captured[idx] = true;
            self.captured_count[self.ei_parent[idx] as usize] += 1;
        }
    }

    pub fn mark_failed(&mut self, id: CeiId, at: Chronon) {
        let idx = self
            .ceis
            .iter()
            .position(|c| c.id == id)
            .expect("marking an unknown CEI");
        self.mark_failed_idx(idx, at);
    }

    pub(crate) fn mark_failed_idx(&mut self, idx: usize, at: Chronon) {
        debug_assert!(
            self.captured_count[idx] < self.ceis[idx].members.len() as u32,
            "a fully captured CEI cannot fail"
        );
        if !self.failed[idx] {
            self.failed[idx] = true;
            self.failed_at[idx] = at;
        }
    }

    fn cei_state(&self, id: CeiId) -> Option<usize> {
        self.ceis.iter().position(|c| c.id == id)
    }

    /// A CEI is "probed" once at least one of its intervals is captured.
    pub fn is_cei_probed(&self, id: CeiId) -> bool {
        self.cei_state(id)
            .map(|i| self.captured_count[i] > 0)
            .unwrap_or(false)
    }

    pub fn is_cei_failed(&self, id: CeiId) -> bool {
        self.cei_state(id).map(|i| self.failed[i]).unwrap_or(false)
    }

    pub fn is_cei_complete(&self, id: CeiId) -> bool {
        self.cei_state(id)
            .map(|i| self.captured_count[i] == self.ceis[i].members.len() as u32)
            .unwrap_or(false)
    }

    // Dense accessors used by the simulation loop and metrics.
    pub(crate) fn cei_id_idx(&self, cei_idx: usize) -> CeiId {
        self.ceis[cei_idx].id
    }

    pub(crate) fn eis_dense(&self) -> &[ExecutionInterval] {
        &self.eis
    }

    pub(crate) fn parent_idx(&self, ei_idx: usize) -> usize {
        self.ei_parent[ei_idx] as usize
    }

    pub(crate) fn members_idx(&self, cei_idx: usize) -> &[u32] {
        &self.ceis[cei_idx].members
    }

    pub(crate) fn cei_arrival_idx(&self, cei_idx: usize) -> Chronon {
        self.ceis[cei_idx].arrival
    }

    pub(crate) fn is_captured_idx(&self, ei_idx: usize) -> bool {
        self.captured[ei_idx]
    }

    pub(crate) fn is_failed_idx(&self, cei_idx: usize) -> bool {
        self.failed[cei_idx]
    }

    pub(crate) fn failed_at_idx(&self, cei_idx: usize) -> Chronon {
        self.failed_at[cei_idx]
    }

    pub(crate) fn is_complete_idx(&self, cei_idx: usize) -> bool {
        self.captured_count[cei_idx] == self.ceis[cei_idx].members.len() as u32
    }

}

/// Remaining chronons until the interval's deadline: finish - t + 1.
/// Lower is more urgent. Errors once the deadline has passed.
pub fn sedf_score(ei: &ExecutionInterval, t: Chronon) -> Result<u32> {
    if t > ei.finish {
        return Err(Error::ScoredAfterDeadline(ei.id));
    }
    Ok(ei.finish - t + 1)
}

/// Profile rank minus the number of already-captured intervals in the
/// parent CEI. Lower is preferred.
pub fn mrsf_score(ei: &ExecutionInterval, state: &CaptureState) -> Result<u32> {
    let idx = state.ei_idx(ei.id)? as usize;
    let cei = &state.ceis[state.ei_parent[idx] as usize];
    Ok(cei.profile_rank - state.captured_count[state.ei_parent[idx] as usize])
}

/// Sum of deadline terms over the parent CEI's uncaptured intervals: active
/// siblings contribute their remaining chronons, not-yet-active siblings
/// contribute per `rule`, captured siblings contribute nothing. Lower is
/// preferred.
pub fn medf_score(
    ei: &ExecutionInterval,
    t: Chronon,
    state: &CaptureState,
    rule: InactiveRule,
) -> Result<u64> {
    let idx = state.ei_idx(ei.id)? as usize;
    let cei_idx = state.ei_parent[idx] as usize;
    let mut sum = 0u64;
    for &m in &state.ceis[cei_idx].members {
        if state.captured[m as usize] {
            continue;
        }
        let sib = &state.eis[m as usize];
        let term = if t < sib.start {
            match rule {
                InactiveRule::FullLength => u64::from(sib.width()),
                InactiveRule::LiteralTZero => u64::from(sedf_score(sib, 0)?),
            }
        } else {
            u64::from(sedf_score(sib, t)?)
        };
        sum += term;
    }
    Ok(sum)
}

/// Accumulated uniform-urgency utility of a resource: the number of live,
/// uncaptured intervals on it whose window contains `t` and whose parent CEI
/// has not failed. Higher is preferred. Window/overwrite life semantics are
/// already encoded in the interval bounds.
pub fn wic_utility(resource: ResourceId, t: Chronon, state: &CaptureState) -> u32 {
    (0..state.eis.len())
        .filter(|&i| {
            let ei = &state.eis[i];
            ei.resource == resource
                && !state.captured[i]
                && ei.is_active_at(t)
                && !state.failed[state.ei_parent[i] as usize]
        })
        .count() as u32
}

struct Candidate {
    score: u64,
    arrival: Chronon,
    cei: CeiId,
    resource: ResourceId,
    probed_parent: bool,
}

impl Candidate {
    /// Selection key. Lower score wins; ties break on earlier parent
    /// arrival, then smaller CEI id, then smaller resource index.
    /// WIC scores are negated upstream so the same minimum applies.
    fn key(&self) -> (u64, Chronon, u32, u32) {
        (self.score, self.arrival, self.cei.0, self.resource.0)
    }
}

/// Chooses up to `budget` distinct resources to probe at chronon `t`.
///
/// Every candidate must be active at `t`, uncaptured, and have a live parent
/// CEI. In non-preemptive mode, candidates whose parent has already been
/// probed form a strictly higher-priority tier. WIC candidates are scored by
/// the accumulated utility of their resource over the candidate pool, which
/// equals [`wic_utility`] when the pool is the full candidate set. Selecting
/// a candidate probes its resource, and the whole pool is purged of that
/// resource before the next pick.
pub fn select_probes(
    candidates: &[ExecutionInterval],
    t: Chronon,
    budget: u32,
    policy: &PolicyKind,
    state: &CaptureState,
) -> Result<BTreeSet<ResourceId>> {
    let mut selected = BTreeSet::new();
    if budget == 0 || candidates.is_empty() {
        return Ok(selected);
    }

    let mut resource_load: HashMap<ResourceId, u32> = HashMap::new();
    if policy.score == ScoreKind::Wic {
        for c in candidates {
            *resource_load.entry(c.resource).or_insert(0) += 1;
        }
    }

    let mut pool = Vec::with_capacity(candidates.len());
    for ei in candidates {
        let idx = state.ei_idx(ei.id)? as usize;
        let cei_idx = state.ei_parent[idx] as usize;
        debug_assert!(ei.is_active_at(t), "candidate not active at t");
        debug_assert!(!state.captured[idx], "candidate already captured");
        debug_assert!(!state.failed[cei_idx], "candidate of a failed CEI");
        let score = match policy.score {
            ScoreKind::Sedf => u64::from(sedf_score(ei, t)?),
            ScoreKind::Mrsf => u64::from(mrsf_score(ei, state)?),
            ScoreKind::Medf => medf_score(ei, t, state, policy.medf_inactive)?,
            // Negate so that the shared minimum-key pick prefers the largest.
            ScoreKind::Wic => u64::MAX - u64::from(resource_load[&ei.resource]),
        };
        pool.push(Candidate {
            score,
            arrival: state.ceis[cei_idx].arrival,
            cei: state.ceis[cei_idx].id,
            resource: ei.resource,
            probed_parent: state.captured_count[cei_idx] > 0,
        });
    }

    let tiers: &[&[bool]] = match policy.preemption {
        Preemption::NonPreemptive => &[&[true], &[false]],
        Preemption::Preemptive => &[&[true, false]],
    };
    for tier in tiers {
        loop {
            if selected.len() as u32 == budget {
                return Ok(selected);
            }
            let best = pool
                .iter()
                .filter(|c| tier.contains(&c.probed_parent))
                .min_by_key(|c| c.key());
            let Some(best) = best else { break };
            let resource = best.resource;
            selected.insert(resource);
            pool.retain(|c| c.resource != resource);
        }
    }
    Ok(selected)
}

/// The maximum over all CEIs of the summed widths of their intervals.
pub fn competitive_bound_l(profiles: &ProfileSet) -> Result<u64> {
    profiles
        .iter_ceis()
        .map(|cei| cei.total_width())
        .max()
        .ok_or(Error::EmptyProfileSet)
}
