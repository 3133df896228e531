//! Exact offline optimum for small instances: depth-first search over
//! per-chronon probe subsets with an admissible doomed-CEI bound. Stands in
//! as the verification baseline where online policies need an optimum to be
//! measured against.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{
    BudgetVector, Chronon, Epoch, ExecutionInterval, ProfileSet, ResourceId, Schedule,
};
use crate::policy::PolicyKind;
use crate::sim::{run, SimConfig};

/// Guard against search spaces the exact solver should not attempt.
#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    /// Ceiling on log10 of the estimated node count (default 7: ten million).
    pub max_log10_nodes: f64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_log10_nodes: 7.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub gc: f64,
    pub captured_ceis: u64,
    pub schedule: Schedule,
}

/// Maximum gained completeness over all feasible schedules, with one witness
/// schedule attaining it.
pub fn optimal_gc(
    profiles: &ProfileSet,
    budget: &BudgetVector,
    epoch: Epoch,
    limits: &OracleLimits,
) -> Result<OracleSolution> {
    if budget.len() != epoch.chronons() as usize {
        return Err(Error::BudgetLengthMismatch {
            got: budget.len(),
            expected: epoch.chronons() as usize,
        });
    }
    profiles.validate_within(epoch)?;
    if profiles.total_ceis() == 0 {
        return Err(Error::EmptyProfileSet);
    }

    let mut search = Search::build(profiles, budget, epoch);
    search.check_size(limits)?;
    search.dfs(1);

    let captured = u64::try_from(search.best_captured.max(0)).expect("non-negative");
    let mut schedule = Schedule::new();
    for &(r, t) in &search.best_schedule {
        schedule.add_probe(r, t);
    }
    Ok(OracleSolution {
        gc: captured as f64 / search.total_ceis as f64,
        captured_ceis: captured,
        schedule,
    })
}

/// Ratio of the policy's captured CEIs to the optimum's (1.0 when the
/// optimum captures nothing).
pub fn policy_gap(
    profiles: &ProfileSet,
    budget: &BudgetVector,
    epoch: Epoch,
    policy: PolicyKind,
    limits: &OracleLimits,
) -> Result<f64> {
    let best = optimal_gc(profiles, budget, epoch, limits)?;
    let config = SimConfig::new(epoch, budget.clone(), policy);
    let outcome = run(&config, profiles)?;
    if best.captured_ceis == 0 {
        return Ok(1.0);
    }
    Ok(outcome.metrics.captured_ceis as f64 / best.captured_ceis as f64)
}

struct Search<'a> {
    eis: Vec<ExecutionInterval>,
    parent: Vec<usize>,
    members: Vec<Vec<usize>>,
    by_resource: Vec<Vec<usize>>,
    k: u32,
    budget: &'a BudgetVector,
    total_ceis: u64,
    captured: Vec<bool>,
    remaining: Vec<u32>,
    current: Vec<(ResourceId, Chronon)>,
    best_captured: i64,
    best_schedule: Vec<(ResourceId, Chronon)>,
}

impl<'a> Search<'a> {
    fn build(profiles: &ProfileSet, budget: &'a BudgetVector, epoch: Epoch) -> Self {
        let mut eis = Vec::new();
        let mut parent = Vec::new();
        let mut members = Vec::new();
        for cei in profiles.iter_ceis() {
            let cei_idx = members.len();
            let mut m = Vec::with_capacity(cei.eis.len());
            for ei in &cei.eis {
                m.push(eis.len());
                parent.push(cei_idx);
                eis.push(*ei);
            }
            members.push(m);
        }
        let max_resource = eis.iter().map(|e| e.resource.0).max().unwrap_or(0) as usize;
        let mut by_resource = vec![Vec::new(); max_resource + 1];
        for (i, ei) in eis.iter().enumerate() {
            by_resource[ei.resource.0 as usize].push(i);
        }
        let remaining = members.iter().map(|m| m.len() as u32).collect();
        Search {
            captured: vec![false; eis.len()],
            remaining,
            total_ceis: members.len() as u64,
            eis,
            parent,
            members,
            by_resource,
            k: epoch.chronons(),
            budget,
            current: Vec::new(),
            best_captured: -1,
            best_schedule: Vec::new(),
        }
    }

    /// Product over chronons of the subset counts the search may branch on.
    fn check_size(&self, limits: &OracleLimits) -> Result<()> {
        let mut log10 = 0.0f64;
        for t in 1..=self.k {
            let active: BTreeSet<ResourceId> = self
                .eis
                .iter()
                .filter(|e| e.is_active_at(t))
                .map(|e| e.resource)
                .collect();
            let a = active.len() as u64;
            let c = u64::from(self.budget.at(t)).min(a);
            let mut branches = 0.0f64;
            let mut choose = 1.0f64;
            for i in 0..=c {
                if i > 0 {
                    choose = choose * (a - i + 1) as f64 / i as f64;
                }
                branches += choose;
            }
            log10 += branches.log10();
            if log10 > limits.max_log10_nodes {
                return Err(Error::OracleTooLarge {
                    estimate: log10,
                    ceiling: limits.max_log10_nodes,
                });
            }
        }
        Ok(())
    }

    fn captured_ceis(&self) -> i64 {
        self.remaining.iter().filter(|&&r| r == 0).count() as i64
    }

    /// CEIs that can no longer complete: an uncaptured member's window has
    /// already closed.
    fn doomed_ceis(&self, t: Chronon) -> i64 {
        (0..self.members.len())
            .filter(|&c| {
                self.remaining[c] > 0
                    && self.members[c]
                        .iter()
                        .any(|&e| !self.captured[e] && self.eis[e].finish < t)
            })
            .count() as i64
    }

    fn dfs(&mut self, t: Chronon) {
        if t > self.k {
            let captured = self.captured_ceis();
            if captured > self.best_captured {
                self.best_captured = captured;
                self.best_schedule = self.current.clone();
            }
            return;
        }

        // Admissible bound: everything not yet provably doomed might still
        // be captured.
        let bound = self.total_ceis as i64 - self.doomed_ceis(t);
        if bound <= self.best_captured {
            return;
        }

        // Resources worth probing now: they carry an uncaptured interval of
        // a still-capturable CEI whose window contains t.
        let mut relevant: Vec<ResourceId> = Vec::new();
        for (r, eis) in self.by_resource.iter().enumerate().skip(1) {
            let useful = eis.iter().any(|&e| {
                !self.captured[e]
                    && self.eis[e].is_active_at(t)
                    && !self.cei_is_doomed(self.parent[e], t)
            });
            if useful {
                relevant.push(ResourceId(r as u32));
            }
        }
        let picks = (self.budget.at(t) as usize).min(relevant.len());
        if picks == 0 {
            self.dfs(t + 1);
            return;
        }
        let mut chosen = Vec::with_capacity(picks);
        self.choose_subsets(&relevant, 0, picks, &mut chosen, t);
    }

    fn cei_is_doomed(&self, cei: usize, t: Chronon) -> bool {
        self.remaining[cei] > 0
            && self.members[cei]
                .iter()
                .any(|&e| !self.captured[e] && self.eis[e].finish < t)
    }

    fn choose_subsets(
        &mut self,
        relevant: &[ResourceId],
        from: usize,
        picks: usize,
        chosen: &mut Vec<ResourceId>,
        t: Chronon,
    ) {
        if picks == 0 {
            self.probe_and_recurse(chosen.clone(), t);
            return;
        }
        if relevant.len() - from < picks {
            return;
        }
        chosen.push(relevant[from]);
        self.choose_subsets(relevant, from + 1, picks - 1, chosen, t);
        chosen.pop();
        self.choose_subsets(relevant, from + 1, picks, chosen, t);
    }

    fn probe_and_recurse(&mut self, subset: Vec<ResourceId>, t: Chronon) {
        let mut newly_captured = Vec::new();
        for &r in &subset {
            self.current.push((r, t));
            for &e in &self.by_resource[r.0 as usize] {
                if !self.captured[e] && self.eis[e].is_active_at(t) {
                    self.captured[e] = true;
                    self.remaining[self.parent[e]] -= 1;
                    newly_captured.push(e);
                }
            }
        }
        self.dfs(t + 1);
        for e in newly_captured {
            self.captured[e] = false;
            self.remaining[self.parent[e]] += 1;
        }
        for _ in &subset {
            self.current.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gained_completeness, CeiId, ComplexExecutionInterval, EiId, Profile, ProfileId};
    use crate::policy::{Preemption, ScoreKind};
    use crate::workload::{gen_tiny, TinyParams, TinyShape};

    fn ei(id: u32, r: u32, s: u32, f: u32) -> ExecutionInterval {
        ExecutionInterval::new(EiId(id), ResourceId(r), s, f).unwrap()
    }

    fn instance(ceis: Vec<Vec<ExecutionInterval>>) -> ProfileSet {
        let ceis = ceis
            .into_iter()
            .enumerate()
            .map(|(i, eis)| {
                ComplexExecutionInterval::new(CeiId(i as u32), ProfileId(0), eis).unwrap()
            })
            .collect();
        ProfileSet::new(vec![Profile {
            id: ProfileId(0),
            ceis,
        }])
    }

    /// Unpruned enumeration of every feasible schedule, as an independent
    /// check on the pruned search. Considers all probe subsets of size at
    /// most C_t at every chronon, over all resources the instance mentions.
    fn exhaustive_best(profiles: &ProfileSet, budget: &BudgetVector, epoch: Epoch) -> f64 {
        let resources: Vec<ResourceId> = {
            let set: BTreeSet<ResourceId> = profiles.iter_eis().map(|e| e.resource).collect();
            set.into_iter().collect()
        };
        fn recurse(
            t: Chronon,
            k: u32,
            resources: &[ResourceId],
            budget: &BudgetVector,
            schedule: &mut Schedule,
            profiles: &ProfileSet,
            best: &mut f64,
        ) {
            if t > k {
                let gc = gained_completeness(profiles, schedule).unwrap();
                if gc > *best {
                    *best = gc;
                }
                return;
            }
            let c = budget.at(t) as usize;
            let m = resources.len();
            for mask in 0..(1u32 << m) {
                if (mask.count_ones() as usize) > c {
                    continue;
                }
                let picked: Vec<ResourceId> = (0..m)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| resources[i])
                    .collect();
                let mut next = schedule.clone();
                for &r in &picked {
                    next.add_probe(r, t);
                }
                recurse(t + 1, k, resources, budget, &mut next, profiles, best);
            }
        }
        let mut best = 0.0;
        let mut schedule = Schedule::new();
        recurse(
            1,
            epoch.chronons(),
            &resources,
            budget,
            &mut schedule,
            profiles,
            &mut best,
        );
        best
    }

    #[test]
    fn trivial_single_interval() {
        let ps = instance(vec![vec![ei(0, 1, 2, 3)]]);
        let epoch = Epoch::new(4).unwrap();
        let budget = BudgetVector::uniform(1, epoch);
        let sol = optimal_gc(&ps, &budget, epoch, &OracleLimits::default()).unwrap();
        assert_eq!(sol.gc, 1.0);
        assert!(gained_completeness(&ps, &sol.schedule).unwrap() == 1.0);
    }

    #[test]
    fn pigeonhole_congestion() {
        let ps = instance(vec![vec![ei(0, 1, 2, 2)], vec![ei(1, 2, 2, 2)]]);
        let epoch = Epoch::new(3).unwrap();
        let budget = BudgetVector::uniform(1, epoch);
        let sol = optimal_gc(&ps, &budget, epoch, &OracleLimits::default()).unwrap();
        assert_eq!(sol.gc, 0.5);
    }

    #[test]
    fn pruned_matches_exhaustive_on_random_instances() {
        let epoch = Epoch::new(5).unwrap();
        let budget = BudgetVector::uniform(1, epoch);
        for seed in 0..40 {
            let ps = gen_tiny(
                &TinyParams {
                    resources: 3,
                    chronons: 5,
                    ceis: 4,
                    profiles: 2,
                    shape: TinyShape::General {
                        max_rank: 2,
                        max_width: 3,
                    },
                },
                seed,
            )
            .unwrap();
            let sol = optimal_gc(&ps, &budget, epoch, &OracleLimits::default()).unwrap();
            let brute = exhaustive_best(&ps, &budget, epoch);
            assert_eq!(sol.gc, brute, "seed {seed}");
            assert!(sol.schedule.is_feasible(&budget));
            assert_eq!(gained_completeness(&ps, &sol.schedule).unwrap(), sol.gc);
        }
    }

    #[test]
    fn oracle_dominates_every_policy() {
        let epoch = Epoch::new(6).unwrap();
        let budget = BudgetVector::uniform(1, epoch);
        for seed in 100..130 {
            let ps = gen_tiny(
                &TinyParams {
                    resources: 3,
                    chronons: 6,
                    ceis: 4,
                    profiles: 2,
                    shape: TinyShape::General {
                        max_rank: 2,
                        max_width: 3,
                    },
                },
                seed,
            )
            .unwrap();
            for policy in PolicyKind::all_variants() {
                let gap = policy_gap(&ps, &budget, epoch, policy, &OracleLimits::default())
                    .unwrap();
                assert!((0.0..=1.0).contains(&gap), "gap {gap} seed {seed}");
            }
        }
    }

    #[test]
    fn earliest_deadline_is_optimal_on_rank_one_no_overlap() {
        let epoch = Epoch::new(8).unwrap();
        let budget = BudgetVector::uniform(1, epoch);
        let sedf = PolicyKind::new(ScoreKind::Sedf, Preemption::Preemptive);
        for seed in 0..20 {
            let ps = gen_tiny(
                &TinyParams {
                    resources: 4,
                    chronons: 8,
                    ceis: 6,
                    profiles: 3,
                    shape: TinyShape::Rank1NoOverlap,
                },
                seed,
            )
            .unwrap();
            let gap = policy_gap(&ps, &budget, epoch, sedf, &OracleLimits::default()).unwrap();
            assert_eq!(gap, 1.0, "seed {seed}");
        }
    }

    #[test]
    fn size_guard_rejects_large_instances() {
        let ps = gen_tiny(
            &TinyParams {
                resources: 30,
                chronons: 40,
                ceis: 60,
                profiles: 5,
                shape: TinyShape::General {
                    max_rank: 3,
                    max_width: 10,
                },
            },
            7,
        )
        .unwrap();
        let epoch = Epoch::new(40).unwrap();
        let budget = BudgetVector::uniform(3, epoch);
        assert!(matches!(
            optimal_gc(&ps, &budget, epoch, &OracleLimits::default()),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn zero_optimum_defines_unit_gap() {
        // Two same-chronon intervals in one CEI on different resources,
        // budget 1: nothing can capture the CEI.
        let ps = instance(vec![vec![ei(0, 1, 1, 1), ei(1, 2, 1, 1)]]);
        let epoch = Epoch::new(2).unwrap();
        let budget = BudgetVector::uniform(1, epoch);
        let sol = optimal_gc(&ps, &budget, epoch, &OracleLimits::default()).unwrap();
        assert_eq!(sol.gc, 0.0);
        let gap = policy_gap(
            &ps,
            &budget,
            epoch,
            PolicyKind::new(ScoreKind::Mrsf, Preemption::Preemptive),
            &OracleLimits::default(),
        )
        .unwrap();
        assert_eq!(gap, 1.0);
    }
}
