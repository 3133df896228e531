//! Reproducible experiment grids: parameter cells, per-cell seeding,
//! repeated runs, CSV emission, and oracle verification batches.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::schedule_to_string;
use crate::model::{BudgetVector, Epoch, ProfileSet};
use crate::oracle::{optimal_gc, OracleLimits};
use crate::policy::{PolicyKind, Preemption, ScoreKind};
use crate::sim::{relax_to_single_eis, run, RunOutput, SimConfig};
use crate::workload::{gen_tiny, generate_instance, LifeMode, TinyParams, WorkloadParams};

/// Pseudo-policy name under which the single-interval relaxation bound is
/// reported in sweep output.
pub const BOUND_POLICY: &str = "single-ei-bound";

pub const RAW_HEADER: &str = "policy,preemption,seed,K,n,m,C,lambda,rank,alpha,beta,W,gc,runtime_per_ei_ns,captured_ceis,failed_ceis";
pub const AGG_HEADER: &str = "policy,preemption,K,n,m,C,lambda,rank,alpha,beta,W,repeats,mean_gc,mean_runtime_per_ei_ns,mean_captured_ceis,mean_failed_ceis";
pub const ORACLE_HEADER: &str = "instance_id,optimal_gc,policy,policy_gc,gap";

/// One fully specified experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub window: u32,
    pub resources: u32,
    pub profiles: u32,
    pub chronons: u32,
    pub budget: u32,
    pub intensity: f64,
    pub rank: u32,
    pub alpha: f64,
    pub beta: f64,
    pub life: LifeMode,
    pub distinct: bool,
    pub fixed_rank: bool,
}

impl CellParams {
    /// The controlled-parameter baseline: W=10, n=1000, m=100, K=1000, C=1,
    /// lambda=20, rank=3, alpha=beta=0, window life.
    pub fn table_baseline() -> Self {
        CellParams {
            window: 10,
            resources: 1000,
            profiles: 100,
            chronons: 1000,
            budget: 1,
            intensity: 20.0,
            rank: 3,
            alpha: 0.0,
            beta: 0.0,
            life: LifeMode::Window,
            distinct: false,
            fixed_rank: false,
        }
    }

    pub fn epoch(&self) -> Result<Epoch> {
        Epoch::new(self.chronons)
    }

    pub fn workload(&self) -> WorkloadParams {
        WorkloadParams {
            resources: self.resources,
            profiles: self.profiles,
            intensity: self.intensity,
            max_rank: self.rank,
            inter_zipf: self.alpha,
            intra_zipf: self.beta,
            window: self.window,
            life: self.life,
            distinct_resources: self.distinct,
            fixed_rank: self.fixed_rank,
        }
    }

    /// Canonical content key. Seeds derive from this rather than from cell
    /// positions, so extending a sweep with new axes leaves existing cells'
    /// streams untouched.
    pub fn canonical(&self) -> String {
        format!(
            "W={};n={};m={};K={};C={};lambda={};rank={};alpha={};beta={};life={};distinct={};fixed={}",
            self.window,
            self.resources,
            self.profiles,
            self.chronons,
            self.budget,
            self.intensity,
            self.rank,
            self.alpha,
            self.beta,
            self.life,
            self.distinct,
            self.fixed_rank,
        )
    }
}

/// Sweepable parameters and their controlled ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rank,
    Lambda,
    Alpha,
    Beta,
    Budget,
    Profiles,
    Window,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Rank => "rank",
            Axis::Lambda => "lambda",
            Axis::Alpha => "alpha",
            Axis::Beta => "beta",
            Axis::Budget => "C",
            Axis::Profiles => "m",
            Axis::Window => "W",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rank" => Ok(Axis::Rank),
            "lambda" => Ok(Axis::Lambda),
            "alpha" => Ok(Axis::Alpha),
            "beta" => Ok(Axis::Beta),
            "C" => Ok(Axis::Budget),
            "m" => Ok(Axis::Profiles),
            "W" => Ok(Axis::Window),
            other => Err(Error::InvalidConfig(format!("unknown sweep axis '{other}'"))),
        }
    }

    fn integral(&self) -> bool {
        !matches!(self, Axis::Lambda | Axis::Alpha | Axis::Beta)
    }

    fn range(&self) -> (f64, f64) {
        match self {
            Axis::Rank => (1.0, 5.0),
            Axis::Lambda => (10.0, 50.0),
            Axis::Alpha | Axis::Beta => (0.0, 2.0),
            Axis::Budget => (1.0, 5.0),
            Axis::Profiles => (100.0, 2500.0),
            Axis::Window => (0.0, 20.0),
        }
    }

    fn validate(&self, value: f64) -> Result<()> {
        let (lo, hi) = self.range();
        if value < lo || value > hi || (self.integral() && value.fract() != 0.0) {
            return Err(Error::InvalidConfig(format!(
                "axis {} value {value} outside its controlled range [{lo},{hi}]",
                self.name()
            )));
        }
        Ok(())
    }

    fn apply(&self, cell: &mut CellParams, value: f64) {
        match self {
            Axis::Rank => cell.rank = value as u32,
            Axis::Lambda => cell.intensity = value,
            Axis::Alpha => cell.alpha = value,
            Axis::Beta => cell.beta = value,
            Axis::Budget => cell.budget = value as u32,
            Axis::Profiles => cell.profiles = value as u32,
            Axis::Window => cell.window = value as u32,
        }
    }
}

/// A sweep: baseline parameters, axes to cross, policies to run, repeats,
/// and the root seed everything derives from.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub baseline: CellParams,
    pub axes: Vec<(Axis, Vec<f64>)>,
    pub policies: Vec<PolicyKind>,
    pub repeats: u32,
    pub root_seed: u64,
    /// Also report the single-interval relaxation bound per instance.
    pub include_bound: bool,
    /// Run cells concurrently. Keep off when measuring runtimes.
    pub parallel: bool,
}

impl SweepSpec {
    pub fn new(baseline: CellParams) -> Self {
        SweepSpec {
            baseline,
            axes: Vec::new(),
            policies: PolicyKind::all_variants(),
            repeats: 10,
            root_seed: 1,
            include_bound: false,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidConfig("no policies selected".into()));
        }
        for (axis, values) in &self.axes {
            if values.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "axis {} has no values",
                    axis.name()
                )));
            }
            for &v in values {
                axis.validate(v)?;
            }
        }
        Ok(())
    }

    /// Cartesian product of the axes over the baseline, first axis slowest.
    pub fn cells(&self) -> Vec<CellParams> {
        let mut cells = vec![self.baseline.clone()];
        for (axis, values) in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for &v in values {
                    let mut c = cell.clone();
                    axis.apply(&mut c, v);
                    next.push(c);
                }
            }
            cells = next;
        }
        cells
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Content-keyed seed for one (cell, repeat) job.
pub fn cell_seed(root_seed: u64, cell: &CellParams, repeat: u32) -> u64 {
    fnv1a64(format!("{root_seed}|{}|{repeat}", cell.canonical()).as_bytes())
}

/// One run's record. `cell` indexes into [`SweepOutcome::cells`] and is not
/// emitted in the CSV.
#[derive(Debug, Clone)]
pub struct RawRow {
    pub cell: usize,
    pub repeat: u32,
    pub policy: String,
    pub preemption: String,
    pub seed: u64,
    pub gc: f64,
    pub runtime_per_ei_ns: f64,
    pub captured_ceis: u64,
    pub failed_ceis: u64,
    pub scheduling_ns: u128,
    pub total_eis: u64,
}

#[derive(Debug, Clone)]
pub struct AggRow {
    pub cell: usize,
    pub policy: String,
    pub preemption: String,
    pub repeats: u32,
    pub mean_gc: f64,
    pub mean_runtime_per_ei_ns: f64,
    pub mean_captured_ceis: f64,
    pub mean_failed_ceis: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cells: Vec<CellParams>,
    pub raw: Vec<RawRow>,
    pub agg: Vec<AggRow>,
    /// (cell index, repeat, message) for jobs that could not run.
    pub failures: Vec<(usize, u32, String)>,
}

impl SweepOutcome {
    pub fn raw_csv(&self) -> String {
        let mut s = String::from(RAW_HEADER);
        s.push('\n');
        for row in &self.raw {
            let c = &self.cells[row.cell];
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.1},{},{}\n",
                row.policy,
                row.preemption,
                row.seed,
                c.chronons,
                c.resources,
                c.profiles,
                c.budget,
                c.intensity,
                c.rank,
                c.alpha,
                c.beta,
                c.window,
                row.gc,
                row.runtime_per_ei_ns,
                row.captured_ceis,
                row.failed_ceis,
            ));
        }
        s
    }

    pub fn agg_csv(&self) -> String {
        let mut s = String::from(AGG_HEADER);
        s.push('\n');
        for row in &self.agg {
            let c = &self.cells[row.cell];
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.1},{},{}\n",
                row.policy,
                row.preemption,
                c.chronons,
                c.resources,
                c.profiles,
                c.budget,
                c.intensity,
                c.rank,
                c.alpha,
                c.beta,
                c.window,
                row.repeats,
                row.mean_gc,
                row.mean_runtime_per_ei_ns,
                row.mean_captured_ceis,
                row.mean_failed_ceis,
            ));
        }
        s
    }

    /// Mean GC for one (cell, policy) pair, from the aggregate rows.
    pub fn mean_gc(&self, cell: usize, policy: &str, preemption: &str) -> Option<f64> {
        self.agg
            .iter()
            .find(|a| a.cell == cell && a.policy == policy && a.preemption == preemption)
            .map(|a| a.mean_gc)
    }
}

/// Runs every (cell x repeat x policy), plus the relaxation bound when
/// requested. Raw rows appear in deterministic (cell, repeat, policy) order;
/// aggregates are arithmetic means over repeats.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, u32)> = (0..cells.len())
        .flat_map(|c| (0..spec.repeats).map(move |r| (c, r)))
        .collect();

    let run_job = |&(cell_idx, repeat): &(usize, u32)| -> (usize, u32, Result<Vec<RawRow>>) {
        let cell = &cells[cell_idx];
        (cell_idx, repeat, run_cell_once(spec, cell, cell_idx, repeat))
    };
    let results: Vec<(usize, u32, Result<Vec<RawRow>>)> = if spec.parallel {
        jobs.par_iter().map(run_job).collect()
    } else {
        jobs.iter().map(run_job).collect()
    };

    let mut raw = Vec::new();
    let mut failures = Vec::new();
    for (cell_idx, repeat, result) in results {
        match result {
            Ok(rows) => raw.extend(rows),
            Err(e) => failures.push((cell_idx, repeat, e.to_string())),
        }
    }

    let mut agg: Vec<AggRow> = Vec::new();
    for row in &raw {
        match agg.iter_mut().find(|a| {
            a.cell == row.cell && a.policy == row.policy && a.preemption == row.preemption
        }) {
            Some(a) => {
                a.repeats += 1;
                a.mean_gc += row.gc;
                a.mean_runtime_per_ei_ns += row.runtime_per_ei_ns;
                a.mean_captured_ceis += row.captured_ceis as f64;
                a.mean_failed_ceis += row.failed_ceis as f64;
            }
            None => agg.push(AggRow {
                cell: row.cell,
                policy: row.policy.clone(),
                preemption: row.preemption.clone(),
                repeats: 1,
                mean_gc: row.gc,
                mean_runtime_per_ei_ns: row.runtime_per_ei_ns,
                mean_captured_ceis: row.captured_ceis as f64,
                mean_failed_ceis: row.failed_ceis as f64,
            }),
        }
    }
    for a in agg.iter_mut() {
        let n = f64::from(a.repeats);
        a.mean_gc /= n;
        a.mean_runtime_per_ei_ns /= n;
        a.mean_captured_ceis /= n;
        a.mean_failed_ceis /= n;
    }

    Ok(SweepOutcome {
        cells,
        raw,
        agg,
        failures,
    })
}

fn run_cell_once(
    spec: &SweepSpec,
    cell: &CellParams,
    cell_idx: usize,
    repeat: u32,
) -> Result<Vec<RawRow>> {
    let seed = cell_seed(spec.root_seed, cell, repeat);
    let epoch = cell.epoch()?;
    let instance = generate_instance(&cell.workload(), epoch, seed)?;
    let budget = BudgetVector::uniform(cell.budget, epoch);

    let mut rows = Vec::with_capacity(spec.policies.len() + 1);
    for &policy in &spec.policies {
        let config = SimConfig::new(epoch, budget.clone(), policy);
        let out = run(&config, &instance.profiles)?;
        rows.push(to_raw(cell_idx, repeat, seed, &policy, &out));
    }

    if spec.include_bound {
        // Best completeness any policy reaches once every interval stands
        // alone: an upper-bound estimate for the cell's instance.
        let relaxed = relax_to_single_eis(&instance.profiles);
        let mut best: Option<RunOutput> = None;
        for score in ScoreKind::ALL {
            let policy = PolicyKind::new(score, Preemption::Preemptive);
            let config = SimConfig::new(epoch, budget.clone(), policy);
            let out = run(&config, &relaxed)?;
            let better = best
                .as_ref()
                .map(|b| out.metrics.gained_completeness > b.metrics.gained_completeness)
                .unwrap_or(true);
            if better {
                best = Some(out);
            }
        }
        let best = best.expect("at least one relaxed run");
        let mut row = to_raw(
            cell_idx,
            repeat,
            seed,
            &PolicyKind::new(ScoreKind::Sedf, Preemption::Preemptive),
            &best,
        );
        row.policy = BOUND_POLICY.to_string();
        rows.push(row);
    }
    Ok(rows)
}

fn to_raw(
    cell: usize,
    repeat: u32,
    seed: u64,
    policy: &PolicyKind,
    out: &RunOutput,
) -> RawRow {
    RawRow {
        cell,
        repeat,
        policy: policy.score.name().to_string(),
        preemption: policy.preemption.suffix().to_string(),
        seed,
        gc: out.metrics.gained_completeness,
        runtime_per_ei_ns: out.metrics.runtime_per_ei_ns,
        captured_ceis: out.metrics.captured_ceis,
        failed_ceis: out.metrics.failed_ceis,
        scheduling_ns: out.metrics.scheduling_ns,
        total_eis: out.metrics.total_eis,
    }
}

/// A batch of random oracle-scale instances on which every policy is
/// compared against the exact optimum.
#[derive(Debug, Clone)]
pub struct OracleCheckSpec {
    pub count: u32,
    pub tiny: TinyParams,
    pub budget: u32,
    pub root_seed: u64,
}

#[derive(Debug, Clone)]
pub struct OracleCheckRow {
    pub instance_id: u32,
    pub optimal_gc: f64,
    pub policy: String,
    pub policy_gc: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OracleCheckOutcome {
    pub rows: Vec<OracleCheckRow>,
    /// Instances where the preemptive earliest-deadline policy missed the
    /// optimum; populated for rank-1 no-overlap batches.
    pub optimality_misses: Option<u32>,
    /// Instances where the preemptive residual and summed-deadline policies
    /// produced different schedules; populated for width-one equal-rank
    /// batches.
    pub equivalence_misses: Option<u32>,
    pub errors: Vec<(u32, String)>,
}

impl OracleCheckOutcome {
    pub fn csv(&self) -> String {
        let mut s = String::from(ORACLE_HEADER);
        s.push('\n');
        for row in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                row.instance_id, row.optimal_gc, row.policy, row.policy_gc, row.gap
            ));
        }
        s
    }
}

pub fn oracle_check(spec: &OracleCheckSpec) -> Result<OracleCheckOutcome> {
    use crate::workload::TinyShape;

    let epoch = Epoch::new(spec.tiny.chronons)?;
    let budget = BudgetVector::uniform(spec.budget, epoch);
    let limits = OracleLimits::default();
    let mut outcome = OracleCheckOutcome::default();
    let rank1_batch = matches!(spec.tiny.shape, TinyShape::Rank1NoOverlap);
    let equal_batch = matches!(spec.tiny.shape, TinyShape::WidthOneEqualRank { .. });
    if rank1_batch {
        outcome.optimality_misses = Some(0);
    }
    if equal_batch {
        outcome.equivalence_misses = Some(0);
    }

    for instance_id in 0..spec.count {
        let seed = fnv1a64(format!("{}|instance|{instance_id}", spec.root_seed).as_bytes());
        let step = (|| -> Result<()> {
            let profiles = gen_tiny(&spec.tiny, seed)?;
            let best = optimal_gc(&profiles, &budget, epoch, &limits)?;
            let mut schedules: Vec<(PolicyKind, String, f64)> = Vec::new();
            for policy in PolicyKind::all_variants() {
                let config = SimConfig::new(epoch, budget.clone(), policy);
                let out = run(&config, &profiles)?;
                let gc = out.metrics.gained_completeness;
                let gap = if best.captured_ceis == 0 {
                    1.0
                } else {
                    out.metrics.captured_ceis as f64 / best.captured_ceis as f64
                };
                outcome.rows.push(OracleCheckRow {
                    instance_id,
                    optimal_gc: best.gc,
                    policy: policy.to_string(),
                    policy_gc: gc,
                    gap,
                });
                schedules.push((policy, schedule_to_string(&out.schedule), gap));
            }
            if rank1_batch {
                let sedf_gap = schedules
                    .iter()
                    .find(|(p, _, _)| {
                        p.score == ScoreKind::Sedf && p.preemption == Preemption::Preemptive
                    })
                    .map(|(_, _, g)| *g)
                    .expect("all variants ran");
                if sedf_gap != 1.0 {
                    *outcome.optimality_misses.as_mut().expect("set above") += 1;
                }
            }
            if equal_batch {
                let find = |score: ScoreKind| {
                    schedules
                        .iter()
                        .find(|(p, _, _)| {
                            p.score == score && p.preemption == Preemption::Preemptive
                        })
                        .map(|(_, s, _)| s.clone())
                        .expect("all variants ran")
                };
                if find(ScoreKind::Mrsf) != find(ScoreKind::Medf) {
                    *outcome.equivalence_misses.as_mut().expect("set above") += 1;
                }
            }
            Ok(())
        })();
        if let Err(e) = step {
            outcome.errors.push((instance_id, e.to_string()));
        }
    }
    Ok(outcome)
}

/// Instance stats printed by the generator command.
#[derive(Debug, Clone)]
pub struct InstanceSummary {
    pub updates: usize,
    pub ceis: u64,
    pub eis: u64,
    pub rank: u32,
    pub rank_histogram: Vec<(u32, u64)>,
    pub width_one: bool,
}

pub fn summarize(profiles: &ProfileSet, updates: usize) -> InstanceSummary {
    let mut hist: Vec<(u32, u64)> = Vec::new();
    for cei in profiles.iter_ceis() {
        let size = cei.size();
        match hist.iter_mut().find(|(s, _)| *s == size) {
            Some((_, c)) => *c += 1,
            None => hist.push((size, 1)),
        }
    }
    hist.sort_unstable();
    InstanceSummary {
        updates,
        ceis: profiles.total_ceis(),
        eis: profiles.total_eis(),
        rank: profiles.rank(),
        rank_histogram: hist,
        width_one: profiles.is_width_one(),
    }
}
