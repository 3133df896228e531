//! Synthetic workloads: Poisson update streams, two-stage Zipf profile
//! construction over a watch template, trace ingestion, and small random
//! instances for oracle-scale verification.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{
    CeiId, Chronon, ComplexExecutionInterval, EiId, Epoch, ExecutionInterval, Profile, ProfileId,
    ProfileSet, ResourceId,
};

/// A ground-truth update of one resource at one chronon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct UpdateEvent {
    pub resource: ResourceId,
    pub chronon: Chronon,
}

/// How long a posted item stays collectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LifeMode {
    /// Items must be collected within W chronons of being posted.
    #[default]
    Window,
    /// Items must be collected before the next update overwrites them.
    Overwrite,
}

impl fmt::Display for LifeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LifeMode::Window => write!(f, "window"),
            LifeMode::Overwrite => write!(f, "overwrite"),
        }
    }
}

impl FromStr for LifeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "window" => Ok(LifeMode::Window),
            "overwrite" => Ok(LifeMode::Overwrite),
            other => Err(Error::InvalidConfig(format!("unknown life mode '{other}'"))),
        }
    }
}

/// Knobs of the synthetic generator.
#[derive(Debug, Clone)]
pub struct WorkloadParams {
    /// Number of resources n.
    pub resources: u32,
    /// Number of profiles m.
    pub profiles: u32,
    /// Mean updates per resource per epoch.
    pub intensity: f64,
    /// Largest CEI size k a profile may request.
    pub max_rank: u32,
    /// Zipf exponent for resource popularity (0 = uniform).
    pub inter_zipf: f64,
    /// Zipf exponent for profile complexity; larger favours small ranks.
    pub intra_zipf: f64,
    /// Window length W; 0 yields width-one intervals.
    pub window: u32,
    pub life: LifeMode,
    /// Draw distinct resources per profile and globally distinct anchors,
    /// so width-one rank-1 instances carry no intra-resource overlap.
    pub distinct_resources: bool,
    /// Skip the complexity draw and give every profile exactly `max_rank`
    /// intervals per CEI.
    pub fixed_rank: bool,
}

impl WorkloadParams {
    fn validate(&self) -> Result<()> {
        if self.resources == 0 || self.max_rank == 0 {
            return Err(Error::InvalidConfig(
                "need at least one resource and a positive max rank".into(),
            ));
        }
        Ok(())
    }
}

/// Per-resource Poisson event counts placed uniformly at distinct chronons.
/// Output is sorted by (resource, chronon) and deterministic per rng state.
pub fn gen_updates(
    resources: u32,
    intensity: f64,
    epoch: Epoch,
    rng: &mut impl Rng,
) -> Result<Vec<UpdateEvent>> {
    if intensity <= 0.0 {
        return Err(Error::NonPositiveIntensity(intensity));
    }
    let poisson = Poisson::new(intensity).map_err(|_| Error::NonPositiveIntensity(intensity))?;
    let k = epoch.chronons() as usize;
    let mut events = Vec::new();
    for r in 1..=resources {
        let count = (poisson.sample(rng) as usize).min(k);
        let mut chronons: Vec<Chronon> = index::sample(rng, k, count)
            .into_iter()
            .map(|i| i as Chronon + 1)
            .collect();
        chronons.sort_unstable();
        events.extend(chronons.into_iter().map(|chronon| UpdateEvent {
            resource: ResourceId(r),
            chronon,
        }));
    }
    Ok(events)
}

/// Discrete Zipf sampler over 1..=n: index i is drawn with probability
/// proportional to 1/i^s. Exponent 0 is exactly uniform.
#[derive(Debug, Clone)]
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(exponent: f64, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyZipfDomain);
        }
        let mut cdf = Vec::with_capacity(n as usize);
        let mut acc = 0.0;
        for i in 1..=n {
            acc += (f64::from(i)).powf(-exponent);
            cdf.push(acc);
        }
        let total = acc;
        for c in cdf.iter_mut() {
            *c /= total;
        }
        *cdf.last_mut().expect("n >= 1") = 1.0;
        Ok(ZipfSampler { cdf })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u32 {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u) as u32 + 1
    }
}

/// One-shot draw from Zipf(exponent, n).
pub fn zipf_sample(exponent: f64, n: u32, rng: &mut impl Rng) -> Result<u32> {
    Ok(ZipfSampler::new(exponent, n)?.sample(rng))
}

/// An update stream plus the profile set generated against it.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub updates: Vec<UpdateEvent>,
    pub profiles: ProfileSet,
}

/// Seeded end-to-end generation: update stream first, then profiles.
pub fn generate_instance(
    params: &WorkloadParams,
    epoch: Epoch,
    seed: u64,
) -> Result<GeneratedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let updates = gen_updates(params.resources, params.intensity, epoch, &mut rng)?;
    let profiles = gen_profiles(params, &updates, epoch, &mut rng)?;
    Ok(GeneratedInstance { updates, profiles })
}

const RESAMPLE_CAP: u32 = 100_000;

/// Two-stage profile construction. Stage 1 draws each profile's CEI size
/// from Zipf(intra_zipf, max_rank), so larger exponents favour simpler
/// profiles. Stage 2 draws that many resources from Zipf(inter_zipf, n);
/// the first drawn resource anchors the profile, and every update on the
/// anchor spawns one CEI holding, per drawn resource, an interval starting
/// at that resource's first update at or after the anchor update (the CEI is
/// skipped when a resource has no such update). Window life ends intervals
/// W chronons after they start, clipped to the epoch; overwrite life ends
/// them just before the resource's next update.
pub fn gen_profiles(
    params: &WorkloadParams,
    updates: &[UpdateEvent],
    epoch: Epoch,
    rng: &mut impl Rng,
) -> Result<ProfileSet> {
    params.validate()?;
    let n = params.resources;
    let mut by_resource: Vec<Vec<Chronon>> = vec![Vec::new(); (n + 1) as usize];
    for u in updates {
        if u.resource.0 == 0 || u.resource.0 > n {
            return Err(Error::InvalidConfig(format!(
                "update references resource {} outside 1..={n}",
                u.resource
            )));
        }
        by_resource[u.resource.0 as usize].push(u.chronon);
    }
    for list in by_resource.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }

    let stage_rank = ZipfSampler::new(params.intra_zipf, params.max_rank)?;
    let stage_resource = ZipfSampler::new(params.inter_zipf, n)?;
    let mut used_anchors: HashSet<u32> = HashSet::new();

    let mut profiles = Vec::with_capacity(params.profiles as usize);
    let mut next_cei = 0u32;
    let mut next_ei = 0u32;
    for pid in 0..params.profiles {
        let rank = if params.fixed_rank {
            params.max_rank
        } else {
            stage_rank.sample(rng)
        };

        let mut drawn: Vec<u32> = Vec::with_capacity(rank as usize);
        if params.distinct_resources {
            if rank > n {
                return Err(Error::DistinctExhausted { want: rank, have: n });
            }
            if used_anchors.len() as u32 >= n {
                return Err(Error::DistinctExhausted {
                    want: params.profiles,
                    have: n,
                });
            }
            let mut attempts = 0;
            let anchor = loop {
                let r = stage_resource.sample(rng);
                if !used_anchors.contains(&r) {
                    break r;
                }
                attempts += 1;
                if attempts > RESAMPLE_CAP {
                    return Err(Error::DistinctExhausted {
                        want: params.profiles,
                        have: n,
                    });
                }
            };
            used_anchors.insert(anchor);
            drawn.push(anchor);
            let mut attempts = 0;
            while (drawn.len() as u32) < rank {
                let r = stage_resource.sample(rng);
                if !drawn.contains(&r) {
                    drawn.push(r);
                } else {
                    attempts += 1;
                    if attempts > RESAMPLE_CAP {
                        return Err(Error::DistinctExhausted { want: rank, have: n });
                    }
                }
            }
        } else {
            for _ in 0..rank {
                drawn.push(stage_resource.sample(rng));
            }
        }

        let profile_id = ProfileId(pid);
        let mut ceis = Vec::new();
        for &anchor_update in &by_resource[drawn[0] as usize].clone() {
            if let Some(windows) =
                follow_up_windows(&drawn, anchor_update, &by_resource, params, epoch)
            {
                let eis = windows
                    .into_iter()
                    .map(|(resource, start, finish)| {
                        let id = EiId(next_ei);
                        next_ei += 1;
                        ExecutionInterval::new(id, ResourceId(resource), start, finish)
                            .expect("generated interval is well-formed")
                    })
                    .collect();
                let cei = ComplexExecutionInterval::new(CeiId(next_cei), profile_id, eis)
                    .expect("CEI has one interval per drawn resource");
                next_cei += 1;
                ceis.push(cei);
            }
        }
        profiles.push(Profile {
            id: profile_id,
            ceis,
        });
    }
    Ok(ProfileSet::new(profiles))
}

/// For one anchor update, the (resource, start, finish) window on every
/// drawn resource, or None when some resource lacks a follow-up update.
fn follow_up_windows(
    drawn: &[u32],
    anchor_update: Chronon,
    by_resource: &[Vec<Chronon>],
    params: &WorkloadParams,
    epoch: Epoch,
) -> Option<Vec<(u32, Chronon, Chronon)>> {
    let k = epoch.chronons();
    let mut out = Vec::with_capacity(drawn.len());
    for &resource in drawn {
        let ups = &by_resource[resource as usize];
        let pos = ups.partition_point(|&v| v < anchor_update);
        if pos == ups.len() {
            return None;
        }
        let start = ups[pos];
        let finish = match params.life {
            LifeMode::Window => (start + params.window).min(k),
            LifeMode::Overwrite => {
                if pos + 1 < ups.len() {
                    ups[pos + 1] - 1
                } else {
                    k
                }
            }
        };
        out.push((resource, start, finish));
    }
    Some(out)
}

/// Parses a `resource,chronon` CSV trace. Lines starting with `#` are
/// directives or comments; `# rescale <lo> <hi>` maps source chronons in
/// [lo, hi] affinely onto 1..=K. A leading `resource,chronon` header line is
/// accepted and skipped. Events are returned sorted and deduplicated.
pub fn load_trace(path: &Path, epoch: Epoch) -> Result<Vec<UpdateEvent>> {
    let text = std::fs::read_to_string(path)?;
    parse_trace(&text, epoch)
}

pub fn parse_trace(text: &str, epoch: Epoch) -> Result<Vec<UpdateEvent>> {
    let k = epoch.chronons();
    let mut rescale: Option<(f64, f64)> = None;
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        if let Some(directive) = row.strip_prefix('#') {
            let fields: Vec<&str> = directive.split_whitespace().collect();
            if fields.first() == Some(&"rescale") {
                if fields.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        msg: "rescale directive needs two bounds".into(),
                    });
                }
                let lo: f64 = fields[1].parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad rescale bound '{}'", fields[1]),
                })?;
                let hi: f64 = fields[2].parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad rescale bound '{}'", fields[2]),
                })?;
                if hi <= lo {
                    return Err(Error::Parse {
                        line,
                        msg: "rescale upper bound must exceed the lower bound".into(),
                    });
                }
                rescale = Some((lo, hi));
            }
            continue;
        }
        if row.eq_ignore_ascii_case("resource,chronon") {
            continue;
        }
        let mut parts = row.split(',');
        let (res_str, chr_str) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 'resource,chronon', got '{row}'"),
                })
            }
        };
        let resource: u32 = res_str.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad resource '{res_str}'"),
        })?;
        if resource == 0 {
            return Err(Error::Parse {
                line,
                msg: "resource indices start at 1".into(),
            });
        }
        let raw_chronon: f64 = chr_str.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad chronon '{chr_str}'"),
        })?;
        let chronon = match rescale {
            Some((lo, hi)) => {
                1.0 + ((raw_chronon - lo) * f64::from(k - 1) / (hi - lo)).round()
            }
            None => raw_chronon,
        };
        if chronon < 1.0 || chronon > f64::from(k) || chronon.fract() != 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("chronon {chronon} outside the epoch 1..={k}"),
            });
        }
        events.push(UpdateEvent {
            resource: ResourceId(resource),
            chronon: chronon as Chronon,
        });
    }
    events.sort_unstable();
    events.dedup();
    Ok(events)
}

/// Writes events in the trace format with the standard header.
pub fn write_trace(path: &Path, events: &[UpdateEvent]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "resource,chronon")?;
    for e in events {
        writeln!(out, "{},{}", e.resource, e.chronon)?;
    }
    out.flush()?;
    Ok(())
}

/// Shape constraints for oracle-scale random instances.
#[derive(Debug, Clone, Copy)]
pub enum TinyShape {
    /// Unconstrained CEIs with bounded size and window width.
    General { max_rank: u32, max_width: u32 },
    /// Width-one rank-1 CEIs on pairwise distinct (resource, chronon) cells:
    /// no intra-resource overlap anywhere.
    Rank1NoOverlap,
    /// Width-one CEIs of exactly `rank` intervals each, so every CEI size
    /// equals the profile-set rank.
    WidthOneEqualRank { rank: u32 },
}

#[derive(Debug, Clone, Copy)]
pub struct TinyParams {
    pub resources: u32,
    pub chronons: u32,
    pub ceis: u32,
    pub profiles: u32,
    pub shape: TinyShape,
}

/// Deterministic random instance at verification scale.
pub fn gen_tiny(params: &TinyParams, seed: u64) -> Result<ProfileSet> {
    if params.resources == 0 || params.chronons == 0 || params.profiles == 0 {
        return Err(Error::InvalidConfig(
            "tiny instances need resources, chronons, and profiles".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.resources;
    let k = params.chronons;
    let cells = (n * k) as usize;
    let cell_at = |i: usize| {
        (
            ResourceId((i as u32) / k + 1),
            ((i as u32) % k + 1) as Chronon,
        )
    };

    let mut next_ei = 0u32;
    let mut ceis: Vec<Vec<ExecutionInterval>> = Vec::with_capacity(params.ceis as usize);
    match params.shape {
        TinyShape::General {
            max_rank,
            max_width,
        } => {
            for _ in 0..params.ceis {
                let size = rng.gen_range(1..=max_rank.max(1));
                let mut eis = Vec::with_capacity(size as usize);
                for _ in 0..size {
                    let resource = ResourceId(rng.gen_range(1..=n));
                    let start = rng.gen_range(1..=k);
                    let width = rng.gen_range(1..=max_width.max(1));
                    let finish = (start + width - 1).min(k);
                    eis.push(
                        ExecutionInterval::new(EiId(next_ei), resource, start, finish).unwrap(),
                    );
                    next_ei += 1;
                }
                ceis.push(eis);
            }
        }
        TinyShape::Rank1NoOverlap => {
            if params.ceis as usize > cells {
                return Err(Error::DistinctExhausted {
                    want: params.ceis,
                    have: cells as u32,
                });
            }
            for i in index::sample(&mut rng, cells, params.ceis as usize) {
                let (resource, t) = cell_at(i);
                ceis.push(vec![
                    ExecutionInterval::new(EiId(next_ei), resource, t, t).unwrap()
                ]);
                next_ei += 1;
            }
        }
        TinyShape::WidthOneEqualRank { rank } => {
            if rank as usize > cells {
                return Err(Error::DistinctExhausted {
                    want: rank,
                    have: cells as u32,
                });
            }
            for _ in 0..params.ceis {
                let mut eis = Vec::with_capacity(rank as usize);
                for i in index::sample(&mut rng, cells, rank as usize) {
                    let (resource, t) = cell_at(i);
                    eis.push(ExecutionInterval::new(EiId(next_ei), resource, t, t).unwrap());
                    next_ei += 1;
                }
                ceis.push(eis);
            }
        }
    }

    let mut profiles: Vec<Profile> = (0..params.profiles)
        .map(|i| Profile {
            id: ProfileId(i),
            ceis: Vec::new(),
        })
        .collect();
    for (i, eis) in ceis.into_iter().enumerate() {
        let pid = i % params.profiles as usize;
        let cei =
            ComplexExecutionInterval::new(CeiId(i as u32), ProfileId(pid as u32), eis).unwrap();
        profiles[pid].ceis.push(cei);
    }
    Ok(ProfileSet::new(profiles))
}
