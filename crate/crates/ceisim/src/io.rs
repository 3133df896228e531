//! Line-oriented text formats for profile sets and schedules.
//!
//! Profile sets serialize one row per interval as
//! `cei_id,profile_id,resource,start,finish`; schedules one row per probe as
//! `resource,chronon`. Both formats require their header line.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    CeiId, ComplexExecutionInterval, EiId, ExecutionInterval, Profile, ProfileId, ProfileSet,
    ResourceId, Schedule,
};

pub const PROFILE_HEADER: &str = "cei_id,profile_id,resource,start,finish";
pub const SCHEDULE_HEADER: &str = "resource,chronon";

pub fn write_profile_set(path: &Path, profiles: &ProfileSet) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "{}", profile_set_to_string(profiles))?;
    out.flush()?;
    Ok(())
}

pub fn profile_set_to_string(profiles: &ProfileSet) -> String {
    let mut s = String::from(PROFILE_HEADER);
    s.push('\n');
    for profile in &profiles.profiles {
        for cei in &profile.ceis {
            for ei in &cei.eis {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    cei.id, profile.id, ei.resource, ei.start, ei.finish
                ));
            }
        }
    }
    s
}

pub fn read_profile_set(path: &Path) -> Result<ProfileSet> {
    profile_set_from_str(&std::fs::read_to_string(path)?)
}

/// Rebuilds a profile set from rows. CEIs and profiles keep their serialized
/// ids and their first-appearance order; interval ids are reassigned in row
/// order.
pub fn profile_set_from_str(text: &str) -> Result<ProfileSet> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == PROFILE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header '{PROFILE_HEADER}'"),
            })
        }
    }

    // (cei_id, profile_id) in first-appearance order, with their intervals.
    let mut order: Vec<(CeiId, ProfileId)> = Vec::new();
    let mut eis_of: Vec<Vec<ExecutionInterval>> = Vec::new();
    let mut next_ei = 0u32;
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<u32> {
            s.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad {what} '{s}'"),
            })
        };
        let cei_id = CeiId(parse(fields[0], "cei_id")?);
        let profile_id = ProfileId(parse(fields[1], "profile_id")?);
        let resource = ResourceId(parse(fields[2], "resource")?);
        let start = parse(fields[3], "start")?;
        let finish = parse(fields[4], "finish")?;
        let ei = ExecutionInterval::new(EiId(next_ei), resource, start, finish).map_err(|e| {
            Error::Parse {
                line,
                msg: e.to_string(),
            }
        })?;
        next_ei += 1;

        match order.iter().position(|&(c, _)| c == cei_id) {
            Some(pos) => {
                if order[pos].1 != profile_id {
                    return Err(Error::Parse {
                        line,
                        msg: format!("CEI {cei_id} listed under two profiles"),
                    });
                }
                eis_of[pos].push(ei);
            }
            None => {
                order.push((cei_id, profile_id));
                eis_of.push(vec![ei]);
            }
        }
    }

    let mut profiles: Vec<Profile> = Vec::new();
    for ((cei_id, profile_id), eis) in order.into_iter().zip(eis_of) {
        let cei = ComplexExecutionInterval::new(cei_id, profile_id, eis)
            .expect("grouped CEIs are nonempty");
        match profiles.iter_mut().find(|p| p.id == profile_id) {
            Some(p) => p.ceis.push(cei),
            None => profiles.push(Profile {
                id: profile_id,
                ceis: vec![cei],
            }),
        }
    }
    Ok(ProfileSet::new(profiles))
}

pub fn write_schedule(path: &Path, schedule: &Schedule) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "{}", schedule_to_string(schedule))?;
    out.flush()?;
    Ok(())
}

/// Probe rows in (resource, chronon) order.
pub fn schedule_to_string(schedule: &Schedule) -> String {
    let mut s = String::from(SCHEDULE_HEADER);
    s.push('\n');
    for (resource, chronon) in schedule.iter() {
        s.push_str(&format!("{resource},{chronon}\n"));
    }
    s
}

pub fn read_schedule(path: &Path) -> Result<Schedule> {
    schedule_from_str(&std::fs::read_to_string(path)?)
}

pub fn schedule_from_str(text: &str) -> Result<Schedule> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == SCHEDULE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header '{SCHEDULE_HEADER}'"),
            })
        }
    }
    let mut schedule = Schedule::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
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
        let chronon: u32 = chr_str.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad chronon '{chr_str}'"),
        })?;
        schedule.add_probe(ResourceId(resource), chronon);
    }
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> ProfileSet {
        let ei = |id: u32, r: u32, s: u32, f: u32| {
            ExecutionInterval::new(EiId(id), ResourceId(r), s, f).unwrap()
        };
        ProfileSet::new(vec![
            Profile {
                id: ProfileId(0),
                ceis: vec![
                    ComplexExecutionInterval::new(
                        CeiId(0),
                        ProfileId(0),
                        vec![ei(0, 1, 1, 3), ei(1, 2, 4, 9)],
                    )
                    .unwrap(),
                    ComplexExecutionInterval::new(CeiId(1), ProfileId(0), vec![ei(2, 3, 2, 2)])
                        .unwrap(),
                ],
            },
            Profile {
                id: ProfileId(1),
                ceis: vec![ComplexExecutionInterval::new(
                    CeiId(2),
                    ProfileId(1),
                    vec![ei(3, 1, 5, 8)],
                )
                .unwrap()],
            },
        ])
    }

    #[test]
    fn profile_set_round_trip() {
        let ps = sample_set();
        let text = profile_set_to_string(&ps);
        assert!(text.starts_with(PROFILE_HEADER));
        let back = profile_set_from_str(&text).unwrap();
        assert_eq!(back, ps);
        // Stable on a second pass.
        assert_eq!(profile_set_to_string(&back), text);
    }

    #[test]
    fn profile_set_requires_header() {
        assert!(matches!(
            profile_set_from_str("0,0,1,1,2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        let err = profile_set_from_str(&format!("{PROFILE_HEADER}\n0,0,1,oops,2\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn profile_set_rejects_cei_in_two_profiles() {
        let text = format!("{PROFILE_HEADER}\n0,0,1,1,2\n0,1,2,3,4\n");
        assert!(profile_set_from_str(&text).is_err());
    }

    #[test]
    fn schedule_round_trip() {
        let mut s = Schedule::new();
        s.add_probe(ResourceId(2), 7);
        s.add_probe(ResourceId(1), 3);
        s.add_probe(ResourceId(2), 1);
        let text = schedule_to_string(&s);
        assert_eq!(text, "resource,chronon\n1,3\n2,1\n2,7\n");
        assert_eq!(schedule_from_str(&text).unwrap(), s);
    }

    #[test]
    fn schedule_requires_header() {
        assert!(schedule_from_str("1,3\n").is_err());
        let err = schedule_from_str("resource,chronon\n1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ps = sample_set();
        let p_path = dir.path().join("profiles.csv");
        write_profile_set(&p_path, &ps).unwrap();
        assert_eq!(read_profile_set(&p_path).unwrap(), ps);

        let mut s = Schedule::new();
        s.add_probe(ResourceId(9), 4);
        let s_path = dir.path().join("schedule.csv");
        write_schedule(&s_path, &s).unwrap();
        assert_eq!(read_schedule(&s_path).unwrap(), s);
    }
}
