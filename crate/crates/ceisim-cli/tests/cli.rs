//! End-to-end checks of the ceisim binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ceisim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ceisim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("cfg.txt");
    fs::write(
        &path,
        "# desk-scale test config\n\
         W = 5\n\
         n = 30\n\
         m = 15\n\
         K = 100\n\
         C = 1\n\
         lambda = 6\n\
         rank = 2\n\
         alpha = 0\n\
         beta = 0\n\
         policy = mrsf-p,s-edf-np\n\
         seed = 11\n\
         repeats = 2\n",
    )
    .unwrap();
    path
}

#[test]
fn generate_then_run_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());

    let out = ceisim(
        &[
            "generate",
            "--config",
            "cfg.txt",
            "--profiles-out",
            "profiles.csv",
            "--updates-out",
            "updates.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ceis:"));
    assert!(stdout.contains("rank_histogram:"));

    // The summary counts match the serialized artifacts.
    let profiles = ceisim::io::read_profile_set(&dir.path().join("profiles.csv")).unwrap();
    let ceis_line: u64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("ceis: "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(profiles.total_ceis(), ceis_line);
    let updates = fs::read_to_string(dir.path().join("updates.csv")).unwrap();
    assert!(updates.starts_with("resource,chronon\n"));

    let out = ceisim(
        &[
            "run",
            "--config",
            "cfg.txt",
            "--profiles",
            "profiles.csv",
            "--policy",
            "mrsf-p",
            "--schedule-out",
            "schedule.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("policy,preemption,seed,K,n,m,C,lambda,rank,alpha,beta,W,gc,"));
    assert_eq!(stdout.lines().count(), 2);

    // The written schedule replays to the reported completeness.
    let schedule = ceisim::io::read_schedule(&dir.path().join("schedule.csv")).unwrap();
    let gc_reported: f64 = stdout
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(12)
        .unwrap()
        .parse()
        .unwrap();
    let gc_replayed = ceisim::gained_completeness(&profiles, &schedule).unwrap();
    assert_eq!(gc_reported, gc_replayed);
}

#[test]
fn generate_reports_width_one_instances() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("w0.txt"),
        "W = 0\nn = 30\nm = 10\nK = 100\nlambda = 6\nrank = 1\ndistinct = true\nseed = 3\n",
    )
    .unwrap();
    let out = ceisim(
        &[
            "generate",
            "--config",
            "w0.txt",
            "--profiles-out",
            "p.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("width_one: true"), "{stdout}");
}

#[test]
fn sweep_is_reproducible_modulo_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    for prefix in ["a", "b"] {
        let out = ceisim(
            &[
                "sweep",
                "--config",
                "cfg.txt",
                "--axis",
                "rank=1,2",
                "--repeats",
                "2",
                "--bound",
                "--out",
                prefix,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let strip = |path: &Path| {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| {
                let mut fields: Vec<&str> = l.split(',').collect();
                fields.remove(13); // runtime_per_ei_ns
                fields.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip(&dir.path().join("a_raw.csv")),
        strip(&dir.path().join("b_raw.csv"))
    );
    let agg = fs::read_to_string(dir.path().join("a_agg.csv")).unwrap();
    assert!(agg.starts_with("policy,preemption,K,n,m,C,lambda,rank,alpha,beta,W,repeats,mean_gc"));
    assert!(agg.contains("single-ei-bound"));
}

#[test]
fn oracle_check_shapes_and_empty_batch() {
    let dir = tempfile::tempdir().unwrap();

    let out = ceisim(
        &["oracle-check", "--count", "0", "--out", "empty.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    assert_eq!(
        fs::read_to_string(dir.path().join("empty.csv")).unwrap(),
        "instance_id,optimal_gc,policy,policy_gc,gap\n"
    );

    let out = ceisim(
        &[
            "oracle-check",
            "--count",
            "10",
            "--shape",
            "width1-equal-rank",
            "--equal-rank",
            "2",
            "--resources",
            "5",
            "--chronons",
            "8",
            "--ceis",
            "5",
            "--out",
            "equal.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("equal_rank_equivalence: pass"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("equal.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 * 8);
}

#[test]
fn hard_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "waat = 3\n").unwrap();
    let out = ceisim(
        &[
            "run",
            "--config",
            "bad.txt",
        ],
        dir.path(),
    );
    assert!(!out.status.success());

    let out = ceisim(
        &["oracle-check", "--shape", "nope", "--out", "x.csv"],
        dir.path(),
    );
    assert!(!out.status.success());
}
