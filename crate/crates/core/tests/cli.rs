use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nrules() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nrules"));
    cmd.env_remove("NRULES_THREADS");
    cmd
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    nrules().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn text(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn list_scenarios_prints_seven() {
    let out = run(&["list-scenarios"]);
    assert_eq!(code(&out), 0);
    let lines: Vec<String> = text(&out).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("apparatus "));
    assert!(lines[6].starts_with("cat2-natural "));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["run"])), 1);
    assert_eq!(code(&run(&["run", "--builtin", "cat9"])), 1);
    assert_eq!(
        code(&run(&["batch", "--builtin", "cat1", "--trials", "0"])),
        1
    );
    let both = run(&[
        "run",
        "--builtin",
        "cat1",
        "--scenario",
        scenario("cat1.scn").to_str().unwrap(),
    ]);
    assert_eq!(code(&both), 1);
    assert_eq!(code(&run(&["run", "--builtin", "cat1", "--dt", "-1"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    for f in fs::read_dir(scenario("")).unwrap() {
        let p = f.unwrap().path();
        let out = run(&["validate", p.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", p.display());
        assert!(text(&out).starts_with("ok: "));
    }
    let bad = dir.path().join("bad.scn");
    fs::write(&bad, "version = cat2-natural\nt_half = 1\n").unwrap();
    let out = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ordering"));

    fs::write(&bad, "version = cat1\nt_half = 1\ncolour = red\n").unwrap();
    let out = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let missing = dir.path().join("missing.scn");
    assert_eq!(code(&run(&["validate", missing.to_str().unwrap()])), 2);
}

#[test]
fn run_writes_a_deterministic_log() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let cat1 = scenario("cat1.scn");
    for out in [&a, &b] {
        let o = run(&[
            "run",
            "--scenario",
            cat1.to_str().unwrap(),
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
    }
    let log = fs::read(&a).unwrap();
    assert_eq!(log, fs::read(&b).unwrap());
    let log = String::from_utf8(log).unwrap();
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["id", "kind", "labels_after", "payload", "t"] {
            assert!(v.get(key).is_some(), "{key} missing in {line}");
        }
    }
    assert!(log.contains("\"kind\":\"cutoff\"") || log.contains("\"kind\":\"hit\""));

    let stdout = run(&["run", "--scenario", cat1.to_str().unwrap(), "--seed", "42"]);
    assert_eq!(text(&stdout), log);
}

#[test]
fn run_csv_has_a_header() {
    let out = run(&[
        "run",
        "--builtin",
        "apparatus",
        "--seed",
        "3",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    assert!(text(&out).starts_with("id,t,kind,payload,labels_after\n"));
}

#[test]
fn prune_flag_only_adds_prune_events() {
    let log = |seed: &str, prune: bool| {
        let mut a = vec!["run", "--builtin", "cat2+observer", "--seed", seed];
        if prune {
            a.push("--prune");
        }
        text(&run(&a))
    };
    let mut pruned = 0;
    for seed in ["1", "2", "3", "4", "5", "6"] {
        let off = log(seed, false);
        let on = log(seed, true);
        let kept: Vec<&str> = on
            .lines()
            .filter(|l| !l.contains("\"kind\":\"pruned\""))
            .collect();
        pruned += on.lines().count() - kept.len();
        assert_eq!(off.lines().collect::<Vec<_>>(), kept);
    }
    assert!(pruned > 0);
}

#[test]
fn batch_writes_summary_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("summary.csv");
    let o = run(&[
        "batch",
        "--scenario",
        scenario("apparatus.scn").to_str().unwrap(),
        "--trials",
        "2000",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let summary = fs::read_to_string(&out).unwrap();
    let mut rdr = csv::Reader::from_reader(summary.as_bytes());
    let rows: Vec<(String, String)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].to_string())
        })
        .collect();
    let get = |k: &str| rows.iter().find(|(m, _)| m == k).unwrap().1.clone();
    assert_eq!(get("n_trials"), "2000");
    assert_eq!(get("paradox_violations"), "0");
    let fraction: f64 = get("hit_fraction").parse().unwrap();
    assert!((fraction - 0.5).abs() < 0.05);
    let outcomes: u64 = rows
        .iter()
        .filter(|(m, _)| m.starts_with("outcome:"))
        .map(|(_, v)| v.parse::<u64>().unwrap())
        .sum();
    assert_eq!(outcomes, 2000);

    let hist = fs::read_to_string(dir.path().join("summary.hist.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("bin_lo,bin_hi,count"));
    let counts: Vec<u64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 50);
    let hits: u64 = get("hits").parse().unwrap();
    assert_eq!(counts.iter().sum::<u64>(), hits);
}

#[test]
fn batch_json_and_thread_cap_agree() {
    let json = |threads: &str| {
        let out = nrules()
            .env("NRULES_THREADS", threads)
            .args([
                "batch",
                "--builtin",
                "cat1",
                "--trials",
                "300",
                "--format",
                "jsonl",
            ])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        text(&out)
    };
    let one = json("1");
    assert_eq!(one, json("3"));
    let v: serde_json::Value = serde_json::from_str(one.trim()).unwrap();
    assert_eq!(v["n_trials"], 300);
    assert_eq!(v["hit_time_histogram"].as_array().unwrap().len(), 50);

    let bad = nrules()
        .env("NRULES_THREADS", "many")
        .args(["batch", "--builtin", "cat1", "--trials", "3"])
        .output()
        .unwrap();
    assert_eq!(code(&bad), 1);
}

#[test]
fn paradoxical_batch_exits_three() {
    let o = run(&[
        "batch",
        "--scenario",
        scenario("cat2_natural_unordered.scn").to_str().unwrap(),
        "--trials",
        "300",
    ]);
    assert_eq!(code(&o), 3);
    assert!(text(&o).contains("paradox_violations,"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let o = run(&[
        "run",
        "--builtin",
        "cat1",
        "--out",
        "/nonexistent/dir/log.jsonl",
    ]);
    assert_eq!(code(&o), 2);
}
