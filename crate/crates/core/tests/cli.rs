use std::fs;
use std::path::Path;

use hardylab::cli;

fn run(args: &[&str], out: &Path) -> i32 {
    let mut v: Vec<String> = std::iter::once("hardylab").chain(args.iter().copied()).map(String::from).collect();
    v.extend(["--out".to_string(), out.to_string_lossy().into_owned()]);
    cli::run(v)
}

#[test]
fn documented_examples() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path().join("w");
    assert_eq!(run(&["weights", "--m", "3", "--R", "2.718281828", "--grid", "100"], &w), 0);
    let csv = fs::read_to_string(w.join("weights-t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    assert_eq!(csv.lines().next().unwrap(), "m,t,value");

    let v = tmp.path().join("v");
    assert_eq!(run(&["verify-main", "--domain", "interval:D=1", "--fn", "bump", "--m", "2..8", "--R", "e"], &v), 0);
    let summary = fs::read_to_string(v.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 7 + 1);

    let s = tmp.path().join("s");
    assert_eq!(run(&["series", "--alpha", "1.0", "--fn", "tensor", "--mmax", "10000"], &s), 0);
    let rec = &cli::read_records(&s).unwrap()[0];
    assert_eq!(rec.verdict, "witness");
    assert_eq!(rec.detail["verdict"]["verdict"], "divergence_witness");
}

#[test]
fn report_rebuilds_tables_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(run(&["verify-main", "--fn", "battery", "--m", "2..4"], &a), 0);
    let b = tmp.path().join("b");
    let code = cli::run(
        ["hardylab", "report", "--from", a.to_str().unwrap(), "--out", b.to_str().unwrap()]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    assert_eq!(code, 0);
    for name in ["summary.csv", "verify-main-m.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# weights table\nm = 2\ngrid = 10\n").unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run(&["weights", "--config", cfg.to_str().unwrap(), "--grid", "5"], &out), 0);
    let csv = fs::read_to_string(out.join("weights-t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.lines().nth(1).unwrap().starts_with("2,"));

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(run(&["weights", "--config", cfg.to_str().unwrap()], &out), 1);
}

#[test]
fn validation_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run(&["weights", "--unknown"], &out), 1);
    assert_eq!(run(&["verify-main", "--domain", "torus"], &out), 1);
    assert_eq!(run(&["verify-main", "--fn", "nothing"], &out), 1);
    assert_eq!(run(&["verify-frac", "--s", "0.2"], &out), 1);
    assert_eq!(run(&["series", "--alpha", "-1"], &out), 1);
    assert!(!out.join("results.jsonl").exists());
}

#[test]
fn divergence_outside_counterexample_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run(&["series", "--fn", "plateau", "--alpha", "1.0", "--mmax", "30"], &out), 2);
    let c = tmp.path().join("c");
    assert_eq!(run(&["counterexample"], &c), 0);
    let records = cli::read_records(&c).unwrap();
    assert!(records.iter().any(|r| r.verdict == "witness"));
    assert!(c.join("counterexample-eps.csv").exists());
}

#[test]
fn seed_env_fallback() {
    // Only this test touches the variable.
    let tmp = tempfile::tempdir().unwrap();
    let args = ["bbm", "--domain", "square", "--budget", "20000"];
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    unsafe { std::env::set_var("HARDYLAB_SEED", "9") };
    assert_eq!(run(&args, &a), 0);
    unsafe { std::env::remove_var("HARDYLAB_SEED") };
    assert_eq!(run(&[&args[..], &["--seed", "9"]].concat(), &b), 0);
    assert_eq!(run(&[&args[..], &["--seed", "10"]].concat(), &c), 0);
    let read = |d: &Path| fs::read(d.join("results.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}
