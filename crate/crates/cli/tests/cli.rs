use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tutorsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tutorsim"))
        .args(args)
        .current_dir(dir)
        .env("TUTORSIM_OUT", dir.join("runs"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fractions_run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tutorsim(
        &[
            "run",
            "fractions",
            "--agents",
            "6",
            "--replications",
            "2",
            "--seed",
            "3",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("runs/fractions-seed3");
    for f in [
        "transactions.csv",
        "curves.csv",
        "regression.txt",
        "regression.csv",
        "manifest.json",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["n_agents"], 6);
    let header = fs::read_to_string(dir.join("curves.csv")).unwrap();
    assert!(header.starts_with("condition,position,mean_error,ci_low,ci_high,n"));

    let report = tutorsim(&["report", dir.join("transactions.csv").to_str().unwrap()], tmp.path());
    assert!(report.status.success(), "{}", stderr(&report));
    assert!(stdout(&report).contains("interleaved"));
}

#[test]
fn manifest_reproduces_its_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("a");
    let o = tutorsim(
        &[
            "run",
            "box-arrows",
            "--agents",
            "4",
            "--replications",
            "1",
            "--out",
            first.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let second = tmp.path().join("b");
    let manifest = first.join("manifest.json");
    let o = tutorsim(
        &["run", manifest.to_str().unwrap(), "--out", second.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("transactions.csv")).unwrap(),
        fs::read(second.join("transactions.csv")).unwrap()
    );
}

#[test]
fn toml_config_overrides_the_recipe() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(
        &cfg,
        "study = \"fractions\"\nn_agents = 2\nreplications = 1\nseed = 9\n[fractions.training]\nmultiply = 4\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = tutorsim(
        &["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(out.join("transactions.csv")).unwrap();
    assert!(log.contains(",T028,"));
    assert!(!log.contains(",T029,"));
}

#[test]
fn problem_sets_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let set = tmp.path().join("set.jsonl");
    let o = tutorsim(
        &[
            "gen-problems",
            "fractions",
            "--agents",
            "2",
            "--replications",
            "1",
            "--out",
            set.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&set).unwrap().lines().count(), 2 * (48 + 8));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let base = ["run", "fractions", "--agents", "2", "--replications", "1"];
    let o = tutorsim(&[&base[..], &["--out", a.to_str().unwrap()]].concat(), tmp.path());
    assert!(o.status.success());
    let o = tutorsim(
        &[
            &base[..],
            &["--out", b.to_str().unwrap(), "--problems", set.to_str().unwrap()],
        ]
        .concat(),
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(a.join("transactions.csv")).unwrap(),
        fs::read(b.join("transactions.csv")).unwrap()
    );
}

#[test]
fn zero_agents_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tutorsim(&["run", "fractions", "--agents", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_agents"), "{}", stderr(&o));
}

#[test]
fn unknown_study_and_bad_flags_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(tutorsim(&["run", "geometry"], tmp.path()).status.code(), Some(1));
    assert_eq!(
        tutorsim(&["run", "fractions", "--seed", "x"], tmp.path()).status.code(),
        Some(1)
    );
    assert!(tutorsim(&["--help"], tmp.path()).status.success());
}

#[test]
fn truncated_or_foreign_csv_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tutorsim(
        &["run", "fractions", "--agents", "2", "--replications", "1", "--out", "r"],
        tmp.path(),
    );
    assert!(o.status.success());
    let full = fs::read_to_string(tmp.path().join("r/transactions.csv")).unwrap();
    let cut = &full[..full.len() / 2];
    let cut = &cut[..cut.rfind(',').unwrap()];
    fs::write(tmp.path().join("cut.csv"), cut).unwrap();
    let o = tutorsim(&["report", "cut.csv"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("cut.csv"), "{}", stderr(&o));

    fs::write(tmp.path().join("other.csv"), "a,b,c\n1,2,3\n").unwrap();
    let o = tutorsim(&["report", "other.csv"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("expected columns"), "{}", stderr(&o));
}
