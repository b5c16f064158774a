use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stirring(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stirring"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn tables(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "tsv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn every_subcommand_writes_its_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cases: &[(&[&str], &[&str])] = &[
        (&["simulate", "-N", "2", "--out", "sim"], &["trajectory.csv"]),
        (&["simulate", "-N", "1", "--initial", "x1x", "--out", "simc"], &["coupled.csv"]),
        (&["survival", "-N", "2", "--replicas", "500", "--out", "surv"], &["survival.csv", "fit.csv", "tv_bound.csv"]),
        (&["scaling", "--n-list", "1,2", "--replicas", "300", "--out", "scal"], &["scaling.csv", "fits.csv", "survival_n2.csv"]),
        (&["stationary", "-N", "2", "--model", "density", "--replicas", "4", "--out", "stat"], &["profile.csv", "profile_fit.txt"]),
        (&["auxwalk", "-N", "1", "--replicas", "2000", "--aux-replicas", "300", "--horizon", "5", "--out", "aux"], &["rates.csv", "aux_survival.csv", "resolution.csv"]),
        (&["oracle", "--model", "current", "-N", "1", "--out", "orc"], &["generator.txt", "stationary.csv", "tv_decay.csv", "gap.txt"]),
        (&["compare", "-N", "1", "--replicas", "2000", "--horizon", "5", "--bootstrap", "20", "--out", "cmp"], &["compare.csv", "ks.txt", "rates.csv"]),
        (&["fk", "-N", "3", "--horizon", "10", "--out", "fk"], &["fk.csv", "decay.txt"]),
        (&["floor", "-N", "2", "--replicas", "200", "--out", "flr"], &["floor.csv", "floor.txt"]),
    ];
    for (args, files) in cases {
        let out = stirring(d, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let dir = d.join(args[args.len() - 1]);
        for f in files.iter().chain(&["manifest.txt"]) {
            assert!(dir.join(f).is_file(), "{args:?} did not write {f}");
        }
    }
}

#[test]
fn reruns_and_thread_counts_give_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let base = ["survival", "-N", "3", "--replicas", "2000", "--seed", "7"];
    for (out, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let mut args = base.to_vec();
        args.extend(["--out", out, "--threads", threads]);
        assert!(stirring(d, &args).status.success());
    }
    let a = tables(&d.join("a"));
    assert!(!a.is_empty());
    assert_eq!(a, tables(&d.join("b")));
    assert_eq!(a, tables(&d.join("c")));
    let mut args = base.to_vec();
    args.extend(["--out", "e", "--seed", "8"]);
    assert!(stirring(d, &args).status.success());
    assert_ne!(a, tables(&d.join("e")));
}

#[test]
fn manifest_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = stirring(
        d,
        &["compare", "--model", "density", "-N", "1", "--rho-plus", "0.9", "--rho-minus", "0.2", "--replicas", "3000", "--horizon", "5", "--bootstrap", "10", "--seed", "3", "--out", "first"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    fs::copy(d.join("first/manifest.txt"), d.join("replay.conf")).unwrap();
    let out = stirring(d, &["--config", "replay.conf", "--out", "second"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(tables(&d.join("first")), tables(&d.join("second")));
    assert_eq!(fs::read(d.join("first/ks.txt")).unwrap(), fs::read(d.join("second/ks.txt")).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.conf"), "# floor check\ncommand=floor\nN=2\nreplicas=100\nout=cfg\n").unwrap();
    let out = stirring(d, &["--config", "run.conf", "--replicas", "150"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(d.join("cfg/floor.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",150"));
}

#[test]
fn validation_failures_are_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = stirring(d, &["survival", "--model", "density", "-N", "0", "--rho-plus", "0.1", "--rho-minus", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert!(lines.len() >= 2, "{err}");
    assert!(lines.iter().all(|l| l.starts_with("error kind=validation message=")), "{err}");
    assert!(!d.join("out").exists());

    let out = stirring(d, &["oracle", "-N", "7"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=guard"));

    let out = stirring(d, &["stationary", "--model", "current", "-N", "2", "--rho-minus", "0.1"]);
    assert_eq!(out.status.code(), Some(2));

    // a horizon far past the last coupled survivor leaves bins without support
    let out = stirring(d, &["compare", "-N", "1", "--replicas", "50", "--horizon", "400", "--out", "sparse"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=missing_rates"));
}

#[test]
fn tsv_format() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(stirring(d, &["fk", "-N", "1", "--horizon", "1", "--format", "tsv"]).status.success());
    let body = fs::read_to_string(d.join("out/fk.tsv")).unwrap();
    assert!(body.starts_with("t\tsite\tpi\n"));
}
