use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_atwflow"));
    c.env("ATWFLOW_THREADS", "2");
    c
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn disk_scenario(extra: &str) -> String {
    format!(
        r#"{{"grid":[64,64],"initial":{{"disk":{{"center":[0.5,0.5],"radius":0.3}}}},"h":2e-3,"horizon":8e-3{extra}}}"#
    )
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file below `dir`, relative path and contents, sorted.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_writes_frames_and_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "disk.json", &disk_scenario(""));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run", "--scenario", s(&sc), "--out", s(&a)]).status.success());
    assert!(run(&["run", "--scenario", s(&sc), "--out", s(&b)]).status.success());
    for k in 0..=4 {
        assert!(a.join(format!("frames/indicator_{k:06}.u8")).exists());
        assert!(a.join(format!("frames/indicator_{k:06}.json")).exists());
        assert!(a.join(format!("polylines/interface_{k:06}.csv")).exists());
    }
    let diag = fs::read_to_string(a.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 5);
    assert!(diag.starts_with("step,time,energy"));
    assert_eq!(snapshot(&a), snapshot(&b));

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let hash = atwflow::scenario::sha256_hex(&fs::read(&sc).unwrap());
    assert_eq!(manifest["scenario_sha256"], hash);
    assert_eq!(manifest["steps"], 4);
}

#[test]
fn schema_errors_exit_2_with_the_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        tmp.path(),
        "bad.json",
        &disk_scenario(r#","phi":{"family":"hexagonal"}"#),
    );
    let out = run(&["run", "--scenario", s(&sc), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("phi"));
    let missing = run(&["run", "--scenario", "/nonexistent/x.json", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn solver_failures_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "tight.json", &disk_scenario(r#","solver":{"max_iterations":10}"#));
    let out = run(&["run", "--scenario", s(&sc), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_runs_the_full_suite_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        tmp.path(),
        "pair.json",
        &disk_scenario(r#","comparison":{"disk":{"center":[0.5,0.5],"radius":0.2}}"#),
    );
    let dir = tmp.path().join("t");
    assert!(run(&["run", "--scenario", s(&sc), "--out", s(&dir)]).status.success());
    let out = run(&["verify", "--trace", s(&dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    for check in atwflow::verify::ALL_CHECKS {
        assert!(report.lines().any(|l| l.starts_with(check)), "{check}");
    }
    assert!(report.contains("comparison,violating cells,pass,0"));
    assert!(dir.join("report.md").exists());

    let some = run(&["verify", "--trace", s(&dir), "--checks", "dissipation,velocity"]);
    assert!(some.status.success());
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);

    assert_eq!(run(&["verify", "--trace", s(&tmp.path().join("none"))]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--trace", s(&dir), "--checks", "bogus"]).status.code(), Some(2));
}

#[test]
fn verify_exits_4_on_a_broken_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        tmp.path(),
        "pair.json",
        &disk_scenario(r#","comparison":{"disk":{"center":[0.5,0.5],"radius":0.2}}"#),
    );
    let dir = tmp.path().join("t");
    assert!(run(&["run", "--scenario", s(&sc), "--out", s(&dir)]).status.success());
    // Swap the last inner frame for the full initial outer disk's complement.
    let outer0 = dir.join("frames/level_000000.f64");
    let inner_last = dir.join("comparison/frames/level_000004.f64");
    let bytes: Vec<u8> = fs::read(&outer0)
        .unwrap()
        .chunks_exact(8)
        .flat_map(|c| (-f64::from_le_bytes(c.try_into().unwrap())).to_le_bytes())
        .collect();
    fs::write(&inner_last, bytes).unwrap();
    let out = run(&["verify", "--trace", s(&dir), "--checks", "comparison"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn levelset_variants_are_ordered_and_single_level_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cone = r#"{"grid":[64,64],"initial":{"disk":{"center":[0.5,0.5],"radius":0.3}},
                  "ladder":{"function":"0.35-sqrt((x-0.5)*(x-0.5)+(y-0.5)*(y-0.5))"},
                  "h":2e-3,"horizon":4e-3}"#;
    let sc = write_scenario(tmp.path(), "cone.json", cone);
    let dir = tmp.path().join("ls");
    let out = run(&["levelset", "--scenario", s(&sc), "--levels", "6", "--variant", "both", "--out", s(&dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("functions/plus_000002.f64").exists());
    assert!(dir.join("functions/minus_000002.json").exists());
    assert!(dir.join("ladder/plus/set_005_000002.u8").exists());
    let csv = fs::read_to_string(dir.join("levelset.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert!(cols[2] == "" || cols[2] == "0");
        assert!(cols[3] == "" || cols[3] == "0");
        assert_eq!(cols[4], "0");
    }

    // m = 1 over u₀ = −level(E₀) is the set flow.
    let sc1 = write_scenario(tmp.path(), "disk.json", &disk_scenario(""));
    let (flow_dir, ls_dir) = (tmp.path().join("flow"), tmp.path().join("ls1"));
    assert!(run(&["run", "--scenario", s(&sc1), "--out", s(&flow_dir)]).status.success());
    assert!(run(&["levelset", "--scenario", s(&sc1), "--levels", "1", "--variant", "minus", "--out", s(&ls_dir)])
        .status
        .success());
    for k in 0..=4 {
        let a = fs::read(flow_dir.join(format!("frames/indicator_{k:06}.u8"))).unwrap();
        let b = fs::read(ls_dir.join(format!("ladder/minus/set_000_{k:06}.u8"))).unwrap();
        assert_eq!(a, b, "step {k}");
    }
}

#[test]
fn convergence_tabulates_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "disk.json", &disk_scenario(""));
    let dir = tmp.path().join("c");
    let out = run(&["convergence", "--scenario", s(&sc), "--ladder", "4e-3,2e-3", "--out", s(&dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("time,gap_0.004_0.002,monotone"));
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.join("velocity.csv").exists());
}
