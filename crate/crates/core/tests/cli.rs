use std::fs;
use std::process::Command;

fn feederopt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_feederopt"))
}

fn small_config(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("study.toml");
    fs::write(
        &path,
        "nodes = 6\nslots_per_hour = 1\nb_max_pu = 2e-4\ns_max = [1.1, 1.3]\npenetration = [0.5]\nworkers = 1\n",
    )
    .unwrap();
    path
}

#[test]
fn sweep_writes_results_and_details() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let status = feederopt()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--controller", "global,local", "--detail"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(
        lines.next().unwrap(),
        "s_max,a,placement,controller,delta_v,loss_pu,savings,status,iters,wall_ms"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().all(|r| r.contains(",solved,")));
    assert_eq!(fs::read_to_string(out.join("comparison.csv")).unwrap().lines().count(), 1 + 2 * 2);
    for suffix in ["state", "schedule", "solver"] {
        assert!(out.join(format!("detail/smax1.3_a0.5_front_local_{suffix}.csv")).exists());
    }
}

#[test]
fn command_line_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let status = feederopt()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--smax", "1.2", "--placement", "rear", "--controller", "no_control"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(results.lines().nth(1).unwrap().starts_with("1.2,0.5,rear,no_control,"));
    // a single placement cannot be compared
    assert!(!out.join("comparison.csv").exists());
}

#[test]
fn profile_and_qp_dump() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("day.csv");
    assert!(feederopt().arg("profile").arg("--out").arg(&profile).status().unwrap().success());
    let text = fs::read_to_string(&profile).unwrap();
    assert_eq!(text.lines().count(), 25);

    let cfg = small_config(dir.path());
    let qp = dir.path().join("qp.txt");
    let status = feederopt()
        .args(["dump-qp", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&qp)
        .status()
        .unwrap();
    assert!(status.success());
    let dump = fs::read_to_string(&qp).unwrap();
    assert!(dump.starts_with("qp "));
    assert!(dump.lines().any(|l| l.starts_with("A ")));
}

#[test]
fn bad_input_exits_with_error_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "nodez = 4\n").unwrap();
    let out = feederopt()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nodez"));

    let out = feederopt().args(["sweep", "--out", "x", "--smax", "0.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
