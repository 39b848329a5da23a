use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use swipt_core::sim::preset;

fn swipt(args: &[&str], output_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt"))
        .args(args)
        .env("SWIPT_OUTPUT_DIR", output_dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = swipt(
            &["run", "--scenario", "wireless_two_node", "--seed", "7", "--output", out.to_str().unwrap()],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn duplicate_node_id_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = preset("wireless_two_node").unwrap();
    s.nodes[1].id = s.nodes[0].id;
    let path = dir.path().join("dup.json");
    fs::write(&path, s.to_json_pretty()).unwrap();
    let o = swipt(&["run", "--scenario", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&format!("duplicate node id {}", s.nodes[0].id)), "{}", stderr(&o));
}

#[test]
fn malformed_json_exits_one_and_missing_output_dir_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{ \"name\": ").unwrap();
    let o = swipt(&["run", "--scenario", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("nested").join("r.json");
    let o = swipt(&["run", "--scenario", "wired_bench", "--output", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn permissive_abp_preset_reports_accepted_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let o = swipt(&["run", "--scenario", "replay_abp_permissive", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // Default name lands in the output directory from the environment.
    let report: Value =
        serde_json::from_slice(&fs::read(dir.path().join("replay_abp_permissive-3.json")).unwrap()).unwrap();
    let dups = report["injections"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|i| i["outcome"] == "accepted_duplicate")
        .count();
    assert!(dups >= 1);
    assert_eq!(report["seed"], 3);
}

#[test]
fn csv_format_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tables");
    let o = swipt(
        &["run", "--scenario", "wired_bench", "--format", "csv", "--output", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["nodes.csv", "auth.csv", "uplinks.csv", "injections.csv", "events.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let auth = fs::read_to_string(out.join("auth.csv")).unwrap();
    assert!(auth.lines().next().unwrap().starts_with("start_s,end_s,node_id"));
    assert!(auth.contains("accepted"));
}

#[test]
fn linkbudget_prints_wired_figures() {
    let dir = tempfile::tempdir().unwrap();
    let o = swipt(
        &[
            "linkbudget", "--power-dbm", "-10", "--isolation-db", "20", "--forward-loss-db", "0.8",
            "--s11-db", "-0.6", "--distance-m", "1.61",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for want in ["-30.0", "-12.2", "17.8", "35.4"] {
        assert!(text.contains(want), "missing {want} in\n{text}");
    }
}

#[test]
fn ber_sweep_is_csv_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let o = swipt(
        &["ber", "--delta-p-db", "0.5,1,2", "--sigma-db", "0.5", "--trials", "20000"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delta_p_db,ber,stderr"));
    let bers: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(bers.len(), 3);
    assert!(bers.windows(2).all(|w| w[0] > w[1]), "{bers:?}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = swipt(&["fly"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
