use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stap(dir: &Path, args: &[&str]) -> Output {
    let mut full = vec![
        "--pools".to_string(),
        fixture("pools.csv"),
        "--prices".to_string(),
        fixture("prices.csv"),
        "--mapping".to_string(),
        fixture("mapping.json"),
    ];
    full.extend(args.iter().map(|s| s.to_string()));
    // Subcommand goes first, its flags after.
    let (sub, rest) = full.split_at(6);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stap"));
    cmd.current_dir(dir).arg(&rest[0]).args(sub).args(&rest[1..]);
    cmd.output().expect("spawn stap")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn ingest_check_reports_filtered_graph() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&stap(dir.path(), &["ingest-check", "--date", "2024-06-21"]));
    assert_eq!(v["pools"].as_array().unwrap().len(), 18);
    assert_eq!(v["tokens"].as_array().unwrap().len(), 11);
    assert_eq!(v["dropped_unmapped"], 7);
    assert_eq!(v["duplicates"], 1);
    assert!(v["tokens"].as_array().unwrap().iter().all(|t| t["degree"].as_u64().unwrap() >= 2));
}

#[test]
fn stap_series_has_one_row_per_day() {
    let dir = tempfile::tempdir().unwrap();
    let out = stap(dir.path(), &["stap-series", "--start", "2024-06-21", "--end", "2024-06-27", "--out", "s.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "date,tvl_usd,tap_usd,stap");
    assert_eq!(lines.len(), 8);
    assert!(lines[1].starts_with("2024-06-21,"));
    for line in &lines[1..] {
        let cols: Vec<f64> = line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        assert!((cols[1] / cols[0] - cols[2]).abs() <= 1e-15);
    }
}

#[test]
fn stap_series_fails_with_date_for_missing_day() {
    let dir = tempfile::tempdir().unwrap();
    let out = stap(dir.path(), &["stap-series", "--start", "2024-06-21", "--end", "2024-06-29"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2024-06-28"), "{err}");
}

#[test]
fn simulate_single_algo_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = stap(
        dir.path(),
        &["simulate", "--snapshot-date", "2024-06-21", "--n", "50", "--algo", "lg", "--out", "t.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,algo,source,target,amount_in,value_in_usd,amount_out,value_out_usd,tvl_after,tap_after,stap_after"
    );
    assert_eq!(lines.count(), 50);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 1);
    assert_eq!(summary["runs"][0]["algo"], "lg");
    assert_eq!(summary["runs"][0]["trades"], 50);
}

#[test]
fn simulate_both_shares_the_task_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = stap(dir.path(), &["simulate", "--snapshot-date", "2024-06-21", "--n", "40", "--out", "t.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pairs = |name: &str| -> Vec<(String, String, String)> {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                (c[2].to_string(), c[3].to_string(), c[4].to_string())
            })
            .collect()
    };
    assert_eq!(pairs("t.dfs.csv"), pairs("t.lg.csv"));
}

#[test]
fn route_by_symbol() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&stap(
        dir.path(),
        &["route", "--date", "2024-06-21", "--source", "UNI", "--target", "link", "--usd", "1000", "--algo", "dfs"],
    ));
    assert_eq!(v["source"], "UNI");
    assert_eq!(v["target"], "LINK");
    assert!(v["amount_out"].as_f64().unwrap() > 0.0);
    let hops = v["hops"]["hops"].as_array().unwrap();
    assert!(!hops.is_empty() && hops.len() <= 4);
}

#[test]
fn verify_passes_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&stap(dir.path(), &["verify", "--date", "2024-06-21"]));
    assert_eq!(v["report"]["all_pass"], true);
    assert_eq!(v["report"]["post_straddles"].as_array().unwrap().len(), 18);
}

#[test]
fn verify_rejects_long_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let out = stap(dir.path(), &["verify", "--date", "2024-06-21", "--max-cycle-len", "6"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eigen_reports_gap_and_distance() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&stap(dir.path(), &["eigen", "--date", "2024-06-21", "--rate-mode", "marginal"]));
    assert_eq!(v["rate_mode"], "marginal");
    let vector = v["eigenvector"].as_array().unwrap();
    assert_eq!(vector.len(), 11);
    let sum: f64 = vector.iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-12);
    let d = v["price_distance"].as_f64().unwrap();
    assert!((0.0..2.0).contains(&d));
}

#[test]
fn config_file_supplies_inputs_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "pools = {:?}\nprices = {:?}\nmapping = {:?}\n[filter]\ntarget_max_pool_count = 12\n",
            fixture("pools.csv"),
            fixture("prices.csv"),
            fixture("mapping.json")
        ),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_stap"))
        .args(["ingest-check", "--config", config.to_str().unwrap(), "--date", "2024-06-21"])
        .output()
        .unwrap();
    let v = json(&out);
    assert!(v["pools"].as_array().unwrap().len() <= 12);

    let missing = Command::new(env!("CARGO_BIN_EXE_stap"))
        .args(["ingest-check", "--date", "2024-06-21"])
        .output()
        .unwrap();
    assert!(!missing.status.success());
}
