use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn apm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("apm runs")
}

fn ok(args: &[&str], out: &Path) {
    let o = apm(args, out);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<BTreeMap<String, String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(String::from)).collect())
        .collect();
    (header, rows)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn f(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

/// Every CSV has a sidecar naming its header and row count, and the
/// manifest hashes every output.
fn check_outputs(dir: &Path) {
    let manifest = json(&dir.join("manifest.json"));
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for o in outputs {
        let name = o["path"].as_str().unwrap();
        let bytes = fs::read(dir.join(name)).unwrap();
        let digest: String = sha2_hex(&bytes);
        assert_eq!(o["sha256"].as_str().unwrap(), digest, "{name}");
        if let Some(stem) = name.strip_suffix(".csv") {
            let schema = json(&dir.join(format!("{stem}.schema.json")));
            let (header, rows) = read_csv(&dir.join(name));
            let names: Vec<&str> = schema["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
            assert_eq!(header, names, "{name}");
            assert_eq!(schema["rows"].as_u64().unwrap() as usize, rows.len(), "{name}");
            for (c, column) in schema["columns"].as_array().unwrap().iter().enumerate() {
                let kind = column["type"].as_str().unwrap();
                for row in &rows {
                    let v = &row[&header[c]];
                    let fine = match kind {
                        "integer" => v.parse::<i64>().is_ok(),
                        "number" => v.is_empty() || v.parse::<f64>().is_ok(),
                        "boolean" => v == "true" || v == "false",
                        _ => true,
                    };
                    assert!(fine, "{name}: {v:?} is not {kind}");
                }
            }
        }
    }
}

fn sha2_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn zero_quota_and_merit_write_identical_allocations() {
    let tmp = tempfile::tempdir().unwrap();
    for economy in ["continuum.json", "discrete.json"] {
        let e = data(economy);
        let e = e.to_str().unwrap();
        let (a, b) = (tmp.path().join(format!("merit-{economy}")), tmp.path().join(format!("quota-{economy}")));
        ok(&["allocate", "--economy", e, "--policy", data("merit.json").to_str().unwrap()], &a);
        ok(&["allocate", "--economy", e, "--policy", data("quota-zero.json").to_str().unwrap()], &b);
        for file in ["allocation.csv", "allocation.schema.json"] {
            assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{economy} {file}");
        }
        check_outputs(&a);
    }
    let agents = read_csv(&tmp.path().join("merit-discrete.json/agents.csv")).1;
    let admitted: Vec<&str> = agents.iter().map(|r| r["admitted"].as_str()).collect();
    assert_eq!(admitted, ["true", "true", "true", "false", "false", "false"]);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["allocate", "--economy", "CONT", "--policy", "MERIT"],
        &["stable", "--market", "MARKET"],
        &["estimate", "--synthetic", "--seed", "3", "--grid-bins", "200"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let args: Vec<String> = args
            .iter()
            .map(|a| match *a {
                "CONT" => data("continuum.json").display().to_string(),
                "MERIT" => data("merit.json").display().to_string(),
                "MARKET" => data("market.json").display().to_string(),
                other => other.to_string(),
            })
            .collect();
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let (a, b) = (tmp.path().join(format!("{i}a")), tmp.path().join(format!("{i}b")));
        ok(&args, &a);
        ok(&args, &b);
        let (ma, mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
        assert_eq!(ma["outputs"], mb["outputs"]);
        assert_eq!(ma["inputs"], mb["inputs"]);
        assert_eq!(ma["parameters"], mb["parameters"]);
        for o in ma["outputs"].as_array().unwrap() {
            let name = o["path"].as_str().unwrap();
            assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
        }
        check_outputs(&a);
    }
}

#[test]
fn bad_inputs_exit_two_with_a_json_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [Vec<String>; 4] = [
        vec!["allocate".into(), "--economy".into(), data("missing.json").display().to_string(), "--policy".into(), data("merit.json").display().to_string()],
        vec!["allocate".into(), "--economy".into(), data("continuum.json").display().to_string(), "--policy".into(), data("policies.json").display().to_string()],
        vec!["allocate".into(), "--economy".into(), data("continuum.json").display().to_string()],
        vec!["selftest".into(), "--only".into(), "11".into()],
    ];
    for args in &cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = apm(&args, &tmp.path().join("x"));
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let line = String::from_utf8(o.stderr).unwrap();
        let d: Value = serde_json::from_str(line.trim()).unwrap_or_else(|_| panic!("not JSON: {line}"));
        assert_eq!(d["status"], "error");
        assert!(["validation", "usage"].contains(&d["kind"].as_str().unwrap()));
        assert!(!d["message"].as_str().unwrap().is_empty());
    }
}

#[test]
fn optimal_apm_tabulates_marginal_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    ok(
        &[
            "optimal-apm",
            "--prefs",
            data("prefs.json").to_str().unwrap(),
            "--economy",
            data("continuum.json").to_str().unwrap(),
            "--grid-bins",
            "7",
        ],
        &out,
    );
    check_outputs(&out);
    let (_, rows) = read_csv(&out.join("boost_curve.csv"));
    assert_eq!(rows.len(), 7);
    for r in &rows {
        let y = f(r, "admitted");
        assert!((f(r, "boost_1") - (1.0 - 8.0 * y)).abs() < 1e-12);
        assert_eq!(f(r, "boost_0"), 0.0);
    }
    let (_, alloc) = read_csv(&out.join("allocation.csv"));
    let total: f64 = alloc.iter().map(|r| f(r, "admitted")).sum();
    assert!((total - 0.3).abs() < 1e-9);
}

#[test]
fn compare_ranks_the_adaptive_policy_first() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    ok(
        &[
            "compare",
            "--belief",
            data("belief.json").to_str().unwrap(),
            "--policy",
            data("policies.json").to_str().unwrap(),
            "--prefs",
            data("prefs.json").to_str().unwrap(),
        ],
        &out,
    );
    check_outputs(&out);
    let (_, rows) = read_csv(&out.join("compare.csv"));
    let best = rows.iter().find(|r| f(r, "shortfall") == 0.0).unwrap();
    assert_eq!(best["policy"], "adaptive");
    assert!(rows.iter().all(|r| f(r, "shortfall") >= 0.0));
    assert_eq!(read_csv(&out.join("states.csv")).1.len(), 8);
}

#[test]
fn weitzman_comparison_flips_sign_at_unit_sensitivity() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("w");
    ok(&["compare", "--weitzman", data("weitzman.json").to_str().unwrap()], &out);
    check_outputs(&out);
    let (_, rows) = read_csv(&out.join("weitzman.csv"));
    assert_eq!(rows.len(), 4);
    let below = rows.iter().filter(|r| f(r, "sensitivity") < 1.0).count();
    assert!(below > 0 && below < rows.len());
    for r in &rows {
        let expected = if f(r, "sensitivity") < 1.0 { "priority" } else { "quota" };
        assert_eq!(r["preferred"], expected);
        assert_eq!(f(r, "delta") > 0.0, f(r, "sensitivity") < 1.0);
    }
}

#[test]
fn h1b_boosts_match_the_visa_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("h");
    ok(&["oracle", "h1b"], &out);
    check_outputs(&out);
    let (_, rows) = read_csv(&out.join("h1b.csv"));
    let alphas: Vec<f64> = rows.iter().map(|r| f(r, "alpha")).collect();
    assert!((alphas[0] - 23.0).abs() <= 1.0 && (alphas[1] - 35.0).abs() <= 1.0, "{alphas:?}");
}

#[test]
fn stable_and_efficient_market_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let market = data("market.json");
    let (s, e) = (tmp.path().join("s"), tmp.path().join("e"));
    ok(&["stable", "--market", market.to_str().unwrap()], &s);
    ok(&["apmq", "--market", market.to_str().unwrap()], &e);
    check_outputs(&s);
    check_outputs(&e);
    let cert = json(&s.join("certificate.json"));
    assert_eq!(cert["stable"], true);
    let stable = cert["welfare"].as_f64().unwrap();
    assert!((stable - 1.25).abs() < 1e-6);
    let summary = json(&e.join("summary.json"));
    assert!(summary["welfare"].as_f64().unwrap() > stable);
    let (_, rows) = read_csv(&e.join("allocation.csv"));
    let north: f64 = rows.iter().filter(|r| r["name"] == "north").map(|r| f(r, "admitted")).sum();
    assert!((north - 0.5).abs() < 1e-6);
}

#[test]
fn two_seat_oracle_brackets_the_crossing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let o = Command::new(env!("CARGO_BIN_EXE_apm"))
        .args(["oracle", "two-seat", "--grid-bins", "40", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    check_outputs(&out);
    let crossing = json(&out.join("crossing.json"));
    assert_eq!(crossing["bracketed"], true);
    assert!((crossing["beta"].as_f64().unwrap() - 0.5).abs() < 1e-2);
}

#[test]
fn estimate_from_records() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    ok(
        &[
            "estimate",
            "--records",
            data("records.csv").to_str().unwrap(),
            "--config",
            data("estimate.json").to_str().unwrap(),
        ],
        &out,
    );
    check_outputs(&out);
    let est = json(&out.join("estimation.json"));
    assert_eq!(est["years"].as_array().unwrap().len(), 2);
    assert_eq!(est["result"]["parameters"].as_array().unwrap().len(), 2);
}

#[test]
fn selftest_runs_a_chosen_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = apm(&["selftest", "--only", "8"], &out);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("criterion  8 equivalent subsidy: PASS"), "{stdout}");
    let (_, rows) = read_csv(&out.join("selftest.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["passed"], "true");
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_apm"))
        .args(["oracle", "h1b"])
        .env("APM_OUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let dir = tmp.path().join("oracle-h1b");
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), dir.display().to_string());
    assert!(dir.join("manifest.json").exists());
}
