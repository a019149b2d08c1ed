use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pfens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfens"))
        .args(args)
        .env_remove("PFENS_OUT")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pfens-test-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn kernel_writes_blocks_and_report() {
    let dir = scratch("kernel");
    let o = pfens(&[
        "kernel",
        "--weight",
        "charlier:a=1",
        "--flavor",
        "sympl",
        "--N",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for b in ["k11.csv", "k12.csv", "k21.csv", "k22.csv"] {
        let text = read(&dir, b);
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("# rows="), "{header}");
        assert!(header.contains("weight=charlier:a=1") && header.contains("N=2"));
    }
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "kernel.json")).unwrap();
    assert!(report["route_comparison"]["inversion_vs_rank"].as_f64().unwrap() < 1e-7);
}

#[test]
fn closed_route_records_sign_resolution() {
    let dir = scratch("closed");
    let o = pfens(&[
        "kernel",
        "--weight",
        "meixner:beta=2,c=0.3",
        "--route",
        "closed",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "kernel.json")).unwrap();
    let res = &report["sign_resolution"];
    assert!(res["candidates"].as_array().is_some_and(|c| !c.is_empty()));
    assert!(res["chosen"].is_u64());
}

#[test]
fn invalid_parameters_exit_two() {
    let dir = scratch("invalid");
    let out = dir.to_str().unwrap();
    let o = pfens(&["kernel", "--weight", "meixner:beta=2,c=1.5", "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("c must lie in (0,1)"));
    assert_eq!(code(&pfens(&["verify", "--suite", "nope", "--out", out])), 2);
    assert_eq!(code(&pfens(&["kernel", "--N", "0", "--out", out])), 2);
    assert_eq!(code(&pfens(&["correlate", "--points", "2,2", "--out", out])), 2);
    assert_eq!(code(&pfens(&["kernel", "--flavor", "unitary", "--out", out])), 2);
    assert_eq!(code(&pfens(&["kernel", "--bogus-flag"])), 2);
    assert!(!dir.exists(), "nothing is written for rejected input");
}

#[test]
fn correlate_logs_subsets() {
    let dir = scratch("correlate");
    let o = pfens(&[
        "correlate",
        "--points",
        "3,7",
        "--flavor",
        "sympl",
        "--N",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "correlate.json")).unwrap();
    let subsets = report["subsets"].as_array().unwrap();
    assert_eq!(subsets.len(), 4);
    let signed: f64 = subsets
        .iter()
        .map(|s| s["sign"].as_f64().unwrap() * s["sqrt_det"].as_f64().unwrap())
        .sum();
    let rho = report["rho"].as_f64().unwrap();
    assert!((signed - rho).abs() < 1e-12);
    assert!(rho > 0.0);
}

#[test]
fn verify_oracle_passes() {
    let dir = scratch("oracle");
    let o = pfens(&[
        "verify",
        "--suite",
        "oracle",
        "--weight",
        "charlier:a=1",
        "--N",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "verify-oracle.json")).unwrap();
    assert_eq!(report["pass"], true);
    for c in report["checks"].as_array().unwrap() {
        for key in ["check_id", "reference", "residual", "tolerance", "pass"] {
            assert!(c.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn debruijn_is_reproducible() {
    let a = scratch("db-a");
    let b = scratch("db-b");
    for d in [&a, &b] {
        assert_eq!(
            code(&pfens(&[
                "verify",
                "--suite",
                "debruijn",
                "--seed",
                "7",
                "--out",
                d.to_str().unwrap()
            ])),
            0
        );
    }
    assert_eq!(read(&a, "verify-debruijn.json"), read(&b, "verify-debruijn.json"));
}

#[test]
fn operators_suite_has_eps_map() {
    let dir = scratch("operators");
    let o = pfens(&[
        "verify",
        "--suite",
        "operators",
        "--weight",
        "charlier:a=2",
        "--N",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "verify-operators.json")).unwrap();
    let notes = report["notes"].as_object().unwrap();
    let printed = notes
        .iter()
        .find(|(k, _)| k.contains("eps_closed_as_printed"))
        .expect("printed map")
        .1;
    assert!(!printed["row_residual"].as_array().unwrap().is_empty());
    assert!(notes.keys().any(|k| k.contains("eps_closed_reconciled")));
}

#[test]
fn laguerre_limit_table() {
    let dir = scratch("laguerre");
    let o = pfens(&[
        "limit",
        "--target",
        "laguerre",
        "--alpha",
        "1",
        "--N",
        "1",
        "--schedule",
        "0.9,0.99",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let csv = read(&dir, "limit-laguerre.csv");
    for id in ["ds4,", "s4,", "nabla_plus_s4,", "s4_nabla_minus,", "nabla_s4_nabla,"] {
        assert!(csv.lines().any(|l| l.starts_with(id)), "relation {id} missing");
    }
}

#[test]
fn zmeasure_prop41_reports_error() {
    let dir = scratch("zmeasure");
    let o = pfens(&[
        "zmeasure",
        "--check",
        "prop41",
        "--beta",
        "2",
        "--xi",
        "0.3",
        "--N",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "zmeasure-prop41.json")).unwrap();
    assert!(report["report"]["max_relative"].as_f64().unwrap() < 1e-10);
}

#[test]
fn config_file_and_environment() {
    let dir = scratch("config");
    fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    fs::write(
        &cfg,
        "# small run\nweight = meixner:beta=2,c=0.3\nN = 1\nflavor = orth\n",
    )
    .unwrap();
    let env_out = dir.join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_pfens"))
        .args(["kernel", "--config", cfg.to_str().unwrap(), "--N", "2"])
        .env("PFENS_OUT", &env_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let header = read(&env_out, "k11.csv");
    let header = header.lines().next().unwrap();
    assert!(header.contains("weight=meixner:beta=2,c=0.3"));
    assert!(header.contains("N=2") && header.contains("flavor=orth"), "{header}");
}
