use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_shadowlab"));
    c.env_remove("SHADOWLAB_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn shadowlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", stdout(o)))
}

#[test]
fn lognorm_zero_matrix_prints_zero_for_every_norm() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("zero.csv");
    fs::write(&p, "# zero\n0,0,0\n0,0,0\n\n0,0,0\n").unwrap();
    let o = run(&["lognorm", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for (line, name) in lines.iter().zip(["inf", "one", "two"]) {
        let mut parts = line.split_whitespace();
        assert_eq!(parts.next(), Some(name));
        assert_eq!(parts.next().unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn lognorm_single_norm() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.csv");
    fs::write(&p, "-2, 1\n3, -4\n").unwrap();
    let o = run(&["lognorm", p.to_str().unwrap(), "--norm", "inf"]);
    assert_eq!(o.status.code(), Some(0));
    // max(-2 + 1, -4 + 3) = -1
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), -1.0);
}

#[test]
fn lognorm_ragged_matrix_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "1,2\n3\n").unwrap();
    let o = run(&["lognorm", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}

#[test]
fn certify_lognorm_closed_form() {
    let o = run(&["certify", "--route", "lognorm", "--m", "0.2", "--delta", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["route"], "LogNorm");
    assert!((v["eps0"].as_f64().unwrap() - 0.02).abs() < 1e-15);
    assert!((v["kappa"].as_f64().unwrap() - 5.0).abs() < 1e-15);
}

#[test]
fn certify_t2_and_gen_boundary() {
    let o = run(&[
        "certify",
        "--route",
        "t2",
        "--n",
        "1",
        "--lambda",
        "1",
        "--l",
        "0.5",
        "--delta",
        "1",
        "--kind",
        "contraction",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let kappa = json(&o)["kappa"].as_f64().unwrap();
    assert!((kappa - 2.0).abs() < 1e-12);

    let gen = |rho: &str| {
        run(&[
            "certify",
            "--route",
            "gen",
            "--n",
            "1",
            "--lambda",
            "1",
            "--growth",
            "0,2",
            "--rho",
            rho,
            "--kind",
            "contraction",
        ])
    };
    assert_eq!(gen("0.49").status.code(), Some(0));
    assert_eq!(gen("0.5").status.code(), Some(1));
}

#[test]
fn certify_missing_constant_is_an_error() {
    let o = run(&["certify", "--route", "t1", "--n", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["lognorm", "x.csv", "--norm", "three"]).status.code(), Some(2));
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "seed = 1\n\n[system]\nname = \"exm\"\nnorm = [\n").unwrap();
    let o = run(&["shadow", "--route", "lognorm", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line "), "{err}");

    fs::write(&p, "[system]\nname = \"exm\"\n\n[region]\nshape = \"donut\"\n").unwrap();
    let o = run(&["certify", "--route", "lognorm", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5") && err.contains("donut"), "{err}");
}

#[test]
fn exm_counter_certifies_failure() {
    let o = run(&[
        "--no-timestamp",
        "replicate",
        "exm-counter",
        "--delta",
        "0.01",
        "--kappa",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: toml::Value = toml::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["outcome"].as_str(), Some("failure_certified"));
    let gap = v["parameters"]["min_gap_lower"].as_float().unwrap();
    assert!(gap > 10.0 * 1e-4);
}

#[test]
fn si_negative_certifies_failure() {
    let o = run(&[
        "--no-timestamp",
        "replicate",
        "si",
        "--c",
        "0",
        "--epsilon",
        "1e-4",
        "--kappa",
        "40",
        "--horizon",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn replicate_is_deterministic_without_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| {
        vec![
            "--no-timestamp".to_string(),
            "replicate".into(),
            "revisited".into(),
            "--rho".into(),
            "0.3".into(),
            "--runs".into(),
            "4".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let oa = bin().args(args(&a)).output().unwrap();
    let ob = bin().args(args(&b)).output().unwrap();
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(oa.stdout, ob.stdout);
    for name in ["summary.toml", "certificate.json", "pseudo_00.csv", "shadow_03.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    assert!(!String::from_utf8_lossy(&oa.stdout).contains("generated_unix"));
}

#[test]
fn seed_env_overrides_config_but_not_flag() {
    let summary = |env: Option<&str>, flag: Option<&str>| {
        let mut c = bin();
        c.args(["--no-timestamp", "replicate", "revisited", "--runs", "2"]);
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        if let Some(e) = env {
            c.env("SHADOWLAB_SEED", e);
        }
        c.output().unwrap().stdout
    };
    let plain = summary(None, Some("5"));
    assert_eq!(summary(Some("5"), None), plain);
    assert_eq!(summary(Some("9"), Some("5")), plain);
    assert_ne!(summary(Some("9"), None), plain);
}

#[test]
fn shadow_configs_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs();
    let o = run(&[
        "--no-timestamp",
        "shadow",
        "--route",
        "lognorm",
        cfg.join("revisited.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["passed"], true);
    let csv = fs::read_to_string(dir.path().join("shadow.csv")).unwrap();
    assert!(csv.starts_with("t,"));
    assert!(dir.path().join("certificate.json").exists());

    let o = run(&[
        "--no-timestamp",
        "shadow",
        "--route",
        "dichotomy",
        cfg.join("saddle.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert!(v["sup_dist"].as_f64().unwrap() <= v["bound"].as_f64().unwrap());
}

#[test]
fn shadow_timestamp_only_when_requested() {
    let cfg = configs().join("revisited.toml");
    let with = run(&["shadow", "--route", "lognorm", cfg.to_str().unwrap()]);
    let without = run(&["--no-timestamp", "shadow", "--route", "lognorm", cfg.to_str().unwrap()]);
    assert!(json(&with).get("generated_unix").is_some());
    assert!(json(&without).get("generated_unix").is_none());
}

#[test]
fn relocate_and_verify_configs() {
    let cfg = configs();
    let o = run(&["relocate", cfg.join("relocate.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["within_ball"], true);
    assert!(v["error_gap"].as_f64().unwrap() <= 1e-6);

    let o = run(&["verify-dichotomy", cfg.join("saddle.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("passed = true"));
}

#[test]
fn verify_dichotomy_rejects_wrong_projection() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("wrong.toml");
    let text = fs::read_to_string(configs().join("saddle.toml")).unwrap().replace(
        "projection = [[1.0, 0.0], [0.0, 0.0]]",
        "projection = [[0.0, 0.0], [0.0, 1.0]]",
    );
    fs::write(&p, text).unwrap();
    let o = run(&["verify-dichotomy", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
