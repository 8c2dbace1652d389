use std::fs;

use shadowlab::certify::certify_lognorm;
use shadowlab::config;
use shadowlab::linalg::{NormKind, Vector};
use shadowlab::pseudo::perturbed_orbit;
use shadowlab::region::Region;
use shadowlab::replicate::{replicate_exm_positive, replicate_revisited, Outcome, ReplicateOptions};
use shadowlab::shadow::{shadow_lognorm, ShadowOptions};
use shadowlab::systems::exm;

#[test]
fn exm_ball_runs_all_pass() {
    let opts = ReplicateOptions {
        runs: 20,
        seed: 4,
        ..Default::default()
    };
    let report = replicate_exm_positive(0.3, &opts).unwrap();
    assert_eq!(report.outcome, Outcome::Passed);
    assert_eq!(report.runs.len(), 20);
    assert!(report.worst_ratio.unwrap() <= 1.0);
    for r in &report.runs {
        assert!(r.sup_dist <= r.bound + 1e-6, "{r:?}");
    }
}

#[test]
fn exm_ball_boundary_not_applicable() {
    let err = replicate_exm_positive(0.5, &ReplicateOptions::default()).unwrap_err();
    assert!(matches!(err, shadowlab::Error::NotApplicable(_)));
}

#[test]
fn revisited_near_boundary() {
    let opts = ReplicateOptions {
        runs: 20,
        seed: 2,
        ..Default::default()
    };
    let report = replicate_revisited(0.45, &opts).unwrap();
    let cert = report.certificate.as_ref().unwrap();
    assert!((cert.assumptions.m.unwrap() - 0.05).abs() < 1e-12);
    assert!((cert.kappa - 20.0).abs() < 1e-9);
    assert_eq!(report.outcome, Outcome::Passed);
}

#[test]
fn trajectory_file_round_trip_shadows() {
    let sys = exm();
    let region = Region::half_line(Vector::from_element(1, -0.3), 0.1, NormKind::Inf).unwrap();
    let y = perturbed_orbit(
        &sys,
        &Vector::from_element(1, 0.8),
        2.0,
        0.01,
        9,
        &region,
        Default::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut csv = Vec::new();
    y.traj.write_csv(&mut csv).unwrap();
    fs::write(dir.path().join("y.csv"), csv).unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(
        &cfg_path,
        r#"
[system]
name = "exm"

[region]
shape = "halfline"
lower = [-0.3]
delta = 0.1

[pseudo]
kind = "file"
file = "y.csv"
"#,
    )
    .unwrap();
    let cfg = config::load(&cfg_path).unwrap();
    let loaded = cfg.pseudo(&sys).unwrap();
    assert_eq!(loaded.grid(), y.grid());
    // finite differences on the stored states recover sigma to a few digits
    assert!((loaded.sigma - y.sigma).abs() < 1e-5, "{} vs {}", loaded.sigma, y.sigma);

    let cert = certify_lognorm(0.2, 0.1).unwrap();
    let r = shadow_lognorm(&sys, &loaded, &cert, &cfg.region().unwrap(), &ShadowOptions::default()).unwrap();
    assert!(r.passed);
}
