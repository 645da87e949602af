use std::fs;

use screening_core::config::{load_config, parse_config, InstanceConfig};
use screening_core::suite::{run_suite, Suite};
use screening_core::Error;

fn quick(text: &str) -> InstanceConfig {
    let mut cfg = parse_config(text, None).unwrap();
    cfg.trials = Some(4);
    cfg
}

#[test]
fn corner_instance_passes_ui_and_smoothing() {
    let cfg = quick("lambda = 1.0\nw = 4.0\n[smoothing]\nn_list = [8, 16]\n");
    assert_eq!(cfg.technology.u1, 0.0);
    for s in [Suite::UiAssns, Suite::Smoothing] {
        let out = run_suite(&cfg, s).unwrap();
        assert!(out.report.passed(), "{}", out.report);
    }
}

#[test]
fn ui_artifact_has_frontier_rows() {
    let cfg = quick("[grid]\nu_step = 0.1\n");
    let out = run_suite(&cfg, Suite::UiAssns).unwrap();
    let (name, csv) = &out.artifacts[0];
    assert_eq!(name, "frontiers.csv");
    assert!(csv.starts_with("u,F0,F1,"));
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn piecewise_frontiers_from_config() {
    let text = r#"
[frontiers.f0]
kind = "piecewise-linear"
hi = 3.0
start = 0.0
breaks = [0.3, 0.6, 1.0]
slopes = [1.0, 0.4, -0.5, -3.0]

[frontiers.f1]
kind = "piecewise-linear"
hi = 3.0
start = 2.0
breaks = [0.1, 0.4, 0.8]
slopes = [0.5, -0.2, -0.8, -2.5]

[smoothing]
n_list = [8, 16, 32]
"#;
    let cfg = quick(text);
    assert_eq!((cfg.technology.u0, cfg.technology.u1), (0.6, 0.1));
    let out = run_suite(&cfg, Suite::Smoothing).unwrap();
    assert!(out.report.passed(), "{}", out.report);
    assert_eq!(out.artifacts.len(), 3);
}

#[test]
fn configured_mixture_is_checked() {
    let text = r#"
[mixture]
members = [
  { probability = 0.5, frontier = { kind = "quadratic", center = 1.0, curvature = 1.0, level = 0.0 } },
  { probability = 0.5, frontier = { kind = "quadratic", center = 3.0, curvature = 1.0, level = 0.0 } },
]
"#;
    let out = run_suite(&quick(text), Suite::Mixture).unwrap();
    assert!(out.report.passed(), "{}", out.report);
    assert!(out.report.checks.iter().any(|c| c.id.starts_with("configured.")));
    assert!(out.artifacts.iter().any(|a| a.0 == "mixture.csv"));
}

#[test]
fn csv_distribution_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.csv"), "t,atom_mass,density\n0,0.25,0\n1,0,0.75\n").unwrap();
    let cfg_path = dir.path().join("instance.toml");
    fs::write(&cfg_path, "[[distributions]]\nname = \"file\"\nkind = \"csv\"\npath = \"g.csv\"\n").unwrap();
    let cfg = load_config(&cfg_path).unwrap();
    let g = &cfg.distributions[0];
    assert_eq!(g.name, "file");
    assert!((g.dist.cdf(0.0) - 0.25).abs() < 1e-15);
}

#[test]
fn bad_configs_are_rejected() {
    let cases = [
        ("lambda = -1.0\n", Some("lambda")),
        ("[verify]\nsuites = [\"bogus\"]\n", Some("verify.suites")),
        ("[verify]\ntrials = 0\n", Some("verify.trials")),
        ("[smoothing]\nn_list = [0]\n", Some("smoothing.n_list")),
        ("unknown_key = 1\n", None),
        ("lambda = \n", None),
    ];
    for (text, key) in cases {
        match (parse_config(text, None), key) {
            (Err(Error::Config { key: got, .. }), Some(want)) => assert_eq!(got, want, "{text}"),
            (Err(Error::Parse { line, .. }), None) => assert!(line >= 1, "{text}"),
            (other, _) => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn verify_section_round_trips() {
    let cfg = parse_config("[verify]\nsuites = [\"ibp\", \"euler\"]\nseed = 7\ntrials = 3\n", None).unwrap();
    assert_eq!(cfg.suites, vec![Suite::Ibp, Suite::Euler]);
    assert_eq!((cfg.seed, cfg.trials), (7, Some(3)));
}

#[test]
fn different_seeds_draw_different_trials() {
    let mut a = quick("");
    let mut b = quick("");
    a.seed = 1;
    b.seed = 2;
    let ja = run_suite(&a, Suite::Concavity).unwrap().report.to_json();
    let jb = run_suite(&b, Suite::Concavity).unwrap().report.to_json();
    assert_ne!(ja, jb);
}
