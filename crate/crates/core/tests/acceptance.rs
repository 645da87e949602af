//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use screening_core::config::InstanceConfig;
use screening_core::fixtures;
use screening_core::smoothing::{build_sequence, verify_monster};
use screening_core::suite::{run_suite, Suite};
use screening_core::technology::Technology;
use screening_core::{Result, VerificationReport};

struct Line {
    passed: bool,
    detail: String,
}

fn from_report(report: &VerificationReport, tol: &str) -> Line {
    let failures: Vec<String> = report.failures().map(|c| c.id.clone()).collect();
    let worst = report.checks.iter().map(|c| c.worst_violation).fold(0.0, f64::max);
    Line {
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{} checks, worst violation {worst:e}, {tol}", report.checks.len())
        } else {
            format!("failed: {}", failures.join(", "))
        },
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let up = f(lo) < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == up {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn default_values() -> Result<Line> {
    const TOL: f64 = 1e-8;
    let tech = fixtures::default_technology()?;
    // phi = sqrt: phi'(phi^-1(y)) = 1/(2y); effort FOC w = 4 L (u + L^2)
    let effort = |u: f64| bisect(1e-12, 10.0, |l| 1.0 - 4.0 * l * (u + l * l));
    let u0 = bisect(1e-9, 10.0, |u| 1.0 / (2.0 * u) - 1.0);
    let u1 = bisect(1e-9, u0, |u| {
        let l = effort(u);
        1.0 / (2.0 * (u + l * l)) - 1.0
    });
    let l_star = tech.effort_star(tech.u1).expect("moral-hazard instance")?;
    let residual = tech.u0 - (tech.u1 + l_star * l_star);
    let errs = [
        (tech.u0 - 0.5).abs(),
        (tech.u1 - 0.25).abs(),
        (l_star - 0.5).abs(),
        (tech.u0 - u0).abs(),
        (tech.u1 - u1).abs(),
        (effort(u1) - l_star).abs(),
        residual.abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok(Line {
        passed: worst < TOL,
        detail: format!(
            "u0 = {}, u1 = {}, L*(u1) = {l_star}, identity residual {residual:e}, worst {worst:e} < {TOL:e}",
            tech.u0, tech.u1
        ),
    })
}

fn ui_assns() -> Result<Line> {
    let mut failures = Vec::new();
    let mut n = 0;
    for (name, w) in [("w=1", 1.0), ("w=4", 4.0)] {
        let mut cfg = InstanceConfig::default_instance()?;
        let tech = if w == 1.0 { fixtures::default_technology()? } else { fixtures::corner_technology()? };
        let corner_ok = w == 1.0 || tech.u1 == 0.0;
        cfg.technology = tech;
        let rep = run_suite(&cfg, Suite::UiAssns)?.report;
        n += rep.checks.len();
        failures.extend(rep.failures().map(|c| format!("{name}:{}", c.id)));
        if !corner_ok {
            failures.push(format!("{name}:corner"));
        }
        if cfg.technology.u_star != 0.0 {
            failures.push(format!("{name}:u_star"));
        }
    }
    Ok(Line {
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{n} checks on both instances, midpoint slack > 1e-10, 200-point gap grid, u1 = 0 corner and u* = 0 detected")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    })
}

fn suite_line(suite: Suite, tol: &str) -> Result<Line> {
    let cfg = InstanceConfig::default_instance()?;
    Ok(from_report(&run_suite(&cfg, suite)?.report, tol))
}

fn smoothing() -> Result<Line> {
    let ns = [8, 16, 32, 64];
    let mut failures = Vec::new();
    let mut n = 0;
    let fixtures: [(&str, Technology); 2] =
        [("smooth", fixtures::corner_technology()?), ("kinked", fixtures::kinked_technology()?)];
    for (name, tech) in fixtures {
        let seq = build_sequence(&tech, &ns)?;
        let rep = verify_monster(&tech, &seq);
        n += rep.checks.len();
        failures.extend(rep.failures().map(|c| format!("{name}:{}", c.id)));
    }
    Ok(Line {
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{n} checks, n in {ns:?}, derivative bounds within 1e-9, gap >= zeta - 2 eps, peaks within 1/n, sup error weakly decreasing")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    })
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Box<dyn Fn() -> Result<Line>>);
    let criteria: Vec<Criterion> = vec![
        ("default instance values", Box::new(default_values)),
        ("model assumptions", Box::new(ui_assns)),
        ("mixture water-filling", Box::new(|| suite_line(Suite::Mixture, "value tol 1e-5, closed form 1e-6, 50 trials"))),
        ("trichotomy", Box::new(|| suite_line(Suite::Saddle, "strict chain exact"))),
        ("no-delay", Box::new(|| suite_line(Suite::NoDelay, "1000 trials, rewrite tol 1e-7"))),
        ("integration by parts", Box::new(|| suite_line(Suite::Ibp, "200 trials, tol 1e-9"))),
        ("gateaux derivative", Box::new(|| suite_line(Suite::Gateaux, "100 trials, relative tol 1e-4"))),
        ("euler equation", Box::new(|| suite_line(Suite::Euler, "residual 1e-9, warm-up 1e-6"))),
        ("strict concavity", Box::new(|| suite_line(Suite::Concavity, "1000 trials, gap > 0"))),
        ("smoothing", Box::new(smoothing)),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let line = run().unwrap_or_else(|e| Line { passed: false, detail: format!("error: {e}") });
        if !line.passed {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} ({:.1}s)",
            if line.passed { "PASS" } else { "FAIL" },
            i + 1,
            line.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed in {:.1}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
