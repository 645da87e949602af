//! Verification suites. Each suite dispatches to the owning module, runs
//! randomized trials in parallel with per-trial seeded generators, and
//! returns a report with CSV artifacts.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::InstanceConfig;
use crate::distribution::{BreakthroughDistribution, Measure, Segment};
use crate::error::{Error, Result};
use crate::export;
use crate::fixtures;
use crate::frontier::{Quadratic, SharedFrontier};
use crate::gap::{classify_u_star, GapKind};
use crate::mechanism::{
    dominance_check, mass_where, no_delay_improve, normalize, payoff, payoff_affine_rewrite, Mechanism, PostPromise,
};
use crate::mixture::{mixture_value, verify_mixture_regularity, FrontierDistribution, MixtureOptions};
use crate::numeric::linspace;
use crate::path::StepPath;
use crate::report::{Check, VerificationReport};
use crate::smoothing::{build_sequence, verify_monster};
use crate::technology::{verify_ui_assumptions, Technology};
use crate::variational::{
    euler_residual, gateaux_closed_form, gateaux_fd, integrability_bounds, stieltjes_ibp, strict_concavity_probe,
    warm_up_identity, SupergradientProfile, EULER_TOL, FD_ALPHAS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Suite {
    UiAssns,
    Mixture,
    Saddle,
    NoDelay,
    Euler,
    Gateaux,
    Ibp,
    Smoothing,
    Concavity,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::UiAssns,
        Suite::Mixture,
        Suite::Saddle,
        Suite::NoDelay,
        Suite::Euler,
        Suite::Gateaux,
        Suite::Ibp,
        Suite::Smoothing,
        Suite::Concavity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::UiAssns => "ui-assns",
            Suite::Mixture => "mixture",
            Suite::Saddle => "saddle",
            Suite::NoDelay => "no-delay",
            Suite::Euler => "euler",
            Suite::Gateaux => "gateaux",
            Suite::Ibp => "ibp",
            Suite::Smoothing => "smoothing",
            Suite::Concavity => "concavity",
        }
    }

    /// Trial count when none is configured.
    pub fn default_trials(self) -> usize {
        match self {
            Suite::Mixture => 50,
            Suite::Gateaux => 100,
            Suite::Ibp => 200,
            Suite::NoDelay | Suite::Concavity => 1000,
            _ => 0,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
            Error::config("suite", format!("unknown suite `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// A report plus `(file name, contents)` artifacts.
#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub report: VerificationReport,
    pub artifacts: Vec<(String, String)>,
}

fn trial_rng(seed: u64, suite: Suite, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((suite as u64) << 32) | trial as u64);
    rng
}

/// Runs `f` on every trial in parallel; results come back in trial order.
fn trials<T: Send>(cfg: &InstanceConfig, suite: Suite, f: impl Fn(usize, &mut ChaCha8Rng) -> T + Sync) -> Vec<T> {
    let n = cfg.trials.unwrap_or(suite.default_trials());
    (0..n)
        .into_par_iter()
        .map(|i| f(i, &mut trial_rng(cfg.seed, suite, i)))
        .collect()
}

pub fn run_suite(cfg: &InstanceConfig, suite: Suite) -> Result<SuiteOutcome> {
    let mut outcome = match suite {
        Suite::UiAssns => ui_assns(cfg),
        Suite::Mixture => mixture(cfg),
        Suite::Saddle => saddle(cfg),
        Suite::NoDelay => no_delay(cfg),
        Suite::Euler => euler(cfg),
        Suite::Gateaux => gateaux(cfg),
        Suite::Ibp => ibp(cfg),
        Suite::Smoothing => smoothing(cfg),
        Suite::Concavity => concavity(cfg),
    }?;
    outcome.report.suite = suite.name().to_string();
    Ok(outcome)
}

fn only(report: VerificationReport) -> SuiteOutcome {
    SuiteOutcome { report, artifacts: Vec::new() }
}

/// Largest value in `vals` with its index; `None` when empty.
fn worst(vals: &[f64]) -> Option<(usize, f64)> {
    vals.iter()
        .copied()
        .enumerate()
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, w)) if !(v > w) && !v.is_nan() => acc,
            _ => Some((i, v)),
        })
}

/// One check summarizing per-trial violations (`<= 0` passes).
fn summarize(id: &str, violations: &[f64], what: &str) -> Check {
    match worst(violations) {
        None => Check::not_applicable(id, "no trials"),
        Some((i, w)) => Check::new(id, w <= 0.0, w.max(0.0))
            .at(format!("trial {i}"))
            .note(format!("{} trials, {what}", violations.len())),
    }
}

fn failed_trials(id: &str, errors: &[(usize, String)]) -> Option<Check> {
    errors.first().map(|(i, e)| {
        Check::new(id, false, f64::INFINITY)
            .at(format!("trial {i}"))
            .note(format!("{} trial(s) errored; first: {e}", errors.len()))
    })
}

fn ui_assns(cfg: &InstanceConfig) -> Result<SuiteOutcome> {
    let tech = &cfg.technology;
    let grid: Vec<f64> = linspace(0.0, tech.u0, 201).into_iter().skip(1).collect();
    let report = verify_ui_assumptions(tech, &grid);
    let csv = export::frontiers_csv(tech, &cfg.grid.u_points(tech.u0));
    Ok(SuiteOutcome { report, artifacts: vec![("frontiers.csv".into(), csv)] })
}

// ---------------------------------------------------------------- mixture

/// Grid search over allocations, refined by repeated zooming around the best
/// point: an oracle independent of supergradient equalization.
pub fn brute_force_mixture(dist: &FrontierDistribution, u: f64) -> f64 {
    let probs = dist.probabilities();
    let k = probs.len();
    let total = |x: &[f64]| -> f64 {
        let used: f64 = x.iter().zip(&probs).map(|(a, p)| a * p).sum();
        let last = (u - used) / probs[k - 1];
        if last < 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut v = dist.members()[k - 1].0.eval(last) * probs[k - 1];
        for (i, &xi) in x.iter().enumerate() {
            v += dist.members()[i].0.eval(xi) * probs[i];
        }
        v
    };
    if k == 1 {
        return total(&[]);
    }
    let dims = k - 1;
    let per = match dims {
        1 => 257,
        2 => 33,
        _ => 13,
    };
    let mut lo: Vec<f64> = vec![0.0; dims];
    let mut hi: Vec<f64> = (0..dims).map(|i| u / probs[i]).collect();
    let mut best = f64::NEG_INFINITY;
    let mut best_x = lo.clone();
    for _ in 0..60 {
        let mut idx = vec![0usize; dims];
        loop {
            let x: Vec<f64> = (0..dims)
                .map(|d| lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / (per - 1) as f64)
                .collect();
            let v = total(&x);
            if v > best {
                best = v;
                best_x = x;
            }
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] < per {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        for d in 0..dims {
            let half = 0.5 * (hi[d] - lo[d]) * 0.5;
            let cap = u / probs[d];
            lo[d] = (best_x[d] - half).max(0.0);
            hi[d] = (best_x[d] + half).min(cap);
        }
    }
    best
}

fn random_quadratic_mixture(rng: &mut ChaCha8Rng) -> Result<FrontierDistribution> {
    let k = rng.gen_range(2..=4);
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    let members = weights
        .iter()
        .map(|w| {
            let q = Quadratic::new(rng.gen_range(0.0..2.0), rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0), 0.0, f64::INFINITY)?;
            Ok((std::sync::Arc::new(q) as SharedFrontier, w / sum))
        })
        .collect::<Result<Vec<_>>>()?;
    FrontierDistribution::new(members)
}

fn mixture(cfg: &InstanceConfig) -> Result<SuiteOutcome> {
    let mut report = VerificationReport::new("mixture");
    let mut artifacts = Vec::new();
    if let Some((dist, opts)) = &cfg.mixture {
        let top = (0..dist.len()).map(|i| dist.members()[i].0.peak()).fold(0.0, f64::max) * 1.5 + 0.5;
        let mut sub = verify_mixture_regularity(dist, &linspace(0.0, top, 61));
        sub.suite = "configured".into();
        prefix_into(&mut report, "configured", sub);
        let grid = cfg.grid.u_points(top);
        artifacts.push(("mixture.csv".into(), export::mixture_csv(dist, *opts, &grid)?));
    }

    let pair = fixtures::quadratic_pair_mixture()?;
    let errs: Vec<f64> = linspace(1.0, 4.0, 61)
        .into_iter()
        .map(|u| {
            mixture_value(&pair, u, MixtureOptions::default())
                .map(|r| (r.value.to_f64() + (u - 2.0).powi(2)).abs())
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let (i, w) = worst(&errs).expect("nonempty grid");
    report.push(
        Check::new("quadratic_pair_closed_form", w < 1e-6, w)
            .at(format!("u={}", 1.0 + 0.05 * i as f64))
            .note("F1 = -(u - 2)^2 on u >= 1"),
    );
    prefix_into(&mut report, "quadratic_pair", verify_mixture_regularity(&pair, &linspace(0.0, 4.0, 41)));

    let results = trials(cfg, Suite::Mixture, |_, rng| -> Result<(f64, usize)> {
        let dist = random_quadratic_mixture(rng)?;
        let u = rng.gen_range(0.0..3.0);
        let wf = mixture_value(&dist, u, MixtureOptions::default())?.value.to_f64();
        let bf = brute_force_mixture(&dist, u);
        Ok(((wf - bf).abs(), dist.len()))
    });
    let mut errors = Vec::new();
    let mut gaps = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((d, _)) => gaps.push(d - 1e-5),
            Err(e) => errors.push((i, e.to_string())),
        }
    }
    report.push(summarize("water_filling_vs_brute_force", &gaps, "|water-filling - grid maximum| <= 1e-5"));
    if let Some(c) = failed_trials("water_filling_errors", &errors) {
        report.push(c);
    }
    Ok(SuiteOutcome { report, artifacts })
}

fn prefix_into(report: &mut VerificationReport, prefix: &str, sub: VerificationReport) {
    for mut c in sub.checks {
        c.id = format!("{prefix}.{}", c.id);
        report.push(c);
    }
}

// ---------------------------------------------------------------- saddle

fn saddle(cfg: &InstanceConfig) -> Result<SuiteOutcome> {
    let mut report = VerificationReport::new("saddle");
    let cases = [
        ("local_max", fixtures::local_max_technology()?, GapKind::LocalMax),
        ("saddle", fixtures::saddle_technology()?, GapKind::Saddle),
        ("mutual_kink", fixtures::mutual_kink_technology()?, GapKind::MutualKink),
    ];
    for (name, tech, want) in cases {
        let c = classify_u_star(&tech)?;
        let mut note = format!("classified {:?} at u* = {}", c.kind, c.witness.u_star);
        if let Some(s) = &c.witness.saddle {
            note.push_str(&format!("; {}", s.note));
        }
        report.push(Check::new(format!("{name}.kind"), c.kind == want, 0.0).note(note));
        if want == GapKind::MutualKink {
            let w = &c.witness;
            let (f0m, f0p) = w.f0;
            let (f1m, f1p) = w.f1;
            let (lo, hi) = (w.shared.lo.to_f64(), w.shared.hi.to_f64());
            let eta = 0.5 * (lo + hi);
            let chain = f1p < f0p && f0p <= eta && eta <= f1m && f1m < f0m && !w.shared.is_empty();
            report.push(
                Check::new(format!("{name}.chain"), chain, 0.0).note(format!(
                    "F1+ = {f1p} < F0+ = {f0p} <= eta = {eta} <= F1- = {f1m} < F0- = {f0m}, shared [{lo}, {hi}]"
                )),
            );
        }
    }
    report.push(match classify_u_star(&cfg.technology) {
        Ok(c) => Check::new("configured.classification", true, 0.0).note(format!("{:?}", c.kind)),
        Err(Error::UStarAtOrigin) => Check::not_applicable("configured.classification", "u* = 0"),
        Err(e) => Check::new("configured.classification", false, f64::INFINITY).note(e.to_string()),
    });
    Ok(only(report))
}

// ---------------------------------------------------------------- no-delay

/// Random distribution on `[0, 3]` plus an exponential tail carrying at
/// least a fifth of the mass. `atom_at_zero` allows an atom at `t = 0`.
pub fn random_distribution(rng: &mut ChaCha8Rng, atom_at_zero: bool) -> Result<BreakthroughDistribution> {
    let k = rng.gen_range(1..=4);
    let mut times: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..3.0)).collect();
    times.push(0.0);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let tail_mass = rng.gen_range(0.2..0.7);
    let raw: Vec<(f64, f64)> = times
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let atom = if rng.gen_bool(0.4) && (i > 0 || atom_at_zero) { rng.gen_range(0.0..1.0) } else { 0.0 };
            let cell = if i + 1 < times.len() && rng.gen_bool(0.7) { rng.gen_range(0.0..1.0) } else { 0.0 };
            (atom, cell)
        })
        .collect();
    let sum: f64 = raw.iter().map(|r| r.0 + r.1).sum();
    let scale = if sum > 0.0 { (1.0 - tail_mass) / sum } else { 0.0 };
    let tail_mass = if sum > 0.0 { tail_mass } else { 1.0 };
    let rate = rng.gen_range(0.3..2.0);
    let n = times.len();
    let rows: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let dens = if i + 1 < n { raw[i].1 * scale / (times[i + 1] - times[i]) } else { tail_mass * rate };
            (times[i], raw[i].0 * scale, dens)
        })
        .collect();
    BreakthroughDistribution::from_rows(&rows)
}

/// Step flow with up to four breaks in `(0, 4)` and values in `[lo, hi]`.
pub fn random_flow(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Result<StepPath> {
    let k = rng.gen_range(0..=4);
    let mut breaks: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..4.0)).collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let values = breaks.iter().map(|_| rng.gen_range(lo..=hi)).collect();
    StepPath::new(breaks, values)
}

fn random_post(rng: &mut ChaCha8Rng, tech: &Technology) -> Result<PostPromise> {
    Ok(match rng.gen_range(0..3) {
        0 => PostPromise::Continuation,
        1 => PostPromise::Premium(random_flow(rng, 0.0, tech.u0)?),
        _ => PostPromise::NoDelay { u1: tech.u1 },
    })
}

fn no_delay(cfg: &InstanceConfig) -> Result<SuiteOutcome> {
    let mut report = VerificationReport::new("no-delay");
    let tech = &cfg.technology;
    let r = cfg.grid.time.r;
    let results = trials(cfg, Suite::NoDelay, |_, rng| -> Result<(f64, f64, bool)> {
        let m = Mechanism::new(random_flow(rng, 0.0, tech.u0)?, random_post(rng, tech)?, r)?;
        let g = random_distribution(rng, true)?;
        let better = no_delay_improve(&m, tech);
        let (p_old, p_new) = (payoff(&m, tech, &g)?, payoff(&better, tech, &g)?);
        let mut cuts = m.x1_breaks();
        cuts.extend(better.x1_breaks());
        let changed = mass_where(&g, &cuts, &|t| (m.big_x1(t) - better.big_x1(t)).abs() > 1e-12);
        let scale = 1.0 + p_old.abs();
        Ok((p_new - p_old, scale, changed > 1e-6))
    });
    let mut errors = Vec::new();
    let mut decrease = Vec::new();
    let mut strict = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok((gain, scale, must_be_strict)) => {
                decrease.push(-gain - 1e-12 * scale);
                if must_be_strict {
                    strict.push(if gain > 0.0 { 0.0 } else { -gain + f64::MIN_POSITIVE });
                }
            }
            Err(e) => errors.push((i, e.to_string())),
        }
    }
    report.push(summarize("improve_never_decreases", &decrease, "payoff(no-delay) >= payoff"));
    report.push(summarize("improve_strict_on_changed_mass", &strict, "strict gain where G charges the changed set"));
    if let Some(c) = failed_trials("improve_errors", &errors) {
        report.push(c);
    }

    // dominance by the deadline twin on the affine fixture
    let affine = fixtures::affine_technology()?;
    let two_step = fixtures::two_step_mechanism(&affine, r)?;
    let family = vec![fixtures::atom_at(0.5)?, BreakthroughDistribution::exponential(1.0)?, fixtures::atom_at(10.0)?];
    let dom = dominance_check(&two_step, &affine, &family, &cfg.grid.time);
    let strict_atom = dom.check("payoff_order[0]").is_some_and(|c| c.passed && c.note.as_deref().is_some_and(|n| n.contains("strict")));
    prefix_into(&mut report, "dominance", dom);
    report.push(Check::new("dominance.strict_under_atom_0.5", strict_atom, 0.0));

    let results = trials(cfg, Suite::NoDelay, |_, rng| -> Result<f64> {
        let x = random_flow(rng, 0.0, affine.u0)?;
        let m = normalize(&Mechanism::new(x, PostPromise::Continuation, r)?, &affine);
        let g = random_distribution(rng, false)?;
        Ok((payoff(&m, &affine, &g)? - payoff_affine_rewrite(&m, &affine, &g)?).abs())
    });
    let mut errors = Vec::new();
    let mut diffs = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(d) => diffs.push(d - 1e-7),
            Err(e) => errors.push((i, e.to_string())),
        }
    }
    report.push(summarize("affine_rewrite_agrees", &diffs, "|payoff - rewrite| <= 1e-7"));
    if let Some(c) = failed_trials("affine_rewrite_errors", &errors) {
        report.push(c);
    }
    Ok(only(report))
}

// ---------------------------------------------------------------- euler

fn euler(cfg: &InstanceConfig) -> Result<SuiteOutcome> {
    let mut report = VerificationReport::new("euler");
    let grid = cfg.grid.time;
    let g = BreakthroughDistribution::exponential(1.0)?;
    let mut prof = SupergradientProfile::new(|t: f64| t.exp_m1(), |_| -1.0, vec![]);
    if cfg.euler_perturbation != 0.0 {
        let a = (1.0 / grid.step).round() * grid.step;
        prof = prof.perturb_phi0(a, a + grid.step, cfg.euler_perturbation);
    }
    let res = euler_residual(&prof, &g, &grid);
    let abs: Vec<f64> = res.iter().map(|p| p.residual.abs()).collect();
    report.push(match worst(&abs) {
        None => Check::not_applicable("residual", "no grid points with G < 1"),
        Some((i, w)) => Check::new("residual", w < EULER_TOL, w)
            .at(format!("t={}", res[i].t))
            .note(format!("max |[1-G] phi0 + int phi1 dG| over {} points", res.len())),
    });

    let ib = integrability_bounds(&prof, &g, &grid, 0.5 * cfg.technology.u0, None);
    report.push(if ib.bound_asserted {
        Check::new("integrability_bound", ib.bound_holds, (-ib.slack).max(0.0)).note(format!(
            "E Phi = {}, E|phi1| = {}, slack {:e}",
            ib.capital_phi_expectation, ib.phi1_abs_expectation, ib.slack
        ))
    } else {
        Check::not_applicable("integrability_bound", format!("residual {:e} is not zero", ib.max_abs_residual))
    });
    if cfg.euler_perturbation == 0.0 {
        let d = (ib.capital_phi_expectation - 0.5).abs().max((ib.phi1_abs_expectation - 1.0).abs());
        report.push(Check::new("construct_and_check_values", d < 1e-8, d).note("E Phi = 1/2, E|phi1| = 1 for exponential(1)"));
    }

    let mut gs = vec![("exp1".to_string(), g.clone())];
    gs.extend(cfg.distributions.iter().map(|d| (d.name.clone(), d.dist.clone())));
    for (name, dist) in gs {
        let id = format!("warm_up[{name}]");
        report.push(if !dist.atoms().is_empty() {
            Check::not_applicable(id, "G has atoms")
        } else {
            match warm_up_identity(&dist, &grid) {
                Ok(v) => Check::new(id, (v - 1.0).abs() < 1e-6, (v - 1.0).abs()).note(format!("value {v}")),
                Err(e) => Check::new(id, false, f64::INFINITY).note(e.to_string()),
            }
        });
    }
    Ok(SuiteOutcome { report, artifacts: vec![("residuals.csv".into(), export::residuals_csv(&res))] })
}

// ---------------------------------------------------------------- gateaux

fn gateaux(cfg: &InstanceConfig) -> Result<SuiteOutcome> {
    let mut report = VerificationReport::new("gateaux");
    let tech = &cfg.technology;
    let r = cfg.grid.time.r;
    let (lo, hi) = (0.05 * tech.u0, 0.95 * tech.u0);
    let mech = |x: StepPath| Mechanism::new(x, PostPromise::Continuation, r);

    let mut rng = trial_rng(cfg.seed, Suite::Gateaux, usize::MAX >> 32);
    let x = mech(random_flow(&mut rng, lo, hi)?)?;
    let g = random_distribution(&mut rng, true)?;
    let prof = SupergradientProfile::right_derivatives(&x, tech);
    let cf = gateaux_closed_form(&x, &x, &prof, tech, &g)?;
    let fd = gateaux_fd(&x, &x, tech, &g, &FD_ALPHAS)?;
    let zero = cf.total == 0.0 && fd.quotients.iter().all(|q| q.1 == 0.0);
    report.push(Check::new("zero_direction", zero, cf.total.abs()).note("closed form and every quotient are exactly 0"));

    let results = trials(cfg, Suite::Gateaux, |_, rng| -> Result<(f64, bool)> {
        let x = mech(random_flow(rng, lo, hi)?)?;
        let y = mech(random_flow(rng, lo, hi)?)?;
        let g = random_distribution(rng, true)?;
        let prof = SupergradientProfile::right_derivatives(&x, tech);
        let cf = gateaux_closed_form(&x, &y, &prof, tech, &g)?.total;
        let fd = gateaux_fd(&x, &y, tech, &g, &FD_ALPHAS)?;
        let rel = (cf - fd.limit).abs() / cf.abs().max(fd.limit.abs()).max(1e-6);
        Ok((rel, fd.monotone))
    });
    let mut errors = Vec::new();
    let mut rel = Vec::new();
    let mut monotone = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok((e, m)) => {
                rel.push(e - 1e-4);
                monotone.push(if m { 0.0 } else { 1.0 });
            }
            Err(e) => errors.push((i, e.to_string())),
        }
    }
    report.push(summarize("closed_form_vs_fd", &rel, "relative error <= 1e-4"));
    report.push(summarize("fd_quotients_monotone", &monotone, "quotients nondecreasing as alpha shrinks"));
    if let Some(c) = failed_trials("gateaux_errors", &errors) {
        report.push(c);
    }
    Ok(only(report))
}

// ---------------------------------------------------------------- ibp

fn random_measure(rng: &mut ChaCha8Rng) -> Result<Measure> {
    let atoms = (0..rng.gen_range(0..=3)).map(|_| (rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0))).collect();
    // consecutive disjoint segments, the last one possibly unbounded
    let mut start = rng.gen_range(0.0..1.0);
    let k = rng.gen_range(0..=3);
    let segments = (0..k)
        .map(|i| {
            let end = if i + 1 == k && rng.gen_bool(0.3) { f64::INFINITY } else { start + rng.gen_range(0.1..2.0) };
            let seg = Segment { start, end, coef: rng.gen_range(0.0..1.0), decay: rng.gen_range(0.1..1.5) };
            start = end + rng.gen_range(0.0..0.5);
            seg
        })
        .collect();
    Measure::new(atoms, segments)
}

fn ibp(cfg: &InstanceConfig) -> Result<SuiteOutcome> {
    let mut report = VerificationReport::new("ibp");
    let unit = Measure::new(vec![(1.0, 1.0)], vec![])?;
    let (lhs, rhs) = stieltjes_ibp(&unit, 0.0, &StepPath::constant(1.0), 2.0);
    let d = (lhs - 1.0).abs().max((rhs - 1.0).abs());
    report.push(Check::new("hand_case", d < 1e-12, d).note(format!("lhs {lhs}, rhs {rhs}; expected 1")));

    let results = trials(cfg, Suite::Ibp, |_, rng| -> Result<f64> {
        let nu = random_measure(rng)?;
        let l = StepPath::new(
            {
                let mut b: Vec<f64> = (0..rng.gen_range(0..=4)).map(|_| rng.gen_range(0.05..4.0)).collect();
                b.push(0.0);
                b.sort_by(f64::total_cmp);
                b.dedup();
                b
            },
            Vec::new(),
        )
        .or_else(|_| Ok::<_, Error>(StepPath::constant(0.0)))?;
        let l = StepPath::new(l.breaks().to_vec(), l.breaks().iter().map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let (a, b) = stieltjes_ibp(&nu, rng.gen_range(-1.0..1.0), &l, rng.gen_range(0.1..4.0));
        Ok((a - b).abs())
    });
    let mut errors = Vec::new();
    let mut diffs = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(d) => diffs.push(d - 1e-9),
            Err(e) => errors.push((i, e.to_string())),
        }
    }
    report.push(summarize("randomized_identity", &diffs, "|lhs - rhs| < 1e-9"));
    if let Some(c) = failed_trials("ibp_errors", &errors) {
        report.push(c);
    }
    Ok(only(report))
}

// ---------------------------------------------------------------- smoothing

fn smoothing(cfg: &InstanceConfig) -> Result<SuiteOutcome> {
    let tech = &cfg.technology;
    let seq = build_sequence(tech, &cfg.smoothing_n)?;
    let report = verify_monster(tech, &seq);
    let grid = cfg.grid.u_points(tech.u0);
    let artifacts = seq
        .iter()
        .map(|p| (format!("smoothing_n{}.csv", p.params.n), export::smoothing_csv(p, &grid)))
        .collect();
    Ok(SuiteOutcome { report, artifacts })
}

// ---------------------------------------------------------------- concavity

fn concavity(cfg: &InstanceConfig) -> Result<SuiteOutcome> {
    let mut report = VerificationReport::new("concavity");
    let tech = &cfg.technology;
    let r = cfg.grid.time.r;
    let results = trials(cfg, Suite::Concavity, |_, rng| -> Result<Option<f64>> {
        let x = Mechanism::new(random_flow(rng, 0.0, tech.u0)?, PostPromise::Continuation, r)?;
        let y = Mechanism::new(random_flow(rng, 0.0, tech.u0)?, PostPromise::Continuation, r)?;
        let g = random_distribution(rng, true)?;
        let lam = rng.gen_range(0.1..0.9);
        let p = strict_concavity_probe(&x, &y, lam, tech, &g)?;
        Ok(p.distinct.then_some(p.gap))
    });
    let mut errors = Vec::new();
    let mut gaps = Vec::new();
    let mut skipped = 0;
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(Some(gap)) => gaps.push(gap),
            Ok(None) => skipped += 1,
            Err(e) => errors.push((i, e.to_string())),
        }
    }
    let shortfall: Vec<f64> = gaps.iter().map(|&g| if g > 0.0 { 0.0 } else { -g + f64::MIN_POSITIVE }).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    report.push(
        summarize("strict_gap_positive", &shortfall, "gap > 0")
            .note(format!("{} valid trials, {skipped} identical pairs skipped, smallest gap {min_gap:e}", gaps.len())),
    );
    if let Some(c) = failed_trials("concavity_errors", &errors) {
        report.push(c);
    }
    Ok(only(report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(trials: usize) -> InstanceConfig {
        let mut c = InstanceConfig::default_instance().unwrap();
        c.trials = Some(trials);
        c
    }

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("nope".parse::<Suite>(), Err(Error::Config { .. })));
    }

    #[test]
    fn brute_force_matches_closed_form() {
        let pair = fixtures::quadratic_pair_mixture().unwrap();
        let v = brute_force_mixture(&pair, 1.7);
        assert!((v + 0.09).abs() < 1e-9, "{v}");
    }

    #[test]
    fn small_runs_pass() {
        for s in Suite::ALL {
            if s == Suite::Smoothing {
                continue;
            }
            let out = run_suite(&cfg(5), s).unwrap();
            assert!(out.report.passed(), "{}", out.report);
        }
    }

    #[test]
    fn perturbed_euler_fails() {
        let mut c = cfg(1);
        c.euler_perturbation = 1e-3;
        let out = run_suite(&c, Suite::Euler).unwrap();
        assert!(!out.report.passed());
        assert!(out.report.check("residual").unwrap().worst_violation > 1e-4);
    }

    #[test]
    fn seeded_runs_are_deterministic() {
        let a = run_suite(&cfg(8), Suite::Concavity).unwrap().report.to_json();
        let b = run_suite(&cfg(8), Suite::Concavity).unwrap().report.to_json();
        assert_eq!(a, b);
    }
}
