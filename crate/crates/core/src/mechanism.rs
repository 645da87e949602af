//! Mechanisms as flow-utility paths, deadline mechanisms, the no-delay
//! improvement and principal payoffs under a breakthrough distribution.

use std::cell::Cell;

use crate::distribution::BreakthroughDistribution;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::numeric::linspace;
use crate::path::{PromisePath, StepPath};
use crate::report::{Check, VerificationReport};
use crate::technology::Technology;

/// Evaluation grid: cells of width `step` up to `horizon`, discount rate `r`.
/// Paths continue past the horizon with their last value, so the tail is
/// handled analytically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub step: f64,
    pub r: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, step: f64, r: f64) -> Result<Self> {
        for (name, v) in [("horizon", horizon), ("step", step), ("r", r)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidGrid(format!("{name} must be positive, got {v}")));
            }
        }
        let cells = horizon / step;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} is not a whole number of steps {step}"
            )));
        }
        Ok(TimeGrid { horizon, step, r })
    }

    pub fn cells(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// Grid points `0, step, ..., horizon`.
    pub fn points(&self) -> Vec<f64> {
        linspace(0.0, self.horizon, self.cells() + 1)
    }
}

/// How the post-breakthrough promise relates to the pre-breakthrough one.
#[derive(Clone, Debug, PartialEq)]
pub enum PostPromise {
    /// `X1 = max(X0, u1)`.
    NoDelay { u1: f64 },
    /// `X1 = X0`.
    Continuation,
    /// `X1 = X0 + premium`, `premium >= 0`.
    Premium(StepPath),
}

/// A mechanism: flow utility `x0`, its promise `X0`, and the post-breakthrough promise.
#[derive(Clone, Debug, PartialEq)]
pub struct Mechanism {
    x0: StepPath,
    promise: PromisePath,
    post: PostPromise,
}

impl Mechanism {
    pub fn new(x0: StepPath, post: PostPromise, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidGrid(format!("discount rate must be positive, got {r}")));
        }
        if let PostPromise::Premium(p) = &post {
            if p.inf() < 0.0 {
                return Err(Error::InvalidPath("premium must be nonnegative (X1 >= X0)".into()));
            }
        }
        let promise = PromisePath::new(&x0, r);
        Ok(Mechanism { x0, promise, post })
    }

    pub fn x0(&self) -> &StepPath {
        &self.x0
    }

    pub fn promise(&self) -> &PromisePath {
        &self.promise
    }

    pub fn post(&self) -> &PostPromise {
        &self.post
    }

    pub fn r(&self) -> f64 {
        self.promise.r()
    }

    /// `X0_t`.
    pub fn big_x0(&self, t: f64) -> f64 {
        self.promise.at(t)
    }

    /// `X1_t`.
    pub fn big_x1(&self, t: f64) -> f64 {
        let x = self.promise.at(t);
        match &self.post {
            PostPromise::NoDelay { u1 } => x.max(*u1),
            PostPromise::Continuation => x,
            PostPromise::Premium(p) => x + p.at(t),
        }
    }

    /// Times where `X1` may be non-smooth: flow breaks, premium breaks and
    /// crossings of `u1`.
    pub fn x1_breaks(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.x0.breaks().to_vec();
        match &self.post {
            PostPromise::NoDelay { u1 } => v.extend(self.promise.crossings(*u1, 0.0, f64::INFINITY)),
            PostPromise::Premium(p) => v.extend_from_slice(p.breaks()),
            PostPromise::Continuation => {}
        }
        v.retain(|t| t.is_finite());
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Same flow with a different post-breakthrough rule.
    pub fn with_post(&self, post: PostPromise) -> Result<Self> {
        Mechanism::new(self.x0.clone(), post, self.r())
    }
}

/// `X0` for a flow path.
pub fn promised_utility(x0: &StepPath, grid: &TimeGrid) -> PromisePath {
    PromisePath::new(x0, grid.r)
}

/// Flow `u0` up to the deadline and 0 after, in no-delay form.
pub fn make_deadline_mechanism(deadline: ExtReal, tech: &Technology, grid: &TimeGrid) -> Mechanism {
    let x0 = match deadline {
        ExtReal::PosInf => StepPath::constant(tech.u0),
        ExtReal::Finite(t) if t > 0.0 => {
            StepPath::new(vec![0.0, t], vec![tech.u0, 0.0]).expect("positive finite deadline")
        }
        _ => StepPath::constant(0.0),
    };
    Mechanism::new(x0, PostPromise::NoDelay { u1: tech.u1 }, grid.r).expect("grid rate is validated")
}

/// Deadline delivering promise `v` at time 0: `T = -ln(1 - v/u0) / r`.
pub fn deadline_for_promise(v: f64, tech: &Technology, grid: &TimeGrid) -> Result<ExtReal> {
    if !(v >= 0.0 && v <= tech.u0) {
        return Err(Error::PreconditionViolation(format!(
            "promise {v} outside [0, u0 = {}]",
            tech.u0
        )));
    }
    if v == tech.u0 {
        return Ok(ExtReal::PosInf);
    }
    Ok(ExtReal::Finite(-(-v / tech.u0).ln_1p() / grid.r))
}

/// Replaces the post-breakthrough promise by `max(X0, u1)`.
pub fn no_delay_improve(m: &Mechanism, tech: &Technology) -> Mechanism {
    m.with_post(PostPromise::NoDelay { u1: tech.u1 })
        .expect("rate already validated")
}

/// Clips the flow to `[0, u0]` and puts the mechanism in no-delay form.
pub fn normalize(m: &Mechanism, tech: &Technology) -> Mechanism {
    let x0 = m.x0.map(|v| v.clamp(0.0, tech.u0));
    Mechanism::new(x0, PostPromise::NoDelay { u1: tech.u1 }, m.r()).expect("rate already validated")
}

fn finite_or(what: &'static str, t: f64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteValue { what, t })
    }
}

/// `E[r int_0^tau e^{-rt} F0(x_t) dt]`, closed form per flow piece.
pub fn flow_term(m: &Mechanism, tech: &Technology, g: &BreakthroughDistribution) -> Result<f64> {
    let r = m.r();
    let mut total = 0.0;
    for (a, b, v) in m.x0.pieces() {
        let w = g.discounted_survival(r, a, b);
        if w == 0.0 {
            continue;
        }
        total += r * w * finite_or("F0", a, tech.f0.eval(v))?;
    }
    Ok(total)
}

/// `E[e^{-r tau} h(tau)]`, atoms exactly and density by adaptive quadrature
/// split at `cuts`. Any non-finite `h` value is an error.
fn discounted_expectation(
    g: &BreakthroughDistribution,
    r: f64,
    what: &'static str,
    cuts: &[f64],
    h: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    let bad = Cell::new(None);
    let integrand = |t: f64| {
        let v = h(t);
        if !v.is_finite() {
            if bad.get().is_none() {
                bad.set(Some(t));
            }
            return 0.0;
        }
        (-r * t).exp() * v
    };
    let value = g.expect(&integrand, cuts);
    match bad.get() {
        Some(t) => Err(Error::NonFiniteValue { what, t }),
        None => Ok(value),
    }
}

/// `E[e^{-r tau} F1(X1_tau)]`.
pub fn breakthrough_term(m: &Mechanism, tech: &Technology, g: &BreakthroughDistribution) -> Result<f64> {
    let cuts = m.x1_breaks();
    discounted_expectation(g, m.r(), "F1", &cuts, &|t| tech.f1.eval(m.big_x1(t)))
}

/// Principal payoff `E[r int_0^tau e^{-rt} F0(x_t) dt + e^{-r tau} F1(X1_tau)]`.
pub fn payoff(m: &Mechanism, tech: &Technology, g: &BreakthroughDistribution) -> Result<f64> {
    Ok(flow_term(m, tech, g)? + breakthrough_term(m, tech, g)?)
}

/// Sampled affinity check of `F0` on `[0, u0]`.
pub fn f0_affine_deviation(tech: &Technology) -> f64 {
    let a = tech.f0.eval(0.0);
    let b = (tech.f0.eval(tech.u0) - a) / tech.u0;
    linspace(0.0, tech.u0, 101)
        .into_iter()
        .map(|u| (tech.f0.eval(u) - a - b * u).abs() / (1.0 + a.abs()))
        .fold(0.0, f64::max)
}

/// `phi(u) = F1(max(u, u1)) - F0(u)`.
pub fn rewrite_phi(tech: &Technology, u: f64) -> f64 {
    tech.f1.eval(u.max(tech.u1)) - tech.f0.eval(u)
}

/// Payoff via `E[F0(X0_0) + e^{-r tau} phi(X0_tau)]`, valid for affine `F0`,
/// `G(0) = 0` and no-delay mechanisms.
pub fn payoff_affine_rewrite(m: &Mechanism, tech: &Technology, g: &BreakthroughDistribution) -> Result<f64> {
    let dev = f0_affine_deviation(tech);
    if dev > 1e-9 {
        return Err(Error::PreconditionViolation(format!(
            "F0 is not affine on [0, u0] (deviation {dev:e})"
        )));
    }
    if g.cdf(0.0) != 0.0 {
        return Err(Error::PreconditionViolation(format!(
            "G(0) = {} but the rewrite needs G(0) = 0",
            g.cdf(0.0)
        )));
    }
    match m.post() {
        PostPromise::NoDelay { u1 } if *u1 == tech.u1 => {}
        _ => {
            return Err(Error::PreconditionViolation(
                "mechanism is not in no-delay form".into(),
            ))
        }
    }
    let x0 = m.big_x0(0.0);
    let head = finite_or("F0", 0.0, tech.f0.eval(x0))?;
    let mut cuts: Vec<f64> = m.x0().breaks().to_vec();
    cuts.extend(m.promise().crossings(tech.u1, 0.0, f64::INFINITY));
    let tail = discounted_expectation(g, m.r(), "phi", &cuts, &|t| rewrite_phi(tech, m.big_x0(t)))?;
    Ok(head + tail)
}

/// `G`-mass of the times where `pred` holds; `pred` must be constant
/// between consecutive `cuts` and on each density segment.
pub fn mass_where(g: &BreakthroughDistribution, cuts: &[f64], pred: &dyn Fn(f64) -> bool) -> f64 {
    g.expect(&|t| if pred(t) { 1.0 } else { 0.0 }, cuts)
}

/// Sample times for pathwise comparisons: grid points plus every break.
fn sample_times(m: &Mechanism, other: &Mechanism, horizon: f64) -> Vec<f64> {
    let mut ts = linspace(0.0, horizon, 2001);
    ts.extend(m.x0().breaks());
    ts.extend(other.x0().breaks());
    ts.retain(|t| t.is_finite());
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// Compares a normalized mechanism against the deadline mechanism with the
/// same initial promise.
pub fn dominance_check(
    m: &Mechanism,
    tech: &Technology,
    family: &[BreakthroughDistribution],
    grid: &TimeGrid,
) -> VerificationReport {
    let mut report = VerificationReport::new("dominance");
    let v = m.big_x0(0.0);
    let deadline = match deadline_for_promise(v.min(tech.u0), tech, grid) {
        Ok(t) => t,
        Err(e) => {
            report.push(Check::new("deadline_twin", false, f64::INFINITY).note(e.to_string()));
            return report;
        }
    };
    let twin = make_deadline_mechanism(deadline, tech, grid);
    report.push(
        Check::new("deadline_twin", (twin.big_x0(0.0) - v).abs() < 1e-12, (twin.big_x0(0.0) - v).abs())
            .note(format!("T = {deadline}, X0_0 = {v}")),
    );

    let ts = sample_times(m, &twin, grid.horizon.max(deadline.finite().unwrap_or(0.0) + 1.0));
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = 0.0;
    for &t in &ts {
        let d = twin.big_x0(t) - m.big_x0(t);
        if d > worst {
            worst = d;
            worst_at = t;
        }
    }
    report.push(
        Check::new("twin_promise_below", worst <= 1e-12, worst.max(0.0)).at(format!("t={worst_at}")),
    );

    let mut cuts: Vec<f64> = m.x0().breaks().iter().chain(twin.x0().breaks()).copied().collect();
    // |X0 - X0_twin| changes sign at most where the two promises cross;
    // crossings of each promise with the other's piece values bound those.
    for &c in twin.x0().values() {
        cuts.extend(m.promise().crossings(c, 0.0, f64::INFINITY));
    }
    for (i, g) in family.iter().enumerate() {
        let pm = payoff(m, tech, g);
        let pt = payoff(&twin, tech, g);
        let (pm, pt) = match (pm, pt) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                report.push(Check::new(format!("payoff_order[{i}]"), false, f64::INFINITY).note(e.to_string()));
                continue;
            }
        };
        let changed = mass_where(g, &cuts, &|t| (twin.big_x0(t) - m.big_x0(t)).abs() > 1e-12);
        let gain = pt - pm;
        let strict = changed > 1e-9;
        let ok = if strict { gain > 0.0 } else { gain >= -1e-10 };
        report.push(
            Check::new(format!("payoff_order[{i}]"), ok, if ok { 0.0 } else { -gain })
                .note(format!(
                    "twin {pt} vs mechanism {pm} (gain {gain:e}), changed-set mass {changed:e}{}",
                    if strict { ", strict" } else { "" }
                )),
        );
    }
    report
}
