//! Stieltjes integration by parts, the directional derivative of the relaxed
//! payoff (closed form and finite differences), the Euler residual, the
//! integrability bound and strict concavity of the relaxed payoff.
//!
//! The relaxed payoff `pi_G(x)` is the principal payoff of the flow `x` with
//! the post-breakthrough promise equal to the pre-breakthrough one.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::distribution::{exp_int, BreakthroughDistribution, Measure};
use crate::error::{Error, Result};
use crate::frontier::Frontier;
use crate::mechanism::{payoff, Mechanism, PostPromise, TimeGrid};
use crate::numeric::{gk15, integrate, linspace};
use crate::path::StepPath;
use crate::technology::Technology;

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Supergradient selections `phi0(t)` of `F0` at `x_t` and `phi1(t)` of `F1`
/// at `X_t`, as functions of time. `breaks` lists times where either may jump.
#[derive(Clone)]
pub struct SupergradientProfile {
    phi0: TimeFn,
    phi1: TimeFn,
    breaks: Vec<f64>,
}

impl fmt::Debug for SupergradientProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SupergradientProfile")
            .field("breaks", &self.breaks)
            .finish_non_exhaustive()
    }
}

/// Per-cell supergradient flags. `required*` is false where the condition
/// is not needed (`G(t) = 1` for `phi0`, no `G`-mass for `phi1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellValidity {
    pub t: f64,
    pub phi0_ok: bool,
    pub phi1_ok: bool,
    pub phi0_required: bool,
    pub phi1_required: bool,
}

impl CellValidity {
    pub fn ok(&self) -> bool {
        (self.phi0_ok || !self.phi0_required) && (self.phi1_ok || !self.phi1_required)
    }
}

const SUPERGRADIENT_TOL: f64 = 1e-8;

fn within_superdifferential(f: &dyn Frontier, u: f64, phi: f64) -> bool {
    if !f.in_domain(u) || !phi.is_finite() {
        return false;
    }
    let tol = SUPERGRADIENT_TOL * (1.0 + phi.abs());
    let lo = f.right_deriv(u).to_f64();
    let hi = f.left_deriv(u).to_f64();
    phi >= lo - tol && phi <= hi + tol
}

impl SupergradientProfile {
    pub fn new(
        phi0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        breaks: Vec<f64>,
    ) -> Self {
        let mut breaks: Vec<f64> = breaks.into_iter().filter(|t| t.is_finite()).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        SupergradientProfile {
            phi0: Arc::new(phi0),
            phi1: Arc::new(phi1),
            breaks,
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| 0.0, vec![])
    }

    /// Step-path profile.
    pub fn from_paths(phi0: StepPath, phi1: StepPath) -> Self {
        let breaks = phi0.breaks().iter().chain(phi1.breaks()).copied().collect();
        Self::new(move |t| phi0.at(t), move |t| phi1.at(t), breaks)
    }

    /// Right derivatives `F0+(x_t)` and `F1+(X_t)` along the mechanism.
    /// On differentiable frontiers this is the unique valid profile.
    pub fn right_derivatives(m: &Mechanism, tech: &Technology) -> Self {
        let (f0, f1) = (tech.f0.clone(), tech.f1.clone());
        let (x, big) = (m.x0().clone(), m.promise().clone());
        let breaks = x.breaks().to_vec();
        Self::new(
            move |t| f0.right_deriv(x.at(t)).to_f64(),
            move |t| f1.right_deriv(big.at(t)).to_f64(),
            breaks,
        )
    }

    /// Adds `eps` to `phi0` on `[a, b)`.
    pub fn perturb_phi0(&self, a: f64, b: f64, eps: f64) -> Self {
        let base = self.phi0.clone();
        let mut out = self.clone();
        out.phi0 = Arc::new(move |t| base(t) + if t >= a && t < b { eps } else { 0.0 });
        out.breaks.extend([a, b]);
        out.breaks.retain(|t| t.is_finite());
        out.breaks.sort_by(f64::total_cmp);
        out.breaks.dedup();
        out
    }

    pub fn phi0(&self, t: f64) -> f64 {
        (self.phi0)(t)
    }

    pub fn phi1(&self, t: f64) -> f64 {
        (self.phi1)(t)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Flags per grid cell, checked at the cell midpoint and at any atom of
    /// `G` inside the cell.
    pub fn validity(&self, m: &Mechanism, tech: &Technology, g: &BreakthroughDistribution, grid: &TimeGrid) -> Vec<CellValidity> {
        let pts = grid.points();
        pts.windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let mid = 0.5 * (a + b);
                let phi0_required = g.survival(mid) > 0.0;
                let atoms: Vec<f64> = g.atoms().iter().filter(|at| at.0 >= a && at.0 < b).map(|at| at.0).collect();
                let phi1_required = !atoms.is_empty() || g.survival(a) - g.survival(b) > 0.0;
                let phi0_ok = within_superdifferential(tech.f0.as_ref(), m.x0().at(mid), self.phi0(mid));
                let phi1_ok = std::iter::once(mid)
                    .chain(atoms)
                    .all(|t| within_superdifferential(tech.f1.as_ref(), m.big_x0(t), self.phi1(t)));
                CellValidity {
                    t: a,
                    phi0_ok,
                    phi1_ok,
                    phi0_required,
                    phi1_required,
                }
            })
            .collect()
    }

    /// Errors at the first sampled time where a required flag fails. Samples
    /// every break of the paths, the profile and `G`, midpoints between them,
    /// and a uniform grid up to `horizon`.
    pub fn validate(&self, m: &Mechanism, tech: &Technology, g: &BreakthroughDistribution, horizon: f64) -> Result<()> {
        let mut knots: Vec<f64> = m
            .x0()
            .breaks()
            .iter()
            .chain(&self.breaks)
            .copied()
            .chain(g.breakpoints())
            .chain(linspace(0.0, horizon, 1001))
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut ts = knots.clone();
        ts.extend(knots.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        let atoms: Vec<f64> = g.atoms().iter().map(|a| a.0).collect();
        for t in ts {
            if g.survival(t) > 0.0 {
                let x = m.x0().at(t);
                if !within_superdifferential(tech.f0.as_ref(), x, self.phi0(t)) {
                    return Err(Error::InvalidProfile {
                        t,
                        detail: format!("phi0 = {} is not a supergradient of F0 at x = {x}", self.phi0(t)),
                    });
                }
            }
            // G-a.e.: at atoms, and where the density is positive
            if atoms.contains(&t) || g.measure().density(t) > 0.0 {
                let big = m.big_x0(t);
                if !within_superdifferential(tech.f1.as_ref(), big, self.phi1(t)) {
                    return Err(Error::InvalidProfile {
                        t,
                        detail: format!("phi1 = {} is not a supergradient of F1 at X = {big}", self.phi1(t)),
                    });
                }
            }
        }
        Ok(())
    }
}

/// `pi_G(x)`: payoff with `X1 = X0`.
pub fn relaxed_payoff(x: &StepPath, r: f64, tech: &Technology, g: &BreakthroughDistribution) -> Result<f64> {
    payoff(&Mechanism::new(x.clone(), PostPromise::Continuation, r)?, tech, g)
}

fn merged_breaks(parts: &[&[f64]]) -> Vec<f64> {
    let mut v: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).filter(|t| t.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `int_a^b f` with `b` possibly infinite; an infinite end is replaced by a
/// point where `e^{-r t}` has decayed by `e^{-60}`, and long stretches are
/// split every five discount lengths.
fn integrate_discounted(f: &dyn Fn(f64) -> f64, a: f64, b: f64, cuts: &[f64], r: f64) -> f64 {
    let end = if b.is_finite() { b } else { a.max(cuts.last().copied().unwrap_or(0.0)) + 60.0 / r };
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|&t| t > a && t < end).collect();
    let chunk = 5.0 / r;
    let mut c = a + chunk;
    while c < end {
        pts.push(c);
        c += chunk;
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut lo = a;
    let mut sum = 0.0;
    for p in pts.into_iter().chain(std::iter::once(end)) {
        sum += integrate(f, lo, p, 1e-15, 1e-13);
        lo = p;
    }
    sum
}

/// The four pieces of the closed-form directional derivative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GateauxTerms {
    /// `r int e^{-rt} (1 - G) phi0 (x_dag - x) dt`.
    pub flow: f64,
    /// `r int e^{-rt} (int_{[0,t]} phi1 dG) (x_dag - x) dt`.
    pub breakthrough: f64,
    /// `E[r int_0^tau e^{-rt} (F0'(x, x_dag) - phi0)(x_dag - x) dt]`.
    pub flow_correction: f64,
    /// `E[e^{-r tau} (F1'(X, X_dag) - phi1(tau))(X_dag - X)]`.
    pub breakthrough_correction: f64,
    pub total: f64,
}

fn same_rate(x: &Mechanism, x_dag: &Mechanism) -> Result<f64> {
    if x.r() != x_dag.r() {
        return Err(Error::PreconditionViolation(format!(
            "mechanisms use different discount rates {} and {}",
            x.r(),
            x_dag.r()
        )));
    }
    Ok(x.r())
}

/// Closed-form directional derivative of `pi_G` at `x` towards `x_dag`.
/// Only the flows of the two mechanisms are used; promises are recomputed.
pub fn gateaux_closed_form(
    x: &Mechanism,
    x_dag: &Mechanism,
    prof: &SupergradientProfile,
    tech: &Technology,
    g: &BreakthroughDistribution,
) -> Result<GateauxTerms> {
    let r = same_rate(x, x_dag)?;
    let cuts = merged_breaks(&[x.x0().breaks(), x_dag.x0().breaks(), prof.breaks(), &g.breakpoints()]);
    let horizon = cuts.last().copied().unwrap_or(0.0) + 10.0 / r;
    prof.validate(x, tech, g, horizon)?;

    let diff = x_dag.x0().zip_with(x.x0(), |a, b| a - b);
    let mut flow = 0.0;
    let mut flow_corr = 0.0;
    for (a, b, d) in diff.pieces() {
        if d == 0.0 {
            continue;
        }
        let xv = x.x0().at(a);
        let slope = tech.f0.directional_deriv(xv, x_dag.x0().at(a)).to_f64();
        if !slope.is_finite() {
            return Err(Error::NonFiniteValue { what: "F0 directional derivative", t: a });
        }
        let weighted = integrate_discounted(&|t| (-r * t).exp() * g.survival(t) * prof.phi0(t), a, b, &cuts, r);
        flow += r * d * weighted;
        flow_corr += r * d * (slope * g.discounted_survival(r, a, b) - weighted);
    }

    // C term, one piece of the direction at a time: with
    // c(a) = int_{[0,a)} phi1 dG and E(s, b) = int_s^b e^{-rt} dt,
    // int_a^b e^{-rt} c(t) dt = c(a) E(a, b) + int_{[a,b)} phi1(s) E(s, b) dG(s).
    let measure = g.measure();
    let phi1_at = |t: f64| prof.phi1(t);
    let mut cum = 0.0;
    let mut breakthrough = 0.0;
    for (a, b, d) in diff.pieces() {
        let atoms = measure.atoms().iter().filter(|at| at.0 >= a && at.0 < b);
        let mut inner = cum * exp_int(r, a, b);
        let mut added = 0.0;
        for &(s, m) in atoms {
            inner += phi1_at(s) * m * exp_int(r, s, b);
            added += phi1_at(s) * m;
        }
        inner += measure.integrate_density_on(&|s| phi1_at(s) * exp_int(r, s, b), &cuts, a, b);
        added += measure.integrate_density_on(&phi1_at, &cuts, a, b);
        breakthrough += r * d * inner;
        cum += added;
    }

    let bad = Cell::new(None);
    let corr = |t: f64| {
        let (big, big_dag) = (x.big_x0(t), x_dag.big_x0(t));
        let dd = big_dag - big;
        if dd == 0.0 {
            return 0.0;
        }
        let v = (-r * t).exp() * (tech.f1.directional_deriv(big, big_dag).to_f64() - prof.phi1(t)) * dd;
        if !v.is_finite() {
            bad.set(Some(t));
            return 0.0;
        }
        v
    };
    let breakthrough_corr = g.expect(&corr, &cuts);
    if let Some(t) = bad.get() {
        return Err(Error::NonFiniteValue { what: "F1 directional derivative", t });
    }
    for (what, v) in [("flow term", flow), ("breakthrough term", breakthrough), ("flow correction", flow_corr)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { what, t: 0.0 });
        }
    }
    Ok(GateauxTerms {
        flow,
        breakthrough,
        flow_correction: flow_corr,
        breakthrough_correction: breakthrough_corr,
        total: flow + breakthrough + flow_corr + breakthrough_corr,
    })
}

/// Default step schedule for [`gateaux_fd`].
pub const FD_ALPHAS: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateauxFd {
    /// Extrapolated limit.
    pub limit: f64,
    /// `(alpha, quotient)` in schedule order.
    pub quotients: Vec<(f64, f64)>,
    /// Quotients nondecreasing as `alpha` shrinks, as concavity demands.
    pub monotone: bool,
    /// Size of the last quotient change.
    pub last_change: f64,
}

/// Value at 0 of the quadratic through the last three `(alpha, q)` points.
fn extrapolate(points: &[(f64, f64)]) -> f64 {
    match points {
        [] => f64::NAN,
        [(_, q)] => *q,
        [(a0, q0), (a1, q1)] => (q1 * a0 - q0 * a1) / (a0 - a1),
        _ => {
            let [(a0, q0), (a1, q1), (a2, q2)] = [points[points.len() - 3], points[points.len() - 2], points[points.len() - 1]];
            q0 * (a1 * a2) / ((a0 - a1) * (a0 - a2))
                + q1 * (a0 * a2) / ((a1 - a0) * (a1 - a2))
                + q2 * (a0 * a1) / ((a2 - a0) * (a2 - a1))
        }
    }
}

/// Finite-difference directional derivative of `pi_G` with Richardson
/// extrapolation on the last three steps.
pub fn gateaux_fd(
    x: &Mechanism,
    x_dag: &Mechanism,
    tech: &Technology,
    g: &BreakthroughDistribution,
    alphas: &[f64],
) -> Result<GateauxFd> {
    let r = same_rate(x, x_dag)?;
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) || alphas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::PreconditionViolation(
            "alphas must be a decreasing list in (0, 1)".into(),
        ));
    }
    let base = relaxed_payoff(x.x0(), r, tech, g)?;
    let mut quotients = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let moved = x.x0().zip_with(x_dag.x0(), |a, b| a + alpha * (b - a));
        let q = (relaxed_payoff(&moved, r, tech, g)? - base) / alpha;
        if !q.is_finite() {
            return Err(Error::NonConvergent(format!("quotient at alpha = {alpha} is {q}")));
        }
        quotients.push((alpha, q));
    }
    let scale = 1.0 + quotients.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let monotone = quotients.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9 * scale);
    let changes: Vec<f64> = quotients.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    let last_change = changes.last().copied().unwrap_or(0.0);
    if changes.len() >= 2 {
        let prev = changes[changes.len() - 2];
        if last_change > prev + 1e-6 * scale {
            return Err(Error::NonConvergent(format!(
                "quotient changes grew from {prev:e} to {last_change:e}"
            )));
        }
    }
    Ok(GateauxFd {
        limit: extrapolate(&quotients),
        quotients,
        monotone,
        last_change,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub t: f64,
    pub residual: f64,
    pub phi0: f64,
    pub cum_phi1_dg: f64,
    pub one_minus_g: f64,
}

/// `[1 - G(t)] phi0(t) + int_{[0,t]} phi1 dG` at the grid points; points
/// with `G(t) >= 1` are left out.
pub fn euler_residual(prof: &SupergradientProfile, g: &BreakthroughDistribution, grid: &TimeGrid) -> Vec<ResidualPoint> {
    let measure = g.measure();
    let cuts = merged_breaks(&[prof.breaks(), &g.breakpoints()]);
    let phi1 = |t: f64| prof.phi1(t);
    let mut out = Vec::new();
    let mut cum = 0.0;
    let mut prev: Option<f64> = None;
    for t in grid.points() {
        let atoms: f64 = measure
            .atoms()
            .iter()
            .filter(|a| prev.is_none_or(|p| a.0 > p) && a.0 <= t)
            .map(|&(s, m)| m * prof.phi1(s))
            .sum();
        cum += atoms + measure.integrate_density_on(&phi1, &cuts, prev.unwrap_or(0.0), t);
        prev = Some(t);
        let surv = g.survival(t);
        if surv <= 0.0 {
            continue;
        }
        let phi0 = prof.phi0(t);
        out.push(ResidualPoint {
            t,
            residual: surv * phi0 + cum,
            phi0,
            cum_phi1_dg: cum,
            one_minus_g: surv,
        });
    }
    out
}

/// `E_G[int_0^tau f(t) dt]` computed directly: the running integral is
/// tabulated at knots and integrated against `G` piece by piece. Knots
/// continue past the last breakpoint until the remaining contribution is
/// negligible.
pub fn expect_running_integral(
    g: &BreakthroughDistribution,
    f: &dyn Fn(f64) -> f64,
    cuts: &[f64],
    horizon: f64,
) -> f64 {
    const SPACING: f64 = 0.05;
    const MAX_KNOTS: usize = 200_000;
    let measure = g.measure();
    let mut fixed = merged_breaks(&[cuts, &g.breakpoints()]);
    fixed.retain(|&t| t > 0.0);
    let last_fixed = fixed.last().copied().unwrap_or(0.0).max(horizon);
    let mut next_fixed = fixed.into_iter().peekable();
    let atoms = measure.atoms();

    // atoms at 0 see an empty running integral
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut running = 0.0;
    for _ in 0..MAX_KNOTS {
        let mut hi = lo + SPACING;
        while let Some(&c) = next_fixed.peek() {
            if c <= lo {
                next_fixed.next();
            } else {
                hi = hi.min(c);
                break;
            }
        }
        let base = running;
        let start = lo;
        let partial = |s: f64| if s <= start { base } else { base + gk15(f, start, s).0 };
        total += measure.integrate_density_on(&|s| partial(s), &[], lo, hi);
        running += integrate(f, lo, hi, 1e-15, 1e-13);
        total += atoms.iter().filter(|a| a.0 > lo && a.0 <= hi).map(|a| a.1 * if a.0 == hi { running } else { partial(a.0) }).sum::<f64>();
        lo = hi;
        if !running.is_finite() {
            break;
        }
        if lo >= last_fixed {
            let s = g.survival(lo);
            if s == 0.0 || s * (running.abs() + 10.0 * f(lo).abs()) < 1e-13 {
                break;
            }
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    /// `E_G[Phi(tau)]`, `Phi(t) = r int_0^t e^{-rs} phi0(s) ds`.
    pub capital_phi_expectation: f64,
    /// `E_G|phi1(tau)|`.
    pub phi1_abs_expectation: f64,
    pub probe_u: f64,
    /// `E_G[psi0_{x,u}(tau)]`, `psi0_{x,u}(t) = r int_0^t e^{-rs} F0'(x_s, u) ds`.
    pub psi0_expectation: Option<f64>,
    /// `E_G[psi1_{X,u}(tau)]`, `psi1_{X,u}(t) = e^{-rt} F1'(X_t, u)`.
    pub psi1_expectation: Option<f64>,
    pub max_abs_residual: f64,
    /// The bound is only asserted when the Euler residual vanishes.
    pub bound_asserted: bool,
    pub bound_holds: bool,
    pub slack: f64,
}

/// Residual level below which the Euler equation counts as holding.
pub const EULER_TOL: f64 = 1e-9;

/// Expectations behind the integrability argument. `along` supplies the
/// mechanism and technology for the `psi` expectations.
pub fn integrability_bounds(
    prof: &SupergradientProfile,
    g: &BreakthroughDistribution,
    grid: &TimeGrid,
    probe_u: f64,
    along: Option<(&Mechanism, &Technology)>,
) -> IntegrabilityReport {
    let r = grid.r;
    let cuts = merged_breaks(&[prof.breaks(), &g.breakpoints()]);
    let capital_phi = expect_running_integral(g, &|s| r * (-r * s).exp() * prof.phi0(s), &cuts, grid.horizon);
    let phi1_abs = g.expect(&|t| prof.phi1(t).abs(), &cuts);
    let (psi0, psi1) = match along {
        Some((m, tech)) => {
            let mcuts = merged_breaks(&[&cuts, m.x0().breaks()]);
            let psi0 = expect_running_integral(
                g,
                &|s| r * (-r * s).exp() * tech.f0.directional_deriv(m.x0().at(s), probe_u).to_f64(),
                &mcuts,
                grid.horizon,
            );
            let psi1 = g.expect(
                &|t| (-r * t).exp() * tech.f1.directional_deriv(m.big_x0(t), probe_u).to_f64(),
                &mcuts,
            );
            (Some(psi0), Some(psi1))
        }
        None => (None, None),
    };
    let max_abs_residual = euler_residual(prof, g, grid)
        .iter()
        .map(|p| p.residual.abs())
        .fold(0.0, f64::max);
    let slack = phi1_abs + 1e-8 - capital_phi;
    IntegrabilityReport {
        capital_phi_expectation: capital_phi,
        phi1_abs_expectation: phi1_abs,
        probe_u,
        psi0_expectation: psi0,
        psi1_expectation: psi1,
        max_abs_residual,
        bound_asserted: max_abs_residual <= EULER_TOL,
        bound_holds: slack >= 0.0,
        slack,
    }
}

/// `E_G[r int_0^tau e^{-rt} / (1 - G(t)) dt]`, which equals 1 for atom-free `G`.
pub fn warm_up_identity(g: &BreakthroughDistribution, grid: &TimeGrid) -> Result<f64> {
    if !g.atoms().is_empty() {
        return Err(Error::PreconditionViolation("the identity needs an atom-free G".into()));
    }
    let r = grid.r;
    Ok(expect_running_integral(
        g,
        &|t| {
            let s = g.survival(t);
            if s > 0.0 {
                r * (-r * t).exp() / s
            } else {
                0.0
            }
        },
        &[],
        grid.horizon,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConcavityProbe {
    /// `pi(lam x + (1 - lam) x_dag) - lam pi(x) - (1 - lam) pi(x_dag)`.
    pub gap: f64,
    /// `x` and `x_dag` differ on a set of positive survival-weighted measure;
    /// strictness is only claimed when this holds.
    pub distinct: bool,
}

/// Midpoint-type concavity gap of `pi_G` between two flows.
pub fn strict_concavity_probe(
    x: &Mechanism,
    x_dag: &Mechanism,
    lam: f64,
    tech: &Technology,
    g: &BreakthroughDistribution,
) -> Result<ConcavityProbe> {
    let r = same_rate(x, x_dag)?;
    if g.tail_mass() <= 0.0 {
        return Err(Error::PreconditionViolation("G has bounded support (no tail mass)".into()));
    }
    if !(lam > 0.0 && lam < 1.0) {
        return Err(Error::PreconditionViolation(format!("lambda {lam} is not in (0, 1)")));
    }
    let diff = x.x0().zip_with(x_dag.x0(), |a, b| a - b);
    let weight: f64 = diff
        .pieces()
        .filter(|p| p.2 != 0.0)
        .map(|(a, b, _)| g.discounted_survival(r, a, b))
        .sum();
    let mix = x.x0().zip_with(x_dag.x0(), |a, b| lam * a + (1.0 - lam) * b);
    let gap = relaxed_payoff(&mix, r, tech, g)?
        - lam * relaxed_payoff(x.x0(), r, tech, g)?
        - (1.0 - lam) * relaxed_payoff(x_dag.x0(), r, tech, g)?;
    Ok(ConcavityProbe {
        gap,
        distinct: weight > 0.0,
    })
}

/// Both sides of `int_{[0,T]} L dnu = L(T) nu([0,T]) - int_0^T nu([0,t]) l(t) dt`
/// with `L(t) = L0 + int_0^t l`. The left side integrates `L` against the
/// measure directly; the right side uses the closed-form cumulative mass.
pub fn stieltjes_ibp(nu: &Measure, l0: f64, l: &StepPath, t_end: f64) -> (f64, f64) {
    let big_l = |t: f64| {
        let mut acc = l0;
        for (a, b, c) in l.pieces() {
            if a >= t {
                break;
            }
            acc += c * (b.min(t) - a);
        }
        acc
    };
    let atoms: f64 = nu.atoms().iter().filter(|a| a.0 <= t_end).map(|&(s, m)| m * big_l(s)).sum();
    let lhs = atoms + nu.integrate_density_on(&big_l, l.breaks(), 0.0, t_end);
    let integral: f64 = l
        .pieces()
        .filter(|p| p.0 < t_end)
        .map(|(a, b, c)| c * nu.cumulative_integral(a, b.min(t_end)))
        .sum();
    let rhs = big_l(t_end) * nu.mass_upto(t_end) - integral;
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Segment;
    use crate::technology::{make_moral_hazard_technology, MoralHazardPrimitives};

    fn tech() -> Technology {
        make_moral_hazard_technology(&MoralHazardPrimitives::sqrt_quadratic(1.0)).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::new(10.0, 0.01, 1.0).unwrap()
    }

    fn mech(x: StepPath) -> Mechanism {
        Mechanism::new(x, PostPromise::Continuation, 1.0).unwrap()
    }

    #[test]
    fn ibp_atom_example() {
        let nu = Measure::new(vec![(1.0, 1.0)], vec![]).unwrap();
        let (lhs, rhs) = stieltjes_ibp(&nu, 0.0, &StepPath::constant(1.0), 2.0);
        assert!((lhs - 1.0).abs() < 1e-15 && (rhs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ibp_zero_measure_and_constant_l() {
        let (a, b) = stieltjes_ibp(&Measure::zero(), 1.0, &StepPath::constant(2.0), 3.0);
        assert_eq!((a, b), (0.0, 0.0));
        let nu = Measure::new(
            vec![(0.5, 0.2)],
            vec![Segment { start: 0.0, end: 2.0, coef: 0.3, decay: 0.5 }],
        )
        .unwrap();
        let (a, b) = stieltjes_ibp(&nu, 1.5, &StepPath::constant(0.0), 1.0);
        assert!((a - 1.5 * nu.mass_upto(1.0)).abs() < 1e-13);
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn euler_construct_and_check() {
        let g = BreakthroughDistribution::exponential(1.0).unwrap();
        let prof = SupergradientProfile::new(|t: f64| (t).exp_m1(), |_| -1.0, vec![]);
        let res = euler_residual(&prof, &g, &grid());
        assert_eq!(res.len(), grid().cells() + 1);
        let worst = res.iter().map(|p| p.residual.abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn euler_perturbation_is_local() {
        let g = BreakthroughDistribution::exponential(1.0).unwrap();
        let prof = SupergradientProfile::new(|t: f64| t.exp_m1(), |_| -1.0, vec![]);
        let bumped = prof.perturb_phi0(2.0, 2.01, 1e-3);
        let res = euler_residual(&bumped, &g, &grid());
        let at = res.iter().find(|p| (p.t - 2.0).abs() < 1e-12).unwrap();
        assert!((at.residual - 1e-3 * g.survival(2.0)).abs() < 1e-12);
    }

    #[test]
    fn warm_up_identity_holds() {
        let g = BreakthroughDistribution::exponential(1.0).unwrap();
        let v = warm_up_identity(&g, &grid()).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        let g = BreakthroughDistribution::new(
            vec![],
            vec![(0.0, 1.0, 0.3), (1.0, 2.0, 0.2)],
            Some(crate::distribution::Tail { start: 2.0, mass: 0.5, rate: 0.7 }),
        )
        .unwrap();
        let v = warm_up_identity(&g, &grid()).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn integrability_construct_and_check() {
        let g = BreakthroughDistribution::exponential(1.0).unwrap();
        let prof = SupergradientProfile::new(|t: f64| t.exp_m1(), |_| -1.0, vec![]);
        let rep = integrability_bounds(&prof, &g, &grid(), 0.1, None);
        assert!((rep.capital_phi_expectation - 0.5).abs() < 1e-8, "{rep:?}");
        assert!((rep.phi1_abs_expectation - 1.0).abs() < 1e-12);
        assert!(rep.bound_asserted && rep.bound_holds);
    }

    #[test]
    fn gateaux_zero_direction() {
        let t = tech();
        let g = BreakthroughDistribution::exponential(1.0).unwrap();
        let x = mech(StepPath::new(vec![0.0, 1.0], vec![0.3, 0.1]).unwrap());
        let prof = SupergradientProfile::right_derivatives(&x, &t);
        assert_eq!(gateaux_closed_form(&x, &x, &prof, &t, &g).unwrap().total, 0.0);
        let fd = gateaux_fd(&x, &x, &t, &g, &FD_ALPHAS).unwrap();
        assert!(fd.quotients.iter().all(|q| q.1 == 0.0));
    }

    #[test]
    fn gateaux_closed_form_matches_fd() {
        let t = tech();
        let g = BreakthroughDistribution::new(
            vec![(0.5, 0.2)],
            vec![(0.0, 1.0, 0.3)],
            Some(crate::distribution::Tail { start: 1.0, mass: 0.5, rate: 1.5 }),
        )
        .unwrap();
        let x = mech(StepPath::new(vec![0.0, 0.7, 2.0], vec![0.3, 0.1, 0.2]).unwrap());
        let y = mech(StepPath::new(vec![0.0, 1.3], vec![0.4, 0.05]).unwrap());
        let prof = SupergradientProfile::right_derivatives(&x, &t);
        let cf = gateaux_closed_form(&x, &y, &prof, &t, &g).unwrap();
        let fd = gateaux_fd(&x, &y, &t, &g, &FD_ALPHAS).unwrap();
        assert!(cf.flow_correction.abs() < 1e-9 && cf.breakthrough_correction.abs() < 1e-9, "{cf:?}");
        assert!((cf.total - fd.limit).abs() < 1e-4 * cf.total.abs().max(1e-3), "{cf:?} {fd:?}");
        assert!(fd.monotone, "{fd:?}");
    }

    #[test]
    fn gateaux_atom_at_zero() {
        let t = tech();
        let g = BreakthroughDistribution::atom(0.0).unwrap();
        let x = mech(StepPath::constant(0.3));
        let y = mech(StepPath::constant(0.4));
        let prof = SupergradientProfile::right_derivatives(&x, &t);
        let cf = gateaux_closed_form(&x, &y, &prof, &t, &g).unwrap();
        let expect = t.f1.right_deriv(0.3).to_f64() * 0.1;
        assert!((cf.total - expect).abs() < 1e-12, "{cf:?} vs {expect}");
        assert_eq!(cf.flow, 0.0);
    }

    #[test]
    fn invalid_profile_rejected() {
        let t = tech();
        let g = BreakthroughDistribution::exponential(1.0).unwrap();
        let x = mech(StepPath::constant(0.3));
        let prof = SupergradientProfile::zero();
        assert!(matches!(
            gateaux_closed_form(&x, &x, &prof, &t, &g),
            Err(Error::InvalidProfile { .. })
        ));
    }

    #[test]
    fn concavity_example() {
        let t = tech();
        let g = BreakthroughDistribution::exponential(1.0).unwrap();
        let x = mech(StepPath::constant(t.u0 / 2.0));
        let y = mech(StepPath::constant(t.u0 / 4.0));
        let p = strict_concavity_probe(&x, &y, 0.5, &t, &g).unwrap();
        assert!(p.distinct && p.gap > 0.0, "{p:?}");
        let same = strict_concavity_probe(&x, &x, 0.5, &t, &g).unwrap();
        assert!(!same.distinct && same.gap.abs() < 1e-15);
        let bounded = BreakthroughDistribution::atom(1.0).unwrap();
        assert!(strict_concavity_probe(&x, &y, 0.5, &t, &bounded).is_err());
    }
}
