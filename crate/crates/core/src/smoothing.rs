//! Smooth, strictly concave approximations of a kinked technology.
//!
//! On `I_n = [1/n, u0 - 2/n]` the approximant's derivative is the windowed
//! average of the source's right derivative minus a linear tilt,
//! `f_n(u) = (1/delta) int_u^{u+delta} F+ - gamma u`. Since `F` is concave the
//! window average equals the difference quotient `(F(u+delta) - F(u))/delta`,
//! and the approximant itself is `F(a) + A(u) - A(a) - gamma (u^2 - a^2)/2`
//! with `A` the window average of `F`. Outside `I_n` the frontiers are extended
//! by quadratic pieces on the left and exponentially saturating tails on the
//! right; this realization is one valid choice among many.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::frontier::{midpoint_slack, Frontier, SharedFrontier};
use crate::numeric::{bisect, golden_max, integrate_split, linspace};
use crate::report::{Check, VerificationReport};
use crate::technology::Technology;

/// Parameters for the `n`-th approximant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmoothingParams {
    pub n: usize,
    pub delta: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub eps: f64,
}

fn out_of_range(msg: String) -> Error {
    Error::ParamsOutOfRange(msg)
}

impl SmoothingParams {
    /// Checks every range constraint against the source peaks.
    pub fn validate(&self, tech: &Technology) -> Result<()> {
        let n = self.n as f64;
        let (u0, u1) = (tech.u0, tech.u1);
        if self.n == 0 || !(1.0 / n < (u0 - u1) / 3.0) {
            return Err(out_of_range(format!(
                "n = {} is too small: need 1/n < (u0 - u1)/3 = {}",
                self.n,
                (u0 - u1) / 3.0
            )));
        }
        let checks = [
            ("delta", self.delta, 1.0 / n),
            ("gamma", self.gamma, 1.0 / (u0 * n)),
            ("zeta", self.zeta, 2.0 / n),
            ("eps", self.eps, 1.0 / n),
        ];
        for (name, v, hi) in checks {
            if !(v > 0.0 && v < hi) {
                return Err(out_of_range(format!("{name} = {v} must lie in (0, {hi})")));
            }
        }
        if !(self.zeta > 2.0 * self.eps) {
            return Err(out_of_range(format!(
                "zeta = {} must exceed 2 eps = {}",
                self.zeta,
                2.0 * self.eps
            )));
        }
        if !(tech.u_star + 1.0 / n <= u0 - 2.0 / n) {
            return Err(out_of_range(format!(
                "anchor u* + 1/n = {} lies beyond u0 - 2/n = {}",
                tech.u_star + 1.0 / n,
                u0 - 2.0 / n
            )));
        }
        Ok(())
    }

    /// `eps = 1/(4n)`, `zeta = 3/(4n)`, and `delta`, `gamma` halved from
    /// `1/(16 n^2)` and `1/(16 u0 n^2)` until both sup errors on `I_n` are
    /// within `eps`.
    pub fn auto(tech: &Technology, n: usize) -> Result<Self> {
        let nf = n as f64;
        let mut p = SmoothingParams {
            n,
            delta: 1.0 / (16.0 * nf * nf * nf),
            gamma: 1.0 / (16.0 * tech.u0 * nf * nf),
            zeta: 3.0 / (4.0 * nf),
            eps: 1.0 / (4.0 * nf),
        };
        p.validate(tech)?;
        for _ in 0..40 {
            let f0 = Middle::new(tech.f0.clone(), &p, tech.u_star, 0.0)?;
            let f1 = Middle::new(tech.f1.clone(), &p, tech.u_star, p.zeta)?;
            let (e0, e1) = sup_errors_middle(&f0, &f1, tech, &p);
            if e0.max(e1) <= p.eps {
                return Ok(p);
            }
            p.delta *= 0.5;
            p.gamma *= 0.5;
        }
        Err(Error::NonConvergent(format!(
            "no (delta, gamma) found with sup error within eps = {} at n = {n}",
            p.eps
        )))
    }

    /// `I_n = [1/n, u0 - 2/n]`.
    pub fn interval(&self, u0: f64) -> (f64, f64) {
        let n = self.n as f64;
        (1.0 / n, u0 - 2.0 / n)
    }
}

fn window_check(f: &dyn Frontier, u: f64, delta: f64) -> Result<()> {
    let (lo, hi) = f.domain();
    if !(u >= lo && u + delta <= hi) {
        return Err(Error::DomainError { u, lo, hi });
    }
    Ok(())
}

/// `(1/delta) int_u^{u+delta} F+ - gamma u`, via the difference quotient of `F`.
pub fn averaged_right_derivative(f: &dyn Frontier, u: f64, params: &SmoothingParams) -> Result<f64> {
    window_check(f, u, params.delta)?;
    let d = params.delta;
    Ok((f.eval(u + d) - f.eval(u)) / d - params.gamma * u)
}

/// The approximant on `I_n`.
#[derive(Clone, Debug)]
struct Middle {
    source: SharedFrontier,
    delta: f64,
    gamma: f64,
    anchor: f64,
    base: f64,
    avg_anchor: f64,
}

impl Middle {
    fn new(source: SharedFrontier, p: &SmoothingParams, u_star: f64, shift: f64) -> Result<Self> {
        let anchor = u_star + 1.0 / p.n as f64;
        window_check(source.as_ref(), anchor, p.delta)?;
        let mut m = Middle {
            base: source.eval(anchor) + shift,
            source,
            delta: p.delta,
            gamma: p.gamma,
            anchor,
            avg_anchor: 0.0,
        };
        m.avg_anchor = m.window_average(anchor);
        Ok(m)
    }

    /// `(1/delta) int_u^{u+delta} F`.
    fn window_average(&self, u: f64) -> f64 {
        let f = |s: f64| self.source.eval(s);
        integrate_split(&f, u, u + self.delta, &self.source.kinks(), 1e-15, 1e-14) / self.delta
    }

    fn value(&self, u: f64) -> f64 {
        self.base + self.window_average(u) - self.avg_anchor - 0.5 * self.gamma * (u * u - self.anchor * self.anchor)
    }

    fn slope(&self, u: f64) -> f64 {
        (self.source.eval(u + self.delta) - self.source.eval(u)) / self.delta - self.gamma * u
    }
}

fn sup_errors_middle(f0: &Middle, f1: &Middle, tech: &Technology, p: &SmoothingParams) -> (f64, f64) {
    let (a, b) = p.interval(tech.u0);
    let mut e = (0.0f64, 0.0f64);
    for u in linspace(a, b, 401) {
        e.0 = e.0.max((f0.value(u) - tech.f0.eval(u)).abs());
        e.1 = e.1.max((f1.value(u) - p.zeta - tech.f1.eval(u)).abs());
    }
    e
}

/// Left extension on `[0, a)`: derivative `slope + curv (a - u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LeftPiece {
    pub a: f64,
    pub value: f64,
    pub slope: f64,
    pub curv: f64,
}

/// Right extension on `(b, inf)`. On `[b, b + ramp]` the derivative falls
/// linearly from `slope` to 0; afterwards it saturates,
/// `floor + (start - floor) e^{-y/scale}`, with `start` the slope at the end
/// of the ramp.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RightPiece {
    pub b: f64,
    pub value: f64,
    pub slope: f64,
    pub ramp: f64,
    pub floor: f64,
    pub scale: f64,
}

impl RightPiece {
    fn tail_start(&self) -> (f64, f64, f64) {
        if self.ramp > 0.0 {
            (self.b + self.ramp, self.value + 0.5 * self.slope * self.ramp, 0.0)
        } else {
            (self.b, self.value, self.slope)
        }
    }

    fn slope_at(&self, u: f64) -> f64 {
        let x = u - self.b;
        if x <= self.ramp {
            return self.slope * (1.0 - x / self.ramp);
        }
        let (at, _, start) = self.tail_start();
        self.floor + (start - self.floor) * (-(u - at) / self.scale).exp()
    }

    fn value_at(&self, u: f64) -> f64 {
        let x = u - self.b;
        if x <= self.ramp {
            return self.value + self.slope * x - 0.5 * self.slope / self.ramp * x * x;
        }
        let (at, v, start) = self.tail_start();
        let y = u - at;
        v + self.floor * y - (start - self.floor) * self.scale * (-y / self.scale).exp_m1()
    }
}

/// `depth * ((at - u)^+ / at)^2` subtracted to make `u*_n` a strict maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Dip {
    pub at: f64,
    pub depth: f64,
}

/// One smoothed frontier on `[0, inf)`.
#[derive(Clone, Debug)]
pub struct SmoothFrontier {
    middle: Middle,
    left: LeftPiece,
    right: RightPiece,
    dip: Option<Dip>,
    peak: f64,
}

impl SmoothFrontier {
    fn new(middle: Middle, left: LeftPiece, right: RightPiece, dip: Option<Dip>) -> Self {
        let mut f = SmoothFrontier {
            middle,
            left,
            right,
            dip,
            peak: 0.0,
        };
        f.peak = f.find_peak();
        f
    }

    fn find_peak(&self) -> f64 {
        if self.deriv(0.0) <= 0.0 {
            return 0.0;
        }
        let mut hi = self.right.b + 1.0;
        while self.deriv(hi) > 0.0 {
            hi *= 2.0;
        }
        bisect(0.0, hi, 0.0, |u| self.deriv(u) > 0.0)
    }

    fn dip_value(&self, u: f64) -> f64 {
        match self.dip {
            Some(d) if u < d.at => d.depth * ((d.at - u) / d.at).powi(2),
            _ => 0.0,
        }
    }

    fn dip_slope(&self, u: f64) -> f64 {
        match self.dip {
            Some(d) if u < d.at => 2.0 * d.depth * (d.at - u) / (d.at * d.at),
            _ => 0.0,
        }
    }

    fn left_slope(&self, u: f64) -> f64 {
        self.left.slope + self.left.curv * (self.left.a - u)
    }

    fn right_slope(&self, u: f64) -> f64 {
        self.right.slope_at(u)
    }

    /// Derivative at `u >= 0`.
    pub fn deriv(&self, u: f64) -> f64 {
        let base = if u < self.left.a {
            self.left_slope(u)
        } else if u <= self.right.b {
            self.middle.slope(u)
        } else {
            self.right_slope(u)
        };
        base + self.dip_slope(u)
    }

    /// The derivative on `I_n` before any dip, `f_n`.
    pub fn averaged_slope(&self, u: f64) -> f64 {
        self.middle.slope(u)
    }

    pub fn left_piece(&self) -> LeftPiece {
        self.left
    }

    pub fn right_piece(&self) -> RightPiece {
        self.right
    }

    pub fn dip(&self) -> Option<Dip> {
        self.dip
    }

    fn with_dip(&self, dip: Dip) -> Self {
        SmoothFrontier::new(self.middle.clone(), self.left, self.right, Some(dip))
    }
}

impl Frontier for SmoothFrontier {
    fn value(&self, u: f64) -> ExtReal {
        if !(u >= 0.0) || u.is_infinite() {
            return ExtReal::NegInf;
        }
        let v = if u < self.left.a {
            let y = self.left.a - u;
            self.left.value - self.left.slope * y - 0.5 * self.left.curv * y * y
        } else if u <= self.right.b {
            self.middle.value(u)
        } else {
            self.right.value_at(u)
        };
        ExtReal::Finite(v - self.dip_value(u))
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    /// At the junctions the piece to the left supplies the value.
    fn left_deriv(&self, u: f64) -> ExtReal {
        if u <= 0.0 {
            return ExtReal::PosInf;
        }
        let base = if u <= self.left.a {
            self.left_slope(u)
        } else if u <= self.right.b {
            self.middle.slope(u)
        } else {
            self.right_slope(u)
        };
        ExtReal::Finite(base + self.dip_slope(u))
    }

    fn right_deriv(&self, u: f64) -> ExtReal {
        ExtReal::Finite(self.deriv(u))
    }

    fn peak(&self) -> f64 {
        self.peak
    }
}

/// A smoothed technology with its peaks.
#[derive(Clone, Debug)]
pub struct SmoothedPair {
    pub params: SmoothingParams,
    pub f0n: Arc<SmoothFrontier>,
    pub f1n: Arc<SmoothFrontier>,
    pub u0n: f64,
    pub u1n: f64,
    pub u_star_n: f64,
    /// `I_n`.
    pub interval: (f64, f64),
    /// Upper derivative bound near 0, `max_j F^{j+}(1/n) + 1`.
    pub upper_bound_near_zero: f64,
    /// Lower derivative bound of `F0_n`, `F^{1-}(u0 - 1/n) - 2`.
    pub lower_bound_f0: f64,
}

impl SmoothedPair {
    pub fn gap(&self, u: f64) -> f64 {
        self.f1n.eval(u) - self.f0n.eval(u)
    }
}

/// Argmax of `d` on `[0, hi]`: 4001-point scan and golden refinement.
fn argmax(d: &dyn Fn(f64) -> f64, hi: f64) -> f64 {
    let grid = linspace(0.0, hi, 4001);
    let (best, _) = grid
        .iter()
        .enumerate()
        .map(|(i, &u)| (i, d(u)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let lo = grid[best.saturating_sub(1)];
    let up = grid[(best + 1).min(grid.len() - 1)];
    let cand = golden_max(d, lo, up, 1e-13);
    if d(cand) >= d(grid[best]) {
        cand
    } else {
        grid[best]
    }
}

/// Strict local maximum at `u`, probed at a few radii on each side.
fn is_strict_max(d: &dyn Fn(f64) -> f64, u: f64, radius: f64) -> bool {
    let c = d(u);
    (1..=4).all(|k| {
        let h = radius * k as f64 / 4.0;
        let right = d(u + h) < c;
        let left = u - h < 0.0 || d(u - h) < c;
        left && right
    })
}

/// Saturation length of the right tails; long enough that curvature stays
/// visible in double precision well past `u0`.
const TAIL_SCALE: f64 = 1.0;

fn infeasible(msg: String) -> Error {
    Error::ExtensionInfeasible(msg)
}

/// Builds `(F0_n, F1_n)`: the windowed approximants on `I_n`, the extensions,
/// and a dip in `F1_n` left of `u*_n` when `u*_n` is not a strict maximum.
pub fn build_smooth_pair(tech: &Technology, params: &SmoothingParams) -> Result<SmoothedPair> {
    params.validate(tech)?;
    let nf = params.n as f64;
    let (a, b) = params.interval(tech.u0);
    let m0 = Middle::new(tech.f0.clone(), params, tech.u_star, 0.0)?;
    let m1 = Middle::new(tech.f1.clone(), params, tech.u_star, params.zeta)?;
    for u in [a, b] {
        window_check(tech.f0.as_ref(), u, params.delta)?;
        window_check(tech.f1.as_ref(), u, params.delta)?;
    }

    // Left: derivatives rise linearly towards 0, capped by M, with the gap
    // derivative positive at 0 and the gap itself staying positive.
    let big_m = tech.f0.right_deriv(a).to_f64().max(tech.f1.right_deriv(a).to_f64()) + 1.0;
    let (s0, s1) = (m0.slope(a), m1.slope(a));
    let (c0, c1) = (big_m - s0, big_m - s1);
    let d_a = m1.value(a) - m0.value(a);
    let ds = s1 - s0;
    if !(c0 > 0.0 && c1 > 0.0 && d_a > 0.0 && big_m.is_finite()) {
        return Err(infeasible(format!(
            "left extension: caps ({c0}, {c1}) and gap {d_a} at 1/n must be positive"
        )));
    }
    // k = (curv1 - curv0) a: k > -ds makes the gap increasing at 0; the
    // upper limit keeps the gap at 0 positive.
    let k_lo = (-ds).max(-c0);
    let k_hi = (2.0 * (d_a - ds * a) / a).min(c1);
    if !(k_lo < k_hi) {
        return Err(infeasible(format!(
            "left extension: no curvature split in ({k_lo}, {k_hi}) at n = {}",
            params.n
        )));
    }
    let k = 0.5 * (k_lo + k_hi);
    let w0 = 0.5 * ((-k).max(0.0) + c0.min(c1 - k));
    let w1 = w0 + k;
    let left0 = LeftPiece { a, value: m0.value(a), slope: s0, curv: w0 / a };
    let left1 = LeftPiece { a, value: m1.value(a), slope: s1, curv: w1 / a };

    // Right: F1_n saturates at slope s1(b) - 1/n. F0_n's derivative ramps
    // down to 0 at u0 - 2/n + ramp, ramp in (1/n, 2/n), then saturates at a
    // floor below F1_n's so the gap grows again far out.
    let (t0, t1) = (m0.slope(b), m1.slope(b));
    let floor1 = t1 - 1.0 / nf;
    let lower_f0 = tech.f1.left_deriv(tech.u0 - 1.0 / nf).to_f64() - 2.0;
    let d_b = m1.value(b) - m0.value(b);
    if !(floor1 > lower_f0 && floor1 < 0.0 && d_b > 0.0) {
        return Err(infeasible(format!(
            "right extension: slopes ({t0}, {t1}) at u0 - 2/n leave no room above {lower_f0} (gap {d_b})"
        )));
    }
    let floor0 = floor1 - 0.5 * (floor1 - lower_f0).min(1.0);
    let right1 = RightPiece { b, value: m1.value(b), slope: t1, ramp: 0.0, floor: floor1, scale: TAIL_SCALE };
    let f1n = SmoothFrontier::new(m1, left1, right1, None);
    let mut built = None;
    for theta in [1.5, 1.25, 1.1, 1.02] {
        let ramp = if t0 > 0.0 { theta / nf } else { 0.0 };
        let right0 = RightPiece { b, value: m0.value(b), slope: t0, ramp, floor: floor0, scale: TAIL_SCALE };
        let f0n = SmoothFrontier::new(m0.clone(), left0, right0, None);
        let reach = b + ramp + 40.0 * TAIL_SCALE;
        if linspace(b, reach, 801).into_iter().all(|u| f1n.eval(u) > f0n.eval(u)) {
            built = Some(f0n);
            break;
        }
    }
    let Some(f0n) = built else {
        return Err(infeasible(format!("right extension: gap closes beyond u0 - 2/n at n = {}", params.n)));
    };
    let mut f1n = f1n;
    let u0n = f0n.peak;
    let gap_of = |f1: &SmoothFrontier, u: f64| f1.eval(u) - f0n.eval(u);
    let mut u_star_n = argmax(&|u| gap_of(&f1n, u), u0n);
    let radius = 1e-3 / nf;
    if !is_strict_max(&|u| gap_of(&f1n, u), u_star_n, radius) && u_star_n > 0.0 {
        let min_gap = linspace(0.0, u_star_n, 201)
            .into_iter()
            .map(|u| gap_of(&f1n, u))
            .fold(f64::INFINITY, f64::min);
        let head = big_m - f1n.deriv(0.0);
        let depth = (params.zeta / 4.0).min(0.5 * min_gap).min(0.25 * head * u_star_n);
        f1n = f1n.with_dip(Dip { at: u_star_n, depth });
        u_star_n = argmax(&|u| gap_of(&f1n, u), u0n);
    }
    Ok(SmoothedPair {
        params: *params,
        u0n,
        u1n: f1n.peak,
        u_star_n,
        f0n: Arc::new(f0n),
        f1n: Arc::new(f1n),
        interval: (a, b),
        upper_bound_near_zero: big_m,
        lower_bound_f0: lower_f0,
    })
}

/// `sup |F0_n - F0|` and `sup |F1_n - zeta - F1|` over a 401-point grid on `I_n`.
pub fn sup_errors(pair: &SmoothedPair, tech: &Technology) -> (f64, f64) {
    sup_errors_on(pair, tech, pair.interval)
}

/// Same as [`sup_errors`] on an arbitrary interval.
pub fn sup_errors_on(pair: &SmoothedPair, tech: &Technology, (a, b): (f64, f64)) -> (f64, f64) {
    let mut e = (0.0f64, 0.0f64);
    for u in linspace(a, b, 401) {
        e.0 = e.0.max((pair.f0n.eval(u) - tech.f0.eval(u)).abs());
        e.1 = e.1.max((pair.f1n.eval(u) - pair.params.zeta - tech.f1.eval(u)).abs());
    }
    e
}

const BOUND_TOL: f64 = 1e-9;

fn worst_of(id: String, pts: impl Iterator<Item = (f64, f64)>) -> Check {
    // (location, violation) pairs; violation <= 0 passes
    let (at, worst) = pts.fold((f64::NAN, f64::NEG_INFINITY), |acc, (u, v)| if v > acc.1 || v.is_nan() { (u, v) } else { acc });
    Check::new(id, worst <= 0.0, worst.max(0.0)).at(format!("u={at}"))
}

fn pair_checks(report: &mut VerificationReport, tech: &Technology, pair: &SmoothedPair) {
    let p = &pair.params;
    let n = p.n;
    let (a, b) = pair.interval;
    let frontiers: [(&str, &SmoothFrontier, &SharedFrontier); 2] =
        [("f0", &pair.f0n, &tech.f0), ("f1", &pair.f1n, &tech.f1)];
    let wide = linspace(0.0, tech.u0 + 0.5, 81);
    for (name, f, _) in frontiers {
        report.push(match midpoint_slack(f, &wide) {
            Some((slack, (u, v))) => Check::new(format!("n={n}.concavity_{name}"), slack > 0.0, (-slack).max(0.0))
                .at(format!("u={u}, v={v}"))
                .note(format!("min midpoint slack {slack:e}")),
            None => Check::new(format!("n={n}.concavity_{name}"), false, f64::INFINITY),
        });
        let mut pts = vec![a, b];
        pts.extend(linspace(1e-3, tech.u0 + 0.5, 101));
        report.push(worst_of(
            format!("n={n}.c1_{name}"),
            pts.into_iter().map(|u| (u, (f.left_deriv(u).to_f64() - f.right_deriv(u).to_f64()).abs() - 1e-9)),
        ));
    }
    let fine = linspace(0.0, tech.u0 + 0.5, 401);
    report.push(
        worst_of(format!("n={n}.dominance"), fine.iter().map(|&u| (u, -pair.gap(u))))
            .note("F1_n > F0_n; extensions: quadratic left pieces, exponentially saturating right tails"),
    );
    let inner = linspace(a, b, 401);
    report.push(worst_of(
        format!("n={n}.gap_on_interval"),
        inner.iter().map(|&u| (u, p.zeta - 2.0 * p.eps - pair.gap(u) - 1e-12)),
    ));
    for (name, f, src) in frontiers {
        report.push(worst_of(
            format!("n={n}.bound_natural_{name}"),
            inner.iter().map(|&u| {
                let fu = f.averaged_slope(u);
                let lower = src.left_deriv(u + 1.0 / n as f64).to_f64() - 1.0 - BOUND_TOL - fu;
                let upper = fu - src.right_deriv(u).to_f64() - BOUND_TOL;
                (u, lower.max(upper))
            }),
        ));
        report.push(worst_of(
            format!("n={n}.strictly_decreasing_{name}"),
            inner.windows(2).map(|w| (w[0], f.averaged_slope(w[1]) - f.averaged_slope(w[0]))),
        ));
    }
    let (e0, e1) = sup_errors(pair, tech);
    report.push(
        Check::new(format!("n={n}.sup_error"), e0.max(e1) <= p.eps, (e0.max(e1) - p.eps).max(0.0))
            .note(format!("F0: {e0:e}, F1: {e1:e}, eps {:e}", p.eps)),
    );
    let strict = is_strict_max(&|u| pair.gap(u), pair.u_star_n, 1e-3 / n as f64);
    report.push(
        Check::new(format!("n={n}.u_star_strict"), pair.u_star_n > 0.0 && strict, 0.0)
            .note(format!("u*_n = {}, strict {strict}, dip {:?}", pair.u_star_n, pair.f1n.dip())),
    );
    report.push(Check::new(format!("n={n}.conflict"), pair.u1n < pair.u0n, (pair.u1n - pair.u0n).max(0.0))
        .note(format!("u1_n = {}, u0_n = {}", pair.u1n, pair.u0n)));
}

/// Certifies the approximating sequence against its source.
pub fn verify_monster(tech: &Technology, sequence: &[SmoothedPair]) -> VerificationReport {
    let mut report = VerificationReport::new("smoothing");
    for pair in sequence {
        pair_checks(&mut report, tech, pair);
        let inv = 1.0 / pair.params.n as f64;
        let n = pair.params.n;
        let v0 = (tech.u0 - inv - pair.u0n).max(pair.u0n - tech.u0).max(0.0);
        let v1 = ((pair.u1n - tech.u1).abs() - inv).max(0.0);
        let vs = ((pair.u_star_n - tech.u_star).abs() - inv).max(0.0);
        report.push(
            Check::new(format!("n={n}.peaks"), v0 <= 1e-9 && v1 <= 1e-9 && vs <= 1e-9, v0.max(v1).max(vs))
                .note(format!("u0_n = {}, u1_n = {}, u*_n = {}", pair.u0n, pair.u1n, pair.u_star_n)),
        );
    }
    if sequence.is_empty() {
        return report;
    }

    // sup-distance on the first pair's interval, weakly decreasing along the sequence
    let fixed = sequence[0].interval;
    let errs: Vec<(usize, f64, f64)> = sequence
        .iter()
        .map(|p| {
            let (e0, e1) = sup_errors_on(p, tech, fixed);
            (p.params.n, e0, e1)
        })
        .collect();
    for w in errs.windows(2) {
        let rise = (w[1].1 - w[0].1).max(w[1].2 - w[0].2);
        report.push(
            Check::new(format!("convergence[n={}->{}]", w[0].0, w[1].0), rise <= 1e-12, rise.max(0.0))
                .note(format!("sup errors ({:e}, {:e}) -> ({:e}, {:e})", w[0].1, w[0].2, w[1].1, w[1].2)),
        );
    }

    // (c) uniform derivative bounds on [0, u] and [u, u0]
    let u0 = tech.u0;
    for frac in [0.25, 0.5, 0.75, 1.0] {
        let u = frac * u0;
        if !tech.f1.left_deriv(u).is_finite() {
            report.push(Check::not_applicable(format!("lower_bound[u={u}]"), "F1- infinite"));
            continue;
        }
        let mut worst = f64::NEG_INFINITY;
        let mut floor = f64::INFINITY;
        let mut at = String::new();
        for pair in sequence {
            let inv = 1.0 / pair.params.n as f64;
            let bound = [&tech.f0, &tech.f1]
                .iter()
                .map(|f| f.left_deriv((u.max(inv) + inv).min(u0 - inv)).to_f64())
                .fold(f64::INFINITY, f64::min)
                - 2.0;
            for v in linspace(0.0, u, 101) {
                for f in [&pair.f0n, &pair.f1n] {
                    let d = f.deriv(v);
                    floor = floor.min(d);
                    if bound - d > worst {
                        worst = bound - d;
                        at = format!("n={}, u={v}", pair.params.n);
                    }
                }
            }
        }
        report.push(
            Check::new(format!("lower_bound[u={u}]"), worst <= BOUND_TOL && floor.is_finite(), worst.max(0.0))
                .at(at)
                .note(format!("uniform lower bound {floor}")),
        );
    }
    for frac in [0.0, 0.25, 0.5, 0.75] {
        let u = frac * u0;
        let bound = tech.f0.right_deriv(u).to_f64().max(tech.f1.right_deriv(u).to_f64()) + 1.0;
        if !bound.is_finite() {
            report.push(Check::not_applicable(format!("upper_bound[u={u}]"), "F+ infinite"));
            continue;
        }
        let mut worst = f64::NEG_INFINITY;
        let mut ceil = f64::NEG_INFINITY;
        let mut at = String::new();
        for pair in sequence {
            for v in linspace(u, u0, 101) {
                for f in [&pair.f0n, &pair.f1n] {
                    let d = f.deriv(v);
                    ceil = ceil.max(d);
                    if d - bound > worst {
                        worst = d - bound;
                        at = format!("n={}, u={v}", pair.params.n);
                    }
                }
            }
        }
        report.push(
            Check::new(format!("upper_bound[u={u}]"), worst <= BOUND_TOL, worst.max(0.0))
                .at(at)
                .note(format!("uniform upper bound {ceil}")),
        );
    }

    // (d) derivative limits along u_n = u + c/n
    let mut limits: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|f| f * u0).collect();
    limits.extend(tech.f0.kinks().into_iter().chain(tech.f1.kinks()).filter(|&k| k > 0.0 && k < u0));
    limits.sort_by(f64::total_cmp);
    limits.dedup();
    let last = sequence.last().unwrap();
    for (j, src) in [(0usize, &tech.f0), (1, &tech.f1)] {
        for &u in &limits {
            for c in [-0.5, 0.0, 0.5] {
                let id = format!("sandwich[j={j},u={u},c={c}]");
                let mut dagger = f64::NEG_INFINITY;
                for pair in sequence {
                    let inv = 1.0 / pair.params.n as f64;
                    let un = u + c * inv;
                    let (a, b) = pair.interval;
                    if !(un >= a && un <= b) {
                        continue;
                    }
                    let f = if j == 0 { &pair.f0n } else { &pair.f1n };
                    if f.dip().is_some_and(|d| un < d.at) {
                        continue;
                    }
                    let d = f.deriv(un);
                    // the slope is a difference quotient over the window
                    let tol = BOUND_TOL + 8.0 * f64::EPSILON * (1.0 + src.eval(un).abs()) / pair.params.delta;
                    dagger = dagger
                        .max(d - src.right_deriv(un).to_f64() - tol)
                        .max(src.left_deriv(un + inv).to_f64() - pair.params.gamma * un - d - tol);
                }
                let inv = 1.0 / last.params.n as f64;
                let un = u + c * inv;
                if !(un >= last.interval.0 && un <= last.interval.1) {
                    report.push(Check::not_applicable(id, format!("u_n = {un} outside I_n at n = {}", last.params.n)));
                    continue;
                }
                let f = if j == 0 { &last.f0n } else { &last.f1n };
                let v = f.deriv(un);
                // one-sided moduli of F+ away from the kink at u itself
                let r = (un - u).abs() + inv + last.params.delta;
                let lo_f = src.right_deriv(u).to_f64();
                let hi_f = src.left_deriv(u).to_f64();
                let right_mod = linspace(u, u + r, 17)
                    .into_iter()
                    .map(|s| (src.right_deriv(s).to_f64() - lo_f).abs())
                    .fold(0.0, f64::max);
                let left_mod = linspace((u - r).max(0.0), u, 17)
                    .into_iter()
                    .filter(|&s| s < u)
                    .map(|s| (src.right_deriv(s).to_f64() - hi_f).abs())
                    .fold(0.0, f64::max);
                let eta = right_mod
                    + left_mod
                    + last.params.gamma * un.max(0.0)
                    + BOUND_TOL
                    + 8.0 * f64::EPSILON * (1.0 + src.eval(un).abs()) / last.params.delta;
                let outside = (lo_f - eta - v).max(v - hi_f - eta);
                let worst = outside.max(dagger);
                report.push(
                    Check::new(id, worst <= 0.0, worst.max(0.0))
                        .note(format!("F'_n(u_n) = {v} at n = {}, [F+, F-] = [{lo_f}, {hi_f}], slack {eta:e}", last.params.n)),
                );
            }
        }
    }
    report
}

/// Pairs for several `n`, built in parallel with automatic parameters.
pub fn build_sequence(tech: &Technology, ns: &[usize]) -> Result<Vec<SmoothedPair>> {
    use rayon::prelude::*;
    ns.par_iter()
        .map(|&n| SmoothingParams::auto(tech, n).and_then(|p| build_smooth_pair(tech, &p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontier::{Affine, PiecewiseLinear};
    use crate::technology::{make_moral_hazard_technology, MoralHazardPrimitives};

    fn kinked() -> Technology {
        let f0 = PiecewiseLinear::new(0.0, 3.0, 0.0, vec![0.3, 0.6, 1.0], vec![1.0, 0.4, -0.5, -3.0]).unwrap();
        let f1 = PiecewiseLinear::new(0.0, 3.0, 2.0, vec![0.1, 0.4, 0.8], vec![0.5, -0.2, -0.8, -2.5]).unwrap();
        Technology::from_frontiers(Arc::new(f0), Arc::new(f1)).unwrap()
    }

    fn smooth() -> Technology {
        make_moral_hazard_technology(&MoralHazardPrimitives::sqrt_quadratic(4.0)).unwrap()
    }

    #[test]
    fn affine_window_average() {
        let f = Affine::new(1.0, 0.7, 0.0, 10.0).unwrap();
        let p = SmoothingParams { n: 8, delta: 0.01, gamma: 0.05, zeta: 0.1, eps: 0.04 };
        let v = averaged_right_derivative(&f, 2.0, &p).unwrap();
        assert!((v - (0.7 - 0.1)).abs() < 1e-12);
        assert!(averaged_right_derivative(&f, 9.995, &p).is_err());
    }

    #[test]
    fn symmetric_window_over_kink() {
        let f = PiecewiseLinear::new(0.0, 3.0, 0.0, vec![1.0], vec![1.0, -1.0]).unwrap();
        let p = SmoothingParams { n: 8, delta: 0.01, gamma: 1e-12, zeta: 0.1, eps: 0.04 };
        let v = averaged_right_derivative(&f, 1.0 - 0.005, &p).unwrap();
        assert!(v.abs() < 1e-10, "{v}");
    }

    #[test]
    fn params_validation() {
        let t = smooth();
        let ok = SmoothingParams::auto(&t, 8).unwrap();
        assert!(ok.validate(&t).is_ok());
        let bad = SmoothingParams { zeta: 0.4 * ok.eps, ..ok };
        assert!(matches!(bad.validate(&t), Err(Error::ParamsOutOfRange(_))));
        assert!(SmoothingParams::auto(&t, 4).is_err());
    }

    #[test]
    fn kinked_pair_certifies() {
        let t = kinked();
        let seq = build_sequence(&t, &[8, 16]).unwrap();
        for p in &seq {
            assert!(p.u_star_n > 0.0);
        }
        let rep = verify_monster(&t, &seq);
        assert!(rep.passed(), "{rep}");
    }

    #[test]
    fn smooth_pair_sup_error() {
        let t = smooth();
        let p = SmoothingParams::auto(&t, 8).unwrap();
        let pair = build_smooth_pair(&t, &p).unwrap();
        let (e0, e1) = sup_errors(&pair, &t);
        assert!(e0 <= p.eps && e1 <= p.eps);
        assert!(pair.u0n <= t.u0 + 1e-12);
    }
}
