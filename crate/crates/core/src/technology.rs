//! Frontiers built from moral-hazard primitives, peaks, and the model
//! assumption checks.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::frontier::{midpoint_slack, Frontier, SharedFrontier};
use crate::numeric::{golden_max, linspace, root_decreasing};
use crate::report::{Check, VerificationReport};

/// Power-law interpolation table: log-linear in log-log space between knots,
/// with the end exponents continued into both tails.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    exps: Vec<f64>,
}

impl PowerTable {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidPrimitives(
                "table needs at least two (x, y) pairs of equal length".into(),
            ));
        }
        for i in 0..xs.len() {
            if !(xs[i] > 0.0 && ys[i] > 0.0 && xs[i].is_finite() && ys[i].is_finite()) {
                return Err(Error::InvalidPrimitives(format!(
                    "table entry {i} must be positive and finite"
                )));
            }
            if i > 0 && !(xs[i] > xs[i - 1] && ys[i] > ys[i - 1]) {
                return Err(Error::InvalidPrimitives(
                    "table x and y must both be strictly increasing".into(),
                ));
            }
        }
        let exps = xs
            .windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| (y[1] / y[0]).ln() / (x[1] / x[0]).ln())
            .collect();
        Ok(PowerTable { xs, ys, exps })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    /// Segment index and anchor for `x > 0`.
    fn seg_x(&self, x: f64) -> (usize, f64, f64) {
        let i = self.xs.partition_point(|&k| k <= x).saturating_sub(1).min(self.exps.len() - 1);
        (i, self.xs[i], self.ys[i])
    }

    fn seg_y(&self, y: f64) -> (usize, f64, f64) {
        let i = self.ys.partition_point(|&k| k <= y).saturating_sub(1).min(self.exps.len() - 1);
        (i, self.xs[i], self.ys[i])
    }

    fn tail_exponents(&self) -> (f64, f64) {
        (self.exps[0], *self.exps.last().unwrap())
    }
}

/// A strictly increasing curve on `[0, inf)` with value 0 at 0.
#[derive(Clone, Debug, PartialEq)]
pub enum Curve {
    /// `x^exponent`.
    Power { exponent: f64 },
    Table(PowerTable),
}

impl Curve {
    pub fn sqrt() -> Self {
        Curve::Power { exponent: 0.5 }
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Curve::Power { exponent } => x.powf(*exponent),
            Curve::Table(t) => {
                let (i, x0, y0) = t.seg_x(x);
                y0 * (x / x0).powf(t.exps[i])
            }
        }
    }

    /// Right derivative; `+inf` at 0 for exponents below one.
    pub fn deriv(&self, x: f64) -> f64 {
        let exponent = match self {
            Curve::Power { exponent } => *exponent,
            Curve::Table(t) => t.exps[t.seg_x(x.max(f64::MIN_POSITIVE)).0],
        };
        if x <= 0.0 {
            return if exponent < 1.0 {
                f64::INFINITY
            } else if exponent > 1.0 {
                0.0
            } else {
                match self {
                    Curve::Power { .. } => 1.0,
                    Curve::Table(t) => t.ys[0] / t.xs[0],
                }
            };
        }
        match self {
            Curve::Power { exponent } => exponent * x.powf(exponent - 1.0),
            Curve::Table(_) => exponent * self.value(x) / x,
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match self {
            Curve::Power { exponent } => y.powf(1.0 / exponent),
            Curve::Table(t) => {
                let (i, x0, y0) = t.seg_y(y);
                x0 * (y / y0).powf(1.0 / t.exps[i])
            }
        }
    }

    /// Exponents governing the behaviour near 0 and near infinity.
    fn tail_exponents(&self) -> (f64, f64) {
        match self {
            Curve::Power { exponent } => (*exponent, *exponent),
            Curve::Table(t) => t.tail_exponents(),
        }
    }
}

/// Primitives of the moral-hazard model behind the frontiers.
#[derive(Clone, Debug, PartialEq)]
pub struct MoralHazardPrimitives {
    pub lambda: f64,
    pub w: f64,
    /// Utility of consumption.
    pub phi: Curve,
    /// Effort cost.
    pub kappa: Curve,
    /// The divergence ratio at `divergence_probe` must exceed this multiple of `w`.
    pub divergence_factor: f64,
    pub divergence_probe: f64,
}

impl MoralHazardPrimitives {
    pub fn new(lambda: f64, w: f64, phi: Curve, kappa: Curve) -> Self {
        MoralHazardPrimitives {
            lambda,
            w,
            phi,
            kappa,
            divergence_factor: 10.0,
            divergence_probe: 1e3,
        }
    }

    /// `lambda = 1`, `phi = sqrt`, `kappa = L^2` with the given wage.
    pub fn sqrt_quadratic(w: f64) -> Self {
        Self::new(1.0, w, Curve::sqrt(), Curve::Power { exponent: 2.0 })
    }

    /// `phi'(phi^-1(u))`: marginal utility at the consumption delivering `u`.
    pub fn marginal_utility_at(&self, u: f64) -> f64 {
        self.phi.deriv(self.phi.inverse(u))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidPrimitives(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidPrimitives(format!("w must be positive, got {}", self.w)));
        }
        let (phi_lo, phi_hi) = self.phi.tail_exponents();
        if !(phi_lo > 0.0 && phi_lo < 1.0 && phi_hi > 0.0 && phi_hi < 1.0) {
            return Err(Error::InvalidPrimitives(format!(
                "phi needs tail exponents in (0, 1) so that phi' runs from inf to 0, got {phi_lo} and {phi_hi}"
            )));
        }
        let (k_lo, k_hi) = self.kappa.tail_exponents();
        if !(k_lo > 1.0 && k_hi > 1.0) {
            return Err(Error::InvalidPrimitives(format!(
                "kappa needs tail exponents above 1, got {k_lo} and {k_hi}"
            )));
        }
        if let Curve::Table(t) = &self.phi {
            if t.exps.windows(2).any(|e| e[1] > e[0]) {
                return Err(Error::InvalidPrimitives(
                    "phi table exponents must be nonincreasing for concavity".into(),
                ));
            }
        }
        let samples: Vec<f64> = (-24..=24).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
        for pair in samples.windows(2) {
            if !(self.phi.deriv(pair[1]) < self.phi.deriv(pair[0])) {
                return Err(Error::InvalidPrimitives(format!(
                    "phi' is not strictly decreasing between {} and {}",
                    pair[0], pair[1]
                )));
            }
            if !(self.kappa.value(pair[1]) > self.kappa.value(pair[0])) {
                return Err(Error::InvalidPrimitives(format!(
                    "kappa is not strictly increasing between {} and {}",
                    pair[0], pair[1]
                )));
            }
        }
        if self.kappa.value(0.0) != 0.0 {
            return Err(Error::InvalidPrimitives("kappa(0) must be 0".into()));
        }
        let probe = self.divergence_probe;
        let ratio = self.kappa.deriv(probe) / self.marginal_utility_at(self.kappa.value(probe));
        let threshold = self.divergence_factor * self.w;
        if !(ratio > threshold) {
            return Err(Error::DivergenceViolation {
                ratio,
                probe,
                factor: self.divergence_factor,
                threshold,
            });
        }
        Ok(())
    }
}

/// The unique `L > 0` with `w = kappa'(L) / phi'(phi^-1(u + kappa(L)))`.
pub fn effort_star(prims: &MoralHazardPrimitives, u: f64) -> Result<f64> {
    let u = u.max(0.0);
    root_decreasing("effort first-order condition", |l| {
        prims.w - prims.kappa.deriv(l) / prims.marginal_utility_at(u + prims.kappa.value(l))
    })
}

/// `F0(u) = u - lambda * phi^-1(u)`.
#[derive(Clone, Debug)]
pub struct MoralHazardF0 {
    prims: Arc<MoralHazardPrimitives>,
    peak: f64,
}

/// `F1(u) = u + lambda * max_L [w L - phi^-1(u + kappa(L))]`.
#[derive(Clone, Debug)]
pub struct MoralHazardF1 {
    prims: Arc<MoralHazardPrimitives>,
    peak: f64,
}

impl MoralHazardF1 {
    /// Frontier value together with the maximising effort.
    pub fn value_and_effort(&self, u: f64) -> Result<(f64, f64)> {
        let p = &self.prims;
        let l = effort_star(p, u)?;
        let v = u + p.lambda * (p.w * l - p.phi.inverse(u + p.kappa.value(l)));
        Ok((v, l))
    }

    fn slope(&self, u: f64) -> ExtReal {
        match effort_star(&self.prims, u) {
            Ok(l) => {
                let p = &self.prims;
                ExtReal::from_f64(1.0 - p.lambda / p.marginal_utility_at(u + p.kappa.value(l)))
            }
            Err(_) => ExtReal::NegInf,
        }
    }
}

impl Frontier for MoralHazardF0 {
    fn value(&self, u: f64) -> ExtReal {
        if !(u >= 0.0) || u.is_infinite() {
            return ExtReal::NegInf;
        }
        ExtReal::Finite(u - self.prims.lambda * self.prims.phi.inverse(u))
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn left_deriv(&self, u: f64) -> ExtReal {
        if u <= 0.0 {
            return ExtReal::PosInf;
        }
        self.right_deriv(u)
    }

    fn right_deriv(&self, u: f64) -> ExtReal {
        ExtReal::from_f64(1.0 - self.prims.lambda / self.prims.marginal_utility_at(u))
    }

    fn peak(&self) -> f64 {
        self.peak
    }
}

impl Frontier for MoralHazardF1 {
    fn value(&self, u: f64) -> ExtReal {
        if !(u >= 0.0) || u.is_infinite() {
            return ExtReal::NegInf;
        }
        match self.value_and_effort(u) {
            Ok((v, _)) => ExtReal::from_f64(v),
            Err(_) => ExtReal::NegInf,
        }
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn left_deriv(&self, u: f64) -> ExtReal {
        if u <= 0.0 {
            return ExtReal::PosInf;
        }
        self.slope(u)
    }

    fn right_deriv(&self, u: f64) -> ExtReal {
        self.slope(u)
    }

    fn peak(&self) -> f64 {
        self.peak
    }
}

/// A pre/post-breakthrough frontier pair with its peaks and `u*`.
#[derive(Clone, Debug)]
pub struct Technology {
    pub f0: SharedFrontier,
    pub f1: SharedFrontier,
    pub u0: f64,
    pub u1: f64,
    pub u_star: f64,
    pub prims: Option<MoralHazardPrimitives>,
}

/// Builds the moral-hazard technology: peaks from first-order conditions and
/// `u*` from the gap.
pub fn make_moral_hazard_technology(prims: &MoralHazardPrimitives) -> Result<Technology> {
    prims.validate()?;
    let shared = Arc::new(prims.clone());
    let lambda = prims.lambda;
    let u0 = root_decreasing("pre-breakthrough peak condition", |u| {
        prims.marginal_utility_at(u) - lambda
    })?;
    let l0 = effort_star(prims, 0.0)?;
    let u1 = if prims.marginal_utility_at(prims.kappa.value(l0)) <= lambda {
        0.0
    } else {
        let failure = std::cell::RefCell::new(None);
        let root = root_decreasing("post-breakthrough peak condition", |u| {
            match effort_star(prims, u) {
                Ok(l) => prims.marginal_utility_at(u + prims.kappa.value(l)) - lambda,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        root?
    };
    let f0: SharedFrontier = Arc::new(MoralHazardF0 {
        prims: shared.clone(),
        peak: u0,
    });
    let f1: SharedFrontier = Arc::new(MoralHazardF1 {
        prims: shared,
        peak: u1,
    });
    let mut tech = Technology::assemble(f0, f1, None)?;
    tech.prims = Some(prims.clone());
    Ok(tech)
}

/// Tolerance for the sampled `F1 >= F0` check.
const DOMINANCE_TOL: f64 = 1e-12;

impl Technology {
    /// Technology from an arbitrary frontier pair. Enforces `0 <= u1 < u0`
    /// and `F1 >= F0` on a grid over `[0, u0]`.
    pub fn from_frontiers(f0: SharedFrontier, f1: SharedFrontier) -> Result<Self> {
        Self::assemble(f0, f1, None)
    }

    /// Like [`Technology::from_frontiers`] but without the conflict-of-interest
    /// and dominance requirements. An explicit `u_star` must be a point where
    /// the two frontiers share a supergradient.
    pub fn from_frontiers_relaxed(
        f0: SharedFrontier,
        f1: SharedFrontier,
        u_star: Option<f64>,
    ) -> Result<Self> {
        let u0 = f0.peak();
        let u1 = f1.peak();
        let u_star = match u_star {
            Some(u) => {
                let lo = f0.right_deriv(u).max(f1.right_deriv(u));
                let hi = f0.left_deriv(u).min(f1.left_deriv(u));
                if !(lo <= hi) {
                    return Err(Error::InvalidFrontier(format!(
                        "frontiers share no supergradient at u* = {u}"
                    )));
                }
                u
            }
            None => locate_u_star(f0.as_ref(), f1.as_ref(), u0)?,
        };
        Ok(Technology {
            f0,
            f1,
            u0,
            u1,
            u_star,
            prims: None,
        })
    }

    fn assemble(f0: SharedFrontier, f1: SharedFrontier, _hint: Option<f64>) -> Result<Self> {
        let u0 = f0.peak();
        let u1 = f1.peak();
        if !(u1 >= 0.0 && u1 < u0) {
            return Err(Error::ConflictOfInterest { u0, u1 });
        }
        for u in linspace(0.0, u0, 401) {
            let (a, b) = (f0.eval(u), f1.eval(u));
            if a.is_finite() && !(b >= a - DOMINANCE_TOL) {
                return Err(Error::InvalidFrontier(format!(
                    "F1 < F0 at u = {u} ({b} < {a})"
                )));
            }
        }
        let u_star = locate_u_star(f0.as_ref(), f1.as_ref(), u0)?;
        Ok(Technology {
            f0,
            f1,
            u0,
            u1,
            u_star,
            prims: None,
        })
    }

    /// `F1(u) - F0(u)`.
    pub fn gap(&self, u: f64) -> f64 {
        self.f1.eval(u) - self.f0.eval(u)
    }

    /// Optimal effort at `u`, when built from primitives.
    pub fn effort_star(&self, u: f64) -> Option<Result<f64>> {
        self.prims.as_ref().map(|p| effort_star(p, u))
    }
}

/// Argmax of `F1 - F0` on `[0, u0]`: a 2001-point scan, golden-section
/// refinement around the best grid point, then a one-sided derivative check
/// at the candidate.
fn locate_u_star(f0: &dyn Frontier, f1: &dyn Frontier, u0: f64) -> Result<f64> {
    let gap = |u: f64| f1.eval(u) - f0.eval(u);
    let grid = linspace(0.0, u0, 2001);
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &u) in grid.iter().enumerate() {
        let g = gap(u);
        if g > best_val {
            best_val = g;
            best = i;
        }
    }
    if !best_val.is_finite() {
        return Err(Error::InvalidFrontier("F1 - F0 is nowhere finite on [0, u0]".into()));
    }
    let slope_right = |u: f64| f1.right_deriv(u).to_f64() - f0.right_deriv(u).to_f64();
    if best == 0 && slope_right(0.0) <= 1e-9 {
        return Ok(0.0);
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let cand = golden_max(gap, lo, hi, 1e-12);
    let cand = [cand, grid[best]]
        .into_iter()
        .max_by(|a, b| gap(*a).total_cmp(&gap(*b)))
        .unwrap();
    // Post-check: at an interior maximiser psi+ <= 0 <= psi-. A plateau or a
    // spurious golden-section stop shows up as a violation here.
    let right = slope_right(cand);
    let left = f1.left_deriv(cand).to_f64() - f0.left_deriv(cand).to_f64();
    let tol = 1e-5;
    if cand > 0.0 && (right > tol || left < -tol) {
        return Err(Error::InvalidFrontier(format!(
            "u* candidate {cand} fails the one-sided derivative check (psi+ = {right}, psi- = {left})"
        )));
    }
    Ok(cand)
}

/// Checks the model assumptions for a technology on `grid` (a subset of `(0, u0]`).
pub fn verify_ui_assumptions(tech: &Technology, grid: &[f64]) -> VerificationReport {
    let mut report = VerificationReport::new("ui-assns");
    for (id, f) in [("concavity_f0", &tech.f0), ("concavity_f1", &tech.f1)] {
        report.push(match midpoint_slack(f.as_ref(), grid) {
            None => Check::new(id, true, 0.0).note("vacuous: fewer than two grid points"),
            Some((slack, (u, v))) => Check::new(id, slack > 1e-10, (1e-10 - slack).max(0.0))
                .at(format!("u={u}, v={v}"))
                .note(format!("min midpoint slack {slack:e}")),
        });
    }

    report.push(
        Check::new(
            "conflict_of_interest",
            tech.u1 >= 0.0 && tech.u1 < tech.u0,
            (tech.u1 - tech.u0).max(0.0),
        )
        .note(format!("u1 = {}, u0 = {}", tech.u1, tech.u0)),
    );

    let mut worst = f64::NEG_INFINITY;
    let mut at = None;
    let mut tested = 0;
    for &u in grid {
        if u == tech.u0 || !(u > 0.0) {
            continue;
        }
        tested += 1;
        for (s1, s0) in [
            (tech.f1.right_deriv(u), tech.f0.right_deriv(u)),
            (tech.f1.left_deriv(u), tech.f0.left_deriv(u)),
        ] {
            let d = s1.to_f64() - s0.to_f64();
            if d > worst || d.is_nan() {
                worst = d;
                at = Some(u);
            }
        }
    }
    report.push(if tested == 0 {
        Check::new("gap_derivative", true, 0.0).note("skipped: no grid point other than the peak")
    } else {
        let c = Check::new("gap_derivative", worst < 0.0, worst.max(0.0))
            .note(format!("max of F1' - F0' over {tested} points: {worst:e}"));
        match at {
            Some(u) => c.at(format!("u={u}")),
            None => c,
        }
    });

    report.push(
        Check::new("u_star_zero", tech.u_star == 0.0, tech.u_star.abs())
            .note(format!("u* = {}", tech.u_star)),
    );

    report.push(match &tech.prims {
        None => Check::not_applicable("peak_identity", "no primitives"),
        Some(_) if tech.u1 == 0.0 => Check::not_applicable("peak_identity", "corner"),
        Some(p) => match effort_star(p, tech.u1) {
            Ok(l) => {
                let resid = (tech.u0 - tech.u1 - p.kappa.value(l)).abs();
                Check::new("peak_identity", resid < 1e-8, resid)
                    .note(format!("|u0 - u1 - kappa(L*(u1))| = {resid:e}"))
            }
            Err(e) => Check::new("peak_identity", false, f64::INFINITY).note(e.to_string()),
        },
    });
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_peaks() {
        let tech = make_moral_hazard_technology(&MoralHazardPrimitives::sqrt_quadratic(1.0)).unwrap();
        assert!((tech.u0 - 0.5).abs() < 1e-10);
        assert!((tech.u1 - 0.25).abs() < 1e-10);
        assert_eq!(tech.u_star, 0.0);
    }

    #[test]
    fn corner_when_wage_is_high() {
        let tech = make_moral_hazard_technology(&MoralHazardPrimitives::sqrt_quadratic(4.0)).unwrap();
        assert_eq!(tech.u1, 0.0);
        let l = effort_star(tech.prims.as_ref().unwrap(), 0.0).unwrap();
        assert!((l - 1.0).abs() < 1e-11);
    }

    #[test]
    fn divergence_violation_reported() {
        let mut p = MoralHazardPrimitives::sqrt_quadratic(1.0);
        p.divergence_factor = 1e12;
        assert!(matches!(p.validate(), Err(Error::DivergenceViolation { .. })));
    }

    #[test]
    fn table_curve_reproduces_power() {
        let xs: Vec<f64> = vec![0.01, 0.1, 1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x| x.sqrt()).collect();
        let t = Curve::Table(PowerTable::new(xs, ys).unwrap());
        for x in [0.001, 0.05, 3.0, 1e4] {
            assert!((t.value(x) - x.sqrt()).abs() < 1e-12 * x.sqrt().max(1.0));
            assert!((t.inverse(t.value(x)) - x).abs() < 1e-9 * x.max(1.0));
            assert!((t.deriv(x) - 0.5 / x.sqrt()).abs() < 1e-9 / x.sqrt());
        }
    }

    #[test]
    fn bad_lambda_rejected() {
        let mut p = MoralHazardPrimitives::sqrt_quadratic(1.0);
        p.lambda = 0.0;
        assert!(matches!(p.validate(), Err(Error::InvalidPrimitives(_))));
    }
}
