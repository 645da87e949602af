//! Concave frontiers with one-sided derivatives.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::numeric::golden_max;

/// Which one-sided derivative to take.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A concave extended-real function on `[0, inf)`.
///
/// Implementors supply the value, the closure of the effective domain and the
/// one-sided derivatives for points in that closure. At the lower end of the
/// domain the left derivative is `+inf`; at a finite upper end the right
/// derivative is `-inf`.
pub trait Frontier: Send + Sync + fmt::Debug {
    /// Value at `u`; `NegInf` outside the closure of the effective domain.
    fn value(&self, u: f64) -> ExtReal;

    /// Closure `[lo, hi]` of the effective domain. `hi` may be infinite.
    fn domain(&self) -> (f64, f64);

    /// Left derivative at a point of the domain closure.
    fn left_deriv(&self, u: f64) -> ExtReal;

    /// Right derivative at a point of the domain closure.
    fn right_deriv(&self, u: f64) -> ExtReal;

    /// The (cached) maximiser.
    fn peak(&self) -> f64;

    /// Points where the frontier is known to be non-differentiable.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Value as a float, `-inf` off the domain.
    fn eval(&self, u: f64) -> f64 {
        self.value(u).to_f64()
    }

    fn in_domain(&self, u: f64) -> bool {
        let (lo, hi) = self.domain();
        u >= lo && u <= hi
    }

    /// One-sided derivative, erroring outside the closure of the domain.
    fn one_sided_deriv(&self, u: f64, side: Side) -> Result<ExtReal> {
        let (lo, hi) = self.domain();
        if !(u >= lo && u <= hi) {
            return Err(Error::DomainError { u, lo, hi });
        }
        Ok(match side {
            Side::Left => self.left_deriv(u),
            Side::Right => self.right_deriv(u),
        })
    }

    /// `F'(a, b)`: the derivative at `a` in the direction of `b`.
    ///
    /// Right derivative when `a <= b`, left derivative when `a > b`.
    fn directional_deriv(&self, a: f64, b: f64) -> ExtReal {
        if a > b {
            self.left_deriv(a)
        } else {
            self.right_deriv(a)
        }
    }
}

pub type SharedFrontier = Arc<dyn Frontier>;

/// Boundary conventions shared by the implementations below. Returns
/// `Some` when `u` sits on an end of the domain where the derivative is
/// infinite by definition.
fn boundary_deriv(u: f64, lo: f64, hi: f64, side: Side) -> Option<ExtReal> {
    match side {
        Side::Left if u <= lo => Some(ExtReal::PosInf),
        Side::Right if u >= hi => Some(ExtReal::NegInf),
        _ => None,
    }
}

fn check_domain(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && lo >= 0.0 && hi > lo) || hi.is_nan() {
        return Err(Error::InvalidFrontier(format!(
            "domain [{lo}, {hi}] must be a nondegenerate interval in [0, inf)"
        )));
    }
    Ok(())
}

/// Continuous piecewise-linear concave frontier.
#[derive(Clone, Debug)]
pub struct PiecewiseLinear {
    lo: f64,
    hi: f64,
    start: f64,
    breaks: Vec<f64>,
    slopes: Vec<f64>,
    // values at lo and at each break
    knots: Vec<f64>,
    peak: f64,
}

impl PiecewiseLinear {
    /// `start` is the value at `lo`; `slopes[i]` applies between consecutive
    /// entries of `[lo, breaks.., hi]`. Slopes must be nonincreasing.
    pub fn new(lo: f64, hi: f64, start: f64, breaks: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        check_domain(lo, hi)?;
        if slopes.len() != breaks.len() + 1 {
            return Err(Error::InvalidFrontier(format!(
                "{} breaks need {} slopes, got {}",
                breaks.len(),
                breaks.len() + 1,
                slopes.len()
            )));
        }
        if !start.is_finite() || slopes.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidFrontier("values and slopes must be finite".into()));
        }
        let mut prev = lo;
        for &b in &breaks {
            if !(b > prev && b < hi) {
                return Err(Error::InvalidFrontier(format!(
                    "break {b} must lie strictly inside ({prev}, {hi}) in increasing order"
                )));
            }
            prev = b;
        }
        if slopes.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidFrontier("slopes must be nonincreasing".into()));
        }
        if hi.is_infinite() && *slopes.last().unwrap() > 0.0 {
            return Err(Error::InvalidFrontier(
                "unbounded domain with a positive final slope has no peak".into(),
            ));
        }
        let mut knots = vec![start];
        let mut x = lo;
        for (i, &b) in breaks.iter().enumerate() {
            let v = knots[i] + slopes[i] * (b - x);
            knots.push(v);
            x = b;
        }
        // leftmost maximiser: first point where the slope to the right is <= 0
        let mut peak = hi;
        let ends: Vec<f64> = std::iter::once(lo).chain(breaks.iter().copied()).collect();
        for (i, &s) in slopes.iter().enumerate() {
            if s <= 0.0 {
                peak = ends[i];
                break;
            }
        }
        Ok(PiecewiseLinear {
            lo,
            hi,
            start,
            breaks,
            slopes,
            knots,
            peak,
        })
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    fn segment(&self, u: f64) -> usize {
        self.breaks.partition_point(|&b| b <= u)
    }
}

impl Frontier for PiecewiseLinear {
    fn value(&self, u: f64) -> ExtReal {
        if !(u >= self.lo && u <= self.hi) {
            return ExtReal::NegInf;
        }
        let i = self.segment(u);
        let x = if i == 0 { self.lo } else { self.breaks[i - 1] };
        ExtReal::Finite(self.knots[i] + self.slopes[i] * (u - x))
    }

    fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn left_deriv(&self, u: f64) -> ExtReal {
        if let Some(d) = boundary_deriv(u, self.lo, self.hi, Side::Left) {
            return d;
        }
        let i = self.breaks.partition_point(|&b| b < u);
        ExtReal::Finite(self.slopes[i])
    }

    fn right_deriv(&self, u: f64) -> ExtReal {
        if let Some(d) = boundary_deriv(u, self.lo, self.hi, Side::Right) {
            return d;
        }
        ExtReal::Finite(self.slopes[self.segment(u)])
    }

    fn peak(&self) -> f64 {
        self.peak
    }

    fn kinks(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

/// `level - curvature * (u - center)^2` on `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub center: f64,
    pub curvature: f64,
    pub level: f64,
    lo: f64,
    hi: f64,
}

impl Quadratic {
    pub fn new(center: f64, curvature: f64, level: f64, lo: f64, hi: f64) -> Result<Self> {
        check_domain(lo, hi)?;
        if !(curvature > 0.0 && curvature.is_finite()) || !center.is_finite() || !level.is_finite() {
            return Err(Error::InvalidFrontier(format!(
                "quadratic needs finite center/level and positive curvature, got {curvature}"
            )));
        }
        Ok(Quadratic {
            center,
            curvature,
            level,
            lo,
            hi,
        })
    }

    fn slope(&self, u: f64) -> f64 {
        -2.0 * self.curvature * (u - self.center)
    }
}

impl Frontier for Quadratic {
    fn value(&self, u: f64) -> ExtReal {
        if !(u >= self.lo && u <= self.hi) {
            return ExtReal::NegInf;
        }
        let d = u - self.center;
        ExtReal::Finite(self.level - self.curvature * d * d)
    }

    fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn left_deriv(&self, u: f64) -> ExtReal {
        boundary_deriv(u, self.lo, self.hi, Side::Left).unwrap_or(ExtReal::Finite(self.slope(u)))
    }

    fn right_deriv(&self, u: f64) -> ExtReal {
        boundary_deriv(u, self.lo, self.hi, Side::Right).unwrap_or(ExtReal::Finite(self.slope(u)))
    }

    fn peak(&self) -> f64 {
        self.center.clamp(self.lo, self.hi)
    }
}

/// `intercept + slope * u` on `[lo, hi]`; `hi` must be finite when `slope > 0`.
#[derive(Clone, Debug)]
pub struct Affine {
    pub intercept: f64,
    pub slope: f64,
    lo: f64,
    hi: f64,
}

impl Affine {
    pub fn new(intercept: f64, slope: f64, lo: f64, hi: f64) -> Result<Self> {
        check_domain(lo, hi)?;
        if !intercept.is_finite() || !slope.is_finite() {
            return Err(Error::InvalidFrontier("affine coefficients must be finite".into()));
        }
        if slope > 0.0 && hi.is_infinite() {
            return Err(Error::InvalidFrontier("increasing affine frontier needs a finite upper end".into()));
        }
        Ok(Affine {
            intercept,
            slope,
            lo,
            hi,
        })
    }
}

impl Frontier for Affine {
    fn value(&self, u: f64) -> ExtReal {
        if !(u >= self.lo && u <= self.hi) {
            return ExtReal::NegInf;
        }
        ExtReal::Finite(self.intercept + self.slope * u)
    }

    fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn left_deriv(&self, u: f64) -> ExtReal {
        boundary_deriv(u, self.lo, self.hi, Side::Left).unwrap_or(ExtReal::Finite(self.slope))
    }

    fn right_deriv(&self, u: f64) -> ExtReal {
        boundary_deriv(u, self.lo, self.hi, Side::Right).unwrap_or(ExtReal::Finite(self.slope))
    }

    fn peak(&self) -> f64 {
        if self.slope > 0.0 {
            self.hi
        } else {
            self.lo
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A black-box concave frontier given by closures.
///
/// Without an analytic derivative the one-sided derivatives are one-sided
/// difference quotients with step `h = 1e-6 * max(1, |u|)`, shrunk to stay
/// inside the domain.
#[derive(Clone)]
pub struct ClosureFrontier {
    f: RealFn,
    df: Option<RealFn>,
    lo: f64,
    hi: f64,
    peak: f64,
    label: String,
}

impl fmt::Debug for ClosureFrontier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureFrontier")
            .field("label", &self.label)
            .field("domain", &(self.lo, self.hi))
            .field("peak", &self.peak)
            .finish()
    }
}

/// Step used by difference-quotient derivatives.
pub fn fd_step(u: f64) -> f64 {
    1e-6 * u.abs().max(1.0)
}

impl ClosureFrontier {
    /// Builds the frontier and locates its peak by golden-section search on
    /// `[lo, min(hi, search_hi)]`.
    pub fn new(
        label: impl Into<String>,
        lo: f64,
        hi: f64,
        search_hi: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: Option<RealFn>,
    ) -> Result<Self> {
        check_domain(lo, hi)?;
        let f: RealFn = Arc::new(f);
        let top = hi.min(search_hi);
        if !top.is_finite() || top <= lo {
            return Err(Error::InvalidFrontier("peak search interval is empty".into()));
        }
        let peak = golden_max(|u| f(u), lo, top, 1e-12);
        Ok(ClosureFrontier {
            f,
            df,
            lo,
            hi,
            peak,
            label: label.into(),
        })
    }

    /// Like [`ClosureFrontier::new`] with the peak supplied directly.
    pub fn with_peak(
        label: impl Into<String>,
        lo: f64,
        hi: f64,
        peak: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: Option<RealFn>,
    ) -> Result<Self> {
        check_domain(lo, hi)?;
        Ok(ClosureFrontier {
            f: Arc::new(f),
            df,
            lo,
            hi,
            peak,
            label: label.into(),
        })
    }
}

impl Frontier for ClosureFrontier {
    fn value(&self, u: f64) -> ExtReal {
        if !(u >= self.lo && u <= self.hi) {
            return ExtReal::NegInf;
        }
        ExtReal::from_f64((self.f)(u))
    }

    fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn left_deriv(&self, u: f64) -> ExtReal {
        if let Some(d) = boundary_deriv(u, self.lo, self.hi, Side::Left) {
            return d;
        }
        if let Some(df) = &self.df {
            return ExtReal::from_f64(df(u));
        }
        let h = fd_step(u).min(u - self.lo);
        ExtReal::from_f64(((self.f)(u) - (self.f)(u - h)) / h)
    }

    fn right_deriv(&self, u: f64) -> ExtReal {
        if let Some(d) = boundary_deriv(u, self.lo, self.hi, Side::Right) {
            return d;
        }
        if let Some(df) = &self.df {
            return ExtReal::from_f64(df(u));
        }
        let h = fd_step(u).min(self.hi - u);
        ExtReal::from_f64(((self.f)(u + h) - (self.f)(u)) / h)
    }

    fn peak(&self) -> f64 {
        self.peak
    }
}

/// Strict midpoint concavity on all pairs of `grid` points inside the domain.
///
/// Returns the smallest slack `F(m) - (F(u)+F(v))/2` seen and the pair that
/// achieved it, or `None` when fewer than two grid points are usable.
pub fn midpoint_slack(f: &dyn Frontier, grid: &[f64]) -> Option<(f64, (f64, f64))> {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .filter_map(|&u| f.value(u).finite().map(|v| (u, v)))
        .collect();
    let mut worst: Option<(f64, (f64, f64))> = None;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let (u, fu) = pts[i];
            let (v, fv) = pts[j];
            if u == v {
                continue;
            }
            let mid = f.eval(0.5 * (u + v));
            let slack = mid - 0.5 * (fu + fv);
            if worst.is_none_or(|(w, _)| slack < w) {
                worst = Some((slack, (u, v)));
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent() -> PiecewiseLinear {
        PiecewiseLinear::new(0.0, 3.0, 0.0, vec![1.0], vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn piecewise_linear_exact_slopes_at_kink() {
        let f = tent();
        assert_eq!(f.one_sided_deriv(1.0, Side::Left).unwrap(), ExtReal::Finite(1.0));
        assert_eq!(f.one_sided_deriv(1.0, Side::Right).unwrap(), ExtReal::Finite(-1.0));
        assert_eq!(f.value(2.5), ExtReal::Finite(-0.5));
        assert_eq!(f.peak(), 1.0);
    }

    #[test]
    fn boundary_derivatives_are_infinite() {
        let f = tent();
        assert_eq!(f.left_deriv(0.0), ExtReal::PosInf);
        assert_eq!(f.right_deriv(3.0), ExtReal::NegInf);
        assert_eq!(f.right_deriv(0.0), ExtReal::Finite(1.0));
    }

    #[test]
    fn outside_domain_is_neg_inf_and_deriv_errors() {
        let f = tent();
        assert_eq!(f.value(3.5), ExtReal::NegInf);
        assert!(matches!(
            f.one_sided_deriv(-0.1, Side::Right),
            Err(Error::DomainError { .. })
        ));
    }

    #[test]
    fn directional_derivative_convention() {
        let f = tent();
        assert_eq!(f.directional_deriv(1.0, 2.0), ExtReal::Finite(-1.0));
        assert_eq!(f.directional_deriv(1.0, 0.0), ExtReal::Finite(1.0));
        assert_eq!(f.directional_deriv(1.0, 1.0), ExtReal::Finite(-1.0));
    }

    #[test]
    fn peak_straddles_zero() {
        let q = Quadratic::new(1.3, 2.0, 0.0, 0.0, f64::INFINITY).unwrap();
        let p = q.peak();
        assert!(q.right_deriv(p).to_f64() <= 0.0 && q.left_deriv(p).to_f64() >= 0.0);
        let f = tent();
        assert!(f.right_deriv(f.peak()).to_f64() <= 0.0 && f.left_deriv(f.peak()).to_f64() >= 0.0);
    }

    #[test]
    fn closure_frontier_fd_matches_analytic() {
        let c = ClosureFrontier::new("sq", 0.0, f64::INFINITY, 10.0, |u| -(u - 2.0) * (u - 2.0), None)
            .unwrap();
        assert!((c.peak() - 2.0).abs() < 1e-6);
        assert!((c.right_deriv(1.0).to_f64() - 2.0).abs() < 1e-5);
        assert!((c.left_deriv(1.0).to_f64() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn nonconcave_slopes_rejected() {
        assert!(PiecewiseLinear::new(0.0, 2.0, 0.0, vec![1.0], vec![-1.0, 1.0]).is_err());
    }

    #[test]
    fn midpoint_slack_detects_strictness() {
        let q = Quadratic::new(0.5, 1.0, 0.0, 0.0, 1.0).unwrap();
        let grid = crate::numeric::linspace(0.0, 1.0, 11);
        let (slack, _) = midpoint_slack(&q, &grid).unwrap();
        assert!(slack > 0.0);
        let (flat, _) = midpoint_slack(&tent(), &[1.5, 2.0, 2.5]).unwrap();
        assert!(flat.abs() < 1e-15);
    }
}
