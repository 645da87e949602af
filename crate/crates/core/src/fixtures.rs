//! Named instances shared by the verification suites, tests and the CLI.

use std::sync::Arc;

use crate::distribution::BreakthroughDistribution;
use crate::error::Result;
use crate::frontier::{Affine, ClosureFrontier, PiecewiseLinear, Quadratic, SharedFrontier};
use crate::mechanism::{Mechanism, PostPromise};
use crate::mixture::FrontierDistribution;
use crate::path::StepPath;
use crate::technology::{make_moral_hazard_technology, MoralHazardPrimitives, Technology};

/// `lambda = 1`, `w = 1`, `phi = sqrt`, `kappa = L^2`: `u0 = 0.5`, `u1 = 0.25`, `u* = 0`.
pub fn default_technology() -> Result<Technology> {
    make_moral_hazard_technology(&MoralHazardPrimitives::sqrt_quadratic(1.0))
}

/// Same primitives with `w = 4`: corner `u1 = 0`.
pub fn corner_technology() -> Result<Technology> {
    make_moral_hazard_technology(&MoralHazardPrimitives::sqrt_quadratic(4.0))
}

/// Piecewise-linear pair with kinks at 0.3, 0.6, 1.0 (`F0`) and 0.1, 0.4,
/// 0.8 (`F1`): `u0 = 0.6`, `u1 = 0.1`, `u* = 0`.
pub fn kinked_technology() -> Result<Technology> {
    let f0 = PiecewiseLinear::new(0.0, 3.0, 0.0, vec![0.3, 0.6, 1.0], vec![1.0, 0.4, -0.5, -3.0])?;
    let f1 = PiecewiseLinear::new(0.0, 3.0, 2.0, vec![0.1, 0.4, 0.8], vec![0.5, -0.2, -0.8, -2.5])?;
    Technology::from_frontiers(Arc::new(f0), Arc::new(f1))
}

/// `F0 = 0.5 + 0.5 u` on `[0, 1]` and `F1 = 2 - (u - 0.25)^2`: affine
/// pre-breakthrough frontier with `u0 = 1`, `u1 = 0.25`.
pub fn affine_technology() -> Result<Technology> {
    let f0 = Affine::new(0.5, 0.5, 0.0, 1.0)?;
    let f1 = Quadratic::new(0.25, 1.0, 2.0, 0.0, f64::INFINITY)?;
    Technology::from_frontiers(Arc::new(f0), Arc::new(f1))
}

/// `F0 = -(u - 1)^2`, `F1 = 1.5 - 4 (u - 0.5)^2`: the gap is strictly
/// concave with its maximum at `u* = 1/3`.
pub fn local_max_technology() -> Result<Technology> {
    let f0 = Quadratic::new(1.0, 1.0, 0.0, 0.0, f64::INFINITY)?;
    let f1 = Quadratic::new(0.5, 4.0, 1.5, 0.0, f64::INFINITY)?;
    Technology::from_frontiers(Arc::new(f0), Arc::new(f1))
}

/// `F0 = 1 - 3 (u - 1.5)^2` and `F1 = F0 - (u - 1)^3` on `[0, 3]`, with `u*`
/// placed at the inflection point 1 where the gap is a cubic.
pub fn saddle_technology() -> Result<Technology> {
    let f0 = Quadratic::new(1.5, 3.0, 1.0, 0.0, 3.0)?;
    let f1 = ClosureFrontier::with_peak(
        "cubic-gap",
        0.0,
        3.0,
        2f64.sqrt(),
        |u: f64| 1.0 - 3.0 * (u - 1.5).powi(2) - (u - 1.0).powi(3),
        Some(Arc::new(|u: f64| -6.0 * (u - 1.5) - 3.0 * (u - 1.0).powi(2))),
    )?;
    Technology::from_frontiers_relaxed(Arc::new(f0), Arc::new(f1), Some(1.0))
}

/// Both frontiers kinked at `u* = 1`: `F0` slopes `(1, -1)`, `F1` slopes
/// `(0.5, -2)`, shared supergradients `[-1, 0.5]`.
pub fn mutual_kink_technology() -> Result<Technology> {
    let f0 = PiecewiseLinear::new(0.0, 3.0, 0.0, vec![1.0], vec![1.0, -1.0])?;
    let f1 = PiecewiseLinear::new(0.0, 3.0, 1.0, vec![1.0], vec![0.5, -2.0])?;
    Technology::from_frontiers_relaxed(Arc::new(f0), Arc::new(f1), Some(1.0))
}

/// Two members `-(u - 1)^2` and `-(u - 3)^2` with equal weights; the mixture
/// frontier is `-(u - 2)^2` for `u >= 1`.
pub fn quadratic_pair_mixture() -> Result<FrontierDistribution> {
    let a: SharedFrontier = Arc::new(Quadratic::new(1.0, 1.0, 0.0, 0.0, f64::INFINITY)?);
    let b: SharedFrontier = Arc::new(Quadratic::new(3.0, 1.0, 0.0, 0.0, f64::INFINITY)?);
    FrontierDistribution::new(vec![(a, 0.5), (b, 0.5)])
}

/// Flow `u0/2` on `[0, 1)`, `u0` on `[1, 2)`, 0 afterwards, in no-delay form.
pub fn two_step_mechanism(tech: &Technology, r: f64) -> Result<Mechanism> {
    let x0 = StepPath::new(vec![0.0, 1.0, 2.0], vec![0.5 * tech.u0, tech.u0, 0.0])?;
    Mechanism::new(x0, PostPromise::NoDelay { u1: tech.u1 }, r)
}

/// Unit atom at `t`.
pub fn atom_at(t: f64) -> Result<BreakthroughDistribution> {
    BreakthroughDistribution::atom(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gap::{classify_u_star, GapKind};

    #[test]
    fn fixture_peaks() {
        let t = affine_technology().unwrap();
        assert_eq!((t.u0, t.u1, t.u_star), (1.0, 0.25, 0.0));
        let t = local_max_technology().unwrap();
        assert!((t.u_star - 1.0 / 3.0).abs() < 1e-6, "{}", t.u_star);
        let t = saddle_technology().unwrap();
        assert!((t.u1 - 2f64.sqrt()).abs() < 1e-12 && t.u0 == 1.5);
        assert!(t.f1.left_deriv(0.5).to_f64() > t.f1.left_deriv(1.0).to_f64());
    }

    #[test]
    fn trichotomy_fixtures() {
        let kind = |t: Technology| classify_u_star(&t).unwrap().kind;
        assert_eq!(kind(local_max_technology().unwrap()), GapKind::LocalMax);
        assert_eq!(kind(saddle_technology().unwrap()), GapKind::Saddle);
        assert_eq!(kind(mutual_kink_technology().unwrap()), GapKind::MutualKink);
    }
}
