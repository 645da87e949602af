//! Post-breakthrough frontier when the realised frontier is random: the best
//! expected value over allocations with a given mean.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::frontier::{Frontier, SharedFrontier};
use crate::numeric::bisect;
use crate::report::{Check, VerificationReport};

/// A finitely supported distribution over frontiers.
#[derive(Clone, Debug)]
pub struct FrontierDistribution {
    members: Vec<(SharedFrontier, f64)>,
}

impl FrontierDistribution {
    pub fn new(members: Vec<(SharedFrontier, f64)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptySupport);
        }
        let mut total = 0.0;
        for (i, (f, p)) in members.iter().enumerate() {
            if !(*p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "probability of member {i} must be positive, got {p}"
                )));
            }
            if !f.peak().is_finite() {
                return Err(Error::InvalidDistribution(format!("member {i} has no finite peak")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(FrontierDistribution { members })
    }

    pub fn members(&self) -> &[(SharedFrontier, f64)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.members.iter().map(|(_, p)| *p).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureOptions {
    /// Upper bound on every allocated promise.
    pub alloc_cap: f64,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        MixtureOptions {
            alloc_cap: f64::INFINITY,
        }
    }
}

/// Promised utility assigned to each support point.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub values: Vec<f64>,
}

impl Allocation {
    pub fn mean(&self, probs: &[f64]) -> f64 {
        self.values.iter().zip(probs).map(|(x, p)| x * p).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureResult {
    pub value: ExtReal,
    pub alloc: Allocation,
    /// Shared supergradient level at the solution.
    pub level: f64,
    /// True when some allocation sits at the cap below its member's domain end.
    pub cap_binds: bool,
}

const X_TOL: f64 = 1e-14;

/// Member view with the allocation cap folded into the domain.
struct Member<'a> {
    f: &'a dyn Frontier,
    p: f64,
    lo: f64,
    hi: f64,
    capped: bool,
}

impl<'a> Member<'a> {
    fn new(f: &'a dyn Frontier, p: f64, cap: f64) -> Self {
        let (lo, hi) = f.domain();
        let capped = cap < hi;
        Member {
            f,
            p,
            lo,
            hi: hi.min(cap),
            capped,
        }
    }

    fn right(&self, x: f64) -> f64 {
        if x >= self.hi {
            f64::NEG_INFINITY
        } else {
            self.f.right_deriv(x).to_f64()
        }
    }

    fn left(&self, x: f64) -> f64 {
        if x <= self.lo {
            f64::INFINITY
        } else {
            self.f.left_deriv(x).to_f64()
        }
    }

    /// Finite upper end for bisection: the domain end, or the first point
    /// found by doubling where `pred` fails.
    fn upper(&self, pred: &dyn Fn(f64) -> bool) -> f64 {
        if self.hi.is_finite() {
            return self.hi;
        }
        let mut x = self.lo + 1.0;
        for _ in 0..1100 {
            if !pred(x) {
                return x;
            }
            x = self.lo + 2.0 * (x - self.lo);
        }
        f64::INFINITY
    }

    /// Smallest `x` whose right derivative is at most `eta`.
    fn demand_lo(&self, eta: f64) -> f64 {
        if self.right(self.lo) <= eta {
            return self.lo;
        }
        let pred = |x: f64| self.right(x) > eta;
        let hi = self.upper(&pred);
        if !hi.is_finite() {
            return hi;
        }
        let x = bisect(self.lo, hi, X_TOL * hi.abs().max(1.0), pred);
        x.min(self.hi)
    }

    /// Largest `x` whose left derivative is at least `eta`.
    fn demand_hi(&self, eta: f64) -> f64 {
        if self.left(self.hi) >= eta {
            return self.hi;
        }
        let pred = |x: f64| self.left(x) >= eta;
        let hi = self.upper(&pred);
        if !hi.is_finite() {
            return hi;
        }
        bisect(self.lo, hi, X_TOL * hi.abs().max(1.0), pred).max(self.lo)
    }
}

fn members<'a>(dist: &'a FrontierDistribution, cap: f64) -> Vec<Member<'a>> {
    dist.members
        .iter()
        .map(|(f, p)| Member::new(f.as_ref(), *p, cap))
        .collect()
}

fn total(ms: &[Member], xs: impl Iterator<Item = f64>) -> f64 {
    ms.iter().zip(xs).map(|(m, x)| m.p * x).sum()
}

/// Maximises `sum p_i F_i(x_i)` subject to `sum p_i x_i = u`, `x_i >= 0`.
///
/// Solved by equalising supergradients: bisection on the shared level `eta`
/// with each member's demand interval computed by bisection on its one-sided
/// derivatives. Members tied at a kink or flat piece are filled greedily in
/// index order.
pub fn mixture_value(dist: &FrontierDistribution, u: f64, opts: MixtureOptions) -> Result<MixtureResult> {
    if dist.is_empty() {
        return Err(Error::EmptySupport);
    }
    let ms = members(dist, opts.alloc_cap);
    let min_total = total(&ms, ms.iter().map(|m| m.lo));
    let max_total = total(&ms, ms.iter().map(|m| m.hi));
    let infeasible = || MixtureResult {
        value: ExtReal::NegInf,
        alloc: Allocation {
            values: vec![u; ms.len()],
        },
        level: f64::NAN,
        cap_binds: false,
    };
    if !(u >= 0.0) || u < min_total || u > max_total {
        return Ok(infeasible());
    }
    let (lower, upper, level) = if u == max_total {
        let xs: Vec<f64> = ms.iter().map(|m| m.hi).collect();
        (xs.clone(), xs, f64::NEG_INFINITY)
    } else if u == min_total {
        let xs: Vec<f64> = ms.iter().map(|m| m.lo).collect();
        (xs.clone(), xs, f64::INFINITY)
    } else {
        let s_hi = |eta: f64| total(&ms, ms.iter().map(|m| m.demand_hi(eta)));
        // eta_a: S_hi(eta_a) >= u ; eta_b: S_hi(eta_b) < u
        let mut eta_a = -1.0;
        while s_hi(eta_a) < u {
            eta_a *= 2.0;
            if !eta_a.is_finite() {
                return Err(Error::RootBracketFailure { what: "mixture supergradient level" });
            }
        }
        let mut eta_b = 1.0f64.max(eta_a + 1.0);
        while s_hi(eta_b) >= u {
            eta_b = if eta_b > 0.0 { eta_b * 2.0 } else { 1.0 };
            if !eta_b.is_finite() {
                return Err(Error::RootBracketFailure { what: "mixture supergradient level" });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (eta_a + eta_b);
            if mid <= eta_a || mid >= eta_b || eta_b - eta_a <= 1e-15 * eta_a.abs().max(1.0) {
                break;
            }
            if s_hi(mid) >= u {
                eta_a = mid;
            } else {
                eta_b = mid;
            }
        }
        let lower: Vec<f64> = ms.iter().map(|m| m.demand_lo(eta_b)).collect();
        let upper: Vec<f64> = ms.iter().map(|m| m.demand_hi(eta_a)).collect();
        (lower, upper, 0.5 * (eta_a + eta_b))
    };

    let mut xs = lower;
    let mut rest = u - total(&ms, xs.iter().copied());
    for (i, m) in ms.iter().enumerate() {
        if rest <= 0.0 {
            break;
        }
        let room = (upper[i] - xs[i]).max(0.0);
        let add = (rest / m.p).min(room);
        xs[i] += add;
        rest -= m.p * add;
    }
    if rest.abs() > 1e-9 * u.abs().max(1.0) {
        // Remaining mass left by the bracket: spread over members with room
        // up to their domain ends.
        for (i, m) in ms.iter().enumerate() {
            let room = if rest > 0.0 { m.hi - xs[i] } else { m.lo - xs[i] };
            let add = if rest > 0.0 { (rest / m.p).min(room) } else { (rest / m.p).max(room) };
            xs[i] += add;
            rest -= m.p * add;
        }
    }
    let mut value = 0.0;
    for (m, &x) in ms.iter().zip(&xs) {
        value += m.p * m.f.eval(x);
    }
    let cap_binds = ms
        .iter()
        .zip(&xs)
        .any(|(m, &x)| m.capped && x >= m.hi - 1e-12 * m.hi.abs().max(1.0));
    Ok(MixtureResult {
        value: ExtReal::from_f64(value),
        alloc: Allocation { values: xs },
        level,
        cap_binds,
    })
}

/// `u1 = sum p_i U1(F_i)`.
pub fn mixture_peak(dist: &FrontierDistribution) -> f64 {
    dist.members.iter().map(|(f, p)| p * f.peak()).sum()
}

/// The mixture value function as a [`Frontier`].
#[derive(Clone, Debug)]
pub struct MixtureFrontier {
    dist: FrontierDistribution,
    opts: MixtureOptions,
}

impl MixtureFrontier {
    pub fn new(dist: FrontierDistribution, opts: MixtureOptions) -> Self {
        MixtureFrontier { dist, opts }
    }

    pub fn shared(dist: FrontierDistribution) -> SharedFrontier {
        Arc::new(Self::new(dist, MixtureOptions::default()))
    }

    pub fn distribution(&self) -> &FrontierDistribution {
        &self.dist
    }

    fn level_bound(&self, u: f64, upper: bool) -> f64 {
        let ms = members(&self.dist, self.opts.alloc_cap);
        // right derivative: inf{eta : S_lo(eta) <= u}; left: sup{eta : S_hi(eta) >= u}
        let pred = |eta: f64| {
            if upper {
                total(&ms, ms.iter().map(|m| m.demand_hi(eta))) >= u
            } else {
                total(&ms, ms.iter().map(|m| m.demand_lo(eta))) > u
            }
        };
        let mut a = -1.0;
        while !pred(a) {
            a *= 2.0;
            if !a.is_finite() {
                return f64::NEG_INFINITY;
            }
        }
        let mut b = 1.0f64.max(a + 1.0);
        while pred(b) {
            b *= 2.0;
            if !b.is_finite() {
                return f64::INFINITY;
            }
        }
        bisect(a, b, 1e-13 * a.abs().max(1.0), pred)
    }
}

impl Frontier for MixtureFrontier {
    fn value(&self, u: f64) -> ExtReal {
        mixture_value(&self.dist, u, self.opts)
            .map(|r| r.value)
            .unwrap_or(ExtReal::NegInf)
    }

    fn domain(&self) -> (f64, f64) {
        let ms = members(&self.dist, self.opts.alloc_cap);
        (
            total(&ms, ms.iter().map(|m| m.lo)),
            total(&ms, ms.iter().map(|m| m.hi)),
        )
    }

    fn left_deriv(&self, u: f64) -> ExtReal {
        let (lo, _) = self.domain();
        if u <= lo {
            return ExtReal::PosInf;
        }
        ExtReal::from_f64(self.level_bound(u, true))
    }

    fn right_deriv(&self, u: f64) -> ExtReal {
        let (_, hi) = self.domain();
        if u >= hi {
            return ExtReal::NegInf;
        }
        ExtReal::from_f64(self.level_bound(u, false))
    }

    fn peak(&self) -> f64 {
        mixture_peak(&self.dist)
    }

    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Resolution used to locate finite/`-inf` transitions.
pub const BOUNDARY_RESOLUTION: f64 = 1e-6;

/// Finds the points of `grid` where the mixture value switches between
/// finite and `-inf`, refined by bisection to [`BOUNDARY_RESOLUTION`]. Each
/// entry is `(boundary, finite_side_is_left)`.
pub fn domain_boundaries(value: &dyn Fn(f64) -> f64, grid: &[f64]) -> Vec<(f64, bool)> {
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let fa = value(a).is_finite();
        let fb = value(b).is_finite();
        if fa != fb {
            // keep the finite end as the bisection's "true" side
            let x = if fa {
                let mut lo = a;
                let mut hi = b;
                while hi - lo > BOUNDARY_RESOLUTION {
                    let m = 0.5 * (lo + hi);
                    if value(m).is_finite() {
                        lo = m
                    } else {
                        hi = m
                    }
                }
                lo
            } else {
                let mut lo = a;
                let mut hi = b;
                while hi - lo > BOUNDARY_RESOLUTION {
                    let m = 0.5 * (lo + hi);
                    if value(m).is_finite() {
                        hi = m
                    } else {
                        lo = m
                    }
                }
                hi
            };
            out.push((x, fa));
        }
    }
    out
}

/// Concavity, unique peak and upper semi-continuity of the mixture frontier
/// on `grid`.
pub fn verify_mixture_regularity(dist: &FrontierDistribution, grid: &[f64]) -> VerificationReport {
    let mut report = VerificationReport::new("mixture");
    let opts = MixtureOptions::default();
    let value = |u: f64| {
        mixture_value(dist, u, opts)
            .map(|r| r.value.to_f64())
            .unwrap_or(f64::NEG_INFINITY)
    };
    let vals: Vec<f64> = grid.iter().map(|&u| value(u)).collect();

    // (i) midpoint concavity
    let mut worst = 0.0f64;
    let mut at = String::new();
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            if !(vals[i].is_finite() && vals[j].is_finite()) {
                continue;
            }
            let mid = value(0.5 * (grid[i] + grid[j]));
            let short = 0.5 * (vals[i] + vals[j]) - mid;
            if short > worst {
                worst = short;
                at = format!("u={}, v={}", grid[i], grid[j]);
            }
        }
    }
    let c = Check::new("concavity", worst <= 1e-9, worst);
    report.push(if at.is_empty() { c } else { c.at(at) });

    // (ii) unique peak
    let peak = mixture_peak(dist);
    let peak_val = value(peak);
    let expected: f64 = dist.members.iter().map(|(f, p)| p * f.eval(f.peak())).sum();
    let ident = (peak_val - expected).abs();
    report.push(
        Check::new("peak_value", ident < 1e-9, ident)
            .note(format!("u1 = {peak}, F1(u1) = {peak_val}")),
    );
    let mut worst_peak = f64::NEG_INFINITY;
    let mut worst_at = None;
    for (&u, &v) in grid.iter().zip(&vals) {
        if (u - peak).abs() < 1e-9 {
            continue;
        }
        let excess = v - peak_val;
        if excess > worst_peak {
            worst_peak = excess;
            worst_at = Some(u);
        }
    }
    report.push(match worst_at {
        None => Check::new("unique_peak", true, 0.0).note("no grid point away from the peak"),
        Some(u) => Check::new("unique_peak", worst_peak < 0.0, worst_peak.max(0.0)).at(format!("u={u}")),
    });

    // (iii) upper semi-continuity at domain boundaries
    let bounds = domain_boundaries(&value, grid);
    let mut worst_usc = 0.0f64;
    let mut usc_note = format!("{} boundary point(s)", bounds.len());
    for &(b, finite_left) in &bounds {
        let vb = value(b);
        let dir = if finite_left { -1.0 } else { 1.0 };
        // Values along b + dir * h_k, h_k = 1e-2 * 2^-k; the limit is
        // estimated by linear extrapolation of the last two terms.
        let seq: Vec<f64> = (1..=14).map(|k| value(b + dir * 1e-2 * 2f64.powi(-k))).collect();
        let n = seq.len();
        let limsup = (2.0 * seq[n - 1] - seq[n - 2]).max(seq[n - 1]);
        let excess = limsup - vb;
        if excess > worst_usc {
            worst_usc = excess;
            usc_note = format!("boundary {b}: limsup {limsup} vs value {vb}");
        }
    }
    report.push(Check::new("usc", worst_usc <= 1e-6, worst_usc).note(usc_note));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontier::Quadratic;

    fn quad(c: f64) -> SharedFrontier {
        Arc::new(Quadratic::new(c, 1.0, 0.0, 0.0, f64::INFINITY).unwrap())
    }

    fn pair() -> FrontierDistribution {
        FrontierDistribution::new(vec![(quad(1.0), 0.5), (quad(3.0), 0.5)]).unwrap()
    }

    #[test]
    fn interior_equalisation() {
        let r = mixture_value(&pair(), 2.0, MixtureOptions::default()).unwrap();
        assert!(r.value.to_f64().abs() < 1e-12);
        assert!((r.alloc.values[0] - 1.0).abs() < 1e-9);
        assert!((r.alloc.values[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn nonnegativity_clamp() {
        let r = mixture_value(&pair(), 1.0, MixtureOptions::default()).unwrap();
        assert!((r.value.to_f64() + 1.0).abs() < 1e-9, "{:?}", r);
        assert!(r.alloc.values[0].abs() < 1e-9);
        assert!((r.alloc.values[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn singleton_is_the_member() {
        let f = quad(1.5);
        let d = FrontierDistribution::new(vec![(f.clone(), 1.0)]).unwrap();
        for u in [0.0, 0.7, 3.0] {
            let r = mixture_value(&d, u, MixtureOptions::default()).unwrap();
            assert!((r.value.to_f64() - f.eval(u)).abs() < 1e-12);
            assert!((r.alloc.values[0] - u).abs() < 1e-12);
        }
        assert_eq!(mixture_peak(&d), 1.5);
    }

    #[test]
    fn cap_binding_is_reported() {
        let opts = MixtureOptions { alloc_cap: 2.5 };
        let r = mixture_value(&pair(), 2.0, opts).unwrap();
        assert!(r.cap_binds);
        assert!((r.alloc.mean(&[0.5, 0.5]) - 2.0).abs() < 1e-10);
        let r = mixture_value(&pair(), 3.0, opts).unwrap();
        assert_eq!(r.value, ExtReal::NegInf);
    }

    #[test]
    fn empty_support_rejected() {
        assert!(matches!(FrontierDistribution::new(vec![]), Err(Error::EmptySupport)));
        assert!(FrontierDistribution::new(vec![(quad(1.0), 0.6)]).is_err());
    }

    #[test]
    fn mixture_frontier_derivatives() {
        let f = MixtureFrontier::shared(pair());
        // F1(u) = -(u-2)^2 on u >= 1
        assert!((f.right_deriv(2.5).to_f64() + 1.0).abs() < 1e-8);
        assert!((f.left_deriv(1.5).to_f64() - 1.0).abs() < 1e-8);
        assert_eq!(f.peak(), 2.0);
    }
}
