//! Scalar numerics: bracketing bisection, golden-section search and adaptive
//! Gauss-Kronrod quadrature.

use crate::error::{Error, Result};

/// Absolute tolerance on roots returned by [`root_decreasing`]. Bisection
/// actually continues to adjacent floats so that quantities derived from the
/// root (envelope derivatives in particular) carry no bracketing noise.
pub const ROOT_TOL: f64 = 1e-12;

/// Finds the root of a strictly decreasing function on `(0, inf)`.
///
/// The bracket starts at `[1e-12, 1]` and is expanded geometrically: the
/// upper end doubles until `f(hi) < 0` and the lower end shrinks by a factor
/// of ten until `f(lo) > 0`. Bisection then runs to float resolution.
pub fn root_decreasing(what: &'static str, f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut lo = 1e-12;
    let mut hi = 1.0;
    let mut f_hi = f(hi);
    let mut expansions = 0;
    while !(f_hi < 0.0) {
        if f_hi == 0.0 {
            return Ok(hi);
        }
        lo = hi;
        hi *= 2.0;
        f_hi = f(hi);
        expansions += 1;
        if expansions > 1100 || !hi.is_finite() {
            return Err(Error::RootBracketFailure { what });
        }
    }
    let mut f_lo = f(lo);
    let mut shrinks = 0;
    while !(f_lo > 0.0) {
        if f_lo == 0.0 {
            return Ok(lo);
        }
        hi = lo;
        lo /= 10.0;
        f_lo = f(lo);
        shrinks += 1;
        if shrinks > 300 || lo == 0.0 {
            return Err(Error::RootBracketFailure { what });
        }
    }
    Ok(bisect(lo, hi, 0.0, |x| f(x) > 0.0))
}

/// Bisection on a monotone predicate: `pred(lo)` is assumed true and
/// `pred(hi)` false. Returns a point within `tol` of the switch.
pub fn bisect(mut lo: f64, mut hi: f64, tol: f64, pred: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximiser of a unimodal function on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    0.5 * (a + b)
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

// Gauss-Kronrod 7/15 abscissae and weights, as tabulated.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

pub(crate) fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Subdivision budget of [`integrate`].
pub const MAX_SPLITS: usize = 2000;

/// Adaptive Gauss-Kronrod quadrature of `f` over a finite `[a, b]`.
///
/// Subintervals are bisected until the Kronrod/Gauss discrepancy is below the
/// local share of `abs_tol + rel_tol * |I|`. Handles interior kinks by
/// refinement; endpoints are never evaluated. Refinement stops after
/// [`MAX_SPLITS`] bisections so that integrands whose evaluation noise
/// exceeds the tolerance still terminate; non-finite estimates are returned
/// as they are.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if !(b > a) {
        return if a == b { 0.0 } else { -integrate(f, b, a, abs_tol, rel_tol) };
    }
    let (whole, err) = gk15(f, a, b);
    let tol = abs_tol.max(rel_tol * whole.abs());
    if err <= tol || !err.is_finite() {
        return whole;
    }
    let mut total = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    let width = b - a;
    let mut splits = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, el) = gk15(f, lo, mid);
        let (right, er) = gk15(f, mid, hi);
        let share = tol * (hi - lo) / width;
        splits += 1;
        let settled = el + er <= share || !(el + er).is_finite();
        if settled || splits >= MAX_SPLITS || depth >= 48 || (hi - lo) < 1e-14 * width.max(1.0) {
            total += left + right;
        } else {
            if el <= 0.5 * share {
                total += left;
            } else {
                stack.push((lo, mid, depth + 1));
            }
            if er <= 0.5 * share {
                total += right;
            } else {
                stack.push((mid, hi, depth + 1));
            }
        }
    }
    total
}

/// Integrates over `[a, b]` after splitting at the interior points of `breaks`.
pub fn integrate_split(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut lo = a;
    let mut sum = 0.0;
    for p in pts.into_iter().chain(std::iter::once(b)) {
        sum += integrate(f, lo, p, abs_tol, rel_tol);
        lo = p;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_of_cubic_foc() {
        // 4L^3 = 1
        let root = root_decreasing("cubic", |l| 1.0 - 4.0 * l * l * l).unwrap();
        assert!((root - 0.25f64.powf(1.0 / 3.0)).abs() < 1e-11);
    }

    #[test]
    fn root_below_initial_bracket() {
        let root = root_decreasing("tiny", |x| 1e-9 - x).unwrap();
        assert!((root - 1e-9).abs() < 1e-12);
    }

    #[test]
    fn root_far_above_initial_bracket() {
        let root = root_decreasing("big", |x| 1e6 - x).unwrap();
        assert!((root - 1e6).abs() < 1e-6);
    }

    #[test]
    fn unbracketable_root_is_an_error() {
        assert!(matches!(
            root_decreasing("never", |_| 1.0),
            Err(Error::RootBracketFailure { .. })
        ));
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn gauss_kronrod_is_exact_on_polynomials() {
        let f = |x: f64| 3.0 * x.powi(6) - x.powi(3) + 2.0;
        let exact = 3.0 / 7.0 * 2f64.powi(7) - 2f64.powi(4) / 4.0 + 4.0;
        let got = integrate(&f, 0.0, 2.0, 1e-14, 1e-14);
        assert!((got - exact).abs() < 1e-12, "{got} vs {exact}");
    }

    #[test]
    fn adaptive_quadrature_handles_kinks() {
        let f = |x: f64| (x - 0.3137).abs();
        let exact = 0.5 * 0.3137f64.powi(2) + 0.5 * (1.0 - 0.3137f64).powi(2);
        let got = integrate(&f, 0.0, 1.0, 1e-13, 0.0);
        assert!((got - exact).abs() < 1e-12, "{got} vs {exact}");
    }

    #[test]
    fn linspace_hits_endpoints() {
        let xs = linspace(0.0, 1.0, 5);
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }
}
