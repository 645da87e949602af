//! Finite measures on `[0, inf)` built from atoms and exponential-density
//! segments, and breakthrough-time distributions on top of them.

use crate::error::{Error, Result};
use crate::numeric::integrate;

/// `int_a^b e^{-k t} dt` for `0 <= a <= b <= inf`.
pub fn exp_int(k: f64, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    if b.is_infinite() {
        debug_assert!(k > 0.0, "divergent exponential integral");
        return (-k * a).exp() / k;
    }
    let len = b - a;
    if k == 0.0 {
        return len;
    }
    (-k * a).exp() * (-(-k * len).exp_m1()) / k
}

/// `int_a^b t e^{-k t} dt` for `0 <= a <= b <= inf`.
pub fn t_exp_int(k: f64, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let base = (-k * a).exp();
    if b.is_infinite() {
        return base * (a / k + 1.0 / (k * k));
    }
    let len = b - a;
    let x = k * len;
    // E1 = int_0^len s e^{-k s} ds
    let e1 = if x.abs() < 1e-2 {
        len * len * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0 + x.powi(4) / 144.0)
    } else {
        (1.0 - (-x).exp() * (1.0 + x)) / (k * k)
    };
    base * (a * exp_int(k, 0.0, len) + e1)
}

/// Density `coef * e^{-decay (t - start)}` on `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub coef: f64,
    pub decay: f64,
}

impl Segment {
    pub fn density(&self, t: f64) -> f64 {
        if t >= self.start && t < self.end {
            self.coef * (-self.decay * (t - self.start)).exp()
        } else {
            0.0
        }
    }

    /// Mass on `[start, t)` (clamped to the segment).
    pub fn mass_to(&self, t: f64) -> f64 {
        let t = t.min(self.end);
        if t <= self.start {
            return 0.0;
        }
        self.coef * exp_int(self.decay, 0.0, t - self.start)
    }

    pub fn mass(&self) -> f64 {
        self.mass_to(self.end)
    }
}

/// A finite nonnegative measure: atoms plus non-overlapping density segments.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Measure {
    atoms: Vec<(f64, f64)>,
    segments: Vec<Segment>,
}

impl Measure {
    pub fn new(mut atoms: Vec<(f64, f64)>, mut segments: Vec<Segment>) -> Result<Self> {
        for &(t, m) in &atoms {
            if !(t >= 0.0 && t.is_finite() && m >= 0.0 && m.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "atom ({t}, {m}) needs a finite time >= 0 and finite mass >= 0"
                )));
            }
        }
        for s in &segments {
            if !(s.start >= 0.0 && s.start.is_finite() && s.end > s.start) {
                return Err(Error::InvalidMeasure(format!(
                    "segment [{}, {}) is not a nonempty interval in [0, inf)",
                    s.start, s.end
                )));
            }
            if !(s.coef >= 0.0 && s.coef.is_finite() && s.decay >= 0.0 && s.decay.is_finite()) {
                return Err(Error::InvalidMeasure(
                    "segment density needs finite coef >= 0 and decay >= 0".into(),
                ));
            }
            if s.end.is_infinite() && s.decay <= 0.0 && s.coef > 0.0 {
                return Err(Error::InvalidMeasure("unbounded segment must decay".into()));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        if segments.windows(2).any(|w| w[1].start < w[0].end) {
            return Err(Error::InvalidMeasure("density segments overlap".into()));
        }
        Ok(Measure { atoms, segments })
    }

    pub fn zero() -> Self {
        Measure::default()
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.segments.iter().map(Segment::mass).sum::<f64>()
    }

    /// `nu([0, t])`.
    pub fn mass_upto(&self, t: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 <= t).map(|a| a.1).sum();
        let dens: f64 = self.segments.iter().map(|s| s.mass_to(t)).sum();
        atoms + dens
    }

    /// `nu((t, inf))`, summed directly from the pieces beyond `t`.
    pub fn mass_beyond(&self, t: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 > t).map(|a| a.1).sum();
        let dens: f64 = self
            .segments
            .iter()
            .map(|s| {
                if t <= s.start {
                    s.mass()
                } else if t >= s.end {
                    0.0
                } else {
                    let tail = s.end - t;
                    s.coef * (-s.decay * (t - s.start)).exp() * exp_int(s.decay, 0.0, tail)
                }
            })
            .sum();
        atoms + dens
    }

    pub fn density(&self, t: f64) -> f64 {
        self.segments.iter().map(|s| s.density(t)).sum()
    }

    /// Finite atom times and segment ends, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| a.0)
            .chain(self.segments.iter().flat_map(|s| [s.start, s.end]))
            .filter(|t| t.is_finite())
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// `int h dnu`: atoms exactly, density parts by adaptive quadrature split
    /// at `extra` breakpoints. Unbounded segments are truncated where the
    /// density has decayed by `e^{-60}`.
    pub fn integrate(&self, h: &dyn Fn(f64) -> f64, extra: &[f64]) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.1 > 0.0)
            .map(|&(t, m)| m * h(t))
            .sum();
        atoms + self.integrate_density(h, extra, f64::INFINITY)
    }

    /// Density part of `int_{[0, upto]} h dnu`.
    pub fn integrate_density(&self, h: &dyn Fn(f64) -> f64, extra: &[f64], upto: f64) -> f64 {
        self.integrate_density_on(h, extra, 0.0, upto)
    }

    /// Density part of `int_{[from, upto]} h dnu`. Unbounded segments are
    /// truncated where the density has decayed by `e^{-60}`; long pieces are
    /// split into chunks of at most ten decay lengths.
    pub fn integrate_density_on(&self, h: &dyn Fn(f64) -> f64, extra: &[f64], from: f64, upto: f64) -> f64 {
        let mut total = 0.0;
        for s in &self.segments {
            if s.coef == 0.0 {
                continue;
            }
            let start = s.start.max(from);
            let mut end = s.end.min(upto);
            if end.is_infinite() {
                end = start.max(s.start + 60.0 / s.decay);
            }
            if !(end > start) {
                continue;
            }
            let g = |t: f64| s.density(t) * h(t);
            let mut cuts: Vec<f64> = extra.iter().copied().filter(|&t| t > start && t < end).collect();
            if s.decay > 0.0 {
                let chunk = 10.0 / s.decay;
                let mut c = start + chunk;
                while c < end {
                    cuts.push(c);
                    c += chunk;
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut lo = start;
            for c in cuts.into_iter().chain(std::iter::once(end)) {
                total += integrate(&g, lo, c, 1e-15, 1e-13);
                lo = c;
            }
        }
        total
    }

    /// `int_a^b nu([0, t]) dt` in closed form, `b` finite.
    pub fn cumulative_integral(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let mut cuts: Vec<f64> = self.breakpoints().into_iter().filter(|&t| t > a && t < b).collect();
        cuts.push(b);
        let mut lo = a;
        let mut total = 0.0;
        for hi in cuts {
            let len = hi - lo;
            total += self.mass_upto(lo) * len;
            for seg in &self.segments {
                if !(seg.start <= lo && lo < seg.end) || seg.coef == 0.0 {
                    continue;
                }
                let c = seg.coef * (-seg.decay * (lo - seg.start)).exp();
                let x = seg.decay * len;
                // int_lo^hi int_lo^t c e^{-d(s-lo)} ds dt
                total += if x < 1e-2 {
                    c * len * len * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0 + x.powi(4) / 720.0)
                } else {
                    c / seg.decay * (len + (-x).exp_m1() / seg.decay)
                };
            }
            lo = hi;
        }
        total
    }
}

/// Exponential tail: `mass * rate * e^{-rate (t - start)}` on `[start, inf)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tail {
    pub start: f64,
    pub mass: f64,
    pub rate: f64,
}

/// Distribution of the breakthrough time: atoms, piecewise-constant density
/// cells and an optional exponential tail after every other piece.
#[derive(Clone, Debug, PartialEq)]
pub struct BreakthroughDistribution {
    atoms: Vec<(f64, f64)>,
    cells: Vec<(f64, f64, f64)>,
    tail: Option<Tail>,
    measure: Measure,
}

/// Tolerance on total mass.
pub const MASS_TOL: f64 = 1e-12;

impl BreakthroughDistribution {
    /// `cells` are `(start, end, density)`; atoms and cells must lie at or
    /// before the tail start.
    pub fn new(atoms: Vec<(f64, f64)>, cells: Vec<(f64, f64, f64)>, tail: Option<Tail>) -> Result<Self> {
        let mut segments: Vec<Segment> = cells
            .iter()
            .filter(|c| c.2 != 0.0)
            .map(|&(start, end, d)| Segment {
                start,
                end,
                coef: d,
                decay: 0.0,
            })
            .collect();
        if cells.iter().any(|c| !(c.1 > c.0 && c.1.is_finite() && c.2 >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "cells need finite start < end and nonnegative density".into(),
            ));
        }
        if let Some(t) = tail {
            if !(t.mass >= 0.0 && t.start >= 0.0 && t.start.is_finite()) {
                return Err(Error::InvalidDistribution("tail needs mass >= 0 and a finite start".into()));
            }
            if t.mass > 0.0 && !(t.rate > 0.0 && t.rate.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "tail rate must be positive, got {}",
                    t.rate
                )));
            }
            if atoms.iter().any(|a| a.0 > t.start) || cells.iter().any(|c| c.1 > t.start) {
                return Err(Error::InvalidDistribution(
                    "atoms and cells must end at or before the tail start".into(),
                ));
            }
            if t.mass > 0.0 {
                segments.push(Segment {
                    start: t.start,
                    end: f64::INFINITY,
                    coef: t.mass * t.rate,
                    decay: t.rate,
                });
            }
        }
        let atoms: Vec<(f64, f64)> = atoms.into_iter().filter(|a| a.1 != 0.0).collect();
        let measure = Measure::new(atoms.clone(), segments)
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        let total = measure.total_mass();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("total mass {total} is not 1")));
        }
        let mut cells = cells;
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(BreakthroughDistribution {
            atoms: measure.atoms.clone(),
            cells,
            tail: tail.filter(|t| t.mass > 0.0),
            measure,
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(
            vec![],
            vec![],
            Some(Tail {
                start: 0.0,
                mass: 1.0,
                rate,
            }),
        )
    }

    pub fn atom(t: f64) -> Result<Self> {
        Self::new(vec![(t, 1.0)], vec![], None)
    }

    /// Rows `(t, atom_mass, density)`: density applies on `[t_i, t_{i+1})`;
    /// on the last row it is the initial density of an exponential tail
    /// carrying the remaining mass.
    pub fn from_rows(rows: &[(f64, f64, f64)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidDistribution("no rows".into()));
        }
        if rows.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidDistribution("row times must be strictly increasing".into()));
        }
        let mut atoms = Vec::new();
        let mut cells = Vec::new();
        let mut used = 0.0;
        for (i, &(t, a, d)) in rows.iter().enumerate() {
            if !(a >= 0.0 && d >= 0.0 && t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "row {i}: time, atom mass and density must be finite and nonnegative"
                )));
            }
            if a > 0.0 {
                atoms.push((t, a));
                used += a;
            }
            if let Some(next) = rows.get(i + 1) {
                if d > 0.0 {
                    cells.push((t, next.0, d));
                    used += d * (next.0 - t);
                }
            }
        }
        let (t_last, _, d_last) = *rows.last().unwrap();
        let remaining = 1.0 - used;
        let tail = if remaining.abs() <= MASS_TOL {
            if d_last > 0.0 {
                return Err(Error::InvalidDistribution(
                    "tail density given but no mass remains".into(),
                ));
            }
            None
        } else if remaining < 0.0 {
            return Err(Error::InvalidDistribution(format!("rows carry mass {used} > 1")));
        } else if d_last <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "remaining mass {remaining} needs a positive tail density on the last row"
            )));
        } else {
            Some(Tail {
                start: t_last,
                mass: remaining,
                rate: d_last / remaining,
            })
        };
        Self::new(atoms, cells, tail)
    }

    /// Inverse of [`BreakthroughDistribution::from_rows`].
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        let mut times: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| a.0)
            .chain(self.cells.iter().flat_map(|c| [c.0, c.1]))
            .chain(self.tail.map(|t| t.start))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let n = times.len();
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let atom: f64 = self.atoms.iter().filter(|a| a.0 == t).map(|a| a.1).sum();
                let dens = if i + 1 < n {
                    self.cells
                        .iter()
                        .filter(|c| c.0 <= t && t < c.1)
                        .map(|c| c.2)
                        .sum()
                } else {
                    self.tail.map_or(0.0, |tl| tl.mass * tl.rate)
                };
                (t, atom, dens)
            })
            .collect()
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn tail(&self) -> Option<Tail> {
        self.tail
    }

    /// Mass of the unbounded exponential tail.
    pub fn tail_mass(&self) -> f64 {
        self.tail.map_or(0.0, |t| t.mass)
    }

    /// `G(t) = P(tau <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.measure.mass_upto(t)
    }

    /// `1 - G(t)`, summed directly from the mass beyond `t`.
    pub fn survival(&self, t: f64) -> f64 {
        self.measure.mass_beyond(t)
    }

    /// Times where `G` has an atom or the density changes.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.measure.breakpoints()
    }

    /// `E[h(tau)]`.
    pub fn expect(&self, h: &dyn Fn(f64) -> f64, extra: &[f64]) -> f64 {
        self.measure.integrate(h, extra)
    }

    /// `E[e^{-r tau}]`, closed form.
    pub fn discount_factor(&self, r: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|&(t, m)| m * (-r * t).exp()).sum();
        let dens: f64 = self
            .measure
            .segments
            .iter()
            .map(|s| s.coef * (s.decay * s.start).exp() * exp_int(r + s.decay, s.start, s.end))
            .sum();
        atoms + dens
    }

    /// `int_a^b e^{-r t} (1 - G(t)) dt`, closed form on each piece.
    pub fn discounted_survival(&self, r: f64, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        // Split at every breakpoint so that on each piece the survival is
        // S(lo) minus the density mass accumulated since lo.
        let mut cuts: Vec<f64> = self.breakpoints().into_iter().filter(|&t| t > a && t < b).collect();
        cuts.push(b);
        let mut lo = a;
        let mut total = 0.0;
        for hi in cuts {
            let s_lo = self.survival(lo);
            total += s_lo * exp_int(r, lo, hi);
            for seg in &self.measure.segments {
                if !(seg.start <= lo && lo < seg.end) || seg.coef == 0.0 {
                    continue;
                }
                let c = seg.coef * (-seg.decay * (lo - seg.start)).exp();
                // subtract int_lo^hi e^{-rt} int_lo^t c e^{-d(s-lo)} ds dt
                if seg.decay == 0.0 {
                    total -= c * (t_exp_int(r, lo, hi) - lo * exp_int(r, lo, hi));
                } else {
                    let d = seg.decay;
                    let first = exp_int(r, lo, hi);
                    let second = (d * lo).exp() * exp_int(r + d, lo, hi);
                    total -= c / d * (first - second);
                }
            }
            lo = hi;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_integrals() {
        assert!((exp_int(1.0, 0.0, f64::INFINITY) - 1.0).abs() < 1e-15);
        assert!((exp_int(0.0, 1.0, 3.0) - 2.0).abs() < 1e-15);
        assert!((t_exp_int(1.0, 0.0, f64::INFINITY) - 1.0).abs() < 1e-15);
        let k = 1e-5;
        let direct = integrate(&|t| t * (-k * t).exp(), 0.0, 2.0, 1e-15, 1e-15);
        assert!((t_exp_int(k, 0.0, 2.0) - direct).abs() < 1e-13);
        let direct = integrate(&|t| t * (-3.0 * t).exp(), 0.5, 2.0, 1e-15, 1e-15);
        assert!((t_exp_int(3.0, 0.5, 2.0) - direct).abs() < 1e-14);
    }

    #[test]
    fn exponential_distribution_basics() {
        let g = BreakthroughDistribution::exponential(1.0).unwrap();
        assert!((g.cdf(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((g.survival(2.0) - (-2.0f64).exp()).abs() < 1e-16);
        assert!((g.discount_factor(1.0) - 0.5).abs() < 1e-15);
        // int_0^inf e^{-t} e^{-t} dt = 1/2
        assert!((g.discounted_survival(1.0, 0.0, f64::INFINITY) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rows_round_trip() {
        let rows = vec![(0.0, 0.1, 0.2), (1.0, 0.2, 0.0), (2.0, 0.0, 0.5)];
        let g = BreakthroughDistribution::from_rows(&rows).unwrap();
        assert!((g.tail_mass() - 0.5).abs() < 1e-15);
        assert_eq!(g.rows(), rows);
        assert!((g.cdf(1.0) - 0.5).abs() < 1e-15);
        assert!((g.survival(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mass_must_be_one() {
        assert!(BreakthroughDistribution::new(vec![(0.0, 0.5)], vec![], None).is_err());
        assert!(BreakthroughDistribution::from_rows(&[(0.0, 0.5, 0.0)]).is_err());
    }

    #[test]
    fn cumulative_integral_matches_quadrature() {
        let m = Measure::new(
            vec![(0.3, 0.5), (1.2, 0.25)],
            vec![
                Segment { start: 0.0, end: 1.0, coef: 0.4, decay: 0.0 },
                Segment { start: 1.0, end: f64::INFINITY, coef: 0.7, decay: 1.3 },
            ],
        )
        .unwrap();
        let quad = crate::numeric::integrate_split(&|t| m.mass_upto(t), 0.1, 4.0, &m.breakpoints(), 1e-15, 1e-14);
        assert!((m.cumulative_integral(0.1, 4.0) - quad).abs() < 1e-12);
        let small = Measure::new(vec![], vec![Segment { start: 0.0, end: 1.0, coef: 1.0, decay: 1e-4 }]).unwrap();
        let quad = integrate(&|t| small.mass_upto(t), 0.0, 1.0, 1e-16, 1e-15);
        assert!((small.cumulative_integral(0.0, 1.0) - quad).abs() < 1e-14);
    }

    #[test]
    fn discounted_survival_matches_quadrature() {
        let g = BreakthroughDistribution::new(
            vec![(0.5, 0.2), (1.5, 0.1)],
            vec![(0.0, 1.0, 0.3), (1.0, 2.0, 0.1)],
            Some(Tail {
                start: 2.0,
                mass: 0.3,
                rate: 0.7,
            }),
        )
        .unwrap();
        let r = 0.8;
        let brk = g.breakpoints();
        let mut quad = 0.0;
        let mut lo = 0.0;
        for &b in brk.iter().skip(1).chain(std::iter::once(&80.0)) {
            quad += integrate(&|t| (-r * t).exp() * g.survival(t), lo, b, 1e-15, 1e-14);
            lo = b;
        }
        let closed = g.discounted_survival(r, 0.0, f64::INFINITY);
        assert!((closed - quad).abs() < 1e-12, "{closed} vs {quad}");
        let df = g.expect(&|t| (-r * t).exp(), &[]);
        assert!((df - g.discount_factor(r)).abs() < 1e-12);
    }
}
