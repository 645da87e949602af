//! Behaviour of the gap `psi = F1 - F0` at `u*`: local maximum, saddle point
//! or mutual kink.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::technology::Technology;

/// Closed interval of extended reals; empty when `lo > hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    #[serde(serialize_with = "ser_ext")]
    pub lo: ExtReal,
    #[serde(serialize_with = "ser_ext")]
    pub hi: ExtReal,
}

fn ser_ext<S: serde::Serializer>(x: &ExtReal, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        let x = ExtReal::from_f64(x);
        self.lo <= x && x <= self.hi
    }
}

/// `[max_j F^{j+}(u), min_j F^{j-}(u)]`.
pub fn shared_supergradient_interval(tech: &Technology, u: f64) -> Result<Interval> {
    use crate::frontier::Side;
    let r0 = tech.f0.one_sided_deriv(u, Side::Right)?;
    let r1 = tech.f1.one_sided_deriv(u, Side::Right)?;
    let l0 = tech.f0.one_sided_deriv(u, Side::Left)?;
    let l1 = tech.f1.one_sided_deriv(u, Side::Left)?;
    Ok(Interval {
        lo: r0.max(r1),
        hi: l0.min(l1),
    })
}

/// Probe resolutions used by [`is_saddle`] by default.
pub const SADDLE_EPSILONS: [f64; 3] = [1e-1, 1e-2, 1e-3];
/// Probe points per side of the candidate.
pub const PROBES_PER_SIDE: usize = 64;
/// Tolerance for the local max/min comparisons.
pub const EXTREMUM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonProbe {
    pub eps: f64,
    /// A pair `u < u_bar < u'` with difference quotient below `eps`, and the quotient.
    pub flat_pair: Option<(f64, f64, f64)>,
    pub local_max: bool,
    pub local_min: bool,
    /// Some probe tied with the centre value within tolerance.
    pub tie: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddleWitness {
    pub probes: Vec<EpsilonProbe>,
    pub resolution: f64,
    pub note: String,
}

/// Extremum and flatness probes of `psi` around `u_bar` at one resolution.
pub fn probe_at(psi: &dyn Fn(f64) -> f64, u_bar: f64, eps: f64) -> EpsilonProbe {
    let centre = psi(u_bar);
    let left: Vec<(f64, f64)> = (1..=PROBES_PER_SIDE)
        .map(|k| u_bar - eps * k as f64 / PROBES_PER_SIDE as f64)
        .filter(|&u| u >= 0.0)
        .map(|u| (u, psi(u)))
        .collect();
    let right: Vec<(f64, f64)> = (1..=PROBES_PER_SIDE)
        .map(|k| u_bar + eps * k as f64 / PROBES_PER_SIDE as f64)
        .map(|u| (u, psi(u)))
        .collect();
    let all = || left.iter().chain(right.iter()).filter(|(_, v)| v.is_finite());
    let local_max = all().all(|&(_, v)| v <= centre + EXTREMUM_TOL);
    let local_min = all().all(|&(_, v)| v >= centre - EXTREMUM_TOL);
    let tie = all().any(|&(_, v)| (v - centre).abs() <= EXTREMUM_TOL);
    let mut flat_pair: Option<(f64, f64, f64)> = None;
    for &(u, a) in &left {
        for &(v, b) in &right {
            let q = (b - a).abs() / (v - u);
            if q < eps && flat_pair.is_none_or(|(_, _, best)| q < best) {
                flat_pair = Some((u, v, q));
            }
        }
    }
    EpsilonProbe {
        eps,
        flat_pair,
        local_max,
        local_min,
        tie,
    }
}

/// Saddle test: at every resolution some straddling difference quotient is
/// below `eps` and `u_bar` is neither a local maximum nor a local minimum.
///
/// A finite family of resolutions can only support the verdict, so the
/// witness records the finest resolution used.
pub fn is_saddle(psi: &dyn Fn(f64) -> f64, u_bar: f64, epsilons: &[f64]) -> (bool, SaddleWitness) {
    let probes: Vec<EpsilonProbe> = epsilons.iter().map(|&e| probe_at(psi, u_bar, e)).collect();
    let verdict = u_bar > 0.0
        && !probes.is_empty()
        && probes
            .iter()
            .all(|p| p.flat_pair.is_some() && !p.local_max && !p.local_min);
    let resolution = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let note = if verdict {
        format!("supported at resolution {resolution:e}")
    } else {
        format!("refuted at resolution {resolution:e} or coarser")
    };
    (
        verdict,
        SaddleWitness {
            probes,
            resolution,
            note,
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GapKind {
    LocalMax,
    Saddle,
    MutualKink,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapWitness {
    pub u_star: f64,
    /// `(left, right)` derivatives of F0, F1 and psi at `u*`.
    pub f0: (f64, f64),
    pub f1: (f64, f64),
    pub psi: (f64, f64),
    pub shared: Interval,
    /// Local maximum only up to ties with neighbouring probes.
    pub weak: bool,
    pub saddle: Option<SaddleWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapClassification {
    pub kind: GapKind,
    pub witness: GapWitness,
}

/// Places `u*` in exactly one of the three cases.
pub fn classify_u_star(tech: &Technology) -> Result<GapClassification> {
    let u = tech.u_star;
    if u == 0.0 {
        return Err(Error::UStarAtOrigin);
    }
    let shared = shared_supergradient_interval(tech, u)?;
    let f0 = (tech.f0.left_deriv(u).to_f64(), tech.f0.right_deriv(u).to_f64());
    let f1 = (tech.f1.left_deriv(u).to_f64(), tech.f1.right_deriv(u).to_f64());
    let psi_d = (f1.0 - f0.0, f1.1 - f0.1);
    let psi = |x: f64| tech.gap(x);
    let finest = SADDLE_EPSILONS.iter().copied().fold(f64::INFINITY, f64::min);
    let probe = probe_at(&psi, u, finest);
    let mut witness = GapWitness {
        u_star: u,
        f0,
        f1,
        psi: psi_d,
        shared,
        weak: false,
        saddle: None,
    };
    if probe.local_max {
        witness.weak = probe.tie;
        return Ok(GapClassification {
            kind: GapKind::LocalMax,
            witness,
        });
    }
    let (saddle, sw) = is_saddle(&psi, u, &SADDLE_EPSILONS);
    witness.saddle = Some(sw);
    if saddle {
        return Ok(GapClassification {
            kind: GapKind::Saddle,
            witness,
        });
    }
    // F1+ < F0+ <= eta <= F1- < F0-
    let chain = f1.1 < f0.1 && f1.0 < f0.0 && !shared.is_empty();
    if chain {
        return Ok(GapClassification {
            kind: GapKind::MutualKink,
            witness,
        });
    }
    Err(Error::ClassificationFailed(format!(
        "u* = {u}: not a local max, not a saddle, and the kink chain fails \
         (F0 = {f0:?}, F1 = {f1:?}, shared = [{}, {}])",
        shared.lo, shared.hi
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_a_saddle() {
        let (s, w) = is_saddle(&|u| -(u - 1.0).powi(3), 1.0, &SADDLE_EPSILONS);
        assert!(s, "{w:?}");
        assert!(w.note.starts_with("supported at resolution"));
    }

    #[test]
    fn parabola_is_not_a_saddle() {
        let (s, w) = is_saddle(&|u| -(u - 1.0).powi(2), 1.0, &SADDLE_EPSILONS);
        assert!(!s);
        assert!(w.probes.iter().all(|p| p.local_max));
    }

    #[test]
    fn absolute_value_is_a_local_min() {
        let (s, w) = is_saddle(&|u| (u - 1.0).abs(), 1.0, &SADDLE_EPSILONS);
        assert!(!s);
        assert!(w.probes.iter().all(|p| p.local_min && p.flat_pair.is_some()));
    }

    #[test]
    fn interval_emptiness() {
        let i = Interval {
            lo: ExtReal::Finite(1.0),
            hi: ExtReal::Finite(0.5),
        };
        assert!(i.is_empty());
        let j = Interval {
            lo: ExtReal::Finite(-1.0),
            hi: ExtReal::PosInf,
        };
        assert!(!j.is_empty() && j.contains(3.0));
    }
}
