//! Right-continuous step paths on `[0, inf)` and their discounted promises.

use crate::error::{Error, Result};

/// Piecewise-constant path: `values[i]` on `[breaks[i], breaks[i+1])`, the
/// last value continuing forever. `breaks[0]` is always 0.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPath {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepPath {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() {
            return Err(Error::InvalidPath(format!(
                "need equally many breaks and values (got {} and {})",
                breaks.len(),
                values.len()
            )));
        }
        if breaks[0] != 0.0 {
            return Err(Error::InvalidPath("first break must be 0".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidPath("breaks must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("path values must be finite".into()));
        }
        Ok(StepPath { breaks, values })
    }

    pub fn constant(v: f64) -> Self {
        StepPath {
            breaks: vec![0.0],
            values: vec![v],
        }
    }

    /// One value per grid cell `[k h, (k+1) h)`, the last continuing forever.
    pub fn from_cells(step: f64, values: Vec<f64>) -> Result<Self> {
        let breaks = (0..values.len()).map(|k| k as f64 * step).collect();
        Self::new(breaks, values)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn piece(&self, t: f64) -> usize {
        self.breaks.partition_point(|&b| b <= t).saturating_sub(1)
    }

    pub fn at(&self, t: f64) -> f64 {
        self.values[self.piece(t)]
    }

    /// Pieces as `(start, end, value)`; the last end is infinite.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.values.len()).map(move |i| {
            let end = self.breaks.get(i + 1).copied().unwrap_or(f64::INFINITY);
            (self.breaks[i], end, self.values[i])
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StepPath {
        StepPath {
            breaks: self.breaks.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise `f(self, other)` on the merged breaks.
    pub fn zip_with(&self, other: &StepPath, f: impl Fn(f64, f64) -> f64) -> StepPath {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let values = breaks.iter().map(|&t| f(self.at(t), other.at(t))).collect();
        StepPath { breaks, values }.simplified()
    }

    /// Drops breaks that do not change the value.
    pub fn simplified(mut self) -> StepPath {
        let mut b = vec![self.breaks[0]];
        let mut v = vec![self.values[0]];
        for i in 1..self.values.len() {
            if self.values[i] != *v.last().unwrap() {
                b.push(self.breaks[i]);
                v.push(self.values[i]);
            }
        }
        self.breaks = b;
        self.values = v;
        self
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `X_t = r * int_t^inf e^{-r(s-t)} x_s ds` for a step path `x`, computed by
/// backward recursion over the pieces. Between breaks
/// `X_t = v_i + (X(b_{i+1}) - v_i) e^{-r(b_{i+1} - t)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PromisePath {
    flow: StepPath,
    r: f64,
    /// Promise at each break.
    at_breaks: Vec<f64>,
}

impl PromisePath {
    pub fn new(flow: &StepPath, r: f64) -> Self {
        let n = flow.values.len();
        let mut at_breaks = vec![0.0; n];
        at_breaks[n - 1] = flow.values[n - 1];
        for i in (0..n - 1).rev() {
            let d = flow.breaks[i + 1] - flow.breaks[i];
            let decay = (-r * d).exp();
            // v (1 - e^{-rd}) + e^{-rd} X_next, written to keep X in [min, max]
            at_breaks[i] = flow.values[i] + (at_breaks[i + 1] - flow.values[i]) * decay;
        }
        PromisePath {
            flow: flow.clone(),
            r,
            at_breaks,
        }
    }

    pub fn flow(&self) -> &StepPath {
        &self.flow
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn at_breaks(&self) -> &[f64] {
        &self.at_breaks
    }

    pub fn at(&self, t: f64) -> f64 {
        let i = self.flow.piece(t);
        let v = self.flow.values[i];
        match self.flow.breaks.get(i + 1) {
            None => v,
            Some(&next) => v + (self.at_breaks[i + 1] - v) * (-self.r * (next - t)).exp(),
        }
    }

    /// Within piece `i`, `X_t = v + c e^{r t}`; returns `(v, c)` with `c`
    /// scaled as `c * e^{r t}` evaluated stably through `at`.
    pub fn piece_form(&self, i: usize) -> (f64, f64, f64) {
        let v = self.flow.values[i];
        match self.flow.breaks.get(i + 1) {
            None => (v, 0.0, 0.0),
            Some(&next) => (v, self.at_breaks[i + 1] - v, next),
        }
    }

    /// Times in `(a, b)` at which the promise crosses `level`.
    pub fn crossings(&self, level: f64, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, (s, e, _)) in self.flow.pieces().enumerate() {
            let lo = s.max(a);
            let hi = e.min(b);
            if !(hi > lo) {
                continue;
            }
            let (v, c, next) = self.piece_form(i);
            if c == 0.0 {
                continue;
            }
            // v + c e^{-r(next - t)} = level
            let ratio = (level - v) / c;
            if ratio > 0.0 && ratio < 1.0 {
                let t = next + ratio.ln() / self.r;
                if t > lo && t < hi {
                    out.push(t);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_flow_is_a_fixed_point() {
        let x = StepPath::constant(0.5);
        let p = PromisePath::new(&x, 1.0);
        assert_eq!(p.at(0.0), 0.5);
        assert_eq!(p.at(7.0), 0.5);
    }

    #[test]
    fn deadline_promise_closed_form() {
        let t = 2f64.ln();
        let x = StepPath::new(vec![0.0, t], vec![0.5, 0.0]).unwrap();
        let p = PromisePath::new(&x, 1.0);
        assert!((p.at(0.0) - 0.25).abs() < 1e-15);
        let s = 0.3;
        assert!((p.at(s) - 0.5 * (1.0 - (-(t - s)).exp())).abs() < 1e-15);
        assert_eq!(p.at(1.0), 0.0);
    }

    #[test]
    fn crossing_of_a_level() {
        let x = StepPath::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        let p = PromisePath::new(&x, 1.0);
        let c = p.crossings(0.5, 0.0, 10.0);
        assert_eq!(c.len(), 1);
        assert!((p.at(c[0]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn invalid_paths_rejected() {
        assert!(StepPath::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(StepPath::new(vec![1.0], vec![1.0]).is_err());
        assert!(StepPath::new(vec![0.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn zip_merges_breaks() {
        let a = StepPath::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let b = StepPath::new(vec![0.0, 0.5], vec![0.0, 3.0]).unwrap();
        let m = a.zip_with(&b, f64::max);
        assert_eq!(m.breaks(), &[0.0, 0.5]);
        assert_eq!(m.values(), &[1.0, 3.0]);
    }
}
