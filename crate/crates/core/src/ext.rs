//! Extended reals: the codomain of concave frontiers and their one-sided derivatives.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

/// A value in `[-inf, +inf]`.
///
/// Frontiers are `-inf` off their effective domain and one-sided derivatives
/// are `+inf`/`-inf` at the domain boundary, so these cases get their own
/// variants instead of riding along as IEEE infinities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Converts from `f64`, mapping IEEE infinities to the infinite variants.
    ///
    /// NaN has no extended-real meaning; it is mapped to `NegInf` (and trips a
    /// debug assertion) so that it can never masquerade as a finite value.
    pub fn from_f64(x: f64) -> Self {
        if x.is_nan() {
            debug_assert!(false, "NaN passed to ExtReal::from_f64");
            ExtReal::NegInf
        } else if x == f64::INFINITY {
            ExtReal::PosInf
        } else if x == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(x)
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        ExtReal::from_f64(x)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => f.write_str("-inf"),
            ExtReal::PosInf => f.write_str("inf"),
            ExtReal::Finite(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for ExtReal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "+inf" | "Infinity" => Ok(ExtReal::PosInf),
            "-inf" | "-Infinity" => Ok(ExtReal::NegInf),
            other => {
                let x: f64 = other.parse().map_err(|e| format!("{other:?}: {e}"))?;
                if x.is_nan() {
                    Err("NaN is not an extended real".into())
                } else {
                    Ok(ExtReal::from_f64(x))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_places_infinities_at_the_ends() {
        let xs = [ExtReal::PosInf, ExtReal::Finite(-3.0), ExtReal::NegInf, ExtReal::ZERO];
        let mut sorted = xs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            sorted,
            vec![ExtReal::NegInf, ExtReal::Finite(-3.0), ExtReal::ZERO, ExtReal::PosInf]
        );
        assert_eq!(ExtReal::NegInf.max(ExtReal::Finite(1.0)), ExtReal::Finite(1.0));
        assert_eq!(ExtReal::PosInf.min(ExtReal::Finite(1.0)), ExtReal::Finite(1.0));
    }

    #[test]
    fn display_and_parse_agree() {
        for x in [ExtReal::NegInf, ExtReal::PosInf, ExtReal::Finite(0.125)] {
            assert_eq!(x.to_string().parse::<ExtReal>().unwrap(), x);
        }
        assert!("nan".parse::<ExtReal>().is_err());
    }
}
