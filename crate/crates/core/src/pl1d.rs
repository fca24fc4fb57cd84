//! Monotone piecewise-linear maps of the interval `J = [-1, 1]`, the base
//! boundary map, and the strip decomposition it generates.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::height::Height;
use crate::scalar::Scalar;

/// A monotone piecewise-linear map stored as its breakpoint list.
/// Abscissae are strictly increasing; ordinates are non-decreasing (strictly,
/// for homeomorphism restrictions built in exact mode; floating builds may
/// collapse adjacent values at extreme depths).
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonePL1D<S: Scalar> {
    pts: Vec<(S, S)>,
}

impl<S: Scalar> MonotonePL1D<S> {
    pub fn new(pts: Vec<(S, S)>) -> Result<Self> {
        if pts.len() < 2 {
            return Err(Error::Validation("a PL map needs at least two breakpoints".into()));
        }
        for w in pts.windows(2) {
            if w[0].0.total_cmp(&w[1].0) != Ordering::Less {
                return Err(Error::NotIncreasing(format!("abscissa {} then {}", w[0].0, w[1].0)));
            }
            if w[0].1.total_cmp(&w[1].1) == Ordering::Greater {
                return Err(Error::NotIncreasing(format!("ordinate {} then {}", w[0].1, w[1].1)));
            }
        }
        Ok(MonotonePL1D { pts })
    }

    pub fn identity() -> Self {
        MonotonePL1D { pts: vec![(-S::one(), -S::one()), (S::one(), S::one())] }
    }

    /// The base boundary map: breakpoints (-1,-1), (-1/2,0), (0,1/2), (1,1).
    pub fn base_map() -> Self {
        MonotonePL1D {
            pts: vec![
                (-S::one(), -S::one()),
                (S::ratio(-1, 2), S::zero()),
                (S::zero(), S::half()),
                (S::one(), S::one()),
            ],
        }
    }

    pub fn breakpoints(&self) -> &[(S, S)] {
        &self.pts
    }

    pub fn domain(&self) -> (&S, &S) {
        (&self.pts[0].0, &self.pts[self.pts.len() - 1].0)
    }

    pub fn eval(&self, x: &S) -> Result<S> {
        let (lo, hi) = self.domain();
        if x.total_cmp(lo) == Ordering::Less || x.total_cmp(hi) == Ordering::Greater {
            return Err(Error::Domain(format!("{x} outside PL domain [{lo}, {hi}]")));
        }
        // partition_point: first index whose abscissa is >= x.
        let i = self.pts.partition_point(|p| p.0.total_cmp(x) == Ordering::Less);
        let (xi, yi) = &self.pts[i];
        if xi.total_cmp(x) == Ordering::Equal {
            return Ok(yi.clone());
        }
        let (xa, ya) = &self.pts[i - 1];
        let t = (x.clone() - xa.clone()) / (xi.clone() - xa.clone());
        Ok(ya.clone() + t * (yi.clone() - ya.clone()))
    }

    /// Strict inversion: errors with `NotInvertible` if `y` lies inside a flat
    /// segment, and `Range` if `y` is outside the image.
    pub fn invert(&self, y: &S) -> Result<S> {
        self.invert_impl(y, false)
    }

    /// Inversion that resolves flat segments to their left endpoint; used
    /// internally where floating collapse at extreme depths is expected.
    pub fn invert_lenient(&self, y: &S) -> Result<S> {
        self.invert_impl(y, true)
    }

    fn invert_impl(&self, y: &S, lenient: bool) -> Result<S> {
        let lo = &self.pts[0].1;
        let hi = &self.pts[self.pts.len() - 1].1;
        if y.total_cmp(lo) == Ordering::Less || y.total_cmp(hi) == Ordering::Greater {
            return Err(Error::Range(format!("{y} outside PL image [{lo}, {hi}]")));
        }
        let i = self.pts.partition_point(|p| p.1.total_cmp(y) == Ordering::Less);
        let (xi, yi) = &self.pts[i];
        if yi.total_cmp(y) == Ordering::Equal {
            // partition_point already found the left end of any flat run.
            let flat = i + 1 < self.pts.len() && self.pts[i + 1].1.total_cmp(y) == Ordering::Equal;
            if flat && !lenient {
                return Err(Error::NotInvertible(format!("flat segment at ordinate {y}")));
            }
            return Ok(xi.clone());
        }
        let (xa, ya) = &self.pts[i - 1];
        if ya.total_cmp(yi) == Ordering::Equal {
            if lenient {
                return Ok(xa.clone());
            }
            return Err(Error::NotInvertible(format!("flat segment at ordinate {y}")));
        }
        let t = (y.clone() - ya.clone()) / (yi.clone() - ya.clone());
        Ok(xa.clone() + t * (xi.clone() - xa.clone()))
    }
}

/// The level `t_n` as a plain scalar (collapses to +-1.0 in floating mode for
/// |n| past the mantissa width; use `Height::level` where that matters).
pub fn level<S: Scalar>(n: i64) -> S {
    Height::<S>::level(n).to_scalar()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StripIndex<S: Scalar> {
    pub n: i64,
    pub lower: S,
    pub upper: S,
}

/// Strip containing ordinate `s`: strip `n` spans `[t_{n-1}, t_n]`, and the
/// shared level `t_n` is assigned upward (to strip `n + 1`).
pub fn strip_of<S: Scalar>(s: &S) -> Result<StripIndex<S>> {
    let h = Height::from_scalar(s)?;
    let n = h
        .strip()
        .ok_or_else(|| Error::Domain(format!("ordinate {s} lies on a horizontal edge")))?;
    Ok(StripIndex { n, lower: level(n - 1), upper: level(n) })
}

/// The base boundary map on plain scalars.
pub fn base_map_eval<S: Scalar>(s: &S) -> S {
    let half = S::half();
    if s.total_cmp(&S::zero()) != Ordering::Less {
        (s.clone() + S::one()) / S::from_int(2)
    } else if s.total_cmp(&-half.clone()) != Ordering::Less {
        s.clone() + half
    } else {
        s.ldexp(1) + S::one()
    }
}

pub fn base_map_invert<S: Scalar>(s: &S) -> S {
    let half = S::half();
    if s.total_cmp(&half) != Ordering::Less {
        s.ldexp(1) - S::one()
    } else if s.total_cmp(&S::zero()) != Ordering::Less {
        s.clone() - half
    } else {
        (s.clone() - S::one()) / S::from_int(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::rational::BigRational;
    type R = BigRational;

    fn r(n: i64, d: i64) -> R {
        <R as Scalar>::ratio(n, d)
    }

    #[test]
    fn base_map_values() {
        // Frozen expectations: f(0) = 1/2, f(1/2) = 3/4, f(-1/2) = 0,
        // f(-3/4) = -1/2, f(-1) = -1, f(1) = 1.
        let f = MonotonePL1D::<R>::base_map();
        for (x, y) in [
            (r(0, 1), r(1, 2)),
            (r(1, 2), r(3, 4)),
            (r(-1, 2), r(0, 1)),
            (r(-3, 4), r(-1, 2)),
            (r(-1, 1), r(-1, 1)),
            (r(1, 1), r(1, 1)),
        ] {
            assert_eq!(f.eval(&x).unwrap(), y);
            assert_eq!(f.invert(&y).unwrap(), x);
            assert_eq!(base_map_eval(&x), y);
            assert_eq!(base_map_invert(&y), x);
        }
        // Derived: the second preimage step, f^-1(-1/2) = -3/4.
        assert_eq!(base_map_invert(&base_map_invert(&r(0, 1))), r(-3, 4));
    }

    #[test]
    fn base_map_odd_symmetry() {
        // f(-s) = -f^-1(s): the map commutes with the vertical flip this way.
        for (n, d) in [(0i64, 1i64), (1, 5), (2, 5), (1, 2), (4, 5), (1, 1)] {
            let s = r(n, d);
            assert_eq!(base_map_eval(&(-s.clone())), -base_map_invert(&s));
        }
    }

    #[test]
    fn strict_monotonicity_rejected() {
        assert!(MonotonePL1D::new(vec![(r(0, 1), r(0, 1)), (r(0, 1), r(1, 2))]).is_err());
        assert!(MonotonePL1D::new(vec![(r(0, 1), r(1, 2)), (r(1, 2), r(0, 1))]).is_err());
    }

    #[test]
    fn flat_segments_and_inversion() {
        let f = MonotonePL1D::new(vec![
            (r(-1, 1), r(-1, 1)),
            (r(0, 1), r(0, 1)),
            (r(1, 2), r(0, 1)),
            (r(1, 1), r(1, 1)),
        ])
        .unwrap();
        assert!(matches!(f.invert(&r(0, 1)), Err(Error::NotInvertible(_))));
        assert_eq!(f.invert_lenient(&r(0, 1)).unwrap(), r(0, 1));
        assert!(matches!(f.invert(&r(2, 1)), Err(Error::Range(_))));
        assert_eq!(f.invert(&r(1, 2)).unwrap(), r(3, 4));
    }

    #[test]
    fn strip_examples() {
        assert_eq!(strip_of(&r(0, 1)).unwrap().n, 1);
        assert_eq!(strip_of(&r(1, 2)).unwrap().n, 2);
        assert_eq!(strip_of(&r(5, 8)).unwrap().n, 2);
        assert_eq!(strip_of(&r(-1, 2)).unwrap().n, 0);
        assert_eq!(strip_of(&r(-9, 16)).unwrap().n, -1);
        assert!(strip_of(&r(1, 1)).is_err());
        assert_eq!(level::<R>(3), r(7, 8));
        assert_eq!(level::<R>(-2), r(-3, 4));
    }
}
