//! Ordinate representation that survives arbitrarily deep strips.
//!
//! An interior ordinate is stored as its dyadic distance from the nearest
//! horizontal edge: `Up { m, c }` is `s = 1 - c * 2^-m` and `Down { m, c }` is
//! `s = -1 + c * 2^-m`, with `c` kept in `(1/2, 1]`. The base map acts exactly
//! on this form in both build modes, so levels like `t_n = 1 - 2^-n` stay
//! distinguishable far beyond the resolution of `f64`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Height<S: Scalar> {
    Bottom,
    Down { m: u32, c: S },
    Up { m: u32, c: S },
    Top,
}

impl<S: Scalar> Height<S> {
    /// Normalized `s = 1 - c * 2^-m`; accepts any `c` in `(0, 2^m]`.
    pub fn up(mut m: i64, mut c: S) -> Self {
        let half = S::half();
        let one = S::one();
        if c.total_cmp(&S::zero()) != Ordering::Greater {
            return Height::Top;
        }
        while c.total_cmp(&half) != Ordering::Greater {
            c = c.ldexp(1);
            m += 1;
        }
        while c.total_cmp(&one) == Ordering::Greater {
            c = c.ldexp(-1);
            m -= 1;
        }
        assert!(m >= 0, "ordinate below 0 passed to Height::up");
        Height::Up { m: m as u32, c }
    }

    /// Normalized `s = -1 + c * 2^-m`; accepts any `c` in `(0, 2^m]`.
    pub fn down(mut m: i64, mut c: S) -> Self {
        let half = S::half();
        let one = S::one();
        if c.total_cmp(&S::zero()) != Ordering::Greater {
            return Height::Bottom;
        }
        while c.total_cmp(&half) != Ordering::Greater {
            c = c.ldexp(1);
            m += 1;
        }
        while c.total_cmp(&one) == Ordering::Greater {
            c = c.ldexp(-1);
            m -= 1;
        }
        assert!(m >= 0, "ordinate above 0 passed to Height::down");
        if m == 0 && c.total_cmp(&one) == Ordering::Equal {
            return Height::Up { m: 0, c };
        }
        Height::Down { m: m as u32, c }
    }

    /// The level `t_n` (`t_n = 1 - 2^-n` for `n >= 0`, `t_-n = 2^-n - 1`).
    pub fn level(n: i64) -> Self {
        if n >= 0 {
            if n == 0 {
                Height::Up { m: 0, c: S::one() }
            } else {
                Height::Up { m: n as u32, c: S::one() }
            }
        } else {
            Height::Down { m: (-n) as u32, c: S::one() }
        }
    }

    pub fn zero() -> Self {
        Height::Up { m: 0, c: S::one() }
    }

    pub fn from_scalar(s: &S) -> Result<Self> {
        let one = S::one();
        match s.total_cmp(&one) {
            Ordering::Equal => return Ok(Height::Top),
            Ordering::Greater => return Err(Error::Domain(format!("ordinate {s} above 1"))),
            _ => {}
        }
        match s.total_cmp(&(-one)) {
            Ordering::Equal => return Ok(Height::Bottom),
            Ordering::Less => return Err(Error::Domain(format!("ordinate {s} below -1"))),
            _ => {}
        }
        if s.total_cmp(&S::zero()) != Ordering::Less {
            Ok(Height::up(0, S::one() - s.clone()))
        } else {
            Ok(Height::down(0, S::one() + s.clone()))
        }
    }

    pub fn to_scalar(&self) -> S {
        match self {
            Height::Top => S::one(),
            Height::Bottom => -S::one(),
            Height::Up { m, c } => S::one() - c.ldexp(-(*m as i32)),
            Height::Down { m, c } => c.ldexp(-(*m as i32)) - S::one(),
        }
    }

    /// Distance to the top edge (`1 - s`), or `None` for `Bottom`-side values.
    pub fn gap_to_top(&self) -> Option<S> {
        match self {
            Height::Top => Some(S::zero()),
            Height::Up { m, c } => Some(c.ldexp(-(*m as i32))),
            _ => None,
        }
    }

    /// Image under the base boundary map: the piecewise-linear circle map with
    /// breakpoints (-1,-1), (-1/2,0), (0,1/2), (1,1).
    pub fn succ(&self) -> Self {
        match self {
            Height::Top => Height::Top,
            Height::Bottom => Height::Bottom,
            Height::Up { m, c } => Height::Up { m: m + 1, c: c.clone() },
            Height::Down { m: 0, c } => {
                // s in (-1/2, 0): s + 1/2 = c - 1/2, i.e. 1 - (3/2 - c).
                Height::up(0, S::ratio(3, 2) - c.clone())
            }
            Height::Down { m, c } => Height::down(*m as i64 - 1, c.clone()),
        }
    }

    /// Preimage under the base boundary map.
    pub fn pred(&self) -> Self {
        match self {
            Height::Top => Height::Top,
            Height::Bottom => Height::Bottom,
            Height::Up { m: 0, c } => Height::down(0, S::ratio(3, 2) - c.clone()),
            Height::Up { m, c } => Height::Up { m: m - 1, c: c.clone() },
            Height::Down { m, c } => Height::Down { m: m + 1, c: c.clone() },
        }
    }

    /// Strip index: `n` such that `s` lies in `[t_{n-1}, t_n)` (levels are
    /// assigned upward).
    pub fn strip(&self) -> Option<i64> {
        match self {
            Height::Top | Height::Bottom => None,
            Height::Up { m, .. } => Some(*m as i64 + 1),
            Height::Down { m, c } => {
                if c.total_cmp(&S::one()) == Ordering::Equal {
                    Some(1 - *m as i64)
                } else {
                    Some(-(*m as i64))
                }
            }
        }
    }

    /// Vertical reflection `s -> -s`.
    pub fn mirror(&self) -> Self {
        match self {
            Height::Top => Height::Bottom,
            Height::Bottom => Height::Top,
            Height::Up { m: 0, c } if c.total_cmp(&S::one()) == Ordering::Equal => Height::zero(),
            Height::Up { m, c } => Height::Down { m: *m, c: c.clone() },
            Height::Down { m, c } => Height::Up { m: *m, c: c.clone() },
        }
    }

    pub fn cmp_h(&self, other: &Self) -> Ordering {
        fn rank<S: Scalar>(h: &Height<S>) -> u8 {
            match h {
                Height::Bottom => 0,
                Height::Down { .. } => 1,
                Height::Up { .. } => 2,
                Height::Top => 3,
            }
        }
        match (self, other) {
            (Height::Up { m: ma, c: ca }, Height::Up { m: mb, c: cb }) => {
                if ma == mb {
                    // Larger c means farther from the top: smaller s.
                    cb.total_cmp(ca)
                } else {
                    ma.cmp(mb)
                }
            }
            (Height::Down { m: ma, c: ca }, Height::Down { m: mb, c: cb }) => {
                if ma == mb {
                    ca.total_cmp(cb)
                } else {
                    mb.cmp(ma)
                }
            }
            _ => rank(self).cmp(&rank(other)),
        }
    }

    /// Interpolation weight of `self` between `lo` and `hi` (`lo < hi`).
    /// Computed at a shared dyadic scale in the upper half so that no
    /// precision is lost near the top edge.
    pub fn ratio_in(&self, lo: &Self, hi: &Self) -> S {
        if let (Height::Up { m: ml, c: cl }, Height::Up { m, c }, Height::Up { m: mh, c: ch }) =
            (lo, self, hi)
        {
            let num = cl.clone() - c.ldexp(-((*m - *ml) as i32));
            let den = cl.clone() - ch.ldexp(-((*mh - *ml) as i32));
            return num / den;
        }
        if let (Height::Up { m: ml, c: cl }, Height::Up { m, c }, Height::Top) = (lo, self, hi) {
            return (cl.clone() - c.ldexp(-((*m - *ml) as i32))) / cl.clone();
        }
        let s = self.to_scalar();
        let a = lo.to_scalar();
        let b = hi.to_scalar();
        (s - a.clone()) / (b - a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SquarePoint<S: Scalar> {
    pub x: S,
    pub h: Height<S>,
}

impl<S: Scalar> SquarePoint<S> {
    pub fn new(x: S, h: Height<S>) -> Self {
        SquarePoint { x, h }
    }

    pub fn from_coords(x: S, s: S) -> Result<Self> {
        let one = S::one();
        if x.total_cmp(&one) == Ordering::Greater || x.total_cmp(&(-one)) == Ordering::Less {
            return Err(Error::Domain(format!("abscissa {x} outside [-1, 1]")));
        }
        Ok(SquarePoint { x, h: Height::from_scalar(&s)? })
    }

    pub fn coords(&self) -> (S, S) {
        (self.x.clone(), self.h.to_scalar())
    }

    pub fn coords_f64(&self) -> (f64, f64) {
        (self.x.to_f64(), self.h.to_scalar().to_f64())
    }
}
