//! Limit profiles: non-decreasing envelope pairs with jump discontinuities,
//! the interval families they decorate, stagewise truncation of those
//! families, and the dense abscissa grid used by the staged construction.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One breakpoint of an envelope, carrying one-sided values so that jumps are
/// represented explicitly; the `at` value is the one the envelope takes.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeNode<S: Scalar> {
    pub x: S,
    pub left: S,
    pub at: S,
    pub right: S,
}

impl<S: Scalar> EnvelopeNode<S> {
    pub fn continuous(x: S, v: S) -> Self {
        EnvelopeNode { x, left: v.clone(), at: v.clone(), right: v }
    }

    pub fn is_jump(&self) -> bool {
        self.left.total_cmp(&self.at) != Ordering::Equal
            || self.at.total_cmp(&self.right) != Ordering::Equal
    }
}

/// A non-decreasing map of `[-1, 1]` onto itself, piecewise linear between
/// breakpoints, with explicit one-sided values at each breakpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope<S: Scalar> {
    nodes: Vec<EnvelopeNode<S>>,
}

impl<S: Scalar> Envelope<S> {
    pub fn new(nodes: Vec<EnvelopeNode<S>>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Validation("an envelope needs at least its two endpoints".into()));
        }
        let one = S::one();
        let first = &nodes[0];
        let last = &nodes[nodes.len() - 1];
        let fixed = |n: &EnvelopeNode<S>, v: &S| {
            n.x.total_cmp(v) == Ordering::Equal
                && n.left.total_cmp(v) == Ordering::Equal
                && n.at.total_cmp(v) == Ordering::Equal
                && n.right.total_cmp(v) == Ordering::Equal
        };
        if !fixed(first, &-one.clone()) || !fixed(last, &one) {
            return Err(Error::Endpoints);
        }
        for n in &nodes {
            if n.left.total_cmp(&n.at) == Ordering::Greater
                || n.at.total_cmp(&n.right) == Ordering::Greater
            {
                return Err(Error::NotIncreasing(format!("one-sided values at {}", n.x)));
            }
        }
        for w in nodes.windows(2) {
            if w[0].x.total_cmp(&w[1].x) != Ordering::Less {
                return Err(Error::NotIncreasing(format!("breakpoint {} then {}", w[0].x, w[1].x)));
            }
            if w[0].right.total_cmp(&w[1].left) == Ordering::Greater {
                return Err(Error::NotIncreasing(format!(
                    "envelope decreases between {} and {}",
                    w[0].x, w[1].x
                )));
            }
        }
        Ok(Envelope { nodes })
    }

    /// Continuous piecewise-linear envelope through the given points.
    pub fn piecewise_linear(pts: Vec<(S, S)>) -> Result<Self> {
        Envelope::new(pts.into_iter().map(|(x, v)| EnvelopeNode::continuous(x, v)).collect())
    }

    pub fn identity() -> Self {
        Envelope::piecewise_linear(vec![(-S::one(), -S::one()), (S::one(), S::one())]).unwrap()
    }

    pub fn nodes(&self) -> &[EnvelopeNode<S>] {
        &self.nodes
    }

    pub fn eval(&self, r: &S) -> Result<S> {
        let n = self.nodes.len();
        if r.total_cmp(&self.nodes[0].x) == Ordering::Less
            || r.total_cmp(&self.nodes[n - 1].x) == Ordering::Greater
        {
            return Err(Error::Domain(format!("{r} outside [-1, 1]")));
        }
        let i = self.nodes.partition_point(|p| p.x.total_cmp(r) == Ordering::Less);
        let ni = &self.nodes[i];
        if ni.x.total_cmp(r) == Ordering::Equal {
            return Ok(ni.at.clone());
        }
        let na = &self.nodes[i - 1];
        let t = (r.clone() - na.x.clone()) / (ni.x.clone() - na.x.clone());
        Ok(na.right.clone() + t * (ni.left.clone() - na.right.clone()))
    }

    /// Interior abscissae of all breakpoints (used to seed the dense grid).
    pub fn interior_breakpoints(&self) -> Vec<S> {
        self.nodes[1..self.nodes.len() - 1].iter().map(|n| n.x.clone()).collect()
    }
}

/// Which of the two envelopes a stage pulls toward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Lower,
    Upper,
}

/// A prescribed limit set: for each abscissa `r` the vertical segment between
/// the two envelope values (a single point wherever they agree).
#[derive(Clone, Debug, PartialEq)]
pub struct LimitProfile<S: Scalar> {
    pub lower: Envelope<S>,
    pub upper: Envelope<S>,
}

impl<S: Scalar> LimitProfile<S> {
    pub fn new(lower: Envelope<S>, upper: Envelope<S>) -> Result<Self> {
        // Both envelopes are PL between the union of their breakpoints, so
        // comparing all one-sided values there decides pointwise order.
        let mut xs: Vec<S> = lower.interior_breakpoints();
        xs.extend(upper.interior_breakpoints());
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
        for x in &xs {
            let side = |e: &Envelope<S>, x: &S| -> (S, S, S) {
                let i = e.nodes.partition_point(|p| p.x.total_cmp(x) == Ordering::Less);
                if e.nodes[i].x.total_cmp(x) == Ordering::Equal {
                    (e.nodes[i].left.clone(), e.nodes[i].at.clone(), e.nodes[i].right.clone())
                } else {
                    let v = e.eval(x).unwrap();
                    (v.clone(), v.clone(), v)
                }
            };
            let (ll, la, lr) = side(&lower, x);
            let (ul, ua, ur) = side(&upper, x);
            if ll.total_cmp(&ul) == Ordering::Greater
                || la.total_cmp(&ua) == Ordering::Greater
                || lr.total_cmp(&ur) == Ordering::Greater
            {
                return Err(Error::EnvelopeOrder(format!("abscissa {x}")));
            }
        }
        Ok(LimitProfile { lower, upper })
    }

    pub fn identity() -> Self {
        LimitProfile { lower: Envelope::identity(), upper: Envelope::identity() }
    }

    pub fn target(&self, r: &S, branch: Branch) -> Result<S> {
        match branch {
            Branch::Lower => self.lower.eval(r),
            Branch::Upper => self.upper.eval(r),
        }
    }

    pub fn interior_breakpoints(&self) -> Vec<S> {
        let mut xs = self.lower.interior_breakpoints();
        xs.extend(self.upper.interior_breakpoints());
        xs
    }
}

/// One member of an interval family: a subinterval of `(0, 1/2]` with its
/// end-closure flags and the profile prescribed on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Member<S: Scalar> {
    pub lo: S,
    pub hi: S,
    pub closed_lo: bool,
    pub closed_hi: bool,
    pub profile: LimitProfile<S>,
}

impl<S: Scalar> Member<S> {
    pub fn singleton(v: S, profile: LimitProfile<S>) -> Self {
        Member { lo: v.clone(), hi: v, closed_lo: true, closed_hi: true, profile }
    }

    pub fn is_singleton(&self) -> bool {
        self.lo.total_cmp(&self.hi) == Ordering::Equal
    }

    fn describe(&self) -> String {
        format!(
            "{}{}, {}{}",
            if self.closed_lo { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.closed_hi { ']' } else { ')' }
        )
    }

    /// Stage-`k` truncation: a compact subinterval exhausting the member as
    /// `k` grows. Open ends move inward by a `1/(k+1)` fraction.
    pub fn truncate(&self, k: u32) -> (S, S) {
        if self.is_singleton() {
            return (self.lo.clone(), self.hi.clone());
        }
        let kk = S::from_int(k as i64);
        let kp1 = S::from_int(k as i64 + 1);
        let a = if self.closed_lo {
            self.lo.clone()
        } else {
            (kk.clone() * self.lo.clone() + self.hi.clone()) / kp1.clone()
        };
        let b = if self.closed_hi {
            self.hi.clone()
        } else {
            (self.lo.clone() + kk * self.hi.clone()) / kp1
        };
        (a, b)
    }
}

/// An ordered family of pairwise-disjoint members of `(0, 1/2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Family<S: Scalar> {
    pub members: Vec<Member<S>>,
}

impl<S: Scalar> Family<S> {
    pub fn validate(&self) -> Result<()> {
        let zero = S::zero();
        let half = S::half();
        for m in &self.members {
            match m.lo.total_cmp(&m.hi) {
                Ordering::Greater => {
                    return Err(Error::Validation(format!("empty member {}", m.describe())))
                }
                Ordering::Equal => {
                    if !m.closed_lo || !m.closed_hi {
                        return Err(Error::Validation(format!(
                            "degenerate open member {}",
                            m.describe()
                        )));
                    }
                }
                Ordering::Less => {}
            }
            if m.lo.total_cmp(&zero) == Ordering::Less
                || (m.lo.total_cmp(&zero) == Ordering::Equal && m.closed_lo)
                || m.hi.total_cmp(&half) == Ordering::Greater
            {
                return Err(Error::OutOfRange(m.describe()));
            }
        }
        let mut idx: Vec<usize> = (0..self.members.len()).collect();
        idx.sort_by(|&a, &b| self.members[a].lo.total_cmp(&self.members[b].lo));
        for w in idx.windows(2) {
            let a = &self.members[w[0]];
            let b = &self.members[w[1]];
            let sep = match a.hi.total_cmp(&b.lo) {
                Ordering::Less => true,
                Ordering::Equal => !(a.closed_hi && b.closed_lo),
                Ordering::Greater => false,
            };
            if !sep {
                return Err(Error::Overlap(format!("{} and {}", a.describe(), b.describe())));
            }
        }
        Ok(())
    }

    /// Normal form used by the builder: the singleton `{1/2}` is always
    /// present and listed first (splitting a member that reaches `1/2`, or
    /// adding an identity-profile singleton if no member does).
    pub fn normalize(&self) -> Result<Family<S>> {
        self.validate()?;
        let half = S::half();
        let mut top: Option<Member<S>> = None;
        let mut rest: Vec<Member<S>> = Vec::new();
        for m in &self.members {
            if m.closed_hi && m.hi.total_cmp(&half) == Ordering::Equal {
                if m.is_singleton() {
                    top = Some(m.clone());
                } else {
                    top = Some(Member::singleton(half.clone(), m.profile.clone()));
                    let mut open = m.clone();
                    open.closed_hi = false;
                    rest.push(open);
                }
            } else {
                rest.push(m.clone());
            }
        }
        let top = top.unwrap_or_else(|| Member::singleton(half, LimitProfile::identity()));
        let mut members = vec![top];
        members.extend(rest);
        let fam = Family { members };
        fam.validate()?;
        Ok(fam)
    }

    pub fn interior_breakpoints(&self) -> Vec<S> {
        let mut xs = Vec::new();
        for m in &self.members {
            xs.extend(m.profile.interior_breakpoints());
        }
        xs
    }
}

/// Alternating dense abscissa sequence: `-1`, `1`, all interior profile
/// breakpoints (in family order), then the dyadic rationals of `(-1, 1)`
/// breadth-first (`0; -1/2, 1/2; -3/4, -1/4, 1/4, 3/4; ...`), skipping
/// duplicates.
#[derive(Clone, Debug)]
pub struct DenseGrid<S: Scalar> {
    entries: Vec<S>,
    level: u32,
    pos: u64,
}

impl<S: Scalar> DenseGrid<S> {
    pub fn new(seeds: Vec<S>) -> Self {
        let mut entries = vec![-S::one(), S::one()];
        for s in seeds {
            if !entries.iter().any(|e| e.total_cmp(&s) == Ordering::Equal) {
                let interior = s.total_cmp(&-S::one()) == Ordering::Greater
                    && s.total_cmp(&S::one()) == Ordering::Less;
                if interior {
                    entries.push(s);
                }
            }
        }
        DenseGrid { entries, level: 0, pos: 0 }
    }

    fn push_next_dyadic(&mut self) {
        loop {
            let cand = if self.level == 0 {
                self.level = 1;
                self.pos = 0;
                S::zero()
            } else {
                let denom = 1i64 << self.level;
                // Odd numerators ascending: -(denom-1), -(denom-3), ..., denom-1.
                let num = -(denom - 1) + 2 * self.pos as i64;
                self.pos += 1;
                if self.pos as i64 >= denom {
                    self.level += 1;
                    self.pos = 0;
                }
                S::ratio(num, denom)
            };
            if !self.entries.iter().any(|e| e.total_cmp(&cand) == Ordering::Equal) {
                self.entries.push(cand);
                return;
            }
        }
    }

    /// First `k + 2` grid abscissae (the two endpoints plus `r_1 ... r_k`),
    /// in generation order.
    pub fn prefix(&mut self, k: u32) -> &[S] {
        while self.entries.len() < k as usize + 2 {
            self.push_next_dyadic();
        }
        &self.entries[..k as usize + 2]
    }
}
