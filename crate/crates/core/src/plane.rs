//! Slit quotient of the square, the induced six-points dynamics, and the
//! conjugacy onto the plane.
//!
//! The quotient map folds the top and bottom edges of the square into four
//! vertical slits with feet at ordinate `+-3/4` over abscissae `+-1/2`. It is
//! piecewise affine on two pentagon fans per quadrant, computed in `(x, gap)`
//! coordinates with `gap = 1 - s` so that points exponentially close to the
//! edge keep full precision; triangles whose vertices keep their gaps pass
//! the symbolic height through exactly. Conjugating the square map by the
//! quotient yields a homeomorphism that is the identity on the slits, and a
//! further tangent chart plus a radial disk exchange carries it onto the
//! plane.

use std::cmp::Ordering;

use crate::builder::BuiltSquareMap;
use crate::error::{Error, Result};
use crate::height::{Height, SquarePoint};
use crate::limits::{classify_orbit, orbit, Direction, OrbitClass, SquareDynamics};
use crate::profiles::{Envelope, EnvelopeNode, Family, LimitProfile, Member};
use crate::scalar::Scalar;

// ---------------------------------------------------------------------------
// Reference profile configuration: three-member family with a flat plateau.

/// The three-member ordinate family used throughout: the singleton `{1/3}`
/// and the singleton `{1/2}` are sent to the plateau profile (constant `1/2`
/// over `[-1/2, 1/2]`), while the open band `(1/3, 1/2)` collapses onto the
/// jump profile through `0`. The backward-side family is the same by
/// symmetry.
pub fn reference_families<S: Scalar>() -> (Family<S>, Family<S>) {
    let half = S::half();
    let one = S::one();
    let plateau = Envelope::piecewise_linear(vec![
        (-one.clone(), -one.clone()),
        (-half.clone(), half.clone()),
        (half.clone(), half.clone()),
        (one.clone(), one.clone()),
    ])
    .unwrap();
    let jump = Envelope::new(vec![
        EnvelopeNode::continuous(-one.clone(), -one.clone()),
        EnvelopeNode { x: -half.clone(), left: -half.clone(), at: -half.clone(), right: S::zero() },
        EnvelopeNode { x: half.clone(), left: S::zero(), at: half.clone(), right: half.clone() },
        EnvelopeNode::continuous(one.clone(), one.clone()),
    ])
    .unwrap();
    let plateau_p = LimitProfile::new(plateau.clone(), plateau).unwrap();
    let jump_p = LimitProfile::new(jump.clone(), jump).unwrap();
    let fam = Family {
        members: vec![
            Member::singleton(S::ratio(1, 3), plateau_p.clone()),
            Member {
                lo: S::ratio(1, 3),
                hi: half,
                closed_lo: false,
                closed_hi: false,
                profile: jump_p,
            },
            Member::singleton(S::half(), plateau_p),
        ],
    };
    (fam.clone(), fam)
}

/// Slit feet in square coordinates: the interior endpoints of the four slits.
pub fn slit_feet() -> [(f64, f64); 4] {
    [(-0.5, 0.75), (0.5, 0.75), (-0.5, -0.75), (0.5, -0.75)]
}

// ---------------------------------------------------------------------------
// The slit quotient.

/// Affine barycentric form `lambda_i(x, gap) = a + b x + c gap` rows for a
/// triangle given by `(x, gap)` vertices.
fn bary_rows<S: Scalar>(v: &[(S, S); 3]) -> [[S; 3]; 3] {
    let (x1, g1) = (&v[0].0, &v[0].1);
    let (x2, g2) = (&v[1].0, &v[1].1);
    let (x3, g3) = (&v[2].0, &v[2].1);
    let det = x2.clone() * g3.clone() - x3.clone() * g2.clone()
        + x3.clone() * g1.clone()
        - x1.clone() * g3.clone()
        + x1.clone() * g2.clone()
        - x2.clone() * g1.clone();
    let row = |xa: &S, ga: &S, xb: &S, gb: &S| {
        [
            (xa.clone() * gb.clone() - xb.clone() * ga.clone()) / det.clone(),
            (ga.clone() - gb.clone()) / det.clone(),
            (xb.clone() - xa.clone()) / det.clone(),
        ]
    };
    [row(x2, g2, x3, g3), row(x3, g3, x1, g1), row(x1, g1, x2, g2)]
}

#[derive(Clone, Debug)]
struct Tri<S: Scalar> {
    dom: [(S, S); 3],
    img: [(S, S); 3],
    dom_rows: [[S; 3]; 3],
    img_rows: [[S; 3]; 3],
    /// Every vertex keeps its gap, so the whole triangle is ordinate
    /// preserving and symbolic heights pass through untouched.
    preserves: bool,
}

#[derive(Clone, Debug)]
pub struct QuotientMap<S: Scalar> {
    tris: Vec<Tri<S>>,
}

fn eval_rows<S: Scalar>(rows: &[[S; 3]; 3], x: &S, gap: &S) -> [S; 3] {
    let l = |r: &[S; 3]| r[0].clone() + r[1].clone() * x.clone() + r[2].clone() * gap.clone();
    [l(&rows[0]), l(&rows[1]), l(&rows[2])]
}

impl<S: Scalar> Default for QuotientMap<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> QuotientMap<S> {
    pub fn new() -> Self {
        let q = |n: i64, d: i64| S::ratio(n, d);
        // Canonical quadrant x in [0,1], gap = 1 - s in [0, 1/2].
        let a = (q(0, 1), q(0, 1));
        let b = (q(1, 4), q(0, 1));
        let c = (q(1, 2), q(0, 1));
        let d = (q(3, 4), q(0, 1));
        let e = (q(1, 1), q(0, 1));
        let f = (q(0, 1), q(1, 2));
        let g = (q(1, 2), q(1, 2));
        let h = (q(1, 1), q(1, 2));
        let p = (q(1, 4), q(1, 4));
        let qq = (q(3, 4), q(1, 4));
        let x3 = (q(1, 2), q(1, 4)); // slit foot
        let fans: Vec<([(S, S); 3], [(S, S); 3])> = vec![
            // Left fan around p: the top-edge piece [a, b] stretches onto
            // [a, c]; [b, c] folds down the left side of the slit.
            ([p.clone(), a.clone(), b.clone()], [p.clone(), a.clone(), c.clone()]),
            ([p.clone(), b.clone(), c.clone()], [p.clone(), c.clone(), x3.clone()]),
            ([p.clone(), c.clone(), g.clone()], [p.clone(), x3.clone(), g.clone()]),
            ([p.clone(), g.clone(), f.clone()], [p.clone(), g.clone(), f.clone()]),
            ([p.clone(), f.clone(), a.clone()], [p.clone(), f.clone(), a.clone()]),
            // Right fan around qq: [c, d] climbs the right side of the slit;
            // [d, e] stretches onto [c, e].
            ([qq.clone(), c.clone(), d.clone()], [qq.clone(), x3.clone(), c.clone()]),
            ([qq.clone(), d.clone(), e.clone()], [qq.clone(), c.clone(), e.clone()]),
            ([qq.clone(), e.clone(), h.clone()], [qq.clone(), e.clone(), h.clone()]),
            ([qq.clone(), h.clone(), g.clone()], [qq.clone(), h.clone(), g.clone()]),
            ([qq.clone(), g.clone(), c.clone()], [qq.clone(), g.clone(), x3.clone()]),
        ];
        let tris = fans
            .into_iter()
            .map(|(dom, img)| {
                let preserves = dom
                    .iter()
                    .zip(&img)
                    .all(|(dv, iv)| dv.1.total_cmp(&iv.1) == Ordering::Equal);
                Tri {
                    dom_rows: bary_rows(&dom),
                    img_rows: bary_rows(&img),
                    dom,
                    img,
                    preserves,
                }
            })
            .collect();
        QuotientMap { tris }
    }

    fn tolerance() -> S {
        if S::EXACT {
            S::zero()
        } else {
            S::from_f64(-1e-12)
        }
    }

    fn locate(&self, x: &S, gap: &S, in_image: bool) -> Vec<(usize, [S; 3])> {
        let eps = Self::tolerance();
        let mut out = Vec::new();
        for (i, t) in self.tris.iter().enumerate() {
            let rows = if in_image { &t.img_rows } else { &t.dom_rows };
            let mut l = eval_rows(rows, x, gap);
            // Zero-clamp roundoff-scale coordinates and renormalize, so a
            // point on a triangle edge or vertex reproduces that edge
            // exactly; the jump abscissae sit on these edges and must not
            // drift by an ulp per round trip.
            if !S::EXACT {
                let tol = S::from_f64(1e-12);
                let mut changed = false;
                for v in l.iter_mut() {
                    if v.abs().total_cmp(&tol) != Ordering::Greater {
                        *v = S::zero();
                        changed = true;
                    }
                }
                if changed {
                    let sum = l[0].clone() + l[1].clone() + l[2].clone();
                    if !sum.is_zero_val() {
                        for v in l.iter_mut() {
                            *v = v.clone() / sum.clone();
                        }
                    }
                }
            }
            if l.iter().all(|v| v.total_cmp(&eps) != Ordering::Less) {
                out.push((i, l));
            }
        }
        out
    }

    /// Quadrant image `(x', gap', triangle index)`.
    fn forward_quadrant(&self, x: &S, gap: &S) -> Result<(S, S, usize)> {
        let hits = self.locate(x, gap, false);
        let (i, l) = hits
            .first()
            .ok_or_else(|| Error::Domain(format!("({x}, gap {gap}) outside the quadrant")))?;
        let t = &self.tris[*i];
        let combine = |pick: fn(&(S, S)) -> &S| {
            l[0].clone() * pick(&t.img[0]).clone()
                + l[1].clone() * pick(&t.img[1]).clone()
                + l[2].clone() * pick(&t.img[2]).clone()
        };
        Ok((combine(|v| &v.0), combine(|v| &v.1), *i))
    }

    /// Quadrant preimages `(x, gap, triangle index)`; slit points have two.
    fn invert_quadrant(&self, x: &S, gap: &S) -> Vec<(S, S, usize)> {
        let hits = self.locate(x, gap, true);
        let mut out: Vec<(S, S, usize)> = Vec::new();
        for (i, l) in hits {
            let t = &self.tris[i];
            let combine = |pick: fn(&(S, S)) -> &S| {
                l[0].clone() * pick(&t.dom[0]).clone()
                    + l[1].clone() * pick(&t.dom[1]).clone()
                    + l[2].clone() * pick(&t.dom[2]).clone()
            };
            let px = combine(|v| &v.0);
            let pg = combine(|v| &v.1);
            let near = |a: &S, b: &S| {
                let d = (a.clone() - b.clone()).abs();
                if S::EXACT {
                    d.is_zero_val()
                } else {
                    d.to_f64() < 1e-12
                }
            };
            if !out.iter().any(|(ox, og, _)| near(ox, &px) && near(og, &pg)) {
                out.push((px, pg, i));
            }
        }
        out
    }

    /// Gapwise height reconstruction: exact when the triangle preserves the
    /// ordinate, otherwise rebuilt from the affine gap image.
    fn out_height(&self, tri: usize, h: &Height<S>, gap_out: S) -> Height<S> {
        if self.tris[tri].preserves {
            return h.clone();
        }
        if !S::EXACT {
            // The affine reconstruction cancels below roundoff scale; keep
            // edge points on the edge and interior points strictly inside
            // rather than letting noise cross the edge.
            let floor = S::one().ldexp(-100);
            if gap_out.total_cmp(&floor) != Ordering::Greater {
                return if matches!(h, Height::Top) {
                    Height::Top
                } else {
                    Height::up(0, floor)
                };
            }
        }
        Height::up(0, gap_out)
    }

    pub fn apply(&self, pt: &SquarePoint<S>) -> Result<SquarePoint<S>> {
        let upper = Height::level(1);
        let lower = Height::level(-1);
        if pt.h.cmp_h(&lower) == Ordering::Less
            || (pt.h.cmp_h(&lower) == Ordering::Equal && matches!(pt.h, Height::Bottom))
        {
            let m = self.apply(&SquarePoint::new(pt.x.clone(), pt.h.mirror()))?;
            return Ok(SquarePoint::new(m.x, m.h.mirror()));
        }
        if pt.h.cmp_h(&upper) == Ordering::Less {
            return Ok(pt.clone());
        }
        let neg = pt.x.total_cmp(&S::zero()) == Ordering::Less;
        let x = if neg { -pt.x.clone() } else { pt.x.clone() };
        let gap = pt
            .h
            .gap_to_top()
            .ok_or_else(|| Error::Domain("ordinate side mismatch".into()))?;
        let (xo, go, tri) = self.forward_quadrant(&x, &gap)?;
        let ho = self.out_height(tri, &pt.h, go);
        Ok(SquarePoint::new(if neg { -xo } else { xo }, ho))
    }

    /// All preimages of a point of the quotient; interior points have one,
    /// points on a slit have one per side.
    pub fn invert(&self, pt: &SquarePoint<S>) -> Result<Vec<SquarePoint<S>>> {
        let upper = Height::level(1);
        let lower = Height::level(-1);
        if pt.h.cmp_h(&lower) == Ordering::Less
            || (pt.h.cmp_h(&lower) == Ordering::Equal && matches!(pt.h, Height::Bottom))
        {
            let pres = self.invert(&SquarePoint::new(pt.x.clone(), pt.h.mirror()))?;
            return Ok(pres
                .into_iter()
                .map(|p| SquarePoint::new(p.x, p.h.mirror()))
                .collect());
        }
        if pt.h.cmp_h(&upper) == Ordering::Less {
            return Ok(vec![pt.clone()]);
        }
        let neg = pt.x.total_cmp(&S::zero()) == Ordering::Less;
        let x = if neg { -pt.x.clone() } else { pt.x.clone() };
        let gap = pt
            .h
            .gap_to_top()
            .ok_or_else(|| Error::Domain("ordinate side mismatch".into()))?;
        let hits = self.invert_quadrant(&x, &gap);
        if hits.is_empty() {
            return Err(Error::NotInImage(format!("({}, {})", pt.x, pt.h.to_scalar())));
        }
        Ok(hits
            .into_iter()
            .map(|(px, pg, tri)| {
                let h = self.out_height(tri, &pt.h, pg);
                SquarePoint::new(if neg { -px } else { px }, h)
            })
            .collect())
    }
}

/// The square map conjugated through the slit quotient: identity on the
/// slits and on the horizontal edge images, normally rising elsewhere.
pub struct SixPointsMap<S: Scalar> {
    pub square: BuiltSquareMap<S>,
    pub quotient: QuotientMap<S>,
}

impl<S: Scalar> SixPointsMap<S> {
    pub fn new(square: BuiltSquareMap<S>) -> Self {
        SixPointsMap { square, quotient: QuotientMap::new() }
    }
}

impl<S: Scalar> SquareDynamics<S> for SixPointsMap<S> {
    fn step(&self, p: &SquarePoint<S>, dir: Direction) -> Result<SquarePoint<S>> {
        let pres = self.quotient.invert(p)?;
        let q = self.square.step(&pres[0], dir)?;
        self.quotient.apply(&q)
    }
}

// ---------------------------------------------------------------------------
// Tangent chart and disk conjugacy (floating geometry).

pub const DEFAULT_EDGE_DELTA: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlanePoint {
    At { x: f64, y: f64 },
    /// Square coordinates too close to the edge for the tangent chart;
    /// the plane image is beyond `2 / (pi * delta)` in norm.
    NearEdge { r: f64, s: f64 },
}

impl PlanePoint {
    pub fn norm_lower_bound(&self, delta: f64) -> f64 {
        match self {
            PlanePoint::At { x, y } => x.hypot(*y),
            PlanePoint::NearEdge { .. } => 2.0 / (std::f64::consts::PI * delta),
        }
    }
}

/// Open-square-to-plane chart `(r, s) -> (tan(pi r / 2), tan(pi s / 2))`.
pub fn tangent_eval(r: f64, s: f64, delta: f64) -> PlanePoint {
    if 1.0 - r.abs() < delta || 1.0 - s.abs() < delta {
        return PlanePoint::NearEdge { r, s };
    }
    let t = |v: f64| (std::f64::consts::FRAC_PI_2 * v).tan();
    PlanePoint::At { x: t(r), y: t(s) }
}

pub fn tangent_invert(x: f64, y: f64) -> (f64, f64) {
    let inv = |v: f64| {
        // For large |v| compute via the cotangent gap to keep the edge
        // distance well conditioned.
        if v.abs() > 1.0 {
            let gap = (1.0 / v.abs()).atan() * std::f64::consts::FRAC_2_PI;
            (1.0 - gap) * v.signum()
        } else {
            v.atan() * std::f64::consts::FRAC_2_PI
        }
    };
    (inv(x), inv(y))
}

/// Star-shaped disk specification, all relative to the exchange center.
#[derive(Clone, Debug, PartialEq)]
pub enum DiskSpec {
    Ellipse { a: f64, b: f64 },
    Rectangle { half_width: f64, half_height: f64 },
    /// Vertices around the center in strictly increasing angle order.
    Polygon { vertices: Vec<(f64, f64)> },
}

impl DiskSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match self {
            DiskSpec::Ellipse { a, b } => {
                if !(ok(*a) && ok(*b)) {
                    return Err(Error::InvalidDisk("ellipse semi-axes must be positive".into()));
                }
            }
            DiskSpec::Rectangle { half_width, half_height } => {
                if !(ok(*half_width) && ok(*half_height)) {
                    return Err(Error::InvalidDisk("rectangle half-sizes must be positive".into()));
                }
            }
            DiskSpec::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidDisk("polygon needs at least 3 vertices".into()));
                }
                let angles: Vec<f64> = vertices.iter().map(|&(x, y)| y.atan2(x)).collect();
                let mut increases = 0usize;
                for i in 0..angles.len() {
                    let j = (i + 1) % angles.len();
                    if angles[j] > angles[i] {
                        increases += 1;
                    }
                    let (x, y) = vertices[i];
                    if !ok(x.hypot(y)) {
                        return Err(Error::InvalidDisk("polygon vertex at the center".into()));
                    }
                }
                // One wrap-around is allowed; anything else is not star
                // ordered around the center.
                if increases + 1 < vertices.len() {
                    return Err(Error::InvalidDisk(
                        "polygon vertices must wind once around the center".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Boundary distance from the center along direction `theta`.
    pub fn radius(&self, theta: f64) -> f64 {
        let (dx, dy) = (theta.cos(), theta.sin());
        match self {
            DiskSpec::Ellipse { a, b } => {
                a * b / ((b * dx).powi(2) + (a * dy).powi(2)).sqrt()
            }
            DiskSpec::Rectangle { half_width, half_height } => {
                let tx = if dx.abs() > 1e-300 { half_width / dx.abs() } else { f64::INFINITY };
                let ty = if dy.abs() > 1e-300 { half_height / dy.abs() } else { f64::INFINITY };
                tx.min(ty)
            }
            DiskSpec::Polygon { vertices } => {
                let mut best = f64::INFINITY;
                let n = vertices.len();
                for i in 0..n {
                    let v = vertices[i];
                    let w = vertices[(i + 1) % n];
                    let ex = w.0 - v.0;
                    let ey = w.1 - v.1;
                    let den = ex * dy - dx * ey;
                    if den.abs() < 1e-300 {
                        continue;
                    }
                    let t = (ex * v.1 - v.0 * ey) / den;
                    let u = (dx * v.1 - v.0 * dy) / den;
                    if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
                        best = best.min(t);
                    }
                }
                best
            }
        }
    }
}

/// Center of the exchanged region: the tangent image of the reference
/// rectangle `[-1/2, 1/2] x [1/3, 1/2]` is `[-1, 1] x [sqrt(3)/3, 1]`.
pub fn region_center() -> (f64, f64) {
    (0.0, (3.0_f64.sqrt() / 3.0 + 1.0) / 2.0)
}

fn region_radius(theta: f64) -> f64 {
    let hh = (1.0 - 3.0_f64.sqrt() / 3.0) / 2.0;
    DiskSpec::Rectangle { half_width: 1.0, half_height: hh }.radius(theta)
}

/// Radial exchange sending the tangent image of the reference rectangle onto
/// the disk, translating radially outside.
pub fn disk_exchange(disk: &DiskSpec, p: (f64, f64)) -> (f64, f64) {
    let (cx, cy) = region_center();
    let (vx, vy) = (p.0 - cx, p.1 - cy);
    let rho = vx.hypot(vy);
    if rho == 0.0 {
        return (cx, cy);
    }
    let theta = vy.atan2(vx);
    let rg = region_radius(theta);
    let re = disk.radius(theta);
    let sigma = if rho <= rg { rho * re / rg } else { re + (rho - rg) };
    (cx + sigma * vx / rho, cy + sigma * vy / rho)
}

pub fn disk_exchange_inv(disk: &DiskSpec, p: (f64, f64)) -> (f64, f64) {
    let (cx, cy) = region_center();
    let (vx, vy) = (p.0 - cx, p.1 - cy);
    let rho = vx.hypot(vy);
    if rho == 0.0 {
        return (cx, cy);
    }
    let theta = vy.atan2(vx);
    let rg = region_radius(theta);
    let re = disk.radius(theta);
    let sigma = if rho <= re { rho * rg / re } else { rg + (rho - re) };
    (cx + sigma * vx / rho, cy + sigma * vy / rho)
}

/// The full plane realization: quotient dynamics on the square, tangent
/// chart, and disk exchange.
pub struct PlaneSystem<S: Scalar> {
    pub dynamics: SixPointsMap<S>,
    pub disk: DiskSpec,
    pub edge_delta: f64,
}

impl<S: Scalar> PlaneSystem<S> {
    pub fn new(square: BuiltSquareMap<S>, disk: DiskSpec) -> Result<Self> {
        disk.validate()?;
        Ok(PlaneSystem {
            dynamics: SixPointsMap::new(square),
            disk,
            edge_delta: DEFAULT_EDGE_DELTA,
        })
    }

    pub fn push_forward(&self, p: &SquarePoint<S>) -> PlanePoint {
        let (r, s) = p.coords_f64();
        match tangent_eval(r, s, self.edge_delta) {
            PlanePoint::At { x, y } => {
                let (ex, ey) = disk_exchange(&self.disk, (x, y));
                PlanePoint::At { x: ex, y: ey }
            }
            near => near,
        }
    }

    pub fn pull_back(&self, x: f64, y: f64) -> Result<SquarePoint<S>> {
        let (tx, ty) = disk_exchange_inv(&self.disk, (x, y));
        let (r, s) = tangent_invert(tx, ty);
        SquarePoint::from_coords(S::from_f64(r), S::from_f64(s))
    }

    pub fn step_square(&self, p: &SquarePoint<S>, dir: Direction) -> Result<SquarePoint<S>> {
        self.dynamics.step(p, dir)
    }

    /// Classify the plane orbit of a quotient point through the square
    /// conjugation: the square preimage orbit keeps its symbolic height
    /// coordinates (the iterated quotient map loses the edge gap to affine
    /// cancellation near the slits), and an edge-bound square limit folds
    /// through the top-edge identification — abscissa limits past `1/4`
    /// land on a slit, which is a bounded interior point of the plane
    /// system, while smaller ones stay on the edge and diverge.
    pub fn classify(
        &self,
        start: &SquarePoint<S>,
        steps: u32,
        edge_tol: f64,
        cauchy_tol: f64,
    ) -> Result<OrbitClass> {
        let pre = self.dynamics.quotient.invert(start)?;
        let p0 = &pre[0];
        let class = classify_orbit(&self.dynamics.square, p0, steps, edge_tol, cauchy_tol)?;
        Ok(match class {
            OrbitClass::TopEdgeLimit => {
                let pts = orbit(&self.dynamics.square, p0, steps, Direction::Forward)?;
                let (x, _) = pts.last().expect("orbit has points").coords_f64();
                if x.abs() > 0.25 {
                    // Top-edge abscissae converge to the jump abscissae +-1/2,
                    // which the quotient folds onto the slit feet.
                    OrbitClass::InteriorLimit(0.5f64.copysign(x), 0.75)
                } else {
                    OrbitClass::TopEdgeLimit
                }
            }
            OrbitClass::InteriorLimit(lx, ls) => {
                let q = self.dynamics.quotient.apply(&SquarePoint::from_coords(
                    S::from_f64(lx),
                    S::from_f64(ls),
                )?)?;
                let (qx, qs) = q.coords_f64();
                OrbitClass::InteriorLimit(qx, qs)
            }
            other => other,
        })
    }

    /// Norm of the plane image, using the symbolic edge gap when the tangent
    /// chart overflows.
    pub fn plane_norm(&self, p: &SquarePoint<S>) -> f64 {
        match self.push_forward(p) {
            PlanePoint::At { x, y } => x.hypot(y),
            PlanePoint::NearEdge { .. } => {
                let gap = match &p.h {
                    Height::Up { m, c } => c.to_f64() * 2f64.powi(-(*m as i32)),
                    Height::Down { m, c } => c.to_f64() * 2f64.powi(-(*m as i32)),
                    _ => 0.0,
                };
                if gap > 0.0 {
                    2.0 / (std::f64::consts::PI * gap)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}
