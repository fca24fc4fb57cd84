//! Staged construction of a normally rising square homeomorphism.
//!
//! The upper half-square is built stage by stage. Stage `k` truncates each
//! active ordinate member, pushes the truncated segment over the dense grid
//! to depth `k^2 - 1` by iterating the map built so far, and then lays down
//! `2k + 1` successor bands whose anchor abscissae walk a `1/(2k + 7)`
//! fraction toward the prescribed envelope per step (alternating between the
//! lower and upper envelope across stages). Between anchor bands the map is
//! the ordinate-affine blend of the two bounding level maps; inside a band it
//! interpolates linearly between stored arc knots. The lower half-square is
//! the vertical reflection of an independently built structure on the
//! reflected alpha family, composed inversely.

use std::cmp::Ordering;
use std::sync::RwLock;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::height::{Height, SquarePoint};
use crate::pl1d::MonotonePL1D;
use crate::profiles::{Branch, Envelope, EnvelopeNode, Family, LimitProfile, Member};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct BuildSettings {
    /// Hard cap on staged advances; evaluation past it reports `CapReached`.
    pub max_stage: u32,
    /// Extra arc knots (beyond the truncation endpoints) per member per stage.
    pub refine_budget: usize,
    /// Stages past this one stop inserting refinement knots. Deep-stage
    /// accuracy depends on refinement, so this stays at the stage cap unless
    /// a run deliberately trades precision for construction cost.
    pub refine_until_stage: u32,
    /// Construction-time rounding of pushed abscissae, in fractional bits.
    /// Keeps exact-mode rationals at bounded size; a no-op in floating mode.
    pub round_bits: u32,
}

impl Default for BuildSettings {
    fn default() -> Self {
        BuildSettings {
            max_stage: 64,
            refine_budget: 48,
            refine_until_stage: u32::MAX,
            round_bits: 192,
        }
    }
}

/// Anchor abscissa recurrence: starting from `x0`, step `i` of stage `k`
/// moves an `i/(2k + 7)` fraction of the way toward the envelope value.
pub fn anchor_position<S: Scalar>(x0: &S, target: &S, i: u32, k: u32) -> S {
    let frac = S::from_int(i as i64) / S::from_int(2 * k as i64 + 7);
    x0.clone() + frac * (target.clone() - x0.clone())
}

/// One arc family band: ordinates `s = 1 - c * 2^-m` for `c` between the
/// first and last knot, with every arc sharing the knot list.
#[derive(Clone, Debug)]
pub struct AnchorBand<S: Scalar> {
    pub m: u32,
    /// `c` values, strictly decreasing (ordinate increasing); length >= 1.
    pub knots: Vec<S>,
    /// Per grid abscissa, the domain and image abscissae at each knot,
    /// ordered by abscissa.
    pub arcs: Vec<ArcPair<S>>,
    pub stage: u32,
    pub member: usize,
    pub depth: u32,
    lo_h: Height<S>,
    hi_h: Height<S>,
}

#[derive(Clone, Debug)]
pub struct ArcPair<S: Scalar> {
    pub r: S,
    pub domain: Vec<S>,
    pub image: Vec<S>,
}

impl<S: Scalar> AnchorBand<S> {
    fn new(m: u32, knots: Vec<S>, arcs: Vec<ArcPair<S>>, stage: u32, member: usize, depth: u32) -> Self {
        let lo_h = Height::up(m as i64, knots[0].clone());
        let hi_h = Height::up(m as i64, knots[knots.len() - 1].clone());
        AnchorBand { m, knots, arcs, stage, member, depth, lo_h, hi_h }
    }

    /// Knot weight of an interior ordinate: `(segment index, theta)`, or an
    /// exact knot hit.
    fn locate(&self, h: &Height<S>) -> KnotPos<S> {
        let c = match h {
            Height::Up { m, c } => {
                debug_assert!(*m >= self.m);
                c.ldexp(-((m - self.m) as i32))
            }
            _ => unreachable!("anchor bands live in the upper half"),
        };
        let j = self.knots.partition_point(|k| k.total_cmp(&c) == Ordering::Greater);
        debug_assert!(j < self.knots.len() || self.knots.len() == 1);
        let j = j.min(self.knots.len() - 1);
        if self.knots[j].total_cmp(&c) == Ordering::Equal || self.knots.len() == 1 {
            KnotPos::At(j)
        } else {
            let a = &self.knots[j - 1];
            let b = &self.knots[j];
            let theta = (a.clone() - c) / (a.clone() - b.clone());
            KnotPos::Between(j - 1, theta)
        }
    }

    fn arc_domain(&self, i: usize, pos: &KnotPos<S>) -> S {
        match pos {
            KnotPos::At(j) => self.arcs[i].domain[*j].clone(),
            KnotPos::Between(j, t) => {
                let a = &self.arcs[i].domain[*j];
                let b = &self.arcs[i].domain[*j + 1];
                a.clone() + t.clone() * (b.clone() - a.clone())
            }
        }
    }

    fn arc_image(&self, i: usize, pos: &KnotPos<S>) -> S {
        match pos {
            KnotPos::At(j) => self.arcs[i].image[*j].clone(),
            KnotPos::Between(j, t) => {
                let a = &self.arcs[i].image[*j];
                let b = &self.arcs[i].image[*j + 1];
                a.clone() + t.clone() * (b.clone() - a.clone())
            }
        }
    }

    fn eval(&self, x: &S, h: &Height<S>) -> Result<S> {
        let pos = self.locate(h);
        self.interp(x, &pos, false)
    }

    fn invert(&self, y: &S, h: &Height<S>) -> Result<S> {
        let pos = self.locate(h);
        self.interp(y, &pos, true)
    }

    /// Piecewise-linear interpolation across arcs; `inverse` swaps the roles
    /// of the domain and image abscissae.
    fn interp(&self, x: &S, pos: &KnotPos<S>, inverse: bool) -> Result<S> {
        let val = |i: usize| if inverse { self.arc_image(i, pos) } else { self.arc_domain(i, pos) };
        let out = |i: usize| if inverse { self.arc_domain(i, pos) } else { self.arc_image(i, pos) };
        let n = self.arcs.len();
        let mut lo = 0usize;
        let mut hi = n - 1;
        let vlo = val(lo);
        if x.total_cmp(&vlo) == Ordering::Less {
            return Err(Error::Domain(format!("abscissa {x} left of band")));
        }
        let vhi = val(hi);
        if x.total_cmp(&vhi) == Ordering::Greater {
            return Err(Error::Domain(format!("abscissa {x} right of band")));
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if val(mid).total_cmp(x) == Ordering::Greater {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let a = val(lo);
        let b = val(hi);
        if a.total_cmp(x) == Ordering::Equal {
            return Ok(out(lo));
        }
        if b.total_cmp(&a) == Ordering::Equal {
            // Collapsed in floating mode at extreme depth.
            return Ok(out(lo));
        }
        let t = (x.clone() - a.clone()) / (b - a);
        let oa = out(lo);
        let ob = out(hi);
        Ok(oa.clone() + t * (ob - oa))
    }

    /// The level map at knot `j` as an explicit PL map (collapsed arcs are
    /// merged).
    fn map_at_knot(&self, j: usize) -> MonotonePL1D<S> {
        let mut pts: Vec<(S, S)> = Vec::with_capacity(self.arcs.len());
        for a in &self.arcs {
            let x = a.domain[j].clone();
            let y = a.image[j].clone();
            if let Some(last) = pts.last() {
                if last.0.total_cmp(&x) != Ordering::Less {
                    continue;
                }
            }
            pts.push((x, y));
        }
        MonotonePL1D::new(pts).expect("arc knots are monotone by construction")
    }
}

enum KnotPos<S> {
    At(usize),
    Between(usize, S),
}

/// Region between consecutive anchor levels: the ordinate-affine blend of the
/// two bounding level maps.
#[derive(Clone, Debug)]
pub struct GapBand<S: Scalar> {
    lo: Height<S>,
    hi: Height<S>,
    map_lo: MonotonePL1D<S>,
    map_hi: MonotonePL1D<S>,
}

impl<S: Scalar> GapBand<S> {
    fn eval(&self, x: &S, h: &Height<S>) -> Result<S> {
        let w = h.ratio_in(&self.lo, &self.hi);
        let a = self.map_lo.eval(x)?;
        let b = self.map_hi.eval(x)?;
        Ok(a.clone() + w * (b - a))
    }

    fn invert(&self, y: &S, h: &Height<S>) -> Result<S> {
        let w = h.ratio_in(&self.lo, &self.hi);
        // The blend is PL with breakpoints at the union of both maps'
        // breakpoints; bracket y there and solve the linear piece.
        let xs_a = self.map_lo.breakpoints();
        let xs_b = self.map_hi.breakpoints();
        let mut xs: Vec<&S> = xs_a.iter().map(|p| &p.0).chain(xs_b.iter().map(|p| &p.0)).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
        let g = |x: &S| -> Result<S> {
            let a = self.map_lo.eval(x)?;
            let b = self.map_hi.eval(x)?;
            Ok(a.clone() + w.clone() * (b - a))
        };
        let mut prev_x = xs[0].clone();
        let mut prev_y = g(&prev_x)?;
        if y.total_cmp(&prev_y) == Ordering::Less {
            return Err(Error::Range(format!("{y} below blended image")));
        }
        if prev_y.total_cmp(y) == Ordering::Equal {
            return Ok(prev_x);
        }
        for x in &xs[1..] {
            let cur_y = g(x)?;
            match cur_y.total_cmp(y) {
                Ordering::Less => {
                    prev_x = (*x).clone();
                    prev_y = cur_y;
                }
                Ordering::Equal => return Ok((*x).clone()),
                Ordering::Greater => {
                    let t = (y.clone() - prev_y.clone()) / (cur_y - prev_y);
                    return Ok(prev_x.clone() + t * ((*x).clone() - prev_x));
                }
            }
        }
        Err(Error::Range(format!("{y} above blended image")))
    }
}

#[derive(Clone, Debug)]
pub enum Band<S: Scalar> {
    Gap(GapBand<S>),
    Anchor(AnchorBand<S>),
}

impl<S: Scalar> Band<S> {
    fn lo(&self) -> &Height<S> {
        match self {
            Band::Gap(g) => &g.lo,
            Band::Anchor(a) => &a.lo_h,
        }
    }
    fn hi(&self) -> &Height<S> {
        match self {
            Band::Gap(g) => &g.hi,
            Band::Anchor(a) => &a.hi_h,
        }
    }
    fn eval(&self, x: &S, h: &Height<S>) -> Result<S> {
        match self {
            Band::Gap(g) => g.eval(x, h),
            Band::Anchor(a) => a.eval(x, h),
        }
    }
    fn invert(&self, y: &S, h: &Height<S>) -> Result<S> {
        match self {
            Band::Gap(g) => g.invert(y, h),
            Band::Anchor(a) => a.invert(y, h),
        }
    }
}

/// Cache key for a pushed anchor chain: starting abscissa and knot
/// parameter, ordered by the scalar total order.
#[derive(Clone, Debug)]
struct PushKey<S: Scalar>(S, S);

impl<S: Scalar> PartialEq for PushKey<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S: Scalar> Eq for PushKey<S> {}
impl<S: Scalar> PartialOrd for PushKey<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S: Scalar> Ord for PushKey<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| self.1.total_cmp(&other.1))
    }
}

/// One normally rising half: the staged structure over `[-1/2, t_{K^2-1}]`.
#[derive(Clone, Debug)]
pub struct Structure<S: Scalar> {
    bands: Vec<Band<S>>,
    /// Next stage index to build; the region covers strips `0 .. k_next^2 - 1`.
    k_next: u32,
    top: Height<S>,
    top_map: MonotonePL1D<S>,
    family: Family<S>,
    grid: crate::profiles::DenseGrid<S>,
    settings: BuildSettings,
    /// Pushed chains from earlier stages, resumable because bands are
    /// append-only: a chain at depth `d` continues identically later.
    push_cache: std::collections::BTreeMap<PushKey<S>, (u32, S)>,
}

impl<S: Scalar> Structure<S> {
    pub fn new(family: Family<S>, grid: crate::profiles::DenseGrid<S>, settings: BuildSettings) -> Self {
        let base = GapBand {
            lo: Height::level(-1),
            hi: Height::zero(),
            map_lo: MonotonePL1D::identity(),
            map_hi: MonotonePL1D::identity(),
        };
        Structure {
            bands: vec![Band::Gap(base)],
            k_next: 1,
            top: Height::zero(),
            top_map: MonotonePL1D::identity(),
            family,
            grid,
            settings,
            push_cache: std::collections::BTreeMap::new(),
        }
    }

    pub fn stage(&self) -> u32 {
        self.k_next - 1
    }

    pub fn top_level(&self) -> &Height<S> {
        &self.top
    }

    pub fn bands(&self) -> &[Band<S>] {
        &self.bands
    }

    pub fn covers(&self, h: &Height<S>) -> bool {
        h.cmp_h(self.bands[0].lo()) != Ordering::Less && h.cmp_h(&self.top) != Ordering::Greater
    }

    pub fn ensure_covers(&mut self, h: &Height<S>) -> Result<()> {
        while !self.covers(h) {
            if h.cmp_h(self.bands[0].lo()) == Ordering::Less {
                return Err(Error::Domain("ordinate below the structure domain".into()));
            }
            self.advance_stage().map_err(|e| match e {
                Error::StageOverflow(k) => Error::CapReached(k),
                other => other,
            })?;
        }
        Ok(())
    }

    fn band_at(&self, h: &Height<S>) -> Result<&Band<S>> {
        if !self.covers(h) {
            return Err(Error::Domain("ordinate outside the built region".into()));
        }
        let i = self.bands.partition_point(|b| b.hi().cmp_h(h) == Ordering::Less);
        Ok(&self.bands[i])
    }

    /// Abscissa of the image of `(x, h)` under the structure map.
    pub fn eval_abscissa(&self, x: &S, h: &Height<S>) -> Result<S> {
        self.band_at(h)?.eval(x, h)
    }

    /// Abscissa `x` with level-map-at-`h`(x) = y.
    pub fn invert_abscissa(&self, y: &S, h: &Height<S>) -> Result<S> {
        self.band_at(h)?.invert(y, h)
    }

    /// Refinement knot parameters: boundary knots of existing anchor bands
    /// whose crossing parameter falls strictly inside `(c_lo, c_hi)`.
    fn refinement_params(&self, c_lo: &S, c_hi: &S) -> Vec<S> {
        if self.settings.refine_budget == 0 {
            return Vec::new();
        }
        // Oldest knots first, so the selection is stable across stages and
        // their pushed chains stay resumable from the cache.
        let mut cand: Vec<(u32, S)> = Vec::new();
        let one = S::one();
        for b in &self.bands {
            if let Band::Anchor(a) = b {
                for c in [&a.knots[0], &a.knots[a.knots.len() - 1]] {
                    if c.total_cmp(&one) == Ordering::Less
                        && c.total_cmp(c_lo) == Ordering::Greater
                        && c.total_cmp(c_hi) == Ordering::Less
                    {
                        cand.push((a.stage, (*c).clone()));
                    }
                }
            }
        }
        cand.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.total_cmp(&a.1)));
        let mut out: Vec<S> = Vec::new();
        for (_, c) in cand {
            if out.len() == self.settings.refine_budget {
                break;
            }
            if !out.iter().any(|o| o.total_cmp(&c) == Ordering::Equal) {
                out.push(c);
            }
        }
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    pub fn advance_stage(&mut self) -> Result<()> {
        let k = self.k_next;
        if k > self.settings.max_stage {
            return Err(Error::StageOverflow(self.settings.max_stage));
        }
        let mut rs: Vec<S> = self.grid.prefix(k).to_vec();
        rs.sort_by(|a, b| a.total_cmp(b));
        let branch = if k % 2 == 1 { Branch::Lower } else { Branch::Upper };
        let steps = k * k - 1;
        let n_active = (k as usize).min(self.family.members.len());
        let one = S::one();

        let mut new_bands: Vec<AnchorBand<S>> = Vec::new();
        for (mi, member) in self.family.members[..n_active].to_vec().iter().enumerate() {
            let (a, b) = member.truncate(k);
            let c_hi = one.clone() - a; // deepest ordinate of the component
            let c_lo = one.clone() - b;
            let mut params = vec![c_hi.clone()];
            if c_lo.total_cmp(&c_hi) == Ordering::Less {
                if k <= self.settings.refine_until_stage {
                    params.extend(self.refinement_params(&c_lo, &c_hi));
                }
                params.push(c_lo.clone());
            }

            // Push every (grid abscissa, knot parameter) pair to depth k^2-1
            // by iterating the map built so far, resuming cached chains.
            let mut x0: Vec<Vec<S>> = Vec::with_capacity(rs.len());
            let mut cache_updates: Vec<(PushKey<S>, (u32, S))> = Vec::new();
            for r in &rs {
                let mut row = Vec::with_capacity(params.len());
                for c in &params {
                    let key = PushKey(r.clone(), c.clone());
                    let mut x = r.clone();
                    let mut depth = 0u32;
                    if let Some((d, xc)) = self.push_cache.get(&key) {
                        if *d <= steps {
                            depth = *d;
                            x = xc.clone();
                        }
                    }
                    let mut h = Height::up(depth.into(), c.clone());
                    for _ in depth..steps {
                        x = self.eval_abscissa(&x, &h)?.round_frac_bits(self.settings.round_bits);
                        h = h.succ();
                    }
                    cache_updates.push((key, (steps, x.clone())));
                    row.push(x);
                }
                x0.push(row);
            }
            self.push_cache.extend(cache_updates);
            // Floating collapse guard: keep each knot row non-decreasing in r.
            for p in 0..params.len() {
                for i in 1..rs.len() {
                    if x0[i][p].total_cmp(&x0[i - 1][p]) == Ordering::Less {
                        if S::EXACT {
                            return Err(Error::InternalOrder(format!(
                                "pushed anchors out of order at r = {}",
                                rs[i]
                            )));
                        }
                        x0[i][p] = x0[i - 1][p].clone();
                    }
                }
            }

            let targets: Vec<S> = rs
                .iter()
                .map(|r| member.profile.target(r, branch))
                .collect::<Result<Vec<S>>>()?;

            for d in 0..=2 * k {
                let m = k * k - 1 + d;
                let arcs: Vec<ArcPair<S>> = rs
                    .iter()
                    .enumerate()
                    .map(|(i, r)| ArcPair {
                        r: r.clone(),
                        domain: params
                            .iter()
                            .enumerate()
                            .map(|(p, _)| anchor_position(&x0[i][p], &targets[i], d, k))
                            .collect(),
                        image: params
                            .iter()
                            .enumerate()
                            .map(|(p, _)| anchor_position(&x0[i][p], &targets[i], d + 1, k))
                            .collect(),
                    })
                    .collect();
                new_bands.push(AnchorBand::new(m, params.clone(), arcs, k, mi, d));
            }
        }

        // Ascending ordinate: by strip exponent, then by decreasing first knot.
        new_bands.sort_by(|a, b| {
            a.m.cmp(&b.m).then_with(|| b.knots[0].total_cmp(&a.knots[0]))
        });

        let mut prev_h = self.top.clone();
        let mut prev_map = self.top_map.clone();
        for band in new_bands {
            match prev_h.cmp_h(&band.lo_h) {
                Ordering::Less => {
                    self.bands.push(Band::Gap(GapBand {
                        lo: prev_h.clone(),
                        hi: band.lo_h.clone(),
                        map_lo: prev_map.clone(),
                        map_hi: band.map_at_knot(0),
                    }));
                }
                Ordering::Equal => {}
                Ordering::Greater => {
                    return Err(Error::InternalOrder("bands out of order".into()));
                }
            }
            prev_h = band.hi_h.clone();
            prev_map = band.map_at_knot(band.knots.len() - 1);
            self.bands.push(Band::Anchor(band));
        }
        let expect_top = Height::level(((k + 1) * (k + 1) - 1) as i64);
        if prev_h.cmp_h(&expect_top) != Ordering::Equal {
            return Err(Error::InternalOrder("stage top is not the expected level".into()));
        }
        self.top = prev_h;
        self.top_map = prev_map;
        self.k_next = k + 1;
        Ok(())
    }
}

/// Reflect a family through the seam strip: each member becomes
/// `{1/2 - s}`, and a member touching ordinate `0` has that level replaced
/// by its forward image `1/2`. Converts alpha-side data indexed by the
/// ordinate of an upper starting point (whose backward orbit first crosses
/// the seam) into the starting-band coordinates used by the builders.
pub fn mirror_family<S: Scalar>(alpha: &Family<S>) -> Result<Family<S>> {
    let half = S::half();
    let mut members: Vec<Member<S>> = Vec::new();
    let mut extra: Vec<Member<S>> = Vec::new();
    for m in &alpha.members {
        let lo = half.clone() - m.hi.clone();
        let hi = half.clone() - m.lo.clone();
        let mut refl = Member {
            lo,
            hi,
            closed_lo: m.closed_hi,
            closed_hi: m.closed_lo,
            profile: m.profile.clone(),
        };
        if refl.lo.total_cmp(&S::zero()) == Ordering::Equal && refl.closed_lo {
            if refl.is_singleton() {
                refl = Member::singleton(half.clone(), m.profile.clone());
            } else {
                refl.closed_lo = false;
                extra.push(Member::singleton(half.clone(), m.profile.clone()));
            }
        }
        members.push(refl);
    }
    for e in extra {
        let collides = members.iter().any(|m| {
            let above = e.lo.total_cmp(&m.hi) == Ordering::Greater
                || (e.lo.total_cmp(&m.hi) == Ordering::Equal && !m.closed_hi);
            let below = e.hi.total_cmp(&m.lo) == Ordering::Less
                || (e.hi.total_cmp(&m.lo) == Ordering::Equal && !m.closed_lo);
            !(above || below)
        });
        if collides {
            return Err(Error::ReflectionCollision("replacement level 1/2".into()));
        }
        members.push(e);
    }
    let fam = Family { members };
    fam.validate()?;
    Ok(fam)
}

/// Condition check report for the two-sided metric conditions.
#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub blocks: Vec<BlockCheck>,
    pub level_bound: f64,
    pub level_max_dev: f64,
    pub level_violations: usize,
    pub ordinate_mismatches: usize,
}

#[derive(Clone, Debug)]
pub struct BlockCheck {
    pub block: u32,
    pub bound: f64,
    pub max_dev: f64,
    pub violations: usize,
}

impl ConditionReport {
    pub fn is_clean(&self) -> bool {
        self.ordinate_mismatches == 0
            && self.level_violations == 0
            && self.blocks.iter().all(|b| b.violations == 0)
    }
}

/// The assembled square homeomorphism: a staged upper structure, plus the
/// reflected inverse of a staged structure for the lower half.
pub struct BuiltSquareMap<S: Scalar> {
    upper: RwLock<Structure<S>>,
    lower: RwLock<Structure<S>>,
    omega: Family<S>,
    alpha: Family<S>,
    settings: BuildSettings,
}

impl<S: Scalar> BuiltSquareMap<S> {
    pub fn build(omega: &Family<S>, alpha: &Family<S>, settings: BuildSettings) -> Result<Self> {
        let omega_n = omega.normalize()?;
        // The inverse map below the seam is the vertical reflection of a
        // forward structure. Backward orbits of starts below the seam reach
        // it at their own ordinate, while backward orbits of starts above
        // the seam reach it at the seam reflection `1/2 - s` of theirs, so
        // the reflected structure needs the alpha data on both copies of
        // each member interval. Mirrored members that would overlap an
        // original (self-symmetric families) are dropped in favour of the
        // original.
        let alpha_m = alpha.normalize()?;
        let mut lower_members = alpha_m.members.clone();
        for m in mirror_family(alpha)?.members {
            let disjoint = lower_members.iter().all(|e| {
                let above = m.lo.total_cmp(&e.hi) == Ordering::Greater
                    || (m.lo.total_cmp(&e.hi) == Ordering::Equal
                        && !(m.closed_lo && e.closed_hi));
                let below = m.hi.total_cmp(&e.lo) == Ordering::Less
                    || (m.hi.total_cmp(&e.lo) == Ordering::Equal
                        && !(m.closed_hi && e.closed_lo));
                above || below
            });
            if disjoint {
                lower_members.push(m);
            }
        }
        let lower_fam = Family { members: lower_members }.normalize()?;
        let mut seeds = omega_n.interior_breakpoints();
        seeds.extend(lower_fam.interior_breakpoints());
        let grid = crate::profiles::DenseGrid::new(seeds);
        let upper = Structure::new(omega_n, grid.clone(), settings.clone());
        let lower = Structure::new(lower_fam, grid, settings.clone());
        Ok(BuiltSquareMap {
            upper: RwLock::new(upper),
            lower: RwLock::new(lower),
            omega: omega.clone(),
            alpha: alpha.clone(),
            settings,
        })
    }

    pub fn settings(&self) -> &BuildSettings {
        &self.settings
    }

    pub fn families(&self) -> (&Family<S>, &Family<S>) {
        (&self.omega, &self.alpha)
    }

    pub fn stage(&self) -> u32 {
        self.upper.read().unwrap().stage()
    }

    pub fn advance_to_stage(&self, k: u32) -> Result<()> {
        {
            let mut u = self.upper.write().unwrap();
            while u.stage() < k {
                u.advance_stage()?;
            }
        }
        let mut l = self.lower.write().unwrap();
        while l.stage() < k {
            l.advance_stage()?;
        }
        Ok(())
    }

    fn upper_eval(&self, x: &S, h: &Height<S>) -> Result<S> {
        {
            let u = self.upper.read().unwrap();
            if u.covers(h) {
                return u.eval_abscissa(x, h);
            }
        }
        let mut u = self.upper.write().unwrap();
        u.ensure_covers(h)?;
        u.eval_abscissa(x, h)
    }

    fn upper_invert(&self, y: &S, h: &Height<S>) -> Result<S> {
        {
            let u = self.upper.read().unwrap();
            if u.covers(h) {
                return u.invert_abscissa(y, h);
            }
        }
        let mut u = self.upper.write().unwrap();
        u.ensure_covers(h)?;
        u.invert_abscissa(y, h)
    }

    fn lower_eval(&self, x: &S, h: &Height<S>) -> Result<S> {
        {
            let l = self.lower.read().unwrap();
            if l.covers(h) {
                return l.eval_abscissa(x, h);
            }
        }
        let mut l = self.lower.write().unwrap();
        l.ensure_covers(h)?;
        l.eval_abscissa(x, h)
    }

    fn lower_invert(&self, y: &S, h: &Height<S>) -> Result<S> {
        {
            let l = self.lower.read().unwrap();
            if l.covers(h) {
                return l.invert_abscissa(y, h);
            }
        }
        let mut l = self.lower.write().unwrap();
        l.ensure_covers(h)?;
        l.invert_abscissa(y, h)
    }

    fn on_side_edge(&self, x: &S) -> bool {
        let one = S::one();
        x.total_cmp(&one) == Ordering::Equal || x.total_cmp(&(-one)) == Ordering::Equal
    }

    pub fn eval(&self, p: &SquarePoint<S>) -> Result<SquarePoint<S>> {
        match &p.h {
            Height::Top | Height::Bottom => return Ok(p.clone()),
            _ => {}
        }
        if self.on_side_edge(&p.x) {
            return Ok(SquarePoint::new(p.x.clone(), p.h.succ()));
        }
        let seam = Height::level(-1);
        if p.h.cmp_h(&seam) != Ordering::Less {
            let y = self.upper_eval(&p.x, &p.h)?;
            Ok(SquarePoint::new(y, p.h.succ()))
        } else {
            // Lower half: reflect, run the reflected structure backward,
            // reflect back.
            let sigma = p.h.mirror();
            let pre = sigma.pred();
            let y = self.lower_invert(&p.x, &pre)?;
            Ok(SquarePoint::new(y, pre.mirror()))
        }
    }

    pub fn eval_inverse(&self, p: &SquarePoint<S>) -> Result<SquarePoint<S>> {
        match &p.h {
            Height::Top | Height::Bottom => return Ok(p.clone()),
            _ => {}
        }
        if self.on_side_edge(&p.x) {
            return Ok(SquarePoint::new(p.x.clone(), p.h.pred()));
        }
        let zero = Height::zero();
        if p.h.cmp_h(&zero) != Ordering::Less {
            let pre = p.h.pred();
            let x = self.upper_invert(&p.x, &pre)?;
            Ok(SquarePoint::new(x, pre))
        } else {
            let sigma = p.h.mirror();
            let y = self.lower_eval(&p.x, &sigma)?;
            Ok(SquarePoint::new(y, sigma.succ().mirror()))
        }
    }

    /// Check the metric conditions on a `samples x samples` grid per strip
    /// block, through block `k`, plus the top-level condition.
    pub fn check_conditions(&self, k: u32, samples: u32) -> Result<ConditionReport> {
        self.advance_to_stage(k)?;
        let mut blocks = Vec::new();
        let mut ordinate_mismatches = 0usize;
        let n = samples as i64;
        let rs: Vec<S> = (0..n).map(|j| S::ratio(2 * j + 1 - n, n)).collect();
        for m in 1..=k {
            let bound = 2.0 / (2.0 * m as f64 + 3.0);
            let bound_s = S::ratio(2, 2 * m as i64 + 3);
            let mut max_dev = 0.0f64;
            let mut violations = 0usize;
            for a in 0..n {
                let h = if m == 1 {
                    // Block 1 is the seam strip [-1/2, 0].
                    let tau = S::ratio(2 * a + 1, 2 * n);
                    Height::down(0, S::half() * (S::one() + tau))
                } else {
                    let strips = 2 * m as i64 - 1;
                    let numer = a * strips;
                    let off = numer / n;
                    let rem = numer % n;
                    let c = S::one() - S::ratio(rem, 2 * n);
                    let e = ((m - 1) * (m - 1)) as i64 - 1 + off;
                    Height::up(e, c)
                };
                for r in &rs {
                    let p = SquarePoint::new(r.clone(), h.clone());
                    let q = self.eval(&p)?;
                    if q.h.cmp_h(&h.succ()) != Ordering::Equal {
                        ordinate_mismatches += 1;
                    }
                    let dev = (q.x - r.clone()).abs();
                    if dev.total_cmp(&bound_s) != Ordering::Less {
                        violations += 1;
                    }
                    max_dev = max_dev.max(dev.to_f64());
                }
            }
            blocks.push(BlockCheck { block: m, bound, max_dev, violations });
        }
        // Top-level condition on t_{k^2 - 1}.
        let level_bound_s = S::ratio(2, 2 * k as i64 + 5);
        let h = Height::level((k * k) as i64 - 1);
        let mut level_max_dev = 0.0f64;
        let mut level_violations = 0usize;
        for r in &rs {
            let p = SquarePoint::new(r.clone(), h.clone());
            let q = self.eval(&p)?;
            if q.h.cmp_h(&h.succ()) != Ordering::Equal {
                ordinate_mismatches += 1;
            }
            let dev = (q.x - r.clone()).abs();
            if dev.total_cmp(&level_bound_s) != Ordering::Less {
                level_violations += 1;
            }
            level_max_dev = level_max_dev.max(dev.to_f64());
        }
        Ok(ConditionReport {
            blocks,
            level_bound: level_bound_s.to_f64(),
            level_max_dev,
            level_violations,
            ordinate_mismatches,
        })
    }

    /// Anchor arcs of the upper structure as screen-space polylines, for
    /// rendering.
    pub fn anchor_polylines(&self) -> Vec<Vec<(f64, f64)>> {
        let u = self.upper.read().unwrap();
        let mut out = Vec::new();
        for b in u.bands() {
            if let Band::Anchor(ab) = b {
                for arc in &ab.arcs {
                    let line: Vec<(f64, f64)> = ab
                        .knots
                        .iter()
                        .zip(&arc.domain)
                        .map(|(c, x)| {
                            let s = Height::Up { m: ab.m, c: c.clone() }.to_scalar().to_f64();
                            (x.to_f64(), s)
                        })
                        .collect();
                    out.push(line);
                }
            }
        }
        out
    }

    /// Run `f` over the upper structure's anchor bands (testing/reporting).
    pub fn with_upper_bands<T>(&self, f: impl FnOnce(&[Band<S>], &Family<S>) -> T) -> T {
        let u = self.upper.read().unwrap();
        f(u.bands(), &u.family)
    }

    pub fn with_lower_bands<T>(&self, f: impl FnOnce(&[Band<S>], &Family<S>) -> T) -> T {
        let l = self.lower.read().unwrap();
        f(l.bands(), &l.family)
    }
}

// ---------------------------------------------------------------------------
// Serialization (versioned JSON; scalars as decimal or p/q strings).

fn scalar_to_json<S: Scalar>(s: &S) -> Value {
    Value::String(format!("{s}"))
}

fn scalar_from_json<S: Scalar>(v: &Value) -> Result<S> {
    let txt = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(Error::Parse(format!("expected scalar, got {v}"))),
    };
    S::parse(&txt).ok_or_else(|| Error::Parse(format!("bad scalar literal {txt}")))
}

fn height_to_json<S: Scalar>(h: &Height<S>) -> Value {
    match h {
        Height::Top => json!({"kind": "top"}),
        Height::Bottom => json!({"kind": "bottom"}),
        Height::Up { m, c } => json!({"kind": "up", "m": m, "c": scalar_to_json(c)}),
        Height::Down { m, c } => json!({"kind": "down", "m": m, "c": scalar_to_json(c)}),
    }
}

fn height_from_json<S: Scalar>(v: &Value) -> Result<Height<S>> {
    let kind = v["kind"].as_str().ok_or_else(|| Error::Parse("height kind".into()))?;
    match kind {
        "top" => Ok(Height::Top),
        "bottom" => Ok(Height::Bottom),
        "up" | "down" => {
            let m = v["m"].as_u64().ok_or_else(|| Error::Parse("height m".into()))? as u32;
            let c = scalar_from_json(&v["c"])?;
            Ok(if kind == "up" { Height::Up { m, c } } else { Height::Down { m, c } })
        }
        other => Err(Error::Parse(format!("height kind {other}"))),
    }
}

fn pl_to_json<S: Scalar>(m: &MonotonePL1D<S>) -> Value {
    Value::Array(
        m.breakpoints()
            .iter()
            .map(|(x, y)| Value::Array(vec![scalar_to_json(x), scalar_to_json(y)]))
            .collect(),
    )
}

fn pl_from_json<S: Scalar>(v: &Value) -> Result<MonotonePL1D<S>> {
    let arr = v.as_array().ok_or_else(|| Error::Parse("PL map".into()))?;
    let pts = arr
        .iter()
        .map(|p| {
            let pair = p.as_array().filter(|a| a.len() == 2).ok_or_else(|| Error::Parse("PL pair".into()))?;
            Ok((scalar_from_json(&pair[0])?, scalar_from_json(&pair[1])?))
        })
        .collect::<Result<Vec<_>>>()?;
    MonotonePL1D::new(pts)
}

fn envelope_to_json<S: Scalar>(e: &Envelope<S>) -> Value {
    Value::Array(
        e.nodes()
            .iter()
            .map(|n| {
                json!({
                    "x": scalar_to_json(&n.x),
                    "left": scalar_to_json(&n.left),
                    "at": scalar_to_json(&n.at),
                    "right": scalar_to_json(&n.right),
                })
            })
            .collect(),
    )
}

fn envelope_from_json<S: Scalar>(v: &Value) -> Result<Envelope<S>> {
    let arr = v.as_array().ok_or_else(|| Error::Parse("envelope".into()))?;
    let nodes = arr
        .iter()
        .map(|n| {
            Ok(EnvelopeNode {
                x: scalar_from_json(&n["x"])?,
                left: scalar_from_json(&n["left"])?,
                at: scalar_from_json(&n["at"])?,
                right: scalar_from_json(&n["right"])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Envelope::new(nodes)
}

pub fn family_to_json<S: Scalar>(f: &Family<S>) -> Value {
    Value::Array(
        f.members
            .iter()
            .map(|m| {
                json!({
                    "lo": scalar_to_json(&m.lo),
                    "hi": scalar_to_json(&m.hi),
                    "closed_lo": m.closed_lo,
                    "closed_hi": m.closed_hi,
                    "lower": envelope_to_json(&m.profile.lower),
                    "upper": envelope_to_json(&m.profile.upper),
                })
            })
            .collect(),
    )
}

pub fn family_from_json<S: Scalar>(v: &Value) -> Result<Family<S>> {
    let arr = v.as_array().ok_or_else(|| Error::Parse("family".into()))?;
    let members = arr
        .iter()
        .map(|m| {
            Ok(Member {
                lo: scalar_from_json(&m["lo"])?,
                hi: scalar_from_json(&m["hi"])?,
                closed_lo: m["closed_lo"].as_bool().unwrap_or(true),
                closed_hi: m["closed_hi"].as_bool().unwrap_or(true),
                profile: LimitProfile::new(
                    envelope_from_json(&m["lower"])?,
                    envelope_from_json(&m["upper"])?,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Family { members })
}

fn band_to_json<S: Scalar>(b: &Band<S>) -> Value {
    match b {
        Band::Gap(g) => json!({
            "type": "gap",
            "lo": height_to_json(&g.lo),
            "hi": height_to_json(&g.hi),
            "map_lo": pl_to_json(&g.map_lo),
            "map_hi": pl_to_json(&g.map_hi),
        }),
        Band::Anchor(a) => json!({
            "type": "anchor",
            "m": a.m,
            "stage": a.stage,
            "member": a.member,
            "depth": a.depth,
            "knots": Value::Array(a.knots.iter().map(scalar_to_json).collect()),
            "arcs": Value::Array(a.arcs.iter().map(|arc| json!({
                "r": scalar_to_json(&arc.r),
                "domain": Value::Array(arc.domain.iter().map(scalar_to_json).collect()),
                "image": Value::Array(arc.image.iter().map(scalar_to_json).collect()),
            })).collect()),
        }),
    }
}

fn band_from_json<S: Scalar>(v: &Value) -> Result<Band<S>> {
    match v["type"].as_str() {
        Some("gap") => Ok(Band::Gap(GapBand {
            lo: height_from_json(&v["lo"])?,
            hi: height_from_json(&v["hi"])?,
            map_lo: pl_from_json(&v["map_lo"])?,
            map_hi: pl_from_json(&v["map_hi"])?,
        })),
        Some("anchor") => {
            let scalars = |key: &str, o: &Value| -> Result<Vec<S>> {
                o[key]
                    .as_array()
                    .ok_or_else(|| Error::Parse(format!("anchor {key}")))?
                    .iter()
                    .map(scalar_from_json)
                    .collect()
            };
            let m = v["m"].as_u64().ok_or_else(|| Error::Parse("anchor m".into()))? as u32;
            let knots = scalars("knots", v)?;
            let arcs = v["arcs"]
                .as_array()
                .ok_or_else(|| Error::Parse("anchor arcs".into()))?
                .iter()
                .map(|a| {
                    Ok(ArcPair {
                        r: scalar_from_json(&a["r"])?,
                        domain: scalars("domain", a)?,
                        image: scalars("image", a)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Band::Anchor(AnchorBand::new(
                m,
                knots,
                arcs,
                v["stage"].as_u64().unwrap_or(0) as u32,
                v["member"].as_u64().unwrap_or(0) as usize,
                v["depth"].as_u64().unwrap_or(0) as u32,
            )))
        }
        _ => Err(Error::Parse("band type".into())),
    }
}

fn structure_to_json<S: Scalar>(s: &Structure<S>) -> Value {
    json!({
        "k_next": s.k_next,
        "top": height_to_json(&s.top),
        "top_map": pl_to_json(&s.top_map),
        "bands": Value::Array(s.bands.iter().map(band_to_json).collect()),
    })
}

impl<S: Scalar> BuiltSquareMap<S> {
    pub fn to_json(&self) -> Value {
        let u = self.upper.read().unwrap();
        let l = self.lower.read().unwrap();
        json!({
            "format": "rising-square-map",
            "version": 1,
            "mode": if S::EXACT { "exact" } else { "float" },
            "settings": {
                "max_stage": self.settings.max_stage,
                "refine_budget": self.settings.refine_budget,
                "refine_until_stage": self.settings.refine_until_stage,
                "round_bits": self.settings.round_bits,
            },
            "omega": family_to_json(&self.omega),
            "alpha": family_to_json(&self.alpha),
            "upper": structure_to_json(&u),
            "lower": structure_to_json(&l),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        if v["format"].as_str() != Some("rising-square-map") {
            return Err(Error::Parse("unrecognized map file".into()));
        }
        if v["version"].as_u64() != Some(1) {
            return Err(Error::Parse("unsupported map file version".into()));
        }
        let expected_mode = if S::EXACT { "exact" } else { "float" };
        if v["mode"].as_str() != Some(expected_mode) {
            return Err(Error::Parse(format!(
                "map file mode {:?} does not match build mode {expected_mode}",
                v["mode"].as_str().unwrap_or("?")
            )));
        }
        let st = &v["settings"];
        let settings = BuildSettings {
            max_stage: st["max_stage"].as_u64().unwrap_or(64) as u32,
            refine_budget: st["refine_budget"].as_u64().unwrap_or(48) as usize,
            refine_until_stage: st["refine_until_stage"]
                .as_u64()
                .map(|n| n.min(u32::MAX as u64) as u32)
                .unwrap_or(u32::MAX),
            round_bits: st["round_bits"].as_u64().unwrap_or(192) as u32,
        };
        let omega = family_from_json(&v["omega"])?;
        let alpha = family_from_json(&v["alpha"])?;
        let built = BuiltSquareMap::build(&omega, &alpha, settings)?;
        let load = |target: &RwLock<Structure<S>>, src: &Value| -> Result<()> {
            let mut s = target.write().unwrap();
            let bands = src["bands"]
                .as_array()
                .ok_or_else(|| Error::Parse("structure bands".into()))?
                .iter()
                .map(band_from_json)
                .collect::<Result<Vec<_>>>()?;
            if !bands.is_empty() {
                s.bands = bands;
            }
            s.k_next = src["k_next"].as_u64().ok_or_else(|| Error::Parse("k_next".into()))? as u32;
            s.top = height_from_json(&src["top"])?;
            s.top_map = pl_from_json(&src["top_map"])?;
            Ok(())
        };
        load(&built.upper, &v["upper"])?;
        load(&built.lower, &v["lower"])?;
        Ok(built)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pl1d::base_map_eval;
    use num::rational::BigRational;
    type R = BigRational;

    fn r(n: i64, d: i64) -> R {
        <R as Scalar>::ratio(n, d)
    }

    fn identity_families() -> (Family<R>, Family<R>) {
        (Family { members: vec![] }, Family { members: vec![] })
    }

    /// Small two-member test family: the singleton {1/3} pulled to a tent
    /// profile, and the band (1/3, 1/2) pulled to the identity.
    fn test_family() -> Family<R> {
        let tent = LimitProfile::new(
            Envelope::piecewise_linear(vec![(r(-1, 1), r(-1, 1)), (r(0, 1), r(1, 4)), (r(1, 1), r(1, 1))])
                .unwrap(),
            Envelope::piecewise_linear(vec![(r(-1, 1), r(-1, 1)), (r(0, 1), r(1, 2)), (r(1, 1), r(1, 1))])
                .unwrap(),
        )
        .unwrap();
        Family {
            members: vec![
                Member::singleton(r(1, 3), tent),
                Member {
                    lo: r(1, 3),
                    hi: r(1, 2),
                    closed_lo: false,
                    closed_hi: false,
                    profile: LimitProfile::identity(),
                },
            ],
        }
    }

    #[test]
    fn anchor_position_example() {
        // Frozen: stage 1, x0 = 0, target = -3/10, step 3: 0 + 3(-3/10)/9 = -1/10.
        assert_eq!(anchor_position(&r(0, 1), &r(-3, 10), 3, 1), r(-1, 10));
        assert_eq!(anchor_position(&r(1, 2), &r(1, 2), 5, 2), r(1, 2));
    }

    #[test]
    fn identity_profiles_give_product_map() {
        // With identity envelopes every anchor stays put, so the whole map
        // must coincide with (r, s) -> (r, base(s)) wherever it is defined.
        let (om, al) = identity_families();
        let map = BuiltSquareMap::build(&om, &al, BuildSettings::default()).unwrap();
        map.advance_to_stage(4).unwrap();
        for (xn, xd) in [(-3i64, 4i64), (-1, 3), (0, 1), (2, 5), (9, 10)] {
            for (sn, sd) in [(-9i64, 10i64), (-1, 2), (-1, 5), (0, 1), (1, 3), (1, 2), (7, 8), (14, 15)] {
                let p = SquarePoint::from_coords(r(xn, xd), r(sn, sd)).unwrap();
                let q = map.eval(&p).unwrap();
                assert_eq!(q.x, r(xn, xd), "abscissa moved at ({xn}/{xd}, {sn}/{sd})");
                assert_eq!(q.h.to_scalar(), base_map_eval(&r(sn, sd)));
            }
        }
    }

    #[test]
    fn seam_strip_is_vertical_translation() {
        let (om, al) = identity_families();
        let map = BuiltSquareMap::build(&om, &al, BuildSettings::default()).unwrap();
        // Frozen example: (0.3, -0.2) -> (0.3, 0.3).
        let p = SquarePoint::from_coords(r(3, 10), r(-1, 5)).unwrap();
        let q = map.eval(&p).unwrap();
        assert_eq!(q.coords(), (r(3, 10), r(3, 10)));
    }

    #[test]
    fn edges_are_respected() {
        let fam = test_family();
        let map = BuiltSquareMap::build(&fam, &fam, BuildSettings::default()).unwrap();
        // Horizontal edges: fixed pointwise.
        let p = SquarePoint::from_coords(r(7, 10), r(1, 1)).unwrap();
        assert_eq!(map.eval(&p).unwrap(), p);
        let p = SquarePoint::from_coords(r(-2, 5), r(-1, 1)).unwrap();
        assert_eq!(map.eval(&p).unwrap(), p);
        // Vertical edges: the base map acts on the ordinate.
        let p = SquarePoint::from_coords(r(-1, 1), r(9, 10)).unwrap();
        let q = map.eval(&p).unwrap();
        assert_eq!(q.x, r(-1, 1));
        assert_eq!(q.h.to_scalar(), r(19, 20));
    }

    #[test]
    fn ordinate_law_everywhere() {
        let fam = test_family();
        let map = BuiltSquareMap::build(&fam, &fam, BuildSettings::default()).unwrap();
        for (xn, xd) in [(-1i64, 2i64), (1, 7), (3, 5)] {
            for (sn, sd) in [(-13i64, 16i64), (-1, 2), (1, 3), (5, 12), (11, 12), (47, 48)] {
                let p = SquarePoint::from_coords(r(xn, xd), r(sn, sd)).unwrap();
                let q = map.eval(&p).unwrap();
                assert_eq!(q.h, p.h.succ());
                let b = map.eval_inverse(&p).unwrap();
                assert_eq!(b.h, p.h.pred());
            }
        }
    }

    #[test]
    fn round_trip_exact() {
        let fam = test_family();
        let map = BuiltSquareMap::build(&fam, &fam, BuildSettings::default()).unwrap();
        map.advance_to_stage(3).unwrap();
        for (xn, xd) in [(-4i64, 5i64), (-1, 2), (0, 1), (1, 3), (2, 3)] {
            for (sn, sd) in [(-6i64, 7i64), (-1, 2), (-1, 4), (0, 1), (1, 3), (2, 5), (1, 2), (6, 7)] {
                let p = SquarePoint::from_coords(r(xn, xd), r(sn, sd)).unwrap();
                let q = map.eval(&p).unwrap();
                let b = map.eval_inverse(&q).unwrap();
                assert_eq!(b, p, "round trip at ({xn}/{xd}, {sn}/{sd})");
                let q2 = map.eval_inverse(&p).unwrap();
                let b2 = map.eval(&q2).unwrap();
                assert_eq!(b2, p, "reverse round trip at ({xn}/{xd}, {sn}/{sd})");
            }
        }
    }

    #[test]
    fn anchor_recurrence_holds_in_stored_bands() {
        let fam = test_family();
        let map = BuiltSquareMap::build(&fam, &fam, BuildSettings::default()).unwrap();
        map.advance_to_stage(4).unwrap();
        map.with_upper_bands(|bands, family| {
            let mut checked = 0usize;
            // Group anchor bands by (stage, member): depth 0 carries x0.
            for b in bands {
                let Band::Anchor(a) = b else { continue };
                if a.depth != 0 {
                    continue;
                }
                let k = a.stage;
                let branch = if k % 2 == 1 { Branch::Lower } else { Branch::Upper };
                let member = &family.members[a.member];
                for d in 0..=2 * k {
                    let band = bands
                        .iter()
                        .find_map(|bb| match bb {
                            Band::Anchor(x)
                                if x.stage == k && x.member == a.member && x.depth == d =>
                            {
                                Some(x)
                            }
                            _ => None,
                        })
                        .expect("successor band present");
                    for (i, arc) in band.arcs.iter().enumerate() {
                        let x0s = &a.arcs[i].domain;
                        let target = member.profile.target(&arc.r, branch).unwrap();
                        for (p, x0) in x0s.iter().enumerate() {
                            assert_eq!(arc.domain[p], anchor_position(x0, &target, d, k));
                            assert_eq!(arc.image[p], anchor_position(x0, &target, d + 1, k));
                            checked += 1;
                        }
                    }
                }
            }
            assert!(checked > 100, "expected many anchors, checked {checked}");
        });
    }

    #[test]
    fn conditions_clean_at_small_stage() {
        let fam = test_family();
        let map = BuiltSquareMap::build(&fam, &fam, BuildSettings::default()).unwrap();
        let report = map.check_conditions(3, 16).unwrap();
        assert!(report.is_clean(), "{report:?}");
        // Bounds are the expected constants.
        assert_eq!(report.blocks[0].bound, 2.0 / 5.0);
        assert_eq!(report.blocks[1].bound, 2.0 / 7.0);
        assert!((report.level_bound - 2.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn stage_cap_reported() {
        let fam = test_family();
        let settings = BuildSettings { max_stage: 2, ..Default::default() };
        let map = BuiltSquareMap::build(&fam, &fam, settings).unwrap();
        // Strip 9 needs stage 3.
        let p = SquarePoint::new(r(1, 5), Height::level(9));
        match map.eval(&p) {
            Err(Error::CapReached(2)) => {}
            other => panic!("expected CapReached, got {other:?}"),
        }
    }

    #[test]
    fn mirror_clipping() {
        // A member reaching ordinate 0 after reflection gets that level
        // replaced by 1/2.
        let alpha = Family {
            members: vec![Member {
                lo: r(1, 4),
                hi: r(1, 2),
                closed_lo: false,
                closed_hi: true,
                profile: LimitProfile::identity(),
            }],
        };
        let fam = mirror_family(&alpha).unwrap();
        assert_eq!(fam.members.len(), 2);
        assert_eq!(fam.members[0].lo, r(0, 1));
        assert!(!fam.members[0].closed_lo);
        assert_eq!(fam.members[0].hi, r(1, 4));
        assert!(fam.members[1].is_singleton());
        assert_eq!(fam.members[1].lo, r(1, 2));
    }

    #[test]
    fn serialization_round_trip() {
        let fam = test_family();
        let map = BuiltSquareMap::build(&fam, &fam, BuildSettings::default()).unwrap();
        map.advance_to_stage(2).unwrap();
        let blob = map.to_json();
        let restored = BuiltSquareMap::<R>::from_json(&blob).unwrap();
        assert_eq!(restored.stage(), 2);
        for (sn, sd) in [(-3i64, 4i64), (1, 3), (5, 8), (7, 8)] {
            let p = SquarePoint::from_coords(r(1, 5), r(sn, sd)).unwrap();
            assert_eq!(map.eval(&p).unwrap(), restored.eval(&p).unwrap());
        }
        assert_eq!(blob, restored.to_json());
    }
}
