//! Orbit iteration and limit-set estimation.
//!
//! Orbits of a normally rising map climb one strip per step, so limit
//! behaviour is read off block by block: block `b` covers strips `b^2`
//! through `(b+1)^2 - 1` (one construction stage). The abscissa recorded at
//! the end of each block converges to the prescribed envelope value, with the
//! residual after `B` blocks bounded by the anchor step fraction
//! `12 / (2B + 7)`.

use serde_json::{json, Value};

use crate::builder::BuiltSquareMap;
use crate::error::{Error, Result};
use crate::height::{Height, SquarePoint};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Anything that can step a square point one strip up or down.
pub trait SquareDynamics<S: Scalar> {
    fn step(&self, p: &SquarePoint<S>, dir: Direction) -> Result<SquarePoint<S>>;
}

impl<S: Scalar> SquareDynamics<S> for BuiltSquareMap<S> {
    fn step(&self, p: &SquarePoint<S>, dir: Direction) -> Result<SquarePoint<S>> {
        match dir {
            Direction::Forward => self.eval(p),
            Direction::Backward => self.eval_inverse(p),
        }
    }
}

/// The orbit segment `p, f(p), ..., f^steps(p)` (or backward). Stops early
/// and returns the partial orbit if the stage cap is hit.
pub fn orbit<S: Scalar, D: SquareDynamics<S>>(
    dynamics: &D,
    start: &SquarePoint<S>,
    steps: u32,
    dir: Direction,
) -> Result<Vec<SquarePoint<S>>> {
    let mut out = Vec::with_capacity(steps as usize + 1);
    out.push(start.clone());
    for _ in 0..steps {
        let next = match dynamics.step(out.last().unwrap(), dir) {
            Ok(p) => p,
            Err(Error::CapReached(_)) => break,
            Err(e) => return Err(e),
        };
        out.push(next);
    }
    Ok(out)
}

/// Depth index of an ordinate in the travel direction: the strip count from
/// the seam, mirrored for backward travel so both directions read as
/// increasing depth.
fn travel_depth<S: Scalar>(h: &Height<S>, dir: Direction) -> Option<i64> {
    match dir {
        Direction::Forward => h.strip(),
        Direction::Backward => h.mirror().strip(),
    }
}

fn block_of(strip: i64) -> Option<u32> {
    if strip < 1 {
        return None;
    }
    let mut b = (strip as f64).sqrt() as i64;
    while (b + 1) * (b + 1) <= strip {
        b += 1;
    }
    while b * b > strip {
        b -= 1;
    }
    Some(b as u32)
}

#[derive(Clone, Debug)]
pub struct LimitEstimate {
    /// Min and max of the block-end abscissae over the final quarter of the
    /// completed blocks.
    pub lo: f64,
    pub hi: f64,
    /// Convergence residual for the completed block count.
    pub residual: f64,
    pub blocks: u32,
    /// Abscissa recorded at the end of each completed block, in block order.
    pub samples: Vec<f64>,
}

impl LimitEstimate {
    pub fn bounds(&self) -> (f64, f64) {
        (self.lo - self.residual, self.hi + self.residual)
    }

    pub fn contains(&self, target: f64) -> bool {
        let (a, b) = self.bounds();
        a <= target && target <= b
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

pub fn residual_after(blocks: u32) -> f64 {
    12.0 / (2.0 * blocks as f64 + 7.0)
}

/// Estimate the limit abscissa of the forward (omega) or backward (alpha)
/// orbit by running through `block_budget` blocks. Stops early at the stage
/// cap and reports the residual for the blocks actually completed.
pub fn estimate_limit<S: Scalar, D: SquareDynamics<S>>(
    dynamics: &D,
    start: &SquarePoint<S>,
    dir: Direction,
    block_budget: u32,
) -> Result<LimitEstimate> {
    if block_budget == 0 {
        return Err(Error::Validation("block budget must be positive".into()));
    }
    let mut samples: Vec<f64> = Vec::with_capacity(block_budget as usize);
    let mut cur = start.clone();
    let mut cur_block = travel_depth(&cur.h, dir).and_then(block_of);
    loop {
        let next = match dynamics.step(&cur, dir) {
            Ok(p) => p,
            Err(Error::CapReached(_)) => break,
            Err(e) => return Err(e),
        };
        if next == cur {
            // Horizontal-edge fixed point: the orbit is a single point.
            samples.push(cur.x.to_f64());
            break;
        }
        let next_block = travel_depth(&next.h, dir).and_then(block_of);
        if let (Some(b), Some(nb)) = (cur_block, next_block) {
            if nb > b {
                // cur was the last point of block b.
                samples.push(cur.x.to_f64());
                if b >= block_budget {
                    break;
                }
            }
        }
        cur_block = next_block;
        cur = next;
    }
    if samples.is_empty() {
        return Err(Error::Validation("orbit completed no blocks within the cap".into()));
    }
    let blocks = samples.len() as u32;
    let tail = &samples[samples.len() - (samples.len() / 4).max(1)..];
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(LimitEstimate { lo, hi, residual: residual_after(blocks), blocks, samples })
}

#[derive(Clone, Debug, PartialEq)]
pub enum OrbitClass {
    /// The point is fixed.
    Fixed,
    /// The forward orbit converges to the top edge with rising ordinates.
    TopEdgeLimit,
    /// The tail is Cauchy around an interior point (given in coordinates).
    InteriorLimit(f64, f64),
    Undetermined,
}

/// Classify the forward orbit from its tail window. Top-edge convergence is
/// checked first: bounded orbits may linger near the top transiently, but
/// only an edge-bound tail keeps strictly rising ordinates above `1 -
/// edge_tol`.
pub fn classify_orbit<S: Scalar, D: SquareDynamics<S>>(
    dynamics: &D,
    start: &SquarePoint<S>,
    step_budget: u32,
    edge_tol: f64,
    cauchy_tol: f64,
) -> Result<OrbitClass> {
    let first = dynamics.step(start, Direction::Forward)?;
    if first == *start {
        return Ok(OrbitClass::Fixed);
    }
    let pts = orbit(dynamics, start, step_budget, Direction::Forward)?;
    let window = 16.min(pts.len());
    let tail: Vec<(f64, f64)> = pts[pts.len() - window..].iter().map(|p| p.coords_f64()).collect();
    if window < 2 {
        return Ok(OrbitClass::Undetermined);
    }
    let edge_bound = tail.iter().all(|&(_, s)| s > 1.0 - edge_tol)
        && tail.windows(2).all(|w| w[1].1 >= w[0].1);
    if edge_bound {
        return Ok(OrbitClass::TopEdgeLimit);
    }
    let (lx, ls) = tail[tail.len() - 1];
    let cauchy = tail
        .iter()
        .all(|&(x, s)| ((x - lx).powi(2) + (s - ls).powi(2)).sqrt() < cauchy_tol);
    if cauchy && ls < 1.0 - edge_tol {
        return Ok(OrbitClass::InteriorLimit(lx, ls));
    }
    Ok(OrbitClass::Undetermined)
}

/// CSV rendering of an orbit: `step,x,s,strip` with deterministic formatting.
pub fn orbit_csv<S: Scalar>(points: &[SquarePoint<S>]) -> String {
    let mut out = String::from("step,x,s,strip\n");
    for (i, p) in points.iter().enumerate() {
        let (x, s) = p.coords_f64();
        let strip = p.h.strip().map(|n| n.to_string()).unwrap_or_default();
        out.push_str(&format!("{i},{x:.17},{s:.17},{strip}\n"));
    }
    out
}

pub fn orbit_json<S: Scalar>(points: &[SquarePoint<S>]) -> Value {
    Value::Array(
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (x, s) = p.coords_f64();
                json!({
                    "step": i,
                    "x": format!("{}", p.x),
                    "s": format!("{}", p.h.to_scalar()),
                    "x_f64": x,
                    "s_f64": s,
                    "strip": p.h.strip(),
                })
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::BuildSettings;
    use crate::profiles::{Envelope, Family, LimitProfile, Member};

    fn point(x: f64, s: f64) -> SquarePoint<f64> {
        SquarePoint::from_coords(x, s).unwrap()
    }

    fn identity_map() -> BuiltSquareMap<f64> {
        let empty = Family { members: vec![] };
        BuiltSquareMap::build(&empty, &empty, BuildSettings::default()).unwrap()
    }

    fn tent_map() -> BuiltSquareMap<f64> {
        let tent = LimitProfile::new(
            Envelope::piecewise_linear(vec![(-1.0, -1.0), (0.0, 0.25), (1.0, 1.0)]).unwrap(),
            Envelope::piecewise_linear(vec![(-1.0, -1.0), (0.0, 0.5), (1.0, 1.0)]).unwrap(),
        )
        .unwrap();
        let fam = Family { members: vec![Member::singleton(0.5, tent)] };
        BuiltSquareMap::build(&fam, &fam, BuildSettings::default()).unwrap()
    }

    #[test]
    fn identity_orbit_keeps_abscissa() {
        let map = identity_map();
        let est = estimate_limit(&map, &point(0.3, 0.4), Direction::Forward, 4).unwrap();
        assert_eq!(est.blocks, 4);
        assert_eq!((est.lo, est.hi), (0.3, 0.3));
        assert_eq!(est.residual, 12.0 / 15.0);
        let back = estimate_limit(&map, &point(0.3, 0.4), Direction::Backward, 4).unwrap();
        assert!((back.lo - 0.3).abs() < 1e-12 && (back.hi - 0.3).abs() < 1e-12);
    }

    #[test]
    fn blocks_align_with_stage_levels() {
        // Starting exactly on the seam, block b's last point sits one strip
        // below level t_{(b+1)^2 - 1}.
        let map = identity_map();
        let start = SquarePoint::new(0.0, Height::zero());
        let pts = orbit(&map, &start, 30, Direction::Forward).unwrap();
        let strips: Vec<i64> = pts.iter().map(|p| p.h.strip().unwrap()).collect();
        assert_eq!(strips[0], 1);
        assert_eq!(strips[30], 31);
    }

    #[test]
    fn tent_orbit_converges_into_envelope_range() {
        let map = tent_map();
        let start = point(0.0, 0.5);
        let est = estimate_limit(&map, &start, Direction::Forward, 8).unwrap();
        // Alternating envelope targets at r = 0 are 1/4 and 1/2; after a few
        // blocks the samples must be strictly inside (0, 1).
        assert!(est.lo > 0.0 && est.hi < 1.0, "{est:?}");
        assert!(est.lo <= est.hi);
        assert!(est.samples.len() == 8);
        // Later samples are pulled away from the start toward the targets.
        assert!(est.samples[7] > 0.1, "{:?}", est.samples);
    }

    #[test]
    fn classification_modes() {
        let map = identity_map();
        // Horizontal edge points are fixed.
        let top = SquarePoint::new(0.2, Height::<f64>::Top);
        assert_eq!(classify_orbit(&map, &top, 10, 1e-3, 1e-4).unwrap(), OrbitClass::Fixed);
        // Interior points climb to the top edge.
        assert_eq!(
            classify_orbit(&map, &point(0.3, 0.4), 400, 1e-3, 1e-4).unwrap(),
            OrbitClass::TopEdgeLimit
        );
    }

    #[test]
    fn csv_shape() {
        let map = identity_map();
        let pts = orbit(&map, &point(0.25, 0.0), 3, Direction::Forward).unwrap();
        let csv = orbit_csv(&pts);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "step,x,s,strip");
        assert!(lines[1].starts_with("0,0.25"));
    }
}
