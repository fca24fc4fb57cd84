//! Command-line driver for the rising-orbits construction.

mod config;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use config::{Config, Mode};
use rising_core::builder::BuiltSquareMap;
use rising_core::height::SquarePoint;
use rising_core::limits::{
    classify_orbit, estimate_limit, orbit, orbit_csv, orbit_json, Direction, OrbitClass,
};
use rising_core::plane::{PlanePoint, PlaneSystem, SixPointsMap};
use rising_core::scalar::Scalar;
use rising_core::Rat;

#[derive(Parser)]
#[command(
    name = "rising-orbits",
    about = "Build and explore normally rising square homeomorphisms, their slit quotient, and the induced plane dynamics",
    version
)]
struct Cli {
    /// JSON configuration file; defaults to the built-in reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Forward,
    Backward,
}

impl From<Dir> for Direction {
    fn from(d: Dir) -> Direction {
        match d {
            Dir::Forward => Direction::Forward,
            Dir::Backward => Direction::Backward,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Fmt {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the square map through a stage and write it as JSON.
    Build {
        #[arg(long, default_value_t = 4)]
        stage: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print an orbit of the square map (or of the quotient dynamics).
    Orbit {
        /// Start "x,s" (scalars accept p/q or decimals).
        #[arg(long)]
        square_point: String,
        #[arg(long, default_value_t = 20)]
        steps: u32,
        #[arg(long, value_enum, default_value_t = Dir::Forward)]
        direction: Dir,
        /// Iterate the slit-quotient conjugate instead of the square map.
        #[arg(long)]
        quotient: bool,
        #[arg(long, value_enum, default_value_t = Fmt::Csv)]
        format: Fmt,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the forward or backward limit abscissa block by block.
    Limits {
        #[arg(long)]
        square_point: String,
        #[arg(long)]
        budget: Option<u32>,
        #[arg(long, value_enum, default_value_t = Dir::Forward)]
        direction: Dir,
        #[arg(long)]
        quotient: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify an orbit: fixed, edge-bound, interior limit, or undetermined.
    Classify {
        #[arg(long, conflicts_with = "plane_point")]
        square_point: Option<String>,
        /// Plane coordinates "x,y"; pulled back through the disk exchange and
        /// tangent chart, then classified under the quotient dynamics.
        #[arg(long)]
        plane_point: Option<String>,
        #[arg(long, default_value_t = 400)]
        steps: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the metric conditions through a stage and report violations.
    Verify {
        #[arg(long, default_value_t = 6)]
        stage: u32,
        #[arg(long, default_value_t = 32)]
        samples: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the anchor arcs of the built structure as an SVG.
    Render {
        #[arg(long, default_value_t = 6)]
        stage: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = Config::load(cli.config.as_deref())?;
    match cfg.mode {
        Mode::Float => run::<f64>(&cfg, cli.cmd),
        Mode::Exact => run::<Rat>(&cfg, cli.cmd),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_point<S: Scalar>(text: &str) -> Result<SquarePoint<S>> {
    let (a, b) = text
        .split_once(',')
        .with_context(|| format!("point {text:?} must be \"x,s\""))?;
    let x = S::parse(a.trim()).with_context(|| format!("bad abscissa {a:?}"))?;
    let s = S::parse(b.trim()).with_context(|| format!("bad ordinate {b:?}"))?;
    Ok(SquarePoint::from_coords(x, s)?)
}

fn parse_pair(text: &str) -> Result<(f64, f64)> {
    let (a, b) = text
        .split_once(',')
        .with_context(|| format!("point {text:?} must be \"x,y\""))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn build_map<S: Scalar>(cfg: &Config) -> Result<BuiltSquareMap<S>> {
    let (omega, alpha) = cfg.families::<S>()?;
    Ok(BuiltSquareMap::build(&omega, &alpha, cfg.settings())?)
}

fn limit_json(est: &rising_core::limits::LimitEstimate) -> serde_json::Value {
    let (lo, hi) = est.bounds();
    json!({
        "lo": est.lo,
        "hi": est.hi,
        "residual": est.residual,
        "blocks": est.blocks,
        "bounds": [lo, hi],
        "samples": est.samples,
    })
}

fn class_json(class: &OrbitClass) -> serde_json::Value {
    match class {
        OrbitClass::Fixed => json!({"class": "fixed"}),
        OrbitClass::TopEdgeLimit => json!({"class": "top-edge-limit"}),
        OrbitClass::InteriorLimit(x, s) => {
            json!({"class": "interior-limit", "limit_square": [x, s]})
        }
        OrbitClass::Undetermined => json!({"class": "undetermined"}),
    }
}

fn run<S: Scalar>(cfg: &Config, cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Build { stage, out } => {
            let map = build_map::<S>(cfg)?;
            map.advance_to_stage(stage)?;
            let text = serde_json::to_string_pretty(&map.to_json())? + "\n";
            emit(&Some(out), &text)?;
        }
        Cmd::Orbit { square_point, steps, direction, quotient, format, out } => {
            let map = build_map::<S>(cfg)?;
            let start = parse_point::<S>(&square_point)?;
            let pts = if quotient {
                let g = SixPointsMap::new(map);
                orbit(&g, &start, steps, direction.into())?
            } else {
                orbit(&map, &start, steps, direction.into())?
            };
            let text = match format {
                Fmt::Csv => orbit_csv(&pts),
                Fmt::Json => serde_json::to_string_pretty(&orbit_json(&pts))? + "\n",
            };
            emit(&out, &text)?;
        }
        Cmd::Limits { square_point, budget, direction, quotient, out } => {
            let map = build_map::<S>(cfg)?;
            let start = parse_point::<S>(&square_point)?;
            let budget = budget.unwrap_or(cfg.block_budget);
            let est = if quotient {
                let g = SixPointsMap::new(map);
                estimate_limit(&g, &start, direction.into(), budget)?
            } else {
                estimate_limit(&map, &start, direction.into(), budget)?
            };
            let text = serde_json::to_string_pretty(&limit_json(&est))? + "\n";
            emit(&out, &text)?;
        }
        Cmd::Classify { square_point, plane_point, steps, out } => {
            let map = build_map::<S>(cfg)?;
            let text = match (square_point, plane_point) {
                (Some(sp), None) => {
                    let start = parse_point::<S>(&sp)?;
                    let class = classify_orbit(&map, &start, steps, cfg.edge_tol, cfg.cauchy_tol)?;
                    serde_json::to_string_pretty(&class_json(&class))? + "\n"
                }
                (None, Some(pp)) => {
                    let (x, y) = parse_pair(&pp)?;
                    let system = PlaneSystem::new(map, cfg.disk.clone())?;
                    let start = system.pull_back(x, y)?;
                    let class = system.classify(&start, steps, cfg.edge_tol, cfg.cauchy_tol)?;
                    let mut v = class_json(&class);
                    if let OrbitClass::InteriorLimit(lx, ls) = class {
                        let lp = system.push_forward(&SquarePoint::from_coords(
                            S::from_f64(lx),
                            S::from_f64(ls),
                        )?);
                        if let PlanePoint::At { x, y } = lp {
                            v["limit_plane"] = json!([x, y]);
                        }
                    }
                    serde_json::to_string_pretty(&v)? + "\n"
                }
                _ => bail!("classify needs exactly one of --square-point or --plane-point"),
            };
            emit(&out, &text)?;
        }
        Cmd::Verify { stage, samples, out } => {
            let map = build_map::<S>(cfg)?;
            let report = map.check_conditions(stage, samples)?;
            let mut text = String::new();
            for b in &report.blocks {
                text.push_str(&format!(
                    "block {}: bound {:.6} max_dev {:.6} violations {}\n",
                    b.block, b.bound, b.max_dev, b.violations
                ));
            }
            text.push_str(&format!(
                "level: bound {:.6} max_dev {:.6} violations {}\n",
                report.level_bound, report.level_max_dev, report.level_violations
            ));
            text.push_str(&format!("ordinate mismatches: {}\n", report.ordinate_mismatches));
            text.push_str(if report.is_clean() { "RESULT: PASS\n" } else { "RESULT: FAIL\n" });
            emit(&out, &text)?;
            if !report.is_clean() {
                std::process::exit(1);
            }
        }
        Cmd::Render { stage, out } => {
            let map = build_map::<S>(cfg)?;
            map.advance_to_stage(stage)?;
            let text = render_svg(&map.anchor_polylines());
            emit(&Some(out), &text)?;
        }
    }
    Ok(())
}

fn render_svg(lines: &[Vec<(f64, f64)>]) -> String {
    const SIZE: f64 = 1024.0;
    let px = |x: f64| (x + 1.0) / 2.0 * SIZE;
    let py = |s: f64| (1.0 - s) / 2.0 * SIZE;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\" stroke=\"black\" stroke-width=\"1\"/>\n"
    ));
    // Seam and the mid levels, for orientation.
    for s in [-0.5, 0.0, 0.5] {
        svg.push_str(&format!(
            "  <line x1=\"0\" y1=\"{0:.2}\" x2=\"{SIZE}\" y2=\"{0:.2}\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n",
            py(s)
        ));
    }
    for line in lines {
        if line.len() == 1 {
            let (x, s) = line[0];
            svg.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"0.7\" fill=\"#1f6fb4\"/>\n",
                px(x),
                py(s)
            ));
            continue;
        }
        let pts: Vec<String> =
            line.iter().map(|&(x, s)| format!("{:.2},{:.2}", px(x), py(s))).collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"#1f6fb4\" stroke-width=\"0.6\"/>\n",
            pts.join(" ")
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
