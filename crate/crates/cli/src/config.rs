//! Run configuration: arithmetic mode, build settings, ordinate families,
//! disk shape, and estimation parameters, all from one JSON file.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;

use rising_core::builder::{family_from_json, BuildSettings};
use rising_core::plane::{reference_families, DiskSpec};
use rising_core::profiles::Family;
use rising_core::scalar::Scalar;

pub const MAX_STAGE_ENV: &str = "RISING_ORBITS_MAX_STAGE";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Float,
    Exact,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub mode: Mode,
    settings: BuildSettings,
    omega: Value,
    alpha: Value,
    pub disk: DiskSpec,
    pub block_budget: u32,
    pub edge_tol: f64,
    pub cauchy_tol: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            mode: Mode::Float,
            settings: BuildSettings::default(),
            omega: Value::String("reference".into()),
            alpha: Value::String("reference".into()),
            disk: DiskSpec::Ellipse { a: 0.8, b: 0.4 },
            block_budget: 30,
            edge_tol: 1e-3,
            cauchy_tol: 1e-4,
        }
    }
}

fn parse_disk(v: &Value) -> Result<DiskSpec> {
    let kind = v["type"].as_str().context("disk type missing")?;
    let num = |key: &str| -> Result<f64> {
        v[key].as_f64().with_context(|| format!("disk field {key} missing"))
    };
    let disk = match kind {
        "ellipse" => DiskSpec::Ellipse { a: num("a")?, b: num("b")? },
        "rectangle" => DiskSpec::Rectangle {
            half_width: num("half_width")?,
            half_height: num("half_height")?,
        },
        "polygon" => {
            let verts = v["vertices"]
                .as_array()
                .context("polygon vertices missing")?
                .iter()
                .map(|p| {
                    let pair = p.as_array().filter(|a| a.len() == 2).context("vertex pair")?;
                    Ok((pair[0].as_f64().context("vertex x")?, pair[1].as_f64().context("vertex y")?))
                })
                .collect::<Result<Vec<_>>>()?;
            DiskSpec::Polygon { vertices: verts }
        }
        other => bail!("unknown disk type {other}"),
    };
    disk.validate()?;
    Ok(disk)
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Config::default();
        let Some(path) = path else { return Ok(cfg) };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).context("config is not valid JSON")?;
        if let Some(mode) = v.get("mode") {
            cfg.mode = match mode.as_str() {
                Some("float") => Mode::Float,
                Some("exact") => Mode::Exact,
                other => bail!("mode must be \"float\" or \"exact\", got {other:?}"),
            };
        }
        if let Some(s) = v.get("settings") {
            let d = BuildSettings::default();
            cfg.settings = BuildSettings {
                max_stage: s["max_stage"].as_u64().map(|n| n as u32).unwrap_or(d.max_stage),
                refine_budget: s["refine_budget"]
                    .as_u64()
                    .map(|n| n as usize)
                    .unwrap_or(d.refine_budget),
                refine_until_stage: s["refine_until_stage"]
                    .as_u64()
                    .map(|n| n as u32)
                    .unwrap_or(d.refine_until_stage),
                round_bits: s["round_bits"].as_u64().map(|n| n as u32).unwrap_or(d.round_bits),
            };
        }
        if let Some(f) = v.get("omega") {
            cfg.omega = f.clone();
        }
        if let Some(f) = v.get("alpha") {
            cfg.alpha = f.clone();
        }
        if let Some(d) = v.get("disk") {
            cfg.disk = parse_disk(d)?;
        }
        if let Some(e) = v.get("estimation") {
            if let Some(b) = e["block_budget"].as_u64() {
                cfg.block_budget = b as u32;
            }
            if let Some(t) = e["edge_tol"].as_f64() {
                cfg.edge_tol = t;
            }
            if let Some(t) = e["cauchy_tol"].as_f64() {
                cfg.cauchy_tol = t;
            }
        }
        Ok(cfg)
    }

    /// Build settings with the stage-cap environment override applied.
    pub fn settings(&self) -> BuildSettings {
        let mut s = self.settings.clone();
        if let Ok(v) = std::env::var(MAX_STAGE_ENV) {
            if let Ok(cap) = v.parse::<u32>() {
                s.max_stage = cap;
            }
        }
        s
    }

    fn family<S: Scalar>(v: &Value) -> Result<Family<S>> {
        match v {
            Value::String(name) if name == "reference" => Ok(reference_families::<S>().0),
            Value::String(other) => bail!("unknown family preset {other}"),
            _ => Ok(family_from_json(v)?),
        }
    }

    pub fn families<S: Scalar>(&self) -> Result<(Family<S>, Family<S>)> {
        Ok((Self::family(&self.omega)?, Self::family(&self.alpha)?))
    }
}
