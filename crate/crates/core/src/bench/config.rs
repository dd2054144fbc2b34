//! Flat `key = value` configuration covering every method.
//!
//! Keys are `section.name`. A line `[section]` sets a prefix for the keys
//! that follow it, so `[som]` then `rows = 40` is the same as `som.rows = 40`.
//! `#` starts a comment.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::d2spline::{D2Config, TraceEstimator};
use crate::error::{Error, Result};
use crate::geometry::NormalOrientation;
use crate::implicit::{BpaConfig, PoissonConfig, SheetArea};
use crate::local::LocalConfig;
use crate::som::{NeighborhoodKernel, SomConfig};
use crate::spline::{AreaMode, SplineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Pca,
    Outward,
}

impl From<Orientation> for NormalOrientation {
    fn from(o: Orientation) -> Self {
        match o {
            Orientation::Pca => NormalOrientation::PcaAxis,
            Orientation::Outward => NormalOrientation::Outward,
        }
    }
}

/// Steps shared by every method before reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub denoise: bool,
    pub outlier_k: usize,
    pub std_ratio: f64,
    /// PCA alignment followed by bounding-rectangle alignment.
    pub align: bool,
    pub normal_k: usize,
    pub normal_orientation: Orientation,
    /// Use normals stored in the input file instead of estimating them.
    pub use_input_normals: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            denoise: true,
            outlier_k: 20,
            std_ratio: 2.0,
            align: true,
            normal_k: 15,
            normal_orientation: Orientation::Pca,
            use_input_normals: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct BenchConfig {
    pub preprocess: PreprocessConfig,
    pub spline: SplineConfig,
    pub d2s: D2Config,
    pub local: LocalConfig,
    pub poisson: PoissonConfig,
    pub bpa: BpaConfig,
    pub som: SomConfig,
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parameter(format!("cannot parse {key} = {value:?}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Parameter(format!("{key} expects a boolean, got {value:?}"))),
    }
}

fn choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T> {
    let lower = value.to_ascii_lowercase();
    options.iter().find(|(name, _)| *name == lower).map(|&(_, v)| v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|o| o.0).collect();
        Error::Parameter(format!("{key} must be one of {names:?}, got {value:?}"))
    })
}

fn optional_f64(key: &str, value: &str) -> Result<Option<f64>> {
    if value.eq_ignore_ascii_case("auto") || value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

impl BenchConfig {
    /// Applies one setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let k = key.trim();
        let pre = &mut self.preprocess;
        let sp = &mut self.spline;
        let d2 = &mut self.d2s;
        let lo = &mut self.local;
        let po = &mut self.poisson;
        let som = &mut self.som;
        match k {
            "preprocess.denoise" => pre.denoise = flag(k, v)?,
            "preprocess.outlier_k" => pre.outlier_k = num(k, v)?,
            "preprocess.std_ratio" => pre.std_ratio = num(k, v)?,
            "preprocess.align" => pre.align = flag(k, v)?,
            "preprocess.normal_k" => pre.normal_k = num(k, v)?,
            "preprocess.normal_orientation" => {
                pre.normal_orientation = choice(k, v, &[("pca", Orientation::Pca), ("outward", Orientation::Outward)])?
            }
            "preprocess.use_input_normals" => pre.use_input_normals = flag(k, v)?,

            "spline.degree_u" => sp.degree_u = num(k, v)?,
            "spline.degree_v" => sp.degree_v = num(k, v)?,
            "spline.grid_u" => sp.grid_u = num(k, v)?,
            "spline.grid_v" => sp.grid_v = num(k, v)?,
            "spline.ctrl_u" => sp.ctrl_u = num(k, v)?,
            "spline.ctrl_v" => sp.ctrl_v = num(k, v)?,
            "spline.quadrature_res" => sp.quadrature_res = num(k, v)?,
            "spline.mesh_res" => sp.mesh_res = num(k, v)?,
            "spline.area_mode" => {
                sp.area_mode = choice(k, v, &[("trimmed", AreaMode::Trimmed), ("untrimmed", AreaMode::Untrimmed)])?
            }

            "d2s.alpha" => d2.alpha = optional_f64(k, v)?,
            "d2s.alpha_grid_min" => d2.alpha_grid_min = num(k, v)?,
            "d2s.alpha_grid_max" => d2.alpha_grid_max = num(k, v)?,
            "d2s.alpha_grid_count" => d2.alpha_grid_count = num(k, v)?,
            "d2s.max_centers" => d2.max_centers = num(k, v)?,
            "d2s.trace" => {
                d2.trace = choice(k, v, &[("exact", TraceEstimator::Exact), ("hutchinson", TraceEstimator::Hutchinson)])?
            }
            "d2s.trace_probes" => d2.trace_probes = num(k, v)?,
            "d2s.trace_estimator_seed" => d2.trace_estimator_seed = num(k, v)?,
            "d2s.mesh_res" => d2.mesh_res = num(k, v)?,

            "mls.bandwidth_mult" => lo.bandwidth_mult = num(k, v)?,
            "mls.degree" => lo.mls_degree = num(k, v)?,
            "loess.span_frac" => lo.span_frac = num(k, v)?,
            "loess.degree" => lo.loess_degree = num(k, v)?,
            "local.knn_min" => lo.knn_min = num(k, v)?,

            "poisson.depth" => po.depth = num(k, v)?,
            "poisson.max_depth" => po.max_depth = num(k, v)?,
            "poisson.samples_per_node" => po.samples_per_node = num(k, v)?,
            "poisson.iso" => po.iso = num(k, v)?,
            "poisson.trim_mult" => po.trim_mult = num(k, v)?,
            "poisson.pad_frac" => po.pad_frac = num(k, v)?,
            "poisson.rtol" => po.rtol = num(k, v)?,
            "poisson.sheet_area" => {
                po.sheet_area = choice(
                    k,
                    v,
                    &[("facing", SheetArea::Facing), ("half", SheetArea::Half), ("trimmed", SheetArea::Trimmed)],
                )?
            }

            "bpa.radius_mult" => self.bpa.radius_mult = num(k, v)?,

            "som.rows" => som.rows = num(k, v)?,
            "som.cols" => som.cols = num(k, v)?,
            "som.epochs" => som.epochs = num(k, v)?,
            "som.alpha0" => som.alpha0 = num(k, v)?,
            "som.alpha1" => som.alpha1 = num(k, v)?,
            "som.sigma0" => som.sigma0 = optional_f64(k, v)?,
            "som.sigma1" => som.sigma1 = num(k, v)?,
            "som.seed" => som.seed = num(k, v)?,
            "som.kernel" => {
                som.kernel = choice(
                    k,
                    v,
                    &[("gaussian", NeighborhoodKernel::Gaussian), ("hard", NeighborhoodKernel::Hard)],
                )?
            }
            _ => return Err(Error::Parameter(format!("unknown config key {k:?}"))),
        }
        Ok(())
    }

    /// Applies every line of a config text on top of `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Format { line: i + 1, message: format!("expected key = value, got {line:?}") });
            };
            let key = key.trim();
            let full = if section.is_empty() || key.contains('.') { key.to_string() } else { format!("{section}.{key}") };
            self.set(&full, value).map_err(|e| Error::Format { line: i + 1, message: e.to_string() })?;
        }
        Ok(())
    }

    /// Applies comma-separated `key=value` pairs.
    pub fn apply_pairs(&mut self, pairs: &str) -> Result<()> {
        for pair in pairs.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("expected key=value, got {pair:?}")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
