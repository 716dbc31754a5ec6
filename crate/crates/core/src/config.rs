//! Experiment configuration: a flat key-value schema read from a text file
//! plus command-line overrides, validated once and embedded verbatim in
//! every output for reproducibility.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// All experiment parameters. Every field has a default; the effective
/// values (after file and overrides) are recorded in each report.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Sphere-factor dimension parameter `n` of the product.
    pub n: u32,
    /// Circle length `L`.
    pub l: f64,
    /// Sweep range for the bifurcation subcommand.
    pub l_min: f64,
    pub l_max: f64,
    pub l_steps: usize,
    /// Collocation nodes.
    pub grid_n: usize,
    pub seed: u64,
    pub out_dir: PathBuf,

    pub newton_tol: f64,
    pub kernel_tol: f64,
    pub coeff_tol: f64,
    pub residual_tol: f64,

    /// Radius window for the exponent experiment.
    pub radius_min: f64,
    pub radius_max: f64,
    pub radius_count: usize,
    pub direction_count: usize,
    /// `lowmode` (softest eigenpair plus tail), `random`, or `eigen`.
    pub direction_mix: String,
    pub direction_tail: f64,

    /// Sphere radii for the Taylor fit of the reduced energy.
    pub taylor_radii: Vec<f64>,
    pub j_max: usize,
    pub taylor_directions: usize,
    /// Trust radius of the graph-map Newton in kernel coordinates.
    pub trust_radius: f64,

    /// Parameter grid for the superquadratic family.
    pub sq_t_min: f64,
    pub sq_t_max: f64,
    pub sq_t_count: usize,
    pub gamma_grid: Vec<f64>,

    /// Growth-check polynomial: `fitted`, `quad`, or `quartic`.
    pub loja_poly: String,
    pub loja_radius: f64,
    pub loja_density: usize,

    /// Dump eigenfields alongside the spectrum.
    pub dump_eigenfields: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 3,
            l: 1.0,
            l_min: 0.8,
            l_max: 1.2,
            l_steps: 41,
            grid_n: 256,
            seed: 0,
            out_dir: PathBuf::from("out"),
            newton_tol: 2.5e-11,
            kernel_tol: 1e-7,
            coeff_tol: 1e-6,
            residual_tol: 1e-8,
            radius_min: 1e-3,
            radius_max: 5e-2,
            radius_count: 12,
            direction_count: 8,
            direction_mix: "lowmode".to_string(),
            direction_tail: 0.2,
            taylor_radii: vec![0.02, 0.03, 0.045, 0.0675, 0.1],
            j_max: 6,
            taylor_directions: 24,
            trust_radius: 0.1,
            sq_t_min: 0.005,
            sq_t_max: 0.05,
            sq_t_count: 10,
            gamma_grid: vec![0.5, 1.0, 1.5, 1.9],
            loja_poly: "fitted".to_string(),
            loja_radius: 0.5,
            loja_density: 81,
            dump_eigenfields: false,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, val: &str) -> Result<T> {
    val.trim()
        .parse()
        .map_err(|_| Error::config(format!("cannot parse {key} = {val:?}")))
}

fn parse_list(key: &str, val: &str) -> Result<Vec<f64>> {
    val.split(',').map(|s| parse_as::<f64>(key, s)).collect()
}

impl ExperimentConfig {
    /// Reads `KEY = VALUE` lines; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected KEY = VALUE", lineno + 1))
            })?;
            cfg.set(key.trim(), val.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one override.
    pub fn set(&mut self, key: &str, val: &str) -> Result<()> {
        match key {
            "n" => self.n = parse_as(key, val)?,
            "l" => self.l = parse_as(key, val)?,
            "l_min" => self.l_min = parse_as(key, val)?,
            "l_max" => self.l_max = parse_as(key, val)?,
            "l_steps" => self.l_steps = parse_as(key, val)?,
            "grid_n" => self.grid_n = parse_as(key, val)?,
            "seed" => self.seed = parse_as(key, val)?,
            "out_dir" => self.out_dir = PathBuf::from(val),
            "newton_tol" => self.newton_tol = parse_as(key, val)?,
            "kernel_tol" => self.kernel_tol = parse_as(key, val)?,
            "coeff_tol" => self.coeff_tol = parse_as(key, val)?,
            "residual_tol" => self.residual_tol = parse_as(key, val)?,
            "radius_min" => self.radius_min = parse_as(key, val)?,
            "radius_max" => self.radius_max = parse_as(key, val)?,
            "radius_count" => self.radius_count = parse_as(key, val)?,
            "direction_count" => self.direction_count = parse_as(key, val)?,
            "direction_mix" => self.direction_mix = val.to_string(),
            "direction_tail" => self.direction_tail = parse_as(key, val)?,
            "taylor_radii" => self.taylor_radii = parse_list(key, val)?,
            "j_max" => self.j_max = parse_as(key, val)?,
            "taylor_directions" => self.taylor_directions = parse_as(key, val)?,
            "trust_radius" => self.trust_radius = parse_as(key, val)?,
            "sq_t_min" => self.sq_t_min = parse_as(key, val)?,
            "sq_t_max" => self.sq_t_max = parse_as(key, val)?,
            "sq_t_count" => self.sq_t_count = parse_as(key, val)?,
            "gamma_grid" => self.gamma_grid = parse_list(key, val)?,
            "loja_poly" => self.loja_poly = val.to_string(),
            "loja_radius" => self.loja_radius = parse_as(key, val)?,
            "loja_density" => self.loja_density = parse_as(key, val)?,
            "dump_eigenfields" => self.dump_eigenfields = parse_as(key, val)?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::config(format!("n must be >= 3, got {}", self.n)));
        }
        if self.l <= 0.0 || self.l.is_nan() {
            return Err(Error::config(format!("l must be positive, got {}", self.l)));
        }
        if self.l_min <= 0.0 || self.l_min.is_nan() || self.l_max <= self.l_min {
            return Err(Error::config(format!(
                "invalid sweep range [{}, {}]",
                self.l_min, self.l_max
            )));
        }
        if self.l_steps < 2 {
            return Err(Error::config("l_steps must be at least 2".to_string()));
        }
        if self.grid_n < 8 || !self.grid_n.is_multiple_of(2) {
            return Err(Error::config(format!(
                "grid_n must be even and >= 8, got {}",
                self.grid_n
            )));
        }
        for (name, v) in [
            ("newton_tol", self.newton_tol),
            ("kernel_tol", self.kernel_tol),
            ("coeff_tol", self.coeff_tol),
            ("residual_tol", self.residual_tol),
            ("radius_min", self.radius_min),
            ("radius_max", self.radius_max),
            ("trust_radius", self.trust_radius),
            ("sq_t_min", self.sq_t_min),
            ("sq_t_max", self.sq_t_max),
            ("loja_radius", self.loja_radius),
        ] {
            if v <= 0.0 || v.is_nan() || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.direction_tail < 0.0 {
            return Err(Error::config(
                "direction_tail must be nonnegative".to_string(),
            ));
        }
        if self.radius_max <= self.radius_min {
            return Err(Error::config(
                "radius_max must exceed radius_min".to_string(),
            ));
        }
        if self.radius_count < 2 || self.sq_t_count < 2 {
            return Err(Error::config(
                "radius_count and sq_t_count must be at least 2".to_string(),
            ));
        }
        if self.taylor_radii.is_empty() || self.taylor_radii.iter().any(|r| *r <= 0.0 || r.is_nan())
        {
            return Err(Error::config("taylor_radii must be positive".to_string()));
        }
        if self.j_max < 2 {
            return Err(Error::config("j_max must be at least 2".to_string()));
        }
        if !matches!(self.direction_mix.as_str(), "lowmode" | "random" | "eigen") {
            return Err(Error::config(format!(
                "direction_mix must be lowmode|random|eigen, got {:?}",
                self.direction_mix
            )));
        }
        if !matches!(self.loja_poly.as_str(), "fitted" | "quad" | "quartic") {
            return Err(Error::config(format!(
                "loja_poly must be fitted|quad|quartic, got {:?}",
                self.loja_poly
            )));
        }
        Ok(())
    }

    /// The effective configuration as an ordered string map, as embedded in
    /// reports.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let fl = |v: f64| format!("{v:e}");
        m.insert("n".into(), self.n.to_string());
        m.insert("l".into(), fl(self.l));
        m.insert("l_min".into(), fl(self.l_min));
        m.insert("l_max".into(), fl(self.l_max));
        m.insert("l_steps".into(), self.l_steps.to_string());
        m.insert("grid_n".into(), self.grid_n.to_string());
        m.insert("seed".into(), self.seed.to_string());
        // out_dir is deliberately not embedded: it does not affect results,
        // and reruns into a different directory must stay byte-identical
        m.insert("newton_tol".into(), fl(self.newton_tol));
        m.insert("kernel_tol".into(), fl(self.kernel_tol));
        m.insert("coeff_tol".into(), fl(self.coeff_tol));
        m.insert("residual_tol".into(), fl(self.residual_tol));
        m.insert("radius_min".into(), fl(self.radius_min));
        m.insert("radius_max".into(), fl(self.radius_max));
        m.insert("radius_count".into(), self.radius_count.to_string());
        m.insert("direction_count".into(), self.direction_count.to_string());
        m.insert("direction_mix".into(), self.direction_mix.clone());
        m.insert("direction_tail".into(), fl(self.direction_tail));
        m.insert(
            "taylor_radii".into(),
            self.taylor_radii
                .iter()
                .map(|r| format!("{r:e}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert("j_max".into(), self.j_max.to_string());
        m.insert(
            "taylor_directions".into(),
            self.taylor_directions.to_string(),
        );
        m.insert("trust_radius".into(), fl(self.trust_radius));
        m.insert("sq_t_min".into(), fl(self.sq_t_min));
        m.insert("sq_t_max".into(), fl(self.sq_t_max));
        m.insert("sq_t_count".into(), self.sq_t_count.to_string());
        m.insert(
            "gamma_grid".into(),
            self.gamma_grid
                .iter()
                .map(|g| format!("{g:e}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert("loja_poly".into(), self.loja_poly.clone());
        m.insert("loja_radius".into(), fl(self.loja_radius));
        m.insert("loja_density".into(), self.loja_density.to_string());
        m.insert("dump_eigenfields".into(), self.dump_eigenfields.to_string());
        m
    }

    /// Log-spaced radius grid of the exponent experiment.
    pub fn radius_grid(&self) -> Vec<f64> {
        log_grid(self.radius_min, self.radius_max, self.radius_count)
    }

    /// Descending parameter grid of the superquadratic family.
    pub fn sq_t_grid(&self) -> Vec<f64> {
        let mut g = log_grid(self.sq_t_min, self.sq_t_max, self.sq_t_count);
        g.reverse();
        g
    }
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}
