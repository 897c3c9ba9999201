//! Fit configuration, loadable from a flat `key = value` file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselearners::BasisOptions;
use crate::boosting::CwbOptions;
use crate::error::{Error, Result};
use crate::preprocess::{RecipeOptions, DEFAULT_MAX_LEVELS, DEFAULT_MIN_LEVEL_FREQ};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcwbConfig {
    pub nu: f64,
    pub psi: f64,
    pub df: f64,
    pub patience: usize,
    pub max_iters_uni: usize,
    pub max_iters_pint: usize,
    pub max_iters_deep: usize,
    pub interactions: bool,
    pub deep: bool,
    pub rf_trees: usize,
    pub rf_depth: usize,
    pub rf_min_leaf: usize,
    pub deep_max_depth: usize,
    pub deep_min_leaf: usize,
    pub nu_deep: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    pub max_levels: usize,
    pub min_level_freq: f64,
    pub spline_knots: usize,
    pub spline_degree: usize,
    pub penalty_order: usize,
    pub tensor_knots: usize,
}

impl Default for AcwbConfig {
    fn default() -> Self {
        AcwbConfig {
            nu: 0.1,
            psi: 0.1,
            df: 5.0,
            patience: 2,
            max_iters_uni: 5000,
            max_iters_pint: 5000,
            max_iters_deep: 1000,
            interactions: true,
            deep: true,
            rf_trees: 500,
            rf_depth: 2,
            rf_min_leaf: 5,
            deep_max_depth: 6,
            deep_min_leaf: 10,
            nu_deep: 0.1,
            validation_fraction: 0.2,
            seed: 0,
            max_levels: DEFAULT_MAX_LEVELS,
            min_level_freq: DEFAULT_MIN_LEVEL_FREQ,
            spline_knots: 20,
            spline_degree: 3,
            penalty_order: 2,
            tensor_knots: 10,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

pub(crate) fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects on/off, got `{value}`"))),
    }
}

impl AcwbConfig {
    /// Set one option by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "nu" => self.nu = parse_value(key, v)?,
            "psi" => self.psi = parse_value(key, v)?,
            "df" => self.df = parse_value(key, v)?,
            "kappa" | "patience" => self.patience = parse_value(key, v)?,
            "max_iters" => {
                let m: usize = parse_value(key, v)?;
                self.max_iters_uni = m;
                self.max_iters_pint = m;
                self.max_iters_deep = m;
            }
            "max_iters_uni" => self.max_iters_uni = parse_value(key, v)?,
            "max_iters_pint" => self.max_iters_pint = parse_value(key, v)?,
            "max_iters_deep" => self.max_iters_deep = parse_value(key, v)?,
            "interactions" => self.interactions = parse_switch(key, v)?,
            "deep" => self.deep = parse_switch(key, v)?,
            "rf_trees" | "rf_n_trees" => self.rf_trees = parse_value(key, v)?,
            "rf_depth" => self.rf_depth = parse_value(key, v)?,
            "rf_min_leaf" => self.rf_min_leaf = parse_value(key, v)?,
            "deep_max_depth" => self.deep_max_depth = parse_value(key, v)?,
            "deep_min_leaf" => self.deep_min_leaf = parse_value(key, v)?,
            "nu_deep" => self.nu_deep = parse_value(key, v)?,
            "validation_fraction" => self.validation_fraction = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "max_levels" => self.max_levels = parse_value(key, v)?,
            "min_level_freq" => self.min_level_freq = parse_value(key, v)?,
            "spline_knots" => self.spline_knots = parse_value(key, v)?,
            "spline_degree" => self.spline_degree = parse_value(key, v)?,
            "penalty_order" => self.penalty_order = parse_value(key, v)?,
            "tensor_knots" => self.tensor_knots = parse_value(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", lineno + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut c = AcwbConfig::default();
        c.apply_text(&text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad(format!("nu = {} not in (0, 1]", self.nu));
        }
        if !(self.nu_deep > 0.0 && self.nu_deep <= 1.0) {
            return bad(format!("nu_deep = {} not in (0, 1]", self.nu_deep));
        }
        if !(self.psi > 0.0 && self.psi <= 1.0) {
            return bad(format!("psi = {} not in (0, 1]", self.psi));
        }
        if !(self.df > 0.0 && self.df.is_finite()) {
            return bad(format!("df = {} must be positive", self.df));
        }
        if self.patience == 0 {
            return bad("kappa must be positive".into());
        }
        if self.max_iters_uni == 0 || self.max_iters_pint == 0 || self.max_iters_deep == 0 {
            return bad("max_iters must be positive".into());
        }
        if self.rf_trees == 0 || self.rf_depth == 0 || self.deep_max_depth == 0 {
            return bad("tree counts and depths must be positive".into());
        }
        if self.rf_min_leaf == 0 || self.deep_min_leaf == 0 {
            return bad("min_leaf must be positive".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction = {} not in (0, 1)",
                self.validation_fraction
            ));
        }
        if self.max_levels == 0 || !(0.0..1.0).contains(&self.min_level_freq) {
            return bad("max_levels must be positive and min_level_freq in [0, 1)".into());
        }
        if self.spline_knots == 0 || self.tensor_knots == 0 || self.spline_degree == 0 {
            return bad("spline knots and degree must be positive".into());
        }
        Ok(())
    }

    pub fn cwb_options(&self, max_iters: usize) -> CwbOptions {
        CwbOptions {
            nu: self.nu,
            max_iters,
            patience: self.patience,
        }
    }

    pub fn basis_options(&self) -> BasisOptions {
        BasisOptions {
            n_interior: self.spline_knots,
            degree: self.spline_degree,
            penalty_order: self.penalty_order,
            tensor_interior: self.tensor_knots,
        }
    }

    pub fn recipe_options(&self) -> RecipeOptions {
        RecipeOptions {
            max_levels: self.max_levels,
            min_level_freq: self.min_level_freq,
            seed: self.seed,
        }
    }
}
