//! Constant-feature removal, rare-level collapsing and missing-value imputation.
//!
//! A [`PreprocessRecipe`] is fitted on training rows only and replayed on any other
//! table with the same columns. Numeric imputation draws come from a per-column
//! seed stored in the recipe, so replaying a recipe is deterministic.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{name_hash, seeded_rng, ColumnData, ColumnKind, ColumnSchema, Dataset, MISSING_CODE};
use crate::error::{Error, Result};

pub const OTHER_LEVEL: &str = "__other__";
pub const DEFAULT_MAX_LEVELS: usize = 10;
pub const DEFAULT_MIN_LEVEL_FREQ: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Imputation {
    Mode {
        level: String,
    },
    Empirical {
        values: Vec<f64>,
        probabilities: Vec<f64>,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMap {
    /// Output levels: retained training levels in first-appearance order, then
    /// `__other__` when anything was collapsed.
    pub retained: Vec<String>,
    /// Every training level mapped to an entry of `retained`.
    pub map: BTreeMap<String, String>,
}

impl LevelMap {
    pub fn has_other(&self) -> bool {
        self.retained.last().is_some_and(|l| l == OTHER_LEVEL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptColumn {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<LevelMap>,
    pub imputation: Imputation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecipe {
    /// Feature schema the recipe was fitted on (before any transformation).
    pub source_schema: Vec<ColumnSchema>,
    pub dropped_columns: Vec<String>,
    pub kept: Vec<KeptColumn>,
    pub max_levels: usize,
    pub min_level_freq: f64,
    pub seed: u64,
}

impl PreprocessRecipe {
    /// Schema of [`apply_recipe`] output.
    pub fn output_schema(&self) -> Vec<ColumnSchema> {
        self.kept
            .iter()
            .map(|k| ColumnSchema {
                name: k.name.clone(),
                kind: k.kind,
                levels: k.levels.as_ref().map(|l| l.retained.clone()).unwrap_or_default(),
                missing_count: 0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecipeOptions {
    pub max_levels: usize,
    pub min_level_freq: f64,
    pub seed: u64,
}

impl Default for RecipeOptions {
    fn default() -> Self {
        RecipeOptions {
            max_levels: DEFAULT_MAX_LEVELS,
            min_level_freq: DEFAULT_MIN_LEVEL_FREQ,
            seed: 0,
        }
    }
}

pub fn fit_recipe(train: &Dataset, opts: &RecipeOptions) -> Result<PreprocessRecipe> {
    if train.n_rows() == 0 {
        return Err(Error::Fit("cannot fit preprocessing on an empty table".into()));
    }
    if opts.max_levels == 0 || !(0.0..1.0).contains(&opts.min_level_freq) {
        return Err(Error::Config(format!(
            "max_levels must be positive and min_level_freq in [0, 1), got {} and {}",
            opts.max_levels, opts.min_level_freq
        )));
    }
    let mut dropped = Vec::new();
    let mut kept = Vec::new();
    for (schema, column) in train.schema.iter().zip(&train.columns) {
        let col_seed = opts.seed ^ name_hash(&schema.name);
        match column {
            ColumnData::Numeric(values) => {
                let mut observed: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
                observed.sort_by(|a, b| a.total_cmp(b));
                let mut distinct: Vec<(f64, usize)> = Vec::new();
                for v in observed.iter().copied() {
                    match distinct.last_mut() {
                        Some((last, c)) if *last == v => *c += 1,
                        _ => distinct.push((v, 1)),
                    }
                }
                if distinct.len() <= 1 {
                    dropped.push(schema.name.clone());
                    continue;
                }
                let total = observed.len() as f64;
                let values: Vec<f64> = distinct.iter().map(|d| d.0).collect();
                let mut probabilities: Vec<f64> = distinct.iter().map(|d| d.1 as f64 / total).collect();
                let sum: f64 = probabilities.iter().sum();
                for p in &mut probabilities {
                    *p /= sum;
                }
                kept.push(KeptColumn {
                    name: schema.name.clone(),
                    kind: ColumnKind::Numeric,
                    levels: None,
                    imputation: Imputation::Empirical {
                        values,
                        probabilities,
                        seed: col_seed,
                    },
                });
            }
            ColumnData::Categorical(codes) => {
                let n_levels = schema.levels.len();
                let mut counts = vec![0usize; n_levels];
                for &c in codes {
                    if c != MISSING_CODE {
                        counts[c as usize] += 1;
                    }
                }
                let present: Vec<usize> = (0..n_levels).filter(|&l| counts[l] > 0).collect();
                if present.len() <= 1 {
                    dropped.push(schema.name.clone());
                    continue;
                }
                let total: usize = counts.iter().sum();
                let mut by_freq = present.clone();
                by_freq.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
                let mut keep = vec![false; n_levels];
                for &l in by_freq.iter().take(opts.max_levels) {
                    if counts[l] as f64 / total as f64 >= opts.min_level_freq {
                        keep[l] = true;
                    }
                }
                let collapsed = present.iter().any(|&l| !keep[l]);
                let mut retained: Vec<String> = present
                    .iter()
                    .filter(|&&l| keep[l])
                    .map(|&l| schema.levels[l].clone())
                    .collect();
                if collapsed {
                    retained.push(OTHER_LEVEL.to_string());
                }
                let mut map = BTreeMap::new();
                for &l in &present {
                    let target = if keep[l] {
                        schema.levels[l].clone()
                    } else {
                        OTHER_LEVEL.to_string()
                    };
                    map.insert(schema.levels[l].clone(), target);
                }
                // mode over mapped levels, ties to the lexicographically smallest
                let mut mapped_counts: BTreeMap<&str, usize> = BTreeMap::new();
                for &l in &present {
                    *mapped_counts.entry(map[&schema.levels[l]].as_str()).or_default() += counts[l];
                }
                let mode = mapped_counts
                    .iter()
                    .fold(None::<(&str, usize)>, |best, (&lvl, &c)| match best {
                        Some((_, bc)) if bc >= c => best,
                        _ => Some((lvl, c)),
                    })
                    .map(|(l, _)| l.to_string())
                    .unwrap_or_default();
                kept.push(KeptColumn {
                    name: schema.name.clone(),
                    kind: ColumnKind::Categorical,
                    levels: Some(LevelMap { retained, map }),
                    imputation: Imputation::Mode { level: mode },
                });
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::Fit("no usable features: every column is constant".into()));
    }
    Ok(PreprocessRecipe {
        source_schema: train.schema.clone(),
        dropped_columns: dropped,
        kept,
        max_levels: opts.max_levels,
        min_level_freq: opts.min_level_freq,
        seed: opts.seed,
    })
}

pub fn apply_recipe(ds: &Dataset, recipe: &PreprocessRecipe) -> Result<Dataset> {
    let mut schema = Vec::with_capacity(recipe.kept.len());
    let mut columns = Vec::with_capacity(recipe.kept.len());
    for kept in &recipe.kept {
        let j = ds.column_index(&kept.name).ok_or_else(|| {
            Error::Schema(format!(
                "column `{}` required by the preprocessing recipe is missing",
                kept.name
            ))
        })?;
        let src_schema = &ds.schema[j];
        match (&ds.columns[j], &kept.imputation) {
            (
                ColumnData::Numeric(values),
                Imputation::Empirical {
                    values: support,
                    probabilities,
                    seed,
                },
            ) => {
                let mut rng = seeded_rng(*seed);
                let cdf: Vec<f64> = probabilities
                    .iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect();
                let out: Vec<f64> = values
                    .iter()
                    .map(|&v| {
                        if v.is_nan() {
                            let u: f64 = rng.gen::<f64>() * cdf.last().copied().unwrap_or(1.0);
                            let k = cdf.partition_point(|&c| c <= u).min(support.len() - 1);
                            support[k]
                        } else {
                            v
                        }
                    })
                    .collect();
                columns.push(ColumnData::Numeric(out));
            }
            (ColumnData::Categorical(codes), Imputation::Mode { level: mode }) => {
                let lm = kept
                    .levels
                    .as_ref()
                    .ok_or_else(|| Error::Schema(format!("recipe for `{}` lacks a level map", kept.name)))?;
                let index_of = |name: &str| lm.retained.iter().position(|l| l == name);
                let mode_code = index_of(mode).unwrap_or(0) as u32;
                let fallback = if lm.has_other() {
                    (lm.retained.len() - 1) as u32
                } else {
                    mode_code
                };
                // translate every source level once
                let translate: Vec<u32> = src_schema
                    .levels
                    .iter()
                    .map(|lvl| match lm.map.get(lvl) {
                        Some(t) => index_of(t).map_or(fallback, |i| i as u32),
                        None => index_of(lvl).map_or(fallback, |i| i as u32),
                    })
                    .collect();
                let out: Vec<u32> = codes
                    .iter()
                    .map(|&c| {
                        if c == MISSING_CODE {
                            mode_code
                        } else {
                            translate[c as usize]
                        }
                    })
                    .collect();
                columns.push(ColumnData::Categorical(out));
            }
            _ => {
                return Err(Error::Schema(format!(
                    "column `{}` is {:?} but the recipe expects {:?}",
                    kept.name, src_schema.kind, kept.kind
                )))
            }
        }
        schema.push(ColumnSchema {
            name: kept.name.clone(),
            kind: kept.kind,
            levels: kept.levels.as_ref().map(|l| l.retained.clone()).unwrap_or_default(),
            missing_count: 0,
        });
    }
    Dataset::new(schema, columns, ds.target.clone())
}
