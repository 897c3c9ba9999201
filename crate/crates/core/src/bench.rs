//! Cross-validated benchmark harness with the published reference scores.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AcwbConfig;
use crate::data::{kfold_assignment, Dataset, Task};
use crate::error::{Error, Result};
use crate::hpo::{tune, TuneOptions};
use crate::stages::fit_acwb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Stages 1 and 2, tuned.
    #[serde(rename = "ACWB")]
    Acwb,
    /// All three stages, tuned.
    #[serde(rename = "ACWB_deep")]
    AcwbDeep,
    #[serde(rename = "ACWB_deep_no_HPO")]
    AcwbDeepNoHpo,
    #[serde(rename = "ACWB_no_HPO")]
    AcwbNoHpo,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Acwb,
        Variant::AcwbDeep,
        Variant::AcwbDeepNoHpo,
        Variant::AcwbNoHpo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Acwb => "ACWB",
            Variant::AcwbDeep => "ACWB_deep",
            Variant::AcwbDeepNoHpo => "ACWB_deep_no_HPO",
            Variant::AcwbNoHpo => "ACWB_no_HPO",
        }
    }

    pub fn deep(self) -> bool {
        matches!(self, Variant::AcwbDeep | Variant::AcwbDeepNoHpo)
    }

    pub fn tuned(self) -> bool {
        matches!(self, Variant::Acwb | Variant::AcwbDeep)
    }

    /// Base configuration with the stage toggles of this variant.
    pub fn configure(self, base: &AcwbConfig) -> AcwbConfig {
        AcwbConfig {
            interactions: true,
            deep: self.deep(),
            ..base.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant `{s}` (expected ACWB, ACWB_deep, ACWB_deep_no_HPO or ACWB_no_HPO)"
                ))
            })
    }
}

/// Published AUC references: `(dataset, ACWB, ACWB_deep, ACWB_deep_no_HPO, ACWB_no_HPO)`.
pub const REFERENCE_AUC: [(&str, [f64; 4]); 3] = [
    ("adult", [0.900, 0.904, 0.911, 0.911]),
    ("blood-transfusion", [0.755, 0.750, 0.749, 0.725]),
    ("credit-g", [0.763, 0.755, 0.760, 0.768]),
];

pub fn reference(dataset: &str, variant: Variant) -> Option<f64> {
    let col = Variant::ALL.iter().position(|v| *v == variant)?;
    REFERENCE_AUC
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(dataset))
        .map(|(_, row)| row[col])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auc,
    Logloss,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Auc => "auc",
            Metric::Logloss => "logloss",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub dataset: String,
    pub variant: Variant,
    pub metric: Metric,
    pub folds: Vec<f64>,
    pub mean: f64,
    pub seconds: f64,
}

/// Area under the ROC curve via the rank-sum statistic; tied scores share
/// their mid-rank.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Config("scores and labels differ in length".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::Fit("AUC needs both classes".into()));
    }
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

pub const PROB_CLAMP: f64 = 1e-15;

/// Mean negative log-likelihood of class indices under per-row probabilities.
pub fn log_loss(probabilities: &[Vec<f64>], labels: &[f64]) -> f64 {
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p[y as usize].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln())
        .sum();
    total / labels.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub folds: usize,
    pub seed: u64,
    pub base: AcwbConfig,
    pub tune: TuneOptions,
    /// Run folds concurrently.
    pub parallel_folds: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            folds: 5,
            seed: 0,
            base: AcwbConfig::default(),
            tune: TuneOptions {
                max_time: Some(Duration::from_secs(300)),
                ..TuneOptions::default()
            },
            parallel_folds: true,
        }
    }
}

fn score_fold(ds: &Dataset, assign: &[usize], fold: usize, variant: Variant, opts: &BenchOptions) -> Result<f64> {
    let train_rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| assign[i] != fold).collect();
    let test_rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| assign[i] == fold).collect();
    let train = ds.select_rows(&train_rows);
    let test = ds.select_rows(&test_rows);
    let mut config = variant.configure(&opts.base);
    config.seed = opts.seed.wrapping_add(fold as u64);
    if variant.tuned() {
        let res = tune(&train, &config, &opts.tune)?;
        config = res.best.apply(&config);
    }
    let model = fit_acwb(&train, &config)?;
    let pred = model.predict(&test)?;
    let labels = &test.target()?.values;
    match ds.task() {
        Some(Task::BinaryClassification) => auc(pred.probability.as_ref().expect("binary probabilities"), labels),
        Some(Task::MulticlassClassification) => Ok(log_loss(&pred.class_probabilities, labels)),
        _ => Err(Error::Config("benchmarking needs a classification target".into())),
    }
}

/// Stratified k-fold cross-validation of one variant.
pub fn cross_validate(ds: &Dataset, name: &str, variant: Variant, opts: &BenchOptions) -> Result<BenchResult> {
    let task = ds
        .task()
        .ok_or_else(|| Error::Config("benchmarking needs a target".into()))?;
    if !task.is_classification() {
        return Err(Error::Config("benchmarking needs a classification target".into()));
    }
    if opts.folds < 2 {
        return Err(Error::Config("at least two folds are required".into()));
    }
    let start = Instant::now();
    let assign = kfold_assignment(ds, opts.folds, opts.seed);
    let run = |f: usize| score_fold(ds, &assign, f, variant, opts);
    let folds: Vec<f64> = if opts.parallel_folds {
        (0..opts.folds).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..opts.folds).map(run).collect::<Result<_>>()?
    };
    let mean = folds.iter().sum::<f64>() / folds.len() as f64;
    Ok(BenchResult {
        dataset: name.into(),
        variant,
        metric: if task == Task::BinaryClassification {
            Metric::Auc
        } else {
            Metric::Logloss
        },
        folds,
        mean,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub variant: Variant,
    pub measured: f64,
    pub reference: Option<f64>,
    pub delta: Option<f64>,
    pub flagged: bool,
}

/// Compare measured means with the reference table; deltas beyond `tolerance` are flagged.
pub fn report_table(results: &[BenchResult], tolerance: f64) -> Vec<ReportRow> {
    results
        .iter()
        .map(|r| {
            let reference = (r.metric == Metric::Auc)
                .then(|| reference(&r.dataset, r.variant))
                .flatten();
            let delta = reference.map(|p| r.mean - p);
            ReportRow {
                dataset: r.dataset.clone(),
                variant: r.variant,
                measured: r.mean,
                reference,
                delta,
                flagged: delta.is_some_and(|d| d.abs() > tolerance),
            }
        })
        .collect()
}

pub fn write_results<W: Write>(results: &[BenchResult], rows: &[ReportRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Fit(format!("writing results: {e}"));
    out.write_record([
        "dataset",
        "variant",
        "metric",
        "mean",
        "folds",
        "seconds",
        "reference",
        "delta",
        "flagged",
    ])
    .map_err(io)?;
    for (r, row) in results.iter().zip(rows) {
        let folds: Vec<String> = r.folds.iter().map(|v| format!("{v:.6}")).collect();
        out.write_record([
            r.dataset.clone(),
            r.variant.to_string(),
            r.metric.to_string(),
            format!("{:.6}", r.mean),
            folds.join(";"),
            format!("{:.2}", r.seconds),
            row.reference.map_or(String::new(), |v| format!("{v:.3}")),
            row.delta.map_or(String::new(), |v| format!("{v:+.4}")),
            row.flagged.to_string(),
        ])
        .map_err(io)?;
    }
    out.flush().map_err(|e| Error::io("results", e))
}
