//! Three consecutive boosting stages: univariate effects, screened pairwise
//! interactions and a deep-tree remainder, assembled into one additive score.

use std::collections::HashMap;
use std::time::Instant;

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselearners::{design_for, BaseLearnerKind, PreparedLearner};
use crate::basis::Design;
use crate::boosting::{
    cwb_fit, normalize_ovr, one_vs_rest, BoostTrace, IterationRecord, Patience, StageFit, StageModel, StopReason,
};
use crate::config::AcwbConfig;
use crate::data::{seeded_rng, split, ColumnKind, Dataset, SplitSpec, Task};
use crate::error::{Error, Result};
use crate::loss::{sigmoid, Loss};
use crate::preprocess::{apply_recipe, fit_recipe, PreprocessRecipe};
use crate::tree::{fit_tree, RegressionTree, TreeData, TreeParams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenedPair {
    pub first: String,
    pub second: String,
    /// Number of forest trees in which the pair was selected.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSet {
    /// Most frequent first.
    pub pairs: Vec<ScreenedPair>,
    pub psi: f64,
    /// Distinct pairs seen anywhere in the forest.
    pub n_observed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepStage {
    pub trees: Vec<RegressionTree>,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub trace: BoostTrace,
}

impl DeepStage {
    pub fn predict(&self, ds: &Dataset) -> Vec<f64> {
        let mut out = vec![0.0; ds.n_rows()];
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.predict(ds)) {
                *o += self.shrinkage * p;
            }
        }
        out
    }
}

/// Risk after each stage; a skipped stage repeats the previous value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCheckpoints {
    pub r0: f64,
    pub r_uni: f64,
    pub r_pint: f64,
    pub r_deep: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess: f64,
    pub uni: f64,
    pub screening: f64,
    pub pint: f64,
    pub deep: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcwbModel {
    pub config: AcwbConfig,
    pub task: Task,
    pub loss: Loss,
    pub target_name: String,
    /// Class labels; for binary tasks index 1 is the positive class.
    pub target_levels: Vec<String>,
    pub recipe: PreprocessRecipe,
    pub offset: f64,
    pub uni: StageModel,
    pub interactions: Option<InteractionSet>,
    pub pint: Option<StageModel>,
    pub pint_skipped: Option<String>,
    pub deep: Option<DeepStage>,
    /// Training risks.
    pub checkpoints: RiskCheckpoints,
    /// Validation risks.
    pub val_checkpoints: RiskCheckpoints,
    pub skipped_learners: Vec<String>,
    pub split_warning: Option<String>,
    /// Wall-clock seconds; not persisted so model files are reproducible.
    #[serde(skip)]
    pub timings: StageTimings,
    pub n_train: usize,
    pub n_validation: usize,
    /// Training range of every numeric feature after preprocessing.
    pub feature_ranges: Vec<FeatureRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Additive parts of the score on preprocessed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StageScores {
    pub offset: f64,
    pub uni: Vec<f64>,
    pub pint: Vec<f64>,
    pub deep: Vec<f64>,
}

impl StageScores {
    pub fn total(&self) -> Vec<f64> {
        (0..self.uni.len())
            .map(|i| self.offset + self.uni[i] + self.pint[i] + self.deep[i])
            .collect()
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot = start.elapsed().as_secs_f64();
    out
}

/// Prepare candidates in parallel; learners that cannot be built are skipped
/// and reported.
fn prepare_learners(
    kinds: Vec<BaseLearnerKind>,
    train: &Dataset,
    val: &Dataset,
    config: &AcwbConfig,
    skipped: &mut Vec<String>,
) -> (Vec<PreparedLearner>, Vec<Design>) {
    let opts = config.basis_options();
    let built: Vec<(BaseLearnerKind, Result<(PreparedLearner, Design)>)> = kinds
        .into_par_iter()
        .map(|kind| {
            let r = PreparedLearner::prepare(kind.clone(), train, config.df, &opts)
                .and_then(|p| design_for(&p.kind, &p.meta, val).map(|d| (p, d)));
            (kind, r)
        })
        .collect();
    let mut learners = Vec::new();
    let mut designs = Vec::new();
    for (kind, r) in built {
        match r {
            Ok((p, d)) => {
                learners.push(p);
                designs.push(d);
            }
            Err(e) => {
                warn!("skipping {kind}: {e}");
                skipped.push(format!("{kind}: {e}"));
            }
        }
    }
    (learners, designs)
}

fn distinct_count(x: &[f64]) -> usize {
    let mut v: Vec<f64> = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Candidate set of the univariate stage, in column order.
pub fn univariate_candidates(ds: &Dataset) -> Vec<BaseLearnerKind> {
    let mut out = Vec::new();
    for (s, col) in ds.schema.iter().zip(&ds.columns) {
        match s.kind {
            ColumnKind::Numeric => {
                out.push(BaseLearnerKind::Linear {
                    feature: s.name.clone(),
                });
                let crate::data::ColumnData::Numeric(x) = col else {
                    continue;
                };
                if distinct_count(x) >= 3 {
                    out.push(BaseLearnerKind::CenteredSpline {
                        feature: s.name.clone(),
                    });
                }
            }
            ColumnKind::Categorical => out.push(BaseLearnerKind::CategoricalRidge {
                feature: s.name.clone(),
            }),
        }
    }
    out
}

/// Learner kind for a feature pair, chosen by the column kinds.
pub fn pair_learner(ds: &Dataset, first: &str, second: &str) -> Result<BaseLearnerKind> {
    let kind_of = |n: &str| {
        ds.column_index(n)
            .map(|j| ds.schema[j].kind)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{n}`")))
    };
    Ok(match (kind_of(first)?, kind_of(second)?) {
        (ColumnKind::Categorical, ColumnKind::Categorical) => BaseLearnerKind::CatCatInteraction {
            first: first.into(),
            second: second.into(),
        },
        (ColumnKind::Categorical, ColumnKind::Numeric) => BaseLearnerKind::VaryingCoefficient {
            categorical: first.into(),
            numeric: second.into(),
        },
        (ColumnKind::Numeric, ColumnKind::Categorical) => BaseLearnerKind::VaryingCoefficient {
            categorical: second.into(),
            numeric: first.into(),
        },
        (ColumnKind::Numeric, ColumnKind::Numeric) => BaseLearnerKind::TensorSpline {
            first: first.into(),
            second: second.into(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreeningOptions {
    pub psi: f64,
    pub n_trees: usize,
    pub depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

/// Rank feature pairs by how many shallow forest trees select them together.
pub fn screen_interactions(ds: &Dataset, residuals: &[f64], opts: &ScreeningOptions) -> Result<InteractionSet> {
    let p = ds.n_features();
    if p < 2 {
        return Err(Error::Config(
            "interaction screening needs at least two features".into(),
        ));
    }
    if !(opts.psi > 0.0 && opts.psi <= 1.0) {
        return Err(Error::Config(format!("psi = {} not in (0, 1]", opts.psi)));
    }
    if residuals.len() != ds.n_rows() {
        return Err(Error::Fit("residual length does not match rows".into()));
    }
    let n = ds.n_rows();
    let data = TreeData::new(ds);
    let params = TreeParams {
        max_depth: opts.depth,
        min_leaf: opts.min_leaf,
        mtry: Some((p as f64).sqrt().ceil() as usize),
    };
    let per_tree: Vec<Vec<(usize, usize)>> = (0..opts.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded_rng(opts.seed ^ (t as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut w = vec![0.0; n];
            for _ in 0..n {
                w[rng.gen_range(0..n)] += 1.0;
            }
            let tree = fit_tree(&data, residuals, Some(&w), &params, &mut rng);
            tree_pairs(&tree)
        })
        .collect();
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for pairs in per_tree {
        for pair in pairs {
            *counts.entry(pair).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<((usize, usize), usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let n_observed = ranked.len();
    let keep = (opts.psi * n_observed as f64 - 1e-9).ceil().max(0.0) as usize;
    let pairs = ranked
        .into_iter()
        .take(keep)
        .map(|((i, j), count)| ScreenedPair {
            first: ds.schema[i].name.clone(),
            second: ds.schema[j].name.clone(),
            count,
        })
        .collect();
    Ok(InteractionSet {
        pairs,
        psi: opts.psi,
        n_observed,
    })
}

/// Distinct (root feature, child feature) pairs of one tree.
fn tree_pairs(tree: &RegressionTree) -> Vec<(usize, usize)> {
    tree.root_pairs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepOptions {
    pub nu: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_iters: usize,
    pub patience: usize,
}

/// Gradient boosting with deep regression trees from the incoming predictions.
#[allow(clippy::too_many_arguments)]
pub fn fit_deep(
    train: &Dataset,
    val: &Dataset,
    y_train: &[f64],
    y_val: &[f64],
    loss: Loss,
    opts: &DeepOptions,
    mut f_train: Vec<f64>,
    mut f_val: Vec<f64>,
) -> Result<(DeepStage, Vec<f64>, Vec<f64>)> {
    let data = TreeData::new(train);
    let params = TreeParams {
        max_depth: opts.max_depth,
        min_leaf: opts.min_leaf,
        mtry: None,
    };
    let mut rng = seeded_rng(0);
    let initial_train = loss.risk(y_train, &f_train);
    let initial_val = loss.risk(y_val, &f_val);
    let mut patience = Patience::new(initial_val, opts.patience);
    let mut trees = Vec::new();
    let mut records = Vec::new();
    let mut best_train = f_train.clone();
    let mut best_val = f_val.clone();
    let mut stop_reason = StopReason::MaxIters;
    let fits_on_train = train.n_rows() >= 2 * opts.min_leaf.max(1);
    for m in 1..=opts.max_iters {
        let r = loss.pseudo_residuals(y_train, &f_train);
        let tree = if fits_on_train {
            fit_tree(&data, &r, None, &params, &mut rng)
        } else {
            let mean = r.iter().sum::<f64>() / r.len().max(1) as f64;
            RegressionTree {
                nodes: vec![crate::tree::TreeNode::Leaf { value: mean }],
            }
        };
        tree.validate(train.n_features())?;
        let pt = tree.predict(train);
        let pv = tree.predict(val);
        let sse = r.iter().zip(&pt).map(|(a, b)| (a - b) * (a - b)).sum();
        for (f, p) in f_train.iter_mut().zip(&pt) {
            *f += opts.nu * p;
        }
        for (f, p) in f_val.iter_mut().zip(&pv) {
            *f += opts.nu * p;
        }
        let train_risk = loss.risk(y_train, &f_train);
        let val_risk = loss.risk(y_val, &f_val);
        if !train_risk.is_finite() || !val_risk.is_finite() {
            return Err(Error::Fit(format!("deep stage diverged at tree {m}")));
        }
        records.push(IterationRecord {
            iteration: m,
            learner: m - 1,
            sse,
            train_risk,
            val_risk,
        });
        trees.push(tree);
        let (improved, stop) = patience.observe(m, val_risk);
        if improved {
            best_train.clone_from(&f_train);
            best_val.clone_from(&f_val);
        }
        if stop {
            stop_reason = StopReason::Patience;
            break;
        }
    }
    let best = patience.best_iteration;
    trees.truncate(best);
    let trace = BoostTrace {
        initial_train_risk: initial_train,
        initial_val_risk: initial_val,
        stopped_at: records.len(),
        records,
        best_iteration: best,
        stop_reason,
    };
    Ok((
        DeepStage {
            trees,
            shrinkage: opts.nu,
            max_depth: opts.max_depth,
            trace,
        },
        best_train,
        best_val,
    ))
}

fn numeric_ranges(ds: &Dataset) -> Vec<FeatureRange> {
    ds.schema
        .iter()
        .zip(&ds.columns)
        .filter_map(|(s, c)| match c {
            crate::data::ColumnData::Numeric(x) => {
                let (min, max) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
                Some(FeatureRange {
                    name: s.name.clone(),
                    min,
                    max,
                })
            }
            _ => None,
        })
        .collect()
}

fn target_values(ds: &Dataset) -> Result<Vec<f64>> {
    Ok(ds.target()?.values.clone())
}

/// Fit a regression or binary-classification model.
pub fn fit_single(ds: &Dataset, config: &AcwbConfig) -> Result<AcwbModel> {
    config.validate()?;
    let target = ds.target()?;
    let task = target.task;
    let loss = match task {
        Task::Regression => Loss::SquaredError,
        Task::BinaryClassification => Loss::Binomial,
        Task::MulticlassClassification => {
            return Err(Error::Config(
                "multiclass targets are fitted one-vs-rest via fit_acwb".into(),
            ))
        }
    };
    let mut timings = StageTimings::default();
    let (sp, recipe, train, val) = timed(&mut timings.preprocess, || -> Result<_> {
        let sp = split(
            ds,
            &SplitSpec {
                validation_fraction: config.validation_fraction,
                seed: config.seed,
                stratify: task.is_classification(),
            },
        )?;
        let recipe = fit_recipe(&sp.train, &config.recipe_options())?;
        let train = apply_recipe(&sp.train, &recipe)?;
        let val = apply_recipe(&sp.validation, &recipe)?;
        Ok((sp, recipe, train, val))
    })?;
    if let Some(w) = &sp.warning {
        warn!("{w}");
    }
    let y_train = target_values(&train)?;
    let y_val = target_values(&val)?;
    let offset = loss.offset(&y_train)?;
    let mut skipped = Vec::new();

    // Stage 1
    let uni_fit = timed(&mut timings.uni, || -> Result<StageFit> {
        let (learners, designs) = prepare_learners(univariate_candidates(&train), &train, &val, config, &mut skipped);
        cwb_fit(
            &learners,
            &designs,
            &y_train,
            &y_val,
            loss,
            &config.cwb_options(config.max_iters_uni),
            vec![offset; y_train.len()],
            vec![offset; y_val.len()],
        )
    })
    .map_err(|e| e.in_stage("univariate stage"))?;
    let r0 = uni_fit.model.trace.initial_train_risk;
    let v0 = uni_fit.model.trace.initial_val_risk;
    let r_uni = uni_fit.model.trace.final_train_risk();
    let v_uni = uni_fit.model.trace.final_val_risk();
    info!(
        "univariate stage: {} of {} iterations kept, risk {r0:.6} -> {r_uni:.6}",
        uni_fit.model.trace.best_iteration, uni_fit.model.trace.stopped_at
    );
    let (mut f_train, mut f_val) = (uni_fit.train_pred, uni_fit.val_pred);
    let uni = uni_fit.model;

    // Screening and stage 2
    let mut interactions = None;
    let mut pint = None;
    let mut pint_skipped = None;
    if !config.interactions {
        pint_skipped = Some("disabled by configuration".to_string());
    } else if train.n_features() < 2 {
        pint_skipped = Some("fewer than two features".to_string());
    } else {
        let r = loss.pseudo_residuals(&y_train, &f_train);
        let iset = timed(&mut timings.screening, || {
            screen_interactions(
                &train,
                &r,
                &ScreeningOptions {
                    psi: config.psi,
                    n_trees: config.rf_trees,
                    depth: config.rf_depth,
                    min_leaf: config.rf_min_leaf,
                    seed: config.seed,
                },
            )
        })
        .map_err(|e| e.in_stage("interaction screening"))?;
        if iset.pairs.is_empty() {
            pint_skipped = Some("no feature pair observed in the screening forest".to_string());
        } else {
            let kinds = iset
                .pairs
                .iter()
                .map(|p| pair_learner(&train, &p.first, &p.second))
                .collect::<Result<Vec<_>>>()?;
            let fit = timed(&mut timings.pint, || -> Result<Option<StageFit>> {
                let (learners, designs) = prepare_learners(kinds, &train, &val, config, &mut skipped);
                if learners.is_empty() {
                    return Ok(None);
                }
                cwb_fit(
                    &learners,
                    &designs,
                    &y_train,
                    &y_val,
                    loss,
                    &config.cwb_options(config.max_iters_pint),
                    f_train.clone(),
                    f_val.clone(),
                )
                .map(Some)
            })
            .map_err(|e| e.in_stage("interaction stage"))?;
            match fit {
                Some(fit) => {
                    f_train = fit.train_pred;
                    f_val = fit.val_pred;
                    pint = Some(fit.model);
                }
                None => pint_skipped = Some("no interaction learner could be built".to_string()),
            }
            interactions = Some(iset);
        }
    }
    let r_pint = pint.as_ref().map_or(r_uni, |m| m.trace.final_train_risk());
    let v_pint = pint.as_ref().map_or(v_uni, |m| m.trace.final_val_risk());

    // Stage 3
    let mut deep = None;
    if config.deep {
        let (stage, ft, fv) = timed(&mut timings.deep, || {
            fit_deep(
                &train,
                &val,
                &y_train,
                &y_val,
                loss,
                &DeepOptions {
                    nu: config.nu_deep,
                    max_depth: config.deep_max_depth,
                    min_leaf: config.deep_min_leaf,
                    max_iters: config.max_iters_deep,
                    patience: config.patience,
                },
                f_train.clone(),
                f_val.clone(),
            )
        })
        .map_err(|e| e.in_stage("deep stage"))?;
        f_train = ft;
        f_val = fv;
        deep = Some(stage);
    }
    let r_deep = deep.as_ref().map_or(r_pint, |d| d.trace.final_train_risk());
    let v_deep = deep.as_ref().map_or(v_pint, |d| d.trace.final_val_risk());
    let _ = (f_train, f_val);

    Ok(AcwbModel {
        config: config.clone(),
        task,
        loss,
        target_name: target.name.clone(),
        target_levels: target.levels.clone(),
        recipe,
        offset,
        uni,
        interactions,
        pint,
        pint_skipped,
        deep,
        checkpoints: RiskCheckpoints {
            r0,
            r_uni,
            r_pint,
            r_deep,
        },
        val_checkpoints: RiskCheckpoints {
            r0: v0,
            r_uni: v_uni,
            r_pint: v_pint,
            r_deep: v_deep,
        },
        skipped_learners: skipped,
        split_warning: sp.warning,
        timings,
        n_train: train.n_rows(),
        n_validation: val.n_rows(),
        feature_ranges: numeric_ranges(&train),
    })
}

impl AcwbModel {
    /// Apply the preprocessing recipe to raw rows.
    pub fn prepare(&self, ds: &Dataset) -> Result<Dataset> {
        apply_recipe(ds, &self.recipe)
    }

    /// Stage contributions on already preprocessed rows.
    pub fn stage_scores_prepared(&self, ds: &Dataset) -> Result<StageScores> {
        let n = ds.n_rows();
        Ok(StageScores {
            offset: self.offset,
            uni: self.uni.predict(ds)?,
            pint: match &self.pint {
                Some(m) => m.predict(ds)?,
                None => vec![0.0; n],
            },
            deep: match &self.deep {
                Some(d) => d.predict(ds),
                None => vec![0.0; n],
            },
        })
    }

    pub fn stage_scores(&self, ds: &Dataset) -> Result<StageScores> {
        self.stage_scores_prepared(&self.prepare(ds)?)
    }

    pub fn predict_scores(&self, ds: &Dataset) -> Result<Vec<f64>> {
        Ok(self.stage_scores(ds)?.total())
    }
}

/// A fitted model: one additive model, or one per class for multiclass targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Single(Box<AcwbModel>),
    OneVsRest {
        classes: Vec<String>,
        models: Vec<AcwbModel>,
    },
}

/// Fit the full pipeline; multiclass targets are reduced one-vs-rest.
pub fn fit_acwb(ds: &Dataset, config: &AcwbConfig) -> Result<FittedModel> {
    let target = ds.target()?;
    match target.task {
        Task::MulticlassClassification => {
            let classes = target.levels.clone();
            let models = one_vs_rest(ds, |binary| fit_single(binary, config))?;
            Ok(FittedModel::OneVsRest { classes, models })
        }
        _ => Ok(FittedModel::Single(Box::new(fit_single(ds, config)?))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub task: Task,
    /// Additive score; for multiclass the score of the predicted class.
    pub score: Vec<f64>,
    /// Positive-class probability (binary) or predicted-class probability (multiclass).
    pub probability: Option<Vec<f64>>,
    pub predicted_class: Option<Vec<String>>,
    pub classes: Vec<String>,
    /// Per-row normalized class probabilities (multiclass only).
    pub class_probabilities: Vec<Vec<f64>>,
}

impl FittedModel {
    pub fn task(&self) -> Task {
        match self {
            FittedModel::Single(m) => m.task,
            FittedModel::OneVsRest { .. } => Task::MulticlassClassification,
        }
    }

    pub fn models(&self) -> Vec<&AcwbModel> {
        match self {
            FittedModel::Single(m) => vec![m.as_ref()],
            FittedModel::OneVsRest { models, .. } => models.iter().collect(),
        }
    }

    pub fn primary(&self) -> &AcwbModel {
        self.models()[0]
    }

    /// Score, probability and class for every row.
    pub fn predict(&self, ds: &Dataset) -> Result<Predictions> {
        match self {
            FittedModel::Single(m) => {
                let score = m.predict_scores(ds)?;
                let (probability, predicted_class) = if m.task == Task::BinaryClassification {
                    let p: Vec<f64> = score.iter().map(|&s| sigmoid(s)).collect();
                    let c = p
                        .iter()
                        .map(|&q| m.target_levels[usize::from(q >= 0.5)].clone())
                        .collect();
                    (Some(p), Some(c))
                } else {
                    (None, None)
                };
                Ok(Predictions {
                    task: m.task,
                    score,
                    probability,
                    predicted_class,
                    classes: m.target_levels.clone(),
                    class_probabilities: Vec::new(),
                })
            }
            FittedModel::OneVsRest { classes, models } => {
                let scores = models
                    .iter()
                    .map(|m| m.predict_scores(ds))
                    .collect::<Result<Vec<_>>>()?;
                let probs = normalize_ovr(&scores);
                let mut score = Vec::with_capacity(probs.len());
                let mut probability = Vec::with_capacity(probs.len());
                let mut predicted = Vec::with_capacity(probs.len());
                for (i, row) in probs.iter().enumerate() {
                    let mut best = 0;
                    for (c, &p) in row.iter().enumerate() {
                        if p > row[best] {
                            best = c;
                        }
                    }
                    score.push(scores[best][i]);
                    probability.push(row[best]);
                    predicted.push(classes[best].clone());
                }
                Ok(Predictions {
                    task: Task::MulticlassClassification,
                    score,
                    probability: Some(probability),
                    predicted_class: Some(predicted),
                    classes: classes.clone(),
                    class_probabilities: probs,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnData, ColumnSchema, Target};
    use rand_distr::{Distribution, StandardNormal};

    fn regression(names: &[&str], cols: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
        let target = Target {
            name: "y".into(),
            values: y,
            levels: vec![],
            task: Task::Regression,
        };
        Dataset::from_numeric(names.iter().copied().zip(cols).collect(), Some(target)).unwrap()
    }

    fn uniform_cols(p: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = seeded_rng(seed);
        (0..p)
            .map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    fn quick() -> AcwbConfig {
        AcwbConfig {
            rf_trees: 100,
            ..AcwbConfig::default()
        }
    }

    #[test]
    fn screening_finds_planted_pair() {
        let names: Vec<String> = (1..=10).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut first = 0;
        for seed in 0..20 {
            let cols = uniform_cols(10, 500, seed);
            let y: Vec<f64> = (0..500).map(|i| cols[0][i] * cols[1][i]).collect();
            let ds = regression(&refs, cols, y.clone());
            let iset = screen_interactions(
                &ds,
                &y,
                &ScreeningOptions {
                    psi: 1.0,
                    n_trees: 200,
                    depth: 2,
                    min_leaf: 5,
                    seed,
                },
            )
            .unwrap();
            for p in &iset.pairs {
                assert_ne!(p.first, p.second);
            }
            assert_eq!(iset.pairs.len(), iset.n_observed);
            let top = &iset.pairs[0];
            first += usize::from(top.first == "x1" && top.second == "x2");
        }
        assert!(first >= 18, "{first}/20");
    }

    #[test]
    fn constant_target_gives_empty_univariate_stage() {
        let cols = uniform_cols(2, 100, 1);
        let ds = regression(&["a", "b"], cols, vec![3.0; 100]);
        let cfg = AcwbConfig {
            interactions: false,
            deep: false,
            ..quick()
        };
        let m = fit_single(&ds, &cfg).unwrap();
        assert!(m.uni.learners.is_empty());
        assert!(m.uni.trace.stopped_at <= cfg.patience);
        let s = m.predict_scores(&ds).unwrap();
        assert!(s.iter().all(|&v| v == m.offset));
    }

    #[test]
    fn linear_target_keeps_spline_small() {
        let mut r = seeded_rng(5);
        let x: Vec<f64> = (0..400).map(|_| r.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 2.0 * v + 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
            .collect();
        let ds = regression(&["x"], vec![x], y);
        let cfg = AcwbConfig { deep: false, ..quick() };
        let m = fit_single(&ds, &cfg).unwrap();
        assert!(m.pint.is_none());
        assert_eq!(m.pint_skipped.as_deref(), Some("fewer than two features"));
        let prepared = m.prepare(&ds).unwrap();
        let part = |k: BaseLearnerKind| {
            m.uni
                .learner(&k)
                .map(|l| l.predict(&prepared).unwrap())
                .unwrap_or_else(|| vec![0.0; 400])
        };
        let lin = part(BaseLearnerKind::Linear { feature: "x".into() });
        let spl = part(BaseLearnerKind::CenteredSpline { feature: "x".into() });
        let max = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(max(&spl) <= 0.05 * max(&lin), "{} vs {}", max(&spl), max(&lin));
    }

    #[test]
    fn sine_selects_spline() {
        let mut r = seeded_rng(9);
        let x: Vec<f64> = (0..400).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| (4.0 * v).sin() + 0.1 * r.gen_range(-1.0..1.0))
            .collect();
        let ds = regression(&["x"], vec![x], y);
        let cfg = AcwbConfig { deep: false, ..quick() };
        let m = fit_single(&ds, &cfg).unwrap();
        assert!(m
            .uni
            .learner(&BaseLearnerKind::CenteredSpline { feature: "x".into() })
            .is_some());
    }

    #[test]
    fn checkpoints_monotone_and_additive_scores() {
        let cols = uniform_cols(4, 600, 3);
        let y: Vec<f64> = (0..600)
            .map(|i| cols[0][i] + cols[1][i] * cols[2][i] + if cols[3][i] > 0.0 { 0.5 } else { 0.0 })
            .collect();
        let ds = regression(&["a", "b", "c", "d"], cols, y);
        let m = fit_single(&ds, &quick()).unwrap();
        let c = m.checkpoints;
        assert!(c.r0 + 1e-10 >= c.r_uni && c.r_uni + 1e-10 >= c.r_pint && c.r_pint + 1e-10 >= c.r_deep);
        let s = m.stage_scores(&ds).unwrap();
        let total = m.predict_scores(&ds).unwrap();
        for i in 0..ds.n_rows() {
            let sum = s.offset + s.uni[i] + s.pint[i] + s.deep[i];
            assert!((sum - total[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn deep_toggle_leaves_structured_stages_untouched() {
        let cols = uniform_cols(3, 400, 4);
        let y: Vec<f64> = (0..400).map(|i| cols[0][i] * cols[1][i] + cols[2][i]).collect();
        let ds = regression(&["a", "b", "c"], cols, y);
        let with = fit_single(&ds, &quick()).unwrap();
        let without = fit_single(&ds, &AcwbConfig { deep: false, ..quick() }).unwrap();
        assert_eq!(with.uni, without.uni);
        assert_eq!(with.pint, without.pint);
        assert!(without.deep.is_none());
    }

    #[test]
    fn deep_stage_without_signal_accepts_no_trees() {
        let cols = uniform_cols(2, 200, 6);
        let ds = regression(&["a", "b"], cols, vec![1.0; 200]);
        let train = ds.clone();
        let y = vec![1.0; 200];
        let opts = DeepOptions {
            nu: 0.1,
            max_depth: 6,
            min_leaf: 10,
            max_iters: 50,
            patience: 2,
        };
        let (d, _, _) = fit_deep(&train, &train, &y, &y, Loss::SquaredError, &opts, y.clone(), y.clone()).unwrap();
        assert!(d.trees.is_empty());
    }

    #[test]
    fn deep_stage_learns_parity() {
        let mut r = seeded_rng(2);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..800).map(|_| if r.gen::<bool>() { 1.0 } else { 0.0 }).collect())
            .collect();
        let y: Vec<f64> = (0..800)
            .map(|i| ((cols[0][i] + cols[1][i] + cols[2][i]) as usize % 2) as f64)
            .collect();
        let target = Target {
            name: "y".into(),
            values: y,
            levels: vec!["even".into(), "odd".into()],
            task: Task::BinaryClassification,
        };
        let ds = Dataset::from_numeric(
            vec![("a", cols[0].clone()), ("b", cols[1].clone()), ("c", cols[2].clone())],
            Some(target),
        )
        .unwrap();
        let m = fit_acwb(&ds, &quick()).unwrap();
        let p = m.predict(&ds).unwrap();
        let truth = &ds.target().unwrap().values;
        let acc = p
            .probability
            .unwrap()
            .iter()
            .zip(truth)
            .filter(|(q, t)| (**q >= 0.5) == (**t == 1.0))
            .count() as f64
            / 800.0;
        assert!(acc > 0.95, "{acc}");
    }

    #[test]
    fn one_feature_multiclass_separable() {
        let x: Vec<f64> = (0..300).map(|i| (i % 3) as f64 * 10.0 + (i % 7) as f64 * 0.1).collect();
        let values: Vec<f64> = (0..300).map(|i| (i % 3) as f64).collect();
        let schema = vec![ColumnSchema {
            name: "x".into(),
            kind: ColumnKind::Numeric,
            levels: vec![],
            missing_count: 0,
        }];
        let target = Target {
            name: "y".into(),
            values,
            levels: vec!["a".into(), "b".into(), "c".into()],
            task: Task::MulticlassClassification,
        };
        let ds = Dataset::new(schema, vec![ColumnData::Numeric(x)], Some(target)).unwrap();
        let m = fit_acwb(&ds, &quick()).unwrap();
        let FittedModel::OneVsRest { models, .. } = &m else {
            panic!()
        };
        assert_eq!(models.len(), 3);
        let p = m.predict(&ds).unwrap();
        for row in &p.class_probabilities {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let acc = p
            .predicted_class
            .unwrap()
            .iter()
            .enumerate()
            .filter(|(i, c)| c.as_str() == ["a", "b", "c"][i % 3])
            .count();
        assert_eq!(acc, 300);
    }
}
