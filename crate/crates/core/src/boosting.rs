//! Componentwise boosting: fit every candidate to the pseudo residuals, keep the
//! best, take a damped step, stop on validation risk with patience.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselearners::{BaseLearnerKind, FittedBaseLearner, PreparedLearner};
use crate::basis::Design;
use crate::data::{Dataset, Target, Task};
use crate::error::{Error, Result};
use crate::loss::{sigmoid, Loss};

/// Minimum absolute drop below the running best that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwbOptions {
    pub nu: f64,
    pub max_iters: usize,
    pub patience: usize,
}

impl Default for CwbOptions {
    fn default() -> Self {
        CwbOptions {
            nu: 0.1,
            max_iters: 5000,
            patience: 2,
        }
    }
}

impl CwbOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config(format!("learning rate {} not in (0, 1]", self.nu)));
        }
        if self.max_iters == 0 || self.patience == 0 {
            return Err(Error::Config("max_iters and patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Index into the stage's candidate list (or tree index for the deep stage).
    pub learner: usize,
    pub sse: f64,
    pub train_risk: f64,
    pub val_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostTrace {
    pub initial_train_risk: f64,
    pub initial_val_risk: f64,
    /// Every iteration run, including the ones discarded by the rollback.
    pub records: Vec<IterationRecord>,
    /// Iterations kept in the model (`M` of the stage).
    pub best_iteration: usize,
    pub stopped_at: usize,
    pub stop_reason: StopReason,
}

impl BoostTrace {
    pub fn accepted(&self) -> &[IterationRecord] {
        &self.records[..self.best_iteration]
    }

    /// Training risk of the returned model.
    pub fn final_train_risk(&self) -> f64 {
        self.accepted().last().map_or(self.initial_train_risk, |r| r.train_risk)
    }

    pub fn final_val_risk(&self) -> f64 {
        self.accepted().last().map_or(self.initial_val_risk, |r| r.val_risk)
    }
}

/// Running early-stopping state shared by the structured and deep stages.
#[derive(Debug, Clone)]
pub(crate) struct Patience {
    best: f64,
    pub best_iteration: usize,
    misses: usize,
    patience: usize,
}

impl Patience {
    pub fn new(initial: f64, patience: usize) -> Self {
        Patience {
            best: initial,
            best_iteration: 0,
            misses: 0,
            patience,
        }
    }

    /// Returns `(improved, stop)`.
    pub fn observe(&mut self, iteration: usize, val_risk: f64) -> (bool, bool) {
        if self.best - val_risk >= MIN_IMPROVEMENT {
            self.best = val_risk;
            self.best_iteration = iteration;
            self.misses = 0;
            (true, false)
        } else {
            self.misses += 1;
            (false, self.misses >= self.patience)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageModel {
    pub candidates: Vec<BaseLearnerKind>,
    /// Aggregated learners, one per selected candidate, in candidate order.
    pub learners: Vec<FittedBaseLearner>,
    pub trace: BoostTrace,
    pub nu: f64,
    /// Unscaled per-iteration coefficients of the accepted iterations.
    #[serde(skip)]
    pub updates: Vec<Vec<f64>>,
}

impl StageModel {
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let mut out = vec![0.0; ds.n_rows()];
        for l in &self.learners {
            for (o, p) in out.iter_mut().zip(l.predict(ds)?) {
                *o += p;
            }
        }
        Ok(out)
    }

    pub fn learner(&self, kind: &BaseLearnerKind) -> Option<&FittedBaseLearner> {
        self.learners.iter().find(|l| &l.kind == kind)
    }

    pub fn selected_kinds(&self) -> Vec<&BaseLearnerKind> {
        self.learners.iter().map(|l| &l.kind).collect()
    }
}

pub struct StageFit {
    pub model: StageModel,
    pub train_pred: Vec<f64>,
    pub val_pred: Vec<f64>,
}

/// Run componentwise boosting from the incoming predictions `f_train`/`f_val`.
/// `val_designs[k]` is the design of `learners[k]` on the validation rows.
#[allow(clippy::too_many_arguments)]
pub fn cwb_fit(
    learners: &[PreparedLearner],
    val_designs: &[Design],
    y_train: &[f64],
    y_val: &[f64],
    loss: Loss,
    opts: &CwbOptions,
    mut f_train: Vec<f64>,
    mut f_val: Vec<f64>,
) -> Result<StageFit> {
    opts.validate()?;
    if learners.is_empty() {
        return Err(Error::Fit("empty learner set".into()));
    }
    if val_designs.len() != learners.len() || f_train.len() != y_train.len() || f_val.len() != y_val.len() {
        return Err(Error::Fit("inconsistent stage inputs".into()));
    }
    let initial_train = loss.risk(y_train, &f_train);
    let initial_val = loss.risk(y_val, &f_val);
    if !initial_train.is_finite() || !initial_val.is_finite() {
        return Err(Error::Fit("non-finite initial risk".into()));
    }
    let mut best_train = f_train.clone();
    let mut best_val = f_val.clone();
    let mut records = Vec::new();
    let mut updates: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut patience = Patience::new(initial_val, opts.patience);
    let mut stop_reason = StopReason::MaxIters;

    for m in 1..=opts.max_iters {
        let r = loss.pseudo_residuals(y_train, &f_train);
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let fits: Vec<(Vec<f64>, f64)> = learners.par_iter().map(|l| l.fit(&r, rr)).collect();
        let mut k_best = 0;
        for (k, (_, sse)) in fits.iter().enumerate() {
            if *sse < fits[k_best].1 {
                k_best = k;
            }
        }
        let (theta, sse) = fits.into_iter().nth(k_best).expect("nonempty");
        let step_train = learners[k_best].design.mul(&theta);
        let step_val = val_designs[k_best].mul(&theta);
        for (f, s) in f_train.iter_mut().zip(&step_train) {
            *f += opts.nu * s;
        }
        for (f, s) in f_val.iter_mut().zip(&step_val) {
            *f += opts.nu * s;
        }
        let train_risk = loss.risk(y_train, &f_train);
        let val_risk = loss.risk(y_val, &f_val);
        if !train_risk.is_finite() || !val_risk.is_finite() {
            return Err(Error::Fit(format!(
                "risk diverged at iteration {m} (learner {})",
                learners[k_best].kind
            )));
        }
        records.push(IterationRecord {
            iteration: m,
            learner: k_best,
            sse,
            train_risk,
            val_risk,
        });
        updates.push((k_best, theta));
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

    let stopped_at = records.len();
    let best_iteration = patience.best_iteration;
    updates.truncate(best_iteration);
    let trace = BoostTrace {
        initial_train_risk: initial_train,
        initial_val_risk: initial_val,
        records,
        best_iteration,
        stopped_at,
        stop_reason,
    };
    let model = aggregate(learners, &updates, opts.nu, trace)?;
    Ok(StageFit {
        model,
        train_pred: best_train,
        val_pred: best_val,
    })
}

/// Sum the accepted per-iteration updates into one learner per selected kind.
pub fn aggregate(
    learners: &[PreparedLearner],
    updates: &[(usize, Vec<f64>)],
    nu: f64,
    trace: BoostTrace,
) -> Result<StageModel> {
    let mut sums: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (k, theta) in updates {
        let entry = sums
            .entry(*k)
            .or_insert_with(|| vec![0.0; learners[*k].design.n_cols()]);
        if entry.len() != theta.len() {
            return Err(Error::Fit(format!(
                "coefficient length mismatch for {}",
                learners[*k].kind
            )));
        }
        for (a, b) in entry.iter_mut().zip(theta) {
            *a += b;
        }
    }
    let fitted = sums
        .into_iter()
        .map(|(k, s)| learners[k].fitted(s.into_iter().map(|v| nu * v).collect()))
        .collect();
    Ok(StageModel {
        candidates: learners.iter().map(|l| l.kind.clone()).collect(),
        learners: fitted,
        trace,
        nu,
        updates: updates.iter().map(|(_, t)| t.clone()).collect(),
    })
}

/// Binary target "class `c` vs rest" for one-vs-rest fitting.
pub fn class_vs_rest(target: &Target, class: usize) -> Target {
    Target {
        name: target.name.clone(),
        values: target
            .values
            .iter()
            .map(|&v| if v as usize == class { 1.0 } else { 0.0 })
            .collect(),
        levels: vec!["rest".into(), target.levels[class].clone()],
        task: Task::BinaryClassification,
    }
}

/// Fit one binary model per class.
pub fn one_vs_rest<M>(ds: &Dataset, fit: impl Fn(&Dataset) -> Result<M>) -> Result<Vec<M>> {
    let target = ds.target()?;
    let k = target.levels.len();
    if k < 3 {
        return Err(Error::Config(format!("one-vs-rest needs at least 3 classes, got {k}")));
    }
    let mut counts = vec![0usize; k];
    for &v in &target.values {
        counts[v as usize] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Fit(format!(
            "class `{}` absent from the training data",
            target.levels[c]
        )));
    }
    (0..k)
        .map(|c| fit(&ds.with_target(class_vs_rest(target, c))?))
        .collect()
}

/// Per-row class probabilities `s(f_c) / Σ s(f_c')` from per-class scores.
pub fn normalize_ovr(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = scores.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let s: Vec<f64> = scores.iter().map(|c| sigmoid(c[i])).collect();
            let total: f64 = s.iter().sum();
            if total > 0.0 {
                s.iter().map(|v| v / total).collect()
            } else {
                vec![1.0 / s.len() as f64; s.len()]
            }
        })
        .collect()
}
