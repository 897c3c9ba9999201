//! Variable importance, explained-risk fractions, partial effects, interaction
//! surfaces and per-row prediction decompositions of a fitted model.

use serde::{Deserialize, Serialize};

use crate::baselearners::BaseLearnerKind;
use crate::boosting::{BoostTrace, StageModel};
use crate::data::{ColumnData, ColumnKind, ColumnSchema, Dataset};
use crate::error::{Error, Result};
use crate::stages::{AcwbModel, RiskCheckpoints};

pub const DEFAULT_CURVE_GRID: usize = 100;
pub const DEFAULT_SURFACE_GRID: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VipStage {
    Uni,
    Pint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VipEntry {
    /// Feature name, or `first:second` for pairs.
    pub term: String,
    pub stage: VipStage,
    pub vip: f64,
}

fn term_of(kind: &BaseLearnerKind) -> String {
    kind.features().join(":")
}

fn risk_drops(trace: &BoostTrace) -> impl Iterator<Item = (usize, f64)> + '_ {
    let mut prev = trace.initial_train_risk;
    trace.accepted().iter().map(move |r| {
        let d = prev - r.train_risk;
        prev = r.train_risk;
        (r.learner, d)
    })
}

fn stage_vip(stage: &StageModel, which: VipStage, out: &mut Vec<VipEntry>) {
    for (k, drop) in risk_drops(&stage.trace) {
        let term = term_of(&stage.candidates[k]);
        match out.iter_mut().find(|e| e.term == term && e.stage == which) {
            Some(e) => e.vip += drop,
            None => out.push(VipEntry {
                term,
                stage: which,
                vip: drop,
            }),
        }
    }
}

/// Training-risk reduction per feature (stage 1) and per pair (stage 2), sorted
/// descending.
pub fn variable_importance(model: &AcwbModel) -> Vec<VipEntry> {
    let mut out = Vec::new();
    stage_vip(&model.uni, VipStage::Uni, &mut out);
    if let Some(p) = &model.pint {
        stage_vip(p, VipStage::Pint, &mut out);
    }
    out.sort_by(|a, b| b.vip.total_cmp(&a.vip).then_with(|| a.term.cmp(&b.term)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub learner: String,
    pub train_risk: f64,
    pub val_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub ran: bool,
    pub iterations: usize,
    pub stopped_at: usize,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub rho_uni: f64,
    pub rho_pint: f64,
    pub rho_deep: f64,
    /// How the interaction fraction is read: relative to the univariate checkpoint.
    pub rho_pint_reading: String,
    pub checkpoints: RiskCheckpoints,
    pub validation_checkpoints: RiskCheckpoints,
    pub delta_r: f64,
    /// Stage-1 explained risk split by learner type.
    pub uni_linear: f64,
    pub uni_nonlinear: f64,
    pub uni_categorical: f64,
    pub uni: StageSummary,
    pub pint: StageSummary,
    pub deep: StageSummary,
    pub diagnostics: Vec<String>,
}

fn summarize(trace: Option<&BoostTrace>, name: impl Fn(usize) -> String) -> StageSummary {
    match trace {
        None => StageSummary {
            ran: false,
            iterations: 0,
            stopped_at: 0,
            trace: Vec::new(),
        },
        Some(t) => StageSummary {
            ran: true,
            iterations: t.best_iteration,
            stopped_at: t.stopped_at,
            trace: t
                .records
                .iter()
                .map(|r| TracePoint {
                    iteration: r.iteration,
                    learner: name(r.learner),
                    train_risk: r.train_risk,
                    val_risk: r.val_risk,
                })
                .collect(),
        },
    }
}

pub fn complexity_report(model: &AcwbModel) -> ComplexityReport {
    let c = model.checkpoints;
    let delta = c.r0 - c.r_deep;
    let mut diagnostics = Vec::new();
    let (mut rho_uni, mut rho_pint, mut rho_deep) = if delta > 0.0 {
        (
            (c.r0 - c.r_uni) / delta,
            (c.r_uni - c.r_pint) / delta,
            (c.r_pint - c.r_deep) / delta,
        )
    } else {
        diagnostics.push("the model explained no training risk; all fractions reported as zero".into());
        (0.0, 0.0, 0.0)
    };
    for (name, rho) in [("uni", &mut rho_uni), ("pint", &mut rho_pint), ("deep", &mut rho_deep)] {
        if *rho < 0.0 {
            diagnostics.push(format!(
                "rho_{name} = {rho:e} clamped to 0 (stage raised training risk)"
            ));
            *rho = 0.0;
        }
    }
    let (mut lin, mut nonlin, mut cat) = (0.0, 0.0, 0.0);
    for (k, drop) in risk_drops(&model.uni.trace) {
        match &model.uni.candidates[k] {
            BaseLearnerKind::CenteredSpline { .. } => nonlin += drop,
            BaseLearnerKind::CategoricalRidge { .. } => cat += drop,
            _ => lin += drop,
        }
    }
    let uni_names = |k: usize| model.uni.candidates[k].to_string();
    ComplexityReport {
        rho_uni,
        rho_pint,
        rho_deep,
        rho_pint_reading: "telescoping_r_uni".into(),
        checkpoints: c,
        validation_checkpoints: model.val_checkpoints,
        delta_r: delta,
        uni_linear: lin,
        uni_nonlinear: nonlin,
        uni_categorical: cat,
        uni: summarize(Some(&model.uni.trace), uni_names),
        pint: summarize(model.pint.as_ref().map(|p| &p.trace), |k| {
            model
                .pint
                .as_ref()
                .map_or(String::new(), |p| p.candidates[k].to_string())
        }),
        deep: summarize(model.deep.as_ref().map(|d| &d.trace), |k| format!("tree_{k}")),
        diagnostics,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "values", rename_all = "snake_case")]
pub enum GridAxis {
    Numeric(Vec<f64>),
    Levels(Vec<String>),
}

impl GridAxis {
    pub fn len(&self) -> usize {
        match self {
            GridAxis::Numeric(v) => v.len(),
            GridAxis::Levels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, i: usize) -> String {
        match self {
            GridAxis::Numeric(v) => format!("{:?}", v[i]),
            GridAxis::Levels(v) => v[i].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub feature: String,
    pub grid: GridAxis,
    pub total: Vec<f64>,
    pub linear_part: Vec<f64>,
    pub nonlinear_part: Vec<f64>,
}

fn feature_schema(model: &AcwbModel, feature: &str) -> Result<ColumnSchema> {
    model
        .recipe
        .output_schema()
        .into_iter()
        .find(|s| s.name == feature)
        .ok_or_else(|| Error::Schema(format!("feature `{feature}` is not used by the model")))
}

fn feature_range(model: &AcwbModel, feature: &str) -> Result<(f64, f64)> {
    model
        .feature_ranges
        .iter()
        .find(|r| r.name == feature)
        .map(|r| (r.min, r.max))
        .ok_or_else(|| Error::Schema(format!("no training range recorded for `{feature}`")))
}

fn equidistant(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Grid values of one feature as a single-column dataset plus its axis.
fn axis_columns(model: &AcwbModel, feature: &str, grid_size: usize) -> Result<(ColumnSchema, GridAxis)> {
    let schema = feature_schema(model, feature)?;
    let axis = match schema.kind {
        ColumnKind::Numeric => {
            let (lo, hi) = feature_range(model, feature)?;
            GridAxis::Numeric(equidistant(lo, hi, grid_size.max(1)))
        }
        ColumnKind::Categorical => GridAxis::Levels(schema.levels.clone()),
    };
    Ok((schema, axis))
}

fn column_for(schema: &ColumnSchema, axis: &GridAxis, index: impl Iterator<Item = usize>) -> ColumnData {
    match axis {
        GridAxis::Numeric(v) => ColumnData::Numeric(index.map(|i| v[i]).collect()),
        GridAxis::Levels(_) => {
            let _ = schema;
            ColumnData::Categorical(index.map(|i| i as u32).collect())
        }
    }
}

fn stage_part(stage: &StageModel, kind: &BaseLearnerKind, ds: &Dataset) -> Result<Vec<f64>> {
    match stage.learner(kind) {
        Some(l) => l.predict(ds),
        None => Ok(vec![0.0; ds.n_rows()]),
    }
}

/// Univariate effect of one feature on an equidistant grid (numeric) or per level.
pub fn partial_effect(model: &AcwbModel, feature: &str, grid_size: usize) -> Result<EffectCurve> {
    let (schema, axis) = axis_columns(model, feature, grid_size)?;
    let n = axis.len();
    let ds = Dataset::new(vec![schema.clone()], vec![column_for(&schema, &axis, 0..n)], None)?;
    let (linear_part, nonlinear_part) = match schema.kind {
        ColumnKind::Numeric => (
            stage_part(
                &model.uni,
                &BaseLearnerKind::Linear {
                    feature: feature.into(),
                },
                &ds,
            )?,
            stage_part(
                &model.uni,
                &BaseLearnerKind::CenteredSpline {
                    feature: feature.into(),
                },
                &ds,
            )?,
        ),
        ColumnKind::Categorical => (
            stage_part(
                &model.uni,
                &BaseLearnerKind::CategoricalRidge {
                    feature: feature.into(),
                },
                &ds,
            )?,
            vec![0.0; n],
        ),
    };
    let total = linear_part.iter().zip(&nonlinear_part).map(|(a, b)| a + b).collect();
    Ok(EffectCurve {
        feature: feature.into(),
        grid: axis,
        total,
        linear_part,
        nonlinear_part,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSurface {
    pub first: String,
    pub second: String,
    pub learner: String,
    pub first_axis: GridAxis,
    pub second_axis: GridAxis,
    /// `values[a][b]` at `first_axis[a]`, `second_axis[b]`.
    pub values: Vec<Vec<f64>>,
}

/// Evaluate the aggregated pair learner over the Cartesian grid of two features.
pub fn interaction_surface(
    model: &AcwbModel,
    first: &str,
    second: &str,
    grid_size: usize,
) -> Result<InteractionSurface> {
    let pint = model
        .pint
        .as_ref()
        .ok_or_else(|| Error::Schema("the model has no interaction stage".into()))?;
    let kind = pint
        .candidates
        .iter()
        .find(|k| {
            let f = k.features();
            (f[0] == first && f[1] == second) || (f[0] == second && f[1] == first)
        })
        .ok_or_else(|| Error::Schema(format!("pair ({first}, {second}) is not in the model")))?
        .clone();
    let (s1, a1) = axis_columns(model, first, grid_size)?;
    let (s2, a2) = axis_columns(model, second, grid_size)?;
    let (n1, n2) = (a1.len(), a2.len());
    let ds = Dataset::new(
        vec![s1.clone(), s2.clone()],
        vec![
            column_for(&s1, &a1, (0..n1 * n2).map(|k| k / n2)),
            column_for(&s2, &a2, (0..n1 * n2).map(|k| k % n2)),
        ],
        None,
    )?;
    let flat = stage_part(pint, &kind, &ds)?;
    let values = flat.chunks(n2.max(1)).map(<[f64]>::to_vec).collect();
    Ok(InteractionSurface {
        first: first.into(),
        second: second.into(),
        learner: kind.short_name().into(),
        first_axis: a1,
        second_axis: a2,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub term: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub row: usize,
    pub offset: f64,
    pub univariate: Vec<Contribution>,
    pub pairs: Vec<Contribution>,
    pub deep: f64,
    pub total: f64,
}

impl Decomposition {
    pub fn sum(&self) -> f64 {
        self.offset
            + self.univariate.iter().map(|c| c.value).sum::<f64>()
            + self.pairs.iter().map(|c| c.value).sum::<f64>()
            + self.deep
    }
}

fn pooled(stage: &StageModel, ds: &Dataset, out: &mut Vec<Contribution>) -> Result<()> {
    for l in &stage.learners {
        let v = l.predict(ds)?[0];
        let term = term_of(&l.kind);
        match out.iter_mut().find(|c| c.term == term) {
            Some(c) => c.value += v,
            None => out.push(Contribution { term, value: v }),
        }
    }
    Ok(())
}

/// Split the score of row `row` of `ds` (raw, unprocessed) into additive terms.
pub fn decompose_prediction(model: &AcwbModel, ds: &Dataset, row: usize) -> Result<Decomposition> {
    if row >= ds.n_rows() {
        return Err(Error::Config(format!("row {row} out of range (0..{})", ds.n_rows())));
    }
    let prepared = model.prepare(ds)?;
    decompose_prepared(model, &prepared.select_rows(&[row]), row)
}

/// As [`decompose_prediction`] for an already preprocessed single-row dataset.
pub fn decompose_prepared(model: &AcwbModel, one: &Dataset, row: usize) -> Result<Decomposition> {
    let mut univariate = Vec::new();
    pooled(&model.uni, one, &mut univariate)?;
    let mut pairs = Vec::new();
    if let Some(p) = &model.pint {
        pooled(p, one, &mut pairs)?;
    }
    let deep = model.deep.as_ref().map_or(0.0, |d| d.predict(one)[0]);
    let total = model.stage_scores_prepared(one)?.total()[0];
    Ok(Decomposition {
        row,
        offset: model.offset,
        univariate,
        pairs,
        deep,
        total,
    })
}
