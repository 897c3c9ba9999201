//! Base learners `b_k(x | θ)`: design construction, penalized least-squares fits
//! and prediction for every structured learner kind.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::basis::{
    bspline_design, center_spline_basis, df_to_lambda, difference_penalty, dummy_encode, tensor_product,
    CenteringTransform, Design, KnotVector, SparseRows,
};
use crate::data::Dataset;
use crate::error::{BasisError, Error, Result};
use crate::linalg::{psd_rank, Matrix, SpdSolver, Vector};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaseLearnerKind {
    Linear { feature: String },
    CenteredSpline { feature: String },
    CategoricalRidge { feature: String },
    CatCatInteraction { first: String, second: String },
    VaryingCoefficient { categorical: String, numeric: String },
    TensorSpline { first: String, second: String },
    DeepTree,
}

impl BaseLearnerKind {
    pub fn features(&self) -> Vec<&str> {
        match self {
            BaseLearnerKind::Linear { feature }
            | BaseLearnerKind::CenteredSpline { feature }
            | BaseLearnerKind::CategoricalRidge { feature } => vec![feature],
            BaseLearnerKind::CatCatInteraction { first, second } | BaseLearnerKind::TensorSpline { first, second } => {
                vec![first, second]
            }
            BaseLearnerKind::VaryingCoefficient { categorical, numeric } => vec![categorical, numeric],
            BaseLearnerKind::DeepTree => Vec::new(),
        }
    }

    pub fn is_pair(&self) -> bool {
        self.features().len() == 2
    }

    /// True for learners modelling deviations from linearity.
    pub fn is_nonlinear(&self) -> bool {
        matches!(self, BaseLearnerKind::CenteredSpline { .. })
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            BaseLearnerKind::Linear { .. } => "linear",
            BaseLearnerKind::CenteredSpline { .. } => "centered_spline",
            BaseLearnerKind::CategoricalRidge { .. } => "categorical_ridge",
            BaseLearnerKind::CatCatInteraction { .. } => "cat_cat_interaction",
            BaseLearnerKind::VaryingCoefficient { .. } => "varying_coefficient",
            BaseLearnerKind::TensorSpline { .. } => "tensor_spline",
            BaseLearnerKind::DeepTree => "deep_tree",
        }
    }
}

impl fmt::Display for BaseLearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let feats = self.features();
        write!(f, "{}({})", self.short_name(), feats.join(","))
    }
}

/// Everything needed to rebuild a learner's design on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case")]
pub enum LearnerMeta {
    Linear,
    CenteredSpline {
        knots: KnotVector,
        centering: CenteringTransform,
    },
    CategoricalRidge {
        n_levels: usize,
    },
    CatCat {
        n_first: usize,
        n_second: usize,
    },
    VaryingCoefficient {
        n_levels: usize,
    },
    TensorSpline {
        knots_first: KnotVector,
        knots_second: KnotVector,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisOptions {
    pub n_interior: usize,
    pub degree: usize,
    pub penalty_order: usize,
    pub tensor_interior: usize,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions {
            n_interior: 20,
            degree: 3,
            penalty_order: 2,
            tensor_interior: 10,
        }
    }
}

fn range_of(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

fn no_missing_numeric(name: &str, x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Schema(format!(
            "numeric column `{name}` has missing or non-finite values"
        )));
    }
    Ok(())
}

fn levels_of<'a>(ds: &'a Dataset, name: &str) -> Result<(&'a [u32], usize)> {
    let (codes, levels) = ds.categorical(name)?;
    Ok((codes, levels.len()))
}

fn numeric_of<'a>(ds: &'a Dataset, name: &str) -> Result<&'a [f64]> {
    let x = ds.numeric(name)?;
    no_missing_numeric(name, x)?;
    Ok(x)
}

fn check_levels(name: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::Schema(format!(
            "column `{name}` has {found} levels, learner was built with {expected}"
        )));
    }
    Ok(())
}

fn varying_design(codes: &[u32], n_levels: usize, x: &[f64]) -> Result<SparseRows> {
    let mut out = SparseRows::with_capacity(2 * n_levels, codes.len(), 2);
    for (&c, &xi) in codes.iter().zip(x) {
        if c as usize >= n_levels {
            return Err(BasisError::Dimension(format!("level code {c} outside 0..{n_levels}")).into());
        }
        out.push_row([(c as usize, 1.0), (n_levels + c as usize, xi)]);
    }
    Ok(out)
}

fn catcat_codes(a: &[u32], b: &[u32], n_second: usize) -> Vec<u32> {
    a.iter().zip(b).map(|(&x, &y)| x * n_second as u32 + y).collect()
}

/// Build the design, penalty and rebuild metadata of `kind` on `ds`.
pub fn build_design(
    kind: &BaseLearnerKind,
    ds: &Dataset,
    opts: &BasisOptions,
) -> Result<(Design, Matrix, LearnerMeta)> {
    match kind {
        BaseLearnerKind::Linear { feature } => {
            let x = numeric_of(ds, feature)?;
            let mut raw = SparseRows::with_capacity(2, x.len(), 2);
            for &xi in x {
                raw.push_row([(0, 1.0), (1, xi)]);
            }
            Ok((Design::sparse(raw), Matrix::identity(2, 2), LearnerMeta::Linear))
        }
        BaseLearnerKind::CenteredSpline { feature } => {
            let x = numeric_of(ds, feature)?;
            let (lo, hi) = range_of(x);
            let knots = KnotVector::equidistant(lo, hi, opts.n_interior, opts.degree)?;
            let b = bspline_design(x, &knots)?;
            let p = difference_penalty(opts.penalty_order, knots.dim())?;
            let (centering, design, pen) = center_spline_basis(&b, x, &p)?;
            Ok((design, pen, LearnerMeta::CenteredSpline { knots, centering }))
        }
        BaseLearnerKind::CategoricalRidge { feature } => {
            let (codes, n) = levels_of(ds, feature)?;
            let d = dummy_encode(codes, n)?;
            Ok((
                Design::sparse(d),
                Matrix::identity(n, n),
                LearnerMeta::CategoricalRidge { n_levels: n },
            ))
        }
        BaseLearnerKind::CatCatInteraction { first, second } => {
            let (a, na) = levels_of(ds, first)?;
            let (b, nb) = levels_of(ds, second)?;
            let width = na * nb;
            let d = dummy_encode(&catcat_codes(a, b, nb), width)?;
            Ok((
                Design::sparse(d),
                Matrix::identity(width, width),
                LearnerMeta::CatCat {
                    n_first: na,
                    n_second: nb,
                },
            ))
        }
        BaseLearnerKind::VaryingCoefficient { categorical, numeric } => {
            let (codes, n) = levels_of(ds, categorical)?;
            let x = numeric_of(ds, numeric)?;
            let d = varying_design(codes, n, x)?;
            Ok((
                Design::sparse(d),
                Matrix::identity(2 * n, 2 * n),
                LearnerMeta::VaryingCoefficient { n_levels: n },
            ))
        }
        BaseLearnerKind::TensorSpline { first, second } => {
            let x1 = numeric_of(ds, first)?;
            let x2 = numeric_of(ds, second)?;
            let (l1, h1) = range_of(x1);
            let (l2, h2) = range_of(x2);
            let k1 = KnotVector::equidistant(l1, h1, opts.tensor_interior, opts.degree)?;
            let k2 = KnotVector::equidistant(l2, h2, opts.tensor_interior, opts.degree)?;
            let b1 = bspline_design(x1, &k1)?;
            let b2 = bspline_design(x2, &k2)?;
            let p1 = difference_penalty(opts.penalty_order, k1.dim())?;
            let p2 = difference_penalty(opts.penalty_order, k2.dim())?;
            let (d, pen) = tensor_product(&b1, &b2, &p1, &p2)?;
            Ok((
                Design::sparse(d),
                pen,
                LearnerMeta::TensorSpline {
                    knots_first: k1,
                    knots_second: k2,
                },
            ))
        }
        BaseLearnerKind::DeepTree => Err(Error::Fit(
            "deep trees have no design matrix; use the tree module".into(),
        )),
    }
}

/// Rebuild the design of a learner on new rows from its stored metadata.
pub fn design_for(kind: &BaseLearnerKind, meta: &LearnerMeta, ds: &Dataset) -> Result<Design> {
    match (kind, meta) {
        (BaseLearnerKind::Linear { feature }, LearnerMeta::Linear) => {
            let x = numeric_of(ds, feature)?;
            let mut raw = SparseRows::with_capacity(2, x.len(), 2);
            for &xi in x {
                raw.push_row([(0, 1.0), (1, xi)]);
            }
            Ok(Design::sparse(raw))
        }
        (BaseLearnerKind::CenteredSpline { feature }, LearnerMeta::CenteredSpline { knots, centering }) => {
            let x = numeric_of(ds, feature)?;
            Ok(Design {
                raw: bspline_design(x, knots)?,
                transform: Some(centering.projection.clone()),
            })
        }
        (BaseLearnerKind::CategoricalRidge { feature }, LearnerMeta::CategoricalRidge { n_levels }) => {
            let (codes, n) = levels_of(ds, feature)?;
            check_levels(feature, n, *n_levels)?;
            Ok(Design::sparse(dummy_encode(codes, n)?))
        }
        (BaseLearnerKind::CatCatInteraction { first, second }, LearnerMeta::CatCat { n_first, n_second }) => {
            let (a, na) = levels_of(ds, first)?;
            let (b, nb) = levels_of(ds, second)?;
            check_levels(first, na, *n_first)?;
            check_levels(second, nb, *n_second)?;
            Ok(Design::sparse(dummy_encode(&catcat_codes(a, b, nb), na * nb)?))
        }
        (
            BaseLearnerKind::VaryingCoefficient { categorical, numeric },
            LearnerMeta::VaryingCoefficient { n_levels },
        ) => {
            let (codes, n) = levels_of(ds, categorical)?;
            check_levels(categorical, n, *n_levels)?;
            let x = numeric_of(ds, numeric)?;
            Ok(Design::sparse(varying_design(codes, n, x)?))
        }
        (
            BaseLearnerKind::TensorSpline { first, second },
            LearnerMeta::TensorSpline {
                knots_first,
                knots_second,
            },
        ) => {
            let b1 = bspline_design(numeric_of(ds, first)?, knots_first)?;
            let b2 = bspline_design(numeric_of(ds, second)?, knots_second)?;
            let (q1, q2) = (b1.n_cols(), b2.n_cols());
            let mut raw = SparseRows::with_capacity(q1 * q2, b1.n_rows(), 16);
            for i in 0..b1.n_rows() {
                let (c1, v1) = b1.row(i);
                let (c2, v2) = b2.row(i);
                let mut entries = Vec::with_capacity(c1.len() * c2.len());
                for (&a, &x) in c1.iter().zip(v1) {
                    for (&b, &y) in c2.iter().zip(v2) {
                        entries.push((a as usize * q2 + b as usize, x * y));
                    }
                }
                raw.push_row(entries);
            }
            Ok(Design::sparse(raw))
        }
        _ => Err(Error::Fit(format!("metadata does not match learner {kind}"))),
    }
}

/// `θ = (XᵀX + λP)⁻¹ Xᵀ r`
pub fn fit_pls(design: &Design, penalty: &Matrix, lambda: f64, residuals: &[f64]) -> Result<Vec<f64>> {
    if design.n_rows() != residuals.len() {
        return Err(BasisError::Dimension(format!(
            "design has {} rows, residuals {}",
            design.n_rows(),
            residuals.len()
        ))
        .into());
    }
    if residuals.iter().any(|r| !r.is_finite()) || !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Fit("non-finite inputs to penalized least squares".into()));
    }
    let a = design.gram() + penalty * lambda;
    let solver = SpdSolver::new(&a)?;
    Ok(solver.solve(&design.t_mul(residuals)).as_slice().to_vec())
}

/// A learner with its design fixed on training rows, smoothing parameter calibrated
/// to a target df, and the normal equations factorized once.
#[derive(Debug, Clone)]
pub struct PreparedLearner {
    pub kind: BaseLearnerKind,
    pub meta: LearnerMeta,
    pub design: Design,
    pub penalty: Matrix,
    pub gram: Matrix,
    pub lambda: f64,
    pub df: f64,
    solver: SpdSolver,
}

impl PreparedLearner {
    pub fn prepare(kind: BaseLearnerKind, ds: &Dataset, df: f64, opts: &BasisOptions) -> Result<Self> {
        let (design, penalty, meta) = build_design(&kind, ds, opts)?;
        let gram = design.gram();
        let rank = psd_rank(&gram);
        if rank == 0 {
            return Err(BasisError::RankDeficient(format!("{kind} has an all-zero design")).into());
        }
        let lambda = df_to_lambda(&gram, &penalty, df)?;
        let solver = SpdSolver::new(&(&gram + &penalty * lambda))?;
        Ok(PreparedLearner {
            df: df.min(rank as f64),
            kind,
            meta,
            design,
            penalty,
            gram,
            lambda,
            solver,
        })
    }

    /// Fit to residuals; returns `(θ, SSE)`. `rr` is `Σ r²`.
    pub fn fit(&self, residuals: &[f64], rr: f64) -> (Vec<f64>, f64) {
        let b = self.design.t_mul(residuals);
        let theta = self.solver.solve(&b);
        let g_theta = &self.gram * &theta;
        let sse = rr - 2.0 * theta.dot(&b) + theta.dot(&g_theta);
        (theta.as_slice().to_vec(), sse)
    }

    pub fn fitted(&self, theta: Vec<f64>) -> FittedBaseLearner {
        FittedBaseLearner {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            theta,
            lambda: self.lambda,
            df: self.df,
        }
    }

    /// Effective degrees of freedom at the calibrated λ.
    pub fn hat_trace(&self) -> f64 {
        let a = &self.gram + &self.penalty * self.lambda;
        SpdSolver::new(&a)
            .map(|s| s.solve_matrix(&self.gram).trace())
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBaseLearner {
    pub kind: BaseLearnerKind,
    pub meta: LearnerMeta,
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub df: f64,
}

impl FittedBaseLearner {
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let d = design_for(&self.kind, &self.meta, ds)?;
        if d.n_cols() != self.theta.len() {
            return Err(Error::Schema(format!(
                "{} design width {} does not match {} coefficients",
                self.kind,
                d.n_cols(),
                self.theta.len()
            )));
        }
        Ok(d.mul(&self.theta))
    }

    /// Coefficient addition of two learners with identical kind and metadata.
    pub fn add(&mut self, other: &FittedBaseLearner) -> Result<()> {
        if self.kind != other.kind || self.meta != other.meta || self.theta.len() != other.theta.len() {
            return Err(Error::Fit(format!(
                "cannot aggregate {} with {}",
                self.kind, other.kind
            )));
        }
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            *a += b;
        }
        Ok(())
    }

    /// Coefficients in the raw spline basis (centered splines only).
    pub fn raw_coefficients(&self) -> Vec<f64> {
        match &self.meta {
            LearnerMeta::CenteredSpline { centering, .. } => (&centering.projection
                * Vector::from_column_slice(&self.theta))
            .as_slice()
            .to_vec(),
            _ => self.theta.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnData, ColumnKind, ColumnSchema};
    use rand::Rng;

    fn mixed_ds(n: usize, seed: u64) -> Dataset {
        let mut r = crate::data::seeded_rng(seed);
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..5.0)).collect();
        let c: Vec<u32> = (0..n).map(|_| r.gen_range(0..3)).collect();
        let d: Vec<u32> = (0..n).map(|_| r.gen_range(0..2)).collect();
        let schema = vec![
            ColumnSchema {
                name: "x".into(),
                kind: ColumnKind::Numeric,
                levels: vec![],
                missing_count: 0,
            },
            ColumnSchema {
                name: "z".into(),
                kind: ColumnKind::Numeric,
                levels: vec![],
                missing_count: 0,
            },
            ColumnSchema {
                name: "c".into(),
                kind: ColumnKind::Categorical,
                levels: vec!["a".into(), "b".into(), "c".into()],
                missing_count: 0,
            },
            ColumnSchema {
                name: "d".into(),
                kind: ColumnKind::Categorical,
                levels: vec!["u".into(), "v".into()],
                missing_count: 0,
            },
        ];
        Dataset::new(
            schema,
            vec![
                ColumnData::Numeric(x),
                ColumnData::Numeric(z),
                ColumnData::Categorical(c),
                ColumnData::Categorical(d),
            ],
            None,
        )
        .unwrap()
    }

    fn all_kinds() -> Vec<BaseLearnerKind> {
        vec![
            BaseLearnerKind::Linear { feature: "x".into() },
            BaseLearnerKind::CenteredSpline { feature: "x".into() },
            BaseLearnerKind::CategoricalRidge { feature: "c".into() },
            BaseLearnerKind::CatCatInteraction {
                first: "c".into(),
                second: "d".into(),
            },
            BaseLearnerKind::VaryingCoefficient {
                categorical: "c".into(),
                numeric: "z".into(),
            },
            BaseLearnerKind::TensorSpline {
                first: "x".into(),
                second: "z".into(),
            },
        ]
    }

    #[test]
    fn design_shapes() {
        let ds = mixed_ds(200, 1);
        let opts = BasisOptions::default();
        let (d, _, _) = build_design(&all_kinds()[0], &ds, &opts).unwrap();
        assert_eq!((d.n_rows(), d.n_cols()), (200, 2));
        let dd = d.to_dense();
        assert_eq!(dd[(3, 0)], 1.0);
        assert_eq!(dd[(3, 1)], ds.numeric("x").unwrap()[3]);
        let (d, p, _) = build_design(&all_kinds()[2], &ds, &opts).unwrap();
        assert_eq!(d.n_cols(), 3);
        assert_eq!(p, Matrix::identity(3, 3));
        let (d, _, _) = build_design(&all_kinds()[4], &ds, &opts).unwrap();
        assert_eq!(d.n_cols(), 6);
        let (d, _, _) = build_design(&all_kinds()[1], &ds, &opts).unwrap();
        assert_eq!(d.n_cols(), 22);
        let (d, _, _) = build_design(&all_kinds()[5], &ds, &opts).unwrap();
        assert_eq!(d.n_cols(), 14 * 14);
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let ds = mixed_ds(150, 2);
        let opts = BasisOptions::default();
        for kind in all_kinds() {
            let (d, _, meta) = build_design(&kind, &ds, &opts).unwrap();
            let (d2, _, meta2) = build_design(&kind, &ds, &opts).unwrap();
            assert_eq!(d, d2);
            assert_eq!(meta, meta2);
            let rebuilt = design_for(&kind, &meta, &ds).unwrap();
            assert_eq!(rebuilt.to_dense(), d.to_dense(), "{kind}");
        }
    }

    #[test]
    fn exact_line_fit() {
        let ds = Dataset::from_numeric(vec![("x", vec![0.0, 1.0, 2.0])], None).unwrap();
        let kind = BaseLearnerKind::Linear { feature: "x".into() };
        let (d, p, _) = build_design(&kind, &ds, &BasisOptions::default()).unwrap();
        let theta = fit_pls(&d, &p, 0.0, &[1.0, 3.0, 5.0]).unwrap();
        assert!((theta[0] - 1.0).abs() < 1e-12 && (theta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_ridge_shrinks_to_zero() {
        let ds = mixed_ds(100, 3);
        let kind = BaseLearnerKind::CategoricalRidge { feature: "c".into() };
        let (d, p, _) = build_design(&kind, &ds, &BasisOptions::default()).unwrap();
        let r: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let theta = fit_pls(&d, &p, 1e12, &r).unwrap();
        assert!(theta.iter().all(|t| t.abs() <= 1e-6));
    }

    #[test]
    fn small_ridge_system_matches_hand_inverse() {
        // X = [[1,0],[1,1],[1,2]], r = (0,1,1), λ = 1, P = I
        // XᵀX + I = [[4,3],[3,6]], Xᵀr = (2,3); inverse = [[6,-3],[-3,4]]/15, θ = (0.2, 0.4)
        let x = Matrix::from_row_slice(3, 2, &[1., 0., 1., 1., 1., 2.]);
        let mut raw = SparseRows::with_capacity(2, 3, 2);
        for i in 0..3 {
            raw.push_row([(0, x[(i, 0)]), (1, x[(i, 1)])]);
        }
        let theta = fit_pls(&Design::sparse(raw), &Matrix::identity(2, 2), 1.0, &[0., 1., 1.]).unwrap();
        let oracle = [(6.0 * 2.0 - 3.0 * 3.0) / 15.0, (-3.0 * 2.0 + 4.0 * 3.0) / 15.0];
        assert!((theta[0] - oracle[0]).abs() < 1e-12);
        assert!((theta[1] - oracle[1]).abs() < 1e-12);
    }

    #[test]
    fn calibrated_trace_matches_df() {
        let ds = mixed_ds(300, 4);
        for kind in all_kinds() {
            let p = PreparedLearner::prepare(kind.clone(), &ds, 5.0, &BasisOptions::default()).unwrap();
            let tr = p.hat_trace();
            let expected = p.df;
            assert!((tr - expected).abs() < 1e-5, "{kind}: trace {tr} vs df {expected}");
        }
    }

    #[test]
    fn sse_never_worse_than_null_at_zero_lambda() {
        let ds = mixed_ds(120, 5);
        let kind = BaseLearnerKind::Linear { feature: "x".into() };
        let p = PreparedLearner::prepare(kind, &ds, 5.0, &BasisOptions::default()).unwrap();
        let r: Vec<f64> = (0..120).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let (_, sse) = p.fit(&r, rr);
        assert!(sse <= rr + 1e-9);
    }

    #[test]
    fn prediction_is_linear_in_theta() {
        let ds = mixed_ds(80, 6);
        let opts = BasisOptions::default();
        let kind = BaseLearnerKind::CenteredSpline { feature: "x".into() };
        let p = PreparedLearner::prepare(kind, &ds, 5.0, &opts).unwrap();
        let q = p.design.n_cols();
        let zero = p.fitted(vec![0.0; q]);
        assert!(zero.predict(&ds).unwrap().iter().all(|&v| v == 0.0));
        let a = p.fitted((0..q).map(|i| i as f64 * 0.1).collect());
        let b = p.fitted((0..q).map(|i| (q - i) as f64 * 0.05).collect());
        let mut ab = a.clone();
        ab.add(&b).unwrap();
        let (pa, pb, pab) = (
            a.predict(&ds).unwrap(),
            b.predict(&ds).unwrap(),
            ab.predict(&ds).unwrap(),
        );
        for i in 0..ds.n_rows() {
            assert!((pa[i] + pb[i] - pab[i]).abs() < 1e-10);
        }
        let mut other = p.fitted(vec![0.0; q]);
        other.kind = BaseLearnerKind::CenteredSpline { feature: "z".into() };
        assert!(ab.add(&other).is_err());
    }

    #[test]
    fn training_predictions_equal_design_times_theta() {
        let ds = mixed_ds(90, 7);
        let kind = BaseLearnerKind::TensorSpline {
            first: "x".into(),
            second: "z".into(),
        };
        let p = PreparedLearner::prepare(kind, &ds, 5.0, &BasisOptions::default()).unwrap();
        let r: Vec<f64> = ds.numeric("x").unwrap().iter().map(|x| x * x).collect();
        let rr = r.iter().map(|v| v * v).sum();
        let (theta, _) = p.fit(&r, rr);
        let direct = p.design.mul(&theta);
        let pred = p.fitted(theta).predict(&ds).unwrap();
        for (a, b) in direct.iter().zip(&pred) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn centered_learner_ignores_linear_residuals() {
        let ds = mixed_ds(200, 8);
        let x = ds.numeric("x").unwrap();
        let r: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let kind = BaseLearnerKind::CenteredSpline { feature: "x".into() };
        let (d, p, _) = build_design(&kind, &ds, &BasisOptions::default()).unwrap();
        let theta = fit_pls(&d, &p, 0.0, &r).unwrap();
        let fitted = d.mul(&theta);
        assert!(fitted.iter().all(|v| v.abs() <= 1e-6));
    }

    #[test]
    fn linear_plus_centered_reproduce_unpenalized_spline() {
        // Oracle: direct least squares on the raw B-spline basis with the same knots.
        let ds = mixed_ds(250, 9);
        let x = ds.numeric("x").unwrap();
        let y: Vec<f64> = x.iter().map(|v| v * v * v - 0.5 * v * v + 0.2).collect();
        let opts = BasisOptions::default();
        let lin = BaseLearnerKind::Linear { feature: "x".into() };
        let cen = BaseLearnerKind::CenteredSpline { feature: "x".into() };
        let (dl, pl, _) = build_design(&lin, &ds, &opts).unwrap();
        let (dc, pc, meta) = build_design(&cen, &ds, &opts).unwrap();
        let fl = dl.mul(&fit_pls(&dl, &pl, 0.0, &y).unwrap());
        let fc = dc.mul(&fit_pls(&dc, &pc, 0.0, &y).unwrap());
        let LearnerMeta::CenteredSpline { knots, .. } = meta else {
            panic!()
        };
        let b = bspline_design(x, &knots).unwrap().to_dense();
        let beta = (b.transpose() * &b)
            .cholesky()
            .unwrap()
            .solve(&(b.transpose() * Vector::from_column_slice(&y)));
        let oracle = &b * beta;
        for i in 0..y.len() {
            assert!((fl[i] + fc[i] - oracle[i]).abs() < 1e-6);
        }
    }
}
