//! Interpretable AutoML on tabular data with three-stage componentwise boosting.
//!
//! The fitted predictor is `f = f_uni + f_pint + f_deep`:
//!
//! 1. univariate effects (linear + centered P-spline per numeric feature,
//!    ridge-penalized dummy encoding per categorical feature),
//! 2. pairwise interactions screened by a shallow random forest
//!    (tensor-product splines, varying coefficients, categorical pairs),
//! 3. a gradient-boosted ensemble of deep regression trees on what is left.
//!
//! Every stage is fitted by componentwise boosting with validation-based early
//! stopping. [`interpret`] turns a fitted model into variable importance,
//! explained-risk fractions, partial effects and per-row decompositions, and
//! [`hpo`] tunes the learning rate and the interaction fraction with Hyperband
//! using the training subsample rate as budget.

pub mod baselearners;
pub mod basis;
pub mod bench;
pub mod boosting;
pub mod config;
pub mod data;
pub mod error;
pub mod hpo;
pub mod interpret;
pub mod linalg;
pub mod loss;
pub mod model_io;
pub mod preprocess;
pub mod stages;
pub mod tree;

pub use crate::config::AcwbConfig;
pub use crate::data::{ColumnKind, Dataset, Task};
pub use crate::error::{Error, Result};
pub use crate::stages::{fit_acwb, AcwbModel, FittedModel};
