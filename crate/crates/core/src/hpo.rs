//! Hyperband over the learning rate and the interaction fraction, with the
//! training subsample fraction as budget.

use std::time::{Duration, Instant};

use log::{info, warn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AcwbConfig;
use crate::data::{seeded_rng, split, subsample, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::stages::{fit_acwb, FittedModel};

pub const NU_BOUNDS: (f64, f64) = (0.001, 0.5);
pub const PSI_BOUNDS: (f64, f64) = (0.01, 0.2);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpoConfig {
    pub nu: f64,
    pub psi: f64,
}

impl HpoConfig {
    pub fn new(nu: f64, psi: f64) -> Result<Self> {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !inside(nu, NU_BOUNDS) || !inside(psi, PSI_BOUNDS) {
            return Err(Error::Config(format!(
                "nu = {nu} must lie in [{}, {}] and psi = {psi} in [{}, {}]",
                NU_BOUNDS.0, NU_BOUNDS.1, PSI_BOUNDS.0, PSI_BOUNDS.1
            )));
        }
        Ok(HpoConfig { nu, psi })
    }

    pub fn apply(&self, base: &AcwbConfig) -> AcwbConfig {
        AcwbConfig {
            nu: self.nu,
            psi: self.psi,
            ..base.clone()
        }
    }
}

/// ν log-uniform, ψ uniform.
pub fn sample_config_with<R: Rng>(rng: &mut R) -> HpoConfig {
    let (lo, hi) = (NU_BOUNDS.0.ln(), NU_BOUNDS.1.ln());
    let nu = rng.gen_range(lo..=hi).exp().clamp(NU_BOUNDS.0, NU_BOUNDS.1);
    let psi = rng.gen_range(PSI_BOUNDS.0..=PSI_BOUNDS.1);
    HpoConfig { nu, psi }
}

pub fn sample_config(seed: u64) -> HpoConfig {
    sample_config_with(&mut seeded_rng(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub n_configs: usize,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: usize,
    pub rungs: Vec<Rung>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbandSchedule {
    pub eta: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub s_max: usize,
    /// Ordered `s = s_max, …, 0`.
    pub brackets: Vec<Bracket>,
}

impl HyperbandSchedule {
    pub fn new(eta: f64, r_min: f64, r_max: f64) -> Result<Self> {
        if !(eta > 1.0) || !eta.is_finite() {
            return Err(Error::Config(format!("eta = {eta} must exceed 1")));
        }
        if !(r_min > 0.0 && r_min <= r_max && r_max.is_finite()) {
            return Err(Error::Config(format!(
                "budgets need 0 < r_min <= r_max (r_min = {r_min}, r_max = {r_max})"
            )));
        }
        let s_max = ((r_max / r_min).ln() / eta.ln() + 1e-9).floor() as usize;
        let mut brackets = Vec::with_capacity(s_max + 1);
        for s in (0..=s_max).rev() {
            let n = ((s_max + 1) as f64 * eta.powi(s as i32) / (s + 1) as f64 - 1e-9).ceil() as usize;
            let mut rungs = Vec::with_capacity(s + 1);
            let mut n_i = n;
            for i in 0..=s {
                let budget = if i == s {
                    r_max
                } else {
                    r_max * eta.powi(i as i32 - s as i32)
                };
                if n_i == 0 || budget <= 0.0 {
                    return Err(Error::Config(format!("bracket s = {s} has an empty rung")));
                }
                rungs.push(Rung { n_configs: n_i, budget });
                n_i = (n_i as f64 / eta).floor() as usize;
            }
            brackets.push(Bracket { s, rungs });
        }
        Ok(HyperbandSchedule {
            eta,
            r_min,
            r_max,
            s_max,
            brackets,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub config_id: usize,
    pub nu: f64,
    pub psi: f64,
    pub budget: f64,
    /// `None` when the evaluation failed.
    pub risk: Option<f64>,
    pub seconds: f64,
    pub bracket: usize,
    pub rung: usize,
}

/// Evaluates a configuration at a budget fraction, returning a validation risk.
pub type Evaluator<'a> = dyn Fn(&HpoConfig, f64) -> Result<f64> + Sync + 'a;

fn rank(risks: &[(usize, Option<f64>)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..risks.len()).collect();
    let key = |i: usize| risks[i].1.filter(|r| r.is_finite()).unwrap_or(f64::INFINITY);
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(risks[a].0.cmp(&risks[b].0)));
    order
}

/// Successive halving over `configs` (indexed by `ids`). Budgets start at
/// `r0` and grow by `eta` until `r_max`. Returns the ids of the final rung,
/// best first.
#[allow(clippy::too_many_arguments)]
pub fn successive_halving(
    configs: &[HpoConfig],
    ids: &[usize],
    r0: f64,
    r_max: f64,
    eta: f64,
    evaluate: &Evaluator,
    bracket: usize,
    deadline: Option<Instant>,
    log: &mut Vec<EvalRecord>,
) -> Vec<usize> {
    assert_eq!(configs.len(), ids.len());
    let n_rungs = ((r_max / r0).ln() / eta.ln()).round().max(0.0) as usize + 1;
    let mut alive: Vec<usize> = (0..configs.len()).collect();
    for rung in 0..n_rungs {
        if alive.is_empty() || deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let budget = if rung + 1 == n_rungs {
            r_max
        } else {
            r0 * eta.powi(rung as i32)
        };
        let results: Vec<(usize, Option<f64>, f64)> = alive
            .par_iter()
            .map(|&c| {
                let start = Instant::now();
                let risk = match evaluate(&configs[c], budget) {
                    Ok(r) if r.is_finite() => Some(r),
                    Ok(r) => {
                        warn!("config {} at budget {budget}: non-finite risk {r}", ids[c]);
                        None
                    }
                    Err(e) => {
                        warn!("config {} at budget {budget} failed: {e}", ids[c]);
                        None
                    }
                };
                (c, risk, start.elapsed().as_secs_f64())
            })
            .collect();
        for &(c, risk, seconds) in &results {
            log.push(EvalRecord {
                config_id: ids[c],
                nu: configs[c].nu,
                psi: configs[c].psi,
                budget,
                risk,
                seconds,
                bracket,
                rung,
            });
        }
        let pairs: Vec<(usize, Option<f64>)> = results.iter().map(|&(c, r, _)| (c, r)).collect();
        let ranked: Vec<usize> = rank(&pairs).into_iter().map(|i| pairs[i].0).collect();
        if rung + 1 == n_rungs {
            return ranked.into_iter().map(|c| ids[c]).collect();
        }
        let keep = ((ranked.len() as f64 / eta).floor() as usize).max(1);
        alive = ranked.into_iter().take(keep).collect();
    }
    Vec::new()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbandResult {
    pub best: HpoConfig,
    pub best_id: usize,
    pub best_risk: f64,
    /// Whether `best` was evaluated at the maximum budget.
    pub full_budget: bool,
    pub log: Vec<EvalRecord>,
    pub schedule: HyperbandSchedule,
    pub truncated: bool,
}

/// Run every bracket `s = s_max, …, 0`; stop early when `max_time` elapses.
pub fn hyperband(
    schedule: &HyperbandSchedule,
    evaluate: &Evaluator,
    seed: u64,
    max_time: Option<Duration>,
) -> Result<HyperbandResult> {
    let deadline = max_time.map(|d| Instant::now() + d);
    let mut rng: ChaCha8Rng = seeded_rng(seed);
    let mut log = Vec::new();
    let mut next_id = 0;
    let mut truncated = false;
    let mut sampled: Vec<HpoConfig> = Vec::new();
    for b in &schedule.brackets {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            truncated = true;
            break;
        }
        let n = b.rungs[0].n_configs;
        let configs: Vec<HpoConfig> = (0..n).map(|_| sample_config_with(&mut rng)).collect();
        let ids: Vec<usize> = (next_id..next_id + n).collect();
        next_id += n;
        sampled.extend_from_slice(&configs);
        info!(
            "hyperband bracket s = {}: {n} configs from budget {:.4}",
            b.s, b.rungs[0].budget
        );
        successive_halving(
            &configs,
            &ids,
            b.rungs[0].budget,
            schedule.r_max,
            schedule.eta,
            evaluate,
            b.s,
            deadline,
            &mut log,
        );
    }
    if deadline.is_some_and(|d| Instant::now() >= d) {
        truncated = true;
    }
    let pick = |full: bool| {
        log.iter()
            .filter(|r| !full || r.budget >= schedule.r_max)
            .filter_map(|r| r.risk.map(|risk| (r.config_id, risk)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    };
    let (best_id, best_risk, full_budget) = match pick(true) {
        Some((id, r)) => (id, r, true),
        None => match pick(false) {
            Some((id, r)) => (id, r, false),
            None => return Err(Error::Fit("hyperband produced no successful evaluation".into())),
        },
    };
    Ok(HyperbandResult {
        best: sampled[best_id],
        best_id,
        best_risk,
        full_budget,
        log,
        schedule: schedule.clone(),
        truncated,
    })
}

/// Risk of a fitted model on held-out rows: the training loss for one model,
/// mean log-loss of the normalized probabilities for one-vs-rest models.
pub fn holdout_risk(model: &FittedModel, ds: &Dataset) -> Result<f64> {
    let y = &ds.target()?.values;
    match model {
        FittedModel::Single(m) => {
            let f = m.predict_scores(ds)?;
            Ok(m.loss.risk(y, &f))
        }
        FittedModel::OneVsRest { .. } => {
            let p = model.predict(ds)?;
            Ok(crate::bench::log_loss(&p.class_probabilities, y))
        }
    }
}

/// Build the evaluator: the validation split is carved from `ds` once; each
/// call fits on a stratified budget-sized subsample of the remaining rows.
pub fn make_evaluator(ds: &Dataset, base: &AcwbConfig) -> Result<impl Fn(&HpoConfig, f64) -> Result<f64> + Sync> {
    let task = ds.task().ok_or_else(|| Error::Config("tuning needs a target".into()))?;
    let outer = split(
        ds,
        &SplitSpec {
            validation_fraction: base.validation_fraction,
            seed: base.seed ^ 0x5eed_0f_4a11,
            stratify: task.is_classification(),
        },
    )?;
    let (train, validation) = (outer.train, outer.validation);
    let base = base.clone();
    Ok(move |cfg: &HpoConfig, budget: f64| -> Result<f64> {
        let sub = if budget >= 1.0 {
            train.clone()
        } else {
            subsample(&train, budget, base.seed ^ budget.to_bits())?
        };
        let model = fit_acwb(&sub, &cfg.apply(&base))?;
        holdout_risk(&model, &validation)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub eta: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub max_time: Option<Duration>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            eta: 3.0,
            r_min: 1.0 / 9.0,
            r_max: 1.0,
            max_time: None,
        }
    }
}

/// Hyperband with the default evaluator on `ds`.
pub fn tune(ds: &Dataset, base: &AcwbConfig, opts: &TuneOptions) -> Result<HyperbandResult> {
    let schedule = HyperbandSchedule::new(opts.eta, opts.r_min, opts.r_max)?;
    let eval = make_evaluator(ds, base)?;
    hyperband(&schedule, &eval, base.seed, opts.max_time)
}
