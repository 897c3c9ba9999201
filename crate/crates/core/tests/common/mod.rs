//! Property checks shared by the `properties` and `acceptance` targets.
//! Each returns `Err` with a description of the first violation.
#![allow(dead_code)]

use std::fmt::Write as _;

use acwb::basis::{bspline_design, center_spline_basis, df_to_lambda, difference_penalty, KnotVector};
use acwb::data::{parse_csv, CsvOptions, Target};
use acwb::hpo::HyperbandSchedule;
use acwb::interpret::{decompose_prediction, variable_importance, VipStage};
use acwb::linalg::Matrix;
use acwb::loss::Loss;
use acwb::stages::{fit_single, screen_interactions, ScreeningOptions};
use acwb::{fit_acwb, AcwbConfig, Dataset, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn regression(features: Vec<(&str, Vec<f64>)>, y: Vec<f64>) -> Dataset {
    let target = Target {
        name: "y".into(),
        values: y,
        levels: vec![],
        task: Task::Regression,
    };
    Dataset::from_numeric(features, Some(target)).unwrap()
}

/// `y = 1.5·x1 − x2 + 2·x1·x2 + 1.5·parity(x3, x4, x5) + noise`, with `x6` pure noise.
pub fn planted(n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    let y = (0..n)
        .map(|i| {
            let odd = [2, 3, 4].iter().filter(|&&j| x[j][i] > 0.0).count() % 2 == 1;
            let parity = if odd { 1.0 } else { -1.0 };
            1.5 * x[0][i] - x[1][i] + 2.0 * x[0][i] * x[1][i] + 1.5 * parity + 0.1 * r.gen_range(-1.0..1.0)
        })
        .collect();
    let names = ["x1", "x2", "x3", "x4", "x5", "x6"];
    regression(names.iter().copied().zip(x).collect(), y)
}

/// Mixed numeric/categorical binary task rendered through the CSV loader.
pub fn mixed_binary_csv(n: usize, seed: u64) -> String {
    let mut r = rng(seed);
    let mut s = String::from("a,b,colour,size,label\n");
    for _ in 0..n {
        let a: f64 = r.gen_range(-2.0..2.0);
        let b: f64 = r.gen_range(0.0..10.0);
        let colour = ["red", "green", "blue"][r.gen_range(0..3)];
        let size = ["s", "m", "l", "xl"][r.gen_range(0..4)];
        let bump = if colour == "red" { 1.0 } else { -0.5 };
        let f = a.sin() * 2.0 + 0.3 * (b - 5.0) + bump + if size == "xl" { a } else { 0.0 };
        let p = 1.0 / (1.0 + (-f).exp());
        let label = if r.gen::<f64>() < p { "pos" } else { "neg" };
        writeln!(s, "{a},{b},{colour},{size},{label}").unwrap();
    }
    s
}

pub fn mixed_binary(n: usize, seed: u64) -> Dataset {
    parse_csv(&mixed_binary_csv(n, seed), "label", None, &CsvOptions::default()).unwrap()
}

pub fn fast_config() -> AcwbConfig {
    AcwbConfig {
        rf_trees: 100,
        max_iters_uni: 2000,
        max_iters_pint: 2000,
        max_iters_deep: 200,
        ..AcwbConfig::default()
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn partition_of_unity() -> Check {
    let mut r = rng(1);
    for config in 0..20 {
        let degree = r.gen_range(1..=4usize);
        let min: f64 = r.gen_range(-50.0..50.0);
        let max = min + r.gen_range(0.1..100.0);
        let k = r.gen_range(1..=30usize);
        let mut interior: Vec<f64> = (0..k).map(|_| r.gen_range(min..max)).collect();
        interior.sort_by(f64::total_cmp);
        let kv = KnotVector::new(interior, degree, min, max).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..1000).map(|_| r.gen_range(min..=max)).collect();
        let b = bspline_design(&x, &kv).map_err(|e| e.to_string())?;
        for i in 0..x.len() {
            let s: f64 = b.row(i).1.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(format!("config {config}, x = {}: row sum {s}", x[i]));
            }
        }
    }
    Ok(())
}

pub fn centered_orthogonality() -> Check {
    let mut r = rng(2);
    for trial in 0..10 {
        let n = r.gen_range(60..400);
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..5.0)).collect();
        let (lo, hi) = x.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let kv = KnotVector::equidistant(lo, hi, 20, 3).map_err(|e| e.to_string())?;
        let raw = bspline_design(&x, &kv).map_err(|e| e.to_string())?;
        let p = difference_penalty(2, kv.dim()).map_err(|e| e.to_string())?;
        let (_, design, _) = center_spline_basis(&raw, &x, &p).map_err(|e| e.to_string())?;
        let d = design.to_dense();
        for j in 0..d.ncols() {
            let (mut c1, mut cx) = (0.0, 0.0);
            for i in 0..n {
                c1 += d[(i, j)];
                cx += d[(i, j)] * x[i];
            }
            if c1.abs() > 1e-8 || cx.abs() > 1e-8 {
                return Err(format!("trial {trial}, column {j}: <1,b> = {c1:e}, <x,b> = {cx:e}"));
            }
        }
    }
    Ok(())
}

/// Trace of the smoother from the generalized eigenvalues of (P, G):
/// with `G = VΛVᵀ` and `G^{-1/2} P G^{-1/2} = UDUᵀ`, `tr = Σ 1/(1 + λ dᵢ)`.
fn eigen_trace(g: &Matrix, p: &Matrix, lambda: f64) -> f64 {
    let e = g.clone().symmetric_eigen();
    let inv_sqrt = Matrix::from_diagonal(&e.eigenvalues.map(|v| 1.0 / v.sqrt()));
    let w = &e.eigenvectors * inv_sqrt * e.eigenvectors.transpose();
    let m = &w * p * &w;
    let d = ((&m + m.transpose()) * 0.5).symmetric_eigen().eigenvalues;
    d.iter().map(|&di| 1.0 / (1.0 + lambda * di.max(0.0))).sum()
}

pub fn df_to_lambda_oracle() -> Check {
    let mut r = rng(3);
    for inst in 0..50 {
        let q = r.gen_range(5..16usize);
        let n = q + r.gen_range(5..60usize);
        let x = Matrix::from_fn(n, q, |_, _| r.gen_range(-1.0..1.0));
        let g = x.transpose() * &x;
        let order = r.gen_range(1..=2usize);
        let p = difference_penalty(order, q).map_err(|e| e.to_string())?;
        let df = r.gen_range(order as f64 + 0.5..q as f64 - 0.5);
        let lambda = df_to_lambda(&g, &p, df).map_err(|e| format!("instance {inst}: {e}"))?;
        let t = eigen_trace(&g, &p, lambda);
        if (t - df).abs() > 1e-5 {
            return Err(format!("instance {inst}: df {df}, lambda {lambda}, oracle trace {t}"));
        }
    }
    Ok(())
}

pub fn pseudo_residual_gradient() -> Check {
    let mut r = rng(4);
    let h = 1e-5;
    for loss in [Loss::SquaredError, Loss::Binomial] {
        for _ in 0..100 {
            let f: f64 = r.gen_range(-8.0..8.0);
            let y = match loss {
                Loss::SquaredError => r.gen_range(-10.0..10.0),
                Loss::Binomial => f64::from(r.gen_bool(0.5)),
            };
            let fd = -(loss.value(y, f + h) - loss.value(y, f - h)) / (2.0 * h);
            let g = loss.negative_gradient(y, f);
            if (fd - g).abs() > 1e-6 {
                return Err(format!("{loss:?}, y = {y}, f = {f}: analytic {g}, numeric {fd}"));
            }
        }
    }
    Ok(())
}

fn random_task(seed: u64) -> Dataset {
    let mut r = rng(seed);
    let n = r.gen_range(80..250);
    let p = r.gen_range(2..6);
    let x: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| r.gen_range(-2.0..2.0)).collect())
        .collect();
    let w: Vec<f64> = (0..p).map(|_| r.gen_range(-2.0..2.0)).collect();
    let eta: Vec<f64> = (0..n)
        .map(|i| {
            (0..p)
                .map(|j| w[j] * if j % 2 == 0 { x[j][i] } else { x[j][i].sin() * 2.0 })
                .sum::<f64>()
        })
        .collect();
    let names: Vec<String> = (0..p).map(|j| format!("v{j}")).collect();
    let features = names.iter().map(String::as_str).zip(x).collect();
    if seed.is_multiple_of(2) {
        let y = eta.iter().map(|e| e + r.gen_range(-0.5..0.5)).collect();
        regression(features, y)
    } else {
        let y: Vec<f64> = eta
            .iter()
            .map(|&e| f64::from(r.gen::<f64>() < 1.0 / (1.0 + (-e).exp())))
            .collect();
        let target = Target {
            name: "y".into(),
            values: y,
            levels: vec!["0".into(), "1".into()],
            task: Task::BinaryClassification,
        };
        Dataset::from_numeric(features, Some(target)).unwrap()
    }
}

pub fn cwb_monotone_training_risk() -> Check {
    for seed in 0..20u64 {
        let ds = random_task(100 + seed);
        let cfg = AcwbConfig {
            deep: false,
            rf_trees: 50,
            psi: 0.5,
            seed,
            ..AcwbConfig::default()
        };
        let m = fit_single(&ds, &cfg).map_err(|e| format!("task {seed}: {e}"))?;
        let mut stages = vec![&m.uni];
        stages.extend(m.pint.as_ref());
        for st in stages {
            let mut prev = st.trace.initial_train_risk;
            for rec in &st.trace.records {
                if rec.train_risk > prev + 1e-12 {
                    return Err(format!(
                        "task {seed}, iteration {}: risk {} after {prev}",
                        rec.iteration, rec.train_risk
                    ));
                }
                prev = rec.train_risk;
            }
        }
    }
    Ok(())
}

pub fn aggregation_replay() -> Check {
    let ds = planted(400, 5);
    let m = fit_single(&ds, &fast_config()).map_err(|e| e.to_string())?;
    let prepared = m.prepare(&ds).map_err(|e| e.to_string())?;
    let mut stages = vec![&m.uni];
    stages.extend(m.pint.as_ref());
    for st in stages {
        let accepted = st.trace.accepted();
        if accepted.len() != st.updates.len() {
            return Err(format!(
                "{} accepted iterations, {} updates",
                accepted.len(),
                st.updates.len()
            ));
        }
        let mut replay = vec![0.0; prepared.n_rows()];
        for l in &st.learners {
            let mut sum = vec![0.0; l.theta.len()];
            for (rec, theta) in accepted.iter().zip(&st.updates) {
                if st.candidates[rec.learner] != l.kind {
                    continue;
                }
                for (s, t) in sum.iter_mut().zip(theta) {
                    *s += st.nu * t;
                }
                let mut step = l.clone();
                step.theta = theta.iter().map(|t| st.nu * t).collect();
                for (o, v) in replay
                    .iter_mut()
                    .zip(step.predict(&prepared).map_err(|e| e.to_string())?)
                {
                    *o += v;
                }
            }
            for (a, b) in sum.iter().zip(&l.theta) {
                if !rel_close(*a, *b, 1e-10) {
                    return Err(format!("{}: replayed coefficient {a}, aggregated {b}", l.kind));
                }
            }
        }
        let direct = st.predict(&prepared).map_err(|e| e.to_string())?;
        for (i, (a, b)) in replay.iter().zip(&direct).enumerate() {
            if !rel_close(*a, *b, 1e-10) {
                return Err(format!("row {i}: replayed {a}, aggregated {b}"));
            }
        }
    }
    Ok(())
}

pub fn vip_telescoping() -> Check {
    for (k, ds) in [planted(500, 6), mixed_binary(500, 6)].into_iter().enumerate() {
        let m = fit_single(&ds, &fast_config()).map_err(|e| e.to_string())?;
        let vip = variable_importance(&m);
        let c = m.checkpoints;
        let sum = |s: VipStage| vip.iter().filter(|e| e.stage == s).map(|e| e.vip).sum::<f64>();
        let (u, p) = (sum(VipStage::Uni), sum(VipStage::Pint));
        if (u - (c.r0 - c.r_uni)).abs() > 1e-8 || (p - (c.r_uni - c.r_pint)).abs() > 1e-8 {
            return Err(format!(
                "dataset {k}: vip sums ({u}, {p}) vs drops ({}, {})",
                c.r0 - c.r_uni,
                c.r_uni - c.r_pint
            ));
        }
    }
    Ok(())
}

pub fn decomposition_additivity() -> Check {
    for (k, ds) in [planted(500, 7), mixed_binary(500, 7)].into_iter().enumerate() {
        let m = fit_single(&ds, &fast_config()).map_err(|e| e.to_string())?;
        let full = m.predict_scores(&ds).map_err(|e| e.to_string())?;
        let mut r = rng(70 + k as u64);
        for _ in 0..100 {
            let row = r.gen_range(0..ds.n_rows());
            let d = decompose_prediction(&m, &ds, row).map_err(|e| e.to_string())?;
            if (d.sum() - full[row]).abs() > 1e-10 || (d.total - full[row]).abs() > 1e-10 {
                return Err(format!(
                    "dataset {k}, row {row}: parts {} vs score {}",
                    d.sum(),
                    full[row]
                ));
            }
        }
    }
    Ok(())
}

pub fn screening_finds_planted_pair() -> Check {
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut r = rng(800 + seed);
        let n = 500;
        let x: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 3.0 * x[0][i] * x[1][i] + 0.1 * r.gen_range(-1.0..1.0))
            .collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let resid: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let names = ["x1", "x2", "x3", "x4", "x5", "x6"];
        let ds = Dataset::from_numeric(names.iter().copied().zip(x).collect(), None).unwrap();
        let opts = ScreeningOptions {
            psi: 1.0,
            n_trees: 500,
            depth: 2,
            min_leaf: 5,
            seed,
        };
        let set = screen_interactions(&ds, &resid, &opts).map_err(|e| e.to_string())?;
        if let Some(bad) = set.pairs.iter().find(|p| p.first == p.second) {
            return Err(format!("seed {seed}: degenerate pair {bad:?}"));
        }
        let top = set.pairs.first().ok_or(format!("seed {seed}: no pairs"))?;
        let mut pair = [top.first.as_str(), top.second.as_str()];
        pair.sort();
        hits += usize::from(pair == ["x1", "x2"]);
    }
    if hits >= 18 {
        Ok(())
    } else {
        Err(format!("planted pair ranked first in {hits}/20 seeds"))
    }
}

pub fn hyperband_matches_construction() -> Check {
    for eta in [2u64, 3, 4] {
        for denom in [27u64, 9, 3] {
            let r_min = 1.0 / denom as f64;
            let sched = HyperbandSchedule::new(eta as f64, r_min, 1.0).map_err(|e| e.to_string())?;
            // largest s with eta^s <= r_max / r_min, in integers
            let mut s_max = 0u32;
            while eta.pow(s_max + 1) <= denom {
                s_max += 1;
            }
            let want: Vec<(usize, Vec<(u64, f64)>)> = (0..=s_max)
                .rev()
                .map(|s| {
                    let num = (s_max as u64 + 1) * eta.pow(s);
                    let n = num.div_ceil(s as u64 + 1);
                    let rungs = (0..=s).map(|i| (n / eta.pow(i), 1.0 / eta.pow(s - i) as f64)).collect();
                    (s as usize, rungs)
                })
                .collect();
            let got: Vec<(usize, Vec<(u64, f64)>)> = sched
                .brackets
                .iter()
                .map(|b| (b.s, b.rungs.iter().map(|r| (r.n_configs as u64, r.budget)).collect()))
                .collect();
            let same = want.len() == got.len()
                && want.iter().zip(&got).all(|(w, g)| {
                    w.0 == g.0
                        && w.1.len() == g.1.len()
                        && w.1
                            .iter()
                            .zip(&g.1)
                            .all(|(a, b)| a.0 == b.0 && rel_close(a.1, b.1, 1e-12))
                });
            if !same {
                return Err(format!("eta {eta}, r_min 1/{denom}: expected {want:?}, got {got:?}"));
            }
        }
    }
    Ok(())
}

pub fn model_roundtrip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut multi = String::from("u,v,k,cls\n");
    let mut r = rng(9);
    for _ in 0..300 {
        let u: f64 = r.gen_range(-1.0..1.0);
        let v: f64 = r.gen_range(-1.0..1.0);
        let k = ["p", "q"][r.gen_range(0..2)];
        let cls = if u + 0.2 * r.gen_range(-1.0..1.0) > 0.3 {
            "hi"
        } else if v > 0.0 {
            "mid"
        } else {
            "lo"
        };
        writeln!(multi, "{u},{v},{k},{cls}").unwrap();
    }
    let cases = [
        (planted(300, 8), true),
        (mixed_binary(400, 8), true),
        (parse_csv(&multi, "cls", None, &CsvOptions::default()).unwrap(), false),
    ];
    for (k, (ds, deep)) in cases.into_iter().enumerate() {
        let cfg = AcwbConfig { deep, ..fast_config() };
        let model = fit_acwb(&ds, &cfg).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("m{k}.acwb"));
        acwb::model_io::save_model(&model, &path).map_err(|e| e.to_string())?;
        let back = acwb::model_io::load_model(&path).map_err(|e| e.to_string())?;
        let a = model.predict(&ds).map_err(|e| e.to_string())?;
        let b = back.predict(&ds).map_err(|e| e.to_string())?;
        for (i, (x, y)) in a.score.iter().zip(&b.score).enumerate() {
            if !rel_close(*x, *y, 1e-12) {
                return Err(format!("case {k}, row {i}: {x} vs {y} after reload"));
            }
        }
        if a.class_probabilities != b.class_probabilities || a.predicted_class != b.predicted_class {
            return Err(format!("case {k}: class outputs differ after reload"));
        }
    }
    Ok(())
}

pub const PROPERTY_SUITE: [(&str, fn() -> Check); 11] = [
    ("B-spline partition of unity", partition_of_unity),
    ("centered basis orthogonal to [1, x]", centered_orthogonality),
    ("df_to_lambda vs eigen oracle", df_to_lambda_oracle),
    ("pseudo residuals vs finite differences", pseudo_residual_gradient),
    ("CWB training risk monotone", cwb_monotone_training_risk),
    ("parameter aggregation replay", aggregation_replay),
    ("VIP telescoping", vip_telescoping),
    ("decomposition additivity", decomposition_additivity),
    ("screening finds planted pair", screening_finds_planted_pair),
    ("Hyperband schedule construction", hyperband_matches_construction),
    ("model save/load round trip", model_roundtrip),
];
