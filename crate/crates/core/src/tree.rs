//! Weighted CART regression trees, grown level by level over presorted columns.
//! Used both for the shallow screening forest and for deep gradient boosting.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SplitRule {
    /// `x <= threshold` goes left.
    Threshold { threshold: f64 },
    /// Listed level codes go left, everything else (including unseen levels) right.
    Levels { left: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum total row weight in each child.
    pub min_leaf: usize,
    /// Features drawn per node; `None` uses all.
    pub mtry: Option<usize>,
}

enum FeatureColumn<'a> {
    Numeric { values: &'a [f64], order: Vec<u32> },
    Categorical { codes: &'a [u32], n_levels: usize },
}

/// Column views and sort orders shared by every tree grown on one dataset.
pub struct TreeData<'a> {
    columns: Vec<FeatureColumn<'a>>,
    n_rows: usize,
}

impl<'a> TreeData<'a> {
    pub fn new(ds: &'a Dataset) -> Self {
        let columns = ds
            .columns
            .iter()
            .zip(&ds.schema)
            .map(|(c, s)| match c {
                ColumnData::Numeric(v) => {
                    let mut order: Vec<u32> = (0..v.len() as u32).collect();
                    order.sort_by(|&a, &b| v[a as usize].total_cmp(&v[b as usize]));
                    FeatureColumn::Numeric { values: v, order }
                }
                ColumnData::Categorical(v) => FeatureColumn::Categorical {
                    codes: v,
                    n_levels: s.levels.len(),
                },
            })
            .collect();
        TreeData {
            columns,
            n_rows: ds.n_rows(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    w: f64,
    s: f64,
    q: f64,
}

struct Candidate {
    gain: f64,
    feature: usize,
    rule: SplitRule,
}

const NO_SLOT: u32 = u32::MAX;

/// Grow one tree on `residuals`; `weights` are row multiplicities (bootstrap
/// counts), `None` meaning all ones.
pub fn fit_tree<R: Rng>(
    data: &TreeData,
    residuals: &[f64],
    weights: Option<&[f64]>,
    params: &TreeParams,
    rng: &mut R,
) -> RegressionTree {
    let n = data.n_rows;
    assert_eq!(residuals.len(), n, "residual length must match rows");
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let min_leaf = params.min_leaf.max(1) as f64;
    let p = data.n_features();

    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut node_of: Vec<u32> = (0..n).map(|i| if weight(i) > 0.0 { 0 } else { NO_SLOT }).collect();
    let mut frontier = vec![0usize];

    for _depth in 0..params.max_depth {
        if frontier.is_empty() || p == 0 {
            break;
        }
        let mut slot_of = vec![NO_SLOT; nodes.len()];
        for (s, &node) in frontier.iter().enumerate() {
            slot_of[node] = s as u32;
        }
        let n_slots = frontier.len();
        let mut stats = vec![Stats::default(); n_slots];
        for i in 0..n {
            let node = node_of[i];
            if node == NO_SLOT {
                continue;
            }
            let s = slot_of[node as usize];
            if s == NO_SLOT {
                continue;
            }
            let (w, r) = (weight(i), residuals[i]);
            let st = &mut stats[s as usize];
            st.w += w;
            st.s += w * r;
            st.q += w * r * r;
        }
        let eligible: Vec<bool> = stats
            .iter()
            .map(|st| {
                let sse = st.q - st.s * st.s / st.w.max(f64::MIN_POSITIVE);
                st.w >= 2.0 * min_leaf && sse > 1e-10 * st.q && st.q > 0.0
            })
            .collect();
        let allowed: Vec<Vec<bool>> = (0..n_slots)
            .map(|s| {
                let mut a = vec![params.mtry.is_none(); p];
                if let Some(m) = params.mtry {
                    if eligible[s] {
                        for f in sample(rng, p, m.clamp(1, p)).into_iter() {
                            a[f] = true;
                        }
                    }
                }
                a
            })
            .collect();
        let mut best: Vec<Option<Candidate>> = (0..n_slots).map(|_| None).collect();
        let slot_for_row = |i: usize| -> Option<usize> {
            let node = node_of[i];
            if node == NO_SLOT {
                return None;
            }
            let s = slot_of[node as usize];
            (s != NO_SLOT && eligible[s as usize]).then_some(s as usize)
        };
        let gain_of = |st: &Stats, wl: f64, sl: f64| {
            let wr = st.w - wl;
            let sr = st.s - sl;
            sl * sl / wl + sr * sr / wr - st.s * st.s / st.w
        };
        let offer = |best: &mut Option<Candidate>, gain: f64, feature: usize, rule: SplitRule| {
            if !gain.is_finite() {
                return;
            }
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                *best = Some(Candidate { gain, feature, rule });
            }
        };

        for (f, col) in data.columns.iter().enumerate() {
            match col {
                FeatureColumn::Numeric { values, order } => {
                    let mut wl = vec![0.0; n_slots];
                    let mut sl = vec![0.0; n_slots];
                    let mut last = vec![f64::NAN; n_slots];
                    for &iu in order {
                        let i = iu as usize;
                        let Some(s) = slot_for_row(i) else { continue };
                        if !allowed[s][f] {
                            continue;
                        }
                        let v = values[i];
                        if wl[s] > 0.0 && v > last[s] {
                            let st = &stats[s];
                            if wl[s] >= min_leaf && st.w - wl[s] >= min_leaf {
                                let g = gain_of(st, wl[s], sl[s]);
                                let thr = 0.5 * (last[s] + v);
                                offer(&mut best[s], g, f, SplitRule::Threshold { threshold: thr });
                            }
                        }
                        let w = weight(i);
                        wl[s] += w;
                        sl[s] += w * residuals[i];
                        last[s] = v;
                    }
                }
                FeatureColumn::Categorical { codes, n_levels } => {
                    let nl = *n_levels;
                    let mut lw = vec![0.0; n_slots * nl];
                    let mut ls = vec![0.0; n_slots * nl];
                    for i in 0..n {
                        let Some(s) = slot_for_row(i) else { continue };
                        let c = codes[i] as usize;
                        if !allowed[s][f] || c >= nl {
                            continue;
                        }
                        let w = weight(i);
                        lw[s * nl + c] += w;
                        ls[s * nl + c] += w * residuals[i];
                    }
                    for s in 0..n_slots {
                        if !eligible[s] || !allowed[s][f] {
                            continue;
                        }
                        let mut present: Vec<usize> = (0..nl).filter(|&l| lw[s * nl + l] > 0.0).collect();
                        if present.len() < 2 {
                            continue;
                        }
                        present.sort_by(|&a, &b| {
                            let ma = ls[s * nl + a] / lw[s * nl + a];
                            let mb = ls[s * nl + b] / lw[s * nl + b];
                            ma.total_cmp(&mb).then(a.cmp(&b))
                        });
                        let st = &stats[s];
                        let (mut wl, mut sl) = (0.0, 0.0);
                        for k in 0..present.len() - 1 {
                            let l = present[k];
                            wl += lw[s * nl + l];
                            sl += ls[s * nl + l];
                            if wl >= min_leaf && st.w - wl >= min_leaf {
                                let g = gain_of(st, wl, sl);
                                if best[s].as_ref().is_none_or(|b| g > b.gain) {
                                    let mut left: Vec<u32> = present[..=k].iter().map(|&l| l as u32).collect();
                                    left.sort_unstable();
                                    offer(&mut best[s], g, f, SplitRule::Levels { left });
                                }
                            }
                        }
                    }
                }
            }
        }

        let mut next = Vec::new();
        let mut child_of: Vec<Option<(usize, usize, usize, SplitRule)>> = vec![None; n_slots];
        for (s, cand) in best.into_iter().enumerate() {
            let Some(c) = cand else { continue };
            let node = frontier[s];
            let left = nodes.len();
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes[node] = TreeNode::Split {
                feature: c.feature,
                rule: c.rule.clone(),
                left,
                right: left + 1,
            };
            next.push(left);
            next.push(left + 1);
            child_of[s] = Some((c.feature, left, left + 1, c.rule));
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            let node = node_of[i];
            if node == NO_SLOT {
                continue;
            }
            let s = slot_of[node as usize];
            if s == NO_SLOT {
                continue;
            }
            if let Some((f, l, r, rule)) = &child_of[s as usize] {
                let goes_left = match (&data.columns[*f], rule) {
                    (FeatureColumn::Numeric { values, .. }, SplitRule::Threshold { threshold }) => {
                        values[i] <= *threshold
                    }
                    (FeatureColumn::Categorical { codes, .. }, SplitRule::Levels { left }) => {
                        left.binary_search(&codes[i]).is_ok()
                    }
                    _ => unreachable!("rule kind always matches column kind"),
                };
                node_of[i] = if goes_left { *l as u32 } else { *r as u32 };
            }
        }
        frontier = next;
    }

    let mut w = vec![0.0; nodes.len()];
    let mut s = vec![0.0; nodes.len()];
    for i in 0..n {
        let node = node_of[i];
        if node != NO_SLOT {
            w[node as usize] += weight(i);
            s[node as usize] += weight(i) * residuals[i];
        }
    }
    for (k, node) in nodes.iter_mut().enumerate() {
        if let TreeNode::Leaf { value } = node {
            *value = if w[k] > 0.0 { s[k] / w[k] } else { 0.0 };
        }
    }
    RegressionTree { nodes }
}

/// Unweighted tree on all rows and features.
pub fn fit_regression_tree(ds: &Dataset, residuals: &[f64], max_depth: usize, min_leaf: usize) -> RegressionTree {
    let data = TreeData::new(ds);
    let params = TreeParams {
        max_depth,
        min_leaf,
        mtry: None,
    };
    fit_tree(&data, residuals, None, &params, &mut crate::data::seeded_rng(0))
}

impl RegressionTree {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], k: usize) -> usize {
            match &nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Root feature and the features of its direct children that split.
    pub fn root_pairs(&self) -> Vec<(usize, usize)> {
        let TreeNode::Split {
            feature, left, right, ..
        } = &self.nodes[0]
        else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for child in [left, right] {
            if let TreeNode::Split { feature: g, .. } = &self.nodes[*child] {
                if g != feature {
                    out.push(((*feature).min(*g), (*feature).max(*g)));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        for node in &self.nodes {
            match node {
                TreeNode::Leaf { value } if !value.is_finite() => {
                    return Err(Error::Fit("tree leaf is not finite".into()))
                }
                TreeNode::Split {
                    feature, left, right, ..
                } if *feature >= n_features || *left >= self.nodes.len() || *right >= self.nodes.len() => {
                    return Err(Error::Fit("tree references a missing node or feature".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn leaf_for(&self, ds: &Dataset, i: usize) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    let goes_left = match (&ds.columns[*feature], rule) {
                        (ColumnData::Numeric(v), SplitRule::Threshold { threshold }) => v[i] <= *threshold,
                        (ColumnData::Categorical(c), SplitRule::Levels { left }) => left.binary_search(&c[i]).is_ok(),
                        _ => false,
                    };
                    k = if goes_left { *left } else { *right };
                }
            }
        }
    }

    /// Predictions for every row; `ds` must have the training column layout.
    pub fn predict(&self, ds: &Dataset) -> Vec<f64> {
        (0..ds.n_rows()).map(|i| self.leaf_for(ds, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnKind, ColumnSchema};

    fn sse(tree: &RegressionTree, ds: &Dataset, r: &[f64]) -> f64 {
        tree.predict(ds).iter().zip(r).map(|(p, y)| (p - y) * (p - y)).sum()
    }

    #[test]
    fn constant_residuals_give_single_leaf() {
        let ds = Dataset::from_numeric(vec![("x", (0..20).map(f64::from).collect())], None).unwrap();
        let t = fit_regression_tree(&ds, &[2.5; 20], 4, 2);
        assert_eq!(t.nodes, vec![TreeNode::Leaf { value: 2.5 }]);
    }

    #[test]
    fn perfect_stump() {
        let x: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let r: Vec<f64> = x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let ds = Dataset::from_numeric(vec![("x", x)], None).unwrap();
        let t = fit_regression_tree(&ds, &r, 1, 1);
        match &t.nodes[0] {
            TreeNode::Split {
                rule: SplitRule::Threshold { threshold },
                left,
                right,
                ..
            } => {
                assert_eq!(*threshold, 0.0);
                assert_eq!(t.nodes[*left], TreeNode::Leaf { value: 0.0 });
                assert_eq!(t.nodes[*right], TreeNode::Leaf { value: 1.0 });
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    fn xor_ds() -> (Dataset, Vec<f64>) {
        let mut x1 = Vec::new();
        let mut x2 = Vec::new();
        for _ in 0..5 {
            for a in [-1.0, 1.0] {
                for b in [-1.0, 1.0] {
                    x1.push(a);
                    x2.push(b);
                }
            }
        }
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a * b).collect();
        (Dataset::from_numeric(vec![("x1", x1), ("x2", x2)], None).unwrap(), y)
    }

    #[test]
    fn product_needs_depth_two() {
        let (ds, y) = xor_ds();
        let deep = fit_regression_tree(&ds, &y, 2, 1);
        assert!(sse(&deep, &ds, &y) < 1e-20);
        // Oracle: every depth-1 split on this design leaves SSE equal to the total.
        let total: f64 = y.iter().map(|v| v * v).sum();
        for f in ["x1", "x2"] {
            let x = ds.numeric(f).unwrap();
            let (mut l, mut r) = (Vec::new(), Vec::new());
            for (xi, yi) in x.iter().zip(&y) {
                if *xi <= 0.0 {
                    l.push(*yi)
                } else {
                    r.push(*yi)
                }
            }
            let part = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|a| (a - m) * (a - m)).sum::<f64>()
            };
            assert!((part(&l) + part(&r) - total).abs() < 1e-12);
        }
        let stump = fit_regression_tree(&ds, &y, 1, 1);
        assert!(sse(&stump, &ds, &y) > 1.0);
    }

    #[test]
    fn categorical_split_groups_by_mean() {
        let codes: Vec<u32> = (0..40).map(|i| i % 4).collect();
        let r: Vec<f64> = codes
            .iter()
            .map(|&c| if c == 1 || c == 3 { 5.0 } else { -1.0 })
            .collect();
        let schema = vec![ColumnSchema {
            name: "c".into(),
            kind: ColumnKind::Categorical,
            levels: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            missing_count: 0,
        }];
        let ds = Dataset::new(schema, vec![ColumnData::Categorical(codes)], None).unwrap();
        let t = fit_regression_tree(&ds, &r, 1, 1);
        match &t.nodes[0] {
            TreeNode::Split {
                rule: SplitRule::Levels { left },
                ..
            } => assert_eq!(left, &vec![0, 2]),
            other => panic!("{other:?}"),
        }
        assert!(sse(&t, &ds, &r) < 1e-20);
    }

    #[test]
    fn min_leaf_respected_and_roundtrip() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 13) % 50) as f64).collect();
        let r: Vec<f64> = x.iter().map(|v| (v / 7.0).sin()).collect();
        let ds = Dataset::from_numeric(vec![("x", x)], None).unwrap();
        let t = fit_regression_tree(&ds, &r, 6, 10);
        let preds = t.predict(&ds);
        let mut counts = std::collections::HashMap::new();
        for p in &preds {
            *counts.entry(p.to_bits()).or_insert(0usize) += 1;
        }
        assert!(counts.values().all(|&c| c >= 10));
        t.validate(1).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: RegressionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back.predict(&ds), preds);
        assert!(t.depth() <= 6);
    }

    #[test]
    fn weights_act_as_multiplicities() {
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let r = vec![1.0, 2.0, 3.0, 10.0];
        let ds = Dataset::from_numeric(vec![("x", x.clone())], None).unwrap();
        let data = TreeData::new(&ds);
        let params = TreeParams {
            max_depth: 0,
            min_leaf: 1,
            mtry: None,
        };
        let t = fit_tree(
            &data,
            &r,
            Some(&[2.0, 0.0, 1.0, 1.0]),
            &params,
            &mut crate::data::seeded_rng(1),
        );
        assert_eq!(
            t.nodes,
            vec![TreeNode::Leaf {
                value: (2.0 + 3.0 + 10.0) / 4.0
            }]
        );
    }
}
