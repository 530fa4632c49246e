//! Deterministic random forest of CART trees split on Gini impurity.
//!
//! Tree `t` draws everything (bootstrap sample, then per-node feature
//! order) from its own [`SplitMix64`] stream seeded with
//! `mix_seed(random_state, t)`, so trees can be grown in parallel and the
//! serialized forest depends only on the inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{mix_seed, SplitMix64};
use crate::url_features::{FeatureSelection, Label, UrlFeatureVector};

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("training error: {0}")]
    Training(String),
    #[error("vector has {got} values, model expects {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// `[legitimate, phishing]` counts of the bootstrap samples reaching the leaf.
        class_counts: [u64; 2],
    },
}

impl TreeNode {
    /// Leaf vote; an even leaf votes phishing.
    pub fn vote(&self, values: &[f64]) -> Label {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    node = if values[*feature_index] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
                TreeNode::Leaf { class_counts } => {
                    return Label::from_bool(class_counts[1] >= class_counts[0]);
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn visit_splits(&self, f: &mut impl FnMut(usize, f64)) {
        if let TreeNode::Split {
            feature_index,
            threshold,
            left,
            right,
        } = self
        {
            f(*feature_index, *threshold);
            left.visit_splits(f);
            right.visit_splits(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_trees: usize,
    /// `None` grows until purity or fewer than two samples.
    pub max_depth: Option<usize>,
    pub random_state: u64,
    pub feature_indices: Vec<usize>,
    pub trees: Vec<TreeNode>,
    /// Length of the vectors the forest was trained on.
    pub n_features: usize,
    /// Column names of the training schema, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub random_state: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            random_state: 0,
        }
    }
}

/// Gini impurity `1 - p0^2 - p1^2` of a two-class count pair.
pub fn gini(counts: [u64; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

const MIN_DECREASE: f64 = 1e-12;

struct Grower<'a> {
    /// Column-major: `columns[f][sample]`, only for selected features.
    columns: &'a [Vec<f64>],
    labels: &'a [Label],
    /// Schema index of each column.
    feature_indices: &'a [usize],
    max_depth: Option<usize>,
    n_candidates: usize,
    rng: SplitMix64,
}

struct BestSplit {
    column: usize,
    threshold: f64,
    decrease: f64,
}

impl Grower<'_> {
    fn counts(&self, samples: &[usize]) -> [u64; 2] {
        let mut c = [0u64; 2];
        for &s in samples {
            c[self.labels[s].index()] += 1;
        }
        c
    }

    fn best_split_on(
        &self,
        column: usize,
        samples: &[usize],
        parent: [u64; 2],
    ) -> Option<BestSplit> {
        let col = &self.columns[column];
        let mut pairs: Vec<(f64, usize)> = samples
            .iter()
            .map(|&s| (col[s], self.labels[s].index()))
            .collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = pairs.len() as f64;
        let parent_gini = gini(parent);
        let mut left = [0u64; 2];
        let mut best: Option<BestSplit> = None;
        for i in 0..pairs.len() - 1 {
            left[pairs[i].1] += 1;
            let (a, b) = (pairs[i].0, pairs[i + 1].0);
            if a == b {
                continue;
            }
            let right = [parent[0] - left[0], parent[1] - left[1]];
            let nl = (left[0] + left[1]) as f64;
            let nr = (right[0] + right[1]) as f64;
            let weighted = (nl * gini(left) + nr * gini(right)) / n;
            let decrease = parent_gini - weighted;
            if decrease > MIN_DECREASE && best.as_ref().is_none_or(|bs| decrease > bs.decrease) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some(BestSplit {
                    column,
                    threshold,
                    decrease,
                });
            }
        }
        best
    }

    /// Evaluates `n_candidates` columns in a fresh random order; if none of
    /// them admits an impurity-decreasing split, keeps drawing from the rest.
    fn choose_split(&mut self, samples: &[usize], parent: [u64; 2]) -> Option<BestSplit> {
        let d = self.columns.len();
        let mut order: Vec<usize> = (0..d).collect();
        let mut best: Option<BestSplit> = None;
        for j in 0..d {
            let k = j + self.rng.below(d - j);
            order.swap(j, k);
            if let Some(found) = self.best_split_on(order[j], samples, parent) {
                if best.as_ref().is_none_or(|b| found.decrease > b.decrease) {
                    best = Some(found);
                }
            }
            if j + 1 >= self.n_candidates && best.is_some() {
                break;
            }
        }
        best
    }

    fn grow(&mut self, samples: &[usize], depth: usize) -> TreeNode {
        let counts = self.counts(samples);
        let at_limit = self.max_depth.is_some_and(|m| depth >= m);
        if at_limit || counts[0] == 0 || counts[1] == 0 || samples.len() < 2 {
            return TreeNode::Leaf {
                class_counts: counts,
            };
        }
        let Some(split) = self.choose_split(samples, counts) else {
            return TreeNode::Leaf {
                class_counts: counts,
            };
        };
        let col = &self.columns[split.column];
        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&s| col[s] <= split.threshold);
        let left_node = self.grow(&left, depth + 1);
        let right_node = self.grow(&right, depth + 1);
        TreeNode::Split {
            feature_index: self.feature_indices[split.column],
            threshold: split.threshold,
            left: Box::new(left_node),
            right: Box::new(right_node),
        }
    }
}

fn check_training_set(dataset: &[UrlFeatureVector]) -> Result<(usize, Vec<Label>), ForestError> {
    if dataset.len() < 2 {
        return Err(ForestError::Training(format!(
            "need at least 2 samples, got {}",
            dataset.len()
        )));
    }
    let d = dataset[0].values.len();
    let mut labels = Vec::with_capacity(dataset.len());
    for (i, v) in dataset.iter().enumerate() {
        if v.values.len() != d {
            return Err(ForestError::Dimension {
                expected: d,
                got: v.values.len(),
            });
        }
        labels.push(
            v.label
                .ok_or_else(|| ForestError::Training(format!("sample {i} is unlabeled")))?,
        );
    }
    if !labels.contains(&Label::Legitimate) || !labels.contains(&Label::Phishing) {
        return Err(ForestError::Training("both classes must be present".into()));
    }
    Ok((d, labels))
}

pub fn train_forest(
    dataset: &[UrlFeatureVector],
    selection: &FeatureSelection,
    params: ForestParams,
) -> Result<ForestModel, ForestError> {
    let (n_features, labels) = check_training_set(dataset)?;
    if params.n_trees == 0 {
        return Err(ForestError::Training("n_trees must be positive".into()));
    }
    let feature_indices = selection.selected_indices.clone();
    if feature_indices.is_empty() {
        return Err(ForestError::Training("empty feature selection".into()));
    }
    if let Some(&bad) = feature_indices.iter().find(|&&f| f >= n_features) {
        return Err(ForestError::Dimension {
            expected: n_features,
            got: bad + 1,
        });
    }
    let columns: Vec<Vec<f64>> = feature_indices
        .iter()
        .map(|&f| dataset.iter().map(|v| v.values[f]).collect())
        .collect();
    let d = columns.len();
    let n_candidates = (d as f64).sqrt().ceil() as usize;
    let n = dataset.len();

    let trees: Vec<TreeNode> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = SplitMix64::new(mix_seed(params.random_state, t as u64));
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
            let mut grower = Grower {
                columns: &columns,
                labels: &labels,
                feature_indices: &feature_indices,
                max_depth: params.max_depth,
                n_candidates,
                rng,
            };
            grower.grow(&bootstrap, 0)
        })
        .collect();

    Ok(ForestModel {
        n_trees: params.n_trees,
        max_depth: params.max_depth,
        random_state: params.random_state,
        feature_indices,
        trees,
        n_features,
        schema: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestPrediction {
    pub label: Label,
    /// Fraction of trees voting phishing.
    pub confidence: f64,
}

impl ForestModel {
    pub fn predict(&self, values: &[f64]) -> Result<ForestPrediction, ForestError> {
        if values.len() != self.n_features {
            return Err(ForestError::Dimension {
                expected: self.n_features,
                got: values.len(),
            });
        }
        let votes = self
            .trees
            .iter()
            .filter(|t| t.vote(values).is_phishing())
            .count();
        let confidence = votes as f64 / self.trees.len() as f64;
        Ok(ForestPrediction {
            label: Label::from_bool(2 * votes >= self.trees.len()),
            confidence,
        })
    }

    pub fn depth(&self) -> usize {
        self.trees.iter().map(TreeNode::depth).max().unwrap_or(0)
    }

    /// Fraction of labeled vectors predicted correctly.
    pub fn accuracy(&self, dataset: &[UrlFeatureVector]) -> Result<f64, ForestError> {
        if dataset.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for v in dataset {
            let p = self.predict(&v.values)?;
            if Some(p.label) == v.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / dataset.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

pub fn predict_forest(
    model: &ForestModel,
    vector: &UrlFeatureVector,
) -> Result<ForestPrediction, ForestError> {
    model.predict(&vector.values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub max_depth: Option<usize>,
    pub random_state: u64,
    /// Held-out accuracy in percent.
    pub accuracy: f64,
    pub tree_depth: usize,
}

/// One forest per `(max_depth, random_state)` cell, each scored on `test`.
pub fn depth_seed_study(
    train: &[UrlFeatureVector],
    test: &[UrlFeatureVector],
    selection: &FeatureSelection,
    n_trees: usize,
    grid: &[(Option<usize>, u64)],
) -> Result<Vec<StudyRow>, ForestError> {
    grid.iter()
        .map(|&(max_depth, random_state)| {
            let model = train_forest(
                train,
                selection,
                ForestParams {
                    n_trees,
                    max_depth,
                    random_state,
                },
            )?;
            Ok(StudyRow {
                max_depth,
                random_state,
                accuracy: 100.0 * model.accuracy(test)?,
                tree_depth: model.depth(),
            })
        })
        .collect()
}

pub fn study_table(rows: &[StudyRow]) -> String {
    let mut out = String::from("max_depth  random_state  accuracy  tree_depth\n");
    for r in rows {
        let depth = r.max_depth.map_or("none".to_string(), |d| d.to_string());
        out.push_str(&format!(
            "{:>9}  {:>12}  {:>8.1}  {:>10}\n",
            depth, r.random_state, r.accuracy, r.tree_depth
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::url_features::select_top_k;

    fn line_data() -> Vec<UrlFeatureVector> {
        (-5..=5)
            .filter(|&x| x != 0)
            .map(|x| UrlFeatureVector::new(vec![x as f64], Some(Label::from_bool(x > 0))))
            .collect()
    }

    fn all_features(d: usize) -> FeatureSelection {
        select_top_k(&vec![1.0; d], d).unwrap()
    }

    #[test]
    fn gini_bounds() {
        assert_eq!(gini([5, 0]), 0.0);
        assert_eq!(gini([3, 3]), 0.5);
        assert!(gini([1, 3]) > 0.0 && gini([1, 3]) < 0.5);
    }

    #[test]
    fn one_split_separates_a_line() {
        let data = line_data();
        let params = ForestParams {
            n_trees: 10,
            max_depth: Some(1),
            random_state: 0,
        };
        let model = train_forest(&data, &all_features(1), params).unwrap();
        assert_eq!(model.accuracy(&data).unwrap(), 1.0);
        assert!(model.depth() <= 1);
    }

    #[test]
    fn identical_inputs_give_identical_bytes() {
        let data = line_data();
        let params = ForestParams {
            n_trees: 7,
            max_depth: None,
            random_state: 11,
        };
        let a = train_forest(&data, &all_features(1), params)
            .unwrap()
            .to_json();
        let b = train_forest(&data, &all_features(1), params)
            .unwrap()
            .to_json();
        assert_eq!(a, b);
        let back = ForestModel::from_json(&a).unwrap();
        assert_eq!(back.to_json(), a);
    }

    #[test]
    fn single_tree_confidence_is_binary() {
        let data = line_data();
        let params = ForestParams {
            n_trees: 1,
            max_depth: None,
            random_state: 3,
        };
        let model = train_forest(&data, &all_features(1), params).unwrap();
        for x in [-10.0, -0.5, 0.5, 10.0] {
            let c = model.predict(&[x]).unwrap().confidence;
            assert!(c == 0.0 || c == 1.0);
        }
    }

    #[test]
    fn tied_vote_is_phishing() {
        let leaf = |phish: bool| TreeNode::Leaf {
            class_counts: if phish { [0, 3] } else { [3, 0] },
        };
        let model = ForestModel {
            n_trees: 2,
            max_depth: None,
            random_state: 0,
            feature_indices: vec![0],
            trees: vec![leaf(true), leaf(false)],
            n_features: 1,
            schema: None,
        };
        let p = model.predict(&[0.0]).unwrap();
        assert_eq!(p.label, Label::Phishing);
        assert_eq!(p.confidence, 0.5);
        assert!(matches!(
            model.predict(&[0.0, 1.0]),
            Err(ForestError::Dimension { .. })
        ));
    }

    #[test]
    fn training_errors() {
        let one_class: Vec<_> = (0..4)
            .map(|i| UrlFeatureVector::new(vec![i as f64], Some(Label::Phishing)))
            .collect();
        assert!(train_forest(&one_class, &all_features(1), ForestParams::default()).is_err());
        assert!(train_forest(&[], &all_features(1), ForestParams::default()).is_err());
    }

    #[test]
    fn splits_use_only_selected_features() {
        let data: Vec<_> = (0..40)
            .map(|i| {
                let v = vec![(i % 7) as f64, i as f64, (i % 3) as f64];
                UrlFeatureVector::new(v, Some(Label::from_bool(i >= 20)))
            })
            .collect();
        let selection = select_top_k(&[0.0, 1.0, 2.0], 2).unwrap();
        let model = train_forest(&data, &selection, ForestParams::default()).unwrap();
        for t in &model.trees {
            t.visit_splits(&mut |f, _| assert!(f == 1 || f == 2));
        }
    }

    #[test]
    fn single_cell_study_matches_direct_training() {
        let data = line_data();
        let sel = all_features(1);
        let rows = depth_seed_study(&data, &data, &sel, 5, &[(Some(2), 9)]).unwrap();
        let direct = train_forest(
            &data,
            &sel,
            ForestParams {
                n_trees: 5,
                max_depth: Some(2),
                random_state: 9,
            },
        )
        .unwrap();
        assert_eq!(rows[0].accuracy, 100.0 * direct.accuracy(&data).unwrap());
        assert!(study_table(&rows).contains("random_state"));
    }
}
