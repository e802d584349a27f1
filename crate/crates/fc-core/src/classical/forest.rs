//! Random forest: bootstrap rows per tree, sqrt(F) feature subset per split,
//! gini or entropy impurity, soft-vote prediction.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_width, Classifier};
use crate::connectivity::FeatureMatrix;
use crate::error::{Error, Result};
use crate::evaluation::derive_seed;
use crate::exec;

/// Node impurity criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitCriterion {
    Gini,
    Entropy,
}

impl SplitCriterion {
    /// Impurity of a node with positive fraction `p`; entropy is in bits.
    pub fn impurity(&self, p: f64) -> f64 {
        match self {
            SplitCriterion::Gini => 1.0 - p * p - (1.0 - p) * (1.0 - p),
            SplitCriterion::Entropy => {
                let mut h = 0.0;
                for q in [p, 1.0 - p] {
                    if q > 0.0 {
                        h -= q * q.log2();
                    }
                }
                h
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf {
        p1: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// One depth-bounded binary tree stored as an arena.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    /// Impurity-decrease importance accumulated per feature during growth.
    importances: Vec<f64>,
}

impl DecisionTree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { p1 } => return *p1,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Maximum node depth (root = 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize, d: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => d,
                Node::Split { left, right, .. } => {
                    walk(nodes, *left, d + 1).max(walk(nodes, *right, d + 1))
                }
            }
        }
        walk(&self.nodes, 0, 0)
    }
}

/// Bagged ensemble of depth-bounded trees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub criterion: SplitCriterion,
    pub seed: u64,
    feature_width: usize,
}

impl Classifier for ForestModel {
    fn feature_width(&self) -> usize {
        self.feature_width
    }

    fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        check_width(self.feature_width, fm)?;
        Ok(fm
            .values
            .rows()
            .into_iter()
            .map(|row| {
                let r = row.as_slice().unwrap();
                let sum: f64 = self.trees.iter().map(|t| t.predict_row(r)).sum();
                sum / self.trees.len() as f64
            })
            .collect())
    }
}

impl ForestModel {
    /// Mean impurity-decrease importance per feature, normalized to sum 1
    /// when any split exists.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.feature_width];
        for tree in &self.trees {
            for (f, v) in tree.importances.iter().enumerate() {
                total[f] += v;
            }
        }
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            for v in &mut total {
                *v /= sum;
            }
        }
        total
    }
}

struct TreeBuilder<'a> {
    x: &'a Array2<f64>,
    y: &'a [u8],
    criterion: SplitCriterion,
    depth_limit: usize,
    n_sub_features: usize,
    n_total: usize,
    nodes: Vec<Node>,
    importances: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl TreeBuilder<'_> {
    fn positive_fraction(&self, rows: &[usize]) -> f64 {
        let pos = rows.iter().filter(|&&i| self.y[i] == 1).count();
        pos as f64 / rows.len() as f64
    }

    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<BestSplit> {
        let parent_p = self.positive_fraction(rows);
        let parent_impurity = self.criterion.impurity(parent_p);
        if parent_impurity <= 0.0 {
            return None;
        }
        let n = rows.len() as f64;
        let mut best: Option<BestSplit> = None;

        let mut sorted = rows.to_vec();
        for &f in features {
            sorted.sort_by(|&a, &b| self.x[[a, f]].partial_cmp(&self.x[[b, f]]).unwrap());
            let mut left_pos = 0usize;
            for (i, &row) in sorted.iter().enumerate() {
                if self.y[row] == 1 {
                    left_pos += 1;
                }
                if i + 1 == sorted.len() {
                    break;
                }
                let v = self.x[[row, f]];
                let v_next = self.x[[sorted[i + 1], f]];
                if v == v_next {
                    continue;
                }
                let n_left = (i + 1) as f64;
                let n_right = n - n_left;
                let p_left = left_pos as f64 / n_left;
                let total_pos = parent_p * n;
                let p_right = (total_pos - left_pos as f64) / n_right;
                let child = (n_left / n) * self.criterion.impurity(p_left)
                    + (n_right / n) * self.criterion.impurity(p_right);
                let decrease = parent_impurity - child;
                if decrease > 1e-15 && best.as_ref().is_none_or(|b| decrease > b.decrease + 1e-15) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: (v + v_next) / 2.0,
                        decrease,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let p1 = self.positive_fraction(&rows);
        // Stop on the depth bound, purity, or an unsplittable node.
        if depth >= self.depth_limit || rows.len() < 2 || p1 == 0.0 || p1 == 1.0 {
            self.nodes.push(Node::Leaf { p1 });
            return self.nodes.len() - 1;
        }

        let f_total = self.x.ncols();
        let mut features: Vec<usize> = (0..f_total).collect();
        features.shuffle(rng);
        features.truncate(self.n_sub_features);
        features.sort_unstable();

        let Some(split) = self.best_split(&rows, &features) else {
            self.nodes.push(Node::Leaf { p1 });
            return self.nodes.len() - 1;
        };

        self.importances[split.feature] += split.decrease * rows.len() as f64 / self.n_total as f64;

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[[i, split.feature]] <= split.threshold);

        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { p1 }); // placeholder
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }
}

/// Fit a forest. Each tree draws a bootstrap sample of the rows and
/// considers a fresh sqrt(F) feature subset at every split; trees fit in
/// parallel with per-tree derived seeds, so the model is identical for a
/// fixed seed regardless of thread count.
///
/// A `max_depth` of 0 is treated as 1: the smallest usable tree is a stump.
pub fn fit_random_forest(
    fm: &FeatureMatrix,
    n_trees: usize,
    max_depth: usize,
    criterion: SplitCriterion,
    seed: u64,
) -> Result<ForestModel> {
    if n_trees == 0 {
        return Err(Error::invalid("n_trees must be at least 1"));
    }
    let pos = fm.labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == fm.labels.len() {
        return Err(Error::invalid("training data must contain both classes"));
    }

    let n = fm.n();
    let f = fm.f();
    let depth_limit = max_depth.max(1);
    let n_sub_features = ((f as f64).sqrt().round() as usize).clamp(1, f);

    let trees: Vec<DecisionTree> = exec::map(n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
        let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut builder = TreeBuilder {
            x: &fm.values,
            y: &fm.labels,
            criterion,
            depth_limit,
            n_sub_features,
            n_total: n,
            nodes: Vec::new(),
            importances: vec![0.0; f],
        };
        builder.grow(rows, 0, &mut rng);
        DecisionTree {
            nodes: builder.nodes,
            importances: builder.importances,
        }
    });

    Ok(ForestModel {
        trees,
        n_trees,
        max_depth,
        criterion,
        seed,
        feature_width: f,
    })
}
