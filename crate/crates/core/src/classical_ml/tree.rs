//! CART classification tree with Gini impurity and exhaustive threshold
//! search. Supports per-sample weights for boosting.

use serde::{Deserialize, Serialize};

use super::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 16,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        /// Weighted class fractions of the training rows that reached it.
        distribution: Vec<f64>,
        class: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub n_classes: usize,
    pub n_features: usize,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    params: TreeParams,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn leaf(&self, idx: &[usize]) -> TreeNode {
        let mut dist = vec![0.0; self.n_classes];
        for &i in idx {
            dist[self.y[i]] += self.w[i];
        }
        let total: f64 = dist.iter().sum();
        if total > 0.0 {
            dist.iter_mut().for_each(|d| *d /= total);
        }
        TreeNode::Leaf {
            class: argmax(&dist),
            distribution: dist,
        }
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let mut parent = vec![0.0; self.n_classes];
        for &i in idx {
            parent[self.y[i]] += self.w[i];
        }
        let total: f64 = parent.iter().sum();
        let parent_impurity = gini(&parent, total);
        if parent_impurity <= 0.0 {
            return None;
        }
        let n_features = self.x[idx[0]].len();
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for f in 0..n_features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = vec![0.0; self.n_classes];
            let mut left_w = 0.0;
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                left[self.y[i]] += self.w[i];
                left_w += self.w[i];
                let here = self.x[i][f];
                let next = self.x[order[pos + 1]][f];
                if next <= here {
                    continue;
                }
                let n_left = pos + 1;
                if n_left < min_leaf || order.len() - n_left < min_leaf {
                    continue;
                }
                let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
                let right_w = total - left_w;
                let score = (left_w * gini(&left, left_w) + right_w * gini(&right, right_w)) / total;
                if score < parent_impurity - 1e-12 && best.as_ref().map_or(true, |b| score < b.score)
                {
                    let mut threshold = 0.5 * (here + next);
                    // midpoint can round up to `next` for adjacent floats
                    if threshold >= next {
                        threshold = here;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            distribution: Vec::new(),
            class: 0,
        });
        let split = if depth < self.params.max_depth && idx.len() >= 2 * self.params.min_leaf.max(1)
        {
            self.best_split(idx)
        } else {
            None
        };
        match split {
            None => self.nodes[slot] = self.leaf(idx),
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| self.x[i][s.feature] <= s.threshold);
                let left = self.grow(&l, depth + 1);
                let right = self.grow(&r, depth + 1);
                self.nodes[slot] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        slot
    }
}

impl DecisionTree {
    /// Fits on the rows listed in `idx`, weighting row `i` by `w[i]`.
    pub fn fit_weighted(
        x: &[Vec<f64>],
        y: &[usize],
        w: &[f64],
        idx: &[usize],
        n_classes: usize,
        params: TreeParams,
    ) -> DecisionTree {
        assert!(!idx.is_empty(), "cannot fit a tree on zero rows");
        let mut b = Builder {
            x,
            y,
            w,
            n_classes,
            params,
            nodes: Vec::new(),
        };
        b.grow(idx, 0);
        DecisionTree {
            nodes: b.nodes,
            n_classes,
            n_features: x[idx[0]].len(),
        }
    }

    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: TreeParams) -> DecisionTree {
        let w = vec![1.0; y.len()];
        let idx: Vec<usize> = (0..y.len()).collect();
        Self::fit_weighted(x, y, &w, &idx, n_classes, params)
    }

    /// Index of the leaf `x` lands in.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { .. } => return node,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { distribution, .. } => distribution,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn predict_class(&self, x: &[f64]) -> usize {
        match &self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { class, .. } => *class,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}
