//! Random forest of entropy-split decision trees.
//!
//! Each tree is grown on a bootstrap resample. Every split node tests a
//! single feature against a threshold, picked by maximum information gain
//! over a random subset of `ceil(sqrt(M))` features. Growth stops at the
//! depth limit, on a pure node, below two samples, or when no split gains
//! information. The forest predicts by majority vote of its trees.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Classifier, ClassifierFactory, TrainSet};
use crate::{Error, Point2, Result};

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    /// Information gain of every split node, in creation order.
    gains: Vec<f64>,
}

fn xlnx(c: usize) -> f64 {
    if c == 0 {
        0.0
    } else {
        let c = c as f64;
        c * c.ln()
    }
}

/// Shannon entropy (nats) of a count vector.
pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    (n as f64).ln() - counts.iter().map(|&c| xlnx(c)).sum::<f64>() / n as f64
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Best single-feature threshold split of `indices` over `features_to_try`.
///
/// Thresholds are midpoints between consecutive distinct values; samples
/// with `x[feature] <= threshold` go left. Ties keep the first candidate in
/// `features_to_try` order, then the lowest threshold. Returns `None` when
/// no candidate gains more than a negligible amount of information.
pub fn best_split(
    features: &[Vec<f64>],
    labels: &[usize],
    indices: &[usize],
    features_to_try: &[usize],
    n_classes: usize,
) -> Option<Split> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let mut total = vec![0usize; n_classes];
    for &i in indices {
        total[labels[i]] += 1;
    }
    let parent = entropy(&total);
    let s_total: f64 = total.iter().map(|&c| xlnx(c)).sum();

    let mut best: Option<Split> = None;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut left = vec![0usize; n_classes];
    for &f in features_to_try {
        pairs.clear();
        pairs.extend(indices.iter().map(|&i| (features[i][f], labels[i])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        left.iter_mut().for_each(|c| *c = 0);
        let mut s_left = 0.0;
        let mut s_right = s_total;
        for pos in 0..n - 1 {
            let lab = pairs[pos].1;
            let cl = left[lab];
            let cr = total[lab] - cl;
            s_left += xlnx(cl + 1) - xlnx(cl);
            s_right += xlnx(cr - 1) - xlnx(cr);
            left[lab] = cl + 1;
            if pairs[pos].0 == pairs[pos + 1].0 {
                continue;
            }
            let nl = (pos + 1) as f64;
            let nr = (n - pos - 1) as f64;
            let h_left = nl.ln() - s_left / nl;
            let h_right = nr.ln() - s_right / nr;
            let gain = parent - (nl * h_left + nr * h_right) / n as f64;
            if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain + 1e-15) {
                best = Some(Split {
                    feature: f,
                    threshold: 0.5 * (pairs[pos].0 + pairs[pos + 1].0),
                    gain,
                });
            }
        }
    }
    best
}

struct Grower<'a> {
    features: &'a [Vec<f64>],
    labels: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    subset: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    gains: Vec<f64>,
}

impl Grower<'_> {
    fn grow(&mut self, indices: &[usize], depth: usize) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &i in indices {
            counts[self.labels[i]] += 1;
        }
        let leaf = majority(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(leaf));
        if depth >= self.max_depth || pure || indices.len() < 2 {
            return id;
        }
        let dim = self.features[0].len();
        let tried: Vec<usize> = sample(&mut self.rng, dim, self.subset.min(dim)).into_vec();
        let Some(split) = best_split(self.features, self.labels, indices, &tried, self.n_classes) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.features[i][split.feature] <= split.threshold);
        self.gains.push(split.gain);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    /// Grows a tree on the rows listed in `indices` (duplicates allowed).
    pub fn fit(
        features: &[Vec<f64>],
        labels: &[usize],
        indices: &[usize],
        n_classes: usize,
        max_depth: usize,
        features_per_split: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        let mut g = Grower {
            features,
            labels,
            n_classes,
            max_depth,
            subset: features_per_split.max(1),
            rng,
            nodes: Vec::new(),
            gains: Vec::new(),
        };
        if !indices.is_empty() {
            g.grow(indices, 0);
        } else {
            g.nodes.push(Node::Leaf(0));
        }
        DecisionTree {
            nodes: g.nodes,
            gains: g.gains,
        }
    }

    pub fn predict(&self, query: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf(label) => return label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if query[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn split_gains(&self) -> &[f64] {
        &self.gains
    }

    /// The root test, if the root was split.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first() {
            Some(Node::Split {
                feature, threshold, ..
            }) => Some((*feature, *threshold)),
            _ => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    grid_coords: Vec<Point2>,
}

impl RandomForest {
    pub fn train(train: &TrainSet, trees: usize, depth: usize, seed: u64) -> Result<Self> {
        train.validate()?;
        if trees == 0 || depth == 0 {
            return Err(Error::domain("random forest needs at least one tree of depth >= 1"));
        }
        let n = train.len();
        let dim = train.dim();
        let subset = (dim as f64).sqrt().ceil() as usize;
        let trees: Vec<DecisionTree> = (0..trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n.max(1))).collect();
                let boot = if n == 0 { Vec::new() } else { boot };
                DecisionTree::fit(&train.features, &train.labels, &boot, train.n_classes(), depth, subset, rng)
            })
            .collect();
        Ok(RandomForest {
            trees,
            grid_coords: train.grid_coords.clone(),
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}

impl Classifier for RandomForest {
    fn name(&self) -> &str {
        "rf"
    }

    fn grid_coords(&self) -> &[Point2] {
        &self.grid_coords
    }

    fn predict_label(&self, query: &[f64]) -> usize {
        let mut votes = vec![0usize; self.grid_coords.len()];
        for t in &self.trees {
            votes[t.predict(query)] += 1;
        }
        majority(&votes)
    }
}

pub struct RandomForestFactory {
    pub trees: usize,
    pub depth: usize,
}

impl ClassifierFactory for RandomForestFactory {
    fn name(&self) -> &'static str {
        "rf"
    }

    fn train(&self, train: &TrainSet, seed: u64) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(RandomForest::train(train, self.trees, self.depth, seed)?))
    }
}
