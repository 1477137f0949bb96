//! k-nearest-neighbour voting over Euclidean distance.

use std::cmp::Ordering;

use super::{Classifier, ClassifierFactory, TrainSet};
use crate::{Error, Point2, Result};

#[derive(Debug, Clone)]
pub struct Knn {
    k: usize,
    dim: usize,
    /// Row-major copy of the training features.
    rows: Vec<f64>,
    labels: Vec<usize>,
    grid_coords: Vec<Point2>,
}

impl Knn {
    pub fn train(train: &TrainSet, k: usize) -> Result<Self> {
        train.validate()?;
        if k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        if k > train.len() {
            return Err(Error::domain(format!(
                "k = {k} exceeds the {} training rows",
                train.len()
            )));
        }
        Ok(Knn {
            k,
            dim: train.dim(),
            rows: train.features.iter().flatten().copied().collect(),
            labels: train.labels.clone(),
            grid_coords: train.grid_coords.clone(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The `k` nearest rows as `(distance, row index)`, nearest first.
    /// Equal distances are ordered by row index.
    pub fn neighbours(&self, query: &[f64]) -> Vec<(f64, usize)> {
        let mut d: Vec<(f64, usize)> = self
            .rows
            .chunks_exact(self.dim.max(1))
            .take(self.labels.len())
            .enumerate()
            .map(|(i, row)| {
                let s: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (s.sqrt(), i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_unstable_by(cmp);
        d
    }
}

impl Classifier for Knn {
    fn name(&self) -> &str {
        "knn"
    }

    fn grid_coords(&self) -> &[Point2] {
        &self.grid_coords
    }

    /// Majority label among the neighbours; equal vote counts go to the label
    /// whose neighbours are closer on average, then to the lower label.
    fn predict_label(&self, query: &[f64]) -> usize {
        let mut tally: Vec<(usize, usize, f64)> = Vec::new();
        for (dist, row) in self.neighbours(query) {
            let label = self.labels[row];
            match tally.iter_mut().find(|t| t.0 == label) {
                Some(t) => {
                    t.1 += 1;
                    t.2 += dist;
                }
                None => tally.push((label, 1, dist)),
            }
        }
        tally
            .into_iter()
            .min_by(|a, b| {
                b.1.cmp(&a.1)
                    .then_with(|| (a.2 / a.1 as f64).partial_cmp(&(b.2 / b.1 as f64)).unwrap_or(Ordering::Equal))
                    .then(a.0.cmp(&b.0))
            })
            .map_or(0, |t| t.0)
    }
}

pub struct KnnFactory {
    pub k: usize,
}

impl ClassifierFactory for KnnFactory {
    fn name(&self) -> &'static str {
        "knn"
    }

    fn train(&self, train: &TrainSet, _seed: u64) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(Knn::train(train, self.k)?))
    }
}
