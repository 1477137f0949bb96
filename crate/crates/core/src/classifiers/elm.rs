//! Extreme learning machine: a single sigmoid hidden layer with random,
//! fixed input weights and closed-form output weights.
//!
//! Features are z-scored with training statistics, input weights and biases
//! are drawn uniformly from `[-1, 1]`, and the output weights are the
//! minimum-norm least-squares fit of the hidden activations to one-hot
//! class targets. Prediction returns the class with the largest score.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax_first, Classifier, ClassifierFactory, TrainSet};
use crate::linalg::gram_min_norm_lstsq;
use crate::{Error, Point2, Result};

/// Relative eigenvalue cutoff for the hidden-layer Gram matrix.
pub const ELM_EIG_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Elm {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `dim x hidden`
    input_weights: DMatrix<f64>,
    bias: Vec<f64>,
    /// `hidden x classes`
    output_weights: DMatrix<f64>,
    rank: usize,
    grid_coords: Vec<Point2>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Elm {
    pub fn train(train: &TrainSet, hidden: usize, seed: u64) -> Result<Self> {
        train.validate()?;
        if hidden == 0 {
            return Err(Error::domain("ELM needs at least one hidden neuron"));
        }
        if train.is_empty() {
            return Err(Error::domain("ELM training set is empty"));
        }
        let dim = train.dim();
        let n = train.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in &train.features {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for row in &train.features {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_weights = DMatrix::from_fn(dim, hidden, |_, _| rng.random_range(-1.0..=1.0));
        let bias: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..=1.0)).collect();

        let mut elm = Elm {
            mean,
            scale,
            input_weights,
            bias,
            output_weights: DMatrix::zeros(hidden, train.n_classes()),
            rank: 0,
            grid_coords: train.grid_coords.clone(),
        };
        let h = elm.hidden_matrix(&train.features);
        let targets = DMatrix::from_fn(train.len(), train.n_classes(), |i, c| {
            if train.labels[i] == c {
                1.0
            } else {
                0.0
            }
        });
        let (beta, rank) = gram_min_norm_lstsq(&h, &targets, ELM_EIG_TOL)?;
        elm.output_weights = beta;
        elm.rank = rank;
        Ok(elm)
    }

    fn hidden_row(&self, query: &[f64], out: &mut [f64]) {
        let z: Vec<f64> = query
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = self.bias[j];
            for (i, zi) in z.iter().enumerate() {
                acc += zi * self.input_weights[(i, j)];
            }
            *o = sigmoid(acc);
        }
    }

    /// Hidden-layer activations, one row per input.
    pub fn hidden_matrix(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let hidden = self.bias.len();
        let mut h = DMatrix::zeros(rows.len(), hidden);
        let mut buf = vec![0.0; hidden];
        for (i, r) in rows.iter().enumerate() {
            self.hidden_row(r, &mut buf);
            for (j, v) in buf.iter().enumerate() {
                h[(i, j)] = *v;
            }
        }
        h
    }

    pub fn output_weights(&self) -> &DMatrix<f64> {
        &self.output_weights
    }

    pub fn set_output_weights(&mut self, w: DMatrix<f64>) -> Result<()> {
        if w.shape() != self.output_weights.shape() {
            return Err(Error::Dimension("output weight shape changed".into()));
        }
        self.output_weights = w;
        Ok(())
    }

    /// Rank kept when solving for the output weights.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn scores(&self, query: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.bias.len()];
        self.hidden_row(query, &mut h);
        let classes = self.output_weights.ncols();
        (0..classes)
            .map(|c| {
                let col = self.output_weights.column(c);
                h.iter().zip(col.iter()).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

impl Classifier for Elm {
    fn name(&self) -> &str {
        "elm"
    }

    fn grid_coords(&self) -> &[Point2] {
        &self.grid_coords
    }

    fn predict_label(&self, query: &[f64]) -> usize {
        argmax_first(self.scores(query))
    }
}

pub struct ElmFactory {
    pub hidden: usize,
}

impl ClassifierFactory for ElmFactory {
    fn name(&self) -> &'static str {
        "elm"
    }

    fn train(&self, train: &TrainSet, seed: u64) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(Elm::train(train, self.hidden, seed)?))
    }
}
