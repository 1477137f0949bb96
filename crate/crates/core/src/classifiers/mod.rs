//! Grid-label classifiers.
//!
//! Every classifier maps an RSS vector to one of the `G` survey grid points.
//! Implementations sit behind [`Classifier`]; a [`ClassifierFactory`] trains
//! one from a [`TrainSet`], and the [`ClassifierRegistry`] looks factories up
//! by name so experiments can pick classifiers from configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Point2, Result};

pub mod elm;
pub mod forest;
pub mod knn;

pub use elm::{Elm, ElmFactory};
pub use forest::{RandomForest, RandomForestFactory};
pub use knn::{Knn, KnnFactory};

/// Training view of the fingerprint database.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub grid_coords: Vec<Point2>,
}

impl TrainSet {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, grid_coords: Vec<Point2>) -> Result<Self> {
        let set = TrainSet {
            features,
            labels,
            grid_coords,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                self.features.len(),
                self.labels.len()
            )));
        }
        let g = self.grid_coords.len();
        if let Some(bad) = self.labels.iter().find(|&&l| l >= g) {
            return Err(Error::domain(format!("label {bad} out of range for {g} grid points")));
        }
        let m = self.dim();
        if self.features.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("feature rows differ in length".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.grid_coords.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPrediction {
    pub grid_index: usize,
    pub coords: Point2,
}

pub trait Classifier: Send + Sync {
    fn name(&self) -> &str;

    fn grid_coords(&self) -> &[Point2];

    /// Grid label in `0..G`.
    fn predict_label(&self, query: &[f64]) -> usize;

    fn predict(&self, query: &[f64]) -> GridPrediction {
        let grid_index = self.predict_label(query);
        GridPrediction {
            grid_index,
            coords: self.grid_coords()[grid_index],
        }
    }
}

pub trait ClassifierFactory: Send + Sync {
    fn name(&self) -> &'static str;

    fn train(&self, train: &TrainSet, seed: u64) -> Result<Box<dyn Classifier>>;
}

/// Hyperparameters of the built-in classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierParams {
    pub knn_k: usize,
    pub elm_hidden: usize,
    pub rf_trees: usize,
    pub rf_depth: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            knn_k: 120,
            elm_hidden: 600,
            rf_trees: 40,
            rf_depth: 5,
        }
    }
}

#[derive(Default)]
pub struct ClassifierRegistry {
    factories: BTreeMap<String, Box<dyn ClassifierFactory>>,
}

impl ClassifierRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding `knn`, `elm` and `rf` configured from `params`.
    pub fn with_builtin(params: &ClassifierParams) -> Self {
        let mut reg = Self::new();
        reg.register(Box::new(KnnFactory { k: params.knn_k }));
        reg.register(Box::new(ElmFactory {
            hidden: params.elm_hidden,
        }));
        reg.register(Box::new(RandomForestFactory {
            trees: params.rf_trees,
            depth: params.rf_depth,
        }));
        reg
    }

    /// Replaces any factory already registered under the same name.
    pub fn register(&mut self, factory: Box<dyn ClassifierFactory>) {
        self.factories.insert(factory.name().to_string(), factory);
    }

    pub fn get(&self, name: &str) -> Option<&dyn ClassifierFactory> {
        self.factories.get(name).map(|f| f.as_ref())
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn train(&self, name: &str, train: &TrainSet, seed: u64) -> Result<Box<dyn Classifier>> {
        self.get(name)
            .ok_or_else(|| Error::domain(format!("no classifier registered as `{name}`")))?
            .train(train, seed)
    }
}

/// Index of the largest count; ties go to the lower index.
pub(crate) fn argmax_first(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}
