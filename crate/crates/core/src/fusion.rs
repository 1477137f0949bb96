//! Least-squares fusion of classifier position estimates.
//!
//! The `L x H` prediction matrix holds classifier `eta`'s x (or y) estimate
//! for offline sample `j` in entry `(j, eta)`. Fusion weights solve the
//! unconstrained least-squares problem against the true coordinates;
//! rank-deficient matrices (classifiers that agree on every sample) are
//! handled by the truncated-SVD minimum-norm solution.
//!
//! GI-LS fits one weight pair for the whole area. GD-LS fits one pair per
//! grid point and, online, picks the pair of the grid whose mean
//! fingerprint is nearest to the query.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::classifiers::Classifier;
use crate::linalg::{default_rank_tol, min_norm_lstsq, normal_equations};
use crate::{Error, LocationEstimate, Method, Point2, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub x_hat: DMatrix<f64>,
    pub y_hat: DMatrix<f64>,
    pub classifier_order: Vec<String>,
}

impl PredictionMatrix {
    pub fn new(x_hat: DMatrix<f64>, y_hat: DMatrix<f64>, classifier_order: Vec<String>) -> Result<Self> {
        if x_hat.shape() != y_hat.shape() {
            return Err(Error::Dimension("x and y prediction matrices differ in shape".into()));
        }
        if classifier_order.len() != x_hat.ncols() {
            return Err(Error::Dimension("one classifier name per column is required".into()));
        }
        Ok(PredictionMatrix {
            x_hat,
            y_hat,
            classifier_order,
        })
    }

    pub fn rows(&self) -> usize {
        self.x_hat.nrows()
    }

    pub fn classifiers(&self) -> usize {
        self.x_hat.ncols()
    }

    /// Row `j` as `(x estimates, y estimates)`.
    pub fn row(&self, j: usize) -> (Vec<f64>, Vec<f64>) {
        (
            self.x_hat.row(j).iter().copied().collect(),
            self.y_hat.row(j).iter().copied().collect(),
        )
    }

    /// Keeps only the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        PredictionMatrix {
            x_hat: self.x_hat.select_rows(rows),
            y_hat: self.y_hat.select_rows(rows),
            classifier_order: self.classifier_order.clone(),
        }
    }
}

/// Runs every classifier on every query.
pub fn build_prediction_matrix(classifiers: &[&dyn Classifier], queries: &[Vec<f64>]) -> Result<PredictionMatrix> {
    if classifiers.is_empty() {
        return Err(Error::domain("fusion needs at least one classifier"));
    }
    if queries.is_empty() {
        return Err(Error::domain("prediction matrix needs at least one query"));
    }
    let h = classifiers.len();
    let preds: Vec<Vec<Point2>> = queries
        .par_iter()
        .map(|q| classifiers.iter().map(|c| c.predict(q).coords).collect())
        .collect();
    let x_hat = DMatrix::from_fn(queries.len(), h, |j, e| preds[j][e].x);
    let y_hat = DMatrix::from_fn(queries.len(), h, |j, e| preds[j][e].y);
    PredictionMatrix::new(x_hat, y_hat, classifiers.iter().map(|c| c.name().to_string()).collect())
}

/// Plain least-squares weights `(X'X)^-1 X' x`.
///
/// Fails with [`Error::RankDeficient`] when the prediction matrix is not
/// numerically full column rank; use [`ls_svd_weights`] then.
pub fn ls_weights(pred: &DMatrix<f64>, truth: &DVector<f64>) -> Result<DVector<f64>> {
    normal_equations(pred, truth, default_rank_tol(pred.nrows(), pred.ncols()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisWeights {
    pub weights: DVector<f64>,
    pub rank: usize,
}

/// Minimum-norm least-squares weights through the truncated SVD.
///
/// `rank_tol` is relative to the largest singular value; `None` selects
/// [`default_rank_tol`]. An all-zero matrix yields zero weights and rank 0.
pub fn ls_svd_weights(pred: &DMatrix<f64>, truth: &DVector<f64>, rank_tol: Option<f64>) -> Result<AxisWeights> {
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(pred.nrows(), pred.ncols()));
    let sol = min_norm_lstsq(pred, truth, tol)?;
    Ok(AxisWeights {
        weights: sol.x,
        rank: sol.rank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum FusionMode {
    PlainLs,
    #[default]
    SvdLs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
    pub rank_x: usize,
    pub rank_y: usize,
    pub mode: FusionMode,
}

impl FusionWeights {
    pub fn rank_used(&self) -> usize {
        self.rank_x.max(self.rank_y)
    }
}

fn fit_axes(pred: &PredictionMatrix, tx: DVector<f64>, ty: DVector<f64>, mode: FusionMode, rank_tol: Option<f64>) -> Result<FusionWeights> {
    if tx.len() != pred.rows() {
        return Err(Error::Dimension(format!(
            "{} truth points for {} prediction rows",
            tx.len(),
            pred.rows()
        )));
    }
    match mode {
        FusionMode::SvdLs => {
            let ax = ls_svd_weights(&pred.x_hat, &tx, rank_tol)?;
            let ay = ls_svd_weights(&pred.y_hat, &ty, rank_tol)?;
            Ok(FusionWeights {
                wx: ax.weights.iter().copied().collect(),
                wy: ay.weights.iter().copied().collect(),
                rank_x: ax.rank,
                rank_y: ay.rank,
                mode,
            })
        }
        FusionMode::PlainLs => {
            let h = pred.classifiers();
            let wx = ls_weights(&pred.x_hat, &tx)?;
            let wy = ls_weights(&pred.y_hat, &ty)?;
            Ok(FusionWeights {
                wx: wx.iter().copied().collect(),
                wy: wy.iter().copied().collect(),
                rank_x: h,
                rank_y: h,
                mode,
            })
        }
    }
}

/// Grid-independent fit: one weight pair from all offline samples.
pub fn gi_ls_fit(pred: &PredictionMatrix, truth: &[Point2], mode: FusionMode, rank_tol: Option<f64>) -> Result<FusionWeights> {
    let tx = DVector::from_iterator(truth.len(), truth.iter().map(|p| p.x));
    let ty = DVector::from_iterator(truth.len(), truth.iter().map(|p| p.y));
    fit_axes(pred, tx, ty, mode, rank_tol)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted combination of one online prediction row.
pub fn gi_ls_predict(weights: &FusionWeights, row_x: &[f64], row_y: &[f64]) -> Result<LocationEstimate> {
    if row_x.len() != weights.wx.len() || row_y.len() != weights.wy.len() {
        return Err(Error::Dimension("online row length differs from the weight count".into()));
    }
    Ok(LocationEstimate::new(
        Point2::new(dot(row_x, &weights.wx), dot(row_y, &weights.wy)),
        Method::GiLs,
    ))
}

/// Per-grid weights, one column per grid point, plus the mean fingerprints
/// used for online grid selection.
#[derive(Debug, Clone, PartialEq)]
pub struct GdWeightBank {
    /// `H x G`
    pub wx: DMatrix<f64>,
    /// `H x G`
    pub wy: DMatrix<f64>,
    /// `G x M`, dB
    pub mean_fps: Vec<Vec<f64>>,
}

impl GdWeightBank {
    pub fn grid_weights(&self, g: usize) -> FusionWeights {
        FusionWeights {
            wx: self.wx.column(g).iter().copied().collect(),
            wy: self.wy.column(g).iter().copied().collect(),
            rank_x: 0,
            rank_y: 0,
            mode: FusionMode::SvdLs,
        }
    }
}

/// Grid-dependent fit. `per_grid[g]` holds the offline predictions made on
/// samples recorded at grid point `g`; the truth is that grid's coordinate.
pub fn gd_ls_fit(
    per_grid: &[PredictionMatrix],
    grid_coords: &[Point2],
    mean_fps: Vec<Vec<f64>>,
    rank_tol: Option<f64>,
) -> Result<GdWeightBank> {
    if per_grid.len() != grid_coords.len() || mean_fps.len() != grid_coords.len() {
        return Err(Error::Dimension(format!(
            "{} prediction sets, {} grid points, {} mean fingerprints",
            per_grid.len(),
            grid_coords.len(),
            mean_fps.len()
        )));
    }
    let h = per_grid.first().map_or(0, PredictionMatrix::classifiers);
    if h == 0 {
        return Err(Error::domain("GD-LS needs at least one grid point and classifier"));
    }
    let fits: Vec<FusionWeights> = per_grid
        .par_iter()
        .zip(grid_coords.par_iter())
        .map(|(pred, &p)| {
            if pred.classifiers() != h {
                return Err(Error::Dimension("classifier count differs between grids".into()));
            }
            if pred.rows() == 0 {
                return Err(Error::domain("every grid point needs at least one offline sample"));
            }
            let l = pred.rows();
            fit_axes(pred, DVector::from_element(l, p.x), DVector::from_element(l, p.y), FusionMode::SvdLs, rank_tol)
        })
        .collect::<Result<_>>()?;
    let g = grid_coords.len();
    Ok(GdWeightBank {
        wx: DMatrix::from_fn(h, g, |e, k| fits[k].wx[e]),
        wy: DMatrix::from_fn(h, g, |e, k| fits[k].wy[e]),
        mean_fps,
    })
}

/// Index of the mean fingerprint nearest to `query` (ties: lower index).
pub fn gd_select_grid(query: &[f64], mean_fps: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (g, row) in mean_fps.iter().enumerate() {
        let d: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = g;
        }
    }
    best
}

pub fn gd_ls_predict(bank: &GdWeightBank, query: &[f64], row_x: &[f64], row_y: &[f64]) -> Result<LocationEstimate> {
    if bank.mean_fps.is_empty() {
        return Err(Error::domain("empty weight bank"));
    }
    let g = gd_select_grid(query, &bank.mean_fps);
    let mut est = gi_ls_predict(&bank.grid_weights(g), row_x, row_y)?;
    est.method = Method::GdLs;
    Ok(est)
}
