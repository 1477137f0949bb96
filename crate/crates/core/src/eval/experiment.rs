use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{error_cdf, mspe, percentile};
use super::plan::ExperimentPlan;
use crate::baselines::{rss_match, RssrLocator};
use crate::channel::{synthesize_received, PdPose};
use crate::classifiers::{Classifier, ClassifierRegistry, TrainSet};
use crate::fusion::{
    build_prediction_matrix, gd_ls_fit, gd_ls_predict, gi_ls_fit, gi_ls_predict, FusionWeights, GdWeightBank,
    PredictionMatrix,
};
use crate::spectral::{build_fingerprints_with, column_mean, db_to_linear, FingerprintDb};
use crate::{Error, Method, Point2, Result};

/// CDF thresholds run from 0 to this bound in `CDF_STEP_M` steps.
const CDF_MAX_M: f64 = 1.0;
const CDF_STEP_M: f64 = 0.005;

/// One evaluated online query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: Method,
    pub trial: usize,
    pub grid_index: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub error_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfRow {
    pub method: Method,
    pub threshold_m: f64,
    pub fraction: f64,
}

/// Aggregate accuracy of one method over every trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub queries: usize,
    pub mspe: f64,
    pub p90: f64,
    pub within_5cm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method);
            }
        }
        out
    }

    pub fn errors(&self, method: Method) -> Vec<f64> {
        self.rows.iter().filter(|r| r.method == method).map(|r| r.error_m).collect()
    }

    pub fn mspe(&self, method: Method) -> Result<f64> {
        let (est, truth): (Vec<Point2>, Vec<Point2>) = self
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (Point2::new(r.est_x, r.est_y), Point2::new(r.true_x, r.true_y)))
            .unzip();
        mspe(&est, &truth)
    }

    /// Shared threshold grid for every method. The largest observed error is
    /// appended when it exceeds the regular range so each curve reaches 1.
    pub fn cdf_thresholds(&self) -> Vec<f64> {
        let steps = (CDF_MAX_M / CDF_STEP_M).round() as usize;
        let mut t: Vec<f64> = (0..=steps).map(|i| i as f64 * CDF_STEP_M).collect();
        let worst = self.rows.iter().map(|r| r.error_m).fold(0.0, f64::max);
        if worst > CDF_MAX_M {
            t.push(worst);
        }
        t
    }

    pub fn cdf_rows(&self) -> Vec<CdfRow> {
        let thresholds = self.cdf_thresholds();
        self.methods()
            .into_iter()
            .flat_map(|method| {
                let fr = error_cdf(&self.errors(method), &thresholds);
                thresholds
                    .iter()
                    .zip(fr)
                    .map(move |(&threshold_m, fraction)| CdfRow {
                        method,
                        threshold_m,
                        fraction,
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn summary(&self) -> Result<Vec<MethodSummary>> {
        self.methods()
            .into_iter()
            .map(|method| {
                let errors = self.errors(method);
                Ok(MethodSummary {
                    method,
                    queries: errors.len(),
                    mspe: self.mspe(method)?,
                    p90: percentile(&errors, 0.9),
                    within_5cm: error_cdf(&errors, &[0.05])[0],
                })
            })
            .collect()
    }
}

/// One fused weight, as exported to `weights.csv`. GI-LS rows carry no
/// grid index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRecord {
    pub trial: usize,
    pub method: Method,
    pub grid_index: Option<usize>,
    pub axis: &'static str,
    pub classifier: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub results: ResultTable,
    pub weights: Vec<WeightRecord>,
}

/// Mean RSS (dB) at one grid point for several FFT lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct FftLengthTable {
    pub fft_lens: Vec<usize>,
    pub tones: Vec<f64>,
    /// `mean_db[tone][column]`.
    pub mean_db: Vec<Vec<f64>>,
}

impl FftLengthTable {
    /// Difference between neighbouring columns, per tone. Empty rows when
    /// only one FFT length was requested.
    pub fn deltas(&self) -> Vec<Vec<f64>> {
        self.mean_db
            .iter()
            .map(|row| row.windows(2).map(|w| w[1] - w[0]).collect())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("freq_hz");
        for n in &self.fft_lens {
            s.push_str(&format!("  N={n:>6}"));
        }
        for w in self.fft_lens.windows(2) {
            s.push_str(&format!("  d{}->{}", w[0], w[1]));
        }
        s.push('\n');
        for ((f, row), d) in self.tones.iter().zip(&self.mean_db).zip(self.deltas()) {
            s.push_str(&format!("{f:>7.0}"));
            for v in row {
                s.push_str(&format!("  {v:>8.4}"));
            }
            for (v, w) in d.iter().zip(self.fft_lens.windows(2)) {
                let width = format!("  d{}->{}", w[0], w[1]).len() - 2;
                s.push_str(&format!("  {v:>width$.4}"));
            }
            s.push('\n');
        }
        s
    }
}

/// SplitMix64 finaliser, used to derive independent sub-seeds.
fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a of a classifier name, so seeds depend on the name, not the order.
fn name_salt(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

const NOISE_SALT: u64 = 1;
const SPLIT_SALT: u64 = 2;
const CLASSIFIER_SALT: u64 = 3;

pub fn trial_seed(plan: &ExperimentPlan, trial: usize) -> u64 {
    plan.seed.wrapping_add(trial as u64)
}

/// Site survey for one trial: synthesizes every grid point's stream and
/// reduces it to a quantized fingerprint database.
pub fn simulate_fingerprints(plan: &ExperimentPlan, seed: u64) -> Result<FingerprintDb> {
    plan.validate()?;
    let params = plan.channel.params()?;
    let grid = plan.geometry.grid_points();
    let leds = &plan.geometry.leds;
    let n = plan.spectral.fft_len;
    let len = n * plan.spectral.blocks_per_grid;
    let noise_seed = mix(seed, NOISE_SALT);
    let db = build_fingerprints_with(
        &grid,
        n,
        params.sample_rate,
        &plan.geometry.tones(),
        plan.spectral.db_floor,
        |g| synthesize_received(leds, &PdPose::at(grid[g]), &params, len, mix(noise_seed, g as u64)),
    )?;
    Ok(db.quantized())
}

/// Block indices of one grid point, by role.
struct BlockSplit {
    train: Vec<usize>,
    offline: Vec<usize>,
    online: Vec<usize>,
}

fn split_blocks(plan: &ExperimentPlan, q: usize, g: usize, seed: u64) -> Vec<BlockSplit> {
    let (n_train, n_off, _) = plan.split.counts(q);
    let split_seed = mix(seed, SPLIT_SALT);
    (0..g)
        .map(|gi| {
            let mut idx: Vec<usize> = (0..q).collect();
            if plan.split.shuffle {
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(split_seed, gi as u64)));
            }
            let online = idx.split_off(n_train + n_off);
            let offline = idx.split_off(n_train);
            BlockSplit {
                train: idx,
                offline,
                online,
            }
        })
        .collect()
}

/// Rows of `db` selected by `pick`, with their grid labels.
fn gather(db: &FingerprintDb, split: &[BlockSplit], pick: impl Fn(&BlockSplit) -> &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (g, s) in split.iter().enumerate() {
        for &b in pick(s) {
            rows.push(db.samples[g][b].clone());
            labels.push(g);
        }
    }
    (rows, labels)
}

/// Classifier names the plan needs: fusion members first, then any single
/// classifiers not already among them.
fn needed_classifiers(plan: &ExperimentPlan) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    if plan.methods.iter().any(Method::is_fusion) {
        names.extend(plan.fusion.members.iter().cloned());
    }
    for m in &plan.methods {
        if let Some(key) = m.classifier_key() {
            if !names.iter().any(|n| n == key) {
                names.push(key.to_string());
            }
        }
    }
    names
}

fn weight_records(trial: usize, method: Method, grid: Option<usize>, w: &FusionWeights, names: &[String]) -> Vec<WeightRecord> {
    let mut out = Vec::with_capacity(2 * names.len());
    for (axis, ws) in [("x", &w.wx), ("y", &w.wy)] {
        for (name, &weight) in names.iter().zip(ws.iter()) {
            out.push(WeightRecord {
                trial,
                method,
                grid_index: grid,
                axis,
                classifier: name.clone(),
                weight,
            });
        }
    }
    out
}

/// Runs every requested method on one fingerprint database.
pub fn run_trial(plan: &ExperimentPlan, db: &FingerprintDb, trial: usize) -> Result<ExperimentOutput> {
    plan.validate()?;
    db.validate().map_err(|e| e.in_stage("survey"))?;
    if db.m() != plan.geometry.leds.len() {
        return Err(Error::Dimension(format!(
            "database has {} tones but the plan configures {} LEDs",
            db.m(),
            plan.geometry.leds.len()
        ))
        .in_stage("survey"));
    }
    let seed = trial_seed(plan, trial);
    let grid = db.grid.clone();
    let split = split_blocks(plan, db.q(), db.g(), seed);
    let (train_x, train_y) = gather(db, &split, |s| &s.train);
    let (off_x, off_y) = gather(db, &split, |s| &s.offline);
    let (on_x, on_y) = gather(db, &split, |s| &s.online);

    // Mean fingerprints come from the training blocks only.
    let mean_fps: Vec<Vec<f64>> = split
        .iter()
        .enumerate()
        .map(|(g, s)| {
            let rows: Vec<Vec<f64>> = s.train.iter().map(|&b| db.samples[g][b].clone()).collect();
            column_mean(&rows, db.m())
        })
        .collect();

    let names = needed_classifiers(plan);
    let trained: Vec<Box<dyn Classifier>> = if names.is_empty() {
        Vec::new()
    } else {
        let set = TrainSet::new(train_x, train_y, grid.clone()).map_err(|e| e.in_stage("training"))?;
        let registry = ClassifierRegistry::with_builtin(&plan.classifiers);
        let cls_seed = mix(seed, CLASSIFIER_SALT);
        names
            .par_iter()
            .map(|n| registry.train(n, &set, mix(cls_seed, name_salt(n))))
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("training"))?
    };
    let refs: Vec<&dyn Classifier> = trained.iter().map(|c| c.as_ref()).collect();
    let online_pred = if refs.is_empty() {
        None
    } else {
        Some(build_prediction_matrix(&refs, &on_x).map_err(|e| e.in_stage("prediction"))?)
    };
    let column = |name: &str| names.iter().position(|n| n == name);

    let mut weights = Vec::new();
    let wants = |m: Method| plan.methods.contains(&m);
    let members = &plan.fusion.members;
    let member_cols: Vec<usize> = members.iter().filter_map(|n| column(n)).collect();
    let member_row = |j: usize| -> (Vec<f64>, Vec<f64>) {
        let p = online_pred.as_ref().expect("fusion implies trained members");
        (
            member_cols.iter().map(|&c| p.x_hat[(j, c)]).collect(),
            member_cols.iter().map(|&c| p.y_hat[(j, c)]).collect(),
        )
    };

    let mut gi: Option<FusionWeights> = None;
    let mut gd: Option<GdWeightBank> = None;
    if wants(Method::GiLs) || wants(Method::GdLs) {
        let member_refs: Vec<&dyn Classifier> = member_cols.iter().map(|&c| refs[c]).collect();
        let off_pred = build_prediction_matrix(&member_refs, &off_x).map_err(|e| e.in_stage("fusion"))?;
        if wants(Method::GiLs) {
            let truth: Vec<Point2> = off_y.iter().map(|&g| grid[g]).collect();
            let w = gi_ls_fit(&off_pred, &truth, plan.fusion.mode, plan.fusion.rank_tol)
                .map_err(|e| e.in_stage("fusion"))?;
            weights.extend(weight_records(trial, Method::GiLs, None, &w, members));
            gi = Some(w);
        }
        if wants(Method::GdLs) {
            let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); grid.len()];
            for (j, &g) in off_y.iter().enumerate() {
                rows_of[g].push(j);
            }
            let per_grid: Vec<PredictionMatrix> = rows_of.iter().map(|r| off_pred.select_rows(r)).collect();
            let bank = gd_ls_fit(&per_grid, &grid, mean_fps.clone(), plan.fusion.rank_tol)
                .map_err(|e| e.in_stage("fusion"))?;
            for g in 0..grid.len() {
                weights.extend(weight_records(trial, Method::GdLs, Some(g), &bank.grid_weights(g), members));
            }
            gd = Some(bank);
        }
    }

    let rssr = if wants(Method::Rssr) {
        Some(RssrLocator::new(plan.rssr_config()?).map_err(|e| e.in_stage("rssr"))?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(plan.methods.len() * on_x.len());
    for &method in &plan.methods {
        let estimates: Vec<Point2> = (0..on_x.len())
            .into_par_iter()
            .map(|j| -> Result<Point2> {
                let query = &on_x[j];
                Ok(match method {
                    Method::Knn | Method::Elm | Method::RandomForest => {
                        let c = column(method.classifier_key().expect("single classifier")).expect("trained");
                        let p = online_pred.as_ref().expect("trained");
                        Point2::new(p.x_hat[(j, c)], p.y_hat[(j, c)])
                    }
                    Method::GiLs => {
                        let (rx, ry) = member_row(j);
                        gi_ls_predict(gi.as_ref().expect("fitted"), &rx, &ry)?.position
                    }
                    Method::GdLs => {
                        let (rx, ry) = member_row(j);
                        gd_ls_predict(gd.as_ref().expect("fitted"), query, &rx, &ry)?.position
                    }
                    Method::RssMatch => rss_match(query, &mean_fps, &grid)?.position,
                    Method::Rssr => {
                        let linear: Vec<f64> = query.iter().map(|&v| db_to_linear(v)).collect();
                        rssr.as_ref().expect("built").locate(&linear)?.position
                    }
                })
            })
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("evaluation"))?;
        for (j, est) in estimates.into_iter().enumerate() {
            let g = on_y[j];
            let truth = grid[g];
            rows.push(ResultRow {
                method,
                trial,
                grid_index: g,
                true_x: truth.x,
                true_y: truth.y,
                est_x: est.x,
                est_y: est.y,
                error_m: est.distance(&truth),
            });
        }
    }
    Ok(ExperimentOutput {
        results: ResultTable { rows },
        weights,
    })
}

/// Full protocol: per trial, survey then evaluate. Trials run concurrently
/// and are assembled in trial order.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let outputs: Vec<ExperimentOutput> = (0..plan.trials)
        .into_par_iter()
        .map(|t| {
            let db = simulate_fingerprints(plan, trial_seed(plan, t)).map_err(|e| e.in_stage("survey"))?;
            run_trial(plan, &db, t)
        })
        .collect::<Result<_>>()?;
    Ok(merge(outputs))
}

/// Runs every trial on one given database (for example one read from
/// disk). Trials then differ only in split shuffling and classifier seeds.
pub fn run_experiment_on(plan: &ExperimentPlan, db: &FingerprintDb) -> Result<ExperimentOutput> {
    plan.validate()?;
    let outputs: Vec<ExperimentOutput> = (0..plan.trials)
        .into_par_iter()
        .map(|t| run_trial(plan, db, t))
        .collect::<Result<_>>()?;
    Ok(merge(outputs))
}

fn merge(outputs: Vec<ExperimentOutput>) -> ExperimentOutput {
    let mut all = ExperimentOutput::default();
    for o in outputs {
        all.results.rows.extend(o.results.rows);
        all.weights.extend(o.weights);
    }
    all
}

/// Mean RSS at grid point `grid_index` for each FFT length, averaged over
/// `plan.spectral.blocks_per_grid` blocks of the plan's channel.
pub fn fft_length_table(plan: &ExperimentPlan, fft_lens: &[usize], grid_index: usize) -> Result<FftLengthTable> {
    plan.validate_survey()?;
    if fft_lens.is_empty() {
        return Err(Error::domain("no FFT lengths requested"));
    }
    let grid = plan.geometry.grid_points();
    let point = *grid
        .get(grid_index)
        .ok_or_else(|| Error::domain(format!("grid index {grid_index} outside 0..{}", grid.len())))?;
    let params = plan.channel.params()?;
    let tones = plan.geometry.tones();
    let blocks = plan.spectral.blocks_per_grid;
    let columns: Vec<Vec<f64>> = fft_lens
        .par_iter()
        .map(|&n| {
            let seed = mix(mix(plan.seed, NOISE_SALT), n as u64);
            let db = build_fingerprints_with(&[point], n, params.sample_rate, &tones, plan.spectral.db_floor, |_| {
                synthesize_received(&plan.geometry.leds, &PdPose::at(point), &params, n * blocks, seed)
            })?;
            Ok(column_mean(&db.samples[0], tones.len()))
        })
        .collect::<Result<_>>()
        .map_err(|e: Error| e.in_stage("table"))?;
    let mean_db = (0..tones.len()).map(|m| columns.iter().map(|c| c[m]).collect()).collect();
    Ok(FftLengthTable {
        fft_lens: fft_lens.to_vec(),
        tones,
        mean_db,
    })
}
