//! Config-driven commands behind the `vlcloc` binary.
//!
//! A config file is TOML holding an experiment plan plus an optional `[io]`
//! table with default paths. Every key is checked; unknown keys are
//! rejected before any computation starts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use vlcloc::eval::{
    fft_length_table, run_experiment, run_experiment_on, simulate_fingerprints, ExperimentOutput, ExperimentPlan,
    FftLengthTable, MethodSummary,
};
use vlcloc::spectral::FingerprintDb;

/// FFT lengths of the default block-length table.
pub const TABLE1_FFT_LENS: [usize; 4] = [2000, 4000, 6000, 8000];

#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration.
    Config(String),
    /// Failure while computing or writing outputs.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Default locations used when the command line gives none.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Fingerprint database written by `simulate` and read by `evaluate`.
    pub db: Option<PathBuf>,
    /// Directory receiving `results.csv`, `cdf.csv` and `weights.csv`.
    pub out_dir: Option<PathBuf>,
    /// Also export fused weights.
    pub weights: bool,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            db: None,
            out_dir: None,
            weights: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub plan: ExperimentPlan,
    pub io: IoConfig,
}

impl CliConfig {
    /// Parses and validates config text. Relative `[io]` paths stay relative
    /// to the working directory.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let io = match table.remove("io") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("[io]: {e}")))?,
            None => IoConfig::default(),
        };
        let plan: ExperimentPlan = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        plan.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(CliConfig { plan, io })
    }

    pub fn load(path: &Path, seed: Option<u64>) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(s) = seed {
            cfg.plan.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub path: PathBuf,
    pub g: usize,
    pub q: usize,
    pub m: usize,
    pub fft_len: usize,
}

impl std::fmt::Display for SimulateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "wrote {}: G={} Q={} M={} N={}",
            self.path.display(),
            self.g,
            self.q,
            self.m,
            self.fft_len
        )
    }
}

fn write_db(db: &FingerprintDb, path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, db.to_text()).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Site survey for the plan's root seed, written in the text DB format.
pub fn cmd_simulate(config: &Path, out: Option<&Path>, seed: Option<u64>) -> CliResult<SimulateSummary> {
    let cfg = CliConfig::load(config, seed)?;
    let path = out
        .map(Path::to_path_buf)
        .or(cfg.io.db.clone())
        .unwrap_or_else(|| PathBuf::from("fingerprints.txt"));
    let db = simulate_fingerprints(&cfg.plan, cfg.plan.seed).map_err(runtime)?;
    write_db(&db, &path)?;
    Ok(SimulateSummary {
        path,
        g: db.g(),
        q: db.q(),
        m: db.m(),
        fft_len: db.meta.fft_len,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateReport {
    pub out_dir: PathBuf,
    pub output: ExperimentOutput,
    pub summary: Vec<MethodSummary>,
}

impl EvaluateReport {
    /// Per-method MSPE table with the fraction of queries within 5 cm.
    pub fn table(&self) -> String {
        let mut s = format!("{:<10} {:>8} {:>10} {:>9} {:>8}\n", "method", "queries", "MSPE [m]", "p90 [m]", "<=5cm");
        for m in &self.summary {
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>10.4} {:>9.4} {:>7.2}%",
                m.method.name(),
                m.queries,
                m.mspe,
                m.p90,
                100.0 * m.within_5cm
            );
        }
        s
    }
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

/// Runs the plan and writes `results.csv`, `cdf.csv` and, when enabled,
/// `weights.csv`. With a database path, an existing file is evaluated as
/// is and a missing one is simulated and written first.
pub fn cmd_evaluate(config: &Path, db: Option<&Path>, out: Option<&Path>, seed: Option<u64>) -> CliResult<EvaluateReport> {
    let cfg = CliConfig::load(config, seed)?;
    let db_path = db.map(Path::to_path_buf).or(cfg.io.db.clone());
    let output = match db_path {
        Some(p) if p.exists() => {
            let text = fs::read_to_string(&p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            let db = FingerprintDb::from_text(&text).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            run_experiment_on(&cfg.plan, &db).map_err(runtime)?
        }
        Some(p) => {
            let db = simulate_fingerprints(&cfg.plan, cfg.plan.seed).map_err(runtime)?;
            write_db(&db, &p)?;
            run_experiment_on(&cfg.plan, &db).map_err(runtime)?
        }
        None => run_experiment(&cfg.plan).map_err(runtime)?,
    };
    let out_dir = out
        .map(Path::to_path_buf)
        .or(cfg.io.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out_dir).map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    write_csv(&out_dir.join("results.csv"), &output.results.rows)?;
    write_csv(&out_dir.join("cdf.csv"), &output.results.cdf_rows())?;
    if cfg.io.weights && !output.weights.is_empty() {
        write_csv(&out_dir.join("weights.csv"), &output.weights)?;
    }
    let summary = output.results.summary().map_err(runtime)?;
    Ok(EvaluateReport {
        out_dir,
        output,
        summary,
    })
}

/// Mean RSS at one grid point for each FFT length in `fft_lens`.
pub fn cmd_table1(config: &Path, fft_lens: &[usize], grid_index: usize, seed: Option<u64>) -> CliResult<FftLengthTable> {
    let cfg = CliConfig::load(config, seed)?;
    fft_length_table(&cfg.plan, fft_lens, grid_index).map_err(runtime)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
methods = ["KNN"]

[geometry]
grid_q = 2
grid_spacing_m = 0.05
leds = [
  { position = [1.0, 0.0, 1.5], frequency_hz = 800e3, amplitude = 1.0, gain = 1.0 },
  { position = [-1.0, 0.0, 1.5], frequency_hz = 900e3, amplitude = 1.0, gain = 1.0 },
]

[channel]
pd_area_m2 = 1e-4
noise_std = 0.0
sample_rate_hz = 4e6

[spectral]
fft_len = 200
blocks_per_grid = 5
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = CliConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.plan.trials, 1);
        assert_eq!(cfg.plan.classifiers.knn_k, 120);
        assert!(cfg.io.weights);
        assert_eq!(cfg.io.db, None);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        for extra in ["bogus = 1\n", "[io]\nmystery = 2\n", "[split]\ntrain = 1.0\noffline = 0.0\nonline = 0.0\nfoo = 1\n"] {
            let err = CliConfig::parse(&format!("{MINIMAL}\n{extra}")).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{extra}: {err}");
        }
        let err = CliConfig::parse(&MINIMAL.replace("pd_area_m2", "pd_area")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_plan_is_a_config_error() {
        let bad = format!("{MINIMAL}\n[split]\ntrain = 0.5\noffline = 0.5\nonline = 0.5\n");
        assert!(matches!(CliConfig::parse(&bad), Err(CliError::Config(_))));
    }
}
