use serde::{Deserialize, Serialize};

use crate::baselines::{RssrConfig, RssrSolver, ScanArea};
use crate::channel::{lambertian_order_from_semiangle, ChannelParams, LedConfig, Window, SPEED_OF_LIGHT};
use crate::classifiers::{ClassifierParams, ClassifierRegistry};
use crate::fusion::FusionMode;
use crate::spectral::DEFAULT_DB_FLOOR;
use crate::{Error, Method, Point2, Result};

/// Per-sample noise std of the default benchmark. Found by bisection (see
/// `examples/calibrate_noise.rs`) so that the single classifiers place on
/// average 87.5 % of online queries within 5 cm.
pub const BENCHMARK_NOISE_STD: f64 = 2.3e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    /// Grid side; the survey covers `grid_q * grid_q` points.
    pub grid_q: usize,
    pub grid_spacing_m: f64,
    /// Coordinate of grid point 0.
    #[serde(default)]
    pub origin: [f64; 2],
    pub leds: Vec<LedConfig>,
}

impl GeometrySpec {
    /// Grid points in row-major order (x fastest).
    pub fn grid_points(&self) -> Vec<Point2> {
        let q = self.grid_q;
        (0..q * q)
            .map(|g| {
                let (ix, iy) = (g % q, g / q);
                Point2::new(
                    self.origin[0] + ix as f64 * self.grid_spacing_m,
                    self.origin[1] + iy as f64 * self.grid_spacing_m,
                )
            })
            .collect()
    }

    pub fn tones(&self) -> Vec<f64> {
        self.leds.iter().map(|l| l.frequency_hz).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Either this or `lambertian_order`; defaults to 22 degrees.
    #[serde(default)]
    pub semi_angle_deg: Option<f64>,
    #[serde(default)]
    pub lambertian_order: Option<f64>,
    pub pd_area_m2: f64,
    pub noise_std: f64,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub window: Window,
}

impl ChannelSpec {
    pub fn params(&self) -> Result<ChannelParams> {
        let m = match (self.semi_angle_deg, self.lambertian_order) {
            (Some(_), Some(_)) => {
                return Err(Error::Plan("give either semi_angle_deg or lambertian_order, not both".into()))
            }
            (None, Some(m)) => m,
            (Some(a), None) => lambertian_order_from_semiangle(a)?,
            (None, None) => lambertian_order_from_semiangle(22.0)?,
        };
        Ok(ChannelParams {
            lambertian_order: m,
            pd_area: self.pd_area_m2,
            noise_std: self.noise_std,
            speed_of_light: SPEED_OF_LIGHT,
            sample_rate: self.sample_rate_hz,
            window: self.window,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    pub fft_len: usize,
    /// `Q`, the number of N-blocks recorded per grid point.
    pub blocks_per_grid: usize,
    #[serde(default = "default_db_floor")]
    pub db_floor: f64,
}

fn default_db_floor() -> f64 {
    DEFAULT_DB_FLOOR
}

/// Fractions of each grid point's blocks used for classifier training,
/// fusion-weight fitting and online evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub offline: f64,
    pub online: f64,
    /// Shuffle block order per grid point before splitting.
    #[serde(default)]
    pub shuffle: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.6,
            offline: 0.2,
            online: 0.2,
            shuffle: false,
        }
    }
}

impl SplitSpec {
    /// Block counts `(train, offline, online)` for `q` blocks.
    pub fn counts(&self, q: usize) -> (usize, usize, usize) {
        let train = (self.train * q as f64).round() as usize;
        let offline = ((self.offline * q as f64).round() as usize).min(q - train.min(q));
        let train = train.min(q);
        (train, offline, q - train - offline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    /// Relative singular-value cutoff; unset means `1e-10 * max(L, H)`.
    #[serde(default)]
    pub rank_tol: Option<f64>,
    #[serde(default)]
    pub mode: FusionMode,
    /// Registry names of the fused classifiers, in column order.
    #[serde(default = "default_members")]
    pub members: Vec<String>,
}

fn default_members() -> Vec<String> {
    vec!["knn".into(), "elm".into(), "rf".into()]
}

impl Default for FusionSpec {
    fn default() -> Self {
        FusionSpec {
            rank_tol: None,
            mode: FusionMode::SvdLs,
            members: default_members(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RssrSpec {
    /// Semi-angle the RSSR model assumes (may differ from the channel's).
    pub semi_angle_deg: f64,
    #[serde(default)]
    pub solver: RssrSolver,
    pub scan_resolution_m: f64,
    /// Extra margin scanned around the grid's bounding box.
    #[serde(default)]
    pub scan_margin_m: f64,
}

impl Default for RssrSpec {
    fn default() -> Self {
        RssrSpec {
            semi_angle_deg: 22.0,
            solver: RssrSolver::GridScan,
            scan_resolution_m: 0.01,
            scan_margin_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    pub methods: Vec<Method>,
    pub geometry: GeometrySpec,
    pub channel: ChannelSpec,
    pub spectral: SpectralSpec,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub classifiers: ClassifierParams,
    #[serde(default)]
    pub fusion: FusionSpec,
    #[serde(default)]
    pub rssr: RssrSpec,
}

fn one() -> usize {
    1
}

impl ExperimentPlan {
    /// The desk-scale analogue of the reference testbed: 15 x 15 grid at
    /// 5 cm, four LEDs at 1.48 m, tones 800-950 kHz, 4 MHz sampling,
    /// N = 2000 and 200 blocks per grid point. LED gains make the first grid
    /// point's noise-free RSS at N = 2000 equal the published first-column
    /// dB levels.
    pub fn benchmark() -> Self {
        let led = |x: f64, y: f64, f: f64, gain: f64| LedConfig {
            position: [x, y, 1.48],
            frequency_hz: f,
            amplitude: 1.0,
            gain,
        };
        ExperimentPlan {
            seed: 2017,
            trials: 1,
            methods: Method::ALL.to_vec(),
            geometry: GeometrySpec {
                grid_q: 15,
                grid_spacing_m: 0.05,
                origin: [0.0, 0.0],
                leds: vec![
                    led(1.56, 0.70, 800e3, 4525.5034),
                    led(-1.13, 0.67, 850e3, 475.00679),
                    led(1.56, -0.47, 900e3, 4708.0614),
                    led(-1.13, -0.50, 950e3, 417.07341),
                ],
            },
            channel: ChannelSpec {
                semi_angle_deg: Some(22.0),
                lambertian_order: None,
                pd_area_m2: 1e-4,
                noise_std: BENCHMARK_NOISE_STD,
                sample_rate_hz: 4e6,
                window: Window::Rectangular,
            },
            spectral: SpectralSpec {
                fft_len: 2000,
                blocks_per_grid: 200,
                db_floor: DEFAULT_DB_FLOOR,
            },
            split: SplitSpec::default(),
            classifiers: ClassifierParams::default(),
            fusion: FusionSpec::default(),
            rssr: RssrSpec::default(),
        }
    }

    /// Checks the parts needed to synthesize signals: geometry, channel and
    /// spectral settings.
    pub fn validate_survey(&self) -> Result<()> {
        let g = &self.geometry;
        if g.grid_q == 0 || !(g.grid_spacing_m > 0.0) {
            return Err(Error::Plan("grid needs q >= 1 and positive spacing".into()));
        }
        if g.leds.is_empty() {
            return Err(Error::Plan("no LEDs configured".into()));
        }
        let tones = g.tones();
        if tones.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Plan("LED tone frequencies must be strictly increasing".into()));
        }
        for led in &g.leds {
            led.validate()?;
        }
        self.channel.params()?.validate(&g.leds)?;
        if self.spectral.fft_len < 2 || self.spectral.blocks_per_grid == 0 {
            return Err(Error::Plan("need fft_len >= 2 and at least one block per grid".into()));
        }
        Ok(())
    }

    /// Full check: survey settings plus split, method and fusion settings.
    pub fn validate(&self) -> Result<()> {
        self.validate_survey()?;
        let g = &self.geometry;
        let s = &self.split;
        if [s.train, s.offline, s.online].iter().any(|f| !(*f >= 0.0)) || (s.train + s.offline + s.online - 1.0).abs() > 1e-9 {
            return Err(Error::Plan("split fractions must be non-negative and sum to 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Plan("at least one trial is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Plan("no methods requested".into()));
        }
        let (train, offline, online) = self.split.counts(self.spectral.blocks_per_grid);
        if online == 0 {
            return Err(Error::Plan("online split is empty".into()));
        }
        let needs_train = self.methods.iter().any(|m| *m != Method::Rssr);
        if needs_train && train == 0 {
            return Err(Error::Plan("training split is empty".into()));
        }
        if self.methods.iter().any(|m| m.is_fusion()) {
            if offline == 0 {
                return Err(Error::Plan("fusion methods need a non-empty offline split".into()));
            }
            if self.fusion.members.is_empty() {
                return Err(Error::Plan("fusion needs at least one member classifier".into()));
            }
            let registry = ClassifierRegistry::with_builtin(&self.classifiers);
            if let Some(unknown) = self.fusion.members.iter().find(|n| registry.get(n).is_none()) {
                return Err(Error::Plan(format!(
                    "unknown fusion member `{unknown}`; known: {}",
                    registry.names().join(", ")
                )));
            }
        }
        if self.methods.contains(&Method::Rssr) && g.leds.len() < 3 {
            return Err(Error::Plan("RSSR needs at least three LEDs".into()));
        }
        Ok(())
    }

    pub fn rssr_config(&self) -> Result<RssrConfig> {
        let pts = self.geometry.grid_points();
        let margin = self.rssr.scan_margin_m;
        let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&Point2) -> f64| pts.iter().map(sel).fold(init, f);
        Ok(RssrConfig {
            lambertian_order: lambertian_order_from_semiangle(self.rssr.semi_angle_deg)?,
            led_positions: self.geometry.leds.iter().map(|l| l.position).collect(),
            solver: self.rssr.solver,
            scan_resolution: self.rssr.scan_resolution_m,
            area: ScanArea {
                x_min: fold(f64::min, f64::INFINITY, |p| p.x) - margin,
                x_max: fold(f64::max, f64::NEG_INFINITY, |p| p.x) + margin,
                y_min: fold(f64::min, f64::INFINITY, |p| p.y) - margin,
                y_max: fold(f64::max, f64::NEG_INFINITY, |p| p.y) + margin,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_plan_is_valid() {
        let p = ExperimentPlan::benchmark();
        p.validate().unwrap();
        assert_eq!(p.geometry.grid_points().len(), 225);
        assert_eq!(p.split.counts(200), (120, 40, 40));
    }

    #[test]
    fn split_must_sum_to_one() {
        let mut p = ExperimentPlan::benchmark();
        p.split.online = 0.3;
        assert!(matches!(p.validate(), Err(Error::Plan(_))));
    }

    #[test]
    fn conflicting_lambertian_inputs() {
        let mut p = ExperimentPlan::benchmark();
        p.channel.lambertian_order = Some(1.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn grid_is_row_major() {
        let p = ExperimentPlan::benchmark();
        let g = p.geometry.grid_points();
        assert_eq!(g[1], Point2::new(0.05, 0.0));
        assert_eq!(g[15], Point2::new(0.0, 0.05));
    }
}
