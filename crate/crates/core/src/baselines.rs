//! Comparison methods: nearest-mean RSS matching and RSS-ratio (RSSR)
//! positioning.
//!
//! RSSR assumes every LED emits the same power and that the receiver and
//! LEDs face each other vertically. Received optical power then scales as
//! `h^(m+1) / d^(m+3)`, and the periodogram peak, being an electrical power,
//! as its square. Ratios between LEDs cancel the unknown common emission
//! power, leaving equations in the distances only.

use serde::{Deserialize, Serialize};

use crate::fusion::gd_select_grid;
use crate::{Error, LocationEstimate, Method, Point2, Result};

/// Exponent relating the periodogram peak to received optical power.
const PSD_POWER_EXPONENT: f64 = 2.0;

pub fn rss_match(query: &[f64], mean_fps: &[Vec<f64>], grid_coords: &[Point2]) -> Result<LocationEstimate> {
    if mean_fps.is_empty() || mean_fps.len() != grid_coords.len() {
        return Err(Error::Dimension(format!(
            "{} mean fingerprints for {} grid points",
            mean_fps.len(),
            grid_coords.len()
        )));
    }
    if mean_fps.iter().any(|r| r.len() != query.len()) {
        return Err(Error::Dimension("query length differs from the fingerprint length".into()));
    }
    let g = gd_select_grid(query, mean_fps);
    Ok(LocationEstimate::new(grid_coords[g], Method::RssMatch))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RssrSolver {
    #[default]
    GridScan,
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanArea {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RssrConfig {
    pub lambertian_order: f64,
    pub led_positions: Vec<[f64; 3]>,
    pub solver: RssrSolver,
    pub scan_resolution: f64,
    pub area: ScanArea,
}

impl RssrConfig {
    fn validate(&self) -> Result<()> {
        if self.led_positions.len() < 3 {
            return Err(Error::domain("RSSR needs at least three LEDs for a 2D fix"));
        }
        for (i, a) in self.led_positions.iter().enumerate() {
            if !(a[2] > 0.0) {
                return Err(Error::domain("LED heights must be positive"));
            }
            if self.led_positions[..i].iter().any(|b| b == a) {
                return Err(Error::domain("LED positions must be distinct"));
            }
        }
        if !(self.lambertian_order > 0.0) {
            return Err(Error::domain("Lambertian order must be positive"));
        }
        if !(self.scan_resolution > 0.0) {
            return Err(Error::domain("scan resolution must be positive"));
        }
        let a = &self.area;
        if !(a.x_max >= a.x_min && a.y_max >= a.y_min) {
            return Err(Error::domain("scan area is empty"));
        }
        Ok(())
    }
}

/// Precomputed RSSR scan over a fixed area.
#[derive(Debug, Clone)]
pub struct RssrLocator {
    cfg: RssrConfig,
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Model log-power of every LED at every scan cell, row-major over (y, x).
    model: Vec<f64>,
    /// LED-dependent constant `2 (m+1) ln h_i`.
    height_term: Vec<f64>,
}

fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| min + i as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssrFix {
    pub position: Point2,
    /// Set when Gauss-Newton did not converge and the scan optimum was kept.
    pub degraded: bool,
}

impl RssrLocator {
    pub fn new(cfg: RssrConfig) -> Result<Self> {
        cfg.validate()?;
        let xs = axis(cfg.area.x_min, cfg.area.x_max, cfg.scan_resolution);
        let ys = axis(cfg.area.y_min, cfg.area.y_max, cfg.scan_resolution);
        let mut model = Vec::with_capacity(xs.len() * ys.len() * cfg.led_positions.len());
        for &y in &ys {
            for &x in &xs {
                for led in &cfg.led_positions {
                    model.push(log_model(&cfg, led, x, y));
                }
            }
        }
        let m = cfg.lambertian_order;
        let height_term = cfg
            .led_positions
            .iter()
            .map(|l| PSD_POWER_EXPONENT * (m + 1.0) * l[2].ln())
            .collect();
        Ok(RssrLocator {
            cfg,
            xs,
            ys,
            model,
            height_term,
        })
    }

    pub fn config(&self) -> &RssrConfig {
        &self.cfg
    }

    /// Sum over LED pairs of squared log-ratio residuals at `(x, y)`.
    pub fn objective(&self, log_rss: &[f64], x: f64, y: f64) -> f64 {
        let b: Vec<f64> = self.cfg.led_positions.iter().map(|l| log_model(&self.cfg, l, x, y)).collect();
        self.pair_objective(log_rss, &b)
    }

    fn pair_objective(&self, log_rss: &[f64], model: &[f64]) -> f64 {
        let e: Vec<f64> = log_rss
            .iter()
            .zip(&self.height_term)
            .zip(model)
            .map(|((a, h), b)| a - h - b)
            .collect();
        let mut s = 0.0;
        for i in 0..e.len() {
            for j in i + 1..e.len() {
                let r = e[i] - e[j];
                s += r * r;
            }
        }
        s
    }

    /// Locates a receiver from linear-power RSS (one value per LED).
    pub fn locate(&self, rss_linear: &[f64]) -> Result<RssrFix> {
        let m = self.cfg.led_positions.len();
        if rss_linear.len() != m {
            return Err(Error::Dimension(format!("{} RSS values for {m} LEDs", rss_linear.len())));
        }
        if rss_linear.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::domain("RSSR needs strictly positive, finite linear RSS"));
        }
        let log_rss: Vec<f64> = rss_linear.iter().map(|r| r.ln()).collect();

        let nx = self.xs.len();
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (iy, chunk) in self.model.chunks_exact(nx * m).enumerate() {
            for (ix, cell) in chunk.chunks_exact(m).enumerate() {
                let f = self.pair_objective(&log_rss, cell);
                if f < best.0 {
                    best = (f, ix, iy);
                }
            }
        }
        let scan = self.refine_quadratic(&log_rss, best.1, best.2);
        match self.cfg.solver {
            RssrSolver::GridScan => Ok(RssrFix {
                position: scan,
                degraded: false,
            }),
            RssrSolver::GaussNewton => Ok(match self.gauss_newton(&log_rss, scan) {
                Some(p) => RssrFix {
                    position: p,
                    degraded: false,
                },
                None => RssrFix {
                    position: scan,
                    degraded: true,
                },
            }),
        }
    }

    /// Fits `f = c0 + c1 dx + c2 dy + c3 dx^2 + c4 dx dy + c5 dy^2` over the
    /// 3x3 cells around the scan optimum and moves to its stationary point.
    fn refine_quadratic(&self, log_rss: &[f64], ix: usize, iy: usize) -> Point2 {
        let scan = Point2::new(self.xs[ix], self.ys[iy]);
        if self.xs.len() < 3 || self.ys.len() < 3 {
            return scan;
        }
        let cx = ix.clamp(1, self.xs.len() - 2);
        let cy = iy.clamp(1, self.ys.len() - 2);
        let h = self.cfg.scan_resolution;
        let mut ata = nalgebra::Matrix6::<f64>::zeros();
        let mut atb = nalgebra::Vector6::<f64>::zeros();
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let x = self.xs[(cx as i32 + dx) as usize];
                let y = self.ys[(cy as i32 + dy) as usize];
                let f = self.objective(log_rss, x, y);
                let (u, v) = (dx as f64, dy as f64);
                let row = nalgebra::Vector6::new(1.0, u, v, u * u, u * v, v * v);
                ata += row * row.transpose();
                atb += row * f;
            }
        }
        let Some(c) = ata.lu().solve(&atb) else {
            return scan;
        };
        let hess = nalgebra::Matrix2::new(2.0 * c[3], c[4], c[4], 2.0 * c[5]);
        if !(hess[(0, 0)] > 0.0 && hess.determinant() > 0.0) {
            return scan;
        }
        let Some(step) = hess.lu().solve(&nalgebra::Vector2::new(-c[1], -c[2])) else {
            return scan;
        };
        if step.amax() > 1.5 {
            return scan;
        }
        let p = Point2::new(self.xs[cx] + step[0] * h, self.ys[cy] + step[1] * h);
        if self.objective(log_rss, p.x, p.y) <= self.objective(log_rss, scan.x, scan.y) {
            p
        } else {
            scan
        }
    }

    fn gauss_newton(&self, log_rss: &[f64], start: Point2) -> Option<Point2> {
        let k = PSD_POWER_EXPONENT * (self.cfg.lambertian_order + 3.0);
        let leds = &self.cfg.led_positions;
        let m = leds.len();
        let mut p = start;
        for _ in 0..100 {
            let mut e = Vec::with_capacity(m);
            let mut grad = Vec::with_capacity(m);
            for (i, l) in leds.iter().enumerate() {
                let d2 = l[2] * l[2] + (p.x - l[0]).powi(2) + (p.y - l[1]).powi(2);
                e.push(log_rss[i] - self.height_term[i] + k * 0.5 * d2.ln());
                // derivative of e_i with respect to (x, y)
                grad.push((k * (p.x - l[0]) / d2, k * (p.y - l[1]) / d2));
            }
            let mut jtj = nalgebra::Matrix2::<f64>::zeros();
            let mut jtr = nalgebra::Vector2::<f64>::zeros();
            for i in 0..m {
                for j in i + 1..m {
                    let r = e[i] - e[j];
                    let jr = nalgebra::Vector2::new(grad[i].0 - grad[j].0, grad[i].1 - grad[j].1);
                    jtj += jr * jr.transpose();
                    jtr += jr * r;
                }
            }
            let step = jtj.lu().solve(&(-jtr))?;
            p = Point2::new(p.x + step[0], p.y + step[1]);
            if !p.x.is_finite() || !p.y.is_finite() {
                return None;
            }
            if step.norm() < 1e-10 {
                return Some(p);
            }
        }
        None
    }
}

/// `-2 (m+3) ln d` for an LED at `led` and a receiver at `(x, y, 0)`.
fn log_model(cfg: &RssrConfig, led: &[f64; 3], x: f64, y: f64) -> f64 {
    let d2 = led[2] * led[2] + (x - led[0]).powi(2) + (y - led[1]).powi(2);
    -PSD_POWER_EXPONENT * (cfg.lambertian_order + 3.0) * 0.5 * d2.ln()
}

/// One-shot RSSR fix; builds the scan table on every call.
pub fn rssr_locate(query_linear: &[f64], cfg: &RssrConfig) -> Result<LocationEstimate> {
    let fix = RssrLocator::new(cfg.clone())?.locate(query_linear)?;
    Ok(LocationEstimate {
        position: fix.position,
        method: Method::Rssr,
        degraded: fix.degraded,
    })
}

/// Noise-free linear-power RSS predicted by the RSSR model (unit emission).
pub fn rssr_forward_model(cfg: &RssrConfig, p: Point2) -> Vec<f64> {
    let m = cfg.lambertian_order;
    cfg.led_positions
        .iter()
        .map(|l| {
            let d = (l[2] * l[2] + (p.x - l[0]).powi(2) + (p.y - l[1]).powi(2)).sqrt();
            (l[2].powf(m + 1.0) / d.powf(m + 3.0)).powf(PSD_POWER_EXPONENT)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(solver: RssrSolver) -> RssrConfig {
        RssrConfig {
            lambertian_order: 9.168_201_146_812_517,
            led_positions: vec![
                [1.56, 0.70, 1.48],
                [-1.13, 0.67, 1.48],
                [1.56, -0.47, 1.48],
                [-1.13, -0.50, 1.48],
            ],
            solver,
            scan_resolution: 0.01,
            area: ScanArea {
                x_min: 0.0,
                x_max: 0.7,
                y_min: 0.0,
                y_max: 0.7,
            },
        }
    }

    #[test]
    fn rss_match_examples() {
        let means = vec![vec![-20.0, -30.0], vec![-25.0, -25.0], vec![-30.0, -20.0]];
        let coords = vec![Point2::new(0.0, 0.0), Point2::new(0.05, 0.0), Point2::new(0.1, 0.0)];
        for (g, m) in means.iter().enumerate() {
            assert_eq!(rss_match(m, &means, &coords).unwrap().position, coords[g]);
        }
        // equidistant from grids 0 and 1
        let q = [-22.5, -27.5];
        assert_eq!(rss_match(&q, &means, &coords).unwrap().position, coords[0]);
        assert!(rss_match(&[0.0], &means, &coords).is_err());
    }

    #[test]
    fn noiseless_round_trip_both_solvers() {
        for solver in [RssrSolver::GridScan, RssrSolver::GaussNewton] {
            let loc = RssrLocator::new(cfg(solver)).unwrap();
            for p in [Point2::new(0.123, 0.456), Point2::new(0.35, 0.35), Point2::new(0.003, 0.69)] {
                let fix = loc.locate(&rssr_forward_model(loc.config(), p)).unwrap();
                assert!(fix.position.distance(&p) < 1e-3, "{solver:?} {p:?} -> {:?}", fix.position);
            }
        }
    }

    #[test]
    fn global_scale_cancels() {
        let loc = RssrLocator::new(cfg(RssrSolver::GridScan)).unwrap();
        let q = vec![2.0e-9, 7.0e-10, 1.1e-9, 4.0e-10];
        let a = loc.locate(&q).unwrap().position;
        for c in [1e-6, 3.7, 1e8] {
            let b = loc.locate(&q.iter().map(|v| v * c).collect::<Vec<_>>()).unwrap().position;
            assert!(a.distance(&b) < 1e-9);
        }
    }

    #[test]
    fn symmetric_leds_give_symmetric_fix() {
        let mut c = cfg(RssrSolver::GridScan);
        c.led_positions = vec![[-1.0, 0.2, 1.5], [1.0, 0.2, 1.5], [-1.0, 1.0, 1.5], [1.0, 1.0, 1.5]];
        c.area = ScanArea {
            x_min: -0.35,
            x_max: 0.35,
            y_min: 0.0,
            y_max: 0.7,
        };
        let q = [1e-3, 1e-3, 2e-3, 2e-3];
        let fix = rssr_locate(&q, &c).unwrap();
        assert!(fix.position.x.abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let loc = RssrLocator::new(cfg(RssrSolver::GridScan)).unwrap();
        assert!(loc.locate(&[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(loc.locate(&[1.0, 1.0, 1.0]).is_err());
        let mut c = cfg(RssrSolver::GridScan);
        c.led_positions.truncate(2);
        assert!(RssrLocator::new(c).is_err());
    }
}
