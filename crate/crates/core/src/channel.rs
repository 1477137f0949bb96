//! Line-of-sight visible-light IM/DD channel.
//!
//! Each LED hangs from the ceiling facing straight down and drives a
//! DC-biased tone `w(t) (1 + cos(2 pi f t))`; the photodiode lies on the
//! floor (z = 0) facing straight up. Under that geometry both the radiation
//! and incidence angles have cosine `h / d`, so the Lambertian gain is fully
//! determined by the horizontal offset and the mounting height.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Point2, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedConfig {
    /// `[a, b, h]` in meters; `h` is the height above the receiver plane.
    pub position: [f64; 3],
    pub frequency_hz: f64,
    /// Drive amplitude of the windowed sinusoid.
    pub amplitude: f64,
    /// Optical-to-electrical conversion folded with any fixed front-end gain.
    pub gain: f64,
}

impl LedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0) {
            return Err(Error::domain("LED frequency must be positive"));
        }
        if !(self.position[2] > 0.0) {
            return Err(Error::domain("LED height must be positive"));
        }
        if !(self.gain >= 0.0) {
            return Err(Error::domain("LED gain must be non-negative"));
        }
        if !self.amplitude.is_finite() || self.position.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("LED parameters must be finite"));
        }
        Ok(())
    }

    pub fn height(&self) -> f64 {
        self.position[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub lambertian_order: f64,
    /// Photodiode area, m².
    pub pd_area: f64,
    /// Standard deviation of the additive white Gaussian noise per sample.
    pub noise_std: f64,
    pub speed_of_light: f64,
    pub sample_rate: f64,
    pub window: Window,
}

impl ChannelParams {
    pub fn validate(&self, leds: &[LedConfig]) -> Result<()> {
        if !(self.lambertian_order > 0.0) {
            return Err(Error::domain("Lambertian order must be positive"));
        }
        if !(self.pd_area > 0.0) {
            return Err(Error::domain("photodiode area must be positive"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::domain("noise std must be non-negative"));
        }
        if !(self.speed_of_light > 0.0) {
            return Err(Error::domain("speed of light must be positive"));
        }
        let f_max = leds.iter().map(|l| l.frequency_hz).fold(0.0, f64::max);
        if !(self.sample_rate > 2.0 * f_max) {
            return Err(Error::domain(format!(
                "sample rate {} Hz does not exceed twice the highest tone {} Hz",
                self.sample_rate, f_max
            )));
        }
        Ok(())
    }
}

/// Photodiode on the floor plane, facing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdPose {
    position: Point2,
}

impl PdPose {
    pub fn new(x: f64, y: f64) -> Self {
        PdPose {
            position: Point2::new(x, y),
        }
    }

    pub fn at(p: Point2) -> Self {
        PdPose { position: p }
    }

    pub fn position(&self) -> Point2 {
        self.position
    }

    /// Always `[x, y, 0]`.
    pub fn position3(&self) -> [f64; 3] {
        [self.position.x, self.position.y, 0.0]
    }
}

/// Lambertian order `m = -ln 2 / ln cos(semi_angle)` for a half-power
/// semi-angle given in degrees.
pub fn lambertian_order_from_semiangle(semi_angle_deg: f64) -> Result<f64> {
    if !(semi_angle_deg > 0.0 && semi_angle_deg < 90.0) {
        return Err(Error::domain(format!(
            "semi-angle must lie in (0, 90) degrees, got {semi_angle_deg}"
        )));
    }
    Ok(-std::f64::consts::LN_2 / semi_angle_deg.to_radians().cos().ln())
}

pub fn distance(led: &LedConfig, pd: &PdPose) -> f64 {
    let p = pd.position();
    let h = led.height();
    let dx = led.position[0] - p.x;
    let dy = led.position[1] - p.y;
    (h * h + dx * dx + dy * dy).sqrt()
}

/// Channel DC gain `((m+1) S / (2 pi d^2)) cos^m(phi) cos(psi)` with
/// `cos(phi) = cos(psi) = h / d`.
pub fn attenuation(led: &LedConfig, pd: &PdPose, params: &ChannelParams) -> f64 {
    let d = distance(led, pd);
    let m = params.lambertian_order;
    let cos = led.height() / d;
    (m + 1.0) * params.pd_area / (2.0 * std::f64::consts::PI * d * d) * cos.powf(m) * cos
}

/// Tone amplitude at the receiver (`alpha * gain * amplitude`).
pub fn received_amplitude(led: &LedConfig, pd: &PdPose, params: &ChannelParams) -> f64 {
    attenuation(led, pd, params) * led.gain * led.amplitude
}

/// Phase lag of the tone caused by the propagation delay `d / c`.
pub fn delay_phase(led: &LedConfig, pd: &PdPose, params: &ChannelParams) -> f64 {
    let tau = distance(led, pd) / params.speed_of_light;
    2.0 * std::f64::consts::PI * led.frequency_hz * tau
}

/// Noise-free contribution of every LED, precomputed for one receiver pose.
#[derive(Debug, Clone)]
struct ToneTerm {
    amplitude: f64,
    omega: f64,
    phase: f64,
}

fn tone_terms(leds: &[LedConfig], pd: &PdPose, params: &ChannelParams) -> Vec<ToneTerm> {
    leds.iter()
        .map(|led| ToneTerm {
            amplitude: received_amplitude(led, pd, params),
            omega: 2.0 * std::f64::consts::PI * led.frequency_hz / params.sample_rate,
            phase: delay_phase(led, pd, params),
        })
        .collect()
}

/// Samples `y[t]` for `t = 0..duration_samples` at the given receiver pose.
///
/// Noise is drawn from a ChaCha8 stream seeded with `rng_seed`, so the same
/// inputs always reproduce the same sequence.
pub fn synthesize_received(
    leds: &[LedConfig],
    pd: &PdPose,
    params: &ChannelParams,
    duration_samples: usize,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if leds.is_empty() {
        return Err(Error::domain("at least one LED is required"));
    }
    if duration_samples == 0 {
        return Err(Error::domain("duration must be at least one sample"));
    }
    for led in leds {
        led.validate()?;
    }
    params.validate(leds)?;

    let terms = tone_terms(leds, pd, params);
    let mut out: Vec<f64> = (0..duration_samples)
        .map(|t| {
            let t = t as f64;
            terms
                .iter()
                .map(|term| term.amplitude * (1.0 + (term.omega * t - term.phase).cos()))
                .sum()
        })
        .collect();

    if params.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let normal = Normal::new(0.0, params.noise_std)
            .map_err(|e| Error::domain(format!("noise distribution: {e}")))?;
        for y in &mut out {
            *y += normal.sample(&mut rng);
        }
    }
    Ok(out)
}
