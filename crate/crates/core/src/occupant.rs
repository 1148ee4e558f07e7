//! Infant wrist motion: a mass-spring-damper excited by the car, a 100 Hz
//! IMU stream and the trailing-window wake detector.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const IMU_RATE_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WristMode {
    /// Damping acts on the wrist velocity relative to the seat.
    #[default]
    Physical,
    /// Damping acts on the vehicle speed, as the model is usually written.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WristModelConfig {
    pub m: f64,
    pub k: f64,
    pub c: f64,
    pub mode: WristMode,
}

impl Default for WristModelConfig {
    fn default() -> Self {
        Self {
            m: 0.4,
            k: 50.0,
            c: 1.0,
            mode: WristMode::Physical,
        }
    }
}

impl WristModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.k >= 0.0 && self.c >= 0.0) || !(self.m + self.k + self.c).is_finite() {
            return Err(invalid(format!(
                "wrist model needs m > 0, k >= 0, c >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn natural_period(&self) -> f64 {
        2.0 * std::f64::consts::PI * (self.m / self.k).sqrt()
    }
}

/// Displacement and velocity of the wrist relative to the seat.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OscillatorState {
    pub x: f64,
    pub v: f64,
}

impl OscillatorState {
    pub fn energy(&self, cfg: &WristModelConfig) -> f64 {
        0.5 * cfg.k * self.x * self.x + 0.5 * cfg.m * self.v * self.v
    }
}

/// Advances the oscillator by one semi-implicit Euler step and returns the
/// wrist acceleration read at the start of the step.
///
/// `vehicle_speed` only enters the paper-literal damping term.
pub fn wrist_accel_step(
    state: &mut OscillatorState,
    alpha_car: f64,
    vehicle_speed: f64,
    dt: f64,
    cfg: &WristModelConfig,
) -> Result<f64> {
    if !alpha_car.is_finite() || !vehicle_speed.is_finite() || !state.x.is_finite() || !state.v.is_finite() {
        return Err(invalid("non-finite wrist model input"));
    }
    if !(dt > 0.0) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    let restoring = (-cfg.k * state.x - cfg.c * state.v) / cfg.m;
    let out = match cfg.mode {
        WristMode::Physical => restoring,
        WristMode::PaperLiteral => alpha_car + (-cfg.k * state.x - cfg.c * vehicle_speed) / cfg.m,
    };
    let rel_acc = restoring - alpha_car;
    state.v += rel_acc * dt;
    state.x += state.v * dt;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuStream {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl ImuStream {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            sample_rate: IMU_RATE_HZ,
            samples,
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "alpha_wrist"])?;
        for (i, s) in self.samples.iter().enumerate() {
            out.write_record([format!("{:.2}", i as f64 / self.sample_rate), format!("{s:.6}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WakeDetectorConfig {
    pub window: usize,
    pub threshold: f64,
}

impl Default for WakeDetectorConfig {
    fn default() -> Self {
        Self {
            window: 300,
            threshold: 2.0,
        }
    }
}

impl WakeDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || !(self.threshold > 0.0) {
            return Err(invalid("wake detector needs window >= 1 and threshold > 0"));
        }
        Ok(())
    }
}

/// True iff the maximum of the trailing `window` samples exceeds the threshold.
pub fn window_wake_check(stream: &ImuStream, cfg: &WakeDetectorConfig) -> bool {
    let n = stream.samples.len();
    let start = n.saturating_sub(cfg.window);
    stream.samples[start..].iter().any(|&s| s > cfg.threshold)
}

/// Streaming equivalent of [`window_wake_check`].
#[derive(Debug, Clone)]
pub struct WakeDetector {
    cfg: WakeDetectorConfig,
    seen: usize,
    last_above: Option<usize>,
}

impl WakeDetector {
    pub fn new(cfg: WakeDetectorConfig) -> Self {
        Self {
            cfg,
            seen: 0,
            last_above: None,
        }
    }

    /// Feeds one sample and reports whether the trailing window is above threshold.
    pub fn push(&mut self, sample: f64) -> bool {
        if sample > self.cfg.threshold {
            self.last_above = Some(self.seen);
        }
        self.seen += 1;
        self.is_awake()
    }

    pub fn is_awake(&self) -> bool {
        self.last_above.is_some_and(|i| self.seen - i <= self.cfg.window)
    }
}

pub fn motion_features(segment: &[f64]) -> Result<(f64, f64)> {
    if segment.is_empty() {
        return Err(invalid("motion features of an empty segment"));
    }
    let max = segment.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg = segment.iter().sum::<f64>() / segment.len() as f64;
    Ok((max, avg.min(max)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccupantConfig {
    pub wrist: WristModelConfig,
    pub wake: WakeDetectorConfig,
    /// Standard deviation of per-axis sensor noise, m/s².
    pub noise_std: f64,
}

impl Default for OccupantConfig {
    fn default() -> Self {
        Self {
            wrist: WristModelConfig::default(),
            wake: WakeDetectorConfig::default(),
            noise_std: 0.02,
        }
    }
}

impl OccupantConfig {
    pub fn validate(&self) -> Result<()> {
        self.wrist.validate()?;
        self.wake.validate()?;
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid("noise_std must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Wrist oscillators on the longitudinal and lateral axes feeding the IMU.
#[derive(Debug, Clone)]
pub struct Occupant {
    cfg: OccupantConfig,
    longitudinal: OscillatorState,
    lateral: OscillatorState,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    detector: WakeDetector,
    stream: ImuStream,
}

impl Occupant {
    pub fn new(cfg: OccupantConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let noise = if cfg.noise_std > 0.0 {
            Some(Normal::new(0.0, cfg.noise_std).map_err(|e| invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            cfg,
            longitudinal: OscillatorState::default(),
            lateral: OscillatorState::default(),
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            detector: WakeDetector::new(cfg.wake),
            stream: ImuStream::new(Vec::new()),
        })
    }

    /// One IMU sample for the given car accelerations; returns the magnitude.
    pub fn sample(&mut self, long_acc: f64, lat_acc: f64, speed: f64, dt: f64) -> Result<f64> {
        let mut ax = wrist_accel_step(&mut self.longitudinal, long_acc, speed, dt, &self.cfg.wrist)?;
        // the lateral axis has no speed-proportional damping term
        let mut ay = wrist_accel_step(&mut self.lateral, lat_acc, 0.0, dt, &self.cfg.wrist)?;
        if let Some(n) = &self.noise {
            ax += n.sample(&mut self.rng);
            ay += n.sample(&mut self.rng);
        }
        let mag = ax.hypot(ay);
        self.detector.push(mag);
        self.stream.samples.push(mag);
        Ok(mag)
    }

    pub fn is_awake(&self) -> bool {
        self.detector.is_awake()
    }

    pub fn stream(&self) -> &ImuStream {
        &self.stream
    }

    pub fn sample_count(&self) -> usize {
        self.stream.samples.len()
    }

    pub fn config(&self) -> &OccupantConfig {
        &self.cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.01;

    #[test]
    fn paper_literal_passes_input_through_from_rest() {
        let cfg = WristModelConfig {
            mode: WristMode::PaperLiteral,
            ..Default::default()
        };
        let mut s = OscillatorState::default();
        assert_eq!(wrist_accel_step(&mut s, 1.7, 0.0, DT, &cfg).unwrap(), 1.7);
    }

    #[test]
    fn zero_input_stays_at_rest() {
        for mode in [WristMode::Physical, WristMode::PaperLiteral] {
            let cfg = WristModelConfig {
                mode,
                ..Default::default()
            };
            let mut s = OscillatorState::default();
            for _ in 0..1000 {
                assert_eq!(wrist_accel_step(&mut s, 0.0, 0.0, DT, &cfg).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn physical_mode_settles_to_the_car_acceleration() {
        let cfg = WristModelConfig::default();
        let mut s = OscillatorState::default();
        let mut last = 0.0;
        for _ in 0..3000 {
            last = wrist_accel_step(&mut s, 1.0, 10.0, DT, &cfg).unwrap();
        }
        assert!((last - 1.0).abs() < 1e-6, "{last}");
    }

    #[test]
    fn non_finite_input_rejected() {
        let cfg = WristModelConfig::default();
        let mut s = OscillatorState::default();
        assert!(wrist_accel_step(&mut s, f64::NAN, 0.0, DT, &cfg).is_err());
        assert!(wrist_accel_step(&mut s, 0.0, 0.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn wake_check_examples() {
        let cfg = WakeDetectorConfig::default();
        assert!(window_wake_check(&ImuStream::new(vec![0.1, 2.1, 0.3]), &cfg));
        assert!(!window_wake_check(&ImuStream::new(vec![0.1, 1.9, 0.3]), &cfg));
        assert!(!window_wake_check(&ImuStream::new(vec![0.0; 500]), &cfg));
        assert!(!window_wake_check(&ImuStream::new(vec![2.0; 10]), &cfg));
        // a spike older than the window no longer counts
        let mut old = vec![3.0];
        old.extend(vec![0.0; 300]);
        assert!(!window_wake_check(&ImuStream::new(old), &cfg));
    }

    #[test]
    fn motion_feature_examples() {
        assert_eq!(motion_features(&[0.5; 40]).unwrap(), (0.5, 0.5));
        assert_eq!(motion_features(&[0.0, 1.0, 2.0]).unwrap(), (2.0, 1.0));
        assert!(motion_features(&[]).is_err());
    }

    #[test]
    fn occupant_is_seeded() {
        let run = |seed| {
            let mut o = Occupant::new(OccupantConfig::default(), seed).unwrap();
            (0..200)
                .map(|i| o.sample((i as f64 * 0.05).sin(), 0.0, 5.0, DT).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn imu_csv_has_header_and_rows() {
        let mut buf = Vec::new();
        ImuStream::new(vec![0.5, 1.0]).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,alpha_wrist\n0.00,0.500000\n0.01,1.000000\n");
    }
}
