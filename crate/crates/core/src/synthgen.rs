//! Synthetic drive-by event streams with exact ground truth.
//!
//! A camera approaches a vertical LED bar at constant speed. Every LED
//! blinks as a square wave; each transition emits a burst of events whose
//! per-pixel expectation follows a Gaussian spot around the LED's pinhole
//! projection, `events_per_edge · exp(-r² / 2σ²)`, with polarity given by
//! the transition direction and timestamps jittered uniformly within
//! `±jitter_us` of the edge. A sinusoidal vertical image displacement
//! models road vibration, and uniform background events model noise.
//!
//! Coordinates: the bar-local frame has x to the right, y up and z toward
//! the camera, origin at the bar base. The camera looks along the road with
//! x right, y down; pixel centres sit at integer coordinates and the
//! principal point is the frame centre `((w-1)/2, (h-1)/2)`.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::{positive, ConfigError, KeyValues};
use crate::event::{Event, EventStream, Polarity, SensorGeometry};
use crate::ranging::OpticalConfig;

pub const TRUTH_CSV_HEADER: &str = "window_start_us,true_distance_m,true_sep_px,in_view";

/// Bundled scenario definitions, by name.
pub const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    (
        "pass_20_60m_20kmh",
        include_str!("../scenarios/pass_20_60m_20kmh.cfg"),
    ),
    (
        "pass_20_55m_30kmh",
        include_str!("../scenarios/pass_20_55m_30kmh.cfg"),
    ),
];

pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedGroup {
    Upper,
    Lower,
}

impl std::str::FromStr for LedGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upper" => Ok(LedGroup::Upper),
            "lower" => Ok(LedGroup::Lower),
            other => Err(format!("expected upper|lower, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Led {
    /// Bar-local position in metres.
    pub position_m: [f64; 3],
    pub blink_hz: f64,
    pub group: LedGroup,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub initial_distance_m: f64,
    pub speed_mps: f64,
    /// Bar offset to the right of the optical axis.
    pub lateral_offset_m: f64,
    /// Bar base height above the optical axis.
    pub vertical_offset_m: f64,
    pub duration_s: f64,
}

impl Trajectory {
    /// Distance from the camera to the bar plane at `t_s`.
    pub fn distance_at(&self, t_s: f64) -> f64 {
        self.initial_distance_m - self.speed_mps * t_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vibration {
    pub amplitude_px: f64,
    /// Peak slope of the displacement, pixels per millisecond.
    pub rate_px_per_ms: f64,
}

impl Vibration {
    pub const NONE: Vibration = Vibration {
        amplitude_px: 0.0,
        rate_px_per_ms: 0.0,
    };

    /// `A·sin(2πft)` with `2πfA` equal to the peak slope.
    pub fn offset_px(&self, t_s: f64) -> f64 {
        if self.amplitude_px == 0.0 {
            return 0.0;
        }
        let freq_hz = self.rate_px_per_ms * 1000.0 / (2.0 * PI * self.amplitude_px);
        self.amplitude_px * (2.0 * PI * freq_hz * t_s).sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub leds: Vec<Led>,
    /// Group whose LEDs emit no events (ground truth is unaffected).
    pub occluded: Option<LedGroup>,
    pub trajectory: Trajectory,
    pub vibration: Vibration,
    /// Uniform background events per second over the whole sensor.
    pub noise_rate_eps: f64,
    pub psf_sigma_px: f64,
    pub events_per_edge: f64,
    pub jitter_us: f64,
    pub optics: OpticalConfig,
    pub geometry: SensorGeometry,
    /// Window length for ground-truth rows.
    pub window_us: u64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub const DEFAULT_FREQS_HZ: [f64; 5] = [5000.0, 10000.0, 20000.0, 10000.0, 5000.0];

    /// Two groups of `freqs.len()` LEDs at `pitch_m`, with group centroids
    /// `baseline_m` apart and centred on the bar origin.
    pub fn default_bar(baseline_m: f64, pitch_m: f64, freqs: &[f64]) -> Vec<Led> {
        let n = freqs.len();
        let mid = (n as f64 - 1.0) / 2.0;
        let mut leds = Vec::with_capacity(2 * n);
        for (group, centre) in [(LedGroup::Upper, baseline_m / 2.0), (LedGroup::Lower, -baseline_m / 2.0)] {
            for (i, &f) in freqs.iter().enumerate() {
                leds.push(Led {
                    position_m: [0.0, centre + (mid - i as f64) * pitch_m, 0.0],
                    blink_hz: f,
                    group,
                });
            }
        }
        leds
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        let optics = OpticalConfig::from_kv(kv)?;
        let width = kv.get_or("sensor.width", SensorGeometry::DEFAULT.width())?;
        let height = kv.get_or("sensor.height", SensorGeometry::DEFAULT.height())?;
        let geometry = SensorGeometry::new(width, height)
            .ok_or_else(|| ConfigError::invalid("sensor.width", width, "geometry must be at least 1x1"))?;

        let leds = if kv.keys_with_prefix("led.").next().is_some() {
            parse_led_list(kv)?
        } else {
            let pitch = kv.get_or("bar.led_pitch_m", 0.01)?;
            let freqs = match kv.raw("bar.freqs_hz") {
                Some(list) => parse_f64_list("bar.freqs_hz", list)?,
                None => Self::DEFAULT_FREQS_HZ.to_vec(),
            };
            Self::default_bar(optics.baseline_m(), pitch, &freqs)
        };
        let occluded = match kv.raw("bar.occlude").unwrap_or("none") {
            "none" => None,
            other => Some(
                other
                    .parse()
                    .map_err(|e: String| ConfigError::invalid("bar.occlude", other, e))?,
            ),
        };

        let initial = kv.require::<f64>("trajectory.initial_distance_m")?;
        let speed = kv.get_or("trajectory.speed_mps", 0.0)?;
        let duration_s = match (
            kv.get::<f64>("trajectory.duration_s")?,
            kv.get::<f64>("trajectory.final_distance_m")?,
        ) {
            (Some(d), None) => d,
            (None, Some(fin)) => {
                if speed <= 0.0 {
                    return Err(ConfigError::invalid(
                        "trajectory.final_distance_m",
                        fin,
                        "needs a positive trajectory.speed_mps",
                    ));
                }
                (initial - fin) / speed
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::invalid(
                    "trajectory.final_distance_m",
                    "",
                    "give either trajectory.duration_s or trajectory.final_distance_m, not both",
                ))
            }
            (None, None) => return Err(ConfigError::Missing("trajectory.duration_s".into())),
        };

        let cfg = ScenarioConfig {
            leds,
            occluded,
            trajectory: Trajectory {
                initial_distance_m: positive("trajectory.initial_distance_m", initial)?,
                speed_mps: speed,
                lateral_offset_m: kv.get_or("trajectory.lateral_offset_m", 0.0)?,
                vertical_offset_m: kv.get_or("trajectory.vertical_offset_m", 0.0)?,
                duration_s: positive("trajectory.duration_s", duration_s)?,
            },
            vibration: Vibration {
                amplitude_px: kv.get_or("vibration.amplitude_px", 2.0)?,
                rate_px_per_ms: kv.get_or("vibration.rate_px_per_ms", 1.5)?,
            },
            noise_rate_eps: kv.get_or("noise.rate_eps", 1e6)?,
            psf_sigma_px: kv.get_or("emission.psf_sigma_px", 1.2)?,
            events_per_edge: kv.get_or("emission.events_per_edge", 0.5)?,
            jitter_us: kv.get_or("emission.jitter_us", 50.0)?,
            optics,
            geometry,
            window_us: kv.get_or("accumulate.window_us", 3000)?,
            seed: kv.get_or("scenario.seed", 1)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let non_negative = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, v, "must be finite and >= 0"))
            }
        };
        non_negative("trajectory.speed_mps", self.trajectory.speed_mps)?;
        non_negative("vibration.amplitude_px", self.vibration.amplitude_px)?;
        non_negative("vibration.rate_px_per_ms", self.vibration.rate_px_per_ms)?;
        non_negative("noise.rate_eps", self.noise_rate_eps)?;
        non_negative("emission.events_per_edge", self.events_per_edge)?;
        non_negative("emission.jitter_us", self.jitter_us)?;
        positive("emission.psf_sigma_px", self.psf_sigma_px)?;
        positive("trajectory.duration_s", self.trajectory.duration_s)?;
        if self.window_us == 0 {
            return Err(ConfigError::invalid("accumulate.window_us", 0, "must be > 0"));
        }
        if self.leds.is_empty() {
            return Err(ConfigError::invalid("led", "", "scenario has no LEDs"));
        }
        for led in &self.leds {
            positive("led frequency", led.blink_hz)?;
        }
        Ok(())
    }

    pub fn duration_us(&self) -> u64 {
        (self.trajectory.duration_s * 1e6).round() as u64
    }

    pub fn camera_state(&self, t_s: f64) -> CameraState {
        CameraState {
            distance_m: self.trajectory.distance_at(t_s),
            lateral_offset_m: self.trajectory.lateral_offset_m,
            vertical_offset_m: self.trajectory.vertical_offset_m,
            vibration_px: self.vibration.offset_px(t_s),
        }
    }
}

/// `led.<i> = x, y, z, freq_hz, upper|lower`
fn parse_led_list(kv: &KeyValues) -> Result<Vec<Led>, ConfigError> {
    let mut indexed = Vec::new();
    for key in kv.keys_with_prefix("led.") {
        let idx: usize = key["led.".len()..]
            .parse()
            .map_err(|_| ConfigError::invalid(key, "", "LED keys are led.<index>"))?;
        let value = kv.raw(key).unwrap();
        let parts: Vec<&str> = value.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(ConfigError::invalid(key, value, "expected `x, y, z, freq_hz, upper|lower`"));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| ConfigError::invalid(key, value, e.to_string()))
        };
        let group = parts[4]
            .parse()
            .map_err(|e: String| ConfigError::invalid(key, value, e))?;
        indexed.push((
            idx,
            Led {
                position_m: [num(parts[0])?, num(parts[1])?, num(parts[2])?],
                blink_hz: num(parts[3])?,
                group,
            },
        ));
    }
    indexed.sort_by_key(|(i, _)| *i);
    Ok(indexed.into_iter().map(|(_, led)| led).collect())
}

fn parse_f64_list(key: &str, list: &str) -> Result<Vec<f64>, ConfigError> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| ConfigError::invalid(key, list, e.to_string()))
        })
        .collect()
}

/// Camera pose relative to the bar at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraState {
    pub distance_m: f64,
    pub lateral_offset_m: f64,
    pub vertical_offset_m: f64,
    /// Vertical image displacement from vibration, pixels (down positive).
    pub vibration_px: f64,
}

impl CameraState {
    pub fn at_distance(distance_m: f64) -> Self {
        Self {
            distance_m,
            lateral_offset_m: 0.0,
            vertical_offset_m: 0.0,
            vibration_px: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("point depth {depth_m} m is not in front of the camera")]
pub struct ProjectionError {
    pub depth_m: f64,
}

/// Pinhole projection of a bar-local point to fractional pixel `(u, v)`.
pub fn project(
    point: [f64; 3],
    cam: &CameraState,
    optics: &OpticalConfig,
    geometry: SensorGeometry,
) -> Result<(f64, f64), ProjectionError> {
    let x = point[0] + cam.lateral_offset_m;
    let y = -(point[1] + cam.vertical_offset_m);
    let z = cam.distance_m - point[2];
    if z.is_nan() || z <= 0.0 {
        return Err(ProjectionError { depth_m: z });
    }
    let scale = optics.focal_length_m() / (z * optics.pixel_pitch_m());
    let cx = (geometry.width() as f64 - 1.0) / 2.0;
    let cy = (geometry.height() as f64 - 1.0) / 2.0;
    Ok((scale * x + cx, scale * y + cy + cam.vibration_px))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthWindow {
    pub window_start_us: u64,
    /// Depth of the LED centroid at the midpoint of the window's covered
    /// span (a final partial window uses its truncated span).
    pub true_distance_m: f64,
    /// Image distance between the projected group centroids (NaN if a group is empty).
    pub true_sep_px: f64,
    /// Every LED projects inside the sensor at the window midpoint.
    pub in_view: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub windows: Vec<TruthWindow>,
}

impl GroundTruth {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRUTH_CSV_HEADER.split(','))?;
        for t in &self.windows {
            w.write_record([
                t.window_start_us.to_string(),
                t.true_distance_m.to_string(),
                t.true_sep_px.to_string(),
                u8::from(t.in_view).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TruthCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Field { line: u64, message: String },
}

impl GroundTruth {
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, TruthCsvError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != TRUTH_CSV_HEADER {
            return Err(TruthCsvError::Field {
                line: 1,
                message: format!("expected header `{TRUTH_CSV_HEADER}`"),
            });
        }
        let mut windows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| -> Result<&str, TruthCsvError> {
                rec.get(i).ok_or_else(|| TruthCsvError::Field {
                    line,
                    message: format!("missing {name}"),
                })
            };
            let bad = |name: &str, e: &dyn std::fmt::Display| TruthCsvError::Field {
                line,
                message: format!("{name}: {e}"),
            };
            let in_view = match field(3, "in_view")? {
                "1" => true,
                "0" => false,
                other => return Err(bad("in_view", &format!("expected 0 or 1, got `{other}`"))),
            };
            windows.push(TruthWindow {
                window_start_us: field(0, "window_start_us")?
                    .parse()
                    .map_err(|e| bad("window_start_us", &e))?,
                true_distance_m: field(1, "true_distance_m")?
                    .parse()
                    .map_err(|e| bad("true_distance_m", &e))?,
                true_sep_px: field(2, "true_sep_px")?
                    .parse()
                    .map_err(|e| bad("true_sep_px", &e))?,
                in_view,
            });
        }
        Ok(GroundTruth { windows })
    }
}

fn centroid(points: impl Iterator<Item = [f64; 3]>) -> Option<[f64; 3]> {
    let (mut acc, mut n) = ([0.0; 3], 0usize);
    for p in points {
        (0..3).for_each(|i| acc[i] += p[i]);
        n += 1;
    }
    (n > 0).then(|| acc.map(|v| v / n as f64))
}

fn group_centroid(cfg: &ScenarioConfig, group: LedGroup) -> Option<[f64; 3]> {
    centroid(cfg.leds.iter().filter(|l| l.group == group).map(|l| l.position_m))
}

pub fn ground_truth(cfg: &ScenarioConfig) -> GroundTruth {
    let duration = cfg.duration_us();
    let n_windows = duration.div_ceil(cfg.window_us);
    let upper = group_centroid(cfg, LedGroup::Upper);
    let lower = group_centroid(cfg, LedGroup::Lower);
    let bar = centroid(cfg.leds.iter().map(|l| l.position_m)).unwrap_or([0.0; 3]);
    let (w, h) = (cfg.geometry.width() as f64, cfg.geometry.height() as f64);

    let windows = (0..n_windows)
        .map(|k| {
            let start = k * cfg.window_us;
            let end = (start + cfg.window_us).min(duration);
            let t_mid = (start + end) as f64 / 2.0 * 1e-6;
            let cam = cfg.camera_state(t_mid);
            let proj = |p| project(p, &cam, &cfg.optics, cfg.geometry).ok();
            let true_sep_px = match (upper.and_then(proj), lower.and_then(proj)) {
                (Some(a), Some(b)) => (a.0 - b.0).hypot(a.1 - b.1),
                _ => f64::NAN,
            };
            let in_view = cfg.leds.iter().all(|l| {
                proj(l.position_m)
                    .is_some_and(|(u, v)| (0.0..=w - 1.0).contains(&u) && (0.0..=h - 1.0).contains(&v))
            });
            TruthWindow {
                window_start_us: start,
                true_distance_m: cam.distance_m - bar[2],
                true_sep_px,
                in_view,
            }
        })
        .collect();
    GroundTruth { windows }
}

/// Discrete Gaussian spot over a clipped pixel box, as a cumulative table.
struct Spot {
    x0: i64,
    y0: i64,
    w: usize,
    cdf: Vec<f64>,
}

impl Spot {
    fn build(&mut self, u: f64, v: f64, sigma: f64, geometry: SensorGeometry, gx: &mut Vec<f64>, gy: &mut Vec<f64>) -> f64 {
        let radius = (4.0 * sigma).ceil() as i64;
        let (cu, cv) = (u.round() as i64, v.round() as i64);
        let x0 = (cu - radius).max(0);
        let x1 = (cu + radius).min(geometry.width() as i64 - 1);
        let y0 = (cv - radius).max(0);
        let y1 = (cv + radius).min(geometry.height() as i64 - 1);
        self.cdf.clear();
        if x0 > x1 || y0 > y1 {
            return 0.0;
        }
        let k = -0.5 / (sigma * sigma);
        gx.clear();
        gx.extend((x0..=x1).map(|x| (k * (x as f64 - u).powi(2)).exp()));
        gy.clear();
        gy.extend((y0..=y1).map(|y| (k * (y as f64 - v).powi(2)).exp()));
        let mut acc = 0.0;
        for wy in gy.iter() {
            for wx in gx.iter() {
                acc += wx * wy;
                self.cdf.push(acc);
            }
        }
        self.x0 = x0;
        self.y0 = y0;
        self.w = gx.len();
        acc
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (u16, u16) {
        let total = *self.cdf.last().unwrap();
        let target = rng.random::<f64>() * total;
        let i = self.cdf.partition_point(|&c| c <= target).min(self.cdf.len() - 1);
        (
            (self.x0 + (i % self.w) as i64) as u16,
            (self.y0 + (i / self.w) as i64) as u16,
        )
    }
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).map_or(0, |d| d.sample(rng) as u64)
}

/// Generates the event stream and its per-window ground truth.
///
/// Bit-reproducible for a fixed configuration and seed.
pub fn generate(cfg: &ScenarioConfig) -> (EventStream, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let duration_us = cfg.duration_us();
    let end = duration_us as f64;
    let mut events = Vec::new();
    let mut spot = Spot {
        x0: 0,
        y0: 0,
        w: 0,
        cdf: Vec::new(),
    };
    let (mut gx, mut gy) = (Vec::new(), Vec::new());

    for led in cfg.leds.iter().filter(|l| Some(l.group) != cfg.occluded) {
        let half_period_us = 1e6 / (2.0 * led.blink_hz);
        let mut k = 0u64;
        loop {
            let t_edge = k as f64 * half_period_us;
            if t_edge >= end {
                break;
            }
            let polarity = if k.is_multiple_of(2) {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            k += 1;
            let cam = cfg.camera_state(t_edge * 1e-6);
            let Ok((u, v)) = project(led.position_m, &cam, &cfg.optics, cfg.geometry) else {
                continue;
            };
            let mass = spot.build(u, v, cfg.psf_sigma_px, cfg.geometry, &mut gx, &mut gy);
            let n = poisson(&mut rng, cfg.events_per_edge * mass);
            for _ in 0..n {
                let (x, y) = spot.sample(&mut rng);
                let t = t_edge + rng.random_range(-cfg.jitter_us..=cfg.jitter_us);
                if (0.0..end).contains(&t) {
                    events.push(Event::new(x, y, t as u64, polarity));
                }
            }
        }
    }

    let n_noise = poisson(&mut rng, cfg.noise_rate_eps * cfg.trajectory.duration_s);
    let (w, h) = (cfg.geometry.width(), cfg.geometry.height());
    for _ in 0..n_noise {
        let polarity = if rng.random::<bool>() {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        events.push(Event::new(
            rng.random_range(0..w),
            rng.random_range(0..h),
            rng.random_range(0..duration_us.max(1)),
            polarity,
        ));
    }

    events.sort_unstable_by_key(|e| (e.t, e.y, e.x, e.polarity));
    (EventStream::from_trusted(cfg.geometry, events), ground_truth(cfg))
}
