//! End-to-end per-window ranging.
//!
//! `high_pass → accumulate → count_threshold → crop_to_roi → split →
//! measure_displacement → triangulate`. Every window yields exactly one
//! [`RangeEstimate`]; stage failures become invalid estimates carrying the
//! reason.

use std::io::{Read, Write};
use std::num::NonZeroU64;

use rayon::prelude::*;

use crate::accumulation::{crop_to_roi, AccumulateConfig, CountFrame, EmptyRoi, WindowFrames};
use crate::config::{ConfigError, KeyValues};
use crate::event::{Event, EventStream, SensorGeometry};
use crate::filtering::{apply_count_threshold, CountThresholdConfig, HighPassConfig, HighPassFilter};
use crate::poc::{self, PocConfig, PocError, PocSurface};
use crate::ranging::{triangulate, FailureReason, OpticalConfig, RangeEstimate};
use crate::separation::{split_groups, SplitFrames};

pub const ESTIMATE_CSV_HEADER: &str = "window_start_us,W_px,distance_m,peak,valid,reason";

/// Windows cropped before fanning out to the POC stage.
const BATCH_WINDOWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub geometry: SensorGeometry,
    pub optics: OpticalConfig,
    pub high_pass: HighPassConfig,
    pub threshold: CountThresholdConfig,
    pub accumulate: AccumulateConfig,
    pub roi_margin_px: usize,
    pub poc: PocConfig,
}

impl PipelineConfig {
    pub const DEFAULT_ROI_MARGIN_PX: usize = 4;

    pub fn new(optics: OpticalConfig) -> Self {
        Self {
            geometry: SensorGeometry::DEFAULT,
            optics,
            high_pass: HighPassConfig::default(),
            threshold: CountThresholdConfig::default(),
            accumulate: AccumulateConfig::default(),
            roi_margin_px: Self::DEFAULT_ROI_MARGIN_PX,
            poc: PocConfig::default(),
        }
    }

    /// Optics keys are required; everything else falls back to defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut cfg = Self::new(OpticalConfig::from_kv(kv)?);

        let width = kv.get_or("sensor.width", cfg.geometry.width())?;
        let height = kv.get_or("sensor.height", cfg.geometry.height())?;
        cfg.geometry = SensorGeometry::new(width, height)
            .ok_or_else(|| ConfigError::invalid("sensor.width", width, "geometry must be at least 1x1"))?;

        let cutoff = kv.get_or("filter.highpass_cutoff_us", HighPassConfig::DEFAULT_CUTOFF_US)?;
        cfg.high_pass = HighPassConfig::new(cutoff)
            .ok_or_else(|| ConfigError::invalid("filter.highpass_cutoff_us", cutoff, "must be > 0"))?;
        cfg.threshold.min_count = kv.get_or("filter.min_count", cfg.threshold.min_count)?;

        let window = kv.get_or("accumulate.window_us", AccumulateConfig::DEFAULT_WINDOW_US)?;
        cfg.accumulate.window_us = NonZeroU64::new(window)
            .ok_or_else(|| ConfigError::invalid("accumulate.window_us", window, "must be > 0"))?;
        cfg.accumulate.polarity = kv.get_or("accumulate.polarity", cfg.accumulate.polarity)?;

        cfg.roi_margin_px = kv.get_or("roi.margin_px", cfg.roi_margin_px)?;

        cfg.poc.min_peak = kv.get_or("poc.min_peak", cfg.poc.min_peak)?;
        cfg.poc.pad_pow2 = kv.get_or("poc.pad_pow2", cfg.poc.pad_pow2)?;
        cfg.poc.pad_linear = kv.get_or("poc.pad_linear", cfg.poc.pad_linear)?;
        Ok(cfg)
    }
}

/// Intermediate products of one window, for debug dumps.
#[derive(Debug, Clone, Default)]
pub struct WindowTrace {
    pub roi: Option<CountFrame>,
    pub split: Option<SplitFrames>,
    pub surface: Option<PocSurface>,
}

fn poc_reason(e: &PocError) -> FailureReason {
    match e {
        PocError::LowPeak { .. } => FailureReason::LowPeak,
        PocError::NumericalIntegrity(_) | PocError::DimensionMismatch(..) => {
            FailureReason::NumericalIntegrity
        }
    }
}

fn run_roi(
    window_start_us: u64,
    roi: Result<CountFrame, EmptyRoi>,
    cfg: &PipelineConfig,
    mut trace: Option<&mut WindowTrace>,
) -> RangeEstimate {
    let invalid = |reason| RangeEstimate::invalid(window_start_us, reason);
    let Ok(roi) = roi else {
        return invalid(FailureReason::EmptyRoi);
    };
    let halves = match split_groups(&roi) {
        Ok(s) => s,
        Err(_) => {
            if let Some(t) = trace.as_deref_mut() {
                t.roi = Some(roi);
            }
            return invalid(FailureReason::SeparationFailure);
        }
    };
    let surface = poc::correlate(&halves.lower, &halves.upper, &cfg.poc);
    if let Some(t) = trace {
        t.roi = Some(roi);
        t.split = Some(halves);
        t.surface = surface.as_ref().ok().cloned();
    }
    let measured = surface.and_then(|g| poc::displacement_from_surface(&g, cfg.poc.min_peak));
    let result = match measured {
        Ok(r) => r,
        Err(e) => {
            let mut est = invalid(poc_reason(&e));
            if let PocError::LowPeak { peak, .. } = e {
                est.peak_value = Some(peak);
            }
            return est;
        }
    };
    let mut est = RangeEstimate {
        window_start_us,
        w_px: Some(result.w_px),
        distance_m: None,
        peak_value: Some(result.peak_value),
        failure: None,
    };
    match triangulate(result.w_px, &cfg.optics) {
        Ok(l) => est.distance_m = Some(l),
        Err(_) => est.failure = Some(FailureReason::NonPositiveDisplacement),
    }
    est
}

/// Processes one accumulated (unthresholded) full-sensor frame.
pub fn process_window(mut frame: CountFrame, cfg: &PipelineConfig) -> RangeEstimate {
    apply_count_threshold(&mut frame, cfg.threshold);
    let roi = crop_to_roi(&frame, cfg.roi_margin_px);
    run_roi(frame.window_start_us, roi, cfg, None)
}

/// Like [`process_window`] but also returns the intermediate products.
pub fn trace_window(mut frame: CountFrame, cfg: &PipelineConfig) -> (RangeEstimate, WindowTrace) {
    apply_count_threshold(&mut frame, cfg.threshold);
    let roi = crop_to_roi(&frame, cfg.roi_margin_px);
    let mut trace = WindowTrace::default();
    let est = run_roi(frame.window_start_us, roi, cfg, Some(&mut trace));
    (est, trace)
}

/// Streams time-ordered events through the whole pipeline.
///
/// Thresholding and cropping run in the accumulation loop so only small ROI
/// frames are held; the correlation stage runs in parallel per batch and
/// results keep window order.
pub fn estimate_events<I>(events: I, geometry: SensorGeometry, cfg: &PipelineConfig) -> Vec<RangeEstimate>
where
    I: IntoIterator<Item = Event>,
{
    let filtered = HighPassFilter::new(geometry, cfg.high_pass).filter_iter(events);
    let mut out = Vec::new();
    let mut batch: Vec<(u64, Result<CountFrame, EmptyRoi>)> = Vec::with_capacity(BATCH_WINDOWS);
    let flush = |batch: &mut Vec<(u64, Result<CountFrame, EmptyRoi>)>, out: &mut Vec<RangeEstimate>| {
        let done: Vec<RangeEstimate> = batch
            .par_drain(..)
            .map(|(start, roi)| run_roi(start, roi, cfg, None))
            .collect();
        out.extend(done);
    };
    for mut frame in WindowFrames::new(filtered, geometry, cfg.accumulate) {
        apply_count_threshold(&mut frame, cfg.threshold);
        batch.push((frame.window_start_us, crop_to_roi(&frame, cfg.roi_margin_px)));
        if batch.len() == BATCH_WINDOWS {
            flush(&mut batch, &mut out);
        }
    }
    flush(&mut batch, &mut out);
    out
}

pub fn estimate_stream(stream: &EventStream, cfg: &PipelineConfig) -> Vec<RangeEstimate> {
    estimate_events(stream.events().iter().copied(), stream.geometry(), cfg)
}

fn opt_to_string(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_estimates_csv<W: Write>(estimates: &[RangeEstimate], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_CSV_HEADER.split(','))?;
    for e in estimates {
        w.write_record([
            e.window_start_us.to_string(),
            opt_to_string(e.w_px),
            opt_to_string(e.distance_m),
            opt_to_string(e.peak_value),
            u8::from(e.is_valid()).to_string(),
            e.failure.map(|r| r.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum EstimateCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Field { line: u64, message: String },
}

pub fn read_estimates_csv<R: Read>(input: R) -> Result<Vec<RangeEstimate>, EstimateCsvError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != ESTIMATE_CSV_HEADER {
        return Err(EstimateCsvError::Field {
            line: 1,
            message: format!("expected header `{ESTIMATE_CSV_HEADER}`"),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| EstimateCsvError::Field { line, message };
        let opt = |i: usize| -> Result<Option<f64>, EstimateCsvError> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| err(format!("column {i}: {e}")))
            }
        };
        let window_start_us = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|e| err(format!("window_start_us: {e}")))?;
        let valid = match rec.get(4).unwrap_or("") {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("valid must be 0 or 1, got `{other}`"))),
        };
        let failure = if valid {
            None
        } else {
            Some(rec.get(5).unwrap_or("").parse().map_err(err)?)
        };
        out.push(RangeEstimate {
            window_start_us,
            w_px: opt(1)?,
            distance_m: opt(2)?,
            peak_value: opt(3)?,
            failure,
        });
    }
    Ok(out)
}
