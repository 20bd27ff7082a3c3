//! Scoring range estimates against ground truth.
//!
//! Rows are joined on exact `window_start_us`. The headline fraction counts
//! in-view windows whose estimate is valid and within the threshold, over
//! all joined in-view windows, so an invalid window counts as a miss.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use crate::ranging::{FailureReason, RangeEstimate};
use crate::synthgen::GroundTruth;

pub const DEFAULT_THRESHOLD_M: f64 = 0.5;
pub const WINDOW_ERROR_CSV_HEADER: &str =
    "window_start_us,true_distance_m,distance_m,abs_error_m,in_view,valid,reason,within";

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EvaluationError {
    #[error("estimates and ground truth share no window_start_us")]
    NoOverlap,
    #[error("no joined window has the LED bar in view")]
    NoneInView,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowError {
    pub window_start_us: u64,
    pub true_distance_m: f64,
    pub distance_m: Option<f64>,
    pub abs_error_m: Option<f64>,
    pub in_view: bool,
    pub failure: Option<FailureReason>,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub threshold_m: f64,
    /// Joined windows in time order.
    pub windows: Vec<WindowError>,
    pub only_in_estimates: Vec<u64>,
    pub only_in_truth: Vec<u64>,
    pub in_view_windows: usize,
    pub within_threshold: usize,
    pub fraction_within: f64,
    pub mean_error_m: Option<f64>,
    pub median_error_m: Option<f64>,
    pub max_error_m: Option<f64>,
    /// In-view windows with no estimate, by reason.
    pub invalid_by_reason: BTreeMap<FailureReason, usize>,
}

pub fn evaluate(
    estimates: &[RangeEstimate],
    truth: &GroundTruth,
    threshold_m: f64,
) -> Result<ErrorReport, EvaluationError> {
    let by_start: HashMap<u64, &RangeEstimate> =
        estimates.iter().map(|e| (e.window_start_us, e)).collect();
    let truth_starts: HashMap<u64, ()> = truth.windows.iter().map(|t| (t.window_start_us, ())).collect();

    let mut windows = Vec::new();
    let mut only_in_truth = Vec::new();
    for t in &truth.windows {
        let Some(e) = by_start.get(&t.window_start_us) else {
            only_in_truth.push(t.window_start_us);
            continue;
        };
        let distance_m = e.distance_m.filter(|_| e.is_valid());
        let abs_error_m = distance_m.map(|d| (d - t.true_distance_m).abs());
        windows.push(WindowError {
            window_start_us: t.window_start_us,
            true_distance_m: t.true_distance_m,
            distance_m,
            abs_error_m,
            in_view: t.in_view,
            failure: e.failure,
            within: abs_error_m.is_some_and(|err| err <= threshold_m),
        });
    }
    let mut only_in_estimates: Vec<u64> = estimates
        .iter()
        .map(|e| e.window_start_us)
        .filter(|s| !truth_starts.contains_key(s))
        .collect();
    only_in_estimates.sort_unstable();
    only_in_estimates.dedup();
    windows.sort_by_key(|w| w.window_start_us);

    if windows.is_empty() {
        return Err(EvaluationError::NoOverlap);
    }
    let scored: Vec<&WindowError> = windows.iter().filter(|w| w.in_view).collect();
    if scored.is_empty() {
        return Err(EvaluationError::NoneInView);
    }

    let within_threshold = scored.iter().filter(|w| w.within).count();
    let mut errors: Vec<f64> = scored.iter().filter_map(|w| w.abs_error_m).collect();
    errors.sort_by(f64::total_cmp);
    let mut invalid_by_reason = BTreeMap::new();
    for r in scored.iter().filter_map(|w| w.failure) {
        *invalid_by_reason.entry(r).or_insert(0) += 1;
    }

    Ok(ErrorReport {
        threshold_m,
        in_view_windows: scored.len(),
        within_threshold,
        fraction_within: within_threshold as f64 / scored.len() as f64,
        mean_error_m: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
        median_error_m: median(&errors),
        max_error_m: errors.last().copied(),
        invalid_by_reason,
        windows,
        only_in_estimates,
        only_in_truth,
    })
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

impl ErrorReport {
    pub fn invalid_windows(&self) -> usize {
        self.invalid_by_reason.values().sum()
    }

    /// Per-window error table.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(WINDOW_ERROR_CSV_HEADER.split(','))?;
        for e in &self.windows {
            w.write_record([
                e.window_start_us.to_string(),
                e.true_distance_m.to_string(),
                opt(e.distance_m),
                opt(e.abs_error_m),
                u8::from(e.in_view).to_string(),
                u8::from(e.failure.is_none()).to_string(),
                e.failure.map(|r| r.as_str().to_string()).unwrap_or_default(),
                u8::from(e.within).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4} m"));
        writeln!(
            f,
            "within {} m: {}/{} in-view windows ({:.2}%)",
            self.threshold_m,
            self.within_threshold,
            self.in_view_windows,
            100.0 * self.fraction_within
        )?;
        writeln!(f, "mean error:   {}", opt(self.mean_error_m))?;
        writeln!(f, "median error: {}", opt(self.median_error_m))?;
        writeln!(f, "max error:    {}", opt(self.max_error_m))?;
        write!(f, "invalid windows: {}", self.invalid_windows())?;
        for (reason, n) in &self.invalid_by_reason {
            write!(f, "\n  {reason}: {n}")?;
        }
        if !self.only_in_estimates.is_empty() {
            write!(f, "\nwindows only in estimates: {}", self.only_in_estimates.len())?;
        }
        if !self.only_in_truth.is_empty() {
            write!(f, "\nwindows only in truth: {}", self.only_in_truth.len())?;
        }
        Ok(())
    }
}
