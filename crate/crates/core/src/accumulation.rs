//! Event-count frames over fixed, t = 0 aligned time windows.

use std::io::Write;
use std::num::NonZeroU64;
use std::str::FromStr;

use crate::event::{Event, EventStream, Polarity, SensorGeometry};

/// Per-pixel event counts for one accumulation window.
///
/// `origin` is the position of cell (0, 0) in full-sensor coordinates, so a
/// cropped frame can always be mapped back onto the sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountFrame {
    width: usize,
    height: usize,
    counts: Vec<u32>,
    pub window_start_us: u64,
    pub window_len_us: u64,
    pub origin: (usize, usize),
}

impl CountFrame {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            counts: vec![0; width * height],
            window_start_us: 0,
            window_len_us: 0,
            origin: (0, 0),
        }
    }

    pub fn for_sensor(geometry: SensorGeometry, window_start_us: u64, window_len_us: u64) -> Self {
        Self {
            window_start_us,
            window_len_us,
            ..Self::zeros(geometry.width() as usize, geometry.height() as usize)
        }
    }

    /// Builds a frame from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<u32>]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        Self {
            counts: rows.concat(),
            ..Self::zeros(width, height)
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.counts[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u32) {
        self.counts[y * self.width + x] = value;
    }

    #[inline]
    pub fn add(&mut self, x: usize, y: usize, value: u32) {
        self.counts[y * self.width + x] += value;
    }

    pub fn row(&self, y: usize) -> &[u32] {
        &self.counts[y * self.width..(y + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.counts.chunks_exact(self.width.max(1))
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.counts
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        self.rows().map(<[u32]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// A zero frame with the same shape, window and origin.
    pub fn zeroed_like(&self) -> Self {
        Self {
            counts: vec![0; self.counts.len()],
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            counts: Vec::new(),
            window_start_us: self.window_start_us,
            window_len_us: self.window_len_us,
            origin: self.origin,
        }
    }

    /// Places this frame at its origin inside a zero frame of the given size.
    pub fn embed(&self, width: usize, height: usize) -> CountFrame {
        let mut out = CountFrame {
            window_start_us: self.window_start_us,
            window_len_us: self.window_len_us,
            ..CountFrame::zeros(width, height)
        };
        let (x0, y0) = self.origin;
        for (r, row) in self.rows().enumerate() {
            let dst = (y0 + r) * width + x0;
            out.counts[dst..dst + self.width].copy_from_slice(row);
        }
        out
    }

    /// Writes a binary 16-bit PGM (P5) with counts clamped to 65535.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.counts.len() * 2);
        for &c in &self.counts {
            buf.extend_from_slice(&(c.min(u16::MAX as u32) as u16).to_be_bytes());
        }
        out.write_all(&buf)
    }
}

/// Which polarities contribute to the counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolarityMode {
    #[default]
    Both,
    Positive,
    Negative,
}

impl PolarityMode {
    #[inline]
    pub fn accepts(self, p: Polarity) -> bool {
        match self {
            PolarityMode::Both => true,
            PolarityMode::Positive => p == Polarity::Positive,
            PolarityMode::Negative => p == Polarity::Negative,
        }
    }
}

impl FromStr for PolarityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(PolarityMode::Both),
            "pos" => Ok(PolarityMode::Positive),
            "neg" => Ok(PolarityMode::Negative),
            other => Err(format!("expected both|pos|neg, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccumulateConfig {
    pub window_us: NonZeroU64,
    pub polarity: PolarityMode,
}

impl AccumulateConfig {
    pub const DEFAULT_WINDOW_US: u64 = 3000;

    pub fn with_window(window_us: NonZeroU64) -> Self {
        Self {
            window_us,
            polarity: PolarityMode::Both,
        }
    }
}

impl Default for AccumulateConfig {
    fn default() -> Self {
        Self::with_window(NonZeroU64::new(Self::DEFAULT_WINDOW_US).unwrap())
    }
}

/// Splits a time-ordered event iterator into consecutive count frames.
///
/// Window `k` covers `[k·len, (k+1)·len)`. Windows without events are still
/// yielded so that frame index and wall time stay in lockstep. Iteration
/// ends with the window holding the last event.
pub struct WindowFrames<I: Iterator<Item = Event>> {
    events: std::iter::Peekable<I>,
    geometry: SensorGeometry,
    cfg: AccumulateConfig,
    next_window: u64,
}

impl<I: Iterator<Item = Event>> WindowFrames<I> {
    pub fn new(events: I, geometry: SensorGeometry, cfg: AccumulateConfig) -> Self {
        Self {
            events: events.peekable(),
            geometry,
            cfg,
            next_window: 0,
        }
    }
}

impl<I: Iterator<Item = Event>> Iterator for WindowFrames<I> {
    type Item = CountFrame;

    fn next(&mut self) -> Option<CountFrame> {
        self.events.peek()?;
        let len = self.cfg.window_us.get();
        let start = self.next_window * len;
        let end = start + len;
        let mut frame = CountFrame::for_sensor(self.geometry, start, len);
        while let Some(ev) = self.events.next_if(|ev| ev.t < end) {
            debug_assert!(ev.t >= start, "events must be time ordered");
            if self.cfg.polarity.accepts(ev.polarity) {
                frame.add(ev.x as usize, ev.y as usize, 1);
            }
        }
        self.next_window += 1;
        Some(frame)
    }
}

pub fn accumulate(stream: &EventStream, cfg: AccumulateConfig) -> Vec<CountFrame> {
    WindowFrames::new(stream.events().iter().copied(), stream.geometry(), cfg).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("frame has no nonzero cells")]
pub struct EmptyRoi;

/// Crops to the bounding box of nonzero cells, padded by `margin` and
/// clamped to the frame.
pub fn crop_to_roi(frame: &CountFrame, margin: usize) -> Result<CountFrame, EmptyRoi> {
    let mut rows = None::<(usize, usize)>;
    let (mut x_min, mut x_max) = (usize::MAX, 0usize);
    for (y, row) in frame.rows().enumerate() {
        let Some(first) = row.iter().position(|&c| c != 0) else {
            continue;
        };
        let last = row.iter().rposition(|&c| c != 0).unwrap();
        x_min = x_min.min(first);
        x_max = x_max.max(last);
        rows = Some(match rows {
            None => (y, y),
            Some((top, _)) => (top, y),
        });
    }
    let (y_min, y_max) = rows.ok_or(EmptyRoi)?;

    let x0 = x_min.saturating_sub(margin);
    let y0 = y_min.saturating_sub(margin);
    let x1 = (x_max + margin).min(frame.width - 1);
    let y1 = (y_max + margin).min(frame.height - 1);
    let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);

    let mut counts = Vec::with_capacity(w * h);
    for y in y0..=y1 {
        counts.extend_from_slice(&frame.row(y)[x0..=x1]);
    }
    Ok(CountFrame {
        width: w,
        height: h,
        counts,
        window_start_us: frame.window_start_us,
        window_len_us: frame.window_len_us,
        origin: (frame.origin.0 + x0, frame.origin.1 + y0),
    })
}
