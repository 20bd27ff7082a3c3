//! Background-noise suppression.
//!
//! The temporal high-pass gate keeps an event only when its pixel fired
//! recently: an event at pixel `p`, time `t` passes iff some earlier event
//! at `p` has a timestamp in the open interval `(t - cutoff, t)`. Rapidly
//! blinking LEDs refire well inside the cutoff; slow background texture
//! and isolated noise do not. Polarity is ignored.
//!
//! The count threshold runs after accumulation and zeroes cells with fewer
//! than `min_count` events.

use crate::accumulation::CountFrame;
use crate::event::{Event, EventStream, SensorGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HighPassConfig {
    cutoff_period_us: u64,
}

impl HighPassConfig {
    pub const DEFAULT_CUTOFF_US: u64 = 2000;

    /// `None` for a zero cutoff.
    pub fn new(cutoff_period_us: u64) -> Option<Self> {
        (cutoff_period_us > 0).then_some(Self { cutoff_period_us })
    }

    pub fn cutoff_period_us(&self) -> u64 {
        self.cutoff_period_us
    }
}

impl Default for HighPassConfig {
    fn default() -> Self {
        Self {
            cutoff_period_us: Self::DEFAULT_CUTOFF_US,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountThresholdConfig {
    pub min_count: u32,
}

impl CountThresholdConfig {
    pub const DEFAULT_MIN_COUNT: u32 = 2;
}

impl Default for CountThresholdConfig {
    fn default() -> Self {
        Self {
            min_count: Self::DEFAULT_MIN_COUNT,
        }
    }
}

const NEVER: u64 = u64::MAX;

/// Streaming state for the high-pass gate: one filter per event stream.
///
/// Per pixel it remembers the latest timestamp seen and the latest one
/// strictly before it, which is enough to answer the open-interval test
/// when several events share a timestamp.
#[derive(Debug, Clone)]
pub struct HighPassFilter {
    cutoff: u64,
    geometry: SensorGeometry,
    last: Vec<u64>,
    before_last: Vec<u64>,
}

impl HighPassFilter {
    pub fn new(geometry: SensorGeometry, cfg: HighPassConfig) -> Self {
        let n = geometry.pixel_count();
        Self {
            cutoff: cfg.cutoff_period_us,
            geometry,
            last: vec![NEVER; n],
            before_last: vec![NEVER; n],
        }
    }

    /// Feeds one event (in time order) and reports whether it passes.
    #[inline]
    pub fn accept(&mut self, ev: &Event) -> bool {
        let i = self.geometry.index(ev.x, ev.y);
        let last = self.last[i];
        let prior = if last == NEVER || last < ev.t {
            self.before_last[i] = last;
            self.last[i] = ev.t;
            last
        } else {
            // Same timestamp as the latest event; look one further back.
            self.before_last[i]
        };
        prior != NEVER && ev.t - prior < self.cutoff
    }

    /// Adapts an event iterator into its filtered subsequence.
    pub fn filter_iter<I>(self, events: I) -> impl Iterator<Item = Event>
    where
        I: IntoIterator<Item = Event>,
    {
        let mut state = self;
        events.into_iter().filter(move |ev| state.accept(ev))
    }
}

pub fn high_pass(stream: &EventStream, cfg: HighPassConfig) -> EventStream {
    let mut filter = HighPassFilter::new(stream.geometry(), cfg);
    let kept: Vec<Event> = stream
        .events()
        .iter()
        .filter(|ev| filter.accept(ev))
        .copied()
        .collect();
    EventStream::from_trusted(stream.geometry(), kept)
}

/// Zeroes every cell whose count is below `min_count`, in place.
pub fn apply_count_threshold(frame: &mut CountFrame, cfg: CountThresholdConfig) {
    for c in frame.counts_mut() {
        if *c < cfg.min_count {
            *c = 0;
        }
    }
}

pub fn count_threshold(frame: &CountFrame, cfg: CountThresholdConfig) -> CountFrame {
    let mut out = frame.clone();
    apply_count_threshold(&mut out, cfg);
    out
}
