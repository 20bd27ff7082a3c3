//! Core event types shared by every pipeline stage.

use std::fmt;

/// Brightness-change direction reported by the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    /// Wire encoding: 1 = positive, 0 = negative.
    pub fn as_u8(self) -> u8 {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }
}

/// One camera event. `t` is microseconds since recording start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, polarity: Polarity) -> Self {
        Self { x, y, t, polarity }
    }
}

/// Sensor pixel array dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    width: u16,
    height: u16,
}

impl SensorGeometry {
    /// 1280×720, the resolution of the sensor class this crate targets.
    pub const DEFAULT: SensorGeometry = SensorGeometry {
        width: 1280,
        height: 720,
    };

    /// Returns `None` when either dimension is zero.
    pub fn new(width: u16, height: u16) -> Option<Self> {
        (width >= 1 && height >= 1).then_some(Self { width, height })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major linear pixel index. Caller guarantees bounds.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Why a sequence of events cannot form an [`EventStream`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StreamError {
    #[error("event {index} at ({x},{y}) lies outside the {geometry} sensor")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        geometry: SensorGeometry,
    },
    #[error("event {index} has timestamp {t} us, earlier than its predecessor at {previous} us")]
    TimestampRegression { index: usize, t: u64, previous: u64 },
}

/// A time-ordered, in-bounds sequence of events for one sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    pub fn empty(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            events: Vec::new(),
        }
    }

    /// Validates ordering and bounds.
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self, StreamError> {
        Self::validate(geometry, &events)?;
        Ok(Self { geometry, events })
    }

    fn validate(geometry: SensorGeometry, events: &[Event]) -> Result<(), StreamError> {
        let mut previous = 0u64;
        for (index, ev) in events.iter().enumerate() {
            if !geometry.contains(ev.x, ev.y) {
                return Err(StreamError::OutOfBounds {
                    index,
                    x: ev.x,
                    y: ev.y,
                    geometry,
                });
            }
            if ev.t < previous {
                return Err(StreamError::TimestampRegression {
                    index,
                    t: ev.t,
                    previous,
                });
            }
            previous = ev.t;
        }
        Ok(())
    }

    /// Builds a stream from events that are already known to be valid.
    pub(crate) fn from_trusted(geometry: SensorGeometry, events: Vec<Event>) -> Self {
        debug_assert!(Self::validate(geometry, &events).is_ok());
        Self { geometry, events }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}
