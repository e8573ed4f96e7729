//! Event stream representation, windowed accumulation, and log-brightness
//! change maps.
//!
//! Timestamps are integer nanoseconds throughout, which keeps sorting and
//! window tests exact. Accumulation windows are half-open `[min, max)` so
//! adjacent windows chain without double counting; swapping the endpoints
//! negates the map (integral orientation).

use crate::error::{Error, Result};
use crate::grid::ScalarMap;

/// Below this global L2 norm a map is treated as zero by [`normalize_l2`].
pub const EPSILON_NORM: f64 = 1e-12;

/// A single polarity event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Timestamp in nanoseconds, non-negative.
    pub t: i64,
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    /// Polarity, exactly +1 or -1.
    pub p: i8,
}

impl Event {
    pub fn new(t: i64, x: u16, y: u16, p: i8) -> Self {
        Event { t, x, y, p }
    }
}

/// Time-ordered polarity events on a fixed sensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    width: usize,
    height: usize,
    t_start: i64,
    t_end: i64,
}

impl EventStream {
    /// Validates sortedness, pixel bounds, polarity, and the covered range.
    pub fn new(
        events: Vec<Event>,
        width: usize,
        height: usize,
        t_start: i64,
        t_end: i64,
    ) -> Result<Self> {
        if width < 1 || height < 1 {
            return Err(Error::Param(format!(
                "sensor dimensions must be >= 1, got {}x{}",
                width, height
            )));
        }
        if t_start < 0 || t_end < t_start {
            return Err(Error::Param(format!(
                "invalid stream range [{}, {}]",
                t_start, t_end
            )));
        }
        let mut prev = i64::MIN;
        for (i, e) in events.iter().enumerate() {
            if e.t < prev {
                return Err(Error::Param(format!(
                    "events not sorted by t at index {}: {} after {}",
                    i, e.t, prev
                )));
            }
            prev = e.t;
            if e.t < t_start || e.t > t_end {
                return Err(Error::Range(format!(
                    "event {} at t={} outside stream range [{}, {}]",
                    i, e.t, t_start, t_end
                )));
            }
            if (e.x as usize) >= width || (e.y as usize) >= height {
                return Err(Error::Range(format!(
                    "event {} at ({}, {}) outside {}x{} sensor",
                    i, e.x, e.y, width, height
                )));
            }
            if e.p != 1 && e.p != -1 {
                return Err(Error::Param(format!(
                    "event {} has polarity {}, expected +1 or -1",
                    i, e.p
                )));
            }
        }
        Ok(EventStream {
            events,
            width,
            height,
            t_start,
            t_end,
        })
    }

    /// Sorts by (t, y, x, p) before validating. The lexicographic tie-break
    /// makes merged multi-source streams reproducible.
    pub fn from_unsorted(
        mut events: Vec<Event>,
        width: usize,
        height: usize,
        t_start: i64,
        t_end: i64,
    ) -> Result<Self> {
        events.sort_by_key(|e| (e.t, e.y, e.x, e.p));
        EventStream::new(events, width, height, t_start, t_end)
    }

    pub fn empty(width: usize, height: usize, t_start: i64, t_end: i64) -> Result<Self> {
        EventStream::new(Vec::new(), width, height, t_start, t_end)
    }

    #[inline]
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.events.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn t_start(&self) -> i64 {
        self.t_start
    }

    #[inline]
    pub fn t_end(&self) -> i64 {
        self.t_end
    }

    pub fn check_in_range(&self, t: i64) -> Result<()> {
        if t < self.t_start || t > self.t_end {
            return Err(Error::Range(format!(
                "timestamp {} outside stream range [{}, {}]",
                t, self.t_start, self.t_end
            )));
        }
        Ok(())
    }

    /// Events with `lo <= t < hi` as a slice of the sorted store.
    pub fn window(&self, lo: i64, hi: i64) -> &[Event] {
        let start = self.events.partition_point(|e| e.t < lo);
        let end = self.events.partition_point(|e| e.t < hi);
        &self.events[start.min(end)..end.max(start)]
    }
}

/// Camera exposure interval in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExposureWindow {
    t_open: i64,
    t_close: i64,
}

impl ExposureWindow {
    pub fn new(t_open: i64, t_close: i64) -> Result<Self> {
        if t_close <= t_open {
            return Err(Error::Param(format!(
                "exposure must satisfy t_close > t_open, got [{}, {}]",
                t_open, t_close
            )));
        }
        Ok(ExposureWindow { t_open, t_close })
    }

    #[inline]
    pub fn t_open(&self) -> i64 {
        self.t_open
    }

    #[inline]
    pub fn t_close(&self) -> i64 {
        self.t_close
    }

    /// Exposure duration T in nanoseconds.
    #[inline]
    pub fn duration(&self) -> i64 {
        self.t_close - self.t_open
    }

    #[inline]
    pub fn contains(&self, t: i64) -> bool {
        t >= self.t_open && t <= self.t_close
    }

    pub fn check_contains(&self, t: i64) -> Result<()> {
        if !self.contains(t) {
            return Err(Error::Range(format!(
                "timestamp {} outside exposure [{}, {}]",
                t, self.t_open, self.t_close
            )));
        }
        Ok(())
    }

    /// Midpoints of `substeps` equal sub-intervals, rounded to whole
    /// nanoseconds. Blur synthesis and the double integral share this grid.
    pub fn midpoint_nodes(&self, substeps: usize) -> Vec<i64> {
        let t = self.duration() as f64;
        (0..substeps)
            .map(|s| self.t_open + ((s as f64 + 0.5) * t / substeps as f64).round() as i64)
            .collect()
    }
}

/// Per-pixel signed sum of polarities over the half-open window
/// `[min(f, t), max(f, t))`; negated when `f > t`.
pub fn accumulate(stream: &EventStream, f: i64, t: i64) -> Result<ScalarMap> {
    stream.check_in_range(f)?;
    stream.check_in_range(t)?;
    let mut map = ScalarMap::zeros(stream.width(), stream.height());
    let (lo, hi) = (f.min(t), f.max(t));
    for e in stream.window(lo, hi) {
        *map.at_mut(e.x as usize, e.y as usize) += e.p as f64;
    }
    if f > t {
        map.scale_assign(-1.0);
    }
    Ok(map)
}

/// Log-brightness change map: `theta * accumulate(stream, f, t)`.
///
/// Under the event generation model this equals
/// `log I(t, x) - log I(f, x)` up to threshold quantization.
pub fn delta_log(stream: &EventStream, f: i64, t: i64, theta: f64) -> Result<ScalarMap> {
    if !(theta > 0.0) {
        return Err(Error::Param(format!(
            "contrast threshold must be positive, got {}",
            theta
        )));
    }
    let mut map = accumulate(stream, f, t)?;
    map.scale_assign(theta);
    Ok(map)
}

/// Result of [`normalize_l2`]; `degenerate` marks maps whose norm fell below
/// [`EPSILON_NORM`] (the output is then the zero map).
#[derive(Debug, Clone)]
pub struct Normalized {
    pub map: ScalarMap,
    pub norm: f64,
    pub degenerate: bool,
}

/// Divides a map by its global L2 norm over all pixels. Event-free windows
/// legitimately occur, so a zero-norm input yields the zero map with a flag
/// rather than an error.
pub fn normalize_l2(map: &ScalarMap) -> Normalized {
    let norm = map.l2_norm();
    if norm < EPSILON_NORM {
        Normalized {
            map: ScalarMap::zeros(map.width(), map.height()),
            norm,
            degenerate: true,
        }
    } else {
        Normalized {
            map: map.scale(1.0 / norm),
            norm,
            degenerate: false,
        }
    }
}
