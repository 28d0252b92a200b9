use crate::distributions::Seconds;
use crate::error::{Error, Result};

pub const PS_PER_SECOND: f64 = 1e12;

/// Rounds a time in seconds to the nearest picosecond.
pub fn seconds_to_ps(seconds: f64) -> u64 {
    (seconds * PS_PER_SECOND).round() as u64
}

pub fn ps_to_seconds(ps: u64) -> f64 {
    ps as f64 / PS_PER_SECOND
}

/// One pixel's detections.
///
/// Timestamps are integer picoseconds so that the ordering, dead-time spacing
/// and exposure bound are checked exactly and survive serialization unchanged.
/// An unbounded stream (fixed-count acquisition) has no exposure and at least
/// one detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    exposure_ps: Option<u64>,
    dead_time_ps: u64,
    times_ps: Vec<u64>,
}

impl EventStream {
    pub fn new(exposure_ps: Option<u64>, dead_time_ps: u64, times_ps: Vec<u64>) -> Result<Self> {
        let stream = EventStream {
            exposure_ps,
            dead_time_ps,
            times_ps,
        };
        stream.validate()?;
        Ok(stream)
    }

    /// Builds a stream from times in seconds, rounding everything to picoseconds.
    pub fn from_seconds(exposure: Option<Seconds>, dead_time: Seconds, times: &[f64]) -> Result<Self> {
        if let Some(bad) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::input(format!(
                "detection time {bad} is not a finite non-negative value"
            )));
        }
        EventStream::new(
            exposure.map(|e| seconds_to_ps(e.get())),
            seconds_to_ps(dead_time.get()),
            times.iter().map(|&t| seconds_to_ps(t)).collect(),
        )
    }

    pub fn empty(exposure: Seconds, dead_time: Seconds) -> Self {
        EventStream {
            exposure_ps: Some(seconds_to_ps(exposure.get())),
            dead_time_ps: seconds_to_ps(dead_time.get()),
            times_ps: Vec::new(),
        }
    }

    /// Checks ordering, dead-time spacing, and the exposure bound.
    pub fn validate(&self) -> Result<()> {
        for (i, pair) in self.times_ps.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(Error::input(format!(
                    "detection {} at {} ps does not follow {} ps",
                    i + 1,
                    pair[1],
                    pair[0]
                )));
            }
            if pair[1] - pair[0] < self.dead_time_ps {
                return Err(Error::input(format!(
                    "detections {} and {} are {} ps apart, closer than the {} ps dead time",
                    i,
                    i + 1,
                    pair[1] - pair[0],
                    self.dead_time_ps
                )));
            }
        }
        match (self.exposure_ps, self.times_ps.last()) {
            (Some(exposure), Some(&last)) if last > exposure => Err(Error::input(format!(
                "detection at {last} ps lies beyond the {exposure} ps exposure"
            ))),
            (None, None) => Err(Error::input("an unbounded stream needs at least one detection")),
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.times_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ps.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.exposure_ps.is_some()
    }

    pub fn exposure_ps(&self) -> Option<u64> {
        self.exposure_ps
    }

    pub fn dead_time_ps(&self) -> u64 {
        self.dead_time_ps
    }

    pub fn times_ps(&self) -> &[u64] {
        &self.times_ps
    }

    pub fn exposure(&self) -> Option<Seconds> {
        self.exposure_ps
            .map(|ps| Seconds::new(ps_to_seconds(ps)).expect("finite"))
    }

    pub fn dead_time(&self) -> Seconds {
        Seconds::new(ps_to_seconds(self.dead_time_ps)).expect("finite")
    }

    pub fn times(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.times_ps.iter().map(|&ps| ps_to_seconds(ps))
    }

    pub fn last_time_ps(&self) -> Option<u64> {
        self.times_ps.last().copied()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.last_time_ps().map(ps_to_seconds)
    }
}

/// Per-pixel streams for a whole field of view, row-major, sharing one
/// exposure and dead time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventCollection {
    width: usize,
    height: usize,
    exposure_ps: Option<u64>,
    dead_time_ps: u64,
    streams: Vec<EventStream>,
}

impl EventCollection {
    pub fn new(width: usize, height: usize, streams: Vec<EventStream>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("event collection dimensions must be positive"));
        }
        if streams.len() != width * height {
            return Err(Error::input(format!(
                "expected {} streams for {width}x{height}, got {}",
                width * height,
                streams.len()
            )));
        }
        let exposure_ps = streams[0].exposure_ps;
        let dead_time_ps = streams[0].dead_time_ps;
        if streams
            .iter()
            .any(|s| s.exposure_ps != exposure_ps || s.dead_time_ps != dead_time_ps)
        {
            return Err(Error::input("all streams must share exposure and dead time"));
        }
        Ok(EventCollection {
            width,
            height,
            exposure_ps,
            dead_time_ps,
            streams,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn exposure_ps(&self) -> Option<u64> {
        self.exposure_ps
    }

    pub fn dead_time_ps(&self) -> u64 {
        self.dead_time_ps
    }

    pub fn streams(&self) -> &[EventStream] {
        &self.streams
    }

    pub fn get(&self, row: usize, col: usize) -> &EventStream {
        &self.streams[row * self.width + col]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.streams.iter().map(EventStream::len).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.streams.iter().try_for_each(EventStream::validate)
    }
}
