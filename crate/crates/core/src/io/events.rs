//! Binary event files.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SPADEVT1"
//! 8       4     version (1)
//! 12      4     height
//! 16      4     width
//! 20      8     exposure in ns, 0 for fixed-count (unbounded) streams
//! 28      8     dead time in ns
//! 36      ...   per pixel, row-major: count (u32) then count timestamps (u64 ps)
//! ```
//!
//! All integers are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::likelihood::max_events;
use crate::simulator::{EventCollection, EventStream};
use crate::Seconds;

pub const MAGIC: &[u8; 8] = b"SPADEVT1";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 36;

const PS_PER_NS: u64 = 1000;

fn whole_ns(ps: u64, what: &str) -> Result<u64> {
    if !ps.is_multiple_of(PS_PER_NS) {
        return Err(Error::input(format!(
            "{what} of {ps} ps is not a whole number of nanoseconds"
        )));
    }
    Ok(ps / PS_PER_NS)
}

pub fn write_events<W: Write>(writer: W, events: &EventCollection) -> Result<()> {
    let exposure_ns = match events.exposure_ps() {
        Some(0) => return Err(Error::input("a bounded exposure must be positive")),
        Some(ps) => whole_ns(ps, "exposure")?,
        None => 0,
    };
    let dead_ns = whole_ns(events.dead_time_ps(), "dead time")?;
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::input(format!("dimension {v} exceeds u32")));
    let mut w = BufWriter::new(writer);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim(events.height())?.to_le_bytes())?;
    w.write_all(&dim(events.width())?.to_le_bytes())?;
    w.write_all(&exposure_ns.to_le_bytes())?;
    w.write_all(&dead_ns.to_le_bytes())?;
    for stream in events.streams() {
        let count = u32::try_from(stream.len()).map_err(|_| Error::input("pixel holds more than 2^32 events"))?;
        w.write_all(&count.to_le_bytes())?;
        for &t in stream.times_ps() {
            w.write_all(&t.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_file(path: &Path, events: &EventCollection) -> Result<()> {
    write_events(File::create(path)?, events)
}

pub fn events_to_bytes(events: &EventCollection) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_events(&mut out, events)?;
    Ok(out)
}

/// Reader that knows its byte offset, for diagnostics.
struct Tracked<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Tracked<R> {
    fn exact<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(self.offset, format!("file ends while reading {what}"))
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.exact::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.exact::<8>(what).map(u64::from_le_bytes)
    }
}

pub fn read_events<R: Read>(reader: R) -> Result<EventCollection> {
    let mut r = Tracked {
        inner: BufReader::new(reader),
        offset: 0,
    };
    let magic = r.exact::<8>("magic")?;
    if &magic != MAGIC {
        return Err(Error::format(0, "not an event file (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(8, format!("unsupported version {version}")));
    }
    let height = r.u32("height")? as usize;
    let width = r.u32("width")? as usize;
    if height == 0 || width == 0 {
        return Err(Error::format(
            12,
            format!("dimensions {height}x{width} must be positive"),
        ));
    }
    let exposure_ns = r.u64("exposure")?;
    let dead_ns = r.u64("dead time")?;
    let to_ps = |ns: u64, at: u64| {
        ns.checked_mul(PS_PER_NS)
            .ok_or_else(|| Error::format(at, format!("{ns} ns overflows picoseconds")))
    };
    let exposure_ps = if exposure_ns == 0 {
        None
    } else {
        Some(to_ps(exposure_ns, 20)?)
    };
    let dead_ps = to_ps(dead_ns, 28)?;
    let limit = exposure_ps.and_then(|e| {
        max_events(
            Seconds::new(e as f64 / 1e12).ok()?,
            Seconds::new(dead_ps as f64 / 1e12).ok()?,
        )
    });

    let pixels = height
        .checked_mul(width)
        .ok_or_else(|| Error::format(12, "dimensions overflow"))?;
    let mut streams = Vec::with_capacity(pixels.min(1 << 20));
    for pixel in 0..pixels {
        let count_at = r.offset;
        let count = r.u32("event count")?;
        if limit.is_some_and(|m| u64::from(count) > m) {
            return Err(Error::format(
                count_at,
                format!("pixel {pixel} claims {count} events, more than the exposure allows"),
            ));
        }
        let mut times = Vec::with_capacity((count as usize).min(1 << 16));
        for i in 0..count {
            let at = r.offset;
            let t = r.u64("timestamp")?;
            if let Some(&prev) = times.last() {
                if t <= prev || t - prev < dead_ps {
                    return Err(Error::format(
                        at,
                        format!("pixel {pixel} event {i} at {t} ps violates ordering or dead time after {prev} ps"),
                    ));
                }
            }
            if exposure_ps.is_some_and(|e| t > e) {
                return Err(Error::format(
                    at,
                    format!("pixel {pixel} event {i} at {t} ps lies beyond the exposure"),
                ));
            }
            times.push(t);
        }
        let stream =
            EventStream::new(exposure_ps, dead_ps, times).map_err(|e| Error::format(count_at, e.to_string()))?;
        streams.push(stream);
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(Error::format(r.offset, "unexpected bytes after the last pixel"));
    }
    EventCollection::new(width, height, streams)
}

pub fn read_events_file(path: &Path) -> Result<EventCollection> {
    read_events(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventCollection {
        let s = |times: Vec<u64>| EventStream::new(Some(1_000_000), 50_000, times).unwrap();
        EventCollection::new(2, 1, vec![s(vec![]), s(vec![10, 60_010, 999_999])]).unwrap()
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let bytes = events_to_bytes(&sample()).unwrap();
        assert_eq!(bytes.len() as u64, HEADER_BYTES + 4 + 4 + 3 * 8);
        let back = read_events(&bytes[..]).unwrap();
        assert_eq!(back, sample());
        assert_eq!(events_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = events_to_bytes(&sample()).unwrap();
        assert_eq!(&bytes[..8], b"SPADEVT1");
        assert_eq!(bytes[8..12], 1u32.to_le_bytes());
        assert_eq!(bytes[12..16], 1u32.to_le_bytes());
        assert_eq!(bytes[16..20], 2u32.to_le_bytes());
        assert_eq!(bytes[20..28], 1000u64.to_le_bytes());
        assert_eq!(bytes[28..36], 50u64.to_le_bytes());
    }

    #[test]
    fn corrupt_files_report_offsets() {
        let bytes = events_to_bytes(&sample()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_events(&bad[..]), Err(Error::Format { offset: 0, .. })));

        // second timestamp of pixel 1 moved inside the dead time
        let mut bad = bytes.clone();
        let at = (HEADER_BYTES + 4 + 4 + 8) as usize;
        bad[at..at + 8].copy_from_slice(&20u64.to_le_bytes());
        match read_events(&bad[..]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, at as u64),
            other => panic!("unexpected {other:?}"),
        }

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(read_events(truncated), Err(Error::Format { .. })));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(read_events(&trailing[..]), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_sub_nanosecond_timing() {
        let s = EventStream::new(Some(1_000_500), 0, vec![]).unwrap();
        let c = EventCollection::new(1, 1, vec![s]).unwrap();
        assert!(events_to_bytes(&c).is_err());
    }
}
