//! Event recording files.
//!
//! Two interchange formats are supported:
//!
//! * **CSV**: header line `x,y,t_us,p`, then one event per line with
//!   `p` = 1 for positive and 0 for negative polarity. CSV carries no
//!   geometry, so the reader takes it from [`ReadOptions`].
//! * **Binary** (`EVR1`): a 24-byte little-endian header followed by
//!   fixed 16-byte records.
//!
//! ```text
//! header: magic "EVR1" | width u16 | height u16 | reserved [u8; 8] | count u64
//! record: x u16 | y u16 | p u8 | pad [u8; 3] (zero) | t u64
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::event::{Event, EventStream, Polarity, SensorGeometry, StreamError};

pub const BIN_MAGIC: &[u8; 4] = b"EVR1";
pub const BIN_HEADER_LEN: usize = 24;
pub const BIN_RECORD_LEN: usize = 16;
pub const CSV_HEADER: &str = "x,y,t_us,p";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Bin,
}

impl EventFormat {
    /// `.csv` is CSV, anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::Bin,
        }
    }
}

/// What to do with events outside the sensor geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundsMode {
    /// Out-of-bounds events abort the read.
    #[default]
    Strict,
    /// Out-of-bounds events are counted and skipped.
    Lenient,
}

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    /// Geometry for CSV input. Binary files carry their own.
    pub geometry: SensorGeometry,
    pub bounds: BoundsMode,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            geometry: SensorGeometry::DEFAULT,
            bounds: BoundsMode::Strict,
        }
    }
}

/// Position of a malformed record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(u64),
    Byte(u64),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Byte(b) => write!(f, "byte offset {b}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EventIoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed record at {location}: {message}", path.display())]
    Parse {
        path: PathBuf,
        location: Location,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Stream {
        path: PathBuf,
        #[source]
        source: StreamError,
    },
}

/// A successfully read recording.
#[derive(Debug, Clone)]
pub struct LoadedEvents {
    pub stream: EventStream,
    /// Out-of-bounds events dropped in lenient mode.
    pub skipped_out_of_bounds: u64,
}

pub fn read_events(
    path: &Path,
    format: EventFormat,
    opts: &ReadOptions,
) -> Result<LoadedEvents, EventIoError> {
    let file = File::open(path).map_err(|source| EventIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::with_capacity(1 << 20, file);
    match format {
        EventFormat::Csv => read_csv(path, reader, opts),
        EventFormat::Bin => read_bin(path, reader, opts),
    }
}

pub fn write_events(
    stream: &EventStream,
    path: &Path,
    format: EventFormat,
) -> Result<(), EventIoError> {
    let io_err = |source| EventIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::with_capacity(1 << 20, file);
    match format {
        EventFormat::Csv => write_csv(stream, &mut out),
        EventFormat::Bin => write_bin(stream, &mut out),
    }
    .and_then(|_| out.flush())
    .map_err(io_err)
}

fn write_csv<W: Write>(stream: &EventStream, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for ev in stream.events() {
        writeln!(out, "{},{},{},{}", ev.x, ev.y, ev.t, ev.polarity.as_u8())?;
    }
    Ok(())
}

fn write_bin<W: Write>(stream: &EventStream, out: &mut W) -> std::io::Result<()> {
    out.write_all(&encode_header(stream.geometry(), stream.len() as u64))?;
    for ev in stream.events() {
        out.write_all(&encode_record(ev))?;
    }
    Ok(())
}

pub(crate) fn encode_header(geometry: SensorGeometry, count: u64) -> [u8; BIN_HEADER_LEN] {
    let mut h = [0u8; BIN_HEADER_LEN];
    h[0..4].copy_from_slice(BIN_MAGIC);
    h[4..6].copy_from_slice(&geometry.width().to_le_bytes());
    h[6..8].copy_from_slice(&geometry.height().to_le_bytes());
    h[16..24].copy_from_slice(&count.to_le_bytes());
    h
}

pub(crate) fn encode_record(ev: &Event) -> [u8; BIN_RECORD_LEN] {
    let mut r = [0u8; BIN_RECORD_LEN];
    r[0..2].copy_from_slice(&ev.x.to_le_bytes());
    r[2..4].copy_from_slice(&ev.y.to_le_bytes());
    r[4] = ev.polarity.as_u8();
    r[8..16].copy_from_slice(&ev.t.to_le_bytes());
    r
}

/// Accumulates events while enforcing ordering and (optionally) bounds.
struct Collector<'a> {
    path: &'a Path,
    geometry: SensorGeometry,
    bounds: BoundsMode,
    events: Vec<Event>,
    skipped: u64,
    seen: usize,
    last_t: u64,
}

impl<'a> Collector<'a> {
    fn new(path: &'a Path, geometry: SensorGeometry, bounds: BoundsMode, capacity: usize) -> Self {
        Self {
            path,
            geometry,
            bounds,
            events: Vec::with_capacity(capacity),
            skipped: 0,
            seen: 0,
            last_t: 0,
        }
    }

    fn push(&mut self, ev: Event) -> Result<(), EventIoError> {
        let index = self.seen;
        self.seen += 1;
        if ev.t < self.last_t {
            return Err(self.stream_err(StreamError::TimestampRegression {
                index,
                t: ev.t,
                previous: self.last_t,
            }));
        }
        self.last_t = ev.t;
        if !self.geometry.contains(ev.x, ev.y) {
            return match self.bounds {
                BoundsMode::Lenient => {
                    self.skipped += 1;
                    Ok(())
                }
                BoundsMode::Strict => Err(self.stream_err(StreamError::OutOfBounds {
                    index,
                    x: ev.x,
                    y: ev.y,
                    geometry: self.geometry,
                })),
            };
        }
        self.events.push(ev);
        Ok(())
    }

    fn stream_err(&self, source: StreamError) -> EventIoError {
        EventIoError::Stream {
            path: self.path.to_path_buf(),
            source,
        }
    }

    fn finish(self) -> LoadedEvents {
        LoadedEvents {
            stream: EventStream::from_trusted(self.geometry, self.events),
            skipped_out_of_bounds: self.skipped,
        }
    }
}

fn read_csv<R: BufRead>(
    path: &Path,
    reader: R,
    opts: &ReadOptions,
) -> Result<LoadedEvents, EventIoError> {
    let parse_err = |line: u64, message: String| EventIoError::Parse {
        path: path.to_path_buf(),
        location: Location::Line(line),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut collector = Collector::new(path, opts.geometry, opts.bounds, 0);
    let mut record = csv::ByteRecord::new();
    let mut header_seen = false;

    loop {
        match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(parse_err(line, e.to_string()));
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !header_seen {
            header_seen = true;
            let fields: Vec<&[u8]> = record.iter().collect();
            let expected: Vec<&[u8]> = CSV_HEADER.split(',').map(str::as_bytes).collect();
            if fields != expected {
                return Err(parse_err(line, format!("expected header `{CSV_HEADER}`")));
            }
            continue;
        }
        if record.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let x: u16 = parse_field(&record[0]).ok_or_else(|| parse_err(line, "bad x".into()))?;
        let y: u16 = parse_field(&record[1]).ok_or_else(|| parse_err(line, "bad y".into()))?;
        let t: u64 = parse_field(&record[2]).ok_or_else(|| parse_err(line, "bad t_us".into()))?;
        let polarity = parse_field::<u8>(&record[3])
            .and_then(Polarity::from_u8)
            .ok_or_else(|| parse_err(line, "polarity must be 0 or 1".into()))?;
        collector.push(Event::new(x, y, t, polarity))?;
    }
    Ok(collector.finish())
}

fn parse_field<T: std::str::FromStr>(bytes: &[u8]) -> Option<T> {
    std::str::from_utf8(bytes).ok()?.parse().ok()
}

fn read_bin<R: Read>(
    path: &Path,
    mut reader: R,
    opts: &ReadOptions,
) -> Result<LoadedEvents, EventIoError> {
    let parse_err = |offset: u64, message: String| EventIoError::Parse {
        path: path.to_path_buf(),
        location: Location::Byte(offset),
        message,
    };
    let io_err = |source| EventIoError::Io {
        path: path.to_path_buf(),
        source,
    };

    let mut header = [0u8; BIN_HEADER_LEN];
    let got = read_full(&mut reader, &mut header).map_err(io_err)?;
    if got < BIN_HEADER_LEN {
        return Err(parse_err(got as u64, "truncated header".into()));
    }
    if &header[0..4] != BIN_MAGIC {
        return Err(parse_err(0, "bad magic, expected EVR1".into()));
    }
    let width = u16::from_le_bytes([header[4], header[5]]);
    let height = u16::from_le_bytes([header[6], header[7]]);
    let geometry = SensorGeometry::new(width, height)
        .ok_or_else(|| parse_err(4, format!("invalid geometry {width}x{height}")))?;
    let count = u64::from_le_bytes(header[16..24].try_into().unwrap());

    let capacity = usize::try_from(count).unwrap_or(0).min(1 << 26);
    let mut collector = Collector::new(path, geometry, opts.bounds, capacity);
    let mut rec = [0u8; BIN_RECORD_LEN];
    for i in 0..count {
        let offset = BIN_HEADER_LEN as u64 + i * BIN_RECORD_LEN as u64;
        let got = read_full(&mut reader, &mut rec).map_err(io_err)?;
        if got < BIN_RECORD_LEN {
            return Err(parse_err(
                offset + got as u64,
                format!("file ends after {i} of {count} declared records"),
            ));
        }
        let polarity = Polarity::from_u8(rec[4])
            .ok_or_else(|| parse_err(offset + 4, format!("polarity byte {}", rec[4])))?;
        if rec[5..8] != [0, 0, 0] {
            return Err(parse_err(offset + 5, "non-zero padding".into()));
        }
        let ev = Event::new(
            u16::from_le_bytes([rec[0], rec[1]]),
            u16::from_le_bytes([rec[2], rec[3]]),
            u64::from_le_bytes(rec[8..16].try_into().unwrap()),
            polarity,
        );
        collector.push(ev)?;
    }
    let mut probe = [0u8; 1];
    if read_full(&mut reader, &mut probe).map_err(io_err)? != 0 {
        let offset = BIN_HEADER_LEN as u64 + count * BIN_RECORD_LEN as u64;
        return Err(parse_err(offset, "trailing bytes after declared records".into()));
    }
    Ok(collector.finish())
}

/// Reads until `buf` is full or EOF; returns the number of bytes read.
fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp(name: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        (dir, p)
    }

    #[test]
    fn csv_line_maps_fields() {
        let (_d, p) = tmp("one.csv");
        std::fs::write(&p, "x,y,t_us,p\n3,7,1000,1\n").unwrap();
        let got = read_events(&p, EventFormat::Csv, &ReadOptions::default()).unwrap();
        assert_eq!(
            got.stream.events(),
            &[Event::new(3, 7, 1000, Polarity::Positive)]
        );
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let (_d, p) = tmp("empty.csv");
        std::fs::write(&p, "").unwrap();
        let geometry = SensorGeometry::new(64, 32).unwrap();
        let opts = ReadOptions {
            geometry,
            ..Default::default()
        };
        let got = read_events(&p, EventFormat::Csv, &opts).unwrap();
        assert!(got.stream.is_empty());
        assert_eq!(got.stream.geometry(), geometry);
    }

    #[test]
    fn empty_stream_writes_header_only_csv() {
        let (_d, p) = tmp("e.csv");
        write_events(&EventStream::empty(SensorGeometry::DEFAULT), &p, EventFormat::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "x,y,t_us,p\n");
    }

    #[test]
    fn single_event_bin_is_header_plus_sixteen_bytes() {
        let (_d, p) = tmp("one.bin");
        let s = EventStream::new(
            SensorGeometry::DEFAULT,
            vec![Event::new(1, 2, 3, Polarity::Negative)],
        )
        .unwrap();
        write_events(&s, &p, EventFormat::Bin).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), BIN_HEADER_LEN + BIN_RECORD_LEN);
        assert_eq!(&bytes[0..4], b"EVR1");
        assert_eq!(&bytes[4..8], &[0x00, 0x05, 0xD0, 0x02]);
        assert_eq!(&bytes[16..24], &1u64.to_le_bytes());
        assert_eq!(
            &bytes[24..],
            &[1, 0, 2, 0, 0, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn csv_parse_error_reports_line() {
        let (_d, p) = tmp("bad.csv");
        std::fs::write(&p, "x,y,t_us,p\n1,1,10,1\n1,oops,11,0\n").unwrap();
        match read_events(&p, EventFormat::Csv, &ReadOptions::default()) {
            Err(EventIoError::Parse {
                location: Location::Line(3),
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_bad_header_and_bad_polarity() {
        let (_d, p) = tmp("h.csv");
        std::fs::write(&p, "a,b,c,d\n").unwrap();
        assert!(matches!(
            read_events(&p, EventFormat::Csv, &ReadOptions::default()),
            Err(EventIoError::Parse { .. })
        ));
        std::fs::write(&p, "x,y,t_us,p\n1,1,1,2\n").unwrap();
        assert!(matches!(
            read_events(&p, EventFormat::Csv, &ReadOptions::default()),
            Err(EventIoError::Parse { .. })
        ));
    }

    #[test]
    fn timestamp_regression_is_ordering_error() {
        let (_d, p) = tmp("r.csv");
        std::fs::write(&p, "x,y,t_us,p\n1,1,10,1\n1,1,9,0\n").unwrap();
        assert!(matches!(
            read_events(&p, EventFormat::Csv, &ReadOptions::default()),
            Err(EventIoError::Stream {
                source: StreamError::TimestampRegression { index: 1, .. },
                ..
            })
        ));
    }

    #[test]
    fn out_of_bounds_strict_vs_lenient() {
        let (_d, p) = tmp("o.csv");
        std::fs::write(&p, "x,y,t_us,p\n1,1,10,1\n5000,1,11,0\n2,2,12,1\n").unwrap();
        assert!(matches!(
            read_events(&p, EventFormat::Csv, &ReadOptions::default()),
            Err(EventIoError::Stream {
                source: StreamError::OutOfBounds { .. },
                ..
            })
        ));
        let lenient = ReadOptions {
            bounds: BoundsMode::Lenient,
            ..Default::default()
        };
        let got = read_events(&p, EventFormat::Csv, &lenient).unwrap();
        assert_eq!(got.stream.len(), 2);
        assert_eq!(got.skipped_out_of_bounds, 1);
    }

    #[test]
    fn bin_truncation_reports_byte_offset() {
        let (_d, p) = tmp("t.bin");
        let s = EventStream::new(
            SensorGeometry::DEFAULT,
            vec![
                Event::new(1, 2, 3, Polarity::Negative),
                Event::new(1, 2, 4, Polarity::Positive),
            ],
        )
        .unwrap();
        write_events(&s, &p, EventFormat::Bin).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(BIN_HEADER_LEN + BIN_RECORD_LEN + 5);
        std::fs::write(&p, &bytes).unwrap();
        match read_events(&p, EventFormat::Bin, &ReadOptions::default()) {
            Err(EventIoError::Parse {
                location: Location::Byte(45),
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bin_bad_magic() {
        let (_d, p) = tmp("m.bin");
        std::fs::write(&p, [0u8; 24]).unwrap();
        assert!(matches!(
            read_events(&p, EventFormat::Bin, &ReadOptions::default()),
            Err(EventIoError::Parse {
                location: Location::Byte(0),
                ..
            })
        ));
    }

    #[test]
    fn missing_file_is_io_error_with_path() {
        let err = read_events(
            Path::new("/nonexistent/x.bin"),
            EventFormat::Bin,
            &ReadOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.bin"));
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u16..300, 1u16..300).prop_flat_map(|(w, h)| {
            proptest::collection::vec((0..w, 0..h, 0u64..50, any::<bool>()), 0..200).prop_map(
                move |raw| {
                    let mut t = 0u64;
                    let events = raw
                        .into_iter()
                        .map(|(x, y, dt, p)| {
                            t += dt;
                            let pol = if p {
                                Polarity::Positive
                            } else {
                                Polarity::Negative
                            };
                            Event::new(x, y, t, pol)
                        })
                        .collect();
                    EventStream::new(SensorGeometry::new(w, h).unwrap(), events).unwrap()
                },
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn round_trip_both_formats(s in arb_stream()) {
            let dir = tempfile::tempdir().unwrap();
            for (name, fmt) in [("s.csv", EventFormat::Csv), ("s.bin", EventFormat::Bin)] {
                let p = dir.path().join(name);
                write_events(&s, &p, fmt).unwrap();
                let opts = ReadOptions { geometry: s.geometry(), bounds: BoundsMode::Strict };
                let back = read_events(&p, fmt, &opts).unwrap();
                prop_assert_eq!(&back.stream, &s);
                if fmt == EventFormat::Bin {
                    let len = std::fs::metadata(&p).unwrap().len() as usize;
                    prop_assert_eq!(len, BIN_HEADER_LEN + BIN_RECORD_LEN * s.len());
                }
            }
        }
    }
}
