use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;

use crate::error::{Error, Result};
use crate::geometry::{Point, Segment};

/// Version tag leading every record line.
pub const DATASET_VERSION: &str = "segds1";

/// A segment with the id of the object it was observed from.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRecord {
    pub segment: Segment,
    pub group_id: u64,
}

/// One tab-separated line per segment: version, run_id, frame_index,
/// segment_id, group_id, observer x, y, z, point count, then the points as
/// base64 of little-endian f64 (x, y, z) triples.
pub fn encode_record(r: &SegmentRecord) -> Result<String> {
    let s = &r.segment;
    if s.run_id.is_empty() || s.run_id.contains(['\t', '\n', '\r']) {
        return Err(Error::config("run_id", "must be nonempty without tabs or newlines"));
    }
    let mut bytes = Vec::with_capacity(24 * s.points.len());
    for p in &s.points {
        for c in [p.x, p.y, p.z] {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    let o = s.observer_position;
    Ok(format!(
        "{DATASET_VERSION}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        s.run_id,
        s.frame_index,
        s.segment_id,
        r.group_id,
        o.x,
        o.y,
        o.z,
        s.points.len(),
        B64.encode(bytes)
    ))
}

pub fn write_dataset(path: &Path, records: &[SegmentRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        w.write_all(encode_record(r)?.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_line(line: &str, path: &str, lineno: usize, offset: u64) -> Result<SegmentRecord> {
    let err = |message: String| Error::Format {
        path: path.to_string(),
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields[0] != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_string(),
            expected: DATASET_VERSION.into(),
            found: fields[0].chars().take(32).collect(),
        });
    }
    if fields.len() != 10 {
        return Err(err(format!("expected 10 fields, found {}", fields.len())));
    }
    fn num<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
        s.parse().map_err(|_| format!("bad {name} `{s}`"))
    }
    let parsed = (|| -> std::result::Result<_, String> {
        Ok((
            num::<u32>(fields[2], "frame_index")?,
            num::<u64>(fields[3], "segment_id")?,
            num::<u64>(fields[4], "group_id")?,
            Point::new(
                num(fields[5], "observer x")?,
                num(fields[6], "observer y")?,
                num(fields[7], "observer z")?,
            ),
            num::<usize>(fields[8], "point count")?,
        ))
    })();
    let (frame, segment_id, group_id, observer, count) = parsed.map_err(err)?;
    let bytes = B64
        .decode(fields[9])
        .map_err(|e| err(format!("bad point payload: {e}")))?;
    if bytes.len() < 24 * count {
        return Err(Error::Truncated {
            path: path.to_string(),
            offset: offset + line.len() as u64,
        });
    }
    if bytes.len() != 24 * count {
        return Err(err(format!("payload holds {} bytes for {count} points", bytes.len())));
    }
    let f = |i: usize| f64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
    let points = (0..count)
        .map(|i| Point::new(f(3 * i), f(3 * i + 1), f(3 * i + 2)))
        .collect();
    let segment = Segment::new(segment_id, points, observer, frame, fields[1]).map_err(|e| err(e.to_string()))?;
    Ok(SegmentRecord { segment, group_id })
}

/// Reads a dataset written by [`write_dataset`]. A final line without its
/// newline is reported as truncation at that line's byte offset.
pub fn read_dataset(path: &Path) -> Result<Vec<SegmentRecord>> {
    let name = path.display().to_string();
    let mut reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut line = String::new();
    let mut offset = 0u64;
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        if !line.ends_with('\n') {
            return Err(Error::Truncated { path: name, offset });
        }
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.is_empty() {
            let r = parse_line(body, &name, lineno, offset)?;
            if !seen.insert(r.segment.segment_id) {
                return Err(Error::DuplicateSegmentId(r.segment.segment_id));
            }
            out.push(r);
        }
        offset += n as u64;
    }
    Ok(out)
}
