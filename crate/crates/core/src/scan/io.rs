//! Scan files.
//!
//! CSV: one `#` metadata line, a header row
//! `x,y,z,intensity,azimuth,timestamp,object_id`, then one row per point with
//! values printed to 9 significant digits (`object_id` empty when absent).
//!
//! Binary (`.rscn`, little-endian, columnar):
//!
//! ```text
//! magic "RSCN" | u32 version (1)
//! f64 scan_start | f64 period | u8 has_reference | f64 reference_time
//! u32 frame_len | frame_len bytes UTF-8 sensor frame
//! u64 n
//! n×f64 x | n×f64 y | n×f64 z | n×f64 intensity | n×f64 azimuth | n×f64 timestamp
//! n×i64 object_id (-1 = none)
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{LidarPoint, LidarScan};
use crate::error::{Error, Result};
use crate::store::{format_g9, write_atomic};

const MAGIC: &[u8; 4] = b"RSCN";
const VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 7] = ["x", "y", "z", "intensity", "azimuth", "timestamp", "object_id"];

pub fn write_csv<W: Write>(scan: &LidarScan, out: W) -> Result<()> {
    let mut out = out;
    let reference = scan.compensated_to.map(|t| t.to_string()).unwrap_or_default();
    writeln!(
        out,
        "# scan_start={},period={},sensor_frame={},compensated_to={}",
        scan.scan_start, scan.period, scan.sensor_frame, reference
    )
    .map_err(|e| Error::io("writing scan csv", e))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::io("writing scan csv", e.into());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for p in &scan.points {
        w.write_record([
            format_g9(p.position.x),
            format_g9(p.position.y),
            format_g9(p.position.z),
            format_g9(p.intensity),
            format_g9(p.azimuth),
            format_g9(p.timestamp),
            p.object_id.map(|id| id.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("writing scan csv", e))?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<LidarScan> {
    let mut reader = BufReader::new(input);
    let mut meta = String::new();
    reader
        .read_line(&mut meta)
        .map_err(|e| Error::io(format!("reading {}", origin.display()), e))?;
    let bad = |reason: String| Error::format(origin, reason);
    let meta = meta
        .trim_end()
        .strip_prefix("# ")
        .ok_or_else(|| bad("missing `# scan_start=...` metadata line".into()))?;

    let (mut scan_start, mut period, mut frame, mut reference) = (None, None, None, None);
    for field in meta.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("metadata field `{field}` lacks `=`")))?;
        let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{key}: {e}")));
        match key {
            "scan_start" => scan_start = Some(num(value)?),
            "period" => period = Some(num(value)?),
            "sensor_frame" => frame = Some(value.to_owned()),
            "compensated_to" if value.is_empty() => reference = Some(None),
            "compensated_to" => reference = Some(Some(num(value)?)),
            other => return Err(bad(format!("unknown metadata key `{other}`"))),
        }
    }

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect::<Vec<_>>();
    if headers != CSV_HEADER {
        return Err(bad(format!("unexpected header {headers:?}")));
    }
    let mut points = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("row {row} column {}: {e}", CSV_HEADER[i])))
        };
        let object_id = match &record[6] {
            "" => None,
            s => Some(s.parse::<u64>().map_err(|e| bad(format!("row {row} object_id: {e}")))?),
        };
        points.push(LidarPoint {
            position: Vector3::new(f(0)?, f(1)?, f(2)?),
            intensity: f(3)?,
            azimuth: f(4)?,
            timestamp: f(5)?,
            object_id,
        });
    }
    Ok(LidarScan {
        scan_start: scan_start.ok_or_else(|| bad("missing scan_start".into()))?,
        period: period.ok_or_else(|| bad("missing period".into()))?,
        sensor_frame: frame.ok_or_else(|| bad("missing sensor_frame".into()))?.as_str().into(),
        compensated_to: reference.ok_or_else(|| bad("missing compensated_to".into()))?,
        points,
    })
}

pub fn encode_binary(scan: &LidarScan) -> Vec<u8> {
    let n = scan.points.len();
    let frame = scan.sensor_frame.as_str().as_bytes();
    let mut buf = Vec::with_capacity(64 + frame.len() + n * 56);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&scan.scan_start.to_le_bytes());
    buf.extend_from_slice(&scan.period.to_le_bytes());
    buf.push(scan.compensated_to.is_some() as u8);
    buf.extend_from_slice(&scan.compensated_to.unwrap_or(0.0).to_le_bytes());
    buf.extend_from_slice(&(frame.len() as u32).to_le_bytes());
    buf.extend_from_slice(frame);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    let columns: [fn(&LidarPoint) -> f64; 6] = [
        |p| p.position.x,
        |p| p.position.y,
        |p| p.position.z,
        |p| p.intensity,
        |p| p.azimuth,
        |p| p.timestamp,
    ];
    for column in columns {
        for p in &scan.points {
            buf.extend_from_slice(&column(p).to_le_bytes());
        }
    }
    for p in &scan.points {
        let id = p.object_id.map(|id| id as i64).unwrap_or(-1);
        buf.extend_from_slice(&id.to_le_bytes());
    }
    buf
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::format(self.origin, format!("truncated at byte {} (need {n} more)", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn decode_binary(data: &[u8], origin: &Path) -> Result<LidarScan> {
    let mut c = Cursor { data, pos: 0, origin };
    if c.take(4)? != MAGIC {
        return Err(Error::format(origin, "bad magic"));
    }
    let version = u32::from_le_bytes(c.array()?);
    if version != VERSION {
        return Err(Error::format(origin, format!("unsupported version {version}")));
    }
    let scan_start = c.f64()?;
    let period = c.f64()?;
    let has_reference = c.take(1)?[0] != 0;
    let reference = c.f64()?;
    let frame_len = u32::from_le_bytes(c.array()?) as usize;
    let frame = std::str::from_utf8(c.take(frame_len)?)
        .map_err(|e| Error::format(origin, format!("sensor frame: {e}")))?
        .to_owned();
    let n = u64::from_le_bytes(c.array()?) as usize;
    if n.checked_mul(56).is_none_or(|bytes| bytes > data.len()) {
        return Err(Error::format(origin, format!("point count {n} exceeds file size")));
    }
    let mut columns: [Vec<f64>; 6] = Default::default();
    for column in columns.iter_mut() {
        *column = (0..n).map(|_| c.f64()).collect::<Result<_>>()?;
    }
    let ids = (0..n)
        .map(|_| c.array().map(i64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    let [x, y, z, intensity, azimuth, timestamp] = &columns;
    let points: Vec<LidarPoint> = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| LidarPoint {
            position: Vector3::new(x[i], y[i], z[i]),
            intensity: intensity[i],
            azimuth: azimuth[i],
            timestamp: timestamp[i],
            object_id: (id >= 0).then_some(id as u64),
        })
        .collect();
    if c.pos != data.len() {
        return Err(Error::format(origin, "trailing bytes after point columns"));
    }
    Ok(LidarScan {
        scan_start,
        period,
        sensor_frame: frame.as_str().into(),
        compensated_to: has_reference.then_some(reference),
        points,
    })
}

pub fn write_scan_file(scan: &LidarScan, path: &Path) -> Result<()> {
    let bytes = if is_csv(path) {
        let mut buf = Vec::new();
        write_csv(scan, &mut buf)?;
        buf
    } else {
        encode_binary(scan)
    };
    write_atomic(path, &bytes)
}

/// Reads a scan, choosing the format from the extension (`.csv` or binary).
pub fn read_scan_file(path: &Path) -> Result<LidarScan> {
    let data = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if is_csv(path) {
        read_csv(data.as_slice(), path)
    } else {
        decode_binary(&data, path)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
