//! Point cloud and calibration file formats. See `docs/file-formats.md`.

use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::CalibError;
use crate::types::{PointCloud3D, RigidTransform3D};

fn io_err(path: &Path, source: std::io::Error) -> CalibError {
    CalibError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> CalibError {
    CalibError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses `x y z` lines; blank lines and lines starting with `#` are skipped.
pub fn parse_xyz(text: &str, sensor_id: &str, path: &Path) -> Result<PointCloud3D, CalibError> {
    let mut pts = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(path, no + 1, e.to_string()))?;
        if vals.len() != 3 {
            return Err(parse_err(path, no + 1, format!("expected 3 values, got {}", vals.len())));
        }
        pts.push(Point3::new(vals[0], vals[1], vals[2]));
    }
    PointCloud3D::new(sensor_id, pts)
}

pub fn read_xyz(path: &Path, sensor_id: &str) -> Result<PointCloud3D, CalibError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_xyz(&text, sensor_id, path)
}

pub fn format_xyz(cloud: &PointCloud3D) -> String {
    let mut s = String::with_capacity(cloud.len() * 48);
    for p in &cloud.points {
        s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    s
}

pub fn write_xyz(path: &Path, cloud: &PointCloud3D) -> Result<(), CalibError> {
    fs::write(path, format_xyz(cloud)).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcdEncoding {
    Ascii,
    Binary,
}

struct PcdField {
    name: String,
    size: usize,
    kind: char,
    count: usize,
}

/// Reads ASCII or binary PCD; fields other than `x`, `y`, `z` are ignored
/// and points with non-finite coordinates are dropped.
pub fn parse_pcd(bytes: &[u8], sensor_id: &str, path: &Path) -> Result<PointCloud3D, CalibError> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut fields: Vec<String> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut types: Vec<char> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut points: Option<usize> = None;
    let (mut width, mut height) = (None, None);
    let encoding = loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| parse_err(path, line_no + 1, "header ends before DATA"))?;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| parse_err(path, line_no + 1, "header is not UTF-8"))?
            .trim();
        pos = end + 1;
        line_no += 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        let key = tok.next().unwrap_or_default().to_ascii_uppercase();
        let rest: Vec<&str> = tok.collect();
        let nums = |what: &str| -> Result<Vec<usize>, CalibError> {
            rest.iter()
                .map(|t| t.parse::<usize>().map_err(|_| parse_err(path, line_no, format!("bad {what} value {t:?}"))))
                .collect()
        };
        match key.as_str() {
            "FIELDS" => fields = rest.iter().map(|s| s.to_string()).collect(),
            "SIZE" => sizes = nums("SIZE")?,
            "TYPE" => types = rest.iter().map(|s| s.chars().next().unwrap_or('?')).collect(),
            "COUNT" => counts = nums("COUNT")?,
            "WIDTH" => width = nums("WIDTH")?.first().copied(),
            "HEIGHT" => height = nums("HEIGHT")?.first().copied(),
            "POINTS" => points = nums("POINTS")?.first().copied(),
            "VERSION" | "VIEWPOINT" => {}
            "DATA" => match rest.first().copied() {
                Some("ascii") => break PcdEncoding::Ascii,
                Some("binary") => break PcdEncoding::Binary,
                other => return Err(parse_err(path, line_no, format!("unsupported DATA {other:?}"))),
            },
            other => return Err(parse_err(path, line_no, format!("unknown header key {other}"))),
        }
    };
    if counts.is_empty() {
        counts = vec![1; fields.len()];
    }
    if sizes.len() != fields.len() || types.len() != fields.len() || counts.len() != fields.len() {
        return Err(parse_err(path, line_no, "FIELDS, SIZE, TYPE and COUNT lengths differ"));
    }
    let n = points
        .or_else(|| Some(width? * height.unwrap_or(1)))
        .ok_or_else(|| parse_err(path, line_no, "missing POINTS"))?;
    let layout: Vec<PcdField> = (0..fields.len())
        .map(|i| PcdField {
            name: fields[i].clone(),
            size: sizes[i],
            kind: types[i],
            count: counts[i],
        })
        .collect();
    let find = |name: &str| -> Result<(usize, usize, &PcdField), CalibError> {
        let mut value_idx = 0;
        let mut byte_off = 0;
        for f in &layout {
            if f.name == name {
                if f.kind != 'F' || !(f.size == 4 || f.size == 8) {
                    return Err(parse_err(path, line_no, format!("field {name} must be TYPE F with SIZE 4 or 8")));
                }
                return Ok((value_idx, byte_off, f));
            }
            value_idx += f.count;
            byte_off += f.size * f.count;
        }
        Err(parse_err(path, line_no, format!("missing field {name}")))
    };
    let axes = [find("x")?, find("y")?, find("z")?];
    let values_per_point: usize = layout.iter().map(|f| f.count).sum();
    let record: usize = layout.iter().map(|f| f.size * f.count).sum();

    let mut pts = Vec::with_capacity(n);
    match encoding {
        PcdEncoding::Ascii => {
            let body = std::str::from_utf8(&bytes[pos..]).map_err(|_| parse_err(path, line_no + 1, "data is not UTF-8"))?;
            let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            for _ in 0..n {
                let (k, l) = lines
                    .next()
                    .ok_or_else(|| parse_err(path, line_no + 1, format!("expected {n} points")))?;
                let vals: Vec<&str> = l.split_whitespace().collect();
                let at = line_no + k + 1;
                if vals.len() != values_per_point {
                    return Err(parse_err(path, at, format!("expected {values_per_point} values")));
                }
                let get = |i: usize| vals[i].parse::<f64>().map_err(|e| parse_err(path, at, e.to_string()));
                pts.push(Point3::new(get(axes[0].0)?, get(axes[1].0)?, get(axes[2].0)?));
            }
        }
        PcdEncoding::Binary => {
            let data = &bytes[pos..];
            if data.len() < n * record {
                return Err(parse_err(path, line_no + 1, format!("binary data holds fewer than {n} records")));
            }
            for i in 0..n {
                let rec = &data[i * record..(i + 1) * record];
                let get = |(_, off, f): &(usize, usize, &PcdField)| -> f64 {
                    if f.size == 4 {
                        f32::from_le_bytes(rec[*off..off + 4].try_into().expect("4 bytes")) as f64
                    } else {
                        f64::from_le_bytes(rec[*off..off + 8].try_into().expect("8 bytes"))
                    }
                };
                pts.push(Point3::new(get(&axes[0]), get(&axes[1]), get(&axes[2])));
            }
        }
    }
    pts.retain(|p| p.coords.iter().all(|c| c.is_finite()));
    PointCloud3D::new(sensor_id, pts)
}

pub fn read_pcd(path: &Path, sensor_id: &str) -> Result<PointCloud3D, CalibError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    parse_pcd(&bytes, sensor_id, path)
}

/// PCD v0.7 with `x y z` as 8-byte floats.
pub fn format_pcd(cloud: &PointCloud3D, encoding: PcdEncoding) -> Vec<u8> {
    let n = cloud.len();
    let mut out = format!(
        "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z\nSIZE 8 8 8\nTYPE F F F\nCOUNT 1 1 1\nWIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA {}\n",
        match encoding {
            PcdEncoding::Ascii => "ascii",
            PcdEncoding::Binary => "binary",
        }
    )
    .into_bytes();
    match encoding {
        PcdEncoding::Ascii => out.extend_from_slice(format_xyz(cloud).as_bytes()),
        PcdEncoding::Binary => {
            for p in &cloud.points {
                for c in [p.x, p.y, p.z] {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn write_pcd(path: &Path, cloud: &PointCloud3D, encoding: PcdEncoding) -> Result<(), CalibError> {
    fs::write(path, format_pcd(cloud, encoding)).map_err(|e| io_err(path, e))
}

/// Loads `.xyz` or `.pcd` by extension; the sensor id is the file stem.
pub fn read_cloud(path: &Path) -> Result<PointCloud3D, CalibError> {
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud").to_string();
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("xyz") => read_xyz(path, &id),
        Some("pcd") => read_pcd(path, &id),
        _ => Err(parse_err(path, 0, "expected a .xyz or .pcd file")),
    }
}

/// One line: the 12 entries of `[R | t]` row-major, `{:.17e}` each,
/// separated by single spaces, terminated by `\n`.
pub fn format_calibration(t: &RigidTransform3D) -> String {
    let vals: Vec<String> = t.to_row_major().iter().map(|v| format!("{v:.17e}")).collect();
    format!("{}\n", vals.join(" "))
}

pub fn parse_calibration(text: &str, path: &Path) -> Result<RigidTransform3D, CalibError> {
    let mut vals = Vec::with_capacity(12);
    let mut last_line = 0;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        last_line = no + 1;
        for tok in line.split_whitespace() {
            vals.push(tok.parse::<f64>().map_err(|e| parse_err(path, no + 1, e.to_string()))?);
        }
    }
    let arr: [f64; 12] = vals
        .try_into()
        .map_err(|v: Vec<f64>| parse_err(path, last_line, format!("expected 12 numbers, got {}", v.len())))?;
    RigidTransform3D::from_row_major(&arr)
}

pub fn read_calibration(path: &Path) -> Result<RigidTransform3D, CalibError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_calibration(&text, path)
}

pub fn write_calibration(path: &Path, t: &RigidTransform3D) -> Result<(), CalibError> {
    fs::write(path, format_calibration(t)).map_err(|e| io_err(path, e))
}
