//! Point cloud loading, spatial dilution and the binary `.c2m` cache.
//!
//! The cache layout is fixed and little-endian:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 8    | magic `C2MCACHE`              |
//! | 8      | 4    | `u32` format version (1)      |
//! | 12     | 8    | `u64` point count             |
//! | 20     | 24·n | `f64` x, y, z per point       |

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

pub const CACHE_MAGIC: &[u8; 8] = b"C2MCACHE";
pub const CACHE_VERSION: u32 = 1;
const CACHE_HEADER_LEN: usize = 20;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn of(points: &[Point3]) -> Option<Aabb> {
        let first = *points.first()?;
        let mut b = Aabb {
            min: first,
            max: first,
        };
        for p in points {
            for k in 0..3 {
                b.min[k] = b.min[k].min(p[k]);
                b.max[k] = b.max[k].max(p[k]);
            }
        }
        Some(b)
    }

    pub fn extent(&self) -> Point3 {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }
}

/// Immutable set of 3D points in meters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point3>,
    bounds: Option<Aabb>,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite coordinates.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        Ok(Self::from_finite(points))
    }

    pub(crate) fn from_finite(points: Vec<Point3>) -> Self {
        let bounds = Aabb::of(&points);
        PointCloud { points, bounds }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> Option<Aabb> {
        self.bounds
    }

    /// Keeps every `n`-th point, starting with the first.
    pub fn every_nth(&self, n: usize) -> PointCloud {
        let n = n.max(1);
        PointCloud::from_finite(self.points.iter().step_by(n).copied().collect())
    }
}

/// Outcome of [`dilute_spatial`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilutionReport {
    pub d_min: f64,
    pub kept: usize,
    pub dropped: usize,
    pub input_count: usize,
}

/// Parses whitespace-delimited ASCII XYZ. Lines starting with `#` and blank lines
/// are skipped; fields after the third (colour, intensity) are ignored.
pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyz_str(&text).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

/// Reads XYZ and keeps only every `dilution_factor`-th data row.
pub fn read_xyz_rows(path: impl AsRef<Path>, dilution_factor: usize) -> Result<PointCloud> {
    Ok(read_xyz(path)?.every_nth(dilution_factor))
}

const PARSE_CHUNK: usize = 1 << 22;

/// Parses XYZ text; errors carry the 1-based line number.
pub fn parse_xyz_str(text: &str) -> std::result::Result<PointCloud, (usize, String)> {
    let bytes = text.as_bytes();
    let mut bounds = vec![0usize];
    let mut pos = PARSE_CHUNK;
    while pos < bytes.len() {
        match bytes[pos..].iter().position(|&b| b == b'\n') {
            Some(off) => {
                bounds.push(pos + off + 1);
                pos += off + 1 + PARSE_CHUNK;
            }
            None => break,
        }
    }
    bounds.push(bytes.len());
    bounds.dedup();

    let chunks: Vec<&str> = bounds.windows(2).map(|w| &text[w[0]..w[1]]).collect();
    let parsed: Vec<_> = chunks
        .par_iter()
        .map(|chunk| {
            let mut pts = Vec::with_capacity(chunk.len() / 24);
            let mut lines = 0usize;
            for (i, line) in chunk.lines().enumerate() {
                lines = i + 1;
                match parse_line(line) {
                    Ok(Some(p)) => pts.push(p),
                    Ok(None) => {}
                    Err(msg) => return Err((i, msg)),
                }
            }
            Ok((pts, lines))
        })
        .collect();

    let mut points = Vec::new();
    let mut line_base = 0usize;
    for r in parsed {
        match r {
            Ok((pts, lines)) => {
                points.extend(pts);
                line_base += lines;
            }
            Err((i, msg)) => return Err((line_base + i + 1, msg)),
        }
    }
    Ok(PointCloud::from_finite(points))
}

fn parse_line(line: &str) -> std::result::Result<Option<Point3>, String> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') {
        return Ok(None);
    }
    let mut fields = t.split_ascii_whitespace();
    let mut p = [0.0; 3];
    for (k, c) in p.iter_mut().enumerate() {
        let f = fields
            .next()
            .ok_or_else(|| format!("expected 3 coordinates, found {k}"))?;
        let v: f64 = f
            .parse()
            .map_err(|_| format!("field {} is not a number: {f:?}", k + 1))?;
        if !v.is_finite() {
            return Err(format!("non-finite coordinate {f:?}"));
        }
        *c = v;
    }
    Ok(Some(p))
}

/// Writes points as `x y z` lines with 6 decimals.
pub fn write_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, f);
    for p in cloud.points() {
        writeln!(w, "{:.6} {:.6} {:.6}", p[0], p[1], p[2]).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Serializes a cloud into the `.c2m` byte layout.
pub fn encode_cache(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(CACHE_HEADER_LEN + 24 * cloud.count());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.count() as u64).to_le_bytes());
    for p in cloud.points() {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_cache(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < CACHE_HEADER_LEN {
        return Err(Error::Cache("truncated header".into()));
    }
    if &bytes[..8] != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let payload = &bytes[CACHE_HEADER_LEN..];
    let expected = count
        .checked_mul(24)
        .ok_or_else(|| Error::Cache("count overflow".into()))?;
    if (payload.len() as u64) < expected {
        return Err(Error::Cache(format!(
            "truncated payload: {} of {expected} bytes",
            payload.len()
        )));
    }
    let points: Vec<Point3> = payload[..expected as usize]
        .chunks_exact(24)
        .map(|c| {
            [
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
                f64::from_le_bytes(c[16..24].try_into().unwrap()),
            ]
        })
        .collect();
    PointCloud::new(points).map_err(|e| Error::Cache(e.to_string()))
}

pub fn write_cache(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cache(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cache(&bytes)
}

/// Loads either a `.c2m` cache (detected by magic) or ASCII XYZ.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut head = [0u8; 8];
    {
        use std::io::Read;
        let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let n = f.read(&mut head).map_err(|e| Error::io(path, e))?;
        if n == 8 && &head == CACHE_MAGIC {
            return read_cache(path);
        }
    }
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("e57"))
    {
        return Err(Error::InvalidInput(
            "E57 is not supported; export the scan to ASCII XYZ first".into(),
        ));
    }
    read_xyz(path)
}

const MORTON_BITS: u32 = 21;

fn spread_bits(mut v: u64) -> u64 {
    v &= 0x1f_ffff;
    v = (v | v << 32) & 0x1f00000000ffff;
    v = (v | v << 16) & 0x1f0000ff0000ff;
    v = (v | v << 8) & 0x100f00f00f00f00f;
    v = (v | v << 4) & 0x10c30c30c30c30c3;
    v = (v | v << 2) & 0x1249249249249249;
    v
}

fn morton(c: [u64; 3]) -> u64 {
    spread_bits(c[0]) | spread_bits(c[1]) << 1 | spread_bits(c[2]) << 2
}

/// Greedy minimum-distance thinning.
///
/// Points are visited in Morton order of a uniform grid with cell size `d_min`
/// (file order within a cell). A point is kept when no already-kept point lies
/// closer than `d_min`. The output preserves the input order of kept points.
pub fn dilute_spatial(cloud: &PointCloud, d_min: f64) -> Result<(PointCloud, DilutionReport)> {
    if !(d_min >= 0.0) || !d_min.is_finite() {
        return Err(Error::InvalidInput(format!("d_min must be >= 0, got {d_min}")));
    }
    let Some(bounds) = cloud.bounds() else {
        return Err(Error::InvalidInput("cannot dilute an empty cloud".into()));
    };
    let n = cloud.count();
    if d_min == 0.0 {
        let report = DilutionReport {
            d_min,
            kept: n,
            dropped: 0,
            input_count: n,
        };
        return Ok((cloud.clone(), report));
    }

    let ext = bounds.extent();
    let limit = (1u64 << MORTON_BITS) as f64 - 2.0;
    if ext.iter().any(|&e| e / d_min >= limit) {
        return Err(Error::InvalidInput(format!(
            "d_min {d_min} too small for cloud extent {ext:?}"
        )));
    }
    let pts = cloud.points();
    let cell_of = |p: &Point3| -> [u64; 3] {
        [
            ((p[0] - bounds.min[0]) / d_min) as u64,
            ((p[1] - bounds.min[1]) / d_min) as u64,
            ((p[2] - bounds.min[2]) / d_min) as u64,
        ]
    };
    let cells: Vec<[u64; 3]> = pts.par_iter().map(cell_of).collect();
    let mut order: Vec<u32> = (0..n as u32).collect();
    let keys: Vec<u64> = cells.par_iter().map(|&c| morton(c)).collect();
    order.par_sort_by_key(|&i| (keys[i as usize], i));

    let d2 = d_min * d_min;
    let mut grid: HashMap<u64, Vec<u32>> = HashMap::new();
    let mut keep = vec![false; n];
    for &i in &order {
        let i = i as usize;
        let p = pts[i];
        let c = cells[i];
        let mut blocked = false;
        'search: for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for dz in -1i64..=1 {
                    let nc = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                    if nc.iter().any(|&v| v < 0) {
                        continue;
                    }
                    let key = morton([nc[0] as u64, nc[1] as u64, nc[2] as u64]);
                    if let Some(list) = grid.get(&key) {
                        for &j in list {
                            let q = pts[j as usize];
                            let dd = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                            if dd < d2 {
                                blocked = true;
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        if !blocked {
            keep[i] = true;
            grid.entry(keys[i]).or_default().push(i as u32);
        }
    }

    let out: Vec<Point3> = pts
        .iter()
        .zip(&keep)
        .filter_map(|(p, &k)| k.then_some(*p))
        .collect();
    let kept = out.len();
    let report = DilutionReport {
        d_min,
        kept,
        dropped: n - kept,
        input_count: n,
    };
    Ok((PointCloud::from_finite(out), report))
}
