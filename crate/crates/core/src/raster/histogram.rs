use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Fixed-width 1D histogram. Value `v` falls in bin `floor((v - origin) / bin_size)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub origin: f64,
    pub bin_size: f64,
    pub counts: Vec<u64>,
}

impl Histogram1D {
    /// Empty histogram over `[origin, origin + bins * bin_size)`.
    pub fn with_range(origin: f64, bin_size: f64, bins: usize) -> Result<Self> {
        check_bin(bin_size)?;
        Ok(Histogram1D {
            origin,
            bin_size,
            counts: vec![0; bins],
        })
    }

    /// Adds values that fall inside the range; values equal to the upper edge go to the last bin.
    pub fn add_clamped(&mut self, values: impl IntoIterator<Item = f64>) {
        let n = self.counts.len();
        if n == 0 {
            return;
        }
        let end = self.origin + n as f64 * self.bin_size;
        for v in values {
            if v < self.origin || v > end {
                continue;
            }
            let b = (((v - self.origin) / self.bin_size) as usize).min(n - 1);
            self.counts[b] += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.bin_size
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.origin + (i as f64 + 0.5) * self.bin_size
    }

    pub fn end(&self) -> f64 {
        self.bin_start(self.counts.len())
    }

    pub fn bin_of(&self, v: f64) -> Option<usize> {
        if v < self.origin {
            return None;
        }
        let b = ((v - self.origin) / self.bin_size) as usize;
        (b < self.counts.len()).then_some(b)
    }
}

fn check_bin(bin_size: f64) -> Result<()> {
    if !(bin_size > 0.0 && bin_size.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "bin size must be positive, got {bin_size}"
        )));
    }
    Ok(())
}

/// Bins `values` with an origin snapped down to a multiple of `bin_size`.
pub fn histogram_1d(values: &[f64], bin_size: f64) -> Result<Histogram1D> {
    check_bin(bin_size)?;
    let Some(min) = values.iter().copied().reduce(f64::min) else {
        return Ok(Histogram1D {
            origin: 0.0,
            bin_size,
            counts: Vec::new(),
        });
    };
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let origin = (min / bin_size).floor() * bin_size;
    let bin = |v: f64| (((v - origin) / bin_size).floor().max(0.0)) as usize;
    let mut counts = vec![0u64; bin(max) + 1];
    for &v in values {
        counts[bin(v)] += 1;
    }
    Ok(Histogram1D {
        origin,
        bin_size,
        counts,
    })
}

/// Row-major 2D point-count raster; row index grows with y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub origin: Vec2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}

impl DensityGrid {
    pub fn new(origin: Vec2, cell_size: f64, width: usize, height: usize) -> Self {
        DensityGrid {
            origin,
            cell_size,
            width,
            height,
            counts: vec![0; width * height],
        }
    }

    /// Cell containing `p`, or `None` outside the lattice.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (cx, cy) = (fx as usize, fy as usize);
        (cx < self.width && cy < self.height).then_some((cx, cy))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        lattice_center(self.origin, self.cell_size, col as f64, row as f64)
    }

    pub fn get(&self, col: usize, row: usize) -> u32 {
        self.counts[row * self.width + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Adds points; returns how many fell outside.
    pub fn accumulate(&mut self, points: &[Vec2]) -> usize {
        let mut outside = 0;
        for &p in points {
            match self.cell_of(p) {
                Some((c, r)) => self.counts[r * self.width + c] += 1,
                None => outside += 1,
            }
        }
        outside
    }
}

pub(crate) fn lattice_center(origin: Vec2, cell: f64, col: f64, row: f64) -> Vec2 {
    Vec2::new(origin.x + (col + 0.5) * cell, origin.y + (row + 0.5) * cell)
}

/// Density grid covering `points` with `pad` empty cells on every side.
pub fn histogram_2d_padded(points: &[Vec2], cell_size: f64, pad: usize) -> Result<DensityGrid> {
    check_bin(cell_size)?;
    if points.is_empty() {
        return Ok(DensityGrid::new(Vec2::default(), cell_size, 0, 0));
    }
    let (mut min, mut max) = (points[0], points[0]);
    for p in points {
        min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
        max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
    }
    let padm = pad as f64 * cell_size;
    let origin = Vec2::new(min.x - padm, min.y - padm);
    let w = ((max.x - origin.x) / cell_size).floor() as usize + 1 + pad;
    let h = ((max.y - origin.y) / cell_size).floor() as usize + 1 + pad;
    let mut g = DensityGrid::new(origin, cell_size, w, h);
    let outside = g.accumulate(points);
    debug_assert_eq!(outside, 0);
    Ok(g)
}

/// Density grid over the tight bounds of `points`; cells are half-open.
pub fn histogram_2d(points: &[Vec2], cell_size: f64) -> Result<DensityGrid> {
    histogram_2d_padded(points, cell_size, 0)
}
