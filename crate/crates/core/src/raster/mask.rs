use serde::{Deserialize, Serialize};

use super::histogram::{lattice_center, DensityGrid};
use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Boolean raster on the same lattice as the density grid it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMask {
    pub origin: Vec2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(origin: Vec2, cell_size: f64, width: usize, height: usize) -> Self {
        BinaryMask {
            origin,
            cell_size,
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = BinaryMask::empty(Vec2::default(), 1.0, width, height);
        for r in 0..height {
            for c in 0..width {
                m.bits[r * width + c] = f(c, r);
            }
        }
        m
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Out-of-lattice cells read as `outside`.
    pub fn get_or(&self, col: isize, row: isize, outside: bool) -> bool {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return outside;
        }
        self.get(col as usize, row as usize)
    }

    pub fn set(&mut self, col: usize, row: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            bits: self.bits.iter().map(|b| !b).collect(),
            ..self.clone()
        }
    }

    pub fn cell_center(&self, col: f64, row: f64) -> Vec2 {
        lattice_center(self.origin, self.cell_size, col, row)
    }

    pub fn same_lattice(&self, grid: &DensityGrid) -> bool {
        self.origin == grid.origin
            && self.cell_size == grid.cell_size
            && self.width == grid.width
            && self.height == grid.height
    }
}

/// Sets cells whose count exceeds `threshold * max(count)`.
pub fn binarize(grid: &DensityGrid, threshold: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!(
            "threshold must be within [0, 1], got {threshold}"
        )));
    }
    let max = grid.max_count();
    let level = threshold * max as f64;
    let bits = grid
        .counts
        .iter()
        .map(|&c| max > 0 && c as f64 > level)
        .collect();
    Ok(BinaryMask {
        origin: grid.origin,
        cell_size: grid.cell_size,
        width: grid.width,
        height: grid.height,
        bits,
    })
}

/// Square structuring-element half-width in cells for a metric radius.
pub fn radius_cells(radius: f64, cell_size: f64) -> usize {
    (radius / cell_size).round().max(0.0) as usize
}

/// Dilates by a `(2h+1)`-square; cells outside the lattice are background.
pub fn dilate(mask: &BinaryMask, radius: f64) -> BinaryMask {
    dilate_cells(mask, radius_cells(radius, mask.cell_size))
}

/// Erodes by a `(2h+1)`-square; cells outside the lattice are foreground, which
/// makes erosion the exact dual of [`dilate`].
pub fn erode(mask: &BinaryMask, radius: f64) -> BinaryMask {
    erode_cells(mask, radius_cells(radius, mask.cell_size))
}

/// Running-window max filter: separable rows then columns.
pub fn dilate_cells(mask: &BinaryMask, h: usize) -> BinaryMask {
    if h == 0 || mask.bits.is_empty() {
        return mask.clone();
    }
    let (w, ht) = (mask.width, mask.height);
    let mut tmp = vec![false; w * ht];
    let mut line = Vec::with_capacity(w.max(ht));
    for r in 0..ht {
        line.clear();
        line.extend_from_slice(&mask.bits[r * w..(r + 1) * w]);
        window_any(&line, h, &mut tmp[r * w..(r + 1) * w]);
    }
    let mut out = vec![false; w * ht];
    let mut col_out = vec![false; ht];
    for c in 0..w {
        line.clear();
        line.extend((0..ht).map(|r| tmp[r * w + c]));
        window_any(&line, h, &mut col_out);
        for r in 0..ht {
            out[r * w + c] = col_out[r];
        }
    }
    BinaryMask {
        bits: out,
        ..mask.clone()
    }
}

pub fn erode_cells(mask: &BinaryMask, h: usize) -> BinaryMask {
    if h == 0 {
        return mask.clone();
    }
    dilate_cells(&mask.complement(), h).complement()
}

/// Morphological closing with a `(2h+1)`-square.
pub fn close_cells(mask: &BinaryMask, h: usize) -> BinaryMask {
    erode_cells(&dilate_cells(mask, h), h)
}

fn window_any(src: &[bool], h: usize, dst: &mut [bool]) {
    let n = src.len();
    let mut prefix = vec![0u32; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + src[i] as u32;
    }
    for (i, d) in dst.iter_mut().enumerate().take(n) {
        let lo = i.saturating_sub(h);
        let hi = (i + h + 1).min(n);
        *d = prefix[hi] > prefix[lo];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_dilate(m: &BinaryMask, h: isize) -> BinaryMask {
        BinaryMask::from_fn(m.width, m.height, |c, r| {
            (-h..=h).any(|dy| {
                (-h..=h).any(|dx| m.get_or(c as isize + dx, r as isize + dy, false))
            })
        })
    }

    fn brute_erode(m: &BinaryMask, h: isize) -> BinaryMask {
        BinaryMask::from_fn(m.width, m.height, |c, r| {
            (-h..=h).all(|dy| (-h..=h).all(|dx| m.get_or(c as isize + dx, r as isize + dy, true)))
        })
    }

    #[test]
    fn binarize_threshold_is_strict() {
        let mut g = DensityGrid::new(Vec2::default(), 1.0, 2, 1);
        g.counts = vec![0, 10];
        let m = binarize(&g, 0.01).unwrap();
        assert_eq!(m.bits, vec![false, true]);
        assert!(m.same_lattice(&g));
        assert_eq!(binarize(&g, 1.0).unwrap().count_set(), 0);
        let zero = DensityGrid::new(Vec2::default(), 1.0, 3, 3);
        assert_eq!(binarize(&zero, 0.0).unwrap().count_set(), 0);
        assert!(binarize(&g, 1.5).is_err());
    }

    #[test]
    fn binarize_matches_elementwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = DensityGrid::new(Vec2::default(), 0.5, 17, 9);
        for c in g.counts.iter_mut() {
            *c = rng.random_range(0..50);
        }
        let max = *g.counts.iter().max().unwrap() as f64;
        for t in [0.0, 0.1, 0.33, 0.9] {
            let m = binarize(&g, t).unwrap();
            for (b, &c) in m.bits.iter().zip(&g.counts) {
                assert_eq!(*b, c as f64 > t * max);
            }
        }
    }

    #[test]
    fn single_cell_dilates_to_block() {
        let mut m = BinaryMask::empty(Vec2::default(), 0.1, 7, 7);
        m.set(3, 3, true);
        let d = dilate(&m, 0.1);
        assert_eq!(d.count_set(), 9);
        for r in 2..=4 {
            for c in 2..=4 {
                assert!(d.get(c, r));
            }
        }
        assert_eq!(dilate(&m, 0.04), m);
    }

    #[test]
    fn closing_restores_rectangle() {
        let m = BinaryMask::from_fn(30, 30, |c, r| (10..20).contains(&c) && (10..20).contains(&r));
        for h in 1..5 {
            assert_eq!(close_cells(&m, h), m);
        }
    }

    #[test]
    fn morphology_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..40 {
            let w = rng.random_range(1..25);
            let ht = rng.random_range(1..25);
            let p: f64 = rng.random_range(0.05..0.7);
            let bits: Vec<bool> = (0..w * ht).map(|_| rng.random_bool(p)).collect();
            let m = BinaryMask {
                bits,
                ..BinaryMask::empty(Vec2::default(), 1.0, w, ht)
            };
            let h = rng.random_range(0..4);
            assert_eq!(dilate_cells(&m, h), brute_dilate(&m, h as isize));
            assert_eq!(erode_cells(&m, h), brute_erode(&m, h as isize));
        }
    }

    #[test]
    fn erosion_is_dual_of_dilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let bits: Vec<bool> = (0..400).map(|_| rng.random_bool(0.4)).collect();
        let m = BinaryMask {
            bits,
            ..BinaryMask::empty(Vec2::default(), 1.0, 20, 20)
        };
        assert_eq!(erode_cells(&m, 2), dilate_cells(&m.complement(), 2).complement());
    }
}
