//! Horizontal surfaces, slabs and storeys.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud_io::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::geom::{Polygon2D, Polyline2D, Vec2};
use crate::raster::{
    binarize, dilate, erode, histogram_1d, histogram_2d_padded, mask::radius_cells, simplify,
    trace_contours, Histogram1D,
};

/// Contiguous z band of dense histogram bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCandidate {
    pub z_low: f64,
    pub z_high: f64,
    pub point_count: usize,
    /// Mean z of the points in the band.
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlabSource {
    Paired,
    ManualBottom,
    ManualTop,
}

/// Vertical extent of a slab before its footprint is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabExtent {
    pub z_bottom: f64,
    pub thickness: f64,
    pub source: SlabSource,
    /// Indices into the candidate list whose points shape the footprint.
    pub candidates: Vec<usize>,
}

impl SlabExtent {
    pub fn z_top(&self) -> f64 {
        self.z_bottom + self.thickness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub footprint: Polygon2D,
    pub z_bottom: f64,
    pub thickness: f64,
    pub source: SlabSource,
}

impl Slab {
    pub fn z_top(&self) -> f64 {
        self.z_bottom + self.thickness
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Storey {
    pub index: usize,
    pub z_floor_top: f64,
    pub z_ceiling_bottom: f64,
    pub points: PointCloud,
    pub height: f64,
}

/// z histogram of the cloud with bin `z_step`.
pub fn z_histogram(cloud: &PointCloud, z_step: f64) -> Result<Histogram1D> {
    let z: Vec<f64> = cloud.points().iter().map(|p| p[2]).collect();
    histogram_1d(&z, z_step)
}

/// Runs of bins holding at least `ratio` times the fullest bin.
pub fn find_horizontal_surfaces(
    cloud: &PointCloud,
    z_step: f64,
    ratio: f64,
) -> Result<Vec<SurfaceCandidate>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidInput(format!("ratio must be within (0, 1], got {ratio}")));
    }
    let hist = z_histogram(cloud, z_step)?;
    if hist.is_empty() {
        return Ok(Vec::new());
    }
    let mut zsum = vec![0.0f64; hist.len()];
    for p in cloud.points() {
        if let Some(b) = hist.bin_of(p[2]) {
            zsum[b] += p[2];
        }
    }
    let level = ratio * hist.max_count() as f64;
    let c = &hist.counts;
    let mut runs = Vec::new();
    let mut i = 0;
    while i < c.len() {
        if (c[i] as f64) < level {
            i += 1;
            continue;
        }
        let start = i;
        while i < c.len() && c[i] as f64 >= level {
            i += 1;
        }
        split_run(c, start, i, &mut runs);
    }
    Ok(runs
        .into_iter()
        .map(|(s, e)| {
            let n: u64 = c[s..e].iter().sum();
            let z = zsum[s..e].iter().sum::<f64>() / n as f64;
            SurfaceCandidate {
                z_low: hist.bin_start(s),
                z_high: hist.bin_start(e),
                point_count: n as usize,
                z,
            }
        })
        .collect())
}

// Runs longer than three bins are cut at clear local minima so that the floor
// and ceiling faces of a thin slab stay apart.
fn split_run(c: &[u64], start: usize, end: usize, out: &mut Vec<(usize, usize)>) {
    if end - start <= 3 {
        out.push((start, end));
        return;
    }
    let mut s = start;
    for m in start + 1..end - 1 {
        if !(c[m] < c[m - 1] && c[m] <= c[m + 1]) {
            continue;
        }
        let left = c[s..m].iter().copied().max().unwrap_or(0);
        let right = c[m + 1..end].iter().copied().max().unwrap_or(0);
        if (c[m] as f64) * 1.25 <= left.min(right) as f64 {
            if m > s {
                out.push((s, m));
            }
            s = m + 1;
        }
    }
    if end > s {
        out.push((s, end));
    }
}

/// First candidate gets `bfs_thickness` below it, the rest pair up bottom/top,
/// and an odd one left at the end gets `tfs_thickness` above it.
pub fn pair_surfaces(
    cands: &[SurfaceCandidate],
    bfs_thickness: f64,
    tfs_thickness: f64,
) -> Result<Vec<SlabExtent>> {
    let Some(first) = cands.first() else {
        return Err(Error::NoHorizontalSurfaces);
    };
    let mut out = vec![SlabExtent {
        z_bottom: first.z - bfs_thickness,
        thickness: bfs_thickness,
        source: SlabSource::ManualBottom,
        candidates: vec![0],
    }];
    let mut i = 1;
    while i + 1 < cands.len() {
        let (lo, hi) = (&cands[i], &cands[i + 1]);
        let t = hi.z - lo.z;
        if t > 0.0 {
            out.push(SlabExtent {
                z_bottom: lo.z,
                thickness: t,
                source: SlabSource::Paired,
                candidates: vec![i, i + 1],
            });
        } else {
            warn!("surfaces at {:.3} and {:.3} give no thickness; using tfs_thickness", lo.z, hi.z);
            out.push(SlabExtent {
                z_bottom: lo.z,
                thickness: tfs_thickness,
                source: SlabSource::ManualTop,
                candidates: vec![i, i + 1],
            });
        }
        i += 2;
    }
    if i < cands.len() {
        out.push(SlabExtent {
            z_bottom: cands[i].z,
            thickness: tfs_thickness,
            source: SlabSource::ManualTop,
            candidates: vec![i],
        });
    }
    Ok(out)
}

/// Plan outline of a point set: occupancy raster, closing, largest border,
/// then Douglas-Peucker.
pub fn footprint_from_points(
    xy: &[Vec2],
    cell_size: f64,
    dilation_m: f64,
    erosion_m: f64,
    smoothing_eps: f64,
) -> Result<Polygon2D> {
    if xy.len() < 3 {
        return Err(Error::InvalidInput("footprint needs at least 3 points".into()));
    }
    if dilation_m < 0.0 || erosion_m < 0.0 {
        return Err(Error::InvalidInput("morphology radii must be non-negative".into()));
    }
    let pad = radius_cells(dilation_m, cell_size) + 2;
    let grid = histogram_2d_padded(xy, cell_size, pad)?;
    let mask = binarize(&grid, 0.0)?;
    let mask = erode(&dilate(&mask, dilation_m), erosion_m);
    let contours = trace_contours(&mask);
    let Some(best) = contours.first() else {
        return Err(Error::FootprintCollapsed);
    };
    let ring = best.to_world(&mask);
    if ring.vertices.len() < 3 {
        return Err(Error::FootprintCollapsed);
    }
    Ok(simplified_polygon(&ring, smoothing_eps))
}

fn simplified_polygon(ring: &Polyline2D, eps: f64) -> Polygon2D {
    let mut e = eps;
    for _ in 0..8 {
        let p = Polygon2D::new(simplify(ring, e).vertices);
        if p.len() >= 3 && p.is_simple() {
            return p.to_ccw();
        }
        e *= 0.5;
    }
    Polygon2D::new(ring.vertices.clone()).to_ccw()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabParams {
    pub z_step: f64,
    pub ratio: f64,
    pub bfs_thickness: f64,
    pub tfs_thickness: f64,
    pub cell_size: f64,
    pub dilation_m: f64,
    pub erosion_m: f64,
    pub smoothing_eps: f64,
}

/// Complete slabs with footprints, bottom-up.
pub fn detect_slabs(cloud: &PointCloud, p: &SlabParams) -> Result<(Vec<SurfaceCandidate>, Vec<Slab>)> {
    let cands = find_horizontal_surfaces(cloud, p.z_step, p.ratio)?;
    let extents = pair_surfaces(&cands, p.bfs_thickness, p.tfs_thickness)?;
    let slabs = extents
        .par_iter()
        .map(|ext| {
            let xy: Vec<Vec2> = cloud
                .points()
                .iter()
                .filter(|p| {
                    ext.candidates.iter().any(|&k| {
                        let c = &cands[k];
                        p[2] >= c.z_low && p[2] < c.z_high
                    })
                })
                .map(|p| Vec2::new(p[0], p[1]))
                .collect();
            let footprint =
                footprint_from_points(&xy, p.cell_size, p.dilation_m, p.erosion_m, p.smoothing_eps)?;
            Ok(Slab {
                footprint,
                z_bottom: ext.z_bottom,
                thickness: ext.thickness,
                source: ext.source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((cands, slabs))
}

/// Points strictly between consecutive slabs, shrunk by `clearance` at both ends.
pub fn split_to_storeys(cloud: &PointCloud, slabs: &[Slab], clearance: f64) -> Result<Vec<Storey>> {
    if slabs.len() < 2 {
        return Err(Error::InvalidInput("storey split needs at least two slabs".into()));
    }
    if clearance < 0.0 {
        return Err(Error::InvalidInput("clearance must be non-negative".into()));
    }
    for (i, w) in slabs.windows(2).enumerate() {
        if w[0].z_top() > w[1].z_bottom {
            return Err(Error::OverlappingSlabs {
                lower: i,
                upper: i + 1,
                lower_top: w[0].z_top(),
                upper_bottom: w[1].z_bottom,
            });
        }
    }
    Ok(slabs
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (floor, ceil) = (w[0].z_top(), w[1].z_bottom);
            let (lo, hi) = (floor + clearance, ceil - clearance);
            let pts: Vec<Point3> = cloud
                .points()
                .iter()
                .filter(|p| p[2] > lo && p[2] < hi)
                .copied()
                .collect();
            Storey {
                index: i,
                z_floor_top: floor,
                z_ceiling_bottom: ceil,
                points: PointCloud::from_finite(pts),
                height: ceil - floor,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cand(z: f64) -> SurfaceCandidate {
        SurfaceCandidate {
            z_low: z - 0.025,
            z_high: z + 0.025,
            point_count: 1,
            z,
        }
    }

    fn slab(z_bottom: f64, thickness: f64) -> Slab {
        Slab {
            footprint: Polygon2D::rect(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)),
            z_bottom,
            thickness,
            source: SlabSource::Paired,
        }
    }

    #[test]
    fn two_dense_levels_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        for _ in 0..1000 {
            pts.push([rng.random(), rng.random(), rng.random_range(0.0..0.01)]);
            pts.push([rng.random(), rng.random(), rng.random_range(3.0..3.01)]);
        }
        for _ in 0..200 {
            pts.push([rng.random(), rng.random(), rng.random_range(0.0..3.0)]);
        }
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let c = find_horizontal_surfaces(&cloud, 0.05, 0.5).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c[0].z.abs() < 0.05 && (c[1].z - 3.0).abs() < 0.05);
        // oracle: bins at or above half of the fullest bin
        let h = z_histogram(&cloud, 0.05).unwrap();
        let max = h.max_count();
        let dense: Vec<usize> = (0..h.len()).filter(|&i| h.counts[i] * 2 >= max).collect();
        assert_eq!(dense.len(), 2);
        assert_eq!(c[0].point_count as u64, h.counts[dense[0]]);
    }

    #[test]
    fn ratio_one_keeps_argmax() {
        let pts: Vec<Point3> = (0..100).map(|i| [0.0, 0.0, i as f64 * 0.01]).collect();
        let mut pts2 = pts.clone();
        pts2.push([0.0, 0.0, 0.555]);
        let cloud = PointCloud::new(pts2).unwrap();
        let c = find_horizontal_surfaces(&cloud, 0.05, 1.0).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].z_low <= 0.555 && 0.555 < c[0].z_high);
        assert!(find_horizontal_surfaces(&PointCloud::new(vec![]).unwrap(), 0.05, 0.5)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn pairing_rules() {
        let one = pair_surfaces(&[cand(0.0)], 0.3, 0.3).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].source, SlabSource::ManualBottom);
        assert!((one[0].z_bottom + 0.3).abs() < 1e-12 && one[0].thickness == 0.3);

        let three = pair_surfaces(&[cand(0.0), cand(2.7), cand(3.0)], 0.3, 0.25).unwrap();
        assert_eq!(three.len(), 2);
        assert_eq!(three[1].source, SlabSource::Paired);
        assert!((three[1].z_bottom - 2.7).abs() < 1e-12);
        assert!((three[1].thickness - 0.3).abs() < 1e-12);

        let four = pair_surfaces(&[cand(0.0), cand(2.7), cand(3.0), cand(5.9)], 0.3, 0.25).unwrap();
        let srcs: Vec<_> = four.iter().map(|s| s.source).collect();
        assert_eq!(srcs, vec![SlabSource::ManualBottom, SlabSource::Paired, SlabSource::ManualTop]);
        assert_eq!(four[2].thickness, 0.25);
        assert!((four[2].z_bottom - 5.9).abs() < 1e-12);

        assert!(matches!(pair_surfaces(&[], 0.3, 0.3), Err(Error::NoHorizontalSurfaces)));
    }

    #[test]
    fn pairing_oracle_by_parity() {
        for n in 1..9 {
            let cs: Vec<_> = (0..n).map(|i| cand(i as f64)).collect();
            let s = pair_surfaces(&cs, 0.3, 0.2).unwrap();
            let rest = n - 1;
            assert_eq!(s.len(), 1 + rest / 2 + rest % 2);
            assert_eq!(s.iter().filter(|x| x.source == SlabSource::ManualTop).count(), rest % 2);
            for w in s.windows(2) {
                assert!(w[0].z_top() <= w[1].z_bottom + 1e-12);
            }
        }
    }

    #[test]
    fn dense_rectangle_footprint() {
        let cell = 0.02;
        let mut xy = Vec::new();
        for i in 0..=500 {
            for j in 0..=400 {
                xy.push(Vec2::new(i as f64 * cell, j as f64 * cell));
            }
        }
        let p = footprint_from_points(&xy, cell, 1.0, 1.0, 0.0005).unwrap();
        assert_eq!(p.len(), 4);
        assert!((p.area() - 80.0).abs() / 80.0 < 0.02);
    }

    #[test]
    fn l_shape_footprint() {
        let cell = 0.02;
        let mut xy = Vec::new();
        for i in 0..=300 {
            for j in 0..=300 {
                let (x, y) = (i as f64 * cell, j as f64 * cell);
                if x <= 3.0 && (y <= 2.0 || x <= 1.5) {
                    xy.push(Vec2::new(x, y));
                }
            }
        }
        let p = footprint_from_points(&xy, cell, 0.5, 0.5, 0.0005).unwrap();
        assert_eq!(p.len(), 6, "{:?}", p.vertices);
        let analytic = 3.0 * 2.0 + 1.5 * 4.0;
        assert!((p.area() - analytic).abs() / analytic < 0.02);
    }

    #[test]
    fn footprint_collapse_reported() {
        let xy = vec![Vec2::new(0.0, 0.0), Vec2::new(0.01, 0.0), Vec2::new(0.0, 0.01)];
        let e = footprint_from_points(&xy, 0.01, 0.0, 1.0, 0.0005).unwrap_err();
        assert_eq!(e.to_string(), "footprint collapsed; reduce erosion");
    }

    #[test]
    fn storey_boundaries() {
        let slabs = [slab(-0.3, 0.3), slab(2.7, 0.3)];
        let cloud = PointCloud::new(vec![[0.0, 0.0, 1.5], [0.0, 0.0, 2.65], [0.0, 0.0, 0.05]]).unwrap();
        let s = split_to_storeys(&cloud, &slabs, 0.1).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].points.points(), &[[0.0, 0.0, 1.5]]);
        assert!((s[0].height - 2.7).abs() < 1e-12);
        let s0 = split_to_storeys(&cloud, &slabs, 0.0).unwrap();
        assert_eq!(s0[0].points.count(), 3);
        assert_eq!((s0[0].z_floor_top, s0[0].z_ceiling_bottom), (0.0, 2.7));
        let bad = [slab(0.0, 1.0), slab(0.5, 0.3)];
        assert!(matches!(
            split_to_storeys(&cloud, &bad, 0.1),
            Err(Error::OverlappingSlabs { .. })
        ));
    }

    #[test]
    fn storey_counts_match_filter_and_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Point3> = (0..5000).map(|_| [0.0, 0.0, rng.random_range(-0.5..9.5)]).collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let slabs = [slab(-0.3, 0.3), slab(2.7, 0.3), slab(5.7, 0.3), slab(8.7, 0.3)];
        let st = split_to_storeys(&cloud, &slabs, 0.1).unwrap();
        assert_eq!(st.len(), 3);
        let mut total = 0;
        for (i, s) in st.iter().enumerate() {
            let lo = slabs[i].z_top() + 0.1;
            let hi = slabs[i + 1].z_bottom - 0.1;
            let n = pts.iter().filter(|p| p[2] > lo && p[2] < hi).count();
            assert_eq!(s.points.count(), n);
            total += n;
        }
        let excluded = pts
            .iter()
            .filter(|p| !st.iter().any(|s| p[2] > s.z_floor_top + 0.1 && p[2] < s.z_ceiling_bottom - 0.1))
            .count();
        assert_eq!(total + excluded, pts.len());
    }
}
