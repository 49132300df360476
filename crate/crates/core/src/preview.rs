//! Small PNG renderings of stage results for the calibration service.

use std::io::Cursor;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geom::{Polygon2D, Vec2};
use crate::opening::WallOpenings;
use crate::raster::Histogram1D;
use crate::slab::{Slab, SurfaceCandidate};
use crate::wall::{StoreyWalls, Wall};
use crate::zone::StoreyZones;

const MAX_PX: u32 = 800;
const MARGIN: f64 = 10.0;
/// Points drawn per image at most; larger sets are strided.
const MAX_POINTS: usize = 200_000;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const GREY: Rgb<u8> = Rgb([150, 150, 150]);
const RED: Rgb<u8> = Rgb([220, 30, 30]);
const BLUE: Rgb<u8> = Rgb([30, 80, 220]);
const GREEN: Rgb<u8> = Rgb([20, 160, 60]);

/// Image with a uniform world-to-pixel map, y up.
pub struct Canvas {
    pub img: RgbImage,
    lo: Vec2,
    scale: f64,
}

impl Canvas {
    /// Canvas covering `lo..hi` with the longer side at `MAX_PX`.
    pub fn fit(lo: Vec2, hi: Vec2) -> Canvas {
        let ext = (hi.x - lo.x).max(hi.y - lo.y).max(1e-6);
        let scale = (MAX_PX as f64 - 2.0 * MARGIN) / ext;
        let w = ((hi.x - lo.x) * scale + 2.0 * MARGIN).ceil().max(1.0) as u32;
        let h = ((hi.y - lo.y) * scale + 2.0 * MARGIN).ceil().max(1.0) as u32;
        Canvas {
            img: RgbImage::from_pixel(w, h, WHITE),
            lo,
            scale,
        }
    }

    fn to_px(&self, p: Vec2) -> (f64, f64) {
        let x = (p.x - self.lo.x) * self.scale + MARGIN;
        let y = self.img.height() as f64 - ((p.y - self.lo.y) * self.scale + MARGIN);
        (x, y)
    }

    fn put(&mut self, x: f64, y: f64, c: Rgb<u8>) {
        if x >= 0.0 && y >= 0.0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    pub fn dot(&mut self, p: Vec2, c: Rgb<u8>) {
        let (x, y) = self.to_px(p);
        self.put(x, y, c);
    }

    pub fn line(&mut self, a: Vec2, b: Vec2, c: Rgb<u8>) {
        let (ax, ay) = self.to_px(a);
        let (bx, by) = self.to_px(b);
        let n = (bx - ax).abs().max((by - ay).abs()).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            self.put(ax + (bx - ax) * t, ay + (by - ay) * t, c);
        }
    }

    pub fn outline(&mut self, poly: &Polygon2D, c: Rgb<u8>) {
        for (a, b) in poly.edges() {
            self.line(a, b, c);
        }
    }

    pub fn fill(&mut self, poly: &Polygon2D, c: Rgb<u8>) {
        if poly.is_empty() {
            return;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &poly.vertices {
            let (x, y) = self.to_px(*v);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (w, h) = (self.img.width() as f64, self.img.height() as f64);
        for py in y0.max(0.0) as u32..=(y1.min(h - 1.0).max(0.0)) as u32 {
            for px in x0.max(0.0) as u32..=(x1.min(w - 1.0).max(0.0)) as u32 {
                let world = Vec2::new(
                    (px as f64 + 0.5 - MARGIN) / self.scale + self.lo.x,
                    (h - (py as f64 + 0.5) - MARGIN) / self.scale + self.lo.y,
                );
                if poly.contains(world) {
                    self.img.put_pixel(px, py, c);
                }
            }
        }
    }

    pub fn png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.img
            .write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))?;
        Ok(out.into_inner())
    }
}

fn bounds(points: impl Iterator<Item = Vec2>) -> Option<(Vec2, Vec2)> {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    lo.is_finite().then_some((lo, hi))
}

fn stride(n: usize) -> usize {
    n.div_ceil(MAX_POINTS).max(1)
}

/// Horizontal bars of the z histogram, bottom = lowest z; candidate bands red.
pub fn slab_histogram(hist: &Histogram1D, candidates: &[SurfaceCandidate]) -> Result<Vec<u8>> {
    let n = hist.counts.len().max(1);
    let peak = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut c = Canvas::fit(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
    for (i, &k) in hist.counts.iter().enumerate() {
        let z = hist.origin + (i as f64 + 0.5) * hist.bin_size;
        let hot = candidates.iter().any(|s| z >= s.z_low && z <= s.z_high);
        let y = (i as f64 + 0.5) / n as f64;
        c.line(Vec2::new(0.0, y), Vec2::new(k as f64 / peak, y), if hot { RED } else { GREY });
    }
    c.png()
}

/// Slab footprint outlines over the plan positions of `points`.
pub fn slab_footprints(points: &[[f64; 3]], slabs: &[Slab]) -> Result<Vec<u8>> {
    let plan = points.iter().map(|p| Vec2::new(p[0], p[1]));
    let outline = slabs.iter().flat_map(|s| s.footprint.vertices.iter().copied());
    let (lo, hi) = bounds(plan.clone().chain(outline)).unwrap_or((Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)));
    let mut c = Canvas::fit(lo, hi);
    for p in plan.step_by(stride(points.len())) {
        c.dot(p, GREY);
    }
    for s in slabs {
        c.outline(&s.footprint, RED);
    }
    c.png()
}

fn draw_wall(c: &mut Canvas, w: &Wall) {
    c.line(w.surfaces.0.segment.a, w.surfaces.0.segment.b, BLUE);
    c.line(w.surfaces.1.segment.a, w.surfaces.1.segment.b, BLUE);
    c.line(w.axis_start, w.axis_end, RED);
}

/// Slice points, raw contour segments, faces and axes of one storey.
pub fn storey_walls(sw: &StoreyWalls) -> Result<Vec<u8>> {
    let (lo, hi) = bounds(sw.slice.iter().copied()).unwrap_or((Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)));
    let mut c = Canvas::fit(lo, hi);
    for p in sw.slice.iter().step_by(stride(sw.slice.len())) {
        c.dot(*p, GREY);
    }
    for s in &sw.detection.raw_segments {
        c.line(s.a, s.b, GREEN);
    }
    for w in &sw.walls {
        draw_wall(&mut c, w);
    }
    c.png()
}

/// Wall elevation: points in (u, v), accepted openings red, rejected
/// candidates green.
pub fn wall_openings(local: &[(f64, f64)], wall: &Wall, r: &WallOpenings) -> Result<Vec<u8>> {
    let mut c = Canvas::fit(Vec2::new(0.0, 0.0), Vec2::new(wall.length().max(0.1), wall.height.max(0.1)));
    for &(u, v) in local.iter().step_by(stride(local.len())) {
        c.dot(Vec2::new(u, v), GREY);
    }
    for &(a, b) in &r.candidates {
        c.line(Vec2::new(a, 0.0), Vec2::new(b, 0.0), GREEN);
    }
    for o in &r.openings {
        let rect = Polygon2D::rect(
            Vec2::new(o.x_offset, o.sill),
            Vec2::new(o.x_offset + o.width, o.sill + o.height),
        );
        c.outline(&rect, RED);
    }
    c.png()
}

/// Zones filled in alternating colors with the storey's walls on top.
pub fn storey_zones(z: &StoreyZones, walls: &[Wall]) -> Result<Vec<u8>> {
    let pts = walls
        .iter()
        .flat_map(|w| [w.surfaces.0.segment.a, w.surfaces.0.segment.b, w.surfaces.1.segment.a, w.surfaces.1.segment.b]);
    let (lo, hi) = bounds(pts.chain(z.zones.iter().flat_map(|z| z.boundary.vertices.iter().copied())))
        .unwrap_or((Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)));
    let mut c = Canvas::fit(lo, hi);
    let palette = [Rgb([255, 220, 150]), Rgb([170, 220, 255]), Rgb([200, 240, 180]), Rgb([240, 190, 230])];
    for (i, zone) in z.zones.iter().enumerate() {
        c.fill(&zone.boundary, palette[i % palette.len()]);
    }
    for w in walls {
        draw_wall(&mut c, w);
    }
    c.png()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode(bytes: &[u8]) -> RgbImage {
        image::load_from_memory(bytes).unwrap().to_rgb8()
    }

    #[test]
    fn canvas_maps_and_fills() {
        let mut c = Canvas::fit(Vec2::new(0.0, 0.0), Vec2::new(2.0, 1.0));
        assert_eq!(c.img.dimensions(), (800, 410));
        let sq = Polygon2D::rect(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        c.fill(&sq, RED);
        c.line(Vec2::new(0.0, 0.0), Vec2::new(2.0, 1.0), BLUE);
        let img = decode(&c.png().unwrap());
        // left half red below the diagonal's blue, right half white
        assert_eq!(img.get_pixel(100, 300).0, RED.0);
        assert_eq!(img.get_pixel(700, 300).0, WHITE.0);
        assert_eq!(img.get_pixel(10, 400).0, BLUE.0);
        assert_eq!(img.get_pixel(790, 10).0, BLUE.0);
    }

    #[test]
    fn histogram_preview_marks_bands() {
        let hist = Histogram1D {
            origin: 0.0,
            bin_size: 0.5,
            counts: vec![10, 1, 1, 10],
        };
        let cand = vec![SurfaceCandidate {
            z_low: 0.0,
            z_high: 0.5,
            point_count: 10,
            z: 0.25,
        }];
        let img = decode(&slab_histogram(&hist, &cand).unwrap());
        let reds = img.pixels().filter(|p| p.0 == RED.0).count();
        let greys = img.pixels().filter(|p| p.0 == GREY.0).count();
        assert!(reds > 700 && greys > 700, "{reds} {greys}");
    }
}
