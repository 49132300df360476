//! Heat-map outputs for per-point distances.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cloud_io::Point3;
use crate::error::{Error, Result};

/// Distance mapped to the top of the color ramp.
pub const HEATMAP_MAX: f64 = 0.05;

/// `x,y,z,distance` rows with a header line.
pub fn write_deviation_csv(points: &[Point3], distances: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if points.len() != distances.len() {
        return Err(Error::InvalidInput(format!(
            "{} points but {} distances",
            points.len(),
            distances.len()
        )));
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "x,y,z,distance").map_err(io)?;
    for (p, d) in points.iter().zip(distances) {
        writeln!(w, "{:.6},{:.6},{:.6},{:.6}", p[0], p[1], p[2], d).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Blue through green and yellow to red over `[0, HEATMAP_MAX]`.
pub fn ramp(d: f64) -> [u8; 3] {
    let t = (d / HEATMAP_MAX).clamp(0.0, 1.0);
    let stops: [(f64, [f64; 3]); 4] = [
        (0.0, [0.0, 0.0, 255.0]),
        (1.0 / 3.0, [0.0, 200.0, 0.0]),
        (2.0 / 3.0, [255.0, 230.0, 0.0]),
        (1.0, [255.0, 0.0, 0.0]),
    ];
    let k = stops.iter().rposition(|s| s.0 <= t).unwrap_or(0).min(2);
    let (t0, c0) = stops[k];
    let (t1, c1) = stops[k + 1];
    let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    let mix = |i: usize| (c0[i] + (c1[i] - c0[i]) * u).round() as u8;
    [mix(0), mix(1), mix(2)]
}

/// Plan-view RGB image; each pixel shows the largest distance of the points
/// above it. Empty pixels are white.
pub fn heatmap_image(points: &[Point3], distances: &[f64], pixel: f64) -> Result<image::RgbImage> {
    if points.is_empty() || points.len() != distances.len() || pixel <= 0.0 {
        return Err(Error::InvalidInput("heat map needs points, matching distances and a positive pixel size".into()));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let w = ((x1 - x0) / pixel).floor() as u64 + 1;
    let h = ((y1 - y0) / pixel).floor() as u64 + 1;
    if w * h > 64_000_000 {
        return Err(Error::InvalidInput(format!("heat map of {w}x{h} pixels is too large")));
    }
    let (w, h) = (w as u32, h as u32);
    let mut worst = vec![f64::NAN; (w * h) as usize];
    for (p, &d) in points.iter().zip(distances) {
        let i = ((p[0] - x0) / pixel) as u32;
        let j = h - 1 - ((p[1] - y0) / pixel) as u32;
        let c = &mut worst[(j * w + i) as usize];
        if c.is_nan() || d > *c {
            *c = d;
        }
    }
    Ok(image::RgbImage::from_fn(w, h, |i, j| {
        let d = worst[(j * w + i) as usize];
        image::Rgb(if d.is_nan() { [255, 255, 255] } else { ramp(d) })
    }))
}

pub fn write_heatmap_png(points: &[Point3], distances: &[f64], pixel: f64, path: impl AsRef<Path>) -> Result<()> {
    let img = heatmap_image(points, distances, pixel)?;
    img.save_with_format(path.as_ref(), image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))
}
