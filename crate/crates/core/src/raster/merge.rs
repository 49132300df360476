//! Collinear segment merging, longest segment first.

use std::cmp::Ordering;

use crate::geom::{line_angle_deg, Polyline2D, Segment2D};

/// Splits a polyline into its non-degenerate edges.
pub fn explode(polyline: &Polyline2D) -> Vec<Segment2D> {
    polyline
        .edges()
        .into_iter()
        .filter(|(a, b)| a.distance(*b) > 0.0)
        .map(|(a, b)| Segment2D::new(a, b))
        .collect()
}

/// Merges with a single tolerance for lateral offset and endpoint gap.
pub fn merge_collinear(segments: &[Segment2D], angle_tol: f64, gap_tol: f64) -> Vec<Segment2D> {
    merge_collinear_with(segments, angle_tol, gap_tol, gap_tol)
}

/// Repeatedly absorbs segments into the longest remaining one while the angle
/// is below `angle_tol` degrees, both endpoints lie within `lateral_tol` of its
/// supporting line, and the gap between projected extents is below `gap_tol`.
/// The merged segment stays on the reference line and spans all projections.
pub fn merge_collinear_with(
    segments: &[Segment2D],
    angle_tol: f64,
    lateral_tol: f64,
    gap_tol: f64,
) -> Vec<Segment2D> {
    let mut segs: Vec<Segment2D> = segments.iter().copied().filter(|s| s.length() > 0.0).collect();
    loop {
        sort_longest_first(&mut segs);
        let n = segs.len();
        let mut used = vec![false; n];
        let mut out = Vec::with_capacity(n);
        let mut changed = false;
        for i in 0..n {
            if used[i] {
                continue;
            }
            used[i] = true;
            let mut cur = segs[i];
            loop {
                let mut grew = false;
                for j in 0..n {
                    if !used[j] && mergeable(&cur, &segs[j], angle_tol, lateral_tol, gap_tol) {
                        cur = extend(&cur, &segs[j]);
                        used[j] = true;
                        grew = true;
                        changed = true;
                    }
                }
                if !grew {
                    break;
                }
            }
            out.push(cur);
        }
        segs = out;
        if !changed {
            break;
        }
    }
    segs
}

fn sort_longest_first(segs: &mut [Segment2D]) {
    segs.sort_by(|p, q| {
        q.length()
            .partial_cmp(&p.length())
            .unwrap_or(Ordering::Equal)
            .then_with(|| key(p).partial_cmp(&key(q)).unwrap_or(Ordering::Equal))
    });
}

fn key(s: &Segment2D) -> [f64; 4] {
    [s.a.x, s.a.y, s.b.x, s.b.y]
}

fn mergeable(r: &Segment2D, s: &Segment2D, angle_tol: f64, lateral: f64, gap: f64) -> bool {
    if line_angle_deg(r.direction(), s.direction()) >= angle_tol {
        return false;
    }
    if r.signed_offset(s.a).abs() >= lateral || r.signed_offset(s.b).abs() >= lateral {
        return false;
    }
    let (lo, hi) = (0.0, r.length());
    let (p, q) = (r.project(s.a), r.project(s.b));
    let (slo, shi) = (p.min(q), p.max(q));
    let g = (slo - hi).max(lo - shi).max(0.0);
    g < gap
}

fn extend(r: &Segment2D, s: &Segment2D) -> Segment2D {
    let d = r.direction();
    let ts = [0.0, r.length(), r.project(s.a), r.project(s.b)];
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Segment2D::new(r.a + d * lo, r.a + d * hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Segment2D {
        Segment2D::new(Vec2::new(ax, ay), Vec2::new(bx, by))
    }

    #[test]
    fn joins_touching_pieces() {
        let out = merge_collinear(&[seg(0.0, 0.0, 1.0, 0.0), seg(1.01, 0.0, 2.0, 0.0)], 3.0, 0.05);
        assert_eq!(out.len(), 1);
        let s = out[0];
        let (lo, hi) = if s.a.x < s.b.x { (s.a, s.b) } else { (s.b, s.a) };
        assert!(lo.distance(Vec2::new(0.0, 0.0)) < 1e-12);
        assert!(hi.distance(Vec2::new(2.0, 0.0)) < 1e-12);
    }

    #[test]
    fn perpendicular_unchanged() {
        let input = [seg(0.0, 0.0, 1.0, 0.0), seg(1.0, 0.0, 1.0, 1.0)];
        let out = merge_collinear(&input, 3.0, 0.05);
        assert_eq!(out.len(), 2);
        for s in &input {
            assert!(out.contains(s));
        }
    }

    #[test]
    fn far_gap_or_offset_not_merged() {
        let out = merge_collinear(&[seg(0.0, 0.0, 1.0, 0.0), seg(1.2, 0.0, 2.0, 0.0)], 3.0, 0.05);
        assert_eq!(out.len(), 2);
        let out = merge_collinear(&[seg(0.0, 0.0, 1.0, 0.0), seg(0.5, 0.1, 2.0, 0.1)], 3.0, 0.05);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn shuffled_fragments_recover_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let ang: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let d = Vec2::new(ang.cos(), ang.sin());
            let o = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let mut t = 0.0;
            let mut frags = Vec::new();
            for _ in 0..20 {
                let len = rng.random_range(0.1..0.5);
                let (a, b) = (o + d * t, o + d * (t + len));
                frags.push(if rng.random_bool(0.5) {
                    Segment2D::new(a, b)
                } else {
                    Segment2D::new(b, a)
                });
                t += len + rng.random_range(0.0..0.04);
            }
            frags.shuffle(&mut rng);
            let out = merge_collinear(&frags, 3.0, 0.05);
            assert_eq!(out.len(), 1);
            let ends = [out[0].a, out[0].b];
            assert!(ends.iter().any(|p| p.distance(o) < 1e-9));
            let last_end = frags
                .iter()
                .flat_map(|s| [s.a, s.b])
                .map(|p| (p - o).dot(d))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((out[0].length() - last_end).abs() < 1e-9);
        }
    }

    #[test]
    fn output_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let segs: Vec<Segment2D> = (0..60)
            .map(|_| {
                let a = Vec2::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0));
                let horiz = rng.random_bool(0.5);
                let l = rng.random_range(0.1..1.0);
                let b = if horiz { a + Vec2::new(l, 0.0) } else { a + Vec2::new(0.0, l) };
                Segment2D::new(a, b)
            })
            .collect();
        let out = merge_collinear(&segs, 3.0, 0.05);
        let again = merge_collinear(&out, 3.0, 0.05);
        assert_eq!(out.len(), again.len());
    }
}
