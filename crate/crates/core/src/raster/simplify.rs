//! Douglas-Peucker simplification against the chord segment.

use crate::geom::{convex_hull_indices, point_segment_distance, Polyline2D, Vec2};

/// Simplifies `polyline` so that every dropped vertex lies within `epsilon` of
/// the output. Open polylines keep both endpoints; closed ones are anchored at
/// their two mutually farthest vertices.
pub fn simplify(polyline: &Polyline2D, epsilon: f64) -> Polyline2D {
    let v = &polyline.vertices;
    if epsilon <= 0.0 || v.len() < 3 {
        return polyline.clone();
    }
    if !polyline.closed {
        let keep = dp_chain(v, 0, v.len() - 1, epsilon);
        return Polyline2D::open(keep.into_iter().map(|i| v[i]).collect());
    }

    let (a, b) = farthest_pair(v);
    if a == b {
        return polyline.clone();
    }
    let n = v.len();
    // chain a -> b, then b -> a, wrapping around
    let ring: Vec<Vec2> = (0..=n).map(|k| v[(a + k) % n]).collect();
    let split = (b + n - a) % n;
    let mut out = Vec::new();
    for i in dp_chain(&ring, 0, split, epsilon) {
        out.push(ring[i]);
    }
    out.pop();
    for i in dp_chain(&ring, split, n, epsilon) {
        out.push(ring[i]);
    }
    out.pop();
    Polyline2D::closed(out)
}

/// Indices kept between `first` and `last` inclusive.
fn dp_chain(v: &[Vec2], first: usize, last: usize, eps: f64) -> Vec<usize> {
    let mut stack = vec![(first, last)];
    let mut marks = vec![false; last - first + 1];
    marks[0] = true;
    marks[last - first] = true;
    while let Some((s, e)) = stack.pop() {
        if e <= s + 1 {
            continue;
        }
        let mut best = (0.0, 0usize);
        for i in s + 1..e {
            let d = point_segment_distance(v[i], v[s], v[e]);
            if d > best.0 {
                best = (d, i);
            }
        }
        if best.0 > eps {
            marks[best.1 - first] = true;
            stack.push((s, best.1));
            stack.push((best.1, e));
        }
    }
    marks
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(first + i))
        .collect()
}

fn lex_less(p: Vec2, q: Vec2) -> bool {
    p.x < q.x || (p.x == q.x && p.y < q.y)
}

/// Indices of the two mutually farthest vertices, canonical by coordinates.
fn farthest_pair(v: &[Vec2]) -> (usize, usize) {
    let hull = convex_hull_indices(v);
    let cand: Vec<usize> = if hull.len() >= 2 {
        hull
    } else {
        (0..v.len()).collect()
    };
    let mut best: Option<(f64, usize, usize)> = None;
    for (k, &i) in cand.iter().enumerate() {
        for &j in &cand[k + 1..] {
            let (i, j) = if lex_less(v[j], v[i]) { (j, i) } else { (i, j) };
            let d = (v[i] - v[j]).dot(v[i] - v[j]);
            best = match best {
                None => Some((d, i, j)),
                Some((bd, bi, bj)) => {
                    let better = d > bd
                        || (d == bd
                            && (lex_less(v[i], v[bi])
                                || (v[i] == v[bi] && lex_less(v[j], v[bj]))));
                    if better {
                        Some((d, i, j))
                    } else {
                        Some((bd, bi, bj))
                    }
                }
            };
        }
    }
    let (_, i, j) = best.expect("at least two vertices");
    // the hull dedups coordinates; use the first occurrence of each vertex
    let fi = v.iter().position(|&p| p == v[i]).unwrap();
    let fj = v.iter().position(|&p| p == v[j]).unwrap();
    (fi, fj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_polyline(rng: &mut ChaCha8Rng, n: usize) -> Polyline2D {
        let mut p = Vec2::new(0.0, 0.0);
        let mut v = vec![p];
        for _ in 1..n {
            p = p + Vec2::new(rng.random_range(0.01..0.2), rng.random_range(-0.1..0.1));
            v.push(p);
        }
        Polyline2D::open(v)
    }

    #[test]
    fn drops_small_deviation() {
        let p = Polyline2D::open(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.001),
            Vec2::new(2.0, 0.0),
        ]);
        let s = simplify(&p, 0.02);
        assert_eq!(s.vertices, vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)]);
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_polyline(&mut rng, 30);
        assert_eq!(simplify(&p, 0.0), p);
    }

    #[test]
    fn closed_square_with_noise() {
        let mut v = Vec::new();
        for i in 0..10 {
            v.push(Vec2::new(i as f64 * 0.1, 0.0));
        }
        for i in 0..10 {
            v.push(Vec2::new(1.0, i as f64 * 0.1));
        }
        for i in 0..10 {
            v.push(Vec2::new(1.0 - i as f64 * 0.1, 1.0));
        }
        for i in 0..10 {
            v.push(Vec2::new(0.0, 1.0 - i as f64 * 0.1));
        }
        let s = simplify(&Polyline2D::closed(v), 0.01);
        assert!(s.closed);
        assert_eq!(s.vertices.len(), 4);
    }

    #[test]
    fn dropped_vertices_within_epsilon_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = random_polyline(&mut rng, 50);
            let eps = rng.random_range(0.0..0.1);
            let s = simplify(&p, eps);
            assert_eq!(s.vertices.first(), p.vertices.first());
            assert_eq!(s.vertices.last(), p.vertices.last());
            assert!(s.vertices.iter().all(|q| p.vertices.contains(q)));
            for q in &p.vertices {
                assert!(s.distance_to(*q) <= eps + 1e-12);
            }
            assert_eq!(simplify(&s, eps), s);
        }
    }
}
