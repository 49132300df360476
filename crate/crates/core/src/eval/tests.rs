use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cloud_io::Point3;
use crate::geom::{Polygon2D, Vec2};
use crate::ifc::{BuildingElements, StoreyLevel, OPENING_OVERCUT};
use crate::opening::{Opening, OpeningKind};
use crate::synth;
use crate::wall::Wall;

fn v(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

fn walls_only(walls: Vec<Wall>, openings: Vec<Opening>, elevation: f64) -> BuildingElements {
    BuildingElements {
        storeys: vec![StoreyLevel {
            index: 0,
            elevation,
            height: 2.7,
        }],
        walls,
        openings,
        ..BuildingElements::default()
    }
}

/// Distance to the surface of an axis-aligned box `[lo, hi]`.
fn box_surface_distance(p: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let mut out = 0.0;
    let mut inside = f64::INFINITY;
    for k in 0..3 {
        let e = (lo[k] - p[k]).max(0.0).max(p[k] - hi[k]);
        out += e * e;
        inside = inside.min((p[k] - lo[k]).min(hi[k] - p[k]));
    }
    if out > 0.0 {
        out.sqrt()
    } else {
        inside
    }
}

/// World position of wall-local (u along axis, n to the left, z up).
fn to_world(w: &Wall, elevation: f64, q: [f64; 3]) -> Point3 {
    let d = (w.axis_end - w.axis_start).normalized();
    let p = w.axis_start + d * q[0] + d.perp() * q[1];
    [p.x, p.y, elevation + q[2]]
}

fn wall_box_local(w: &Wall) -> ([f64; 3], [f64; 3]) {
    ([0.0, -w.thickness / 2.0, 0.0], [w.length(), w.thickness / 2.0, w.height])
}

#[test]
fn two_boxes_match_exhaustive_box_distance() {
    let walls = vec![
        Wall::from_axis(0, v(0.0, 0.0), v(4.0, 0.0), 0.3, 2.7, 0),
        Wall::from_axis(1, v(1.0, 3.0), v(3.5, 5.2), 0.2, 2.7, 0),
    ];
    let e = walls_only(walls.clone(), vec![], 0.4);
    let m = ModelSurfaces::from_elements(&e).unwrap();
    assert_eq!(m.faces.len(), 12);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let p = [rng.random_range(-1.0..5.0), rng.random_range(-1.0..6.0), rng.random_range(-0.5..3.8)];
        let oracle = walls
            .iter()
            .map(|w| {
                let d = (w.axis_end - w.axis_start).normalized();
                let r = v(p[0], p[1]) - w.axis_start;
                let q = [r.dot(d), r.dot(d.perp()), p[2] - 0.4];
                let (lo, hi) = wall_box_local(w);
                box_surface_distance(q, lo, hi)
            })
            .fold(f64::INFINITY, f64::min);
        let got = m.distance(p);
        assert!((got - oracle).abs() < 1e-9, "{p:?}: {got} vs {oracle}");
    }
}

#[test]
fn openings_match_sampled_surface() {
    let w = Wall::from_axis(0, v(1.0, 2.0), v(1.0 + 4.0 * 0.4f64.cos(), 2.0 + 4.0 * 0.4f64.sin()), 0.3, 2.7, 0);
    let openings = vec![
        Opening {
            wall_ref: 0,
            x_offset: 1.0,
            width: 1.2,
            sill: 0.9,
            height: 1.2,
            kind: OpeningKind::Window,
        },
        Opening {
            wall_ref: 0,
            x_offset: 2.8,
            width: 0.9,
            sill: 0.0,
            height: 2.1,
            kind: OpeningKind::Door,
        },
    ];
    let elevation = 0.5;
    let m = ModelSurfaces::from_elements(&walls_only(vec![w.clone()], openings.clone(), elevation)).unwrap();
    assert_eq!(m.skipped_voids, 0);

    let (lo, hi) = wall_box_local(&w);
    let voids: Vec<([f64; 3], [f64; 3])> = openings
        .iter()
        .map(|o| {
            let n = w.thickness / 2.0 + OPENING_OVERCUT;
            ([o.x_offset, -n, o.sill], [o.x_offset + o.width, n, o.sill + o.height])
        })
        .collect();
    let within = |p: [f64; 3], a: [f64; 3], b: [f64; 3]| (0..3).all(|k| p[k] >= a[k] && p[k] <= b[k]);
    let strictly = |p: [f64; 3], a: [f64; 3], b: [f64; 3], k: usize| p[k] > a[k] && p[k] < b[k];

    // surface samples of the box minus the voids, in wall coordinates
    let h = 0.01;
    let mut samples: Vec<[f64; 3]> = Vec::new();
    let mut face = |lo: [f64; 3], hi: [f64; 3], axis: usize, keep: &dyn Fn([f64; 3]) -> bool| {
        let (b, d) = ((axis + 1) % 3, (axis + 2) % 3);
        for c in [lo[axis], hi[axis]] {
            let nb = ((hi[b] - lo[b]) / h).round() as usize;
            let nd = ((hi[d] - lo[d]) / h).round() as usize;
            for i in 0..nb {
                for j in 0..nd {
                    let mut p = [0.0; 3];
                    p[axis] = c;
                    p[b] = lo[b] + (i as f64 + 0.5) * (hi[b] - lo[b]) / nb as f64;
                    p[d] = lo[d] + (j as f64 + 0.5) * (hi[d] - lo[d]) / nd as f64;
                    if keep(p) {
                        samples.push(p);
                    }
                }
            }
        }
    };
    for axis in 0..3 {
        face(lo, hi, axis, &|p| !voids.iter().any(|(a, b)| within(p, *a, *b)));
    }
    for (a, b) in &voids {
        for axis in 0..3 {
            face(*a, *b, axis, &|p| {
                strictly(p, lo, hi, axis) && within(p, lo, hi) && !voids.iter().any(|(c, d)| c != a && within(p, *c, *d))
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let q = [rng.random_range(-0.3..4.3), rng.random_range(-0.4..0.4), rng.random_range(-0.2..2.9)];
        let oracle = samples
            .iter()
            .map(|s| ((s[0] - q[0]).powi(2) + (s[1] - q[1]).powi(2) + (s[2] - q[2]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        let got = m.distance(to_world(&w, elevation, q));
        assert!(got <= oracle + 1e-9, "{q:?}: {got} > {oracle}");
        assert!(oracle - got <= h * 0.75, "{q:?}: {got} vs {oracle}");
    }
}

#[test]
fn uniform_offset_is_recovered() {
    let w = Wall::from_axis(0, v(0.0, 0.0), v(3.0, 1.0), 0.25, 2.7, 0);
    let m = ModelSurfaces::from_elements(&walls_only(vec![w.clone()], vec![], 0.0)).unwrap();
    let (lo, hi) = wall_box_local(&w);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pts = Vec::new();
    for _ in 0..500 {
        let u = rng.random_range(0.1..w.length() - 0.1);
        let z = rng.random_range(0.1..2.6);
        let side = if rng.random::<bool>() { hi[1] + 0.005 } else { lo[1] - 0.005 };
        pts.push(to_world(&w, 0.0, [u, side, z]));
        let y = rng.random_range(-0.1..0.1);
        pts.push(to_world(&w, 0.0, [u, y, hi[2] + 0.005]));
    }
    let s = deviation(&pts, &m).unwrap();
    for d in &s.distances {
        assert!((d - 0.005).abs() < 1e-9, "{d}");
    }
    assert_eq!(s.count, pts.len());
}

#[test]
fn synthetic_cloud_lies_on_truth_model() {
    for spec in [synth::orthogonal_two_storey(), synth::wing_two_storey()] {
        let (cloud, truth) = synth::generate(&spec).unwrap();
        let m = ModelSurfaces::from_elements(&truth.elements()).unwrap();
        assert_eq!(m.skipped_voids, 0);
        let pts: Vec<Point3> = cloud.points().iter().step_by(13).copied().collect();
        let s = deviation(&pts, &m).unwrap();
        assert!(s.max < 1e-9, "max {}", s.max);
    }
}

fn moved(e: &BuildingElements, angle: f64, t: Vec2) -> BuildingElements {
    let f = |p: Vec2| p.rotated(angle) + t;
    let poly = |p: &Polygon2D| Polygon2D::new(p.vertices.iter().map(|&q| f(q)).collect());
    let mut out = e.clone();
    for w in &mut out.walls {
        let mut n = Wall::from_axis(w.id, f(w.axis_start), f(w.axis_end), w.thickness, w.height, w.storey_index);
        n.exterior = w.exterior;
        *w = n;
    }
    for s in &mut out.slabs {
        s.footprint = poly(&s.footprint);
    }
    for z in &mut out.zones {
        z.boundary = poly(&z.boundary);
    }
    out
}

#[test]
fn rigid_motion_leaves_distances_unchanged() {
    let mut spec = synth::wing_two_storey();
    spec.noise_sigma = 0.004;
    let (cloud, truth) = synth::generate(&spec).unwrap();
    let e = truth.elements();
    let (angle, t) = (0.7, v(12.0, -3.5));
    let pts: Vec<Point3> = cloud.points().iter().step_by(97).copied().collect();
    let pts2: Vec<Point3> = pts
        .iter()
        .map(|p| {
            let q = v(p[0], p[1]).rotated(angle) + t;
            [q.x, q.y, p[2]]
        })
        .collect();
    let a = deviation(&pts, &ModelSurfaces::from_elements(&e).unwrap()).unwrap();
    let b = deviation(&pts2, &ModelSurfaces::from_elements(&moved(&e, angle, t)).unwrap()).unwrap();
    assert!(a.max > 0.005);
    for (x, y) in a.distances.iter().zip(&b.distances) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn empty_model_is_an_error() {
    let m = ModelSurfaces::default();
    assert!(matches!(deviation(&[[0.0; 3]], &m), Err(crate::Error::EmptyModel)));
}

#[test]
fn stats_are_monotone() {
    let d: Vec<f64> = (1..=100).map(|i| i as f64 / 1000.0).collect();
    let s = DeviationStats::from_distances(d);
    assert_eq!(s.p50, 0.05);
    assert_eq!(s.p95, 0.095);
    assert_eq!(s.p99, 0.099);
    assert_eq!(s.max, 0.1);
    assert_eq!(s.count_over(0.05), 50);
    assert!(s.p50 <= s.p95 && s.p95 <= s.p99 && s.p99 <= s.max);
    assert_eq!(percentile(&[], 0.5), 0.0);
    assert_eq!(percentile(&[3.0], 0.0), 3.0);
}

#[test]
fn ramp_spans_blue_to_red() {
    assert_eq!(ramp(0.0), [0, 0, 255]);
    assert_eq!(ramp(HEATMAP_MAX), [255, 0, 0]);
    assert_eq!(ramp(1.0), [255, 0, 0]);
    let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.5, 0.0]];
    let img = heatmap_image(&pts, &[0.0, 0.06], 0.1).unwrap();
    assert_eq!(img.dimensions(), (11, 6));
    assert_eq!(img.get_pixel(0, 5).0, [0, 0, 255]);
    assert_eq!(img.get_pixel(10, 0).0, [255, 0, 0]);
    assert_eq!(img.get_pixel(5, 2).0, [255, 255, 255]);
}

#[test]
fn csv_and_png_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let pts = vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]];
    write_deviation_csv(&pts, &[0.001, 0.002], dir.path().join("d.csv")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(text, "x,y,z,distance\n0.000000,0.000000,0.000000,0.001000\n1.000000,2.000000,3.000000,0.002000\n");
    write_heatmap_png(&pts, &[0.001, 0.002], 0.5, dir.path().join("d.png")).unwrap();
    let img = image::open(dir.path().join("d.png")).unwrap();
    assert_eq!((img.width(), img.height()), (3, 5));
    assert!(write_deviation_csv(&pts, &[0.1], dir.path().join("x.csv")).is_err());
}

#[test]
fn truth_scores_perfectly_against_itself() {
    let (_, truth) = synth::generate(&synth::orthogonal_two_storey()).unwrap();
    let card = compare_to_truth(&truth.elements(), &truth, &MatchTolerances::default());
    for c in [&card.slabs, &card.walls, &card.openings, &card.zones] {
        assert_eq!(c.precision(), 1.0);
        assert_eq!(c.recall(), 1.0);
        assert!(c.truth > 0);
    }
    assert_eq!(card.storeys, (2, 2));
}

#[test]
fn one_missed_opening_of_thirteen() {
    let w = Wall::from_axis(0, v(0.0, 0.0), v(30.0, 0.0), 0.3, 2.7, 0);
    let openings: Vec<Opening> = (0..13)
        .map(|k| Opening {
            wall_ref: 0,
            x_offset: 0.5 + 2.2 * k as f64,
            width: 1.2,
            sill: if k % 3 == 0 { 0.0 } else { 0.9 },
            height: if k % 3 == 0 { 2.0 } else { 1.2 },
            kind: if k % 3 == 0 { OpeningKind::Door } else { OpeningKind::Window },
        })
        .collect();
    let truth = walls_only(vec![w.clone()], openings.clone(), 0.0);
    let mut det = truth.clone();
    det.openings.remove(6);
    let tol = MatchTolerances::default();
    let c = compare_elements(&det, &truth, &tol);
    assert_eq!(c.openings.matched(), 12);
    assert!((c.openings.recall() - 12.0 / 13.0).abs() < 1e-12);
    assert_eq!(c.openings.precision(), 1.0);
    assert_eq!(c.openings.unmatched_truth, vec![6]);

    // a wrong kind does not count
    let mut det = truth.clone();
    det.openings[1].kind = OpeningKind::Door;
    let c = compare_elements(&det, &truth, &tol);
    assert_eq!(c.openings.matched(), 12);
    assert_eq!(c.openings.unmatched_detected, vec![1]);
}

/// Every full-or-partial matching, checked for stability: no admissible
/// pair where both sides are free or prefer each other.
fn stable_matchings(d: &[Vec<Option<f64>>]) -> Vec<Vec<(usize, usize)>> {
    let (n, m) = (d.len(), d.first().map_or(0, |r| r.len()));
    let mut out = Vec::new();
    let mut assign = vec![None; n];
    fn rec(
        i: usize,
        d: &[Vec<Option<f64>>],
        m: usize,
        used: &mut Vec<bool>,
        assign: &mut Vec<Option<usize>>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if i == d.len() {
            let cost_d = |i: usize| assign[i].map_or(f64::INFINITY, |j| d[i][j].unwrap());
            let mut partner = vec![None; m];
            for (i, a) in assign.iter().enumerate() {
                if let Some(j) = a {
                    partner[*j] = Some(i);
                }
            }
            let cost_t = |j: usize| partner[j].map_or(f64::INFINITY, |i: usize| d[i][j].unwrap());
            let stable = (0..d.len()).all(|i| {
                (0..m).all(|j| match d[i][j] {
                    Some(x) if assign[i] != Some(j) => !(x < cost_d(i) && x < cost_t(j)),
                    _ => true,
                })
            });
            if stable {
                out.push(assign.iter().enumerate().filter_map(|(i, a)| a.map(|j| (i, j))).collect());
            }
            return;
        }
        assign[i] = None;
        rec(i + 1, d, m, used, assign, out);
        for j in 0..m {
            if d[i][j].is_some() && !used[j] {
                used[j] = true;
                assign[i] = Some(j);
                rec(i + 1, d, m, used, assign, out);
                used[j] = false;
                assign[i] = None;
            }
        }
    }
    let mut used = vec![false; m];
    rec(0, d, m, &mut used, &mut assign, &mut out);
    out
}

#[test]
fn greedy_equals_exhaustive_stable_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..300 {
        let n = rng.random_range(0..=5);
        let m = rng.random_range(0..=5);
        let d: Vec<Vec<Option<f64>>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_bool(0.6).then(|| rng.random::<f64>())).collect())
            .collect();
        let got = greedy_match(n, m, &|i, j| d[i][j].map(|x| (x, Default::default())));
        let stable = stable_matchings(&d);
        assert_eq!(stable.len(), 1, "{d:?}");
        let want: BTreeSet<(usize, usize)> = stable[0].iter().copied().collect();
        let have: BTreeSet<(usize, usize)> = got.pairs.iter().map(|p| (p.detected, p.truth)).collect();
        assert_eq!(have, want, "{d:?}");
        assert_eq!(got.unmatched_detected.len(), n - want.len());
        assert_eq!(got.unmatched_truth.len(), m - want.len());
    }
}

#[test]
fn random_wall_detections_score_like_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = MatchTolerances::default();
    for _ in 0..200 {
        let n = rng.random_range(1..=5);
        let truth_walls: Vec<Wall> = (0..n)
            .map(|k| {
                let a = v(rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
                let b = a + v(1.0, 0.0).rotated(rng.random_range(0.0..6.28)) * rng.random_range(1.0..4.0);
                Wall::from_axis(k, a, b, 0.3, 2.7, 0)
            })
            .collect();
        let mut det_walls = Vec::new();
        for w in &truth_walls {
            if rng.random_bool(0.8) {
                let j = |r: &mut ChaCha8Rng| v(r.random_range(-0.008..0.008), r.random_range(-0.008..0.008));
                let (a, b) = if rng.random::<bool>() { (w.axis_start, w.axis_end) } else { (w.axis_end, w.axis_start) };
                let t = w.thickness + rng.random_range(-0.03..0.03);
                det_walls.push(Wall::from_axis(det_walls.len(), a + j(&mut rng), b + j(&mut rng), t, 2.7, 0));
            }
        }
        while det_walls.len() < 5 && rng.random_bool(0.3) {
            let a = v(rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
            det_walls.push(Wall::from_axis(det_walls.len(), a, a + v(2.0, 0.0), 0.3, 2.7, 0));
        }
        let det = walls_only(det_walls.clone(), vec![], 0.0);
        let truth = walls_only(truth_walls.clone(), vec![], 0.0);
        let card = compare_elements(&det, &truth, &tol);

        // independent admissibility and distance
        let d: Vec<Vec<Option<f64>>> = det_walls
            .iter()
            .map(|a| {
                truth_walls
                    .iter()
                    .map(|b| {
                        let e1 = a.axis_start.distance(b.axis_start).max(a.axis_end.distance(b.axis_end));
                        let e2 = a.axis_start.distance(b.axis_end).max(a.axis_end.distance(b.axis_start));
                        let ok = e1.min(e2) <= tol.wall_endpoint && (a.thickness - b.thickness).abs() <= tol.wall_thickness;
                        let ma = (a.axis_start + a.axis_end) * 0.5;
                        let mb = (b.axis_start + b.axis_end) * 0.5;
                        ok.then(|| ma.distance(mb))
                    })
                    .collect()
            })
            .collect();
        let stable = stable_matchings(&d);
        assert_eq!(stable.len(), 1);
        let k = stable[0].len();
        assert_eq!(card.walls.matched(), k);
        assert!((card.walls.recall() - k as f64 / n as f64).abs() < 1e-12);
        let p = if det_walls.is_empty() { 1.0 } else { k as f64 / det_walls.len() as f64 };
        assert!((card.walls.precision() - p).abs() < 1e-12);
    }
}
