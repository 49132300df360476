//! Room polygons from the planar arrangement of wall axes.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{line_intersection, point_segment_distance, Polygon2D, Vec2};
use crate::wall::Wall;

const NODE_EPS: f64 = 1e-6;

/// Planar graph of axis pieces. `edges` hold node indices and the index of
/// the wall that produced the piece.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisGraph {
    pub nodes: Vec<Vec2>,
    pub edges: Vec<AxisEdge>,
    /// Axis endpoints that touch nothing after extension.
    pub dangling: Vec<Vec2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisEdge {
    pub a: usize,
    pub b: usize,
    pub wall: usize,
}

/// Bounded face of the arrangement, CCW, with the wall behind every edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub polygon: Polygon2D,
    /// `edge_walls[i]` owns the edge from vertex `i` to `i + 1`.
    pub edge_walls: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub boundary: Polygon2D,
    pub storey_index: usize,
    pub area: f64,
    pub height: f64,
    pub name: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StoreyZones {
    pub storey_index: usize,
    pub graph: AxisGraph,
    pub cells: Vec<Cell>,
    pub zones: Vec<Zone>,
    pub warnings: Vec<String>,
}

fn touches_other(walls: &[Wall], skip: usize, p: Vec2) -> bool {
    walls
        .iter()
        .enumerate()
        .any(|(j, w)| j != skip && point_segment_distance(p, w.axis_start, w.axis_end) <= NODE_EPS)
}

/// Extends dangling axis ends onto nearby axes, then splits every axis at
/// all mutual intersections.
pub fn build_axis_graph(walls: &[Wall], snapping_distance: f64) -> Result<AxisGraph> {
    if !(snapping_distance >= 0.0) {
        return Err(Error::InvalidInput("snapping_distance must be non-negative".into()));
    }
    let mut axes: Vec<(Vec2, Vec2)> = walls.iter().map(|w| (w.axis_start, w.axis_end)).collect();
    let mut dangling = Vec::new();
    for i in 0..axes.len() {
        for end in [false, true] {
            let (a, b) = axes[i];
            let (p, q) = if end { (b, a) } else { (a, b) };
            if touches_other(walls, i, p) {
                continue;
            }
            let d = (p - q).normalized();
            let mut best: Option<(f64, Vec2)> = None;
            for (j, &(c, e)) in axes.iter().enumerate() {
                if j == i {
                    continue;
                }
                let Some(x) = line_intersection(p, d, c, e - c) else { continue };
                let t = d.dot(x - p);
                if t < -NODE_EPS || t > snapping_distance {
                    continue;
                }
                if point_segment_distance(x, c, e) > snapping_distance {
                    continue;
                }
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, x));
                }
            }
            match best {
                Some((_, x)) => {
                    if end {
                        axes[i].1 = x;
                    } else {
                        axes[i].0 = x;
                    }
                }
                None => dangling.push(p),
            }
        }
    }

    // split parameters per axis
    let mut params: Vec<Vec<(f64, Vec2)>> = axes.iter().map(|&(a, b)| vec![(0.0, a), (1.0, b)]).collect();
    for i in 0..axes.len() {
        for j in (i + 1)..axes.len() {
            for (x, ti, tj) in crossings(axes[i], axes[j]) {
                params[i].push((ti, x));
                params[j].push((tj, x));
            }
        }
    }

    let mut nodes: Vec<Vec2> = Vec::new();
    let mut node_of = |p: Vec2| -> usize {
        if let Some(k) = nodes.iter().position(|n| n.distance(p) <= NODE_EPS) {
            k
        } else {
            nodes.push(p);
            nodes.len() - 1
        }
    };
    let mut edges: Vec<AxisEdge> = Vec::new();
    let mut seen = BTreeMap::new();
    for (w, ps) in params.iter_mut().enumerate() {
        ps.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
        let ids: Vec<usize> = ps.iter().map(|&(_, p)| node_of(p)).collect();
        for pair in ids.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if seen.insert(key, w).is_none() {
                edges.push(AxisEdge { a, b, wall: w });
            }
        }
    }
    Ok(AxisGraph {
        nodes,
        edges,
        dangling,
    })
}

/// Points shared by two segments with their parameters on each; overlapping
/// collinear segments report the contained endpoints.
fn crossings(s: (Vec2, Vec2), r: (Vec2, Vec2)) -> Vec<(Vec2, f64, f64)> {
    let (a, b) = s;
    let (c, e) = r;
    let param = |p: Vec2, a: Vec2, b: Vec2| {
        let ab = b - a;
        ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0)
    };
    let mut out = Vec::new();
    if let Some(x) = line_intersection(a, b - a, c, e - c) {
        if point_segment_distance(x, a, b) <= NODE_EPS && point_segment_distance(x, c, e) <= NODE_EPS {
            out.push((x, param(x, a, b), param(x, c, e)));
        }
        return out;
    }
    for p in [a, b] {
        if point_segment_distance(p, c, e) <= NODE_EPS {
            out.push((p, param(p, a, b), param(p, c, e)));
        }
    }
    for p in [c, e] {
        if point_segment_distance(p, a, b) <= NODE_EPS {
            out.push((p, param(p, a, b), param(p, c, e)));
        }
    }
    out
}

/// Edges left after repeatedly removing those with a degree-one end.
fn two_core(g: &AxisGraph) -> Vec<AxisEdge> {
    let mut alive = vec![true; g.edges.len()];
    loop {
        let mut deg = vec![0usize; g.nodes.len()];
        for (e, &ok) in g.edges.iter().zip(&alive) {
            if ok {
                deg[e.a] += 1;
                deg[e.b] += 1;
            }
        }
        let mut changed = false;
        for (e, ok) in g.edges.iter().zip(alive.iter_mut()) {
            if *ok && (deg[e.a] == 1 || deg[e.b] == 1) {
                *ok = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    g.edges.iter().zip(alive).filter(|(_, ok)| *ok).map(|(e, _)| *e).collect()
}

/// Bounded faces by half-edge traversal, turning to the clockwise-next edge
/// at every node. Sorted by descending area.
pub fn extract_cells(graph: &AxisGraph) -> Vec<Cell> {
    let edges = two_core(graph);
    // half-edge h: 2k is a->b, 2k+1 is b->a
    let from = |h: usize| if h % 2 == 0 { edges[h / 2].a } else { edges[h / 2].b };
    let to = |h: usize| if h % 2 == 0 { edges[h / 2].b } else { edges[h / 2].a };
    let nh = edges.len() * 2;
    let mut out_of: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for h in 0..nh {
        out_of[from(h)].push(h);
    }
    let angle = |h: usize| {
        let d = graph.nodes[to(h)] - graph.nodes[from(h)];
        d.y.atan2(d.x)
    };
    for hs in &mut out_of {
        hs.sort_by(|&x, &y| angle(x).partial_cmp(&angle(y)).unwrap_or(Ordering::Equal));
    }
    let next = |h: usize| {
        let v = to(h);
        let twin = h ^ 1;
        let hs = &out_of[v];
        let k = hs.iter().position(|&x| x == twin).expect("twin leaves v");
        hs[(k + hs.len() - 1) % hs.len()]
    };
    let mut visited = vec![false; nh];
    let mut cells = Vec::new();
    for start in 0..nh {
        if visited[start] {
            continue;
        }
        let mut verts = Vec::new();
        let mut owners = Vec::new();
        let mut h = start;
        while !visited[h] {
            visited[h] = true;
            verts.push(graph.nodes[from(h)]);
            owners.push(edges[h / 2].wall);
            h = next(h);
        }
        let poly = Polygon2D::new(verts);
        if poly.signed_area() > NODE_EPS {
            cells.push(Cell {
                polygon: poly,
                edge_walls: owners,
            });
        }
    }
    cells.sort_by(|a, b| {
        b.polygon
            .area()
            .partial_cmp(&a.polygon.area())
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                let (ca, cb) = (a.polygon.centroid(), b.polygon.centroid());
                (ca.x, ca.y).partial_cmp(&(cb.x, cb.y)).unwrap_or(Ordering::Equal)
            })
    });
    cells
}

/// Offsets every cell edge inward by half its wall's thickness and
/// intersects consecutive offset lines.
pub fn inset_to_surfaces(cell: &Cell, walls: &[Wall]) -> Result<Polygon2D> {
    let name = || {
        let c = cell.polygon.centroid();
        format!("at ({:.3}, {:.3})", c.x, c.y)
    };
    let v = &cell.polygon.vertices;
    let n = v.len();
    if n < 3 || cell.edge_walls.len() != n {
        return Err(Error::DegenerateZone(name()));
    }
    // offset lines as (point, direction, original direction)
    let mut lines: Vec<(Vec2, Vec2, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let w = walls.get(cell.edge_walls[i]).ok_or_else(|| Error::UnknownWall(cell.edge_walls[i].to_string()))?;
        let d = (v[(i + 1) % n] - v[i]).normalized();
        let half = w.thickness / 2.0;
        let p = v[i] + d.perp() * half;
        // collinear continuation with the same offset adds nothing
        if let Some(&(lp, ld, lh)) = lines.last() {
            if ld.cross(d).abs() < 1e-9 && ld.dot(d) > 0.0 && (lh - half).abs() < 1e-9 && (p - lp).cross(ld).abs() < 1e-9 {
                continue;
            }
        }
        lines.push((p, d, half));
    }
    if lines.len() > 1 {
        let (fp, fd, fh) = lines[0];
        let (lp, ld, lh) = lines[lines.len() - 1];
        if ld.cross(fd).abs() < 1e-9 && ld.dot(fd) > 0.0 && (lh - fh).abs() < 1e-9 && (fp - lp).cross(ld).abs() < 1e-9 {
            lines[0].0 = lp;
            lines.pop();
        }
    }
    let m = lines.len();
    if m < 3 {
        return Err(Error::DegenerateZone(name()));
    }
    // each vertex starts an edge along line `Some(i)`, or a step connector
    let mut out: Vec<(Vec2, Option<usize>)> = Vec::with_capacity(m);
    for i in 0..m {
        let (p0, d0, _) = lines[(i + m - 1) % m];
        let (p1, d1, _) = lines[i];
        match line_intersection(p0, d0, p1, d1) {
            Some(x) => out.push((x, Some(i))),
            None => {
                // parallel step between walls of different thickness
                out.push((p0 + d0 * d0.dot(p1 - p0), None));
                out.push((p1, Some(i)));
            }
        }
    }
    let k = out.len();
    let flipped = (0..k).any(|j| {
        let (a, line) = out[j];
        let b = out[(j + 1) % k].0;
        line.is_some_and(|i| (b - a).dot(lines[i].1) <= 0.0 && b.distance(a) > NODE_EPS)
    });
    let poly = Polygon2D::new(out.into_iter().map(|(p, _)| p).collect());
    if flipped || poly.signed_area() <= 0.0 || !poly.is_simple() {
        return Err(Error::InsetCollapsed(name()));
    }
    Ok(poly)
}

/// Graph, cells and named zones for one storey. Collapsed insets and
/// unjoined axis ends become warnings.
pub fn detect_zones(
    walls: &[Wall],
    storey_index: usize,
    height: f64,
    snapping_distance: f64,
    names: &BTreeMap<String, String>,
) -> Result<StoreyZones> {
    let graph = build_axis_graph(walls, snapping_distance)?;
    let cells = extract_cells(&graph);
    let mut warnings: Vec<String> = graph
        .dangling
        .iter()
        .map(|p| format!("storey {storey_index}: axis end ({:.3}, {:.3}) not joined; zone may be unclosed", p.x, p.y))
        .collect();
    let mut boundaries = Vec::new();
    for c in &cells {
        match inset_to_surfaces(c, walls) {
            Ok(b) => boundaries.push(b),
            Err(e) => warnings.push(format!("storey {storey_index}: {e}")),
        }
    }
    boundaries.sort_by(|a, b| {
        b.area().partial_cmp(&a.area()).unwrap_or(Ordering::Equal).then_with(|| {
            let (ca, cb) = (a.centroid(), b.centroid());
            (ca.x, ca.y).partial_cmp(&(cb.x, cb.y)).unwrap_or(Ordering::Equal)
        })
    });
    let zones = boundaries
        .into_iter()
        .enumerate()
        .map(|(n, boundary)| {
            let default = format!("Zone {}.{}", storey_index, n + 1);
            Zone {
                area: boundary.area(),
                boundary,
                storey_index,
                height,
                name: names.get(&default).cloned().unwrap_or(default),
            }
        })
        .collect();
    Ok(StoreyZones {
        storey_index,
        graph,
        cells,
        zones,
        warnings,
    })
}
