//! Border following after Suzuki & Abe (1985), 8-connected foreground.
//!
//! Both outer and hole borders are traced so that labels stay consistent, but
//! only outer borders are returned. Vertices are border cell centers.

use serde::{Deserialize, Serialize};

use super::mask::BinaryMask;
use crate::geom::{shoelace, Polyline2D, Vec2};

/// One traced outer border in cell coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    /// `(col, row)` of border cells in traversal order; the path is closed.
    pub cells: Vec<(usize, usize)>,
    /// Number of cells on or inside the border, holes included.
    pub enclosed_cells: usize,
}

impl Contour {
    /// World-space closed polyline through the border cell centers. A diagonal
    /// step past a set corner cell is routed through that cell so that concave
    /// corners stay square.
    pub fn to_world(&self, mask: &BinaryMask) -> Polyline2D {
        let n = self.cells.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (c, r) = self.cells[i];
            out.push(mask.cell_center(c as f64, r as f64));
            if n < 2 {
                break;
            }
            let (c2, r2) = self.cells[(i + 1) % n];
            if c2 != c && r2 != r {
                let corner = [(c2, r), (c, r2)].into_iter().find(|&(x, y)| mask.get(x, y));
                if let Some((x, y)) = corner {
                    out.push(mask.cell_center(x as f64, y as f64));
                }
            }
        }
        Polyline2D::closed(out)
    }
}

// Clockwise on screen with rows growing downward: E, SE, S, SW, W, NW, N, NE.
const DIRS: [(isize, isize); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

fn dir_between(from: (usize, usize), to: (usize, usize)) -> usize {
    let d = (to.0 as isize - from.0 as isize, to.1 as isize - from.1 as isize);
    DIRS.iter().position(|&x| x == d).expect("neighbouring pixels")
}

/// Outer borders of all 8-connected components, largest enclosed area first.
pub fn trace_contours(mask: &BinaryMask) -> Vec<Contour> {
    let w = mask.width + 2;
    let h = mask.height + 2;
    let mut f = vec![0i32; w * h];
    for r in 0..mask.height {
        for c in 0..mask.width {
            if mask.get(c, r) {
                f[(r + 1) * w + c + 1] = 1;
            }
        }
    }
    let at = |p: (usize, usize)| p.0 * w + p.1;
    let step = |p: (usize, usize), d: usize| {
        (
            (p.0 as isize + DIRS[d].0) as usize,
            (p.1 as isize + DIRS[d].1) as usize,
        )
    };

    let mut nbd: i32 = 1;
    let mut out = Vec::new();
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let v = f[r * w + c];
            if v == 0 {
                continue;
            }
            let start = (r, c);
            let (outer, from) = if v == 1 && f[r * w + c - 1] == 0 {
                (true, (r, c - 1))
            } else if v >= 1 && f[r * w + c + 1] == 0 {
                (false, (r, c + 1))
            } else {
                continue;
            };
            nbd += 1;

            let d0 = dir_between(start, from);
            let first = (0..8)
                .map(|k| (d0 + k) % 8)
                .find(|&d| f[at(step(start, d))] != 0);
            let Some(d1) = first else {
                f[at(start)] = -nbd;
                if outer {
                    out.push(vec![start]);
                }
                continue;
            };
            let i1 = step(start, d1);
            let mut i2 = i1;
            let mut i3 = start;
            let mut path = vec![start];
            loop {
                let d2 = dir_between(i3, i2);
                let mut east_zero = false;
                let mut d4 = d2;
                for k in 1..=8 {
                    let d = (d2 + 8 - k) % 8;
                    if f[at(step(i3, d))] != 0 {
                        d4 = d;
                        break;
                    }
                    if d == 0 {
                        east_zero = true;
                    }
                }
                let i4 = step(i3, d4);
                if east_zero {
                    f[at(i3)] = -nbd;
                } else if f[at(i3)] == 1 {
                    f[at(i3)] = nbd;
                }
                if i4 == start && i3 == i1 {
                    break;
                }
                i2 = i3;
                i3 = i4;
                path.push(i3);
            }
            if outer {
                out.push(path);
            }
        }
    }

    let mut contours: Vec<Contour> = out
        .into_iter()
        .map(|path| {
            let cells: Vec<(usize, usize)> = path.iter().map(|&(r, c)| (c - 1, r - 1)).collect();
            let enclosed_cells = enclosed_cell_count(&cells);
            Contour {
                cells,
                enclosed_cells,
            }
        })
        .collect();
    contours.sort_by(|a, b| b.enclosed_cells.cmp(&a.enclosed_cells));
    contours
}

/// Cells covered by the closed lattice path: `|A| + steps/2 + 1`.
fn enclosed_cell_count(cells: &[(usize, usize)]) -> usize {
    if cells.len() < 2 {
        return cells.len();
    }
    let pts: Vec<Vec2> = cells
        .iter()
        .map(|&(c, r)| Vec2::new(c as f64, r as f64))
        .collect();
    let area = shoelace(&pts).abs();
    (area + cells.len() as f64 / 2.0 + 1.0).round() as usize
}
