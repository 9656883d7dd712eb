//! Marching squares over a window's cell-centre lattice.

use crate::geo::LonLat;
use crate::mapgrid::GridWindow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: LonLat,
    pub b: LonLat,
}

impl Segment {
    /// Closest point of the segment to `p`.
    pub fn project(&self, p: LonLat) -> LonLat {
        let d = self.b - self.a;
        let len2 = d.lon * d.lon + d.lat * d.lat;
        if len2 == 0.0 {
            return self.a;
        }
        let w = p - self.a;
        let s = ((w.lon * d.lon + w.lat * d.lat) / len2).clamp(0.0, 1.0);
        self.a + d.scale(s)
    }
}

#[derive(Clone, Copy)]
enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

/// Iso-line segments of level `z` across the window, with linear
/// interpolation along cell edges. A corner counts as "above" when its
/// value is strictly greater than `z`; saddles are split using the mean of
/// the four corners.
pub fn extract_contour(window: &GridWindow, z: f64) -> Vec<Segment> {
    let n = window.n;
    let at = |r: usize, c: usize| &window.cells[r * n + c];
    let mut out = Vec::new();
    for r in 0..n - 1 {
        for c in 0..n - 1 {
            // bl, br, tr, tl
            let corners = [at(r, c), at(r, c + 1), at(r + 1, c + 1), at(r + 1, c)];
            let v = corners.map(|k| k.gravity);
            let p = corners.map(|k| k.position);
            let mut case = 0u8;
            for (bit, &val) in v.iter().enumerate() {
                if val > z {
                    case |= 1 << bit;
                }
            }
            let cross = |e: Edge| {
                let (i, k) = match e {
                    Edge::Bottom => (0, 1),
                    Edge::Right => (1, 2),
                    Edge::Top => (3, 2),
                    Edge::Left => (0, 3),
                };
                let s = (z - v[i]) / (v[k] - v[i]);
                p[i] + (p[k] - p[i]).scale(s)
            };
            let mut seg = |e1: Edge, e2: Edge| out.push(Segment { a: cross(e1), b: cross(e2) });
            use Edge::*;
            let center_above = (v[0] + v[1] + v[2] + v[3]) / 4.0 > z;
            match case {
                0 | 15 => {}
                1 | 14 => seg(Left, Bottom),
                2 | 13 => seg(Bottom, Right),
                3 | 12 => seg(Left, Right),
                4 | 11 => seg(Right, Top),
                6 | 9 => seg(Bottom, Top),
                7 | 8 => seg(Left, Top),
                5 => {
                    if center_above {
                        seg(Bottom, Right);
                        seg(Left, Top);
                    } else {
                        seg(Left, Bottom);
                        seg(Right, Top);
                    }
                }
                10 => {
                    if center_above {
                        seg(Left, Bottom);
                        seg(Right, Top);
                    } else {
                        seg(Bottom, Right);
                        seg(Left, Top);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    out
}
