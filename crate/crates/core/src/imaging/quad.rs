use nalgebra::{Point2, Vector2};

use super::{Contour, GreyImage, ImageError};

/// Offset between the centres of the outermost dark pixels and the true
/// dark/light boundary, in pixels.
pub const DARK_EDGE_OFFSET: f64 = 0.5;

/// Four corners ordered counter-clockwise as displayed, starting from the
/// top-left-most corner (smallest `x + y`, then smallest `x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCorners {
    pub corners: [Point2<f64>; 4],
}

impl QuadCorners {
    /// Validates convexity and distinctness, then normalises the order.
    pub fn new(corners: [Point2<f64>; 4]) -> Result<Self, ImageError> {
        let mut c = corners;
        for i in 0..4 {
            for j in i + 1..4 {
                if (c[i] - c[j]).norm() < 1e-9 {
                    return Err(ImageError::NotAQuad("coincident corners"));
                }
            }
        }
        if signed_area_f(&c) > 0.0 {
            c.reverse();
        }
        let mut crosses = [0.0; 4];
        for (i, cross) in crosses.iter_mut().enumerate() {
            let e0 = c[(i + 1) % 4] - c[i];
            let e1 = c[(i + 2) % 4] - c[(i + 1) % 4];
            *cross = e0.x * e1.y - e0.y * e1.x;
        }
        if !(crosses.iter().all(|&v| v < 0.0) || crosses.iter().all(|&v| v > 0.0)) {
            return Err(ImageError::NotAQuad("quadrilateral is not convex"));
        }
        let start = (0..4)
            .min_by(|&a, &b| {
                let ka = c[a].x + c[a].y;
                let kb = c[b].x + c[b].y;
                ka.total_cmp(&kb).then(c[a].x.total_cmp(&c[b].x))
            })
            .unwrap_or(0);
        c.rotate_left(start);
        Ok(Self { corners: c })
    }

    pub fn area(&self) -> f64 {
        signed_area_f(&self.corners).abs()
    }

    pub fn centroid(&self) -> Point2<f64> {
        let s = self.corners.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords);
        Point2::from(s / 4.0)
    }

    /// Shortest edge length.
    pub fn min_side(&self) -> f64 {
        (0..4).map(|i| (self.corners[(i + 1) % 4] - self.corners[i]).norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: Point2<f64>) -> bool {
        // Visual CCW with y down means every edge has p on its non-positive side.
        (0..4).all(|i| {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            let e = b - a;
            let r = p - a;
            e.x * r.y - e.y * r.x <= 1e-12
        })
    }

    /// Moves every edge outward by `offset` pixels and re-intersects.
    pub fn expand(&self, offset: f64) -> QuadCorners {
        let centre = self.centroid();
        let lines: Vec<Line> = (0..4)
            .map(|i| {
                let a = self.corners[i];
                let b = self.corners[(i + 1) % 4];
                let mut line = Line::through(a, b);
                if line.normal.dot(&(a - centre)) < 0.0 {
                    line.normal = -line.normal;
                    line.offset = -line.offset;
                }
                line.offset += offset;
                line
            })
            .collect();
        let mut out = self.corners;
        for i in 0..4 {
            if let Some(p) = lines[(i + 3) % 4].intersect(&lines[i]) {
                out[i] = p;
            }
        }
        QuadCorners { corners: out }
    }

    /// Same corner set with the order shifted by `k` places.
    pub fn rotated(&self, k: usize) -> [Point2<f64>; 4] {
        let mut c = self.corners;
        c.rotate_left(k % 4);
        c
    }
}

fn signed_area_f(c: &[Point2<f64>]) -> f64 {
    let n = c.len();
    (0..n).map(|i| c[i].x * c[(i + 1) % n].y - c[(i + 1) % n].x * c[i].y).sum::<f64>() / 2.0
}

/// Line `normal · p = offset` with unit normal.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Line {
    pub normal: Vector2<f64>,
    pub offset: f64,
}

impl Line {
    pub(crate) fn through(a: Point2<f64>, b: Point2<f64>) -> Line {
        let d = (b - a).normalize();
        let normal = Vector2::new(-d.y, d.x);
        Line { normal, offset: normal.dot(&a.coords) }
    }

    /// Total-least-squares fit; `None` for fewer than two distinct points.
    pub(crate) fn fit(points: &[Point2<f64>]) -> Option<Line> {
        if points.len() < 2 {
            return None;
        }
        let n = points.len() as f64;
        let mean = points.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords) / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in points {
            let d = p.coords - mean;
            sxx += d.x * d.x;
            sxy += d.x * d.y;
            syy += d.y * d.y;
        }
        if sxx + syy < 1e-12 {
            return None;
        }
        // Direction of largest spread of the 2x2 scatter matrix.
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let dir = Vector2::new(theta.cos(), theta.sin());
        let normal = Vector2::new(-dir.y, dir.x);
        Some(Line { normal, offset: normal.dot(&mean) })
    }

    pub(crate) fn intersect(&self, other: &Line) -> Option<Point2<f64>> {
        let det = self.normal.x * other.normal.y - self.normal.y * other.normal.x;
        if det.abs() < 1e-9 {
            return None;
        }
        let x = (self.offset * other.normal.y - self.normal.y * other.offset) / det;
        let y = (self.normal.x * other.offset - self.offset * other.normal.x) / det;
        Some(Point2::new(x, y))
    }

    pub(crate) fn distance(&self, p: Point2<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

fn support_indices(pts: &[Point2<f64>], keys: [&dyn Fn(&Point2<f64>) -> f64; 4]) -> Option<[usize; 4]> {
    let mut idx = [0usize; 4];
    for (slot, key) in idx.iter_mut().zip(keys) {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            let v = key(p);
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        *slot = best;
    }
    idx.sort_unstable();
    (idx[0] != idx[1] && idx[1] != idx[2] && idx[2] != idx[3]).then_some(idx)
}

/// Corners of a quadrilateral contour.
///
/// Seeds the corners with the points of extreme `x + y` and `x - y` (or the
/// axis extremes when those span a larger quad, as for a square turned by
/// 45°), then intersects total-least-squares lines fitted to the four
/// contour runs between the seeds. Corners are returned in contour-pixel
/// coordinates; see [`QuadCorners::expand`] and [`DARK_EDGE_OFFSET`] to move
/// them onto the dark/light boundary.
pub fn extract_quad_corners(contour: &Contour) -> Result<QuadCorners, ImageError> {
    if contour.points.len() < 4 {
        return Err(ImageError::NotAQuad("contour has fewer than 4 points"));
    }
    let pts: Vec<Point2<f64>> = contour.points.iter().map(|&(x, y)| Point2::new(x as f64, y as f64)).collect();
    let diag = support_indices(&pts, [&|p| -(p.x + p.y), &|p| p.x + p.y, &|p| p.x - p.y, &|p| p.y - p.x]);
    let axis = support_indices(&pts, [&|p| -p.x, &|p| p.x, &|p| -p.y, &|p| p.y]);
    let area_of = |idx: &[usize; 4]| signed_area_f(&idx.map(|i| pts[i])).abs();
    let seeds = match (diag, axis) {
        (Some(d), Some(a)) => {
            if area_of(&a) > area_of(&d) + 1e-9 {
                a
            } else {
                d
            }
        }
        (Some(d), None) => d,
        (None, Some(a)) => a,
        (None, None) => return Err(ImageError::NotAQuad("fewer than 4 distinct extreme points")),
    };
    if area_of(&seeds) < 1e-6 {
        return Err(ImageError::NotAQuad("extreme points are collinear"));
    }

    let n = pts.len();
    let lines: Vec<Option<Line>> = (0..4)
        .map(|i| {
            let from = seeds[i];
            let to = seeds[(i + 1) % 4];
            let len = (to + n - from) % n + 1;
            let trim = len * 15 / 100;
            let run: Vec<Point2<f64>> = (trim.max(1)..len.saturating_sub(trim.max(1))).map(|k| pts[(from + k) % n]).collect();
            if run.len() >= 2 {
                Line::fit(&run)
            } else {
                Some(Line::through(pts[from], pts[to]))
            }
        })
        .collect();

    let mut corners = seeds.map(|i| pts[i]);
    for i in 0..4 {
        let raw = pts[seeds[i]];
        let prev_len = (pts[seeds[i]] - pts[seeds[(i + 3) % 4]]).norm();
        let next_len = (pts[seeds[(i + 1) % 4]] - pts[seeds[i]]).norm();
        let limit = (0.25 * prev_len.min(next_len)).max(3.0);
        if let (Some(a), Some(b)) = (lines[(i + 3) % 4], lines[i]) {
            if let Some(p) = a.intersect(&b) {
                if (p - raw).norm() <= limit {
                    corners[i] = p;
                }
            }
        }
    }
    QuadCorners::new(corners)
}

/// Moves each edge of `quad` onto the strongest intensity step within
/// `search` pixels along its normal, with sub-pixel line fits.
///
/// Profiles are sampled across the middle 70% of every edge. The step is
/// found at the derivative peak, then placed by the area under the
/// normalised profile within 2 px of it. Returns `None` if an edge collects
/// too few samples or the refined lines fail to meet.
pub fn refine_quad_edges(img: &GreyImage, quad: &QuadCorners, search: f64) -> Option<QuadCorners> {
    const STEP: f64 = 0.25;
    let k = (search / STEP).ceil().max(2.0) as i32;
    let mut lines = Vec::with_capacity(4);
    for i in 0..4 {
        let (a, b) = (quad.corners[i], quad.corners[(i + 1) % 4]);
        let len = (b - a).norm();
        if len < 4.0 {
            return None;
        }
        let d = (b - a) / len;
        let n = Vector2::new(-d.y, d.x);
        let samples = (len * 0.7).ceil() as usize;
        let mut pts = Vec::with_capacity(samples);
        for j in 0..samples {
            let t = 0.15 + 0.7 * (j as f64 + 0.5) / samples as f64;
            let base = a + (b - a) * t;
            let profile: Vec<f64> = (-k - 1..=k + 1).map(|m| img.sample_bilinear(base.x + n.x * m as f64 * STEP, base.y + n.y * m as f64 * STEP)).collect();
            let grad: Vec<f64> = (1..profile.len() - 1).map(|m| (profile[m + 1] - profile[m - 1]).abs()).collect();
            let (peak, &g) = grad.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1))?;
            if g < 8.0 || peak == 0 || peak + 1 == grad.len() {
                continue;
            }
            // Area under the normalised step within 2 px of the peak: exact
            // for a box-filtered edge, unlike peak fitting on the gradient.
            let o = (peak as f64 - k as f64) * STEP;
            let q: Vec<f64> = (-8..=8).map(|m| img.sample_bilinear(base.x + n.x * (o + m as f64 * STEP), base.y + n.y * (o + m as f64 * STEP))).collect();
            let (vs, ve) = (0.5 * (q[0] + q[1]), 0.5 * (q[15] + q[16]));
            if (ve - vs).abs() < 8.0 {
                continue;
            }
            let area: f64 = q.windows(2).map(|w| 1.0 - 0.5 * (w[0] + w[1] - 2.0 * vs) / (ve - vs)).sum::<f64>() * STEP;
            let offset = o - 2.0 + area;
            pts.push(base + n * offset);
        }
        if pts.len() < 6 {
            return None;
        }
        let mut line = Line::fit(&pts)?;
        // one pass of outlier rejection
        let kept: Vec<Point2<f64>> = pts.iter().copied().filter(|p| line.distance(*p).abs() <= 0.75).collect();
        if kept.len() >= 6 {
            line = Line::fit(&kept)?;
        }
        lines.push(line);
    }
    let mut out = quad.corners;
    for i in 0..4 {
        out[i] = lines[(i + 3) % 4].intersect(&lines[i])?;
        if (out[i] - quad.corners[i]).norm() > 2.0 * search + 1.0 {
            return None;
        }
    }
    QuadCorners::new(out).ok()
}
