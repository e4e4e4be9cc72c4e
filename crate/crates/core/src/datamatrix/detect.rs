//! Locating and reading 10×10 symbols inside a region of interest.
//!
//! Every dark connected component is reduced to its convex hull; hull
//! vertices with a roughly right angle and two comparable legs are L-finder
//! candidates. The legs are refined with line fits, the fourth corner is
//! searched by timing-pattern contrast and the module centres are sampled
//! through the resulting homography.

use nalgebra::{Matrix3, Point2, Vector2};

use super::{rs_decode, Payload, SymbolBitmap, SYMBOL_MODULES};
use crate::geometry::{apply_homography, homography_dlt};
use crate::imaging::{label_components, otsu_threshold, trace_outline, Line, QuadCorners};
use crate::GreyImage;

pub const MIN_ROI_SIDE: usize = 40;
const MIN_CONTRAST: f64 = 40.0;
const MIN_LEG_PX: f64 = 15.0;
const MAX_LEG_RATIO: f64 = 2.0;
const MAX_BORDER_MISMATCHES: usize = 6;
/// Pixels per module of the rectified view.
const RECTIFIED_MODULE_PX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub enum DecodeMode {
    /// Search the image as given.
    Direct,
    /// Warp the quadrilateral (in ROI pixel coordinates) to a square first.
    Rectified(QuadCorners),
}

/// All distinct payloads readable in `roi`; empty when nothing decodes.
pub fn decode_roi(roi: &GreyImage, mode: &DecodeMode) -> Vec<Payload> {
    if roi.width() < MIN_ROI_SIDE || roi.height() < MIN_ROI_SIDE {
        return Vec::new();
    }
    match mode {
        DecodeMode::Direct => decode_direct(roi),
        DecodeMode::Rectified(quad) => match rectify(roi, quad) {
            Some(img) => decode_direct(&img),
            None => Vec::new(),
        },
    }
}

/// Resamples the quad onto a square raster with a one-eighth margin.
fn rectify(roi: &GreyImage, quad: &QuadCorners) -> Option<GreyImage> {
    let side = quad.min_side().max(1.0);
    // Enough resolution for a 28-module sticker at the target module size,
    // never below the source's own sampling.
    let inner = (28.0 * RECTIFIED_MODULE_PX).max(side).min(1024.0);
    let margin = (inner / 8.0).round();
    let total = (inner + 2.0 * margin) as usize;
    let dst =
        [Point2::new(margin, margin), Point2::new(margin, margin + inner), Point2::new(margin + inner, margin + inner), Point2::new(margin + inner, margin)];
    let h = homography_dlt(&dst, &quad.corners).ok()?;
    Some(GreyImage::from_fn(total, total, |x, y| match apply_homography(&h, &Point2::new(x as f64, y as f64)) {
        Some(p) => roi.sample_bilinear(p.x, p.y).round().clamp(0.0, 255.0) as u8,
        None => 255,
    }))
}

fn percentile_spread(img: &GreyImage) -> (u8, u8) {
    let mut hist = [0usize; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let n = img.data().len();
    let find = |frac: f64| {
        let target = (frac * n as f64) as usize;
        let mut acc = 0;
        for (v, &c) in hist.iter().enumerate() {
            acc += c;
            if acc > target {
                return v as u8;
            }
        }
        255
    };
    (find(0.05), find(0.95))
}

fn decode_direct(img: &GreyImage) -> Vec<Payload> {
    let (lo, hi) = percentile_spread(img);
    if (hi as f64 - lo as f64) < MIN_CONTRAST {
        return Vec::new();
    }
    let t = otsu_threshold(img.data().iter().copied());
    let (w, h) = (img.width(), img.height());
    let data = img.data();
    let (labels, comps) = label_components(w, h, |i| data[i] <= t);

    let mut out: Vec<Payload> = Vec::new();
    for comp in &comps {
        let (x0, y0, x1, y1) = comp.bbox;
        let extent = (x1 - x0 + 1).max(y1 - y0 + 1) as f64;
        if extent < MIN_LEG_PX || comp.pixel_count < 30 {
            continue;
        }
        // A symbol fills at most about half its bounding box with dark;
        // skip blobs that are nearly solid or span the whole ROI.
        if (x1 - x0 + 1) as usize >= w && (y1 - y0 + 1) as usize >= h {
            continue;
        }
        let label = comp.label;
        let outline =
            trace_outline(comp.start, |x, y| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && labels[y as usize * w + x as usize] == label);
        let pts: Vec<Point2<f64>> = outline.iter().map(|&(x, y)| Point2::new(x as f64, y as f64)).collect();
        let hull = convex_hull(&pts);
        if hull.len() < 3 {
            continue;
        }
        let eps = (0.025 * extent).max(1.2);
        let poly = simplify(&hull, eps);
        for cand in l_candidates(&poly) {
            if let Some(p) = read_candidate(img, t, &pts, cand) {
                match out.iter_mut().find(|q| q.bytes == p.bytes) {
                    Some(q) if q.errors_corrected > p.errors_corrected => *q = p,
                    Some(_) => {}
                    None => out.push(p),
                }
                break;
            }
        }
    }
    out
}

/// Andrew's monotone chain; returns the hull counter-clockwise in a y-up
/// frame without repeated end point.
pub(crate) fn convex_hull(points: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut p: Vec<Point2<f64>> = points.to_vec();
    p.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Point2<f64>> = Vec::new();
    for q in &p {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(*q);
    }
    let mut upper: Vec<Point2<f64>> = Vec::new();
    for q in p.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(*q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Drops the closed-polygon vertex closest to the chord of its neighbours
/// until every remaining vertex deviates by at least `eps`.
fn simplify(poly: &[Point2<f64>], eps: f64) -> Vec<Point2<f64>> {
    let mut p = poly.to_vec();
    while p.len() > 3 {
        let n = p.len();
        let mut best = (f64::INFINITY, 0);
        for i in 0..n {
            let (a, b, c) = (p[(i + n - 1) % n], p[i], p[(i + 1) % n]);
            let chord = c - a;
            let len = chord.norm();
            let d = if len < 1e-12 { (b - a).norm() } else { ((b - a).perp(&chord)).abs() / len };
            if d < best.0 {
                best = (d, i);
            }
        }
        if best.0 >= eps {
            break;
        }
        p.remove(best.1);
    }
    p
}

/// `(a, c, b)`: finder corner `c`, the end `a` of the leg that runs along
/// the solid column, and the end `b` of the solid row.
type Candidate = (Point2<f64>, Point2<f64>, Point2<f64>);

fn l_candidates(poly: &[Point2<f64>]) -> Vec<Candidate> {
    let n = poly.len();
    let mut out = Vec::new();
    for i in 0..n {
        let c = poly[i];
        let (p, q) = (poly[(i + n - 1) % n], poly[(i + 1) % n]);
        let (u, v) = (p - c, q - c);
        let (lu, lv) = (u.norm(), v.norm());
        if lu < MIN_LEG_PX || lv < MIN_LEG_PX || lu.max(lv) > MAX_LEG_RATIO * lu.min(lv) {
            continue;
        }
        let angle = (u.dot(&v) / (lu * lv)).clamp(-1.0, 1.0).acos().to_degrees();
        if !(50.0..=130.0).contains(&angle) {
            continue;
        }
        // In image coordinates (y down) the column end a and row end b of an
        // upright symbol satisfy (a − c) × (b − c) > 0; rotations keep the sign.
        if u.perp(&v) > 0.0 {
            out.push((p, c, q));
        } else {
            out.push((q, c, p));
        }
    }
    out
}

/// Module-space homography: (0,0)→a, (0,10)→c, (10,10)→b, (10,0)→d, in
/// (column, row) module coordinates of the outer symbol edge.
fn module_homography(a: Point2<f64>, c: Point2<f64>, b: Point2<f64>, d: Point2<f64>) -> Option<Matrix3<f64>> {
    let n = SYMBOL_MODULES as f64;
    let src = [Point2::new(0.0, 0.0), Point2::new(0.0, n), Point2::new(n, n), Point2::new(n, 0.0)];
    homography_dlt(&src, &[a, c, b, d]).ok()
}

fn sample_module(img: &GreyImage, h: &Matrix3<f64>, col: f64, row: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (dx, dy) in [(0.0, 0.0), (-0.2, 0.0), (0.2, 0.0), (0.0, -0.2), (0.0, 0.2)] {
        let p = apply_homography(h, &Point2::new(col + dx, row + dy))?;
        if p.x < -0.5 || p.y < -0.5 || p.x > img.width() as f64 - 0.5 || p.y > img.height() as f64 - 0.5 {
            return None;
        }
        acc += img.sample_bilinear(p.x, p.y);
    }
    Some(acc / 5.0)
}

/// Agreement of the timing pattern and the surrounding quiet zone with
/// the pattern implied by corner `d`.
fn timing_score(img: &GreyImage, t: f64, a: Point2<f64>, c: Point2<f64>, b: Point2<f64>, d: Point2<f64>) -> f64 {
    let Some(h) = module_homography(a, c, b, d) else {
        return f64::NEG_INFINITY;
    };
    let last = SYMBOL_MODULES - 1;
    let mut score = 0.0;
    let mut add = |col: f64, row: f64, dark: bool| {
        if let Some(v) = sample_module(img, &h, col, row) {
            score += if dark { t - v } else { v - t };
        }
    };
    for i in 0..SYMBOL_MODULES {
        add(i as f64 + 0.5, 0.5, i % 2 == 0);
        add(last as f64 + 0.5, i as f64 + 0.5, i % 2 == 1 || i == last);
        add(i as f64 + 0.5, -0.5, false);
        add(SYMBOL_MODULES as f64 + 0.5, i as f64 + 0.5, false);
    }
    score
}

/// Outline points within `band` of the segment, away from its ends.
fn leg_points(outline: &[Point2<f64>], from: Point2<f64>, to: Point2<f64>, band: f64) -> Vec<Point2<f64>> {
    let dir = to - from;
    let len2 = dir.norm_squared();
    outline
        .iter()
        .copied()
        .filter(|p| {
            let s = (p - from).dot(&dir) / len2;
            let dist = (p - from).perp(&dir).abs() / len2.sqrt();
            (0.12..=0.88).contains(&s) && dist <= band
        })
        .collect()
}

/// Fits the leg and moves it half a pixel away from `inside`, onto the
/// true edge of the dark boundary pixels.
fn refine_leg(outline: &[Point2<f64>], from: Point2<f64>, to: Point2<f64>, inside: Point2<f64>) -> Line {
    let band = (0.05 * (to - from).norm()).max(1.5);
    let pts = leg_points(outline, from, to, band);
    let mut line = if pts.len() >= 5 { Line::fit(&pts).unwrap_or(Line::through(from, to)) } else { Line::through(from, to) };
    if line.distance(inside) > 0.0 {
        line.normal = -line.normal;
        line.offset = -line.offset;
    }
    line.offset += 0.5;
    line
}

fn project_on(line: &Line, p: Point2<f64>) -> Point2<f64> {
    p - line.normal * line.distance(p)
}

fn read_candidate(img: &GreyImage, t: u8, outline: &[Point2<f64>], (a0, c0, b0): Candidate) -> Option<Payload> {
    let mid = Point2::from((a0.coords + b0.coords) / 2.0);
    let la = refine_leg(outline, c0, a0, mid);
    let lb = refine_leg(outline, c0, b0, mid);
    let c = la.intersect(&lb)?;
    let ua: Vector2<f64> = (a0 - c0).normalize();
    let ub: Vector2<f64> = (b0 - c0).normalize();
    let a = project_on(&la, a0) + ua * 0.5;
    let b = project_on(&lb, b0) + ub * 0.5;
    let leg = ((a - c).norm() + (b - c).norm()) / 2.0;
    let tf = t as f64 + 0.5;

    // Coarse-to-fine search for the corner opposite the finder.
    let mut best_d = a + (b - c);
    let mut best = timing_score(img, tf, a, c, b, best_d);
    let mut step = (leg / 40.0).max(0.5);
    let mut radius = 0.2 * leg;
    while step >= 0.1 {
        let centre = best_d;
        let k = (radius / step).ceil() as i32;
        for iy in -k..=k {
            for ix in -k..=k {
                let d = centre + Vector2::new(ix as f64 * step, iy as f64 * step);
                let s = timing_score(img, tf, a, c, b, d);
                if s > best {
                    best = s;
                    best_d = d;
                }
            }
        }
        radius = step;
        step /= 4.0;
    }

    let h = module_homography(a, c, b, best_d)?;
    let mut bitmap = SymbolBitmap { modules: [[false; SYMBOL_MODULES]; SYMBOL_MODULES] };
    for (row, line) in bitmap.modules.iter_mut().enumerate() {
        for (col, m) in line.iter_mut().enumerate() {
            *m = sample_module(img, &h, col as f64 + 0.5, row as f64 + 0.5)? < tf;
        }
    }
    if bitmap.border_mismatches() > MAX_BORDER_MISMATCHES {
        return None;
    }
    rs_decode(&bitmap.codewords()).ok()
}
