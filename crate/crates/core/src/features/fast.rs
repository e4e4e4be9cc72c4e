//! FAST-9 segment test with non-maximal suppression and Harris ranking.

use rayon::prelude::*;

use crate::GreyImage;

/// Bresenham circle of radius 3, clockwise from the top.
pub(crate) const CIRCLE: [(i32, i32); 16] =
    [(0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3), (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3)];

const ARC: usize = 9;

/// Corner score at `(x, y)`, or 0 when the segment test fails. The score is
/// the summed excess over `threshold` along the circle for the winning
/// polarity.
fn segment_score(img: &GreyImage, x: usize, y: usize, threshold: i32) -> i32 {
    let w = img.width();
    let data = img.data();
    let c = data[y * w + x] as i32;
    let mut ring = [0i32; 16];
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        ring[k] = data[(y as i32 + dy) as usize * w + (x as i32 + dx) as usize] as i32;
    }
    // quick rejection on the four compass points
    let bright = |v: i32| v > c + threshold;
    let dark = |v: i32| v < c - threshold;
    let compass = [ring[0], ring[4], ring[8], ring[12]];
    if compass.iter().filter(|&&v| bright(v)).count() < 2 && compass.iter().filter(|&&v| dark(v)).count() < 2 {
        return 0;
    }
    let mut best = 0;
    for polarity in [1i32, -1] {
        let mut run = 0;
        let mut found = false;
        for k in 0..16 + ARC {
            let v = ring[k % 16];
            let hit = if polarity > 0 { bright(v) } else { dark(v) };
            if hit {
                run += 1;
                if run >= ARC {
                    found = true;
                    break;
                }
            } else {
                run = 0;
            }
        }
        if found {
            let score: i32 = ring.iter().map(|&v| (polarity * (v - c) - threshold).max(0)).sum();
            best = best.max(score);
        }
    }
    best
}

/// FAST corners at least `margin` pixels from the border, after 3×3
/// non-maximal suppression on the segment score.
pub(crate) fn detect(img: &GreyImage, threshold: u8, margin: usize) -> Vec<(usize, usize)> {
    let (w, h) = (img.width(), img.height());
    let margin = margin.max(3);
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let mut score = vec![0i32; w * h];
    score.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        if y >= margin && y < h - margin {
            for (x, s) in row.iter_mut().enumerate().take(w - margin).skip(margin) {
                *s = segment_score(img, x, y, threshold as i32);
            }
        }
    });
    let mut out = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let s = score[y * w + x];
            if s == 0 {
                continue;
            }
            let mut is_max = true;
            'n: for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let o = score[(y as i32 + dy) as usize * w + (x as i32 + dx) as usize];
                    // ties go to the first pixel in raster order
                    if o > s || (o == s && (dy < 0 || (dy == 0 && dx < 0))) {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                out.push((x, y));
            }
        }
    }
    out
}

/// Harris response `det − k·trace²` of the Sobel structure tensor over a
/// 7×7 window. The caller keeps the window inside the image.
pub(crate) fn harris(img: &GreyImage, x: usize, y: usize) -> f64 {
    const K: f64 = 0.04;
    let w = img.width();
    let d = img.data();
    let px = |xx: usize, yy: usize| d[yy * w + xx] as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for yy in y - 3..=y + 3 {
        for xx in x - 3..=x + 3 {
            let gx = (px(xx + 1, yy - 1) + 2.0 * px(xx + 1, yy) + px(xx + 1, yy + 1)) - (px(xx - 1, yy - 1) + 2.0 * px(xx - 1, yy) + px(xx - 1, yy + 1));
            let gy = (px(xx - 1, yy + 1) + 2.0 * px(xx, yy + 1) + px(xx + 1, yy + 1)) - (px(xx - 1, yy - 1) + 2.0 * px(xx, yy - 1) + px(xx + 1, yy - 1));
            sxx += gx * gx;
            syy += gy * gy;
            sxy += gx * gy;
        }
    }
    sxx * syy - sxy * sxy - K * (sxx + syy) * (sxx + syy)
}
