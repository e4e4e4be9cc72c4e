use super::{GreyImage, ImageError, IntegralImage};

/// Binarisation rule. Dark pixels map to 0, everything else to 255.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binarization {
    /// Dark when `value < threshold`.
    Fixed(u8),
    /// Dark when `value < local_mean - offset`, the mean taken over a
    /// `window × window` box clipped to the image.
    MeanOffset { window: usize, offset: f64 },
}

pub fn binarize(img: &GreyImage, method: Binarization) -> Result<GreyImage, ImageError> {
    let (w, h) = (img.width(), img.height());
    match method {
        Binarization::Fixed(t) => {
            let data = img.data().iter().map(|&v| if v < t { 0 } else { 255 }).collect();
            GreyImage::new(w, h, data)
        }
        Binarization::MeanOffset { window, offset } => {
            if window < 3 || window % 2 == 0 {
                return Err(ImageError::EvenWindow(window));
            }
            let ii = IntegralImage::new(img);
            let r = window / 2;
            let mut data = vec![255u8; w * h];
            for y in 0..h {
                let y0 = y.saturating_sub(r);
                let y1 = (y + r + 1).min(h);
                for x in 0..w {
                    let x0 = x.saturating_sub(r);
                    let x1 = (x + r + 1).min(w);
                    let n = ((x1 - x0) * (y1 - y0)) as f64;
                    let mean = ii.sum(x0, y0, x1, y1) as f64 / n;
                    if (img.get(x, y) as f64) < mean - offset {
                        data[y * w + x] = 0;
                    }
                }
            }
            GreyImage::new(w, h, data)
        }
    }
}

/// Otsu threshold computed over a set of samples: pixels `<= t` form the
/// dark class.
pub fn otsu_threshold(values: impl IntoIterator<Item = u8>) -> u8 {
    let mut hist = [0u64; 256];
    let mut total = 0u64;
    for v in values {
        hist[v as usize] += 1;
        total += 1;
    }
    if total == 0 {
        return 127;
    }
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut w_b = 0.0;
    let mut sum_b = 0.0;
    let mut best = (f64::MIN, 0u8);
    for (t, &count) in hist.iter().enumerate() {
        w_b += count as f64;
        if w_b == 0.0 {
            continue;
        }
        let w_f = total as f64 - w_b;
        if w_f == 0.0 {
            break;
        }
        sum_b += t as f64 * count as f64;
        let m_b = sum_b / w_b;
        let m_f = (sum_all - sum_b) / w_f;
        let between = w_b * w_f * (m_b - m_f) * (m_b - m_f);
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    best.1
}
