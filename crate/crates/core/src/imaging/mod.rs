//! Greyscale image buffer, PGM I/O, binarisation, contour tracing and
//! quadrilateral corner extraction.

mod contour;
mod pgm;
mod quad;
mod threshold;

pub use contour::{trace_contours, Contour};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm};
pub use quad::{extract_quad_corners, refine_quad_edges, QuadCorners, DARK_EDGE_OFFSET};
pub use threshold::{binarize, otsu_threshold, Binarization};

pub(crate) use contour::{label_components, trace_outline};
pub(crate) use quad::Line;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("buffer length {len} does not match {width}x{height}")]
    BufferSize { width: usize, height: usize, len: usize },
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported maxval {0}; only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("mean-offset window must be odd and >= 3, got {0}")]
    EvenWindow(usize),
    #[error("not a quad: {0}")]
    NotAQuad(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit luminance image.
#[derive(Clone, PartialEq, Eq)]
pub struct GreyImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GreyImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreyImage").field("width", &self.width).field("height", &self.height).finish_non_exhaustive()
    }
}

impl GreyImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::BufferSize { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    /// Image filled with a constant value.
    ///
    /// Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut img = Self::filled(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    /// Pixel value, `None` outside the image.
    #[inline]
    pub fn get_checked(&self, x: i64, y: i64) -> Option<u8> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.data[y as usize * self.width + x as usize])
        }
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Bilinear sample with pixel centres at integer coordinates; coordinates
    /// are clamped to the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }

    /// Copy of the half-open pixel rectangle `[x0, x1) × [y0, y1)`, clipped to
    /// the image. Returns `None` when the clipped rectangle is empty.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Option<GreyImage> {
        let x1 = x1.min(self.width);
        let y1 = y1.min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        let w = x1 - x0;
        let mut data = Vec::with_capacity(w * (y1 - y0));
        for y in y0..y1 {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x1]);
        }
        Some(GreyImage { width: w, height: y1 - y0, data })
    }

    /// Rotates the image by 90° counter-clockwise as displayed: pixel `(x, y)`
    /// moves to `(y, width - 1 - x)`.
    pub fn rotate90(&self) -> GreyImage {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let nx = y;
                let ny = w - 1 - x;
                out[ny * h + nx] = self.data[y * w + x];
            }
        }
        GreyImage { width: h, height: w, data: out }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Simple non-cryptographic checksum (FNV-1a over dims and pixels).
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        };
        for b in (self.width as u64).to_le_bytes().into_iter().chain((self.height as u64).to_le_bytes()) {
            feed(b);
        }
        for &b in &self.data {
            feed(b);
        }
        hash
    }
}

/// Summed-area table with a zero guard row and column.
pub(crate) struct IntegralImage {
    width: usize,
    sums: Vec<u64>,
}

impl IntegralImage {
    pub(crate) fn new(img: &GreyImage) -> Self {
        let w = img.width() + 1;
        let h = img.height() + 1;
        let mut sums = vec![0u64; w * h];
        for y in 0..img.height() {
            let mut row = 0u64;
            for x in 0..img.width() {
                row += img.get(x, y) as u64;
                sums[(y + 1) * w + x + 1] = sums[y * w + x + 1] + row;
            }
        }
        Self { width: w, sums }
    }

    /// Sum over the half-open rectangle `[x0, x1) × [y0, y1)`.
    #[inline]
    pub(crate) fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        let w = self.width;
        self.sums[y1 * w + x1] + self.sums[y0 * w + x0] - self.sums[y0 * w + x1] - self.sums[y1 * w + x0]
    }
}
