use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;

use super::GeometryError;
use crate::Scalar;

/// Pinhole intrinsics. `ku`, `kv` are in pixels per metre of sensor and
/// `skew` is the non-orthogonality term before multiplication by `focal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T: Scalar> {
    pub ku: T,
    pub kv: T,
    pub skew: T,
    pub cu: T,
    pub cv: T,
    pub focal: T,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: T,
}

/// 5 MP sensor, 1.4 µm pixels, 3.6 mm lens.
pub const DEFAULT_FOCAL_M: f64 = 3.6e-3;
pub const DEFAULT_PIXEL_PITCH_M: f64 = 1.4e-6;
pub const DEFAULT_WIDTH: usize = 2592;
pub const DEFAULT_HEIGHT: usize = 1944;

impl<T: Scalar> Default for CameraIntrinsics<T> {
    fn default() -> Self {
        Self::from_sensor(T::lit(DEFAULT_FOCAL_M), T::lit(DEFAULT_PIXEL_PITCH_M), DEFAULT_WIDTH, DEFAULT_HEIGHT)
    }
}

impl<T: Scalar> CameraIntrinsics<T> {
    /// Square pixels, zero skew, principal point at the image centre
    /// (pixel centres sit on integer coordinates).
    pub fn from_sensor(focal: T, pixel_pitch: T, width: usize, height: usize) -> Self {
        let k = T::one() / pixel_pitch;
        Self {
            ku: k,
            kv: k,
            skew: T::zero(),
            cu: T::lit((width as f64 - 1.0) / 2.0),
            cv: T::lit((height as f64 - 1.0) / 2.0),
            focal,
            width,
            height,
            pixel_pitch,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive");
        }
        if !(self.ku > T::zero() && self.kv > T::zero()) {
            return bad("ku and kv must be positive");
        }
        if !(self.focal > T::zero()) {
            return bad("focal length must be positive");
        }
        if !(self.pixel_pitch > T::zero()) {
            return bad("pixel pitch must be positive");
        }
        let (w, h) = (T::lit(self.width as f64), T::lit(self.height as f64));
        if !(self.cu >= T::zero() && self.cu < w && self.cv >= T::zero() && self.cv < h) {
            return bad("principal point outside the image");
        }
        Ok(())
    }

    /// Focal length in pixels along u.
    pub fn fx(&self) -> T {
        self.focal * self.ku
    }

    pub fn fy(&self) -> T {
        self.focal * self.kv
    }

    /// The 3×3 product of K and the left block of F.
    pub fn camera_matrix(&self) -> Matrix3<T> {
        let (z, o) = (T::zero(), T::one());
        Matrix3::new(self.fx(), self.focal * self.skew, self.cu, z, self.fy(), self.cv, z, z, o)
    }

    /// Same camera on a sensor resampled by `factor` (0.5 halves the
    /// resolution and doubles the pixel pitch).
    pub fn scaled(&self, factor: f64) -> Self {
        let f = T::lit(factor);
        let half = T::lit(0.5);
        Self {
            ku: self.ku * f,
            kv: self.kv * f,
            skew: self.skew * f,
            cu: (self.cu + half) * f - half,
            cv: (self.cv + half) * f - half,
            focal: self.focal,
            width: ((self.width as f64) * factor).round() as usize,
            height: ((self.height as f64) * factor).round() as usize,
            pixel_pitch: self.pixel_pitch / f,
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. Keys absent from
    /// the text keep their default value. `ku`/`kv` follow the pixel pitch.
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let d = Self::default();
        let (mut focal, mut pitch) = (d.focal, d.pixel_pitch);
        let (mut width, mut height) = (d.width, d.height);
        let (mut cu, mut cv, mut skew) = (None, None, d.skew);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GeometryError::Parse { line: i + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || value.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            let int = || value.parse::<usize>().map_err(|e| err(format!("{key}: {e}")));
            match key {
                "focal_m" => focal = T::lit(num()?),
                "pixel_pitch_m" => pitch = T::lit(num()?),
                "cu_px" => cu = Some(T::lit(num()?)),
                "cv_px" => cv = Some(T::lit(num()?)),
                "skew" => skew = T::lit(num()?),
                "width" => width = int()?,
                "height" => height = int()?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let mut out = Self::from_sensor(focal, pitch, width, height);
        out.skew = skew;
        if let Some(cu) = cu {
            out.cu = cu;
        }
        if let Some(cv) = cv {
            out.cv = cv;
        }
        out.validate()?;
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "focal_m = {}", self.focal);
        let _ = writeln!(s, "pixel_pitch_m = {}", self.pixel_pitch);
        let _ = writeln!(s, "cu_px = {}", self.cu);
        let _ = writeln!(s, "cv_px = {}", self.cv);
        let _ = writeln!(s, "skew = {}", self.skew);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "height = {}", self.height);
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
