//! Synthetic camera frames of the warehouse floor with exact ground truth.
//!
//! Every pixel is back-projected through the ground-plane homography of
//! the camera pose. Far from any sticker the floor is a single sample;
//! around stickers each pixel averages a `supersample²` grid. Motion blur
//! averages sub-frames rendered along the camera's path during the
//! exposure.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{camera_world_position, project, project_homog, GeometryError};
use crate::sticker::{local_to_module, StickerArt, FLOOR_LEVEL};
use crate::warehouse::WarehouseMap;
use crate::{CameraIntrinsics, GreyImage, Pose};

const MAX_BLUR_SAMPLES: usize = 64;
/// Floor texture lattice pitch, metres.
const TEXTURE_CELL_M: f64 = 0.02;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("camera is not above the ground plane")]
    BelowGround,
    #[error("no pixel sees the ground plane")]
    HorizonOnly,
    #[error("invalid render configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("truth file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Reciprocal exposure time `N`, s⁻¹; `None` renders a sharp frame.
    pub exposure_reciprocal: Option<f64>,
    /// Camera speed over the floor, m/s.
    pub velocity: f64,
    /// Direction of travel in the world XY plane, radians from +X.
    pub heading: f64,
    pub noise_sigma: f64,
    /// Relative illumination gain.
    pub illumination: f64,
    pub background: u8,
    /// Amplitude in grey levels of the world-anchored floor texture.
    pub floor_texture: f64,
    /// Samples per pixel axis over sticker footprints. Motion-blur
    /// sub-frames use half as many, the sub-frames themselves averaging
    /// along the motion.
    pub supersample: usize,
    pub min_blur_samples: usize,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            exposure_reciprocal: None,
            velocity: 0.0,
            heading: 0.0,
            noise_sigma: 2.0,
            illumination: 1.0,
            background: FLOOR_LEVEL,
            floor_texture: 6.0,
            supersample: 6,
            min_blur_samples: 8,
            seed: 0,
        }
    }
}

impl RenderConfig {
    fn validate(&self) -> Result<(), RenderError> {
        if !(self.noise_sigma >= 0.0) {
            return Err(RenderError::InvalidConfig("noise sigma must be non-negative"));
        }
        if !(self.illumination > 0.0) {
            return Err(RenderError::InvalidConfig("illumination gain must be positive"));
        }
        if matches!(self.exposure_reciprocal, Some(n) if !(n > 0.0)) {
            return Err(RenderError::InvalidConfig("exposure reciprocal must be positive"));
        }
        if self.supersample == 0 {
            return Err(RenderError::InvalidConfig("supersample must be at least 1"));
        }
        Ok(())
    }

    /// Camera travel during the exposure, metres.
    pub fn blur_length_m(&self) -> f64 {
        match self.exposure_reciprocal {
            Some(n) => self.velocity.abs() / n,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibleSticker {
    pub id: u32,
    /// Projected corners in [`crate::sticker::local_corners`] order.
    pub corners: [Point2<f64>; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Pose at mid-exposure.
    pub pose: Pose,
    pub visible: Vec<VisibleSticker>,
}

impl GroundTruth {
    pub fn visible_ids(&self) -> Vec<u32> {
        self.visible.iter().map(|v| v.id).collect()
    }

    /// `pose x y z roll pitch yaw` then one `sticker id u0 v0 … u3 v3` line
    /// per visible sticker.
    pub fn to_text(&self) -> String {
        let (p, roll, pitch, yaw) = self.pose.camera_placement();
        let mut s = format!("pose {} {} {} {} {} {}\n", p.x, p.y, p.z, roll, pitch, yaw);
        for v in &self.visible {
            let _ = write!(s, "sticker {}", v.id);
            for c in &v.corners {
                let _ = write!(s, " {} {}", c.x, c.y);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, RenderError> {
        let mut pose = None;
        let mut visible = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let f: Vec<&str> = raw.split_whitespace().collect();
            let err = |msg: &str| RenderError::Parse { line, msg: msg.to_string() };
            let nums = |s: &[&str]| s.iter().map(|v| v.parse::<f64>()).collect::<Result<Vec<f64>, _>>().map_err(|e| err(&e.to_string()));
            match f.first() {
                None => continue,
                Some(&"pose") if f.len() == 7 => {
                    let v = nums(&f[1..])?;
                    pose = Some(Pose::from_camera_placement(Point3::new(v[0], v[1], v[2]), v[3], v[4], v[5]));
                }
                Some(&"sticker") if f.len() == 10 => {
                    let id = f[1].parse().map_err(|_| err("bad sticker id"))?;
                    let v = nums(&f[2..])?;
                    let corners = [0, 1, 2, 3].map(|k| Point2::new(v[2 * k], v[2 * k + 1]));
                    visible.push(VisibleSticker { id, corners });
                }
                _ => return Err(err("expected `pose` with 6 values or `sticker` with id and 8 values")),
            }
        }
        let pose = pose.ok_or(RenderError::Parse { line: 1, msg: "missing pose line".into() })?;
        Ok(Self { pose, visible })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RenderError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RenderError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Pixel → ground-plane homography (inverse of `K·[r1 r2 t]`).
fn ground_homography(intr: &CameraIntrinsics, pose: &Pose) -> Result<Matrix3<f64>, RenderError> {
    let r = pose.rotation;
    let m = Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), pose.translation]);
    (intr.camera_matrix() * m).try_inverse().ok_or(RenderError::HorizonOnly)
}

#[inline]
fn to_ground(hinv: &Matrix3<f64>, u: f64, v: f64) -> Option<(f64, f64)> {
    let g = hinv * Vector3::new(u, v, 1.0);
    // `g.z` is the reciprocal depth; non-positive means above the horizon.
    (g.z > 0.0).then(|| (g.x / g.z, g.y / g.z))
}

fn hash2(ix: i64, iy: i64) -> f64 {
    let mut h = (ix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (iy as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    h ^= h >> 31;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 29;
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Smooth world-anchored value noise in `[-1, 1]`.
fn floor_noise(x: f64, y: f64) -> f64 {
    let (gx, gy) = (x / TEXTURE_CELL_M, y / TEXTURE_CELL_M);
    let (ix, iy) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - ix, gy - iy);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (ix, iy) = (ix as i64, iy as i64);
    let top = hash2(ix, iy) * (1.0 - sx) + hash2(ix + 1, iy) * sx;
    let bot = hash2(ix, iy + 1) * (1.0 - sx) + hash2(ix + 1, iy + 1) * sx;
    top * (1.0 - sy) + bot * sy
}

struct Scene<'a> {
    intr: &'a CameraIntrinsics,
    cfg: &'a RenderConfig,
    stickers: Vec<(crate::sticker::StickerPlacement, StickerArt)>,
}

impl Scene<'_> {
    fn floor_at(&self, x: f64, y: f64) -> f64 {
        self.cfg.background as f64 + if self.cfg.floor_texture != 0.0 { self.cfg.floor_texture * floor_noise(x, y) } else { 0.0 }
    }

    /// Adds `weight × (sticker − floor)` over each sticker's footprint.
    fn add_stickers(&self, pose: &Pose, weight: f64, ss: usize, acc: &mut [f32]) -> Result<(), RenderError> {
        let (w, h) = (self.intr.width, self.intr.height);
        let hinv = ground_homography(self.intr, pose)?;
        let offsets: Vec<f64> = (0..ss).map(|i| (i as f64 + 0.5) / ss as f64 - 0.5).collect();
        let norm = weight / (ss * ss) as f64;
        for (placement, art) in &self.stickers {
            let corners = placement.world_corners();
            let homog: Vec<Vector3<f64>> = corners.iter().map(|c| project_homog(self.intr, pose, c)).collect();
            let Some((x0, y0, x1, y1)) = footprint_bbox(&homog, w, h) else { continue };
            if x1 <= x0 || y1 <= y0 {
                continue;
            }
            acc[y0 * w..y1 * w].par_chunks_mut(w).enumerate().for_each(|(r, row)| {
                let v = (y0 + r) as f64;
                for (x, out) in row.iter_mut().enumerate().take(x1).skip(x0) {
                    let mut sum = 0.0;
                    for oy in &offsets {
                        for ox in &offsets {
                            let Some((gx, gy)) = to_ground(&hinv, x as f64 + ox, v + oy) else { continue };
                            let local = placement.to_local(&Point2::new(gx, gy));
                            let (mx, my) = local_to_module(&local);
                            if let Some(level) = art.level_at(mx, my) {
                                sum += level as f64 - self.floor_at(gx, gy);
                            }
                        }
                    }
                    if sum != 0.0 {
                        *out += (sum * norm) as f32;
                    }
                }
            });
        }
        Ok(())
    }

    fn floor_layer(&self, pose: &Pose) -> Result<Vec<f32>, RenderError> {
        let (w, h) = (self.intr.width, self.intr.height);
        let bg = self.cfg.background as f32;
        if self.cfg.floor_texture == 0.0 {
            return Ok(vec![bg; w * h]);
        }
        let hinv = ground_homography(self.intr, pose)?;
        let mut out = vec![bg; w * h];
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                if let Some((gx, gy)) = to_ground(&hinv, x as f64, y as f64) {
                    *o = self.floor_at(gx, gy) as f32;
                }
            }
        });
        Ok(out)
    }
}

/// Camera poses spread evenly over the exposure, centred on `pose`.
pub fn motion_blur_poses(pose: &Pose, cfg: &RenderConfig, samples: usize) -> Vec<Pose> {
    let length = cfg.blur_length_m();
    if length == 0.0 || samples < 2 {
        return vec![*pose];
    }
    let (c, heading) = (camera_world_position(pose), Vector3::new(cfg.heading.cos(), cfg.heading.sin(), 0.0));
    (0..samples)
        .map(|k| {
            let s = (k as f64 / (samples - 1) as f64 - 0.5) * length;
            let pos = c + heading * s;
            Pose { rotation: pose.rotation, translation: -(pose.rotation * pos.coords) }
        })
        .collect()
}

/// Pixel-wise mean of equally sized frames.
pub fn apply_motion_blur(frames: &[GreyImage]) -> Option<GreyImage> {
    let first = frames.first()?;
    let (w, h) = (first.width(), first.height());
    if frames.iter().any(|f| f.width() != w || f.height() != h) {
        return None;
    }
    let n = frames.len() as f64;
    let mut acc = vec![0.0f64; w * h];
    for f in frames {
        for (a, &p) in acc.iter_mut().zip(f.data()) {
            *a += p as f64;
        }
    }
    GreyImage::new(w, h, acc.iter().map(|a| (a / n).round().clamp(0.0, 255.0) as u8).collect()).ok()
}

/// Pixel bounding box (half-open, one pixel of slack) of a homogeneous
/// image polygon cut at the near plane and clipped to the frame.
fn footprint_bbox(homog: &[Vector3<f64>], w: usize, h: usize) -> Option<(usize, usize, usize, usize)> {
    const NEAR: f64 = 1e-6;
    let mut front = Vec::with_capacity(homog.len() + 2);
    for i in 0..homog.len() {
        let (p, q) = (homog[i], homog[(i + 1) % homog.len()]);
        if p.z > NEAR {
            front.push(Point2::new(p.x / p.z, p.y / p.z));
        }
        if (p.z > NEAR) != (q.z > NEAR) {
            let t = (NEAR - p.z) / (q.z - p.z);
            let r = p + (q - p) * t;
            front.push(Point2::new(r.x / r.z, r.y / r.z));
        }
    }
    // one pixel of slack around the frame keeps edge pixels' supersamples
    let poly = clip_to_frame(front, w, h, 1.0);
    if poly.len() < 3 {
        return None;
    }
    let (mut umin, mut vmin, mut umax, mut vmax) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &poly {
        umin = umin.min(p.x);
        umax = umax.max(p.x);
        vmin = vmin.min(p.y);
        vmax = vmax.max(p.y);
    }
    let lo = |v: f64, n: usize| (v.floor() - 1.0).clamp(0.0, n as f64) as usize;
    let hi = |v: f64, n: usize| (v.ceil() + 2.0).clamp(0.0, n as f64) as usize;
    let b = (lo(umin, w), lo(vmin, h), hi(umax, w), hi(vmax, h));
    (b.2 > b.0 && b.3 > b.1).then_some(b)
}

/// Sutherland–Hodgman clip of `poly` to the pixel rectangle grown by `slack`.
fn clip_to_frame(mut poly: Vec<Point2<f64>>, w: usize, h: usize, slack: f64) -> Vec<Point2<f64>> {
    let (xmin, ymin, xmax, ymax) = (-0.5 - slack, -0.5 - slack, w as f64 - 0.5 + slack, h as f64 - 0.5 + slack);
    let planes: [(f64, f64, f64); 4] = [(1.0, 0.0, -xmin), (-1.0, 0.0, xmax), (0.0, 1.0, -ymin), (0.0, -1.0, ymax)];
    for (a, b, c) in planes {
        if poly.len() < 3 {
            return Vec::new();
        }
        let mut next = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
            let (dp, dq) = (a * p.x + b * p.y + c, a * q.x + b * q.y + c);
            if dp >= 0.0 {
                next.push(p);
            }
            if (dp >= 0.0) != (dq >= 0.0) {
                next.push(p + (q - p) * (dp / (dp - dq)));
            }
        }
        poly = next;
    }
    poly
}

/// Projected quad clipped to the frame has positive area.
fn quad_intersects_frame(q: &[Point2<f64>; 4], w: usize, h: usize) -> bool {
    let poly = clip_to_frame(q.to_vec(), w, h, 0.0);
    let n = poly.len();
    let area: f64 = (0..n).map(|i| poly[i].x * poly[(i + 1) % n].y - poly[(i + 1) % n].x * poly[i].y).sum();
    n >= 3 && area.abs() > 1e-9
}

/// Stickers whose projected quad overlaps the frame, with their corners.
pub fn visible_stickers(map: &WarehouseMap, intr: &CameraIntrinsics, pose: &Pose) -> Vec<VisibleSticker> {
    map.stickers()
        .iter()
        .filter_map(|s| {
            let w = s.placement().world_corners();
            let mut corners = [Point2::origin(); 4];
            for (c, p) in corners.iter_mut().zip(w.iter()) {
                *c = project(intr, pose, p).ok()?;
            }
            quad_intersects_frame(&corners, intr.width, intr.height).then_some(VisibleSticker { id: s.id, corners })
        })
        .collect()
}

/// Noise-free, gain-free radiance in grey levels.
fn radiance(map: &WarehouseMap, intr: &CameraIntrinsics, pose: &Pose, cfg: &RenderConfig) -> Result<Vec<f32>, RenderError> {
    let scene = Scene { intr, cfg, stickers: map.stickers().iter().map(|s| (s.placement(), StickerArt::for_id(s.id))).collect() };
    let mut acc = scene.floor_layer(pose)?;
    let length = cfg.blur_length_m();
    let poses = if length > 0.0 {
        let height = camera_world_position(pose).z;
        let blur_px = length * intr.fx().max(intr.fy()) / height;
        let n = ((2.0 * blur_px).ceil() as usize + 1).clamp(cfg.min_blur_samples.max(2), MAX_BLUR_SAMPLES.max(cfg.min_blur_samples));
        motion_blur_poses(pose, cfg, n)
    } else {
        vec![*pose]
    };
    let weight = 1.0 / poses.len() as f64;
    let ss = if poses.len() > 1 { cfg.supersample.div_ceil(2) } else { cfg.supersample };
    for p in &poses {
        scene.add_stickers(p, weight, ss, &mut acc)?;
    }
    Ok(acc)
}

/// Renders the frame seen from `pose` and the matching ground truth.
pub fn render(map: &WarehouseMap, intr: &CameraIntrinsics, pose: &Pose, cfg: &RenderConfig) -> Result<(GreyImage, GroundTruth), RenderError> {
    cfg.validate()?;
    intr.validate()?;
    if camera_world_position(pose).z <= 0.0 {
        return Err(RenderError::BelowGround);
    }
    let hinv = ground_homography(intr, pose)?;
    let (w, h) = (intr.width, intr.height);
    let probes = [(0.0, 0.0), (w as f64 - 1.0, 0.0), (0.0, h as f64 - 1.0), (w as f64 - 1.0, h as f64 - 1.0), (intr.cu, intr.cv)];
    if probes.iter().all(|&(u, v)| to_ground(&hinv, u, v).is_none()) {
        return Err(RenderError::HorizonOnly);
    }

    let acc = radiance(map, intr, pose, cfg)?;
    let gain = cfg.illumination;
    let sigma = cfg.noise_sigma;
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut data = vec![0u8; w * h];
    data.par_chunks_mut(w).zip(acc.par_chunks(w)).enumerate().for_each(|(y, (out, src))| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (y as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for (o, &v) in out.iter_mut().zip(src) {
            let n = if sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            *o = (gain * v as f64 + n).round().clamp(0.0, 255.0) as u8;
        }
    });
    let img = GreyImage::new(w, h, data).expect("buffer sized to intrinsics");
    Ok((img, GroundTruth { pose: *pose, visible: visible_stickers(map, intr, pose) }))
}
