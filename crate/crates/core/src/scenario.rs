//! Seeded synthetic trials shared by the benchmark and the acceptance
//! suite: viewpoint sampling, rendering, localisation and error tables.

use std::fmt;

use nalgebra::{Point2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::camera_world_position;
use crate::pipeline::{LocalisationResult, Localiser, Method, Outcome, TrackerState};
use crate::simulate::{render, GroundTruth, RenderConfig, RenderError};
use crate::{CameraIntrinsics, GreyImage, Pose};

/// Range of viewpoints around a floor point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRange {
    pub min_height: f64,
    pub max_height: f64,
    /// Largest angle between the optical axis and straight down.
    pub max_tilt: f64,
    /// Aim point jitter around the target, metres.
    pub aim_jitter: f64,
}

impl Default for ViewRange {
    fn default() -> Self {
        Self { min_height: 0.8, max_height: 1.5, max_tilt: 30f64.to_radians(), aim_jitter: 0.05 }
    }
}

/// Camera looking at a jittered point near `target` from a random height,
/// tilt, azimuth and image rotation.
pub fn sample_view(rng: &mut impl Rng, target: Point2<f64>, range: &ViewRange) -> Pose {
    let h = rng.random_range(range.min_height..=range.max_height);
    let tilt = rng.random_range(0.0..=range.max_tilt);
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let roll = rng.random_range(0.0..std::f64::consts::TAU);
    let j = range.aim_jitter;
    let aim = Point3::new(target.x + rng.random_range(-j..=j), target.y + rng.random_range(-j..=j), 0.0);
    let off = h * tilt.tan();
    let pos = Point3::new(aim.x - off * az.cos(), aim.y - off * az.sin(), h);
    let up = Vector3::new(roll.cos(), roll.sin(), 0.0);
    // `up` is never parallel to a viewing direction within 90° of down
    Pose::look_at(pos, aim, &up).unwrap_or_else(|_| Pose::from_camera_placement(pos, 0.0, 0.0, roll))
}

/// Reciprocal exposure that smears a point at `distance_m` over `blur_px`
/// pixels at `velocity` m/s.
pub fn exposure_for_blur(intr: &CameraIntrinsics, distance_m: f64, velocity: f64, blur_px: f64) -> f64 {
    velocity * intr.fx().max(intr.fy()) / (blur_px * distance_m)
}

/// Distance from the camera centre to a floor point.
pub fn view_distance(pose: &Pose, target: Point2<f64>) -> f64 {
    (camera_world_position(pose) - Point3::new(target.x, target.y, 0.0)).norm()
}

pub fn position_error(result: &LocalisationResult, truth: &Pose) -> Option<f64> {
    let p = result.position?;
    Some((Point3::from(p) - camera_world_position(truth)).norm())
}

/// One rendered and localised frame.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub blurred: bool,
    pub truth: GroundTruth,
    pub result: LocalisationResult,
    pub error_m: Option<f64>,
}

pub fn run_trial(loc: &Localiser, pose: &Pose, cfg: &RenderConfig, frame: u64) -> Result<(GreyImage, TrialRecord), RenderError> {
    let (img, truth) = render(&loc.map, &loc.intr, pose, cfg)?;
    let (result, _) = loc.process_frame(frame, frame as f64, &img, &TrackerState::default());
    let error_m = position_error(&result, pose);
    Ok((img, TrialRecord { blurred: cfg.exposure_reciprocal.is_some() && cfg.velocity != 0.0, truth, result, error_m }))
}

/// Nearest-rank percentile of `values` (need not be sorted).
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub trials: usize,
    pub view: ViewRange,
    /// Blur length of the blurred half of the trials, pixels.
    pub blur_px: f64,
    pub velocity: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { seed: 7, trials: 200, view: ViewRange::default(), blur_px: 10.0, velocity: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionStats {
    pub frames: usize,
    pub localised: usize,
    pub decoded: usize,
    pub identified: usize,
    pub detected_unread: usize,
    pub errors_m: Vec<f64>,
}

impl ConditionStats {
    fn add(&mut self, r: &TrialRecord) {
        self.frames += 1;
        match r.result.outcome {
            Outcome::Localised => self.localised += 1,
            Outcome::DetectedUnread => self.detected_unread += 1,
            Outcome::NoSticker => {}
        }
        match r.result.method {
            Some(Method::Decoded) => self.decoded += 1,
            Some(Method::Identified) => self.identified += 1,
            None => {}
        }
        self.errors_m.extend(r.error_m);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub seed: u64,
    pub sharp: ConditionStats,
    pub blurred: ConditionStats,
    pub failed_renders: usize,
}

/// Alternating sharp and motion-blurred frames over the map's stickers.
pub fn run_bench(loc: &Localiser, cfg: &BenchConfig) -> BenchReport {
    let mut report = BenchReport { seed: cfg.seed, ..BenchReport::default() };
    let stickers = loc.map.stickers();
    if stickers.is_empty() {
        return report;
    }
    for k in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
        let target = stickers[rng.random_range(0..stickers.len())].position();
        let pose = sample_view(&mut rng, target, &cfg.view);
        let blurred = k % 2 == 1;
        let mut rc = RenderConfig { seed: rng.random(), ..RenderConfig::default() };
        if blurred {
            rc.velocity = cfg.velocity;
            rc.heading = rng.random_range(0.0..std::f64::consts::TAU);
            rc.exposure_reciprocal = Some(exposure_for_blur(&loc.intr, view_distance(&pose, target), cfg.velocity, cfg.blur_px));
        }
        match run_trial(loc, &pose, &rc, k as u64) {
            Ok((_, rec)) => {
                if blurred {
                    report.blurred.add(&rec)
                } else {
                    report.sharp.add(&rec)
                }
            }
            Err(_) => report.failed_renders += 1,
        }
    }
    report
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        writeln!(
            f,
            "{:<9} {:>6} {:>9} {:>7} {:>10} {:>8} {:>9} {:>9}",
            "condition", "frames", "localised", "decoded", "identified", "unread", "p50_cm", "p90_cm"
        )?;
        for (name, s) in [("sharp", &self.sharp), ("blurred", &self.blurred)] {
            let cm = |q| percentile(&s.errors_m, q).map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
            writeln!(
                f,
                "{:<9} {:>6} {:>9} {:>7} {:>10} {:>8} {:>9} {:>9}",
                name,
                s.frames,
                s.localised,
                s.decoded,
                s.identified,
                s.detected_unread,
                cm(50.0),
                cm(90.0)
            )?;
        }
        if self.failed_renders > 0 {
            writeln!(f, "failed renders {}", self.failed_renders)?;
        }
        Ok(())
    }
}
