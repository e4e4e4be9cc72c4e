//! Per-frame localisation: detect sticker features, cluster them into
//! regions, read (or identify) the sticker and solve the camera pose.

use std::time::Instant;

use nalgebra::{Matrix3, Point2, Point3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_keypoints, default_merge_dist, processing_order, roi_from_cluster, ClusterSet, Roi, DEFAULT_K, DEFAULT_ROI_MARGIN};
use crate::datamatrix::{decode_roi, DecodeMode, Payload};
use crate::features::{
    descriptors, detect_and_describe, detect_and_describe_with, match_descriptors, Descriptor, DetectorConfig, FeatureError, MatchConfig, Presence,
    PresenceThresholds,
};
use crate::geometry::{apply_homography, camera_world_position, homography_dlt, pose_from_homography, refine_pose};
use crate::identify::{identify_sticker, reference_raster, Identification, IdentifyConfig, ReferenceBank};
use crate::imaging::{binarize, extract_quad_corners, refine_quad_edges, trace_contours, Binarization, QuadCorners, DARK_EDGE_OFFSET};
use crate::sticker::{StickerArt, MODULE_M, STICKER_MODULES, STICKER_SIZE_M};
use crate::warehouse::{StickerSpec, WarehouseMap, DEFAULT_CANDIDATE_RADIUS_M};
use crate::{CameraIntrinsics, GreyImage, Pose};

pub const STATE_EXPIRY_S: f64 = 5.0;
/// Seed of the random-payload sticker used as the detection reference.
pub const GENERIC_REFERENCE_SEED: u64 = 0x57_1c4e;
/// Fraction of the ROI size added on each side before the quad search.
pub const LOCATE_GROWTH: f64 = 0.25;
/// Fixes with a larger reprojection RMS come from a wrong quad.
pub const MAX_FIX_RMS_PX: f64 = 2.0;
const MIN_STICKER_AREA_PX: f64 = 900.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub reference_features: usize,
    pub matching: MatchConfig,
    pub presence: PresenceThresholds,
    /// `None` derives the merge distance from the intrinsics.
    pub merge_dist: Option<f64>,
    pub roi_margin: f64,
    pub identify: IdentifyConfig,
    pub candidate_radius_m: f64,
    pub state_expiry_s: f64,
    pub refine_iterations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig { max_features: 5000, pyramid_levels: 4, ..DetectorConfig::default() },
            reference_features: 500,
            matching: MatchConfig::default(),
            presence: PresenceThresholds::default(),
            merge_dist: None,
            roi_margin: DEFAULT_ROI_MARGIN,
            identify: IdentifyConfig::default(),
            candidate_radius_m: DEFAULT_CANDIDATE_RADIUS_M,
            state_expiry_s: STATE_EXPIRY_S,
            refine_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Localised,
    DetectedUnread,
    NoSticker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Decoded,
    Identified,
}

/// Milliseconds spent per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub detect_ms: f64,
    pub match_ms: f64,
    pub cluster_ms: f64,
    pub read_ms: f64,
    pub pose_ms: f64,
    pub total_ms: f64,
}

/// World→camera transform in plain arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let r = p.rotation;
        Self {
            rotation: [[r[(0, 0)], r[(0, 1)], r[(0, 2)]], [r[(1, 0)], r[(1, 1)], r[(1, 2)]], [r[(2, 0)], r[(2, 1)], r[(2, 2)]]],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl PoseRecord {
    pub fn to_pose(&self) -> Pose {
        let r = self.rotation;
        Pose { rotation: Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]), translation: self.translation.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalisationResult {
    pub frame: u64,
    pub timestamp_s: f64,
    pub outcome: Outcome,
    pub presence: Presence,
    pub match_count: usize,
    pub clusters: usize,
    /// Camera centre in world coordinates, metres.
    pub position: Option<[f64; 3]>,
    pub pose: Option<PoseRecord>,
    pub sticker_id: Option<u32>,
    pub method: Option<Method>,
    pub reprojection_rms_px: Option<f64>,
    pub error: Option<String>,
    pub timing: StageTimings,
}

impl LocalisationResult {
    fn empty(frame: u64, timestamp_s: f64) -> Self {
        Self {
            frame,
            timestamp_s,
            outcome: Outcome::NoSticker,
            presence: Presence::Absent,
            match_count: 0,
            clusters: 0,
            position: None,
            pose: None,
            sticker_id: None,
            method: None,
            reprojection_rms_px: None,
            error: None,
            timing: StageTimings::default(),
        }
    }

    /// Same result with all timings zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self { timing: StageTimings::default(), ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fix {
    pub position: [f64; 3],
    pub timestamp_s: f64,
}

/// Last known position, if any.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub last: Option<Fix>,
}

impl TrackerState {
    /// Last floor position if it is at most `expiry_s` old at `now`.
    pub fn recent_position(&self, now: f64, expiry_s: f64) -> Option<Point2<f64>> {
        self.last.filter(|f| now - f.timestamp_s <= expiry_s).map(|f| Point2::new(f.position[0], f.position[1]))
    }

    fn advance(&self, result: &LocalisationResult, expiry_s: f64) -> TrackerState {
        match (result.outcome, result.position) {
            (Outcome::Localised, Some(position)) => TrackerState { last: Some(Fix { position, timestamp_s: result.timestamp_s }) },
            _ => TrackerState { last: self.last.filter(|f| result.timestamp_s - f.timestamp_s <= expiry_s) },
        }
    }
}

/// One input frame; unreadable frames carry the error text.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: u64,
    pub timestamp_s: f64,
    pub image: Result<GreyImage, String>,
}

/// Sticker pose estimate within one region.
#[derive(Debug, Clone)]
pub struct StickerFix {
    pub pose: Pose,
    pub rms_px: f64,
    /// Outer ring corners in image pixels, `local_corners` order.
    pub corners: [Point2<f64>; 4],
}

/// Grey level halfway between the ink (2nd percentile of the crop) and the
/// floor (median of the crop border). A windowed mean fails here: the light
/// sticker interior drags the floor beside the ring below it.
fn ink_floor_threshold(crop: &GreyImage) -> Option<u8> {
    let (w, h) = (crop.width(), crop.height());
    if w < 3 || h < 3 {
        return None;
    }
    let mut border: Vec<u8> =
        (0..w).flat_map(|x| [crop.get(x, 0), crop.get(x, h - 1)]).chain((1..h - 1).flat_map(|y| [crop.get(0, y), crop.get(w - 1, y)])).collect();
    let mid = border.len() / 2;
    let floor = *border.select_nth_unstable(mid).1;
    let mut all = crop.data().to_vec();
    let k = all.len() / 50;
    let ink = *all.select_nth_unstable(k).1;
    (floor > ink).then(|| ((ink as u16 + floor as u16) / 2) as u8)
}

/// Largest dark blob clear of the crop border, as a refined outer quad in
/// crop pixels.
pub fn find_sticker_quad(crop: &GreyImage) -> Option<QuadCorners> {
    let bin = binarize(crop, Binarization::Fixed(ink_floor_threshold(crop)?)).ok()?;
    let (w, h) = (crop.width() as i32, crop.height() as i32);
    let contour = trace_contours(&bin).into_iter().take(3).find(|c| {
        let (x0, y0, x1, y1) = c.bounding_box();
        x0 > 0 && y0 > 0 && x1 < w - 1 && y1 < h - 1 && c.area() >= MIN_STICKER_AREA_PX
    })?;
    let rough = extract_quad_corners(&contour).ok()?.expand(DARK_EDGE_OFFSET);
    let search = (0.4 * rough.min_side() / STICKER_MODULES as f64).clamp(1.5, 3.0);
    Some(refine_quad_edges(crop, &rough, search).unwrap_or(rough))
}

fn module_corners() -> [Point2<f64>; 4] {
    let m = STICKER_MODULES as f64;
    [Point2::new(0.0, 0.0), Point2::new(0.0, m), Point2::new(m, m), Point2::new(m, 0.0)]
}

/// Cyclic order of `quad` that best agrees with `art`, with the
/// module→image homography for that order.
fn orient(crop: &GreyImage, quad: &QuadCorners, art: &StickerArt) -> Option<(usize, Matrix3<f64>)> {
    let mut best: Option<(f64, usize, Matrix3<f64>)> = None;
    for k in 0..4 {
        let h = homography_dlt(&module_corners(), &quad.rotated(k)).ok()?;
        let mut samples = Vec::with_capacity(STICKER_MODULES * STICKER_MODULES);
        for my in 2..STICKER_MODULES - 2 {
            for mx in 2..STICKER_MODULES - 2 {
                let p = apply_homography(&h, &Point2::new(mx as f64 + 0.5, my as f64 + 0.5))?;
                samples.push((crop.sample_bilinear(p.x, p.y), art.dark[my][mx]));
            }
        }
        let mean = samples.iter().map(|s| s.0).sum::<f64>() / samples.len() as f64;
        let score: f64 = samples.iter().map(|&(v, dark)| if dark { mean - v } else { v - mean }).sum();
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, k, h));
        }
    }
    best.map(|(_, k, h)| (k, h))
}

/// Pose of the camera from a sticker of known identity inside `crop`,
/// whose top-left pixel sits at `offset` in the full frame.
pub fn locate_sticker(
    crop: &GreyImage,
    offset: (usize, usize),
    sticker: &StickerSpec,
    intr: &CameraIntrinsics,
    refine_iterations: usize,
) -> Option<StickerFix> {
    let quad = find_sticker_quad(crop)?;
    let art = StickerArt::for_id(sticker.id);
    let (k, h) = orient(crop, &quad, &art)?;
    let outer = quad.rotated(k);

    // The ring's inner edge gives four more correspondences.
    let mut image_pts: Vec<Point2<f64>> = outer.to_vec();
    let half = STICKER_SIZE_M / 2.0;
    let mut local: Vec<Point2<f64>> = vec![Point2::new(-half, half), Point2::new(-half, -half), Point2::new(half, -half), Point2::new(half, half)];
    let m = STICKER_MODULES as f64;
    let inner_modules = [(1.0, 1.0), (1.0, m - 1.0), (m - 1.0, m - 1.0), (m - 1.0, 1.0)];
    let guess: Option<Vec<Point2<f64>>> = inner_modules.iter().map(|&(x, y)| apply_homography(&h, &Point2::new(x, y))).collect();
    if let Some(g) = guess {
        if let Ok(gq) = QuadCorners::new([g[0], g[1], g[2], g[3]]) {
            let search = (0.4 * gq.min_side() / (m - 2.0)).clamp(1.0, 3.0);
            if let Some(inner) = refine_quad_edges(crop, &gq, search) {
                // refinement normalises the corner order; match by proximity
                for (&(x, y), gi) in inner_modules.iter().zip(&g) {
                    let p = inner.corners.iter().copied().min_by(|a, b| (a - gi).norm().total_cmp(&(b - gi).norm()))?;
                    image_pts.push(p);
                    local.push(Point2::new(x * MODULE_M - half, half - y * MODULE_M));
                }
            }
        }
    }

    let placement = sticker.placement();
    let world: Vec<Point3<f64>> = local.iter().map(|p| placement.to_world(p)).collect();
    let pixels: Vec<Point2<f64>> = image_pts.iter().map(|p| Point2::new(p.x + offset.0 as f64, p.y + offset.1 as f64)).collect();
    let ground: Vec<Point2<f64>> = world.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let hom = homography_dlt(&ground, &pixels).ok()?;
    let pose0 = pose_from_homography(intr, &hom).ok()?;
    let refined = refine_pose(intr, &pose0, &world, &pixels, refine_iterations, 1e-12);
    if refined.diverged {
        return None;
    }
    let corners = [0, 1, 2, 3].map(|i| pixels[i]);
    Some(StickerFix { pose: refined.pose, rms_px: refined.final_rms, corners })
}

/// The registered sticker named by most payloads (lowest id on ties).
fn sticker_from_payloads<'a>(payloads: &[Payload], map: &'a WarehouseMap) -> Option<&'a StickerSpec> {
    let mut ids: Vec<u32> = payloads.iter().filter_map(|p| map.lookup_by_payload(&p.bytes).ok()).map(|s| s.id).collect();
    ids.sort_unstable();
    let mut best: Option<(u32, usize)> = None;
    for chunk in ids.chunk_by(|a, b| a == b) {
        if best.is_none_or(|b| chunk.len() > b.1) {
            best = Some((chunk[0], chunk.len()));
        }
    }
    best.and_then(|(id, _)| map.get(id))
}

/// Descriptor set of the random-payload detection reference.
pub fn generic_reference(features: usize) -> Vec<Descriptor> {
    let art = StickerArt::random(&mut ChaCha8Rng::seed_from_u64(GENERIC_REFERENCE_SEED));
    descriptors(&detect_and_describe(&reference_raster(&art), features).expect("reference raster is large enough"))
}

/// Grows `roi` by `frac` of its size on every side, clipped to the frame.
fn grow_roi(roi: &Roi, frac: f64, width: usize, height: usize) -> Roi {
    let dx = (roi.width() as f64 * frac).ceil() as usize;
    let dy = (roi.height() as f64 * frac).ceil() as usize;
    Roi { x0: roi.x0.saturating_sub(dx), y0: roi.y0.saturating_sub(dy), x1: (roi.x1 + dx).min(width), y1: (roi.y1 + dy).min(height) }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Front half of the pipeline for one frame.
#[derive(Debug, Clone)]
pub struct Regions {
    pub match_count: usize,
    pub presence: Presence,
    /// Scene positions of the generic-reference matches.
    pub points: Vec<Point2<f64>>,
    pub clusters: ClusterSet,
    /// One ROI per cluster, in processing order.
    pub rois: Vec<Roi>,
    pub detect_ms: f64,
    pub match_ms: f64,
    pub cluster_ms: f64,
}

/// Everything needed to localise frames against one warehouse.
pub struct Localiser {
    pub map: WarehouseMap,
    pub intr: CameraIntrinsics,
    pub bank: ReferenceBank,
    pub cfg: PipelineConfig,
    generic: Vec<Descriptor>,
}

impl Localiser {
    pub fn new(map: WarehouseMap, intr: CameraIntrinsics, bank: ReferenceBank, cfg: PipelineConfig) -> Self {
        let generic = generic_reference(cfg.reference_features);
        Self { map, intr, bank, cfg, generic }
    }

    fn candidates(&self, state: &TrackerState, now: f64) -> Vec<u32> {
        let centre = state.recent_position(now, self.cfg.state_expiry_s);
        self.map.candidate_stickers(centre, self.cfg.candidate_radius_m).into_iter().filter(|id| self.bank.get(*id).is_some()).collect()
    }

    /// Registered sticker named by the codes in `crop`, read directly and
    /// then through the rectified outer quad.
    pub fn decode_region(&self, crop: &GreyImage) -> Option<&StickerSpec> {
        if let Some(s) = sticker_from_payloads(&decode_roi(crop, &DecodeMode::Direct), &self.map) {
            return Some(s);
        }
        let quad = find_sticker_quad(crop)?;
        sticker_from_payloads(&decode_roi(crop, &DecodeMode::Rectified(quad)), &self.map)
    }

    /// Reads one region: decode, then identification.
    fn read_region(&self, crop: &GreyImage, state: &TrackerState, now: f64) -> Option<(&StickerSpec, Method)> {
        if let Some(s) = self.decode_region(crop) {
            return Some((s, Method::Decoded));
        }
        let candidates = self.candidates(state, now);
        if candidates.is_empty() {
            return None;
        }
        match identify_sticker(crop, &self.bank, &candidates, &self.cfg.identify) {
            Ok(Identification::Identified { id, .. }) => self.map.get(id).map(|s| (s, Method::Identified)),
            _ => None,
        }
    }

    /// Detection, presence, clustering and ROIs of one frame. Clusters and
    /// ROIs are left empty when presence is `Absent`.
    pub fn regions(&self, img: &GreyImage) -> Result<Regions, FeatureError> {
        let t = Instant::now();
        let scene = detect_and_describe_with(img, &self.cfg.detector)?;
        let detect_ms = ms(t);
        let t = Instant::now();
        let matches = match_descriptors(&self.generic, &descriptors(&scene), &self.cfg.matching);
        let presence = self.cfg.presence.classify(matches.len());
        let match_ms = ms(t);
        let t = Instant::now();
        let mut out = Regions {
            match_count: matches.len(),
            presence,
            points: Vec::new(),
            clusters: ClusterSet::default(),
            rois: Vec::new(),
            detect_ms,
            match_ms,
            cluster_ms: 0.0,
        };
        if presence != Presence::Absent {
            out.points = matches.pairs.iter().map(|m| Point2::new(scene[m.scene].keypoint.x as f64, scene[m.scene].keypoint.y as f64)).collect();
            let merge = self.cfg.merge_dist.unwrap_or_else(|| default_merge_dist(&self.intr));
            out.clusters = cluster_keypoints(&out.points, DEFAULT_K, merge);
            out.rois =
                processing_order(&out.clusters).iter().map(|c| roi_from_cluster(c, &out.points, self.cfg.roi_margin, img.width(), img.height())).collect();
        }
        out.cluster_ms = ms(t);
        Ok(out)
    }

    pub fn process_frame(&self, frame: u64, timestamp_s: f64, img: &GreyImage, state: &TrackerState) -> (LocalisationResult, TrackerState) {
        let start = Instant::now();
        let mut res = LocalisationResult::empty(frame, timestamp_s);
        if img.width() != self.intr.width || img.height() != self.intr.height {
            res.error = Some(format!("frame is {}x{}, intrinsics expect {}x{}", img.width(), img.height(), self.intr.width, self.intr.height));
            res.timing.total_ms = ms(start);
            let next = state.advance(&res, self.cfg.state_expiry_s);
            return (res, next);
        }

        let regions = match self.regions(img) {
            Ok(r) => r,
            Err(e) => {
                res.error = Some(e.to_string());
                res.timing.total_ms = ms(start);
                let next = state.advance(&res, self.cfg.state_expiry_s);
                return (res, next);
            }
        };
        res.match_count = regions.match_count;
        res.presence = regions.presence;
        res.clusters = regions.clusters.clusters.len();
        res.timing.detect_ms = regions.detect_ms;
        res.timing.match_ms = regions.match_ms;
        res.timing.cluster_ms = regions.cluster_ms;

        if res.presence != Presence::Absent {
            for roi in regions.rois {
                let Some(crop) = img.crop(roi.x0, roi.y0, roi.x1, roi.y1) else { continue };
                let t = Instant::now();
                let read = self.read_region(&crop, state, timestamp_s);
                res.timing.read_ms += ms(t);
                let Some((sticker, method)) = read else { continue };
                let t = Instant::now();
                // The quad search wants floor around the whole ring.
                let wide = grow_roi(&roi, LOCATE_GROWTH, img.width(), img.height());
                let fix = img
                    .crop(wide.x0, wide.y0, wide.x1, wide.y1)
                    .and_then(|c| locate_sticker(&c, (wide.x0, wide.y0), sticker, &self.intr, self.cfg.refine_iterations))
                    .filter(|f| f.rms_px <= MAX_FIX_RMS_PX);
                res.timing.pose_ms += ms(t);
                if let Some(fix) = fix {
                    let c = camera_world_position(&fix.pose);
                    res.outcome = Outcome::Localised;
                    res.position = Some([c.x, c.y, c.z]);
                    res.pose = Some(PoseRecord::from(&fix.pose));
                    res.sticker_id = Some(sticker.id);
                    res.method = Some(method);
                    res.reprojection_rms_px = Some(fix.rms_px);
                    break;
                }
            }
            if res.outcome != Outcome::Localised && res.presence == Presence::Detected {
                res.outcome = Outcome::DetectedUnread;
            }
        }
        res.timing.total_ms = ms(start);
        let next = state.advance(&res, self.cfg.state_expiry_s);
        (res, next)
    }

    /// Results for `frames` in order, state threaded through; unreadable
    /// frames produce a `no_sticker` result carrying the error.
    pub fn process_sequence<'a, I>(&'a self, frames: I) -> impl Iterator<Item = LocalisationResult> + 'a
    where
        I: IntoIterator<Item = Frame>,
        I::IntoIter: 'a,
    {
        frames.into_iter().scan(TrackerState::default(), move |state, f| {
            let (res, next) = match &f.image {
                Ok(img) => self.process_frame(f.id, f.timestamp_s, img, state),
                Err(e) => {
                    let mut r = LocalisationResult::empty(f.id, f.timestamp_s);
                    r.error = Some(e.clone());
                    let next = state.advance(&r, self.cfg.state_expiry_s);
                    (r, next)
                }
            };
            *state = next;
            Some(res)
        })
    }
}
