//! Decode-free identification: match the scene against every candidate
//! sticker's precomputed reference and keep the clear winner.
//!
//! Stickers share their ring, finder and timing artwork, so raw match
//! counts barely separate them. Each candidate's matches are therefore
//! verified geometrically (similarity consensus, then a homography) and
//! the score is the number of consistent pairs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Complex, Point2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{
    descriptors, detect_and_describe, detect_and_describe_with, load_descriptor_set, match_descriptors, save_descriptor_set, DetectorConfig, Feature,
    FeatureError, MatchConfig, MatchSet,
};
use crate::geometry::{apply_homography, homography_dlt};
use crate::sticker::StickerArt;
use crate::warehouse::WarehouseMap;
use crate::GreyImage;

pub const DEFAULT_FEATURES_PER_REF: usize = 500;
pub const DEFAULT_SCENE_FEATURES: usize = 10_000;
/// Pixels per module of reference rasters, close to a sticker seen from
/// about 1.2 m with the default camera.
pub const REFERENCE_MODULE_PX: usize = 6;
const REFERENCE_BORDER_MODULES: usize = 6;
/// Fewer reference features than this means the artwork is unusable.
const MIN_REFERENCE_FEATURES: usize = 20;
const RANSAC_ITERATIONS: usize = 300;
const RANSAC_SEED: u64 = 0x5eed_1d;
/// Consensus tolerances in reference modules.
const COARSE_TOL_MODULES: f64 = 2.0;
const FINE_TOL_MODULES: f64 = 0.6;

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error("reference for sticker {id} has only {found} features")]
    TooFewFeatures { id: u32, found: usize },
    #[error("no candidates given")]
    NoCandidates,
    #[error("sticker {0} has no reference")]
    MissingReference(u32),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Canonical raster of an artwork on a floor border, as used for every
/// reference.
pub fn reference_raster(art: &StickerArt) -> GreyImage {
    art.raster(REFERENCE_MODULE_PX, REFERENCE_BORDER_MODULES * REFERENCE_MODULE_PX)
}

pub fn build_reference(id: u32, features_per_ref: usize) -> Result<Vec<Feature>, IdentifyError> {
    let f = detect_and_describe(&reference_raster(&StickerArt::for_id(id)), features_per_ref)?;
    if f.len() < MIN_REFERENCE_FEATURES.min(features_per_ref) {
        return Err(IdentifyError::TooFewFeatures { id, found: f.len() });
    }
    Ok(f)
}

/// Per-sticker reference descriptor sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceBank {
    entries: BTreeMap<u32, Vec<Feature>>,
}

impl ReferenceBank {
    pub fn build(map: &WarehouseMap, features_per_ref: usize) -> Result<Self, IdentifyError> {
        let built: Result<Vec<(u32, Vec<Feature>)>, IdentifyError> =
            map.stickers().par_iter().map(|s| build_reference(s.id, features_per_ref).map(|f| (s.id, f))).collect();
        Ok(Self { entries: built?.into_iter().collect() })
    }

    pub fn insert(&mut self, id: u32, features: Vec<Feature>) {
        self.entries.insert(id, features);
    }

    pub fn get(&self, id: u32) -> Option<&[Feature]> {
        self.entries.get(&id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn file_name(id: u32) -> String {
        format!("ref_{id:05}.odsc")
    }

    /// One descriptor file per sticker; returns the written paths.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, IdentifyError> {
        std::fs::create_dir_all(dir.as_ref())?;
        let mut out = Vec::new();
        for (id, f) in &self.entries {
            let p = dir.as_ref().join(Self::file_name(*id));
            save_descriptor_set(f, &p)?;
            out.push(p);
        }
        Ok(out)
    }

    /// Every `ref_<id>.odsc` in `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, IdentifyError> {
        let mut bank = Self::default();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let Some(id) = name.strip_prefix("ref_").and_then(|n| n.strip_suffix(".odsc")).and_then(|n| n.parse().ok()) else { continue };
            bank.insert(id, load_descriptor_set(&path)?);
        }
        Ok(bank)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifyConfig {
    /// Winning score must exceed this. Verified scores of the true sticker
    /// under 10 px blur fall to about 10 while rivals stay near 15 or below,
    /// so the ratio test does most of the rejecting.
    pub accept_min: usize,
    /// Winning score must reach this multiple of the runner-up.
    pub margin_ratio: f64,
    pub scene_features: usize,
    pub matching: MatchConfig,
    /// Count only geometrically consistent pairs.
    pub verify: bool,
    /// Scene pyramid levels; brings near, large stickers to reference scale.
    pub pyramid_levels: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self { accept_min: 8, margin_ratio: 1.5, scene_features: DEFAULT_SCENE_FEATURES, matching: MatchConfig::default(), verify: true, pyramid_levels: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Identification {
    Identified { id: u32, score: usize, runner_up: usize, scores: Vec<(u32, usize)> },
    Ambiguous { scores: Vec<(u32, usize)> },
}

impl Identification {
    pub fn id(&self) -> Option<u32> {
        match self {
            Identification::Identified { id, .. } => Some(*id),
            Identification::Ambiguous { .. } => None,
        }
    }

    /// Scores in ascending id order.
    pub fn scores(&self) -> &[(u32, usize)] {
        match self {
            Identification::Identified { scores, .. } | Identification::Ambiguous { scores } => scores,
        }
    }
}

fn to_c(p: Point2<f64>) -> Complex<f64> {
    Complex::new(p.x, p.y)
}

/// Largest set of pairs consistent with one plane-to-plane mapping from
/// scene to reference pixels.
pub fn consistent_pairs(reference: &[Feature], scene: &[Feature], matches: &MatchSet) -> Vec<usize> {
    let n = matches.len();
    if n < 4 {
        return Vec::new();
    }
    let pos = |f: &Feature| Point2::new(f.keypoint.x as f64, f.keypoint.y as f64);
    let r: Vec<Point2<f64>> = matches.pairs.iter().map(|m| pos(&reference[m.reference])).collect();
    let s: Vec<Point2<f64>> = matches.pairs.iter().map(|m| pos(&scene[m.scene])).collect();
    let module = REFERENCE_MODULE_PX as f64;
    let inliers = |f: &dyn Fn(Point2<f64>) -> Option<Point2<f64>>, tol: f64| -> Vec<usize> {
        (0..n).filter(|&i| f(s[i]).is_some_and(|q| (q - r[i]).norm() <= tol)).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(RANSAC_SEED);
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..RANSAC_ITERATIONS {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        let ds = to_c(s[i]) - to_c(s[j]);
        if i == j || ds.norm() < 2.0 {
            continue;
        }
        let a = (to_c(r[i]) - to_c(r[j])) / ds;
        let b = to_c(r[i]) - a * to_c(s[i]);
        let map = |p: Point2<f64>| {
            let q = a * to_c(p) + b;
            Some(Point2::new(q.re, q.im))
        };
        let set = inliers(&map, COARSE_TOL_MODULES * module);
        if set.len() > best.len() {
            best = set;
        }
    }
    let mut result: Vec<usize> = Vec::new();
    let mut current = best;
    for _ in 0..3 {
        if current.len() < 4 {
            break;
        }
        let src: Vec<Point2<f64>> = current.iter().map(|&i| s[i]).collect();
        let dst: Vec<Point2<f64>> = current.iter().map(|&i| r[i]).collect();
        let Ok(h) = homography_dlt(&src, &dst) else { break };
        let set = inliers(&|p| apply_homography(&h, &p), FINE_TOL_MODULES * module);
        if set.len() <= result.len() {
            break;
        }
        result = set.clone();
        current = set;
    }
    result
}

/// Match score of one reference against the scene.
pub fn score_reference(reference: &[Feature], scene: &[Feature], cfg: &IdentifyConfig) -> usize {
    let m = match_descriptors(&descriptors(reference), &descriptors(scene), &cfg.matching);
    if cfg.verify {
        consistent_pairs(reference, scene, &m).len()
    } else {
        m.len()
    }
}

/// Scores every candidate against already extracted scene features.
pub fn identify_features(scene: &[Feature], bank: &ReferenceBank, candidates: &[u32], cfg: &IdentifyConfig) -> Result<Identification, IdentifyError> {
    if candidates.is_empty() {
        return Err(IdentifyError::NoCandidates);
    }
    let mut ids: Vec<u32> = candidates.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let refs: Vec<(u32, &[Feature])> =
        ids.iter().map(|&id| bank.get(id).map(|r| (id, r)).ok_or(IdentifyError::MissingReference(id))).collect::<Result<_, _>>()?;
    let scores: Vec<(u32, usize)> = refs.par_iter().map(|(id, r)| (*id, score_reference(r, scene, cfg))).collect();
    // highest score, lowest id on ties
    let (best_id, best) = scores.iter().fold((u32::MAX, 0usize), |acc, &(id, s)| if s > acc.1 || acc.0 == u32::MAX { (id, s) } else { acc });
    let runner_up = scores.iter().filter(|(id, _)| *id != best_id).map(|(_, s)| *s).max().unwrap_or(0);
    if best > cfg.accept_min && best as f64 >= cfg.margin_ratio * runner_up as f64 {
        Ok(Identification::Identified { id: best_id, score: best, runner_up, scores })
    } else {
        Ok(Identification::Ambiguous { scores })
    }
}

/// Detects scene features (capped at `cfg.scene_features`) and scores the
/// candidates.
pub fn identify_sticker(scene: &GreyImage, bank: &ReferenceBank, candidates: &[u32], cfg: &IdentifyConfig) -> Result<Identification, IdentifyError> {
    if candidates.is_empty() {
        return Err(IdentifyError::NoCandidates);
    }
    let dcfg = DetectorConfig { max_features: cfg.scene_features, pyramid_levels: cfg.pyramid_levels, ..DetectorConfig::default() };
    let features = detect_and_describe_with(scene, &dcfg)?;
    identify_features(&features, bank, candidates, cfg)
}
