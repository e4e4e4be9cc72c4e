//! Oriented FAST keypoints with rotated BRIEF descriptors, Hamming matching
//! and the match-count presence rule.

mod fast;
mod odsc;

pub use odsc::{decode_descriptor_set, encode_descriptor_set, load_descriptor_set, save_descriptor_set};

use std::f64::consts::TAU;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::imaging::IntegralImage;
use crate::GreyImage;

/// Distance from the border inside which no keypoint is reported.
pub const MARGIN: usize = 16;
pub const MIN_IMAGE_SIDE: usize = 32;
const ORIENTATION_RADIUS: i32 = 15;
const PATTERN_RADIUS: f64 = 13.0;
const PATTERN_SIGMA: f64 = 31.0 / 5.0;
const PATTERN_SEED: u64 = 0x0b71_ef5e_ed00_0256;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {width}x{height} is smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")]
    ImageTooSmall { width: usize, height: usize },
    #[error("descriptor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub response: f32,
    /// Radians in `[0, 2π)`, image coordinates (y down).
    pub angle: f32,
}

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    #[inline]
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (k, w) in self.0.iter().enumerate() {
            out[8 * k..8 * k + 8].copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8; 32]) -> Self {
        let mut w = [0u64; 4];
        for (k, word) in w.iter_mut().enumerate() {
            *word = u64::from_le_bytes(b[8 * k..8 * k + 8].try_into().unwrap());
        }
        Descriptor(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Descriptor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub max_features: usize,
    pub fast_threshold: u8,
    /// 1 disables the pyramid.
    pub pyramid_levels: usize,
    pub scale_factor: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { max_features: 500, fast_threshold: 20, pyramid_levels: 1, scale_factor: 1.2 }
    }
}

/// Test-point pairs `(x1, y1, x2, y2)` drawn once from a fixed seed.
fn pattern() -> &'static [[f64; 4]; 256] {
    static P: OnceLock<[[f64; 4]; 256]> = OnceLock::new();
    P.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
        let normal = Normal::new(0.0, PATTERN_SIGMA).unwrap();
        let point = |rng: &mut ChaCha8Rng| loop {
            let (x, y): (f64, f64) = (normal.sample(rng).round(), normal.sample(rng).round());
            if x * x + y * y <= PATTERN_RADIUS * PATTERN_RADIUS {
                return (x, y);
            }
        };
        let mut out = [[0.0; 4]; 256];
        for pair in out.iter_mut() {
            loop {
                let (a, b) = (point(&mut rng), point(&mut rng));
                if a != b {
                    *pair = [a.0, a.1, b.0, b.1];
                    break;
                }
            }
        }
        out
    })
}

/// Orientation of the intensity centroid over a disc.
fn orientation(img: &GreyImage, x: usize, y: usize) -> f64 {
    let w = img.width();
    let d = img.data();
    let r = ORIENTATION_RADIUS;
    let (mut m10, mut m01) = (0.0f64, 0.0f64);
    for dy in -r..=r {
        let half = ((r * r - dy * dy) as f64).sqrt() as i32;
        let row = (y as i32 + dy) as usize * w;
        for dx in -half..=half {
            let v = d[row + (x as i32 + dx) as usize] as f64;
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    m01.atan2(m10).rem_euclid(TAU)
}

fn describe(ii: &IntegralImage, x: usize, y: usize, angle: f64) -> Descriptor {
    let (s, c) = angle.sin_cos();
    let box_mean = |px: f64, py: f64| {
        let cx = (x as f64 + (c * px - s * py)).round() as usize;
        let cy = (y as f64 + (s * px + c * py)).round() as usize;
        ii.sum(cx - 2, cy - 2, cx + 3, cy + 3)
    };
    let mut bits = [0u64; 4];
    for (i, p) in pattern().iter().enumerate() {
        if box_mean(p[0], p[1]) < box_mean(p[2], p[3]) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    Descriptor(bits)
}

/// Resampling by `1/scale` with a 2×2 pre-average.
fn downscale(img: &GreyImage, scale: f64) -> GreyImage {
    let w = ((img.width() as f64) / scale).floor().max(1.0) as usize;
    let h = ((img.height() as f64) / scale).floor().max(1.0) as usize;
    GreyImage::from_fn(w, h, |x, y| {
        let sx = (x as f64 + 0.5) * scale - 0.5;
        let sy = (y as f64 + 0.5) * scale - 0.5;
        let mut acc = 0.0;
        for (ox, oy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
            acc += img.sample_bilinear(sx + ox * scale, sy + oy * scale);
        }
        (acc / 4.0).round() as u8
    })
}

fn detect_level(img: &GreyImage, cfg: &DetectorConfig, budget: usize, scale: f64) -> Vec<Feature> {
    if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE || budget == 0 {
        return Vec::new();
    }
    let corners = fast::detect(img, cfg.fast_threshold, MARGIN);
    let mut scored: Vec<(f64, usize, usize)> = corners.par_iter().map(|&(x, y)| (fast::harris(img, x, y), x, y)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    scored.truncate(budget);
    let ii = IntegralImage::new(img);
    scored
        .par_iter()
        .map(|&(response, x, y)| {
            let angle = orientation(img, x, y);
            Feature {
                keypoint: Keypoint {
                    x: ((x as f64 + 0.5) * scale - 0.5) as f32,
                    y: ((y as f64 + 0.5) * scale - 0.5) as f32,
                    response: response as f32,
                    angle: angle as f32,
                },
                descriptor: describe(&ii, x, y, angle),
            }
        })
        .collect()
}

/// Up to `max_features` features, strongest Harris response first.
pub fn detect_and_describe(img: &GreyImage, max_features: usize) -> Result<Vec<Feature>, FeatureError> {
    detect_and_describe_with(img, &DetectorConfig { max_features, ..DetectorConfig::default() })
}

pub fn detect_and_describe_with(img: &GreyImage, cfg: &DetectorConfig) -> Result<Vec<Feature>, FeatureError> {
    if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE {
        return Err(FeatureError::ImageTooSmall { width: img.width(), height: img.height() });
    }
    let levels = cfg.pyramid_levels.max(1);
    let mut out = Vec::new();
    if levels == 1 {
        out = detect_level(img, cfg, cfg.max_features, 1.0);
    } else {
        // Budget per level proportional to its area.
        let weights: Vec<f64> = (0..levels).map(|l| cfg.scale_factor.powi(-2 * l as i32)).collect();
        let total: f64 = weights.iter().sum();
        let mut remaining = cfg.max_features;
        for (l, wgt) in weights.iter().enumerate() {
            let budget = if l + 1 == levels { remaining } else { ((cfg.max_features as f64) * wgt / total).round() as usize };
            let budget = budget.min(remaining);
            let scale = cfg.scale_factor.powi(l as i32);
            let level_img = if l == 0 { img.clone() } else { downscale(img, scale) };
            let feats = detect_level(&level_img, cfg, budget, scale);
            remaining -= feats.len().min(remaining);
            out.extend(feats);
        }
    }
    out.sort_by(|a, b| {
        b.keypoint.response.total_cmp(&a.keypoint.response).then(a.keypoint.y.total_cmp(&b.keypoint.y)).then(a.keypoint.x.total_cmp(&b.keypoint.x))
    });
    out.truncate(cfg.max_features);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub reference: usize,
    pub scene: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchConfig {
    pub max_distance: u32,
    /// Keep a pair only if each side is the other's nearest neighbour.
    pub mutual: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { max_distance: 64, mutual: true }
    }
}

/// Nearest neighbour with ties to the lower index.
fn nearest(query: &Descriptor, set: &[Descriptor]) -> Option<(usize, u32)> {
    let mut best: Option<(usize, u32)> = None;
    for (j, d) in set.iter().enumerate() {
        let h = query.hamming(d);
        if best.is_none_or(|(_, b)| h < b) {
            best = Some((j, h));
        }
    }
    best
}

/// For each reference descriptor its nearest scene descriptor, filtered
/// by distance and (optionally) the mutual check; sorted by distance,
/// then reference index.
pub fn match_descriptors(reference: &[Descriptor], scene: &[Descriptor], cfg: &MatchConfig) -> MatchSet {
    if reference.is_empty() || scene.is_empty() {
        return MatchSet::default();
    }
    let forward: Vec<Option<(usize, u32)>> = reference.par_iter().map(|r| nearest(r, scene)).collect();
    let backward: Option<Vec<usize>> = cfg.mutual.then(|| {
        let mut used: Vec<usize> = forward.iter().flatten().filter(|(_, d)| *d <= cfg.max_distance).map(|(j, _)| *j).collect();
        used.sort_unstable();
        used.dedup();
        let mut back = vec![usize::MAX; scene.len()];
        let found: Vec<(usize, usize)> = used.par_iter().map(|&j| (j, nearest(&scene[j], reference).map(|(i, _)| i).unwrap_or(usize::MAX))).collect();
        for (j, i) in found {
            back[j] = i;
        }
        back
    });
    let mut pairs: Vec<Match> = forward
        .iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let (j, d) = (*f)?;
            if d > cfg.max_distance {
                return None;
            }
            if let Some(back) = &backward {
                if back[j] != i {
                    return None;
                }
            }
            Some(Match { reference: i, scene: j, distance: d })
        })
        .collect();
    pairs.sort_by(|a, b| a.distance.cmp(&b.distance).then(a.reference.cmp(&b.reference)));
    MatchSet { pairs }
}

pub fn descriptors(features: &[Feature]) -> Vec<Descriptor> {
    features.iter().map(|f| f.descriptor).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    Detected,
    Absent,
    Uncertain,
}

/// Match-count rule: more than `detect_above` pairs is a sticker, fewer
/// than `absent_below` is none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresenceThresholds {
    pub detect_above: usize,
    pub absent_below: usize,
}

impl Default for PresenceThresholds {
    fn default() -> Self {
        Self { detect_above: 50, absent_below: 15 }
    }
}

impl PresenceThresholds {
    pub fn classify(&self, count: usize) -> Presence {
        if count > self.detect_above {
            Presence::Detected
        } else if count < self.absent_below {
            Presence::Absent
        } else {
            Presence::Uncertain
        }
    }
}

pub fn sticker_present(matches: &MatchSet, thresholds: &PresenceThresholds) -> Presence {
    thresholds.classify(matches.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sticker::StickerArt;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_descriptors(rng: &mut ChaCha8Rng, n: usize) -> Vec<Descriptor> {
        (0..n).map(|_| Descriptor(rng.random())).collect()
    }

    #[test]
    fn pattern_is_fixed_and_inside_radius() {
        let p = pattern();
        for q in p.iter() {
            for k in [0, 2] {
                assert!(q[k] * q[k] + q[k + 1] * q[k + 1] <= PATTERN_RADIUS * PATTERN_RADIUS);
            }
            assert!((q[0], q[1]) != (q[2], q[3]));
        }
        assert_eq!(p, pattern());
    }

    #[test]
    fn too_small_image() {
        assert!(matches!(detect_and_describe(&GreyImage::filled(31, 64, 0), 10), Err(FeatureError::ImageTooSmall { .. })));
    }

    #[test]
    fn uniform_grey_has_no_keypoints() {
        assert!(detect_and_describe(&GreyImage::filled(200, 120, 128), 500).unwrap().is_empty());
    }

    #[test]
    fn reference_sticker_has_many_keypoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = StickerArt::random(&mut rng).raster(10, 60);
        assert_eq!(img.width(), 400);
        let f = detect_and_describe(&img, 500).unwrap();
        assert!(f.len() >= 50, "{}", f.len());
        assert!(f.len() <= 500);
        for w in f.windows(2) {
            assert!(w[0].keypoint.response >= w[1].keypoint.response);
        }
        for k in f.iter().map(|f| f.keypoint) {
            assert!(k.x >= MARGIN as f32 && k.y >= MARGIN as f32);
            assert!(k.x < (400 - MARGIN) as f32 && k.y < (400 - MARGIN) as f32);
            assert!((0.0..TAU as f32).contains(&k.angle));
        }
    }

    #[test]
    fn rotated_copy_rematches() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = StickerArt::random(&mut rng).raster(10, 60);
        let rot = img.rotate90();
        let a = detect_and_describe(&img, 300).unwrap();
        let b = detect_and_describe(&rot, 300).unwrap();
        let w = img.width() as f32;
        let mut checked = 0;
        let mut close = 0;
        for fa in &a {
            // (x, y) → (y, w − 1 − x)
            let (ex, ey) = (fa.keypoint.y, w - 1.0 - fa.keypoint.x);
            if let Some(fb) = b.iter().find(|fb| fb.keypoint.x == ex && fb.keypoint.y == ey) {
                checked += 1;
                if fa.descriptor.hamming(&fb.descriptor) <= 40 {
                    close += 1;
                }
            }
        }
        assert!(checked > 50, "checked {checked}");
        assert!(close as f64 >= 0.9 * checked as f64, "{close}/{checked}");
    }

    #[test]
    fn self_match_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_descriptors(&mut rng, 200);
        let m = match_descriptors(&d, &d, &MatchConfig::default());
        assert_eq!(m.len(), 200);
        assert!(m.pairs.iter().all(|p| p.reference == p.scene && p.distance == 0));
    }

    #[test]
    fn random_sets_rarely_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut total = 0;
        for _ in 0..20 {
            let a = random_descriptors(&mut rng, 100);
            let b = random_descriptors(&mut rng, 100);
            total += match_descriptors(&a, &b, &MatchConfig { max_distance: 10, mutual: true }).len();
        }
        assert_eq!(total, 0);
    }

    #[test]
    fn mutual_is_one_to_one_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_descriptors(&mut rng, 300);
        let b = random_descriptors(&mut rng, 50);
        let m = match_descriptors(&a, &b, &MatchConfig { max_distance: 256, mutual: true });
        let mut scenes: Vec<usize> = m.pairs.iter().map(|p| p.scene).collect();
        scenes.sort_unstable();
        scenes.dedup();
        assert_eq!(scenes.len(), m.len());
        assert!(m.pairs.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn presence_rule() {
        let t = PresenceThresholds::default();
        assert_eq!(t.classify(51), Presence::Detected);
        assert_eq!(t.classify(50), Presence::Uncertain);
        assert_eq!(t.classify(14), Presence::Absent);
        assert_eq!(t.classify(15), Presence::Uncertain);
        assert_eq!(t.classify(30), Presence::Uncertain);
        let ms = MatchSet { pairs: vec![Match { reference: 0, scene: 0, distance: 0 }; 51] };
        assert_eq!(sticker_present(&ms, &t), Presence::Detected);
    }

    #[test]
    fn pyramid_levels_add_coarse_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = StickerArt::random(&mut rng).raster(10, 60);
        let cfg = DetectorConfig { pyramid_levels: 3, max_features: 500, ..DetectorConfig::default() };
        let f = detect_and_describe_with(&img, &cfg).unwrap();
        assert!(!f.is_empty() && f.len() <= 500);
    }

    fn arb_descriptor() -> impl Strategy<Value = Descriptor> {
        any::<[u64; 4]>().prop_map(Descriptor)
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(a in arb_descriptor(), b in arb_descriptor(), c in arb_descriptor()) {
            prop_assert_eq!(a.hamming(&a), 0);
            prop_assert_eq!(a.hamming(&b), b.hamming(&a));
            prop_assert!(a.hamming(&c) <= a.hamming(&b) + b.hamming(&c));
            prop_assert!(a.hamming(&b) <= 256);
        }

        #[test]
        fn matching_is_deterministic(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_descriptors(&mut rng, 40);
            let b = random_descriptors(&mut rng, 60);
            let cfg = MatchConfig { max_distance: 110, mutual: true };
            prop_assert_eq!(match_descriptors(&a, &b, &cfg), match_descriptors(&a, &b, &cfg));
        }

        #[test]
        fn superset_never_loses_pairs_without_mutual(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_descriptors(&mut rng, 40);
            let b = random_descriptors(&mut rng, 40);
            let mut bigger = b.clone();
            bigger.extend(random_descriptors(&mut rng, 40));
            let cfg = MatchConfig { max_distance: 110, mutual: false };
            prop_assert!(match_descriptors(&a, &bigger, &cfg).len() >= match_descriptors(&a, &b, &cfg).len());
        }
    }

    #[test]
    fn superset_with_mutual_usually_keeps_pairs() {
        let mut ok = 0;
        let trials = 200;
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // correlated sets so that pairs exist
            let a = random_descriptors(&mut rng, 60);
            let b: Vec<Descriptor> = a
                .iter()
                .map(|d| {
                    let mut w = d.0;
                    for _ in 0..20 {
                        let bit: usize = rng.random_range(0..256);
                        w[bit / 64] ^= 1 << (bit % 64);
                    }
                    Descriptor(w)
                })
                .collect();
            let mut bigger = b.clone();
            bigger.extend(random_descriptors(&mut rng, 60));
            let cfg = MatchConfig::default();
            if match_descriptors(&a, &bigger, &cfg).len() >= match_descriptors(&a, &b, &cfg).len() {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.95 * trials as f64, "{ok}/{trials}");
    }
}
