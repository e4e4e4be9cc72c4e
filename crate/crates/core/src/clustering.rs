//! K-means grouping of matched keypoints into per-sticker clouds.

use nalgebra::Point2;

use crate::geometry::CameraIntrinsics;
use crate::sticker::STICKER_SIZE_M;

pub const DEFAULT_K: usize = 4;
/// No more stickers than this fit in one frame.
pub const MAX_CLUSTERS: usize = 3;
/// Keypoints stay off the outer ring, so corners sit up to ~0.4 of the
/// member box outside it.
pub const DEFAULT_ROI_MARGIN: f64 = 0.5;
const MAX_ITERATIONS: usize = 100;
const CONVERGED_SHIFT_PX: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub mean: Point2<f64>,
    /// Indices into the input points, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
}

/// Pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Roi {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.x0 as f64 && p.y >= self.y0 as f64 && p.x <= self.x1 as f64 - 1.0 && p.y <= self.y1 as f64 - 1.0
    }
}

/// 1.5 times the sticker's projected width at 1 m.
pub fn default_merge_dist(intr: &CameraIntrinsics<f64>) -> f64 {
    1.5 * STICKER_SIZE_M * intr.fx().max(intr.fy())
}

fn centroid(points: &[Point2<f64>], members: &[usize]) -> Point2<f64> {
    let s = members.iter().fold(nalgebra::Vector2::zeros(), |acc, &i| acc + points[i].coords);
    Point2::from(s / members.len() as f64)
}

/// Farthest-point seeding over the points in canonical order, so the
/// result does not depend on input order.
fn seeds(points: &[Point2<f64>], order: &[usize], k: usize) -> Vec<Point2<f64>> {
    let mut out = vec![points[order[0]]];
    let mut dist: Vec<f64> = order.iter().map(|&i| (points[i] - out[0]).norm_squared()).collect();
    while out.len() < k {
        let (best, d) = dist.iter().enumerate().fold((0, -1.0), |acc, (j, &d)| if d > acc.1 { (j, d) } else { acc });
        if d <= 0.0 {
            break;
        }
        let p = points[order[best]];
        out.push(p);
        for (j, &i) in order.iter().enumerate() {
            dist[j] = dist[j].min((points[i] - p).norm_squared());
        }
    }
    out
}

fn nearest_mean(means: &[Point2<f64>], p: &Point2<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, m) in means.iter().enumerate() {
        let d = (p - m).norm_squared();
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Lloyd iterations from `k_init` seeds, then merging of the closest pair
/// of means while it is nearer than `merge_dist` or more than
/// [`MAX_CLUSTERS`] remain. Clusters come out in ascending mean-x order.
pub fn cluster_keypoints(points: &[Point2<f64>], k_init: usize, merge_dist: f64) -> ClusterSet {
    if points.is_empty() {
        return ClusterSet::default();
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(points[a].y.total_cmp(&points[b].y)).then(a.cmp(&b)));

    let mut means = seeds(points, &order, k_init.max(1));
    let mut assign = vec![0usize; points.len()];
    for _ in 0..MAX_ITERATIONS {
        for (i, p) in points.iter().enumerate() {
            assign[i] = nearest_mean(&means, p);
        }
        let mut shift: f64 = 0.0;
        let mut next = Vec::with_capacity(means.len());
        for (c, m) in means.iter().enumerate() {
            let members: Vec<usize> = (0..points.len()).filter(|&i| assign[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let nm = centroid(points, &members);
            shift = shift.max((nm - m).norm());
            next.push(nm);
        }
        let dropped = next.len() != means.len();
        means = next;
        if !dropped && shift < CONVERGED_SHIFT_PX {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assign[i] = nearest_mean(&means, p);
    }
    let mut clusters: Vec<Cluster> = (0..means.len())
        .map(|c| (0..points.len()).filter(|&i| assign[i] == c).collect::<Vec<_>>())
        .filter(|m| !m.is_empty())
        .map(|members| Cluster { mean: centroid(points, &members), members })
        .collect();

    loop {
        let mut closest: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = (clusters[a].mean - clusters[b].mean).norm();
                if closest.is_none_or(|c| d < c.2) {
                    closest = Some((a, b, d));
                }
            }
        }
        let Some((a, b, d)) = closest else { break };
        if d >= merge_dist && clusters.len() <= MAX_CLUSTERS {
            break;
        }
        let gone = clusters.remove(b);
        let keep = &mut clusters[a];
        keep.members.extend(gone.members);
        keep.members.sort_unstable();
        keep.mean = centroid(points, &keep.members);
    }
    clusters.sort_by(|a, b| a.mean.x.total_cmp(&b.mean.x).then(a.mean.y.total_cmp(&b.mean.y)));
    ClusterSet { clusters }
}

/// Largest cluster; ties go to the smaller mean x, then mean y.
pub fn select_primary_cluster(cs: &ClusterSet) -> Option<&Cluster> {
    cs.clusters.iter().reduce(|best, c| {
        let better = c.members.len() > best.members.len() || (c.members.len() == best.members.len() && (c.mean.x, c.mean.y) < (best.mean.x, best.mean.y));
        if better {
            c
        } else {
            best
        }
    })
}

/// Clusters ordered for processing: primary first, then by size.
pub fn processing_order(cs: &ClusterSet) -> Vec<&Cluster> {
    let mut v: Vec<&Cluster> = cs.clusters.iter().collect();
    v.sort_by(|a, b| b.members.len().cmp(&a.members.len()).then(a.mean.x.total_cmp(&b.mean.x)).then(a.mean.y.total_cmp(&b.mean.y)));
    v
}

/// Bounding box of the members grown by `margin_factor` of its size on
/// each side, clipped to a `width × height` image.
pub fn roi_from_cluster(cluster: &Cluster, points: &[Point2<f64>], margin_factor: f64, width: usize, height: usize) -> Roi {
    let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for &i in &cluster.members {
        let p = points[i];
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let (mx, my) = (margin_factor * (hi.x - lo.x), margin_factor * (hi.y - lo.y));
    let clip = |v: f64, n: usize| v.clamp(0.0, n as f64);
    let span = |a: f64, b: f64, n: usize| {
        let lo = (clip(a.floor(), n) as usize).min(n - 1);
        (lo, (clip(b.ceil(), n) as usize).max(lo + 1))
    };
    let (x0, x1) = span(lo.x - mx, hi.x + mx, width);
    let (y0, y1) = span(lo.y - my, hi.y + my, height);
    Roi { x0, y0, x1, y1 }
}
