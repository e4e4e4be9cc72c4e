use nalgebra::{DMatrix, Matrix3, Point2, Vector3};

use super::{nearest_rotation, CameraIntrinsics, GeometryError, Pose};
use crate::Scalar;

/// Similarity that moves the centroid to the origin and the mean distance
/// to √2.
fn normalizer<T: Scalar>(pts: &[Point2<T>]) -> Result<Matrix3<T>, GeometryError> {
    let n = T::lit(pts.len() as f64);
    let (mut cx, mut cy) = (T::zero(), T::zero());
    for p in pts {
        cx += p.x;
        cy += p.y;
    }
    cx /= n;
    cy /= n;
    let mut mean_dist = T::zero();
    for p in pts {
        mean_dist += ((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy)).sqrt();
    }
    mean_dist /= n;
    if mean_dist <= T::default_epsilon() {
        return Err(GeometryError::Degenerate("all points coincide"));
    }
    let s = T::lit(std::f64::consts::SQRT_2) / mean_dist;
    let (z, o) = (T::zero(), T::one());
    Ok(Matrix3::new(s, z, -s * cx, z, s, -s * cy, z, z, o))
}

fn collinear<T: Scalar>(a: &Point2<T>, b: &Point2<T>, c: &Point2<T>, scale: T) -> bool {
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    cross.abs() <= T::lit(1e-9) * scale * scale
}

/// Homography `H` with `dst ~ H·src`, from at least four correspondences.
/// Solved on Hartley-normalised coordinates as the null vector of the
/// 2n×9 design matrix; scaled so `H[2][2] = 1` when that entry is nonzero.
pub fn homography_dlt<T: Scalar>(src: &[Point2<T>], dst: &[Point2<T>]) -> Result<Matrix3<T>, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::Degenerate("correspondence lists differ in length"));
    }
    if src.len() < 4 {
        return Err(GeometryError::Degenerate("need at least 4 correspondences"));
    }
    let ns = normalizer(src)?;
    let nd = normalizer(dst)?;
    let to_h = |m: &Matrix3<T>, p: &Point2<T>| {
        let v = m * Vector3::new(p.x, p.y, T::one());
        Point2::new(v.x, v.y)
    };
    let s: Vec<Point2<T>> = src.iter().map(|p| to_h(&ns, p)).collect();
    let d: Vec<Point2<T>> = dst.iter().map(|p| to_h(&nd, p)).collect();
    if s.len() == 4 {
        for skip in 0..4 {
            let tri: Vec<_> = (0..4).filter(|&i| i != skip).collect();
            if collinear(&s[tri[0]], &s[tri[1]], &s[tri[2]], T::one()) || collinear(&d[tri[0]], &d[tri[1]], &d[tri[2]], T::one()) {
                return Err(GeometryError::Degenerate("three collinear points"));
            }
        }
    }

    // Pad to at least 9 rows so the SVD returns a full right basis.
    let rows = (2 * s.len()).max(9);
    let mut a = DMatrix::<T>::zeros(rows, 9);
    for (i, (p, q)) in s.iter().zip(&d).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let o = T::one();
        let r0 = [-x, -y, -o, T::zero(), T::zero(), T::zero(), u * x, u * y, u];
        let r1 = [T::zero(), T::zero(), T::zero(), -x, -y, -o, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::Degenerate("svd failed"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap_or(std::cmp::Ordering::Equal));
    let (smallest, second) = (order[0], order[1]);
    let largest = order[order.len() - 1];
    if sv[second] <= T::lit(1e-10) * sv[largest] {
        return Err(GeometryError::Degenerate("rank deficient design matrix"));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let nd_inv = nd.try_inverse().ok_or(GeometryError::NotInvertible)?;
    let mut out = nd_inv * hn * ns;
    let h22 = out[(2, 2)];
    if h22.abs() > T::default_epsilon() {
        out /= h22;
    } else {
        out /= out.norm();
    }
    Ok(out)
}

/// `None` when the point maps to infinity.
pub fn apply_homography<T: Scalar>(h: &Matrix3<T>, p: &Point2<T>) -> Option<Point2<T>> {
    let v = h * Vector3::new(p.x, p.y, T::one());
    if v.z.abs() <= T::default_epsilon() {
        return None;
    }
    Some(Point2::new(v.x / v.z, v.y / v.z))
}

/// Planar pose from a world-plane (Z = 0) to image homography.
pub fn pose_from_homography<T: Scalar>(intr: &CameraIntrinsics<T>, h: &Matrix3<T>) -> Result<Pose<T>, GeometryError> {
    if h.determinant().abs() <= T::default_epsilon() * h.norm().powi(3) {
        return Err(GeometryError::NotInvertible);
    }
    let a_inv = intr.camera_matrix().try_inverse().ok_or(GeometryError::NotInvertible)?;
    let m = a_inv * h;
    let (m1, m2, m3) = (m.column(0).into_owned(), m.column(1).into_owned(), m.column(2).into_owned());
    let n1 = m1.norm();
    if n1 <= T::default_epsilon() {
        return Err(GeometryError::NotInvertible);
    }
    let mut lambda = T::one() / n1;
    // The plane origin must lie in front of the camera.
    if m3.z * lambda < T::zero() {
        lambda = -lambda;
    }
    let r1 = m1 * lambda;
    let r2 = m2 * lambda;
    let t = m3 * lambda;
    let r3 = r1.cross(&r2);
    let r = Matrix3::from_columns(&[r1, r2, r3]);
    Ok(Pose { rotation: nearest_rotation(&r), translation: t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;
    use approx::assert_relative_eq;
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> Vec<Point2<f64>> {
        vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0), Point2::new(0.0, 1.0)]
    }

    #[test]
    fn identity_and_scale() {
        let sq = unit_square();
        let h = homography_dlt(&sq, &sq).unwrap();
        assert_relative_eq!(h, Matrix3::identity(), epsilon = 1e-10);
        let big: Vec<_> = sq.iter().map(|p| Point2::new(2.0 * p.x, 2.0 * p.y)).collect();
        let h = homography_dlt(&sq, &big).unwrap();
        assert_relative_eq!(h, Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 1.0)), epsilon = 1e-10);
    }

    #[test]
    fn rejects_collinear_and_short_input() {
        let line = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0), Point2::new(0.0, 1.0)];
        assert!(homography_dlt(&line, &unit_square()).is_err());
        assert!(homography_dlt(&unit_square()[..3], &unit_square()[..3]).is_err());
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose<f64> {
        // camera looking at the plane origin, up to 60° tilt, 0.3-2 m away
        let dist = rng.random_range(0.3..2.0);
        let tilt: f64 = rng.random_range(0.0..60f64.to_radians());
        let az: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let pos = Point3::new(dist * tilt.sin() * az.cos(), dist * tilt.sin() * az.sin(), dist * tilt.cos());
        let yaw: f64 = rng.random_range(-3.0..3.0);
        Pose::look_at(pos, Point3::origin(), &Vector3::new(yaw.cos(), yaw.sin(), 0.0)).unwrap()
    }

    fn corners() -> [Point3<f64>; 4] {
        [Point3::new(-0.05, 0.05, 0.0), Point3::new(-0.05, -0.05, 0.0), Point3::new(0.05, -0.05, 0.0), Point3::new(0.05, 0.05, 0.0)]
    }

    #[test]
    fn maps_world_corners_to_projected_pixels() {
        let k = CameraIntrinsics::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let world: Vec<_> = corners().iter().map(|p| Point2::new(p.x, p.y)).collect();
            let px: Vec<_> = corners().iter().map(|p| project(&k, &pose, p).unwrap()).collect();
            let h = homography_dlt(&world, &px).unwrap();
            for (w, p) in world.iter().zip(&px) {
                assert!((apply_homography(&h, w).unwrap() - p).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn fronto_parallel_height() {
        let k = CameraIntrinsics::<f64>::default();
        let pose = Pose::from_camera_placement(Point3::new(0.0, 0.0, 1.0), 0.0, 0.0, 0.0);
        let world: Vec<_> = corners().iter().map(|p| Point2::new(p.x, p.y)).collect();
        let px: Vec<_> = corners().iter().map(|p| project(&k, &pose, p).unwrap()).collect();
        let est = pose_from_homography(&k, &homography_dlt(&world, &px).unwrap()).unwrap();
        assert_relative_eq!(est.translation.z, 1.0, epsilon = 1e-6);
        assert_relative_eq!(est.rotation, pose.rotation, epsilon = 1e-6);
    }

    #[test]
    fn identity_rotation_round_trip() {
        let k = CameraIntrinsics::<f64>::default();
        let pose = Pose { rotation: Matrix3::identity(), translation: Vector3::new(0.01, -0.02, 0.8) };
        let world: Vec<_> = corners().iter().map(|p| Point2::new(p.x, p.y)).collect();
        let px: Vec<_> = corners().iter().map(|p| project(&k, &pose, p).unwrap()).collect();
        let est = pose_from_homography(&k, &homography_dlt(&world, &px).unwrap()).unwrap();
        assert_relative_eq!(est.rotation, Matrix3::identity(), epsilon = 1e-6);
    }

    #[test]
    fn random_pose_round_trip() {
        let k = CameraIntrinsics::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let pose = random_pose(&mut rng);
            let world: Vec<_> = corners().iter().map(|p| Point2::new(p.x, p.y)).collect();
            let px: Vec<_> = corners().iter().map(|p| project(&k, &pose, p).unwrap()).collect();
            let est = pose_from_homography(&k, &homography_dlt(&world, &px).unwrap()).unwrap();
            assert!(est.is_orthonormal());
            assert!(est.rotation_angle_to(&pose).to_degrees() < 0.01);
            assert!((est.translation - pose.translation).norm() < 1e-4);
            for (w, p) in corners().iter().zip(&px) {
                assert!((project(&k, &est, w).unwrap() - p).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn singular_homography() {
        let k = CameraIntrinsics::<f64>::default();
        assert!(matches!(pose_from_homography(&k, &Matrix3::zeros()), Err(GeometryError::NotInvertible)));
    }
}
