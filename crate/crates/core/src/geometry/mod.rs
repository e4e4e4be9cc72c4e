//! Pinhole projection, homography estimation and planar pose recovery.
//!
//! A world point `X` maps to the pixel `(su, sv, s) = K·F·T·(X, 1)` where
//! `T = [R | t]` takes world coordinates to camera coordinates.

mod homography;
mod intrinsics;
mod refine;

pub use homography::{apply_homography, homography_dlt, pose_from_homography};
pub use intrinsics::{CameraIntrinsics, DEFAULT_FOCAL_M, DEFAULT_HEIGHT, DEFAULT_PIXEL_PITCH_M, DEFAULT_WIDTH};
pub use refine::{refine_pose, reprojection_jacobian, reprojection_rms, Refinement};

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Vector3};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point at or behind the camera plane (depth {0})")]
    BehindCamera(f64),
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
    #[error("matrix is not invertible")]
    NotInvertible,
    #[error("rotation is not orthonormal")]
    NotOrthonormal,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rigid world→camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Scalar> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Scalar> Pose<T> {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Checks orthonormality and determinant at the precision's tolerance.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, GeometryError> {
        let pose = Self { rotation, translation };
        if pose.is_orthonormal() {
            Ok(pose)
        } else {
            Err(GeometryError::NotOrthonormal)
        }
    }

    pub fn is_orthonormal(&self) -> bool {
        let tol = T::rotation_tolerance();
        let e = self.rotation.transpose() * self.rotation - Matrix3::identity();
        e.iter().all(|v| v.abs() <= tol) && (self.rotation.determinant() - T::one()).abs() <= tol
    }

    /// Camera placed at `position` with the given attitude. At zero angles
    /// the camera looks straight down (−Z) with image rows along −Y, so
    /// image x follows world X. Angles compose as `Rz(yaw)·Ry(pitch)·Rx(roll)`
    /// applied to that base attitude.
    pub fn from_camera_placement(position: Point3<T>, roll: T, pitch: T, yaw: T) -> Self {
        let r_cw = Self::attitude(roll, pitch, yaw) * Self::looking_down();
        let rotation = r_cw.transpose();
        Self { rotation, translation: -(rotation * position.coords) }
    }

    /// Inverse of [`Pose::from_camera_placement`]: `(position, roll, pitch, yaw)`.
    pub fn camera_placement(&self) -> (Point3<T>, T, T, T) {
        let m = self.rotation.transpose() * Self::looking_down().transpose();
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        let s = -m[(2, 0)];
        let pitch = s.min(T::one()).max(-T::one()).asin();
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        (camera_world_position(self), roll, pitch, yaw)
    }

    /// Camera at `position` looking at `target`, image up as close to `up`
    /// as the viewing direction allows.
    pub fn look_at(position: Point3<T>, target: Point3<T>, up: &Vector3<T>) -> Result<Self, GeometryError> {
        let z = target - position;
        let zn = z.norm();
        if zn <= T::default_epsilon() {
            return Err(GeometryError::Degenerate("target coincides with camera"));
        }
        let z = z / zn;
        let y = -(up - z * up.dot(&z));
        let yn = y.norm();
        if yn <= T::lit(1e-9) * up.norm() {
            return Err(GeometryError::Degenerate("up vector parallel to viewing direction"));
        }
        let y = y / yn;
        let x = y.cross(&z);
        let rotation = Matrix3::from_columns(&[x, y, z]).transpose();
        Ok(Self { rotation, translation: -(rotation * position.coords) })
    }

    fn looking_down() -> Matrix3<T> {
        let (z, o) = (T::zero(), T::one());
        Matrix3::new(o, z, z, z, -o, z, z, z, -o)
    }

    fn attitude(roll: T, pitch: T, yaw: T) -> Matrix3<T> {
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), pitch);
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), roll);
        (rz * ry * rx).into_inner()
    }

    pub fn transform_point(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        Pose { rotation: self.rotation * other.rotation, translation: self.rotation * other.translation + self.translation }
    }

    pub fn inverse(&self) -> Pose<T> {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Angle of `R_aᵀ·R_b` in radians.
    pub fn rotation_angle_to(&self, other: &Pose<T>) -> T {
        let m = self.rotation.transpose() * other.rotation;
        let c = (m.trace() - T::one()) / T::lit(2.0);
        c.min(T::one()).max(-T::one()).acos()
    }

    /// Projects `R` onto the nearest rotation matrix.
    pub fn orthonormalized(&self) -> Pose<T> {
        Pose { rotation: nearest_rotation(&self.rotation), translation: self.translation }
    }

    pub fn cast_f64(&self) -> Pose<f64> {
        Pose { rotation: self.rotation.map(|v| v.to_f64_lossy()), translation: self.translation.map(|v| v.to_f64_lossy()) }
    }
}

pub(crate) fn nearest_rotation<T: Scalar>(m: &Matrix3<T>) -> Matrix3<T> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut r = u * v_t;
    if r.determinant() < T::zero() {
        let mut d = Matrix3::identity();
        d[(2, 2)] = -T::one();
        r = u * d * v_t;
    }
    r
}

/// `(su, sv, s)` for a world point; `s` is the camera-frame depth.
pub fn project_homog<T: Scalar>(intr: &CameraIntrinsics<T>, pose: &Pose<T>, p: &Point3<T>) -> Vector3<T> {
    intr.camera_matrix() * pose.transform_point(p).coords
}

pub fn project<T: Scalar>(intr: &CameraIntrinsics<T>, pose: &Pose<T>, p: &Point3<T>) -> Result<Point2<T>, GeometryError> {
    let h = project_homog(intr, pose, p);
    if h.z <= T::zero() {
        return Err(GeometryError::BehindCamera(h.z.to_f64_lossy()));
    }
    Ok(Point2::new(h.x / h.z, h.y / h.z))
}

/// Camera centre in world coordinates, `C = −Rᵀ·t`.
pub fn camera_world_position<T: Scalar>(pose: &Pose<T>) -> Point3<T> {
    Point3::from(-(pose.rotation.transpose() * pose.translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn k() -> CameraIntrinsics<f64> {
        CameraIntrinsics::default()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = project(&k(), &Pose::identity(), &Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.x, p.y), (k().cu, k().cv));
    }

    #[test]
    fn similar_triangles() {
        let k = k();
        let p = project(&k, &Pose::identity(), &Point3::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(p.x, k.cu + 0.1 * k.focal * k.ku, epsilon = 1e-9);
        assert_relative_eq!(p.y, k.cv);
    }

    #[test]
    fn behind_camera_is_an_error() {
        assert!(matches!(project(&k(), &Pose::identity(), &Point3::new(0.0, 0.0, -1.0)), Err(GeometryError::BehindCamera(_))));
        assert!(project(&k(), &Pose::identity(), &Point3::new(1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn camera_centre_of_translation() {
        let pose = Pose { rotation: Matrix3::identity(), translation: Vector3::new(0.0, 0.0, -1.0) };
        assert_eq!(camera_world_position(&pose), Point3::new(0.0, 0.0, 1.0));
        let rot = Pose::from_camera_placement(Point3::origin(), 0.3, 0.2, 0.1);
        assert_relative_eq!(camera_world_position(&rot).coords.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn placement_looking_down() {
        let pose = Pose::<f64>::from_camera_placement(Point3::new(1.0, 2.0, 1.5), 0.0, 0.0, 0.0);
        assert!(pose.is_orthonormal());
        // point below the camera projects to the principal point
        let c = project(&k(), &pose, &Point3::new(1.0, 2.0, 0.0)).unwrap();
        assert_relative_eq!(c.x, k().cu, epsilon = 1e-9);
        // +X world goes right in the image, +Y world goes up
        let px = project(&k(), &pose, &Point3::new(1.1, 2.0, 0.0)).unwrap();
        let py = project(&k(), &pose, &Point3::new(1.0, 2.1, 0.0)).unwrap();
        assert!(px.x > c.x && py.y < c.y);
    }

    #[test]
    fn placement_round_trip() {
        let pos = Point3::new(-0.5, 3.0, 1.2);
        let pose = Pose::<f64>::from_camera_placement(pos, 0.2, -0.3, 2.0);
        let (p, roll, pitch, yaw) = pose.camera_placement();
        assert_relative_eq!(p, pos, epsilon = 1e-12);
        assert_relative_eq!(roll, 0.2, epsilon = 1e-12);
        assert_relative_eq!(pitch, -0.3, epsilon = 1e-12);
        assert_relative_eq!(yaw, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn look_at_matches_placement_when_looking_down() {
        let pos = Point3::new(1.0, 2.0, 1.5);
        let a = Pose::<f64>::look_at(pos, Point3::new(1.0, 2.0, 0.0), &Vector3::y()).unwrap();
        let b = Pose::<f64>::from_camera_placement(pos, 0.0, 0.0, 0.0);
        assert_relative_eq!(a.rotation, b.rotation, epsilon = 1e-12);
        assert_relative_eq!(a.translation, b.translation, epsilon = 1e-12);
        assert!(Pose::<f64>::look_at(pos, pos, &Vector3::y()).is_err());
        assert!(Pose::<f64>::look_at(pos, Point3::new(1.0, 2.0, 0.0), &Vector3::z()).is_err());
    }

    #[test]
    fn compose_inverse_is_identity() {
        let a = Pose::<f64>::from_camera_placement(Point3::new(0.3, 0.1, 1.0), 0.1, 0.2, 0.3);
        let i = a.compose(&a.inverse());
        assert_relative_eq!(i.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(i.translation.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_precision_pose() {
        let pose = Pose::<f32>::from_camera_placement(Point3::new(0.0, 0.0, 1.0), 0.1, 0.0, 0.5);
        assert!(pose.is_orthonormal());
        let p = project(&CameraIntrinsics::<f32>::default(), &pose, &Point3::new(0.0, 0.0, 0.0)).unwrap();
        assert!(p.x.is_finite());
    }

    #[test]
    fn new_rejects_scaled_rotation() {
        assert!(Pose::<f64>::new(Matrix3::identity() * 1.01, Vector3::zeros()).is_err());
        let r = nearest_rotation(&(Matrix3::<f64>::identity() * 1.01));
        assert!(Pose::new(r, Vector3::zeros()).is_ok());
    }
}
