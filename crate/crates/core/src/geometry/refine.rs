use nalgebra::{Matrix2x3, Matrix3, Matrix6, Point2, Point3, Rotation3, SMatrix, Vector3, Vector6};

use super::{project, CameraIntrinsics, Pose};
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct Refinement<T: Scalar> {
    pub pose: Pose<T>,
    pub initial_rms: T,
    pub final_rms: T,
    pub iterations: usize,
    pub converged: bool,
    /// The initial pose could not be evaluated (a point behind the camera);
    /// `pose` is the input pose.
    pub diverged: bool,
}

/// RMS pixel distance, `None` if any point fails to project.
pub fn reprojection_rms<T: Scalar>(intr: &CameraIntrinsics<T>, pose: &Pose<T>, world: &[Point3<T>], pixels: &[Point2<T>]) -> Option<T> {
    if world.is_empty() {
        return None;
    }
    let mut sum = T::zero();
    for (w, p) in world.iter().zip(pixels) {
        let q = project(intr, pose, w).ok()?;
        sum += (q - p).norm_squared();
    }
    Some((sum / T::lit(world.len() as f64)).sqrt())
}

fn skew<T: Scalar>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// ∂(u, v)/∂(ω, δt) for the update `R ← exp(ω)·R`, `t ← t + δt`.
pub fn reprojection_jacobian<T: Scalar>(intr: &CameraIntrinsics<T>, pose: &Pose<T>, world: &Point3<T>) -> SMatrix<T, 2, 6> {
    let rx = pose.rotation * world.coords;
    let pc = rx + pose.translation;
    let (x, y, z) = (pc.x, pc.y, pc.z);
    let (fx, fy, s) = (intr.fx(), intr.fy(), intr.focal * intr.skew);
    let z2 = z * z;
    let d_proj = Matrix2x3::new(fx / z, s / z, -(fx * x + s * y) / z2, T::zero(), fy / z, -fy * y / z2);
    let d_omega = d_proj * (-skew(&rx));
    let mut j = SMatrix::<T, 2, 6>::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&d_omega);
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&d_proj);
    j
}

fn perturb<T: Scalar>(pose: &Pose<T>, delta: &Vector6<T>) -> Pose<T> {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    let r = Rotation3::new(omega).into_inner() * pose.rotation;
    Pose { rotation: r, translation: pose.translation + Vector3::new(delta[3], delta[4], delta[5]) }.orthonormalized()
}

/// Levenberg–Marquardt on the reprojection error. A step is accepted only
/// when it lowers the RMS, so the residual never increases.
pub fn refine_pose<T: Scalar>(
    intr: &CameraIntrinsics<T>,
    pose0: &Pose<T>,
    world: &[Point3<T>],
    pixels: &[Point2<T>],
    max_iter: usize,
    tol: T,
) -> Refinement<T> {
    let Some(initial) = reprojection_rms(intr, pose0, world, pixels).filter(|_| world.len() == pixels.len()) else {
        return Refinement { pose: *pose0, initial_rms: T::lit(f64::NAN), final_rms: T::lit(f64::NAN), iterations: 0, converged: false, diverged: true };
    };
    let mut pose = *pose0;
    let mut rms = initial;
    let mut lambda = T::lit(1e-3);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut jtj = Matrix6::<T>::zeros();
        let mut jtr = Vector6::<T>::zeros();
        for (w, p) in world.iter().zip(pixels) {
            let q = match project(intr, &pose, w) {
                Ok(q) => q,
                Err(_) => break,
            };
            let r = nalgebra::Vector2::new(q.x - p.x, q.y - p.y);
            let j = reprojection_jacobian(intr, &pose, w);
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        if jtr.norm() <= T::lit(1e-30) {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < T::lit(1e12) {
            let mut a = jtj;
            for i in 0..6 {
                a[(i, i)] += lambda * (jtj[(i, i)] + T::lit(1e-12));
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-jtr))) else {
                lambda *= T::lit(10.0);
                continue;
            };
            let candidate = perturb(&pose, &step);
            match reprojection_rms(intr, &candidate, world, pixels) {
                Some(new_rms) if new_rms < rms => {
                    pose = candidate;
                    rms = new_rms;
                    lambda = (lambda / T::lit(10.0)).max(T::lit(1e-9));
                    accepted = true;
                    if step.norm() < tol {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    lambda *= T::lit(10.0);
                    if step.norm() < tol {
                        converged = true;
                        break;
                    }
                }
            }
        }
        if converged || !accepted {
            converged = true;
            break;
        }
    }
    Refinement { pose, initial_rms: initial, final_rms: rms, iterations, converged, diverged: false }
}
