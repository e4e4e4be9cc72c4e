//! Shutter speed needed to keep motion blur under one pixel.
//!
//! An object at distance `D` is imaged with magnification `R = f/D`; a
//! camera moving at `V` during an exposure `1/N` smears its projection over
//! `d = R·V/N` metres of sensor.

use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BlurError {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurParams<T> {
    /// Focal length, metres.
    pub focal: T,
    /// Camera to object distance, metres.
    pub distance: T,
    /// Camera speed, metres per second.
    pub velocity: T,
    /// Reciprocal exposure time, s⁻¹.
    pub shutter_reciprocal: T,
    pub pixel_pitch: T,
}

fn positive<T: Float>(v: T, name: &'static str) -> Result<T, BlurError> {
    if v > T::zero() {
        Ok(v)
    } else {
        Err(BlurError::NonPositive(name))
    }
}

pub fn magnification<T: Float>(focal: T, distance: T) -> Result<T, BlurError> {
    positive(distance, "distance")?;
    Ok(focal / distance)
}

/// Sensor displacement in metres.
pub fn projected_displacement<T: Float>(magnification: T, velocity: T, shutter_reciprocal: T) -> Result<T, BlurError> {
    positive(shutter_reciprocal, "shutter reciprocal")?;
    Ok(magnification * velocity / shutter_reciprocal)
}

/// Smallest `N` for which the displacement stays within one pixel.
/// `shutter_reciprocal` in `params` is ignored.
pub fn min_shutter_reciprocal<T: Float>(params: &BlurParams<T>) -> Result<T, BlurError> {
    positive(params.focal, "focal length")?;
    positive(params.distance, "distance")?;
    positive(params.velocity, "velocity")?;
    positive(params.pixel_pitch, "pixel pitch")?;
    Ok(params.focal * params.velocity / (params.distance * params.pixel_pitch))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurVerdict<T> {
    pub n_min: T,
    pub displacement_m: T,
    pub displacement_px: T,
    /// `N ≥ N_min`.
    pub sharp: bool,
}

pub fn check<T: Float>(params: &BlurParams<T>) -> Result<BlurVerdict<T>, BlurError> {
    let n_min = min_shutter_reciprocal(params)?;
    let r = magnification(params.focal, params.distance)?;
    let d = projected_displacement(r, params.velocity, params.shutter_reciprocal)?;
    Ok(BlurVerdict { n_min, displacement_m: d, displacement_px: d / params.pixel_pitch, sharp: params.shutter_reciprocal >= n_min })
}
