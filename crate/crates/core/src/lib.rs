//! Visual localisation from ground stickers.
//!
//! A camera worn by a human operator sees square ground stickers, each of
//! which carries four 10×10 ECC200 Data Matrix symbols and sits at a surveyed
//! position in the warehouse. The frame pipeline is:
//!
//! 1. **Detect** – oriented FAST + rotated BRIEF features matched against a
//!    generic sticker reference ([`features`]).
//! 2. **ROI** – k-means over the matched keypoints, one cloud per sticker
//!    ([`clustering`]).
//! 3. **Read** – Data Matrix decoding inside the ROI ([`datamatrix`]), with a
//!    decode-free identification fallback for blurred frames ([`identify`]).
//! 4. **Pose** – sticker border corners ([`imaging`]) → homography → planar
//!    PnP → camera world position ([`geometry`]).
//!
//! [`simulate`] renders synthetic frames from a [`warehouse`] map and serves as
//! ground truth for every stage. [`blur`] holds the shutter-speed calculator.
//!
//! The numeric modules are generic over [`Scalar`]; the aliases below fix the
//! scalar to `f64`, which is what the pipeline uses.

pub mod blur;
pub mod clustering;
pub mod datamatrix;
pub mod features;
pub mod geometry;
pub mod identify;
pub mod imaging;
pub mod pipeline;
pub mod scalar;
pub mod scenario;
pub mod simulate;
pub mod sticker;
pub mod warehouse;

pub use scalar::Scalar;

pub use imaging::GreyImage;

/// Camera intrinsics in double precision.
pub type CameraIntrinsics = geometry::CameraIntrinsics<f64>;
/// Rigid world→camera transform in double precision.
pub type Pose = geometry::Pose<f64>;
/// Point in world coordinates (metres).
pub type WorldPoint = nalgebra::Point3<f64>;
/// Point in pixel coordinates.
pub type PixelPoint = nalgebra::Point2<f64>;
/// Motion-blur parameters in double precision.
pub type BlurParams = blur::BlurParams<f64>;
