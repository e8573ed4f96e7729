//! Desk-scale laboratory for event-enhanced motion deblurring.
//!
//! Synthesizes events and motion-blurred frames from known planar scenes,
//! implements the event double integral, SE(3) Bezier camera trajectories,
//! flow-based event warping, the full loss family, and the joint optimization
//! of a learnable double-integral network plus the camera trajectory.

pub mod edi;
pub mod error;
pub mod event;
pub mod geometry;
pub mod grid;
pub mod toyscene;

pub use error::{Error, Result};
