//! Gaze inference through the GPU timing side channel of dynamic foveated
//! rendering.
//!
//! A simulated renderer ([`sim`]) sweeps an invisible high-cost object
//! across the view while a gaze-driven shading-rate map ([`foveation`])
//! makes the object expensive whenever it overlaps the fovea. The logged
//! per-frame metric ([`trace`]) is then turned back into gaze estimates
//! ([`inference`]), and [`detector`] flags sessions that contain such scans.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod foveation;
pub mod inference;
pub mod profile;
pub mod signal;
pub mod sim;
pub mod trace;
