//! Relative localization of a VIO-localized secondary UAV from the LiDAR of a
//! primary UAV, and guidance of the secondary along trajectories defined in the
//! primary's LiDAR SLAM frame.
//!
//! - [`geometry`]: frames, 4-DOF transforms, headings, interpolation.
//! - [`alignment`]: sliding-window robust fit of the LiDAR-to-VIO frame transform.
//! - [`tracker`]: Kalman tracker with a recalculating history buffer.
//! - [`guider`]: orchestration and reference transformation.
//! - [`sim`]: deterministic closed-loop scenario simulator.
//! - [`evaluation`]: trajectory error metrics.

pub mod alignment;
pub mod geometry;
pub mod tracker;
pub mod guider;
pub mod evaluation;
pub mod sim;
