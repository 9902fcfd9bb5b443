//! Detection of ring-tower collision errors in robotic surgery training
//! videos.
//!
//! The pipeline, per tower interaction:
//!
//! 1. **Vision** – HSV thresholding and connected-component size filtering
//!    locate tower pixels, restricted to the interaction's region of interest.
//! 2. **Flow** – dense Horn–Schunck optical flow between consecutive frames.
//! 3. **Signal** – the flow magnitude summed over tower pixels, smoothed with
//!    a moving average and differentiated.
//! 4. **Detection** – a short-time Fourier transform of the derivative is
//!    thresholded in its high band, then cleaned up by frame rules and, on
//!    horizontal towers, cut at the placement zone.
//!
//! [`metrics`] turns labels into completion time, error counts and error
//! percentage, and [`synth`] renders scripted scenes with exact ground truth.

pub mod detector;
pub mod error;
pub mod exec;
pub mod flow;
pub mod metrics;
pub mod model;
pub mod signal;
pub mod synth;
pub mod vision;

pub use error::{Error, Result};
pub use exec::Exec;
