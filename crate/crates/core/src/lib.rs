//! Spatio-temporal mitosis detection in phase-contrast time-lapse sequences.
//!
//! Candidates are cropped around bright tracked regions, a small 3D
//! encoder-decoder regresses a likelihood volume for each, and peaks of that
//! volume become detections.

pub mod candidates;
pub mod detect;
pub mod eval;
pub mod io;
pub mod net;
pub mod pipeline;
pub mod synth;
pub mod targets;
pub mod train;
pub mod types;
