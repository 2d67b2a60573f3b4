//! Deterministic single-view to 360° indoor scene synthesis.
//!
//! The engine anchors appearance generation on rendered room geometry: a layout
//! is ray cast into per-view depth, an incrementally optimized Gaussian-splat
//! scene is grown view by view through warp-and-inpaint and warp-and-refine
//! sweeps, and a multi-view consistency sampling pass plus inverse-depth
//! alignment finish the scene. Every neural model sits behind the traits in
//! [`adapters`]; deterministic stubs make the whole pipeline testable offline.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, HTTP transport
//! and the command line live in the `anchored` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adapters;
pub mod depth;
pub mod error;
pub mod gaussian;
pub mod geometry;
pub mod grouting;
pub mod pipeline;
pub mod raster;
pub mod sampling;

mod hash;

pub use error::{Error, Result};
pub use raster::{AlphaMask, DepthMap, PointMap, RgbImage, KNOWN_THRESHOLD};
