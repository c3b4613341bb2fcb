mod bvh;
pub mod camera;
pub mod error;
pub mod mesh;
pub mod raster;
pub mod warp;
pub mod fetch;
pub mod io;
pub mod jitter;
pub mod synth;
pub mod viewbench;
