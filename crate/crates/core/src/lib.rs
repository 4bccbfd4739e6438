//! Batched multi-scene rendering.
//!
//! `S` scenes are rendered into one tiled atlas with one draw per model group,
//! then split into an `S x H x W x 4` frame batch. The software backend is the
//! bit-exact reference; a wgpu backend sits behind the `gpu` feature.

pub mod error;
pub mod math;
pub mod mesh;
mod raster;
pub mod soft;
pub mod state;
pub mod tiling;

pub use error::{Error, Result};
pub use math::{
    apply_clip_remap, compose_trs, perspective_projection, rotation_from_hpr, view_from_camera, CameraPose,
    ClipRemap, Mat3, Mat4, ProjectionParams, Scale, Vec3, Vec4,
};
pub use mesh::{MeshAsset, Primitive, Vertex};
pub use raster::{quantize, quantize_rgba, ShadingConfig, ShadingMode};
pub use soft::{RenderPath, RenderStats, RenderTarget, SoftRenderer};
pub use state::{create_batch, BatchState, GroupSpec, GroupState, MatrixBuffer, SceneSpec};
pub use tiling::{
    parse_ppm, partition_atlas, plan_layout, stitch, stitch_into, tile_rect, FrameBatch, PixelRect, RgbaImage,
    Tile, TileLayout, DEFAULT_MAX_ATLAS_DIM,
};

pub mod backend;
pub mod bench;
pub mod env;
pub mod gpu;

pub use backend::{make_renderer, BackendKind, FrameRenderer};
pub use env::{make_cartpole_env, make_cartpole_shard, CartPoleEnv, EnvConfig, SceneDynamics, VecEnv};
pub mod wire;

pub use bench::{run_benchmark, BenchConfig, BenchReport, ReportFormat, Stage};
pub use gpu::GpuFramePath;
pub mod scenario;
