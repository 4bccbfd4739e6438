//! JSON request and response bodies for the HTTP service.
//!
//! Frame batches travel as base64 of the raw `S x H x W x 4` bytes, row-major,
//! top-left origin. Group arrays are flat, scene-major lists whose leading
//! dimensions follow the group (`[S, I, k]`, or `[I, k]` when shared).

use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{CameraPose, ProjectionParams};
use crate::mesh::{MeshAsset, Primitive};
use crate::raster::ShadingConfig;
use crate::soft::{RenderPath, RenderStats};
use crate::state::{create_batch, BatchState, GroupSpec, SceneSpec};
use crate::tiling::{FrameBatch, TileLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramesBody {
    /// `[S, H, W, 4]`.
    pub shape: [usize; 4],
    pub dtype: String,
    pub data_base64: String,
}

impl From<&FrameBatch> for FramesBody {
    fn from(f: &FrameBatch) -> Self {
        FramesBody {
            shape: f.shape(),
            dtype: "uint8".into(),
            data_base64: STANDARD.encode(f.as_bytes()),
        }
    }
}

impl TryFrom<&FramesBody> for FrameBatch {
    type Error = Error;

    fn try_from(b: &FramesBody) -> Result<Self> {
        if b.dtype != "uint8" || b.shape[3] != 4 {
            return Err(Error::Config(format!(
                "frames must be uint8 with 4 channels, got {} {:?}",
                b.dtype, b.shape
            )));
        }
        let data = STANDARD
            .decode(&b.data_base64)
            .map_err(|e| Error::Config(format!("frames: {e}")))?;
        FrameBatch::new(b.shape[0], b.shape[2] as u32, b.shape[1] as u32, data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable machine-readable category.
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        let kind = match e {
            Error::BackendUnavailable(_) => "backend_unavailable",
            Error::DeviceResidentUnsupported => "device_resident_unsupported",
            Error::AtlasTooLarge { .. } => "atlas_too_large",
            Error::Io { .. } => "io",
            Error::Worker { .. } => "worker",
            _ => "invalid_argument",
        };
        ErrorBody {
            kind: kind.into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvCreated {
    pub id: String,
    pub observation_shape: [usize; 4],
    pub layout: TileLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResetRequest {
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub actions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub observations: FramesBody,
    /// Combined digest of all frames, as [`FrameBatch::checksum`].
    pub checksum: String,
}

impl From<&FrameBatch> for Observation {
    fn from(f: &FrameBatch) -> Self {
        Observation {
            observations: f.into(),
            checksum: f.checksum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub observations: FramesBody,
    pub checksum: String,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStats {
    pub stats: RenderStats,
    pub episodes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRequest {
    pub scenes: usize,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_max_dim")]
    pub max_atlas_dim: u32,
}

fn default_max_dim() -> u32 {
    crate::tiling::DEFAULT_MAX_ATLAS_DIM
}

/// Mesh of a render-request group: a built-in primitive or OBJ text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeshSource {
    Primitive(Primitive),
    Obj { obj: String },
}

impl MeshSource {
    pub fn build(&self) -> Result<MeshAsset> {
        match self {
            MeshSource::Primitive(p) => p.build(),
            MeshSource::Obj { obj } => MeshAsset::parse_obj("request", obj),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBody {
    pub mesh: MeshSource,
    pub instances_per_scene: usize,
    #[serde(default)]
    pub shared: bool,
    #[serde(default)]
    pub cull_back_faces: bool,
    #[serde(default)]
    pub positions: Option<Vec<f64>>,
    #[serde(default)]
    pub hprs: Option<Vec<f64>>,
    /// One value per instance (uniform) or three (per axis).
    #[serde(default)]
    pub scales: Option<Vec<f64>>,
    #[serde(default)]
    pub colors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub scenes: usize,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_clear")]
    pub clear_color: [f64; 4],
    #[serde(default)]
    pub groups: Vec<GroupBody>,
    /// One per scene; identity pose when absent.
    #[serde(default)]
    pub cameras: Option<Vec<CameraPose>>,
    #[serde(default)]
    pub projections: Option<Vec<ProjectionParams>>,
    #[serde(default = "default_path")]
    pub path: RenderPath,
    #[serde(default)]
    pub shading: ShadingConfig,
}

fn default_clear() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

fn default_path() -> RenderPath {
    RenderPath::Instanced
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    pub frames: FramesBody,
    pub checksum: String,
    pub stats: RenderStats,
    pub layout: TileLayout,
}

fn array(what: &str, data: &[f64], lead: &[usize], last: usize) -> Result<ArrayD<f64>> {
    let mut shape = lead.to_vec();
    shape.push(last);
    ArrayD::from_shape_vec(IxDyn(&shape), data.to_vec()).map_err(|_| Error::ShapeMismatch {
        field: what.into(),
        expected: shape.clone(),
        actual: vec![data.len()],
    })
}

impl RenderRequest {
    /// Builds the batch state this request describes.
    pub fn to_batch(&self) -> Result<BatchState> {
        let mut spec = SceneSpec::new(self.scenes, self.width, self.height).with_clear_color(self.clear_color);
        for g in &self.groups {
            spec = spec.with_group(
                GroupSpec::new(Arc::new(g.mesh.build()?), g.instances_per_scene)
                    .shared(g.shared)
                    .cull_back_faces(g.cull_back_faces),
            );
        }
        let mut batch = create_batch(spec)?;
        for (gid, g) in self.groups.iter().enumerate() {
            let lead: Vec<usize> = if g.shared {
                vec![g.instances_per_scene]
            } else {
                vec![self.scenes, g.instances_per_scene]
            };
            let n: usize = lead.iter().product();
            if g.positions.is_some() || g.hprs.is_some() || g.scales.is_some() {
                let zeros = vec![0.0; n * 3];
                let ones = vec![1.0; n];
                let positions = array(
                    &format!("group {gid} positions"),
                    g.positions.as_deref().unwrap_or(&zeros),
                    &lead,
                    3,
                )?;
                let hprs = array(&format!("group {gid} hprs"), g.hprs.as_deref().unwrap_or(&zeros), &lead, 3)?;
                let scales = g.scales.as_deref().unwrap_or(&ones);
                let last = if scales.len() == 3 * n { 3 } else { 1 };
                let scales = array(&format!("group {gid} scales"), scales, &lead, last)?;
                batch.set_instance_transforms(gid, positions, hprs, scales)?;
            }
            if let Some(c) = &g.colors {
                batch.set_instance_colors(gid, array(&format!("group {gid} colors"), c, &lead, 4)?)?;
            }
        }
        match (&self.cameras, &self.projections) {
            (Some(c), Some(p)) => batch.set_cameras(c.clone(), p.clone())?,
            (Some(c), None) => batch.set_camera_poses(c.clone())?,
            (None, Some(p)) => batch.set_cameras(vec![CameraPose::default(); self.scenes], p.clone())?,
            (None, None) => {}
        }
        Ok(batch)
    }
}
