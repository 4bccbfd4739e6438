use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::ShadingConfig;
use crate::soft::{RenderPath, RenderStats, SoftRenderer};
use crate::state::BatchState;
use crate::tiling::{FrameBatch, TileLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Soft,
    Gpu,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Soft => "soft",
            BackendKind::Gpu => "gpu",
        })
    }
}

/// A renderer that turns a batch state into host frames.
pub trait FrameRenderer: Send {
    fn kind(&self) -> BackendKind;

    /// Renders `state` through `path` and writes the frames into `frames`.
    /// Returns the counters of this call.
    fn render_into(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
        path: RenderPath,
        frames: &mut FrameBatch,
    ) -> Result<RenderStats>;

    fn stats(&self) -> RenderStats;
}

impl FrameRenderer for SoftRenderer {
    fn kind(&self) -> BackendKind {
        BackendKind::Soft
    }

    fn render_into(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
        path: RenderPath,
        frames: &mut FrameBatch,
    ) -> Result<RenderStats> {
        self.render_frames_into(state, layout, shading, path, frames)
    }

    fn stats(&self) -> RenderStats {
        SoftRenderer::stats(self)
    }
}

/// Builds a renderer for `kind`. The hardware backend reports
/// [`crate::Error::BackendUnavailable`] when no device can be opened.
pub fn make_renderer(kind: BackendKind) -> Result<Box<dyn FrameRenderer>> {
    match kind {
        BackendKind::Soft => Ok(Box::new(SoftRenderer::new())),
        BackendKind::Gpu => Ok(Box::new(crate::gpu::GpuRenderer::new()?)),
    }
}
