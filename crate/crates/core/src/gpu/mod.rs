//! Hardware backend, frame handles and tensor export.
//!
//! Without the `gpu` feature [`GpuRenderer::new`] always reports the backend
//! as unavailable; everything else in this module is backend independent.

pub mod dlpack;
mod store;

#[cfg(feature = "gpu")]
mod device;

use serde::{Deserialize, Serialize};

pub use store::{FrameHandle, FrameStore};

#[cfg(feature = "gpu")]
pub use device::GpuRenderer;

#[cfg(not(feature = "gpu"))]
pub use stub::GpuRenderer;

/// Where rendered frames end up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpuFramePath {
    /// Frames stay in a device buffer until exported.
    DeviceResident,
    /// Frames are copied once to host memory after each render.
    #[default]
    HostCopy,
}

#[cfg(not(feature = "gpu"))]
mod stub {
    use crate::backend::{BackendKind, FrameRenderer};
    use crate::error::{Error, Result};
    use crate::raster::ShadingConfig;
    use crate::soft::{RenderPath, RenderStats};
    use crate::state::BatchState;
    use crate::tiling::{FrameBatch, TileLayout};

    const MSG: &str = "built without the `gpu` feature";

    /// Placeholder; cannot be constructed in this build.
    pub struct GpuRenderer {
        _never: std::convert::Infallible,
    }

    impl GpuRenderer {
        pub fn new() -> Result<Self> {
            Err(Error::BackendUnavailable(MSG.into()))
        }
    }

    impl FrameRenderer for GpuRenderer {
        fn kind(&self) -> BackendKind {
            BackendKind::Gpu
        }

        fn render_into(
            &mut self,
            _: &BatchState,
            _: &TileLayout,
            _: &ShadingConfig,
            _: RenderPath,
            _: &mut FrameBatch,
        ) -> Result<RenderStats> {
            match self._never {}
        }

        fn stats(&self) -> RenderStats {
            match self._never {}
        }
    }
}
