//! Vectorized pixel environments: batched state in, batched frames out.
//!
//! The renderer never knows about physics. A [`SceneDynamics`] implementation
//! owns the per-scene state vectors and writes them into the batch state as
//! instance transforms before each render.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{make_renderer, BackendKind, FrameRenderer};
use crate::error::{Error, Result};
use crate::math::{CameraPose, Vec3};
use crate::raster::ShadingConfig;
use crate::soft::{RenderPath, RenderStats};
use crate::state::{BatchState, SceneSpec};
use crate::tiling::{plan_layout, FrameBatch, TileLayout, DEFAULT_MAX_ATLAS_DIM};

mod cartpole;

pub use cartpole::{CartPole, CartPoleParams};

/// Scene-specific state transitions plus the mapping from state to geometry.
pub trait SceneDynamics: Send {
    /// Length of one scene's state vector.
    fn state_dim(&self) -> usize;

    /// Model groups, colors and cameras for `scenes` copies of the scene.
    fn build_scene(&self, scenes: usize, width: u32, height: u32) -> Result<BatchState>;

    fn reset_scene(&self, rng: &mut dyn RngCore, state: &mut [f64]);

    /// Advances one scene by one step; returns `(reward, done)`.
    fn step_scene(&self, state: &mut [f64], action: f64) -> (f64, bool);

    /// Writes all scenes' state (`S * state_dim`, scene-major) into `batch`.
    fn write_transforms(&self, states: &[f64], batch: &mut BatchState) -> Result<()>;
}

/// Keys accepted in environment config files (JSON or TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub scenes: usize,
    #[serde(default = "default_side")]
    pub width: u32,
    #[serde(default = "default_side")]
    pub height: u32,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_path")]
    pub render_path: RenderPath,
    #[serde(default)]
    pub shading: ShadingConfig,
    #[serde(default)]
    pub dynamics: CartPoleParams,
}

fn default_side() -> u32 {
    64
}
fn default_backend() -> BackendKind {
    BackendKind::Soft
}
fn default_path() -> RenderPath {
    RenderPath::Instanced
}

impl EnvConfig {
    pub fn new(scenes: usize) -> Self {
        EnvConfig {
            scenes,
            width: default_side(),
            height: default_side(),
            backend: default_backend(),
            seed: 0,
            render_path: default_path(),
            shading: ShadingConfig::default(),
            dynamics: CartPoleParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Reads `.toml` files as TOML and anything else as JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text),
        }
    }
}

const RESET_STREAM: u64 = 0x5245_5345_5400_0000;
const ACTION_STREAM: u64 = 0x4143_5449_4f4e_0000;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for episode `episode` of global scene `scene`. Depends only on its
/// arguments, so a scene resets identically however the batch is sharded.
pub fn scene_reset_seed(base: u64, scene: u64, episode: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base ^ RESET_STREAM).wrapping_add(scene)).wrapping_add(episode))
}

/// Per-scene action generator used by the benchmark harness.
pub fn action_rng(base: u64, scene: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(base ^ ACTION_STREAM).wrapping_add(scene)))
}

pub struct StepResult<'a> {
    pub observations: &'a FrameBatch,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

pub struct VecEnv<D: SceneDynamics> {
    dynamics: D,
    batch: BatchState,
    layout: TileLayout,
    renderer: Box<dyn FrameRenderer>,
    path: RenderPath,
    shading: ShadingConfig,
    states: Vec<f64>,
    episodes: Vec<u64>,
    seed: u64,
    scene_offset: usize,
    obs: FrameBatch,
}

impl<D: SceneDynamics> VecEnv<D> {
    /// `scene_offset` is the global index of this env's first scene; envs
    /// holding disjoint shards of a larger batch produce the same per-scene
    /// observations as one env holding all of it.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dynamics: D,
        scenes: usize,
        width: u32,
        height: u32,
        renderer: Box<dyn FrameRenderer>,
        path: RenderPath,
        shading: ShadingConfig,
        scene_offset: usize,
    ) -> Result<Self> {
        let batch = dynamics.build_scene(scenes, width, height)?;
        let layout = plan_layout(scenes, width, height, DEFAULT_MAX_ATLAS_DIM)?;
        let dim = dynamics.state_dim();
        Ok(VecEnv {
            states: vec![0.0; scenes * dim],
            episodes: vec![0; scenes],
            obs: FrameBatch::zeroed(scenes, width, height),
            dynamics,
            batch,
            layout,
            renderer,
            path,
            shading,
            seed: 0,
            scene_offset,
        })
    }

    pub fn scene_count(&self) -> usize {
        self.batch.scene_count()
    }

    /// `[S, H, W, 4]`.
    pub fn observation_shape(&self) -> [usize; 4] {
        self.obs.shape()
    }

    pub fn observations(&self) -> &FrameBatch {
        &self.obs
    }

    pub fn batch(&self) -> &BatchState {
        &self.batch
    }

    pub fn layout(&self) -> &TileLayout {
        &self.layout
    }

    pub fn render_path(&self) -> RenderPath {
        self.path
    }

    pub fn shading(&self) -> &ShadingConfig {
        &self.shading
    }

    pub fn dynamics(&self) -> &D {
        &self.dynamics
    }

    pub fn renderer_stats(&self) -> RenderStats {
        self.renderer.stats()
    }

    pub fn backend(&self) -> BackendKind {
        self.renderer.kind()
    }

    pub fn scene_offset(&self) -> usize {
        self.scene_offset
    }

    /// Scene-major state vectors.
    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn episodes(&self) -> &[u64] {
        &self.episodes
    }

    fn reset_one(&mut self, s: usize) {
        let dim = self.dynamics.state_dim();
        let seed = scene_reset_seed(self.seed, (self.scene_offset + s) as u64, self.episodes[s]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.dynamics.reset_scene(&mut rng, &mut self.states[s * dim..(s + 1) * dim]);
    }

    fn render(&mut self) -> Result<()> {
        self.dynamics.write_transforms(&self.states, &mut self.batch)?;
        self.renderer
            .render_into(&self.batch, &self.layout, &self.shading, self.path, &mut self.obs)?;
        Ok(())
    }

    pub fn reset(&mut self, seed: u64) -> Result<&FrameBatch> {
        self.seed = seed;
        self.episodes.fill(0);
        for s in 0..self.scene_count() {
            self.reset_one(s);
        }
        self.render()?;
        Ok(&self.obs)
    }

    /// Replaces the state vectors directly and re-renders.
    pub fn set_states(&mut self, states: &[f64]) -> Result<&FrameBatch> {
        if states.len() != self.states.len() {
            return Err(Error::CountMismatch {
                what: "state values".into(),
                expected: self.states.len(),
                actual: states.len(),
            });
        }
        self.states.copy_from_slice(states);
        self.render()?;
        Ok(&self.obs)
    }

    /// One action per scene in `[-1, 1]`. Scenes that finish are reset with
    /// their next episode seed before rendering, so the returned frame of a
    /// done scene is its fresh reset observation.
    pub fn step(&mut self, actions: &[f64]) -> Result<StepResult<'_>> {
        let n = self.scene_count();
        if actions.len() != n {
            return Err(Error::CountMismatch {
                what: "actions".into(),
                expected: n,
                actual: actions.len(),
            });
        }
        if let Some(&bad) = actions.iter().find(|a| !(-1.0..=1.0).contains(*a)) {
            return Err(Error::OutOfRange {
                field: "action".into(),
                value: bad,
                min: -1.0,
                max: 1.0,
            });
        }
        let dim = self.dynamics.state_dim();
        let mut rewards = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        for (s, &a) in actions.iter().enumerate() {
            let (r, done) = self.dynamics.step_scene(&mut self.states[s * dim..(s + 1) * dim], a);
            rewards.push(r);
            dones.push(done);
            if done {
                self.episodes[s] += 1;
                self.reset_one(s);
            }
        }
        self.render()?;
        Ok(StepResult {
            observations: &self.obs,
            rewards,
            dones,
        })
    }
}

pub type CartPoleEnv = VecEnv<CartPole>;

/// Cart-pole environment for all scenes of `config`.
pub fn make_cartpole_env(config: &EnvConfig) -> Result<CartPoleEnv> {
    make_cartpole_shard(config, 0, config.scenes)
}

/// Cart-pole environment for global scenes `offset..offset + scenes`.
pub fn make_cartpole_shard(config: &EnvConfig, offset: usize, scenes: usize) -> Result<CartPoleEnv> {
    if scenes < 1 {
        return Err(Error::InvalidSpec("scene_count must be ≥ 1".into()));
    }
    // Surface layout overflow before touching a device.
    plan_layout(scenes, config.width, config.height, DEFAULT_MAX_ATLAS_DIM)?;
    let renderer = make_renderer(config.backend)?;
    VecEnv::new(
        CartPole::new(config.dynamics)?,
        scenes,
        config.width,
        config.height,
        renderer,
        config.render_path,
        config.shading,
        offset,
    )
}

/// A plain batch of `scenes` copies of the cart-pole geometry, for callers
/// that drive transforms themselves.
pub fn cartpole_scene_spec(scenes: usize, width: u32, height: u32) -> SceneSpec {
    cartpole::scene_spec(scenes, width, height)
}

pub(crate) fn default_camera() -> CameraPose {
    CameraPose::new(Vec3::new(0.0, -5.0, 0.6), Vec3::ZERO)
}

pub(crate) fn uniform(rng: &mut dyn RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
