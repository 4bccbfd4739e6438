//! Deterministic reference renderer.
//!
//! Three render paths with identical pixels and different bookkeeping:
//!
//! * [`SoftRenderer::render_naive`]: one target per scene, one draw per object.
//! * [`SoftRenderer::render_tiled`]: one atlas target, still one draw per object.
//! * [`SoftRenderer::render_instanced`]: one atlas target, one logical draw
//!   per model group, matrices packed once per state generation.

use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Mat4};
use crate::raster::{self, quantize_rgba, Draw, PixelBounds, Scratch, ShadingConfig, TargetView};
use crate::state::{BatchState, GroupState};
use crate::tiling::{partition_into, FrameBatch, RgbaImage, TileLayout};

/// Counters for the quantities the render paths trade against each other.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderStats {
    pub target_binds: u64,
    pub draw_calls: u64,
    pub instances_drawn: u64,
    /// Matrix floats uploaded (model matrices plus view-projections).
    pub matrix_uploads: u64,
    pub frames_produced: u64,
}

impl Add for RenderStats {
    type Output = RenderStats;
    fn add(self, o: RenderStats) -> RenderStats {
        RenderStats {
            target_binds: self.target_binds + o.target_binds,
            draw_calls: self.draw_calls + o.draw_calls,
            instances_drawn: self.instances_drawn + o.instances_drawn,
            matrix_uploads: self.matrix_uploads + o.matrix_uploads,
            frames_produced: self.frames_produced + o.frames_produced,
        }
    }
}

impl AddAssign for RenderStats {
    fn add_assign(&mut self, o: RenderStats) {
        *self = *self + o;
    }
}

impl Sub for RenderStats {
    type Output = RenderStats;
    fn sub(self, o: RenderStats) -> RenderStats {
        RenderStats {
            target_binds: self.target_binds - o.target_binds,
            draw_calls: self.draw_calls - o.draw_calls,
            instances_drawn: self.instances_drawn - o.instances_drawn,
            matrix_uploads: self.matrix_uploads - o.matrix_uploads,
            frames_produced: self.frames_produced - o.frames_produced,
        }
    }
}

/// Color plus depth buffer covering a whole atlas.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderTarget {
    pub color: RgbaImage,
    pub depth: Vec<f32>,
}

impl RenderTarget {
    pub fn new(width: u32, height: u32, clear: [u8; 4]) -> Self {
        RenderTarget {
            color: RgbaImage::filled(width, height, clear),
            depth: vec![1.0; width as usize * height as usize],
        }
    }

    fn for_layout(layout: &TileLayout, clear: [u8; 4]) -> Self {
        RenderTarget::new(layout.atlas_width(), layout.atlas_height(), clear)
    }

    fn clear(&mut self, rgba: [u8; 4]) {
        for px in self.color.pixels.chunks_exact_mut(4) {
            px.copy_from_slice(&rgba);
        }
        self.depth.fill(1.0);
    }

    fn fits(&self, layout: &TileLayout) -> bool {
        self.color.width == layout.atlas_width() && self.color.height == layout.atlas_height()
    }

    fn tile_view(&mut self, layout: &TileLayout, scene: usize) -> TargetView<'_> {
        let rect = layout.tile_unchecked(scene).rect;
        TargetView {
            stride: self.color.width as usize,
            color: &mut self.color.pixels,
            depth: &mut self.depth,
            origin_x: rect.x0 as usize,
            origin_y: rect.y0 as usize,
            width: rect.width,
            height: rect.height,
            touched: PixelBounds::EMPTY,
        }
    }
}

/// The renderer-owned atlas reused across frames. Only the pixels drawn last
/// frame are cleared again, as long as the clear color stays the same.
struct Atlas {
    target: RenderTarget,
    clear: [u8; 4],
    touched: Vec<PixelBounds>,
}

impl Atlas {
    fn new(layout: &TileLayout, clear: [u8; 4]) -> Self {
        Atlas {
            target: RenderTarget::for_layout(layout, clear),
            clear,
            touched: vec![PixelBounds::EMPTY; layout.scene_count],
        }
    }

    fn reuse(mut self, layout: &TileLayout, clear: [u8; 4]) -> Self {
        if !self.target.fits(layout) || self.touched.len() != layout.scene_count {
            return Atlas::new(layout, clear);
        }
        if clear != self.clear {
            self.target.clear(clear);
            self.clear = clear;
        } else {
            let stride = self.target.color.width as usize;
            for (s, b) in self.touched.iter().enumerate() {
                if b.is_empty() {
                    continue;
                }
                let rect = layout.tile_unchecked(s).rect;
                for y in b.y0..b.y1 {
                    let start = (rect.y0 + y) as usize * stride + (rect.x0 + b.x0) as usize;
                    let end = start + (b.x1 - b.x0) as usize;
                    self.target.depth[start..end].fill(1.0);
                    for px in self.target.color.pixels[start * 4..end * 4].chunks_exact_mut(4) {
                        px.copy_from_slice(&clear);
                    }
                }
            }
        }
        self.touched.fill(PixelBounds::EMPTY);
        self
    }
}

/// Packed matrices of one group at one generation, with the normal matrices
/// derived from them.
struct GroupUpload {
    generation: u64,
    models: Vec<Mat4>,
    normals: Vec<Mat3>,
}

#[derive(Default)]
struct UploadCache {
    state_id: u64,
    camera_generation: Option<u64>,
    view_projections: Vec<Mat4>,
    groups: Vec<Option<GroupUpload>>,
}

fn check_layout(state: &BatchState, layout: &TileLayout) -> Result<()> {
    if layout.scene_count != state.scene_count() {
        return Err(Error::LayoutMismatch {
            layout: layout.scene_count,
            state: state.scene_count(),
        });
    }
    Ok(())
}

#[derive(Default)]
pub struct SoftRenderer {
    stats: RenderStats,
    scratch: Scratch,
    cache: UploadCache,
    atlas: Option<Atlas>,
}

impl SoftRenderer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cumulative counters since construction.
    pub fn stats(&self) -> RenderStats {
        self.stats
    }

    #[allow(clippy::too_many_arguments)]
    fn draw_object(
        &mut self,
        target: &mut TargetView<'_>,
        group: &GroupState,
        vp: &Mat4,
        model: &Mat4,
        normal_matrix: Mat3,
        slot: usize,
        shading: &ShadingConfig,
    ) {
        let d = Draw {
            mesh: group.mesh(),
            mvp: *vp * *model,
            normal_matrix,
            color: group.color(slot),
            cull_back_faces: group.spec().cull_back_faces,
        };
        raster::draw(target, &d, shading, &mut self.scratch);
    }

    /// Per-object draws for every scene, one `width x height` target bound per scene.
    pub fn render_naive(
        &mut self,
        state: &BatchState,
        width: u32,
        height: u32,
        shading: &ShadingConfig,
    ) -> Result<(FrameBatch, RenderStats)> {
        let mut frames = FrameBatch::zeroed(state.scene_count(), width, height);
        let stats = self.render_naive_into(state, shading, &mut frames)?;
        Ok((frames, stats))
    }

    pub(crate) fn render_naive_into(
        &mut self,
        state: &BatchState,
        shading: &ShadingConfig,
        frames: &mut FrameBatch,
    ) -> Result<RenderStats> {
        let (width, height) = (frames.width(), frames.height());
        let clear = quantize_rgba(state.clear_color());
        let mut delta = RenderStats::default();
        for s in 0..state.scene_count() {
            let mut target = RenderTarget::new(width, height, clear);
            delta.target_binds += 1;
            let vp = state.view_projection(s);
            delta.matrix_uploads += 16;
            let mut view = TargetView {
                stride: width as usize,
                color: &mut target.color.pixels,
                depth: &mut target.depth,
                origin_x: 0,
                origin_y: 0,
                width,
                height,
                touched: PixelBounds::EMPTY,
            };
            for group in state.groups() {
                for i in 0..group.instances_per_scene() {
                    let slot = group.slot(s, i);
                    let model = group.model_matrix(slot);
                    delta.matrix_uploads += 16;
                    self.draw_object(&mut view, group, &vp, &model, model.upper3().cofactor(), slot, shading);
                    delta.draw_calls += 1;
                    delta.instances_drawn += 1;
                }
            }
            frames.frame_mut(s).copy_from_slice(&target.color.pixels);
        }
        delta.frames_produced += state.scene_count() as u64;
        self.stats += delta;
        Ok(delta)
    }

    /// Per-object draws into one atlas; each scene is confined to its tile.
    pub fn render_tiled(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
    ) -> Result<(RenderTarget, RenderStats)> {
        check_layout(state, layout)?;
        let mut target = RenderTarget::for_layout(layout, quantize_rgba(state.clear_color()));
        let mut touched = vec![PixelBounds::EMPTY; layout.scene_count];
        let stats = self.tiled_pass(state, layout, shading, &mut target, &mut touched);
        Ok((target, stats))
    }

    fn tiled_pass(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
        target: &mut RenderTarget,
        touched: &mut [PixelBounds],
    ) -> RenderStats {
        let mut delta = RenderStats {
            target_binds: 1,
            ..Default::default()
        };
        for (s, touched) in touched.iter_mut().enumerate() {
            let vp = state.view_projection(s);
            delta.matrix_uploads += 16;
            let mut view = target.tile_view(layout, s);
            for group in state.groups() {
                for i in 0..group.instances_per_scene() {
                    let slot = group.slot(s, i);
                    let model = group.model_matrix(slot);
                    delta.matrix_uploads += 16;
                    self.draw_object(&mut view, group, &vp, &model, model.upper3().cofactor(), slot, shading);
                    delta.draw_calls += 1;
                    delta.instances_drawn += 1;
                }
            }
            *touched = view.touched;
        }
        self.stats += delta;
        delta
    }

    /// One logical draw per group covering every scene's instances.
    pub fn render_instanced(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
    ) -> Result<(RenderTarget, RenderStats)> {
        check_layout(state, layout)?;
        let mut target = RenderTarget::for_layout(layout, quantize_rgba(state.clear_color()));
        let mut touched = vec![PixelBounds::EMPTY; layout.scene_count];
        let stats = self.instanced_pass(state, layout, shading, &mut target, &mut touched);
        Ok((target, stats))
    }

    /// Re-packs whatever changed since the last upload; returns floats uploaded.
    fn upload(&mut self, state: &BatchState) -> u64 {
        let cache = &mut self.cache;
        if cache.state_id != state.id() {
            *cache = UploadCache {
                state_id: state.id(),
                ..Default::default()
            };
        }
        cache.groups.resize_with(state.groups().len(), || None);
        let mut floats = 0u64;
        if cache.camera_generation != Some(state.camera_generation()) {
            cache.view_projections = (0..state.scene_count()).map(|s| state.view_projection(s)).collect();
            cache.camera_generation = Some(state.camera_generation());
            floats += 16 * state.scene_count() as u64;
        }
        for (gid, group) in state.groups().iter().enumerate() {
            let fresh = matches!(&cache.groups[gid], Some(u) if u.generation == group.generation());
            if fresh {
                continue;
            }
            // Reuse the previous buffers; only the contents change between steps.
            let mut up = cache.groups[gid].take().unwrap_or(GroupUpload {
                generation: 0,
                models: Vec::new(),
                normals: Vec::new(),
            });
            let slots = group.slot_count(state.scene_count());
            up.models.clear();
            up.models.extend((0..slots).map(|slot| group.model_matrix(slot)));
            up.normals.clear();
            up.normals.extend(up.models.iter().map(|m| m.upper3().cofactor()));
            up.generation = group.generation();
            floats += 16 * slots as u64;
            cache.groups[gid] = Some(up);
        }
        floats
    }

    fn instanced_pass(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
        target: &mut RenderTarget,
        touched: &mut [PixelBounds],
    ) -> RenderStats {
        let mut delta = RenderStats {
            target_binds: 1,
            matrix_uploads: self.upload(state),
            ..Default::default()
        };
        let cache = std::mem::take(&mut self.cache);
        // Each group is one logical draw over all scenes. Tiles never interact,
        // so it is executed tile by tile (binned), keeping one tile hot at a
        // time; per-tile draw order is the same as group by group.
        for (s, touched) in touched.iter_mut().enumerate() {
            let vp = &cache.view_projections[s];
            let mut view = target.tile_view(layout, s);
            for (gid, group) in state.groups().iter().enumerate() {
                let upload = cache.groups[gid].as_ref().expect("uploaded");
                for i in 0..group.instances_per_scene() {
                    let slot = group.slot(s, i);
                    self.draw_object(&mut view, group, vp, &upload.models[slot], upload.normals[slot], slot, shading);
                }
            }
            *touched = view.touched;
        }
        for group in state.groups() {
            delta.draw_calls += 1;
            delta.instances_drawn += (state.scene_count() * group.instances_per_scene()) as u64;
        }
        self.cache = cache;
        self.stats += delta;
        delta
    }

    /// Host-side extraction of the per-scene frames from a rendered atlas.
    pub fn readback(&mut self, target: &RenderTarget, layout: &TileLayout) -> Result<FrameBatch> {
        let mut frames = FrameBatch::zeroed(layout.scene_count, layout.tile_width, layout.tile_height);
        self.readback_into(target, layout, &mut frames)?;
        Ok(frames)
    }

    fn readback_into(&mut self, target: &RenderTarget, layout: &TileLayout, frames: &mut FrameBatch) -> Result<()> {
        partition_into(&target.color, layout, frames)?;
        self.stats.frames_produced += layout.scene_count as u64;
        Ok(())
    }

    /// Renders through `path` into a renderer-owned atlas and reads back into
    /// `frames`, which must be `S x H x W x 4` for the layout.
    pub fn render_frames_into(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
        path: RenderPath,
        frames: &mut FrameBatch,
    ) -> Result<RenderStats> {
        check_layout(state, layout)?;
        if frames.scenes() != layout.scene_count
            || frames.width() != layout.tile_width
            || frames.height() != layout.tile_height
        {
            return Err(Error::ShapeMismatch {
                field: "frames".into(),
                expected: vec![layout.scene_count, layout.tile_height as usize, layout.tile_width as usize, 4],
                actual: frames.shape().to_vec(),
            });
        }
        let before = self.stats;
        if path == RenderPath::Naive {
            self.render_naive_into(state, shading, frames)?;
            return Ok(self.stats - before);
        }
        let clear = quantize_rgba(state.clear_color());
        let mut atlas = match self.atlas.take() {
            Some(a) => a.reuse(layout, clear),
            None => Atlas::new(layout, clear),
        };
        match path {
            RenderPath::Tiled => self.tiled_pass(state, layout, shading, &mut atlas.target, &mut atlas.touched),
            _ => self.instanced_pass(state, layout, shading, &mut atlas.target, &mut atlas.touched),
        };
        let result = self.readback_into(&atlas.target, layout, frames);
        self.atlas = Some(atlas);
        result.map(|_| self.stats - before)
    }
}

/// Which render path a frame goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderPath {
    Naive,
    Tiled,
    Instanced,
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use ndarray::{ArrayD, IxDyn};

    use super::*;
    use crate::math::{CameraPose, Vec3};
    use crate::mesh::MeshAsset;
    use crate::state::{create_batch, GroupSpec, SceneSpec};

    fn cube_scene(scenes: usize) -> BatchState {
        let mut b = create_batch(
            SceneSpec::new(scenes, 64, 64)
                .with_group(GroupSpec::new(Arc::new(MeshAsset::cube()), 1))
                .with_clear_color([0.1, 0.2, 0.3, 1.0]),
        )
        .unwrap();
        b.set_camera_poses(vec![CameraPose::new(Vec3::new(0.0, -5.0, 0.0), Vec3::ZERO); scenes])
            .unwrap();
        b
    }

    #[test]
    fn reused_atlas_matches_fresh_frames() {
        let mut b = cube_scene(4);
        let layout = TileLayout::new(4, 64, 64).unwrap();
        let shading = ShadingConfig::default();
        let mut r = SoftRenderer::new();
        let mut frames = FrameBatch::zeroed(4, 64, 64);
        for step in 0..12 {
            // Objects drift and shrink, so stale pixels would show.
            let t = step as f64;
            let pos: Vec<f64> = (0..4).flat_map(|s| [0.2 * t - 1.0, 0.0, 0.1 * s as f64]).collect();
            let scale: Vec<f64> = (0..4).map(|s| 1.5 - 0.1 * t + 0.05 * s as f64).collect();
            b.set_instance_transforms(
                0,
                ArrayD::from_shape_vec(IxDyn(&[4, 1, 3]), pos).unwrap(),
                ArrayD::from_shape_vec(IxDyn(&[4, 1, 3]), vec![10.0 * t; 12]).unwrap(),
                ArrayD::from_shape_vec(IxDyn(&[4, 1, 1]), scale).unwrap(),
            )
            .unwrap();
            let path = if step % 3 == 0 { RenderPath::Tiled } else { RenderPath::Instanced };
            r.render_frames_into(&b, &layout, &shading, path, &mut frames).unwrap();
            let (want, _) = SoftRenderer::new().render_naive(&b, 64, 64, &shading).unwrap();
            assert_eq!(frames, want, "step {step}");
        }
        // Same layout, new clear color.
        let other = create_batch(
            SceneSpec::new(4, 64, 64)
                .with_group(GroupSpec::new(Arc::new(MeshAsset::cube()), 1))
                .with_clear_color([0.9, 0.1, 0.1, 1.0]),
        )
        .unwrap();
        r.render_frames_into(&other, &layout, &shading, RenderPath::Instanced, &mut frames).unwrap();
        assert_eq!(frames, SoftRenderer::new().render_naive(&other, 64, 64, &shading).unwrap().0);
    }

    #[test]
    fn empty_batch_is_clear_color() {
        let b = create_batch(SceneSpec::new(3, 8, 8).with_clear_color([0.0, 0.5, 1.0, 1.0])).unwrap();
        let mut r = SoftRenderer::new();
        let (frames, stats) = r.render_naive(&b, 8, 8, &ShadingConfig::default()).unwrap();
        assert!(frames.as_bytes().chunks(4).all(|p| p == [0, 128, 255, 255]));
        assert_eq!(stats.draw_calls, 0);
        assert_eq!(stats.target_binds, 3);
    }

    #[test]
    fn cube_center_drawn_corner_clear() {
        let b = cube_scene(1);
        let mut r = SoftRenderer::new();
        let (frames, _) = r.render_naive(&b, 64, 64, &ShadingConfig::default()).unwrap();
        let clear = quantize_rgba(b.clear_color());
        assert_ne!(frames.pixel(0, 32, 32), clear);
        assert_eq!(frames.pixel(0, 0, 0), clear);
    }

    #[test]
    fn identical_scenes_identical_frames() {
        let b = cube_scene(4);
        let (frames, _) = SoftRenderer::new().render_naive(&b, 64, 64, &ShadingConfig::default()).unwrap();
        for s in 1..4 {
            assert_eq!(frames.frame(s), frames.frame(0));
        }
    }

    #[test]
    fn three_paths_agree_on_cube() {
        let b = cube_scene(5);
        let layout = TileLayout::new(5, 64, 64).unwrap();
        let shading = ShadingConfig::default();
        let mut r = SoftRenderer::new();
        let (naive, _) = r.render_naive(&b, 64, 64, &shading).unwrap();
        let (tiled, _) = r.render_tiled(&b, &layout, &shading).unwrap();
        let (inst, _) = r.render_instanced(&b, &layout, &shading).unwrap();
        assert_eq!(r.readback(&tiled, &layout).unwrap(), naive);
        assert_eq!(r.readback(&inst, &layout).unwrap(), naive);
        // blank tile keeps the clear color
        assert_eq!(tiled.color.pixel(191, 127), quantize_rgba(b.clear_color()));
    }

    #[test]
    fn counters() {
        let mesh = Arc::new(MeshAsset::cube());
        let mut spec = SceneSpec::new(16, 16, 16);
        for _ in 0..3 {
            spec = spec.with_group(GroupSpec::new(mesh.clone(), 10));
        }
        let b = create_batch(spec).unwrap();
        let layout = TileLayout::new(16, 16, 16).unwrap();
        let shading = ShadingConfig::default();
        let mut r = SoftRenderer::new();
        let (_, naive) = r.render_naive(&b, 16, 16, &shading).unwrap();
        assert_eq!((naive.draw_calls, naive.target_binds, naive.instances_drawn), (480, 16, 480));
        let (_, tiled) = r.render_tiled(&b, &layout, &shading).unwrap();
        assert_eq!((tiled.draw_calls, tiled.target_binds), (480, 1));
        let (_, inst) = r.render_instanced(&b, &layout, &shading).unwrap();
        assert_eq!((inst.draw_calls, inst.target_binds, inst.instances_drawn), (3, 1, 480));
        assert_eq!(inst.matrix_uploads, 16 * 480 + 16 * 16);
        // nothing changed: nothing re-uploaded
        let (_, again) = r.render_instanced(&b, &layout, &shading).unwrap();
        assert_eq!(again.matrix_uploads, 0);
        assert_eq!(r.stats(), naive + tiled + inst + again);
    }

    #[test]
    fn shared_group_uploads_once_per_instance() {
        let b = create_batch(SceneSpec::new(4, 8, 8).with_group(GroupSpec::new(Arc::new(MeshAsset::cube()), 2).shared(true)))
            .unwrap();
        let layout = TileLayout::new(4, 8, 8).unwrap();
        let (_, stats) = SoftRenderer::new().render_instanced(&b, &layout, &ShadingConfig::default()).unwrap();
        assert_eq!(stats.instances_drawn, 8);
        assert_eq!(stats.matrix_uploads, 2 * 16 + 4 * 16);
    }

    #[test]
    fn generation_bump_triggers_reupload() {
        let mut b = cube_scene(2);
        let layout = TileLayout::new(2, 64, 64).unwrap();
        let mut r = SoftRenderer::new();
        r.render_instanced(&b, &layout, &ShadingConfig::default()).unwrap();
        b.set_instance_colors(0, ArrayD::from_elem(IxDyn(&[2, 1, 4]), 0.5)).unwrap();
        let (_, stats) = r.render_instanced(&b, &layout, &ShadingConfig::default()).unwrap();
        assert_eq!(stats.matrix_uploads, 32);
    }

    #[test]
    fn readback_counts_frames_and_is_stable() {
        let b = cube_scene(9);
        let layout = TileLayout::new(9, 64, 64).unwrap();
        let mut r = SoftRenderer::new();
        let (t, _) = r.render_tiled(&b, &layout, &ShadingConfig::default()).unwrap();
        let a = r.readback(&t, &layout).unwrap();
        let c = r.readback(&t, &layout).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.as_bytes().len(), 147456);
        assert_eq!(r.stats().frames_produced, 18);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let b = cube_scene(2);
        let layout = TileLayout::new(3, 64, 64).unwrap();
        let mut r = SoftRenderer::new();
        assert!(matches!(
            r.render_tiled(&b, &layout, &ShadingConfig::default()),
            Err(Error::LayoutMismatch { layout: 3, state: 2 })
        ));
        assert!(r.render_instanced(&b, &layout, &ShadingConfig::default()).is_err());
    }

    #[test]
    fn render_frames_into_matches_direct_paths() {
        let b = cube_scene(3);
        let layout = TileLayout::new(3, 64, 64).unwrap();
        let shading = ShadingConfig::default();
        let mut r = SoftRenderer::new();
        let (naive, _) = r.render_naive(&b, 64, 64, &shading).unwrap();
        let mut frames = FrameBatch::zeroed(3, 64, 64);
        for path in [RenderPath::Naive, RenderPath::Tiled, RenderPath::Instanced, RenderPath::Tiled] {
            frames.as_bytes_mut().fill(0);
            let stats = r.render_frames_into(&b, &layout, &shading, path, &mut frames).unwrap();
            assert_eq!(frames, naive, "{path:?}");
            assert_eq!(stats.frames_produced, 3);
        }
    }
}
