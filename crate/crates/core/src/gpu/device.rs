//! wgpu implementation of the batched renderer.
//!
//! Synchronization: every render records draw, extract and (for host copies)
//! the staging copy into one command buffer. Reading frames back submits, then
//! blocks on `Device::poll` until the queue is idle before mapping, so a host
//! copy always observes the finished render. Device-resident consumers on the
//! same queue are ordered after the render by submission order.

use std::collections::HashMap;
use std::num::NonZeroU64;
use std::sync::Arc;

use bytemuck::{Pod, Zeroable};

use super::{FrameHandle, FrameStore, GpuFramePath};
use crate::backend::{BackendKind, FrameRenderer};
use crate::error::{Error, Result};
use crate::math::Mat4;
use crate::mesh::MeshAsset;
use crate::raster::{ShadingConfig, ShadingMode};
use crate::soft::{RenderPath, RenderStats};
use crate::state::BatchState;
use crate::tiling::{FrameBatch, TileLayout};

const COLOR_FORMAT: wgpu::TextureFormat = wgpu::TextureFormat::Rgba8Unorm;
const DEPTH_FORMAT: wgpu::TextureFormat = wgpu::TextureFormat::Depth32Float;
const MAT_BYTES: u64 = 64;
const VEC4_BYTES: u64 = 16;

#[repr(C)]
#[derive(Clone, Copy, Pod, Zeroable)]
struct Params {
    model_base: u32,
    instances: u32,
    shared_models: u32,
    cols: u32,
    rows: u32,
    tile_w: u32,
    tile_h: u32,
    lambert: u32,
    light: [f32; 4],
    shade: [f32; 4],
}

#[repr(C)]
#[derive(Clone, Copy, Pod, Zeroable)]
struct ExtractParams {
    scenes: u32,
    cols: u32,
    tile_w: u32,
    tile_h: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Pod, Zeroable)]
struct GpuVertex {
    position: [f32; 3],
    normal: [f32; 3],
}

fn mat_f32(m: &Mat4) -> [f32; 16] {
    m.0.map(|v| v as f32)
}

struct MeshBuffer {
    _mesh: Arc<MeshAsset>,
    buffer: wgpu::Buffer,
    vertices: u32,
}

struct Atlas {
    width: u32,
    height: u32,
    color: wgpu::Texture,
    color_view: wgpu::TextureView,
    depth_view: wgpu::TextureView,
}

/// Per-state device buffers and what has been uploaded into them.
struct Uploads {
    state_id: u64,
    scenes: usize,
    slots: Vec<usize>,
    model_bases: Vec<u32>,
    camera_generation: Option<u64>,
    generations: Vec<Option<u64>>,
    models: wgpu::Buffer,
    colors: wgpu::Buffer,
    vps: wgpu::Buffer,
    params: wgpu::Buffer,
    bind_group: wgpu::BindGroup,
}

/// Hardware renderer. One device per instance; not shared across threads.
pub struct GpuRenderer {
    device: wgpu::Device,
    queue: wgpu::Queue,
    info: wgpu::AdapterInfo,
    max_texture_dim: u32,
    params_stride: u64,
    draw_layout: wgpu::BindGroupLayout,
    pipeline_cull: wgpu::RenderPipeline,
    pipeline_nocull: wgpu::RenderPipeline,
    extract_layout: wgpu::BindGroupLayout,
    extract_pipeline: wgpu::ComputePipeline,
    extract_params: wgpu::Buffer,
    meshes: HashMap<usize, MeshBuffer>,
    atlas: Option<Atlas>,
    uploads: Option<Uploads>,
    frames: FrameStore<wgpu::Buffer>,
    staging: Option<wgpu::Buffer>,
    extract_bind: Option<(u64, wgpu::BindGroup)>,
    frame_path: GpuFramePath,
    stats: RenderStats,
    device_allocations: u64,
}

fn unavailable(e: impl std::fmt::Display) -> Error {
    Error::BackendUnavailable(e.to_string())
}

impl GpuRenderer {
    /// Opens a headless device with host-copy readback.
    pub fn new() -> Result<Self> {
        pollster::block_on(Self::open())
    }

    async fn open() -> Result<Self> {
        let instance = wgpu::Instance::new(wgpu::InstanceDescriptor::new_without_display_handle_from_env());
        let adapter = instance
            .request_adapter(&wgpu::RequestAdapterOptions {
                power_preference: wgpu::PowerPreference::HighPerformance,
                force_fallback_adapter: false,
                compatible_surface: None,
                apply_limit_buckets: false,
            })
            .await
            .map_err(unavailable)?;
        let limits = adapter.limits();
        let (device, queue) = adapter
            .request_device(&wgpu::DeviceDescriptor {
                label: Some("batchrender"),
                required_limits: limits.clone(),
                ..Default::default()
            })
            .await
            .map_err(unavailable)?;
        if limits.max_storage_buffers_per_shader_stage < 3 {
            return Err(unavailable("device lacks vertex-stage storage buffers"));
        }
        let info = adapter.get_info();
        let align = limits.min_uniform_buffer_offset_alignment as u64;
        let params_stride = (std::mem::size_of::<Params>() as u64).div_ceil(align) * align;

        let draw_shader = device.create_shader_module(wgpu::ShaderModuleDescriptor {
            label: Some("draw"),
            source: wgpu::ShaderSource::Wgsl(include_str!("shader.wgsl").into()),
        });
        let storage = |binding| wgpu::BindGroupLayoutEntry {
            binding,
            visibility: wgpu::ShaderStages::VERTEX,
            ty: wgpu::BindingType::Buffer {
                ty: wgpu::BufferBindingType::Storage { read_only: true },
                has_dynamic_offset: false,
                min_binding_size: None,
            },
            count: None,
        };
        let draw_layout = device.create_bind_group_layout(&wgpu::BindGroupLayoutDescriptor {
            label: Some("draw"),
            entries: &[
                wgpu::BindGroupLayoutEntry {
                    binding: 0,
                    visibility: wgpu::ShaderStages::VERTEX,
                    ty: wgpu::BindingType::Buffer {
                        ty: wgpu::BufferBindingType::Uniform,
                        has_dynamic_offset: true,
                        min_binding_size: NonZeroU64::new(std::mem::size_of::<Params>() as u64),
                    },
                    count: None,
                },
                storage(1),
                storage(2),
                storage(3),
            ],
        });
        let pipeline_layout = device.create_pipeline_layout(&wgpu::PipelineLayoutDescriptor {
            label: Some("draw"),
            bind_group_layouts: &[Some(&draw_layout)],
            immediate_size: 0,
        });
        let make_pipeline = |cull: Option<wgpu::Face>| {
            device.create_render_pipeline(&wgpu::RenderPipelineDescriptor {
                label: Some("draw"),
                layout: Some(&pipeline_layout),
                vertex: wgpu::VertexState {
                    module: &draw_shader,
                    entry_point: Some("vs_main"),
                    compilation_options: Default::default(),
                    buffers: &[Some(wgpu::VertexBufferLayout {
                        array_stride: std::mem::size_of::<GpuVertex>() as u64,
                        step_mode: wgpu::VertexStepMode::Vertex,
                        attributes: &wgpu::vertex_attr_array![0 => Float32x3, 1 => Float32x3],
                    })],
                },
                primitive: wgpu::PrimitiveState {
                    topology: wgpu::PrimitiveTopology::TriangleList,
                    front_face: wgpu::FrontFace::Ccw,
                    cull_mode: cull,
                    ..Default::default()
                },
                depth_stencil: Some(wgpu::DepthStencilState {
                    format: DEPTH_FORMAT,
                    depth_write_enabled: Some(true),
                    depth_compare: Some(wgpu::CompareFunction::Less),
                    stencil: Default::default(),
                    bias: Default::default(),
                }),
                multisample: Default::default(),
                fragment: Some(wgpu::FragmentState {
                    module: &draw_shader,
                    entry_point: Some("fs_main"),
                    compilation_options: Default::default(),
                    targets: &[Some(wgpu::ColorTargetState {
                        format: COLOR_FORMAT,
                        blend: None,
                        write_mask: wgpu::ColorWrites::ALL,
                    })],
                }),
                multiview_mask: None,
                cache: None,
            })
        };
        let pipeline_cull = make_pipeline(Some(wgpu::Face::Back));
        let pipeline_nocull = make_pipeline(None);

        let extract_shader = device.create_shader_module(wgpu::ShaderModuleDescriptor {
            label: Some("extract"),
            source: wgpu::ShaderSource::Wgsl(include_str!("extract.wgsl").into()),
        });
        let extract_layout = device.create_bind_group_layout(&wgpu::BindGroupLayoutDescriptor {
            label: Some("extract"),
            entries: &[
                wgpu::BindGroupLayoutEntry {
                    binding: 0,
                    visibility: wgpu::ShaderStages::COMPUTE,
                    ty: wgpu::BindingType::Buffer {
                        ty: wgpu::BufferBindingType::Uniform,
                        has_dynamic_offset: false,
                        min_binding_size: None,
                    },
                    count: None,
                },
                wgpu::BindGroupLayoutEntry {
                    binding: 1,
                    visibility: wgpu::ShaderStages::COMPUTE,
                    ty: wgpu::BindingType::Texture {
                        sample_type: wgpu::TextureSampleType::Float { filterable: false },
                        view_dimension: wgpu::TextureViewDimension::D2,
                        multisampled: false,
                    },
                    count: None,
                },
                wgpu::BindGroupLayoutEntry {
                    binding: 2,
                    visibility: wgpu::ShaderStages::COMPUTE,
                    ty: wgpu::BindingType::Buffer {
                        ty: wgpu::BufferBindingType::Storage { read_only: false },
                        has_dynamic_offset: false,
                        min_binding_size: None,
                    },
                    count: None,
                },
            ],
        });
        let extract_pipeline = device.create_compute_pipeline(&wgpu::ComputePipelineDescriptor {
            label: Some("extract"),
            layout: Some(&device.create_pipeline_layout(&wgpu::PipelineLayoutDescriptor {
                label: Some("extract"),
                bind_group_layouts: &[Some(&extract_layout)],
                immediate_size: 0,
            })),
            module: &extract_shader,
            entry_point: Some("extract"),
            compilation_options: Default::default(),
            cache: None,
        });
        let extract_params = device.create_buffer(&wgpu::BufferDescriptor {
            label: Some("extract params"),
            size: std::mem::size_of::<ExtractParams>() as u64,
            usage: wgpu::BufferUsages::UNIFORM | wgpu::BufferUsages::COPY_DST,
            mapped_at_creation: false,
        });

        Ok(GpuRenderer {
            device,
            queue,
            info,
            max_texture_dim: limits.max_texture_dimension_2d,
            params_stride,
            draw_layout,
            pipeline_cull,
            pipeline_nocull,
            extract_layout,
            extract_pipeline,
            extract_params,
            meshes: HashMap::new(),
            atlas: None,
            uploads: None,
            frames: FrameStore::new(),
            staging: None,
            extract_bind: None,
            frame_path: GpuFramePath::HostCopy,
            stats: RenderStats::default(),
            device_allocations: 0,
        })
    }

    pub fn adapter_info(&self) -> &wgpu::AdapterInfo {
        &self.info
    }

    /// Device-resident frames need a real device; software adapters only
    /// offer host copies.
    pub fn supports_device_resident(&self) -> bool {
        self.info.device_type != wgpu::DeviceType::Cpu
    }

    pub fn frame_path(&self) -> GpuFramePath {
        self.frame_path
    }

    pub fn set_frame_path(&mut self, path: GpuFramePath) -> Result<()> {
        if path == GpuFramePath::DeviceResident && !self.supports_device_resident() {
            return Err(Error::DeviceResidentUnsupported);
        }
        self.frame_path = path;
        Ok(())
    }

    pub fn stats(&self) -> RenderStats {
        self.stats
    }

    /// Device buffers and textures created so far.
    pub fn device_allocations(&self) -> u64 {
        self.device_allocations
    }

    /// Times the frame buffer itself has been (re)allocated.
    pub fn frame_buffer_allocations(&self) -> u64 {
        self.frames.allocations()
    }

    fn buffer(&mut self, label: &str, size: u64, usage: wgpu::BufferUsages) -> wgpu::Buffer {
        self.device_allocations += 1;
        self.device.create_buffer(&wgpu::BufferDescriptor {
            label: Some(label),
            size: size.max(VEC4_BYTES),
            usage,
            mapped_at_creation: false,
        })
    }

    fn ensure_atlas(&mut self, layout: &TileLayout) -> Result<()> {
        let (w, h) = (layout.atlas_width(), layout.atlas_height());
        if w > self.max_texture_dim || h > self.max_texture_dim {
            return Err(Error::AtlasTooLarge {
                width: w as u64,
                height: h as u64,
                max: self.max_texture_dim,
            });
        }
        if self.atlas.as_ref().is_some_and(|a| a.width == w && a.height == h) {
            return Ok(());
        }
        let size = wgpu::Extent3d {
            width: w,
            height: h,
            depth_or_array_layers: 1,
        };
        let texture = |format, usage| {
            self.device.create_texture(&wgpu::TextureDescriptor {
                label: Some("atlas"),
                size,
                mip_level_count: 1,
                sample_count: 1,
                dimension: wgpu::TextureDimension::D2,
                format,
                usage,
                view_formats: &[],
            })
        };
        let color = texture(
            COLOR_FORMAT,
            wgpu::TextureUsages::RENDER_ATTACHMENT | wgpu::TextureUsages::TEXTURE_BINDING,
        );
        let depth = texture(DEPTH_FORMAT, wgpu::TextureUsages::RENDER_ATTACHMENT);
        self.device_allocations += 2;
        self.atlas = Some(Atlas {
            width: w,
            height: h,
            color_view: color.create_view(&Default::default()),
            depth_view: depth.create_view(&Default::default()),
            color,
        });
        self.extract_bind = None;
        Ok(())
    }

    fn ensure_meshes(&mut self, state: &BatchState) {
        for group in state.groups() {
            let key = Arc::as_ptr(group.mesh()) as usize;
            if self.meshes.contains_key(&key) {
                continue;
            }
            let mesh = group.mesh();
            let mut verts = Vec::with_capacity(mesh.triangles().len() * 3);
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let n = mesh.face_normals()[t];
                for &i in tri {
                    let p = mesh.vertices()[i as usize].position;
                    verts.push(GpuVertex {
                        position: [p.x as f32, p.y as f32, p.z as f32],
                        normal: [n.x as f32, n.y as f32, n.z as f32],
                    });
                }
            }
            let bytes: &[u8] = bytemuck::cast_slice(&verts);
            let buffer = self.buffer(
                "mesh",
                bytes.len() as u64,
                wgpu::BufferUsages::VERTEX | wgpu::BufferUsages::COPY_DST,
            );
            self.queue.write_buffer(&buffer, 0, bytes);
            self.meshes.insert(
                key,
                MeshBuffer {
                    _mesh: mesh.clone(),
                    buffer,
                    vertices: verts.len() as u32,
                },
            );
        }
    }

    fn ensure_uploads(&mut self, state: &BatchState) {
        let scenes = state.scene_count();
        let slots: Vec<usize> = state.groups().iter().map(|g| g.slot_count(scenes)).collect();
        let keep = self
            .uploads
            .as_ref()
            .is_some_and(|u| u.state_id == state.id() && u.scenes == scenes && u.slots == slots);
        if keep {
            return;
        }
        let mut model_bases = Vec::with_capacity(slots.len());
        let mut total = 0u32;
        for &n in &slots {
            model_bases.push(total);
            total += n as u32;
        }
        let storage = wgpu::BufferUsages::STORAGE | wgpu::BufferUsages::COPY_DST;
        let models = self.buffer("models", total as u64 * MAT_BYTES, storage);
        let colors = self.buffer("colors", total as u64 * VEC4_BYTES, storage);
        let vps = self.buffer("view projections", scenes as u64 * MAT_BYTES, storage);
        let params = self.buffer(
            "params",
            slots.len().max(1) as u64 * self.params_stride,
            wgpu::BufferUsages::UNIFORM | wgpu::BufferUsages::COPY_DST,
        );
        let bind_group = self.device.create_bind_group(&wgpu::BindGroupDescriptor {
            label: Some("draw"),
            layout: &self.draw_layout,
            entries: &[
                wgpu::BindGroupEntry {
                    binding: 0,
                    resource: wgpu::BindingResource::Buffer(wgpu::BufferBinding {
                        buffer: &params,
                        offset: 0,
                        size: NonZeroU64::new(std::mem::size_of::<Params>() as u64),
                    }),
                },
                wgpu::BindGroupEntry {
                    binding: 1,
                    resource: models.as_entire_binding(),
                },
                wgpu::BindGroupEntry {
                    binding: 2,
                    resource: colors.as_entire_binding(),
                },
                wgpu::BindGroupEntry {
                    binding: 3,
                    resource: vps.as_entire_binding(),
                },
            ],
        });
        self.uploads = Some(Uploads {
            state_id: state.id(),
            scenes,
            generations: vec![None; slots.len()],
            slots,
            model_bases,
            camera_generation: None,
            models,
            colors,
            vps,
            params,
            bind_group,
        });
    }

    /// Instanced upload: re-sends groups and cameras whose generation moved.
    /// Returns floats uploaded as model and view-projection matrices.
    fn upload_changed(&mut self, state: &BatchState) -> u64 {
        let u = self.uploads.as_mut().expect("prepared");
        let mut floats = 0;
        if u.camera_generation != Some(state.camera_generation()) {
            let vps: Vec<[f32; 16]> = (0..state.scene_count())
                .map(|s| mat_f32(&state.view_projection(s)))
                .collect();
            self.queue.write_buffer(&u.vps, 0, bytemuck::cast_slice(&vps));
            u.camera_generation = Some(state.camera_generation());
            floats += 16 * state.scene_count() as u64;
        }
        for (gid, group) in state.groups().iter().enumerate() {
            if u.generations[gid] == Some(group.generation()) {
                continue;
            }
            let n = u.slots[gid];
            let models: Vec<[f32; 16]> = (0..n).map(|k| mat_f32(&group.model_matrix(k))).collect();
            let colors: Vec<[f32; 4]> = (0..n).map(|k| group.color(k).map(|c| c as f32)).collect();
            let base = u.model_bases[gid] as u64;
            self.queue.write_buffer(&u.models, base * MAT_BYTES, bytemuck::cast_slice(&models));
            self.queue.write_buffer(&u.colors, base * VEC4_BYTES, bytemuck::cast_slice(&colors));
            u.generations[gid] = Some(group.generation());
            floats += 16 * n as u64;
        }
        floats
    }

    fn write_params(&self, state: &BatchState, layout: &TileLayout, shading: &ShadingConfig) {
        let u = self.uploads.as_ref().expect("prepared");
        let l = shading.light_dir();
        for (gid, group) in state.groups().iter().enumerate() {
            let p = Params {
                model_base: u.model_bases[gid],
                instances: group.instances_per_scene().max(1) as u32,
                shared_models: group.is_shared() as u32,
                cols: layout.cols,
                rows: layout.rows,
                tile_w: layout.tile_width,
                tile_h: layout.tile_height,
                lambert: (shading.mode() == ShadingMode::Lambert) as u32,
                light: [l.x as f32, l.y as f32, l.z as f32, 0.0],
                shade: [shading.ambient() as f32, shading.diffuse() as f32, 0.0, 0.0],
            };
            self.queue
                .write_buffer(&u.params, gid as u64 * self.params_stride, bytemuck::bytes_of(&p));
        }
    }

    fn prepare(&mut self, state: &BatchState, layout: &TileLayout, shading: &ShadingConfig) -> Result<()> {
        if layout.scene_count != state.scene_count() {
            return Err(Error::LayoutMismatch {
                layout: layout.scene_count,
                state: state.scene_count(),
            });
        }
        if layout.scene_count > 65535 {
            return Err(Error::InvalidSpec("hardware backend supports at most 65535 scenes per batch".into()));
        }
        self.ensure_atlas(layout)?;
        self.ensure_meshes(state);
        self.ensure_uploads(state);
        self.write_params(state, layout, shading);
        Ok(())
    }

    fn clear_color(state: &BatchState) -> wgpu::Color {
        let [r, g, b, a] = state.clear_color();
        wgpu::Color { r, g, b, a }
    }

    fn begin_pass(&self, encoder: &mut wgpu::CommandEncoder, clear: Option<wgpu::Color>) -> wgpu::RenderPass<'static> {
        let atlas = self.atlas.as_ref().expect("prepared");
        let (color_load, depth_load) = match clear {
            Some(c) => (wgpu::LoadOp::Clear(c), wgpu::LoadOp::Clear(1.0)),
            None => (wgpu::LoadOp::Load, wgpu::LoadOp::Load),
        };
        encoder.begin_render_pass(&wgpu::RenderPassDescriptor {
            label: Some("atlas"),
            color_attachments: &[Some(wgpu::RenderPassColorAttachment {
                view: &atlas.color_view,
                depth_slice: None,
                resolve_target: None,
                ops: wgpu::Operations {
                    load: color_load,
                    store: wgpu::StoreOp::Store,
                },
            })],
            depth_stencil_attachment: Some(wgpu::RenderPassDepthStencilAttachment {
                view: &atlas.depth_view,
                depth_ops: Some(wgpu::Operations {
                    load: depth_load,
                    store: wgpu::StoreOp::Store,
                }),
                stencil_ops: None,
            }),
            timestamp_writes: None,
            occlusion_query_set: None,
            multiview_mask: None,
        })
        .forget_lifetime()
    }

    fn bind_group_draw(&self, pass: &mut wgpu::RenderPass<'_>, state: &BatchState, gid: usize) -> Option<u32> {
        let group = &state.groups()[gid];
        let mesh = &self.meshes[&(Arc::as_ptr(group.mesh()) as usize)];
        if mesh.vertices == 0 || group.instances_per_scene() == 0 {
            return None;
        }
        let u = self.uploads.as_ref().expect("prepared");
        pass.set_pipeline(if group.spec().cull_back_faces {
            &self.pipeline_cull
        } else {
            &self.pipeline_nocull
        });
        pass.set_bind_group(0, &u.bind_group, &[(gid as u64 * self.params_stride) as u32]);
        pass.set_vertex_buffer(0, mesh.buffer.slice(..));
        Some(mesh.vertices)
    }

    fn encode_instanced(&mut self, state: &BatchState, encoder: &mut wgpu::CommandEncoder) -> RenderStats {
        let mut delta = RenderStats {
            target_binds: 1,
            matrix_uploads: self.upload_changed(state),
            ..Default::default()
        };
        let scenes = state.scene_count() as u32;
        let mut pass = self.begin_pass(encoder, Some(Self::clear_color(state)));
        for (gid, group) in state.groups().iter().enumerate() {
            let i = group.instances_per_scene() as u32;
            if let Some(verts) = self.bind_group_draw(&mut pass, state, gid) {
                pass.draw(0..verts, 0..scenes * i);
            }
            delta.draw_calls += 1;
            delta.instances_drawn += (scenes * i) as u64;
        }
        delta
    }

    /// Per-object draws with per-draw matrix writes. `per_scene_pass` binds
    /// the target once per scene (naive) instead of once per frame (tiled).
    fn encode_per_object(
        &mut self,
        state: &BatchState,
        encoder: &mut wgpu::CommandEncoder,
        per_scene_pass: bool,
    ) -> RenderStats {
        let mut delta = RenderStats::default();
        // Per-draw writes bypass the generation cache; force a full refresh
        // before the next instanced render.
        {
            let u = self.uploads.as_mut().expect("prepared");
            u.camera_generation = None;
            u.generations.iter_mut().for_each(|g| *g = None);
        }
        let u = self.uploads.as_ref().expect("prepared");
        for (gid, group) in state.groups().iter().enumerate() {
            let n = u.slots[gid];
            let colors: Vec<[f32; 4]> = (0..n).map(|k| group.color(k).map(|c| c as f32)).collect();
            self.queue.write_buffer(
                &u.colors,
                u.model_bases[gid] as u64 * VEC4_BYTES,
                bytemuck::cast_slice(&colors),
            );
        }
        let clear = Self::clear_color(state);
        let mut pass = (!per_scene_pass).then(|| self.begin_pass(encoder, Some(clear)));
        if !per_scene_pass {
            delta.target_binds += 1;
        }
        for s in 0..state.scene_count() {
            let vp = mat_f32(&state.view_projection(s));
            self.queue
                .write_buffer(&u.vps, s as u64 * MAT_BYTES, bytemuck::cast_slice(&vp));
            delta.matrix_uploads += 16;
            if per_scene_pass {
                drop(pass.take());
                pass = Some(self.begin_pass(encoder, (s == 0).then_some(clear)));
                delta.target_binds += 1;
            }
            let p = pass.as_mut().expect("pass open");
            for (gid, group) in state.groups().iter().enumerate() {
                let i_count = group.instances_per_scene();
                let verts = self.bind_group_draw(p, state, gid);
                for i in 0..i_count {
                    let slot = group.slot(s, i);
                    let m = mat_f32(&group.model_matrix(slot));
                    let offset = (u.model_bases[gid] as u64 + slot as u64) * MAT_BYTES;
                    self.queue.write_buffer(&u.models, offset, bytemuck::cast_slice(&m));
                    delta.matrix_uploads += 16;
                    let g = (s * i_count + i) as u32;
                    if let Some(v) = verts {
                        p.draw(0..v, g..g + 1);
                    }
                    delta.draw_calls += 1;
                    delta.instances_drawn += 1;
                }
            }
        }
        drop(pass);
        delta
    }

    fn encode_extract(&mut self, layout: &TileLayout, encoder: &mut wgpu::CommandEncoder) -> FrameHandle {
        let bytes = layout.frame_bytes() as u64 * layout.scene_count as u64;
        let before = self.frames.allocations();
        let device = &self.device;
        let (frame_buffer, handle) = self.frames.acquire_with(
            |b| b.size() == bytes.max(VEC4_BYTES),
            || {
                device.create_buffer(&wgpu::BufferDescriptor {
                    label: Some("frames"),
                    size: bytes.max(VEC4_BYTES),
                    usage: wgpu::BufferUsages::STORAGE | wgpu::BufferUsages::COPY_SRC,
                    mapped_at_creation: false,
                })
            },
        );
        let frame_buffer = frame_buffer.clone();
        if self.frames.allocations() != before {
            self.device_allocations += 1;
            self.extract_bind = None;
        }
        let params = ExtractParams {
            scenes: layout.scene_count as u32,
            cols: layout.cols,
            tile_w: layout.tile_width,
            tile_h: layout.tile_height,
        };
        self.queue.write_buffer(&self.extract_params, 0, bytemuck::bytes_of(&params));
        if self.extract_bind.is_none() {
            let atlas = self.atlas.as_ref().expect("prepared");
            let view = atlas.color.create_view(&Default::default());
            let bind = self.device.create_bind_group(&wgpu::BindGroupDescriptor {
                label: Some("extract"),
                layout: &self.extract_layout,
                entries: &[
                    wgpu::BindGroupEntry {
                        binding: 0,
                        resource: self.extract_params.as_entire_binding(),
                    },
                    wgpu::BindGroupEntry {
                        binding: 1,
                        resource: wgpu::BindingResource::TextureView(&view),
                    },
                    wgpu::BindGroupEntry {
                        binding: 2,
                        resource: frame_buffer.as_entire_binding(),
                    },
                ],
            });
            self.extract_bind = Some((bytes, bind));
        }
        let mut pass = encoder.begin_compute_pass(&wgpu::ComputePassDescriptor {
            label: Some("extract"),
            timestamp_writes: None,
        });
        pass.set_pipeline(&self.extract_pipeline);
        pass.set_bind_group(0, &self.extract_bind.as_ref().expect("bound").1, &[]);
        pass.dispatch_workgroups(
            layout.tile_width.div_ceil(8),
            layout.tile_height.div_ceil(8),
            layout.scene_count as u32,
        );
        handle
    }

    /// Renders through `path` and leaves the frames in the device frame
    /// buffer. The previous handle is invalidated.
    pub fn render(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
        path: RenderPath,
    ) -> Result<(FrameHandle, RenderStats)> {
        self.prepare(state, layout, shading)?;
        let mut encoder = self.device.create_command_encoder(&Default::default());
        let mut delta = match path {
            RenderPath::Instanced => self.encode_instanced(state, &mut encoder),
            RenderPath::Tiled => self.encode_per_object(state, &mut encoder, false),
            RenderPath::Naive => self.encode_per_object(state, &mut encoder, true),
        };
        let handle = self.encode_extract(layout, &mut encoder);
        self.queue.submit([encoder.finish()]);
        delta.frames_produced += state.scene_count() as u64;
        self.stats += delta;
        Ok((handle, delta))
    }

    /// Instanced render; see [`GpuRenderer::render`].
    pub fn render_instanced(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
    ) -> Result<(FrameHandle, RenderStats)> {
        self.render(state, layout, shading, RenderPath::Instanced)
    }

    /// The device buffer holding `S x H x W x 4` frames for `handle`.
    pub fn device_frames(&self, handle: FrameHandle) -> Result<&wgpu::Buffer> {
        if self.frame_path != GpuFramePath::DeviceResident {
            return Err(Error::Config("renderer is in HostCopy mode".into()));
        }
        self.frames.get(handle)
    }

    /// Copies the frames behind `handle` to the host.
    pub fn export(&mut self, handle: FrameHandle, layout: &TileLayout) -> Result<FrameBatch> {
        let mut out = FrameBatch::zeroed(layout.scene_count, layout.tile_width, layout.tile_height);
        self.export_into(handle, &mut out)?;
        Ok(out)
    }

    fn export_into(&mut self, handle: FrameHandle, out: &mut FrameBatch) -> Result<()> {
        let size = self.frames.get(handle)?.size();
        if !self.staging.as_ref().is_some_and(|b| b.size() == size) {
            let staging = self.buffer(
                "staging",
                size,
                wgpu::BufferUsages::MAP_READ | wgpu::BufferUsages::COPY_DST,
            );
            self.staging = Some(staging);
        }
        let staging = self.staging.as_ref().expect("allocated");
        let mut encoder = self.device.create_command_encoder(&Default::default());
        encoder.copy_buffer_to_buffer(self.frames.get(handle)?, 0, staging, 0, size);
        self.queue.submit([encoder.finish()]);

        let slice = staging.slice(..);
        let (tx, rx) = std::sync::mpsc::channel();
        slice.map_async(wgpu::MapMode::Read, move |r| {
            let _ = tx.send(r);
        });
        self.device
            .poll(wgpu::PollType::wait_indefinitely())
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        rx.recv()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        {
            let data = slice
                .get_mapped_range()
                .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
            let n = out.as_bytes().len();
            out.as_bytes_mut().copy_from_slice(&data[..n]);
        }
        staging.unmap();
        Ok(())
    }

    pub fn release(&mut self, handle: FrameHandle) -> Result<()> {
        self.frames.release(handle)
    }
}

impl FrameRenderer for GpuRenderer {
    fn kind(&self) -> BackendKind {
        BackendKind::Gpu
    }

    fn render_into(
        &mut self,
        state: &BatchState,
        layout: &TileLayout,
        shading: &ShadingConfig,
        path: RenderPath,
        frames: &mut FrameBatch,
    ) -> Result<RenderStats> {
        if frames.shape() != [layout.scene_count, layout.tile_height as usize, layout.tile_width as usize, 4] {
            return Err(Error::ShapeMismatch {
                field: "frames".into(),
                expected: vec![layout.scene_count, layout.tile_height as usize, layout.tile_width as usize, 4],
                actual: frames.shape().to_vec(),
            });
        }
        let (handle, delta) = self.render(state, layout, shading, path)?;
        self.export_into(handle, frames)?;
        Ok(delta)
    }

    fn stats(&self) -> RenderStats {
        self.stats
    }
}
