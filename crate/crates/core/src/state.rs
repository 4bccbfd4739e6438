//! Tensor-shaped state for `S` scenes: model groups with per-instance
//! transforms and colors, plus one camera per scene.
//!
//! Tensors are replaced wholesale. Every successful `set_*` call bumps a
//! generation counter which backends use to decide when to re-upload.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::math::{
    perspective_projection, trs_unchecked, view_unchecked, CameraPose, Mat4, ProjectionParams, Vec3,
};
use crate::mesh::MeshAsset;

static NEXT_STATE_ID: AtomicU64 = AtomicU64::new(1);

fn next_state_id() -> u64 {
    NEXT_STATE_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct GroupSpec {
    pub mesh: Arc<MeshAsset>,
    pub instances_per_scene: usize,
    /// One set of `I` transforms reused by every scene.
    pub shared: bool,
    pub cull_back_faces: bool,
}

impl GroupSpec {
    pub fn new(mesh: Arc<MeshAsset>, instances_per_scene: usize) -> Self {
        GroupSpec {
            mesh,
            instances_per_scene,
            shared: false,
            cull_back_faces: true,
        }
    }

    pub fn shared(mut self, shared: bool) -> Self {
        self.shared = shared;
        self
    }

    pub fn cull_back_faces(mut self, cull: bool) -> Self {
        self.cull_back_faces = cull;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub scene_count: usize,
    /// Frame resolution; only used for the default projection aspect.
    pub width: u32,
    pub height: u32,
    pub groups: Vec<GroupSpec>,
    pub clear_color: [f64; 4],
}

impl SceneSpec {
    pub fn new(scene_count: usize, width: u32, height: u32) -> Self {
        SceneSpec {
            scene_count,
            width,
            height,
            groups: Vec::new(),
            clear_color: [0.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn with_group(mut self, group: GroupSpec) -> Self {
        self.groups.push(group);
        self
    }

    pub fn with_clear_color(mut self, rgba: [f64; 4]) -> Self {
        self.clear_color = rgba;
        self
    }
}

#[derive(Debug, Clone)]
pub struct GroupState {
    spec: GroupSpec,
    positions: ArrayD<f64>,
    hprs: ArrayD<f64>,
    scales: ArrayD<f64>,
    colors: ArrayD<f64>,
    generation: u64,
}

impl GroupState {
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }
    pub fn mesh(&self) -> &Arc<MeshAsset> {
        &self.spec.mesh
    }
    pub fn instances_per_scene(&self) -> usize {
        self.spec.instances_per_scene
    }
    pub fn is_shared(&self) -> bool {
        self.spec.shared
    }
    pub fn positions(&self) -> &ArrayD<f64> {
        &self.positions
    }
    pub fn hprs(&self) -> &ArrayD<f64> {
        &self.hprs
    }
    pub fn scales(&self) -> &ArrayD<f64> {
        &self.scales
    }
    pub fn colors(&self) -> &ArrayD<f64> {
        &self.colors
    }
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Number of distinct transform slots: `I` when shared, else `S * I`.
    pub fn slot_count(&self, scenes: usize) -> usize {
        if self.spec.shared {
            self.spec.instances_per_scene
        } else {
            scenes * self.spec.instances_per_scene
        }
    }

    /// Transform slot of instance `i` in scene `s` (`g = s * I + i` unshared).
    #[inline]
    pub fn slot(&self, scene: usize, instance: usize) -> usize {
        if self.spec.shared {
            instance
        } else {
            scene * self.spec.instances_per_scene + instance
        }
    }

    /// Model matrix of a transform slot, straight from the tensors.
    pub fn model_matrix(&self, slot: usize) -> Mat4 {
        let p = self.positions.as_slice().expect("standard layout");
        let h = self.hprs.as_slice().expect("standard layout");
        let sc = self.scales.as_slice().expect("standard layout");
        let per_axis = *self.scales.shape().last().unwrap();
        let scale = if per_axis == 3 {
            Vec3::from_slice(&sc[slot * 3..slot * 3 + 3])
        } else {
            let k = sc[slot];
            Vec3::new(k, k, k)
        };
        trs_unchecked(
            Vec3::from_slice(&p[slot * 3..slot * 3 + 3]),
            Vec3::from_slice(&h[slot * 3..slot * 3 + 3]),
            scale,
        )
    }

    pub fn color(&self, slot: usize) -> [f64; 4] {
        let c = self.colors.as_slice().expect("standard layout");
        [c[slot * 4], c[slot * 4 + 1], c[slot * 4 + 2], c[slot * 4 + 3]]
    }

    fn shape(&self, scenes: usize, last: usize) -> Vec<usize> {
        if self.spec.shared {
            vec![self.spec.instances_per_scene, last]
        } else {
            vec![scenes, self.spec.instances_per_scene, last]
        }
    }
}

/// Packed per-instance model matrices and per-scene view-projections, 16
/// column-major floats each.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBuffer {
    pub model_matrices: Vec<f64>,
    pub view_projections: Vec<f64>,
    pub scenes: usize,
    pub instances_per_scene: usize,
    pub shared: bool,
}

impl MatrixBuffer {
    pub fn model(&self, slot: usize) -> &[f64] {
        &self.model_matrices[slot * 16..slot * 16 + 16]
    }

    pub fn view_projection(&self, scene: usize) -> &[f64] {
        &self.view_projections[scene * 16..scene * 16 + 16]
    }
}

#[derive(Debug)]
pub struct BatchState {
    id: u64,
    scene_count: usize,
    width: u32,
    height: u32,
    groups: Vec<GroupState>,
    cameras: Vec<CameraPose>,
    projections: Vec<ProjectionParams>,
    camera_generation: u64,
    clear_color: [f64; 4],
}

impl Clone for BatchState {
    /// Clones receive a fresh identity so backend upload caches never confuse
    /// two diverging copies.
    fn clone(&self) -> Self {
        BatchState {
            id: next_state_id(),
            scene_count: self.scene_count,
            width: self.width,
            height: self.height,
            groups: self.groups.clone(),
            cameras: self.cameras.clone(),
            projections: self.projections.clone(),
            camera_generation: self.camera_generation,
            clear_color: self.clear_color,
        }
    }
}

fn check_color(field: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for value in values {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange {
                field: field.into(),
                value,
                min: 0.0,
                max: 1.0,
            });
        }
    }
    Ok(())
}

fn check_shape(field: String, a: &ArrayD<f64>, expected: &[usize]) -> Result<()> {
    if a.shape() != expected {
        return Err(Error::ShapeMismatch {
            field,
            expected: expected.to_vec(),
            actual: a.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_finite(field: String, a: &ArrayD<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: field })
    }
}

fn standard(a: ArrayD<f64>) -> ArrayD<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Builds a state with identity transforms, opaque white instances and every
/// camera at the identity pose with the default projection.
pub fn create_batch(spec: SceneSpec) -> Result<BatchState> {
    if spec.scene_count < 1 {
        return Err(Error::InvalidSpec("scene_count must be ≥ 1".into()));
    }
    if spec.width < 1 || spec.height < 1 {
        return Err(Error::InvalidSpec(format!(
            "frame size {}x{} must be at least 1x1",
            spec.width, spec.height
        )));
    }
    check_color("clear_color", spec.clear_color)?;
    let s = spec.scene_count;
    let mut groups = Vec::with_capacity(spec.groups.len());
    for (gid, g) in spec.groups.into_iter().enumerate() {
        if g.instances_per_scene < 1 {
            return Err(Error::InvalidSpec(format!(
                "group {gid} ({}): instances_per_scene must be ≥ 1",
                g.mesh.name()
            )));
        }
        let lead: Vec<usize> = if g.shared {
            vec![g.instances_per_scene]
        } else {
            vec![s, g.instances_per_scene]
        };
        let with = |last: usize| {
            let mut v = lead.clone();
            v.push(last);
            IxDyn(&v)
        };
        groups.push(GroupState {
            positions: ArrayD::zeros(with(3)),
            hprs: ArrayD::zeros(with(3)),
            scales: ArrayD::ones(with(1)),
            colors: ArrayD::ones(with(4)),
            spec: g,
            generation: 0,
        });
    }
    Ok(BatchState {
        id: next_state_id(),
        scene_count: s,
        width: spec.width,
        height: spec.height,
        groups,
        cameras: vec![CameraPose::default(); s],
        projections: vec![ProjectionParams::default_for(spec.width, spec.height); s],
        camera_generation: 0,
        clear_color: spec.clear_color,
    })
}

impl BatchState {
    /// Process-unique identity used by backend upload caches.
    pub fn id(&self) -> u64 {
        self.id
    }
    pub fn scene_count(&self) -> usize {
        self.scene_count
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn groups(&self) -> &[GroupState] {
        &self.groups
    }
    pub fn group(&self, id: usize) -> Result<&GroupState> {
        self.groups.get(id).ok_or(Error::UnknownGroup(id))
    }
    pub fn cameras(&self) -> &[CameraPose] {
        &self.cameras
    }
    pub fn projections(&self) -> &[ProjectionParams] {
        &self.projections
    }
    pub fn camera_generation(&self) -> u64 {
        self.camera_generation
    }
    pub fn clear_color(&self) -> [f64; 4] {
        self.clear_color
    }

    /// `Σ_g I_g`, the number of per-object draws a naive renderer issues per scene.
    pub fn instances_per_scene_total(&self) -> usize {
        self.groups.iter().map(|g| g.instances_per_scene()).sum()
    }

    /// `Σ_g S * I_g`.
    pub fn instances_total(&self) -> usize {
        self.scene_count * self.instances_per_scene_total()
    }

    /// Replaces positions and orientations (`[S, I, 3]`, or `[I, 3]` when
    /// shared) and scales (`[S, I, 1]` or `[S, I, 3]`, likewise).
    pub fn set_instance_transforms(
        &mut self,
        group: usize,
        positions: ArrayD<f64>,
        hprs: ArrayD<f64>,
        scales: ArrayD<f64>,
    ) -> Result<()> {
        let s = self.scene_count;
        let g = self.groups.get(group).ok_or(Error::UnknownGroup(group))?;
        check_shape(format!("group {group} positions"), &positions, &g.shape(s, 3))?;
        check_shape(format!("group {group} hprs"), &hprs, &g.shape(s, 3))?;
        let scale_last = match scales.shape().last() {
            Some(3) => 3,
            _ => 1,
        };
        check_shape(format!("group {group} scales"), &scales, &g.shape(s, scale_last))?;
        check_finite(format!("group {group} positions"), &positions)?;
        check_finite(format!("group {group} hprs"), &hprs)?;
        check_finite(format!("group {group} scales"), &scales)?;
        if scales.iter().any(|&k| k <= 0.0) {
            return Err(Error::NonPositiveScale {
                what: format!("group {group} scales"),
            });
        }
        let g = &mut self.groups[group];
        g.positions = standard(positions);
        g.hprs = standard(hprs);
        g.scales = standard(scales);
        g.generation += 1;
        Ok(())
    }

    /// Replaces RGBA colors (`[S, I, 4]` or `[I, 4]`). Components outside
    /// `[0, 1]` are rejected, never clamped.
    pub fn set_instance_colors(&mut self, group: usize, colors: ArrayD<f64>) -> Result<()> {
        let s = self.scene_count;
        let g = self.groups.get(group).ok_or(Error::UnknownGroup(group))?;
        check_shape(format!("group {group} colors"), &colors, &g.shape(s, 4))?;
        check_color(&format!("group {group} colors"), colors.iter().copied())?;
        let g = &mut self.groups[group];
        g.colors = standard(colors);
        g.generation += 1;
        Ok(())
    }

    pub fn set_cameras(&mut self, poses: Vec<CameraPose>, projections: Vec<ProjectionParams>) -> Result<()> {
        for (what, n) in [("camera poses", poses.len()), ("projections", projections.len())] {
            if n != self.scene_count {
                return Err(Error::CountMismatch {
                    what: what.into(),
                    expected: self.scene_count,
                    actual: n,
                });
            }
        }
        if let Some(i) = poses.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("camera pose {i}"),
            });
        }
        self.cameras = poses;
        self.projections = projections;
        self.camera_generation += 1;
        Ok(())
    }

    /// Moves only the camera poses, keeping projections.
    pub fn set_camera_poses(&mut self, poses: Vec<CameraPose>) -> Result<()> {
        let projections = self.projections.clone();
        self.set_cameras(poses, projections)
    }

    pub fn view_projection(&self, scene: usize) -> Mat4 {
        perspective_projection(&self.projections[scene]) * view_unchecked(&self.cameras[scene])
    }

    pub fn pack_model_matrices(&self, group: usize) -> Result<MatrixBuffer> {
        let g = self.group(group)?;
        let slots = g.slot_count(self.scene_count);
        let mut model_matrices = Vec::with_capacity(16 * slots);
        for slot in 0..slots {
            model_matrices.extend_from_slice(&g.model_matrix(slot).0);
        }
        Ok(MatrixBuffer {
            model_matrices,
            view_projections: self.pack_view_projections(),
            scenes: self.scene_count,
            instances_per_scene: g.instances_per_scene(),
            shared: g.is_shared(),
        })
    }

    pub fn pack_view_projections(&self) -> Vec<f64> {
        (0..self.scene_count)
            .flat_map(|s| self.view_projection(s).0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::compose_trs;
    use ndarray::Array;

    fn cube_group(i: usize, shared: bool) -> GroupSpec {
        GroupSpec::new(Arc::new(MeshAsset::cube()), i).shared(shared)
    }

    fn arr(shape: &[usize], f: impl FnMut(usize) -> f64) -> ArrayD<f64> {
        let n = shape.iter().product();
        Array::from_shape_vec(IxDyn(shape), (0..n).map(f).collect()).unwrap()
    }

    #[test]
    fn create_shapes() {
        let b = create_batch(SceneSpec::new(1, 64, 64).with_group(cube_group(1, false))).unwrap();
        assert_eq!(b.groups()[0].positions().shape(), &[1, 1, 3]);
        assert!(b.groups()[0].positions().iter().all(|&v| v == 0.0));
        assert!(b.groups()[0].colors().iter().all(|&v| v == 1.0));
        assert_eq!(b.projections()[0], ProjectionParams::new(60.0, 1.0, 0.1, 1000.0).unwrap());

        let b = create_batch(SceneSpec::new(3, 64, 32).with_group(cube_group(2, true))).unwrap();
        assert_eq!(b.groups()[0].positions().shape(), &[2, 3]);
        assert_eq!(b.projections()[2].aspect(), 2.0);
    }

    #[test]
    fn zero_scenes_rejected() {
        let err = create_batch(SceneSpec::new(0, 64, 64)).unwrap_err();
        assert_eq!(err.to_string(), "scene_count must be ≥ 1");
        let err = create_batch(SceneSpec::new(1, 64, 64).with_group(cube_group(0, false))).unwrap_err();
        assert!(err.to_string().contains("group 0"), "{err}");
    }

    #[test]
    fn transform_shape_errors() {
        let mut b = create_batch(SceneSpec::new(2, 8, 8).with_group(cube_group(3, false))).unwrap();
        let err = b
            .set_instance_transforms(0, arr(&[3, 3], |_| 0.0), arr(&[2, 3, 3], |_| 0.0), arr(&[2, 3, 1], |_| 1.0))
            .unwrap_err();
        match err {
            Error::ShapeMismatch { expected, actual, .. } => {
                assert_eq!(expected, vec![2, 3, 3]);
                assert_eq!(actual, vec![3, 3]);
            }
            e => panic!("{e}"),
        }
        let err = b
            .set_instance_transforms(
                0,
                arr(&[2, 3, 3], |k| if k == 7 { f64::NAN } else { 0.0 }),
                arr(&[2, 3, 3], |_| 0.0),
                arr(&[2, 3, 1], |_| 1.0),
            )
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(b.groups()[0].generation(), 0);
        assert!(b.set_instance_transforms(5, arr(&[1], |_| 0.0), arr(&[1], |_| 0.0), arr(&[1], |_| 0.0)).is_err());
    }

    #[test]
    fn colors_rejected_not_clamped() {
        let mut b = create_batch(SceneSpec::new(2, 8, 8).with_group(cube_group(2, true))).unwrap();
        let err = b.set_instance_colors(0, arr(&[2, 4], |k| if k == 1 { 1.5 } else { 0.5 })).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { value, .. } if value == 1.5));
        b.set_instance_colors(0, arr(&[2, 4], |_| 0.25)).unwrap();
        assert_eq!(b.groups()[0].color(1), [0.25; 4]);
        assert!(b.set_instance_colors(0, arr(&[2, 2, 4], |_| 0.25)).is_err());
    }

    #[test]
    fn camera_count_checked() {
        let mut b = create_batch(SceneSpec::new(2, 8, 8)).unwrap();
        let err = b.set_camera_poses(vec![CameraPose::default()]).unwrap_err();
        assert!(matches!(err, Error::CountMismatch { expected: 2, actual: 1, .. }));
        b.set_camera_poses(vec![CameraPose::default(); 2]).unwrap();
        assert_eq!(b.camera_generation(), 1);
    }

    #[test]
    fn pack_layout() {
        let b = create_batch(SceneSpec::new(1, 8, 8).with_group(cube_group(1, false))).unwrap();
        assert_eq!(b.pack_model_matrices(0).unwrap().model_matrices, Mat4::IDENTITY.0.to_vec());

        let b = create_batch(SceneSpec::new(3, 8, 8).with_group(cube_group(2, true))).unwrap();
        let buf = b.pack_model_matrices(0).unwrap();
        assert_eq!(buf.model_matrices.len(), 32);
        assert_eq!(buf.view_projections.len(), 48);

        let mut b = create_batch(SceneSpec::new(3, 8, 8).with_group(cube_group(2, false))).unwrap();
        let pos = arr(&[3, 2, 3], |k| k as f64);
        let hpr = arr(&[3, 2, 3], |k| 10.0 * k as f64);
        let scl = arr(&[3, 2, 1], |k| 1.0 + k as f64);
        b.set_instance_transforms(0, pos.clone(), hpr.clone(), scl.clone()).unwrap();
        let buf = b.pack_model_matrices(0).unwrap();
        assert_eq!(buf.model_matrices.len(), 96);
        let (s, i) = (1, 0);
        let expected = compose_trs(
            Vec3::new(pos[[s, i, 0]], pos[[s, i, 1]], pos[[s, i, 2]]),
            Vec3::new(hpr[[s, i, 0]], hpr[[s, i, 1]], hpr[[s, i, 2]]),
            scl[[s, i, 0]],
        )
        .unwrap();
        assert_eq!(&buf.model_matrices[32..48], &expected.0);
        assert_eq!(buf.model(2), &expected.0);
    }

    #[test]
    fn per_axis_scales() {
        let mut b = create_batch(SceneSpec::new(1, 8, 8).with_group(cube_group(1, false))).unwrap();
        b.set_instance_transforms(0, arr(&[1, 1, 3], |_| 0.0), arr(&[1, 1, 3], |_| 0.0), arr(&[1, 1, 3], |k| k as f64 + 1.0))
            .unwrap();
        let m = b.groups()[0].model_matrix(0);
        assert_eq!((m.at(0, 0), m.at(1, 1), m.at(2, 2)), (1.0, 2.0, 3.0));
        let err = b
            .set_instance_transforms(0, arr(&[1, 1, 3], |_| 0.0), arr(&[1, 1, 3], |_| 0.0), arr(&[1, 1, 2], |_| 1.0))
            .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn clone_gets_new_identity() {
        let b = create_batch(SceneSpec::new(1, 8, 8)).unwrap();
        assert_ne!(b.id(), b.clone().id());
    }
}
