//! Seeded random scenes for tests and benchmarks.

use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::math::{CameraPose, Vec3};
use crate::mesh::MeshAsset;
use crate::state::{create_batch, BatchState, GroupSpec, SceneSpec};

/// Scene counts and instance counts the randomized suites cycle through.
pub const SCENE_COUNTS: [usize; 4] = [1, 2, 5, 16];
pub const INSTANCE_COUNTS: [usize; 3] = [1, 8, 32];

/// `(seed, scenes, instances)` for the `k`-th randomized batch.
pub fn batch_params(k: usize) -> (u64, usize, usize) {
    let s = SCENE_COUNTS[k % SCENE_COUNTS.len()];
    let i = INSTANCE_COUNTS[(k / SCENE_COUNTS.len()) % INSTANCE_COUNTS.len()];
    (1000 + k as u64, s, i)
}

fn meshes() -> [Arc<MeshAsset>; 4] {
    [
        Arc::new(MeshAsset::cube()),
        Arc::new(MeshAsset::uv_sphere(12, 8).expect("valid")),
        Arc::new(MeshAsset::cylinder(12).expect("valid")),
        Arc::new(MeshAsset::plane()),
    ]
}

fn random_array(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> ArrayD<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape")
}

/// A batch with one group per primitive mesh, `instances` instances each,
/// random transforms, colors, culling and cameras. One group is shared.
pub fn random_batch(seed: u64, scenes: usize, instances: usize, width: u32, height: u32) -> Result<BatchState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared_group = rng.random_range(0..4);
    let mut spec = SceneSpec::new(scenes, width, height).with_clear_color([
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..1.0),
        1.0,
    ]);
    for (g, mesh) in meshes().into_iter().enumerate() {
        spec = spec.with_group(
            GroupSpec::new(mesh, instances)
                .shared(g == shared_group)
                .cull_back_faces(rng.random_bool(0.5)),
        );
    }
    let mut batch = create_batch(spec)?;
    for g in 0..4 {
        let lead: Vec<usize> = if g == shared_group {
            vec![instances]
        } else {
            vec![scenes, instances]
        };
        let with = |k: usize| lead.iter().copied().chain([k]).collect::<Vec<_>>();
        let positions = random_array(&mut rng, &with(3), -2.5, 2.5);
        let hprs = random_array(&mut rng, &with(3), -180.0, 180.0);
        let scales = random_array(&mut rng, &with(3), 0.2, 1.2);
        batch.set_instance_transforms(g, positions, hprs, scales)?;
        let mut colors = random_array(&mut rng, &with(4), 0.0, 1.0);
        colors.iter_mut().skip(3).step_by(4).for_each(|a| *a = 1.0);
        batch.set_instance_colors(g, colors)?;
    }
    let poses = (0..scenes)
        .map(|_| CameraPose {
            position: Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-9.0..-6.0),
                rng.random_range(-1.0..1.0),
            ),
            hpr: Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-20.0..20.0)),
        })
        .collect();
    batch.set_camera_poses(poses)?;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_cover_grid() {
        let mut seen: Vec<(usize, usize)> = (0..12).map(|k| (batch_params(k).1, batch_params(k).2)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn deterministic() {
        let a = random_batch(7, 2, 3, 16, 16).unwrap();
        let b = random_batch(7, 2, 3, 16, 16).unwrap();
        assert_eq!(a.pack_view_projections(), b.pack_view_projections());
        for g in 0..4 {
            assert_eq!(a.pack_model_matrices(g).unwrap(), b.pack_model_matrices(g).unwrap());
        }
    }
}
