use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{default_camera, uniform, SceneDynamics};
use crate::error::{Error, Result};
use crate::mesh::MeshAsset;
use crate::state::{create_batch, BatchState, GroupSpec, SceneSpec};

/// Classic cart-pole constants. `length` is the pole half-length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub dt: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    pub length: f64,
    pub gravity: f64,
    pub force_mag: f64,
    pub theta_threshold: f64,
    pub x_threshold: f64,
    /// Reset draws the pole angle uniformly from `[-reset_theta, reset_theta]`.
    pub reset_theta: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            dt: 0.02,
            mass_cart: 1.0,
            mass_pole: 0.1,
            length: 0.5,
            gravity: 9.8,
            force_mag: 10.0,
            theta_threshold: 0.2095,
            x_threshold: 2.4,
            reset_theta: 0.05,
        }
    }
}

pub const GROUP_GROUND: usize = 0;
pub const GROUP_CART: usize = 1;
pub const GROUP_POLE: usize = 2;

const CART_SIZE: [f64; 3] = [0.4, 0.2, 0.2];
const POLE_LENGTH: f64 = 1.0;
const POLE_WIDTH: f64 = 0.05;
const SKY: [f64; 4] = [0.55, 0.75, 0.95, 1.0];
const GROUND: [f64; 4] = [0.35, 0.35, 0.35, 1.0];
const CART: [f64; 4] = [0.2, 0.4, 0.9, 1.0];
const POLE: [f64; 4] = [0.9, 0.6, 0.2, 1.0];

/// State per scene: `[x, x_dot, theta, theta_dot]`, explicit Euler.
#[derive(Debug, Clone, Copy)]
pub struct CartPole {
    params: CartPoleParams,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Result<Self> {
        let p = params;
        let positive = [
            ("dt", p.dt),
            ("mass_cart", p.mass_cart),
            ("mass_pole", p.mass_pole),
            ("length", p.length),
            ("theta_threshold", p.theta_threshold),
            ("x_threshold", p.x_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("dynamics.{name} must be finite and > 0")));
            }
        }
        for (name, v) in [("gravity", p.gravity), ("force_mag", p.force_mag), ("reset_theta", p.reset_theta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("dynamics.{name} must be finite and >= 0")));
            }
        }
        Ok(CartPole { params })
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }
}

fn wrap_angle(theta: f64) -> f64 {
    if (-PI..=PI).contains(&theta) {
        theta
    } else {
        (theta + PI).rem_euclid(2.0 * PI) - PI
    }
}

pub(super) fn scene_spec(scenes: usize, width: u32, height: u32) -> SceneSpec {
    SceneSpec::new(scenes, width, height)
        .with_clear_color(SKY)
        .with_group(GroupSpec::new(Arc::new(MeshAsset::plane()), 1).shared(true))
        .with_group(GroupSpec::new(Arc::new(MeshAsset::cube()), 1))
        .with_group(GroupSpec::new(Arc::new(MeshAsset::cylinder(12).expect("valid segments")), 1))
}

fn filled(shape: &[usize], row: &[f64]) -> ArrayD<f64> {
    let n: usize = shape[..shape.len() - 1].iter().product();
    ArrayD::from_shape_vec(IxDyn(shape), row.repeat(n)).expect("shape matches")
}

impl SceneDynamics for CartPole {
    fn state_dim(&self) -> usize {
        4
    }

    fn build_scene(&self, scenes: usize, width: u32, height: u32) -> Result<BatchState> {
        let mut b = create_batch(scene_spec(scenes, width, height))?;
        b.set_instance_transforms(
            GROUP_GROUND,
            filled(&[1, 3], &[0.0, 2.0, 0.0]),
            filled(&[1, 3], &[0.0; 3]),
            filled(&[1, 3], &[8.0, 8.0, 1.0]),
        )?;
        b.set_instance_colors(GROUP_GROUND, filled(&[1, 4], &GROUND))?;
        b.set_instance_colors(GROUP_CART, filled(&[scenes, 1, 4], &CART))?;
        b.set_instance_colors(GROUP_POLE, filled(&[scenes, 1, 4], &POLE))?;
        b.set_camera_poses(vec![default_camera(); scenes])?;
        Ok(b)
    }

    fn reset_scene(&self, rng: &mut dyn RngCore, state: &mut [f64]) {
        let r = self.params.reset_theta;
        state.copy_from_slice(&[0.0, 0.0, uniform(rng, -r, r), 0.0]);
    }

    fn step_scene(&self, state: &mut [f64], action: f64) -> (f64, bool) {
        let p = &self.params;
        let [x, x_dot, theta, theta_dot]: [f64; 4] = state[..4].try_into().unwrap();
        let force = p.force_mag * action;
        let (sin, cos) = theta.sin_cos();
        let total_mass = p.mass_cart + p.mass_pole;
        let pole_ml = p.mass_pole * p.length;
        let temp = (force + pole_ml * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc =
            (p.gravity * sin - cos * temp) / (p.length * (4.0 / 3.0 - p.mass_pole * cos * cos / total_mass));
        let x_acc = temp - pole_ml * theta_acc * cos / total_mass;

        let x = x + p.dt * x_dot;
        let x_dot = x_dot + p.dt * x_acc;
        let theta = wrap_angle(theta + p.dt * theta_dot);
        let theta_dot = theta_dot + p.dt * theta_acc;
        state[..4].copy_from_slice(&[x, x_dot, theta, theta_dot]);

        let upright = theta.abs() < p.theta_threshold;
        let done = !upright || x.abs() > p.x_threshold;
        (if upright { 1.0 } else { 0.0 }, done)
    }

    fn write_transforms(&self, states: &[f64], batch: &mut BatchState) -> Result<()> {
        let s = batch.scene_count();
        let mut cart_pos = Vec::with_capacity(s * 3);
        let mut pole_pos = Vec::with_capacity(s * 3);
        let mut pole_hpr = Vec::with_capacity(s * 3);
        for st in states.chunks_exact(4) {
            let (x, theta) = (st[0], st[2]);
            let hinge_z = CART_SIZE[2];
            cart_pos.extend_from_slice(&[x, 0.0, hinge_z * 0.5]);
            let half = POLE_LENGTH * 0.5;
            pole_pos.extend_from_slice(&[x + half * theta.sin(), 0.0, hinge_z + half * theta.cos()]);
            // Roll about +Y tips the pole's +Z axis toward +X.
            pole_hpr.extend_from_slice(&[0.0, 0.0, theta.to_degrees()]);
        }
        let shape = IxDyn(&[s, 1, 3]);
        batch.set_instance_transforms(
            GROUP_CART,
            ArrayD::from_shape_vec(shape.clone(), cart_pos).expect("shape"),
            ArrayD::zeros(shape.clone()),
            filled(&[s, 1, 3], &CART_SIZE),
        )?;
        batch.set_instance_transforms(
            GROUP_POLE,
            ArrayD::from_shape_vec(shape.clone(), pole_pos).expect("shape"),
            ArrayD::from_shape_vec(shape, pole_hpr).expect("shape"),
            filled(&[s, 1, 3], &[POLE_WIDTH, POLE_WIDTH, POLE_LENGTH]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    /// Fine-step RK4 integration of the same continuous dynamics.
    fn rk4_reference(p: &CartPoleParams, action: f64, steps: usize) -> Vec<f64> {
        let deriv = |s: [f64; 4]| {
            let [_, xd, th, thd] = s;
            let f = p.force_mag * action;
            let tm = p.mass_cart + p.mass_pole;
            let temp = (f + p.mass_pole * p.length * thd * thd * th.sin()) / tm;
            let tha = (p.gravity * th.sin() - th.cos() * temp)
                / (p.length * (4.0 / 3.0 - p.mass_pole * th.cos().powi(2) / tm));
            let xa = temp - p.mass_pole * p.length * tha * th.cos() / tm;
            [xd, xa, thd, tha]
        };
        let sub = 100;
        let h = p.dt / sub as f64;
        let mut s = [0.0; 4];
        let mut thetas = Vec::new();
        for _ in 0..steps {
            for _ in 0..sub {
                let add = |a: [f64; 4], b: [f64; 4], k: f64| [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]];
                let k1 = deriv(s);
                let k2 = deriv(add(s, k1, h / 2.0));
                let k3 = deriv(add(s, k2, h / 2.0));
                let k4 = deriv(add(s, k3, h));
                for i in 0..4 {
                    s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            thetas.push(s[2]);
        }
        thetas
    }

    #[test]
    fn constant_push_tips_pole_monotonically() {
        let cp = CartPole::new(CartPoleParams::default()).unwrap();
        let mut st = [0.0; 4];
        let mut thetas = Vec::new();
        for _ in 0..20 {
            cp.step_scene(&mut st, 1.0);
            thetas.push(st[2]);
        }
        let reference = rk4_reference(cp.params(), 1.0, 20);
        // Pushing the cart right swings the pole left, ever faster.
        for k in 1..20 {
            assert!(thetas[k].abs() >= thetas[k - 1].abs(), "step {k}: {thetas:?}");
            assert!(thetas[k] <= 0.0);
        }
        assert!(thetas[19].abs() > 0.1);
        // Explicit Euler advances the angle with the previous rate, so each
        // step lands between the continuous solution one step behind and now.
        for k in 1..20 {
            let (lo, hi) = (reference[k - 1].abs(), reference[k].abs());
            assert!(lo <= thetas[k].abs() && thetas[k].abs() <= hi, "step {k}: {} not in [{lo}, {hi}]", thetas[k]);
        }
    }

    #[test]
    fn reset_range() {
        use rand::SeedableRng;
        let cp = CartPole::new(CartPoleParams::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut st = [9.0; 4];
        for _ in 0..200 {
            cp.reset_scene(&mut rng, &mut st);
            assert!(st[2].abs() <= 0.05);
            assert_eq!([st[0], st[1], st[3]], [0.0; 3]);
        }
    }

    #[test]
    fn cart_bound_ends_episode() {
        let cp = CartPole::new(CartPoleParams::default()).unwrap();
        let mut st = [2.5, 0.0, 0.0, 0.0];
        let (r, done) = cp.step_scene(&mut st, 0.0);
        assert!(done);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn angle_wraps() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.5), 0.5);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = CartPoleParams {
            dt: 0.0,
            ..Default::default()
        };
        assert!(CartPole::new(p).is_err());
    }

    #[test]
    fn pole_hangs_from_hinge() {
        let cp = CartPole::new(CartPoleParams::default()).unwrap();
        let mut b = cp.build_scene(1, 64, 64).unwrap();
        let theta = 0.3f64;
        cp.write_transforms(&[0.5, 0.0, theta, 0.0], &mut b).unwrap();
        let m = b.groups()[GROUP_POLE].model_matrix(0);
        let bottom = m.transform_point(Vec3::new(0.0, 0.0, -0.5));
        let top = m.transform_point(Vec3::new(0.0, 0.0, 0.5));
        assert!((bottom - Vec3::new(0.5, 0.0, 0.2)).length() < 1e-12);
        assert!((top - Vec3::new(0.5 + theta.sin(), 0.0, 0.2 + theta.cos())).length() < 1e-12);
    }
}
