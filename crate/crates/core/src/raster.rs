//! Triangle pipeline of the reference renderer: homogeneous clipping against
//! the full frustum, viewport transform, 8-bit subpixel snapping, top-left
//! fill rule at pixel centers, strict less-than depth, flat shading.
//!
//! All arithmetic happens in tile-local pixel space. Callers place the tile
//! inside a larger buffer with an integer origin, so a scene rasterized into
//! an atlas produces exactly the bytes it produces in a standalone target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Mat4, Vec3, Vec4};
use crate::mesh::MeshAsset;

const SUBPIXEL_BITS: u32 = 8;
const SUBPIXEL: f64 = (1 << SUBPIXEL_BITS) as f64;
const HALF_PIXEL: i64 = 1 << (SUBPIXEL_BITS - 1);
const PIXEL: i64 = 1 << SUBPIXEL_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadingMode {
    Unlit,
    Lambert,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShading")]
pub struct ShadingConfig {
    mode: ShadingMode,
    light_dir: Vec3,
    ambient: f64,
    diffuse: f64,
}

#[derive(Deserialize)]
struct RawShading {
    mode: ShadingMode,
    light_dir: Vec3,
    ambient: f64,
    diffuse: f64,
}

impl TryFrom<RawShading> for ShadingConfig {
    type Error = Error;
    fn try_from(r: RawShading) -> Result<Self> {
        ShadingConfig::new(r.mode, r.light_dir, r.ambient, r.diffuse)
    }
}

impl Default for ShadingConfig {
    fn default() -> Self {
        ShadingConfig {
            mode: ShadingMode::Lambert,
            light_dir: Vec3::new(-0.5774, -0.5774, -0.5774),
            ambient: 0.2,
            diffuse: 0.8,
        }
    }
}

impl ShadingConfig {
    pub fn new(mode: ShadingMode, light_dir: Vec3, ambient: f64, diffuse: f64) -> Result<Self> {
        if !light_dir.is_finite() || (light_dir.length() - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidSpec("shading light_dir must be a unit vector".into()));
        }
        if !(ambient >= 0.0 && diffuse >= 0.0 && ambient + diffuse <= 1.0) {
            return Err(Error::InvalidSpec(
                "shading needs ambient, diffuse >= 0 and ambient + diffuse <= 1".into(),
            ));
        }
        Ok(ShadingConfig {
            mode,
            light_dir,
            ambient,
            diffuse,
        })
    }

    pub fn unlit() -> Self {
        ShadingConfig {
            mode: ShadingMode::Unlit,
            ..Default::default()
        }
    }

    pub fn mode(&self) -> ShadingMode {
        self.mode
    }
    pub fn light_dir(&self) -> Vec3 {
        self.light_dir
    }
    pub fn ambient(&self) -> f64 {
        self.ambient
    }
    pub fn diffuse(&self) -> f64 {
        self.diffuse
    }

    /// Light intensity for a world-space unit normal.
    pub fn intensity(&self, normal: Vec3) -> f64 {
        match self.mode {
            ShadingMode::Unlit => 1.0,
            ShadingMode::Lambert => self.ambient + self.diffuse * normal.dot(self.light_dir).max(0.0),
        }
    }
}

/// `round_half_away_from_zero(255 * clamp(v, 0, 1))`.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

pub fn quantize_rgba(rgba: [f64; 4]) -> [u8; 4] {
    rgba.map(quantize)
}

pub(crate) fn shade(color: [f64; 4], world_normal: Vec3, shading: &ShadingConfig) -> [u8; 4] {
    let k = shading.intensity(world_normal);
    [
        quantize(color[0] * k),
        quantize(color[1] * k),
        quantize(color[2] * k),
        quantize(color[3]),
    ]
}

/// Tile-local pixel box, `x0..x1` by `y0..y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PixelBounds {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelBounds {
    pub const EMPTY: PixelBounds = PixelBounds {
        x0: u32::MAX,
        y0: u32::MAX,
        x1: 0,
        y1: 0,
    };

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    fn include(&mut self, x_lo: i64, x_hi: i64, y_lo: i64, y_hi: i64) {
        self.x0 = self.x0.min(x_lo as u32);
        self.y0 = self.y0.min(y_lo as u32);
        self.x1 = self.x1.max(x_hi as u32 + 1);
        self.y1 = self.y1.max(y_hi as u32 + 1);
    }
}

/// A tile-sized window into a color + depth buffer pair.
pub(crate) struct TargetView<'a> {
    pub color: &'a mut [u8],
    pub depth: &'a mut [f32],
    /// Pixels per row of the underlying buffers.
    pub stride: usize,
    pub origin_x: usize,
    pub origin_y: usize,
    pub width: u32,
    pub height: u32,
    /// Grows to cover every pixel a draw may have written.
    pub touched: PixelBounds,
}

/// One object instance to draw.
pub(crate) struct Draw<'m> {
    pub mesh: &'m MeshAsset,
    /// `P * V * M`.
    pub mvp: Mat4,
    /// Cofactor of the model matrix's upper 3x3.
    pub normal_matrix: Mat3,
    pub color: [f64; 4],
    pub cull_back_faces: bool,
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    x: i64,
    y: i64,
    z: f64,
}

/// Reusable per-draw vertex storage.
#[derive(Default)]
pub(crate) struct Scratch {
    clip: Vec<Vec4>,
}

pub(crate) fn draw(target: &mut TargetView<'_>, d: &Draw<'_>, shading: &ShadingConfig, scratch: &mut Scratch) {
    scratch.clip.clear();
    scratch
        .clip
        .extend(d.mesh.vertices().iter().map(|v| d.mvp.transform(Vec4::point(v.position))));
    let clip = &scratch.clip;
    for (t, &[a, b, c]) in d.mesh.triangles().iter().enumerate() {
        let tri = [clip[a as usize], clip[b as usize], clip[c as usize]];
        let mut rgba = None;
        let mut shade_once = || {
            *rgba.get_or_insert_with(|| {
                let n = d.normal_matrix.mul_vec(d.mesh.face_normals()[t]).normalized();
                shade(d.color, n, shading)
            })
        };
        clip_and_raster(target, tri, d.cull_back_faces, &mut shade_once);
    }
}

/// Signed distances to the six frustum planes; inside when all >= 0.
#[inline]
fn plane_distance(v: &Vec4, plane: usize) -> f64 {
    match plane {
        0 => v.w + v.x,
        1 => v.w - v.x,
        2 => v.w + v.y,
        3 => v.w - v.y,
        4 => v.w + v.z,
        _ => v.w - v.z,
    }
}

fn outcode(v: &Vec4) -> u8 {
    let mut code = 0;
    for p in 0..6 {
        if plane_distance(v, p) < 0.0 {
            code |= 1 << p;
        }
    }
    code
}

const MAX_POLY: usize = 9;

fn clip_and_raster(target: &mut TargetView<'_>, tri: [Vec4; 3], cull: bool, color: &mut impl FnMut() -> [u8; 4]) {
    let codes = tri.map(|v| outcode(&v));
    if codes[0] & codes[1] & codes[2] != 0 {
        return;
    }
    if codes[0] | codes[1] | codes[2] == 0 {
        raster_polygon(target, &tri, cull, color);
        return;
    }
    // Sutherland-Hodgman in homogeneous clip space.
    let mut poly = [Vec4::default(); MAX_POLY];
    let mut next = [Vec4::default(); MAX_POLY];
    poly[..3].copy_from_slice(&tri);
    let mut n = 3;
    let mask = codes[0] | codes[1] | codes[2];
    for plane in 0..6 {
        if mask & (1 << plane) == 0 {
            continue;
        }
        let mut m = 0;
        for k in 0..n {
            let cur = poly[k];
            let nxt = poly[(k + 1) % n];
            let dc = plane_distance(&cur, plane);
            let dn = plane_distance(&nxt, plane);
            if dc >= 0.0 {
                next[m] = cur;
                m += 1;
            }
            if (dc >= 0.0) != (dn >= 0.0) {
                next[m] = cur.lerp(nxt, dc / (dc - dn));
                m += 1;
            }
        }
        n = m;
        if n < 3 {
            return;
        }
        std::mem::swap(&mut poly, &mut next);
    }
    raster_polygon(target, &poly[..n], cull, color);
}

fn to_screen(v: &Vec4, width: u32, height: u32) -> ScreenVertex {
    let inv_w = 1.0 / v.w;
    let (xn, yn, zn) = (v.x * inv_w, v.y * inv_w, v.z * inv_w);
    let xp = (xn + 1.0) * 0.5 * width as f64;
    let yp = (1.0 - yn) * 0.5 * height as f64;
    ScreenVertex {
        x: (xp * SUBPIXEL).round() as i64,
        y: (yp * SUBPIXEL).round() as i64,
        z: (zn + 1.0) * 0.5,
    }
}

fn raster_polygon(target: &mut TargetView<'_>, poly: &[Vec4], cull: bool, color: &mut impl FnMut() -> [u8; 4]) {
    let mut screen = [ScreenVertex { x: 0, y: 0, z: 0.0 }; MAX_POLY];
    for (s, v) in screen.iter_mut().zip(poly) {
        *s = to_screen(v, target.width, target.height);
    }
    for k in 1..poly.len() - 1 {
        raster_triangle(target, [screen[0], screen[k], screen[k + 1]], cull, color);
    }
}

#[inline]
fn edge(a: ScreenVertex, b: ScreenVertex, px: i64, py: i64) -> i64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// With positive area in y-down pixel space, top edges run in +x at constant
/// y and left edges run in -y.
#[inline]
fn is_top_left(a: ScreenVertex, b: ScreenVertex) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dy == 0 && dx > 0) || dy < 0
}

fn raster_triangle(
    target: &mut TargetView<'_>,
    v: [ScreenVertex; 3],
    cull: bool,
    color: &mut impl FnMut() -> [u8; 4],
) {
    let [v0, mut v1, mut v2] = v;
    let mut area = edge(v0, v1, v2.x, v2.y);
    if area == 0 {
        return;
    }
    // Faces that read counter-clockwise on screen have negative area here.
    if area > 0 {
        if cull {
            return;
        }
    } else {
        std::mem::swap(&mut v1, &mut v2);
        area = -area;
    }

    let (w, h) = (target.width as i64, target.height as i64);
    let min_x = v0.x.min(v1.x).min(v2.x);
    let max_x = v0.x.max(v1.x).max(v2.x);
    let min_y = v0.y.min(v1.y).min(v2.y);
    let max_y = v0.y.max(v1.y).max(v2.y);
    // Pixel i has its center at i * PIXEL + HALF_PIXEL.
    let x_lo = ((min_x - HALF_PIXEL) as f64 / PIXEL as f64).ceil().max(0.0) as i64;
    let x_hi = (((max_x - HALF_PIXEL) as f64 / PIXEL as f64).floor() as i64).min(w - 1);
    let y_lo = ((min_y - HALF_PIXEL) as f64 / PIXEL as f64).ceil().max(0.0) as i64;
    let y_hi = (((max_y - HALF_PIXEL) as f64 / PIXEL as f64).floor() as i64).min(h - 1);
    if x_lo > x_hi || y_lo > y_hi {
        return;
    }
    target.touched.include(x_lo, x_hi, y_lo, y_hi);

    let edges = [(v1, v2), (v2, v0), (v0, v1)];
    let bias = edges.map(|(a, b)| if is_top_left(a, b) { 0 } else { -1 });
    let step_x = edges.map(|(a, b)| -(b.y - a.y) * PIXEL);
    let step_y = edges.map(|(a, b)| (b.x - a.x) * PIXEL);
    let inv_area = 1.0 / area as f64;
    let px0 = x_lo * PIXEL + HALF_PIXEL;
    let py0 = y_lo * PIXEL + HALF_PIXEL;
    let mut row = [0i64; 3];
    for k in 0..3 {
        row[k] = edge(edges[k].0, edges[k].1, px0, py0) + bias[k];
    }

    let mut rgba: Option<[u8; 4]> = None;
    for y in y_lo..=y_hi {
        let mut e = row;
        let line = (target.origin_y + y as usize) * target.stride + target.origin_x;
        for x in x_lo..=x_hi {
            if (e[0] | e[1] | e[2]) >= 0 {
                // Undo the bias before interpolating.
                let b0 = (e[0] - bias[0]) as f64 * inv_area;
                let b1 = (e[1] - bias[1]) as f64 * inv_area;
                let b2 = (e[2] - bias[2]) as f64 * inv_area;
                let z = (b0 * v0.z + b1 * v1.z + b2 * v2.z) as f32;
                let idx = line + x as usize;
                if z < target.depth[idx] {
                    target.depth[idx] = z;
                    let c = *rgba.get_or_insert_with(&mut *color);
                    target.color[idx * 4..idx * 4 + 4].copy_from_slice(&c);
                }
            }
            for k in 0..3 {
                e[k] += step_x[k];
            }
        }
        for k in 0..3 {
            row[k] += step_y[k];
        }
    }
}
