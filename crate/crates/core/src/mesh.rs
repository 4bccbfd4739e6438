//! Immutable triangle meshes: built-in primitives and a small OBJ reader.
//!
//! Every primitive is wound counter-clockwise when viewed from outside and
//! fits in the unit cube centered on the origin.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub position: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshAsset {
    name: String,
    vertices: Vec<Vertex>,
    triangles: Vec<[u32; 3]>,
    /// Object-space geometric normal per triangle, used for flat shading.
    face_normals: Vec<Vec3>,
}

impl MeshAsset {
    pub fn new(name: impl Into<String>, vertices: Vec<Vertex>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let name = name.into();
        let fail = |reason: String| Error::Mesh {
            name: name.clone(),
            reason,
        };
        if triangles.is_empty() {
            return Err(fail("needs at least one triangle".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.position.is_finite() || !v.normal.is_finite() {
                return Err(fail(format!("vertex {i} is not finite")));
            }
            if (v.normal.length() - 1.0).abs() > 1e-3 {
                return Err(fail(format!("vertex {i} normal is not unit length")));
            }
        }
        let n = vertices.len() as u32;
        if let Some((t, _)) = triangles
            .iter()
            .enumerate()
            .find(|(_, tri)| tri.iter().any(|&ix| ix >= n))
        {
            return Err(fail(format!("triangle {t} indexes past {n} vertices")));
        }
        let face_normals = triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (
                    vertices[a as usize].position,
                    vertices[b as usize].position,
                    vertices[c as usize].position,
                );
                (b - a).cross(c - a).normalized()
            })
            .collect();
        Ok(MeshAsset {
            name,
            vertices,
            triangles,
            face_normals,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn face_normals(&self) -> &[Vec3] {
        &self.face_normals
    }

    /// Axis-aligned cube with side 1.
    pub fn cube() -> Self {
        let x = Vec3::new(1.0, 0.0, 0.0);
        let y = Vec3::new(0.0, 1.0, 0.0);
        let z = Vec3::new(0.0, 0.0, 1.0);
        // (normal, u, v) with u x v = normal.
        let faces = [(x, y, z), (-x, z, y), (y, z, x), (-y, x, z), (z, x, y), (-z, y, x)];
        let mut vertices = Vec::with_capacity(24);
        let mut triangles = Vec::with_capacity(12);
        for (n, u, v) in faces {
            let base = vertices.len() as u32;
            let c = n * 0.5;
            for (su, sv) in [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)] {
                vertices.push(Vertex {
                    position: c + u * su + v * sv,
                    normal: n,
                });
            }
            triangles.push([base, base + 1, base + 2]);
            triangles.push([base, base + 2, base + 3]);
        }
        MeshAsset::new("cube", vertices, triangles).expect("cube is valid")
    }

    /// Sphere of radius 0.5. `segments` around Z (>= 3), `rings` pole to pole (>= 2).
    pub fn uv_sphere(segments: u32, rings: u32) -> Result<Self> {
        if segments < 3 || rings < 2 {
            return Err(Error::Mesh {
                name: "uv_sphere".into(),
                reason: format!("needs segments >= 3 and rings >= 2, got {segments}x{rings}"),
            });
        }
        let mut vertices = Vec::new();
        for i in 0..=rings {
            let theta = PI * i as f64 / rings as f64;
            for j in 0..=segments {
                let phi = TAU * j as f64 / segments as f64;
                let n = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                vertices.push(Vertex {
                    position: n * 0.5,
                    normal: n,
                });
            }
        }
        let stride = segments + 1;
        let mut triangles = Vec::new();
        for i in 0..rings {
            for j in 0..segments {
                let p00 = i * stride + j;
                let p01 = p00 + 1;
                let p10 = p00 + stride;
                let p11 = p10 + 1;
                if i + 1 != rings {
                    triangles.push([p00, p10, p11]);
                }
                if i != 0 {
                    triangles.push([p00, p11, p01]);
                }
            }
        }
        MeshAsset::new("uv_sphere", vertices, triangles)
    }

    /// Capped cylinder of radius 0.5 and height 1 along Z.
    pub fn cylinder(segments: u32) -> Result<Self> {
        if segments < 3 {
            return Err(Error::Mesh {
                name: "cylinder".into(),
                reason: format!("needs segments >= 3, got {segments}"),
            });
        }
        let ring = |j: u32| {
            let phi = TAU * (j % segments) as f64 / segments as f64;
            Vec3::new(phi.cos(), phi.sin(), 0.0)
        };
        let up = Vec3::new(0.0, 0.0, 1.0);
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for j in 0..segments {
            let base = vertices.len() as u32;
            for k in [j, j + 1] {
                let r = ring(k);
                vertices.push(Vertex {
                    position: r * 0.5 - up * 0.5,
                    normal: r,
                });
                vertices.push(Vertex {
                    position: r * 0.5 + up * 0.5,
                    normal: r,
                });
            }
            // b0 t0 b1 t1
            let (b0, t0, b1, t1) = (base, base + 1, base + 2, base + 3);
            triangles.push([b0, b1, t1]);
            triangles.push([b0, t1, t0]);
        }
        for (sign, normal) in [(1.0, up), (-1.0, -up)] {
            let center = vertices.len() as u32;
            vertices.push(Vertex {
                position: up * (0.5 * sign),
                normal,
            });
            for j in 0..segments {
                vertices.push(Vertex {
                    position: ring(j) * 0.5 + up * (0.5 * sign),
                    normal,
                });
            }
            for j in 0..segments {
                let a = center + 1 + j;
                let b = center + 1 + (j + 1) % segments;
                if sign > 0.0 {
                    triangles.push([center, a, b]);
                } else {
                    triangles.push([center, b, a]);
                }
            }
        }
        MeshAsset::new("cylinder", vertices, triangles)
    }

    /// Unit square in the XY plane facing +Z.
    pub fn plane() -> Self {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let vertices = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
            .into_iter()
            .map(|(x, y)| Vertex {
                position: Vec3::new(x, y, 0.0),
                normal: n,
            })
            .collect();
        MeshAsset::new("plane", vertices, vec![[0, 1, 2], [0, 2, 3]]).expect("plane is valid")
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "obj".into());
        Self::parse_obj(name, &text)
    }

    /// Reads `v`, `vn` and `f` records. Polygons are fan-triangulated (they
    /// must be convex); texture coordinates, groups and materials are skipped.
    /// Faces without normals get their geometric normal.
    pub fn parse_obj(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut positions: Vec<Vec3> = Vec::new();
        let mut normals: Vec<Vec3> = Vec::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut dedup: HashMap<(usize, usize), u32> = HashMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let err = |reason: String| Error::Obj { line, reason };
            let content = raw.split('#').next().unwrap_or("").trim();
            let mut parts = content.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            match tag {
                "v" | "vn" => {
                    let nums = parts
                        .take(3)
                        .map(|p| p.parse::<f64>().map_err(|_| err(format!("bad number {p:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    if nums.len() < 3 {
                        return Err(err(format!("{tag} needs 3 components")));
                    }
                    let v = Vec3::from_slice(&nums);
                    if tag == "v" {
                        positions.push(v);
                    } else {
                        let n = v.normalized();
                        if n.length() == 0.0 {
                            return Err(err("zero-length normal".into()));
                        }
                        normals.push(n);
                    }
                }
                "f" => {
                    let corners = parts
                        .map(|p| parse_corner(p, positions.len(), normals.len()).map_err(&err))
                        .collect::<Result<Vec<_>>>()?;
                    if corners.len() < 3 {
                        return Err(err("face needs at least 3 vertices".into()));
                    }
                    let ids: Vec<u32> = if corners.iter().all(|c| c.1.is_some()) {
                        corners
                            .iter()
                            .map(|&(v, n)| {
                                let n = n.unwrap();
                                *dedup.entry((v, n)).or_insert_with(|| {
                                    vertices.push(Vertex {
                                        position: positions[v],
                                        normal: normals[n],
                                    });
                                    vertices.len() as u32 - 1
                                })
                            })
                            .collect()
                    } else {
                        let p: Vec<Vec3> = corners.iter().map(|c| positions[c.0]).collect();
                        let mut n = Vec3::ZERO;
                        for k in 1..p.len() - 1 {
                            n = n + (p[k] - p[0]).cross(p[k + 1] - p[0]);
                        }
                        let n = n.normalized();
                        if n.length() == 0.0 {
                            return Err(err("degenerate face without normals".into()));
                        }
                        p.into_iter()
                            .map(|position| {
                                vertices.push(Vertex { position, normal: n });
                                vertices.len() as u32 - 1
                            })
                            .collect()
                    };
                    for k in 1..ids.len() - 1 {
                        triangles.push([ids[0], ids[k], ids[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        MeshAsset::new(name, vertices, triangles)
    }
}

/// `v`, `v/vt`, `v//vn` or `v/vt/vn`, 1-based or negative-relative.
fn parse_corner(token: &str, n_pos: usize, n_norm: usize) -> std::result::Result<(usize, Option<usize>), String> {
    let mut fields = token.split('/');
    let v = resolve_index(fields.next().unwrap_or(""), n_pos, "vertex")?;
    let _vt = fields.next();
    let vn = match fields.next() {
        Some(s) if !s.is_empty() => Some(resolve_index(s, n_norm, "normal")?),
        _ => None,
    };
    Ok((v, vn))
}

fn resolve_index(s: &str, count: usize, what: &str) -> std::result::Result<usize, String> {
    let i: i64 = s.parse().map_err(|_| format!("bad {what} index {s:?}"))?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if idx < 0 || idx as usize >= count {
        return Err(format!("{what} index {i} out of range ({count} defined)"));
    }
    Ok(idx as usize)
}

/// Named built-in mesh, as used in scene descriptions and the HTTP API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Cube,
    UvSphere { segments: u32, rings: u32 },
    Cylinder { segments: u32 },
    Plane,
}

impl Primitive {
    pub fn build(self) -> Result<MeshAsset> {
        match self {
            Primitive::Cube => Ok(MeshAsset::cube()),
            Primitive::UvSphere { segments, rings } => MeshAsset::uv_sphere(segments, rings),
            Primitive::Cylinder { segments } => MeshAsset::cylinder(segments),
            Primitive::Plane => Ok(MeshAsset::plane()),
        }
    }
}
