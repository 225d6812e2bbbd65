//! Parametric shape families used as a small synthetic classification set.
//!
//! Each shape is tessellated into a triangle mesh, sampled with
//! [`sample_surface`], and the samples on curved parts are then projected back
//! onto the exact surface so tessellation does not leak into the geometry.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mesh::{sample_surface, TriangleMesh, Vec3};
use crate::error::{Error, Result};
use crate::model::PointSet;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Sphere,
    Cube,
    Cylinder,
    Torus,
    Cone,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 5] = [
        ShapeFamily::Sphere,
        ShapeFamily::Cube,
        ShapeFamily::Cylinder,
        ShapeFamily::Torus,
        ShapeFamily::Cone,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&f| f == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Sphere => "sphere",
            ShapeFamily::Cube => "cube",
            ShapeFamily::Cylinder => "cylinder",
            ShapeFamily::Torus => "torus",
            ShapeFamily::Cone => "cone",
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown shape family '{s}'")))
    }
}

/// A shape instance.
///
/// `scale` is the characteristic size: sphere radius, cube side, cylinder and
/// cone base radius, torus major radius. `aspect` stretches the secondary
/// dimension: the sphere's and cube's z extent, the cylinder's and cone's
/// height (`2 * scale * aspect`) and the torus tube radius
/// (`0.35 * scale * aspect`). Valid ranges: `scale` in (0, 1e6],
/// `aspect` in [0.25, 2.5].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub family: ShapeFamily,
    pub scale: f64,
    pub aspect: f64,
}

#[derive(Debug, Clone, Copy)]
enum Part {
    Flat,
    Ellipsoid([f64; 3]),
    CylinderSide { radius: f64 },
    TorusTube { major: f64, minor: f64 },
    ConeSide { radius: f64, height: f64 },
}

const SEGMENTS: usize = 32;
const RINGS: usize = 16;

struct Builder {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    parts: Vec<Part>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            vertices: Vec::new(),
            faces: Vec::new(),
            parts: Vec::new(),
        }
    }

    fn vertex(&mut self, v: Vec3) -> usize {
        self.vertices.push(v);
        self.vertices.len() - 1
    }

    fn tri(&mut self, a: usize, b: usize, c: usize, part: Part) {
        self.faces.push([a, b, c]);
        self.parts.push(part);
    }

    fn quad(&mut self, a: usize, b: usize, c: usize, d: usize, part: Part) {
        self.tri(a, b, c, part);
        self.tri(a, c, d, part);
    }

    fn finish(self) -> Result<(TriangleMesh, Vec<Part>)> {
        let count = self.faces.len();
        let mesh = TriangleMesh::new(self.vertices, self.faces)?;
        if mesh.faces().len() != count {
            return Err(Error::Geometry("tessellation produced degenerate faces".into()));
        }
        Ok((mesh, self.parts))
    }
}

impl ShapeSpec {
    pub fn new(family: ShapeFamily, scale: f64, aspect: f64) -> Result<Self> {
        let spec = ShapeSpec {
            family,
            scale,
            aspect,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale <= 1e6) {
            return Err(Error::Spec(format!("scale {} outside (0, 1e6]", self.scale)));
        }
        if !(0.25..=2.5).contains(&self.aspect) {
            return Err(Error::Spec(format!("aspect {} outside [0.25, 2.5]", self.aspect)));
        }
        Ok(())
    }

    fn ring(b: &mut Builder, radius: f64, z: f64) -> Vec<usize> {
        (0..SEGMENTS)
            .map(|i| {
                let t = TAU * i as f64 / SEGMENTS as f64;
                b.vertex([radius * t.cos(), radius * t.sin(), z])
            })
            .collect()
    }

    fn build(&self) -> Result<(TriangleMesh, Vec<Part>)> {
        self.validate()?;
        let s = self.scale;
        let mut b = Builder::new();
        match self.family {
            ShapeFamily::Sphere => {
                let radii = [s, s, s * self.aspect];
                let part = Part::Ellipsoid(radii);
                let top = b.vertex([0.0, 0.0, radii[2]]);
                let rings: Vec<Vec<usize>> = (1..RINGS)
                    .map(|r| {
                        let phi = std::f64::consts::PI * r as f64 / RINGS as f64;
                        (0..SEGMENTS)
                            .map(|i| {
                                let t = TAU * i as f64 / SEGMENTS as f64;
                                b.vertex([
                                    radii[0] * phi.sin() * t.cos(),
                                    radii[1] * phi.sin() * t.sin(),
                                    radii[2] * phi.cos(),
                                ])
                            })
                            .collect()
                    })
                    .collect();
                let bottom = b.vertex([0.0, 0.0, -radii[2]]);
                for i in 0..SEGMENTS {
                    let j = (i + 1) % SEGMENTS;
                    b.tri(top, rings[0][i], rings[0][j], part);
                    for w in rings.windows(2) {
                        b.quad(w[0][i], w[1][i], w[1][j], w[0][j], part);
                    }
                    let last = &rings[rings.len() - 1];
                    b.tri(bottom, last[j], last[i], part);
                }
            }
            ShapeFamily::Cube => {
                let (hx, hz) = (s / 2.0, s * self.aspect / 2.0);
                let c: Vec<usize> = (0..8)
                    .map(|i| {
                        b.vertex([
                            if i & 1 == 0 { -hx } else { hx },
                            if i & 2 == 0 { -hx } else { hx },
                            if i & 4 == 0 { -hz } else { hz },
                        ])
                    })
                    .collect();
                for q in [
                    [0, 2, 3, 1],
                    [4, 5, 7, 6],
                    [0, 1, 5, 4],
                    [2, 6, 7, 3],
                    [0, 4, 6, 2],
                    [1, 3, 7, 5],
                ] {
                    b.quad(c[q[0]], c[q[1]], c[q[2]], c[q[3]], Part::Flat);
                }
            }
            ShapeFamily::Cylinder => {
                let h = 2.0 * s * self.aspect;
                let lo = Self::ring(&mut b, s, -h / 2.0);
                let hi = Self::ring(&mut b, s, h / 2.0);
                let lc = b.vertex([0.0, 0.0, -h / 2.0]);
                let hc = b.vertex([0.0, 0.0, h / 2.0]);
                let side = Part::CylinderSide { radius: s };
                for i in 0..SEGMENTS {
                    let j = (i + 1) % SEGMENTS;
                    b.quad(lo[i], lo[j], hi[j], hi[i], side);
                    b.tri(lc, lo[j], lo[i], Part::Flat);
                    b.tri(hc, hi[i], hi[j], Part::Flat);
                }
            }
            ShapeFamily::Torus => {
                let (major, minor) = (s, 0.35 * s * self.aspect);
                let part = Part::TorusTube { major, minor };
                let tube = RINGS;
                let idx: Vec<Vec<usize>> = (0..SEGMENTS)
                    .map(|i| {
                        let u = TAU * i as f64 / SEGMENTS as f64;
                        (0..tube)
                            .map(|k| {
                                let v = TAU * k as f64 / tube as f64;
                                let r = major + minor * v.cos();
                                b.vertex([r * u.cos(), r * u.sin(), minor * v.sin()])
                            })
                            .collect()
                    })
                    .collect();
                for i in 0..SEGMENTS {
                    let i2 = (i + 1) % SEGMENTS;
                    for k in 0..tube {
                        let k2 = (k + 1) % tube;
                        b.quad(idx[i][k], idx[i2][k], idx[i2][k2], idx[i][k2], part);
                    }
                }
            }
            ShapeFamily::Cone => {
                let h = 2.0 * s * self.aspect;
                let base = Self::ring(&mut b, s, -h / 2.0);
                let apex = b.vertex([0.0, 0.0, h / 2.0]);
                let centre = b.vertex([0.0, 0.0, -h / 2.0]);
                let side = Part::ConeSide {
                    radius: s,
                    height: h,
                };
                for i in 0..SEGMENTS {
                    let j = (i + 1) % SEGMENTS;
                    b.tri(apex, base[i], base[j], side);
                    b.tri(centre, base[j], base[i], Part::Flat);
                }
            }
        }
        b.finish()
    }

    /// The tessellated surface.
    pub fn mesh(&self) -> Result<TriangleMesh> {
        Ok(self.build()?.0)
    }
}

fn project(p: Vec3, part: Part) -> Vec3 {
    match part {
        Part::Flat => p,
        Part::Ellipsoid(r) => {
            let q = [p[0] / r[0], p[1] / r[1], p[2] / r[2]];
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
            [r[0] * q[0] / n, r[1] * q[1] / n, r[2] * q[2] / n]
        }
        Part::CylinderSide { radius } => {
            let n = p[0].hypot(p[1]);
            [radius * p[0] / n, radius * p[1] / n, p[2]]
        }
        Part::TorusTube { major, minor } => {
            let n = p[0].hypot(p[1]);
            let c = [major * p[0] / n, major * p[1] / n, 0.0];
            let d = [p[0] - c[0], p[1] - c[1], p[2]];
            let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            [
                c[0] + minor * d[0] / dn,
                c[1] + minor * d[1] / dn,
                minor * d[2] / dn,
            ]
        }
        Part::ConeSide { radius, height } => {
            let n = p[0].hypot(p[1]);
            if n == 0.0 {
                return p;
            }
            let r = radius * (height / 2.0 - p[2]) / height;
            [r * p[0] / n, r * p[1] / n, p[2]]
        }
    }
}

/// `n` surface samples of `spec`, labelled with the family index. Not
/// normalized.
pub fn make_shape(spec: &ShapeSpec, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::Parameter("cannot sample zero points".into()));
    }
    let (mesh, parts) = spec.build()?;
    let rows: Vec<Vec3> = sample_surface(&mesh, n, seed)?
        .into_iter()
        .map(|(p, f)| project(p, parts[f]))
        .collect();
    PointSet::from_coords(
        Matrix::from_rows(&rows)?,
        spec.family.index(),
        spec.family.name(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sphere_points_lie_on_the_sphere() {
        let spec = ShapeSpec::new(ShapeFamily::Sphere, 1.0, 1.0).unwrap();
        let ps = make_shape(&spec, 5000, 1).unwrap();
        for r in 0..ps.len() {
            let p = ps.coords().row(r);
            let d = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((d - 1.0).abs() <= 1e-9);
        }
        assert_eq!(ps.label(), 0);
    }

    #[test]
    fn cube_points_touch_a_face() {
        let spec = ShapeSpec::new(ShapeFamily::Cube, 2.0, 1.0).unwrap();
        let ps = make_shape(&spec, 5000, 2).unwrap();
        for r in 0..ps.len() {
            let p = ps.coords().row(r);
            assert!(p.iter().any(|c| (c.abs() - 1.0).abs() <= 1e-9), "{p:?}");
            assert!(p.iter().all(|c| c.abs() <= 1.0 + 1e-9));
        }
    }

    #[test]
    fn unit_cube_faces_share_samples_evenly() {
        let spec = ShapeSpec::new(ShapeFamily::Cube, 1.0, 1.0).unwrap();
        let mesh = spec.mesh().unwrap();
        let n = 100_000;
        let mut per_face = [0usize; 6];
        for (_, f) in sample_surface(&mesh, n, 17).unwrap() {
            per_face[f / 2] += 1;
        }
        let sigma3 = 3.0 * ((1.0 / 6.0) * (5.0 / 6.0) / n as f64).sqrt();
        for c in per_face {
            let frac = c as f64 / n as f64;
            assert!((frac - 1.0 / 6.0).abs() <= sigma3, "{per_face:?}");
        }
    }

    #[test]
    fn curved_families_project_onto_their_surfaces() {
        let cyl = make_shape(&ShapeSpec::new(ShapeFamily::Cylinder, 0.5, 1.0).unwrap(), 2000, 3).unwrap();
        for r in 0..cyl.len() {
            let p = cyl.coords().row(r);
            let rad = p[0].hypot(p[1]);
            let on_cap = (p[2].abs() - 0.5).abs() < 1e-9 && rad <= 0.5 + 1e-9;
            assert!(on_cap || (rad - 0.5).abs() < 1e-9);
        }
        let torus = make_shape(&ShapeSpec::new(ShapeFamily::Torus, 1.0, 1.0).unwrap(), 2000, 4).unwrap();
        for r in 0..torus.len() {
            let p = torus.coords().row(r);
            let q = p[0].hypot(p[1]) - 1.0;
            assert!((q.hypot(p[2]) - 0.35).abs() < 1e-9);
        }
        let cone = make_shape(&ShapeSpec::new(ShapeFamily::Cone, 1.0, 1.0).unwrap(), 2000, 5).unwrap();
        for r in 0..cone.len() {
            let p = cone.coords().row(r);
            let rad = p[0].hypot(p[1]);
            let on_base = (p[2] + 1.0).abs() < 1e-9;
            assert!(on_base || (rad - (1.0 - p[2]) / 2.0).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn same_spec_and_seed_reproduce() {
        for fam in ShapeFamily::ALL {
            let spec = ShapeSpec::new(fam, 1.3, 0.9).unwrap();
            assert_eq!(make_shape(&spec, 64, 8).unwrap(), make_shape(&spec, 64, 8).unwrap());
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(ShapeSpec::new(ShapeFamily::Sphere, 0.0, 1.0), Err(Error::Spec(_))));
        assert!(matches!(ShapeSpec::new(ShapeFamily::Torus, 1.0, 3.0), Err(Error::Spec(_))));
        assert!(matches!("blob".parse::<ShapeFamily>(), Err(Error::Spec(_))));
        let bad = ShapeSpec {
            family: ShapeFamily::Cube,
            scale: -1.0,
            aspect: 1.0,
        };
        assert!(make_shape(&bad, 10, 0).is_err());
    }
}
