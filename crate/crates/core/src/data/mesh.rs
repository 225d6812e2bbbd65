use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::PointSet;
use crate::tensor::Matrix;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

impl TriangleMesh {
    /// Checks indices and drops faces of zero area.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(v) = vertices.iter().find(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Geometry(format!("non-finite vertex {v:?}")));
        }
        for (i, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::Geometry(format!(
                    "face {i} references vertex {bad} but the mesh has {} vertices",
                    vertices.len()
                )));
            }
        }
        let mut mesh = TriangleMesh { vertices, faces };
        mesh.faces.retain(|&f| {
            let a = mesh.vertices[f[0]];
            norm(cross(sub(mesh.vertices[f[1]], a), sub(mesh.vertices[f[2]], a))) > 0.0
        });
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn corners(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.corners(face);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }
}

/// Area-weighted uniform surface samples, with the face each came from.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<(Vec3, usize)>> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Geometry("mesh has zero total area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.gen::<f64>() * acc;
        let face = cumulative
            .partition_point(|&c| c <= t)
            .min(cumulative.len() - 1);
        let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let [a, b, c] = mesh.corners(face);
        let p = [
            a[0] + u * (b[0] - a[0]) + v * (c[0] - a[0]),
            a[1] + u * (b[1] - a[1]) + v * (c[1] - a[1]),
            a[2] + u * (b[2] - a[2]) + v * (c[2] - a[2]),
        ];
        out.push((p, face));
    }
    Ok(out)
}

/// `n` points drawn uniformly from the surface of `mesh`.
pub fn sample_mesh(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::Parameter("cannot sample zero points".into()));
    }
    let pts = sample_surface(mesh, n, seed)?;
    let rows: Vec<Vec3> = pts.into_iter().map(|(p, _)| p).collect();
    PointSet::from_coords(Matrix::from_rows(&rows)?, 0, "mesh")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact 3-sigma half-width for a binomial proportion.
    fn three_sigma(p: f64, n: usize) -> f64 {
        3.0 * (p * (1.0 - p) / n as f64).sqrt()
    }

    #[test]
    fn single_triangle_contains_every_sample() {
        let a = [0.3, -1.0, 2.0];
        let b = [1.5, 0.2, 2.0];
        let c = [0.1, 0.9, 2.5];
        let mesh = TriangleMesh::new(vec![a, b, c], vec![[0, 1, 2]]).unwrap();
        let e1 = sub(b, a);
        let e2 = sub(c, a);
        // Solve p - a = s e1 + t e2 with the normal equations.
        let dot = |x: Vec3, y: Vec3| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        let (d11, d12, d22) = (dot(e1, e1), dot(e1, e2), dot(e2, e2));
        let det = d11 * d22 - d12 * d12;
        for (p, _) in sample_surface(&mesh, 2000, 3).unwrap() {
            let r = sub(p, a);
            let (r1, r2) = (dot(r, e1), dot(r, e2));
            let s = (d22 * r1 - d12 * r2) / det;
            let t = (d11 * r2 - d12 * r1) / det;
            assert!(s >= -1e-12 && t >= -1e-12 && s + t <= 1.0 + 1e-12);
            assert!((p[2] - (2.0 + 0.5 * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn faces_are_chosen_in_proportion_to_area() {
        // areas 1 and 3
        let mesh = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [2.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 5.0],
                [6.0, 0.0, 5.0],
                [0.0, 1.0, 5.0],
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        assert!((mesh.face_area(0) - 1.0).abs() < 1e-12);
        assert!((mesh.face_area(1) - 3.0).abs() < 1e-12);
        let n = 100_000;
        let hits = sample_surface(&mesh, n, 11)
            .unwrap()
            .iter()
            .filter(|(_, f)| *f == 1)
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.75).abs() <= three_sigma(0.75, n), "{frac}");
    }

    #[test]
    fn zero_area_mesh_is_a_geometry_error() {
        let mesh =
            TriangleMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![[0, 1, 2]])
                .unwrap();
        assert!(mesh.faces().is_empty());
        assert!(matches!(sample_mesh(&mesh, 10, 0), Err(Error::Geometry(_))));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        assert!(TriangleMesh::new(vec![[0.0; 3]], vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let mesh = TriangleMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(sample_mesh(&mesh, 50, 4).unwrap(), sample_mesh(&mesh, 50, 4).unwrap());
        assert_ne!(sample_mesh(&mesh, 50, 4).unwrap(), sample_mesh(&mesh, 50, 5).unwrap());
    }
}
