use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::Frame;
use crate::error::{Error, Result};

/// Indexed triangle surface.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates indices and rejects triangles that repeat a vertex.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Parameter(format!(
                    "triangle {t} references a vertex outside 0..{n}"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Parameter(format!("triangle {t} repeats a vertex")));
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn area(&self) -> f64 {
        mesh_area(self)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.triangle_cross(t).norm()
    }

    /// Unnormalized face normal `(v1 - v0) x (v2 - v0)`.
    pub fn triangle_cross(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_centroid(&self, t: usize) -> Point3<f64> {
        let [a, b, c] = self.triangles[t];
        Point3::from(
            (self.vertices[a].coords + self.vertices[b].coords + self.vertices[c].coords) / 3.0,
        )
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::with_capacity(self.triangles.len() * 3 / 2 + 1);
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Edges used by exactly one triangle.
    pub fn boundary_edge_count(&self) -> usize {
        self.edge_counts().values().filter(|&&c| c == 1).count()
    }

    /// Fraction of distinct edges shared by two or more triangles.
    pub fn interior_edge_fraction(&self) -> f64 {
        let counts = self.edge_counts();
        if counts.is_empty() {
            return 0.0;
        }
        counts.values().filter(|&&c| c >= 2).count() as f64 / counts.len() as f64
    }

    /// Keeps only the listed triangles and drops vertices nobody references.
    pub fn retain_triangles(&self, keep: impl Fn(usize) -> bool) -> TriangleMesh {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if !keep(t) {
                continue;
            }
            let mut out = [0; 3];
            for k in 0..3 {
                let v = tri[k];
                if remap[v] == usize::MAX {
                    remap[v] = vertices.len();
                    vertices.push(self.vertices[v]);
                }
                out[k] = remap[v];
            }
            triangles.push(out);
        }
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    /// Applies `f` to every vertex.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Mesh expressed in world coordinates of `frame`.
    pub fn to_world(&self, frame: &Frame) -> TriangleMesh {
        self.map_vertices(|p| frame.to_world(p))
    }

    /// Same mesh with every triangle's winding reversed.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Disjoint union of two meshes.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]),
        );
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    /// Signed enclosed volume; positive for closed meshes with outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }
}

/// Total area: the sum of triangle areas. Degenerate triangles contribute zero.
pub fn mesh_area(mesh: &TriangleMesh) -> f64 {
    // Kahan summation keeps large meshes invariant to vertex ordering at 1e-9.
    let mut sum = 0.0;
    let mut carry = 0.0;
    for t in 0..mesh.triangles.len() {
        let y = mesh.triangle_area(t) - carry;
        let s = sum + y;
        carry = (s - sum) - y;
        sum = s;
    }
    sum
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn icosphere(depth: usize) -> TriangleMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Point3<f64>> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize()))
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..depth {
            let mut mid = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3<f64>>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    let m = (verts[a].coords + verts[b].coords).normalize();
                    verts.push(Point3::from(m));
                    verts.len() - 1
                })
            };
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        TriangleMesh::new(verts, faces).unwrap()
    }

    fn unit_square() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn right_triangle_area() {
        let m = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(mesh_area(&m), 0.5);
    }

    #[test]
    fn square_area_and_boundary() {
        let m = unit_square();
        assert!((mesh_area(&m) - 1.0).abs() < 1e-15);
        assert_eq!(m.boundary_edge_count(), 4);
    }

    #[test]
    fn icosphere_area_close_to_sphere() {
        let m = icosphere(4);
        let want = 4.0 * std::f64::consts::PI;
        assert!((mesh_area(&m) - want).abs() / want < 0.01);
        assert_eq!(m.boundary_edge_count(), 0);
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn rejects_bad_triangles() {
        let v = vec![Point3::origin(); 3];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn degenerate_triangle_has_zero_area() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        assert_eq!(mesh_area(&TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap()), 0.0);
    }

    proptest! {
        #[test]
        fn area_rigid_invariant_and_quadratic_scaling(
            roll in -3.0f64..3.0, pitch in -1.5f64..1.5, yaw in -3.0f64..3.0,
            shift in prop::array::uniform3(-100.0f64..100.0),
            s in 0.01f64..50.0,
        ) {
            let m = icosphere(2);
            let base = mesh_area(&m);
            let rot = nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw);
            let shift = Vector3::from(shift);
            let moved = m.map_vertices(|p| rot * p + shift);
            prop_assert!((mesh_area(&moved) - base).abs() <= 1e-9 * base);
            let scaled = m.map_vertices(|p| p * s);
            prop_assert!((mesh_area(&scaled) - s * s * base).abs() <= 1e-9 * s * s * base);
        }
    }
}
