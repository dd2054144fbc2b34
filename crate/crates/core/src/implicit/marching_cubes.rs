//! Iso-surface extraction by marching cubes.

use std::collections::HashMap;

use nalgebra::Point3;

use super::grid::ScalarGrid;
use super::mc_tables::{EDGE_TABLE, TRI_TABLE};
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;

/// Corner offsets in table order.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Corner pairs of each cube edge.
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Triangulates the `iso` level set of `grid`. Vertices are linearly
/// interpolated along cell edges and shared between neighbouring cells.
/// Triangles are wound so their normals point toward increasing values. An
/// empty level set gives an empty mesh.
pub fn extract_isosurface(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    if !iso.is_finite() {
        return Err(Error::Parameter(format!("iso value must be finite, got {iso}")));
    }
    let spec = grid.spec;
    let [nx, ny, nz] = spec.dims;
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles = Vec::new();
    let mut cache: HashMap<(usize, u8), usize> = HashMap::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut values = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    values[c] = grid.get(i + off[0], j + off[1], k + off[2]);
                    if values[c] < iso {
                        case |= 1 << c;
                    }
                }
                let mask = EDGE_TABLE[case];
                if mask == 0 {
                    continue;
                }
                let mut edge_vertex = [usize::MAX; 12];
                for (e, &[a, b]) in EDGES.iter().enumerate() {
                    if mask & (1 << e) == 0 {
                        continue;
                    }
                    let (ca, cb) = (CORNERS[a], CORNERS[b]);
                    let axis = (0..3).find(|&d| ca[d] != cb[d]).unwrap();
                    let low = if ca[axis] < cb[axis] { ca } else { cb };
                    let key = (spec.index(i + low[0], j + low[1], k + low[2]), axis as u8);
                    edge_vertex[e] = *cache.entry(key).or_insert_with(|| {
                        let (va, vb) = (values[a], values[b]);
                        let t = if vb != va { ((iso - va) / (vb - va)).clamp(0.0, 1.0) } else { 0.5 };
                        let pa = spec.position(i + ca[0], j + ca[1], k + ca[2]);
                        let pb = spec.position(i + cb[0], j + cb[1], k + cb[2]);
                        vertices.push(pa + (pb - pa) * t);
                        vertices.len() - 1
                    });
                }
                for tri in TRI_TABLE[case].chunks(3).take_while(|t| t[0] >= 0) {
                    let [a, b, c] = [0, 1, 2].map(|m| edge_vertex[tri[m] as usize]);
                    if a != b && b != c && a != c {
                        triangles.push([a, c, b]);
                    }
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}
