//! Indexed triangle meshes with a fixed edge orientation and cached geometry.
//!
//! Connectivity is immutable once a [`SurfaceMesh`] is built. Vertex positions
//! may change during optimization; everything derived from them lives in a
//! [`GeometryCache`] that is recomputed after each position update.

use std::collections::HashMap;

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {vertex}, but only {count} vertices exist")]
    IndexOutOfRange {
        face: usize,
        vertex: usize,
        count: usize,
    },
    #[error("face {face} repeats a vertex")]
    RepeatedVertex { face: usize },
    #[error("edge ({a}, {b}) has {count} incident faces, expected 2")]
    NonManifold { a: usize, b: usize, count: usize },
    #[error("edge ({a}, {b}) is traversed in the same direction by both incident faces")]
    InconsistentOrientation { a: usize, b: usize },
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("vertex {vertex} is not referenced by any face")]
    IsolatedVertex { vertex: usize },
}

/// An undirected edge with its two incident faces.
///
/// `face_plus` traverses the edge from `endpoints[0]` to `endpoints[1]`,
/// `face_minus` traverses it the other way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub endpoints: [usize; 2],
    pub face_plus: usize,
    pub face_minus: usize,
}

/// Closed, consistently oriented, manifold triangle mesh.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    positions: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// Edge ids incident to each vertex, CSR layout.
    vertex_edge_offsets: Vec<usize>,
    vertex_edges: Vec<usize>,
    /// For each face, its three edge ids (edge k is opposite corner k).
    face_edges: Vec<[usize; 3]>,
}

/// Area, unit normal and edge lengths for one set of vertex positions.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryCache {
    pub face_area: Vec<f64>,
    pub face_normal: Vec<Vec3>,
    pub edge_length: Vec<f64>,
}

/// One fixed-width record of `f64` per face or per edge, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    width: usize,
    data: Vec<f64>,
}

pub type FaceField = Field;
pub type EdgeField = Field;

impl Field {
    pub fn zeros(len: usize, width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; len * width],
        }
    }

    pub fn filled(len: usize, width: usize, value: f64) -> Self {
        Self {
            width,
            data: vec![value; len * width],
        }
    }

    pub fn from_rows(width: usize, data: Vec<f64>) -> Self {
        assert!(
            width > 0 && data.len().is_multiple_of(width),
            "field data length {} is not a multiple of width {width}",
            data.len()
        );
        Self { width, data }
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// 3-vector stored at columns `3k..3k+3` of row `i`.
    pub fn vec3(&self, i: usize, k: usize) -> Vec3 {
        let r = &self.row(i)[3 * k..3 * k + 3];
        Vec3::new(r[0], r[1], r[2])
    }

    pub fn set_vec3(&mut self, i: usize, k: usize, v: &Vec3) {
        self.row_mut(i)[3 * k..3 * k + 3].copy_from_slice(v.as_slice());
    }

    /// Largest absolute entrywise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        if self.width != other.width || self.data.len() != other.data.len() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| f64::max(m, a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

fn bbox_diagonal_sq(positions: &[Vec3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm_squared()
}

/// Unnormalized normal `(b - a) x (c - a)`; its norm is twice the area.
pub fn triangle_cross(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    (b - a).cross(&(c - a))
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * triangle_cross(a, b, c).norm()
}

/// Builds and validates a mesh. See [`SurfaceMesh`] for the invariants.
pub fn build_mesh(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<SurfaceMesh, MeshError> {
    SurfaceMesh::new(positions, faces)
}

impl SurfaceMesh {
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = positions.len();
        for (f, tri) in faces.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::IndexOutOfRange {
                        face: f,
                        vertex: v,
                        count: nv,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::RepeatedVertex { face: f });
            }
        }

        // Per undirected edge: (forward traversals, backward traversals), in
        // order of first appearance.
        let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 2);
        let mut uses: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(faces.len() * 3 / 2);
        let mut keys: Vec<(usize, usize)> = Vec::with_capacity(faces.len() * 3 / 2);
        let mut face_edges = vec![[0usize; 3]; faces.len()];
        for (f, tri) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *index.entry(key).or_insert_with(|| {
                    keys.push(key);
                    uses.push((Vec::new(), Vec::new()));
                    keys.len() - 1
                });
                if a < b {
                    uses[id].0.push(f);
                } else {
                    uses[id].1.push(f);
                }
                face_edges[f][k] = id;
            }
        }

        // Edges shared by three or more faces are reported ahead of boundary
        // edges, which they usually produce as a side effect.
        if let Some((key, (fwd, bwd))) = keys
            .iter()
            .zip(&uses)
            .find(|(_, (fwd, bwd))| fwd.len() + bwd.len() > 2)
        {
            return Err(MeshError::NonManifold {
                a: key.0,
                b: key.1,
                count: fwd.len() + bwd.len(),
            });
        }

        let mut edges = Vec::with_capacity(keys.len());
        for (key, (fwd, bwd)) in keys.iter().zip(&uses) {
            let count = fwd.len() + bwd.len();
            if count != 2 {
                return Err(MeshError::NonManifold {
                    a: key.0,
                    b: key.1,
                    count,
                });
            }
            if fwd.len() != 1 {
                return Err(MeshError::InconsistentOrientation { a: key.0, b: key.1 });
            }
            edges.push(Edge {
                endpoints: [key.0, key.1],
                face_plus: fwd[0],
                face_minus: bwd[0],
            });
        }

        let mut degree = vec![0usize; nv];
        for e in &edges {
            degree[e.endpoints[0]] += 1;
            degree[e.endpoints[1]] += 1;
        }
        if let Some(v) = degree.iter().position(|&d| d == 0) {
            return Err(MeshError::IsolatedVertex { vertex: v });
        }
        let mut vertex_edge_offsets = Vec::with_capacity(nv + 1);
        vertex_edge_offsets.push(0);
        for d in &degree {
            vertex_edge_offsets.push(vertex_edge_offsets.last().unwrap() + d);
        }
        let mut fill = vertex_edge_offsets[..nv].to_vec();
        let mut vertex_edges = vec![0; vertex_edge_offsets[nv]];
        for (id, e) in edges.iter().enumerate() {
            for &v in &e.endpoints {
                vertex_edges[fill[v]] = id;
                fill[v] += 1;
            }
        }

        let threshold = 1e-14 * bbox_diagonal_sq(&positions);
        for (f, tri) in faces.iter().enumerate() {
            let area = triangle_area(&positions[tri[0]], &positions[tri[1]], &positions[tri[2]]);
            if !(area >= threshold) || area == 0.0 {
                return Err(MeshError::DegenerateFace { face: f, area });
            }
        }

        Ok(Self {
            positions,
            faces,
            edges,
            vertex_edge_offsets,
            vertex_edges,
            face_edges,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge ids of face `f`; entry `k` is the edge opposite corner `k`.
    pub fn face_edges(&self, f: usize) -> [usize; 3] {
        self.face_edges[f]
    }

    pub fn vertex_edges(&self, v: usize) -> &[usize] {
        &self.vertex_edges[self.vertex_edge_offsets[v]..self.vertex_edge_offsets[v + 1]]
    }

    /// Replaces vertex positions. Connectivity and validation state are kept;
    /// callers are responsible for recomputing any geometry cache.
    pub fn set_positions(&mut self, positions: Vec<Vec3>) {
        assert_eq!(positions.len(), self.positions.len());
        self.positions = positions;
    }

    pub fn with_positions(&self, positions: Vec<Vec3>) -> Self {
        let mut m = self.clone();
        m.set_positions(positions);
        m
    }

    pub fn corners<'a>(&self, positions: &'a [Vec3], f: usize) -> [&'a Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [&positions[a], &positions[b], &positions[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.corners(&self.positions, f);
        triangle_area(a, b, c)
    }

    pub fn face_normal(&self, f: usize) -> Result<Vec3, MeshError> {
        let [a, b, c] = self.corners(&self.positions, f);
        let n = triangle_cross(a, b, c);
        let area = 0.5 * n.norm();
        if area < 1e-14 * bbox_diagonal_sq(&self.positions) || area == 0.0 {
            return Err(MeshError::DegenerateFace { face: f, area });
        }
        Ok(n / (2.0 * area))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].endpoints;
        (self.positions[a] - self.positions[b]).norm()
    }

    pub fn mean_incident_edge_length(&self, v: usize) -> f64 {
        mean_incident_edge_length(self, &self.positions, v)
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        bbox_diagonal_sq(&self.positions).sqrt()
    }

    pub fn recompute_cache(&self) -> GeometryCache {
        GeometryCache::compute(self, &self.positions)
    }
}

pub fn mean_incident_edge_length(mesh: &SurfaceMesh, positions: &[Vec3], v: usize) -> f64 {
    let incident = mesh.vertex_edges(v);
    let total: f64 = incident
        .iter()
        .map(|&e| {
            let [a, b] = mesh.edges[e].endpoints;
            (positions[a] - positions[b]).norm()
        })
        .sum();
    total / incident.len() as f64
}

/// Recomputes all geometry of `mesh` at its current positions.
pub fn recompute_cache(mesh: &SurfaceMesh) -> GeometryCache {
    mesh.recompute_cache()
}

impl GeometryCache {
    /// Geometry of `mesh` with its vertices moved to `positions`. Degenerate
    /// faces get area 0 and a zero normal.
    pub fn compute(mesh: &SurfaceMesh, positions: &[Vec3]) -> Self {
        debug_assert_eq!(positions.len(), mesh.num_vertices());
        let mut face_area = Vec::with_capacity(mesh.num_faces());
        let mut face_normal = Vec::with_capacity(mesh.num_faces());
        for f in 0..mesh.num_faces() {
            let [a, b, c] = mesh.corners(positions, f);
            let n = triangle_cross(a, b, c);
            let len = n.norm();
            face_area.push(0.5 * len);
            face_normal.push(if len > 0.0 { n / len } else { Vec3::zeros() });
        }
        let edge_length = mesh
            .edges
            .iter()
            .map(|e| (positions[e.endpoints[0]] - positions[e.endpoints[1]]).norm())
            .collect();
        Self {
            face_area,
            face_normal,
            edge_length,
        }
    }

    pub fn min_face_area(&self) -> f64 {
        self.face_area.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn total_area(&self) -> f64 {
        self.face_area.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tetrahedron() -> SurfaceMesh {
        let p = vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ];
        let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        build_mesh(p, f).unwrap()
    }

    fn single_triangle_positions(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [Vec3; 3] {
        [Vec3::from(a), Vec3::from(b), Vec3::from(c)]
    }

    #[test]
    fn tetrahedron_euler() {
        let m = tetrahedron();
        assert_eq!(m.num_edges(), 6);
        assert_eq!(
            m.num_vertices() as i64 - m.num_edges() as i64 + m.num_faces() as i64,
            2
        );
    }

    #[test]
    fn tetrahedron_normals_point_outward() {
        let m = tetrahedron();
        let centroid: Vec3 = m.positions().iter().sum::<Vec3>() / 4.0;
        for f in 0..m.num_faces() {
            let [a, b, c] = m.corners(m.positions(), f);
            let center = (a + b + c) / 3.0;
            assert!(m.face_normal(f).unwrap().dot(&(center - centroid)) > 0.0);
        }
    }

    #[test]
    fn third_face_on_edge_is_non_manifold() {
        let p = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let f = vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]];
        assert!(matches!(
            build_mesh(p, f),
            Err(MeshError::NonManifold { count: 3, .. })
        ));
    }

    #[test]
    fn flipped_face_is_inconsistent() {
        let m = tetrahedron();
        let mut faces = m.faces().to_vec();
        faces[3] = [1, 2, 3];
        let err = build_mesh(m.positions().to_vec(), faces).unwrap_err();
        assert!(matches!(err, MeshError::InconsistentOrientation { .. }));
    }

    #[test]
    fn collapsed_face_is_rejected() {
        let m = tetrahedron();
        let mut p = m.positions().to_vec();
        // Put vertex 3 on the segment between 1 and 2: face [1, 3, 2] collapses.
        p[3] = (p[1] + p[2]) * 0.5;
        assert!(matches!(
            build_mesh(p, m.faces().to_vec()),
            Err(MeshError::DegenerateFace { face: 3, .. })
        ));
    }

    #[test]
    fn edge_orientation_convention() {
        let m = tetrahedron();
        for e in m.edges() {
            let [a, b] = e.endpoints;
            let traverses = |f: usize, from: usize, to: usize| {
                let t = m.faces()[f];
                (0..3).any(|k| t[k] == from && t[(k + 1) % 3] == to)
            };
            assert!(traverses(e.face_plus, a, b));
            assert!(traverses(e.face_minus, b, a));
        }
    }

    #[test]
    fn face_area_examples() {
        let t = single_triangle_positions([0., 0., 0.], [1., 0., 0.], [0., 1., 0.]);
        assert_eq!(triangle_area(&t[0], &t[1], &t[2]), 0.5);
        let t = single_triangle_positions([0., 0., 0.], [2., 0., 0.], [0., 2., 0.]);
        assert_eq!(triangle_area(&t[0], &t[1], &t[2]), 2.0);
        let t = single_triangle_positions([0., 0., 0.], [1., 0., 0.], [2., 0., 0.]);
        assert_eq!(triangle_area(&t[0], &t[1], &t[2]), 0.0);
    }

    #[test]
    fn face_normal_examples() {
        let n = |a, b, c| {
            let t = single_triangle_positions(a, b, c);
            triangle_cross(&t[0], &t[1], &t[2]).normalize()
        };
        assert_eq!(
            n([0., 0., 0.], [1., 0., 0.], [0., 1., 0.]),
            Vec3::new(0., 0., 1.)
        );
        assert_eq!(
            n([0., 1., 0.], [1., 0., 0.], [0., 0., 0.]),
            Vec3::new(0., 0., -1.)
        );
        assert_eq!(
            n([0., 0., 0.], [0., 1., 0.], [0., 0., 1.]),
            Vec3::new(1., 0., 0.)
        );
    }

    #[test]
    fn edge_length_examples() {
        let p = [
            Vec3::new(0., 0., 0.),
            Vec3::new(3., 4., 0.),
            Vec3::new(1., 0., 0.),
        ];
        assert_eq!((p[0] - p[1]).norm(), 5.0);
        assert_eq!((p[0] - p[2]).norm(), 1.0);
    }

    #[test]
    fn cache_under_rigid_motion_and_scaling() {
        let m = tetrahedron();
        let base = m.recompute_cache();
        assert_eq!(base, m.recompute_cache());

        let shift = Vec3::new(1.0, 2.0, 3.0);
        let moved = m.with_positions(m.positions().iter().map(|p| p + shift).collect());
        let c = moved.recompute_cache();
        for f in 0..m.num_faces() {
            assert!((c.face_area[f] - base.face_area[f]).abs() < 1e-12);
            assert!((c.face_normal[f] - base.face_normal[f]).norm() < 1e-12);
        }
        for e in 0..m.num_edges() {
            assert!((c.edge_length[e] - base.edge_length[e]).abs() < 1e-12);
        }

        let scaled = m.with_positions(m.positions().iter().map(|p| p * 2.0).collect());
        let c = scaled.recompute_cache();
        for f in 0..m.num_faces() {
            assert!((c.face_area[f] - 4.0 * base.face_area[f]).abs() < 1e-12);
            assert!((c.face_normal[f] - base.face_normal[f]).norm() < 1e-12);
        }
        for e in 0..m.num_edges() {
            assert!((c.edge_length[e] - 2.0 * base.edge_length[e]).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_incident_edge_length_examples() {
        // Regular tetrahedron with edge 2.
        let s = 2.0 / 8f64.sqrt();
        let m = tetrahedron();
        let m = m.with_positions(m.positions().iter().map(|p| p * s).collect());
        for v in 0..4 {
            assert!((m.mean_incident_edge_length(v) - 2.0).abs() < 1e-12);
        }

        // Square pyramid whose apex sees edges 1, 1, 2, 2. Base corners are
        // placed so the apex distances come out exactly.
        let apex = Vec3::zeros();
        let p = vec![
            apex,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-2.0, 0.0, 0.0),
            Vec3::new(0.0, -2.0, 0.0),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        // Apex is vertex 0; vertex 5 closes the bottom. Connectivity is an
        // octahedron, so vertex 0 has exactly the four side edges.
        let f = vec![
            [0, 1, 2],
            [0, 2, 3],
            [0, 3, 4],
            [0, 4, 1],
            [5, 2, 1],
            [5, 3, 2],
            [5, 4, 3],
            [5, 1, 4],
        ];
        let mut p = p;
        p[0] = Vec3::new(0.0, 0.0, 1e-3);
        let m = build_mesh(p, f).unwrap();
        let d = m.mean_incident_edge_length(0);
        let exact = (1.0f64 + 1e-6).sqrt() * 2.0 + (4.0f64 + 1e-6).sqrt() * 2.0;
        assert!((d - exact / 4.0).abs() < 1e-12);
        assert!((d - 1.5).abs() < 1e-6);
    }
}
