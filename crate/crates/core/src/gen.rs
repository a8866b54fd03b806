//! Synthetic inputs: sphere meshes, label sets, axis-aligned box geometry
//! (cube and city skyline), and seeded vertex noise.
//!
//! All randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded via
//! `seed_from_u64`, so outputs depend only on the arguments.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::energy::LabelSet;
use crate::mesh::{build_mesh, mean_incident_edge_length, SurfaceMesh, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Per-coordinate variance is `variance_factor · e²`, with `e` the mean
    /// incident edge length of the vertex.
    pub variance_factor: f64,
    pub seed: u64,
}

/// Icosahedron refined `subdivisions` times by edge midpoints, projected to
/// the sphere of `radius`.
pub fn gen_icosphere(subdivisions: u32, radius: f64) -> SurfaceMesh {
    assert!(
        subdivisions <= 7,
        "icosphere subdivision level {subdivisions} is above 7"
    );
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Vec3> = [
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
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, positions: &mut Vec<Vec3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                positions.push(((positions[a] + positions[b]) * 0.5).normalize());
                positions.len() - 1
            })
        };
        let mut refined = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut positions);
            let bc = midpoint(b, c, &mut positions);
            let ca = midpoint(c, a, &mut positions);
            refined.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = refined;
    }
    for p in &mut positions {
        *p *= radius;
    }
    build_mesh(positions, faces).expect("icosphere is a closed manifold")
}

/// `count` points of the spherical Fibonacci lattice:
/// `z_i = 1 − (2i + 1)/count`, azimuth advancing by the golden angle.
pub fn gen_fibonacci_labels(count: usize) -> LabelSet {
    assert!(count >= 1);
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let labels = (0..count)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / count as f64;
            let r = (1.0 - z * z).sqrt();
            let theta = golden_angle * i as f64;
            Vec3::new(r * theta.cos(), r * theta.sin(), z).normalize()
        })
        .collect();
    LabelSet::new(labels).expect("lattice points are unit vectors")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platonic {
    Tetrahedron,
    Cube,
    Dodecahedron,
}

impl std::str::FromStr for Platonic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tetrahedron" => Ok(Platonic::Tetrahedron),
            "cube" => Ok(Platonic::Cube),
            "dodecahedron" => Ok(Platonic::Dodecahedron),
            _ => Err(format!("unknown solid {s:?}")),
        }
    }
}

/// Outward unit face normals of a platonic solid.
pub fn gen_platonic_labels(kind: Platonic) -> LabelSet {
    let raw: Vec<Vec3> = match kind {
        Platonic::Tetrahedron => vec![
            Vec3::new(1.0, 1.0, -1.0),
            Vec3::new(1.0, -1.0, 1.0),
            Vec3::new(-1.0, 1.0, 1.0),
            Vec3::new(-1.0, -1.0, -1.0),
        ],
        Platonic::Cube => return axis_labels(),
        Platonic::Dodecahedron => {
            // Face normals of the dodecahedron are the vertices of the
            // icosahedron: cyclic permutations of (0, ±1, ±φ).
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            let mut v = Vec::with_capacity(12);
            for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                v.push(Vec3::new(0.0, s1, s2 * phi));
                v.push(Vec3::new(s1, s2 * phi, 0.0));
                v.push(Vec3::new(s2 * phi, 0.0, s1));
            }
            v
        }
    };
    LabelSet::normalized(raw).expect("nonzero vectors")
}

/// `±x, ±y, ±z`.
pub fn axis_labels() -> LabelSet {
    LabelSet::new(vec![
        Vec3::x(),
        -Vec3::x(),
        Vec3::y(),
        -Vec3::y(),
        Vec3::z(),
        -Vec3::z(),
    ])
    .expect("unit vectors")
}

/// Occupancy grid of unit voxels.
#[derive(Clone, Debug)]
pub struct VoxelGrid {
    dims: [usize; 3],
    filled: Vec<bool>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3]) -> Self {
        Self {
            dims,
            filled: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    fn index(&self, [i, j, k]: [usize; 3]) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn get(&self, c: [i64; 3]) -> bool {
        if (0..3).any(|a| c[a] < 0 || c[a] >= self.dims[a] as i64) {
            return false;
        }
        self.filled[self.index([c[0] as usize, c[1] as usize, c[2] as usize])]
    }

    pub fn set(&mut self, c: [usize; 3]) {
        let i = self.index(c);
        self.filled[i] = true;
    }

    pub fn fill_box(&mut self, lo: [usize; 3], hi: [usize; 3]) {
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    self.set([i, j, k]);
                }
            }
        }
    }

    /// Boundary of the filled region as a triangle mesh, scaled by
    /// `cell_size`. Each exposed voxel face becomes two triangles with
    /// outward orientation. The region must not have voxels meeting only
    /// along an edge or at a corner.
    pub fn surface(&self, cell_size: f64) -> SurfaceMesh {
        let mut vertex_ids: HashMap<[i64; 3], usize> = HashMap::new();
        let mut positions = Vec::new();
        let mut faces = Vec::new();
        let mut vertex = |c: [i64; 3], positions: &mut Vec<Vec3>| {
            *vertex_ids.entry(c).or_insert_with(|| {
                positions.push(Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * cell_size);
                positions.len() - 1
            })
        };
        let [nx, ny, nz] = self.dims;
        for k in 0..nz as i64 {
            for j in 0..ny as i64 {
                for i in 0..nx as i64 {
                    if !self.get([i, j, k]) {
                        continue;
                    }
                    for axis in 0..3 {
                        for side in [0i64, 1] {
                            let mut nb = [i, j, k];
                            nb[axis] += 2 * side - 1;
                            if self.get(nb) {
                                continue;
                            }
                            // Corners of the exposed face, counterclockwise
                            // seen from outside.
                            let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                            let mut base = [i, j, k];
                            base[axis] += side;
                            let corner = |d1: i64, d2: i64| {
                                let mut c = base;
                                c[a1] += d1;
                                c[a2] += d2;
                                c
                            };
                            let mut quad = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                            if side == 0 {
                                quad.reverse();
                            }
                            let q = quad.map(|c| vertex(c, &mut positions));
                            // Alternate the diagonal in a checkerboard so the
                            // triangulation has no global bias.
                            if (i + j + k) % 2 == 0 {
                                faces.push([q[0], q[1], q[2]]);
                                faces.push([q[0], q[2], q[3]]);
                            } else {
                                faces.push([q[1], q[2], q[3]]);
                                faces.push([q[1], q[3], q[0]]);
                            }
                        }
                    }
                }
            }
        }
        build_mesh(positions, faces).expect("voxel boundary is a closed manifold")
    }
}

/// Cube of side `size`, centered at the origin, with each side split into
/// `n × n` squares (`12 n²` triangles).
pub fn gen_cube(n: usize, size: f64) -> SurfaceMesh {
    assert!(n >= 1);
    let mut grid = VoxelGrid::new([n, n, n]);
    grid.fill_box([0, 0, 0], [n, n, n]);
    let mesh = grid.surface(size / n as f64);
    let shift = Vec3::repeat(0.5 * size);
    let centered = mesh.positions().iter().map(|p| p - shift).collect();
    mesh.with_positions(centered)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkylineParams {
    /// Buildings per row and column.
    pub blocks: usize,
    /// Ground cells per block side.
    pub cells_per_block: usize,
    /// Ground slab thickness in cells.
    pub slab_cells: usize,
    /// Building heights are drawn from `1..=max_height_cells`.
    pub max_height_cells: usize,
    /// Smallest building footprint side, in cells.
    pub min_footprint_cells: usize,
    /// Side length of the whole ground square.
    pub extent: f64,
}

impl Default for SkylineParams {
    fn default() -> Self {
        Self {
            blocks: 5,
            cells_per_block: 6,
            slab_cells: 1,
            max_height_cells: 6,
            min_footprint_cells: 2,
            extent: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Building {
    /// Footprint `[x0, y0, x1, y1]` in ground cells.
    pub footprint: [usize; 4],
    pub height_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkylineMetadata {
    pub params: SkylineParams,
    pub seed: u64,
    pub cell_size: f64,
    pub buildings: Vec<Building>,
}

/// Ground slab with a `blocks × blocks` grid of axis-aligned buildings of
/// random footprint, offset and height. Footprints stay at least one cell
/// away from their block border, so buildings never touch.
pub fn gen_skyline(params: &SkylineParams, seed: u64) -> (SurfaceMesh, SkylineMetadata) {
    let b = params.cells_per_block;
    assert!(
        b >= params.min_footprint_cells + 2 && params.min_footprint_cells >= 1,
        "blocks of {b} cells cannot hold a footprint of {} cells with margins",
        params.min_footprint_cells
    );
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = params.blocks * b;
    let nz = params.slab_cells + params.max_height_cells;
    let mut grid = VoxelGrid::new([n, n, nz]);
    grid.fill_box([0, 0, 0], [n, n, params.slab_cells]);
    let mut buildings = Vec::with_capacity(params.blocks * params.blocks);
    let max_side = b - 2;
    for bj in 0..params.blocks {
        for bi in 0..params.blocks {
            let wx = rng.random_range(params.min_footprint_cells..=max_side);
            let wy = rng.random_range(params.min_footprint_cells..=max_side);
            let ox = rng.random_range(1..=b - 1 - wx);
            let oy = rng.random_range(1..=b - 1 - wy);
            let h = rng.random_range(1..=params.max_height_cells);
            let x0 = bi * b + ox;
            let y0 = bj * b + oy;
            grid.fill_box(
                [x0, y0, params.slab_cells],
                [x0 + wx, y0 + wy, params.slab_cells + h],
            );
            buildings.push(Building {
                footprint: [x0, y0, x0 + wx, y0 + wy],
                height_cells: h,
            });
        }
    }
    let cell_size = params.extent / n as f64;
    let mesh = grid.surface(cell_size);
    (
        mesh,
        SkylineMetadata {
            params: params.clone(),
            seed,
            cell_size,
            buildings,
        },
    )
}

/// Displaces every vertex by an isotropic Gaussian with per-coordinate
/// variance `factor · e²`.
pub fn add_noise(mesh: &SurfaceMesh, spec: &NoiseSpec) -> SurfaceMesh {
    assert!(
        spec.variance_factor >= 0.0,
        "noise variance factor must be nonnegative"
    );
    if spec.variance_factor == 0.0 {
        return mesh.clone();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let positions = mesh.positions();
    let noisy = (0..mesh.num_vertices())
        .map(|v| {
            let e = mean_incident_edge_length(mesh, positions, v);
            let sigma = (spec.variance_factor).sqrt() * e;
            let z: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            positions[v] + Vec3::from(z) * sigma
        })
        .collect();
    mesh.with_positions(noisy)
}
