//! Compressed sparse row matrices, (truncated) preconditioned CG, IC(0), and
//! P1 finite-element assembly on surface meshes.

use thiserror::Error;

use crate::mesh::{GeometryCache, MeshError, SurfaceMesh, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-finite value encountered after {iterations} iterations")]
    BreakdownNaN { iterations: usize },
    #[error("non-positive pivot {pivot:e} in row {row}")]
    PivotBreakdown { row: usize, pivot: f64 },
    #[error("dimension mismatch: matrix is {rows}x{cols}, vector has length {len}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
}

/// Row-compressed sparse matrix with sorted column indices in every row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for r in 0..nrows {
            let row = &mut entries[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            for &(c, v) in row.iter() {
                if col_indices.len() > *row_offsets.last().unwrap()
                    && *col_indices.last().unwrap() == c
                {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut t = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `a·self + b·other`; both must have the same shape.
    pub fn linear_combination(&self, a: f64, other: &SparseMatrix, b: f64) -> SparseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            t.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, a * x)));
            let (c, v) = other.row(i);
            t.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, b * x)));
        }
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    /// Largest `|A_ij − A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                row[j] = x;
            }
        }
        d
    }
}

/// Applies an approximate inverse `z ≈ P⁻¹ r`.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

impl<P: Preconditioner + ?Sized> Preconditioner for &P {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        (**self).apply(r, z)
    }
}

#[derive(Clone, Debug)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &SparseMatrix) -> Self {
        Self {
            inv_diag: a
                .diagonal()
                .iter()
                .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }
}

/// Zero-fill incomplete Cholesky factor `L` with `A ≈ L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Ic0 {
    lower: SparseMatrix,
}

/// Computes IC(0) on the lower-triangular pattern of `a`.
pub fn ic0(a: &SparseMatrix) -> Result<Ic0, SolverError> {
    let n = a.nrows();
    let mut triplets = Vec::with_capacity(a.nnz() / 2 + n);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let mut has_diag = false;
        for (&j, &v) in cols.iter().zip(vals) {
            if j <= i {
                triplets.push((i, j, v));
                has_diag |= j == i;
            }
        }
        if !has_diag {
            return Err(SolverError::PivotBreakdown { row: i, pivot: 0.0 });
        }
    }
    let mut lower = SparseMatrix::from_triplets(n, n, &triplets);
    for i in 0..n {
        let (start, end) = (lower.row_offsets[i], lower.row_offsets[i + 1]);
        for p in start..end {
            let k = lower.col_indices[p];
            // Sparse dot of row i and row k restricted to columns < k.
            let mut s = 0.0;
            let (mut a_i, mut a_k) = (start, lower.row_offsets[k]);
            let end_k = lower.row_offsets[k + 1];
            while a_i < p && a_k < end_k {
                let (ci, ck) = (lower.col_indices[a_i], lower.col_indices[a_k]);
                if ck >= k {
                    break;
                }
                match ci.cmp(&ck) {
                    std::cmp::Ordering::Less => a_i += 1,
                    std::cmp::Ordering::Greater => a_k += 1,
                    std::cmp::Ordering::Equal => {
                        s += lower.values[a_i] * lower.values[a_k];
                        a_i += 1;
                        a_k += 1;
                    }
                }
            }
            if k < i {
                let pivot = lower.values[end_k - 1];
                lower.values[p] = (lower.values[p] - s) / pivot;
            } else {
                let d = lower.values[p] - s;
                if !(d > 0.0) {
                    return Err(SolverError::PivotBreakdown { row: i, pivot: d });
                }
                lower.values[p] = d.sqrt();
            }
        }
    }
    Ok(Ic0 { lower })
}

impl Ic0 {
    pub fn factor(&self) -> &SparseMatrix {
        &self.lower
    }

    pub fn solve_into(&self, r: &[f64], z: &mut [f64]) {
        let l = &self.lower;
        let n = l.nrows;
        // L y = r
        for i in 0..n {
            let (cols, vals) = l.row(i);
            let last = cols.len() - 1;
            let mut s = r[i];
            for k in 0..last {
                s -= vals[k] * z[cols[k]];
            }
            z[i] = s / vals[last];
        }
        // Lᵀ z = y, column-oriented sweep over the rows of L.
        for i in (0..n).rev() {
            let (cols, vals) = l.row(i);
            let last = cols.len() - 1;
            z[i] /= vals[last];
            let zi = z[i];
            for k in 0..last {
                z[cols[k]] -= vals[k] * zi;
            }
        }
    }
}

impl Preconditioner for Ic0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.solve_into(r, z);
    }
}

/// Scalar preconditioner applied independently to each coordinate of an
/// interleaved vector field (`x₀ y₀ z₀ x₁ y₁ z₁ …`).
pub struct Blockwise<P> {
    pub inner: P,
    pub components: usize,
}

impl<P: Preconditioner> Preconditioner for Blockwise<P> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let d = self.components;
        let n = r.len() / d;
        let mut rc = vec![0.0; n];
        let mut zc = vec![0.0; n];
        for k in 0..d {
            for i in 0..n {
                rc[i] = r[d * i + k];
            }
            self.inner.apply(&rc, &mut zc);
            for i in 0..n {
                z[d * i + k] = zc[i];
            }
        }
    }
}

/// Either IC(0) or its Jacobi fallback after a pivot breakdown.
pub enum SpdPreconditioner {
    Ic0(Ic0),
    Jacobi(Jacobi),
}

impl SpdPreconditioner {
    pub fn build(a: &SparseMatrix) -> Self {
        match ic0(a) {
            Ok(f) => SpdPreconditioner::Ic0(f),
            Err(_) => SpdPreconditioner::Jacobi(Jacobi::new(a)),
        }
    }

    pub fn is_ic0(&self) -> bool {
        matches!(self, SpdPreconditioner::Ic0(_))
    }
}

impl Preconditioner for SpdPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            SpdPreconditioner::Ic0(p) => p.apply(r, z),
            SpdPreconditioner::Jacobi(p) => p.apply(r, z),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    NegativeCurvature,
}

#[derive(Clone, Debug)]
pub struct CgReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Default iteration cap: ten times the problem dimension.
pub fn default_max_iters(n: usize) -> usize {
    10 * n.max(1)
}

/// Preconditioned CG from `x₀ = 0`; stops when `‖r‖/‖b‖ ≤ rtol`.
pub fn cg_solve(
    a: &SparseMatrix,
    b: &[f64],
    rtol: f64,
    max_iters: usize,
    preconditioner: Option<&dyn Preconditioner>,
) -> Result<CgReport, SolverError> {
    cg_impl(a, b, rtol, max_iters, preconditioner, false)
}

/// CG for possibly indefinite `A`: exits on the first direction with
/// `pᵀAp ≤ 0`, returning the current iterate, or the preconditioned
/// right-hand side if that happens in the first iteration.
pub fn truncated_cg(
    a: &SparseMatrix,
    b: &[f64],
    rtol: f64,
    max_iters: usize,
    preconditioner: Option<&dyn Preconditioner>,
) -> Result<CgReport, SolverError> {
    cg_impl(a, b, rtol, max_iters, preconditioner, true)
}

fn cg_impl(
    a: &SparseMatrix,
    b: &[f64],
    rtol: f64,
    max_iters: usize,
    preconditioner: Option<&dyn Preconditioner>,
    truncate: bool,
) -> Result<CgReport, SolverError> {
    let n = b.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(SolverError::DimensionMismatch {
            rows: a.nrows(),
            cols: a.ncols(),
            len: n,
        });
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(SolverError::BreakdownNaN { iterations: 0 });
    }
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgReport {
            solution: x,
            iterations: 0,
            termination: Termination::Converged,
            relative_residual: 0.0,
        });
    }
    let precondition = |r: &[f64], z: &mut [f64]| match preconditioner {
        Some(p) => p.apply(r, z),
        None => z.copy_from_slice(r),
    };
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 0..max_iters {
        a.mul_vec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() {
            return Err(SolverError::BreakdownNaN { iterations: it });
        }
        if truncate && curvature <= 0.0 {
            if it == 0 {
                x.copy_from_slice(&p);
            }
            return Ok(CgReport {
                solution: x,
                iterations: it,
                termination: Termination::NegativeCurvature,
                relative_residual: rel,
            });
        }
        let step = rz / curvature;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        rel = norm(&r) / b_norm;
        if !rel.is_finite() {
            return Err(SolverError::BreakdownNaN { iterations: it + 1 });
        }
        if rel <= rtol {
            return Ok(CgReport {
                solution: x,
                iterations: it + 1,
                termination: Termination::Converged,
                relative_residual: rel,
            });
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(CgReport {
        solution: x,
        iterations: max_iters,
        termination: Termination::MaxIters,
        relative_residual: rel,
    })
}

/// P1 mass and stiffness (cotangent Laplace–Beltrami) matrices.
pub fn assemble_p1_scalar(
    mesh: &SurfaceMesh,
    positions: &[Vec3],
    cache: &GeometryCache,
) -> Result<(SparseMatrix, SparseMatrix), MeshError> {
    let nv = mesh.num_vertices();
    let mut mass = Vec::with_capacity(9 * mesh.num_faces());
    let mut stiff = Vec::with_capacity(9 * mesh.num_faces());
    for (f, tri) in mesh.faces().iter().enumerate() {
        let area = cache.face_area[f];
        if !(area > 0.0) {
            return Err(MeshError::DegenerateFace { face: f, area });
        }
        let x = [positions[tri[0]], positions[tri[1]], positions[tri[2]]];
        // Edge opposite corner i.
        let opp = [x[2] - x[1], x[0] - x[2], x[1] - x[0]];
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                mass.push((tri[i], tri[j], m));
                stiff.push((tri[i], tri[j], opp[i].dot(&opp[j]) / (4.0 * area)));
            }
        }
    }
    Ok((
        SparseMatrix::from_triplets(nv, nv, &mass),
        SparseMatrix::from_triplets(nv, nv, &stiff),
    ))
}

/// Representation matrix `M + cK` of the deformation inner product (scalar
/// block; applied per coordinate).
pub fn inner_product_matrix(
    mesh: &SurfaceMesh,
    positions: &[Vec3],
    cache: &GeometryCache,
    c: f64,
) -> Result<SparseMatrix, MeshError> {
    let (m, k) = assemble_p1_scalar(mesh, positions, cache)?;
    Ok(m.linear_combination(1.0, &k, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    fn tridiag(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 1, 1.0), (0, 0, 2.0), (0, 1, 3.0), (1, 1, 1.0)],
        );
        assert_eq!(a.row(0), (&[0usize, 1][..], &[2.0, 4.0][..]));
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        let r = cg_solve(&SparseMatrix::identity(5), &b, 1e-12, 100, None).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.solution, b);
    }

    #[test]
    fn diagonal_system() {
        let a = SparseMatrix::from_diagonal(&[1.0, 2.0, 4.0]);
        let r = cg_solve(&a, &[1.0, 2.0, 4.0], 1e-12, 100, None).unwrap();
        for x in r.solution {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_cg_negative_scalar() {
        let a = SparseMatrix::from_diagonal(&[-1.0]);
        let r = truncated_cg(&a, &[1.0], 1e-8, 10, None).unwrap();
        assert_eq!(r.termination, Termination::NegativeCurvature);
        assert_eq!(r.solution, vec![1.0]);
    }

    #[test]
    fn truncated_cg_indefinite_decreases_model() {
        let a = SparseMatrix::from_diagonal(&[1.0, -1.0]);
        let b = [1.0, 0.1];
        let r = truncated_cg(&a, &b, 1e-10, 10, None).unwrap();
        assert_eq!(r.termination, Termination::NegativeCurvature);
        let x = &r.solution;
        let ax = a.mul_vec(x);
        let model = 0.5 * dot(x, &ax) - dot(&b, x);
        assert!(model <= 0.0);
        assert!(dot(x, &b) >= 0.0);
    }

    #[test]
    fn ic0_of_diagonal_is_sqrt() {
        let a = SparseMatrix::from_diagonal(&[4.0, 9.0, 16.0]);
        let f = ic0(&a).unwrap();
        assert_eq!(f.factor().diagonal(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn ic0_of_tridiagonal_is_exact() {
        let a = tridiag(20);
        let f = ic0(&a).unwrap();
        let l = f.factor().to_dense();
        let n = 20;
        for i in 0..n {
            for j in 0..n {
                let llt: f64 = (0..n).map(|k| l[i][k] * l[j][k]).sum();
                assert!((llt - a.get(i, j)).abs() < 1e-12);
            }
        }
        // Exact factor => PCG converges in one step.
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let r = cg_solve(&a, &b, 1e-12, 100, Some(&f)).unwrap();
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn ic0_reports_breakdown() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            ic0(&a),
            Err(SolverError::PivotBreakdown { row: 1, .. })
        ));
        assert!(!SpdPreconditioner::build(&a).is_ic0());
    }

    #[test]
    fn unit_right_triangle_stiffness() {
        // Closed mesh needed for build_mesh: double-sided triangle pair is
        // non-manifold-free (each edge has two faces with opposite direction).
        let p = vec![
            Vec3::new(0., 0., 0.),
            Vec3::new(1., 0., 0.),
            Vec3::new(0., 1., 0.),
        ];
        let mesh = build_mesh(p.clone(), vec![[0, 1, 2], [0, 2, 1]]).unwrap();
        let single = build_mesh(p, vec![[0, 1, 2], [0, 2, 1]]).unwrap();
        let cache = single.recompute_cache();
        let (m, k) = assemble_p1_scalar(&mesh, mesh.positions(), &cache).unwrap();
        // Both faces contribute identically, so halve.
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((0.5 * k.get(i, j) - expected[i][j]).abs() < 1e-14);
            }
            let row_sum: f64 = (0..3).map(|j| 0.5 * m.get(i, j)).sum();
            assert!((row_sum - 0.5 / 3.0).abs() < 1e-14);
        }
    }
}
