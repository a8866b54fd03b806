//! The augmented Lagrangian and its first and second derivatives with
//! respect to vertex positions.
//!
//! For fixed splitting variables and multipliers the Lagrangian, as a
//! function of the vertex positions `X`, collapses to
//!
//! ```text
//! F₁(X) + Σ_△ [ k_△ |△| + μ/|△| − (ρ₁/2) N_△·D_△ ] + Σ_e m_e |e|
//! ```
//!
//! where `N_△ = (b − a) × (c − a) = 2|△| n_△`, `d_{△,ℓ} = g_ℓ + u_{△,ℓ} − λ_{△,ℓ}`,
//! `D_△ = Σ_ℓ d_{△,ℓ}`, and `k_△`, `m_e` collect everything that multiplies
//! area and edge length. [`ShapeModel`] holds those coefficients and evaluates
//! value, gradient and Hessian element by element.

use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::mesh::{
    triangle_cross, EdgeField, FaceField, GeometryCache, MeshError, SurfaceMesh, Vec3,
};
use crate::sparse::SparseMatrix;

type Vec9 = SVector<f64, 9>;
type Mat9 = SMatrix<f64, 9, 9>;
type Mat3x9 = SMatrix<f64, 3, 9>;

/// How the multiplier of the `u = n − g` constraint is updated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualUpdate {
    /// `λ ← λ + n − g − u`, the scaled-dual step for the penalty
    /// `‖n − g − u + λ‖²`.
    #[default]
    Standard,
    /// `λ ← λ + n − g`, without the split variable.
    PaperLiteral,
}

/// How the multipliers enter the augmented Lagrangian.
///
/// The penalties are weighted by `|△|` and `|e|`, which depend on the vertex
/// positions, so the constant `−(ρ/2)·weight·‖multiplier‖²` that separates
/// the two forms is not constant in `X`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagrangianForm {
    /// `(ρ/2)·weight·(‖r + λ‖² − ‖λ‖²)`: at feasibility the multipliers exert
    /// no force on the vertices.
    #[default]
    Standard,
    /// `(ρ/2)·weight·‖r + λ‖²` only.
    Scaled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub c_inner: f64,
    pub admm_tol: f64,
    pub admm_max_iters: usize,
    /// Looser values, e.g. 1e-2, leave φ errors the multipliers keep
    /// integrating; the outer iteration can then stall or diverge.
    pub cg_rtol_phi: f64,
    /// 0 selects ten times the number of faces.
    pub cg_max_iters_phi: usize,
    pub newton_rtol: f64,
    /// 0 selects ten times the number of unknowns.
    pub newton_max_cg_iters: usize,
    pub newton_steps: usize,
    pub armijo_c1: f64,
    pub armijo_shrink: f64,
    pub armijo_max_trials: usize,
    pub dual_update: DualUpdate,
    pub lagrangian_form: LagrangianForm,
    pub exec: Exec,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::skyline()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter {name} = {value} is invalid: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

impl ModelParams {
    fn with_weights(alpha: f64, beta: f64, mu: f64, rho: [f64; 3], c_inner: f64) -> Self {
        Self {
            alpha,
            beta,
            mu,
            rho1: rho[0],
            rho2: rho[1],
            rho3: rho[2],
            c_inner,
            admm_tol: 1e-6,
            admm_max_iters: 5000,
            cg_rtol_phi: 1e-8,
            cg_max_iters_phi: 0,
            newton_rtol: 1e-2,
            newton_max_cg_iters: 0,
            newton_steps: 1,
            armijo_c1: 1e-4,
            armijo_shrink: 0.5,
            armijo_max_trials: 30,
            dual_update: DualUpdate::Standard,
            lagrangian_form: LagrangianForm::Standard,
            exec: Exec::default(),
        }
    }

    /// Sphere experiment weights. `rho` is 0.2 for `α = 0.1`, 2 for
    /// `α = 0.3`, and 2 or 10 for `α = 1` depending on `β`.
    pub fn sphere(alpha: f64, beta: f64) -> Self {
        let rho = if alpha <= 0.1 {
            0.2
        } else if alpha < 1.0 || beta < 0.1 {
            2.0
        } else {
            10.0
        };
        Self::with_weights(alpha, beta, 1e-6, [rho; 3], 0.1)
    }

    /// Sphere-to-platonic-solid deformation weights.
    pub fn platonic() -> Self {
        Self::with_weights(20.0, 0.001, 1e-5, [1000.0, 10.0, 1000.0], 0.1)
    }

    /// City skyline denoising weights.
    pub fn skyline() -> Self {
        Self::with_weights(1.0, 1e-8, 1e-7, [12.5, 1.25, 12.5], 0.3)
    }

    /// 1 if the multiplier norms are subtracted from the penalties, else 0.
    pub fn multiplier_shift(&self) -> f64 {
        match self.lagrangian_form {
            LagrangianForm::Standard => 1.0,
            LagrangianForm::Scaled => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let nonneg = [("alpha", self.alpha), ("beta", self.beta), ("mu", self.mu)];
        for (name, value) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ParamError::Invalid {
                    name,
                    value,
                    reason: "must be finite and nonnegative",
                });
            }
        }
        let positive = [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
            ("c_inner", self.c_inner),
            ("cg_rtol_phi", self.cg_rtol_phi),
            ("newton_rtol", self.newton_rtol),
            ("armijo_c1", self.armijo_c1),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError::Invalid {
                    name,
                    value,
                    reason: "must be finite and positive",
                });
            }
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(ParamError::Invalid {
                name: "armijo_shrink",
                value: self.armijo_shrink,
                reason: "must lie in (0, 1)",
            });
        }
        if !(self.admm_tol >= 0.0) {
            return Err(ParamError::Invalid {
                name: "admm_tol",
                value: self.admm_tol,
                reason: "must be nonnegative",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("label set is empty")]
    Empty,
    #[error("label {index} has norm {norm}, expected 1")]
    NotUnit { index: usize, norm: f64 },
}

/// Preferred unit normals `g_ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSet {
    labels: Vec<Vec3>,
}

impl LabelSet {
    pub fn new(labels: Vec<Vec3>) -> Result<Self, LabelError> {
        if labels.is_empty() {
            return Err(LabelError::Empty);
        }
        for (index, g) in labels.iter().enumerate() {
            let norm = g.norm();
            if !((norm - 1.0).abs() <= 1e-12) {
                return Err(LabelError::NotUnit { index, norm });
            }
        }
        Ok(Self { labels })
    }

    /// Normalizes every vector; fails only on zero or non-finite input.
    pub fn normalized(labels: Vec<Vec3>) -> Result<Self, LabelError> {
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(index, g)| {
                let norm = g.norm();
                if norm > 0.0 && norm.is_finite() {
                    Ok(g / norm)
                } else {
                    Err(LabelError::NotUnit { index, norm })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, l: usize) -> &Vec3 {
        &self.labels[l]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec3> {
        self.labels.iter()
    }

    pub fn as_slice(&self) -> &[Vec3] {
        &self.labels
    }
}

/// All eight ADMM iteration variables.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub positions: Vec<Vec3>,
    /// Assignment, `L` per face.
    pub phi: FaceField,
    /// Split of `n − g`, `3L` per face.
    pub u: FaceField,
    /// Split of the assignment jumps, `L` per edge.
    pub v: EdgeField,
    /// Split of `φ` constrained to the simplex, `L` per face.
    pub w: FaceField,
    pub lambda: FaceField,
    pub eta: EdgeField,
    pub tau: FaceField,
}

impl AdmmState {
    /// Uniform assignment, exact splits, zero multipliers.
    pub fn initial(mesh: &SurfaceMesh, positions: Vec<Vec3>, labels: &LabelSet) -> Self {
        let nf = mesh.num_faces();
        let nl = labels.len();
        let cache = GeometryCache::compute(mesh, &positions);
        let phi = FaceField::filled(nf, nl, 1.0 / nl as f64);
        let mut u = FaceField::zeros(nf, 3 * nl);
        for f in 0..nf {
            for (l, g) in labels.iter().enumerate() {
                u.set_vec3(f, l, &(cache.face_normal[f] - g));
            }
        }
        let mut v = EdgeField::zeros(mesh.num_edges(), nl);
        for (e, edge) in mesh.edges().iter().enumerate() {
            for l in 0..nl {
                v.row_mut(e)[l] = phi.row(edge.face_plus)[l] - phi.row(edge.face_minus)[l];
            }
        }
        Self {
            positions,
            w: phi.clone(),
            phi,
            u,
            v,
            lambda: FaceField::zeros(nf, 3 * nl),
            eta: EdgeField::zeros(mesh.num_edges(), nl),
            tau: FaceField::zeros(nf, nl),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.phi.width()
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .all(|p| p.iter().all(|x| x.is_finite()))
            && [
                &self.phi,
                &self.u,
                &self.v,
                &self.w,
                &self.lambda,
                &self.eta,
                &self.tau,
            ]
            .iter()
            .all(|f| f.is_finite())
    }
}

pub fn fidelity_f1(x: &[Vec3], x_data: &[Vec3]) -> f64 {
    assert_eq!(x.len(), x_data.len());
    x.iter()
        .zip(x_data)
        .map(|(a, b)| (a - b).norm_squared())
        .sum()
}

pub fn fidelity_f2(cache: &GeometryCache) -> Result<f64, MeshError> {
    let mut total = 0.0;
    for (face, &area) in cache.face_area.iter().enumerate() {
        if !(area > 0.0) {
            return Err(MeshError::DegenerateFace { face, area });
        }
        total += 1.0 / area;
    }
    Ok(total)
}

fn jump(state: &AdmmState, mesh: &SurfaceMesh, e: usize, l: usize) -> f64 {
    let edge = &mesh.edges()[e];
    state.phi.row(edge.face_plus)[l] - state.phi.row(edge.face_minus)[l]
}

/// Value of the augmented Lagrangian, term by term. The simplex indicator on
/// `w` is taken as zero.
pub fn augmented_lagrangian(
    state: &AdmmState,
    mesh: &SurfaceMesh,
    cache: &GeometryCache,
    labels: &LabelSet,
    params: &ModelParams,
    x_data: &[Vec3],
) -> Result<f64, MeshError> {
    let nl = labels.len();
    let shift = params.multiplier_shift();
    let fidelity = fidelity_f1(&state.positions, x_data) + params.mu * fidelity_f2(cache)?;
    let face_terms = params.exec.map(mesh.num_faces(), |f| {
        let area = cache.face_area[f];
        let n = cache.face_normal[f];
        let phi = state.phi.row(f);
        let (mut assign, mut pen1) = (0.0, 0.0);
        for (l, g) in labels.iter().enumerate() {
            let u = state.u.vec3(f, l);
            let lambda = state.lambda.vec3(f, l);
            assign += phi[l] * u.norm();
            pen1 += (n - g - u + lambda).norm_squared() - shift * lambda.norm_squared();
        }
        let pen3: f64 = (0..nl)
            .map(|l| {
                let tau = state.tau.row(f)[l];
                (phi[l] - state.w.row(f)[l] + tau).powi(2) - shift * tau * tau
            })
            .sum();
        area * (params.alpha * assign + 0.5 * params.rho1 * pen1 + 0.5 * params.rho3 * pen3)
    });
    let edge_terms = params.exec.map(mesh.num_edges(), |e| {
        let len = cache.edge_length[e];
        let v = state.v.row(e);
        let eta = state.eta.row(e);
        let tv: f64 = v.iter().map(|x| x.abs()).sum();
        let pen2: f64 = (0..nl)
            .map(|l| (jump(state, mesh, e, l) - v[l] + eta[l]).powi(2) - shift * eta[l] * eta[l])
            .sum();
        len * (params.beta * tv + 0.5 * params.rho2 * pen2)
    });
    Ok(fidelity + face_terms.iter().sum::<f64>() + edge_terms.iter().sum::<f64>())
}

/// Model objective `F₁ + μF₂ + α Σ|△| Σ φ‖n − g‖ + β Σ|e| ‖φ⁺ − φ⁻‖₁`
/// evaluated at the current assignment.
pub fn model_objective(
    state: &AdmmState,
    mesh: &SurfaceMesh,
    cache: &GeometryCache,
    labels: &LabelSet,
    params: &ModelParams,
    x_data: &[Vec3],
) -> Result<f64, MeshError> {
    let nl = labels.len();
    let fidelity = fidelity_f1(&state.positions, x_data) + params.mu * fidelity_f2(cache)?;
    let assign: f64 = (0..mesh.num_faces())
        .map(|f| {
            let n = cache.face_normal[f];
            let phi = state.phi.row(f);
            cache.face_area[f]
                * labels
                    .iter()
                    .enumerate()
                    .map(|(l, g)| phi[l] * (n - g).norm())
                    .sum::<f64>()
        })
        .sum();
    let tv: f64 = (0..mesh.num_edges())
        .map(|e| cache.edge_length[e] * (0..nl).map(|l| jump(state, mesh, e, l).abs()).sum::<f64>())
        .sum();
    Ok(fidelity + params.alpha * assign + params.beta * tv)
}

/// Position-independent coefficients of the Lagrangian as a function of `X`.
#[derive(Clone, Debug)]
pub struct ShapeModel<'a> {
    mesh: &'a SurfaceMesh,
    x_data: &'a [Vec3],
    mu: f64,
    rho1: f64,
    exec: Exec,
    /// Multiplies `|△|`.
    face_area_coef: Vec<f64>,
    /// `Σ_ℓ (g_ℓ + u_{△,ℓ} − λ_{△,ℓ})`.
    face_direction: Vec<Vec3>,
    /// Multiplies `|e|`.
    edge_length_coef: Vec<f64>,
}

fn cross_matrix(v: &Vec3) -> Matrix3<f64> {
    v.cross_matrix()
}

/// Jacobian of `N = (b − a) × (c − a)` with respect to `(a, b, c)`.
fn cross_jacobian(x: &[Vec3; 3]) -> Mat3x9 {
    let mut j = Mat3x9::zeros();
    for i in 0..3 {
        let d = x[(i + 2) % 3] - x[(i + 1) % 3];
        j.fixed_view_mut::<3, 3>(0, 3 * i)
            .copy_from(&cross_matrix(&d));
    }
    j
}

/// Hessian of `N·D` with respect to `(a, b, c)` for fixed `D`.
fn cross_hessian(d: &Vec3) -> Mat9 {
    let dx = cross_matrix(d);
    let mut h = Mat9::zeros();
    for i in 0..3 {
        h.fixed_view_mut::<3, 3>(3 * i, 3 * ((i + 1) % 3))
            .copy_from(&(-dx));
        h.fixed_view_mut::<3, 3>(3 * i, 3 * ((i + 2) % 3))
            .copy_from(&dx);
    }
    h
}

struct FaceLocal {
    value: f64,
    grad: Vec9,
    hess: Option<Mat9>,
}

impl<'a> ShapeModel<'a> {
    pub fn new(
        state: &AdmmState,
        mesh: &'a SurfaceMesh,
        labels: &LabelSet,
        params: &ModelParams,
        x_data: &'a [Vec3],
    ) -> Self {
        let nl = labels.len();
        let shift = params.multiplier_shift();
        let per_face = params.exec.map(mesh.num_faces(), |f| {
            let phi = state.phi.row(f);
            let mut assign = 0.0;
            let mut squares = 0.0;
            let mut direction = Vec3::zeros();
            for (l, g) in labels.iter().enumerate() {
                let u = state.u.vec3(f, l);
                let lambda = state.lambda.vec3(f, l);
                let d = g + u - lambda;
                assign += phi[l] * u.norm();
                squares += 1.0 + d.norm_squared() - shift * lambda.norm_squared();
                direction += d;
            }
            let pen3: f64 = (0..nl)
                .map(|l| {
                    let tau = state.tau.row(f)[l];
                    (phi[l] - state.w.row(f)[l] + tau).powi(2) - shift * tau * tau
                })
                .sum();
            let coef =
                params.alpha * assign + 0.5 * params.rho1 * squares + 0.5 * params.rho3 * pen3;
            (coef, direction)
        });
        let edge_length_coef = params.exec.map(mesh.num_edges(), |e| {
            let v = state.v.row(e);
            let eta = state.eta.row(e);
            let tv: f64 = v.iter().map(|x| x.abs()).sum();
            let pen2: f64 = (0..nl)
                .map(|l| {
                    (jump(state, mesh, e, l) - v[l] + eta[l]).powi(2) - shift * eta[l] * eta[l]
                })
                .sum();
            params.beta * tv + 0.5 * params.rho2 * pen2
        });
        let (face_area_coef, face_direction) = per_face.into_iter().unzip();
        Self {
            mesh,
            x_data,
            mu: params.mu,
            rho1: params.rho1,
            exec: params.exec,
            face_area_coef,
            face_direction,
            edge_length_coef,
        }
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        self.mesh
    }

    fn face_local(&self, positions: &[Vec3], f: usize, with_hessian: bool) -> FaceLocal {
        let [a, b, c] = self.mesh.corners(positions, f);
        let x = [*a, *b, *c];
        let n = triangle_cross(a, b, c);
        let r = n.norm();
        let area = 0.5 * r;
        let k = self.face_area_coef[f];
        let d = self.face_direction[f];
        let value = k * area + self.mu / area - 0.5 * self.rho1 * n.dot(&d);

        let jac = cross_jacobian(&x);
        let jt_n: Vec9 = jac.transpose() * n;
        let grad_area = jt_n / (2.0 * r);
        let slope = k - self.mu / (area * area);
        let grad = grad_area * slope - jac.transpose() * d * (0.5 * self.rho1);

        let hess = with_hessian.then(|| {
            let hess_area = (jac.transpose() * jac + cross_hessian(&n)) / (2.0 * r)
                - jt_n * jt_n.transpose() / (2.0 * r * r * r);
            let curvature = 2.0 * self.mu / (area * area * area);
            hess_area * slope + grad_area * grad_area.transpose() * curvature
                - cross_hessian(&d) * (0.5 * self.rho1)
        });
        FaceLocal { value, grad, hess }
    }

    /// Lagrangian at `positions`; `+∞` if any face is degenerate.
    pub fn value(&self, positions: &[Vec3]) -> f64 {
        let mesh = self.mesh;
        let faces = self.exec.map(mesh.num_faces(), |f| {
            let [a, b, c] = mesh.corners(positions, f);
            let n = triangle_cross(a, b, c);
            let area = 0.5 * n.norm();
            if !(area > 0.0) {
                return f64::INFINITY;
            }
            self.face_area_coef[f] * area + self.mu / area
                - 0.5 * self.rho1 * n.dot(&self.face_direction[f])
        });
        let edges: f64 = mesh
            .edges()
            .iter()
            .zip(&self.edge_length_coef)
            .map(|(e, m)| m * (positions[e.endpoints[0]] - positions[e.endpoints[1]]).norm())
            .sum();
        fidelity_f1(positions, self.x_data) + faces.iter().sum::<f64>() + edges
    }

    fn check_areas(&self, positions: &[Vec3]) -> Result<(), MeshError> {
        for f in 0..self.mesh.num_faces() {
            let [a, b, c] = self.mesh.corners(positions, f);
            let area = 0.5 * triangle_cross(a, b, c).norm();
            if !(area > 0.0) {
                return Err(MeshError::DegenerateFace { face: f, area });
            }
        }
        Ok(())
    }

    /// Gradient, interleaved per vertex (`3v + k`).
    pub fn gradient(&self, positions: &[Vec3]) -> Result<Vec<f64>, MeshError> {
        self.check_areas(positions)?;
        let mesh = self.mesh;
        let mut g = vec![0.0; 3 * mesh.num_vertices()];
        for (v, (x, xd)) in positions.iter().zip(self.x_data).enumerate() {
            for k in 0..3 {
                g[3 * v + k] = 2.0 * (x[k] - xd[k]);
            }
        }
        let locals = self.exec.map(mesh.num_faces(), |f| {
            self.face_local(positions, f, false).grad
        });
        for (f, local) in locals.iter().enumerate() {
            for (i, &v) in mesh.faces()[f].iter().enumerate() {
                for k in 0..3 {
                    g[3 * v + k] += local[3 * i + k];
                }
            }
        }
        for (e, edge) in mesh.edges().iter().enumerate() {
            let [a, b] = edge.endpoints;
            let t = positions[b] - positions[a];
            let t = t * (self.edge_length_coef[e] / t.norm());
            for k in 0..3 {
                g[3 * a + k] -= t[k];
                g[3 * b + k] += t[k];
            }
        }
        Ok(g)
    }

    /// Value and gradient in one pass.
    pub fn value_and_gradient(&self, positions: &[Vec3]) -> Result<(f64, Vec<f64>), MeshError> {
        let g = self.gradient(positions)?;
        Ok((self.value(positions), g))
    }

    /// Exact Hessian, `3|V| × 3|V|`, interleaved per vertex.
    pub fn hessian(&self, positions: &[Vec3]) -> Result<SparseMatrix, MeshError> {
        self.check_areas(positions)?;
        let mesh = self.mesh;
        let n = 3 * mesh.num_vertices();
        let mut triplets = Vec::with_capacity(81 * mesh.num_faces() + 36 * mesh.num_edges() + n);
        for i in 0..n {
            triplets.push((i, i, 2.0));
        }
        let locals = self.exec.map(mesh.num_faces(), |f| {
            self.face_local(positions, f, true).hess.expect("requested")
        });
        for (f, h) in locals.iter().enumerate() {
            let tri = mesh.faces()[f];
            for i in 0..3 {
                for j in 0..3 {
                    for r in 0..3 {
                        for c in 0..3 {
                            triplets.push((
                                3 * tri[i] + r,
                                3 * tri[j] + c,
                                h[(3 * i + r, 3 * j + c)],
                            ));
                        }
                    }
                }
            }
        }
        for (e, edge) in mesh.edges().iter().enumerate() {
            let [a, b] = edge.endpoints;
            let d = positions[b] - positions[a];
            let len = d.norm();
            let t = d / len;
            let p = (Matrix3::identity() - t * t.transpose()) * (self.edge_length_coef[e] / len);
            for r in 0..3 {
                for c in 0..3 {
                    let x = p[(r, c)];
                    triplets.push((3 * a + r, 3 * a + c, x));
                    triplets.push((3 * b + r, 3 * b + c, x));
                    triplets.push((3 * a + r, 3 * b + c, -x));
                    triplets.push((3 * b + r, 3 * a + c, -x));
                }
            }
        }
        Ok(SparseMatrix::from_triplets(n, n, &triplets))
    }

    /// Value computed element by element from the same kernel as the
    /// derivatives; equals [`ShapeModel::value`] on nondegenerate meshes.
    pub fn kernel_value(&self, positions: &[Vec3]) -> f64 {
        let faces: f64 = (0..self.mesh.num_faces())
            .map(|f| self.face_local(positions, f, false).value)
            .sum();
        let edges: f64 = self
            .mesh
            .edges()
            .iter()
            .zip(&self.edge_length_coef)
            .map(|(e, m)| m * (positions[e.endpoints[0]] - positions[e.endpoints[1]]).norm())
            .sum();
        fidelity_f1(positions, self.x_data) + faces + edges
    }
}

/// Derivative of [`augmented_lagrangian`] with respect to the vertex
/// positions of `state`, interleaved per vertex.
pub fn shape_gradient(
    state: &AdmmState,
    mesh: &SurfaceMesh,
    labels: &LabelSet,
    params: &ModelParams,
    x_data: &[Vec3],
) -> Result<Vec<f64>, MeshError> {
    ShapeModel::new(state, mesh, labels, params, x_data).gradient(&state.positions)
}

pub fn shape_hessian(
    state: &AdmmState,
    mesh: &SurfaceMesh,
    labels: &LabelSet,
    params: &ModelParams,
    x_data: &[Vec3],
) -> Result<SparseMatrix, MeshError> {
    ShapeModel::new(state, mesh, labels, params, x_data).hessian(&state.positions)
}
