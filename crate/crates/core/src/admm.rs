//! The outer ADMM loop: u, v, w, φ, X updates followed by the multiplier
//! steps, with a per-variable stopping test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::energy::AdmmState;
use crate::energy::{augmented_lagrangian, model_objective, DualUpdate, LabelSet, ModelParams};
use crate::mesh::{FaceField, GeometryCache, MeshError, SurfaceMesh, Vec3};
use crate::prox::{u_update, v_update, w_update};
use crate::shapeopt::{shape_step, DirectionKind, ShapeOptError, StepStatus};
use crate::sparse::{cg_solve, default_max_iters, Jacobi, SolverError, SparseMatrix};

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("invalid parameters: {0}")]
    Params(#[from] crate::energy::ParamError),
    #[error("state does not match the mesh: {0}")]
    Shape(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("vertex update failed: {0}")]
    VertexUpdate(#[from] ShapeOptError),
    /// `last_good` is the state at the end of the previous iteration.
    #[error("non-finite state in iteration {iteration}")]
    NonFiniteState {
        iteration: usize,
        last_good: Box<AdmmState>,
    },
}

/// Infinity-norm change of each of the eight iteration variables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VariableDeltas {
    pub positions: f64,
    pub phi: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub lambda: f64,
    pub eta: f64,
    pub tau: f64,
}

impl VariableDeltas {
    pub fn max(&self) -> f64 {
        [
            self.positions,
            self.phi,
            self.u,
            self.v,
            self.w,
            self.lambda,
            self.eta,
            self.tau,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Max-norm residuals of the three splitting constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max ‖n − g − u‖₂` over faces and labels.
    pub u: f64,
    /// `max |φ⁺ − φ⁻ − v|` over edges and labels.
    pub v: f64,
    /// `max |φ − w|` over faces and labels.
    pub w: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.u.max(self.v).max(self.w)
    }
}

/// One record per outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub augmented_lagrangian: f64,
    pub objective: f64,
    pub residuals: Residuals,
    pub deltas: VariableDeltas,
    pub labels_used: usize,
    pub min_face_area: f64,
    pub phi_cg_iterations: usize,
    pub direction: DirectionKind,
    pub step_status: StepStatus,
    pub step_size: f64,
    pub line_search_trials: usize,
    pub newton_cg_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: AdmmState,
    pub metrics: Vec<IterationMetrics>,
    pub converged: bool,
    pub line_search_failures: usize,
}

/// Face-adjacency system `ρ₂·Lap + ρ₃·diag(|△|)`, weighted by edge length.
pub fn phi_system_matrix(
    mesh: &SurfaceMesh,
    cache: &GeometryCache,
    params: &ModelParams,
) -> SparseMatrix {
    let nf = mesh.num_faces();
    let mut t = Vec::with_capacity(nf + 4 * mesh.num_edges());
    for f in 0..nf {
        t.push((f, f, params.rho3 * cache.face_area[f]));
    }
    for (e, edge) in mesh.edges().iter().enumerate() {
        let w = params.rho2 * cache.edge_length[e];
        let (p, m) = (edge.face_plus, edge.face_minus);
        t.extend([(p, p, w), (m, m, w), (p, m, -w), (m, p, -w)]);
    }
    SparseMatrix::from_triplets(nf, nf, &t)
}

/// Right-hand side of the φ-system for label `l`.
pub fn phi_rhs(
    state: &AdmmState,
    mesh: &SurfaceMesh,
    cache: &GeometryCache,
    params: &ModelParams,
    l: usize,
) -> Vec<f64> {
    let mut b: Vec<f64> = (0..mesh.num_faces())
        .map(|f| {
            let area = cache.face_area[f];
            -params.alpha * area * state.u.vec3(f, l).norm()
                + params.rho3 * area * (state.w.row(f)[l] - state.tau.row(f)[l])
        })
        .collect();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let s = params.rho2 * cache.edge_length[e] * (state.v.row(e)[l] - state.eta.row(e)[l]);
        b[edge.face_plus] += s;
        b[edge.face_minus] -= s;
    }
    b
}

/// Minimizes the Lagrangian over φ: one Jacobi-preconditioned CG solve per
/// label, from zero, to relative tolerance `cg_rtol_phi`. Returns the new
/// assignment and the total CG iteration count.
pub fn phi_solve(
    state: &AdmmState,
    mesh: &SurfaceMesh,
    cache: &GeometryCache,
    params: &ModelParams,
) -> Result<(FaceField, usize), SolverError> {
    let nf = mesh.num_faces();
    let nl = state.num_labels();
    let a = phi_system_matrix(mesh, cache, params);
    let jacobi = Jacobi::new(&a);
    let max_iters = if params.cg_max_iters_phi == 0 {
        default_max_iters(nf)
    } else {
        params.cg_max_iters_phi
    };
    let solves = params.exec.map(nl, |l| {
        let b = phi_rhs(state, mesh, cache, params, l);
        cg_solve(&a, &b, params.cg_rtol_phi, max_iters, Some(&jacobi))
    });
    let mut phi = FaceField::zeros(nf, nl);
    let mut iterations = 0;
    for (l, report) in solves.into_iter().enumerate() {
        let report = report?;
        iterations += report.iterations;
        for f in 0..nf {
            phi.row_mut(f)[l] = report.solution[f];
        }
    }
    Ok((phi, iterations))
}

/// Multiplier ascent: `λ += n − g − u` (or `n − g` in paper-literal mode),
/// `τ += φ − w`, `η += φ⁺ − φ⁻ − v`.
pub fn update_multipliers(
    state: &mut AdmmState,
    mesh: &SurfaceMesh,
    cache: &GeometryCache,
    labels: &LabelSet,
    mode: DualUpdate,
) {
    for f in 0..mesh.num_faces() {
        let n = cache.face_normal[f];
        for (l, g) in labels.iter().enumerate() {
            let mut step = n - g;
            if mode == DualUpdate::Standard {
                step -= state.u.vec3(f, l);
            }
            let lambda = state.lambda.vec3(f, l) + step;
            state.lambda.set_vec3(f, l, &lambda);
        }
        let (phi, w) = (state.phi.row(f), state.w.row(f));
        let steps: Vec<f64> = phi.iter().zip(w).map(|(p, w)| p - w).collect();
        for (t, s) in state.tau.row_mut(f).iter_mut().zip(steps) {
            *t += s;
        }
    }
    for (e, edge) in mesh.edges().iter().enumerate() {
        for l in 0..state.num_labels() {
            let jump = state.phi.row(edge.face_plus)[l] - state.phi.row(edge.face_minus)[l];
            let r = jump - state.v.row(e)[l];
            state.eta.row_mut(e)[l] += r;
        }
    }
}

fn max_position_change(a: &[Vec3], b: &[Vec3]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| (p - q).iter().map(|x| x.abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

pub fn variable_deltas(prev: &AdmmState, curr: &AdmmState) -> VariableDeltas {
    VariableDeltas {
        positions: max_position_change(&prev.positions, &curr.positions),
        phi: prev.phi.max_abs_diff(&curr.phi),
        u: prev.u.max_abs_diff(&curr.u),
        v: prev.v.max_abs_diff(&curr.v),
        w: prev.w.max_abs_diff(&curr.w),
        lambda: prev.lambda.max_abs_diff(&curr.lambda),
        eta: prev.eta.max_abs_diff(&curr.eta),
        tau: prev.tau.max_abs_diff(&curr.tau),
    }
}

/// True iff every variable changed by at most `tol` in the max norm.
pub fn check_convergence(prev: &AdmmState, curr: &AdmmState, tol: f64) -> (bool, VariableDeltas) {
    let d = variable_deltas(prev, curr);
    (d.max() <= tol, d)
}

pub fn constraint_residuals(
    state: &AdmmState,
    mesh: &SurfaceMesh,
    cache: &GeometryCache,
    labels: &LabelSet,
) -> Residuals {
    let mut r = Residuals::default();
    for f in 0..mesh.num_faces() {
        for (l, g) in labels.iter().enumerate() {
            r.u =
                r.u.max((cache.face_normal[f] - g - state.u.vec3(f, l)).norm());
            r.w = r.w.max((state.phi.row(f)[l] - state.w.row(f)[l]).abs());
        }
    }
    for (e, edge) in mesh.edges().iter().enumerate() {
        for l in 0..labels.len() {
            let jump = state.phi.row(edge.face_plus)[l] - state.phi.row(edge.face_minus)[l];
            r.v = r.v.max((jump - state.v.row(e)[l]).abs());
        }
    }
    r
}

/// Index of the largest entry of each row; ties go to the lower index.
pub fn assigned_labels(assignment: &FaceField) -> Vec<usize> {
    (0..assignment.len())
        .map(|f| {
            let row = assignment.row(f);
            let mut best = 0;
            for (l, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// Number of distinct labels that win the argmax on at least one face.
pub fn labels_used(assignment: &FaceField) -> usize {
    let mut seen = vec![false; assignment.width()];
    for l in assigned_labels(assignment) {
        seen[l] = true;
    }
    seen.into_iter().filter(|&s| s).count()
}

fn check_dimensions(
    state: &AdmmState,
    mesh: &SurfaceMesh,
    labels: &LabelSet,
) -> Result<(), AdmmError> {
    let (nf, ne, nl) = (mesh.num_faces(), mesh.num_edges(), labels.len());
    let checks = [
        (
            "positions",
            state.positions.len(),
            1,
            mesh.num_vertices(),
            1,
        ),
        ("phi", state.phi.len(), state.phi.width(), nf, nl),
        ("u", state.u.len(), state.u.width(), nf, 3 * nl),
        ("v", state.v.len(), state.v.width(), ne, nl),
        ("w", state.w.len(), state.w.width(), nf, nl),
        (
            "lambda",
            state.lambda.len(),
            state.lambda.width(),
            nf,
            3 * nl,
        ),
        ("eta", state.eta.len(), state.eta.width(), ne, nl),
        ("tau", state.tau.len(), state.tau.width(), nf, nl),
    ];
    for (name, len, width, want_len, want_width) in checks {
        if len != want_len || width != want_width {
            return Err(AdmmError::Shape(format!(
                "{name} is {len}x{width}, expected {want_len}x{want_width}"
            )));
        }
    }
    Ok(())
}

/// Runs the ADMM loop from `initial` until every variable changes by at most
/// `params.admm_tol` or `params.admm_max_iters` iterations have been done.
///
/// `on_iteration` is called once per iteration, on the calling thread.
pub fn run(
    mesh: &SurfaceMesh,
    x_data: &[Vec3],
    labels: &LabelSet,
    params: &ModelParams,
    initial: AdmmState,
    mut on_iteration: impl FnMut(&IterationMetrics),
) -> Result<RunOutcome, AdmmError> {
    params.validate()?;
    check_dimensions(&initial, mesh, labels)?;
    if x_data.len() != mesh.num_vertices() {
        return Err(AdmmError::Shape(format!(
            "data has {} vertices, mesh has {}",
            x_data.len(),
            mesh.num_vertices()
        )));
    }
    let mut state = initial;
    let initial_cache = GeometryCache::compute(mesh, &state.positions);
    let area_floor = 1e-10 * initial_cache.total_area() / mesh.num_faces() as f64;

    let mut metrics = Vec::new();
    let mut converged = false;
    let mut line_search_failures = 0;
    for iteration in 1..=params.admm_max_iters {
        let prev = state.clone();
        let cache = GeometryCache::compute(mesh, &state.positions);

        state.u = u_update(&prev, &cache, labels, params);
        state.v = v_update(&prev, mesh, params);
        state.w = w_update(&prev, params.exec);
        let (phi, phi_cg_iterations) = phi_solve(&state, mesh, &cache, params)?;
        state.phi = phi;
        let step = shape_step(&mut state, mesh, labels, params, x_data, area_floor)?;
        if step.status == StepStatus::LineSearchFailed {
            line_search_failures += 1;
        }
        let cache = GeometryCache::compute(mesh, &state.positions);
        update_multipliers(&mut state, mesh, &cache, labels, params.dual_update);

        if !state.is_finite() {
            return Err(AdmmError::NonFiniteState {
                iteration,
                last_good: Box::new(prev),
            });
        }

        let (done, deltas) = check_convergence(&prev, &state, params.admm_tol);
        let record = IterationMetrics {
            iteration,
            augmented_lagrangian: augmented_lagrangian(
                &state, mesh, &cache, labels, params, x_data,
            )?,
            objective: model_objective(&state, mesh, &cache, labels, params, x_data)?,
            residuals: constraint_residuals(&state, mesh, &cache, labels),
            deltas,
            labels_used: labels_used(&state.w),
            min_face_area: cache.min_face_area(),
            phi_cg_iterations,
            direction: step.direction_kind,
            step_status: step.status,
            step_size: step.step_size,
            line_search_trials: step.trials,
            newton_cg_iterations: step.cg_iterations,
        };
        on_iteration(&record);
        metrics.push(record);
        if done {
            converged = true;
            break;
        }
    }
    Ok(RunOutcome {
        state,
        metrics,
        converged,
        line_search_failures,
    })
}
