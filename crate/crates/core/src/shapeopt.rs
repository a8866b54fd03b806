//! Vertex-position update: one globalized shape-Newton step on the augmented
//! Lagrangian.
//!
//! The Newton system is solved by truncated CG preconditioned with IC(0) of
//! the deformation inner-product matrix `M + cK`. The Newton direction is
//! kept if it passes an angle test against the Riesz representative of the
//! gradient in that inner product, otherwise the Riesz gradient is used. An
//! Armijo backtracking search then picks the step, rejecting steps that
//! shrink a face below an area floor or flip a face normal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{AdmmState, LabelSet, ModelParams, ShapeModel};
use crate::mesh::{triangle_cross, GeometryCache, MeshError, SurfaceMesh, Vec3};
use crate::sparse::{
    cg_solve, default_max_iters, inner_product_matrix, truncated_cg, Blockwise, CgReport,
    Preconditioner, SolverError, SparseMatrix, SpdPreconditioner, Termination,
};

/// Angle-test constant for accepting the Newton direction.
pub const DESCENT_ANGLE: f64 = 1e-4;

/// Relative tolerance of the Riesz gradient solve.
const RIESZ_RTOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ShapeOptError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("no admissible step size after {trials} trials")]
    LineSearchFailed { trials: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    Newton,
    GradientFallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Accepted,
    /// Gradient vanished; nothing to do.
    Stationary,
    LineSearchFailed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepReport {
    pub direction_kind: DirectionKind,
    pub status: StepStatus,
    /// Accepted step size, 0 if the step was rejected.
    pub step_size: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub trials: usize,
    pub min_face_area_after: f64,
    pub cg_iterations: usize,
    pub cg_termination: Termination,
}

/// Guards applied to every trial point of the line search.
#[derive(Clone, Debug)]
pub struct StepGuard<'a> {
    pub min_face_area: f64,
    /// Face normals before the step; trial points may not turn any face by
    /// more than 90 degrees.
    pub reference_normals: &'a [Vec3],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_k x_kᵀ S x_k` over the three interleaved coordinate blocks.
pub fn blockwise_quadratic(s: &SparseMatrix, x: &[f64]) -> f64 {
    let n = s.nrows();
    let mut total = 0.0;
    let mut xc = vec![0.0; n];
    for k in 0..3 {
        for i in 0..n {
            xc[i] = x[3 * i + k];
        }
        total += dot(&xc, &s.mul_vec(&xc));
    }
    total
}

/// Approximately solves `H θ = −g` by truncated CG.
pub fn newton_direction(
    hessian: &SparseMatrix,
    gradient: &[f64],
    preconditioner: Option<&dyn Preconditioner>,
    rtol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, CgReport), SolverError> {
    let rhs: Vec<f64> = gradient.iter().map(|g| -g).collect();
    let report = truncated_cg(hessian, &rhs, rtol, max_iters, preconditioner)?;
    Ok((report.solution.clone(), report))
}

/// Solves `(M + cK) d = −g` per coordinate.
pub fn riesz_gradient(
    inner: &SparseMatrix,
    preconditioner: &dyn Preconditioner,
    gradient: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let n = inner.nrows();
    let mut d = vec![0.0; 3 * n];
    let mut rhs = vec![0.0; n];
    for k in 0..3 {
        for i in 0..n {
            rhs[i] = -gradient[3 * i + k];
        }
        let report = cg_solve(
            inner,
            &rhs,
            RIESZ_RTOL,
            default_max_iters(n),
            Some(preconditioner),
        )?;
        for i in 0..n {
            d[3 * i + k] = report.solution[i];
        }
    }
    Ok(d)
}

/// Picks the Newton direction if `θᵀ(−g) ≥ κ ‖θ‖_S ‖d‖_S` with `d` the Riesz
/// gradient, otherwise `d`.
pub fn choose_direction(
    newton: Vec<f64>,
    gradient: &[f64],
    inner: &SparseMatrix,
    riesz: Vec<f64>,
) -> (Vec<f64>, DirectionKind) {
    let finite = newton.iter().all(|x| x.is_finite());
    if finite {
        let descent = -dot(&newton, gradient);
        let newton_norm = blockwise_quadratic(inner, &newton).max(0.0).sqrt();
        let riesz_norm = blockwise_quadratic(inner, &riesz).max(0.0).sqrt();
        if descent > 0.0 && descent >= DESCENT_ANGLE * newton_norm * riesz_norm {
            return (newton, DirectionKind::Newton);
        }
    }
    (riesz, DirectionKind::GradientFallback)
}

fn min_area_and_flip(mesh: &SurfaceMesh, positions: &[Vec3], reference: &[Vec3]) -> (f64, bool) {
    let mut min_area = f64::INFINITY;
    let mut flipped = false;
    for f in 0..mesh.num_faces() {
        let [a, b, c] = mesh.corners(positions, f);
        let n = triangle_cross(a, b, c);
        min_area = min_area.min(0.5 * n.norm());
        flipped |= n.dot(&reference[f]) <= 0.0;
    }
    (min_area, flipped)
}

pub fn displaced(positions: &[Vec3], direction: &[f64], t: f64) -> Vec<Vec3> {
    positions
        .iter()
        .enumerate()
        .map(|(v, p)| {
            p + Vec3::new(direction[3 * v], direction[3 * v + 1], direction[3 * v + 2]) * t
        })
        .collect()
}

pub struct LineSearchOutcome {
    pub positions: Vec<Vec3>,
    pub step_size: f64,
    pub value: f64,
    pub trials: usize,
    pub min_face_area: f64,
}

/// Backtracking over `t = 1, s, s², …` until sufficient decrease holds and
/// the trial mesh passes `guard`.
pub fn armijo_search(
    model: &ShapeModel<'_>,
    positions: &[Vec3],
    value: f64,
    gradient: &[f64],
    direction: &[f64],
    guard: &StepGuard<'_>,
    params: &ModelParams,
) -> Result<LineSearchOutcome, ShapeOptError> {
    let slope = dot(gradient, direction);
    let mut t = 1.0;
    for trial in 1..=params.armijo_max_trials {
        let candidate = displaced(positions, direction, t);
        let (min_area, flipped) =
            min_area_and_flip(model.mesh(), &candidate, guard.reference_normals);
        if !flipped && min_area >= guard.min_face_area {
            let new_value = model.value(&candidate);
            if new_value.is_finite()
                && new_value < value
                && new_value <= value + params.armijo_c1 * t * slope
            {
                return Ok(LineSearchOutcome {
                    positions: candidate,
                    step_size: t,
                    value: new_value,
                    trials: trial,
                    min_face_area: min_area,
                });
            }
        }
        t *= params.armijo_shrink;
    }
    Err(ShapeOptError::LineSearchFailed {
        trials: params.armijo_max_trials,
    })
}

/// Runs `params.newton_steps` globalized Newton steps on the vertex
/// positions of `state`, in place. Returns the report of the last step.
pub fn shape_step(
    state: &mut AdmmState,
    mesh: &SurfaceMesh,
    labels: &LabelSet,
    params: &ModelParams,
    x_data: &[Vec3],
    min_face_area: f64,
) -> Result<StepReport, ShapeOptError> {
    let model = ShapeModel::new(state, mesh, labels, params, x_data);
    let mut last = None;
    for _ in 0..params.newton_steps.max(1) {
        let report = single_step(&model, state, mesh, params, min_face_area)?;
        let stop = report.status != StepStatus::Accepted;
        last = Some(report);
        if stop {
            break;
        }
    }
    Ok(last.expect("at least one step"))
}

fn single_step(
    model: &ShapeModel<'_>,
    state: &mut AdmmState,
    mesh: &SurfaceMesh,
    params: &ModelParams,
    min_face_area: f64,
) -> Result<StepReport, ShapeOptError> {
    let positions = &state.positions;
    let cache = GeometryCache::compute(mesh, positions);
    let (value, gradient) = model.value_and_gradient(positions)?;
    let base = StepReport {
        direction_kind: DirectionKind::Newton,
        status: StepStatus::Stationary,
        step_size: 0.0,
        objective_before: value,
        objective_after: value,
        trials: 0,
        min_face_area_after: cache.min_face_area(),
        cg_iterations: 0,
        cg_termination: Termination::Converged,
    };
    if gradient.iter().all(|&g| g == 0.0) {
        return Ok(base);
    }

    let hessian = model.hessian(positions)?;
    let inner = inner_product_matrix(mesh, positions, &cache, params.c_inner)?;
    let scalar_pc = SpdPreconditioner::build(&inner);
    let block_pc = Blockwise {
        inner: &scalar_pc,
        components: 3,
    };
    let max_cg = if params.newton_max_cg_iters == 0 {
        default_max_iters(gradient.len())
    } else {
        params.newton_max_cg_iters
    };
    let (newton, cg) = match newton_direction(
        &hessian,
        &gradient,
        Some(&block_pc),
        params.newton_rtol,
        max_cg,
    ) {
        Ok(r) => (r.0, Some(r.1)),
        Err(_) => (vec![f64::NAN; gradient.len()], None),
    };
    let riesz = riesz_gradient(&inner, &scalar_pc, &gradient)?;
    let (direction, kind) = choose_direction(newton, &gradient, &inner, riesz);

    let guard = StepGuard {
        min_face_area,
        reference_normals: &cache.face_normal,
    };
    let mut report = StepReport {
        direction_kind: kind,
        cg_iterations: cg.as_ref().map_or(0, |c| c.iterations),
        cg_termination: cg.as_ref().map_or(Termination::MaxIters, |c| c.termination),
        ..base
    };
    match armijo_search(
        model, positions, value, &gradient, &direction, &guard, params,
    ) {
        Ok(outcome) => {
            report.status = StepStatus::Accepted;
            report.step_size = outcome.step_size;
            report.objective_after = outcome.value;
            report.trials = outcome.trials;
            report.min_face_area_after = outcome.min_face_area;
            state.positions = outcome.positions;
        }
        Err(ShapeOptError::LineSearchFailed { trials }) => {
            report.status = StepStatus::LineSearchFailed;
            report.trials = trials;
        }
        Err(e) => return Err(e),
    }
    Ok(report)
}
