//! Closed-form solutions of the splitting subproblems.
//!
//! [`shrink`] is group soft-thresholding extended to negative thresholds,
//! where the problem `γ‖u‖ + ½‖u − c‖²` is non-convex but still has a
//! closed-form global minimizer. The u- and v-updates apply it per face/label
//! and per edge/label; the w-update is a Euclidean projection onto the unit
//! simplex.

use crate::admm::AdmmState;
use crate::energy::{LabelSet, ModelParams};
use crate::exec::Exec;
use crate::mesh::{EdgeField, FaceField, GeometryCache, SurfaceMesh};

#[derive(Clone, Debug, PartialEq)]
pub struct ShrinkResult {
    pub minimizer: Vec<f64>,
    /// Set when `c = 0` and `γ < 0`: every vector of norm `-γ` is a global
    /// minimizer and `fallback_dir` picked one.
    pub at_origin_tie: bool,
}

/// Global minimizer of `γ‖u‖₂ + ½‖u − c‖₂²` for any real `γ`.
///
/// `fallback_dir` must have unit length; it is only used when `c = 0`.
pub fn shrink(gamma: f64, c: &[f64], fallback_dir: &[f64]) -> ShrinkResult {
    let mut minimizer = vec![0.0; c.len()];
    let at_origin_tie = shrink_into(gamma, c, fallback_dir, &mut minimizer);
    ShrinkResult {
        minimizer,
        at_origin_tie,
    }
}

/// Allocation-free form of [`shrink`]; returns the tie flag.
pub fn shrink_into(gamma: f64, c: &[f64], fallback_dir: &[f64], out: &mut [f64]) -> bool {
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        let scale = f64::max(0.0, norm - gamma) / norm;
        for (o, x) in out.iter_mut().zip(c) {
            *o = scale * x;
        }
        false
    } else if gamma < 0.0 {
        for (o, e) in out.iter_mut().zip(fallback_dir) {
            *o = -gamma * e;
        }
        true
    } else {
        out.iter_mut().for_each(|o| *o = 0.0);
        false
    }
}

/// Scalar shrinkage `sign(c)·max{|c| − γ, 0}` for `γ ≥ 0`.
pub fn shrink_scalar(gamma: f64, c: f64) -> f64 {
    c.signum() * f64::max(c.abs() - gamma, 0.0)
}

const FALLBACK_3D: [f64; 3] = [1.0, 0.0, 0.0];

/// Per face and label: `u = shrink(α φ/ρ₁, n − g + λ)`.
///
/// `φ` is passed through unclamped, so the threshold may be negative.
pub fn u_update(
    state: &AdmmState,
    cache: &GeometryCache,
    labels: &LabelSet,
    params: &ModelParams,
) -> FaceField {
    let nl = labels.len();
    let mut u = FaceField::zeros(state.phi.len(), 3 * nl);
    params
        .exec
        .for_each_chunk(u.as_mut_slice(), 3 * nl, |f, row| {
            let n = cache.face_normal[f];
            let phi = state.phi.row(f);
            let lambda = state.lambda.row(f);
            for (l, g) in labels.iter().enumerate() {
                let c = [
                    n.x - g.x + lambda[3 * l],
                    n.y - g.y + lambda[3 * l + 1],
                    n.z - g.z + lambda[3 * l + 2],
                ];
                let gamma = params.alpha * phi[l] / params.rho1;
                shrink_into(gamma, &c, &FALLBACK_3D, &mut row[3 * l..3 * l + 3]);
            }
        });
    u
}

/// Per edge and label: `v = sign(c)·max{|c| − β/ρ₂, 0}` with
/// `c = φ⁺ − φ⁻ + η`.
pub fn v_update(state: &AdmmState, mesh: &SurfaceMesh, params: &ModelParams) -> EdgeField {
    let nl = state.phi.width();
    let threshold = params.beta / params.rho2;
    let mut v = EdgeField::zeros(mesh.num_edges(), nl);
    let edges = mesh.edges();
    params.exec.for_each_chunk(v.as_mut_slice(), nl, |e, row| {
        let plus = state.phi.row(edges[e].face_plus);
        let minus = state.phi.row(edges[e].face_minus);
        let eta = state.eta.row(e);
        for l in 0..nl {
            row[l] = shrink_scalar(threshold, plus[l] - minus[l] + eta[l]);
        }
    });
    v
}

/// Euclidean projection onto the unit simplex `{w ≥ 0, Σw = 1}`.
///
/// The result has the form `max{0, y + shift}`; the shift is found by
/// scanning the entries of `y` in decreasing order.
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    project_simplex_into(y, &mut out);
    out
}

pub fn project_simplex_into(y: &[f64], out: &mut [f64]) {
    assert!(!y.is_empty(), "cannot project onto an empty simplex");
    let mut sorted = y.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let candidate = (1.0 - cumsum) / (j + 1) as f64;
        if s + candidate > 0.0 {
            shift = candidate;
        }
    }
    for (o, &x) in out.iter_mut().zip(y) {
        *o = f64::max(0.0, x + shift);
    }
}

/// Per face: `w = proj(φ + τ)`.
pub fn w_update(state: &AdmmState, exec: Exec) -> FaceField {
    let nl = state.phi.width();
    let mut w = FaceField::zeros(state.phi.len(), nl);
    exec.for_each_chunk(w.as_mut_slice(), nl, |f, row| {
        let y: Vec<f64> = state
            .phi
            .row(f)
            .iter()
            .zip(state.tau.row(f))
            .map(|(p, t)| p + t)
            .collect();
        project_simplex_into(&y, row);
    });
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn objective(gamma: f64, c: &[f64], u: &[f64]) -> f64 {
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dist: f64 = u.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        gamma * norm + 0.5 * dist
    }

    /// Grid search over a box around `c`, step `h`.
    fn grid_min(gamma: f64, c: &[f64], half_width: f64, h: f64) -> (f64, Vec<f64>) {
        grid_min_around(gamma, c, c, half_width, h)
    }

    fn grid_min_around(
        gamma: f64,
        c: &[f64],
        center: &[f64],
        half_width: f64,
        h: f64,
    ) -> (f64, Vec<f64>) {
        let steps = (2.0 * half_width / h).round() as i64;
        let mut best = (f64::INFINITY, vec![]);
        let mut idx = vec![0i64; c.len()];
        loop {
            let u: Vec<f64> = idx
                .iter()
                .zip(center)
                .map(|(&i, &ci)| ci - half_width + i as f64 * h)
                .collect();
            let val = objective(gamma, c, &u);
            if val < best.0 {
                best = (val, u);
            }
            let mut d = 0;
            loop {
                if d == idx.len() {
                    return best;
                }
                idx[d] += 1;
                if idx[d] <= steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    #[test]
    fn threshold_above_norm_gives_zero() {
        let r = shrink(10.0, &[3.0, 4.0], &[1.0, 0.0]);
        assert_eq!(r.minimizer, vec![0.0, 0.0]);
        assert!(!r.at_origin_tie);
    }

    #[test]
    fn zero_threshold_is_identity() {
        assert_eq!(
            shrink(0.0, &[3.0, 4.0], &[1.0, 0.0]).minimizer,
            vec![3.0, 4.0]
        );
    }

    #[test]
    fn half_threshold_matches_grid_oracle() {
        let c = [3.0, 4.0, 0.0];
        let r = shrink(0.5, &c, &[1.0, 0.0, 0.0]);
        let expected = [2.7, 3.6, 0.0];
        for (a, b) in r.minimizer.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        // Coarse grid to locate, then a fine grid around the coarse winner.
        let (_, coarse) = grid_min(0.5, &c, 1.0, 0.05);
        let (_, fine) = grid_min_around(0.5, &c, &coarse, 0.05, 1e-3);
        for (a, b) in fine.iter().zip(expected) {
            assert!((a - b).abs() <= 2e-3, "{fine:?}");
        }
    }

    #[test]
    fn negative_threshold_at_origin_uses_fallback() {
        let r = shrink(-1.0, &[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(r.minimizer, vec![1.0, 0.0]);
        assert!(r.at_origin_tie);
    }

    #[test]
    fn negative_threshold_expands() {
        // t₁ = 1 − γ/‖c‖ = 2.
        let r = shrink(-1.0, &[0.0, 0.0, 1.0], &FALLBACK_3D);
        assert_eq!(r.minimizer, vec![0.0, 0.0, 2.0]);
        let (_, u) = grid_min(-1.0, &[0.0, 0.0, 1.0], 1.5, 0.01);
        assert!((u[2] - 2.0).abs() < 1e-9 && u[0].abs() < 1e-9 && u[1].abs() < 1e-9);
    }

    #[test]
    fn scalar_shrink_examples() {
        assert_eq!(shrink_scalar(0.5, 0.0), 0.0);
        assert_eq!(shrink_scalar(0.5, 2.0), 1.5);
        assert_eq!(shrink_scalar(0.5, -2.0), -1.5);
        for c in [2.0, -2.0] {
            let (_, v) = grid_min(0.5, &[c], 1.0, 1e-3);
            assert!((v[0] - shrink_scalar(0.5, c)).abs() < 1e-9);
        }
    }

    #[test]
    fn simplex_examples() {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&project_simplex(&[0.2, 0.3, 0.5]), &[0.2, 0.3, 0.5]));
        assert!(close(&project_simplex(&[1.0, 1.0]), &[0.5, 0.5]));
        assert!(close(&project_simplex(&[2.0, 0.0, 0.0]), &[1.0, 0.0, 0.0]));
        assert!(close(&project_simplex(&[0.9, 0.3]), &[0.8, 0.2]));
        assert!(close(&project_simplex(&[0.0; 4]), &[0.25; 4]));
        assert!(close(&project_simplex(&[0.0, 1.0, 0.0]), &[0.0, 1.0, 0.0]));
    }

    #[test]
    fn simplex_grid_oracle_for_corner_case() {
        // Barycentric grid over Δ₃ with spacing 1/200.
        let y = [2.0, 0.0, 0.0];
        let n = 200;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let w = [
                    i as f64 / n as f64,
                    j as f64 / n as f64,
                    (n - i - j) as f64 / n as f64,
                ];
                let d: f64 = w.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, w);
                }
            }
        }
        assert_eq!(best.1, [1.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn shrink_is_positively_homogeneous(
            gamma in -3.0f64..3.0,
            c in proptest::collection::vec(-3.0f64..3.0, 1..4),
            t in 0.1f64..10.0,
        ) {
            let e = { let mut e = vec![0.0; c.len()]; e[0] = 1.0; e };
            let a = shrink(t * gamma, &c.iter().map(|x| t * x).collect::<Vec<_>>(), &e).minimizer;
            let b = shrink(gamma, &c, &e).minimizer;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - t * y).abs() <= 1e-12 * (1.0 + (t * y).abs()));
            }
        }

        #[test]
        fn shrink_norm_matches_formula(
            gamma in -3.0f64..3.0,
            c in proptest::collection::vec(-3.0f64..3.0, 1..4),
        ) {
            let e = { let mut e = vec![0.0; c.len()]; e[0] = 1.0; e };
            let r = shrink(gamma, &c, &e);
            let norm = r.minimizer.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cn = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - f64::max(0.0, cn - gamma)).abs() <= 1e-12 * (1.0 + cn));
        }

        #[test]
        fn simplex_shift_invariance_and_idempotence(
            y in proptest::collection::vec(-2.0f64..2.0, 1..8),
            shift in -5.0f64..5.0,
        ) {
            let p = project_simplex(&y);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            let shifted: Vec<f64> = y.iter().map(|x| x + shift).collect();
            let q = project_simplex(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let pp = project_simplex(&p);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn simplex_projection_is_nonexpansive(
            pair in (1usize..8).prop_flat_map(|n| (
                proptest::collection::vec(-2.0f64..2.0, n),
                proptest::collection::vec(-2.0f64..2.0, n),
            )),
        ) {
            let (a, b) = pair;
            let (pa, pb) = (project_simplex(&a), project_simplex(&b));
            let d_in: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let d_out: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d_out <= d_in + 1e-12);
        }
    }
}
