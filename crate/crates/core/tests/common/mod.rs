#![allow(dead_code)]

use labelnorm::energy::{AdmmState, LabelSet};
use labelnorm::mesh::{SurfaceMesh, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn fill(rng: &mut ChaCha20Rng, values: &mut [f64], lo: f64, hi: f64) {
    for x in values {
        *x = rng.random_range(lo..hi);
    }
}

/// Jittered positions and random splits and multipliers, all of moderate
/// size so that every term of the Lagrangian contributes.
pub fn random_state(mesh: &SurfaceMesh, labels: &LabelSet, seed: u64) -> AdmmState {
    let mut rng = rng(seed);
    let positions: Vec<Vec3> = mesh
        .positions()
        .iter()
        .map(|p| {
            p + Vec3::new(
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
            )
        })
        .collect();
    let mut s = AdmmState::initial(mesh, positions, labels);
    fill(&mut rng, s.phi.as_mut_slice(), 0.0, 1.0);
    fill(&mut rng, s.u.as_mut_slice(), -0.5, 0.5);
    fill(&mut rng, s.v.as_mut_slice(), -0.5, 0.5);
    fill(&mut rng, s.w.as_mut_slice(), 0.0, 1.0);
    fill(&mut rng, s.lambda.as_mut_slice(), -0.3, 0.3);
    fill(&mut rng, s.eta.as_mut_slice(), -0.3, 0.3);
    fill(&mut rng, s.tau.as_mut_slice(), -0.3, 0.3);
    s
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
