use labelnorm::gen::{add_noise, gen_icosphere, NoiseSpec};
use labelnorm::mesh::mean_incident_edge_length;

#[test]
fn noise_has_zero_mean_and_target_variance() {
    let mesh = gen_icosphere(7, 1.0);
    let n = mesh.num_vertices();
    assert!(n >= 100_000);
    let factor = 0.04;
    let noisy = add_noise(
        &mesh,
        &NoiseSpec {
            variance_factor: factor,
            seed: 11,
        },
    );
    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    for v in 0..n {
        let sigma = factor.sqrt() * mean_incident_edge_length(&mesh, mesh.positions(), v);
        let z = (noisy.positions()[v] - mesh.positions()[v]) / sigma;
        for k in 0..3 {
            sum[k] += z[k];
            sum_sq[k] += z[k] * z[k];
        }
    }
    let nf = n as f64;
    for k in 0..3 {
        let mean = sum[k] / nf;
        assert!(mean.abs() <= 4.0 / nf.sqrt(), "coordinate {k}: mean {mean}");
        let var = sum_sq[k] / nf - mean * mean;
        assert!(
            (0.9..=1.1).contains(&var),
            "coordinate {k}: variance ratio {var}"
        );
    }
}

#[test]
fn noise_is_seeded() {
    let mesh = gen_icosphere(2, 1.0);
    let a = add_noise(
        &mesh,
        &NoiseSpec {
            variance_factor: 0.01,
            seed: 5,
        },
    );
    let b = add_noise(
        &mesh,
        &NoiseSpec {
            variance_factor: 0.01,
            seed: 5,
        },
    );
    let c = add_noise(
        &mesh,
        &NoiseSpec {
            variance_factor: 0.01,
            seed: 6,
        },
    );
    assert_eq!(a.positions(), b.positions());
    assert_ne!(a.positions(), c.positions());
    assert_eq!(a.faces(), mesh.faces());
}
