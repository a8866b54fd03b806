mod common;

use labelnorm::energy::{shape_gradient, ModelParams};
use labelnorm::exec::Exec;
use labelnorm::gen::{axis_labels, gen_fibonacci_labels, gen_icosphere};
use labelnorm::mesh::GeometryCache;
use labelnorm::prox::{u_update, v_update, w_update};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn w_update_lands_in_the_simplex(seed in any::<u64>(), l in 1usize..9) {
        let mesh = gen_icosphere(1, 1.0);
        let labels = gen_fibonacci_labels(l);
        let state = common::random_state(&mesh, &labels, seed);
        let w = w_update(&state, Exec::Sequential);
        for f in 0..mesh.num_faces() {
            let row = w.row(f);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn policies_agree_bit_for_bit(seed in any::<u64>()) {
        let mesh = gen_icosphere(2, 1.0);
        let labels = axis_labels();
        let state = common::random_state(&mesh, &labels, seed);
        let cache = GeometryCache::compute(&mesh, &state.positions);
        let data = mesh.positions().to_vec();
        let mut seq = ModelParams::skyline();
        seq.exec = Exec::Sequential;
        let mut par = seq.clone();
        par.exec = Exec::Parallel;
        prop_assert_eq!(u_update(&state, &cache, &labels, &seq), u_update(&state, &cache, &labels, &par));
        prop_assert_eq!(v_update(&state, &mesh, &seq), v_update(&state, &mesh, &par));
        prop_assert_eq!(w_update(&state, Exec::Sequential), w_update(&state, Exec::Parallel));
        prop_assert_eq!(
            shape_gradient(&state, &mesh, &labels, &seq, &data).unwrap(),
            shape_gradient(&state, &mesh, &labels, &par, &data).unwrap()
        );
    }

    #[test]
    fn u_update_leaves_geometry_alone(seed in any::<u64>()) {
        let mesh = gen_icosphere(1, 1.0);
        let labels = axis_labels();
        let state = common::random_state(&mesh, &labels, seed);
        let cache = GeometryCache::compute(&mesh, &state.positions);
        let u = u_update(&state, &cache, &labels, &ModelParams::skyline());
        prop_assert_eq!(u.len(), mesh.num_faces());
        prop_assert_eq!(u.width(), 3 * labels.len());
        prop_assert!(u.is_finite());
    }
}
