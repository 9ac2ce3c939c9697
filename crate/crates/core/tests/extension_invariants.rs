use gpe_levelset::extension::{
    assemble_ghost_map, build_diagonal_factors, build_extension_matrix, extend_field, ExtensionConfig, GhostMapOrder,
};
use gpe_levelset::geometry::{build_level_set, classify, geometry_fields, GeometryOptions, Grid2D, Shape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    /// Rows of the extension matrix are convex combinations, the matrix route
    /// agrees with direct transport, and both ghost maps are linear.
    #[test]
    fn extension_matrix_invariants(
        a in 0.6..1.2f64, b in 0.6..1.2f64, h in 0.06..0.12f64, seed in any::<u64>(),
    ) {
        let grid = Grid2D::covering([-1.7, -1.7], [1.7, 1.7], h).unwrap();
        let ls = build_level_set(&grid, &Shape::ellipse(a, b)).unwrap();
        let cls = classify(&grid, &ls).unwrap();
        let gf = geometry_fields(&ls, &cls, &GeometryOptions::default()).unwrap();
        let cfg = ExtensionConfig::default();
        let ext = build_extension_matrix(&ls, &cls, &gf, &cfg).unwrap();
        prop_assert!(ext.row_sum_defect() <= 10.0 * cfg.tol, "row sums off by {}", ext.row_sum_defect());
        prop_assert!(ext.min_entry() >= -1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cls.n_irregular();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let direct = extend_field(&u, &ls, &cls, &gf, &cfg).unwrap();
        let via = ext.matrix().mul_vec(&u);
        for (d, m) in direct.iter().zip(&via) {
            prop_assert!((d - m).abs() < 1e-12, "{} vs {}", d, m);
        }

        let f = build_diagonal_factors(&ls, &cls, &gf).unwrap();
        let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| alpha * x + beta * y).collect();
        for order in [GhostMapOrder::Linear, GhostMapOrder::Cubic] {
            let map = assemble_ghost_map(&ext, &f, order).unwrap();
            let (mu, mv, mm) = (map.apply(&u), map.apply(&v), map.apply(&mix));
            let scale = mm.iter().chain(&mu).chain(&mv).fold(1.0f64, |s, x| s.max(x.abs()));
            for k in 0..mm.len() {
                let lin = alpha * mu[k] + beta * mv[k];
                prop_assert!((mm[k] - lin).abs() <= 1e-13 * scale);
            }
        }
    }
}

#[test]
fn ghost_maps_are_reproducible() {
    let build = || {
        let grid = Grid2D::covering([-1.5, -1.5], [1.5, 1.5], 0.07).unwrap();
        let ls = build_level_set(&grid, &Shape::difference(Shape::circle(0.0, 0.0, 0.9), Shape::circle(0.45, 0.0, 0.7)))
            .unwrap();
        let cls = classify(&grid, &ls).unwrap();
        let gf = geometry_fields(&ls, &cls, &GeometryOptions::default()).unwrap();
        let ext = build_extension_matrix(&ls, &cls, &gf, &ExtensionConfig::default()).unwrap();
        let f = build_diagonal_factors(&ls, &cls, &gf).unwrap();
        let mut text = Vec::new();
        assemble_ghost_map(&ext, &f, GhostMapOrder::Cubic)
            .unwrap()
            .write(&mut text)
            .unwrap();
        text
    };
    assert_eq!(build(), build());
}
