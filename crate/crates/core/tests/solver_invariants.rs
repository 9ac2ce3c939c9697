use gpe_levelset::linalg::{solve_linear, smallest_eigenpairs, CsrMatrix, EigenConfig, PreconditionerKind, SolverConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random sparse nonsymmetric matrix with a strictly dominant diagonal.
fn dominant_matrix(n: usize, seed: u64) -> CsrMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    for i in 0..n {
        let mut off = 0.0;
        for _ in 0..4 {
            let j = rng.gen_range(0..n);
            if j != i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                off += v.abs();
                t.push((i, j, v));
            }
        }
        t.push((i, i, off + rng.gen_range(0.5..2.0)));
    }
    CsrMatrix::from_triplets(n, n, &t)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn solves_meet_the_residual_contract(n in 2usize..80, seed in any::<u64>(), pc in 0usize..3) {
        let a = dominant_matrix(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = SolverConfig {
            preconditioner: [PreconditionerKind::None, PreconditionerKind::Jacobi, PreconditionerKind::Milu][pc],
            ..SolverConfig::default()
        };
        let (x, stats) = solve_linear(&a, &b, None, &cfg).unwrap();
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| q - p).collect();
        let res = norm(&r);
        prop_assert!(res <= cfg.rel_tol * norm(&b) + cfg.abs_tol, "residual {res}");
        prop_assert!((stats.residual - res).abs() <= 1e-12 * norm(&b) + 1e-15);

        // identical inputs give bitwise identical outputs
        let (again, _) = solve_linear(&a, &b, None, &cfg).unwrap();
        prop_assert!(x.iter().zip(&again).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn triplet_files_roundtrip(n in 1usize..40, seed in any::<u64>()) {
        let a = dominant_matrix(n, seed);
        let mut buf = Vec::new();
        a.write_triplets(&mut buf).unwrap();
        let back = CsrMatrix::read_triplets(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &a);
    }
}

#[test]
fn eigensolver_is_deterministic_and_accurate() {
    // 1D Dirichlet Laplacian: eigenvalues 4/h^2 sin^2(k pi h / 2)
    let n = 60;
    let h = 1.0 / (n + 1) as f64;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0 / (h * h)));
        if i > 0 {
            t.push((i, i - 1, -1.0 / (h * h)));
            t.push((i - 1, i, -1.0 / (h * h)));
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &t);
    let cfg = EigenConfig::default();
    let pairs = smallest_eigenpairs(&a, 3, None, &cfg).unwrap();
    for (k, p) in pairs.iter().enumerate() {
        let exact = 4.0 / (h * h) * ((k + 1) as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2);
        assert!((p.value - exact).abs() < 1e-8 * exact, "{k}: {} vs {exact}", p.value);
    }
    let again = smallest_eigenpairs(&a, 3, None, &cfg).unwrap();
    for (p, q) in pairs.iter().zip(&again) {
        assert_eq!(p.value.to_bits(), q.value.to_bits());
        assert!(p.vector.iter().zip(&q.vector).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
