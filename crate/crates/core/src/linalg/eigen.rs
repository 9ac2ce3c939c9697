//! Smallest eigenpairs by shift-invert subspace iteration with Rayleigh–Ritz
//! projection. The ghost-folded operators are mildly nonsymmetric, so the
//! projected problem is solved as a general real eigenproblem.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::krylov::{solve_with, Preconditioner, PreconditionerKind, SolverConfig};
use super::sparse::{dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct EigenConfig {
    /// Converged when `||A v - lambda v|| <= tol * |lambda|` (unit Euclidean `v`).
    pub tol: f64,
    pub max_iters: usize,
    /// Extra block vectors beyond the requested count.
    pub guard_vectors: usize,
    pub shift: f64,
    pub seed: u64,
    pub linear: SolverConfig,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 500,
            guard_vectors: 2,
            shift: 0.0,
            seed: 0x5eed_0001,
            linear: SolverConfig {
                rel_tol: 1e-12,
                abs_tol: 1e-300,
                max_iters: Some(20_000),
                preconditioner: PreconditionerKind::Milu,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// `||A v - lambda v|| / ||v||` at return.
    pub residual: f64,
}

/// Computes the `k` eigenpairs of smallest real part.
///
/// Vectors are normalized in the weighted norm `sqrt(sum w_i v_i^2)` when
/// `weights` is given (Euclidean otherwise), and their largest-magnitude entry
/// is made positive.
pub fn smallest_eigenpairs(
    a: &CsrMatrix,
    k: usize,
    weights: Option<&[f64]>,
    cfg: &EigenConfig,
) -> Result<Vec<EigenPair>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!("eigs on {}x{}", n, a.ncols())));
    }
    if k == 0 || k > n {
        return Err(Error::Eigen(format!("cannot compute {k} pairs of a {n}x{n} matrix")));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch("eigs weights".into()));
        }
    }
    let m = (k + cfg.guard_vectors).min(n);

    let shifted = if cfg.shift != 0.0 {
        a.add(&CsrMatrix::from_diagonal(&vec![-cfg.shift; n]))?
    } else {
        a.clone()
    };
    let precond = Preconditioner::new(&shifted, cfg.linear.preconditioner);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut basis: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
        .collect();
    orthonormalize(&mut basis)?;
    let mut ritz_values: Option<Vec<f64>> = None;
    let mut last_residuals = vec![f64::INFINITY; k];

    for _iter in 0..cfg.max_iters {
        let mut next = Vec::with_capacity(m);
        for (j, x) in basis.iter().enumerate() {
            let guess: Option<Vec<f64>> = ritz_values.as_ref().and_then(|t| {
                let d = t[j] - cfg.shift;
                (d.abs() > 1e-300).then(|| x.iter().map(|v| v / d).collect())
            });
            let (y, _) = solve_with(&shifted, &precond, x, guess.as_deref(), &cfg.linear)?;
            next.push(y);
        }
        orthonormalize(&mut next)?;
        let images: Vec<Vec<f64>> = next.iter().map(|y| a.mul_vec(y)).collect();
        let h = DMatrix::from_fn(m, m, |r, c| dot(&next[r], &images[c]));

        let Some((values, coeffs)) = ritz_pairs(&h) else {
            // complex pair among the leading Ritz values: keep iterating on the subspace
            basis = next;
            ritz_values = None;
            continue;
        };

        let mut vectors = Vec::with_capacity(m);
        let mut residuals = Vec::with_capacity(m);
        for (theta, s) in values.iter().zip(&coeffs) {
            let mut v = vec![0.0; n];
            let mut av = vec![0.0; n];
            for c in 0..m {
                let sc = s[c];
                for i in 0..n {
                    v[i] += sc * next[c][i];
                    av[i] += sc * images[c][i];
                }
            }
            let nv = norm2(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            av.iter_mut().for_each(|x| *x /= nv);
            let res = av.iter().zip(&v).map(|(p, q)| (p - theta * q).powi(2)).sum::<f64>().sqrt();
            vectors.push(v);
            residuals.push(res);
        }
        last_residuals = residuals[..k].to_vec();
        let converged = (0..k).all(|j| residuals[j] <= cfg.tol * values[j].abs().max(1e-300));
        if converged {
            for j in 1..k {
                if (values[j] - values[j - 1]).abs() < 1e-10 {
                    log::warn!("clustered eigenvalues {} and {}", values[j - 1], values[j]);
                }
            }
            return Ok((0..k)
                .map(|j| {
                    let mut v = vectors[j].clone();
                    normalize_and_fix_sign(&mut v, weights);
                    EigenPair {
                        value: values[j],
                        vector: v,
                        residual: residuals[j],
                    }
                })
                .collect());
        }
        basis = vectors;
        orthonormalize(&mut basis)?;
        ritz_values = Some(values);
    }
    Err(Error::Eigen(format!(
        "no convergence in {} iterations, residuals {:?}",
        cfg.max_iters, last_residuals
    )))
}

/// Makes the largest-magnitude entry positive and normalizes.
pub fn normalize_and_fix_sign(v: &mut [f64], weights: Option<&[f64]>) {
    let norm = match weights {
        Some(w) => v.iter().zip(w).map(|(x, wi)| wi * x * x).sum::<f64>().sqrt(),
        None => norm2(v),
    };
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    let s = if pivot < 0.0 { -1.0 / norm } else { 1.0 / norm };
    v.iter_mut().for_each(|x| *x *= s);
}

/// Modified Gram–Schmidt, applied twice.
fn orthonormalize(vs: &mut [Vec<f64>]) -> Result<()> {
    for _pass in 0..2 {
        for j in 0..vs.len() {
            for i in 0..j {
                let (head, tail) = vs.split_at_mut(j);
                let c = dot(&head[i], &tail[0]);
                for (t, h) in tail[0].iter_mut().zip(&head[i]) {
                    *t -= c * h;
                }
            }
            let nv = norm2(&vs[j]);
            if nv < 1e-300 || !nv.is_finite() {
                return Err(Error::Eigen("subspace collapsed during orthonormalization".into()));
            }
            vs[j].iter_mut().for_each(|x| *x /= nv);
        }
    }
    Ok(())
}

/// Eigenpairs of the small projected matrix, sorted by real part. Returns
/// `None` if any eigenvalue has a non-negligible imaginary part.
fn ritz_pairs(h: &DMatrix<f64>) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = h.nrows();
    let eig = h.clone().complex_eigenvalues();
    let scale = h.norm().max(1e-300);
    let mut values = Vec::with_capacity(m);
    for z in eig.iter() {
        if z.im.abs() > 1e-10 * scale {
            return None;
        }
        values.push(z.re);
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mut coeffs = Vec::with_capacity(m);
    for &lambda in &values {
        // one step of inverse iteration on the tiny dense matrix from the SVD null vector
        let shifted = h - DMatrix::identity(m, m) * lambda;
        let svd = shifted.clone().svd(false, true);
        let vt = svd.v_t?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let mut s: DVector<f64> = vt.row(imin).transpose();
        let ns = s.norm();
        s /= ns;
        coeffs.push(s.iter().copied().collect());
    }
    Some((values, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_smallest_pair() {
        let a = CsrMatrix::from_diagonal(&[3.0, 1.0, 2.0]);
        let cfg = EigenConfig { guard_vectors: 1, tol: 1e-11, ..Default::default() };
        let pairs = smallest_eigenpairs(&a, 1, None, &cfg).unwrap();
        assert!((pairs[0].value - 1.0).abs() < 1e-12);
        assert!((pairs[0].vector[1] - 1.0).abs() < 1e-10);
        assert!(pairs[0].vector[0].abs() < 1e-10 && pairs[0].vector[2].abs() < 1e-10);
    }

    #[test]
    fn five_point_laplacian_unit_square() {
        // interior nodes of the unit square with h = 1/8
        let n = 7;
        let h = 1.0 / 8.0;
        let idx = |i: usize, j: usize| j * n + i;
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..n {
                t.push((idx(i, j), idx(i, j), 4.0 / (h * h)));
                if i > 0 {
                    t.push((idx(i, j), idx(i - 1, j), -1.0 / (h * h)));
                }
                if i + 1 < n {
                    t.push((idx(i, j), idx(i + 1, j), -1.0 / (h * h)));
                }
                if j > 0 {
                    t.push((idx(i, j), idx(i, j - 1), -1.0 / (h * h)));
                }
                if j + 1 < n {
                    t.push((idx(i, j), idx(i, j + 1), -1.0 / (h * h)));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n * n, n * n, &t);
        let pairs = smallest_eigenpairs(&a, 2, None, &EigenConfig::default()).unwrap();
        let s = (std::f64::consts::PI * h / 2.0).sin();
        let exact = 2.0 * 4.0 / (h * h) * s * s;
        assert!((pairs[0].value - exact).abs() < 1e-9 * exact, "{} vs {exact}", pairs[0].value);
        // second eigenvalue is the double (1,2)/(2,1) mode
        let s2 = (std::f64::consts::PI * h).sin();
        let exact2 = 4.0 / (h * h) * (s * s + s2 * s2);
        assert!((pairs[1].value - exact2).abs() < 1e-8 * exact2);
        for p in &pairs {
            let av = a.mul_vec(&p.vector);
            let r: f64 = av.iter().zip(&p.vector).map(|(x, v)| (x - p.value * v).powi(2)).sum::<f64>().sqrt();
            assert!(r <= 1e-8 * p.value.abs() * norm2(&p.vector));
        }
        // ground mode has one sign
        assert!(pairs[0].vector.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn deterministic_output() {
        let a = CsrMatrix::from_triplets(
            4,
            4,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0), (2, 3, -0.5), (3, 2, -1.0), (3, 3, 2.0)],
        );
        let cfg = EigenConfig { guard_vectors: 1, ..Default::default() };
        let p1 = smallest_eigenpairs(&a, 1, None, &cfg).unwrap();
        let p2 = smallest_eigenpairs(&a, 1, None, &cfg).unwrap();
        assert_eq!(p1[0].value.to_bits(), p2[0].value.to_bits());
        assert_eq!(p1[0].vector, p2[0].vector);
    }
}
