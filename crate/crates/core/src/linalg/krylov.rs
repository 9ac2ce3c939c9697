//! Preconditioned BiCGSTAB for the nonsymmetric ghost-folded systems.

use super::sparse::{dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreconditionerKind {
    None,
    Jacobi,
    /// Modified incomplete LU with zero fill; dropped fill is moved onto the
    /// diagonal so that row sums are preserved.
    Milu,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// `None` means `10 * sqrt(n)`, but never fewer than 100 iterations.
    pub max_iters: Option<usize>,
    pub preconditioner: PreconditionerKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_iters: None,
            preconditioner: PreconditionerKind::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidModel("solver tolerances must be positive".into()));
        }
        Ok(())
    }

    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iters
            .unwrap_or_else(|| ((10.0 * (n as f64).sqrt()) as usize).max(100))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

pub enum Preconditioner {
    Identity,
    Jacobi(Vec<f64>),
    Ilu(IluFactors),
}

impl Preconditioner {
    pub fn new(a: &CsrMatrix, kind: PreconditionerKind) -> Self {
        match kind {
            PreconditionerKind::None => Preconditioner::Identity,
            PreconditionerKind::Jacobi => Preconditioner::Jacobi(
                a.diagonal()
                    .iter()
                    .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
                    .collect(),
            ),
            PreconditionerKind::Milu => Preconditioner::Ilu(IluFactors::modified(a)),
        }
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Preconditioner::Ilu(f) => f.solve(r, z),
        }
    }
}

/// In-place ILU(0) factors stored on the pattern of the input matrix.
pub struct IluFactors {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl IluFactors {
    pub fn modified(a: &CsrMatrix) -> Self {
        let n = a.nrows();
        let mut lu = a.clone();
        let indptr = lu.indptr().to_vec();
        let indices = lu.indices().to_vec();
        let diag_pos: Vec<usize> = (0..n)
            .map(|i| lu.position(i, i).expect("MILU needs a stored diagonal"))
            .collect();
        let orig_diag = a.diagonal();
        let mut marker = vec![usize::MAX; n];
        let vals = lu.values_mut();
        for i in 0..n {
            let (lo, hi) = (indptr[i], indptr[i + 1]);
            for p in lo..hi {
                marker[indices[p]] = p;
            }
            let mut dropped = 0.0;
            for p in lo..hi {
                let k = indices[p];
                if k >= i {
                    break;
                }
                let pivot = vals[diag_pos[k]];
                let lik = vals[p] / pivot;
                vals[p] = lik;
                for q in diag_pos[k] + 1..indptr[k + 1] {
                    let j = indices[q];
                    let m = marker[j];
                    if m != usize::MAX {
                        vals[m] -= lik * vals[q];
                    } else {
                        dropped += lik * vals[q];
                    }
                }
            }
            let d = diag_pos[i];
            let compensated = vals[d] - dropped;
            // keep the pivot away from zero and on the side of the original diagonal
            if compensated.abs() > 1e-8 * orig_diag[i].abs() && compensated * orig_diag[i] > 0.0 {
                vals[d] = compensated;
            } else if vals[d].abs() <= 1e-12 * orig_diag[i].abs() {
                vals[d] = orig_diag[i];
            }
            for p in lo..hi {
                marker[indices[p]] = usize::MAX;
            }
        }
        Self { lu, diag_pos }
    }

    pub fn solve(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let (indptr, indices, vals) = (self.lu.indptr(), self.lu.indices(), self.lu.values());
        for i in 0..n {
            let mut acc = r[i];
            for p in indptr[i]..self.diag_pos[i] {
                acc -= vals[p] * z[indices[p]];
            }
            z[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for p in self.diag_pos[i] + 1..indptr[i + 1] {
                acc -= vals[p] * z[indices[p]];
            }
            z[i] = acc / vals[self.diag_pos[i]];
        }
    }
}

/// Solves `A x = b`, starting from `x0` when given.
pub fn solve_linear(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)> {
    let precond = Preconditioner::new(a, cfg.preconditioner);
    solve_with(a, &precond, b, x0, cfg)
}

/// Same as [`solve_linear`] with a caller-owned preconditioner.
pub fn solve_with(
    a: &CsrMatrix,
    precond: &Preconditioner,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve: matrix {}x{}, rhs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    cfg.validate()?;
    let target = cfg.rel_tol * norm2(b) + cfg.abs_tol;
    let cap = cfg.iteration_cap(n);

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut total = 0;
    // a few restarts guard against drift between the recursive and true residual
    for _restart in 0..4 {
        true_residual(a, &x, b, &mut r);
        let res = norm2(&r);
        if res <= target {
            return Ok((x, SolveStats { iterations: total, residual: res }));
        }
        if total >= cap {
            return Err(Error::LinearSolve {
                reason: "iteration limit",
                iterations: total,
                residual: res,
            });
        }
        total += bicgstab_cycle(a, precond, &mut x, &mut r, target, cap - total)?;
    }
    true_residual(a, &x, b, &mut r);
    let res = norm2(&r);
    if res <= target.max(rounding_floor(a, &x, b)) {
        Ok((x, SolveStats { iterations: total, residual: res }))
    } else {
        Err(Error::LinearSolve {
            reason: "residual stagnation",
            iterations: total,
            residual: res,
        })
    }
}

/// Residual level reachable in floating point: `64 eps (|| |A||x| || + ||b||)`.
fn rounding_floor(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let (indptr, indices, vals) = (a.indptr(), a.indices(), a.values());
    let ax: f64 = (0..a.nrows())
        .map(|i| {
            let s: f64 = (indptr[i]..indptr[i + 1]).map(|p| (vals[p] * x[indices[p]]).abs()).sum();
            s * s
        })
        .sum::<f64>()
        .sqrt();
    64.0 * f64::EPSILON * (ax + norm2(b))
}

fn true_residual(a: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) {
    a.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// One BiCGSTAB cycle from the residual `r = b - A x`. Returns iterations used.
fn bicgstab_cycle(
    a: &CsrMatrix,
    precond: &Preconditioner,
    x: &mut [f64],
    r: &mut [f64],
    target: f64,
    budget: usize,
) -> Result<usize> {
    let n = x.len();
    let r_hat = r.to_vec();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let r0 = norm2(r);

    for it in 1..=budget {
        let rho_new = dot(&r_hat, r);
        if rho_new.abs() < 1e-300 || !rho_new.is_finite() {
            // lost bi-orthogonality; restart from the current iterate
            return Ok(it);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.apply(&p, &mut p_hat);
        a.mul_vec_into(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom.abs() < 1e-300 * r0.max(1.0) || !denom.is_finite() {
            return Ok(it);
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= target {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(it);
        }
        precond.apply(&s, &mut s_hat);
        a.mul_vec_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::LinearSolve {
                reason: "breakdown",
                iterations: it,
                residual: norm2(&s),
            });
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm2(r);
        if !res.is_finite() {
            return Err(Error::LinearSolve {
                reason: "non-finite residual",
                iterations: it,
                residual: res,
            });
        }
        if res <= target || omega == 0.0 {
            return Ok(it);
        }
    }
    Ok(budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_1d(n: usize, h: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 / (h * h)));
            if i > 0 {
                t.push((i, i - 1, -1.0 / (h * h)));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0 / (h * h)));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    /// Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn identity_returns_rhs() {
        let b = vec![1.0, -2.0, 3.5];
        let (x, _) = solve_linear(&CsrMatrix::identity(3), &b, None, &SolverConfig::default()).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_system() {
        let a = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let (x, _) = solve_linear(&a, &[1.0; 5], None, &SolverConfig::default()).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / (i as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_1d_matches_dense_oracle() {
        let a = poisson_1d(4, 0.2);
        let b = vec![1.0; 4];
        let expected = dense_solve(a.to_dense(), b.clone());
        for kind in [PreconditionerKind::None, PreconditionerKind::Jacobi, PreconditionerKind::Milu] {
            let cfg = SolverConfig { preconditioner: kind, ..Default::default() };
            let (x, _) = solve_linear(&a, &b, None, &cfg).unwrap();
            for (xi, ei) in x.iter().zip(&expected) {
                assert!((xi - ei).abs() < 1e-9, "{kind:?}: {xi} vs {ei}");
            }
        }
    }

    #[test]
    fn nonsymmetric_convection_diffusion() {
        let n = 200;
        let h = 1.0 / (n as f64 + 1.0);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 / (h * h) + 1.0));
            if i > 0 {
                t.push((i, i - 1, -1.0 / (h * h) - 20.0 / h));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0 / (h * h) + 20.0 / h));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * h * 7.0).sin()).collect();
        let cfg = SolverConfig { preconditioner: PreconditionerKind::Milu, max_iters: Some(2000), ..Default::default() };
        let (x, stats) = solve_linear(&a, &b, None, &cfg).unwrap();
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(ax, bi)| ax - bi).collect();
        assert!(norm2(&r) <= cfg.rel_tol * norm2(&b) + cfg.abs_tol);
        assert!(stats.iterations < 2000);
    }

    #[test]
    fn iteration_limit_is_an_error() {
        let a = poisson_1d(400, 1.0 / 401.0);
        let cfg = SolverConfig {
            preconditioner: PreconditionerKind::None,
            max_iters: Some(3),
            ..Default::default()
        };
        assert!(matches!(
            solve_linear(&a, &vec![1.0; 400], None, &cfg),
            Err(Error::LinearSolve { .. })
        ));
    }
}
