//! Cell-based quadrature on the level-set domain.
//!
//! Uncut cells use the trapezoidal rule. Cut cells are split along the
//! SW-NE diagonal, the level set is taken linear on each triangle, and the
//! `phi < 0` part is integrated with the three-edge-midpoint rule. Midpoint
//! values are bilinear in the cell corners, so every rule reduces to nodal
//! weights.

use crate::error::{Error, Result};
use crate::geometry::{Grid2D, GridClassification, LevelSetField};
use crate::operators::{Couplings, SparseOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellClass {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Clone, Debug)]
pub struct QuadratureWeights {
    /// Weight of every grid node. Exterior corners of cut cells carry weight
    /// too; interior fields are zero there.
    full: Vec<f64>,
    /// Weights of the interior unknowns, interior order.
    interior: Vec<f64>,
    cells: Vec<CellClass>,
}

impl QuadratureWeights {
    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn full(&self) -> &[f64] {
        &self.full
    }

    /// Cell classes, row-major over the `(nx - 1) x (ny - 1)` cells.
    pub fn cells(&self) -> &[CellClass] {
        &self.cells
    }

    /// Area of the linearized domain.
    pub fn area(&self) -> f64 {
        self.full.iter().sum()
    }
}

type Local = [f64; 2];

fn lerp(a: Local, b: Local, t: f64) -> Local {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Triangles covering the `phi <= 0` part of a triangle with linear `phi`.
/// Closed, so a triangle with all vertices on the boundary (a grid-aligned
/// edge) is kept whole.
fn clip(tri: [(Local, f64); 3], out: &mut Vec<[Local; 3]>) {
    let inside: Vec<usize> = (0..3).filter(|&k| tri[k].1 <= 0.0).collect();
    let cross = |a: usize, b: usize| {
        let (pa, fa) = tri[a];
        let (pb, fb) = tri[b];
        lerp(pa, pb, fa / (fa - fb))
    };
    match inside.len() {
        0 => {}
        3 => out.push([tri[0].0, tri[1].0, tri[2].0]),
        1 => {
            let a = inside[0];
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            out.push([tri[a].0, cross(a, b), cross(a, c)]);
        }
        _ => {
            let p = (0..3).find(|k| tri[*k].1 > 0.0).unwrap();
            let (a, b) = ((p + 1) % 3, (p + 2) % 3);
            let (qa, qb) = (cross(a, p), cross(b, p));
            out.push([tri[a].0, tri[b].0, qb]);
            out.push([tri[a].0, qb, qa]);
        }
    }
}

fn area(t: &[Local; 3]) -> f64 {
    0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1])).abs()
}

pub fn build_weights(ls: &LevelSetField, cls: &GridClassification) -> QuadratureWeights {
    let grid: &Grid2D = ls.grid();
    let phi = ls.values();
    let h2 = grid.h() * grid.h();
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut full = vec![0.0; grid.len()];
    let mut cells = Vec::with_capacity((nx - 1) * (ny - 1));
    let mut pieces = Vec::with_capacity(2);
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [
                grid.index(i, j),
                grid.index(i + 1, j),
                grid.index(i, j + 1),
                grid.index(i + 1, j + 1),
            ];
            let f = corners.map(|k| phi[k]);
            if f.iter().all(|&v| v < 0.0) {
                cells.push(CellClass::Interior);
                for k in corners {
                    full[k] += 0.25 * h2;
                }
                continue;
            }
            if f.iter().all(|&v| v >= 0.0) {
                cells.push(CellClass::Exterior);
                continue;
            }
            cells.push(CellClass::Boundary);
            let (sw, se, nw, ne) = (([0.0, 0.0], f[0]), ([1.0, 0.0], f[1]), ([0.0, 1.0], f[2]), ([1.0, 1.0], f[3]));
            pieces.clear();
            clip([sw, se, ne], &mut pieces);
            clip([sw, ne, nw], &mut pieces);
            for t in &pieces {
                let w = area(t) * h2 / 3.0;
                for e in 0..3 {
                    let [s, r] = lerp(t[e], t[(e + 1) % 3], 0.5);
                    full[corners[0]] += w * (1.0 - s) * (1.0 - r);
                    full[corners[1]] += w * s * (1.0 - r);
                    full[corners[2]] += w * (1.0 - s) * r;
                    full[corners[3]] += w * s * r;
                }
            }
        }
    }
    let interior = cls.interior_order().iter().map(|&k| full[k]).collect();
    QuadratureWeights { full, interior, cells }
}

/// `sum_i w_i f_i` over the interior unknowns.
pub fn integrate(field: &[f64], w: &QuadratureWeights) -> f64 {
    debug_assert_eq!(field.len(), w.interior.len());
    field.iter().zip(&w.interior).map(|(f, w)| f * w).sum()
}

/// `(sum_i w_i |f_i|^p)^(1/p)`.
pub fn lp_norm(field: &[f64], w: &QuadratureWeights, p: u32) -> f64 {
    let s: f64 = field
        .iter()
        .zip(&w.interior)
        .map(|(f, w)| w * f.abs().powi(p as i32))
        .sum();
    s.powf(1.0 / p as f64)
}

/// `p`-th power of the norm without the root.
pub fn lp_power(field: &[f64], w: &QuadratureWeights, p: u32) -> f64 {
    field
        .iter()
        .zip(&w.interior)
        .map(|(f, w)| w * f.abs().powi(p as i32))
        .sum()
}

/// Normalization tolerance on `||u||_2` for the functionals below.
pub const NORM_TOLERANCE: f64 = 1e-8;

/// `mu = integral of u H u` for a normalized `u`.
pub fn chemical_potential(u: &[f64], hu: &[f64], w: &QuadratureWeights) -> Result<f64> {
    let norm = lp_norm(u, w, 2);
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized { norm });
    }
    Ok(u.iter().zip(hu).zip(&w.interior).map(|((a, b), w)| w * a * b).sum())
}

/// `integral of |grad(u^2)|^2`, with the ghost values of `u^2` taken as the
/// squares of the mapped ghost values of `u`.
pub fn squared_gradient_energy(u: &[f64], grads: (&SparseOperator, &SparseOperator), w: &QuadratureWeights) -> f64 {
    let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
    let mut total = vec![0.0; u.len()];
    for g in [grads.0, grads.1] {
        let ghost_sq: Vec<f64> = g.ghost_values(u).iter().map(|v| v * v).collect();
        let d = g.apply_with_ghosts(&sq, &ghost_sq);
        total.iter_mut().zip(&d).for_each(|(t, v)| *t += v * v);
    }
    integrate(&total, w)
}

/// Energy from the chemical potential:
/// `E = mu - beta/2 ||u||_4^4 - 2 gamma/3 ||u||_6^6 - delta/2 integral |grad(u^2)|^2`.
///
/// The higher-order-interaction term needs the gradient pair.
pub fn energy(
    mu: f64,
    u: &[f64],
    w: &QuadratureWeights,
    couplings: Couplings,
    grads: Option<(&SparseOperator, &SparseOperator)>,
) -> Result<f64> {
    let mut e = mu;
    if couplings.beta != 0.0 {
        e -= 0.5 * couplings.beta * lp_power(u, w, 4);
    }
    if couplings.quintic != 0.0 {
        e -= 2.0 / 3.0 * couplings.quintic * lp_power(u, w, 6);
    }
    if couplings.hoi != 0.0 {
        let g = grads.ok_or_else(|| Error::InvalidModel("interaction energy needs gradient operators".into()))?;
        e -= 0.5 * couplings.hoi * squared_gradient_energy(u, g, w);
    }
    Ok(e)
}
