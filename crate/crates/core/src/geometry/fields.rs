//! Normals and curvature from centred differences of the level set.

use super::classify::{GridClassification, NodeKind};
use super::grid::{Grid2D, Point};
use super::level_set::LevelSetField;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryOptions {
    /// Half-width of the band where normals and curvature are stored, in cells.
    pub band_cells: f64,
    /// Optional cap `|kappa| <= cap / h`. Off by default.
    pub curvature_cap: Option<f64>,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            band_cells: 3.0,
            curvature_cap: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeometryFields {
    normal: Vec<[f64; 2]>,
    kappa: Vec<f64>,
    kappa_normal_deriv: Vec<f64>,
    in_band: Vec<bool>,
    band_width: f64,
}

impl GeometryFields {
    /// Unit outward normal at a band node.
    pub fn normal(&self, idx: usize) -> Option<[f64; 2]> {
        let n = self.normal[idx];
        (self.in_band[idx] && n[0].is_finite()).then_some(n)
    }

    pub fn kappa(&self, idx: usize) -> Option<f64> {
        let k = self.kappa[idx];
        (self.in_band[idx] && k.is_finite()).then_some(k)
    }

    /// `grad(kappa) . n`, indexed by irregular slot.
    pub fn kappa_normal_deriv(&self) -> &[f64] {
        &self.kappa_normal_deriv
    }

    pub fn band_width(&self) -> f64 {
        self.band_width
    }

    pub fn in_band(&self, idx: usize) -> bool {
        self.in_band[idx]
    }
}

#[derive(Clone, Copy)]
enum Deriv {
    First,
    Second,
}

/// Offsets and weights (without the `1/h` powers) of a three- or four-point
/// difference along one axis, centred where possible.
fn stencil(pos: usize, len: usize, d: Deriv) -> &'static [(isize, f64)] {
    match d {
        Deriv::First => {
            if pos == 0 {
                &[(0, -1.5), (1, 2.0), (2, -0.5)]
            } else if pos + 1 == len {
                &[(-2, 0.5), (-1, -2.0), (0, 1.5)]
            } else {
                &[(-1, -0.5), (1, 0.5)]
            }
        }
        Deriv::Second => {
            if pos == 0 {
                &[(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)]
            } else if pos + 1 == len {
                &[(-3, -1.0), (-2, 4.0), (-1, -5.0), (0, 2.0)]
            } else {
                &[(-1, 1.0), (0, -2.0), (1, 1.0)]
            }
        }
    }
}

struct Differ<'a> {
    grid: &'a Grid2D,
    f: &'a [f64],
}

impl Differ<'_> {
    fn at(&self, i: usize, j: usize, dx: Option<Deriv>, dy: Option<Deriv>) -> f64 {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let sx: &[(isize, f64)] = match dx {
            Some(d) => stencil(i, nx, d),
            None => &[(0, 1.0)],
        };
        let sy: &[(isize, f64)] = match dy {
            Some(d) => stencil(j, ny, d),
            None => &[(0, 1.0)],
        };
        let mut acc = 0.0;
        for &(oy, wy) in sy {
            for &(ox, wx) in sx {
                let ii = (i as isize + ox) as usize;
                let jj = (j as isize + oy) as usize;
                acc += wx * wy * self.f[self.grid.index(ii, jj)];
            }
        }
        let h = self.grid.h();
        let order = |d: Option<Deriv>| match d {
            None => 0,
            Some(Deriv::First) => 1,
            Some(Deriv::Second) => 2,
        };
        acc / h.powi(order(dx) + order(dy))
    }
}

/// Computes normals `grad(phi)/|grad(phi)|` and curvature `div(n)` on the band
/// `|phi| <= band_cells * h` (plus every node the ghost machinery reads), and
/// `grad(kappa) . n` at irregular nodes.
pub fn geometry_fields(
    ls: &LevelSetField,
    cls: &GridClassification,
    opts: &GeometryOptions,
) -> Result<GeometryFields> {
    let grid = ls.grid();
    let n = grid.len();
    let h = grid.h();
    let phi = ls.values();
    let band_width = opts.band_cells * h;

    let mut required = vec![false; n];
    for idx in 0..n {
        match cls.kind(idx) {
            NodeKind::Irregular => {
                required[idx] = true;
                for m in grid.neighbors4(idx) {
                    required[m] = true;
                }
            }
            NodeKind::Ghost1 | NodeKind::Ghost2 => required[idx] = true,
            _ => {}
        }
    }
    let in_band: Vec<bool> = (0..n).map(|k| phi[k].abs() <= band_width || required[k]).collect();

    let d = Differ { grid, f: phi };
    let mut normal = vec![[f64::NAN; 2]; n];
    let mut kappa = vec![f64::NAN; n];
    for idx in 0..n {
        if !in_band[idx] {
            continue;
        }
        let (i, j) = grid.coords(idx);
        let px = d.at(i, j, Some(Deriv::First), None);
        let py = d.at(i, j, None, Some(Deriv::First));
        let g2 = px * px + py * py;
        let g = g2.sqrt();
        if g < 1e-8 {
            if required[idx] {
                return Err(Error::DegenerateGradient { i, j, norm: g });
            }
            continue;
        }
        normal[idx] = [px / g, py / g];
        let pxx = d.at(i, j, Some(Deriv::Second), None);
        let pyy = d.at(i, j, None, Some(Deriv::Second));
        let pxy = d.at(i, j, Some(Deriv::First), Some(Deriv::First));
        let mut k = (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (g2 * g);
        if let Some(cap) = opts.curvature_cap {
            k = k.clamp(-cap / h, cap / h);
        }
        kappa[idx] = k;
    }

    let mut kappa_normal_deriv = Vec::with_capacity(cls.n_irregular());
    for &idx in cls.irregular_order() {
        let (i, j) = grid.coords(idx);
        let kx = (kappa[grid.index(i + 1, j)] - kappa[grid.index(i - 1, j)]) / (2.0 * h);
        let ky = (kappa[grid.index(i, j + 1)] - kappa[grid.index(i, j - 1)]) / (2.0 * h);
        let nn = normal[idx];
        let v = kx * nn[0] + ky * nn[1];
        if !v.is_finite() {
            return Err(Error::DegenerateGradient { i, j, norm: 0.0 });
        }
        kappa_normal_deriv.push(v);
    }

    Ok(GeometryFields {
        normal,
        kappa,
        kappa_normal_deriv,
        in_band,
        band_width,
    })
}

/// Closest-point projection `x* = x - phi(x) n(x)` with bilinearly
/// interpolated `phi` and `n`.
pub fn project_to_boundary(p: Point, ls: &LevelSetField, gf: &GeometryFields) -> Result<Point> {
    let grid = ls.grid();
    let o = grid.origin();
    let h = grid.h();
    let fx = ((p[0] - o[0]) / h).clamp(0.0, (grid.nx() - 1) as f64);
    let fy = ((p[1] - o[1]) / h).clamp(0.0, (grid.ny() - 1) as f64);
    let i = (fx.floor() as usize).min(grid.nx() - 2);
    let j = (fy.floor() as usize).min(grid.ny() - 2);
    let s = fx - i as f64;
    let t = fy - j as f64;
    let corners = [
        (grid.index(i, j), (1.0 - s) * (1.0 - t)),
        (grid.index(i + 1, j), s * (1.0 - t)),
        (grid.index(i, j + 1), (1.0 - s) * t),
        (grid.index(i + 1, j + 1), s * t),
    ];
    // corners outside the band are skipped; the normal is renormalized anyway
    let mut nrm = [0.0; 2];
    for (idx, w) in corners {
        if let Some(nv) = gf.normal(idx) {
            nrm[0] += w * nv[0];
            nrm[1] += w * nv[1];
        }
    }
    let len = nrm[0].hypot(nrm[1]);
    if len < 1e-12 {
        return Err(Error::DegenerateGradient { i, j, norm: len });
    }
    let phi = ls.interpolate(p);
    Ok([p[0] - phi * nrm[0] / len, p[1] - phi * nrm[1] / len])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_level_set, classify, Shape};

    fn setup(shape: &Shape, lo: f64, hi: f64, h: f64) -> (Grid2D, LevelSetField, GridClassification, GeometryFields) {
        let g = Grid2D::covering([lo, lo], [hi, hi], h).unwrap();
        let ls = build_level_set(&g, shape).unwrap();
        let cls = classify(&g, &ls).unwrap();
        let gf = geometry_fields(&ls, &cls, &GeometryOptions::default()).unwrap();
        (g, ls, cls, gf)
    }

    #[test]
    fn circle_normals_are_unit_and_radial() {
        let (g, _, _, gf) = setup(&Shape::circle(0.0, 0.0, 2.0), -3.0, 3.0, 0.125);
        let idx = g.index(38, 24); // (1.75, 0)
        assert!((gf.kappa(idx).unwrap() - 1.0 / 1.75).abs() < 2e-3);
        let n = gf.normal(idx).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-12 && n[1].abs() < 1e-12);
        for k in 0..g.len() {
            if let Some(n) = gf.normal(k) {
                assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn circle_curvature_converges_at_second_order() {
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for &h in &[0.05, 0.025, 0.0125] {
            let (g, _, cls, gf) = setup(&Shape::circle(0.0, 0.0, 2.0), -3.0, 3.0, h);
            let err = cls
                .irregular_order()
                .iter()
                .map(|&idx| {
                    let p = g.node_at(idx);
                    (gf.kappa(idx).unwrap() - 1.0 / p[0].hypot(p[1])).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
            hs.push(h);
        }
        let slope = crate::rates::loglog_slope(&hs, &errs);
        assert!((1.8..=2.2).contains(&slope), "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn flat_edge_has_zero_curvature() {
        let (g, ls, cls, gf) = setup(&Shape::rectangle(-1.0, -1.0, 1.0, 1.0), -1.6, 1.6, 0.1);
        for &idx in cls.irregular_order() {
            let p = g.node_at(idx);
            if p[0].abs() < 0.5 {
                assert!(gf.kappa(idx).unwrap().abs() < 1e-10);
                assert!(ls.values()[idx] < 0.0);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let (_, ls, _, gf) = setup(&Shape::circle(0.0, 0.0, 1.0), -2.0, 2.0, 0.1);
        let q = project_to_boundary([1.2, 0.0], &ls, &gf).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12 && q[1].abs() < 1e-12);
        let q = project_to_boundary([0.0, -1.3], &ls, &gf).unwrap();
        assert!(q[0].abs() < 1e-12 && (q[1] + 1.0).abs() < 1e-12);

        let shape = Shape::ellipse(1.5, 2.0);
        let (_, ls, _, gf) = setup(&shape, -3.0, 3.0, 0.05);
        let q = project_to_boundary([1.6, 0.1], &ls, &gf).unwrap();
        assert!(shape.signed_distance(q).unwrap().abs() <= 1e-3);
    }
}
