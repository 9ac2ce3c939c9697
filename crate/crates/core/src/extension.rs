//! Constant extension of irregular-node data along normals into the two ghost
//! layers, and the explicit ghost-value maps built from it.
//!
//! The extension solves `u_t + n . grad(u) = 0` on the ghost nodes by
//! first-order upwinding in pseudo-time, with irregular values held fixed.
//! Linearity makes it a matrix `A` (ghost rows, irregular columns); the ghost
//! maps combine `A` with diagonal geometry factors.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{GeometryFields, Grid2D, GridClassification, LevelSetField};
use crate::linalg::CsrMatrix;

/// Entries of `A` below this magnitude are dropped.
pub const DROP_TOLERANCE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct ExtensionConfig {
    /// Stop once the largest per-node update of a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_sweeps: 200,
        }
    }
}

impl ExtensionConfig {
    /// Columns of `A` are converged 100x tighter, so that `A v` agrees with a
    /// direct extension of `v` to within the field tolerance even after the
    /// per-column errors add up.
    pub fn for_columns(&self) -> Self {
        Self {
            tol: self.tol * 1e-2,
            max_sweeps: self.max_sweeps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Source {
    Irregular(usize),
    Ghost(usize),
}

/// Upwind stencil of every ghost node: `u_g <- u_g + 1/2 sum_s w_s (u_s - u_g)`.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    offsets: Vec<usize>,
    sources: Vec<(Source, f64)>,
    n_irregular: usize,
    /// Ghost slots that read each irregular node.
    readers_of_irregular: Vec<Vec<usize>>,
    /// Ghost slots that read each ghost node.
    readers_of_ghost: Vec<Vec<usize>>,
}

impl TransportPlan {
    pub fn new(grid: &Grid2D, ls: &LevelSetField, cls: &GridClassification, gf: &GeometryFields) -> Result<Self> {
        let phi = ls.values();
        let source_of = |idx: usize| -> Option<Source> {
            cls.irregular_slot(idx)
                .map(Source::Irregular)
                .or_else(|| cls.ghost_slot(idx).map(Source::Ghost))
        };
        let mut offsets = vec![0];
        let mut sources = Vec::new();
        for &g in cls.ghost_order() {
            let (i, j) = grid.coords(g);
            let n = gf.normal(g).ok_or(Error::DegenerateGradient { i, j, norm: f64::NAN })?;
            let sx = n[0].signum() as isize;
            let sy = n[1].signum() as isize;
            let mut terms: Vec<(Source, f64)> = Vec::with_capacity(2);
            if n[0] != 0.0 {
                if let Some(s) = grid.offset(g, -sx, 0).and_then(source_of) {
                    terms.push((s, n[0].abs()));
                }
            }
            if n[1] != 0.0 {
                if let Some(s) = grid.offset(g, 0, -sy).and_then(source_of) {
                    terms.push((s, n[1].abs()));
                }
            }
            let wanted = (n[0] != 0.0) as usize + (n[1] != 0.0) as usize;
            if terms.len() < wanted {
                // outflow corner: a lone surviving axis takes the full weight
                if let [(s, _)] = terms[..] {
                    terms = vec![(s, 1.0)];
                } else {
                    terms = vec![(fallback_source(grid, phi, g, sx, sy, &source_of)?, 1.0)];
                }
            }
            sources.extend(terms);
            offsets.push(sources.len());
        }

        let mut readers_of_irregular = vec![Vec::new(); cls.n_irregular()];
        let mut readers_of_ghost = vec![Vec::new(); cls.n_ghost()];
        for gs in 0..cls.n_ghost() {
            for &(s, _) in &sources[offsets[gs]..offsets[gs + 1]] {
                let list = match s {
                    Source::Irregular(k) => &mut readers_of_irregular[k],
                    Source::Ghost(k) => &mut readers_of_ghost[k],
                };
                if list.last() != Some(&gs) {
                    list.push(gs);
                }
            }
        }
        Ok(Self {
            offsets,
            sources,
            n_irregular: cls.n_irregular(),
            readers_of_irregular,
            readers_of_ghost,
        })
    }

    pub fn n_ghost(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_irregular(&self) -> usize {
        self.n_irregular
    }

    fn stencil(&self, gs: usize) -> &[(Source, f64)] {
        &self.sources[self.offsets[gs]..self.offsets[gs + 1]]
    }

    #[inline]
    fn update(&self, gs: usize, irregular: &[f64], ghost: &[f64]) -> f64 {
        let u = ghost[gs];
        let mut acc = 0.0;
        for &(s, w) in self.stencil(gs) {
            let us = match s {
                Source::Irregular(k) => irregular[k],
                Source::Ghost(k) => ghost[k],
            };
            acc += w * (us - u);
        }
        u + 0.5 * acc
    }

    /// Jacobi sweeps over the listed ghost slots; every other ghost value is
    /// taken as zero and never changes.
    fn iterate(
        &self,
        active: &[usize],
        irregular: &[f64],
        ghost: &mut [f64],
        scratch: &mut [f64],
        cfg: &ExtensionConfig,
        column: Option<usize>,
    ) -> Result<usize> {
        let mut residual = f64::INFINITY;
        for sweep in 1..=cfg.max_sweeps {
            residual = 0.0;
            for &gs in active {
                let v = self.update(gs, irregular, ghost);
                residual = residual.max((v - ghost[gs]).abs());
                scratch[gs] = v;
            }
            for &gs in active {
                ghost[gs] = scratch[gs];
            }
            if residual < cfg.tol {
                return Ok(sweep);
            }
        }
        Err(Error::ExtensionNotConverged {
            column,
            residual,
            sweeps: cfg.max_sweeps,
        })
    }

    /// Extends irregular-node values (irregular order) to all ghost nodes
    /// (ghost order), starting from zero ghost values.
    pub fn extend(&self, irregular: &[f64], cfg: &ExtensionConfig) -> Result<Vec<f64>> {
        if irregular.len() != self.n_irregular {
            return Err(Error::DimensionMismatch(format!(
                "extension input has {} values for {} irregular nodes",
                irregular.len(),
                self.n_irregular
            )));
        }
        let n = self.n_ghost();
        let all: Vec<usize> = (0..n).collect();
        let mut ghost = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        self.iterate(&all, irregular, &mut ghost, &mut scratch, cfg, None)?;
        Ok(ghost)
    }

    /// Builds `A` column by column. Each column only iterates on the ghost
    /// nodes downstream of its irregular node; the rest stay exactly zero in
    /// a full sweep too, so the result is bit-identical to `extend(e_k)` run
    /// with [`ExtensionConfig::for_columns`].
    pub fn extension_matrix(&self, cfg: &ExtensionConfig) -> Result<ExtensionMatrix> {
        let cfg = &cfg.for_columns();
        let n = self.n_ghost();
        let mut triplets = Vec::new();
        let mut ghost = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut irregular = vec![0.0; self.n_irregular];
        let mut seen = vec![false; n];
        let mut active = Vec::new();
        let mut queue = VecDeque::new();
        for k in 0..self.n_irregular {
            active.clear();
            for &gs in &self.readers_of_irregular[k] {
                if !seen[gs] {
                    seen[gs] = true;
                    queue.push_back(gs);
                }
            }
            while let Some(gs) = queue.pop_front() {
                active.push(gs);
                for &r in &self.readers_of_ghost[gs] {
                    if !seen[r] {
                        seen[r] = true;
                        queue.push_back(r);
                    }
                }
            }
            active.sort_unstable();

            irregular[k] = 1.0;
            self.iterate(&active, &irregular, &mut ghost, &mut scratch, cfg, Some(k))?;
            irregular[k] = 0.0;
            for &gs in &active {
                if ghost[gs].abs() >= DROP_TOLERANCE {
                    triplets.push((gs, k, ghost[gs]));
                }
                ghost[gs] = 0.0;
                seen[gs] = false;
            }
        }
        Ok(ExtensionMatrix {
            matrix: CsrMatrix::from_triplets(n, self.n_irregular, &triplets),
        })
    }
}

/// Diagonal upwind node if it is in the band, otherwise the band neighbour
/// (8-connected) deepest inside the domain.
fn fallback_source(
    grid: &Grid2D,
    phi: &[f64],
    g: usize,
    sx: isize,
    sy: isize,
    source_of: &impl Fn(usize) -> Option<Source>,
) -> Result<Source> {
    if sx != 0 && sy != 0 {
        if let Some(s) = grid.offset(g, -sx, -sy).and_then(source_of) {
            return Ok(s);
        }
    }
    let mut best: Option<(f64, Source)> = None;
    for dj in -1..=1 {
        for di in -1..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let Some(m) = grid.offset(g, di, dj) else { continue };
            let Some(s) = source_of(m) else { continue };
            if best.is_none_or(|(p, _)| phi[m] < p) {
                best = Some((phi[m], s));
            }
        }
    }
    best.map(|(_, s)| s).ok_or_else(|| {
        let (i, j) = grid.coords(g);
        Error::StencilOutsideBand { i, j, ni: i, nj: j }
    })
}

/// Convenience wrapper around [`TransportPlan::extend`].
pub fn extend_field(
    irregular: &[f64],
    ls: &LevelSetField,
    cls: &GridClassification,
    gf: &GeometryFields,
    cfg: &ExtensionConfig,
) -> Result<Vec<f64>> {
    TransportPlan::new(ls.grid(), ls, cls, gf)?.extend(irregular, cfg)
}

/// `A`: ghost rows, irregular columns. Rows are convex combinations up to
/// the transport tolerance.
#[derive(Clone, Debug)]
pub struct ExtensionMatrix {
    matrix: CsrMatrix,
}

impl ExtensionMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n_ghost(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_irregular(&self) -> usize {
        self.matrix.ncols()
    }

    /// `max_r |sum_c A_rc - 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        self.matrix.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.matrix.values().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn build_extension_matrix(
    ls: &LevelSetField,
    cls: &GridClassification,
    gf: &GeometryFields,
    cfg: &ExtensionConfig,
) -> Result<ExtensionMatrix> {
    TransportPlan::new(ls.grid(), ls, cls, gf)?.extension_matrix(cfg)
}

#[derive(Clone, Debug)]
pub struct DiagonalFactors {
    /// Boundary curvature transported to the irregular node, `kappa - phi grad(kappa).n`.
    pub c: Vec<f64>,
    /// `1 / (phi - c phi^2 / 2)` per irregular node.
    pub gain: Vec<f64>,
    /// Level set at ghost nodes.
    pub phi_ghost: Vec<f64>,
    /// Level set at irregular nodes.
    pub phi_irregular: Vec<f64>,
}

pub fn build_diagonal_factors(
    ls: &LevelSetField,
    cls: &GridClassification,
    gf: &GeometryFields,
) -> Result<DiagonalFactors> {
    let grid = ls.grid();
    let h = grid.h();
    let phi = ls.values();
    let knd = gf.kappa_normal_deriv();
    let mut c = Vec::with_capacity(cls.n_irregular());
    let mut gain = Vec::with_capacity(cls.n_irregular());
    let mut phi_irregular = Vec::with_capacity(cls.n_irregular());
    for (slot, &idx) in cls.irregular_order().iter().enumerate() {
        let (i, j) = grid.coords(idx);
        let p = phi[idx];
        let kappa = gf.kappa(idx).ok_or(Error::DegenerateGradient { i, j, norm: f64::NAN })?;
        let ck = kappa - p * knd[slot];
        let denom = p * (1.0 - 0.5 * ck * p);
        if !(denom.abs() > 1e-14 * h) || !denom.is_finite() {
            return Err(Error::GainBlowUp { i, j, phi: p, c: ck });
        }
        c.push(ck);
        gain.push(1.0 / denom);
        phi_irregular.push(p);
    }
    let phi_ghost = cls.ghost_order().iter().map(|&g| phi[g]).collect();
    Ok(DiagonalFactors {
        c,
        gain,
        phi_ghost,
        phi_irregular,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GhostMapOrder {
    /// `u_g = phi_g (A (u / phi))_g`, first order in the normal derivative.
    Linear,
    /// Normal Taylor expansion to second order with the `u = 0`, `Laplace u = 0`
    /// boundary conditions: `Phi (A - Phi A C / 2) G`.
    Cubic,
}

impl GhostMapOrder {
    pub fn label(self) -> &'static str {
        match self {
            GhostMapOrder::Linear => "linear",
            GhostMapOrder::Cubic => "cubic",
        }
    }
}

/// Explicit map from irregular values to ghost values.
#[derive(Clone, Debug)]
pub struct GhostMap {
    matrix: CsrMatrix,
    order: GhostMapOrder,
}

impl GhostMap {
    pub fn new(matrix: CsrMatrix, order: GhostMapOrder) -> Self {
        Self { matrix, order }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn order(&self) -> GhostMapOrder {
        self.order
    }

    /// Ghost values (ghost order) from irregular values (irregular order).
    pub fn apply(&self, irregular: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(irregular)
    }

    /// Writes a `# ghost-map <order>` line followed by the triplet listing.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# ghost-map {}", self.order.label())?;
        self.matrix.write_triplets(w)
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<Self> {
        let mut first = String::new();
        r.read_line(&mut first)?;
        let order = match first.trim().strip_prefix("# ghost-map ") {
            Some("linear") => GhostMapOrder::Linear,
            Some("cubic") => GhostMapOrder::Cubic,
            _ => return Err(Error::Parse(format!("not a ghost-map file: `{}`", first.trim()))),
        };
        Ok(Self {
            matrix: CsrMatrix::read_triplets(r)?,
            order,
        })
    }
}

pub fn assemble_ghost_map(a: &ExtensionMatrix, f: &DiagonalFactors, order: GhostMapOrder) -> Result<GhostMap> {
    let m = a.matrix();
    if f.phi_ghost.len() != m.nrows() || f.gain.len() != m.ncols() || f.c.len() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "extension matrix {}x{} against factors for {} ghost / {} irregular nodes",
            m.nrows(),
            m.ncols(),
            f.phi_ghost.len(),
            f.gain.len()
        )));
    }
    let mut triplets = Vec::with_capacity(m.nnz());
    for (l, k, v) in m.triplets() {
        let pl = f.phi_ghost[l];
        let entry = match order {
            GhostMapOrder::Linear => pl * v / f.phi_irregular[k],
            GhostMapOrder::Cubic => pl * v * (1.0 - 0.5 * pl * f.c[k]) * f.gain[k],
        };
        triplets.push((l, k, entry));
    }
    Ok(GhostMap {
        matrix: CsrMatrix::from_triplets(m.nrows(), m.ncols(), &triplets),
        order,
    })
}
