//! Ghost-folded finite-difference operators over the interior unknowns,
//! trapping potentials and the discrete Hamiltonian.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::extension::GhostMap;
use crate::geometry::{Grid2D, GridClassification, NodeKind, Point};
use crate::linalg::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Laplacian,
    GradientX,
    GradientY,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StencilOrder {
    Second,
    Fourth,
}

impl StencilOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
        }
    }
}

/// One-axis weights as `(offset, weight)`, without the `1/h` powers.
fn axis_weights(kind: OperatorKind, order: StencilOrder) -> &'static [(isize, f64)] {
    match (kind, order) {
        (OperatorKind::Laplacian, StencilOrder::Second) => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        (OperatorKind::Laplacian, StencilOrder::Fourth) => &[
            (-2, -1.0 / 12.0),
            (-1, 4.0 / 3.0),
            (0, -2.5),
            (1, 4.0 / 3.0),
            (2, -1.0 / 12.0),
        ],
        (_, StencilOrder::Second) => &[(-1, -0.5), (1, 0.5)],
        (_, StencilOrder::Fourth) => &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)],
    }
}

/// Full 2D stencil as `(di, dj, weight)` scaled by the proper power of `h`.
fn stencil(kind: OperatorKind, order: StencilOrder, h: f64) -> Vec<(isize, isize, f64)> {
    let w = axis_weights(kind, order);
    let mut out = Vec::new();
    match kind {
        OperatorKind::Laplacian => {
            let s = 1.0 / (h * h);
            for &(o, v) in w {
                if o == 0 {
                    out.push((0, 0, 2.0 * v * s));
                } else {
                    out.push((o, 0, v * s));
                    out.push((0, o, v * s));
                }
            }
        }
        OperatorKind::GradientX => out.extend(w.iter().map(|&(o, v)| (o, 0, v / h))),
        OperatorKind::GradientY => out.extend(w.iter().map(|&(o, v)| (0, o, v / h))),
    }
    out
}

/// Operator on interior unknowns (interior order). `folded` already carries
/// the ghost map; the unfolded split is kept for operators that need their
/// own ghost values, such as the Laplacian of `u^2`.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    kind: OperatorKind,
    order: StencilOrder,
    folded: CsrMatrix,
    interior_part: CsrMatrix,
    ghost_part: CsrMatrix,
    ghost_map: Arc<GhostMap>,
    /// Interior slot of each irregular node.
    irregular_to_interior: Vec<usize>,
}

impl SparseOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn order(&self) -> StencilOrder {
        self.order
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.folded
    }

    /// Interior rows, interior columns.
    pub fn interior_part(&self) -> &CsrMatrix {
        &self.interior_part
    }

    /// Interior rows, ghost columns.
    pub fn ghost_part(&self) -> &CsrMatrix {
        &self.ghost_part
    }

    pub fn ghost_map(&self) -> &GhostMap {
        &self.ghost_map
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.folded.mul_vec(u)
    }

    /// Ghost values the map assigns to an interior field.
    pub fn ghost_values(&self, u: &[f64]) -> Vec<f64> {
        let irr: Vec<f64> = self.irregular_to_interior.iter().map(|&s| u[s]).collect();
        self.ghost_map.apply(&irr)
    }

    /// Applies the stencil with explicitly supplied ghost values.
    pub fn apply_with_ghosts(&self, u: &[f64], ghosts: &[f64]) -> Vec<f64> {
        let mut out = self.interior_part.mul_vec(u);
        let g = self.ghost_part.mul_vec(ghosts);
        out.iter_mut().zip(&g).for_each(|(o, v)| *o += v);
        out
    }
}

fn assemble(
    grid: &Grid2D,
    cls: &GridClassification,
    ghost_map: Arc<GhostMap>,
    kind: OperatorKind,
    order: StencilOrder,
) -> Result<SparseOperator> {
    let (n_int, n_ghost, n_irr) = (cls.n_interior(), cls.n_ghost(), cls.n_irregular());
    let m = ghost_map.matrix();
    if m.nrows() != n_ghost || m.ncols() != n_irr {
        return Err(Error::DimensionMismatch(format!(
            "ghost map is {}x{}, classification has {} ghost and {} irregular nodes",
            m.nrows(),
            m.ncols(),
            n_ghost,
            n_irr
        )));
    }
    let st = stencil(kind, order, grid.h());
    let mut int_trip = Vec::with_capacity(n_int * st.len());
    let mut ghost_trip = Vec::new();
    for (row, &idx) in cls.interior_order().iter().enumerate() {
        for &(di, dj, w) in &st {
            let (i, j) = grid.coords(idx);
            let outside = || Error::StencilOutsideBand {
                i,
                j,
                ni: (i as isize + di) as usize,
                nj: (j as isize + dj) as usize,
            };
            let nb = grid.offset(idx, di, dj).ok_or_else(outside)?;
            match cls.kind(nb) {
                NodeKind::Regular | NodeKind::Irregular => {
                    int_trip.push((row, cls.interior_slot(nb).unwrap(), w));
                }
                NodeKind::Ghost1 => ghost_trip.push((row, cls.ghost_slot(nb).unwrap(), w)),
                NodeKind::Ghost2 if order == StencilOrder::Fourth => {
                    ghost_trip.push((row, cls.ghost_slot(nb).unwrap(), w))
                }
                // held at the boundary value zero
                NodeKind::Pinned => {}
                _ => return Err(outside()),
            }
        }
    }
    let interior_part = CsrMatrix::from_triplets(n_int, n_int, &int_trip);
    let ghost_part = CsrMatrix::from_triplets(n_int, n_ghost, &ghost_trip);
    let irregular_to_interior: Vec<usize> = cls
        .irregular_order()
        .iter()
        .map(|&idx| cls.interior_slot(idx).unwrap())
        .collect();

    let through_map = ghost_part.matmul(m)?;
    let mut trip: Vec<(usize, usize, f64)> = interior_part.triplets().collect();
    trip.extend(through_map.triplets().map(|(r, k, v)| (r, irregular_to_interior[k], v)));
    let folded = CsrMatrix::from_triplets(n_int, n_int, &trip);
    Ok(SparseOperator {
        kind,
        order,
        folded,
        interior_part,
        ghost_part,
        ghost_map,
        irregular_to_interior,
    })
}

/// Folded Laplacian approximating `+Laplace`.
pub fn assemble_laplacian(
    grid: &Grid2D,
    cls: &GridClassification,
    ghost_map: Arc<GhostMap>,
    order: StencilOrder,
) -> Result<SparseOperator> {
    assemble(grid, cls, ghost_map, OperatorKind::Laplacian, order)
}

/// Folded centred gradient `(d/dx, d/dy)`.
pub fn assemble_gradient(
    grid: &Grid2D,
    cls: &GridClassification,
    ghost_map: Arc<GhostMap>,
    order: StencilOrder,
) -> Result<(SparseOperator, SparseOperator)> {
    Ok((
        assemble(grid, cls, ghost_map.clone(), OperatorKind::GradientX, order)?,
        assemble(grid, cls, ghost_map, OperatorKind::GradientY, order)?,
    ))
}

pub type PotentialFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Trapping potentials used by the experiments.
#[derive(Clone)]
pub enum Potential {
    /// `V = 0`: confinement by the domain alone.
    Zero,
    /// `(gx x^2 + gy y^2) / 2`.
    Harmonic { gx: f64, gy: f64 },
    /// `(x^2 + y^2) / 2 + amplitude (sin^2(k x) + sin^2(k y))`.
    HarmonicLattice { amplitude: f64, wavenumber: f64 },
    /// `amplitude exp(-ax (x - cx)^2 - ay (y - cy)^2)`.
    GaussianObstacle { amplitude: f64, center: Point, ax: f64, ay: f64 },
    /// `1 - cos(k r)`.
    QuantumPendulum { wavenumber: f64 },
    /// `amplitude (x^2 / a^2 + y^2 / b^2 - offset)^2`.
    EllipseShaped { amplitude: f64, a: f64, b: f64, offset: f64 },
    Custom { label: String, f: PotentialFn },
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl Potential {
    pub fn harmonic() -> Self {
        Potential::Harmonic { gx: 1.0, gy: 1.0 }
    }

    pub fn harmonic_lattice() -> Self {
        Potential::HarmonicLattice {
            amplitude: 50.0,
            wavenumber: std::f64::consts::PI,
        }
    }

    pub fn gaussian_obstacle() -> Self {
        Potential::GaussianObstacle {
            amplitude: 4.0,
            center: [-0.35, 0.0],
            ax: 2.0,
            ay: 1.0,
        }
    }

    pub fn quantum_pendulum() -> Self {
        Potential::QuantumPendulum {
            wavenumber: 2.0 * std::f64::consts::PI,
        }
    }

    pub fn ellipse_shaped() -> Self {
        Potential::EllipseShaped {
            amplitude: 4.0,
            a: 2.0,
            b: 1.5,
            offset: 0.3,
        }
    }

    pub fn custom(label: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Potential::Custom {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Harmonic { gx, gy } => 0.5 * (gx * x * x + gy * y * y),
            Potential::HarmonicLattice { amplitude, wavenumber } => {
                let (sx, sy) = ((wavenumber * x).sin(), (wavenumber * y).sin());
                0.5 * (x * x + y * y) + amplitude * (sx * sx + sy * sy)
            }
            Potential::GaussianObstacle { amplitude, center, ax, ay } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                amplitude * (-ax * dx * dx - ay * dy * dy).exp()
            }
            Potential::QuantumPendulum { wavenumber } => 1.0 - (wavenumber * x.hypot(y)).cos(),
            Potential::EllipseShaped { amplitude, a, b, offset } => {
                let q = x * x / (a * a) + y * y / (b * b) - offset;
                amplitude * q * q
            }
            Potential::Custom { f, .. } => f(x, y),
        }
    }

    /// Location of the maximum for potentials with a single peak.
    pub fn peak(&self) -> Option<Point> {
        match self {
            Potential::GaussianObstacle { center, .. } => Some(*center),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Potential::Zero => "box",
            Potential::Harmonic { .. } => "harmonic",
            Potential::HarmonicLattice { .. } => "harmonic_lattice",
            Potential::GaussianObstacle { .. } => "gaussian_obstacle",
            Potential::QuantumPendulum { .. } => "quantum_pendulum",
            Potential::EllipseShaped { .. } => "ellipse_shaped",
            Potential::Custom { .. } => "custom",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Potential::Zero => "box()".into(),
            Potential::Harmonic { gx, gy } => format!("harmonic({gx}, {gy})"),
            Potential::HarmonicLattice { amplitude, wavenumber } => {
                format!("harmonic_lattice({amplitude}, {wavenumber})")
            }
            Potential::GaussianObstacle { amplitude, center, ax, ay } => {
                format!("gaussian_obstacle({amplitude}, {}, {}, {ax}, {ay})", center[0], center[1])
            }
            Potential::QuantumPendulum { wavenumber } => format!("quantum_pendulum({wavenumber})"),
            Potential::EllipseShaped { amplitude, a, b, offset } => {
                format!("ellipse_shaped({amplitude}, {a}, {b}, {offset})")
            }
            Potential::Custom { label, .. } => label.clone(),
        }
    }
}

/// Potential sampled at the interior nodes.
#[derive(Clone, Debug)]
pub struct PotentialField {
    values: Vec<f64>,
    descriptor: Potential,
}

impl PotentialField {
    pub fn sample(potential: &Potential, grid: &Grid2D, cls: &GridClassification) -> Result<Self> {
        let mut values = Vec::with_capacity(cls.n_interior());
        for &idx in cls.interior_order() {
            let [x, y] = grid.node_at(idx);
            let v = potential.eval(x, y);
            if !(v >= 0.0) {
                return Err(Error::NegativePotential { x, y, value: v });
            }
            values.push(v);
        }
        Ok(Self {
            values,
            descriptor: potential.clone(),
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            descriptor: Potential::Zero,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn descriptor(&self) -> &Potential {
        &self.descriptor
    }
}

/// Interaction strengths. `quintic` and `hoi` are zero unless that model is active.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Couplings {
    pub beta: f64,
    pub quintic: f64,
    pub hoi: f64,
}

/// `(-L/2 + V + beta u^2 + gamma u^4 - delta Laplace(u^2)) u`, where the
/// Laplacian of `u^2` uses the squares of the mapped ghost values of `u`.
pub fn apply_hamiltonian(
    u: &[f64],
    lap: &SparseOperator,
    potential: &PotentialField,
    couplings: Couplings,
) -> Result<Vec<f64>> {
    let n = lap.matrix().nrows();
    if u.len() != n || potential.values().len() != n {
        return Err(Error::DimensionMismatch(format!(
            "hamiltonian on {n} unknowns got u of {} and V of {}",
            u.len(),
            potential.values().len()
        )));
    }
    let lu = lap.apply(u);
    let lap_sq = (couplings.hoi != 0.0).then(|| {
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        let gsq: Vec<f64> = lap.ghost_values(u).iter().map(|g| g * g).collect();
        lap.apply_with_ghosts(&sq, &gsq)
    });
    let v = potential.values();
    Ok((0..n)
        .map(|i| {
            let u2 = u[i] * u[i];
            let mut local = v[i] + couplings.beta * u2 + couplings.quintic * u2 * u2;
            if let Some(ls) = &lap_sq {
                local -= couplings.hoi * ls[i];
            }
            -0.5 * lu[i] + local * u[i]
        })
        .collect())
}
