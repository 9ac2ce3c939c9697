//! Backward-Euler finite-difference (BEFD) normalized gradient flow.
//!
//! Phase 1 runs with the second-order Laplacian folded with the linear ghost
//! map; from its steady state, phase 2 switches to the fourth-order
//! Laplacian folded with the cubic ghost map.

use std::sync::Arc;

use log::{debug, info, warn};

use crate::error::{Error, Result};
use crate::extension::{
    assemble_ghost_map, build_diagonal_factors, build_extension_matrix, ExtensionConfig, GhostMap, GhostMapOrder,
};
use crate::geometry::{
    build_level_set, classify, geometry_fields, GeometryFields, GeometryOptions, Grid2D, GridClassification,
    LevelSetField, Shape,
};
use crate::linalg::{smallest_eigenpairs, solve_linear, CsrMatrix, EigenConfig, EigenPair, PreconditionerKind, SolverConfig};
use crate::operators::{
    apply_hamiltonian, assemble_gradient, assemble_laplacian, Couplings, Potential, PotentialField, SparseOperator,
    StencilOrder,
};
use crate::quadrature::{self, build_weights, chemical_potential, lp_norm, QuadratureWeights};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Cubic,
    /// Cubic model in the variable `z = sqrt(beta) u`, normalized to `||z|| = sqrt(beta)`.
    CubicRescaled,
    CubicQuintic,
    /// Higher-order interaction with the convex-concave split.
    HoiSplit,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Cubic => "cubic",
            ModelKind::CubicRescaled => "cubic-rescaled",
            ModelKind::CubicQuintic => "cubic-quintic",
            ModelKind::HoiSplit => "hoi-split",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl ModelSpec {
    pub fn cubic(beta: f64) -> Self {
        Self {
            kind: ModelKind::Cubic,
            beta,
            gamma: 0.0,
            delta: 0.0,
        }
    }

    pub fn rescaled(beta: f64) -> Self {
        Self {
            kind: ModelKind::CubicRescaled,
            ..Self::cubic(beta)
        }
    }

    pub fn cubic_quintic(beta: f64, gamma: f64) -> Self {
        Self {
            kind: ModelKind::CubicQuintic,
            beta,
            gamma,
            delta: 0.0,
        }
    }

    pub fn hoi(beta: f64, delta: f64) -> Self {
        Self {
            kind: ModelKind::HoiSplit,
            beta,
            gamma: 0.0,
            delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("delta", self.delta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.gamma != 0.0 && self.kind != ModelKind::CubicQuintic {
            return Err(Error::InvalidModel("gamma is only used by the cubic-quintic model".into()));
        }
        if self.delta != 0.0 && self.kind != ModelKind::HoiSplit {
            return Err(Error::InvalidModel("delta is only used by the hoi-split model".into()));
        }
        if self.kind == ModelKind::CubicRescaled && self.beta <= 0.0 {
            return Err(Error::InvalidModel("the rescaled model needs beta > 0".into()));
        }
        Ok(())
    }

    pub fn couplings(&self) -> Couplings {
        Couplings {
            beta: self.beta,
            quintic: self.gamma,
            hoi: self.delta,
        }
    }

    /// All interaction strengths multiplied by `f`.
    pub fn scaled(&self, f: f64) -> Self {
        Self {
            beta: self.beta * f,
            gamma: self.gamma * f,
            delta: self.delta * f,
            ..*self
        }
    }

    /// Norm of the flow variable: `sqrt(beta)` for the rescaled model, 1 otherwise.
    pub fn scale(&self) -> f64 {
        if self.kind == ModelKind::CubicRescaled {
            self.beta.sqrt()
        } else {
            1.0
        }
    }
}

/// Operators used by one phase of the flow.
#[derive(Clone, Debug)]
pub struct PhaseOperators {
    pub laplacian: SparseOperator,
    pub grad_x: SparseOperator,
    pub grad_y: SparseOperator,
}

impl PhaseOperators {
    fn build(grid: &Grid2D, cls: &GridClassification, map: Arc<GhostMap>, order: StencilOrder) -> Result<Self> {
        let laplacian = assemble_laplacian(grid, cls, map.clone(), order)?;
        let (grad_x, grad_y) = assemble_gradient(grid, cls, map, order)?;
        Ok(Self {
            laplacian,
            grad_x,
            grad_y,
        })
    }

    pub fn grads(&self) -> (&SparseOperator, &SparseOperator) {
        (&self.grad_x, &self.grad_y)
    }

    /// `-L/2 + diag(V)`.
    pub fn linear_hamiltonian(&self, v: &PotentialField) -> CsrMatrix {
        let l = self.laplacian.matrix().scale(-0.5);
        l.add(&CsrMatrix::from_diagonal(v.values())).expect("square operators of equal size")
    }
}

#[derive(Clone, Debug, Default)]
pub struct DiscretizationOptions {
    pub geometry: GeometryOptions,
    pub extension: ExtensionConfig,
}

/// Everything the flow needs at one resolution. Immutable once built.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub grid: Grid2D,
    pub level_set: LevelSetField,
    pub classification: GridClassification,
    pub geometry: GeometryFields,
    pub weights: QuadratureWeights,
    pub potential: PotentialField,
    pub linear_map: Arc<GhostMap>,
    pub cubic_map: Arc<GhostMap>,
    pub phase1: PhaseOperators,
    pub phase2: PhaseOperators,
}

impl Discretization {
    pub fn build(grid: Grid2D, shape: &Shape, potential: &Potential, opts: &DiscretizationOptions) -> Result<Self> {
        let level_set = build_level_set(&grid, shape)?;
        let classification = classify(&grid, &level_set)?;
        if classification.n_interior() == 0 {
            return Err(Error::InvalidShape("no grid node lies inside the domain".into()));
        }
        let geometry = geometry_fields(&level_set, &classification, &opts.geometry)?;
        let ext = build_extension_matrix(&level_set, &classification, &geometry, &opts.extension)?;
        let factors = build_diagonal_factors(&level_set, &classification, &geometry)?;
        let linear_map = Arc::new(assemble_ghost_map(&ext, &factors, GhostMapOrder::Linear)?);
        let cubic_map = Arc::new(assemble_ghost_map(&ext, &factors, GhostMapOrder::Cubic)?);
        let phase1 = PhaseOperators::build(&grid, &classification, linear_map.clone(), StencilOrder::Second)?;
        let phase2 = PhaseOperators::build(&grid, &classification, cubic_map.clone(), StencilOrder::Fourth)?;
        let weights = build_weights(&level_set, &classification);
        let potential = PotentialField::sample(potential, &grid, &classification)?;
        debug!(
            "discretization h={} interior={} irregular={} ghost={}",
            grid.h(),
            classification.n_interior(),
            classification.n_irregular(),
            classification.n_ghost()
        );
        Ok(Self {
            grid,
            level_set,
            classification,
            geometry,
            weights,
            potential,
            linear_map,
            cubic_map,
            phase1,
            phase2,
        })
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    pub fn n_unknowns(&self) -> usize {
        self.classification.n_interior()
    }

    pub fn phase(&self, phase: u8) -> &PhaseOperators {
        if phase == 1 {
            &self.phase1
        } else {
            &self.phase2
        }
    }

    /// Normalizes in the quadrature norm.
    pub fn normalize(&self, u: &mut [f64]) {
        let n = lp_norm(u, &self.weights, 2);
        u.iter_mut().for_each(|v| *v /= n);
    }

    /// `mu` and `E` of a normalized field with the given phase's operators.
    pub fn observables(&self, u: &[f64], model: &ModelSpec, phase: u8) -> Result<(f64, f64)> {
        let ops = self.phase(phase);
        let c = model.couplings();
        let hu = apply_hamiltonian(u, &ops.laplacian, &self.potential, c)?;
        let mu = chemical_potential(u, &hu, &self.weights)?;
        let e = quadrature::energy(mu, u, &self.weights, c, Some(ops.grads()))?;
        Ok((mu, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeStep {
    /// `dt = h`.
    GridSpacing,
    Fixed(f64),
    /// `dt = factor * h`.
    Multiple(f64),
}

impl TimeStep {
    pub fn resolve(self, h: f64) -> f64 {
        match self {
            TimeStep::GridSpacing => h,
            TimeStep::Fixed(dt) => dt,
            TimeStep::Multiple(f) => f * h,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitPolicy {
    /// Linear ground state for `beta <= 1`, Thomas-Fermi for `beta >= 100`,
    /// continuation in between.
    Auto,
    Linear,
    ThomasFermi,
    Continuation,
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub time_step: TimeStep,
    pub tol_phase1: f64,
    pub tol_phase2: f64,
    pub max_steps: usize,
    pub init: InitPolicy,
    pub continuation_rungs: usize,
    pub continuation_tol: f64,
    /// `None`: rescale the cubic model when `beta >= 100`.
    pub rescale: Option<bool>,
    pub solver: SolverConfig,
    pub eigen: EigenConfig,
}

/// Time step of the interaction-corrected model, which is only conditionally stable.
pub const HOI_TIME_STEP: f64 = 1e-3;

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            time_step: TimeStep::GridSpacing,
            tol_phase1: 1e-8,
            tol_phase2: 1e-8,
            max_steps: 1_000_000,
            init: InitPolicy::Auto,
            continuation_rungs: 4,
            continuation_tol: 1e-6,
            rescale: None,
            solver: SolverConfig {
                rel_tol: 1e-12,
                abs_tol: 1e-14,
                max_iters: Some(5_000),
                preconditioner: PreconditionerKind::Jacobi,
            },
            eigen: EigenConfig {
                tol: 1e-11,
                ..EigenConfig::default()
            },
        }
    }
}

impl FlowConfig {
    /// Defaults with the model-specific time step.
    pub fn for_model(model: &ModelSpec) -> Self {
        let mut cfg = Self::default();
        if model.kind == ModelKind::HoiSplit {
            cfg.time_step = TimeStep::Fixed(HOI_TIME_STEP);
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_phase1 > 0.0 && self.tol_phase2 > 0.0 && self.continuation_tol > 0.0) {
            return Err(Error::InvalidModel("flow tolerances must be positive".into()));
        }
        match self.time_step {
            TimeStep::Fixed(v) | TimeStep::Multiple(v) if !(v > 0.0) => {
                return Err(Error::InvalidModel(format!("time step must be positive, got {v}")))
            }
            _ => {}
        }
        if self.continuation_rungs == 0 {
            return Err(Error::InvalidModel("continuation needs at least one rung".into()));
        }
        self.solver.validate()
    }

    /// Applies the rescaling policy to a cubic model.
    pub fn resolve_model(&self, model: &ModelSpec) -> ModelSpec {
        let rescale = self.rescale.unwrap_or(model.beta >= 100.0);
        match model.kind {
            ModelKind::Cubic if rescale && model.beta > 0.0 => ModelSpec {
                kind: ModelKind::CubicRescaled,
                ..*model
            },
            ModelKind::CubicRescaled if !rescale => ModelSpec {
                kind: ModelKind::Cubic,
                ..*model
            },
            _ => *model,
        }
    }
}

/// State of the flow. `field` is the flow variable: `u` with unit norm, or
/// `z = sqrt(beta) u` for the rescaled model.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub field: Vec<f64>,
    pub t: f64,
    pub step: usize,
    pub phase: u8,
    /// `max |u^{n+1} - u^n| / dt` of the last step, measured on the unit-norm field.
    pub last_residual: f64,
}

impl FlowState {
    pub fn new(u: Vec<f64>, model: &ModelSpec) -> Self {
        let s = model.scale();
        Self {
            field: u.into_iter().map(|v| v * s).collect(),
            t: 0.0,
            step: 0,
            phase: 1,
            last_residual: f64::INFINITY,
        }
    }

    /// The unit-norm wave function.
    pub fn u(&self, model: &ModelSpec) -> Vec<f64> {
        let s = model.scale();
        self.field.iter().map(|v| v / s).collect()
    }
}

/// One telemetry record per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub phase: u8,
    pub step: usize,
    pub t: f64,
    pub residual: f64,
    pub mu: f64,
    pub energy: f64,
    /// Quadrature norm of the unit-norm field after the step.
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub u: Vec<f64>,
    pub mu: f64,
    pub energy: f64,
    pub mu_phase1: f64,
    pub energy_phase1: f64,
    pub steps_phase1: usize,
    pub steps_phase2: usize,
    pub dt: f64,
    pub model: ModelSpec,
    pub init: InitPolicy,
    pub history: Vec<StepRecord>,
}

impl FlowResult {
    pub fn residual_history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().map(|r| r.residual)
    }

    pub fn energy_history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().map(|r| r.energy)
    }
}

/// `k` smallest eigenpairs of `-L/2 + V` for a phase, vectors normalized in
/// the quadrature norm with positive largest entry.
pub fn linear_eigenstates(disc: &Discretization, phase: u8, k: usize, cfg: &EigenConfig) -> Result<Vec<EigenPair>> {
    let h = disc.phase(phase).linear_hamiltonian(&disc.potential);
    smallest_eigenpairs(&h, k, Some(disc.weights.interior()), cfg)
}

pub fn linear_ground_state(disc: &Discretization, cfg: &EigenConfig) -> Result<Vec<f64>> {
    let mut pairs = linear_eigenstates(disc, 1, 1, cfg)?;
    Ok(pairs.remove(0).vector)
}

/// `u = sqrt(max(0, (mu - V) / beta))` with `mu` chosen by bisection so that
/// `||u|| = 1`, then normalized exactly.
pub fn thomas_fermi_initial(v: &PotentialField, beta: f64, w: &QuadratureWeights) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::ThomasFermi(format!("needs beta > 0, got {beta}")));
    }
    let vals = v.values();
    let wts = w.interior();
    let mass = |mu: f64| -> f64 {
        vals.iter()
            .zip(wts)
            .map(|(&vi, &wi)| wi * ((mu - vi) / beta).max(0.0))
            .sum()
    };
    let vmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let total: f64 = wts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ThomasFermi("domain has no quadrature weight".into()));
    }
    let mut lo = vmin;
    let mut hi = vmin + beta / total;
    let mut expansions = 0;
    while mass(hi) < 1.0 {
        hi = vmin + 2.0 * (hi - vmin);
        expansions += 1;
        if expansions > 200 || !hi.is_finite() {
            return Err(Error::ThomasFermi(format!("no sign change up to mu = {hi}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = mass(mid);
        if (m.sqrt() - 1.0).abs() < 1e-12 {
            lo = mid;
            hi = mid;
            break;
        }
        if m < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut u: Vec<f64> = vals.iter().map(|&vi| ((mu - vi) / beta).max(0.0).sqrt()).collect();
    let n = lp_norm(&u, w, 2);
    u.iter_mut().for_each(|x| *x /= n);
    Ok(u)
}

/// Reusable BEFD matrix: the Laplacian pattern with known diagonal slots.
struct StepMatrix {
    matrix: CsrMatrix,
    lap_values: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl StepMatrix {
    fn new(lap: &CsrMatrix) -> Self {
        let diag_pos = (0..lap.nrows())
            .map(|i| lap.position(i, i).expect("stencil centre is always an interior node"))
            .collect();
        Self {
            matrix: lap.clone(),
            lap_values: lap.values().to_vec(),
            diag_pos,
        }
    }

    /// Sets the matrix to `diag(d) - diag(s) L`.
    fn fill(&mut self, s: &[f64], d: &[f64]) {
        let indptr = self.matrix.indptr().to_vec();
        let vals = self.matrix.values_mut();
        for i in 0..s.len() {
            for p in indptr[i]..indptr[i + 1] {
                vals[p] = -s[i] * self.lap_values[p];
            }
            vals[self.diag_pos[i]] += d[i];
        }
    }
}

/// One backward-Euler step followed by the normalization projection.
pub fn befd_step(
    state: &FlowState,
    model: &ModelSpec,
    ops: &PhaseOperators,
    v: &PotentialField,
    dt: f64,
    w: &QuadratureWeights,
    solver: &SolverConfig,
) -> Result<FlowState> {
    let mut sm = StepMatrix::new(ops.laplacian.matrix());
    befd_step_with(state, model, ops, v, dt, w, solver, &mut sm)
}

#[allow(clippy::too_many_arguments)]
fn befd_step_with(
    state: &FlowState,
    model: &ModelSpec,
    ops: &PhaseOperators,
    v: &PotentialField,
    dt: f64,
    w: &QuadratureWeights,
    solver: &SolverConfig,
    sm: &mut StepMatrix,
) -> Result<FlowState> {
    let x = &state.field;
    let n = x.len();
    if n != v.values().len() || n != ops.laplacian.matrix().nrows() {
        return Err(Error::DimensionMismatch(format!(
            "state of {n} unknowns against operators of {}",
            ops.laplacian.matrix().nrows()
        )));
    }
    let inv_dt = 1.0 / dt;
    let vv = v.values();
    let mut s = vec![0.5; n];
    let mut d = vec![0.0; n];
    let mut rhs: Vec<f64> = x.iter().map(|xi| xi * inv_dt).collect();
    match model.kind {
        ModelKind::Cubic => {
            for i in 0..n {
                d[i] = inv_dt + vv[i] + model.beta * x[i] * x[i];
            }
        }
        // |z|^2 already carries beta
        ModelKind::CubicRescaled => {
            for i in 0..n {
                d[i] = inv_dt + vv[i] + x[i] * x[i];
            }
        }
        ModelKind::CubicQuintic => {
            for i in 0..n {
                let x2 = x[i] * x[i];
                d[i] = inv_dt + vv[i] + model.beta * x2 + model.gamma * x2 * x2;
            }
        }
        ModelKind::HoiSplit => {
            let gx = ops.grad_x.apply(x);
            let gy = ops.grad_y.apply(x);
            for i in 0..n {
                let x2 = x[i] * x[i];
                s[i] = 0.5 + 2.0 * model.delta * x2;
                d[i] = inv_dt + vv[i] + model.beta * x2;
                rhs[i] += 2.0 * model.delta * (gx[i] * gx[i] + gy[i] * gy[i]) * x[i];
            }
        }
    }
    sm.fill(&s, &d);
    let (mut next, _) = solve_linear(&sm.matrix, &rhs, Some(x), solver)?;
    let norm = lp_norm(&next, w, 2);
    if !norm.is_finite() || norm == 0.0 || next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: state.step + 1 });
    }
    let scale = model.scale();
    next.iter_mut().for_each(|v| *v *= scale / norm);
    let residual = next
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / (dt * scale);
    Ok(FlowState {
        field: next,
        t: state.t + dt,
        step: state.step + 1,
        phase: state.phase,
        last_residual: residual,
    })
}

/// Runs one phase to `max |du| / dt < tol`. Appends telemetry to `history`.
#[allow(clippy::too_many_arguments)]
fn run_phase(
    disc: &Discretization,
    model: &ModelSpec,
    mut state: FlowState,
    phase: u8,
    dt: f64,
    tol: f64,
    cfg: &FlowConfig,
    history: &mut Vec<StepRecord>,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<FlowState> {
    let ops = disc.phase(phase);
    let mut sm = StepMatrix::new(ops.laplacian.matrix());
    state.phase = phase;
    let start = state.step;
    loop {
        if state.step - start >= cfg.max_steps {
            return Err(Error::FlowNotConverged {
                phase,
                steps: cfg.max_steps,
                residual: state.last_residual,
            });
        }
        state = befd_step_with(&state, model, ops, &disc.potential, dt, &disc.weights, &cfg.solver, &mut sm)?;
        let u = state.u(model);
        let (mu, energy) = disc.observables(&u, model, phase)?;
        let rec = StepRecord {
            phase,
            step: state.step,
            t: state.t,
            residual: state.last_residual,
            mu,
            energy,
            norm: lp_norm(&u, &disc.weights, 2),
        };
        observer(&rec);
        history.push(rec);
        if state.last_residual < tol {
            return Ok(state);
        }
    }
}

/// Initial data per the configured policy.
pub fn initial_state(disc: &Discretization, model: &ModelSpec, cfg: &FlowConfig) -> Result<(Vec<f64>, InitPolicy)> {
    let policy = match cfg.init {
        InitPolicy::Auto if model.beta <= 1.0 => InitPolicy::Linear,
        InitPolicy::Auto if model.beta >= 100.0 => InitPolicy::ThomasFermi,
        InitPolicy::Auto => InitPolicy::Continuation,
        p => p,
    };
    let u = match policy {
        InitPolicy::Linear => linear_ground_state(disc, &cfg.eigen)?,
        InitPolicy::ThomasFermi => thomas_fermi_initial(&disc.potential, model.beta, &disc.weights)?,
        InitPolicy::Continuation => continuation_initial(disc, model, cfg.continuation_rungs, cfg)?,
        InitPolicy::Auto => unreachable!(),
    };
    Ok((u, policy))
}

/// Interaction strengths of the continuation rungs as fractions of the
/// target: a linear ramp up to `beta = 10`, geometric in `beta` above.
pub fn continuation_ladder(beta: f64, rungs: usize) -> Vec<f64> {
    (1..=rungs)
        .map(|i| {
            let frac = i as f64 / rungs as f64;
            if beta <= 10.0 {
                frac
            } else {
                beta.powf(frac) / beta
            }
        })
        .collect()
}

/// Phase-1 flows along the interaction ladder starting from the linear ground
/// state; each rung stops at the continuation tolerance.
pub fn continuation_initial(disc: &Discretization, model: &ModelSpec, rungs: usize, cfg: &FlowConfig) -> Result<Vec<f64>> {
    let mut u = linear_ground_state(disc, &cfg.eigen)?;
    if model.beta == 0.0 && model.gamma == 0.0 && model.delta == 0.0 {
        return Ok(u);
    }
    let dt = cfg.time_step.resolve(disc.h());
    let mut last_energy = f64::INFINITY;
    for frac in continuation_ladder(model.beta, rungs) {
        let rung = cfg.resolve_model(&model.scaled(frac));
        let state = FlowState::new(u, &rung);
        let mut hist = Vec::new();
        let out = run_phase(disc, &rung, state, 1, dt, cfg.continuation_tol, cfg, &mut hist, &mut |_| {})?;
        u = out.u(&rung);
        let e = hist.last().map_or(f64::NAN, |r| r.energy);
        debug!("continuation rung beta={} steps={} E={}", rung.beta, out.step, e);
        if e < last_energy - 1e-8 {
            // interaction energy grows along the ladder
            debug!("rung energy decreased from {last_energy} to {e}");
        }
        last_energy = e;
    }
    Ok(u)
}

/// Two-phase flow with policy-selected initial data.
pub fn run_two_phase(disc: &Discretization, model: &ModelSpec, cfg: &FlowConfig) -> Result<FlowResult> {
    run_two_phase_observed(disc, model, cfg, &mut |_| {})
}

pub fn run_two_phase_observed(
    disc: &Discretization,
    model: &ModelSpec,
    cfg: &FlowConfig,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<FlowResult> {
    model.validate()?;
    cfg.validate()?;
    let (u0, policy) = initial_state(disc, model, cfg)?;
    let mut res = run_two_phase_from(disc, model, u0, cfg, observer)?;
    res.init = policy;
    Ok(res)
}

/// Two-phase flow from given unit-norm initial data.
pub fn run_two_phase_from(
    disc: &Discretization,
    model: &ModelSpec,
    u0: Vec<f64>,
    cfg: &FlowConfig,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<FlowResult> {
    model.validate()?;
    cfg.validate()?;
    if u0.len() != disc.n_unknowns() {
        return Err(Error::DimensionMismatch(format!(
            "initial data has {} values for {} unknowns",
            u0.len(),
            disc.n_unknowns()
        )));
    }
    let model = cfg.resolve_model(model);
    let dt = cfg.time_step.resolve(disc.h());
    let mut history = Vec::new();
    let state = FlowState::new(u0, &model);
    let s1 = run_phase(disc, &model, state, 1, dt, cfg.tol_phase1, cfg, &mut history, observer)?;
    let steps_phase1 = s1.step;
    let (mu_phase1, energy_phase1) = disc.observables(&s1.u(&model), &model, 1)?;
    info!(
        "phase 1 done: h={} steps={} mu={mu_phase1:.10} E={energy_phase1:.10}",
        disc.h(),
        steps_phase1
    );
    let s2 = run_phase(disc, &model, s1, 2, dt, cfg.tol_phase2, cfg, &mut history, observer)?;
    let steps_phase2 = s2.step - steps_phase1;
    let u = s2.u(&model);
    let (mu, energy) = disc.observables(&u, &model, 2)?;
    info!("phase 2 done: h={} steps={} mu={mu:.10} E={energy:.10}", disc.h(), steps_phase2);
    Ok(FlowResult {
        u,
        mu,
        energy,
        mu_phase1,
        energy_phase1,
        steps_phase1,
        steps_phase2,
        dt,
        model,
        init: cfg.init,
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExcitedOutcome {
    ExcitedLike,
    CollapsedToGround,
}

impl ExcitedOutcome {
    pub fn label(self) -> &'static str {
        match self {
            ExcitedOutcome::ExcitedLike => "excited-like",
            ExcitedOutcome::CollapsedToGround => "collapsed-to-ground",
        }
    }
}

/// `|mu - mu_ground|` above which a flow from excited data counts as excited.
pub const EXCITED_GAP: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct ExcitedResult {
    pub result: FlowResult,
    pub ground_mu: f64,
    pub linear_value: f64,
    pub outcome: ExcitedOutcome,
}

/// Runs the two-phase flow from the `(k+1)`-th linear eigenvector and tags
/// the outcome against the ground-state chemical potential `ground_mu`.
pub fn compute_excited_state(
    disc: &Discretization,
    model: &ModelSpec,
    k: usize,
    ground_mu: f64,
    cfg: &FlowConfig,
) -> Result<ExcitedResult> {
    if k == 0 {
        return Err(Error::InvalidModel("excited-state index must be at least 1".into()));
    }
    let mut pairs = linear_eigenstates(disc, 1, k + 1, &cfg.eigen)?;
    let pair = pairs.remove(k);
    let result = run_two_phase_from(disc, model, pair.vector, cfg, &mut |_| {})?;
    let outcome = if (result.mu - ground_mu).abs() > EXCITED_GAP {
        ExcitedOutcome::ExcitedLike
    } else {
        warn!("flow from excited data collapsed to the ground state (mu={})", result.mu);
        ExcitedOutcome::CollapsedToGround
    };
    Ok(ExcitedResult {
        result,
        ground_mu,
        linear_value: pair.value,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::loglog_slope;

    fn disc(shape: &Shape, lo: f64, hi: f64, h: f64, v: &Potential) -> Discretization {
        let grid = Grid2D::covering([lo, lo], [hi, hi], h).unwrap();
        Discretization::build(grid, shape, v, &DiscretizationOptions::default()).unwrap()
    }

    fn norm(d: &Discretization, u: &[f64]) -> f64 {
        lp_norm(u, &d.weights, 2)
    }

    #[test]
    fn linear_disc_mode_converges_to_bessel_value() {
        // j_{0,1}^2 / 2
        let exact = 2.404825557695773_f64.powi(2) / 2.0;
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for &h in &[0.1, 0.05, 0.025] {
            let d = disc(&Shape::circle(0.0, 0.0, 1.0), -1.4, 1.4, h, &Potential::Zero);
            let cfg = FlowConfig::default();
            let u = linear_ground_state(&d, &cfg.eigen).unwrap();
            assert!(u.iter().all(|&v| v > -1e-10));
            assert!((norm(&d, &u) - 1.0).abs() < 1e-12);
            let res = run_two_phase_from(&d, &ModelSpec::cubic(0.0), u, &cfg, &mut |_| {}).unwrap();
            hs.push(h);
            errs.push((res.mu - exact).abs());
        }
        let slope = loglog_slope(&hs, &errs);
        assert!(slope >= 2.7, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn eigenvector_is_a_fixed_point() {
        let d = disc(&Shape::ellipse(0.8, 1.1), -1.4, 1.4, 0.05, &Potential::Zero);
        let cfg = FlowConfig::default();
        let u = linear_ground_state(&d, &cfg.eigen).unwrap();
        let model = ModelSpec::cubic(0.0);
        let s = befd_step(&FlowState::new(u.clone(), &model), &model, &d.phase1, &d.potential, d.h(), &d.weights, &cfg.solver)
            .unwrap();
        let diff = s.field.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
        // determinism including sign
        assert_eq!(u, linear_ground_state(&d, &cfg.eigen).unwrap());
    }

    #[test]
    fn steps_preserve_the_norm() {
        let d = disc(&Shape::circle(0.0, 0.0, 1.0), -1.4, 1.4, 0.05, &Potential::harmonic());
        let cfg = FlowConfig::default();
        let n = d.n_unknowns();
        let u: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.3).sin()).collect();
        for model in [ModelSpec::cubic(3.0), ModelSpec::cubic_quintic(1.0, 1.0), ModelSpec::hoi(1.0, 1.0)] {
            let mut st = FlowState::new(u.clone(), &model);
            for _ in 0..3 {
                st = befd_step(&st, &model, &d.phase2, &d.potential, 1e-3, &d.weights, &cfg.solver).unwrap();
                assert!((norm(&d, &st.field) - 1.0).abs() < 1e-12);
            }
        }
        let model = ModelSpec::rescaled(50.0);
        let st = befd_step(&FlowState::new(u, &model), &model, &d.phase1, &d.potential, 0.05, &d.weights, &cfg.solver)
            .unwrap();
        assert!((norm(&d, &st.field) - 50f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn rescaled_iterates_match_plain_ones() {
        let d = disc(&Shape::circle(0.0, 0.0, 1.0), -1.4, 1.4, 0.1, &Potential::harmonic());
        let cfg = FlowConfig::default();
        let u = thomas_fermi_initial(&d.potential, 120.0, &d.weights).unwrap();
        let (plain, scaled) = (ModelSpec::cubic(120.0), ModelSpec::rescaled(120.0));
        let mut a = FlowState::new(u.clone(), &plain);
        let mut b = FlowState::new(u, &scaled);
        for _ in 0..5 {
            a = befd_step(&a, &plain, &d.phase1, &d.potential, 0.1, &d.weights, &cfg.solver).unwrap();
            b = befd_step(&b, &scaled, &d.phase1, &d.potential, 0.1, &d.weights, &cfg.solver).unwrap();
        }
        let (ua, ub) = (a.u(&plain), b.u(&scaled));
        let diff = ua.iter().zip(&ub).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn thomas_fermi_properties() {
        let d = disc(&Shape::rectangle(-1.0, -1.0, 1.0, 1.0), -1.3, 1.3, 0.05, &Potential::Zero);
        let u = thomas_fermi_initial(&d.potential, 5.0, &d.weights).unwrap();
        let area: f64 = d.weights.interior().iter().sum();
        for &x in &u {
            assert!((x - 1.0 / area.sqrt()).abs() < 1e-12);
        }
        let dh = disc(&Shape::rectangle(-1.0, -1.0, 1.0, 1.0), -1.3, 1.3, 0.05, &Potential::harmonic());
        let u50 = thomas_fermi_initial(&dh.potential, 50.0, &dh.weights).unwrap();
        assert!((norm(&dh, &u50) - 1.0).abs() < 1e-12);
        let u500 = thomas_fermi_initial(&dh.potential, 500.0, &dh.weights).unwrap();
        let sup = |u: &[f64]| u.iter().copied().fold(0.0, f64::max);
        assert!(sup(&u500) < sup(&u50));
        assert!(thomas_fermi_initial(&dh.potential, 0.0, &dh.weights).is_err());
    }

    #[test]
    fn linear_flow_energy_is_monotone() {
        let d = disc(&Shape::rectangle(-1.0, -1.0, 1.0, 1.0), -1.3, 1.3, 0.1, &Potential::harmonic());
        let cfg = FlowConfig::default();
        let model = ModelSpec::cubic(0.0);
        let n = d.n_unknowns();
        let mut u: Vec<f64> = d
            .classification
            .interior_order()
            .iter()
            .map(|&k| {
                let p = d.grid.node_at(k);
                (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]) * (1.0 + 0.8 * p[0])
            })
            .collect();
        assert_eq!(u.len(), n);
        d.normalize(&mut u);
        let mut hist = Vec::new();
        run_phase(&d, &model, FlowState::new(u, &model), 1, 0.1, 1e-8, &cfg, &mut hist, &mut |_| {}).unwrap();
        for w in hist.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12, "{} -> {}", w[0].energy, w[1].energy);
        }
    }

    #[test]
    fn continuation_ladders() {
        assert_eq!(continuation_ladder(4.0, 4), vec![0.25, 0.5, 0.75, 1.0]);
        let g = continuation_ladder(1000.0, 3);
        assert!((g[0] * 1000.0 - 10.0).abs() < 1e-9 && (g[2] - 1.0).abs() < 1e-15);
        let d = disc(&Shape::circle(0.0, 0.0, 1.0), -1.4, 1.4, 0.1, &Potential::Zero);
        let cfg = FlowConfig::default();
        let a = continuation_initial(&d, &ModelSpec::cubic(0.0), 1, &cfg).unwrap();
        assert_eq!(a, linear_ground_state(&d, &cfg.eigen).unwrap());
    }

    #[test]
    fn linear_excited_state_is_a_fixed_point() {
        let d = disc(&Shape::ellipse(1.0, 1.4), -1.7, 1.7, 0.1, &Potential::Zero);
        let cfg = FlowConfig::default();
        let pairs = linear_eigenstates(&d, 1, 2, &cfg.eigen).unwrap();
        let model = ModelSpec::cubic(0.0);
        let st = befd_step(
            &FlowState::new(pairs[1].vector.clone(), &model),
            &model,
            &d.phase1,
            &d.potential,
            d.h(),
            &d.weights,
            &cfg.solver,
        )
        .unwrap();
        let diff = st.field.iter().zip(&pairs[1].vector).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn model_validation() {
        assert!(ModelSpec::cubic(-1.0).validate().is_err());
        let mut m = ModelSpec::cubic(1.0);
        m.gamma = 1.0;
        assert!(m.validate().is_err());
        assert!(ModelSpec::rescaled(0.0).validate().is_err());
        let cfg = FlowConfig::default();
        assert_eq!(cfg.resolve_model(&ModelSpec::cubic(200.0)).kind, ModelKind::CubicRescaled);
        assert_eq!(cfg.resolve_model(&ModelSpec::cubic(50.0)).kind, ModelKind::Cubic);
        assert_eq!(FlowConfig::for_model(&ModelSpec::hoi(1.0, 1.0)).time_step, TimeStep::Fixed(1e-3));
    }
}
