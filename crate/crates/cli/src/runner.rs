//! Runs experiments over their resolution lists and writes results to disk.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use gpe_levelset::extension::ExtensionConfig;
use gpe_levelset::flow::{
    compute_excited_state, run_two_phase, Discretization, DiscretizationOptions, ExcitedOutcome, InitPolicy, ModelKind,
    StepRecord,
};
use gpe_levelset::geometry::{Grid2D, NodeKind};
use gpe_levelset::rates::loglog_slope;
use log::{info, warn};
use thiserror::Error;

use crate::config::{ExperimentConfig, RateFit, ReferenceSource};
use crate::dump::{DumpError, FieldDump};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("experiment '{name}': {message}")]
    Experiment { name: String, message: String },
    #[error("experiment '{name}': a convergence study needs at least 3 resolutions, got {got}")]
    TooFewResolutions { name: String, got: usize },
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub workers: usize,
    /// Overrides the configured output directory.
    pub out_dir: Option<PathBuf>,
    pub tol_override: Option<f64>,
    pub dry_run: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out_dir: None,
            tol_override: None,
            dry_run: false,
        }
    }
}

impl RunOptions {
    pub fn output_dir(&self, cfg: &ExperimentConfig) -> Option<PathBuf> {
        self.out_dir.clone().or_else(|| cfg.out_dir.clone())
    }
}

#[derive(Clone, Debug)]
pub struct ExcitedRecord {
    pub index: usize,
    pub mu: f64,
    pub energy: f64,
    pub linear_value: f64,
    pub outcome: ExcitedOutcome,
    pub max_norm_defect: f64,
}

#[derive(Clone, Debug)]
pub struct ResolutionRecord {
    pub h: f64,
    pub unknowns: usize,
    pub irregular: usize,
    pub ghosts: usize,
    pub mu: f64,
    /// `scale * mu`, the quantity compared with the reference.
    pub reported: f64,
    pub energy: f64,
    pub mu_phase1: f64,
    pub energy_phase1: f64,
    pub steps_phase1: usize,
    pub steps_phase2: usize,
    pub init: InitPolicy,
    pub model_kind: ModelKind,
    pub wall_time: Duration,
    /// `max |norm - 1|` over all recorded steps.
    pub max_norm_defect: f64,
    pub min_u: f64,
    pub history: Vec<StepRecord>,
    pub excited: Option<ExcitedRecord>,
}

#[derive(Clone, Debug)]
pub struct ResolutionOutcome {
    pub h: f64,
    pub result: Result<ResolutionRecord, String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ResolutionOutcome>,
    pub finest_dump: Option<FieldDump>,
    pub markers: Vec<(String, [f64; 2])>,
}

impl ExperimentReport {
    pub fn records(&self) -> impl Iterator<Item = &ResolutionRecord> {
        self.rows.iter().filter_map(|r| r.result.as_ref().ok())
    }

    pub fn finest(&self) -> Option<&ResolutionRecord> {
        self.rows.last().and_then(|r| r.result.as_ref().ok())
    }
}

pub fn discretize(cfg: &ExperimentConfig, h: f64) -> gpe_levelset::Result<Discretization> {
    let grid = Grid2D::covering([cfg.bbox[0], cfg.bbox[1]], [cfg.bbox[2], cfg.bbox[3]], h)?;
    let opts = DiscretizationOptions {
        geometry: cfg.geometry_options(),
        extension: ExtensionConfig::default(),
    };
    Discretization::build(grid, &cfg.shape.to_shape(), &cfg.potential.to_potential(), &opts)
}

fn norm_defect(history: &[StepRecord]) -> f64 {
    history.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max)
}

/// One resolution: discretize, run the two-phase flow and the optional excited state.
pub fn run_resolution(
    cfg: &ExperimentConfig,
    h: f64,
    want_dump: bool,
) -> gpe_levelset::Result<(ResolutionRecord, Option<FieldDump>)> {
    let start = Instant::now();
    let disc = discretize(cfg, h)?;
    let flow = cfg.flow_config();
    let res = run_two_phase(&disc, &cfg.model, &flow)?;
    let excited = match cfg.excited {
        Some(k) => {
            let ex = compute_excited_state(&disc, &cfg.model, k, res.mu, &flow)?;
            Some(ExcitedRecord {
                index: k,
                mu: ex.result.mu,
                energy: ex.result.energy,
                linear_value: ex.linear_value,
                outcome: ex.outcome,
                max_norm_defect: norm_defect(&ex.result.history),
            })
        }
        None => None,
    };
    let dump = if want_dump {
        Some(FieldDump::from_solution(&disc, &res.u).map_err(|e| gpe_levelset::Error::Parse(e.to_string()))?)
    } else {
        None
    };
    let cls = &disc.classification;
    let record = ResolutionRecord {
        h,
        unknowns: disc.n_unknowns(),
        irregular: cls.n_irregular(),
        ghosts: cls.count(NodeKind::Ghost1) + cls.count(NodeKind::Ghost2),
        mu: res.mu,
        reported: cfg.reference.scale * res.mu,
        energy: res.energy,
        mu_phase1: res.mu_phase1,
        energy_phase1: res.energy_phase1,
        steps_phase1: res.steps_phase1,
        steps_phase2: res.steps_phase2,
        init: res.init,
        model_kind: res.model.kind,
        wall_time: start.elapsed(),
        max_norm_defect: norm_defect(&res.history),
        min_u: res.u.iter().copied().fold(f64::INFINITY, f64::min),
        history: res.history,
        excited,
    };
    info!(
        "{}: h={h:.6} mu={:.12} E={:.12} steps={}+{} ({:.1?})",
        cfg.name, record.mu, record.energy, record.steps_phase1, record.steps_phase2, record.wall_time
    );
    Ok((record, dump))
}

/// Runs every resolution on up to `workers` threads. Results keep resolution order.
fn run_all(cfg: &ExperimentConfig, workers: usize) -> (Vec<ResolutionOutcome>, Option<FieldDump>) {
    let n = cfg.resolutions.len();
    let slots: Vec<Mutex<Option<ResolutionOutcome>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let dump: Mutex<Option<FieldDump>> = Mutex::new(None);
    // finest first: the most expensive job starts earliest
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= n {
                    break;
                }
                let idx = n - 1 - k;
                let h = cfg.resolutions[idx];
                let outcome = match run_resolution(cfg, h, idx == n - 1) {
                    Ok((rec, d)) => {
                        if d.is_some() {
                            *dump.lock().expect("no panics while holding the lock") = d;
                        }
                        Ok(rec)
                    }
                    Err(e) => {
                        warn!("{}: h={h} failed: {e}", cfg.name);
                        Err(e.to_string())
                    }
                };
                *slots[idx].lock().expect("no panics while holding the lock") = Some(ResolutionOutcome { h, result: outcome });
            });
        }
    });
    let rows = slots
        .into_iter()
        .map(|m| m.into_inner().expect("lock not poisoned").expect("every slot is filled"))
        .collect();
    (rows, dump.into_inner().expect("lock not poisoned"))
}

/// Runs all resolutions and writes the outputs when an output directory is set.
/// With `dry_run` nothing is computed or written.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport, RunError> {
    let mut cfg = cfg.clone();
    if let Some(t) = opts.tol_override {
        cfg.override_tolerance(t);
    }
    let markers: Vec<(String, [f64; 2])> = cfg
        .potential
        .to_potential()
        .peak()
        .map(|p| ("potential-peak".to_string(), p))
        .into_iter()
        .collect();
    if opts.dry_run {
        return Ok(ExperimentReport {
            config: cfg,
            rows: Vec::new(),
            finest_dump: None,
            markers,
        });
    }
    let (rows, finest_dump) = run_all(&cfg, opts.workers);
    if rows.iter().all(|r| r.result.is_err()) {
        let message = rows
            .iter()
            .filter_map(|r| r.result.as_ref().err())
            .next()
            .cloned()
            .unwrap_or_else(|| "no resolutions".into());
        return Err(RunError::Experiment {
            name: cfg.name.clone(),
            message,
        });
    }
    let report = ExperimentReport {
        config: cfg,
        rows,
        finest_dump,
        markers,
    };
    if let Some(dir) = opts.output_dir(&report.config) {
        write_experiment(&report, &dir)?;
    }
    Ok(report)
}

/// Fixed 15-significant-digit format used in every CSV.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.14e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, RunError> {
    Ok(csv::Writer::from_path(path)?)
}

pub fn write_experiment(report: &ExperimentReport, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.ini"), report.config.to_text())?;

    let mut w = csv_writer(&dir.join("results.csv"))?;
    w.write_record([
        "h",
        "unknowns",
        "irregular",
        "ghosts",
        "mu",
        "reported",
        "energy",
        "mu_phase1",
        "energy_phase1",
        "steps_phase1",
        "steps_phase2",
        "init",
        "model",
        "max_norm_defect",
        "min_u",
        "status",
    ])?;
    for row in &report.rows {
        match &row.result {
            Ok(r) => w.write_record([
                fmt_num(r.h),
                r.unknowns.to_string(),
                r.irregular.to_string(),
                r.ghosts.to_string(),
                fmt_num(r.mu),
                fmt_num(r.reported),
                fmt_num(r.energy),
                fmt_num(r.mu_phase1),
                fmt_num(r.energy_phase1),
                r.steps_phase1.to_string(),
                r.steps_phase2.to_string(),
                format!("{:?}", r.init).to_lowercase(),
                r.model_kind.label().to_string(),
                fmt_num(r.max_norm_defect),
                fmt_num(r.min_u),
                "ok".to_string(),
            ])?,
            Err(e) => {
                let mut rec = vec![fmt_num(row.h)];
                rec.extend(std::iter::repeat_n(String::new(), 14));
                rec.push(format!("failed: {e}"));
                w.write_record(rec)?
            }
        }
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("telemetry.csv"))?;
    w.write_record(["h", "phase", "step", "t", "residual", "mu", "energy", "norm"])?;
    for r in report.records() {
        for s in &r.history {
            w.write_record([
                fmt_num(r.h),
                s.phase.to_string(),
                s.step.to_string(),
                fmt_num(s.t),
                fmt_num(s.residual),
                fmt_num(s.mu),
                fmt_num(s.energy),
                fmt_num(s.norm),
            ])?;
        }
    }
    w.flush()?;

    // wall times vary between runs; kept apart so results.csv is reproducible
    let mut w = csv_writer(&dir.join("timings.csv"))?;
    w.write_record(["h", "wall_time_s"])?;
    for r in report.records() {
        w.write_record([fmt_num(r.h), format!("{:.3}", r.wall_time.as_secs_f64())])?;
    }
    w.flush()?;

    if report.records().any(|r| r.excited.is_some()) {
        let mut w = csv_writer(&dir.join("excited.csv"))?;
        w.write_record(["h", "index", "mu", "energy", "linear_value", "ground_mu", "outcome"])?;
        for r in report.records() {
            if let Some(e) = &r.excited {
                w.write_record([
                    fmt_num(r.h),
                    e.index.to_string(),
                    fmt_num(e.mu),
                    fmt_num(e.energy),
                    fmt_num(e.linear_value),
                    fmt_num(r.mu),
                    e.outcome.label().to_string(),
                ])?;
            }
        }
        w.flush()?;
    }

    if !report.markers.is_empty() {
        let mut w = csv_writer(&dir.join("markers.csv"))?;
        w.write_record(["label", "x", "y"])?;
        for (label, p) in &report.markers {
            w.write_record([label.clone(), fmt_num(p[0]), fmt_num(p[1])])?;
        }
        w.flush()?;
    }

    if let Some(d) = &report.finest_dump {
        let mut f = BufWriter::new(File::create(dir.join("field_finest.txt"))?);
        d.write(&mut f)?;
        f.flush()?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate {
    pub rate: f64,
    pub reference: f64,
    pub mode: RateFit,
    /// `(h, |value - reference|)` pairs used by the fit.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares slope of `log |value - reference|` against `log h`. With
/// [`RateFit::SelfFinest`] the last (finest) entry is the reference and is
/// left out of the fit. `None` marks failed resolutions.
pub fn fit_rate(h: &[f64], values: &[Option<f64>], reference: Option<f64>, mode: RateFit) -> Option<RateEstimate> {
    let mut pairs: Vec<(f64, f64)> = h
        .iter()
        .zip(values)
        .filter_map(|(&h, v)| v.map(|v| (h, v)))
        .collect();
    let reference = match mode {
        RateFit::Reference => reference?,
        RateFit::SelfFinest => {
            // only a successful finest run can serve as the reference
            values.last().copied().flatten()?;
            pairs.pop()?.1
        }
    };
    let points: Vec<(f64, f64)> = pairs.iter().map(|&(h, v)| (h, (v - reference).abs())).collect();
    let hs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let es: Vec<f64> = points.iter().map(|p| p.1).collect();
    let rate = loglog_slope(&hs, &es);
    Some(RateEstimate {
        rate,
        reference,
        mode,
        points,
    })
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub experiment: ExperimentReport,
    pub mu_rate: Option<RateEstimate>,
    pub energy_rate: Option<RateEstimate>,
    pub source: ReferenceSource,
}

pub fn convergence_study(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ConvergenceReport, RunError> {
    if cfg.resolutions.len() < 3 {
        return Err(RunError::TooFewResolutions {
            name: cfg.name.clone(),
            got: cfg.resolutions.len(),
        });
    }
    let experiment = run_experiment(cfg, opts)?;
    let report = study_from(experiment);
    if !opts.dry_run {
        if let Some(dir) = opts.output_dir(&report.experiment.config) {
            write_study(&report, &dir)?;
        }
    }
    Ok(report)
}

/// Rate fits for an already computed experiment.
pub fn study_from(experiment: ExperimentReport) -> ConvergenceReport {
    let cfg = &experiment.config;
    let h: Vec<f64> = experiment.rows.iter().map(|r| r.h).collect();
    let mu: Vec<Option<f64>> = experiment
        .rows
        .iter()
        .map(|r| r.result.as_ref().ok().map(|x| x.reported))
        .collect();
    let en: Vec<Option<f64>> = experiment
        .rows
        .iter()
        .map(|r| r.result.as_ref().ok().map(|x| x.energy))
        .collect();
    let (mu_rate, energy_rate) = if experiment.rows.is_empty() {
        (None, None)
    } else {
        let energy_mode = if cfg.reference.fit == RateFit::Reference && cfg.reference.energy.is_some() {
            RateFit::Reference
        } else {
            RateFit::SelfFinest
        };
        (
            fit_rate(&h, &mu, cfg.reference.mu, cfg.reference.fit),
            fit_rate(&h, &en, cfg.reference.energy, energy_mode),
        )
    };
    ConvergenceReport {
        source: cfg.reference.source,
        experiment,
        mu_rate,
        energy_rate,
    }
}

pub fn write_study(report: &ConvergenceReport, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    let mut w = csv_writer(&dir.join("study.csv"))?;
    w.write_record(["h", "reported", "energy", "error", "steps_phase1", "steps_phase2", "status"])?;
    let err_of = |h: f64| {
        report
            .mu_rate
            .as_ref()
            .and_then(|r| r.points.iter().find(|p| p.0 == h))
            .map_or_else(String::new, |p| fmt_num(p.1))
    };
    for row in &report.experiment.rows {
        match &row.result {
            Ok(r) => w.write_record([
                fmt_num(r.h),
                fmt_num(r.reported),
                fmt_num(r.energy),
                err_of(r.h),
                r.steps_phase1.to_string(),
                r.steps_phase2.to_string(),
                "ok".to_string(),
            ])?,
            Err(e) => w.write_record([
                fmt_num(row.h),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("failed: {e}"),
            ])?,
        }
    }
    w.flush()?;

    let mut series = BufWriter::new(File::create(dir.join("series.dat"))?);
    writeln!(series, "# h error")?;
    if let Some(r) = &report.mu_rate {
        for (h, e) in &r.points {
            writeln!(series, "{} {}", fmt_num(*h), fmt_num(*e))?;
        }
    }
    series.flush()?;

    let cfg = &report.experiment.config;
    let mut s = String::new();
    s += &format!("experiment {}\n", cfg.name);
    s += &format!("reference_source {}\n", report.source.label());
    let describe = |label: &str, r: &Option<RateEstimate>| match r {
        Some(r) => format!("{label}_rate {} against {} ({})\n", fmt_num(r.rate), fmt_num(r.reference), r.mode.label()),
        None => format!("{label}_rate none\n"),
    };
    s += &describe("mu", &report.mu_rate);
    s += &describe("energy", &report.energy_rate);
    if !cfg.reference.note.is_empty() {
        s += &format!("note {}\n", cfg.reference.note);
    }
    fs::write(dir.join("rate.txt"), s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_power_law_gives_exact_rate() {
        let h = [0.1, 0.05, 0.025, 0.0125];
        // errors fed directly: an offset would cost digits to cancellation
        let vals: Vec<Option<f64>> = h.iter().map(|&h: &f64| Some(7.0 * h.powi(3))).collect();
        let r = fit_rate(&h, &vals, Some(0.0), RateFit::Reference).unwrap();
        assert!((r.rate - 3.0).abs() < 1e-12, "{}", r.rate);
        assert_eq!(r.points.len(), 4);

        // self-finest drops the reference point and ignores failures
        let mut vals = vals;
        vals[1] = None;
        let r = fit_rate(&h, &vals, None, RateFit::SelfFinest).unwrap();
        assert_eq!(r.points.len(), 2);
        assert_eq!(r.reference, vals[3].unwrap());
        let last_failed = [Some(1.0), Some(2.0), None];
        assert!(fit_rate(&h[..3], &last_failed, None, RateFit::SelfFinest).is_none());
    }

    #[test]
    fn numbers_use_fifteen_digits() {
        assert_eq!(fmt_num(6.18854339610285), "6.18854339610285e0");
        assert_eq!(fmt_num(-1.0 / 3.0), "-3.33333333333333e-1");
    }
}
