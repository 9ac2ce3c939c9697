use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gpe_cli::catalog::{self, CATALOG};
use gpe_cli::config::ExperimentConfig;
use gpe_cli::dump::{FieldDump, Mask};
use gpe_cli::runner::{self, ConvergenceReport, ExperimentReport, RunOptions};

#[derive(Parser)]
#[command(name = "gpe", version, about = "Ground states of Gross-Pitaevskii problems on curved 2D domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every resolution of an experiment.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run an experiment and fit convergence rates.
    Study {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Built-in experiments.
    Catalog {
        #[command(subcommand)]
        command: CatalogCommand,
    },
    /// Write the node classification of an experiment's grid without solving.
    DumpGeometry {
        config: PathBuf,
        /// Grid spacing; defaults to the finest configured resolution.
        #[arg(long)]
        h: Option<f64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CatalogCommand {
    List,
    /// Convergence study of a built-in experiment.
    Run {
        name: String,
        #[command(flatten)]
        flags: RunFlags,
    },
}

#[derive(Args)]
struct RunFlags {
    /// Resolutions solved in parallel.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
    /// Stopping tolerance for both phases.
    #[arg(long)]
    tol_override: Option<f64>,
}

impl RunFlags {
    fn options(&self) -> anyhow::Result<RunOptions> {
        let mut o = RunOptions::default();
        if let Some(w) = self.workers {
            if w == 0 {
                bail!("--workers must be at least 1");
            }
            o.workers = w;
        }
        if let Some(t) = self.tol_override {
            if !(t > 0.0 && t.is_finite()) {
                bail!("--tol-override must be a positive number");
            }
        }
        o.out_dir = self.out.clone();
        o.tol_override = self.tol_override;
        o.dry_run = self.dry_run;
        Ok(o)
    }
}

/// Configuration problems exit with 2, everything else with 1.
struct ConfigFailure(anyhow::Error);

fn load(path: &Path) -> Result<ExperimentConfig, ConfigFailure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(ConfigFailure)?;
    ExperimentConfig::parse(&text).map_err(|e| ConfigFailure(anyhow::Error::new(e).context(path.display().to_string())))
}

fn print_run(report: &ExperimentReport) {
    let cfg = &report.config;
    println!("experiment {}", cfg.name);
    println!("{:>14} {:>9} {:>20} {:>20} {:>8}  status", "h", "unknowns", "reported", "energy", "steps");
    for row in &report.rows {
        match &row.result {
            Ok(r) => println!(
                "{:>14.8e} {:>9} {:>20.12} {:>20.12} {:>8}  ok ({:.1}s)",
                r.h,
                r.unknowns,
                r.reported,
                r.energy,
                r.steps_phase1 + r.steps_phase2,
                r.wall_time.as_secs_f64()
            ),
            Err(e) => println!("{:>14.8e} {:>9} {:>20} {:>20} {:>8}  failed: {e}", row.h, "", "", "", ""),
        }
        if let Ok(r) = &row.result {
            if let Some(e) = &r.excited {
                println!("{:>14} excited #{}: mu = {:.12} ({})", "", e.index, e.mu, e.outcome.label());
            }
        }
    }
}

fn print_study(report: &ConvergenceReport) {
    print_run(&report.experiment);
    let cfg = &report.experiment.config;
    println!("reference source: {}", report.source.label());
    if let Some(r) = &report.mu_rate {
        println!("mu rate {:.3} against {:.12} ({})", r.rate, r.reference, r.mode.label());
    }
    if let Some(r) = &report.energy_rate {
        println!("energy rate {:.3} against {:.12} ({})", r.rate, r.reference, r.mode.label());
    }
    if !cfg.reference.note.is_empty() {
        println!("note: {}", cfg.reference.note);
    }
}

fn run(cfg: ExperimentConfig, flags: &RunFlags, study: bool) -> anyhow::Result<()> {
    let opts = flags.options()?;
    if opts.dry_run {
        let mut cfg = cfg;
        if let Some(t) = opts.tol_override {
            cfg.override_tolerance(t);
        }
        print!("{}", cfg.to_text());
        return Ok(());
    }
    if study {
        let report = runner::convergence_study(&cfg, &opts)?;
        print_study(&report);
    } else {
        let report = runner::run_experiment(&cfg, &opts)?;
        print_run(&report);
    }
    Ok(())
}

fn dump_geometry(cfg: &ExperimentConfig, h: Option<f64>, out: Option<&Path>) -> anyhow::Result<()> {
    let h = h.unwrap_or(*cfg.resolutions.last().expect("parser guarantees resolutions"));
    let disc = runner::discretize(cfg, h)?;
    let d = FieldDump::from_geometry(&disc);
    match out {
        Some(p) => {
            let mut f = BufWriter::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?);
            d.write(&mut f)?;
            f.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            d.write(&mut w)?;
            w.flush()?;
        }
    }
    let counts: Vec<String> = [Mask::Regular, Mask::Irregular, Mask::Ghost1, Mask::Ghost2, Mask::Pinned]
        .iter()
        .map(|&m| format!("{} {}", m.label(), d.count(m)))
        .collect();
    eprintln!("h = {h:e}: {}", counts.join(", "));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), (u8, anyhow::Error)> {
    let runtime = |e: anyhow::Error| (1, e);
    let config = |e: ConfigFailure| (2, e.0);
    match cli.command {
        Command::Run { config: path, flags } => run(load(&path).map_err(config)?, &flags, false).map_err(runtime),
        Command::Study { config: path, flags } => run(load(&path).map_err(config)?, &flags, true).map_err(runtime),
        Command::Catalog {
            command: CatalogCommand::List,
        } => {
            for e in CATALOG {
                println!("{:<26} {}", e.name, e.summary);
            }
            Ok(())
        }
        Command::Catalog {
            command: CatalogCommand::Run { name, flags },
        } => {
            let entry = catalog::find(&name)
                .ok_or_else(|| (2, anyhow::anyhow!("no catalog entry named '{name}' (see `gpe catalog list`)")))?;
            let cfg = entry.config().map_err(|e| (2, e.into()))?;
            run(cfg, &flags, true).map_err(runtime)
        }
        Command::DumpGeometry { config: path, h, out } => {
            let cfg = load(&path).map_err(config)?;
            dump_geometry(&cfg, h, out.as_deref()).map_err(runtime)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
