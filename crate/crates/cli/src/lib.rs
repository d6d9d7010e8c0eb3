//! Experiment runner for the `mhsde` integrator: JSON configs in, CSV tables
//! and a JSON report out.

pub mod config;
pub mod error;
pub mod expr;
pub mod output;
pub mod runner;

use std::path::Path;
use std::time::Instant;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use output::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Convergence,
    Equilibrium,
    Fpe,
}

/// Runs the requested sections of `cfg` (every section present when
/// `sections` is `None`), writes their tables and `report.json` into
/// `out_dir`, and returns the report.
pub fn run_sections(cfg: &ExperimentConfig, sections: Option<&[Section]>, out_dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let wanted = |s: Section, present: bool| -> Result<bool> {
        match sections {
            None => Ok(present),
            Some(list) if list.contains(&s) && !present => {
                Err(CliError::Config(format!("config has no {} section", section_name(s))))
            }
            Some(list) => Ok(list.contains(&s)),
        }
    };
    let do_convergence = wanted(Section::Convergence, cfg.convergence.is_some())?;
    let do_equilibrium = wanted(Section::Equilibrium, cfg.equilibrium.is_some())?;
    let do_fpe = wanted(Section::Fpe, cfg.fpe.is_some())?;

    let dir = output::OutputDir::create(out_dir)?;
    let mut report = RunReport::new(cfg.clone());
    if do_convergence {
        let out = runner::run_convergence(cfg)?;
        dir.convergence(&out)?;
        report.convergence = Some(out);
    }
    if do_equilibrium {
        let tables = runner::run_equilibrium(cfg)?;
        report.equilibrium = Some(dir.equilibrium(&tables)?);
    }
    if do_fpe {
        let out = runner::run_fpe(cfg)?;
        report.fpe = Some(dir.fpe(&out)?);
    }
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    dir.report(&report)?;
    Ok(report)
}

fn section_name(s: Section) -> &'static str {
    match s {
        Section::Convergence => "convergence",
        Section::Equilibrium => "equilibrium",
        Section::Fpe => "fpe",
    }
}
