//! CSV tables and the JSON run report.
//!
//! Numbers are written with 17 significant digits, enough to round-trip
//! every `f64`, so identical runs produce identical bytes. Absent values
//! (an empty bin's effective diffusion) are empty fields.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mhsde::fpe::DensityField;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::runner::{ConvergenceOutput, EquilibriumTable, FpeOutput};

pub const CONVERGENCE_COLUMNS: [&str; 7] = ["scheme", "f", "h", "mean", "stderr", "reference", "error"];
pub const EQUILIBRIUM_COLUMNS: [&str; 6] = ["x_left", "x_right", "density", "density_se", "Deff", "Deff_se"];
pub const FPE_COLUMNS: [&str; 2] = ["x_center", "rho"];

/// Bumped whenever a column set or its meaning changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const STDERR_METHOD: &str = "ensemble errors: sample standard deviation over sqrt(M), combined in \
quadrature for self-differences; equilibrium tables: batch means over contiguous blocks of the trajectory";

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<()> {
    let io = |e: csv::Error| CliError::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_convergence_csv(path: &Path, out: &ConvergenceOutput) -> Result<()> {
    write_csv(
        path,
        CONVERGENCE_COLUMNS,
        out.lines.iter().map(|l| {
            [
                l.scheme.as_str().to_string(),
                l.f.clone(),
                num(l.h),
                num(l.mean),
                num(l.stderr),
                num(l.reference),
                num(l.error),
            ]
        }),
    )
}

pub fn write_equilibrium_csv(path: &Path, table: &EquilibriumTable) -> Result<()> {
    write_csv(
        path,
        EQUILIBRIUM_COLUMNS,
        table.lines.iter().map(|l| {
            [num(l.x_left), num(l.x_right), num(l.density), num(l.density_se), opt_num(l.deff), opt_num(l.deff_se)]
        }),
    )
}

pub fn write_fpe_csv(path: &Path, field: &DensityField) -> Result<()> {
    write_csv(
        path,
        FPE_COLUMNS,
        field.values.iter().enumerate().map(|(i, v)| [num(field.grid.center(i)), num(*v)]),
    )
}

/// File name of the equilibrium table for step `h`.
pub fn equilibrium_file_name(h: f64) -> String {
    format!("equilibrium_h{h}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub h: f64,
    pub file: String,
    pub steps: u64,
    pub acceptance_rate: f64,
    pub out_of_range: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpeSummary {
    pub file: String,
    pub time: f64,
    pub mass: f64,
    pub min_value: f64,
    pub expectations: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub version: u32,
    pub columns: Vec<String>,
}

/// Everything a run produced except the bulky tables, plus the config that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schemas: BTreeMap<String, CsvSchema>,
    pub stderr_method: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Vec<EquilibriumSummary>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpe: Option<FpeSummary>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn new(config: ExperimentConfig) -> Self {
        let schema = |cols: &[&str]| CsvSchema {
            version: CSV_SCHEMA_VERSION,
            columns: cols.iter().map(|c| c.to_string()).collect(),
        };
        let schemas = BTreeMap::from([
            ("convergence".to_string(), schema(&CONVERGENCE_COLUMNS)),
            ("equilibrium".to_string(), schema(&EQUILIBRIUM_COLUMNS)),
            ("fpe".to_string(), schema(&FPE_COLUMNS)),
        ]);
        Self {
            schemas,
            stderr_method: STDERR_METHOD.to_string(),
            seed: config.base_seed,
            config,
            convergence: None,
            equilibrium: None,
            fpe: None,
            wall_clock_seconds: 0.0,
        }
    }
}

/// Writes the tables of each finished section into `dir` and returns the
/// report entries for them.
pub struct OutputDir {
    pub dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn convergence(&self, out: &ConvergenceOutput) -> Result<()> {
        write_convergence_csv(&self.dir.join("convergence.csv"), out)
    }

    pub fn equilibrium(&self, tables: &[EquilibriumTable]) -> Result<Vec<EquilibriumSummary>> {
        tables
            .iter()
            .map(|t| {
                let file = equilibrium_file_name(t.h);
                write_equilibrium_csv(&self.dir.join(&file), t)?;
                Ok(EquilibriumSummary {
                    h: t.h,
                    file,
                    steps: t.steps,
                    acceptance_rate: t.acceptance_rate,
                    out_of_range: t.out_of_range,
                })
            })
            .collect()
    }

    pub fn fpe(&self, out: &FpeOutput) -> Result<FpeSummary> {
        let file = "fpe.csv".to_string();
        write_fpe_csv(&self.dir.join(&file), &out.field)?;
        Ok(FpeSummary {
            file,
            time: out.field.time,
            mass: out.field.mass(),
            min_value: out.field.min_value(),
            expectations: out.expectations.iter().cloned().collect(),
        })
    }

    pub fn report(&self, report: &RunReport) -> Result<()> {
        let path = self.dir.join("report.json");
        let text = serde_json::to_string_pretty(report).expect("report serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}
