use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mhsde_cli::{run_sections, CliError, ExperimentConfig, RunReport, Section};

#[derive(Parser)]
#[command(name = "mhsde", version, about = "Metropolized SDE integrator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every section present in the config.
    Simulate(RunArgs),
    /// Run the weak-convergence section.
    Convergence(RunArgs),
    /// Run the long-trajectory equilibrium section.
    Equilibrium(RunArgs),
    /// Run the Fokker-Planck section.
    Fpe(RunArgs),
    /// Describe the builtin models.
    Models {
        /// Print builtin labels and definitions.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: RunArgs, sections: Option<&[Section]>) -> Result<RunReport, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(k) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {k} threads: {e}")))?;
    }
    let out = args
        .out
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `output`".into()))?;
    run_sections(&cfg, sections, &out)
}

fn summarize(report: &RunReport) {
    if let Some(c) = &report.convergence {
        for fit in &c.fits {
            match (fit.slope, fit.slope_stderr) {
                (Some(s), Some(se)) => println!("{} f={}: slope {s:.3} ± {se:.3}", fit.scheme.as_str(), fit.f),
                _ => println!("{} f={}: no slope ({})", fit.scheme.as_str(), fit.f, fit.note.as_deref().unwrap_or("")),
            }
        }
    }
    if let Some(eq) = &report.equilibrium {
        for t in eq {
            println!("equilibrium h={}: acceptance {:.4}, {}", t.h, t.acceptance_rate, t.file);
        }
    }
    if let Some(f) = &report.fpe {
        for (name, v) in &f.expectations {
            println!("fpe E[{name}] = {v:.12}");
        }
    }
    println!("done in {:.1}s", report.wall_clock_seconds);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Models { list: _ } => {
            for (label, text) in mhsde::model::builtin_descriptions() {
                println!("{label:16}{text}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Simulate(a) => run(a, None),
        Command::Convergence(a) => run(a, Some(&[Section::Convergence])),
        Command::Equilibrium(a) => run(a, Some(&[Section::Equilibrium])),
        Command::Fpe(a) => run(a, Some(&[Section::Fpe])),
    };
    match result {
        Ok(report) => {
            summarize(&report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
