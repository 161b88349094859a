use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hodge_scatter::cli::{emit_report, run, ReportFormat, RunConfig, Task};
use hodge_scatter::Error;

#[derive(Parser)]
#[command(name = "hodge-scatter", version, about = "Spectral and scattering diagnostics for the Hodge Laplacian on 1-forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decay hypotheses, norm-equivalence bands and the L^2_delta audit.
    CheckMetric(Common),
    /// Smallest pencil eigenvalues against the flat Dirichlet gap.
    Spectrum(Common),
    /// Kernel-polynomial integrated DOS against the flat pipeline.
    Dos(Common),
    /// Wave-operator Cauchy diagnostics for a wave packet.
    Scatter(Common),
    /// Two-sided quadratic-form bounds on the test family.
    Forms(Common),
    /// Filtered commutator and identification-defect singular values.
    Tracecheck(Common),
    /// Every task listed in the config.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for verdicts.json, summary.txt and CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the global `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, common) = match cli.command {
        Command::CheckMetric(c) => (Some(Task::CheckMetric), c),
        Command::Spectrum(c) => (Some(Task::Spectrum), c),
        Command::Dos(c) => (Some(Task::Dos), c),
        Command::Scatter(c) => (Some(Task::Scatter), c),
        Command::Forms(c) => (Some(Task::Forms), c),
        Command::Tracecheck(c) => (Some(Task::Tracecheck), c),
        Command::Report(c) => (None, c),
    };
    match execute(task, &common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Error::Config(errors)) => {
            eprintln!("configuration invalid ({} problems):", errors.len());
            for e in errors {
                eprintln!("  {e}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Returns `Ok(true)` when no verdict failed.
fn execute(task: Option<Task>, c: &Common) -> hodge_scatter::Result<bool> {
    let text = std::fs::read_to_string(&c.config).map_err(|e| Error::Io(format!("{}: {e}", c.config.display())))?;
    let mut config = RunConfig::parse_with_overrides(&text, c.seed, c.out.clone())?;
    if let Some(t) = task {
        config = config.restricted_to(t);
    }
    let out = run(&config)?;
    let format = match c.format {
        Format::Text => ReportFormat::Text,
        Format::Json => ReportFormat::Json,
    };
    print!("{}", emit_report(&out, format, None)?);
    Ok(!out.bundle.has_failure())
}
