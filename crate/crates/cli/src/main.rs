//! `conelab`: validate theories, check postulates, compose systems and run the
//! operator-algebra reconstruction.

mod error;
mod input;
mod output;
mod suites;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use conelab::algebra::reconstruct;
use conelab::builtins::Theory;
use conelab::composite::{check_local_observability, check_no_signaling, compose};
use conelab::cone::{default_tolerance, Backend, DEFAULT_SAMPLES};
use conelab::report::{all_pass, CheckRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::output::{CompositeSummary, Report, SystemSummary};
use crate::suites::{Checker, Postulate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

#[derive(Debug, Parser)]
#[command(
    name = "conelab",
    version,
    about = "Probabilistic theories on convex cones"
)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Seed of the random generator shared by all sampled checks.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Number of random samples per sampled check.
    #[arg(long, default_value_t = DEFAULT_SAMPLES, global = true)]
    samples: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a theory file or builtin (`classical:d`, `quantum:d`, `gbit`).
    Validate { theory: String },
    /// Run a postulate check suite.
    Check {
        theory: String,
        #[arg(long, value_enum, default_value_t = Postulate::All)]
        postulate: Postulate,
    },
    /// Compose two theories and check the composite.
    Compose { left: String, right: String },
    /// Reconstruct a Hilbert-space representation from the tables of a theory.
    Reconstruct { theory: String },
    /// Full report: validation, every postulate suite and the reconstruction.
    Report { theory: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(report) => {
            output::emit(&report, cli.format);
            ExitCode::from(if report.passed() { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("conelab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    let tolerance = default_tolerance();
    let rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut report = Report::new(cli.seed, cli.samples, tolerance);
    match &cli.command {
        Command::Validate { theory } => {
            report.command = "validate".into();
            report.theory = theory.clone();
            let t = input::load(theory)?;
            report.system = Some(SystemSummary::of(&t));
        }
        Command::Check { theory, postulate } => {
            report.command = "check".into();
            report.theory = theory.clone();
            let t = input::load(theory)?;
            report.system = Some(SystemSummary::of(&t));
            let mut checker = Checker::new(&t, cli.samples, tolerance, rng);
            report.sections = checker.run(*postulate)?;
        }
        Command::Compose { left, right } => {
            report.command = "compose".into();
            report.theory = format!("{left} {right}");
            let a = input::load(left)?;
            let b = input::load(right)?;
            report.composite = Some(composite(&a, &b, left == right, cli.samples, rng)?);
        }
        Command::Reconstruct { theory } => {
            report.command = "reconstruct".into();
            report.theory = theory.clone();
            let t = input::load(theory)?;
            report.system = Some(SystemSummary::of(&t));
            report.reconstruction = Some(reconstruct(&t.system).map_err(CliError::internal)?);
        }
        Command::Report { theory } => {
            report.command = "report".into();
            report.theory = theory.clone();
            let t = input::load(theory)?;
            report.system = Some(SystemSummary::of(&t));
            let mut checker = Checker::new(&t, cli.samples, tolerance, rng);
            report.sections = checker.run(Postulate::All)?;
            report.reconstruction = Some(reconstruct(&t.system).map_err(CliError::internal)?);
        }
    }
    Ok(report)
}

fn composite(
    a: &Theory,
    b: &Theory,
    same: bool,
    samples: usize,
    mut rng: ChaCha8Rng,
) -> Result<CompositeSummary, CliError> {
    let override_cone = match (same, &a.composite_override) {
        (true, Some(c)) => Some(c.clone()),
        _ => input::psd_product(&a.system, &b.system)?,
    };
    let bip = compose(&a.system, &b.system, override_cone).map_err(CliError::from_theory)?;
    let lo = check_local_observability(&bip).map_err(CliError::internal)?;
    let ns = check_no_signaling(&bip, samples, &mut rng).map_err(CliError::internal)?;
    let tol = bip.system.tolerance();
    let records = vec![
        CheckRecord::new(
            "local-observability",
            "joint effects are spanned by products of local effects",
            lo.holds,
            0.0,
            format!(
                "effect span {}, product span {}, expected {}",
                lo.effect_span_dim, lo.product_span_dim, lo.expected
            ),
        ),
        CheckRecord::new(
            "no-signaling",
            "local deterministic operations leave the other marginal unchanged",
            ns.max_residual <= tol,
            ns.max_residual,
            format!("{} samples", ns.samples),
        ),
    ];
    let effect_rays = match bip.effect_cone().backend() {
        Backend::Polyhedral(g) => Some(g.len()),
        Backend::Psd(_) => None,
    };
    let passed = all_pass(&records);
    Ok(CompositeSummary {
        dims: bip.dims(),
        dim: bip.system.dim,
        provenance: bip.provenance,
        effect_rays,
        effect_span_dim: lo.effect_span_dim,
        records,
        passed,
    })
}
