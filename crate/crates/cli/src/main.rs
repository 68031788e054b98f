use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ieti::experiment::{self, ExperimentConfig, SweepConfig};
use ieti::ieti::{SchurKind, SolverOptions, Variant};
use ieti::krylov::StoppingNorm;
use ieti::Error;

#[derive(Parser)]
#[command(name = "ieti", version, about = "IETI-DP solver benchmarks on multi-patch spline discretizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write a CSV row.
    Run {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[command(flatten)]
        common: Common,
    },
    /// Run the Cartesian product of degrees, refinement levels and variants.
    Sweep {
        #[arg(long)]
        domain: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        r: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', num_args = 0.., default_values_t = [VariantArg::Mfd, VariantArg::Mlu, VariantArg::Cglu])]
        variants: Vec<VariantArg>,
        /// Skip configurations with more local coefficients than this.
        #[arg(long)]
        dof_budget: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run oracle comparisons and invariant checks on a small configuration.
    Verify {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        r: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    psi_tol: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Residual measured by the stopping test.
    #[arg(long, value_enum, default_value_t = StoppingArg::Residual)]
    stopping: StoppingArg,
    /// Schur complements of the scaled Dirichlet preconditioner (default: per variant).
    #[arg(long, value_enum)]
    schur: Option<SchurArg>,
    /// Record runs whose estimated memory exceeds this many GiB as `oom`.
    #[arg(long)]
    memory_budget: Option<f64>,
    /// CSV output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Mfd,
    Mlu,
    Cglu,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Mfd => Variant::Mfd,
            VariantArg::Mlu => Variant::Mlu,
            VariantArg::Cglu => Variant::Cglu,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StoppingArg {
    Residual,
    Preconditioned,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchurArg {
    Parameter,
    Physical,
}

impl Common {
    fn config(&self, domain: &str, p: usize, r: usize, variant: Variant) -> ExperimentConfig {
        ExperimentConfig {
            domain: domain.to_string(),
            p,
            r,
            variant,
            solver: SolverOptions {
                tol: self.tol,
                psi_tol: self.psi_tol,
                stopping: match self.stopping {
                    StoppingArg::Residual => StoppingNorm::Residual,
                    StoppingArg::Preconditioned => StoppingNorm::Preconditioned,
                },
                schur: self.schur.map(|s| match s {
                    SchurArg::Parameter => SchurKind::Parameter,
                    SchurArg::Physical => SchurKind::Physical,
                }),
                ..SolverOptions::default()
            },
            threads: self.threads,
            repetitions: self.repetitions,
            memory_budget: self.memory_budget.map(|g| g * (1u64 << 30) as f64),
        }
    }

    fn output(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(File::create(path)?),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Parameter(_) | Error::Io(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { domain, p, r, variant, common } => {
            let cfg = common.config(&domain, p, r, variant.into());
            let rec = experiment::run(&cfg)?;
            experiment::write_csv(common.output()?, &[rec])?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { domain, p, r, variants, dof_budget, common } => {
            let base = common.config(&domain, 1, 0, Variant::Mfd);
            base.validate()?;
            let cfg = SweepConfig {
                domain,
                p_list: p,
                r_list: r,
                variants: variants.into_iter().map(Variant::from).collect(),
                base,
                dof_budget,
            };
            let records = experiment::sweep(&cfg, |rec| {
                eprintln!("{} p={} r={} {}: it={} status={:?}", rec.domain, rec.p, rec.r, rec.variant, rec.it, rec.status)
            })?;
            experiment::write_csv(common.output()?, &records)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { domain, p, r } => {
            let report = experiment::verify(&domain, p, r)?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
