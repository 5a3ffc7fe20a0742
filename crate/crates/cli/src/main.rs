use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use choquard_cli::config::{Experiment, ExperimentConfig, InitKind, ShapeKind};
use choquard_cli::{field_dump, field_summary, run_experiment, Artifact, CliError, FieldProfile};

#[derive(Parser)]
#[command(name = "choquard", version, about = "Numerics for the critical Choquard equation")]
struct Cli {
    /// Worker threads for multistart drivers and sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Seed for every random choice; recorded in all outputs.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Write all artifacts and a manifest here instead of printing.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Problem {
    #[arg(long, default_value_t = 3)]
    dim: u32,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
}

#[derive(Args, Clone)]
struct Grid {
    #[arg(long, value_enum, default_value = "box")]
    shape: ShapeArg,
    /// Nodes per axis.
    #[arg(long, default_value_t = 17)]
    n: usize,
    /// Half width of the box; the ball has this radius.
    #[arg(long = "half-width", short = 'L', default_value_t = 1.0)]
    half_width: f64,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum ShapeArg {
    Box,
    Ball,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum InitArg {
    Eigen,
    Bubble,
    Random,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sharp constants, exponents and the compactness threshold.
    Constants {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, conflicts_with = "csv")]
        json: bool,
        #[arg(long)]
        csv: bool,
    },
    /// Write or inspect field snapshots.
    Field {
        #[command(subcommand)]
        action: FieldCmd,
    },
    /// Lowest Dirichlet eigenpairs as CSV (index, eigenvalue, residual).
    Spectrum {
        #[arg(long, default_value_t = 3)]
        dim: u32,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Accepted for symmetry; the output is always CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Energy breakdown of a stored field.
    Energy {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// Accepted for symmetry; the output is always JSON.
        #[arg(long)]
        json: bool,
    },
    /// Truncated-bubble energies over an epsilon grid.
    BubbleScan {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_grid: Vec<f64>,
        /// Also write the CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Minimise the quotient and report the mountain-pass level.
    Solve {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, value_enum, default_value = "eigen")]
        init: InitArg,
        /// Bubble scale for `--init bubble`.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
    },
    /// Linking level over span{e_1..e_j, u_eps}.
    Linking {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        /// Defaults to (lambda_j + lambda_{j+1})/2.
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
    },
    /// Multistart critical-point search on a star-shaped domain.
    Nonexist {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value_t = 10)]
        starts: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 300)]
        max_iters: usize,
    },
    /// Direct summation against FFT convolution.
    BenchRiesz {
        #[command(flatten)]
        problem: Problem,
        /// Interior nodes per axis.
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Also write the CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run an experiment described by a key = value or JSON config file.
    Run {
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum FieldCmd {
    /// Write a snapshot and its sidecar.
    Dump {
        #[arg(long, default_value_t = 3)]
        dim: u32,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, value_enum, default_value = "eigen")]
        profile: FieldProfile,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a JSON summary of a snapshot.
    Load { path: PathBuf },
}

impl Grid {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.shape = match self.shape {
            ShapeArg::Box => ShapeKind::Box,
            ShapeArg::Ball => ShapeKind::Ball,
        };
        c.n = self.n;
        c.half_width = self.half_width;
    }
}

fn base(cli: &Cli, command: Experiment) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_command(command);
    c.seed = cli.seed;
    c.threads = cli.threads;
    c.out_dir = cli.out_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    c
}

/// The config to run, plus which artifact to print and where else to copy it.
fn build(cli: &Cli) -> Result<(ExperimentConfig, usize, Option<PathBuf>), CliError> {
    let mut primary = 0;
    let mut copy = None;
    let config = match &cli.command {
        Cmd::Constants { problem, csv, .. } => {
            let mut c = base(cli, Experiment::Constants);
            (c.dim, c.mu) = (problem.dim, problem.mu);
            primary = usize::from(*csv);
            c
        }
        Cmd::Spectrum { dim, grid, k, .. } => {
            let mut c = base(cli, Experiment::Spectrum);
            c.dim = *dim;
            grid.apply(&mut c);
            c.k = *k;
            c
        }
        Cmd::Energy { field, mu, lambda, .. } => {
            let sidecar = std::fs::read_to_string(choquard::snapshot::sidecar_path(field))?;
            let meta: choquard::snapshot::Sidecar =
                serde_json::from_str(&sidecar).map_err(|e| CliError::Config(e.to_string()))?;
            let mut c = base(cli, Experiment::Energy);
            (c.dim, c.mu, c.lambda) = (meta.dim, *mu, vec![*lambda]);
            c.field = field.display().to_string();
            c
        }
        Cmd::BubbleScan {
            problem,
            grid,
            lambda,
            delta,
            eps_grid,
            csv,
        } => {
            let mut c = base(cli, Experiment::BubbleScan);
            (c.dim, c.mu, c.lambda, c.delta) = (problem.dim, problem.mu, vec![*lambda], *delta);
            grid.apply(&mut c);
            c.eps = eps_grid.clone();
            copy = csv.clone();
            c
        }
        Cmd::Solve {
            problem,
            grid,
            lambda,
            tol,
            max_iters,
            init,
            eps,
            delta,
        } => {
            let mut c = base(cli, Experiment::Solve);
            (c.dim, c.mu, c.lambda) = (problem.dim, problem.mu, vec![*lambda]);
            grid.apply(&mut c);
            (c.tol, c.max_iters, c.delta) = (*tol, *max_iters, *delta);
            c.init = match init {
                InitArg::Eigen => InitKind::Eigen,
                InitArg::Bubble => InitKind::Bubble,
                InitArg::Random => InitKind::Random,
            };
            c.eps = eps.iter().copied().collect();
            c
        }
        Cmd::Linking {
            problem,
            grid,
            j,
            eps,
            delta,
            lambda,
        } => {
            let mut c = base(cli, Experiment::Linking);
            (c.dim, c.mu, c.j, c.delta) = (problem.dim, problem.mu, *j, *delta);
            grid.apply(&mut c);
            c.eps = vec![*eps];
            c.lambda = lambda.iter().copied().collect();
            c
        }
        Cmd::Nonexist {
            problem,
            grid,
            lambda,
            starts,
            tol,
            max_iters,
        } => {
            let mut c = base(cli, Experiment::Nonexist);
            (c.dim, c.mu, c.lambda) = (problem.dim, problem.mu, vec![*lambda]);
            grid.apply(&mut c);
            (c.starts, c.tol, c.max_iters) = (*starts, *tol, *max_iters);
            c
        }
        Cmd::BenchRiesz {
            problem,
            sizes,
            repeats,
            csv,
        } => {
            let mut c = base(cli, Experiment::BenchRiesz);
            (c.dim, c.mu) = (problem.dim, problem.mu);
            (c.sizes, c.repeats) = (sizes.clone(), *repeats);
            copy = csv.clone();
            c
        }
        Cmd::Run { config } => {
            let mut c = ExperimentConfig::load(config)?;
            if let Some(dir) = &cli.out_dir {
                c.out_dir = dir.display().to_string();
            }
            c
        }
        Cmd::Field { .. } => unreachable!("handled before build"),
    };
    Ok((config, primary, copy))
}

fn field(cli: &Cli, action: &FieldCmd) -> Result<(), CliError> {
    match action {
        FieldCmd::Dump {
            dim,
            grid,
            profile,
            eps,
            delta,
            out,
        } => {
            let mut c = base(cli, Experiment::Solve);
            c.dim = *dim;
            grid.apply(&mut c);
            c.delta = *delta;
            c.eps = eps.iter().copied().collect();
            field_dump(&c, *profile, out)
        }
        FieldCmd::Load { path } => {
            let summary = field_summary(path)?;
            let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.into()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn print(a: &Artifact) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(&a.bytes)?;
    out.flush()?;
    Ok(())
}

fn main_inner(cli: &Cli) -> Result<i32, CliError> {
    if let Cmd::Field { action } = &cli.command {
        field(cli, action)?;
        return Ok(0);
    }
    let (config, primary, copy) = build(cli)?;
    let outcome = run_experiment(&config)?;
    if let Some(path) = copy {
        std::fs::write(path, &outcome.artifacts[0].bytes)?;
    }
    match &outcome.manifest {
        Some(m) => eprintln!("wrote {} artifacts, manifest {}", outcome.artifacts.len(), m.display()),
        None => print(&outcome.artifacts[primary.min(outcome.artifacts.len() - 1)])?,
    }
    if let Some(msg) = &outcome.convergence_failure {
        eprintln!("choquard: {msg}");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("choquard: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
