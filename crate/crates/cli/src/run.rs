//! Experiment execution and artifact bookkeeping.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use choquard::bubbles::{bubble_report, deficit_rate_fit, make_bubble_field, BubbleSpec};
use choquard::constants::SharpConstants;
use choquard::energy::{energy, EnergyContext};
use choquard::field::{grad_sq_integral, l2_sq_integral, make_box_domain, GridDomain, ScalarField, Shape};
use choquard::parallel::map_indexed;
use choquard::riesz::{benchmark, RieszPlan};
use choquard::snapshot::{self, Sidecar};
use choquard::spectral::dirichlet_eigenpairs_seeded;
use choquard::varsolve::{
    linking_level, minimize_quotient, nonexistence_probe, random_field, LinkingSpec, SolveOptions, Verdict,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig, InitKind, ShapeKind};
use crate::plot::{render_plot, PlotKind};
use crate::CliError;

/// One output file, held in memory until the single writer flushes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(name: &str, bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.to_string(),
            bytes: bytes.into(),
        }
    }

    fn json<T: Serialize>(name: &str, value: &T) -> Self {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        Self::new(name, text)
    }

    pub fn sha256(&self) -> String {
        Sha256::digest(&self.bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub command: Experiment,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug)]
pub struct RunOutcome {
    /// Primary artifact first.
    pub artifacts: Vec<Artifact>,
    pub manifest: Option<PathBuf>,
    /// Set when the run finished but its solver did not converge.
    pub convergence_failure: Option<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.convergence_failure.is_some() {
            2
        } else {
            0
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema: &'a str,
    seed: u64,
    report: &'a T,
}

/// Validate, compute, then write every artifact and the manifest if
/// `config.out_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let mut convergence_failure = None;
    let artifacts = match config.command {
        Experiment::Constants => constants(config)?,
        Experiment::Spectrum => spectrum(config)?,
        Experiment::Energy => energy_of_field(config)?,
        Experiment::BubbleScan => bubble_scan(config)?,
        Experiment::Solve => {
            let (a, failure) = solve(config)?;
            convergence_failure = failure;
            a
        }
        Experiment::Linking => linking(config)?,
        Experiment::Nonexist => nonexist(config)?,
        Experiment::BenchRiesz => bench_riesz(config)?,
    };
    let manifest = if config.out_dir.is_empty() {
        None
    } else {
        Some(write_all(config, &artifacts)?)
    };
    Ok(RunOutcome {
        artifacts,
        manifest,
        convergence_failure,
    })
}

fn write_all(config: &ExperimentConfig, artifacts: &[Artifact]) -> Result<PathBuf, CliError> {
    let dir = Path::new(&config.out_dir);
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
        files.push(ManifestEntry {
            name: a.name.clone(),
            bytes: a.bytes.len(),
            sha256: a.sha256(),
        });
    }
    let manifest = Manifest {
        schema: "manifest.v1".into(),
        command: config.command,
        seed: config.seed,
        config: config.clone(),
        files,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, Artifact::json("manifest.json", &manifest).bytes)?;
    Ok(path)
}

pub fn domain_of(config: &ExperimentConfig) -> Result<Arc<GridDomain>, CliError> {
    let shape = match config.shape {
        ShapeKind::Box => Shape::FullBox,
        ShapeKind::Ball => Shape::Ball {
            radius: config.half_width,
        },
    };
    Ok(make_box_domain(config.dim, config.half_width, config.n, shape)?)
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.into()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

fn constants(config: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let c = SharpConstants::compute(config.dim, config.mu)?;
    Ok(vec![Artifact::json("constants.json", &c), Artifact::new("constants.csv", csv_bytes(&[&c])?)])
}

#[derive(Serialize)]
struct EigenRow {
    index: usize,
    eigenvalue: f64,
    residual: f64,
}

fn spectrum(config: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let d = domain_of(config)?;
    let basis = dirichlet_eigenpairs_seeded(&d, config.k, config.seed)?;
    let rows: Vec<EigenRow> = (1..=basis.count())
        .map(|i| EigenRow {
            index: i,
            eigenvalue: basis.eigenvalue(i),
            residual: basis.residuals()[i - 1],
        })
        .collect();
    Ok(vec![Artifact::new("spectrum.csv", csv_bytes(&rows)?)])
}

fn energy_of_field(config: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let u = snapshot::load(Path::new(&config.field))?;
    if u.domain().dim() != config.dim {
        return Err(CliError::Config(format!(
            "snapshot is {}-dimensional, config says {}",
            u.domain().dim(),
            config.dim
        )));
    }
    let ctx = EnergyContext::new(u.domain(), config.mu, config.lambda_or(0.0))?;
    let e = energy(&ctx, &u)?;
    Ok(vec![Artifact::json("energy.json", &e)])
}

#[derive(Serialize)]
struct BubbleRow {
    epsilon: f64,
    grad_sq: f64,
    l2_sq: f64,
    nl_double: f64,
    a_epsilon: f64,
    #[serde(rename = "tail_D")]
    tail_d: f64,
    #[serde(rename = "tail_E")]
    tail_e: f64,
    deficit: f64,
}

fn bubble_scan(config: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let d = domain_of(config)?;
    let plan = RieszPlan::new(&d, config.mu)?;
    let lambda = config.lambda_or(0.0);
    let reports = map_indexed(config.eps.len(), config.threads, |i| {
        let spec = BubbleSpec::new(&d, config.eps[i], config.delta)?;
        bubble_report(&plan, &spec, lambda)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<BubbleRow> = reports
        .iter()
        .map(|r| BubbleRow {
            epsilon: r.epsilon,
            grad_sq: r.grad_sq,
            l2_sq: r.l2_sq,
            nl_double: r.nl_double,
            a_epsilon: r.a_epsilon,
            tail_d: r.tail_d,
            tail_e: r.tail_e,
            deficit: r.deficit(),
        })
        .collect();
    let mut out = vec![Artifact::new("bubble_scan.csv", csv_bytes(&rows)?)];
    let mut sorted = reports.clone();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    if deficit_rate_fit(&sorted, config.dim).is_ok() {
        let series: Vec<(f64, f64)> = sorted.iter().map(|r| (r.epsilon, r.deficit())).collect();
        out.push(Artifact::new("rate_fit.svg", render_plot(&series, PlotKind::RateFit, "deficit rate")?));
    }
    Ok(out)
}

fn initial_field(config: &ExperimentConfig, d: &Arc<GridDomain>, e1: &ScalarField) -> Result<ScalarField, CliError> {
    Ok(match config.init {
        InitKind::Eigen => e1.clone(),
        InitKind::Bubble => make_bubble_field(&BubbleSpec::new(d, config.eps[0], config.delta)?),
        InitKind::Random => random_field(d, config.seed, 1.0),
    })
}

/// `(|x|, mean u)` over radial bins of one cell width.
pub fn radial_profile(u: &ScalarField) -> Vec<(f64, f64)> {
    let d = u.domain();
    let h = d.spacing();
    let bins = (d.half_width() * (d.dim() as f64).sqrt() / h).ceil() as usize + 1;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    let mut x = vec![0.0; d.dim() as usize];
    for &node in d.masked_nodes() {
        d.coords_into(node, &mut x);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let b = ((r / h).round() as usize).min(bins - 1);
        sum[b] += u.values()[node];
        count[b] += 1;
    }
    (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (b as f64 * h, sum[b] / count[b] as f64))
        .collect()
}

fn solve(config: &ExperimentConfig) -> Result<(Vec<Artifact>, Option<String>), CliError> {
    let d = domain_of(config)?;
    let basis = dirichlet_eigenpairs_seeded(&d, 1, config.seed)?;
    let ctx = EnergyContext::new(&d, config.mu, config.lambda_or(0.0))?;
    let init = initial_field(config, &d, basis.field(1))?;
    let opts = SolveOptions {
        tol: config.tol,
        max_iters: config.max_iters,
        lambda_1: Some(basis.eigenvalue(1)),
        threads: config.threads,
        ..Default::default()
    };
    let report = minimize_quotient(&ctx, &init, &opts)?;
    let failure = (report.verdict == Verdict::BudgetExhausted)
        .then(|| format!("budget of {} iterations exhausted", config.max_iters));
    let mut out = vec![Artifact::json(
        "solve_report.json",
        &Envelope {
            schema: "solve_report.v1",
            seed: config.seed,
            report: &report,
        },
    )];
    let trace: Vec<(f64, f64)> = report.trace.iter().enumerate().map(|(i, q)| (i as f64, *q)).collect();
    if !trace.is_empty() {
        out.push(Artifact::new("trace.svg", render_plot(&trace, PlotKind::Trace, "objective trace")?));
    }
    if let Some(u) = &report.field {
        out.push(Artifact::new(
            "radial_profile.svg",
            render_plot(&radial_profile(u), PlotKind::RadialProfile, "radial profile")?,
        ));
        out.push(Artifact::new("solution.chqf", snapshot::encode(u)));
        out.push(Artifact::json("solution.json", &Sidecar::of(u.domain())));
    }
    Ok((out, failure))
}

fn linking(config: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let d = domain_of(config)?;
    let basis = Arc::new(dirichlet_eigenpairs_seeded(&d, config.j + 1, config.seed)?);
    let mid = 0.5 * (basis.eigenvalue(config.j) + basis.eigenvalue(config.j + 1));
    let ctx = EnergyContext::new(&d, config.mu, config.lambda_or(mid))?;
    let bubble = BubbleSpec::new(&d, config.eps[0], config.delta)?;
    let mut spec = LinkingSpec::new(basis, config.j, &bubble)?;
    spec.seed = config.seed;
    let report = linking_level(&ctx, &spec)?;
    Ok(vec![Artifact::json(
        "linking_report.json",
        &Envelope {
            schema: "linking_report.v1",
            seed: config.seed,
            report: &report,
        },
    )])
}

fn nonexist(config: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let d = domain_of(config)?;
    let ctx = EnergyContext::new(&d, config.mu, config.lambda_or(-1.0))?;
    let opts = SolveOptions {
        tol: config.tol,
        max_iters: config.max_iters,
        threads: config.threads,
        ..Default::default()
    };
    let report = nonexistence_probe(&ctx, config.starts, &opts)?;
    Ok(vec![Artifact::json(
        "probe_report.json",
        &Envelope {
            schema: "probe_report.v1",
            seed: config.seed,
            report: &report,
        },
    )])
}

#[derive(Serialize)]
struct BenchRow {
    size: usize,
    path: &'static str,
    wall_ns_median: u128,
    max_rel_err_vs_direct: f64,
}

fn bench_riesz(config: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    let mut rows = Vec::new();
    for &size in &config.sizes {
        let d = make_box_domain(config.dim, 1.0, size + 2, Shape::FullBox)?;
        let f = random_field(&d, config.seed, 1.0);
        let b = benchmark(&d, config.mu, &f, config.repeats)?;
        rows.push(BenchRow {
            size,
            path: "direct",
            wall_ns_median: b.direct_ns,
            max_rel_err_vs_direct: 0.0,
        });
        rows.push(BenchRow {
            size,
            path: "fft",
            wall_ns_median: b.fft_ns,
            max_rel_err_vs_direct: b.max_rel_err,
        });
    }
    Ok(vec![Artifact::new("bench_riesz.csv", csv_bytes(&rows)?)])
}

/// Starting fields `field dump` can write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FieldProfile {
    Eigen,
    Bubble,
    Random,
}

/// Write a snapshot (and its sidecar) of the chosen profile on the
/// configured grid.
pub fn field_dump(config: &ExperimentConfig, profile: FieldProfile, path: &Path) -> Result<(), CliError> {
    let d = domain_of(config)?;
    let u = match profile {
        FieldProfile::Eigen => dirichlet_eigenpairs_seeded(&d, 1, config.seed)?.field(1).clone(),
        FieldProfile::Bubble => {
            let h = d.spacing();
            let eps = config.eps.first().copied().unwrap_or(2.0 * h);
            make_bubble_field(&BubbleSpec::new(&d, eps, config.delta)?)
        }
        FieldProfile::Random => random_field(&d, config.seed, 1.0),
    };
    snapshot::dump(&u, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub schema: String,
    pub dim: u32,
    pub points_per_axis: usize,
    pub half_width: f64,
    pub masked_count: usize,
    pub max_abs: f64,
    pub l2_sq: f64,
    pub grad_sq: f64,
}

pub fn field_summary(path: &Path) -> Result<FieldSummary, CliError> {
    let u = snapshot::load(path)?;
    let d = u.domain();
    Ok(FieldSummary {
        schema: "field_summary.v1".into(),
        dim: d.dim(),
        points_per_axis: d.points_per_axis(),
        half_width: d.half_width(),
        masked_count: d.masked_count(),
        max_abs: u.max_abs(),
        l2_sq: l2_sq_integral(&u),
        grad_sq: grad_sq_integral(&u),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_artifacts() {
        let c = ExperimentConfig::for_command(Experiment::Constants);
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.exit_code(), 0);
        let csv = String::from_utf8(out.artifacts[1].bytes.clone()).unwrap();
        assert!(csv.starts_with(
            "dim,mu,sobolev_exp,upper_crit,lower_crit,hls_const,sobolev_S,nonlocal_S_HL,ps_threshold\n"
        ));
    }

    #[test]
    fn empty_eps_grid_is_config_error() {
        let c = ExperimentConfig::for_command(Experiment::BubbleScan);
        let err = run_experiment(&c).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn radial_profile_of_constant_field() {
        let c = ExperimentConfig {
            n: 9,
            ..Default::default()
        };
        let d = domain_of(&c).unwrap();
        let u = ScalarField::from_fn(&d, |_| 2.0);
        let prof = radial_profile(&u);
        assert_eq!(prof[0], (0.0, 2.0));
        assert!(prof.iter().all(|p| p.1 == 2.0));
    }
}
