//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure,
//! 4 verification failure, 1 anything else (I/O).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::continuation::{
    convergence_diagnostics, run_continuation, ContinuationOptions, ContinuationTrace, StepRecord,
};
use crate::energy::ProblemSpec;
use crate::error::{Error, Result};
use crate::io::{read_field, read_vfield, write_field, write_mesh, write_vfield};
use crate::limit::{cross_check, minimality_probe, solve_limit, verify_certificate, Certificate};
use crate::mesh::ScalarField;
use crate::oracle1d::{oracle_limit_1d, oracle_pq_1d, OracleSolution, DEFAULT_QUAD_N};
use crate::pq_solver::{solve_pq, weak_residual_pq};
use crate::spaces::{muckenhoupt_aq_estimate, poincare_probe};

/// Dyadic depth of the reported A_q estimate.
const AQ_DEPTH: u32 = 4;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Slack on `‖σ‖∞ ≤ 1` reported by `continue`.
const SIGMA_SLACK: f64 = 5e-3;
/// Tolerance of the minimality probe.
const MINIMALITY_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "onelap",
    version,
    about = "Double-phase 1-Laplacian solvers and certificates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `[output] dir`, default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for randomized probes (overrides `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleChoice {
    Limit,
    Pq,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the p,q problem at the configured p.
    SolvePq(Common),
    /// Run the p → 1 continuation.
    Continue(Common),
    /// Minimize the limit functional and certify the result.
    SolveLimit(Common),
    /// Check a certificate for fields loaded from CSV.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Nodal field `u` (`node,value`).
        #[arg(long)]
        u: PathBuf,
        /// Cell field `z` (`cell,x[,y]`).
        #[arg(long)]
        z: PathBuf,
    },
    /// Tabulate the 1D reference solution.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "limit")]
        kind: OracleChoice,
    },
    /// Run continuation and the limit solver and compare them.
    Compare(Common),
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Hypothesis { .. }
        | Error::InvalidMesh(_)
        | Error::InvalidExponents(_)
        | Error::InvalidWeight(_)
        | Error::InvalidProblem(_)
        | Error::InvalidSchedule(_)
        | Error::MissingP
        | Error::ZeroSmoothing
        | Error::OracleInfeasible(_) => EXIT_CONFIG,
        Error::NotConverged { .. }
        | Error::LineSearch { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::Continuation { .. }
        | Error::LimitAborted { .. } => EXIT_SOLVER,
        Error::TraceMismatch { .. } | Error::MeshMismatch | Error::InvalidField(_) => EXIT_VERIFY,
        Error::Diagnostics(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_OTHER,
    }
}

/// How a command finished when it did not error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

struct Ctx {
    cfg: RunConfig,
    resolved: RunConfig,
    out: PathBuf,
    rng: ChaCha8Rng,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let mut cfg = RunConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        let out = match (&common.out, &cfg.output.dir) {
            (Some(o), _) => o.clone(),
            (None, Some(d)) => PathBuf::from(d),
            (None, None) => PathBuf::from("out"),
        };
        cfg.output.dir = Some(out.to_string_lossy().into_owned());
        let resolved = cfg.resolved()?;
        std::fs::create_dir_all(&out)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Ctx {
            cfg,
            resolved,
            out,
            rng,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, body: T) -> Result<()> {
        let report = Report {
            config: &self.resolved,
            body,
        };
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(self.path(name), text)?;
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::SolvePq(c) => cmd_solve_pq(&mut Ctx::new(&c)?),
        Command::Continue(c) => cmd_continue(&mut Ctx::new(&c)?),
        Command::SolveLimit(c) => cmd_solve_limit(&mut Ctx::new(&c)?),
        Command::Verify { common, u, z } => cmd_verify(&Ctx::new(&common)?, &u, &z),
        Command::Oracle { common, kind } => cmd_oracle(&Ctx::new(&common)?, kind),
        Command::Compare(c) => cmd_compare(&mut Ctx::new(&c)?),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::VerificationFailed) => {
            eprintln!("verification failed: see certificate.json");
            EXIT_VERIFY
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[derive(Serialize)]
struct PqBody {
    p: f64,
    q: f64,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
    energy: crate::energy::EnergyReport,
    weak_residual: f64,
    lambda_p: f64,
    floored_cells: usize,
    poincare_ratio_max: f64,
}

fn cmd_solve_pq(ctx: &mut Ctx) -> Result<Outcome> {
    let spec = ctx.cfg.pq_spec()?;
    let sol = solve_pq(&spec, None, ctx.cfg.pq_options())?;
    let exps = spec.exponents()?;
    let poincare = poincare_probe(
        spec.weight(),
        &exps,
        ctx.cfg.probes.poincare_samples,
        &mut ctx.rng,
    )?;
    write_mesh(spec.mesh(), &ctx.out)?;
    write_field(&sol.u, &ctx.path("u.csv"))?;
    write_vfield(&sol.sigma, &ctx.path("sigma.csv"))?;
    write_vfield(&sol.tau, &ctx.path("tau.csv"))?;
    ctx.write_json(
        "report.json",
        PqBody {
            p: exps.p(),
            q: exps.q(),
            converged: sol.converged,
            iterations: sol.iterations,
            grad_norm: sol.grad_norm,
            energy: sol.energy,
            weak_residual: weak_residual_pq(&sol, &spec)?,
            lambda_p: sol.lambda,
            floored_cells: sol.floored_cells,
            poincare_ratio_max: poincare,
        },
    )?;
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            grad_norm: sol.grad_norm,
        });
    }
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct ContinueBody<'a> {
    provenance: Option<&'a crate::continuation::Provenance>,
    completed_steps: usize,
    aborted: Option<String>,
    lambda_ratio: f64,
    poincare_ratio_max: Vec<f64>,
    convergence: Option<crate::continuation::ConvergenceReport>,
    steps: &'a [StepRecord],
}

fn cmd_continue(ctx: &mut Ctx) -> Result<Outcome> {
    let (spec, params) = ctx.cfg.continuation_spec()?;
    let snapshot_dir = if ctx.cfg.output.snapshots {
        let dir = ctx.path("snapshots");
        std::fs::create_dir_all(&dir)?;
        Some(dir)
    } else {
        None
    };
    let opts = ContinuationOptions {
        pq: ctx.cfg.pq_options(),
        snapshot_dir,
    };
    write_mesh(spec.mesh(), &ctx.out)?;
    let (trace, candidate) = match run_continuation(&spec, params, &opts) {
        Ok(r) => r,
        Err(Error::Continuation {
            step,
            p,
            source,
            partial,
        }) => {
            partial.write_csv(&ctx.path("trace.csv"))?;
            let message = format!("step {step} (p = {p}): {source}");
            ctx.write_json(
                "diagnostics.json",
                continue_body(&partial, None, Some(message), vec![]),
            )?;
            return Err(Error::Continuation {
                step,
                p,
                source,
                partial,
            });
        }
        Err(e) => return Err(e),
    };
    let mut poincare = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        let e = spec.with_p(r.p)?.exponents()?;
        poincare.push(poincare_probe(
            spec.weight(),
            &e,
            ctx.cfg.probes.poincare_samples,
            &mut ctx.rng,
        )?);
    }
    trace.write_csv(&ctx.path("trace.csv"))?;
    write_field(&candidate.u_star, &ctx.path("u_star.csv"))?;
    write_vfield(&candidate.z_star, &ctx.path("z_star.csv"))?;
    ctx.write_json(
        "diagnostics.json",
        continue_body(&trace, Some(&candidate.provenance), None, poincare),
    )?;
    Ok(Outcome::Success)
}

fn continue_body<'a>(
    trace: &'a ContinuationTrace,
    provenance: Option<&'a crate::continuation::Provenance>,
    aborted: Option<String>,
    poincare_ratio_max: Vec<f64>,
) -> ContinueBody<'a> {
    ContinueBody {
        provenance,
        completed_steps: trace.records.len(),
        aborted,
        lambda_ratio: if trace.records.is_empty() {
            f64::NAN
        } else {
            trace.lambda_ratio()
        },
        poincare_ratio_max,
        convergence: convergence_diagnostics(trace, SIGMA_SLACK).ok(),
        steps: &trace.records,
    }
}

#[derive(Serialize)]
struct LimitBody<'a> {
    report: &'a crate::limit::LimitReport,
    minimality: crate::limit::MinimalityReport,
    certificate_pass: bool,
    /// `None` when the weight vanishes on a dyadic cell.
    aq_estimate: Option<f64>,
}

fn cmd_solve_limit(ctx: &mut Ctx) -> Result<Outcome> {
    let spec = ctx.cfg.limit_spec()?;
    let sol = solve_limit(&spec, &ctx.cfg.limit_options(), None)?;
    let cert = verify_certificate(
        &sol.u_star,
        &sol.z_star,
        &spec,
        ctx.cfg.thresholds(spec.mesh()),
    )?;
    let minimality = minimality_probe(
        &sol.u_star,
        &spec,
        ctx.cfg.probes.minimality_samples,
        MINIMALITY_TOL,
        &mut ctx.rng,
    )?;
    write_mesh(spec.mesh(), &ctx.out)?;
    write_field(&sol.u_star, &ctx.path("u_star.csv"))?;
    write_vfield(&sol.z_star, &ctx.path("z_star.csv"))?;
    ctx.write_json("certificate.json", &cert)?;
    ctx.write_json(
        "limit_report.json",
        LimitBody {
            report: &sol.report,
            minimality,
            certificate_pass: cert.pass,
            aq_estimate: aq_estimate(&spec)?,
        },
    )?;
    Ok(if cert.pass {
        Outcome::Success
    } else {
        Outcome::VerificationFailed
    })
}

fn cmd_verify(ctx: &Ctx, u: &Path, z: &Path) -> Result<Outcome> {
    let spec = ctx.cfg.limit_spec()?;
    let u = read_field(spec.mesh(), u)?;
    let z = read_vfield(spec.mesh(), z)?;
    let cert: Certificate = verify_certificate(&u, &z, &spec, ctx.cfg.thresholds(spec.mesh()))?;
    ctx.write_json("certificate.json", &cert)?;
    Ok(if cert.pass {
        Outcome::Success
    } else {
        Outcome::VerificationFailed
    })
}

/// The 1D oracle for the configured problem.
pub fn oracle_for(cfg: &RunConfig, kind: OracleChoice) -> Result<OracleSolution> {
    if cfg.domain.dim != 1 {
        return Err(Error::Config("the oracle is available in 1D only".into()));
    }
    let length = cfg.domain.extents[0];
    let a = cfg.weight_fn();
    let h = cfg.boundary_fn();
    let (h0, h1) = (h(&[0.0]), h(&[length]));
    let q = cfg.exponents.q;
    match kind {
        OracleChoice::Limit => oracle_limit_1d(move |x| a(&[x]), q, h0, h1, length, DEFAULT_QUAD_N),
        OracleChoice::Pq => {
            let p = cfg
                .exponents
                .p
                .ok_or_else(|| Error::Config("[exponents] the p,q oracle needs p".into()))?;
            oracle_pq_1d(move |x| a(&[x]), p, q, h0, h1, length, DEFAULT_QUAD_N)
        }
    }
}

#[derive(Serialize)]
struct OracleBody {
    kind: crate::oracle1d::OracleKind,
    flux: Option<f64>,
    energy: f64,
    quad_n: usize,
}

fn cmd_oracle(ctx: &Ctx, kind: OracleChoice) -> Result<Outcome> {
    let oracle = oracle_for(&ctx.cfg, kind)?;
    let mesh = ctx.cfg.mesh()?;
    let xs: Vec<f64> = (0..mesh.n_nodes()).map(|i| mesh.node(i)[0]).collect();
    let mut text = String::from("x,u,du,z\n");
    for row in oracle.tabulate(&xs) {
        text.push_str(&format!("{},{},{},{}\n", row[0], row[1], row[2], row[3]));
    }
    std::fs::write(ctx.path("oracle.csv"), text)?;
    ctx.write_json(
        "oracle.json",
        OracleBody {
            kind: oracle.kind(),
            flux: oracle.flux(),
            energy: oracle.energy(),
            quad_n: DEFAULT_QUAD_N,
        },
    )?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct OracleGap {
    continuation: f64,
    limit: f64,
}

#[derive(Serialize)]
struct CompareBody<'a> {
    cross_check: crate::limit::CrossCheck,
    /// Limit solve from a random start against the default start.
    multistart_max_diff: f64,
    continuation_certificate: &'a Certificate,
    limit_certificate: &'a Certificate,
    lambda_ratio: f64,
    aq_estimate: Option<f64>,
    oracle_max_diff: Option<OracleGap>,
}

fn aq_estimate(spec: &ProblemSpec) -> Result<Option<f64>> {
    let aq = muckenhoupt_aq_estimate(spec.weight(), spec.q(), AQ_DEPTH)?;
    Ok(aq.is_finite().then_some(aq))
}

/// Random interior values within the range of the boundary data.
fn random_start(spec: &ProblemSpec, rng: &mut impl Rng) -> Result<ScalarField> {
    let lo = spec
        .boundary()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = spec
        .boundary()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo).max(1.0);
    let values = (0..spec.mesh().n_nodes())
        .map(|_| lo + width * rng.gen::<f64>())
        .collect();
    ScalarField::new(spec.mesh(), values)?.with_boundary(spec.boundary())
}

fn cmd_compare(ctx: &mut Ctx) -> Result<Outcome> {
    let limit_spec = ctx.cfg.limit_spec()?;
    let (pq_spec, params) = ctx.cfg.continuation_spec()?;
    let opts = ContinuationOptions {
        pq: ctx.cfg.pq_options(),
        snapshot_dir: None,
    };
    let (trace, candidate) = run_continuation(&pq_spec, params, &opts)?;
    let limit_opts = ctx.cfg.limit_options();
    let lim = solve_limit(&limit_spec, &limit_opts, None)?;
    let start = random_start(&limit_spec, &mut ctx.rng)?;
    let other = solve_limit(&limit_spec, &limit_opts, Some(&start))?;
    let thresholds = ctx.cfg.thresholds(limit_spec.mesh());
    let cert_c = verify_certificate(
        &candidate.u_star,
        &candidate.z_star,
        &limit_spec,
        thresholds,
    )?;
    let cert_l = verify_certificate(&lim.u_star, &lim.z_star, &limit_spec, thresholds)?;
    let oracle_max_diff = if ctx.cfg.domain.dim == 1 {
        match oracle_for(&ctx.cfg, OracleChoice::Limit) {
            Ok(o) => {
                let mesh = limit_spec.mesh();
                let gap = |u: &ScalarField| {
                    (0..mesh.n_nodes())
                        .map(|i| (u.values()[i] - o.u(mesh.node(i)[0])).abs())
                        .fold(0.0, f64::max)
                };
                Some(OracleGap {
                    continuation: gap(&candidate.u_star),
                    limit: gap(&lim.u_star),
                })
            }
            Err(_) => None,
        }
    } else {
        None
    };
    write_mesh(limit_spec.mesh(), &ctx.out)?;
    write_field(&candidate.u_star, &ctx.path("u_continuation.csv"))?;
    write_field(&lim.u_star, &ctx.path("u_limit.csv"))?;
    ctx.write_json(
        "compare.json",
        CompareBody {
            cross_check: cross_check(&candidate.u_star, &lim.u_star, &limit_spec)?,
            multistart_max_diff: lim.u_star.max_abs_diff(&other.u_star)?,
            continuation_certificate: &cert_c,
            limit_certificate: &cert_l,
            lambda_ratio: trace.lambda_ratio(),
            aq_estimate: aq_estimate(&limit_spec)?,
            oracle_max_diff,
        },
    )?;
    Ok(Outcome::Success)
}
