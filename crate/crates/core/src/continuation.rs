//! Driving `p → 1` through a geometric schedule of p,q solves.
//!
//! Each step is warm-started from the previous solution. The trace keeps the
//! scalar diagnostics of every step; fields are kept only for the current and
//! previous step, with per-step snapshots either held in memory or written to
//! a directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::{energy_i, ProblemSpec};
use crate::error::{Error, Result};
use crate::io::{read_field, write_field, write_vfield};
use crate::mesh::{gradient, ScalarField, VectorField};
use crate::pq_solver::{solve_pq, PqOptions, PqSolution};
use crate::spaces::weighted_lq_norm;

/// `p_k = 1 + (p_start − 1)·ratio^k` for `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    pub p_start: f64,
    pub ratio: f64,
    pub steps: usize,
}

impl ScheduleParams {
    /// `p_start` leaves a 10% margin in `q/p < 1 + 1/N`, ratio 1/2, 12 steps.
    pub fn default_for(q: f64, dim: usize) -> Self {
        let bound = 1.0 + 1.0 / dim as f64;
        let p_start = 1.1 * q / bound;
        let p_start = if p_start > 1.0 && p_start < q {
            p_start
        } else {
            1.0 + 0.5 * (q - 1.0)
        };
        ScheduleParams {
            p_start,
            ratio: 0.5,
            steps: 12,
        }
    }

    pub fn schedule(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|k| 1.0 + (self.p_start - 1.0) * self.ratio.powi(k as i32))
            .collect()
    }

    fn validate(&self) -> Result<Vec<f64>> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "ratio must lie in (0,1), got {}",
                self.ratio
            )));
        }
        if !(self.p_start > 1.0 && self.p_start.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "p_start must exceed 1, got {}",
                self.p_start
            )));
        }
        let schedule = self.schedule();
        for w in schedule.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidSchedule(format!(
                    "schedule stalls at p = {} (too many steps for f64)",
                    w[0]
                )));
            }
        }
        if let Some(last) = schedule.last() {
            if !(*last > 1.0) {
                return Err(Error::InvalidSchedule("schedule reaches p = 1".into()));
            }
        }
        Ok(schedule)
    }
}

/// Where the fields of step `k` can be recovered from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SnapshotHandle {
    Memory(usize),
    File { u: PathBuf, sigma: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub k: usize,
    pub p: f64,
    #[serde(skip)]
    pub snapshot: SnapshotHandle,
    pub lambda_p: f64,
    pub energy_fp: f64,
    /// Limit energy `I` (no smoothing) of `u_p`.
    pub energy_i: f64,
    /// Largest cell magnitude of `|∇u|^{p−2}∇u`.
    pub sigma_inf: f64,
    /// Largest cell magnitude of `∇u`.
    pub grad_inf: f64,
    /// `‖∇u_k − ∇u_{k−1}‖_{L^q_a}`; absent at `k = 0`.
    pub dist_prev: Option<f64>,
    /// `max_c |σ_k − σ_{k−1}|`; absent at `k = 0`.
    pub sigma_drift: Option<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationTrace {
    pub params: ScheduleParams,
    pub records: Vec<StepRecord>,
    memory: Vec<ScalarField>,
}

impl ContinuationTrace {
    /// The solution `u_{p_k}` of step `k`.
    pub fn snapshot(&self, k: usize, spec: &ProblemSpec) -> Result<ScalarField> {
        let rec = self
            .records
            .get(k)
            .ok_or_else(|| Error::Diagnostics(format!("no step {k} in trace")))?;
        match &rec.snapshot {
            SnapshotHandle::Memory(i) => Ok(self.memory[*i].clone()),
            SnapshotHandle::File { u, .. } => read_field(spec.mesh(), u),
        }
    }

    pub fn lambda_ratio(&self) -> f64 {
        let (lo, hi) = self
            .records
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
                (lo.min(r.lambda_p), hi.max(r.lambda_p))
            });
        hi / lo
    }

    /// `k,p_k,energy_Fp,energy_I,lambda_p,sigma_inf,dist_prev_Lqa`; the last
    /// column is empty at `k = 0`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "k,p_k,energy_Fp,energy_I,lambda_p,sigma_inf,dist_prev_Lqa"
        )?;
        for r in &self.records {
            let dist = r.dist_prev.map(|d| d.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.k, r.p, r.energy_fp, r.energy_i, r.lambda_p, r.sigma_inf, dist
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub p_start: f64,
    pub ratio: f64,
    pub steps: usize,
    pub p_final: f64,
}

/// `(u_{p_K}, σ_{p_K})` from the last step.
#[derive(Debug, Clone)]
pub struct LimitCandidate {
    pub u_star: ScalarField,
    pub z_star: VectorField,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default)]
pub struct ContinuationOptions {
    pub pq: PqOptions,
    /// Write `u_k` and `σ_k` here instead of keeping them in memory.
    pub snapshot_dir: Option<PathBuf>,
}

fn abort(step: usize, p: f64, source: Error, trace: ContinuationTrace) -> Error {
    Error::Continuation {
        step,
        p,
        source: Box::new(source),
        partial: Box::new(trace),
    }
}

pub fn run_continuation(
    spec: &ProblemSpec,
    params: ScheduleParams,
    opts: &ContinuationOptions,
) -> Result<(ContinuationTrace, LimitCandidate)> {
    let schedule = params.validate()?;
    let step_specs = schedule
        .iter()
        .map(|&p| spec.with_p(p))
        .collect::<Result<Vec<_>>>()?;
    let limit_spec = spec.with_smoothing(0.0);
    let mut trace = ContinuationTrace {
        params,
        records: Vec::new(),
        memory: Vec::new(),
    };
    let mut prev: Option<PqSolution> = None;
    let mut prev_grad: Option<VectorField> = None;

    for (k, (step_spec, &p)) in step_specs.iter().zip(&schedule).enumerate() {
        let sol = match solve_pq(step_spec, prev.as_ref().map(|s| &s.u), opts.pq) {
            Ok(sol) if sol.converged => sol,
            Ok(sol) => {
                let err = Error::NotConverged {
                    iterations: sol.iterations,
                    grad_norm: sol.grad_norm,
                };
                return Err(abort(k, p, err, trace));
            }
            Err(e) => return Err(abort(k, p, e, trace)),
        };
        let grad = gradient(&sol.u);
        let (dist_prev, sigma_drift) = match (&prev, &prev_grad) {
            (Some(ps), Some(pg)) => {
                let diff = grad.combine(1.0, pg, -1.0)?;
                let dist = weighted_lq_norm(&diff, spec.weight(), spec.q())?;
                (Some(dist), Some(sol.sigma.max_diff(&ps.sigma)?))
            }
            _ => (None, None),
        };
        let snapshot = match &opts.snapshot_dir {
            Some(dir) => {
                let u_path = dir.join(format!("u_{k:03}.csv"));
                let s_path = dir.join(format!("sigma_{k:03}.csv"));
                if let Err(e) =
                    write_field(&sol.u, &u_path).and_then(|_| write_vfield(&sol.sigma, &s_path))
                {
                    return Err(abort(k, p, e, trace));
                }
                SnapshotHandle::File {
                    u: u_path,
                    sigma: s_path,
                }
            }
            None => {
                trace.memory.push(sol.u.clone());
                SnapshotHandle::Memory(trace.memory.len() - 1)
            }
        };
        trace.records.push(StepRecord {
            k,
            p,
            snapshot,
            lambda_p: sol.lambda,
            energy_fp: sol.energy.total,
            energy_i: energy_i(&sol.u, &limit_spec)?.total,
            sigma_inf: sol.sigma.sup_norm(),
            grad_inf: grad.sup_norm(),
            dist_prev,
            sigma_drift,
            iterations: sol.iterations,
            grad_norm: sol.grad_norm,
        });
        prev = Some(sol);
        prev_grad = Some(grad);
    }

    let last = prev.expect("schedule has at least one step");
    let candidate = LimitCandidate {
        u_star: last.u,
        z_star: last.sigma,
        provenance: Provenance {
            p_start: params.p_start,
            ratio: params.ratio,
            steps: params.steps,
            p_final: *schedule.last().unwrap(),
        },
    };
    Ok((trace, candidate))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub steps: usize,
    /// The last (up to three) distances between consecutive steps are
    /// non-increasing, up to roundoff.
    pub distances_decreasing: bool,
    pub last_distances: Vec<f64>,
    pub final_sigma_inf: f64,
    pub sigma_slack: f64,
    pub sigma_bound_ok: bool,
    /// Successive distance ratios `d_k / d_{k−1}`.
    pub rate_estimates: Vec<f64>,
    pub rate_estimate: Option<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn convergence_diagnostics(
    trace: &ContinuationTrace,
    sigma_slack: f64,
) -> Result<ConvergenceReport> {
    let n = trace.records.len();
    if n < 3 {
        return Err(Error::Diagnostics(format!(
            "need at least 3 steps, trace has {n}"
        )));
    }
    let dists: Vec<f64> = trace.records.iter().filter_map(|r| r.dist_prev).collect();
    let tail: Vec<f64> = dists[dists.len().saturating_sub(3)..].to_vec();
    let distances_decreasing = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
    let rate_estimates: Vec<f64> = dists
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let final_sigma_inf = trace.records[n - 1].sigma_inf;
    let lambda_min = trace
        .records
        .iter()
        .map(|r| r.lambda_p)
        .fold(f64::INFINITY, f64::min);
    let lambda_max = trace.records.iter().map(|r| r.lambda_p).fold(0.0, f64::max);
    Ok(ConvergenceReport {
        steps: n,
        distances_decreasing,
        last_distances: tail,
        final_sigma_inf,
        sigma_slack,
        sigma_bound_ok: final_sigma_inf <= 1.0 + sigma_slack,
        rate_estimate: rate_estimates.last().copied(),
        rate_estimates,
        lambda_min,
        lambda_max,
    })
}
