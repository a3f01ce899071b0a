//! Direct minimization of the limit functional and certificate checks.
//!
//! The total-variation term is smoothed with `φ_ε(t) = √(t²+ε²) − ε` and ε is
//! driven down a decreasing schedule, warm-starting each stage. The
//! certificate field is `z = ∇u/√(|∇u|²+ε²)`, which is the flux of the
//! smoothed term, so the divergence identity of the certificate is exactly
//! the first-order condition of the last stage.

use rand::Rng;
use serde::Serialize;

use crate::energy::{energy_i, q_flux, weak_residual, EnergyKind, Integrand, ProblemSpec};
use crate::error::{Error, Result};
use crate::mesh::{gradient, same_mesh, Mesh, ScalarField, VectorField};
use crate::newton::minimize;
use crate::pq_solver::harmonic_extension;

#[derive(Debug, Clone, PartialEq)]
pub struct LimitOptions {
    /// Strictly decreasing, all positive.
    pub eps_schedule: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions {
            eps_schedule: default_eps_schedule(),
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// `1e-1, 1e-2, …, 1e-6`.
pub fn default_eps_schedule() -> Vec<f64> {
    (1..=6).map(|k| 10f64.powi(-k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsStage {
    pub eps: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub energy_smoothed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    /// `I(u*)` without smoothing.
    pub energy_i: f64,
    pub tv_term: f64,
    pub q_term: f64,
    pub stages: Vec<EpsStage>,
    pub eps_final: f64,
}

#[derive(Debug, Clone)]
pub struct LimitSolution {
    pub u_star: ScalarField,
    pub z_star: VectorField,
    pub report: LimitReport,
}

/// `z = ∇u/√(|∇u|²+ε²)` per cell.
pub fn smoothed_unit_field(u: &ScalarField, eps: f64) -> VectorField {
    let g = gradient(u);
    let raw = g
        .raw()
        .iter()
        .map(|v| {
            let s = 1.0 / (v[0] * v[0] + v[1] * v[1] + eps * eps).sqrt();
            if s.is_finite() {
                [v[0] * s, v[1] * s]
            } else {
                [0.0, 0.0]
            }
        })
        .collect();
    VectorField::from_raw(u.mesh(), raw)
}

pub fn solve_limit(
    spec: &ProblemSpec,
    opts: &LimitOptions,
    init: Option<&ScalarField>,
) -> Result<LimitSolution> {
    let eps = &opts.eps_schedule;
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidSchedule(
            "ε schedule must be strictly decreasing and positive".into(),
        ));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let mut values = match init {
        Some(u) => {
            same_mesh(u.mesh(), spec.mesh())?;
            u.values().to_vec()
        }
        None => harmonic_extension(spec)?.into_values(),
    };
    let mut report = LimitReport {
        energy_i: f64::NAN,
        tv_term: f64::NAN,
        q_term: f64::NAN,
        stages: Vec::new(),
        eps_final: *eps.last().unwrap(),
    };
    for &e in eps {
        let stage_spec = spec.with_smoothing(e);
        let f = Integrand::for_spec(&stage_spec, EnergyKind::IEps)?;
        let run = match minimize(&stage_spec, &f, values, opts.tol, opts.max_iter) {
            Ok(run) if run.converged => run,
            Ok(run) => {
                let err = Error::NotConverged {
                    iterations: run.iterations,
                    grad_norm: run.grad_norm,
                };
                return Err(Error::LimitAborted {
                    eps: e,
                    source: Box::new(err),
                    partial: Box::new(report),
                });
            }
            Err(err) => {
                return Err(Error::LimitAborted {
                    eps: e,
                    source: Box::new(err),
                    partial: Box::new(report),
                })
            }
        };
        report.stages.push(EpsStage {
            eps: e,
            iterations: run.iterations,
            grad_norm: run.grad_norm,
            energy_smoothed: *run.energies.last().unwrap(),
        });
        values = run.values;
    }
    let u_star = ScalarField::new(spec.mesh(), values)?;
    let z_star = smoothed_unit_field(&u_star, report.eps_final);
    let energy = energy_i(&u_star, &spec.with_smoothing(0.0))?;
    report.energy_i = energy.total;
    report.tv_term = energy.p_term;
    report.q_term = energy.q_term;
    Ok(LimitSolution {
        u_star,
        z_star,
        report,
    })
}

/// Acceptance thresholds for a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Thresholds {
    /// Bound on the divergence residual.
    pub residual: f64,
    /// Allowed excess of `‖z‖∞` over 1.
    pub z_slack: f64,
    /// Bound on `(|∇u| − z·∇u)/max(1, |∇u|)` over active cells.
    pub alignment: f64,
    /// Cells with `|∇u| > activity·max|∇u|` are active.
    pub activity: f64,
}

impl Thresholds {
    /// `1e-6·h` for the residual and `1e-3` for the bound and alignment at
    /// 512 cells in 1D or 64×64 in 2D, tightened proportionally on finer
    /// meshes.
    pub fn for_mesh(mesh: &Mesh) -> Self {
        let h = mesh.mesh_size();
        let [lx, ly] = mesh.extent();
        let h_ref = if mesh.dim() == 1 {
            lx / 512.0
        } else {
            lx.max(ly) / 64.0
        };
        let scale = (h / h_ref).min(1.0);
        Thresholds {
            residual: 1e-6 * h,
            z_slack: 1e-3 * scale,
            alignment: 1e-3 * scale,
            activity: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    #[serde(skip)]
    pub u: ScalarField,
    #[serde(skip)]
    pub z: VectorField,
    /// `max_i |∫ z·∇φ_i + a|∇u|^{q−2}∇u·∇φ_i|` over interior hat functions.
    pub residual_div: f64,
    pub z_inf: f64,
    /// `max_c (|∇u| − z·∇u)`.
    pub alignment_gap: f64,
    /// `max (|∇u| − z·∇u)/max(1, |∇u|)` over active cells.
    pub alignment_gap_active: f64,
    pub active_cells: usize,
    #[serde(rename = "energy_I")]
    pub energy_i: f64,
    pub thresholds: Thresholds,
    pub residual_ok: bool,
    pub bound_ok: bool,
    pub alignment_ok: bool,
    pub pass: bool,
}

pub fn verify_certificate(
    u: &ScalarField,
    z: &VectorField,
    spec: &ProblemSpec,
    thresholds: Thresholds,
) -> Result<Certificate> {
    spec.check_trace(u)?;
    same_mesh(z.mesh(), spec.mesh())?;
    let grad = gradient(u);
    let tau = q_flux(&grad, spec.weight(), spec.q());
    let residual_div = weak_residual(&z.combine(1.0, &tau, 1.0)?);
    let z_inf = z.sup_norm();
    let grad_max = grad.sup_norm();
    let cutoff = thresholds.activity * grad_max;
    let mut alignment_gap = f64::NEG_INFINITY;
    let mut alignment_gap_active = 0.0f64;
    let mut active_cells = 0;
    for c in 0..spec.mesh().n_cells() {
        let g = grad.get(c);
        let zc = z.get(c);
        let t = grad.magnitude(c);
        let dot: f64 = g.iter().zip(zc).map(|(a, b)| a * b).sum();
        let gap = t - dot;
        alignment_gap = alignment_gap.max(gap);
        if t > cutoff && t > 0.0 {
            active_cells += 1;
            alignment_gap_active = alignment_gap_active.max(gap / t.max(1.0));
        }
    }
    let energy_i = energy_i(u, &spec.with_smoothing(0.0))?.total;
    let residual_ok = residual_div <= thresholds.residual;
    let bound_ok = z_inf <= 1.0 + thresholds.z_slack;
    let alignment_ok = alignment_gap_active <= thresholds.alignment;
    Ok(Certificate {
        u: u.clone(),
        z: z.clone(),
        residual_div,
        z_inf,
        alignment_gap,
        alignment_gap_active,
        active_cells,
        energy_i,
        thresholds,
        residual_ok,
        bound_ok,
        alignment_ok,
        pass: residual_ok && bound_ok && alignment_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub max_diff: f64,
    pub energy_a: f64,
    pub energy_b: f64,
    pub energy_gap: f64,
    /// `min_c a·(|∇u_A|^{q−2}∇u_A − |∇u_B|^{q−2}∇u_B)·(∇u_A − ∇u_B)`.
    pub monotonicity_min: f64,
}

/// Compares two candidate solutions of the same limit problem.
pub fn cross_check(u_a: &ScalarField, u_b: &ScalarField, spec: &ProblemSpec) -> Result<CrossCheck> {
    same_mesh(u_a.mesh(), spec.mesh())?;
    same_mesh(u_b.mesh(), spec.mesh())?;
    let limit = spec.with_smoothing(0.0);
    let energy_a = energy_i(u_a, &limit)?.total;
    let energy_b = energy_i(u_b, &limit)?.total;
    let (ga, gb) = (gradient(u_a), gradient(u_b));
    let (fa, fb) = (
        q_flux(&ga, spec.weight(), spec.q()),
        q_flux(&gb, spec.weight(), spec.q()),
    );
    let mut monotonicity_min = f64::INFINITY;
    for c in 0..spec.mesh().n_cells() {
        let v: f64 = (0..spec.mesh().dim())
            .map(|i| (fa.get(c)[i] - fb.get(c)[i]) * (ga.get(c)[i] - gb.get(c)[i]))
            .sum();
        monotonicity_min = monotonicity_min.min(v);
    }
    Ok(CrossCheck {
        max_diff: u_a.max_abs_diff(u_b)?,
        energy_a,
        energy_b,
        energy_gap: (energy_a - energy_b).abs(),
        monotonicity_min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityReport {
    pub samples: usize,
    pub energy: f64,
    /// `min_w I(u + w) − I(u)` over the sampled perturbations.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `I(u) ≤ I(u + w) + tolerance` for random interior perturbations
/// `w` with amplitudes spread over `10^{-6}..10^{-1}` times `max|u|`.
pub fn minimality_probe(
    u: &ScalarField,
    spec: &ProblemSpec,
    samples: usize,
    tolerance: f64,
    rng: &mut impl Rng,
) -> Result<MinimalityReport> {
    spec.check_trace(u)?;
    let limit = spec.with_smoothing(0.0);
    let energy = energy_i(u, &limit)?.total;
    let scale = u
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let mut worst_margin = f64::INFINITY;
    for _ in 0..samples {
        let amp = scale * 10f64.powf(-rng.gen_range(1.0..6.0));
        let mut v = u.values().to_vec();
        for &n in spec.mesh().free_nodes() {
            v[n] += amp * rng.gen_range(-1.0..1.0);
        }
        let perturbed = ScalarField::from_raw(u.mesh(), v);
        worst_margin = worst_margin.min(energy_i(&perturbed, &limit)?.total - energy);
    }
    Ok(MinimalityReport {
        samples,
        energy,
        worst_margin,
        tolerance,
        pass: samples == 0 || worst_margin >= -tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::Weight;
    use approx::assert_relative_eq;

    fn constant_1d(n: usize) -> ProblemSpec {
        let m = Mesh::interval(n, 1.0).unwrap();
        ProblemSpec::limit(Weight::constant(&m, 1.0).unwrap(), 2.0, vec![0.0, 1.0], 0.0).unwrap()
    }

    #[test]
    fn constant_weight_limit_is_linear() {
        let spec = constant_1d(32);
        let sol = solve_limit(&spec, &LimitOptions::default(), None).unwrap();
        let exact = ScalarField::from_fn(spec.mesh(), |x| x[0]).unwrap();
        assert!(sol.u_star.max_abs_diff(&exact).unwrap() < 1e-9);
        assert_relative_eq!(sol.report.energy_i, 1.5, max_relative = 1e-9);
        assert!((sol.z_star.sup_norm() - 1.0).abs() <= 1e-6);
        assert!(sol.z_star.sup_norm() < 1.0);
    }

    #[test]
    fn constant_boundary_data_gives_constant_solution() {
        let m = Mesh::rectangle(6, 6, 1.0, 1.0).unwrap();
        let w = Weight::from_fn(&m, |x| 1.0 + x[0] * x[1]).unwrap();
        let bnd = vec![2.5; m.boundary_nodes().len()];
        let spec = ProblemSpec::limit(w, 1.4, bnd, 0.0).unwrap();
        let sol = solve_limit(&spec, &LimitOptions::default(), None).unwrap();
        assert!(sol.u_star.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
        assert!(sol.report.energy_i.abs() < 1e-12);
    }

    #[test]
    fn exact_certificate_passes() {
        let spec = constant_1d(16);
        let u = ScalarField::from_fn(spec.mesh(), |x| x[0]).unwrap();
        let z = VectorField::new(spec.mesh(), vec![vec![1.0]; 16]).unwrap();
        let cert = verify_certificate(&u, &z, &spec, Thresholds::for_mesh(spec.mesh())).unwrap();
        assert!(cert.residual_div < 1e-12);
        assert_eq!(cert.z_inf, 1.0);
        assert!(cert.alignment_gap.abs() < 1e-12);
        assert!(cert.pass);

        let bad = verify_certificate(&u, &z.scale(1.5), &spec, Thresholds::for_mesh(spec.mesh()))
            .unwrap();
        assert_eq!(bad.z_inf, 1.5);
        assert!(!bad.bound_ok);
        assert!(!bad.pass);
    }

    #[test]
    fn trace_mismatch_is_hard_error() {
        let spec = constant_1d(8);
        let u = ScalarField::from_fn(spec.mesh(), |x| x[0] + 0.1).unwrap();
        let z = VectorField::zeros(spec.mesh());
        let err = verify_certificate(&u, &z, &spec, Thresholds::for_mesh(spec.mesh()));
        assert!(matches!(err, Err(Error::TraceMismatch { .. })));
    }

    #[test]
    fn eps_schedule_validation() {
        let spec = constant_1d(8);
        for bad in [vec![], vec![1e-2, 1e-1], vec![1e-1, 0.0]] {
            let opts = LimitOptions {
                eps_schedule: bad,
                ..LimitOptions::default()
            };
            assert!(solve_limit(&spec, &opts, None).is_err());
        }
    }

    #[test]
    fn thresholds_scale_with_mesh() {
        let t = Thresholds::for_mesh(&Mesh::interval(512, 1.0).unwrap());
        assert_relative_eq!(t.residual, 1e-6 / 512.0);
        assert_relative_eq!(t.z_slack, 1e-3);
        let t = Thresholds::for_mesh(&Mesh::interval(1024, 1.0).unwrap());
        assert_relative_eq!(t.z_slack, 5e-4);
        let t = Thresholds::for_mesh(&Mesh::interval(64, 1.0).unwrap());
        assert_relative_eq!(t.z_slack, 1e-3);
    }
}
