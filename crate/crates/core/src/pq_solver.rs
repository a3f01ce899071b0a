//! Minimizer of the p,q double-phase energy with prescribed boundary values.

use crate::energy::{
    energy_fp, gradient_free, hessian_free, p_flux, q_flux, weak_residual, EnergyKind,
    EnergyReport, Integrand, ProblemSpec,
};
use crate::error::{Error, Result};
use crate::mesh::{gradient, same_mesh, ScalarField, VectorField};
use crate::newton::{minimize, solve_spd};
use crate::spaces::luxemburg_norm;

/// Below this `p` the solver allows a few extra Newton steps.
const NEAR_ONE: f64 = 1.05;
const NEAR_ONE_EXTRA_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PqOptions {
    /// Stopping tolerance on the max-norm of the free-node gradient.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PqOptions {
    fn default() -> Self {
        PqOptions {
            tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PqSolution {
    pub u: ScalarField,
    /// `|∇u|^{p−2}∇u`
    pub sigma: VectorField,
    /// `a|∇u|^{q−2}∇u`
    pub tau: VectorField,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub energy: EnergyReport,
    /// Energy after each accepted Newton step, starting at the initial guess.
    pub energy_history: Vec<f64>,
    /// Luxemburg norm of `∇u` under `t^p + a t^q`.
    pub lambda: f64,
    pub floored_cells: usize,
}

/// Discrete solution of the quadratic problem `min ∫ (1 + a)|∇u|²/2` with
/// the spec's boundary data; used as the default initial guess.
pub fn harmonic_extension(spec: &ProblemSpec) -> Result<ScalarField> {
    let quad = ProblemSpec::unchecked(
        spec.weight().clone(),
        Some(2.0),
        2.0,
        spec.boundary().to_vec(),
        0.0,
    )?;
    let f = Integrand::for_spec(&quad, EnergyKind::Fp)?;
    let mut values = quad.pinned_zero().into_values();
    let mesh = spec.mesh();
    if !mesh.free_nodes().is_empty() {
        let g = gradient_free(&quad, &f, &values);
        let (h, _) = hessian_free(&quad, &f, &values);
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let d = solve_spd(&h, &neg)?;
        for (&n, dk) in mesh.free_nodes().iter().zip(d) {
            values[n] += dk;
        }
    }
    ScalarField::new(mesh, values)
}

/// Damped Newton on `F_p` from `init` (default: [`harmonic_extension`]).
///
/// Running out of iterations is not an error: the last iterate is returned
/// with `converged == false`.
pub fn solve_pq(
    spec: &ProblemSpec,
    init: Option<&ScalarField>,
    opts: PqOptions,
) -> Result<PqSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let exps = spec.exponents()?;
    let f = Integrand::for_spec(spec, EnergyKind::Fp)?;
    let start = match init {
        Some(u) => {
            same_mesh(u.mesh(), spec.mesh())?;
            u.values().to_vec()
        }
        None => harmonic_extension(spec)?.into_values(),
    };
    let max_iter = if exps.p() < NEAR_ONE {
        opts.max_iter + NEAR_ONE_EXTRA_STEPS
    } else {
        opts.max_iter
    };
    let run = minimize(spec, &f, start, opts.tol, max_iter)?;
    let u = ScalarField::new(spec.mesh(), run.values)?;
    let grad = gradient(&u);
    let sigma = p_flux(&grad, exps.p());
    let tau = q_flux(&grad, spec.weight(), exps.q());
    let energy = energy_fp(&u, spec)?;
    let lambda = luxemburg_norm(&grad, spec.weight(), &exps)?;
    Ok(PqSolution {
        u,
        sigma,
        tau,
        iterations: run.iterations,
        grad_norm: run.grad_norm,
        converged: run.converged,
        energy,
        energy_history: run.energies,
        lambda,
        floored_cells: run.floored_cells,
    })
}

/// `max_i |∫ (σ + τ)·∇φ_i dx|` over the interior hat functions.
pub fn weak_residual_pq(sol: &PqSolution, spec: &ProblemSpec) -> Result<f64> {
    same_mesh(sol.u.mesh(), spec.mesh())?;
    Ok(weak_residual(&sol.sigma.combine(1.0, &sol.tau, 1.0)?))
}
