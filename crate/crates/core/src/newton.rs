//! Damped Newton minimization over the free nodes of a Dirichlet problem.

use crate::energy::{energy_parts, gradient_free, hessian_free, Integrand, ProblemSpec};
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone)]
pub(crate) struct NewtonRun {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub energies: Vec<f64>,
    pub converged: bool,
    pub floored_cells: usize,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Solves `H d = rhs`, shifting the diagonal if the factorization breaks down
/// (only possible through roundoff on nearly singular blocks).
pub(crate) fn solve_spd(h: &BandMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    match h.cholesky() {
        Ok(f) => Ok(f.solve(rhs)),
        Err(first) => {
            let scale = h.max_abs_diagonal().max(f64::MIN_POSITIVE);
            let mut shift = 1e-14 * scale;
            for _ in 0..12 {
                let mut shifted = h.clone();
                shifted.shift_diagonal(shift);
                if let Ok(f) = shifted.cholesky() {
                    return Ok(f.solve(rhs));
                }
                shift *= 10.0;
            }
            Err(first)
        }
    }
}

/// Roundoff level of an energy summed over `cells` terms.
fn summation_noise(e: f64, cells: usize) -> f64 {
    8.0 * f64::EPSILON * e.abs().max(f64::MIN_POSITIVE) * (cells as f64).sqrt().max(1.0)
}

pub(crate) fn minimize(
    spec: &ProblemSpec,
    f: &Integrand,
    mut values: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonRun> {
    spec.pin(&mut values);
    let mesh = spec.mesh();
    let free = mesh.free_nodes();
    let energy = |v: &[f64]| {
        let (a, b) = energy_parts(spec, f, v);
        a + b
    };
    let mut e = energy(&values);
    let mut energies = vec![e];
    let mut floored_cells = 0;
    let mut g = gradient_free(spec, f, &values);
    let mut gn = max_abs(&g);
    let mut iterations = 0;
    while gn > tol && iterations < max_iter {
        let (h, floored) = hessian_free(spec, f, &values);
        floored_cells = floored;
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let d = solve_spd(&h, &neg)?;
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            return Err(Error::LineSearch {
                iteration: iterations,
            });
        }
        let mut trial = values.clone();
        let mut alpha = 1.0;
        let mut accepted = None;
        let noise = summation_noise(e, mesh.n_cells());
        let halvings = if -slope > 100.0 * noise {
            MAX_HALVINGS
        } else {
            0
        };
        for _ in 0..=halvings {
            for (k, &n) in free.iter().enumerate() {
                trial[n] = values[n] + alpha * d[k];
            }
            let et = energy(&trial);
            if et <= e + ARMIJO_C * alpha * slope {
                accepted = Some(et);
                break;
            }
            alpha *= 0.5;
        }
        let et = match accepted {
            Some(et) => et,
            None => {
                // The predicted decrease is below the resolution of the
                // energy; take the full step if it does not lose ground.
                for (k, &n) in free.iter().enumerate() {
                    trial[n] = values[n] + d[k];
                }
                let et = energy(&trial);
                let gt = gradient_free(spec, f, &trial);
                if et <= e + noise && max_abs(&gt) < gn {
                    et
                } else {
                    return Err(Error::LineSearch {
                        iteration: iterations,
                    });
                }
            }
        };
        values.copy_from_slice(&trial);
        e = et;
        energies.push(e);
        g = gradient_free(spec, f, &values);
        gn = max_abs(&g);
        iterations += 1;
    }
    Ok(NewtonRun {
        values,
        iterations,
        grad_norm: gn,
        energies,
        converged: gn <= tol,
        floored_cells,
    })
}
