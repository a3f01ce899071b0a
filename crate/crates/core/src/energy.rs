//! Discrete double-phase energies and their derivatives.
//!
//! Every energy here has the form `Σ_cells ψ(|∇u|_c; a_c)·vol_c` for a convex
//! radial integrand `ψ`, so the gradient with respect to the free nodal
//! values is the weak form tested against the hat functions and the Hessian
//! is assembled from the 2×2 blocks `ψ'(t)/t·(I − ĝĝᵀ) + ψ''(t)·ĝĝᵀ`.
//!
//! Boundary nodes are pinned to the Dirichlet data and are never unknowns.

use std::sync::Arc;

use crate::error::{Error, Hypothesis, Result};
use crate::linalg::BandMatrix;
use crate::mesh::{cell_gradient, same_mesh, Mesh, ScalarField, VectorField};
use crate::spaces::{Exponents, Weight};

/// Floor on `|∇u|` inside second-derivative formulas.
pub const HESSIAN_FLOOR: f64 = 1e-10;

/// A Dirichlet problem: mesh, weight, exponents and boundary data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    weight: Weight,
    p: Option<f64>,
    q: f64,
    boundary: Vec<f64>,
    smoothing: f64,
}

impl ProblemSpec {
    /// The p,q problem. Checks both clauses of (H).
    pub fn pq(weight: Weight, exponents: Exponents, boundary: Vec<f64>) -> Result<Self> {
        if exponents.dim() != weight.mesh().dim() {
            return Err(Error::InvalidProblem(format!(
                "exponents were validated for N = {} but the mesh has N = {}",
                exponents.dim(),
                weight.mesh().dim()
            )));
        }
        weight.check_hypothesis()?;
        let spec = ProblemSpec {
            weight,
            p: Some(exponents.p()),
            q: exponents.q(),
            boundary,
            smoothing: 0.0,
        };
        spec.check_boundary()?;
        Ok(spec)
    }

    /// The limit problem (no `p`). The exponent clause of (H) must hold for
    /// every `p > 1`, which means `q ≤ 1 + 1/N`.
    pub fn limit(weight: Weight, q: f64, boundary: Vec<f64>, smoothing: f64) -> Result<Self> {
        let dim = weight.mesh().dim();
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::InvalidExponents(format!("need q > 1, got {q}")));
        }
        let bound = 1.0 + 1.0 / dim as f64;
        if q > bound {
            return Err(Error::Hypothesis {
                clause: Hypothesis::ExponentGap,
                detail: format!("q = {q} exceeds 1 + 1/N = {bound}, so no p > 1 near 1 qualifies"),
            });
        }
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "smoothing must be ≥ 0, got {smoothing}"
            )));
        }
        weight.check_hypothesis()?;
        let spec = ProblemSpec {
            weight,
            p: None,
            q,
            boundary,
            smoothing,
        };
        spec.check_boundary()?;
        Ok(spec)
    }

    /// A problem that skips (H); for reference fixtures such as `p = q = 2`.
    pub fn unchecked(
        weight: Weight,
        p: Option<f64>,
        q: f64,
        boundary: Vec<f64>,
        smoothing: f64,
    ) -> Result<Self> {
        let spec = ProblemSpec {
            weight,
            p,
            q,
            boundary,
            smoothing,
        };
        spec.check_boundary()?;
        Ok(spec)
    }

    fn check_boundary(&self) -> Result<()> {
        let expected = self.mesh().boundary_nodes().len();
        if self.boundary.len() != expected {
            return Err(Error::InvalidProblem(format!(
                "expected {expected} boundary values, got {}",
                self.boundary.len()
            )));
        }
        if self.boundary.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidProblem("boundary data must be finite".into()));
        }
        Ok(())
    }

    /// Same problem with exponent `p`, revalidated against (H).
    pub fn with_p(&self, p: f64) -> Result<Self> {
        let e = Exponents::new(p, self.q, self.mesh().dim())?;
        Ok(ProblemSpec {
            p: Some(e.p()),
            ..self.clone()
        })
    }

    pub fn with_smoothing(&self, smoothing: f64) -> Self {
        ProblemSpec {
            smoothing,
            ..self.clone()
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.weight.mesh()
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn p(&self) -> Option<f64> {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Dirichlet values in the order of [`Mesh::boundary_nodes`].
    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    pub fn exponents(&self) -> Result<Exponents> {
        let p = self.p.ok_or(Error::MissingP)?;
        Ok(Exponents::fixture(p, self.q, self.mesh().dim()))
    }

    /// Samples `h` at the boundary nodes of `mesh`.
    pub fn boundary_from_fn(mesh: &Mesh, h: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        mesh.boundary_nodes()
            .iter()
            .map(|&n| h(mesh.node(n)))
            .collect()
    }

    /// Zero interior values with the boundary data pinned.
    pub fn pinned_zero(&self) -> ScalarField {
        let mut values = vec![0.0; self.mesh().n_nodes()];
        self.pin(&mut values);
        ScalarField::from_raw(self.mesh(), values)
    }

    pub(crate) fn pin(&self, values: &mut [f64]) {
        for (&n, &h) in self.mesh().boundary_nodes().iter().zip(&self.boundary) {
            values[n] = h;
        }
    }

    /// Checks that `u` lives on this mesh and matches the boundary data exactly.
    pub fn check_trace(&self, u: &ScalarField) -> Result<()> {
        same_mesh(u.mesh(), self.mesh())?;
        for (&n, &h) in self.mesh().boundary_nodes().iter().zip(&self.boundary) {
            if u.values()[n] != h {
                return Err(Error::TraceMismatch {
                    node: n,
                    found: u.values()[n],
                    expected: h,
                });
            }
        }
        Ok(())
    }
}

/// Value of an energy split into its two phases. For the p,q energy the
/// parts are `∫|∇u|^p/p` and `∫a|∇u|^q/q`; for the limit energy they are the
/// (smoothed) total variation and `∫a|∇u|^q/q`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EnergyReport {
    pub total: f64,
    pub p_term: f64,
    pub q_term: f64,
}

/// Which energy a derivative refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyKind {
    /// `F_p(u) = ∫ |∇u|^p/p + a|∇u|^q/q`.
    Fp,
    /// `I_ε(u) = ∫ φ_ε(|∇u|) + a|∇u|^q/q` with `φ_ε(t) = √(t²+ε²) − ε`.
    IEps,
}

/// `φ_ε(t) = √(t² + ε²) − ε`, written to stay accurate for `t ≪ ε`.
pub fn smoothed_abs(t: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        t
    } else {
        t * t / ((t * t + eps * eps).sqrt() + eps)
    }
}

/// The radial integrand of one energy.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Integrand {
    kind: EnergyKind,
    p: f64,
    q: f64,
    eps: f64,
}

impl Integrand {
    pub(crate) fn for_spec(spec: &ProblemSpec, kind: EnergyKind) -> Result<Self> {
        let p = match kind {
            EnergyKind::Fp => spec.p.ok_or(Error::MissingP)?,
            EnergyKind::IEps => 1.0,
        };
        Ok(Integrand {
            kind,
            p,
            q: spec.q,
            eps: spec.smoothing,
        })
    }

    fn require_differentiable(&self) -> Result<()> {
        if self.kind == EnergyKind::IEps && self.eps <= 0.0 {
            return Err(Error::ZeroSmoothing);
        }
        Ok(())
    }

    /// `(first phase, weighted phase)` densities.
    #[inline]
    fn density(&self, t: f64, a: f64) -> (f64, f64) {
        let first = match self.kind {
            EnergyKind::Fp => t.powf(self.p) / self.p,
            EnergyKind::IEps => smoothed_abs(t, self.eps),
        };
        (first, a * t.powf(self.q) / self.q)
    }

    /// `ψ'(t)/t`; the flux is this times `∇u`. Singular powers at `t = 0` are
    /// replaced by 0 since they multiply a zero gradient.
    #[inline]
    fn flux_coefficient(&self, t: f64, a: f64) -> f64 {
        let first = match self.kind {
            EnergyKind::Fp => pow_or_zero(t, self.p - 2.0),
            EnergyKind::IEps => 1.0 / (t * t + self.eps * self.eps).sqrt(),
        };
        first + a * pow_or_zero(t, self.q - 2.0)
    }

    /// `(ψ'(t)/t, ψ''(t))` at `t`, which the caller floors.
    #[inline]
    fn curvature(&self, t: f64, a: f64) -> (f64, f64) {
        let (first_ratio, first_second) = match self.kind {
            EnergyKind::Fp => (t.powf(self.p - 2.0), (self.p - 1.0) * t.powf(self.p - 2.0)),
            EnergyKind::IEps => {
                let r2 = t * t + self.eps * self.eps;
                (1.0 / r2.sqrt(), self.eps * self.eps / (r2 * r2.sqrt()))
            }
        };
        let qt = if a == 0.0 {
            0.0
        } else {
            a * t.powf(self.q - 2.0)
        };
        (first_ratio + qt, first_second + (self.q - 1.0) * qt)
    }

    /// Whether the second derivative blows up at `t = 0`.
    fn singular_at_zero(&self, a: f64) -> bool {
        let p_sing = self.kind == EnergyKind::Fp && self.p < 2.0;
        let q_sing = a > 0.0 && self.q < 2.0;
        p_sing || q_sing
    }
}

#[inline]
fn pow_or_zero(t: f64, e: f64) -> f64 {
    if t == 0.0 {
        if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        t.powf(e)
    }
}

#[inline]
fn norm2(g: [f64; 2]) -> f64 {
    g[0].hypot(g[1])
}

pub(crate) fn energy_parts(spec: &ProblemSpec, f: &Integrand, values: &[f64]) -> (f64, f64) {
    let mesh = spec.mesh();
    let w = spec.weight();
    let (mut first, mut weighted) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let t = norm2(cell_gradient(mesh, values, c));
        let (d1, d2) = f.density(t, w.cell_value(c));
        let vol = mesh.cell_volume(c);
        first += d1 * vol;
        weighted += d2 * vol;
    }
    (first, weighted)
}

/// Derivative with respect to the free nodal values.
pub(crate) fn gradient_free(spec: &ProblemSpec, f: &Integrand, values: &[f64]) -> Vec<f64> {
    let mesh = spec.mesh();
    let w = spec.weight();
    let mut out = vec![0.0; mesh.free_nodes().len()];
    for c in 0..mesh.n_cells() {
        let g = cell_gradient(mesh, values, c);
        let k = f.flux_coefficient(norm2(g), w.cell_value(c)) * mesh.cell_volume(c);
        for (&n, dphi) in mesh.cell_nodes(c).iter().zip(mesh.basis_gradients(c)) {
            if let Some(i) = mesh.free_index(n) {
                out[i] += k * (g[0] * dphi[0] + g[1] * dphi[1]);
            }
        }
    }
    out
}

/// Banded Hessian on the free nodes plus the number of floored cells.
pub(crate) fn hessian_free(
    spec: &ProblemSpec,
    f: &Integrand,
    values: &[f64],
) -> (BandMatrix, usize) {
    let mesh = spec.mesh();
    let w = spec.weight();
    let mut h = BandMatrix::zeros(mesh.free_nodes().len(), mesh.free_bandwidth());
    let mut floored = 0;
    for c in 0..mesh.n_cells() {
        let g = cell_gradient(mesh, values, c);
        let a = w.cell_value(c);
        let t = norm2(g);
        if t < HESSIAN_FLOOR && f.singular_at_zero(a) {
            floored += 1;
        }
        let te = t.max(HESSIAN_FLOOR);
        let (ratio, second) = f.curvature(te, a);
        // M = ratio·I + (second − ratio)·ĝĝᵀ, isotropic when ∇u = 0
        let m = if t == 0.0 {
            [[second, 0.0], [0.0, second]]
        } else {
            let gh = [g[0] / t, g[1] / t];
            let beta = second - ratio;
            [
                [ratio + beta * gh[0] * gh[0], beta * gh[0] * gh[1]],
                [beta * gh[1] * gh[0], ratio + beta * gh[1] * gh[1]],
            ]
        };
        let vol = mesh.cell_volume(c);
        let nodes = mesh.cell_nodes(c);
        let grads = mesh.basis_gradients(c);
        for (k, &nk) in nodes.iter().enumerate() {
            let Some(i) = mesh.free_index(nk) else {
                continue;
            };
            let gk = grads[k];
            let mk = [
                m[0][0] * gk[0] + m[0][1] * gk[1],
                m[1][0] * gk[0] + m[1][1] * gk[1],
            ];
            for (l, &nl) in nodes.iter().enumerate() {
                let Some(j) = mesh.free_index(nl) else {
                    continue;
                };
                let gl = grads[l];
                h.add(i, j, vol * (mk[0] * gl[0] + mk[1] * gl[1]));
            }
        }
    }
    (h, floored)
}

fn report(parts: (f64, f64)) -> EnergyReport {
    EnergyReport {
        total: parts.0 + parts.1,
        p_term: parts.0,
        q_term: parts.1,
    }
}

/// `F_p(u) = ∫ (|∇u|^p/p + a|∇u|^q/q) dx`.
pub fn energy_fp(u: &ScalarField, spec: &ProblemSpec) -> Result<EnergyReport> {
    same_mesh(u.mesh(), spec.mesh())?;
    let f = Integrand::for_spec(spec, EnergyKind::Fp)?;
    Ok(report(energy_parts(spec, &f, u.values())))
}

/// `I_ε(u) = ∫ φ_ε(|∇u|) dx + (1/q) ∫ a|∇u|^q dx` with the spec's ε; ε = 0
/// gives the limit functional itself.
pub fn energy_i(u: &ScalarField, spec: &ProblemSpec) -> Result<EnergyReport> {
    same_mesh(u.mesh(), spec.mesh())?;
    let f = Integrand::for_spec(spec, EnergyKind::IEps)?;
    Ok(report(energy_parts(spec, &f, u.values())))
}

/// Derivative of the discrete energy with respect to the nodal values;
/// boundary entries are reported as zero.
pub fn grad_energy(u: &ScalarField, spec: &ProblemSpec, kind: EnergyKind) -> Result<ScalarField> {
    same_mesh(u.mesh(), spec.mesh())?;
    let f = Integrand::for_spec(spec, kind)?;
    f.require_differentiable()?;
    let free = gradient_free(spec, &f, u.values());
    let mesh = spec.mesh();
    let mut values = vec![0.0; mesh.n_nodes()];
    for (&n, g) in mesh.free_nodes().iter().zip(free) {
        values[n] = g;
    }
    Ok(ScalarField::from_raw(mesh, values))
}

/// Second derivative on the free nodes.
#[derive(Debug, Clone)]
pub struct HessianReport {
    /// Rows and columns follow [`Mesh::free_nodes`].
    pub matrix: BandMatrix,
    /// Cells where `|∇u|` was below [`HESSIAN_FLOOR`] and a singular power
    /// was regularized.
    pub floored_cells: usize,
}

pub fn hess_energy(u: &ScalarField, spec: &ProblemSpec, kind: EnergyKind) -> Result<HessianReport> {
    same_mesh(u.mesh(), spec.mesh())?;
    let f = Integrand::for_spec(spec, kind)?;
    f.require_differentiable()?;
    let (matrix, floored_cells) = hessian_free(spec, &f, u.values());
    Ok(HessianReport {
        matrix,
        floored_cells,
    })
}

/// `|∇u|^{p−2}∇u` per cell (zero on flat cells).
pub fn p_flux(grad: &VectorField, p: f64) -> VectorField {
    map_flux(grad, |t, _| pow_or_zero(t, p - 2.0), None)
}

/// `a|∇u|^{q−2}∇u` per cell (zero on flat cells).
pub fn q_flux(grad: &VectorField, w: &Weight, q: f64) -> VectorField {
    map_flux(grad, |t, a| a * pow_or_zero(t, q - 2.0), Some(w))
}

fn map_flux(grad: &VectorField, k: impl Fn(f64, f64) -> f64, w: Option<&Weight>) -> VectorField {
    let raw = grad
        .raw()
        .iter()
        .enumerate()
        .map(|(c, g)| {
            let a = w.map_or(0.0, |w| w.cell_value(c));
            let s = k(norm2(*g), a);
            [s * g[0], s * g[1]]
        })
        .collect();
    VectorField::from_raw(grad.mesh(), raw)
}

/// Weak residual `max_i |∫ flux·∇φ_i|` over interior hat functions.
pub fn weak_residual(flux: &VectorField) -> f64 {
    let mesh = flux.mesh();
    let mut acc = vec![0.0; mesh.free_nodes().len()];
    for (c, f) in flux.raw().iter().enumerate() {
        let vol = mesh.cell_volume(c);
        for (&n, dphi) in mesh.cell_nodes(c).iter().zip(mesh.basis_gradients(c)) {
            if let Some(i) = mesh.free_index(n) {
                acc[i] += vol * (f[0] * dphi[0] + f[1] * dphi[1]);
            }
        }
    }
    acc.iter().map(|v| v.abs()).fold(0.0, f64::max)
}
