//! Discrete modulars and norms on P1 meshes.
//!
//! All integrals are cell sums. Vector fields are cell-wise constant, so the
//! integrands involving them are exact; scalar fields are sampled at the cell
//! barycenter (midpoint rule).

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Hypothesis, Result};
use crate::mesh::{gradient, same_mesh, Mesh, ScalarField, VectorField};

/// The exponent pair of the double-phase integrand `t^p + a t^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    p: f64,
    q: f64,
    dim: usize,
}

impl Exponents {
    /// Validated exponents: `1 < p < q` and `q/p < 1 + 1/N`.
    pub fn new(p: f64, q: f64, dim: usize) -> Result<Self> {
        if !(p.is_finite() && q.is_finite()) {
            return Err(Error::InvalidExponents(format!(
                "non-finite exponents p={p}, q={q}"
            )));
        }
        if !(1.0 < p && p < q) {
            return Err(Error::InvalidExponents(format!(
                "need 1 < p < q, got p={p}, q={q}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidExponents("dimension must be positive".into()));
        }
        let bound = 1.0 + 1.0 / dim as f64;
        if q / p >= bound {
            return Err(Error::Hypothesis {
                clause: Hypothesis::ExponentGap,
                detail: format!("q/p = {} ≥ {bound} for N = {dim}", q / p),
            });
        }
        Ok(Exponents { p, q, dim })
    }

    /// Exponents without the ordering and gap checks. Only meant for
    /// reference fixtures such as the quadratic case `p = q = 2`.
    pub fn fixture(p: f64, q: f64, dim: usize) -> Self {
        Exponents { p, q, dim }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Nonnegative weight sampled at the nodes and evaluated at cell barycenters
/// by linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    mesh: Arc<Mesh>,
    nodal: Vec<f64>,
    cell: Vec<f64>,
}

impl Weight {
    pub fn new(mesh: &Arc<Mesh>, nodal: Vec<f64>) -> Result<Self> {
        if nodal.len() != mesh.n_nodes() {
            return Err(Error::InvalidWeight(format!(
                "expected {} samples, got {}",
                mesh.n_nodes(),
                nodal.len()
            )));
        }
        if let Some(i) = nodal.iter().position(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidWeight(format!(
                "weight must be finite and nonnegative, node {i} has {}",
                nodal[i]
            )));
        }
        let cell = (0..mesh.n_cells())
            .map(|c| {
                let nodes = mesh.cell_nodes(c);
                nodes.iter().map(|&n| nodal[n]).sum::<f64>() / nodes.len() as f64
            })
            .collect();
        Ok(Weight {
            mesh: Arc::clone(mesh),
            nodal,
            cell,
        })
    }

    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Weight::new(mesh, (0..mesh.n_nodes()).map(|i| f(mesh.node(i))).collect())
    }

    pub fn constant(mesh: &Arc<Mesh>, a: f64) -> Result<Self> {
        Weight::new(mesh, vec![a; mesh.n_nodes()])
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    pub fn cell_value(&self, c: usize) -> f64 {
        self.cell[c]
    }

    pub fn cell_values(&self) -> &[f64] {
        &self.cell
    }

    pub fn max(&self) -> f64 {
        self.nodal.iter().copied().fold(0.0, f64::max)
    }

    /// Largest difference quotient over mesh edges, a discrete stand-in for
    /// the Lipschitz constant.
    pub fn lipschitz_ratio(&self) -> f64 {
        let mut ratio = 0.0f64;
        for c in 0..self.mesh.n_cells() {
            let nodes = self.mesh.cell_nodes(c);
            for (k, &i) in nodes.iter().enumerate() {
                for &j in &nodes[k + 1..] {
                    let (xi, xj) = (self.mesh.node(i), self.mesh.node(j));
                    let dist = xi
                        .iter()
                        .zip(xj)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    ratio = ratio.max((self.nodal[i] - self.nodal[j]).abs() / dist);
                }
            }
        }
        ratio
    }

    /// Checks the weight part of hypothesis (H): positive on every boundary
    /// node and a finite discrete Lipschitz ratio.
    pub fn check_hypothesis(&self) -> Result<()> {
        if let Some(&n) = self
            .mesh
            .boundary_nodes()
            .iter()
            .find(|&&n| self.nodal[n] <= 0.0)
        {
            return Err(Error::Hypothesis {
                clause: Hypothesis::WeightOnBoundary,
                detail: format!("a = {} at boundary node {n}", self.nodal[n]),
            });
        }
        if !self.lipschitz_ratio().is_finite() {
            return Err(Error::InvalidWeight(
                "weight is not Lipschitz on the mesh".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that can be integrated cell by cell through its pointwise
/// magnitude: nodal scalar fields (sampled at barycenters) and cell-wise
/// vector fields (exact).
pub trait CellIntegrand {
    fn mesh(&self) -> &Arc<Mesh>;
    fn cell_magnitudes(&self) -> Vec<f64>;
}

impl CellIntegrand for ScalarField {
    fn mesh(&self) -> &Arc<Mesh> {
        ScalarField::mesh(self)
    }

    fn cell_magnitudes(&self) -> Vec<f64> {
        (0..self.mesh().n_cells())
            .map(|c| self.cell_mean(c).abs())
            .collect()
    }
}

impl CellIntegrand for VectorField {
    fn mesh(&self) -> &Arc<Mesh> {
        VectorField::mesh(self)
    }

    fn cell_magnitudes(&self) -> Vec<f64> {
        self.magnitudes()
    }
}

/// The two phase integrals `Σ vol·m^p` and `Σ vol·a·m^q`.
fn phase_integrals(mags: &[f64], mesh: &Mesh, w: &Weight, e: &Exponents) -> (f64, f64) {
    let mut p_part = 0.0;
    let mut q_part = 0.0;
    for (c, &m) in mags.iter().enumerate() {
        let vol = mesh.cell_volume(c);
        p_part += vol * m.powf(e.p);
        q_part += vol * w.cell_value(c) * m.powf(e.q);
    }
    (p_part, q_part)
}

/// `ρ(u) = ∫ (|u|^p + a|u|^q) dx`.
pub fn modular_theta_p(field: &impl CellIntegrand, w: &Weight, e: &Exponents) -> Result<f64> {
    same_mesh(field.mesh(), w.mesh())?;
    let (p_part, q_part) = phase_integrals(&field.cell_magnitudes(), field.mesh(), w, e);
    Ok(p_part + q_part)
}

/// `inf{λ > 0 : ρ(u/λ) ≤ 1}`, zero for the zero field.
pub fn luxemburg_norm(field: &impl CellIntegrand, w: &Weight, e: &Exponents) -> Result<f64> {
    same_mesh(field.mesh(), w.mesh())?;
    let (p_part, q_part) = phase_integrals(&field.cell_magnitudes(), field.mesh(), w, e);
    Ok(luxemburg_from_parts(p_part, q_part, e))
}

/// Root of `λ^{-p}·A + λ^{-q}·B = 1` by bracketing and bisection.
pub(crate) fn luxemburg_from_parts(p_part: f64, q_part: f64, e: &Exponents) -> f64 {
    if p_part + q_part == 0.0 {
        return 0.0;
    }
    let rho = |lambda: f64| p_part * lambda.powf(-e.p) + q_part * lambda.powf(-e.q);
    let (mut lo, mut hi) = (1.0, 1.0);
    while rho(lo) <= 1.0 {
        lo *= 0.5;
    }
    while rho(hi) > 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rho(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `(∫ a |g|^q dx)^{1/q}`.
pub fn weighted_lq_norm(field: &impl CellIntegrand, w: &Weight, q: f64) -> Result<f64> {
    same_mesh(field.mesh(), w.mesh())?;
    if q <= 1.0 {
        return Err(Error::InvalidExponents(format!(
            "weighted norm needs q > 1, got {q}"
        )));
    }
    let mesh = field.mesh();
    let sum: f64 = field
        .cell_magnitudes()
        .iter()
        .enumerate()
        .map(|(c, m)| w.cell_value(c) * m.powf(q) * mesh.cell_volume(c))
        .sum();
    Ok(sum.powf(1.0 / q))
}

/// `|Du|(Ω) = ∫ |∇u| dx` for a P1 field.
pub fn total_variation(u: &ScalarField) -> f64 {
    let g = gradient(u);
    let mesh = u.mesh();
    (0..mesh.n_cells())
        .map(|c| g.magnitude(c) * mesh.cell_volume(c))
        .sum()
}

/// Lower bound for the Muckenhoupt `A_q` constant of the weight, taken over
/// dyadic subcubes of the domain bounding box down to `depth` levels.
/// Returns `f64::INFINITY` when the weight vanishes on a cell.
///
/// In 2D the dyadic family subdivides the rectangle itself, so on
/// non-square domains the tested sets are rectangles of fixed aspect ratio.
pub fn muckenhoupt_aq_estimate(w: &Weight, q: f64, depth: u32) -> Result<f64> {
    if q <= 1.0 {
        return Err(Error::InvalidExponents(format!("A_q needs q > 1, got {q}")));
    }
    let mesh = w.mesh();
    if w.cell_values().iter().any(|&a| a <= 0.0) {
        return Ok(f64::INFINITY);
    }
    let dim = mesh.dim();
    let extent = mesh.extent();
    let dual = -1.0 / (q - 1.0);
    let mut best = 0.0f64;
    for d in 0..=depth {
        let per_axis = 1usize << d;
        let n_cubes = if dim == 1 {
            per_axis
        } else {
            per_axis * per_axis
        };
        // (volume, ∫a, ∫a^{-1/(q-1)})
        let mut sums = vec![(0.0, 0.0, 0.0); n_cubes];
        for c in 0..mesh.n_cells() {
            let centroid = mesh.centroid(c);
            let slot = |axis: usize| {
                let k = (centroid[axis] / extent[axis] * per_axis as f64).floor() as usize;
                k.min(per_axis - 1)
            };
            let idx = if dim == 1 {
                slot(0)
            } else {
                slot(1) * per_axis + slot(0)
            };
            let vol = mesh.cell_volume(c);
            let a = w.cell_value(c);
            let s = &mut sums[idx];
            s.0 += vol;
            s.1 += vol * a;
            s.2 += vol * a.powf(dual);
        }
        for (vol, int_a, int_dual) in sums {
            if vol > 0.0 {
                best = best.max((int_a / vol) * (int_dual / vol).powf(q - 1.0));
            }
        }
    }
    Ok(best)
}

/// Ratio `‖u‖_θ / ‖∇u‖_θ` for a field vanishing on the boundary.
pub fn poincare_ratio(u: &ScalarField, w: &Weight, e: &Exponents) -> Result<f64> {
    let denom = luxemburg_norm(&gradient(u), w, e)?;
    if denom == 0.0 {
        return Err(Error::InvalidField(
            "Poincaré ratio of a constant field".into(),
        ));
    }
    Ok(luxemburg_norm(u, w, e)? / denom)
}

/// Largest Poincaré ratio over `samples` random smooth fields with zero
/// boundary values (random combinations of the first few sine modes).
pub fn poincare_probe(
    w: &Weight,
    e: &Exponents,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mesh = w.mesh();
    let [lx, ly] = mesh.extent();
    let modes = 4;
    let mut best = 0.0f64;
    for _ in 0..samples {
        let coeffs: Vec<f64> = (0..modes * modes)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let u = ScalarField::from_fn(mesh, |x| {
            let mut v = 0.0;
            for k in 0..modes {
                let sx = ((k + 1) as f64 * std::f64::consts::PI * x[0] / lx).sin();
                if x.len() == 1 {
                    v += coeffs[k] * sx;
                } else {
                    for l in 0..modes {
                        let sy = ((l + 1) as f64 * std::f64::consts::PI * x[1] / ly).sin();
                        v += coeffs[k * modes + l] * sx * sy;
                    }
                }
            }
            v
        })?;
        let bnd = vec![0.0; mesh.boundary_nodes().len()];
        let u = u.with_boundary(&bnd)?;
        if let Ok(r) = poincare_ratio(&u, w, e) {
            best = best.max(r);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> Arc<Mesh> {
        Mesh::interval(64, 1.0).unwrap()
    }

    #[test]
    fn exponent_validation() {
        assert!(Exponents::new(1.5, 2.0, 1).is_ok());
        assert!(Exponents::new(2.0, 1.5, 1).is_err());
        assert!(Exponents::new(1.0, 1.5, 1).is_err());
        let err = Exponents::new(1.2, 2.0, 2).unwrap_err();
        assert!(matches!(
            err,
            Error::Hypothesis {
                clause: Hypothesis::ExponentGap,
                ..
            }
        ));
        assert!(err.to_string().contains("q/p < 1 + 1/N"));
    }

    #[test]
    fn weight_validation() {
        let m = unit();
        assert!(Weight::constant(&m, -1.0).is_err());
        let w = Weight::from_fn(&m, |x| x[0]).unwrap();
        let err = w.check_hypothesis().unwrap_err();
        assert!(err.to_string().contains("a(x) ≠ 0 on ∂Ω"));
        let w = Weight::from_fn(&m, |x| x[0] + 0.5).unwrap();
        w.check_hypothesis().unwrap();
        assert_relative_eq!(w.lipschitz_ratio(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn modular_examples() {
        let m = unit();
        let one = Weight::constant(&m, 1.0).unwrap();
        let e = Exponents::new(2.0, 3.0, 1).unwrap();
        let u = ScalarField::constant(&m, 1.0);
        assert_relative_eq!(
            modular_theta_p(&u, &one, &e).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        assert_eq!(
            modular_theta_p(&ScalarField::zeros(&m), &one, &e).unwrap(),
            0.0
        );
    }

    #[test]
    fn modular_converges_to_integral_of_square() {
        // ∫₀¹ x² dx = 1/3; midpoint rule error is h²/12
        let e = Exponents::new(2.0, 3.0, 1).unwrap();
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let m = Mesh::interval(n, 1.0).unwrap();
            let zero = Weight::constant(&m, 0.0).unwrap();
            let u = ScalarField::from_fn(&m, |x| x[0]).unwrap();
            let err = (modular_theta_p(&u, &zero, &e).unwrap() - 1.0 / 3.0).abs();
            let h = 1.0 / n as f64;
            assert_relative_eq!(err, h * h / 12.0, max_relative = 1e-9);
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.9 && errs[1] / errs[2] > 3.9);
    }

    #[test]
    fn luxemburg_examples() {
        let m = unit();
        let one = Weight::constant(&m, 1.0).unwrap();
        let quad = Exponents::fixture(2.0, 2.0, 1);
        let u = ScalarField::constant(&m, 1.0);
        assert_relative_eq!(
            luxemburg_norm(&u, &one, &quad).unwrap(),
            2f64.sqrt(),
            max_relative = 1e-12
        );
        assert_eq!(
            luxemburg_norm(&ScalarField::zeros(&m), &one, &quad).unwrap(),
            0.0
        );
        let zero = Weight::constant(&m, 0.0).unwrap();
        let e = Exponents::new(3.0, 4.0, 1).unwrap();
        assert_relative_eq!(
            luxemburg_norm(&u, &zero, &e).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn weighted_lq_examples() {
        let m = unit();
        let g = VectorField::new(&m, vec![vec![1.0]; m.n_cells()]).unwrap();
        let one = Weight::constant(&m, 1.0).unwrap();
        assert_relative_eq!(
            weighted_lq_norm(&g, &one, 2.0).unwrap(),
            1.0,
            max_relative = 1e-12
        );

        // only cells where a > 0 contribute
        let w = Weight::from_fn(&m, |x| if x[0] < 0.1 || x[0] > 0.9 { 1.0 } else { 0.0 }).unwrap();
        let mut vecs = vec![vec![0.0]; m.n_cells()];
        let active: Vec<usize> = (0..m.n_cells())
            .filter(|&c| w.cell_value(c) > 0.0)
            .collect();
        for c in 0..m.n_cells() {
            vecs[c][0] = if w.cell_value(c) > 0.0 { 1.0 } else { 1e6 };
        }
        let g = VectorField::new(&m, vecs).unwrap();
        let expect: f64 = active
            .iter()
            .map(|&c| w.cell_value(c) * m.cell_volume(c))
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(
            weighted_lq_norm(&g, &w, 2.0).unwrap(),
            expect,
            max_relative = 1e-12
        );

        let sq = Mesh::rectangle(8, 8, 1.0, 1.0).unwrap();
        let g = VectorField::new(&sq, vec![vec![2.0, 0.0]; sq.n_cells()]).unwrap();
        let half = Weight::constant(&sq, 0.5).unwrap();
        assert_relative_eq!(
            weighted_lq_norm(&g, &half, 2.0).unwrap(),
            2f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn total_variation_examples() {
        let m = unit();
        let u = ScalarField::from_fn(&m, |x| 2.0 * x[0]).unwrap();
        assert_relative_eq!(total_variation(&u), 2.0, max_relative = 1e-12);
        assert_eq!(total_variation(&ScalarField::constant(&m, 3.0)), 0.0);
        let sq = Mesh::rectangle(6, 6, 1.0, 1.0).unwrap();
        let u = ScalarField::from_fn(&sq, |x| x[0] + x[1]).unwrap();
        assert_relative_eq!(total_variation(&u), 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn muckenhoupt_constant_weights() {
        for mesh in [unit(), Mesh::rectangle(8, 8, 1.0, 1.0).unwrap()] {
            for (c, q) in [(1.0, 2.0), (3.7, 1.4), (0.2, 3.0)] {
                let w = Weight::constant(&mesh, c).unwrap();
                assert_relative_eq!(
                    muckenhoupt_aq_estimate(&w, q, 3).unwrap(),
                    1.0,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn muckenhoupt_affine_matches_dyadic_supremum() {
        // oracle: exact averages of x + 1/2 and its reciprocal over each dyadic interval
        let mut oracle = 0.0f64;
        for d in 0..=4 {
            let n = 1 << d;
            for k in 0..n {
                let (a, b) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
                let avg = 0.5 * (a + b) + 0.5;
                let avg_inv = ((b + 0.5) / (a + 0.5)).ln() / (b - a);
                oracle = oracle.max(avg * avg_inv);
            }
        }
        let m = Mesh::interval(2048, 1.0).unwrap();
        let w = Weight::from_fn(&m, |x| x[0] + 0.5).unwrap();
        let est = muckenhoupt_aq_estimate(&w, 2.0, 4).unwrap();
        assert!(est >= 1.0);
        assert_relative_eq!(est, oracle, max_relative = 1e-6);
    }

    #[test]
    fn muckenhoupt_degenerate_is_infinite() {
        let m = unit();
        let w = Weight::from_fn(&m, |x| (x[0] - 0.5).abs().max(0.2) - 0.2).unwrap();
        assert_eq!(muckenhoupt_aq_estimate(&w, 2.0, 2).unwrap(), f64::INFINITY);
    }

    #[test]
    fn mesh_mismatch_is_an_error() {
        let w = Weight::constant(&Mesh::interval(4, 1.0).unwrap(), 1.0).unwrap();
        let u = ScalarField::zeros(&Mesh::interval(5, 1.0).unwrap());
        let e = Exponents::new(1.5, 2.0, 1).unwrap();
        assert!(modular_theta_p(&u, &w, &e).is_err());
        assert!(luxemburg_norm(&u, &w, &e).is_err());
        assert!(weighted_lq_norm(&u, &w, 2.0).is_err());
    }
}
