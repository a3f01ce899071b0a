#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use onelap::config::RunConfig;
use onelap::{
    grad_energy, hess_energy, luxemburg_norm, modular_theta_p, EnergyKind, Exponents, Mesh,
    ProblemSpec, ScalarField, VectorField, Weight,
};
use rand::Rng;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Every shipped fixture, by file stem.
pub fn fixtures() -> Vec<(String, RunConfig)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, RunConfig::load(&p).unwrap())
        })
        .collect()
}

pub fn fixture(name: &str) -> RunConfig {
    RunConfig::load(&fixture_dir().join(format!("{name}.toml"))).unwrap()
}

/// The 1D limit problem with `a = x + 0.5`, `q = 2`, `h = (0, 1)`.
pub fn affine_limit_1d(n: usize) -> ProblemSpec {
    let m = Mesh::interval(n, 1.0).unwrap();
    let w = Weight::from_fn(&m, |x| x[0] + 0.5).unwrap();
    ProblemSpec::limit(w, 2.0, vec![0.0, 1.0], 0.0).unwrap()
}

/// Energy configurations for derivative checks: (label, spec, kind).
pub fn derivative_configs() -> Vec<(&'static str, ProblemSpec, EnergyKind)> {
    let m1 = Mesh::interval(12, 1.0).unwrap();
    let m2 = Mesh::rectangle(5, 4, 1.0, 0.8).unwrap();
    let w1 = Weight::from_fn(&m1, |x| x[0] + 0.5).unwrap();
    let w2 = Weight::from_fn(&m2, |x| 0.5 + x[0] * x[1]).unwrap();
    let b1 = ProblemSpec::boundary_from_fn(&m1, |x| x[0]);
    let b2 = ProblemSpec::boundary_from_fn(&m2, |x| x[0] - 0.5 * x[1]);
    vec![
        (
            "F_p 1D p=1.5 q=2.5",
            ProblemSpec::pq(w1.clone(), Exponents::new(1.5, 2.5, 1).unwrap(), b1.clone()).unwrap(),
            EnergyKind::Fp,
        ),
        (
            "F_p 1D p=1.1 q=2",
            ProblemSpec::pq(w1.clone(), Exponents::new(1.1, 2.0, 1).unwrap(), b1.clone()).unwrap(),
            EnergyKind::Fp,
        ),
        (
            "F_p 2D p=1.6 q=2",
            ProblemSpec::pq(w2.clone(), Exponents::new(1.6, 2.0, 2).unwrap(), b2.clone()).unwrap(),
            EnergyKind::Fp,
        ),
        (
            "I_eps 1D q=2 eps=0.1",
            ProblemSpec::limit(w1, 2.0, b1, 0.1).unwrap(),
            EnergyKind::IEps,
        ),
        (
            "I_eps 2D q=1.4 eps=0.2",
            ProblemSpec::limit(w2, 1.4, b2, 0.2).unwrap(),
            EnergyKind::IEps,
        ),
    ]
}

/// Random nodal values in `[-1, 1]` with the spec's boundary data.
pub fn random_field(spec: &ProblemSpec, rng: &mut impl Rng) -> ScalarField {
    let values = (0..spec.mesh().n_nodes())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    ScalarField::new(spec.mesh(), values)
        .unwrap()
        .with_boundary(spec.boundary())
        .unwrap()
}

/// Random interior direction (zero on the boundary).
pub fn random_direction(mesh: &Arc<Mesh>, rng: &mut impl Rng) -> Vec<f64> {
    (0..mesh.n_nodes())
        .map(|i| {
            if mesh.is_boundary(i) {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect()
}

pub fn energy(u: &ScalarField, spec: &ProblemSpec, kind: EnergyKind) -> f64 {
    match kind {
        EnergyKind::Fp => onelap::energy_fp(u, spec).unwrap().total,
        EnergyKind::IEps => onelap::energy_i(u, spec).unwrap().total,
    }
}

fn shifted(u: &ScalarField, node: usize, step: f64) -> ScalarField {
    let mut v = u.values().to_vec();
    v[node] += step;
    ScalarField::new(u.mesh(), v).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `‖g − g_fd‖∞ / ‖g‖∞` with central differences of step `1e-6·max(1, |u_i|)`.
pub fn gradient_fd_error(u: &ScalarField, spec: &ProblemSpec, kind: EnergyKind) -> f64 {
    let g = grad_energy(u, spec, kind).unwrap();
    let mut diff = 0.0f64;
    for &n in spec.mesh().free_nodes() {
        let step = 1e-6 * u.values()[n].abs().max(1.0);
        let fd = (energy(&shifted(u, n, step), spec, kind)
            - energy(&shifted(u, n, -step), spec, kind))
            / (2.0 * step);
        diff = diff.max((fd - g.values()[n]).abs());
    }
    diff / max_abs(g.values()).max(f64::MIN_POSITIVE)
}

/// `‖H v − (g(u + s v) − g(u − s v))/2s‖∞ / ‖H v‖∞` with `s = 1e-6`.
pub fn hessian_vector_error(
    u: &ScalarField,
    dir: &[f64],
    spec: &ProblemSpec,
    kind: EnergyKind,
) -> f64 {
    let mesh = spec.mesh();
    let free = mesh.free_nodes();
    let h = hess_energy(u, spec, kind).unwrap().matrix;
    let v: Vec<f64> = free.iter().map(|&n| dir[n]).collect();
    let hv = h.matvec(&v);
    let s = 1e-6;
    let plus = ScalarField::new(
        mesh,
        u.values().iter().zip(dir).map(|(a, d)| a + s * d).collect(),
    )
    .unwrap();
    let minus = ScalarField::new(
        mesh,
        u.values().iter().zip(dir).map(|(a, d)| a - s * d).collect(),
    )
    .unwrap();
    let gp = grad_energy(&plus, spec, kind).unwrap();
    let gm = grad_energy(&minus, spec, kind).unwrap();
    let diff = free
        .iter()
        .zip(&hv)
        .map(|(&n, hvk)| ((gp.values()[n] - gm.values()[n]) / (2.0 * s) - hvk).abs())
        .fold(0.0, f64::max);
    diff / max_abs(&hv).max(f64::MIN_POSITIVE)
}

/// Random cell vector field with magnitudes spread over several decades.
pub fn random_vfield(mesh: &Arc<Mesh>, rng: &mut impl Rng) -> VectorField {
    let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
    let vectors = (0..mesh.n_cells())
        .map(|_| {
            (0..mesh.dim())
                .map(|_| scale * rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    VectorField::new(mesh, vectors).unwrap()
}

/// `(|ρ(f/‖f‖) − 1|, |‖c f‖ − |c| ‖f‖| / (|c| ‖f‖))` for a random `c`.
pub fn luxemburg_errors(
    f: &VectorField,
    w: &Weight,
    e: &Exponents,
    rng: &mut impl Rng,
) -> (f64, f64) {
    let norm = luxemburg_norm(f, w, e).unwrap();
    let unit = (modular_theta_p(&f.scale(1.0 / norm), w, e).unwrap() - 1.0).abs();
    let c = rng.gen_range(0.1..10.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let scaled = luxemburg_norm(&f.scale(c), w, e).unwrap();
    (unit, (scaled - c.abs() * norm).abs() / (c.abs() * norm))
}
