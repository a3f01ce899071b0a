mod common;

use common::*;
use onelap::limit::smoothed_unit_field;
use onelap::{
    energy_i, gradient, hess_energy, muckenhoupt_aq_estimate, oracle_limit_1d, oracle_pq_1d,
    total_variation, weighted_lq_norm, EnergyKind, Exponents, Mesh, ProblemSpec, ScalarField,
    VectorField, Weight,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn energies_are_midpoint_convex(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (label, spec, kind) in derivative_configs() {
            let u = random_field(&spec, &mut r);
            let v = random_field(&spec, &mut r);
            let mid = u.combine(0.5, &v, 0.5).unwrap();
            let lhs = energy(&mid, &spec, kind);
            let rhs = 0.5 * (energy(&u, &spec, kind) + energy(&v, &spec, kind));
            prop_assert!(lhs <= rhs + 1e-10, "{label}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (label, spec, kind) in derivative_configs() {
            let u = random_field(&spec, &mut r);
            let err = gradient_fd_error(&u, &spec, kind);
            prop_assert!(err <= 1e-5, "{label}: relative error {err:e}");
        }
    }

    #[test]
    fn hessian_matches_differenced_gradients(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (label, spec, kind) in derivative_configs() {
            let u = random_field(&spec, &mut r);
            let dir = random_direction(spec.mesh(), &mut r);
            let err = hessian_vector_error(&u, &dir, &spec, kind);
            prop_assert!(err <= 1e-4, "{label}: relative error {err:e}");
        }
    }

    #[test]
    fn hessian_is_symmetric_and_psd(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (label, spec, kind) in derivative_configs() {
            let u = random_field(&spec, &mut r);
            let h = hess_energy(&u, &spec, kind).unwrap().matrix;
            prop_assert!(h.asymmetry() < 1e-12, "{label}");
            let v: Vec<f64> = (0..h.dim()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let vhv: f64 = v.iter().zip(h.matvec(&v)).map(|(a, b)| a * b).sum();
            prop_assert!(vhv >= -1e-10, "{label}: vᵀHv = {vhv}");
        }
    }

    #[test]
    fn limit_energy_splits_into_tv_and_weighted_norm(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (_, spec, kind) in derivative_configs() {
            if kind != EnergyKind::IEps {
                continue;
            }
            let exact = spec.with_smoothing(0.0);
            let u = random_field(&exact, &mut r);
            let q = exact.q();
            let report = energy_i(&u, &exact).unwrap();
            let split = total_variation(&u)
                + weighted_lq_norm(&gradient(&u), exact.weight(), q).unwrap().powf(q) / q;
            prop_assert!((report.total - split).abs() <= 1e-12 * report.total.max(1.0));
            prop_assert!((report.total - report.p_term - report.q_term).abs() <= 1e-12);
        }
    }

    #[test]
    fn smoothing_sandwich(seed in any::<u64>(), eps in 1e-6f64..1.0) {
        let mut r = rng(seed);
        for (_, spec, kind) in derivative_configs() {
            if kind != EnergyKind::IEps {
                continue;
            }
            let u = random_field(&spec, &mut r);
            let smooth = energy_i(&u, &spec.with_smoothing(eps)).unwrap().total;
            let exact = energy_i(&u, &spec.with_smoothing(0.0)).unwrap().total;
            let measure = spec.mesh().measure();
            prop_assert!(smooth <= exact + 1e-12);
            prop_assert!(exact <= smooth + eps * measure + 1e-12);
        }
    }

    #[test]
    fn smoothed_unit_field_is_strictly_inside_the_ball(seed in any::<u64>(), eps in 1e-8f64..1.0) {
        let mut r = rng(seed);
        let spec = &derivative_configs()[4].1;
        let u = random_field(spec, &mut r);
        let z = smoothed_unit_field(&u, eps);
        prop_assert!(z.magnitudes().iter().all(|&m| m < 1.0));
    }

    #[test]
    fn cauchy_schwarz_alignment(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = &derivative_configs()[4].1;
        let u = random_field(spec, &mut r);
        let g = gradient(&u);
        let zs: Vec<Vec<f64>> = (0..spec.mesh().n_cells())
            .map(|_| {
                let (a, b): (f64, f64) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
                let n = (a * a + b * b).sqrt().max(1.0);
                vec![a / n, b / n]
            })
            .collect();
        let z = VectorField::new(spec.mesh(), zs).unwrap();
        for c in 0..spec.mesh().n_cells() {
            let dot: f64 = g.get(c).iter().zip(z.get(c)).map(|(a, b)| a * b).sum();
            let t = g.magnitude(c);
            prop_assert!(dot <= t * (1.0 + 4.0 * f64::EPSILON));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn luxemburg_unit_identity_and_homogeneity(seed in any::<u64>(), p in 1.01f64..3.0, ratio in 1.01f64..1.45) {
        let mut r = rng(seed);
        let mesh = if seed % 2 == 0 {
            Mesh::interval(20, 1.5).unwrap()
        } else {
            Mesh::rectangle(6, 5, 1.0, 1.0).unwrap()
        };
        let w = Weight::from_fn(&mesh, |x| 0.2 + x[0] * x[0]).unwrap();
        let e = Exponents::fixture(p, p * ratio, mesh.dim());
        let f = random_vfield(&mesh, &mut r);
        let (unit, homog) = luxemburg_errors(&f, &w, &e, &mut r);
        prop_assert!(unit <= 1e-8, "unit identity off by {unit:e}");
        prop_assert!(homog <= 1e-8, "homogeneity off by {homog:e}");
    }

    #[test]
    fn total_variation_identities(seed in any::<u64>(), c in -10.0f64..10.0, k in -5.0f64..5.0) {
        let mut r = rng(seed);
        let mesh = Mesh::rectangle(7, 4, 1.2, 0.7).unwrap();
        let u = ScalarField::new(&mesh, (0..mesh.n_nodes()).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let tv = total_variation(&u);
        let scaled = total_variation(&u.scale(c));
        prop_assert!((scaled - c.abs() * tv).abs() <= 1e-12 * tv.max(1.0) * c.abs().max(1.0));
        let shifted = ScalarField::new(&mesh, u.values().iter().map(|v| v + k).collect()).unwrap();
        prop_assert!((total_variation(&shifted) - tv).abs() <= 1e-12 * tv.max(1.0));
    }

    #[test]
    fn muckenhoupt_estimate_is_at_least_one(seed in any::<u64>(), q in 1.05f64..4.0) {
        let mut r = rng(seed);
        let mesh = if seed % 2 == 0 {
            Mesh::interval(32, 1.0).unwrap()
        } else {
            Mesh::rectangle(8, 8, 1.0, 2.0).unwrap()
        };
        let nodal = (0..mesh.n_nodes()).map(|_| r.gen_range(0.05..3.0)).collect();
        let w = Weight::new(&mesh, nodal).unwrap();
        prop_assert!(muckenhoupt_aq_estimate(&w, q, 4).unwrap() >= 1.0 - 1e-12);
        let c = Weight::constant(&mesh, r.gen_range(0.1..10.0)).unwrap();
        prop_assert!((muckenhoupt_aq_estimate(&c, q, 4).unwrap() - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn oracle_limit_is_monotone_and_exact_at_the_ends(
        c in 0.2f64..2.0, q in 1.2f64..3.0, h0 in -2.0f64..2.0, h1 in -2.0f64..2.0, len in 0.5f64..3.0
    ) {
        prop_assume!((h1 - h0).abs() > 1e-3);
        let o = oracle_limit_1d(move |x| x + c, q, h0, h1, len, 1024).unwrap();
        prop_assert!(o.flux().unwrap() > 1.0);
        prop_assert!((o.u(0.0) - h0).abs() <= 1e-10);
        prop_assert!((o.u(len * (1.0 - 1e-15)) - h1).abs() <= 1e-10);
        let sign = (h1 - h0).signum();
        let mut prev = o.u(0.0);
        for k in 1..=64 {
            let x = len * k as f64 / 64.0;
            let v = o.u(x);
            prop_assert!(sign * (v - prev) > 0.0);
            prop_assert!(sign * o.du(x) > 0.0);
            prop_assert_eq!(o.z(x), sign);
            prev = v;
        }
    }

    #[test]
    fn oracle_pq_is_monotone_and_exact_at_the_ends(
        c in 0.0f64..2.0, p in 1.05f64..2.0, dq in 0.1f64..1.5, h0 in -2.0f64..2.0, h1 in -2.0f64..2.0
    ) {
        prop_assume!((h1 - h0).abs() > 1e-3);
        let o = oracle_pq_1d(move |x| x * x + c, p, p + dq, h0, h1, 1.0, 512).unwrap();
        prop_assert!((o.u(0.0) - h0).abs() <= 1e-10);
        prop_assert!((o.u(1.0 - 1e-15) - h1).abs() <= 1e-10);
        let sign = (h1 - h0).signum();
        let mut prev = o.u(0.0);
        for k in 1..=64 {
            let x = k as f64 / 64.0;
            let v = o.u(x);
            prop_assert!(sign * (v - prev) > 0.0);
            // the flux identity holds pointwise
            let s = o.du(x).abs();
            let flux = s.powf(p - 1.0) + (x * x + c) * s.powf(p + dq - 1.0);
            prop_assert!((flux - o.flux().unwrap()).abs() <= 1e-9 * flux.max(1.0));
            prev = v;
        }
    }
}

#[test]
fn oracle_energy_matches_interpolated_tabulation() {
    // energy_I of the nodal interpolant converges to the oracle energy at
    // second order.
    let oracle = oracle_limit_1d(|x| x + 0.5, 2.0, 0.0, 1.0, 1.0, 4096).unwrap();
    let gap = |n: usize| {
        let spec = affine_limit_1d(n);
        let u = ScalarField::from_fn(spec.mesh(), |x| oracle.u(x[0])).unwrap();
        let u = u.with_boundary(spec.boundary()).unwrap();
        (energy_i(&u, &spec).unwrap().total - oracle.energy()).abs()
    };
    let (g1, g2) = (gap(64), gap(128));
    assert!(g1 < 1e-3, "{g1}");
    let order = (g1 / g2).log2();
    assert!((1.7..2.3).contains(&order), "observed order {order}");
}

#[test]
fn pinned_boundary_survives_random_fields() {
    let mut r = rng(3);
    for (_, spec, _) in derivative_configs() {
        let u = random_field(&spec, &mut r);
        spec.check_trace(&u).unwrap();
        let bad = u.with_boundary(&vec![9.0; spec.boundary().len()]).unwrap();
        assert!(spec.check_trace(&bad).is_err());
    }
    let m = Mesh::interval(4, 1.0).unwrap();
    let w = Weight::constant(&m, 1.0).unwrap();
    assert!(ProblemSpec::limit(w, 2.0, vec![0.0, f64::NAN], 0.0).is_err());
}
