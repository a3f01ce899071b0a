//! Semi-analytic 1D reference solutions on `(0, L)`.
//!
//! In one dimension the Euler-Lagrange equations say the total flux is a
//! constant `c`. For the limit problem with increasing data the flux is
//! `1 + a(x)·(u')^{q−1}`, so `u' = ((c−1)/a)^{1/(q−1)}`; for the p,q problem
//! `u'` solves `s^{p−1} + a(x)·s^{q−1} = c` pointwise. In both cases `c` is
//! fixed by `∫ u' = |h1 − h0|`. Everything here uses bisection and composite
//! Simpson quadrature only, so it shares no code path with the solvers.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

pub type WeightFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const DEFAULT_QUAD_N: usize = 4096;
const INNER_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "problem", rename_all = "kebab-case")]
pub enum OracleKind {
    Limit,
    Pq { p: f64 },
}

/// Reference solution, queryable at any point of `[0, L]`.
#[derive(Clone)]
pub struct OracleSolution {
    kind: OracleKind,
    weight: WeightFn,
    q: f64,
    h0: f64,
    h1: f64,
    length: f64,
    /// `None` when the data are constant and the flux is not determined.
    flux: Option<f64>,
    sign: f64,
    /// Panel width of the Simpson rule (each panel has a midpoint).
    panel: f64,
    /// `∫_0^{x_j} |u'|` at panel boundaries.
    cumulative: Vec<f64>,
    energy: f64,
}

impl std::fmt::Debug for OracleSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleSolution")
            .field("kind", &self.kind)
            .field("q", &self.q)
            .field("h0", &self.h0)
            .field("h1", &self.h1)
            .field("length", &self.length)
            .field("flux", &self.flux)
            .field("energy", &self.energy)
            .finish()
    }
}

/// Nonnegative `s` with `s^{p−1} + a s^{q−1} = c`.
fn pq_slope(c: f64, a: f64, p: f64, q: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let map = |s: f64| s.powf(p - 1.0) + a * s.powf(q - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    while map(hi) < c {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > INNER_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if map(mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn limit_slope(c: f64, a: f64, q: f64) -> f64 {
    ((c - 1.0) / a).powf(1.0 / (q - 1.0))
}

impl OracleSolution {
    fn slope_abs(&self, x: f64) -> f64 {
        let Some(c) = self.flux else { return 0.0 };
        let a = (self.weight)(x);
        match self.kind {
            OracleKind::Limit => limit_slope(c, a, self.q),
            OracleKind::Pq { p } => pq_slope(c, a, p, self.q),
        }
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    /// The constant flux `c`.
    pub fn flux(&self) -> Option<f64> {
        self.flux
    }

    /// `I(u)` for the limit problem, `F_p(u)` for the p,q problem.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// `u'(x)`.
    pub fn du(&self, x: f64) -> f64 {
        self.sign * self.slope_abs(x)
    }

    /// `u(x)` for `x ∈ [0, L]`.
    pub fn u(&self, x: f64) -> f64 {
        if self.flux.is_none() {
            return self.h0;
        }
        let x = x.clamp(0.0, self.length);
        if x == self.length {
            return self.h1;
        }
        let j = ((x / self.panel).floor() as usize).min(self.cumulative.len() - 2);
        let x0 = j as f64 * self.panel;
        let partial = if x > x0 {
            let mid = 0.5 * (x0 + x);
            (x - x0) / 6.0 * (self.slope_abs(x0) + 4.0 * self.slope_abs(mid) + self.slope_abs(x))
        } else {
            0.0
        };
        self.h0 + self.sign * (self.cumulative[j] + partial)
    }

    /// The flux field of the non-weighted phase: `sign(u')` where `u' ≠ 0`
    /// for the limit problem (0 when undetermined), `|u'|^{p−2}u'` for p,q.
    pub fn z(&self, x: f64) -> f64 {
        let s = self.slope_abs(x);
        match self.kind {
            OracleKind::Limit => {
                if s > 0.0 {
                    self.sign
                } else {
                    0.0
                }
            }
            OracleKind::Pq { p } => self.sign * s.powf(p - 1.0),
        }
    }

    /// Rows `(x, u, u', z)` at the given points.
    pub fn tabulate(&self, xs: &[f64]) -> Vec<[f64; 4]> {
        xs.iter()
            .map(|&x| [x, self.u(x), self.du(x), self.z(x)])
            .collect()
    }
}

struct Setup {
    weight: WeightFn,
    q: f64,
    h0: f64,
    h1: f64,
    length: f64,
    quad_n: usize,
}

impl Setup {
    fn validate(&self) -> Result<()> {
        if !(self.h0.is_finite() && self.h1.is_finite()) {
            return Err(Error::InvalidProblem(
                "boundary values must be finite".into(),
            ));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "length must be positive, got {}",
                self.length
            )));
        }
        if self.quad_n == 0 {
            return Err(Error::InvalidProblem(
                "need at least one quadrature panel".into(),
            ));
        }
        Ok(())
    }

    fn points(&self) -> Vec<f64> {
        let n = 2 * self.quad_n;
        (0..=n).map(|i| self.length * i as f64 / n as f64).collect()
    }

    /// Simpson integral of sampled values at `points()`.
    fn simpson(&self, f: &[f64]) -> f64 {
        let panel = self.length / self.quad_n as f64;
        (0..self.quad_n)
            .map(|j| panel / 6.0 * (f[2 * j] + 4.0 * f[2 * j + 1] + f[2 * j + 2]))
            .sum()
    }

    fn cumulative(&self, s: &[f64]) -> Vec<f64> {
        let panel = self.length / self.quad_n as f64;
        let mut out = Vec::with_capacity(self.quad_n + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for j in 0..self.quad_n {
            acc += panel / 6.0 * (s[2 * j] + 4.0 * s[2 * j + 1] + s[2 * j + 2]);
            out.push(acc);
        }
        out
    }

    /// Monotone bisection for `c` in `[lo, hi]` with `hi` doubled until
    /// `bridge(hi) ≥ gap`.
    fn solve_flux(&self, mut lo: f64, gap: f64, bridge: impl Fn(f64) -> f64) -> Result<f64> {
        let mut hi = lo.max(1.0) * 2.0;
        let mut doublings = 0;
        while bridge(hi) < gap {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 2000 || !hi.is_finite() {
                return Err(Error::OracleInfeasible("could not bracket the flux".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if bridge(mid) < gap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn finish(
        self,
        kind: OracleKind,
        flux: Option<f64>,
        slopes: &[f64],
        energy: f64,
    ) -> OracleSolution {
        OracleSolution {
            kind,
            cumulative: self.cumulative(slopes),
            panel: self.length / self.quad_n as f64,
            sign: (self.h1 - self.h0).signum(),
            weight: self.weight,
            q: self.q,
            h0: self.h0,
            h1: self.h1,
            length: self.length,
            flux,
            energy,
        }
    }
}

/// Limit problem `−(u'/|u'| + a|u'|^{q−2}u')' = 0`, `u(0) = h0`, `u(L) = h1`.
pub fn oracle_limit_1d(
    weight: impl Fn(f64) -> f64 + Send + Sync + 'static,
    q: f64,
    h0: f64,
    h1: f64,
    length: f64,
    quad_n: usize,
) -> Result<OracleSolution> {
    let setup = Setup {
        weight: Arc::new(weight),
        q,
        h0,
        h1,
        length,
        quad_n,
    };
    setup.validate()?;
    if !(q > 1.0) {
        return Err(Error::InvalidExponents(format!("need q > 1, got {q}")));
    }
    let pts = setup.points();
    if h0 == h1 {
        let zeros = vec![0.0; pts.len()];
        return Ok(setup.finish(OracleKind::Limit, None, &zeros, 0.0));
    }
    let a: Vec<f64> = pts.iter().map(|&x| (setup.weight)(x)).collect();
    if let Some(i) = a.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::OracleInfeasible(format!(
            "weight is {} at x = {}; the boundary gap cannot be bridged",
            a[i], pts[i]
        )));
    }
    let gap = (h1 - h0).abs();
    let slopes = |c: f64| {
        a.iter()
            .map(|&ai| limit_slope(c, ai, q))
            .collect::<Vec<_>>()
    };
    let bridge = |c: f64| setup.simpson(&slopes(c));
    let c = setup.solve_flux(1.0 + 1e-14, gap, bridge)?;
    let s = slopes(c);
    let density: Vec<f64> = s
        .iter()
        .zip(&a)
        .map(|(&si, &ai)| si + ai * si.powf(q) / q)
        .collect();
    let energy = setup.simpson(&density);
    if !energy.is_finite() {
        return Err(Error::OracleInfeasible("bridging integral diverges".into()));
    }
    Ok(setup.finish(OracleKind::Limit, Some(c), &s, energy))
}

/// p,q problem `−(|u'|^{p−2}u' + a|u'|^{q−2}u')' = 0` with the same data.
pub fn oracle_pq_1d(
    weight: impl Fn(f64) -> f64 + Send + Sync + 'static,
    p: f64,
    q: f64,
    h0: f64,
    h1: f64,
    length: f64,
    quad_n: usize,
) -> Result<OracleSolution> {
    let setup = Setup {
        weight: Arc::new(weight),
        q,
        h0,
        h1,
        length,
        quad_n,
    };
    setup.validate()?;
    if !(1.0 < p && p < q) {
        return Err(Error::InvalidExponents(format!(
            "need 1 < p < q, got p={p}, q={q}"
        )));
    }
    let pts = setup.points();
    let kind = OracleKind::Pq { p };
    if h0 == h1 {
        let zeros = vec![0.0; pts.len()];
        return Ok(setup.finish(kind, Some(0.0), &zeros, 0.0));
    }
    let a: Vec<f64> = pts.iter().map(|&x| (setup.weight)(x)).collect();
    if a.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidWeight(
            "weight must be finite and nonnegative".into(),
        ));
    }
    let gap = (h1 - h0).abs();
    let slopes = |c: f64| {
        a.iter()
            .map(|&ai| pq_slope(c, ai, p, q))
            .collect::<Vec<_>>()
    };
    let bridge = |c: f64| setup.simpson(&slopes(c));
    let c = setup.solve_flux(0.0, gap, bridge)?;
    let s = slopes(c);
    let density: Vec<f64> = s
        .iter()
        .zip(&a)
        .map(|(&si, &ai)| si.powf(p) / p + ai * si.powf(q) / q)
        .collect();
    let energy = setup.simpson(&density);
    Ok(setup.finish(kind, Some(c), &s, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn limit_constant_weight() {
        let o = oracle_limit_1d(|_| 1.0, 2.0, 0.0, 1.0, 1.0, DEFAULT_QUAD_N).unwrap();
        assert_relative_eq!(o.flux().unwrap(), 2.0, max_relative = 1e-12);
        for x in [0.0, 0.1, 0.37, 0.5, 0.99] {
            assert!((o.u(x) - x).abs() < 1e-12);
            assert_eq!(o.z(x), 1.0);
        }
        assert_relative_eq!(o.energy(), 1.5, max_relative = 1e-12);
    }

    #[test]
    fn limit_affine_weight() {
        let o = oracle_limit_1d(|x| x + 0.5, 2.0, 0.0, 1.0, 1.0, DEFAULT_QUAD_N).unwrap();
        let ln3 = 3f64.ln();
        assert_relative_eq!(o.flux().unwrap(), 1.0 + 1.0 / ln3, max_relative = 1e-12);
        assert!((o.flux().unwrap() - 1.910239).abs() < 1e-6);
        assert!((o.u(0.5) - 0.630930).abs() < 1e-6);
        for k in 0..=50 {
            let x = k as f64 / 50.0;
            assert!(
                (o.u(x) - (2.0 * x + 1.0).ln() / ln3).abs() < 1e-11,
                "x = {x}"
            );
        }
        // I = ∫ u' + a u'^2/2 = 1 + (c − 1)/2
        assert_relative_eq!(o.energy(), 1.0 + 0.5 / ln3, max_relative = 1e-12);
    }

    #[test]
    fn limit_decreasing_data() {
        let o = oracle_limit_1d(|x| x + 0.5, 2.0, 1.0, 0.0, 1.0, 512).unwrap();
        assert!((o.u(0.0) - 1.0).abs() < 1e-12);
        assert!((o.u(1.0)).abs() < 1e-12);
        assert_eq!(o.z(0.3), -1.0);
        assert!(o.du(0.3) < 0.0);
    }

    #[test]
    fn limit_constant_data() {
        let o = oracle_limit_1d(|x| x + 0.5, 2.0, 7.0, 7.0, 1.0, 64).unwrap();
        assert_eq!(o.flux(), None);
        assert_eq!(o.u(0.42), 7.0);
        assert_eq!(o.z(0.42), 0.0);
        assert_eq!(o.energy(), 0.0);
    }

    #[test]
    fn limit_vanishing_weight_is_infeasible() {
        let r = oracle_limit_1d(|x| (x - 0.5).abs(), 2.0, 0.0, 1.0, 1.0, 64);
        assert!(matches!(r, Err(Error::OracleInfeasible(_))));
    }

    #[test]
    fn pq_constant_weight() {
        let o = oracle_pq_1d(|_| 1.0, 1.5, 2.0, 0.0, 1.0, 1.0, 256).unwrap();
        assert_relative_eq!(o.flux().unwrap(), 2.0, max_relative = 1e-11);
        assert!((o.u(0.3) - 0.3).abs() < 1e-11);
    }

    #[test]
    fn pq_pure_p_laplacian() {
        let o = oracle_pq_1d(|_| 0.0, 2.0, 3.0, 0.0, 1.0, 1.0, 256).unwrap();
        assert_relative_eq!(o.flux().unwrap(), 1.0, max_relative = 1e-11);
        assert!((o.u(0.71) - 0.71).abs() < 1e-11);
    }

    #[test]
    fn pq_solution_bridges_the_gap() {
        let o = oracle_pq_1d(|x| x + 0.5, 1.2, 2.0, 0.0, 1.0, 1.0, DEFAULT_QUAD_N).unwrap();
        assert!(o.u(0.0).abs() < 1e-10);
        assert!((o.u(1.0 - 1e-12) - 1.0).abs() < 1e-10);
        let mut prev = o.u(0.0);
        for k in 1..=100 {
            let v = o.u(k as f64 / 100.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn pq_oracles_approach_limit_as_p_decreases() {
        let a = |x: f64| x + 0.5;
        let lim = oracle_limit_1d(a, 2.0, 0.0, 1.0, 1.0, 1024).unwrap();
        let mut gaps = Vec::new();
        for p in [1.2, 1.05, 1.01] {
            let o = oracle_pq_1d(a, p, 2.0, 0.0, 1.0, 1.0, 1024).unwrap();
            let gap = (0..=40)
                .map(|k| k as f64 / 40.0)
                .map(|x| (o.u(x) - lim.u(x)).abs())
                .fold(0.0, f64::max);
            gaps.push(gap);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}
