//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//!
//! [domain]
//! dim = 1
//! extents = [1.0]
//! resolution = [512]
//!
//! [weight]
//! family = "affine"   # constant | affine | radial | degenerate
//! c = 0.5
//!
//! [exponents]
//! q = 2.0
//! p = 1.2             # solve-pq only
//!
//! [schedule]          # continue and compare
//! p_start = 1.3
//! ratio = 0.5
//! steps = 10
//!
//! [boundary]
//! family = "endpoints" # linear | constant | endpoints
//! h0 = 0.0
//! h1 = 1.0
//! ```
//!
//! Optional tables: `[solver]` (`pq_tol`, `limit_tol`, `max_iter`,
//! `eps_schedule`, `[solver.thresholds]`), `[output]` (`dir`, `snapshots`)
//! and `[probes]` (`minimality_samples`, `poincare_samples`). Unknown keys are
//! errors. Every error carries the line of the offending entry or table.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::continuation::ScheduleParams;
use crate::energy::ProblemSpec;
use crate::error::{Error, Hypothesis, Result};
use crate::limit::{LimitOptions, Thresholds};
use crate::mesh::Mesh;
use crate::pq_solver::PqOptions;
use crate::spaces::{Exponents, Weight};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub resolution: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightConfig {
    /// `a ≡ value`.
    Constant { value: f64 },
    /// `a = x + c` (first coordinate).
    Affine { c: f64 },
    /// `a = base + slope·|x − center|`; the center defaults to the middle of
    /// the domain.
    Radial {
        base: f64,
        slope: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    /// `a = value·max(0, d − width)/(½ − width)` with `d` the sup-distance to
    /// the center normalized by the extents: vanishes on an interior box and
    /// equals `value` on the boundary.
    Degenerate { value: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsConfig {
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum BoundaryConfig {
    /// `h = value + gradient·x`.
    Linear {
        #[serde(default)]
        value: f64,
        gradient: Vec<f64>,
    },
    Constant {
        value: f64,
    },
    /// `h(0) = h0`, `h(L) = h1`, interpolated linearly in the first
    /// coordinate.
    Endpoints {
        h0: f64,
        h1: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pq_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Write per-step continuation snapshots under `snapshots/`.
    #[serde(default)]
    pub snapshots: bool,
}

fn default_minimality_samples() -> usize {
    100
}

fn default_poincare_samples() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_minimality_samples")]
    pub minimality_samples: usize,
    #[serde(default = "default_poincare_samples")]
    pub poincare_samples: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            minimality_samples: default_minimality_samples(),
            poincare_samples: default_poincare_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainConfig,
    pub weight: WeightConfig,
    pub exponents: ExponentsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleParams>,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub probes: ProbeConfig,
    /// Line of each table header in the source, for diagnostics.
    #[serde(skip)]
    lines: BTreeMap<String, usize>,
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn table_lines(src: &str) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('[') {
            if let Some(end) = rest.find(']') {
                let name = rest[..end].trim().trim_matches('[').trim();
                let top = name.split('.').next().unwrap_or(name).to_string();
                out.entry(top).or_insert(i + 1);
            }
        }
    }
    out
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(span) => {
                    Error::Config(format!("line {}: {msg}", line_of_offset(src, span.start)))
                }
                None => Error::Config(msg),
            }
        })?;
        cfg.lines = table_lines(src);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    /// A config error located at the header of `table`.
    fn at(&self, table: &str, msg: impl std::fmt::Display) -> Error {
        match self.lines.get(table) {
            Some(line) => Error::Config(format!("line {line}: [{table}] {msg}")),
            None => Error::Config(format!("[{table}] {msg}")),
        }
    }

    /// Relocates a library error to the table it came from.
    fn locate(&self, table: &str, err: Error) -> Error {
        let table = match &err {
            Error::Hypothesis {
                clause: Hypothesis::WeightOnBoundary,
                ..
            } => "weight",
            Error::Hypothesis {
                clause: Hypothesis::ExponentGap,
                ..
            } => "exponents",
            _ => table,
        };
        self.at(table, err)
    }

    fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.dim == 1 || d.dim == 2) {
            return Err(self.at("domain", format!("dim must be 1 or 2, got {}", d.dim)));
        }
        if d.extents.len() != d.dim || d.resolution.len() != d.dim {
            return Err(self.at(
                "domain",
                "extents and resolution need one entry per dimension",
            ));
        }
        if let Some(s) = &self.solver.eps_schedule {
            if s.is_empty() || s.iter().any(|e| !(*e > 0.0)) || s.windows(2).any(|w| !(w[1] < w[0]))
            {
                return Err(self.at(
                    "solver",
                    "eps_schedule must be positive and strictly decreasing",
                ));
            }
        }
        for (name, tol) in [
            ("pq_tol", self.solver.pq_tol),
            ("limit_tol", self.solver.limit_tol),
        ] {
            if let Some(t) = tol {
                if !(t > 0.0) {
                    return Err(self.at("solver", format!("{name} must be positive")));
                }
            }
        }
        match &self.weight {
            WeightConfig::Degenerate { width, .. } if !(0.0..0.5).contains(width) => {
                return Err(self.at("weight", "degenerate width must lie in [0, 0.5)"));
            }
            WeightConfig::Radial {
                center: Some(c), ..
            } if c.len() != d.dim => {
                return Err(self.at("weight", "radial center needs one entry per dimension"));
            }
            _ => {}
        }
        if let BoundaryConfig::Linear { gradient, .. } = &self.boundary {
            if gradient.len() != d.dim {
                return Err(self.at("boundary", "linear gradient needs one entry per dimension"));
            }
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>> {
        let d = &self.domain;
        let mesh = if d.dim == 1 {
            Mesh::interval(d.resolution[0], d.extents[0])
        } else {
            Mesh::rectangle(d.resolution[0], d.resolution[1], d.extents[0], d.extents[1])
        };
        mesh.map_err(|e| self.at("domain", e))
    }

    fn center(&self) -> Vec<f64> {
        self.domain.extents.iter().map(|l| 0.5 * l).collect()
    }

    /// The weight as a function of position.
    pub fn weight_fn(&self) -> impl Fn(&[f64]) -> f64 + Send + Sync + 'static {
        let weight = self.weight.clone();
        let center = self.center();
        let extents = self.domain.extents.clone();
        move |x: &[f64]| match &weight {
            WeightConfig::Constant { value } => *value,
            WeightConfig::Affine { c } => x[0] + c,
            WeightConfig::Radial {
                base,
                slope,
                center: c,
            } => {
                let c = c.as_deref().unwrap_or(&center);
                let r = x
                    .iter()
                    .zip(c)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                base + slope * r
            }
            WeightConfig::Degenerate { value, width } => {
                let d = x
                    .iter()
                    .zip(&center)
                    .zip(&extents)
                    .map(|((a, m), l)| (a - m).abs() / l)
                    .fold(0.0, f64::max);
                value * (d - width).max(0.0) / (0.5 - width)
            }
        }
    }

    /// Boundary data as a function of position.
    pub fn boundary_fn(&self) -> impl Fn(&[f64]) -> f64 + Send + Sync + 'static {
        let boundary = self.boundary.clone();
        let length = self.domain.extents[0];
        move |x: &[f64]| match &boundary {
            BoundaryConfig::Linear { value, gradient } => {
                value + x.iter().zip(gradient).map(|(a, g)| a * g).sum::<f64>()
            }
            BoundaryConfig::Constant { value } => *value,
            BoundaryConfig::Endpoints { h0, h1 } => h0 + (h1 - h0) * x[0] / length,
        }
    }

    fn parts(&self) -> Result<(Weight, Vec<f64>)> {
        let mesh = self.mesh()?;
        let weight = Weight::from_fn(&mesh, self.weight_fn()).map_err(|e| self.at("weight", e))?;
        let boundary = ProblemSpec::boundary_from_fn(&mesh, self.boundary_fn());
        Ok((weight, boundary))
    }

    /// The p,q problem with the fixed `p` of `[exponents]`.
    pub fn pq_spec(&self) -> Result<ProblemSpec> {
        let p = self
            .exponents
            .p
            .ok_or_else(|| self.at("exponents", "solve-pq needs p"))?;
        self.pq_spec_at(p)
    }

    fn pq_spec_at(&self, p: f64) -> Result<ProblemSpec> {
        let (weight, boundary) = self.parts()?;
        let e = Exponents::new(p, self.exponents.q, self.domain.dim)
            .map_err(|e| self.locate("exponents", e))?;
        ProblemSpec::pq(weight, e, boundary).map_err(|e| self.locate("exponents", e))
    }

    pub fn schedule(&self) -> Result<ScheduleParams> {
        self.schedule
            .ok_or_else(|| Error::Config("missing [schedule] table (p_start, ratio, steps)".into()))
    }

    /// The p,q problem at `p_start` together with the schedule.
    pub fn continuation_spec(&self) -> Result<(ProblemSpec, ScheduleParams)> {
        let params = self.schedule()?;
        Ok((self.pq_spec_at(params.p_start)?, params))
    }

    pub fn limit_spec(&self) -> Result<ProblemSpec> {
        let (weight, boundary) = self.parts()?;
        ProblemSpec::limit(weight, self.exponents.q, boundary, 0.0)
            .map_err(|e| self.locate("exponents", e))
    }

    pub fn pq_options(&self) -> PqOptions {
        let d = PqOptions::default();
        PqOptions {
            tol: self.solver.pq_tol.unwrap_or(d.tol),
            max_iter: self.solver.max_iter.unwrap_or(d.max_iter),
        }
    }

    pub fn limit_options(&self) -> LimitOptions {
        let d = LimitOptions::default();
        LimitOptions {
            eps_schedule: self.solver.eps_schedule.clone().unwrap_or(d.eps_schedule),
            tol: self.solver.limit_tol.unwrap_or(d.tol),
            max_iter: self.solver.max_iter.unwrap_or(d.max_iter),
        }
    }

    pub fn thresholds(&self, mesh: &Mesh) -> Thresholds {
        self.solver
            .thresholds
            .unwrap_or_else(|| Thresholds::for_mesh(mesh))
    }

    /// The configuration with every default made explicit.
    pub fn resolved(&self) -> Result<RunConfig> {
        let mesh = self.mesh()?;
        let mut out = self.clone();
        let pq = self.pq_options();
        let limit = self.limit_options();
        out.solver = SolverConfig {
            pq_tol: Some(pq.tol),
            limit_tol: Some(limit.tol),
            max_iter: Some(pq.max_iter),
            eps_schedule: Some(limit.eps_schedule),
            thresholds: Some(self.thresholds(&mesh)),
        };
        Ok(out)
    }
}
