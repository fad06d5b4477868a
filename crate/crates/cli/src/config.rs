use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use cmalab_core::domains::{self, DomainParams, DomainSpec};
use cmalab_core::expr::Expr;
use cmalab_core::grid::{classify_nodes, GridDomain, RealFn};
use cmalab_core::modulus::{holder_modulus, ModulusOfContinuity};
use cmalab_core::solver::{DirichletData, SolveConfig, SweepOrder};
use serde::{Deserialize, Serialize};

/// A number or an expression string.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

impl Scalar {
    fn to_fn(&self, n: usize, key: &str) -> anyhow::Result<RealFn> {
        Ok(match self {
            Scalar::Number(c) => {
                let c = *c;
                Arc::new(move |_: &[f64]| c)
            }
            Scalar::Expr(s) => Expr::parse(s, n)
                .with_context(|| format!("in `{key}` = {s:?}"))?
                .into_fn(),
        })
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainParamsConfig {
    pub n: Option<usize>,
    pub radius: Option<f64>,
    pub center: Option<Vec<f64>>,
    pub semiaxes: Option<Vec<f64>>,
    pub m: Option<u32>,
}

/// Modulus of continuity for `f^{1/n}`: `"identity"`, `{"holder": eps}`,
/// `{"linear": slope}` or `{"breakpoints": [[r, w], ...]}`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusConfig {
    Identity,
    Holder(f64),
    Linear(f64),
    Breakpoints(Vec<(f64, f64)>),
}

impl ModulusConfig {
    pub fn build(&self) -> cmalab_core::Result<ModulusOfContinuity> {
        match self {
            ModulusConfig::Identity => Ok(ModulusOfContinuity::identity()),
            ModulusConfig::Holder(eps) => holder_modulus(*eps),
            ModulusConfig::Linear(s) => ModulusOfContinuity::linear(*s, 1e6),
            ModulusConfig::Breakpoints(b) => ModulusOfContinuity::new(b.clone()),
        }
    }
}

fn default_phi() -> Scalar {
    Scalar::Number(0.0)
}
fn default_f() -> Scalar {
    Scalar::Number(0.0)
}
fn default_frame_radius() -> usize {
    2
}
fn default_tol_res() -> f64 {
    1e-8
}
fn default_max_sweeps() -> usize {
    20_000
}
fn default_threads() -> usize {
    1
}
fn default_outdir() -> PathBuf {
    PathBuf::from("out")
}
fn default_k_max() -> f64 {
    1e6
}
fn default_barrier_points() -> usize {
    20
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: String,
    #[serde(default)]
    pub domain_params: DomainParamsConfig,
    /// Expression overriding the domain's candidate defining function.
    #[serde(default)]
    pub rho: Option<String>,
    #[serde(default = "default_phi")]
    pub phi: Scalar,
    #[serde(default = "default_f")]
    pub f: Scalar,
    pub h: f64,
    #[serde(default = "default_frame_radius")]
    pub frame_radius: usize,
    #[serde(default = "default_tol_res")]
    pub tol_res: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_outdir")]
    pub outdir: PathBuf,
    #[serde(default)]
    pub f_modulus: Option<ModulusConfig>,
    #[serde(default)]
    pub c_f: Option<f64>,
    #[serde(default, rename = "C_f")]
    pub big_c_f: Option<f64>,
    /// Known solution; the solve metadata then reports the sup error.
    #[serde(default)]
    pub exact: Option<Scalar>,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
    #[serde(default = "default_barrier_points")]
    pub barrier_points: usize,
    /// Defaults to `max(2h, min(4h, 0.5))`: a ball of radius `4h` can swallow a
    /// whole analytic disk in the boundary on coarse grids.
    #[serde(default)]
    pub barrier_delta: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Config = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> anyhow::Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            bail!("h must be positive, got {}", self.h);
        }
        if self.threads == 0 {
            bail!("threads must be >= 1");
        }
        self.solve_config().validate()?;
        Ok(())
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            frame_radius: self.frame_radius,
            tol_res: self.tol_res,
            max_sweeps: self.max_sweeps,
            order: if self.threads > 1 {
                SweepOrder::RedBlack
            } else {
                SweepOrder::Lexicographic
            },
            k_max: self.k_max,
        }
    }

    pub fn domain_spec(&self) -> anyhow::Result<DomainSpec> {
        let p = &self.domain_params;
        let params = DomainParams {
            n: p.n,
            radius: p.radius,
            center: p.center.clone(),
            semiaxes: p.semiaxes.clone(),
            m: p.m,
        };
        let mut spec = domains::by_name(&self.domain, &params)?;
        if let Some(src) = &self.rho {
            spec.rho = Some(Expr::parse(src, spec.n).with_context(|| format!("in `rho` = {src:?}"))?.into_fn());
            spec.rho_expected_to_pass = true;
        }
        Ok(spec)
    }

    pub fn grid(&self, spec: &DomainSpec) -> anyhow::Result<Arc<GridDomain>> {
        Ok(classify_nodes(spec.n, spec.defining_fn.clone(), &spec.bbox, self.h)?)
    }

    pub fn data(&self, n: usize) -> anyhow::Result<DirichletData> {
        let mut data = DirichletData::new(self.phi.to_fn(n, "phi")?, self.f.to_fn(n, "f")?);
        if let Some(m) = &self.f_modulus {
            data = data.with_modulus(m.build().context("in `f_modulus`")?);
        }
        Ok(data)
    }

    pub fn barrier_delta(&self) -> f64 {
        self.barrier_delta.unwrap_or((4.0 * self.h).min(0.5).max(2.0 * self.h))
    }

    pub fn exact_fn(&self, n: usize) -> anyhow::Result<Option<RealFn>> {
        self.exact.as_ref().map(|e| e.to_fn(n, "exact")).transpose()
    }
}
