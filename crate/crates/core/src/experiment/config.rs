use std::fmt::Display;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{ChainConfig, RadialSummary};
use crate::phi::PhiSpec;
use crate::targets::{Chi, Target};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: PathBuf, msg: String },

    /// toml's message carries the line and column.
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },

    #[error("cannot write output: {0}")]
    Output(String),
}

pub(crate) fn field_err(field: &str, msg: impl Display) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        msg: msg.to_string(),
    }
}

/// Contents of a config file. Every section is optional; an experiment only
/// reads `seed`, `[target]`, `[chain]` and its own section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub chain: ChainSpec,
    #[serde(default)]
    pub stationarity: StationaritySpec,
    #[serde(default)]
    pub contraction: ContractionSpec,
    #[serde(default)]
    pub sharpness: SharpnessSpec,
    #[serde(default)]
    pub levelset: LevelSetSpec,
    #[serde(default)]
    pub lambda_k: LambdaSpec,
    #[serde(default)]
    pub gap_bound: GapBoundSpec,
    #[serde(default)]
    pub figure_left: FigureLeftSpec,
    #[serde(default)]
    pub figure_right: FigureRightSpec,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// dk | rot_inv | rot_asym | std_t | pareto_shell
    pub family: String,
    pub d: usize,
    pub k: Option<f64>,
    pub m: Option<f64>,
    pub eps: Option<f64>,
    pub phi: Option<PhiConfig>,
    pub chi: Option<ChiConfig>,
    pub chi_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    /// linear | power | quadratic | exp_minus_one
    pub kind: String,
    pub alpha: Option<f64>,
    pub scale: Option<f64>,
    pub exponent: Option<f64>,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiConfig {
    /// constant | gaussian
    pub kind: String,
    pub value: Option<f64>,
    pub sigma: Option<Vec<Vec<f64>>>,
    pub sigma_diag: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSpec {
    /// Recorded transitions after burn-in, before thinning.
    pub steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// norm | log_norm
    pub summary: String,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            steps: 200_000,
            burn_in: 1_000,
            thinning: 1,
            summary: "norm".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaritySpec {
    /// Number of stationary draws pushed through one step.
    pub n: usize,
}

impl Default for StationaritySpec {
    fn default() -> Self {
        Self { n: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionSpec {
    pub radii: Vec<f64>,
    pub n: usize,
}

impl Default for ContractionSpec {
    fn default() -> Self {
        Self {
            radii: vec![0.5, 1.0, 2.0, 5.0],
            n: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessSpec {
    pub r: Vec<f64>,
    pub n: usize,
}

impl Default for SharpnessSpec {
    fn default() -> Self {
        Self {
            r: vec![1e4],
            n: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelSetSpec {
    /// Grid points, geometrically spaced in -log t below the support end.
    pub points: usize,
    pub samples: usize,
    pub min_offset: f64,
    pub max_offset: f64,
}

impl Default for LevelSetSpec {
    fn default() -> Self {
        Self {
            points: 20,
            samples: 1_000_000,
            min_offset: 1e-2,
            max_offset: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSpec {
    pub p: Vec<f64>,
    pub grid: usize,
    /// Bracket [lo, hi] for the boundary search; no search when absent.
    pub bisect: Option<[f64; 2]>,
    pub tol: f64,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        Self {
            p: vec![1.2, 1.4, 1.5, 2.0, 3.0],
            grid: crate::spectral::DEFAULT_GRID_SIZE,
            bisect: None,
            tol: 1e-3,
        }
    }
}

/// Without `kind` the bound for `[target]` is reported.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapBoundSpec {
    pub kind: Option<String>,
    pub d: Option<usize>,
    pub k: Option<f64>,
    pub m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureLeftSpec {
    pub d: usize,
    pub k: f64,
    pub m: Vec<f64>,
    pub summary: String,
}

impl Default for FigureLeftSpec {
    fn default() -> Self {
        Self {
            d: 10,
            k: 1.0,
            m: (0..15).map(|j| 2f64.powf(-0.5 * j as f64)).collect(),
            summary: "log_norm".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureRightSpec {
    pub d: Vec<usize>,
    pub m: Vec<f64>,
    pub summary: String,
}

impl Default for FigureRightSpec {
    fn default() -> Self {
        Self {
            d: (1..=10).map(|j| 1usize << j).collect(),
            m: (0..=4).map(|j| (1u32 << j) as f64).collect(),
            summary: "norm".into(),
        }
    }
}

fn req(v: Option<f64>, field: &str) -> Result<f64, ConfigError> {
    v.ok_or_else(|| field_err(field, "required for this family"))
}

impl PhiConfig {
    pub fn build(&self) -> Result<PhiSpec, ConfigError> {
        let f = |name: &str| format!("target.phi.{name}");
        let phi = match self.kind.as_str() {
            "linear" => PhiSpec::linear(self.alpha.unwrap_or(1.0)),
            "power" => PhiSpec::power(req(self.scale, &f("scale"))?, req(self.exponent, &f("exponent"))?),
            "quadratic" => Ok(PhiSpec::quadratic()),
            "exp_minus_one" => PhiSpec::exp_minus_one(self.alpha.unwrap_or(1.0)),
            other => return Err(field_err(&f("kind"), format!("unknown phi kind {other:?}"))),
        }
        .map_err(|e| field_err(&f("kind"), e))?;
        match self.kappa {
            Some(kappa) => phi.with_kappa(kappa).map_err(|e| field_err(&f("kappa"), e)),
            None => Ok(phi),
        }
    }
}

impl ChiConfig {
    pub fn build(&self, d: usize) -> Result<Chi, ConfigError> {
        match self.kind.as_str() {
            "constant" => {
                Chi::constant(req(self.value, "target.chi.value")?).map_err(|e| field_err("target.chi.value", e))
            }
            "gaussian" => {
                let sigma = match (&self.sigma, &self.sigma_diag) {
                    (Some(rows), None) => {
                        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                            return Err(field_err("target.chi.sigma", format!("expected a {d}x{d} matrix")));
                        }
                        DMatrix::from_fn(d, d, |i, j| rows[i][j])
                    }
                    (None, Some(diag)) => {
                        if diag.len() != d {
                            return Err(field_err("target.chi.sigma_diag", format!("expected {d} entries")));
                        }
                        DMatrix::from_diagonal(&DVector::from_vec(diag.clone()))
                    }
                    _ => return Err(field_err("target.chi", "give exactly one of sigma, sigma_diag")),
                };
                Chi::gaussian(sigma).map_err(|e| field_err("target.chi.sigma", e))
            }
            other => Err(field_err("target.chi.kind", format!("unknown chi kind {other:?}"))),
        }
    }
}

impl TargetSpec {
    pub fn build(&self) -> Result<Target, ConfigError> {
        let d = self.d;
        let phi = || match &self.phi {
            Some(p) => p.build(),
            None => Ok(PhiSpec::linear(1.0).expect("valid slope")),
        };
        let built = match self.family.as_str() {
            "dk" => Target::dk(d, req(self.k, "target.k")?, phi()?),
            "rot_inv" => Target::rot_inv(d, req(self.k, "target.k")?, req(self.m, "target.m")?, phi()?),
            "rot_asym" => {
                let chi = self
                    .chi
                    .as_ref()
                    .ok_or_else(|| field_err("target.chi", "required for rot_asym"))?
                    .build(d)?;
                Target::rot_asym(d, req(self.k, "target.k")?, req(self.m, "target.m")?, chi, self.chi_min)
            }
            "std_t" => {
                if self.k.is_some_and(|k| k != d as f64) {
                    return Err(field_err("target.k", "std_t uses k = d"));
                }
                Target::std_t(d, req(self.m, "target.m")?)
            }
            "pareto_shell" => Target::pareto_shell(
                d,
                req(self.k, "target.k")?,
                req(self.m, "target.m")?,
                self.eps.unwrap_or(1.0),
            ),
            other => return Err(field_err("target.family", format!("unknown family {other:?}"))),
        };
        built.map_err(|e| field_err("target", e))
    }
}

impl ChainSpec {
    pub fn chain_config(&self) -> Result<ChainConfig, ConfigError> {
        if self.thinning == 0 {
            return Err(field_err("chain.thinning", "must be at least 1"));
        }
        Ok(ChainConfig::new(self.steps + self.burn_in, self.burn_in, self.thinning))
    }
}

pub fn parse_summary(s: &str, field: &str) -> Result<RadialSummary, ConfigError> {
    match s {
        "norm" => Ok(RadialSummary::Norm),
        "log_norm" => Ok(RadialSummary::LogNorm),
        other => Err(field_err(field, format!("unknown summary {other:?}, expected norm or log_norm"))),
    }
}
