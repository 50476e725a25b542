//! Named experiments driven by a TOML config, with CSV output.

mod config;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

pub use config::{
    parse_summary, ChainSpec, ChiConfig, ConfigError, ContractionSpec, FigureLeftSpec, FigureRightSpec, FileConfig,
    GapBoundSpec, LambdaSpec, LevelSetSpec, PhiConfig, SharpnessSpec, StationaritySpec, TargetSpec,
};
use config::field_err;

use crate::coupling::{contraction_ratio, ray_pairs, sharpness_probe, theoretical_contraction_rate};
use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::kernels::{run_chain, run_radial_chain, step, ChainConfig, RadialSummary};
use crate::phi::PhiSpec;
use crate::rng::RngStream;
use crate::spectral::{
    gap_bound_for_target, gap_lower_bound, heuristic_warning, iat_estimate, lambda_k_check, level_set_closed_form,
    level_set_mc, smallest_admissible_p, GapKind, GapParams, LambdaVerdict,
};
use crate::stats::{ks_one_sample, ks_two_sample};
use crate::targets::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Stationarity,
    Contraction,
    Sharpness,
    EmpiricalGap,
    LevelSet,
    LambdaK,
    GapBound,
    FigureLeft,
    FigureRight,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Self::Stationarity,
        Self::Contraction,
        Self::Sharpness,
        Self::EmpiricalGap,
        Self::LevelSet,
        Self::LambdaK,
        Self::GapBound,
        Self::FigureLeft,
        Self::FigureRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stationarity => "stationarity",
            Self::Contraction => "contraction",
            Self::Sharpness => "sharpness",
            Self::EmpiricalGap => "empirical-gap",
            Self::LevelSet => "levelset",
            Self::LambdaK => "lambda-k",
            Self::GapBound => "gap-bound",
            Self::FigureLeft => "figure-appB-left",
            Self::FigureRight => "figure-appB-right",
        }
    }

    /// The CSV header.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Stationarity => &["check", "statistic", "reference", "p_value", "n"],
            Self::Contraction => &["r_x", "r_y", "empirical_rate", "std_error", "theoretical_rate"],
            Self::Sharpness => &["r", "mc_value", "std_error", "quadrature_value", "theoretical_rate"],
            Self::EmpiricalGap => &["iat", "truncation_lag", "n_used", "empirical_gap", "theory_bound", "warning"],
            Self::LevelSet => &["log_t", "mc_value", "mc_std_error", "closed_form"],
            Self::LambdaK => &["kind", "p", "verdict", "max_violation"],
            Self::GapBound => &["kind", "d", "k", "m", "value"],
            Self::FigureLeft => &["m", "empirical_gap", "theory_bound"],
            Self::FigureRight => &["d", "m", "empirical_gap", "theory_bound"],
        }
    }

    /// Top-level config keys echoed into the output header.
    fn config_keys(self) -> &'static [&'static str] {
        match self {
            Self::Stationarity => &["seed", "target", "chain", "stationarity"],
            Self::Contraction => &["seed", "target", "contraction"],
            Self::Sharpness => &["seed", "target", "sharpness"],
            Self::EmpiricalGap => &["seed", "target", "chain"],
            Self::LevelSet => &["seed", "target", "levelset"],
            Self::LambdaK => &["seed", "target", "lambda_k"],
            Self::GapBound => &["seed", "target", "gap_bound"],
            Self::FigureLeft => &["seed", "chain", "figure_left"],
            Self::FigureRight => &["seed", "chain", "figure_right"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|e| e.as_str()).collect();
            format!("unknown experiment {s:?}, expected one of {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub file: FileConfig,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, file: FileConfig) -> Self {
        Self {
            experiment,
            seed: file.seed.unwrap_or(0),
            out: file.out.clone(),
            threads: file.threads,
            file,
        }
    }

    fn header_toml(&self) -> String {
        let mut file = self.file.clone();
        file.seed = Some(self.seed);
        let Ok(toml::Value::Table(full)) = toml::Value::try_from(&file) else {
            return String::new();
        };
        let mut table = toml::Table::new();
        for key in self.experiment.config_keys() {
            if let Some(v) = full.get(*key) {
                table.insert(key.to_string(), v.clone());
            }
        }
        toml::to_string(&table).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl Value {
    fn render(&self) -> String {
        match self {
            Self::Float(x) => format!("{x:.16e}"),
            Self::Int(n) => n.to_string(),
            Self::Text(s) => s.clone(),
            Self::Bool(b) => b.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Float(x) => Some(*x),
            Self::Int(n) => Some(*n as f64),
            _ => None,
        }
    }
}

fn text(s: &str) -> Value {
    Value::Text(s.to_string())
}

fn opt(x: Option<f64>) -> Value {
    Value::Float(x.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub cell: usize,
    pub label: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: Experiment,
    pub rows: Vec<Vec<Value>>,
    pub errors: Vec<CellError>,
}

impl Report {
    pub fn columns(&self) -> &'static [&'static str] {
        self.experiment.columns()
    }

    /// True when there was at least one cell and every cell failed.
    pub fn all_failed(&self) -> bool {
        !self.rows.is_empty() && self.errors.len() == self.rows.len()
    }

    /// A numeric column, NaN where the entry is not numeric.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns().iter().position(|c| *c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[j].as_f64().unwrap_or(f64::NAN))
                .collect(),
        )
    }
}

type CellFn = Box<dyn Fn(&mut RngStream) -> Result<Vec<Value>> + Send + Sync>;

/// One grid cell: the leading key columns are known up front, the rest come
/// from `run` and are NaN when it fails.
struct Cell {
    label: String,
    key: Vec<Value>,
    run: CellFn,
}

impl Cell {
    fn new<F>(label: impl Into<String>, key: Vec<Value>, run: F) -> Self
    where
        F: Fn(&mut RngStream) -> Result<Vec<Value>> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            key,
            run: Box::new(run),
        }
    }
}

fn target_of(cfg: &ExperimentConfig) -> std::result::Result<Target, ConfigError> {
    cfg.file
        .target
        .as_ref()
        .ok_or_else(|| field_err("target", "this experiment needs a [target] section"))?
        .build()
}

fn positive_count(n: usize, field: &str) -> std::result::Result<usize, ConfigError> {
    if n == 0 {
        Err(field_err(field, "must be positive"))
    } else {
        Ok(n)
    }
}

/// Summary series of a chain, using the norm process when the target allows.
pub fn summary_series(target: &Target, chain: &ChainConfig, summary: RadialSummary, rng: &mut RngStream) -> Result<Vec<f64>> {
    if target.is_rotation_invariant() {
        Ok(run_radial_chain(target, chain, summary, rng)?.series)
    } else {
        Ok(run_chain(target, chain, |x| summary.apply_ln(x.radius.ln()), rng)?.series)
    }
}

fn gap_figure_cell(target: Target, chain: ChainConfig, summary: RadialSummary, bound: f64, rng: &mut RngStream) -> Result<Vec<Value>> {
    let series = summary_series(&target, &chain, summary, rng)?;
    let tau = iat_estimate(&series)?.tau;
    Ok(vec![Value::Float(2.0 / (tau + 1.0)), Value::Float(bound)])
}

/// Asymptotic 1% critical value of the Kolmogorov statistic times sqrt(n).
const KS_CRITICAL_1PCT: f64 = 1.627_624;

fn build_cells(cfg: &ExperimentConfig) -> std::result::Result<Vec<Cell>, ConfigError> {
    let file = &cfg.file;
    let mut cells = Vec::new();
    match cfg.experiment {
        Experiment::Stationarity => {
            let target = target_of(cfg)?;
            let n = positive_count(file.stationarity.n, "stationarity.n")?;
            let t = target.clone();
            cells.push(Cell::new("one_step_ks", vec![text("one_step_ks")], move |rng| {
                let mut pre = Vec::with_capacity(n);
                let mut post = Vec::with_capacity(n);
                for _ in 0..n {
                    let x = t.stationary_draw(rng)?;
                    pre.push(x.radius);
                    post.push(step(&t, &x, rng)?.r_new);
                }
                let res = ks_two_sample(&pre, &post)?;
                let crit = KS_CRITICAL_1PCT * (2.0 / n as f64).sqrt();
                Ok(vec![
                    Value::Float(res.statistic),
                    Value::Float(crit),
                    Value::Float(res.p_value),
                    Value::Int(n as u64),
                ])
            }));
            if target.radial_stationary_cdf(1.0).is_ok() {
                let chain = file.chain.chain_config()?;
                cells.push(Cell::new("chain_ks", vec![text("chain_ks")], move |rng| {
                    let out = run_chain(&target, &chain, |x| x.radius, rng)?;
                    let res = ks_one_sample(&out.series, |r| target.radial_stationary_cdf(r).unwrap_or(f64::NAN))?;
                    let len = out.series.len();
                    Ok(vec![
                        Value::Float(res.statistic),
                        Value::Float(KS_CRITICAL_1PCT / (len as f64).sqrt()),
                        Value::Float(res.p_value),
                        Value::Int(len as u64),
                    ])
                }));
            }
        }
        Experiment::Contraction => {
            let target = target_of(cfg)?;
            let theory = theoretical_contraction_rate(&target).map_err(|e| field_err("target", e))?;
            let n = positive_count(file.contraction.n, "contraction.n")?;
            for pair in ray_pairs(target.d(), &file.contraction.radii) {
                let t = target.clone();
                let key = vec![Value::Float(pair.x.radius), Value::Float(pair.y.radius)];
                let label = format!("r_x={}, r_y={}", pair.x.radius, pair.y.radius);
                cells.push(Cell::new(label, key, move |rng| {
                    let est = contraction_ratio(&t, &pair, n, rng)?;
                    Ok(vec![
                        Value::Float(est.empirical_rate),
                        Value::Float(est.std_error),
                        Value::Float(theory),
                    ])
                }));
            }
        }
        Experiment::Sharpness => {
            let target = target_of(cfg)?;
            if !matches!(target.name(), "std_t" | "pareto_shell") {
                return Err(field_err("target.family", "sharpness needs std_t or pareto_shell"));
            }
            let n = positive_count(file.sharpness.n, "sharpness.n")?;
            for &r in &file.sharpness.r {
                let t = target.clone();
                cells.push(Cell::new(format!("r={r}"), vec![Value::Float(r)], move |rng| {
                    let est = sharpness_probe(&t, r, &Direction::axis(t.d()), n, rng)?;
                    Ok(vec![
                        Value::Float(est.mc_value),
                        Value::Float(est.std_error),
                        opt(est.quadrature),
                        opt(est.theoretical_rate),
                    ])
                }));
            }
        }
        Experiment::EmpiricalGap => {
            let target = target_of(cfg)?;
            let chain = file.chain.chain_config()?;
            let summary = parse_summary(&file.chain.summary, "chain.summary")?;
            let bound = gap_bound_for_target(&target).ok().map(|b| b.value);
            cells.push(Cell::new("chain", vec![], move |rng| {
                let series = summary_series(&target, &chain, summary, rng)?;
                let est = iat_estimate(&series)?;
                Ok(vec![
                    Value::Float(est.tau),
                    Value::Int(est.truncation_lag as u64),
                    Value::Int(est.n_used as u64),
                    Value::Float(2.0 / (est.tau + 1.0)),
                    opt(bound),
                    Value::Bool(bound.is_some_and(heuristic_warning)),
                ])
            }));
        }
        Experiment::LevelSet => {
            let target = target_of(cfg)?;
            let spec = &file.levelset;
            let points = positive_count(spec.points, "levelset.points")?;
            let samples = positive_count(spec.samples, "levelset.samples")?;
            if !(spec.min_offset > 0.0 && spec.max_offset >= spec.min_offset) {
                return Err(field_err("levelset.min_offset", "need 0 < min_offset <= max_offset"));
            }
            let ell = level_set_closed_form(&target).map_err(|e| field_err("target", e))?;
            let ratio = if points > 1 {
                (spec.max_offset / spec.min_offset).powf(1.0 / (points - 1) as f64)
            } else {
                1.0
            };
            for i in 0..points {
                let lt = ell.log_t_max - spec.min_offset * ratio.powi(i as i32);
                let (t, e) = (target.clone(), ell.clone());
                cells.push(Cell::new(format!("log_t={lt}"), vec![Value::Float(lt)], move |rng| {
                    let mc = level_set_mc(&t, lt, samples, rng)?;
                    Ok(vec![
                        Value::Float(mc.value),
                        Value::Float(mc.std_error),
                        Value::Float(e.eval_log(lt)),
                    ])
                }));
            }
        }
        Experiment::LambdaK => {
            let target = target_of(cfg)?;
            let spec = file.lambda_k.clone();
            if spec.grid < 3 {
                return Err(field_err("lambda_k.grid", "need at least three points"));
            }
            let ell = level_set_closed_form(&target).map_err(|e| field_err("target", e))?;
            for &p in &spec.p {
                let e = ell.clone();
                let grid = spec.grid;
                cells.push(Cell::new(format!("p={p}"), vec![text("check"), Value::Float(p)], move |_| {
                    let c = lambda_k_check(&e, p, grid)?;
                    Ok(vec![text(c.verdict.as_str()), Value::Float(c.max_violation)])
                }));
            }
            if let Some([lo, hi]) = spec.bisect {
                if !(lo < hi && spec.tol > 0.0) {
                    return Err(field_err("lambda_k.bisect", "need lo < hi and tol > 0"));
                }
                cells.push(Cell::new("boundary", vec![text("boundary")], move |_| {
                    let p = smallest_admissible_p(&ell, lo, hi, spec.tol, spec.grid)?;
                    Ok(vec![
                        Value::Float(p),
                        text(LambdaVerdict::Member.as_str()),
                        Value::Float(f64::NAN),
                    ])
                }));
            }
        }
        Experiment::GapBound => {
            let spec = &file.gap_bound;
            let bound = match &spec.kind {
                Some(kind) => {
                    let kind: GapKind = kind.parse().map_err(|e| field_err("gap_bound.kind", e))?;
                    let params = GapParams {
                        d: spec.d,
                        k: spec.k,
                        m: spec.m,
                    };
                    gap_lower_bound(kind, params).map_err(|e| field_err("gap_bound", e))?
                }
                None => gap_bound_for_target(&target_of(cfg)?).map_err(|e| field_err("target", e))?,
            };
            let key = vec![
                text(&bound.kind.to_string()),
                bound.params.d.map_or(Value::Float(f64::NAN), |d| Value::Int(d as u64)),
                opt(bound.params.k),
                opt(bound.params.m),
            ];
            cells.push(Cell::new("bound", key, move |_| Ok(vec![Value::Float(bound.value)])));
        }
        Experiment::FigureLeft => {
            let spec = &file.figure_left;
            let chain = file.chain.chain_config()?;
            let summary = parse_summary(&spec.summary, "figure_left.summary")?;
            for &m in &spec.m {
                let target = Target::rot_inv(spec.d, spec.k, m, PhiSpec::linear(1.0).expect("valid slope"))
                    .map_err(|e| field_err("figure_left", e))?;
                let bound = gap_bound_for_target(&target).map_err(|e| field_err("figure_left", e))?.value;
                let chain = chain.clone();
                cells.push(Cell::new(format!("m={m}"), vec![Value::Float(m)], move |rng| {
                    gap_figure_cell(target.clone(), chain.clone(), summary, bound, rng)
                }));
            }
        }
        Experiment::FigureRight => {
            let spec = &file.figure_right;
            let chain = file.chain.chain_config()?;
            let summary = parse_summary(&spec.summary, "figure_right.summary")?;
            for &m in &spec.m {
                for &d in &spec.d {
                    let target = Target::rot_inv(d, d as f64, m, PhiSpec::linear(1.0).expect("valid slope"))
                        .map_err(|e| field_err("figure_right", e))?;
                    let bound = gap_bound_for_target(&target).map_err(|e| field_err("figure_right", e))?.value;
                    let chain = chain.clone();
                    let key = vec![Value::Int(d as u64), Value::Float(m)];
                    cells.push(Cell::new(format!("d={d}, m={m}"), key, move |rng| {
                        gap_figure_cell(target.clone(), chain.clone(), summary, bound, rng)
                    }));
                }
            }
        }
    }
    Ok(cells)
}

/// Validates the config, then evaluates every cell in parallel with the
/// stream of the cell index. Numerical failures are recorded per cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> std::result::Result<Report, ConfigError> {
    let cells = build_cells(cfg)?;
    let width = cfg.experiment.columns().len();
    let eval = || -> Vec<std::result::Result<Vec<Value>, Error>> {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, c)| (c.run)(&mut RngStream::new(cfg.seed, i as u64)))
            .collect()
    };
    let results = match cfg.threads {
        Some(0) => return Err(field_err("threads", "must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| field_err("threads", e))?
            .install(eval),
        None => eval(),
    };
    let mut rows = Vec::with_capacity(cells.len());
    let mut errors = Vec::new();
    for (i, (cell, res)) in cells.iter().zip(results).enumerate() {
        let mut row = cell.key.clone();
        match res {
            Ok(vals) => row.extend(vals),
            Err(e) => {
                row.resize(width, Value::Float(f64::NAN));
                errors.push(CellError {
                    cell: i,
                    label: cell.label.clone(),
                    message: e.to_string(),
                });
            }
        }
        debug_assert_eq!(row.len(), width);
        rows.push(row);
    }
    Ok(Report {
        experiment: cfg.experiment,
        rows,
        errors,
    })
}

/// CSV text: `#` comment lines with the seed, the effective config and any
/// cell errors, then the header and one row per cell in grid order.
pub fn render_csv(cfg: &ExperimentConfig, report: &Report) -> std::result::Result<String, ConfigError> {
    let mut head = String::new();
    head.push_str(&format!("# kpss {}\n", env!("CARGO_PKG_VERSION")));
    head.push_str(&format!("# experiment: {}\n", cfg.experiment));
    head.push_str(&format!("# seed: {}\n", cfg.seed));
    head.push_str("# config:\n");
    for line in cfg.header_toml().lines() {
        if line.is_empty() {
            head.push_str("#\n");
        } else {
            head.push_str(&format!("#   {line}\n"));
        }
    }
    for e in &report.errors {
        head.push_str(&format!("# error: cell {} ({}): {}\n", e.cell, e.label, e.message));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let out = |e: csv::Error| ConfigError::Output(e.to_string());
    w.write_record(report.columns()).map_err(out)?;
    for row in &report.rows {
        w.write_record(row.iter().map(Value::render)).map_err(out)?;
    }
    let body = w.into_inner().map_err(|e| ConfigError::Output(e.to_string()))?;
    head.push_str(&String::from_utf8(body).map_err(|e| ConfigError::Output(e.to_string()))?);
    Ok(head)
}
