use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::targets::{Family, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapKind {
    Dk,
    RotInv,
    RotAsym,
    MultivT,
}

impl fmt::Display for GapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dk => "dk",
            Self::RotInv => "rot_inv",
            Self::RotAsym => "rot_asym",
            Self::MultivT => "multiv_t",
        })
    }
}

impl FromStr for GapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dk" => Ok(Self::Dk),
            "rot_inv" => Ok(Self::RotInv),
            "rot_asym" => Ok(Self::RotAsym),
            "multiv_t" => Ok(Self::MultivT),
            _ => Err(Error::InvalidParameter(format!("unknown gap kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GapParams {
    pub d: Option<usize>,
    pub k: Option<f64>,
    pub m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapBound {
    pub kind: GapKind,
    pub value: f64,
    pub params: GapParams,
}

fn need<T>(v: Option<T>, name: &str, kind: GapKind) -> Result<T> {
    v.ok_or_else(|| Error::InvalidParameter(format!("{kind} gap bound needs {name}")))
}

fn positive(v: f64, name: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// Proven lower bounds on the spectral gap of the k-PSS kernel.
pub fn gap_lower_bound(kind: GapKind, params: GapParams) -> Result<GapBound> {
    let value = match kind {
        GapKind::Dk => {
            let k = positive(need(params.k, "k", kind)?, "k")?;
            1.0 / (k + 1.0)
        }
        GapKind::RotInv | GapKind::RotAsym => {
            let k = positive(need(params.k, "k", kind)?, "k")?;
            let m = positive(need(params.m, "m", kind)?, "m")?;
            m / (k + m)
        }
        GapKind::MultivT => {
            let d = need(params.d, "d", kind)?;
            let m = need(params.m, "m", kind)?;
            if d == 0 {
                return Err(Error::InvalidParameter("d must be at least 1".into()));
            }
            if !(m > 2.0) {
                return Err(Error::Hypothesis(format!("multiv_t gap bound needs m > 2, got {m}")));
            }
            let d = d as f64;
            1.0 - d * (d + m) / ((d + 1.0) * (d + m - 1.0))
        }
    };
    Ok(GapBound { kind, value, params })
}

/// The bound matching a target's family and factorization.
pub fn gap_bound_for_target(target: &Target) -> Result<GapBound> {
    let k = Some(target.k());
    match target.family() {
        Family::Dk { .. } => gap_lower_bound(GapKind::Dk, GapParams { k, ..Default::default() }),
        Family::RotInv { m, .. } => gap_lower_bound(
            GapKind::RotInv,
            GapParams {
                k,
                m: Some(*m),
                ..Default::default()
            },
        ),
        Family::RotAsym { m, .. } => gap_lower_bound(
            GapKind::RotAsym,
            GapParams {
                k,
                m: Some(*m),
                ..Default::default()
            },
        ),
        Family::StdT { m } => gap_lower_bound(
            GapKind::MultivT,
            GapParams {
                d: Some(target.d()),
                m: Some(*m),
                ..Default::default()
            },
        ),
        Family::ParetoShell { .. } => Err(Error::UnsupportedFamily("no gap bound for pareto_shell".into())),
    }
}
