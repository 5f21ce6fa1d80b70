//! Log-log least-squares power-law fits over persisted records.

use qate_core::QateError;
use serde::{Deserialize, Serialize};

use crate::config::FitAxis;
use crate::sweep::ResultRecord;
use crate::{ExperimentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub points: usize,
}

/// Fits `y = a x^b` on `(ln x, ln y)` for the points with `x` in the inclusive
/// `window`. Needs at least three points, all positive.
pub fn fit_power_law(points: &[(f64, f64)], window: (f64, f64)) -> Result<PowerLawFit> {
    let inside: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, _)| x >= window.0 && x <= window.1)
        .collect();
    if inside.len() < 3 {
        return Err(domain(format!("power-law fit needs >= 3 points in {}:{}, got {}", window.0, window.1, inside.len())));
    }
    if let Some(&(x, y)) = inside.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(domain(format!("power-law fit needs positive values, got ({x}, {y})")));
    }
    let (exponent, intercept, r2) = linear_fit(&inside.iter().map(|&(x, y)| (x.ln(), y.ln())).collect::<Vec<_>>())?;
    Ok(PowerLawFit {
        exponent,
        prefactor: intercept.exp(),
        r2,
        points: inside.len(),
    })
}

/// Ordinary least squares `y = slope x + intercept` with its `r^2`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(domain("linear fit needs >= 2 points".into()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(domain("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok((slope, intercept, r2))
}

fn domain(msg: String) -> ExperimentError {
    ExperimentError::Physics(QateError::Domain(msg))
}

/// Record quantities available to fits and figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Energy,
    EMin,
    DeltaEQate,
    DeltaEQatePerN,
    DeltaEMin,
    Variance,
    VarMin,
    DeltaVar,
    Cod,
    Purity,
    Entropy,
}

impl Quantity {
    pub const ALL: [Quantity; 11] = [
        Quantity::Energy,
        Quantity::EMin,
        Quantity::DeltaEQate,
        Quantity::DeltaEQatePerN,
        Quantity::DeltaEMin,
        Quantity::Variance,
        Quantity::VarMin,
        Quantity::DeltaVar,
        Quantity::Cod,
        Quantity::Purity,
        Quantity::Entropy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Energy => "energy",
            Quantity::EMin => "e_min",
            Quantity::DeltaEQate => "delta_e_qate",
            Quantity::DeltaEQatePerN => "delta_e_qate_per_n",
            Quantity::DeltaEMin => "delta_e_min",
            Quantity::Variance => "variance",
            Quantity::VarMin => "var_min",
            Quantity::DeltaVar => "delta_var",
            Quantity::Cod => "cod",
            Quantity::Purity => "purity",
            Quantity::Entropy => "entropy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.as_str() == s)
    }

    pub fn of(self, r: &ResultRecord) -> f64 {
        let b = &r.bench;
        match self {
            Quantity::Energy => b.energy,
            Quantity::EMin => b.e_min,
            Quantity::DeltaEQate => b.delta_e_qate,
            Quantity::DeltaEQatePerN => b.delta_e_qate / r.n as f64,
            Quantity::DeltaEMin => b.delta_e_min,
            Quantity::Variance => b.variance,
            Quantity::VarMin => b.var_min,
            Quantity::DeltaVar => b.delta_var,
            Quantity::Cod => b.cod,
            Quantity::Purity => b.purity,
            Quantity::Entropy => b.entropy,
        }
    }
}

pub fn axis_value(axis: FitAxis, r: &ResultRecord) -> f64 {
    match axis {
        FitAxis::T => r.t,
        FitAxis::N => r.n as f64,
        FitAxis::SOverN => r.bench.entropy / r.n as f64,
    }
}

/// A fit over one group of records sharing every key except the fit axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub quantity: String,
    pub axis: FitAxis,
    pub window: (f64, f64),
    /// Fixed keys of the group, e.g. `N=1000 beta=1`.
    pub group: String,
    pub fit: Option<PowerLawFit>,
    pub error: Option<String>,
}

/// Fits `quantity` against `axis` separately in every group of successful records.
pub fn fit_records(records: &[ResultRecord], quantity: Quantity, axis: FitAxis, window: (f64, f64)) -> Vec<GroupFit> {
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in records.iter().filter(|r| r.error.is_none()) {
        let label = match axis {
            FitAxis::T => format!("N={} beta={}", r.n, r.beta),
            FitAxis::N => format!("T={} beta={}", r.t, r.beta),
            FitAxis::SOverN => format!("N={} T={}", r.n, r.t),
        };
        let point = (axis_value(axis, r), quantity.of(r));
        match groups.iter_mut().find(|g| g.0 == label) {
            Some(g) => g.1.push(point),
            None => groups.push((label, vec![point])),
        }
    }
    groups
        .into_iter()
        .map(|(group, pts)| {
            let res = fit_power_law(&pts, window);
            GroupFit {
                quantity: quantity.as_str().to_string(),
                axis,
                window,
                group,
                fit: res.as_ref().ok().copied(),
                error: res.err().map(|e| e.to_string()),
            }
        })
        .collect()
}
