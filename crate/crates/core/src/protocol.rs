//! Ramp schedules, interpolated couplings and the Trotter time grid.
//!
//! Every engine evolves with the piecewise-constant product
//! `prod_j exp(-i H(s_j) tau_eff)`, where `s_j = j / M` is the END point of
//! step `j` and `tau_eff = T / M` with `M = ceil(T / tau)`.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};

/// Number of grid points used to certify monotonicity of a schedule.
const MONOTONE_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    Smooth,
    Tabulated,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Smooth => "smooth",
            ScheduleKind::Tabulated => "tabulated",
        }
    }
}

/// Interpolation schedule `gamma(s)` with `gamma(0) = 0`, `gamma(1) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSchedule {
    pub kind: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<(f64, f64)>>,
}

impl RampSchedule {
    pub fn linear() -> Self {
        RampSchedule {
            kind: ScheduleKind::Linear,
            samples: None,
        }
    }

    pub fn smooth() -> Self {
        RampSchedule {
            kind: ScheduleKind::Smooth,
            samples: None,
        }
    }

    /// Piecewise-linear schedule through `(s, gamma)` samples. The first and
    /// last samples are clamped to `(0, 0)` and `(1, 1)`.
    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        let s = RampSchedule {
            kind: ScheduleKind::Tabulated,
            samples: Some(samples),
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks sample layout (for tabulated kinds) and monotonicity.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ScheduleKind::Tabulated => {
                let samples = self
                    .samples
                    .as_ref()
                    .ok_or_else(|| config!("tabulated schedule needs samples"))?;
                if samples.len() < 2 {
                    return Err(config!("tabulated schedule needs at least two samples"));
                }
                if samples.iter().any(|(s, g)| !s.is_finite() || !g.is_finite()) {
                    return Err(config!("tabulated schedule has non-finite samples"));
                }
                if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(config!("tabulated schedule abscissae must increase strictly"));
                }
                let (s0, s1) = (samples[0].0, samples[samples.len() - 1].0);
                if s0.abs() > 1e-12 || (s1 - 1.0).abs() > 1e-12 {
                    return Err(config!("tabulated schedule must span s = 0 .. 1, got {s0} .. {s1}"));
                }
            }
            _ => {
                if self.samples.is_some() {
                    return Err(config!("samples are only valid for tabulated schedules"));
                }
            }
        }
        let mut prev = 0.0;
        for i in 0..=MONOTONE_GRID {
            let s = i as f64 / MONOTONE_GRID as f64;
            let g = self.eval_unchecked(s);
            if g < prev - 1e-14 {
                return Err(config!("schedule is not monotone near s = {s}"));
            }
            prev = g;
        }
        Ok(())
    }

    /// `gamma(s)`; errors outside `[0, 1]`.
    pub fn gamma(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(domain!("schedule parameter s = {s} outside [0, 1]"));
        }
        Ok(self.eval_unchecked(s))
    }

    fn eval_unchecked(&self, s: f64) -> f64 {
        use std::f64::consts::FRAC_PI_2;
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return 1.0;
        }
        match self.kind {
            ScheduleKind::Linear => s,
            ScheduleKind::Smooth => {
                let inner = (FRAC_PI_2 * s).sin().powi(2);
                (FRAC_PI_2 * inner).sin().powi(2)
            }
            ScheduleKind::Tabulated => {
                let samples = self.samples.as_deref().unwrap_or(&[]);
                let idx = samples.partition_point(|&(x, _)| x <= s);
                if idx == 0 {
                    return 0.0;
                }
                if idx >= samples.len() {
                    return 1.0;
                }
                let (x0, y0) = samples[idx - 1];
                let (x1, y1) = samples[idx];
                let y0 = if idx - 1 == 0 { 0.0 } else { y0 };
                let y1 = if idx == samples.len() - 1 { 1.0 } else { y1 };
                y0 + (y1 - y0) * (s - x0) / (x1 - x0)
            }
        }
    }

    /// `d gamma / ds`, analytic where available, central difference otherwise.
    pub fn derivative(&self, s: f64) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self.kind {
            ScheduleKind::Linear => 1.0,
            ScheduleKind::Smooth => {
                // gamma = sin^2(u), u = pi/2 sin^2(pi s / 2)
                let u = FRAC_PI_2 * (FRAC_PI_2 * s).sin().powi(2);
                let du = FRAC_PI_2 * (PI * s).sin() * FRAC_PI_2;
                (2.0 * u).sin() * du
            }
            ScheduleKind::Tabulated => {
                let h = 1e-6;
                let a = (s - h).max(0.0);
                let b = (s + h).min(1.0);
                (self.eval_unchecked(b) - self.eval_unchecked(a)) / (b - a)
            }
        }
    }
}

impl Default for RampSchedule {
    fn default() -> Self {
        RampSchedule::linear()
    }
}

/// `gamma(s)` for a schedule.
pub fn gamma_eval(schedule: &RampSchedule, s: f64) -> Result<f64> {
    schedule.gamma(s)
}

/// `(1 - gamma(s)) g0 + gamma(s) g1`.
pub fn interpolated_coupling(g0: f64, g1: f64, schedule: &RampSchedule, s: f64) -> Result<f64> {
    let gam = schedule.gamma(s)?;
    Ok((1.0 - gam) * g0 + gam * g1)
}

/// Uniform Trotter grid over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrotterGrid {
    /// End points `s_j = j / M`, `j = 1..=M`.
    pub points: Vec<f64>,
    /// Duration of every step, `T / M`.
    pub step: f64,
}

impl TrotterGrid {
    pub fn steps(&self) -> usize {
        self.points.len()
    }
}

/// `M = ceil(T / tau)`, with integral ratios taken exactly.
pub fn step_count(total_time: f64, tau: f64) -> Result<usize> {
    if !(total_time > 0.0 && total_time.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
        return Err(domain!("total time {total_time} and step {tau} must be positive"));
    }
    let ratio = total_time / tau;
    let nearest = ratio.round();
    let m = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    Ok((m as usize).max(1))
}

pub fn trotter_grid(total_time: f64, tau: f64) -> Result<TrotterGrid> {
    let m = step_count(total_time, tau)?;
    let points = (1..=m).map(|j| j as f64 / m as f64).collect();
    Ok(TrotterGrid {
        points,
        step: total_time / m as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// Transverse-field Ising chain with the parity-dependent boundary
    /// coupling `J_bc = -P`.
    TfimTi,
    /// `-sum_k (eps_k / 2) sigma^z_k` built from the TFIM mode energies, with
    /// the field sign of the TFIM term `-g sigma^z`.
    ZFieldIsospectral,
    /// Open Ising chain with longitudinal and transverse fields.
    MixedFieldIsing,
    /// Dense Hermitian matrix supplied by the caller.
    DenseCustom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    ParitySector,
}

/// One endpoint Hamiltonian of the ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub family: ModelFamily,
    #[serde(rename = "N", default)]
    pub n: usize,
    #[serde(rename = "J", default = "one")]
    pub j: f64,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub h: f64,
    #[serde(default = "Boundary::default_for_serde")]
    pub boundary: Boundary,
    /// Row-major real and imaginary parts for `dense_custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<(f64, f64)>>,
}

fn one() -> f64 {
    1.0
}

impl Boundary {
    fn default_for_serde() -> Self {
        Boundary::Open
    }
}

impl HamiltonianSpec {
    pub fn tfim(n: usize, g: f64) -> Self {
        HamiltonianSpec {
            family: ModelFamily::TfimTi,
            n,
            j: 1.0,
            g,
            h: 0.0,
            boundary: Boundary::ParitySector,
            matrix: None,
        }
    }

    pub fn z_field_isospectral(n: usize, g: f64) -> Self {
        HamiltonianSpec {
            family: ModelFamily::ZFieldIsospectral,
            n,
            j: 1.0,
            g,
            h: 0.0,
            boundary: Boundary::ParitySector,
            matrix: None,
        }
    }

    pub fn mixed_field(n: usize, j: f64, h: f64, g: f64) -> Self {
        HamiltonianSpec {
            family: ModelFamily::MixedFieldIsing,
            n,
            j,
            g,
            h,
            boundary: Boundary::Open,
            matrix: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config!("site count must be positive"));
        }
        if ![self.j, self.g, self.h].iter().all(|x| x.is_finite()) {
            return Err(config!("couplings must be finite"));
        }
        match self.family {
            ModelFamily::TfimTi => {
                if self.n % 2 != 0 {
                    return Err(config!("tfim_ti requires even N, got {}", self.n));
                }
                if self.boundary != Boundary::ParitySector {
                    return Err(config!("tfim_ti requires the parity_sector boundary"));
                }
                if self.j != 1.0 {
                    return Err(config!("tfim_ti fixes J = 1, got {}", self.j));
                }
            }
            ModelFamily::ZFieldIsospectral => {
                if self.n % 2 != 0 {
                    return Err(config!("z_field_isospectral requires even N, got {}", self.n));
                }
            }
            ModelFamily::MixedFieldIsing => {
                if self.boundary != Boundary::Open {
                    return Err(config!("mixed_field_ising uses the open boundary"));
                }
            }
            ModelFamily::DenseCustom => {
                let m = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| config!("dense_custom needs a matrix"))?;
                let dim = 1usize
                    .checked_shl(self.n as u32)
                    .ok_or_else(|| config!("N = {} too large", self.n))?;
                if m.len() != dim * dim {
                    return Err(config!("dense_custom matrix must have {} entries", dim * dim));
                }
            }
        }
        Ok(())
    }
}

/// Full QATE protocol: endpoints, temperature, duration and discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct QateConfig {
    pub beta: f64,
    pub total_time: f64,
    pub tau: f64,
    pub h_init: HamiltonianSpec,
    pub h_final: HamiltonianSpec,
    pub schedule: RampSchedule,
}

pub const DEFAULT_TAU: f64 = 0.1;

impl QateConfig {
    pub fn new(h_init: HamiltonianSpec, h_final: HamiltonianSpec, beta: f64, total_time: f64) -> Self {
        QateConfig {
            beta,
            total_time,
            tau: DEFAULT_TAU,
            h_init,
            h_final,
            schedule: RampSchedule::linear(),
        }
    }

    pub fn with_schedule(mut self, schedule: RampSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// Number of Trotter steps `ceil(T / tau)`.
    pub fn steps(&self) -> Result<usize> {
        step_count(self.total_time, self.tau)
    }

    pub fn grid(&self) -> Result<TrotterGrid> {
        trotter_grid(self.total_time, self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(config!("beta must be finite and >= 0, got {}", self.beta));
        }
        if !(self.total_time > 0.0) || !(self.tau > 0.0) {
            return Err(config!("T and tau must be positive"));
        }
        if self.h_init.n != self.h_final.n {
            return Err(config!(
                "endpoint site counts differ: {} vs {}",
                self.h_init.n,
                self.h_final.n
            ));
        }
        self.h_init.validate()?;
        self.h_final.validate()?;
        self.schedule.validate()
    }

    /// Interpolation weight of the final Hamiltonian at each grid point.
    pub fn gammas(&self) -> Result<(Vec<f64>, f64)> {
        let grid = self.grid()?;
        let gammas = grid
            .points
            .iter()
            .map(|&s| self.schedule.gamma(s))
            .collect::<Result<Vec<_>>>()?;
        Ok((gammas, grid.step))
    }
}
