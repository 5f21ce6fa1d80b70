//! Experiment descriptions: JSON schema, defaults, validation and engine
//! resolution.

use std::path::{Path, PathBuf};

use qate_core::exact_diag::DEFAULT_HARD_CAP;
use qate_core::protocol::{HamiltonianSpec, ModelFamily, QateConfig, RampSchedule, DEFAULT_TAU};
use qate_core::spectral::DEFAULT_FILTER_X;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{io_error, ExperimentError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Default ED size cap, overridable through `QATE_ED_CAP`.
pub const DEFAULT_ED_CAP: usize = 12;
pub const ED_CAP_VAR: &str = "QATE_ED_CAP";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    TfimBlocks,
    GaussianFermion,
    ExactDiag,
    Auto,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::TfimBlocks => "tfim_blocks",
            EngineKind::GaussianFermion => "gaussian_fermion",
            EngineKind::ExactDiag => "exact_diag",
            EngineKind::Auto => "auto",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::TfimBlocks, Self::GaussianFermion, Self::ExactDiag, Self::Auto]
            .into_iter()
            .find(|e| e.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterInputs {
    #[serde(default = "default_x")]
    pub x: f64,
    /// Frequency range the filter must cover; defaults to the full spectral
    /// width `2 ||H_final||`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

impl Default for FilterInputs {
    fn default() -> Self {
        FilterInputs { x: default_x(), width: None }
    }
}

fn default_x() -> f64 {
    DEFAULT_FILTER_X
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodSpec {
    pub delta: f64,
    pub omega_max: f64,
    /// Restricts histograms to these T values; all swept T by default.
    #[serde(rename = "T_list", default, skip_serializing_if = "Option::is_none")]
    pub t_list: Option<Vec<f64>>,
    #[serde(rename = "N_list", default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    /// Also emit first+second-order perturbative histograms (block engine).
    #[serde(default)]
    pub perturbative: bool,
}

impl BodSpec {
    pub fn applies(&self, n: usize, t: f64) -> bool {
        self.t_list.as_ref().map_or(true, |l| l.contains(&t)) && self.n_list.as_ref().map_or(true, |l| l.contains(&n))
    }

    /// Evaluation grid `0, delta, 2 delta, ..` up to `omega_max`.
    pub fn grid(&self) -> Vec<f64> {
        let count = (self.omega_max / self.delta + 1e-9).floor() as usize;
        (0..=count).map(|i| i as f64 * self.delta).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FitAxis {
    T,
    N,
    #[serde(rename = "S_over_N")]
    SOverN,
}

impl FitAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "T" => Some(FitAxis::T),
            "N" => Some(FitAxis::N),
            "S_over_N" => Some(FitAxis::SOverN),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FitAxis::T => "T",
            FitAxis::N => "N",
            FitAxis::SOverN => "S_over_N",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub quantity: String,
    pub axis: FitAxis,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSpec {
    /// Number of central sites kept in the reduced states.
    #[serde(default = "default_sites")]
    pub sites: usize,
}

fn default_sites() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_engine")]
    pub engine: EngineKind,
    /// Endpoint Hamiltonians; `N` comes from `N_list` and must be omitted.
    pub h_init: HamiltonianSpec,
    pub h_final: HamiltonianSpec,
    pub beta_list: Vec<f64>,
    #[serde(rename = "T_list")]
    pub t_list: Vec<f64>,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "RampSchedule::linear")]
    pub schedule: RampSchedule,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub filter: FilterInputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bod: Option<BodSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_observables: Option<LocalSpec>,
    #[serde(default)]
    pub fits: Vec<FitSpec>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Free-text remarks copied into figure manifests.
    #[serde(default)]
    pub notes: Vec<String>,
}

fn default_engine() -> EngineKind {
    EngineKind::Auto
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Sweep point `(N, beta, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointKey {
    pub n: usize,
    pub beta: f64,
    pub t: f64,
}

/// ED cap from `QATE_ED_CAP`, bounded by the hard cap.
pub fn ed_cap() -> Result<usize> {
    match std::env::var(ED_CAP_VAR) {
        Err(_) => Ok(DEFAULT_ED_CAP),
        Ok(v) => {
            let cap: usize = v
                .trim()
                .parse()
                .map_err(|_| ExperimentError::Config(format!("{ED_CAP_VAR} must be an integer, got {v:?}")))?;
            if cap > DEFAULT_HARD_CAP {
                return Err(ExperimentError::Config(format!(
                    "{ED_CAP_VAR} = {cap} exceeds the hard cap {DEFAULT_HARD_CAP}"
                )));
            }
            Ok(cap)
        }
    }
}

fn gaussian_supported(f: ModelFamily) -> bool {
    matches!(f, ModelFamily::TfimTi | ModelFamily::ZFieldIsospectral)
}

/// Engine used for one system size: ED iff `N <= cap`; otherwise the block
/// engine for a `tfim_ti` pair and the Gaussian engine for other quadratic
/// models. Explicit choices are checked for applicability.
pub fn resolve_engine(kind: EngineKind, h_init: &HamiltonianSpec, h_final: &HamiltonianSpec, n: usize, cap: usize) -> Result<EngineKind> {
    let ti_pair = h_init.family == ModelFamily::TfimTi && h_final.family == ModelFamily::TfimTi;
    let quadratic = gaussian_supported(h_init.family) && gaussian_supported(h_final.family);
    let fail = |msg: String| Err(ExperimentError::Config(msg));
    match kind {
        EngineKind::Auto => {
            if n <= cap {
                Ok(EngineKind::ExactDiag)
            } else if ti_pair {
                Ok(EngineKind::TfimBlocks)
            } else if quadratic {
                Ok(EngineKind::GaussianFermion)
            } else {
                fail(format!("N = {n} exceeds the ED cap {cap} and the model has no free-fermion engine"))
            }
        }
        EngineKind::ExactDiag if n > cap => fail(format!("exact_diag requested for N = {n} above the ED cap {cap}")),
        EngineKind::TfimBlocks if !ti_pair => fail("tfim_blocks needs tfim_ti at both endpoints".into()),
        EngineKind::GaussianFermion if !quadratic => {
            fail("gaussian_fermion needs tfim_ti or z_field_isospectral endpoints".into())
        }
        k => Ok(k),
    }
}

impl ExperimentConfig {
    /// All sweep points, ordered by `(N, beta, T)`.
    pub fn points(&self) -> Vec<PointKey> {
        let mut out = Vec::new();
        for &n in &self.n_list {
            for &beta in &self.beta_list {
                for &t in &self.t_list {
                    out.push(PointKey { n, beta, t });
                }
            }
        }
        sort_points(&mut out);
        out
    }

    /// Protocol for one sweep point.
    pub fn protocol(&self, key: PointKey) -> QateConfig {
        let mut hi = self.h_init.clone();
        let mut hf = self.h_final.clone();
        hi.n = key.n;
        hf.n = key.n;
        QateConfig {
            beta: key.beta,
            total_time: key.t,
            tau: self.tau,
            h_init: hi,
            h_final: hf,
            schedule: self.schedule.clone(),
        }
    }

    pub fn engine_for(&self, n: usize, cap: usize) -> Result<EngineKind> {
        resolve_engine(self.engine, &self.h_init, &self.h_final, n, cap)
    }

    /// Short content hash of the canonical JSON form, with sweep lists
    /// sorted so that list order does not matter.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.beta_list.sort_by(f64::total_cmp);
        c.t_list.sort_by(f64::total_cmp);
        c.n_list.sort_unstable();
        let canonical = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self, cap: usize) -> Result<()> {
        let bad = |field: &str, msg: String| Err(ExperimentError::Config(format!("{field}: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad("name", format!("must be nonempty [A-Za-z0-9_-], got {:?}", self.name));
        }
        for (field, spec) in [("h_init", &self.h_init), ("h_final", &self.h_final)] {
            if spec.n != 0 {
                return bad(&format!("{field}.N"), "system sizes come from N_list; omit N here".into());
            }
        }
        if self.beta_list.is_empty() || self.t_list.is_empty() || self.n_list.is_empty() {
            return bad("beta_list/T_list/N_list", "must be nonempty".into());
        }
        if let Some(b) = self.beta_list.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return bad("beta_list", format!("beta must be finite and >= 0, got {b}"));
        }
        if let Some(t) = self.t_list.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return bad("T_list", format!("T must be finite and positive, got {t}"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau", format!("must be positive, got {}", self.tau));
        }
        if !(self.filter.x.is_finite() && self.filter.x > 0.0) {
            return bad("filter.x", format!("must be positive, got {}", self.filter.x));
        }
        if let Some(w) = self.filter.width {
            if !(w.is_finite() && w > 0.0) {
                return bad("filter.width", format!("must be positive, got {w}"));
            }
        }
        for key in self.points() {
            let engine = self.engine_for(key.n, cap).map_err(|e| ExperimentError::Config(format!("engine: {e}")))?;
            self.protocol(key)
                .validate()
                .map_err(|e| ExperimentError::Config(format!("point N={} T={} beta={}: {e}", key.n, key.t, key.beta)))?;
            if self.local_observables.is_some() && engine != EngineKind::ExactDiag {
                return bad("local_observables", format!("needs exact_diag, N = {} resolves to {}", key.n, engine.as_str()));
            }
        }
        if let Some(l) = &self.local_observables {
            if let Some(n) = self.n_list.iter().find(|&&n| l.sites == 0 || l.sites > n) {
                return bad("local_observables.sites", format!("{} sites do not fit in N = {n}", l.sites));
            }
        }
        if let Some(b) = &self.bod {
            if !(b.delta.is_finite() && b.delta > 0.0) || !(b.omega_max.is_finite() && b.omega_max > 0.0) {
                return bad("bod", "delta and omega_max must be positive".into());
            }
            if let Some(t) = b.t_list.iter().flatten().find(|t| !self.t_list.contains(t)) {
                return bad("bod.T_list", format!("T = {t} is not swept"));
            }
            if let Some(n) = b.n_list.iter().flatten().find(|n| !self.n_list.contains(n)) {
                return bad("bod.N_list", format!("N = {n} is not swept"));
            }
        }
        for (i, f) in self.fits.iter().enumerate() {
            let field = format!("fits[{i}]");
            if crate::fit::Quantity::parse(&f.quantity).is_none() {
                return bad(&field, format!("unknown quantity {:?}", f.quantity));
            }
            let (lo, hi) = f.window;
            if !(lo > 0.0 && lo < hi) {
                return bad(&field, format!("window must satisfy 0 < lo < hi, got {lo}:{hi}"));
            }
            let swept: Vec<f64> = match f.axis {
                FitAxis::T => self.t_list.clone(),
                FitAxis::N => self.n_list.iter().map(|&n| n as f64).collect(),
                FitAxis::SOverN => continue,
            };
            let min = swept.iter().copied().fold(f64::INFINITY, f64::min);
            let max = swept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo < min || hi > max {
                return bad(&field, format!("window {lo}:{hi} leaves the swept range {min}:{max}"));
            }
        }
        Ok(())
    }
}

pub fn sort_points(points: &mut [PointKey]) {
    points.sort_by(|a, b| {
        a.n.cmp(&b.n)
            .then(a.beta.total_cmp(&b.beta))
            .then(a.t.total_cmp(&b.t))
    });
}

/// Parses and validates a config string against the ED cap.
pub fn parse_config(text: &str, cap: usize) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
        ExperimentError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    cfg.validate(cap)?;
    Ok(cfg)
}

/// Reads, parses and validates a config file with the ED cap from the environment.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_config(&text, ed_cap()?)
}

/// `count` log-spaced values from `lo` to `hi`, rounded to 3 significant digits.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    (0..count)
        .map(|i| {
            let v = lo * (hi / lo).powf(i as f64 / (count - 1) as f64);
            let scale = 10f64.powi(v.log10().floor() as i32 - 2);
            (v / scale).round() * scale
        })
        .collect()
}
