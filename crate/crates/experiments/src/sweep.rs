//! Sweep execution: one engine call per `(N, beta, T)` point on a worker pool.

use std::time::Instant;

use qate_core::exact_diag::{self, run_qate_ed, PurifiedState};
use qate_core::gaussian::{self, bdg_from_spec, run_qate_gaussian};
use qate_core::linalg;
use qate_core::protocol::{QateConfig, ScheduleKind};
use qate_core::spectral::{self, BenchmarkRecord, BodHistogram, FilterSpec, ThermalSpectrum};
use qate_core::tfim_blocks::{self, block_benchmarks, run_qate_blocks};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EngineKind, ExperimentConfig, PointKey};
use crate::{ExperimentError, Result};

/// One sweep point with its full parameter key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub name: String,
    pub config_hash: String,
    pub engine: EngineKind,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub beta: f64,
    pub schedule: ScheduleKind,
    pub tau: f64,
    #[serde(flatten)]
    pub bench: BenchmarkRecord,
    pub error: Option<String>,
    /// BOD histogram file relative to the results directory.
    pub bod_file: Option<String>,
    /// Seconds spent on the point; kept out of the deterministic CSV.
    pub wall_time: f64,
}

/// Distances between reduced states on the central sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRecord {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub beta: f64,
    pub first_site: usize,
    pub sites: usize,
    /// `|| rho_QATE - rho_min ||_1` on the sites.
    pub dist_qate_min: f64,
    /// `|| rho_min - rho_G ||_1`, Gibbs state at the same entropy.
    pub dist_min_gibbs_entropy: f64,
    /// `|| rho_min - rho_E ||_1`, Gibbs state at the same energy.
    pub dist_min_gibbs_energy: f64,
}

/// Largest changes of conserved quantities over one evolution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Conservation {
    pub entropy_drift: f64,
    pub purity_drift: f64,
    pub spectrum_drift: f64,
}

impl Conservation {
    pub fn worst(&self) -> f64 {
        self.entropy_drift.max(self.purity_drift).max(self.spectrum_drift)
    }
}

#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub key: PointKey,
    pub record: ResultRecord,
    pub bod: Option<BodHistogram>,
    pub perturbative: Option<BodHistogram>,
    pub local: Option<LocalRecord>,
    pub conservation: Option<Conservation>,
}

struct Physics {
    bench: BenchmarkRecord,
    bod: Option<BodHistogram>,
    perturbative: Option<BodHistogram>,
    local: Option<LocalRecord>,
    conservation: Conservation,
}

/// Runs one point; engine errors end up in the record's `error` field.
pub fn run_point(config: &ExperimentConfig, key: PointKey, cap: usize) -> PointOutcome {
    let start = Instant::now();
    let engine = config.engine_for(key.n, cap);
    let (engine, result) = match engine {
        Ok(e) => (e, run_physics(config, key, e, cap)),
        Err(err) => (config.engine, Err(err)),
    };
    let wall_time = start.elapsed().as_secs_f64();
    let mut record = ResultRecord {
        name: config.name.clone(),
        config_hash: config.hash(),
        engine,
        n: key.n,
        t: key.t,
        beta: key.beta,
        schedule: config.schedule.kind,
        tau: config.tau,
        bench: BenchmarkRecord::default(),
        error: None,
        bod_file: None,
        wall_time,
    };
    match result {
        Ok(p) => {
            record.bench = p.bench;
            if p.bod.is_some() {
                record.bod_file = Some(bod_file_name(&config.name, key, "bod"));
            }
            PointOutcome {
                key,
                record,
                bod: p.bod,
                perturbative: p.perturbative,
                local: p.local,
                conservation: Some(p.conservation),
            }
        }
        Err(e) => {
            record.error = Some(e.to_string());
            PointOutcome {
                key,
                record,
                bod: None,
                perturbative: None,
                local: None,
                conservation: None,
            }
        }
    }
}

/// `bod/<name>_N<n>_T<t>_beta<beta>[_<tag>].csv`.
pub fn bod_file_name(name: &str, key: PointKey, tag: &str) -> String {
    format!("bod/{name}_N{}_T{}_beta{}_{tag}.csv", key.n, key.t, key.beta)
}

fn run_physics(config: &ExperimentConfig, key: PointKey, engine: EngineKind, cap: usize) -> Result<Physics> {
    let proto = config.protocol(key);
    let bod = config.bod.as_ref().filter(|b| b.applies(key.n, key.t));
    match engine {
        EngineKind::ExactDiag => run_ed(config, &proto, cap),
        EngineKind::TfimBlocks => {
            let ens = run_qate_blocks(&proto)?;
            let bench = block_benchmarks(&ens)?;
            let conservation = Conservation {
                entropy_drift: (ens.entropy() - ens.initial_entropy()).abs(),
                purity_drift: (ens.log_purity - ens.initial_log_purity).exp_m1().abs(),
                spectrum_drift: ens.spectrum_drift(),
            };
            let (hist, pert) = match bod {
                Some(b) => {
                    let width = config.filter.width.unwrap_or(2.0 * ens.final_norm()?);
                    let filter = FilterSpec::covering(b.delta, width, config.filter.x)?;
                    let grid = b.grid();
                    let hist = tfim_blocks::bod_filtered_ti(&ens, &filter, &grid)?;
                    let pert = if b.perturbative {
                        Some(tfim_blocks::bod_perturbative_gaussian(&ens, 2, b.delta, &grid)?)
                    } else {
                        None
                    };
                    (Some(hist), pert)
                }
                None => (None, None),
            };
            Ok(Physics {
                bench,
                bod: hist,
                perturbative: pert,
                local: None,
                conservation,
            })
        }
        EngineKind::GaussianFermion => {
            let run = run_qate_gaussian(&proto)?;
            let conservation = Conservation {
                entropy_drift: run.entropy_drift,
                purity_drift: run.purity_drift,
                spectrum_drift: run.spectrum_drift,
            };
            let hist = match bod {
                Some(b) => {
                    let hf = bdg_from_spec(&proto.h_final)?;
                    let width = config.filter.width.unwrap_or(hf.mode_energies().iter().sum());
                    let filter = FilterSpec::covering(b.delta, width, config.filter.x)?;
                    Some(gaussian::bod_gaussian(&run.state, &hf, &filter, &b.grid())?)
                }
                None => None,
            };
            Ok(Physics {
                bench: run.record,
                bod: hist,
                perturbative: None,
                local: None,
                conservation,
            })
        }
        EngineKind::Auto => Err(ExperimentError::Config("engine was not resolved".into())),
    }
}

fn run_ed(config: &ExperimentConfig, proto: &QateConfig, cap: usize) -> Result<Physics> {
    let run = run_qate_ed(proto, cap)?;
    let init = &run.rho_min.weights;
    let fin = &run.final_weights;
    let conservation = Conservation {
        entropy_drift: (spectral::entropy_of_weights(fin) - run.record.entropy).abs(),
        purity_drift: (run.record.purity / init.iter().map(|p| p * p).sum::<f64>() - 1.0).abs(),
        spectrum_drift: init.iter().zip(fin).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
    };
    let key = PointKey {
        n: proto.h_init.n,
        beta: proto.beta,
        t: proto.total_time,
    };
    let bod = match config.bod.as_ref().filter(|b| b.applies(key.n, key.t)) {
        Some(b) => {
            let c = ed_coefficients(&run.state, &run.final_eigen.vectors);
            Some(spectral::bod_exact_gaussian(&c, &run.final_eigen.energies, b.delta, &b.grid())?)
        }
        None => None,
    };
    let local = match &config.local_observables {
        Some(l) => Some(local_record(&run, key, l.sites)?),
        None => None,
    };
    Ok(Physics {
        bench: run.record,
        bod,
        perturbative: None,
        local,
        conservation,
    })
}

/// `c = V^dagger W diag(p) W^dagger V` for a purified state.
pub fn ed_coefficients(state: &PurifiedState, vectors: &linalg::CMat) -> linalg::CMat {
    let mut a = linalg::adjoint_mul(vectors, &state.vectors);
    for (j, &p) in state.weights.iter().enumerate() {
        a.column_mut(j).scale_mut(p.max(0.0).sqrt());
    }
    linalg::hermitize(&linalg::mul_adjoint(&a, &a))
}

fn local_record(run: &exact_diag::EdRun, key: PointKey, sites: usize) -> Result<LocalRecord> {
    let first = (key.n - sites) / 2;
    let range = first..first + sites;
    let levels = &run.final_eigen.energies;
    let thermal = ThermalSpectrum::Levels(levels);
    let gibbs_at = |beta: f64| PurifiedState {
        n: key.n,
        weights: exact_diag::gibbs_weights(levels, beta),
        vectors: run.final_eigen.vectors.clone(),
    };
    let beta_s = spectral::beta_for_entropy(thermal, run.record.entropy)?;
    let beta_e = spectral::beta_for_energy(thermal, run.record.e_min)?;
    let min_red = run.rho_min.reduced_density(range.clone())?;
    let dist = |s: &PurifiedState| -> Result<f64> {
        Ok(exact_diag::trace_norm_distance(&s.reduced_density(range.clone())?, &min_red))
    };
    Ok(LocalRecord {
        n: key.n,
        t: key.t,
        beta: key.beta,
        first_site: first,
        sites,
        dist_qate_min: dist(&run.state)?,
        dist_min_gibbs_entropy: dist(&gibbs_at(beta_s))?,
        dist_min_gibbs_energy: dist(&gibbs_at(beta_e))?,
    })
}

/// Runs every point of `config` on `workers` threads. Outcomes come back
/// sorted by `(N, beta, T)` whatever the execution order.
pub fn run_sweep(config: &ExperimentConfig, workers: usize, cap: usize) -> Result<Vec<PointOutcome>> {
    let points = config.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Config(format!("worker pool: {e}")))?;
    let mut out: Vec<PointOutcome> = pool.install(|| points.par_iter().map(|&k| run_point(config, k, cap)).collect());
    out.sort_by(|a, b| {
        a.key
            .n
            .cmp(&b.key.n)
            .then(a.key.beta.total_cmp(&b.key.beta))
            .then(a.key.t.total_cmp(&b.key.t))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn small(t_list: &str) -> ExperimentConfig {
        let text = format!(
            r#"{{
            "schema_version": 1,
            "name": "small",
            "h_init": {{"family": "tfim_ti", "g": 1.1, "boundary": "parity_sector"}},
            "h_final": {{"family": "tfim_ti", "g": 1.5, "boundary": "parity_sector"}},
            "beta_list": [1.0],
            "T_list": {t_list},
            "N_list": [4, 20]
        }}"#
        );
        parse_config(&text, 12).unwrap()
    }

    #[test]
    fn one_point_has_finite_benchmarks() {
        let mut cfg = small("[2.0]");
        cfg.n_list = vec![20];
        let out = run_sweep(&cfg, 1, 12).unwrap();
        assert_eq!(out.len(), 1);
        let r = &out[0].record;
        assert!(r.error.is_none());
        assert_eq!(r.engine, EngineKind::TfimBlocks);
        assert!(r.bench.cod.is_finite() && r.bench.cod > 0.0);
        assert!(out[0].conservation.unwrap().worst() < 1e-10);
    }

    #[test]
    fn order_of_t_list_does_not_matter() {
        let a = run_sweep(&small("[1.0, 3.0, 2.0]"), 2, 12).unwrap();
        let b = run_sweep(&small("[3.0, 2.0, 1.0]"), 1, 12).unwrap();
        let strip = |v: &[PointOutcome]| -> Vec<(usize, f64, BenchmarkRecord)> {
            v.iter().map(|o| (o.record.n, o.record.t, o.record.bench)).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a[0].record.engine, EngineKind::ExactDiag);
        assert_eq!(a[5].record.engine, EngineKind::TfimBlocks);
    }

    #[test]
    fn engine_failures_are_recorded_per_point() {
        let mut cfg = small("[1.0]");
        // Bypass validation: ED cap below the smallest N.
        cfg.engine = EngineKind::ExactDiag;
        let out = run_sweep(&cfg, 1, 12).unwrap();
        assert!(out[0].record.error.is_none());
        assert!(out[1].record.error.as_deref().unwrap().contains("cap"));
    }
}
