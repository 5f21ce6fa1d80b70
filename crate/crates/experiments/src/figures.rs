//! Plot-data bundles: one CSV per series plus `manifest.json`, built from a
//! persisted results directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::fit::Quantity;
use crate::output::{self, CONFIG_COPY, LOCAL_CSV, RESULTS_JSON};
use crate::sweep::ResultRecord;
use crate::{io_error, ExperimentError, Result};

/// Reference time for panels plotted against N.
pub const REFERENCE_T: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Group {
    N,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Panel {
    /// Quantity against T, one series per group value.
    VsT(Quantity, Group),
    /// Quantity against N at the swept T closest to the reference.
    VsN(Quantity),
    /// BOD histograms with the given file tag, one series per (N, T).
    Bod(&'static str),
    /// Quantity against entropy per site, one series per (N, T).
    VsEntropy(Quantity),
    /// Local trace-norm distances against T, one series per N.
    Local,
}

struct FigureSpec {
    id: &'static str,
    title: &'static str,
    panels: &'static [Panel],
}

const COD_AND_DE_BY_N: &[Panel] = &[
    Panel::VsT(Quantity::Cod, Group::N),
    Panel::VsT(Quantity::DeltaEQate, Group::N),
];

const FIGURES: &[FigureSpec] = &[
    FigureSpec {
        id: "fig2a",
        title: "COD vs T per N; inset COD vs N",
        panels: &[Panel::VsT(Quantity::Cod, Group::N), Panel::VsN(Quantity::Cod)],
    },
    FigureSpec {
        id: "fig2b",
        title: "energy error per site vs T per N; inset energy error vs N",
        panels: &[
            Panel::VsT(Quantity::DeltaEQatePerN, Group::N),
            Panel::VsN(Quantity::DeltaEQate),
        ],
    },
    FigureSpec {
        id: "fig2c",
        title: "band-off-diagonal histograms per T",
        panels: &[Panel::Bod("bod")],
    },
    FigureSpec {
        id: "fig3",
        title: "isospectral start: COD and energy error vs T",
        panels: COD_AND_DE_BY_N,
    },
    FigureSpec {
        id: "fig4",
        title: "mixed-field model: COD vs T and minimal-energy gap vs N",
        panels: &[
            Panel::VsT(Quantity::Cod, Group::N),
            Panel::VsT(Quantity::DeltaEQate, Group::N),
            Panel::VsN(Quantity::DeltaEMin),
        ],
    },
    FigureSpec {
        id: "fig5",
        title: "local observables: trace-norm distances on central sites vs T",
        panels: &[Panel::Local],
    },
    FigureSpec {
        id: "fig6",
        title: "filtered vs perturbative band-off-diagonal histograms",
        panels: &[Panel::Bod("bod"), Panel::Bod("perturbative")],
    },
    FigureSpec {
        id: "fig7",
        title: "ramp across the critical point: COD and energy error vs T",
        panels: COD_AND_DE_BY_N,
    },
    FigureSpec {
        id: "fig8",
        title: "smooth schedule: COD and energy error vs T",
        panels: COD_AND_DE_BY_N,
    },
    FigureSpec {
        id: "fig9",
        title: "isospectral start at several temperatures",
        panels: &[
            Panel::VsEntropy(Quantity::DeltaEQatePerN),
            Panel::VsEntropy(Quantity::Cod),
            Panel::VsT(Quantity::Cod, Group::Beta),
            Panel::VsT(Quantity::DeltaEQate, Group::Beta),
        ],
    },
    FigureSpec {
        id: "fig10",
        title: "degenerate start: COD and energy error vs T",
        panels: &[
            Panel::VsT(Quantity::Cod, Group::N),
            Panel::VsT(Quantity::DeltaEQate, Group::N),
            Panel::VsN(Quantity::DeltaEMin),
        ],
    },
    FigureSpec {
        id: "fig11",
        title: "ramp ending before the critical point: COD and energy error vs T",
        panels: COD_AND_DE_BY_N,
    },
];

pub fn figure_ids() -> Vec<&'static str> {
    FIGURES.iter().map(|f| f.id).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub file: String,
    pub label: String,
    pub x: String,
    pub y: String,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub title: String,
    pub config_name: String,
    pub config_hash: String,
    pub series: Vec<SeriesEntry>,
    pub notes: Vec<String>,
}

struct Series {
    stem: String,
    label: String,
    x: String,
    y: String,
    rows: Vec<Vec<f64>>,
    extra: Vec<String>,
}

fn write_series(dir: &Path, s: &Series) -> Result<SeriesEntry> {
    let file = format!("{}.csv", s.stem);
    let path = dir.join(&file);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_error(&path, e))?;
    let mut header = vec![s.x.clone(), s.y.clone()];
    header.extend(s.extra.iter().cloned());
    w.write_record(&header).map_err(|e| io_error(&path, e))?;
    for row in &s.rows {
        w.write_record(row.iter().map(f64::to_string)).map_err(|e| io_error(&path, e))?;
    }
    w.flush().map_err(|e| io_error(&path, e))?;
    Ok(SeriesEntry {
        file,
        label: s.label.clone(),
        x: s.x.clone(),
        y: s.y.clone(),
        points: s.rows.len(),
    })
}

fn ok_records(records: &[ResultRecord]) -> impl Iterator<Item = &ResultRecord> {
    records.iter().filter(|r| r.error.is_none())
}

fn vs_t(records: &[ResultRecord], q: Quantity, group: Group) -> Vec<Series> {
    let mut groups: BTreeMap<(usize, u64, u64), Vec<Vec<f64>>> = BTreeMap::new();
    for r in ok_records(records) {
        let key = match group {
            Group::N => (r.n, r.beta.to_bits(), 0),
            Group::Beta => (0, r.beta.to_bits(), r.n as u64),
        };
        groups.entry(key).or_default().push(vec![r.t, q.of(r)]);
    }
    groups
        .into_iter()
        .map(|((n, beta_bits, n2), mut rows)| {
            rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let beta = f64::from_bits(beta_bits);
            let n = if group == Group::N { n } else { n2 as usize };
            Series {
                stem: format!("{}_vs_T_N{n}_beta{beta}", q.as_str()),
                label: format!("N={n} beta={beta}"),
                x: "T".into(),
                y: q.as_str().into(),
                rows,
                extra: Vec::new(),
            }
        })
        .collect()
}

fn nearest_t(records: &[ResultRecord]) -> Option<f64> {
    ok_records(records)
        .map(|r| r.t)
        .min_by(|a, b| (a.ln() - REFERENCE_T.ln()).abs().total_cmp(&(b.ln() - REFERENCE_T.ln()).abs()))
}

fn vs_n(records: &[ResultRecord], q: Quantity) -> Vec<Series> {
    let Some(t) = nearest_t(records) else {
        return Vec::new();
    };
    let mut groups: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
    for r in ok_records(records).filter(|r| r.t == t) {
        groups.entry(r.beta.to_bits()).or_default().push(vec![r.n as f64, q.of(r)]);
    }
    groups
        .into_iter()
        .map(|(b, rows)| {
            let beta = f64::from_bits(b);
            Series {
                stem: format!("{}_vs_N_T{t}_beta{beta}", q.as_str()),
                label: format!("T={t} beta={beta}"),
                x: "N".into(),
                y: q.as_str().into(),
                rows,
                extra: Vec::new(),
            }
        })
        .collect()
}

fn vs_entropy(records: &[ResultRecord], q: Quantity) -> Vec<Series> {
    let mut groups: BTreeMap<(usize, u64), Vec<Vec<f64>>> = BTreeMap::new();
    for r in ok_records(records) {
        groups
            .entry((r.n, r.t.to_bits()))
            .or_default()
            .push(vec![r.bench.entropy / r.n as f64, q.of(r)]);
    }
    groups
        .into_iter()
        .map(|((n, t_bits), mut rows)| {
            rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let t = f64::from_bits(t_bits);
            Series {
                stem: format!("{}_vs_S_over_N_N{n}_T{t}", q.as_str()),
                label: format!("N={n} T={t}"),
                x: "S_over_N".into(),
                y: q.as_str().into(),
                rows,
                extra: Vec::new(),
            }
        })
        .collect()
}

fn bod_series(dir: &Path, records: &[ResultRecord], tag: &str) -> Result<Vec<Series>> {
    let mut out = Vec::new();
    for r in ok_records(records) {
        let Some(file) = &r.bod_file else { continue };
        let file = if tag == "bod" {
            file.clone()
        } else {
            file.replacen("_bod.csv", &format!("_{tag}.csv"), 1)
        };
        let path = dir.join(&file);
        if !path.exists() {
            continue;
        }
        let h = output::read_bod_csv(&path)?;
        out.push(Series {
            stem: format!("{tag}_N{}_T{}_beta{}", r.n, r.t, r.beta),
            label: format!("N={} T={} beta={}", r.n, r.t, r.beta),
            x: "omega".into(),
            y: "mass".into(),
            rows: h.bin_centers.iter().zip(&h.values).map(|(w, m)| vec![*w, *m]).collect(),
            extra: Vec::new(),
        });
    }
    Ok(out)
}

fn local_series(dir: &Path) -> Result<Vec<Series>> {
    let path = dir.join(LOCAL_CSV);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut groups: BTreeMap<(usize, u64), Vec<Vec<f64>>> = BTreeMap::new();
    for l in output::read_local_csv(&path)? {
        groups.entry((l.n, l.beta.to_bits())).or_default().push(vec![
            l.t,
            l.dist_qate_min,
            l.dist_min_gibbs_entropy,
            l.dist_min_gibbs_energy,
        ]);
    }
    Ok(groups
        .into_iter()
        .map(|((n, b), mut rows)| {
            rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let beta = f64::from_bits(b);
            Series {
                stem: format!("local_vs_T_N{n}_beta{beta}"),
                label: format!("N={n} beta={beta}"),
                x: "T".into(),
                y: "dist_qate_min".into(),
                rows,
                extra: vec!["dist_min_gibbs_entropy".into(), "dist_min_gibbs_energy".into()],
            }
        })
        .collect())
}

/// Builds the bundle `figure_id` from the results in `results_dir` and
/// writes it to `results_dir/figures/<id>/`.
pub fn emit_figure_data(results_dir: &Path, figure_id: &str) -> Result<PathBuf> {
    let spec = FIGURES
        .iter()
        .find(|f| f.id == figure_id)
        .ok_or_else(|| ExperimentError::Config(format!("unknown figure id '{figure_id}'; known: {}", figure_ids().join(", "))))?;
    let records = output::read_results_json(&results_dir.join(RESULTS_JSON))?;
    if records.is_empty() {
        return Err(ExperimentError::Config("results contain no records".into()));
    }
    let config_path = results_dir.join(CONFIG_COPY);
    let config: ExperimentConfig = {
        let text = fs::read_to_string(&config_path).map_err(|e| io_error(&config_path, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", config_path.display())))?
    };
    let out_dir = results_dir.join("figures").join(spec.id);
    fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
    let mut series = Vec::new();
    for panel in spec.panels {
        let list = match *panel {
            Panel::VsT(q, g) => vs_t(&records, q, g),
            Panel::VsN(q) => vs_n(&records, q),
            Panel::VsEntropy(q) => vs_entropy(&records, q),
            Panel::Bod(tag) => bod_series(results_dir, &records, tag)?,
            Panel::Local => local_series(results_dir)?,
        };
        for s in &list {
            series.push(write_series(&out_dir, s)?);
        }
    }
    if series.is_empty() {
        return Err(ExperimentError::Config(format!(
            "results in {} provide no data for {figure_id}",
            results_dir.display()
        )));
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let mut notes = config.notes.clone();
    if failed > 0 {
        notes.push(format!("{failed} sweep points failed and are omitted."));
    }
    let manifest = Manifest {
        id: spec.id.into(),
        title: spec.title.into(),
        config_name: config.name.clone(),
        config_hash: config.hash(),
        series,
        notes,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_error(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
    Ok(out_dir)
}
