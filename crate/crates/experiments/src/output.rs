//! Persisted results: CSV and JSON records, BOD histograms, local
//! observables, timings and fit tables.

use std::fs;
use std::path::{Path, PathBuf};

use qate_core::protocol::ScheduleKind;
use qate_core::spectral::{BenchmarkRecord, BinWindow, BodHistogram};
use serde::Serialize;

use crate::config::{EngineKind, ExperimentConfig};
use crate::fit::GroupFit;
use crate::sweep::{bod_file_name, LocalRecord, PointOutcome, ResultRecord};
use crate::{io_error, ExperimentError, Result};

pub const RESULTS_HEADER: [&str; 18] = [
    "name",
    "engine",
    "N",
    "T",
    "beta",
    "schedule",
    "tau",
    "energy",
    "e_min",
    "delta_e_qate",
    "delta_e_min",
    "variance",
    "var_min",
    "delta_var",
    "cod",
    "purity",
    "entropy",
    "error",
];

pub const BOD_HEADER: [&str; 4] = ["omega", "mass", "bin_width", "purity_norm"];

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const CONFIG_COPY: &str = "config.json";
pub const LOCAL_CSV: &str = "local.csv";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const FITS_CSV: &str = "fits.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

fn bench_values(b: &BenchmarkRecord) -> [f64; 10] {
    [
        b.energy,
        b.e_min,
        b.delta_e_qate,
        b.delta_e_min,
        b.variance,
        b.var_min,
        b.delta_var,
        b.cod,
        b.purity,
        b.entropy,
    ]
}

fn csv_error(path: &Path, e: csv::Error) -> ExperimentError {
    io_error(path, e)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| io_error(dir, e)),
        _ => Ok(()),
    }
}

/// Writes records as CSV (fixed header) or JSON (exact round trip).
pub fn emit_results(records: &[ResultRecord], format: Format, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(ExperimentError::Config("no records to write".into()));
    }
    ensure_parent(path)?;
    match format {
        Format::Json => {
            let text = serde_json::to_string_pretty(records).map_err(|e| io_error(path, e))?;
            fs::write(path, text + "\n").map_err(|e| io_error(path, e))
        }
        Format::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
            w.write_record(RESULTS_HEADER).map_err(|e| csv_error(path, e))?;
            for r in records {
                let mut row = vec![
                    r.name.clone(),
                    r.engine.as_str().to_string(),
                    r.n.to_string(),
                    r.t.to_string(),
                    r.beta.to_string(),
                    r.schedule.as_str().to_string(),
                    r.tau.to_string(),
                ];
                match &r.error {
                    Some(err) => {
                        row.extend(std::iter::repeat(String::new()).take(10));
                        row.push(err.clone());
                    }
                    None => {
                        row.extend(bench_values(&r.bench).iter().map(f64::to_string));
                        row.push(String::new());
                    }
                }
                w.write_record(&row).map_err(|e| csv_error(path, e))?;
            }
            w.flush().map_err(|e| io_error(path, e))
        }
    }
}

pub fn read_results_json(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
}

fn parse_schedule(s: &str) -> Option<ScheduleKind> {
    match s {
        "linear" => Some(ScheduleKind::Linear),
        "smooth" => Some(ScheduleKind::Smooth),
        "tabulated" => Some(ScheduleKind::Tabulated),
        _ => None,
    }
}

/// Reads a results CSV. Hash, BOD reference and wall time are not part of
/// the CSV and come back empty.
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(ExperimentError::Config(format!("{}: unexpected header", path.display())));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let bad = |field: &str| ExperimentError::Config(format!("{}: row {}: bad {field}", path.display(), line + 2));
        let num = |i: usize| -> Result<f64> { row[i].parse::<f64>().map_err(|_| bad(RESULTS_HEADER[i])) };
        let error = (!row[17].is_empty()).then(|| row[17].to_string());
        let bench = if error.is_some() {
            BenchmarkRecord::default()
        } else {
            BenchmarkRecord {
                energy: num(7)?,
                e_min: num(8)?,
                delta_e_qate: num(9)?,
                delta_e_min: num(10)?,
                variance: num(11)?,
                var_min: num(12)?,
                delta_var: num(13)?,
                cod: num(14)?,
                purity: num(15)?,
                entropy: num(16)?,
            }
        };
        out.push(ResultRecord {
            name: row[0].to_string(),
            config_hash: String::new(),
            engine: EngineKind::parse(&row[1]).ok_or_else(|| bad("engine"))?,
            n: row[2].parse().map_err(|_| bad("N"))?,
            t: num(3)?,
            beta: num(4)?,
            schedule: parse_schedule(&row[5]).ok_or_else(|| bad("schedule"))?,
            tau: num(6)?,
            bench,
            error,
            bod_file: None,
            wall_time: 0.0,
        });
    }
    Ok(out)
}

pub fn write_bod_csv(hist: &BodHistogram, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(BOD_HEADER).map_err(|e| csv_error(path, e))?;
    for (omega, mass) in hist.bin_centers.iter().zip(&hist.values) {
        w.write_record([omega.to_string(), mass.to_string(), hist.bin_width.to_string(), hist.purity_norm.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn read_bod_csv(path: &Path) -> Result<BodHistogram> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut hist = BodHistogram {
        bin_centers: Vec::new(),
        bin_width: 0.0,
        values: Vec::new(),
        purity_norm: 0.0,
        window: BinWindow::Gaussian,
    };
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let v: Vec<f64> = row
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| io_error(path, e))?;
        if v.len() != 4 {
            return Err(io_error(path, "expected 4 columns"));
        }
        hist.bin_centers.push(v[0]);
        hist.values.push(v[1]);
        hist.bin_width = v[2];
        hist.purity_norm = v[3];
    }
    Ok(hist)
}

/// Writes any serializable rows with a header taken from the field names.
pub fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn read_local_csv(path: &Path) -> Result<Vec<LocalRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    rdr.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| csv_error(path, e))
}

#[derive(Debug, Serialize)]
struct TimingRow<'a> {
    name: &'a str,
    config_hash: &'a str,
    engine: &'a str,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "T")]
    t: f64,
    beta: f64,
    wall_time: f64,
}

#[derive(Debug, Serialize)]
struct FitRow<'a> {
    quantity: &'a str,
    axis: &'a str,
    window_lo: f64,
    window_hi: f64,
    group: &'a str,
    exponent: Option<f64>,
    prefactor: Option<f64>,
    r2: Option<f64>,
    points: Option<usize>,
    error: Option<&'a str>,
}

pub fn write_fits(fits: &[GroupFit], path: &Path) -> Result<()> {
    let rows: Vec<FitRow> = fits
        .iter()
        .map(|f| FitRow {
            quantity: &f.quantity,
            axis: f.axis.as_str(),
            window_lo: f.window.0,
            window_hi: f.window.1,
            group: &f.group,
            exponent: f.fit.as_ref().map(|p| p.exponent),
            prefactor: f.fit.as_ref().map(|p| p.prefactor),
            r2: f.fit.as_ref().map(|p| p.r2),
            points: f.fit.as_ref().map(|p| p.points),
            error: f.error.as_deref(),
        })
        .collect();
    write_rows(&rows, path)
}

/// Paths written by [`write_outcomes`].
#[derive(Debug, Clone)]
pub struct WrittenFiles {
    pub results_csv: PathBuf,
    pub results_json: PathBuf,
    pub timings_csv: PathBuf,
    pub bod_files: Vec<PathBuf>,
    pub local_csv: Option<PathBuf>,
}

/// Writes a whole sweep into `dir`. Everything except `timings.csv` is a
/// deterministic function of the config.
pub fn write_outcomes(config: &ExperimentConfig, outcomes: &[PointOutcome], dir: &Path) -> Result<WrittenFiles> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut records: Vec<ResultRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let mut bod_files = Vec::new();
    for o in outcomes {
        if let Some(h) = &o.bod {
            let p = dir.join(bod_file_name(&config.name, o.key, "bod"));
            write_bod_csv(h, &p)?;
            bod_files.push(p);
        }
        if let Some(h) = &o.perturbative {
            let p = dir.join(bod_file_name(&config.name, o.key, "perturbative"));
            write_bod_csv(h, &p)?;
            bod_files.push(p);
        }
    }
    let timings: Vec<TimingRow> = records
        .iter()
        .map(|r| TimingRow {
            name: &r.name,
            config_hash: &r.config_hash,
            engine: r.engine.as_str(),
            n: r.n,
            t: r.t,
            beta: r.beta,
            wall_time: r.wall_time,
        })
        .collect();
    let timings_csv = dir.join(TIMINGS_CSV);
    write_rows(&timings, &timings_csv)?;
    let results_csv = dir.join(RESULTS_CSV);
    emit_results(&records, Format::Csv, &results_csv)?;
    // Wall time lives in timings.csv so that results.json is reproducible.
    for r in &mut records {
        r.wall_time = 0.0;
    }
    let results_json = dir.join(RESULTS_JSON);
    emit_results(&records, Format::Json, &results_json)?;
    let config_path = dir.join(CONFIG_COPY);
    let text = serde_json::to_string_pretty(config).map_err(|e| io_error(&config_path, e))?;
    fs::write(&config_path, text + "\n").map_err(|e| io_error(&config_path, e))?;
    let local: Vec<LocalRecord> = outcomes.iter().filter_map(|o| o.local.clone()).collect();
    let local_csv = if local.is_empty() {
        None
    } else {
        let p = dir.join(LOCAL_CSV);
        write_rows(&local, &p)?;
        Some(p)
    };
    Ok(WrittenFiles {
        results_csv,
        results_json,
        timings_csv,
        bod_files,
        local_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize, t: f64, error: Option<&str>) -> ResultRecord {
        ResultRecord {
            name: "unit".into(),
            config_hash: "0123456789abcdef".into(),
            engine: EngineKind::TfimBlocks,
            n,
            t,
            beta: 1.0,
            schedule: ScheduleKind::Linear,
            tau: 0.1,
            bench: BenchmarkRecord {
                energy: -1.0 / 3.0,
                e_min: -0.4,
                delta_e_qate: 0.1 / 3.0 + 1e-17,
                delta_e_min: 2.5e-300,
                variance: 0.7,
                var_min: 0.6,
                delta_var: 0.1,
                cod: 1.234_567_890_123_456_7e-9,
                purity: 0.25,
                entropy: std::f64::consts::LN_2,
            },
            error: error.map(String::from),
            bod_file: Some("bod/x.csv".into()),
            wall_time: 0.5,
        }
    }

    #[test]
    fn single_record_gives_two_line_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        emit_results(&[record(10, 20.0, None)], Format::Csv, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], RESULTS_HEADER.join(","));
        assert!(lines[1].starts_with("unit,tfim_blocks,10,20,1,linear,0.1,"));
        assert!(lines[1].ends_with(','));
    }

    #[test]
    fn json_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![record(4, 1.5, None), record(8, 10.0, Some("ED cap exceeded, N = 8"))];
        let pj = dir.path().join("r.json");
        emit_results(&recs, Format::Json, &pj).unwrap();
        assert_eq!(read_results_json(&pj).unwrap(), recs);
        let pc = dir.path().join("r.csv");
        emit_results(&recs, Format::Csv, &pc).unwrap();
        let back = read_results_csv(&pc).unwrap();
        assert_eq!(back[0].bench, recs[0].bench);
        assert_eq!(back[1].error, recs[1].error);
        assert_eq!(back[1].bench, BenchmarkRecord::default());
    }

    #[test]
    fn empty_and_unwritable_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_results(&[], Format::Csv, &dir.path().join("a.csv")),
            Err(ExperimentError::Config(_))
        ));
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_results(&[record(4, 1.0, None)], Format::Csv, &blocker.join("r.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn bod_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let h = BodHistogram {
            bin_centers: vec![0.0, 0.04, 0.08],
            bin_width: 0.04,
            values: vec![0.9, 1e-7, 3.3e-5],
            purity_norm: 0.125,
            window: BinWindow::Gaussian,
        };
        let p = dir.path().join("bod").join("h.csv");
        write_bod_csv(&h, &p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("omega,mass,bin_width,purity_norm\n"));
        assert_eq!(read_bod_csv(&p).unwrap(), h);
    }
}
