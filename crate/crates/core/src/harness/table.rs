use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::harness::Algorithm;
use crate::metrics::to_db;
use crate::quantizer::Resolution;
use crate::training::TrainingKind;
use crate::{Error, Result};

const HEADER: [&str; 16] = [
    "n_p", "snr_db", "bits", "train", "algorithm", "trial", "seed", "status", "nmse", "nmse_db", "mi", "rate",
    "iterations", "converged", "wall_ms", "error",
];

/// One (coordinate, algorithm, trial) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub n_p: usize,
    pub snr_db: f64,
    pub bits: Resolution,
    pub train: TrainingKind,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub seed: u64,
    /// Linear NMSE of the normalized estimate.
    pub nmse: Option<f64>,
    pub mi: Option<f64>,
    pub rate: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub wall_ms: Option<f64>,
    /// Set for failed rows.
    pub error: Option<String>,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn nmse_db(&self) -> Option<f64> {
        self.nmse.map(to_db)
    }
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        v.to_string()
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.n_p.to_string(),
            fmt_f(r.snr_db),
            r.bits.to_string(),
            r.train.to_string(),
            r.algorithm.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            if r.ok() { "ok" } else { "failed" }.to_string(),
            opt(r.nmse, fmt_f),
            opt(r.nmse_db(), fmt_f),
            opt(r.mi, fmt_f),
            opt(r.rate, fmt_f),
            opt(r.iterations, |v| v.to_string()),
            opt(r.converged, |v| v.to_string()),
            opt(r.wall_ms, fmt_f),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<Option<T>> {
    let s = rec.get(i).unwrap_or("");
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("cannot parse column {} value {s:?}", HEADER[i])))
}

fn required<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    field(rec, i)?.ok_or_else(|| Error::Config(format!("missing column {}", HEADER[i])))
}

/// Parses rows written by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Config("unexpected CSV header".into()));
    }
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let error: Option<String> = field(&rec, 15)?;
            Ok(ResultRow {
                n_p: required(&rec, 0)?,
                snr_db: required(&rec, 1)?,
                bits: required(&rec, 2)?,
                train: required(&rec, 3)?,
                algorithm: required(&rec, 4)?,
                trial: required(&rec, 5)?,
                seed: required(&rec, 6)?,
                nmse: field(&rec, 8)?,
                mi: field(&rec, 10)?,
                rate: field(&rec, 11)?,
                iterations: field(&rec, 12)?,
                converged: field(&rec, 13)?,
                wall_ms: field(&rec, 14)?,
                error,
            })
        })
        .collect()
}

/// Aggregate over trials for one coordinate and algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n_p: usize,
    pub snr_db: f64,
    pub bits: Resolution,
    pub train: TrainingKind,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub failed: usize,
    /// Mean of linear NMSE, in dB.
    pub nmse_db: f64,
    /// Standard deviation of per-trial NMSE in dB.
    pub nmse_db_std: f64,
    pub mi: Option<f64>,
    pub rate: Option<f64>,
    pub iterations: Option<f64>,
    pub wall_ms: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn std_dev(v: &[f64]) -> f64 {
    match mean(v) {
        Some(m) if v.len() > 1 => (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt(),
        _ => 0.0,
    }
}

/// Groups rows by coordinate and algorithm, excluding failed rows from the
/// statistics but counting them.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, u64, Resolution, TrainingKind, Algorithm), Vec<&ResultRow>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        let key = (r.n_p, r.snr_db.to_bits(), r.bits, r.train, r.algorithm);
        let g = groups.entry(key).or_default();
        if g.is_empty() {
            order.push(key);
        }
        g.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let ok: Vec<&&ResultRow> = g.iter().filter(|r| r.ok()).collect();
            let collect = |f: &dyn Fn(&ResultRow) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            let nmse = collect(&|r| r.nmse);
            let nmse_db: Vec<f64> = nmse.iter().map(|v| to_db(*v)).collect();
            SummaryRow {
                n_p: key.0,
                snr_db: f64::from_bits(key.1),
                bits: key.2,
                train: key.3,
                algorithm: key.4,
                trials: g.len(),
                failed: g.len() - ok.len(),
                nmse_db: mean(&nmse).map(to_db).unwrap_or(f64::NAN),
                nmse_db_std: std_dev(&nmse_db),
                mi: mean(&collect(&|r| r.mi)),
                rate: mean(&collect(&|r| r.rate)),
                iterations: mean(&collect(&|r| r.iterations.map(|v| v as f64))),
                wall_ms: mean(&collect(&|r| r.wall_ms)),
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n_p", "snr_db", "bits", "train", "algorithm", "trials", "failed", "nmse_db", "nmse_db_std", "mi", "rate",
        "iterations", "wall_ms",
    ])?;
    for r in rows {
        w.write_record([
            r.n_p.to_string(),
            fmt_f(r.snr_db),
            r.bits.to_string(),
            r.train.to_string(),
            r.algorithm.to_string(),
            r.trials.to_string(),
            r.failed.to_string(),
            fmt_f(r.nmse_db),
            fmt_f(r.nmse_db_std),
            opt(r.mi, fmt_f),
            opt(r.rate, fmt_f),
            opt(r.iterations, fmt_f),
            opt(r.wall_ms, fmt_f),
        ])?;
    }
    w.flush()?;
    Ok(())
}
