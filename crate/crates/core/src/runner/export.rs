use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::pipeline::ScoreTable;
use crate::adversarial::AttackTrace;
use crate::error::{Error, Result};
use crate::evaluation::EvalReport;
use crate::scores::write_score_csv;

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Optional side artifacts of an audit.
#[derive(Debug, Clone, Copy)]
pub struct ExportExtras<'a> {
    pub scores: Option<&'a ScoreTable>,
    pub traces: &'a [(u64, AttackTrace)],
    pub features: &'a BTreeMap<String, Vec<(u64, Vec<f64>, bool)>>,
}

impl ExportExtras<'_> {
    pub fn none() -> ExportExtras<'static> {
        static EMPTY: BTreeMap<String, Vec<(u64, Vec<f64>, bool)>> = BTreeMap::new();
        ExportExtras {
            scores: None,
            traces: &[],
            features: &EMPTY,
        }
    }
}

pub fn report_json(report: &EvalReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(crate::scores::csv_error)?;
    for r in rows {
        w.write_record(&r).map_err(crate::scores::csv_error)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Writes `report.json`, `roc_<strategy>.csv` and `hist_<strategy>.csv`,
/// plus score, trace and feature dumps when present. Every file is replaced
/// atomically.
pub fn export_report(report: &EvalReport, out_dir: &Path, extras: &ExportExtras<'_>) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join("report.json"), &report_json(report)?)?;
    for (name, s) in &report.strategies {
        let roc = csv_bytes(
            &["fpr", "tpr_mean", "tpr_std"],
            (0..s.roc.fpr.len()).map(|i| {
                vec![
                    s.roc.fpr[i].to_string(),
                    s.roc.tpr_mean[i].to_string(),
                    s.roc.tpr_std[i].to_string(),
                ]
            }),
        )?;
        write_atomic(&out_dir.join(format!("roc_{name}.csv")), &roc)?;
        if let Some(h) = &s.histogram {
            let hist = csv_bytes(
                &["bin_lo", "bin_hi", "member_count", "nonmember_count"],
                (0..h.member_counts.len()).map(|i| {
                    vec![
                        h.edges[i].to_string(),
                        h.edges[i + 1].to_string(),
                        h.member_counts[i].to_string(),
                        h.nonmember_counts[i].to_string(),
                    ]
                }),
            )?;
            write_atomic(&out_dir.join(format!("hist_{name}.csv")), &hist)?;
        }
    }
    if let Some(table) = extras.scores {
        for s in &table.strategies {
            let mut buf = Vec::new();
            write_score_csv(&table.records(*s), &mut buf)?;
            write_atomic(&out_dir.join(format!("scores_{}.csv", s.name())), &buf)?;
        }
    }
    for (id, trace) in extras.traces {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        write_atomic(&out_dir.join(format!("trace_{id}.csv")), &buf)?;
    }
    for (name, rows) in extras.features {
        let dim = rows.first().map_or(0, |r| r.1.len());
        let mut header = vec!["sample_id".to_string()];
        header.extend((0..dim).map(|j| format!("f{j}")));
        header.push("is_member".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let bytes = csv_bytes(
            &header,
            rows.iter().map(|(id, f, m)| {
                std::iter::once(id.to_string())
                    .chain(f.iter().map(|v| v.to_string()))
                    .chain(std::iter::once(m.to_string()))
                    .collect()
            }),
        )?;
        write_atomic(&out_dir.join(format!("features_{name}.csv")), &bytes)?;
    }
    Ok(())
}
