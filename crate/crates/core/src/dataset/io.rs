//! Dataset files: one CSV row per sample plus a JSON sidecar with provenance.
//!
//! CSV columns, in order: `pd_<bus id>` for every bus, `qd_<bus id>` (AC only),
//! `pg_<k>` for the k-th in-service generator, `vm_<bus id>` for every
//! generator bus (AC only), `objective`, `feasible`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{DatasetError, OpfDataset, OpfSample, ProblemKind};
use crate::case::NetworkCase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub case_name: String,
    pub kind: ProblemKind,
    pub seed: u64,
    pub sigma: f64,
    pub n_raw: usize,
    pub retention_rate: f64,
    /// Seconds since the Unix epoch.
    pub created: u64,
    pub solve_times: Vec<f64>,
}

/// `data.csv` → `data.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn header(case: &NetworkCase, kind: ProblemKind) -> Vec<String> {
    let mut h: Vec<String> = case.buses.iter().map(|b| format!("pd_{}", b.id)).collect();
    if kind == ProblemKind::AC {
        h.extend(case.buses.iter().map(|b| format!("qd_{}", b.id)));
    }
    h.extend((1..=case.n_active_gen()).map(|k| format!("pg_{k}")));
    if kind == ProblemKind::AC {
        h.extend(
            case.generator_buses()
                .iter()
                .map(|&b| format!("vm_{}", case.buses[b].id)),
        );
    }
    h.push("objective".into());
    h.push("feasible".into());
    h
}

pub fn write_dataset(ds: &OpfDataset, case: &NetworkCase, path: &Path) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(case, ds.kind))?;
    for s in &ds.samples {
        let mut row: Vec<String> = s
            .pd
            .iter()
            .chain(&s.qd)
            .chain(&s.label_pg)
            .chain(&s.label_vm)
            .map(|v| v.to_string())
            .collect();
        row.push(s.objective.to_string());
        row.push(s.feasible.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    let meta = DatasetMeta {
        case_name: ds.case_name.clone(),
        kind: ds.kind,
        seed: ds.rng_seed,
        sigma: ds.perturbation_sigma,
        n_raw: ds.n_raw,
        retention_rate: ds.retention_rate,
        created: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        solve_times: ds.samples.iter().map(|s| s.solve_time).collect(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn count_prefix(cols: &[String], prefix: &str) -> usize {
    cols.iter().filter(|c| c.starts_with(prefix)).count()
}

/// Reads a dataset file and validates it against `case`. Provenance comes
/// from the sidecar when one is present.
pub fn ingest_labels(case: &NetworkCase, path: &Path) -> Result<OpfDataset, DatasetError> {
    let mut r = csv::Reader::from_path(path)?;
    let cols: Vec<String> = r.headers()?.iter().map(str::to_string).collect();

    let n_pd = count_prefix(&cols, "pd_");
    if n_pd != case.n_bus() {
        return Err(DatasetError::DimensionMismatch {
            what: "pd columns",
            expected: case.n_bus(),
            got: n_pd,
        });
    }
    let kind = if count_prefix(&cols, "qd_") > 0 || count_prefix(&cols, "vm_") > 0 {
        ProblemKind::AC
    } else {
        ProblemKind::DC
    };
    let expected = header(case, kind);
    if cols != expected {
        let missing: Vec<&String> = expected.iter().filter(|c| !cols.contains(c)).collect();
        let extra: Vec<&String> = cols.iter().filter(|c| !expected.contains(c)).collect();
        return Err(DatasetError::SchemaMismatch(format!(
            "missing {missing:?}, unexpected {extra:?}"
        )));
    }

    let n = case.n_bus();
    let ng = case.n_active_gen();
    let nv = if kind == ProblemKind::AC {
        case.generator_buses().len()
    } else {
        0
    };
    let nq = if kind == ProblemKind::AC { n } else { 0 };
    let mut samples = Vec::new();
    for (row_no, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |c: usize| {
            DatasetError::SchemaMismatch(format!("row {}: bad value in column {}", row_no + 2, cols[c]))
        };
        let mut vals = Vec::with_capacity(rec.len() - 1);
        for (c, field) in rec.iter().take(rec.len() - 1).enumerate() {
            vals.push(field.trim().parse::<f64>().map_err(|_| bad(c))?);
        }
        let feasible = match rec[rec.len() - 1].trim() {
            "true" | "1" => true,
            "false" | "0" => false,
            _ => return Err(bad(rec.len() - 1)),
        };
        let mut at = 0;
        let mut take = |k: usize| {
            let v = vals[at..at + k].to_vec();
            at += k;
            v
        };
        let pd = take(n);
        let qd = take(nq);
        let label_pg = take(ng);
        let label_vm = take(nv);
        let objective = take(1)[0];
        samples.push(OpfSample {
            pd,
            qd,
            label_pg,
            label_vm,
            objective,
            feasible,
            solve_time: 0.0,
        });
    }

    let meta_path = sidecar_path(path);
    let meta: Option<DatasetMeta> = if meta_path.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?)
    } else {
        None
    };
    if let Some(m) = &meta {
        if m.kind != kind {
            return Err(DatasetError::SchemaMismatch(format!(
                "sidecar says {} but columns describe {kind}",
                m.kind
            )));
        }
        if m.solve_times.len() == samples.len() {
            for (s, &t) in samples.iter_mut().zip(&m.solve_times) {
                s.solve_time = t;
            }
        }
    }
    let n_samples = samples.len();
    Ok(OpfDataset {
        case_name: meta
            .as_ref()
            .map_or_else(|| case.name.clone(), |m| m.case_name.clone()),
        kind,
        samples,
        rng_seed: meta.as_ref().map_or(0, |m| m.seed),
        perturbation_sigma: meta.as_ref().map_or(0.0, |m| m.sigma),
        n_raw: meta.as_ref().map_or(n_samples, |m| m.n_raw),
        retention_rate: meta.as_ref().map_or(1.0, |m| m.retention_rate),
    })
}
