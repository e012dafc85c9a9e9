//! Sweep reports. Everything here is a pure function of the saved run
//! records and the sweep configuration, so a report regenerated from disk
//! matches the original byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{plot, SweepConfig, SweepError};
use crate::dataset::ProblemKind;
use crate::metrics::MetricReport;
use crate::scaling::{
    diminishing_returns_for, efficiency_frontier, fit_power_law, mean_by_x, positive_only,
    DiminishingRow, FitSummary, Frontier, Observation, ObservationTags, PowerLawFit,
};
use crate::training::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Data,
    Compute,
}

impl SweepKind {
    pub fn resource(self) -> &'static str {
        match self {
            SweepKind::Data => "samples",
            SweepKind::Compute => "tflops",
        }
    }
}

/// One fitted law with the per-run observations behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLaw {
    pub summary: FitSummary,
    pub fit: PowerLawFit,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub config: SweepConfig,
    pub records: Vec<RunRecord>,
    pub fits: Vec<FittedLaw>,
    pub frontier: Option<Frontier>,
    pub diminishing: Option<Vec<DiminishingRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: SweepKind,
    pub case: String,
    pub runs: Vec<String>,
    pub files: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct SavedSweep {
    kind: SweepKind,
    config: SweepConfig,
}

fn families(problem: ProblemKind) -> Vec<&'static str> {
    match problem {
        ProblemKind::DC => vec!["mae_pg_pct", "pg_viol_mw", "branch_viol_pct"],
        ProblemKind::AC => MetricReport::default().named().iter().map(|(n, _)| *n).collect(),
    }
}

fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        (a.dataset_size, &a.arch.hidden, a.epochs, a.config.seed, &a.id).cmp(&(
            b.dataset_size,
            &b.arch.hidden,
            b.epochs,
            b.config.seed,
            &b.id,
        ))
    });
}

fn observations(kind: SweepKind, records: &[RunRecord], metric: &str) -> Vec<Observation> {
    records
        .iter()
        .map(|r| Observation {
            x: match kind {
                SweepKind::Data => r.dataset_size as f64,
                SweepKind::Compute => r.tflops(),
            },
            m: r.metrics.get(metric).unwrap_or(f64::NAN),
            tags: ObservationTags {
                run_id: r.id.clone(),
                case: r.case_name.clone(),
                regime: r.config.regime.label().into(),
                arch: r.arch.arch_label(),
                seed: r.config.seed,
            },
        })
        .collect()
}

/// Fits, frontier and tables for a set of runs. Replicates are averaged per
/// resource value before fitting; metrics that are zero everywhere (or have
/// fewer than three distinct resource values) are left unfitted.
pub fn build_report(kind: SweepKind, config: &SweepConfig, mut records: Vec<RunRecord>) -> SweepReport {
    sort_records(&mut records);
    let mut fits = Vec::new();
    for metric in families(config.problem) {
        let obs = positive_only(&observations(kind, &records, metric));
        let means = mean_by_x(&obs);
        if means.len() < 3 {
            log::info!("not fitting {metric}: {} distinct positive points", means.len());
            continue;
        }
        match fit_power_law(&means) {
            Ok(fit) => fits.push(FittedLaw {
                summary: FitSummary::new(metric, kind.resource(), &fit),
                fit,
                observations: obs,
            }),
            Err(e) => log::warn!("fit of {metric} failed: {e}"),
        }
    }

    let (frontier, diminishing) = match kind {
        SweepKind::Data => (None, None),
        SweepKind::Compute => {
            let frontier = efficiency_frontier(&records, &config.metric).ok();
            let designated = config.designated();
            let seed = config.seeds.first().copied().unwrap_or(0);
            let rows: Vec<RunRecord> = records
                .iter()
                .filter(|r| r.arch.hidden == designated && r.config.seed == seed)
                .cloned()
                .collect();
            (frontier, diminishing_returns_for(&rows, &config.metric).ok())
        }
    };
    SweepReport {
        kind,
        config: config.clone(),
        records,
        fits,
        frontier,
        diminishing,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn metrics_csv(records: &[RunRecord]) -> String {
    let mut s = format!(
        "run_id,regime,arch,n_train,epochs,seed,tflops,{}\n",
        MetricReport::CSV_HEADER
    );
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.id,
            r.config.regime.label(),
            r.arch.arch_label(),
            r.dataset_size,
            r.epochs,
            r.config.seed,
            r.tflops(),
            r.metrics.csv_row()
        );
    }
    s
}

fn timings_csv(records: &[RunRecord]) -> String {
    let mut s = String::from("run_id,train_time_s,inference_time_per_sample_s\n");
    for r in records {
        let _ = writeln!(s, "{},{},{}", r.id, r.train_time, r.inference_time_per_sample);
    }
    s
}

fn fits_csv(fits: &[FittedLaw]) -> String {
    let mut s = format!("{}\n", FitSummary::CSV_HEADER);
    for f in fits {
        let _ = writeln!(s, "{}", f.summary.csv_row());
    }
    s
}

/// Mean of every metric per training-set size.
fn data_table(records: &[RunRecord]) -> String {
    let names: Vec<&str> = MetricReport::default().named().iter().map(|(n, _)| *n).collect();
    let mut s = format!("n_train,n_runs,{}\n", names.join(","));
    let mut i = 0;
    while i < records.len() {
        let d = records[i].dataset_size;
        let group: Vec<&RunRecord> = records[i..].iter().take_while(|r| r.dataset_size == d).collect();
        let means: Vec<String> = names
            .iter()
            .map(|n| {
                let sum: f64 = group.iter().map(|r| r.metrics.get(n).unwrap_or(0.0)).sum();
                (sum / group.len() as f64).to_string()
            })
            .collect();
        let _ = writeln!(s, "{d},{},{}", group.len(), means.join(","));
        i += group.len();
    }
    s
}

fn frontier_csv(f: &Frontier) -> String {
    let mut s = String::from("set,run_id,arch,epochs,tflops,metric\n");
    let mut put = |set: &str, p: &crate::scaling::FrontierPoint| {
        let _ = writeln!(
            s,
            "{set},{},{},{},{},{}",
            p.run_id,
            p.arch.arch_label(),
            p.epochs,
            p.flops_total / 1e12,
            p.best_metric
        );
    };
    for p in &f.envelope {
        put("envelope", p);
    }
    for p in &f.per_arch_best {
        put("arch_best", p);
    }
    if let Some(p) = &f.global_min {
        put("global_min", p);
    }
    s
}

fn isoloss_csv(records: &[RunRecord], metric: &str) -> String {
    let mut s = String::from("run_id,arch,params,tflops,metric\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.id,
            r.arch.arch_label(),
            r.arch.parameter_count(),
            r.tflops(),
            r.metrics.get(metric).unwrap_or(f64::NAN)
        );
    }
    s
}

fn diminishing_csv(rows: &[DiminishingRow]) -> String {
    let mut s = String::from("epochs,metric,tflops,d_tflops,d_metric,efficiency\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.epochs,
            r.metric,
            r.tflops,
            opt(r.d_tflops),
            opt(r.d_metric),
            opt(r.efficiency)
        );
    }
    s
}

pub(crate) fn put(
    dir: &Path,
    files: &mut Vec<ManifestEntry>,
    name: &str,
    description: &str,
    contents: &str,
) -> Result<(), SweepError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    files.push(ManifestEntry {
        path: name.into(),
        description: description.into(),
    });
    Ok(())
}

/// Writes every report table, the plot data and `manifest.json` into `dir`.
pub fn write_report(report: &SweepReport, dir: &Path) -> Result<Manifest, SweepError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let saved = SavedSweep {
        kind: report.kind,
        config: report.config.clone(),
    };
    put(dir, &mut files, "sweep.json", "sweep kind and configuration", &serde_json::to_string_pretty(&saved)?)?;
    put(dir, &mut files, "metrics.csv", "one metric row per run (no timing columns)", &metrics_csv(&report.records))?;
    put(dir, &mut files, "timings.csv", "wall-clock training and inference times per run", &timings_csv(&report.records))?;
    put(dir, &mut files, "fits.csv", "power-law fits per metric", &fits_csv(&report.fits))?;
    let summaries: Vec<&FitSummary> = report.fits.iter().map(|f| &f.summary).collect();
    put(dir, &mut files, "fits.json", "power-law fits per metric", &serde_json::to_string_pretty(&summaries)?)?;
    match report.kind {
        SweepKind::Data => {
            put(dir, &mut files, "table.csv", "mean metrics per training-set size", &data_table(&report.records))?;
        }
        SweepKind::Compute => {
            if let Some(f) = &report.frontier {
                put(dir, &mut files, "frontier.csv", "efficiency frontier, per-architecture bests and global minimum", &frontier_csv(f))?;
                put(dir, &mut files, "frontier.json", "efficiency frontier", &serde_json::to_string_pretty(f)?)?;
            }
            put(dir, &mut files, "isoloss.csv", "parameters, compute and metric per run", &isoloss_csv(&report.records, &report.config.metric))?;
            if let Some(rows) = &report.diminishing {
                put(dir, &mut files, "diminishing.csv", "marginal metric change per TFLOP for the designated architecture", &diminishing_csv(rows))?;
            }
        }
    }
    files.extend(plot::emit_plot_data(report, dir)?);
    for r in &report.records {
        files.push(ManifestEntry {
            path: format!("runs/{}.json", r.id),
            description: "run record".into(),
        });
    }
    let manifest = Manifest {
        kind: report.kind,
        case: report
            .records
            .first()
            .map(|r| r.case_name.clone())
            .unwrap_or_default(),
        runs: report.records.iter().map(|r| r.id.clone()).collect(),
        files,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads `runs/*.json` under `dir`.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, SweepError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir.join("runs"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(RunRecord::from_json(&std::fs::read_to_string(p)?)?))
        .collect()
}

/// Rebuilds the report of a finished sweep from its saved records, without retraining.
pub fn regenerate(dir: &Path) -> Result<SweepReport, SweepError> {
    let saved: SavedSweep = serde_json::from_str(&std::fs::read_to_string(dir.join("sweep.json"))?)?;
    let report = build_report(saved.kind, &saved.config, load_records(dir)?);
    write_report(&report, dir)?;
    Ok(report)
}
