//! Data- and compute-scaling sweeps: configuration, the run queue, and the
//! artifacts written for each sweep.

mod plot;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CaseLoadError, CaseVariant, NetworkCase};
use crate::dataset::{
    build_dataset, ingest_labels, BuildOptions, DatasetError, OpfDataset, OpfSample, ProblemKind,
};
use crate::metrics::MetricReport;
use crate::training::{arch_for, KktWeights, Regime, RunRecord, TrainConfig, TrainError, TrainJob};

pub use plot::{emit_plot_data, svg_loglog};
pub use report::{
    build_report, load_records, regenerate, write_report, Manifest, ManifestEntry, SweepKind,
    SweepReport,
};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Case(#[from] CaseLoadError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SweepError {
    pub fn is_config(&self) -> bool {
        matches!(self, SweepError::Config(_))
    }
}

/// 1–4 hidden layers × widths {32, …, 1024}, equal width per layer.
pub fn default_arch_grid() -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for depth in 1..=4 {
        for width in [32, 64, 128, 256, 512, 1024] {
            out.push(vec![width; depth]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Bundled case name (`case14`) or path to a MATPOWER file.
    pub case_path: String,
    pub variant: CaseVariant,
    pub problem: ProblemKind,
    pub regime: Regime,
    /// Training-set sizes of the data-scaling sweep.
    pub data_sizes: Vec<usize>,
    /// Hidden layers of each compute-scaling architecture.
    pub archs: Vec<Vec<usize>>,
    /// Checkpoint epochs of the compute-scaling sweep.
    pub epoch_grid: Vec<usize>,
    /// Architecture and epochs held fixed in the data-scaling sweep.
    pub arch: Vec<usize>,
    pub epochs: usize,
    /// Training-set size held fixed in the compute-scaling sweep.
    pub dataset_size: usize,
    /// Held-out samples shared by every run.
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub batch_size: Option<usize>,
    pub lr: f64,
    pub w_phys: f64,
    pub kkt_weights: KktWeights,
    pub fd_step: f64,
    pub penalty_samples: Option<usize>,
    /// Load perturbation σ and seed when the dataset is generated.
    pub sigma: f64,
    pub data_seed: u64,
    /// Labels CSV to use instead of generating.
    pub dataset_path: Option<String>,
    /// Architecture of the diminishing-returns table; defaults to the first of `archs`.
    pub designated_arch: Option<Vec<usize>>,
    /// Metric of the frontier, diminishing-returns table and compute fit.
    pub metric: String,
    pub output_dir: String,
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let train = TrainConfig::new(Regime::DnnDc);
        SweepConfig {
            case_path: "case14".into(),
            variant: CaseVariant::Typical,
            problem: ProblemKind::DC,
            regime: Regime::DnnDc,
            data_sizes: vec![100, 1000, 10000, 40000],
            archs: default_arch_grid(),
            epoch_grid: vec![60, 300, 1000, 1500, 5000],
            arch: vec![128, 128],
            epochs: 1000,
            dataset_size: 1000,
            n_test: 200,
            seeds: vec![0],
            batch_size: None,
            lr: train.lr,
            w_phys: train.w_phys,
            kkt_weights: train.kkt_weights,
            fd_step: train.fd_step,
            penalty_samples: None,
            sigma: 0.1,
            data_seed: 0,
            dataset_path: None,
            designated_arch: None,
            metric: "mae_pg_pct".into(),
            output_dir: "sweep-out".into(),
            workers: 1,
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, SweepError> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| SweepError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SweepError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self, kind: SweepKind) -> Result<(), SweepError> {
        let bad = |m: &str| Err(SweepError::Config(m.into()));
        if self.regime.kind() != self.problem {
            return bad("regime does not match problem kind");
        }
        if self.seeds.is_empty() {
            return bad("seeds is empty");
        }
        if self.n_test == 0 {
            return bad("n_test must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if MetricReport::default().get(&self.metric).is_none() {
            return bad(&format!("unknown metric {:?}", self.metric));
        }
        match kind {
            SweepKind::Data => {
                if self.data_sizes.is_empty() || self.data_sizes.contains(&0) {
                    return bad("data_sizes must be non-empty and positive");
                }
                if self.epochs == 0 {
                    return bad("epochs must be positive");
                }
            }
            SweepKind::Compute => {
                if self.archs.is_empty() || self.epoch_grid.is_empty() || self.epoch_grid.contains(&0) {
                    return bad("archs and epoch_grid must be non-empty and positive");
                }
                if self.dataset_size == 0 {
                    return bad("dataset_size must be positive");
                }
            }
        }
        self.train_config(0)
            .validate()
            .map_err(|e| SweepError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut c = TrainConfig::new(self.regime);
        if let Some(b) = self.batch_size {
            c.batch_size = b;
        }
        c.lr = self.lr;
        c.w_phys = self.w_phys;
        c.kkt_weights = self.kkt_weights;
        c.fd_step = self.fd_step;
        c.penalty_samples = self.penalty_samples;
        c.seed = seed;
        c.epochs = self.epochs;
        c
    }

    pub fn designated(&self) -> Vec<usize> {
        self.designated_arch
            .clone()
            .unwrap_or_else(|| self.archs.first().cloned().unwrap_or_default())
    }

    pub fn load_case(&self) -> Result<NetworkCase, SweepError> {
        load_case(&self.case_path, self.variant)
    }
}

/// Resolves a bundled name for the requested variant, or reads a file path.
pub fn load_case(path_or_name: &str, variant: CaseVariant) -> Result<NetworkCase, SweepError> {
    if crate::case::bundled(path_or_name).is_some() {
        return match variant.resolve(path_or_name) {
            Some(text) => Ok(crate::case::parse_case(text).map_err(CaseLoadError::from)?),
            None => Err(SweepError::Config(format!(
                "only the typical variant of {path_or_name} is bundled; pass a file path for {variant:?}"
            ))),
        };
    }
    Ok(NetworkCase::load(path_or_name)?)
}

/// A fixed test set (the last `n_test` feasible samples) and the pool that
/// training sets are drawn from, in draw order.
pub struct SweepData {
    pub dataset: OpfDataset,
    pub n_test: usize,
}

impl SweepData {
    pub fn test(&self) -> Vec<&OpfSample> {
        let f: Vec<&OpfSample> = self.dataset.feasible().collect();
        f[f.len() - self.n_test..].to_vec()
    }

    pub fn train(&self, n: usize) -> Vec<&OpfSample> {
        self.dataset.feasible().take(n).collect()
    }

    pub fn pool_size(&self) -> usize {
        self.dataset.n_feasible() - self.n_test
    }
}

/// Loads or generates enough feasible samples for `n_train` training plus
/// the test set.
pub fn prepare_data(
    case: &NetworkCase,
    cfg: &SweepConfig,
    n_train: usize,
) -> Result<SweepData, SweepError> {
    let need = n_train + cfg.n_test;
    let dataset = match &cfg.dataset_path {
        Some(p) => ingest_labels(case, Path::new(p))?,
        None => {
            let n_raw = need + need / 20 + 10;
            build_dataset(
                case,
                cfg.problem,
                &BuildOptions {
                    n_raw,
                    sigma: cfg.sigma,
                    seed: cfg.data_seed,
                    min_retained: need,
                    ..Default::default()
                },
            )?
        }
    };
    if dataset.kind != cfg.problem {
        return Err(SweepError::Config(format!(
            "dataset is {} but the sweep is {}",
            dataset.kind, cfg.problem
        )));
    }
    if dataset.n_feasible() < need {
        return Err(DatasetError::TooFewFeasible {
            retained: dataset.n_feasible(),
            required: need,
        }
        .into());
    }
    Ok(SweepData {
        dataset,
        n_test: cfg.n_test,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, SweepError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SweepError::Config(e.to_string()))
}

fn save_run(dir: &Path, record: &RunRecord) -> Result<(), SweepError> {
    let runs = dir.join("runs");
    std::fs::create_dir_all(&runs)?;
    std::fs::write(runs.join(format!("{}.json", record.id)), record.to_json())?;
    std::fs::write(runs.join(format!("{}.loss.csv", record.id)), record.loss_curve_csv())?;
    Ok(())
}

/// One model per (data size, seed) at fixed architecture and epochs.
pub fn run_data_scaling(cfg: &SweepConfig) -> Result<SweepReport, SweepError> {
    cfg.validate(SweepKind::Data)?;
    let case = cfg.load_case()?;
    let max = *cfg.data_sizes.iter().max().expect("validated");
    let data = prepare_data(&case, cfg, max)?;
    let test = data.test();
    let jobs: Vec<(usize, u64)> = cfg
        .data_sizes
        .iter()
        .flat_map(|&d| cfg.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let out = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out)?;
    let records: Vec<RunRecord> = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(d, seed)| -> Result<RunRecord, SweepError> {
                let arch = arch_for(&case, cfg.problem, &cfg.arch, seed);
                let job = TrainJob::new(&case, data.train(d), test.clone(), arch, cfg.train_config(seed));
                let run = job.run()?.pop().expect("final checkpoint");
                log::info!("finished {}", run.record.id);
                save_run(&out, &run.record)?;
                Ok(run.record)
            })
            .collect::<Result<_, _>>()
    })?;
    let report = build_report(SweepKind::Data, cfg, records);
    write_report(&report, &out)?;
    Ok(report)
}

/// Every architecture in the grid at a fixed dataset size, scored at each
/// epoch checkpoint of a single run per (architecture, seed).
pub fn run_compute_scaling(cfg: &SweepConfig) -> Result<SweepReport, SweepError> {
    cfg.validate(SweepKind::Compute)?;
    let case = cfg.load_case()?;
    let data = prepare_data(&case, cfg, cfg.dataset_size)?;
    let test = data.test();
    let max_epochs = *cfg.epoch_grid.iter().max().expect("validated");
    let jobs: Vec<(&Vec<usize>, u64)> = cfg
        .archs
        .iter()
        .flat_map(|a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let out = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out)?;
    let nested: Vec<Vec<RunRecord>> = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(hidden, seed)| -> Result<Vec<RunRecord>, SweepError> {
                let arch = arch_for(&case, cfg.problem, hidden, seed);
                let mut tc = cfg.train_config(seed);
                tc.epochs = max_epochs;
                let mut job = TrainJob::new(&case, data.train(cfg.dataset_size), test.clone(), arch, tc);
                job.checkpoints = cfg.epoch_grid.clone();
                let runs = job.run()?;
                let mut recs = Vec::with_capacity(runs.len());
                for r in runs {
                    save_run(&out, &r.record)?;
                    recs.push(r.record);
                }
                log::info!("finished {:?} seed {seed}", hidden);
                Ok(recs)
            })
            .collect::<Result<_, _>>()
    })?;
    let report = build_report(SweepKind::Compute, cfg, nested.into_iter().flatten().collect());
    write_report(&report, &out)?;
    Ok(report)
}
