//! Labelled OPF datasets: perturbed loads, DCOPF and ACOPF labels,
//! feasibility filtering, splitting, and CSV exchange.

mod acopf;
mod dcopf;
mod io;
pub mod qp;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::NetworkCase;
use crate::powerflow::{Loads, PowerFlowError};

pub use acopf::{solve_acopf_labels, AcopfOptions, AcopfOutcome, AcopfSolver};
pub use dcopf::{solve_dcopf, DcopfOutcome, DcopfSolver};
pub use io::{ingest_labels, sidecar_path, write_dataset, DatasetMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    DC,
    AC,
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProblemKind::DC => "DC",
            ProblemKind::AC => "AC",
        })
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DC" => Ok(ProblemKind::DC),
            "AC" => Ok(ProblemKind::AC),
            _ => Err(format!("unknown problem kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSample {
    /// MW per bus.
    pub pd: Vec<f64>,
    /// MVAr per bus; empty for DC.
    pub qd: Vec<f64>,
    /// MW per active generator.
    pub label_pg: Vec<f64>,
    /// p.u. per generator bus; empty for DC.
    pub label_vm: Vec<f64>,
    /// $/h.
    pub objective: f64,
    pub feasible: bool,
    /// Seconds.
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfDataset {
    pub case_name: String,
    pub kind: ProblemKind,
    pub samples: Vec<OpfSample>,
    pub rng_seed: u64,
    pub perturbation_sigma: f64,
    /// Load draws attempted before filtering.
    pub n_raw: usize,
    pub retention_rate: f64,
}

impl OpfDataset {
    pub fn feasible(&self) -> impl Iterator<Item = &OpfSample> {
        self.samples.iter().filter(|s| s.feasible)
    }

    pub fn n_feasible(&self) -> usize {
        self.feasible().count()
    }

    /// Splits feasible samples into disjoint train/test sets. The first
    /// `round(train_fraction·n)` samples after a seeded shuffle form the
    /// training set.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Vec<&OpfSample>, Vec<&OpfSample>) {
        use rand::seq::SliceRandom;
        let mut all: Vec<&OpfSample> = self.feasible().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        all.shuffle(&mut rng);
        let n_train = ((all.len() as f64) * train_fraction).round() as usize;
        let test = all.split_off(n_train.min(all.len()));
        (all, test)
    }

    /// First `n` feasible samples; keeps nested size sweeps consistent.
    pub fn truncated(&self, n: usize) -> OpfDataset {
        OpfDataset {
            samples: self.feasible().take(n).cloned().collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("sigma must lie in (0, 1), got {0}")]
    InvalidSigma(f64),
    #[error("at least one sample must be requested")]
    EmptyRequest,
    #[error("AC power flow does not converge at the case-file setpoints")]
    InitialPointDiverged,
    #[error("only {retained} feasible samples, {required} required")]
    TooFewFeasible { retained: usize, required: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("dimension mismatch: {what} expects {expected}, file has {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// Load draw `index` of the stream keyed by `seed`. Each bus gets its own
/// factor `1 + sigma·N(0,1)`, applied to active and reactive load alike.
pub fn perturb_one(case: &NetworkCase, sigma: f64, seed: u64, index: u64) -> Loads {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut pd = Vec::with_capacity(case.n_bus());
    let mut qd = Vec::with_capacity(case.n_bus());
    for bus in &case.buses {
        let z: f64 = rng.sample(StandardNormal);
        let f = 1.0 + sigma * z;
        pd.push(bus.pd * f);
        qd.push(bus.qd * f);
    }
    Loads { pd, qd }
}

pub fn perturb_loads(
    case: &NetworkCase,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<Loads>, DatasetError> {
    if n == 0 {
        return Err(DatasetError::EmptyRequest);
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(DatasetError::InvalidSigma(sigma));
    }
    Ok((0..n as u64)
        .map(|i| perturb_one(case, sigma, seed, i))
        .collect())
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub n_raw: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Fail when fewer feasible samples survive.
    pub min_retained: usize,
    pub acopf: AcopfOptions,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            n_raw: 1000,
            sigma: 0.1,
            seed: 0,
            min_retained: 1,
            acopf: AcopfOptions::default(),
        }
    }
}

/// Draws `n_raw` load scenarios, labels each one, and keeps the feasible ones.
/// Sample solves run on the global rayon pool; results are collected in draw
/// order, so the output does not depend on the worker count.
pub fn build_dataset(
    case: &NetworkCase,
    kind: ProblemKind,
    opts: &BuildOptions,
) -> Result<OpfDataset, DatasetError> {
    let loads = perturb_loads(case, opts.n_raw, opts.sigma, opts.seed)?;
    let samples: Vec<OpfSample> = match kind {
        ProblemKind::DC => {
            let solver = DcopfSolver::new(case)?;
            loads
                .par_iter()
                .map(|l| {
                    let t = Instant::now();
                    let mut s = solver.solve(&l.pd).sample;
                    s.solve_time = t.elapsed().as_secs_f64();
                    s
                })
                .collect()
        }
        ProblemKind::AC => {
            let solver = AcopfSolver::new(case, opts.acopf.clone())?;
            loads
                .par_iter()
                .map(|l| {
                    let t = Instant::now();
                    let mut s = match solver.solve(l) {
                        Ok(out) => out.sample,
                        Err(_) => OpfSample {
                            pd: l.pd.clone(),
                            qd: l.qd.clone(),
                            label_pg: vec![],
                            label_vm: vec![],
                            objective: f64::NAN,
                            feasible: false,
                            solve_time: 0.0,
                        },
                    };
                    s.solve_time = t.elapsed().as_secs_f64();
                    s
                })
                .collect()
        }
    };
    let kept: Vec<OpfSample> = samples.into_iter().filter(|s| s.feasible).collect();
    if kept.len() < opts.min_retained {
        return Err(DatasetError::TooFewFeasible {
            retained: kept.len(),
            required: opts.min_retained,
        });
    }
    log::info!(
        "{} {kind} dataset: kept {} of {} draws",
        case.name,
        kept.len(),
        opts.n_raw
    );
    Ok(OpfDataset {
        case_name: case.name.clone(),
        kind,
        retention_rate: kept.len() as f64 / opts.n_raw as f64,
        samples: kept,
        rng_seed: opts.seed,
        perturbation_sigma: opts.sigma,
        n_raw: opts.n_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{bundled, parse_case};
    use crate::metrics::violations_dc;
    use crate::powerflow::DcModel;
    use sha2::{Digest, Sha256};

    fn case14() -> NetworkCase {
        parse_case(bundled("case14").unwrap()).unwrap()
    }

    #[test]
    fn degenerate_sigma_returns_nominal() {
        let case = case14();
        let loads = perturb_loads(&case, 5, 1e-12, 3).unwrap();
        for l in loads {
            for (a, b) in l.pd.iter().zip(case.pd()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn perturbation_statistics() {
        let case = parse_case(crate::case::tests::two_bus_text()).unwrap();
        let n = 1000;
        let loads = perturb_loads(&case, n, 0.1, 11).unwrap();
        // bus 2 carries 50 MW; rescale to a 100 MW nominal
        let x: Vec<f64> = loads.iter().map(|l| l.pd[1] * 2.0).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        // 3σ bands for the sample mean and standard deviation at n = 1000
        let mean_band = 3.0 * 10.0 / (n as f64).sqrt();
        let std_band = 3.0 * 10.0 / (2.0 * (n as f64 - 1.0)).sqrt();
        assert!((mean - 100.0).abs() < mean_band.min(1.0), "mean {mean}");
        assert!((std - 10.0).abs() < std_band.min(1.0), "std {std}");
        // constant power factor
        for l in &loads {
            assert!((l.qd[1] / l.pd[1] - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_is_deterministic_and_order_free() {
        let case = case14();
        let a = perturb_loads(&case, 20, 0.1, 5).unwrap();
        let b = perturb_loads(&case, 20, 0.1, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(perturb_one(&case, 0.1, 5, 17), a[17]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn invalid_perturbation_requests() {
        let case = case14();
        assert!(matches!(
            perturb_loads(&case, 0, 0.1, 0),
            Err(DatasetError::EmptyRequest)
        ));
        assert!(matches!(
            perturb_loads(&case, 3, 1.5, 0),
            Err(DatasetError::InvalidSigma(_))
        ));
    }

    fn file_hash(ds: &OpfDataset, case: &NetworkCase) -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(ds, case, &path).unwrap();
        Sha256::digest(std::fs::read(&path).unwrap()).to_vec()
    }

    #[test]
    fn dc_dataset_retention_schema_and_hash() {
        let case = case14();
        let opts = BuildOptions {
            n_raw: 100,
            seed: 1,
            ..Default::default()
        };
        let ds = build_dataset(&case, ProblemKind::DC, &opts).unwrap();
        assert!(ds.retention_rate >= 0.95, "retention {}", ds.retention_rate);
        let model = DcModel::new(&case).unwrap();
        for s in &ds.samples {
            assert!(s.qd.is_empty() && s.label_vm.is_empty());
            assert_eq!(s.label_pg.len(), case.n_active_gen());
            let v = violations_dc(&case, &model, &s.label_pg, &s.pd).unwrap();
            assert!(v.pg.iter().all(|&x| x <= 1e-6));
        }
        let again = build_dataset(&case, ProblemKind::DC, &opts).unwrap();
        assert_eq!(file_hash(&ds, &case), file_hash(&again, &case));
    }

    #[test]
    fn too_few_feasible() {
        let case = case14();
        let opts = BuildOptions {
            n_raw: 3,
            min_retained: 10,
            ..Default::default()
        };
        assert!(matches!(
            build_dataset(&case, ProblemKind::DC, &opts),
            Err(DatasetError::TooFewFeasible {
                retained: 3,
                required: 10
            })
        ));
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let case = case14();
        let ds = build_dataset(
            &case,
            ProblemKind::DC,
            &BuildOptions {
                n_raw: 50,
                ..Default::default()
            },
        )
        .unwrap();
        let (train, test) = ds.split(0.9, 4);
        assert_eq!(train.len() + test.len(), ds.n_feasible());
        assert_eq!(train.len(), 45);
        for t in &test {
            assert!(!train.iter().any(|s| std::ptr::eq(*s, *t)));
        }
    }
}
