//! Training regimes: supervised DNNs for DC and AC OPF, a KKT-regularised
//! primal/dual pair for DC, and an AC-power-flow replay penalty for AC.
//!
//! All regimes share one minibatch Adam loop on MSE in min–max scaled label
//! space. Shuffling for epoch `e` draws from stream `e` of the run seed, so a
//! checkpoint taken after `e` epochs equals a run trained for exactly `e`.

mod pinn;

use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::NetworkCase;
use crate::dataset::{OpfDataset, OpfSample, ProblemKind};
use crate::metrics::{Evaluator, MetricReport, MetricsError};
use crate::neural::{
    adam_step, count_flops, total_training_flops, AdamHyper, AdamState, MinMaxScaler, MlpConfig,
    MlpModel, NeuralError, StandardScaler, Surrogate,
};
use crate::powerflow::{AcpfOptions, PowerFlowError};

pub use pinn::{physics_penalty, AcPenaltyContext, PenaltyEval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    DnnDc,
    DnnAc,
    PinnDc,
    PinnAc,
}

impl Regime {
    pub fn kind(self) -> ProblemKind {
        match self {
            Regime::DnnDc | Regime::PinnDc => ProblemKind::DC,
            Regime::DnnAc | Regime::PinnAc => ProblemKind::AC,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::DnnDc => "dnn-dc",
            Regime::DnnAc => "dnn-ac",
            Regime::PinnDc => "pinn-dc",
            Regime::PinnAc => "pinn-ac",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dnn-dc" | "dnndc" => Ok(Regime::DnnDc),
            "dnn-ac" | "dnnac" => Ok(Regime::DnnAc),
            "pinn-dc" | "pinndc" => Ok(Regime::PinnDc),
            "pinn-ac" | "pinnac" => Ok(Regime::PinnAc),
            _ => Err(format!("unknown regime {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktWeights {
    pub w_stat: f64,
    pub w_comp: f64,
    pub w_feas: f64,
}

impl Default for KktWeights {
    fn default() -> Self {
        KktWeights {
            w_stat: 1e-2,
            w_comp: 1e-1,
            w_feas: 1e2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: Regime,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Weight of the power-flow replay penalty (AC physics-informed regime).
    pub w_phys: f64,
    pub kkt_weights: KktWeights,
    /// Finite-difference step of the replay penalty, p.u.
    pub fd_step: f64,
    pub seed: u64,
    /// Share of feasible samples used for training when splitting a dataset.
    pub train_fraction: f64,
    /// Replay only the first `k` samples of each batch; `None` replays all.
    pub penalty_samples: Option<usize>,
}

impl TrainConfig {
    pub fn new(regime: Regime) -> Self {
        TrainConfig {
            regime,
            epochs: 1000,
            batch_size: match regime.kind() {
                ProblemKind::DC => 128,
                ProblemKind::AC => 200,
            },
            lr: 1e-3,
            w_phys: 0.1,
            kkt_weights: KktWeights::default(),
            fd_step: 1e-4,
            seed: 0,
            train_fraction: 0.9,
            penalty_samples: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let w = &self.kkt_weights;
        if self.epochs == 0
            || self.batch_size == 0
            || !(self.lr > 0.0)
            || self.w_phys < 0.0
            || w.w_stat < 0.0
            || w.w_comp < 0.0
            || w.w_feas < 0.0
            || !(self.fd_step > 0.0)
            || !(self.train_fraction > 0.0 && self.train_fraction <= 1.0)
        {
            return Err(TrainError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub case_name: String,
    pub config: TrainConfig,
    pub arch: MlpConfig,
    /// Training samples.
    pub dataset_size: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub flops_total: f64,
    /// Seconds.
    pub train_time: f64,
    /// Seconds per sample.
    pub inference_time_per_sample: f64,
    pub metrics: MetricReport,
    /// `(epoch, mean training loss)`.
    pub loss_curve: Vec<(usize, f64)>,
    /// Power-flow replays that failed to converge inside the penalty.
    #[serde(default)]
    pub penalty_divergences: usize,
}

impl RunRecord {
    pub fn tflops(&self) -> f64 {
        self.flops_total / 1e12
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn loss_curve_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in &self.loss_curve {
            out.push_str(&format!("{e},{l}\n"));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no feasible training samples")]
    EmptyDataset,
    #[error("regime {regime:?} needs a {expected} dataset, got {got}")]
    KindMismatch {
        regime: Regime,
        expected: ProblemKind,
        got: ProblemKind,
    },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

/// A trained model, its provenance, and for the DC physics-informed regime
/// the multiplier network.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub surrogate: Surrogate,
    pub dual: Option<MlpModel>,
    pub record: RunRecord,
}

/// Network input for a sample: loads, and for AC reactive loads after them.
pub fn features(sample: &OpfSample, kind: ProblemKind) -> Vec<f64> {
    match kind {
        ProblemKind::DC => sample.pd.clone(),
        ProblemKind::AC => sample.pd.iter().chain(&sample.qd).copied().collect(),
    }
}

/// Network target for a sample: dispatch, and for AC generator-bus voltages.
pub fn targets(sample: &OpfSample, kind: ProblemKind) -> Vec<f64> {
    match kind {
        ProblemKind::DC => sample.label_pg.clone(),
        ProblemKind::AC => sample.label_pg.iter().chain(&sample.label_vm).copied().collect(),
    }
}

/// `(input_dim, output_dim)` of surrogates for `case`.
pub fn io_dims(case: &NetworkCase, kind: ProblemKind) -> (usize, usize) {
    match kind {
        ProblemKind::DC => (case.n_bus(), case.n_active_gen()),
        ProblemKind::AC => (
            2 * case.n_bus(),
            case.n_active_gen() + case.generator_buses().len(),
        ),
    }
}

pub fn arch_for(case: &NetworkCase, kind: ProblemKind, hidden: &[usize], seed: u64) -> MlpConfig {
    let (i, o) = io_dims(case, kind);
    MlpConfig::new(i, hidden, o, seed)
}

fn matrix(rows: Vec<Vec<f64>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    Array2::from_shape_vec((n, width), rows.concat()).expect("rows share a width")
}

/// Average wall-clock of single-sample forward passes over `inputs` (scaled
/// network inputs, one per row). Ten warm-up passes are excluded; fewer than
/// 100 rows are cycled until 100 passes have been timed.
pub fn measure_inference_time(model: &MlpModel, inputs: ArrayView2<f64>) -> f64 {
    let n = inputs.nrows();
    if n == 0 {
        return f64::NAN;
    }
    let rows: Vec<Vec<f64>> = inputs.rows().into_iter().map(|r| r.to_vec()).collect();
    for r in rows.iter().cycle().take(10) {
        std::hint::black_box(model.forward_one(r).ok());
    }
    let passes = n.max(100);
    let t = Instant::now();
    for r in rows.iter().cycle().take(passes) {
        std::hint::black_box(model.forward_one(std::hint::black_box(r)).ok());
    }
    t.elapsed().as_secs_f64() / passes as f64
}

/// One training run over explicit train/test sets.
pub struct TrainJob<'a> {
    pub case: &'a NetworkCase,
    pub train: Vec<&'a OpfSample>,
    pub test: Vec<&'a OpfSample>,
    pub arch: MlpConfig,
    /// Multiplier network for [`Regime::PinnDc`]; input and output widths are
    /// filled in automatically.
    pub dual_hidden: Vec<usize>,
    pub config: TrainConfig,
    /// Epochs at which to snapshot and score the model, in addition to the last.
    pub checkpoints: Vec<usize>,
    /// Skip test-set scoring (metrics left at their defaults).
    pub skip_metrics: bool,
}

impl<'a> TrainJob<'a> {
    pub fn new(
        case: &'a NetworkCase,
        train: Vec<&'a OpfSample>,
        test: Vec<&'a OpfSample>,
        arch: MlpConfig,
        config: TrainConfig,
    ) -> Self {
        TrainJob {
            case,
            train,
            test,
            dual_hidden: arch.hidden.clone(),
            arch,
            config,
            checkpoints: vec![],
            skip_metrics: false,
        }
    }

    /// Trains and returns one result per checkpoint, in epoch order; the last
    /// entry is the final model.
    pub fn run(&self) -> Result<Vec<TrainedRun>, TrainError> {
        let cfg = &self.config;
        cfg.validate()?;
        let kind = cfg.regime.kind();
        if self.train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let (in_dim, out_dim) = io_dims(self.case, kind);
        let check = |expected: usize, got: usize| {
            if expected != got {
                Err(NeuralError::DimensionMismatch { expected, got })
            } else {
                Ok(())
            }
        };
        check(in_dim, self.arch.input_dim)?;
        check(out_dim, self.arch.output_dim)?;
        for s in self.train.iter().chain(&self.test) {
            check(in_dim, features(s, kind).len())?;
            check(out_dim, targets(s, kind).len())?;
        }

        let x_raw = matrix(self.train.iter().map(|s| features(s, kind)).collect(), in_dim);
        let y_raw = matrix(self.train.iter().map(|s| targets(s, kind)).collect(), out_dim);
        let input_scaler = StandardScaler::fit(x_raw.view());
        let output_scaler = MinMaxScaler::fit(y_raw.view());
        let x = input_scaler.transform(x_raw.view());
        let y = output_scaler.transform(y_raw.view());

        let mut model = MlpModel::new(self.arch.clone())?;
        let hyper = AdamHyper {
            lr: cfg.lr,
            ..Default::default()
        };
        let mut adam = AdamState::new(&model);

        let mut kkt = match cfg.regime {
            Regime::PinnDc => Some(pinn::KktTerms::new(
                self.case,
                &self.dual_hidden,
                in_dim,
                cfg,
                &output_scaler,
            )?),
            _ => None,
        };
        let penalty_ctx = match cfg.regime {
            Regime::PinnAc if cfg.w_phys > 0.0 => Some(AcPenaltyContext::new(
                self.case,
                cfg.fd_step,
                AcpfOptions::default(),
            )?),
            _ => None,
        };
        let mut running_max = 0.0f64;
        let mut divergences = 0usize;

        let evaluator = if self.skip_metrics {
            None
        } else {
            Some(Evaluator::new(self.case)?)
        };
        let test_x_raw = matrix(self.test.iter().map(|s| features(s, kind)).collect(), in_dim);
        let test_x = input_scaler.transform(test_x_raw.view());

        let mut stops: Vec<usize> = self
            .checkpoints
            .iter()
            .copied()
            .filter(|&e| e >= 1 && e < cfg.epochs)
            .collect();
        stops.push(cfg.epochs);
        stops.sort_unstable();
        stops.dedup();

        let n = self.train.len();
        let flops_forward = count_flops(&self.arch);
        let mut loss_curve = Vec::with_capacity(cfg.epochs);
        let mut out = Vec::with_capacity(stops.len());
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();

        for epoch in 1..=cfg.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(epoch as u64);
            order.sort_unstable();
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let xb = x.select(Axis(0), chunk);
                let yb = y.select(Axis(0), chunk);
                let pred = model.forward_cached(xb.view())?;
                let b = chunk.len() as f64;
                let k = out_dim as f64;
                let diff = &pred - &yb;
                let mut loss = diff.mapv(|d| d * d).sum() / (b * k);
                let mut grad = diff * (2.0 / (b * k));

                if let Some(terms) = kkt.as_mut() {
                    loss += terms.apply(&xb, &pred, &mut grad, &hyper)?;
                }
                if let Some(ctx) = &penalty_ctx {
                    let raw_pred = output_scaler.inverse(pred.view());
                    let take = cfg.penalty_samples.unwrap_or(chunk.len()).min(chunk.len());
                    let evals = ctx.evaluate_batch(&raw_pred, &chunk[..take], &self.train);
                    for (row, ev) in evals.iter().enumerate() {
                        let value = match (&ev.grad, ev.converged) {
                            (Some(g), true) => {
                                for (j, gj) in g.iter().enumerate() {
                                    grad[(row, j)] +=
                                        cfg.w_phys * gj * output_scaler.range[j] / b;
                                }
                                running_max = running_max.max(ev.value);
                                ev.value
                            }
                            _ => {
                                divergences += 1;
                                10.0 * running_max.max(1.0)
                            }
                        };
                        loss += cfg.w_phys * value / b;
                    }
                }

                let grads = model.backward(grad.view())?;
                adam_step(&mut model, &grads, &mut adam, &hyper);
                epoch_loss += loss * b;
            }
            loss_curve.push((epoch, epoch_loss / n as f64));

            if stops.contains(&epoch) {
                let train_time = started.elapsed().as_secs_f64();
                let surrogate = Surrogate {
                    case_name: self.case.name.clone(),
                    kind,
                    model: model.clone(),
                    input_scaler: input_scaler.clone(),
                    output_scaler: output_scaler.clone(),
                    metrics: None,
                };
                let metrics = match (&evaluator, self.test.is_empty()) {
                    (Some(ev), false) => {
                        let pred = surrogate.predict(test_x_raw.view())?;
                        match kind {
                            ProblemKind::DC => ev.evaluate_dc(pred.view(), &self.test)?,
                            ProblemKind::AC => ev.evaluate_ac(pred.view(), &self.test)?,
                        }
                    }
                    _ => MetricReport::default(),
                };
                let inference = if self.test.is_empty() {
                    measure_inference_time(&model, x.slice(s![..n.min(100), ..]))
                } else {
                    measure_inference_time(&model, test_x.view())
                };
                let mut config = cfg.clone();
                config.epochs = epoch;
                let record = RunRecord {
                    id: run_id(&self.case.name, cfg.regime, &self.arch, n, epoch, cfg.seed),
                    case_name: self.case.name.clone(),
                    config,
                    arch: self.arch.clone(),
                    dataset_size: n,
                    n_test: self.test.len(),
                    epochs: epoch,
                    flops_total: total_training_flops(flops_forward, n as u64, epoch as u64) as f64,
                    train_time,
                    inference_time_per_sample: inference,
                    metrics: metrics.clone(),
                    loss_curve: loss_curve.clone(),
                    penalty_divergences: divergences,
                };
                out.push(TrainedRun {
                    surrogate: Surrogate {
                        metrics: Some(metrics),
                        ..surrogate
                    },
                    dual: kkt.as_ref().map(|t| t.dual.clone()),
                    record,
                });
            }
        }
        Ok(out)
    }
}

/// Stable identifier of a run, used to cross-reference artifacts.
pub fn run_id(case: &str, regime: Regime, arch: &MlpConfig, n_train: usize, epochs: usize, seed: u64) -> String {
    format!(
        "{case}-{}-{}-n{n_train}-e{epochs}-s{seed}",
        regime.label(),
        arch.arch_label()
    )
}

fn split_job<'a>(
    case: &'a NetworkCase,
    dataset: &'a OpfDataset,
    arch: MlpConfig,
    config: &TrainConfig,
) -> Result<TrainJob<'a>, TrainError> {
    if dataset.kind != config.regime.kind() {
        return Err(TrainError::KindMismatch {
            regime: config.regime,
            expected: config.regime.kind(),
            got: dataset.kind,
        });
    }
    let (train, test) = dataset.split(config.train_fraction, config.seed);
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    Ok(TrainJob::new(case, train, test, arch, config.clone()))
}

fn single(job: TrainJob) -> Result<TrainedRun, TrainError> {
    Ok(job.run()?.pop().expect("final checkpoint"))
}

/// Supervised training on a 90/10 split (by default) of the dataset's feasible samples.
pub fn train_dnn(
    case: &NetworkCase,
    dataset: &OpfDataset,
    arch: MlpConfig,
    config: &TrainConfig,
) -> Result<TrainedRun, TrainError> {
    single(split_job(case, dataset, arch, config)?)
}

/// Primal and multiplier networks trained jointly on MSE plus KKT residuals.
pub fn train_pinn_dc(
    case: &NetworkCase,
    dataset: &OpfDataset,
    arch_primal: MlpConfig,
    dual_hidden: &[usize],
    config: &TrainConfig,
) -> Result<TrainedRun, TrainError> {
    let mut job = split_job(case, dataset, arch_primal, config)?;
    job.dual_hidden = dual_hidden.to_vec();
    single(job)
}

/// MSE plus the weighted power-flow replay penalty.
pub fn train_pinn_ac(
    case: &NetworkCase,
    dataset: &OpfDataset,
    arch: MlpConfig,
    config: &TrainConfig,
) -> Result<TrainedRun, TrainError> {
    single(split_job(case, dataset, arch, config)?)
}
