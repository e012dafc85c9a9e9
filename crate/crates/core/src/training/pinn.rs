//! Physics terms of the two physics-informed regimes.

use ndarray::Array2;
use rayon::prelude::*;

use super::{KktWeights, TrainConfig, TrainError};
use crate::case::{Generator, NetworkCase};
use crate::dataset::OpfSample;
use crate::metrics::AcViolations;
use crate::neural::{adam_step, AdamHyper, AdamState, MinMaxScaler, MlpConfig, MlpModel};
use crate::powerflow::{AcModel, AcSetpoints, AcpfOptions, Loads, PowerFlowError};

fn softplus(a: f64) -> f64 {
    if a > 30.0 {
        a
    } else {
        a.exp().ln_1p()
    }
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// KKT residuals of the DC problem in p.u. with cost normalised so the
/// steepest marginal cost at capacity equals one.
///
/// Multiplier network outputs per sample: `[λ, raw μ_up per gen, raw μ_lo per gen]`,
/// with `μ = softplus(raw)`.
pub(crate) struct KktTerms {
    pub dual: MlpModel,
    adam: AdamState,
    weights: KktWeights,
    gens: Vec<Generator>,
    base: f64,
    cost_scale: f64,
    out_min: Vec<f64>,
    out_range: Vec<f64>,
}

impl KktTerms {
    pub fn new(
        case: &NetworkCase,
        hidden: &[usize],
        input_dim: usize,
        cfg: &TrainConfig,
        output_scaler: &MinMaxScaler,
    ) -> Result<Self, TrainError> {
        let gens: Vec<Generator> = case
            .active_generators()
            .iter()
            .map(|&g| case.generators[g].clone())
            .collect();
        let ng = gens.len();
        let dual = MlpModel::new(MlpConfig::new(
            input_dim,
            hidden,
            1 + 2 * ng,
            cfg.seed.wrapping_add(0x9e37_79b9),
        ))?;
        let base = case.base_mva;
        let steepest = gens
            .iter()
            .map(|g| g.marginal_cost_at(g.pmax).abs() * base)
            .fold(0.0, f64::max);
        Ok(KktTerms {
            adam: AdamState::new(&dual),
            dual,
            weights: cfg.kkt_weights,
            gens,
            base,
            cost_scale: if steepest > 0.0 { steepest } else { 1.0 },
            out_min: output_scaler.min.clone(),
            out_range: output_scaler.range.clone(),
        })
    }

    /// Adds the KKT terms' gradient (w.r.t. scaled primal outputs) into
    /// `grad`, steps the multiplier network, and returns the batch-mean loss.
    pub fn apply(
        &mut self,
        xb: &Array2<f64>,
        pred: &Array2<f64>,
        grad: &mut Array2<f64>,
        hyper: &AdamHyper,
    ) -> Result<f64, TrainError> {
        let ng = self.gens.len();
        let b = xb.nrows() as f64;
        let w = self.weights;
        let duals = self.dual.forward_cached(xb.view())?;
        let mut dgrad = Array2::<f64>::zeros(duals.dim());
        let mut loss = 0.0;
        for r in 0..xb.nrows() {
            let lambda = duals[(r, 0)];
            for j in 0..ng {
                let g = &self.gens[j];
                let p_mw = self.out_min[j] + self.out_range[j] * pred[(r, j)];
                let p = p_mw / self.base;
                let fp = g.marginal_cost_at(p_mw) * self.base / self.cost_scale;
                let (c2, _) = g.quadratic_terms();
                let fpp = 2.0 * c2 * self.base * self.base / self.cost_scale;
                let (au, al) = (duals[(r, 1 + j)], duals[(r, 1 + ng + j)]);
                let (mu, ml) = (softplus(au), softplus(al));
                let gu = p - g.pmax / self.base;
                let gl = g.pmin / self.base - p;
                let res = fp - lambda + mu - ml;
                let (vu, vl) = (gu.max(0.0), gl.max(0.0));
                loss += (w.w_stat * res * res
                    + w.w_comp * ((mu * gu).powi(2) + (ml * gl).powi(2))
                    + w.w_feas * (vu * vu + vl * vl))
                    / b;

                let dp = (w.w_stat * 2.0 * res * fpp
                    + w.w_comp * 2.0 * (mu * mu * gu - ml * ml * gl)
                    + w.w_feas * 2.0 * (vu - vl))
                    / b;
                grad[(r, j)] += dp * self.out_range[j] / self.base;
                dgrad[(r, 0)] -= w.w_stat * 2.0 * res / b;
                dgrad[(r, 1 + j)] =
                    (w.w_stat * 2.0 * res + w.w_comp * 2.0 * mu * gu * gu) * sigmoid(au) / b;
                dgrad[(r, 1 + ng + j)] =
                    (-w.w_stat * 2.0 * res + w.w_comp * 2.0 * ml * gl * gl) * sigmoid(al) / b;
            }
        }
        let grads = self.dual.backward(dgrad.view())?;
        adam_step(&mut self.dual, &grads, &mut self.adam, hyper);
        Ok(loss)
    }
}

/// Penalty value at one prediction and, when the replay converged, its
/// gradient w.r.t. the raw outputs (per MW for dispatch, per p.u. for voltage).
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyEval {
    pub value: f64,
    pub grad: Option<Vec<f64>>,
    pub converged: bool,
}

/// Summed limit violations in per-unit: MW and MVAr over the system base,
/// branch overloads as a fraction of rating.
pub fn physics_penalty(v: &AcViolations, base_mva: f64) -> f64 {
    let pq: f64 = v.pg.iter().chain(&v.qg).sum();
    let vm: f64 = v.vm.iter().sum();
    let br: f64 = v.branch_pct.iter().sum();
    pq / base_mva + vm + br / 100.0
}

/// Replays predicted setpoints through AC power flow and scores them by
/// [`physics_penalty`].
pub struct AcPenaltyContext {
    case: NetworkCase,
    model: AcModel,
    n_gen: usize,
    slack_gen: Option<usize>,
    /// p.u.
    pub fd_step: f64,
    pub acpf: AcpfOptions,
}

impl AcPenaltyContext {
    pub fn new(case: &NetworkCase, fd_step: f64, acpf: AcpfOptions) -> Result<Self, PowerFlowError> {
        Ok(AcPenaltyContext {
            model: AcModel::new(case)?,
            n_gen: case.n_active_gen(),
            slack_gen: case.slack_generator(),
            case: case.clone(),
            fd_step,
            acpf,
        })
    }

    fn setpoints(&self, u: &[f64]) -> AcSetpoints {
        AcSetpoints {
            pg: u[..self.n_gen].to_vec(),
            vm: u[self.n_gen..].to_vec(),
        }
    }

    /// `u` is one raw output row `[pg (MW) per active gen, vm (p.u.) per gen bus]`.
    /// Central differences per coordinate, one-sided when a neighbour
    /// diverges, zero when both do. The slack unit's dispatch does not enter
    /// the replay and gets a zero derivative.
    pub fn evaluate(&self, u: &[f64], loads: &Loads) -> PenaltyEval {
        let sp = self.setpoints(u);
        let base = match self.model.solve(&sp, loads, &self.acpf) {
            Ok(sol) if sol.converged => sol,
            _ => {
                return PenaltyEval {
                    value: f64::NAN,
                    grad: None,
                    converged: false,
                }
            }
        };
        let value = physics_penalty(&AcViolations::from_solution(&self.case, &base), self.case.base_mva);
        let warm = base.voltages();
        let at = |v: &[f64]| -> Option<f64> {
            let sol = self
                .model
                .solve_from(&self.setpoints(v), loads, &self.acpf, Some(&warm))
                .ok()?;
            sol.converged
                .then(|| physics_penalty(&AcViolations::from_solution(&self.case, &sol), self.case.base_mva))
        };
        let mut grad = vec![0.0; u.len()];
        let mut v = u.to_vec();
        for j in 0..u.len() {
            if Some(j) == self.slack_gen {
                continue;
            }
            let h = if j < self.n_gen {
                self.fd_step * self.case.base_mva
            } else {
                self.fd_step
            };
            v[j] = u[j] + h;
            let up = at(&v);
            v[j] = u[j] - h;
            let down = at(&v);
            v[j] = u[j];
            grad[j] = match (up, down) {
                (Some(a), Some(c)) => (a - c) / (2.0 * h),
                (Some(a), None) => (a - value) / h,
                (None, Some(c)) => (value - c) / h,
                (None, None) => 0.0,
            };
        }
        PenaltyEval {
            value,
            grad: Some(grad),
            converged: true,
        }
    }

    /// Evaluates row `k` of `raw_pred` against the loads of `train[rows[k]]`;
    /// the result keeps `rows` order.
    pub fn evaluate_batch(
        &self,
        raw_pred: &Array2<f64>,
        rows: &[usize],
        train: &[&OpfSample],
    ) -> Vec<PenaltyEval> {
        rows.par_iter()
            .enumerate()
            .map(|(k, &i)| {
                let s = train[i];
                let loads = Loads {
                    pd: s.pd.clone(),
                    qd: s.qd.clone(),
                };
                self.evaluate(&raw_pred.row(k).to_vec(), &loads)
            })
            .collect()
    }
}
