//! Accuracy and feasibility metrics for OPF surrogates.
//!
//! Accuracy is a percentage MAE normalised by the mean absolute ground truth
//! of each variable family. Feasibility is measured per family as the mean,
//! over test samples, of the worst single-component violation in each sample.
//! AC predictions are replayed through Newton–Raphson power flow first; DC
//! predictions are checked directly, with branch flows from DC power flow.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::NetworkCase;
use crate::dataset::OpfSample;
use crate::powerflow::{
    branch_apparent_flows, AcModel, AcSetpoints, AcpfOptions, AcpfSolution, DcModel, Loads,
    PowerFlowError,
};

/// Guards the MAE denominator.
pub const MAE_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: prediction {pred:?} vs truth {truth:?}")]
    ShapeMismatch {
        pred: (usize, usize),
        truth: (usize, usize),
    },
    #[error("no samples to evaluate")]
    Empty,
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

/// Percentage MAE over `N` samples (rows). The per-sample numerator is the
/// mean absolute deviation across the row; the denominator is the mean
/// absolute ground truth over the whole matrix.
pub fn mae_percent(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64, MetricsError> {
    if pred.dim() != truth.dim() {
        return Err(MetricsError::ShapeMismatch {
            pred: pred.dim(),
            truth: truth.dim(),
        });
    }
    let (n, k) = truth.dim();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    if k == 0 {
        return Ok(0.0);
    }
    let mean_abs_truth = truth.iter().map(|v| v.abs()).sum::<f64>() / (n * k) as f64;
    let numerator = (&pred - &truth)
        .mapv(f64::abs)
        .mean_axis(Axis(1))
        .expect("non-empty rows")
        .sum()
        / n as f64;
    Ok(numerator / (mean_abs_truth + MAE_EPSILON) * 100.0)
}

/// Amount by which `x` leaves `[lo, hi]`.
pub fn limit_violation(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(0.0) + (x - hi).max(0.0)
}

/// Overload of a branch in percent of its rating.
pub fn branch_violation_pct(flow: f64, s_max: f64) -> f64 {
    ((flow / s_max) - 1.0).max(0.0) * 100.0
}

/// Mean over samples of the largest component in each sample. Samples with no
/// components contribute zero.
pub fn mean_max_aggregate(per_sample: &[Vec<f64>]) -> f64 {
    if per_sample.is_empty() {
        return 0.0;
    }
    per_sample
        .iter()
        .map(|row| row.iter().copied().fold(0.0f64, f64::max))
        .sum::<f64>()
        / per_sample.len() as f64
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DcViolations {
    /// MW per active generator.
    pub pg: Vec<f64>,
    /// Percent per rated in-service branch.
    pub branch_pct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AcViolations {
    /// MW per active generator; non-slack entries are the setpoint's own box violation.
    pub pg: Vec<f64>,
    /// MVAr per active generator.
    pub qg: Vec<f64>,
    /// p.u. per bus.
    pub vm: Vec<f64>,
    /// Percent per rated in-service branch.
    pub branch_pct: Vec<f64>,
}

impl AcViolations {
    pub fn from_solution(case: &NetworkCase, sol: &AcpfSolution) -> Self {
        let gens: Vec<_> = case
            .active_generators()
            .iter()
            .map(|&g| &case.generators[g])
            .collect();
        let flows = branch_apparent_flows(sol);
        AcViolations {
            pg: gens
                .iter()
                .zip(&sol.pg)
                .map(|(g, &p)| limit_violation(p, g.pmin, g.pmax))
                .collect(),
            qg: gens
                .iter()
                .zip(&sol.qg)
                .map(|(g, &q)| limit_violation(q, g.qmin, g.qmax))
                .collect(),
            vm: case
                .buses
                .iter()
                .zip(&sol.vm)
                .map(|(b, &v)| limit_violation(v, b.vmin, b.vmax))
                .collect(),
            branch_pct: case
                .in_service_branches()
                .filter(|(_, br)| br.is_rated())
                .map(|(l, br)| branch_violation_pct(flows[l], br.s_max))
                .collect(),
        }
    }

    /// Sum of every component, each in its reporting unit.
    pub fn total(&self) -> f64 {
        self.pg.iter().chain(&self.qg).chain(&self.vm).chain(&self.branch_pct).sum()
    }
}

/// Replays predicted setpoints through AC power flow. `None` when the replay
/// does not converge.
pub fn violations_ac(
    case: &NetworkCase,
    model: &AcModel,
    setpoints: &AcSetpoints,
    loads: &Loads,
    options: &AcpfOptions,
) -> Result<Option<AcViolations>, MetricsError> {
    let sol = model.solve(setpoints, loads, options)?;
    Ok(sol
        .converged
        .then(|| AcViolations::from_solution(case, &sol)))
}

/// Box violations of a predicted dispatch and branch overloads of the DC flow
/// it induces, with the slack bus absorbing any imbalance.
pub fn violations_dc(
    case: &NetworkCase,
    model: &DcModel,
    pg: &[f64],
    pd: &[f64],
) -> Result<DcViolations, MetricsError> {
    let sol = model.solve(pg, pd)?;
    let pg_viol = case
        .active_generators()
        .iter()
        .zip(pg)
        .map(|(&g, &p)| {
            let gen = &case.generators[g];
            limit_violation(p, gen.pmin, gen.pmax)
        })
        .collect();
    let branch_pct = case
        .in_service_branches()
        .filter(|(_, br)| br.is_rated())
        .map(|(l, br)| branch_violation_pct(sol.branch_p[l].abs(), br.s_max))
        .collect();
    Ok(DcViolations {
        pg: pg_viol,
        branch_pct,
    })
}

/// Summary metrics of a surrogate on a test split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae_pg_pct: f64,
    pub mae_vm_pct: f64,
    /// MW.
    pub mean_max_pg_violation: f64,
    /// MVAr.
    pub mean_max_qg_violation: f64,
    /// p.u.
    pub mean_max_vm_violation: f64,
    pub mean_max_branch_violation_pct: f64,
    pub n_test: usize,
    pub n_acpf_diverged: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "n_test,mae_pg_pct,mae_vm_pct,pg_viol_mw,qg_viol_mvar,vm_viol_pu,branch_viol_pct,n_acpf_diverged";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n_test,
            self.mae_pg_pct,
            self.mae_vm_pct,
            self.mean_max_pg_violation,
            self.mean_max_qg_violation,
            self.mean_max_vm_violation,
            self.mean_max_branch_violation_pct,
            self.n_acpf_diverged
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Named scalar metrics in reporting order.
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("mae_pg_pct", self.mae_pg_pct),
            ("mae_vm_pct", self.mae_vm_pct),
            ("pg_viol_mw", self.mean_max_pg_violation),
            ("qg_viol_mvar", self.mean_max_qg_violation),
            ("vm_viol_pu", self.mean_max_vm_violation),
            ("branch_viol_pct", self.mean_max_branch_violation_pct),
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.named().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }
}

/// Scores surrogate predictions against labelled samples.
pub struct Evaluator<'a> {
    case: &'a NetworkCase,
    dc: DcModel,
    ac: AcModel,
    pub acpf: AcpfOptions,
}

impl<'a> Evaluator<'a> {
    pub fn new(case: &'a NetworkCase) -> Result<Self, MetricsError> {
        Ok(Evaluator {
            case,
            dc: DcModel::new(case)?,
            ac: AcModel::new(case)?,
            acpf: AcpfOptions::default(),
        })
    }

    /// `pred` holds one dispatch (MW per active generator) per row.
    pub fn evaluate_dc(
        &self,
        pred: ArrayView2<f64>,
        samples: &[&OpfSample],
    ) -> Result<MetricReport, MetricsError> {
        let truth = label_matrix(samples, false);
        let mae = mae_percent(pred, truth.view())?;
        let mut pg = Vec::with_capacity(samples.len());
        let mut br = Vec::with_capacity(samples.len());
        for (row, s) in pred.rows().into_iter().zip(samples) {
            let v = violations_dc(self.case, &self.dc, &row.to_vec(), &s.pd)?;
            pg.push(v.pg);
            br.push(v.branch_pct);
        }
        Ok(MetricReport {
            mae_pg_pct: mae,
            mean_max_pg_violation: mean_max_aggregate(&pg),
            mean_max_branch_violation_pct: mean_max_aggregate(&br),
            n_test: samples.len(),
            ..Default::default()
        })
    }

    /// `pred` rows are `[pg per active generator (MW), vm per generator bus (p.u.)]`.
    pub fn evaluate_ac(
        &self,
        pred: ArrayView2<f64>,
        samples: &[&OpfSample],
    ) -> Result<MetricReport, MetricsError> {
        let n_gen = self.case.n_active_gen();
        let truth = label_matrix(samples, true);
        if pred.dim() != truth.dim() {
            return Err(MetricsError::ShapeMismatch {
                pred: pred.dim(),
                truth: truth.dim(),
            });
        }
        let mae_pg = mae_percent(
            pred.slice(ndarray::s![.., ..n_gen]),
            truth.slice(ndarray::s![.., ..n_gen]),
        )?;
        let mae_vm = mae_percent(
            pred.slice(ndarray::s![.., n_gen..]),
            truth.slice(ndarray::s![.., n_gen..]),
        )?;
        let (mut pg, mut qg, mut vm, mut br) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut diverged = 0;
        for (row, s) in pred.rows().into_iter().zip(samples) {
            let row = row.to_vec();
            let setpoints = AcSetpoints {
                pg: row[..n_gen].to_vec(),
                vm: row[n_gen..].to_vec(),
            };
            let loads = Loads {
                pd: s.pd.clone(),
                qd: s.qd.clone(),
            };
            match violations_ac(self.case, &self.ac, &setpoints, &loads, &self.acpf)? {
                Some(v) => {
                    pg.push(v.pg);
                    qg.push(v.qg);
                    vm.push(v.vm);
                    br.push(v.branch_pct);
                }
                None => diverged += 1,
            }
        }
        Ok(MetricReport {
            mae_pg_pct: mae_pg,
            mae_vm_pct: mae_vm,
            mean_max_pg_violation: mean_max_aggregate(&pg),
            mean_max_qg_violation: mean_max_aggregate(&qg),
            mean_max_vm_violation: mean_max_aggregate(&vm),
            mean_max_branch_violation_pct: mean_max_aggregate(&br),
            n_test: samples.len(),
            n_acpf_diverged: diverged,
        })
    }
}

/// Ground-truth outputs, one row per sample: `pg`, followed by `vm` when `ac`.
pub fn label_matrix(samples: &[&OpfSample], ac: bool) -> ndarray::Array2<f64> {
    let width = samples
        .first()
        .map(|s| s.label_pg.len() + if ac { s.label_vm.len() } else { 0 })
        .unwrap_or(0);
    let mut out = ndarray::Array2::zeros((samples.len(), width));
    for (mut row, s) in out.rows_mut().into_iter().zip(samples) {
        let vals = s
            .label_pg
            .iter()
            .chain(if ac { s.label_vm.iter() } else { [].iter() });
        for (dst, v) in row.iter_mut().zip(vals) {
            *dst = *v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{bundled, parse_case};
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn mae_hand_values() {
        let t = array![[100.0], [100.0]];
        let p = array![[101.0], [99.0]];
        assert!((mae_percent(p.view(), t.view()).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(mae_percent(t.view(), t.view()).unwrap(), 0.0);
        let z = array![[0.0, 0.0]];
        assert_eq!(mae_percent(z.view(), z.view()).unwrap(), 0.0);
        assert!(matches!(
            mae_percent(z.view(), t.view()),
            Err(MetricsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn limit_and_branch_arithmetic() {
        assert_eq!(limit_violation(5.0, 0.0, 10.0), 0.0);
        assert_eq!(limit_violation(15.0, 0.0, 10.0), 5.0);
        assert_eq!(limit_violation(-2.0, 0.0, 10.0), 2.0);
        assert!((branch_violation_pct(110.0, 100.0) - 10.0).abs() < 1e-9);
        assert_eq!(branch_violation_pct(90.0, 100.0), 0.0);
    }

    #[test]
    fn mean_max_hand_values() {
        assert_eq!(mean_max_aggregate(&[vec![0.0, 0.0], vec![0.0]]), 0.0);
        assert_eq!(mean_max_aggregate(&[vec![0.0, 3.0], vec![1.0, 1.0]]), 2.0);
    }

    #[test]
    fn dc_violations() {
        let case = parse_case(bundled("case30").unwrap()).unwrap();
        let model = DcModel::new(&case).unwrap();
        let gens = case.active_generators();
        // midpoints on an unloaded network: balance is absorbed at the slack
        let mid: Vec<f64> = gens
            .iter()
            .map(|&g| 0.5 * (case.generators[g].pmin + case.generators[g].pmax))
            .collect();
        let total: f64 = mid.iter().sum();
        let mut pd = vec![0.0; case.n_bus()];
        pd[case.slack_bus()] = total;
        let v = violations_dc(&case, &model, &mid, &pd).unwrap();
        assert!(v.pg.iter().all(|&x| x == 0.0));
        let mut over = mid.clone();
        over[2] = case.generators[gens[2]].pmax + 10.0;
        let v = violations_dc(&case, &model, &over, &pd).unwrap();
        assert!((v.pg[2] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn dc_branch_overload_percent() {
        let case = parse_case(crate::case::tests::two_bus_text()).unwrap();
        let mut case = case;
        case.branches[0].s_max = 100.0;
        let mut g = case.generators[0].clone();
        g.bus_id = 2;
        case.generators.push(g);
        let model = DcModel::new(&case).unwrap();
        let v = violations_dc(&case, &model, &[0.0, 110.0], &[110.0, 0.0]).unwrap();
        assert!((v.branch_pct[0] - 10.0).abs() < 1e-9);
    }

    /// Violations recomputed component by component from the raw solution.
    #[test]
    fn ac_violations_match_componentwise_oracle() {
        let case = parse_case(bundled("case14").unwrap()).unwrap();
        let model = AcModel::new(&case).unwrap();
        let mut sp = AcSetpoints::from_case(&case);
        sp.pg[1] = 150.0; // beyond gen 2's 140 MW
        sp.vm[0] = 1.07;
        let loads = Loads::from_case(&case);
        let sol = model.solve(&sp, &loads, &AcpfOptions::default()).unwrap();
        let v = violations_ac(&case, &model, &sp, &loads, &AcpfOptions::default())
            .unwrap()
            .unwrap();
        for (k, &g) in case.active_generators().iter().enumerate() {
            let gen = &case.generators[g];
            let pg = sol.pg[k];
            let expect_p = if pg < gen.pmin {
                gen.pmin - pg
            } else if pg > gen.pmax {
                pg - gen.pmax
            } else {
                0.0
            };
            assert_eq!(v.pg[k], expect_p);
            let q = sol.qg[k];
            let expect_q = if q < gen.qmin {
                gen.qmin - q
            } else if q > gen.qmax {
                q - gen.qmax
            } else {
                0.0
            };
            assert_eq!(v.qg[k], expect_q);
        }
        assert!((v.pg[1] - 10.0).abs() < 1e-12);
        for (b, bus) in case.buses.iter().enumerate() {
            let vm = sol.vm[b];
            let expect = if vm > bus.vmax {
                vm - bus.vmax
            } else if vm < bus.vmin {
                bus.vmin - vm
            } else {
                0.0
            };
            assert_eq!(v.vm[b], expect);
        }
        assert!(v.vm[0] > 0.0);
    }

    proptest! {
        #[test]
        fn mae_is_scale_invariant(
            rows in prop::collection::vec(prop::collection::vec(1.0f64..100.0, 3), 1..8),
            noise in prop::collection::vec(-1.0f64..1.0, 24),
            c in 0.1f64..10.0,
        ) {
            let n = rows.len();
            let truth = ndarray::Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
            let pred = ndarray::Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j] + noise[(i * 3 + j) % 24]);
            let a = mae_percent(pred.view(), truth.view()).unwrap();
            let b = mae_percent((&pred * c).view(), (&truth * c).view()).unwrap();
            // ε/ȳ ≤ 1e-7 here, so the guard term shifts the ratio by at most that much
            prop_assert!((a - b).abs() <= 1e-6 * a + 1e-12);
        }

        #[test]
        fn mean_max_matches_two_loop_reference(
            data in prop::collection::vec(prop::collection::vec(0.0f64..50.0, 0..6), 1..20)
        ) {
            let mut total = 0.0;
            for row in &data {
                let mut worst = 0.0;
                for &v in row {
                    if v > worst {
                        worst = v;
                    }
                }
                total += worst;
            }
            let reference = total / data.len() as f64;
            prop_assert_eq!(mean_max_aggregate(&data), reference);
            let global = data.iter().flatten().copied().fold(0.0, f64::max);
            prop_assert!(mean_max_aggregate(&data) <= global);
        }
    }
}
