//! Power-law fits `m = a·x^α`, compute-efficiency frontiers and
//! diminishing-returns tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::MlpConfig;
use crate::training::RunRecord;

const GN_TOL: f64 = 1e-10;
const GN_MAX_ITER: usize = 200;
const FLAT: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("observation {index} has non-positive value {value}")]
    NonPositiveMetric { index: usize, value: f64 },
    #[error("need at least two rows")]
    FewerThanTwoRows,
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationTags {
    pub run_id: String,
    pub case: String,
    pub regime: String,
    pub arch: String,
    pub seed: u64,
}

/// One (resource, metric) point: `x` is samples or TFLOPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub m: f64,
    #[serde(default)]
    pub tags: ObservationTags,
}

impl Observation {
    pub fn new(x: f64, m: f64) -> Self {
        Observation {
            x,
            m,
            tags: ObservationTags::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub alpha: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// `m_i − a·x_i^α`, in input order.
    pub residuals: Vec<f64>,
}

impl PowerLawFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.a * x.powf(self.alpha)
    }

    pub fn ssr(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

fn ssr(xs: &[f64], ms: &[f64], a: f64, alpha: f64) -> f64 {
    xs.iter()
        .zip(ms)
        .map(|(&x, &m)| {
            let r = m - a * x.powf(alpha);
            r * r
        })
        .sum()
}

/// Least-squares fit on the raw scale. Starts from OLS on `(ln x, ln m)`
/// and refines with Levenberg-damped Gauss–Newton; a step is taken only if
/// it lowers the residual sum, so the result is never worse than the start.
pub fn fit_power_law(obs: &[Observation]) -> Result<PowerLawFit, ScalingError> {
    if obs.len() < 3 {
        return Err(ScalingError::DegenerateInput(format!(
            "{} observations, need at least 3",
            obs.len()
        )));
    }
    for (i, o) in obs.iter().enumerate() {
        if !(o.m > 0.0) || !o.m.is_finite() {
            return Err(ScalingError::NonPositiveMetric { index: i, value: o.m });
        }
        if !(o.x > 0.0) || !o.x.is_finite() {
            return Err(ScalingError::DegenerateInput(format!(
                "resource {} at observation {i} is not positive",
                o.x
            )));
        }
    }
    let xs: Vec<f64> = obs.iter().map(|o| o.x).collect();
    let ms: Vec<f64> = obs.iter().map(|o| o.m).collect();
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(ScalingError::DegenerateInput("all resource values are equal".into()));
    }

    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let lm: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = lm.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&lm).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let mut alpha = sxy / sxx;
    let mut a = (my - alpha * mx).exp();

    let start = ssr(&xs, &ms, a, alpha);
    let mut cur = start;
    let mut damping = 1e-3;
    for _ in 0..GN_MAX_ITER {
        // J^T J and J^T r for r_i = m_i − a x^α
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &m) in xs.iter().zip(&ms) {
            let p = x.powf(alpha);
            let r = m - a * p;
            let da = p;
            let db = a * p * x.ln();
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut accepted = false;
        let mut rel_step = 0.0;
        for _ in 0..30 {
            let (h11, h22) = (jaa * (1.0 + damping), jbb * (1.0 + damping));
            let det = h11 * h22 - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                damping *= 10.0;
                continue;
            }
            let sa = (h22 * ga - jab * gb) / det;
            let sb = (h11 * gb - jab * ga) / det;
            let (na, nb) = (a + sa, alpha + sb);
            let trial = ssr(&xs, &ms, na, nb);
            if trial.is_finite() && trial < cur {
                rel_step = (sa.abs() / a.abs().max(1e-300)).max(sb.abs() / alpha.abs().max(1.0));
                a = na;
                alpha = nb;
                cur = trial;
                damping = (damping * 0.3).max(1e-12);
                accepted = true;
                break;
            }
            damping *= 10.0;
        }
        if !accepted || rel_step < GN_TOL {
            break;
        }
    }
    assert!(cur <= start, "refinement increased the residual sum");

    let residuals: Vec<f64> = xs
        .iter()
        .zip(&ms)
        .map(|(&x, &m)| m - a * x.powf(alpha))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let mean_m = ms.iter().sum::<f64>() / n;
    let ss_tot: f64 = ms.iter().map(|m| (m - mean_m).powi(2)).sum();
    let r_squared = if ss_tot < FLAT {
        if ss_res < FLAT {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(PowerLawFit {
        a,
        alpha,
        r_squared,
        n_points: obs.len(),
        residuals,
    })
}

/// Drops observations with non-positive or non-finite metric, logging how many.
pub fn positive_only(obs: &[Observation]) -> Vec<Observation> {
    let kept: Vec<Observation> = obs
        .iter()
        .filter(|o| o.m > 0.0 && o.m.is_finite())
        .cloned()
        .collect();
    let dropped = obs.len() - kept.len();
    if dropped > 0 {
        log::warn!("excluded {dropped} observations with non-positive metric from the fit");
    }
    kept
}

/// Collapses replicates to their mean metric per distinct `x`, ordered by `x`.
pub fn mean_by_x(obs: &[Observation]) -> Vec<Observation> {
    let mut groups: BTreeMap<u64, (f64, f64, usize, ObservationTags)> = BTreeMap::new();
    for o in obs {
        let e = groups
            .entry(o.x.to_bits())
            .or_insert((o.x, 0.0, 0, o.tags.clone()));
        e.1 += o.m;
        e.2 += 1;
    }
    let mut out: Vec<Observation> = groups
        .into_values()
        .map(|(x, sum, k, tags)| Observation {
            x,
            m: sum / k as f64,
            tags,
        })
        .collect();
    out.sort_by(|a, b| a.x.total_cmp(&b.x));
    out
}

/// Fit results as written to sweep reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub metric: String,
    pub resource: String,
    pub a: f64,
    pub alpha: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl FitSummary {
    pub fn new(metric: &str, resource: &str, fit: &PowerLawFit) -> Self {
        FitSummary {
            metric: metric.into(),
            resource: resource.into(),
            a: fit.a,
            alpha: fit.alpha,
            r_squared: fit.r_squared,
            n_points: fit.n_points,
        }
    }

    pub const CSV_HEADER: &'static str = "metric,resource,a,alpha,r_squared,n_points";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.metric, self.resource, self.a, self.alpha, self.r_squared, self.n_points
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub flops_total: f64,
    pub best_metric: f64,
    pub arch: MlpConfig,
    pub epochs: usize,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    /// Lowest-metric record of each architecture, ordered by architecture label.
    pub per_arch_best: Vec<FrontierPoint>,
    /// Non-dominated records in `(flops_total, metric)`, by increasing FLOPs.
    pub envelope: Vec<FrontierPoint>,
    pub global_min: Option<FrontierPoint>,
}

fn point(r: &RunRecord, metric: f64) -> FrontierPoint {
    FrontierPoint {
        flops_total: r.flops_total,
        best_metric: metric,
        arch: r.arch.clone(),
        epochs: r.epochs,
        run_id: r.id.clone(),
    }
}

fn order(a: &FrontierPoint, b: &FrontierPoint) -> std::cmp::Ordering {
    a.flops_total
        .total_cmp(&b.flops_total)
        .then(a.best_metric.total_cmp(&b.best_metric))
        .then_with(|| a.run_id.cmp(&b.run_id))
}

/// Extracts per-architecture bests, the lower envelope and the global minimum
/// of `metric` over `records`. Records with a non-finite metric are skipped.
/// The result does not depend on the order of `records`.
pub fn efficiency_frontier(records: &[RunRecord], metric: &str) -> Result<Frontier, ScalingError> {
    let mut pts = Vec::with_capacity(records.len());
    for r in records {
        let m = r
            .metrics
            .get(metric)
            .ok_or_else(|| ScalingError::UnknownMetric(metric.into()))?;
        if m.is_finite() {
            pts.push(point(r, m));
        }
    }
    pts.sort_by(order);

    let mut envelope: Vec<FrontierPoint> = Vec::new();
    let mut best = f64::INFINITY;
    for p in &pts {
        if p.best_metric < best {
            best = p.best_metric;
            envelope.push(p.clone());
        }
    }

    let mut per_arch: BTreeMap<String, FrontierPoint> = BTreeMap::new();
    for p in &pts {
        let key = p.arch.arch_label();
        match per_arch.get(&key) {
            Some(q) if q.best_metric <= p.best_metric => {}
            _ => {
                per_arch.insert(key, p.clone());
            }
        }
    }
    let global_min = envelope.last().cloned();
    Ok(Frontier {
        per_arch_best: per_arch.into_values().collect(),
        envelope,
        global_min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiminishingRow {
    pub epochs: usize,
    pub metric: f64,
    pub tflops: f64,
    pub d_tflops: Option<f64>,
    pub d_metric: Option<f64>,
    /// `Δmetric / ΔTFLOPs`.
    pub efficiency: Option<f64>,
}

/// Consecutive differences over `(epochs, metric, tflops)` rows, sorted by epochs.
pub fn diminishing_returns(rows: &[(usize, f64, f64)]) -> Result<Vec<DiminishingRow>, ScalingError> {
    if rows.len() < 2 {
        return Err(ScalingError::FewerThanTwoRows);
    }
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| r.0);
    let mut out = Vec::with_capacity(rows.len());
    for (k, &(epochs, metric, tflops)) in rows.iter().enumerate() {
        let (d_tflops, d_metric, efficiency) = if k == 0 {
            (None, None, None)
        } else {
            let (_, pm, pt) = rows[k - 1];
            let dt = tflops - pt;
            let dm = metric - pm;
            let eff = if dm == 0.0 { 0.0 } else { dm / dt };
            (Some(dt), Some(dm), Some(eff))
        };
        out.push(DiminishingRow {
            epochs,
            metric,
            tflops,
            d_tflops,
            d_metric,
            efficiency,
        });
    }
    Ok(out)
}

/// [`diminishing_returns`] over checkpoints of one architecture.
pub fn diminishing_returns_for(
    records: &[RunRecord],
    metric: &str,
) -> Result<Vec<DiminishingRow>, ScalingError> {
    let rows = records
        .iter()
        .map(|r| {
            r.metrics
                .get(metric)
                .map(|m| (r.epochs, m, r.tflops()))
                .ok_or_else(|| ScalingError::UnknownMetric(metric.into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    diminishing_returns(&rows)
}
