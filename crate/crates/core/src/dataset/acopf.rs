//! Reduced-space ACOPF label generator.
//!
//! The decision vector is `u = (Pg at non-slack units, Vm at generator
//! buses)`; every evaluation runs AC power flow, so the network equations hold
//! by construction and only operating limits remain as constraints. Limits
//! are handled by an augmented Lagrangian with multiplier updates, the box on
//! `u` by projection, and the inner problem by projected BFGS on central
//! finite-difference gradients.

use num_complex::Complex64;

use super::{DatasetError, OpfSample};
use crate::case::{BusType, NetworkCase};
use crate::metrics::AcViolations;
use crate::powerflow::{AcModel, AcSetpoints, AcpfOptions, AcpfSolution, Loads};

/// Labels with aggregate violation above this are flagged infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct AcopfOptions {
    /// Penalty weight of the augmented Lagrangian; 0 turns the limits off.
    pub rho: f64,
    /// Central-difference step, p.u.
    pub fd_step: f64,
    /// Power-flow solves allowed per label.
    pub max_evals: usize,
    /// Limits are tightened by this much (p.u.) inside the optimizer so that
    /// converged labels sit strictly inside them.
    pub margin: f64,
    pub acpf: AcpfOptions,
}

impl Default for AcopfOptions {
    fn default() -> Self {
        AcopfOptions {
            rho: 1e3,
            fd_step: 1e-4,
            max_evals: 20_000,
            margin: 1e-5,
            acpf: AcpfOptions {
                tol: 1e-10,
                max_iter: 30,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcopfOutcome {
    pub sample: OpfSample,
    /// Aggregate violation of the returned point in reporting units.
    pub violation: f64,
    pub evals: usize,
    pub budget_exhausted: bool,
}

struct Point {
    u: Vec<f64>,
    sol: AcpfSolution,
    /// Normalised cost.
    cost: f64,
    /// Tightened limit functions, feasible when ≤ 0.
    g: Vec<f64>,
}

pub struct AcopfSolver {
    case: NetworkCase,
    model: AcModel,
    opts: AcopfOptions,
    /// Positions in the active-generator list of the dispatchable units.
    ctrl: Vec<usize>,
    slack_gen: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rated: Vec<(usize, f64)>,
    /// Buses whose magnitude is a control, kept in range by projection.
    held: Vec<bool>,
    base: f64,
}

struct Counter {
    evals: usize,
    limit: usize,
}

impl Counter {
    fn exhausted(&self) -> bool {
        self.evals >= self.limit
    }
}

impl AcopfSolver {
    pub fn new(case: &NetworkCase, opts: AcopfOptions) -> Result<Self, DatasetError> {
        let model = AcModel::new(case)?;
        let gens = case.active_generators();
        let slack_gen = model.slack_generator();
        let ctrl: Vec<usize> = (0..gens.len()).filter(|&k| k != slack_gen).collect();
        let base = case.base_mva;
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for &k in &ctrl {
            let g = &case.generators[gens[k]];
            lo.push(g.pmin / base);
            hi.push(g.pmax / base);
        }
        let mut held = vec![false; case.n_bus()];
        for b in case.generator_buses() {
            lo.push(case.buses[b].vmin);
            hi.push(case.buses[b].vmax);
            held[b] = case.buses[b].bus_type != BusType::PQ;
        }
        let rated = case
            .in_service_branches()
            .filter(|(_, b)| b.is_rated())
            .map(|(l, b)| (l, b.s_max))
            .collect();
        Ok(AcopfSolver {
            case: case.clone(),
            model,
            opts,
            ctrl,
            slack_gen,
            lo,
            hi,
            rated,
            held,
            base,
        })
    }

    fn setpoints(&self, u: &[f64]) -> AcSetpoints {
        let n_gen = self.ctrl.len() + 1;
        let mut pg = vec![0.0; n_gen];
        for (j, &k) in self.ctrl.iter().enumerate() {
            pg[k] = u[j] * self.base;
        }
        AcSetpoints {
            pg,
            vm: u[self.ctrl.len()..].to_vec(),
        }
    }

    fn initial_u(&self) -> Vec<f64> {
        let sp = AcSetpoints::from_case(&self.case);
        let mut u: Vec<f64> = self.ctrl.iter().map(|&k| sp.pg[k] / self.base).collect();
        u.extend(sp.vm);
        for (i, v) in u.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
        u
    }

    fn limits(&self, sol: &AcpfSolution) -> Vec<f64> {
        let m = self.opts.margin;
        let b = self.base;
        let gens = self.case.active_generators();
        let mut g = Vec::new();
        let slack = &self.case.generators[gens[self.slack_gen]];
        let ps = sol.pg[self.slack_gen];
        g.push((slack.pmin - ps) / b + m);
        g.push((ps - slack.pmax) / b + m);
        for (k, &gi) in gens.iter().enumerate() {
            let gen = &self.case.generators[gi];
            g.push((gen.qmin - sol.qg[k]) / b + m);
            g.push((sol.qg[k] - gen.qmax) / b + m);
        }
        for (i, (bus, &v)) in self.case.buses.iter().zip(&sol.vm).enumerate() {
            if self.held[i] {
                continue;
            }
            g.push(bus.vmin - v + m);
            g.push(v - bus.vmax + m);
        }
        for &(l, smax) in &self.rated {
            let s = sol.branch_s_from[l].max(sol.branch_s_to[l]);
            g.push((s - smax) / b + m);
        }
        g
    }

    fn eval(
        &self,
        u: &[f64],
        loads: &Loads,
        warm: Option<&[Complex64]>,
        cost_scale: f64,
        counter: &mut Counter,
    ) -> Option<Point> {
        counter.evals += 1;
        let sol = self
            .model
            .solve_from(&self.setpoints(u), loads, &self.opts.acpf, warm)
            .ok()?;
        if !sol.converged {
            return None;
        }
        Some(Point {
            u: u.to_vec(),
            cost: self.case.total_cost(&sol.pg) / cost_scale,
            g: self.limits(&sol),
            sol,
        })
    }

    fn merit(&self, p: &Point, lambda: &[f64], rho: f64) -> f64 {
        if rho == 0.0 {
            return p.cost;
        }
        p.cost
            + p.g
                .iter()
                .zip(lambda)
                .map(|(&g, &l)| ((l + rho * g).max(0.0).powi(2) - l * l) / (2.0 * rho))
                .sum::<f64>()
    }

    /// Merit gradient from central differences of the cost and of every limit
    /// function, which are smooth; differencing the merit itself would straddle
    /// the kink of the penalty's second derivative.
    fn gradient(
        &self,
        p: &Point,
        loads: &Loads,
        lambda: &[f64],
        rho: f64,
        cs: f64,
        counter: &mut Counter,
    ) -> Vec<f64> {
        let h = self.opts.fd_step;
        let warm = p.sol.voltages();
        let weights: Vec<f64> = if rho == 0.0 {
            vec![0.0; p.g.len()]
        } else {
            p.g.iter().zip(lambda).map(|(&g, &l)| (l + rho * g).max(0.0)).collect()
        };
        let directional = |a: &Point, b: &Point, width: f64| {
            let dc = (a.cost - b.cost) / width;
            dc + a
                .g
                .iter()
                .zip(&b.g)
                .zip(&weights)
                .map(|((ga, gb), w)| w * (ga - gb) / width)
                .sum::<f64>()
        };
        let mut grad = vec![0.0; p.u.len()];
        for i in 0..p.u.len() {
            let mut up = p.u.clone();
            up[i] += h;
            let mut dn = p.u.clone();
            dn[i] -= h;
            let fu = self.eval(&up, loads, Some(&warm), cs, counter);
            let fd = self.eval(&dn, loads, Some(&warm), cs, counter);
            grad[i] = match (&fu, &fd) {
                (Some(a), Some(b)) => directional(a, b, 2.0 * h),
                (Some(a), None) => directional(a, p, h),
                (None, Some(b)) => directional(p, b, h),
                (None, None) => 0.0,
            };
        }
        grad
    }

    fn project(&self, u: &mut [f64]) {
        for (i, v) in u.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Projected BFGS on the augmented Lagrangian for fixed multipliers.
    fn inner(
        &self,
        mut p: Point,
        loads: &Loads,
        lambda: &[f64],
        rho: f64,
        cs: f64,
        counter: &mut Counter,
    ) -> Point {
        let n = p.u.len();
        let mut f = self.merit(&p, lambda, rho);
        let mut grad = self.gradient(&p, loads, lambda, rho, cs, counter);
        let mut hinv: Option<Vec<Vec<f64>>> = None;
        for _ in 0..200 {
            if counter.exhausted() {
                break;
            }
            let mut pg = p.u.clone();
            for i in 0..n {
                pg[i] -= grad[i];
            }
            self.project(&mut pg);
            let pgrad = pg.iter().zip(&p.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if pgrad <= 1e-7 {
                break;
            }
            let bound = |i: usize| {
                (p.u[i] <= self.lo[i] + 1e-12 && grad[i] > 0.0)
                    || (p.u[i] >= self.hi[i] - 1e-12 && grad[i] < 0.0)
            };
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let h = hinv.clone().unwrap_or_else(|| scaled_identity(n, 1e-2 / gmax.max(1e-12)));
            let mut d = vec![0.0; n];
            for i in (0..n).filter(|&i| !bound(i)) {
                d[i] = -(0..n).filter(|&j| !bound(j)).map(|j| h[i][j] * grad[j]).sum::<f64>();
            }
            if dot(&d, &grad) >= 0.0 {
                hinv = None;
                let s = 1e-2 / gmax.max(1e-12);
                for i in 0..n {
                    d[i] = if bound(i) { 0.0 } else { -s * grad[i] };
                }
            }

            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let mut trial: Vec<f64> = p.u.iter().zip(&d).map(|(u, d)| u + alpha * d).collect();
                self.project(&mut trial);
                let step: Vec<f64> = trial.iter().zip(&p.u).map(|(a, b)| a - b).collect();
                if step.iter().all(|s| s.abs() < 1e-14) {
                    break;
                }
                let warm = p.sol.voltages();
                if let Some(q) = self.eval(&trial, loads, Some(&warm), cs, counter) {
                    let fq = self.merit(&q, lambda, rho);
                    if fq <= f + 1e-4 * dot(&grad, &step) {
                        accepted = Some((q, fq, step));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((q, fq, s)) = accepted else {
                if hinv.is_some() {
                    hinv = None;
                    continue;
                }
                break;
            };
            let g_new = self.gradient(&q, loads, lambda, rho, cs, counter);
            let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
                let h0 = hinv.take().unwrap_or_else(|| scaled_identity(n, sy / dot(&y, &y)));
                hinv = Some(bfgs_update(&h0, &s, &y, sy));
            }
            let decrease = f - fq;
            p = q;
            f = fq;
            grad = g_new;
            if decrease <= 1e-14 * f.abs().max(1.0) {
                break;
            }
        }
        p
    }

    fn reported_violation(&self, p: &Point) -> f64 {
        AcViolations::from_solution(&self.case, &p.sol).total()
    }

    /// Labels one load scenario.
    pub fn solve(&self, loads: &Loads) -> Result<AcopfOutcome, DatasetError> {
        let mut counter = Counter {
            evals: 0,
            limit: self.opts.max_evals,
        };
        let u0 = self.initial_u();
        let probe = self
            .eval(&u0, loads, None, 1.0, &mut counter)
            .ok_or(DatasetError::InitialPointDiverged)?;
        let cs = probe.cost.abs().max(1.0);
        let mut p = self
            .eval(&u0, loads, Some(&probe.sol.voltages()), cs, &mut counter)
            .ok_or(DatasetError::InitialPointDiverged)?;

        let mut best: Option<(f64, Point)> = None;
        let consider = |best: &mut Option<(f64, Point)>, q: &Point| {
            if self.reported_violation(q) <= FEASIBILITY_TOL
                && best.as_ref().map_or(true, |(c, _)| q.cost < *c)
            {
                *best = Some((
                    q.cost,
                    Point {
                        u: q.u.clone(),
                        sol: q.sol.clone(),
                        cost: q.cost,
                        g: q.g.clone(),
                    },
                ));
            }
        };
        consider(&mut best, &p);

        let mut rho = self.opts.rho;
        let mut lambda = vec![0.0; p.g.len()];
        let mut last_viol = f64::INFINITY;
        let mut last_cost = f64::INFINITY;
        for outer in 0..40 {
            p = self.inner(p, loads, &lambda, rho, cs, &mut counter);
            consider(&mut best, &p);
            if rho == 0.0 || counter.exhausted() {
                break;
            }
            let viol = p.g.iter().fold(0.0f64, |m, &g| m.max(g));
            if viol <= 1e-7 && outer > 0 && (last_cost - p.cost).abs() <= 1e-7 * p.cost.abs().max(1.0) {
                break;
            }
            for (l, &g) in lambda.iter_mut().zip(&p.g) {
                *l = (*l + rho * g).max(0.0);
            }
            if viol > 0.25 * last_viol && viol > 1e-7 && rho < 1e8 * self.opts.rho {
                rho *= 10.0;
            }
            last_viol = viol;
            last_cost = p.cost;
        }

        let budget_exhausted = counter.exhausted();
        let chosen = match best {
            Some((_, b)) => b,
            None => p,
        };
        let violation = self.reported_violation(&chosen);
        let n_ctrl = self.ctrl.len();
        Ok(AcopfOutcome {
            sample: OpfSample {
                pd: loads.pd.clone(),
                qd: loads.qd.clone(),
                label_pg: chosen.sol.pg.clone(),
                label_vm: chosen.u[n_ctrl..].to_vec(),
                objective: self.case.total_cost(&chosen.sol.pg),
                feasible: violation <= FEASIBILITY_TOL,
                solve_time: 0.0,
            },
            violation,
            evals: counter.evals,
            budget_exhausted,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn scaled_identity(n: usize, s: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { s } else { 0.0 }).collect())
        .collect()
}

/// Inverse-Hessian BFGS update `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &[Vec<f64>], s: &[f64], y: &[f64], sy: f64) -> Vec<Vec<f64>> {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    h[i][j] - r * (hy[i] * s[j] + s[i] * hy[j]) + (r * r * yhy + r) * s[i] * s[j]
                })
                .collect()
        })
        .collect()
}

/// Labels one scenario with a freshly built solver.
pub fn solve_acopf_labels(
    case: &NetworkCase,
    pd: &[f64],
    qd: &[f64],
    options: &AcopfOptions,
) -> Result<AcopfOutcome, DatasetError> {
    AcopfSolver::new(case, options.clone())?.solve(&Loads {
        pd: pd.to_vec(),
        qd: qd.to_vec(),
    })
}
