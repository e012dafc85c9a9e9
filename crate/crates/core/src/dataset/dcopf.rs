use nalgebra::DMatrix;

use super::qp::{solve_qp, QpProblem, QpStatus};
use super::OpfSample;
use crate::case::NetworkCase;
use crate::powerflow::{DcModel, PowerFlowError};

/// Units whose box is narrower than this (MW) are held at `pmin`.
const FIXED_WIDTH: f64 = 1e-9;
const LINE_TOL_MW: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DcopfOutcome {
    pub sample: OpfSample,
    /// Infinity norm of the KKT residuals in the solver's scaled units.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Economic dispatch with a global balance, generator boxes, and DC limits on
/// rated branches. Construction factors the network once; `solve` is cheap
/// per load scenario.
pub struct DcopfSolver {
    base: f64,
    model: DcModel,
    /// `(pmin, pmax)` per active generator, MW.
    limits: Vec<(f64, f64)>,
    /// `(c2, c1)` per active generator.
    cost: Vec<(f64, f64)>,
    gens: Vec<usize>,
    free: Vec<usize>,
    /// Rated in-service branches with their limits, MW.
    rated: Vec<(usize, f64)>,
    /// Flow sensitivity to active-generator output, MW per MW.
    sens: DMatrix<f64>,
    case: NetworkCase,
}

impl DcopfSolver {
    pub fn new(case: &NetworkCase) -> Result<Self, PowerFlowError> {
        let model = DcModel::new(case)?;
        let gens = case.active_generators();
        let limits: Vec<(f64, f64)> = gens
            .iter()
            .map(|&g| (case.generators[g].pmin, case.generators[g].pmax))
            .collect();
        let cost = gens
            .iter()
            .map(|&g| case.generators[g].quadratic_terms())
            .collect();
        let free = (0..gens.len())
            .filter(|&k| limits[k].1 - limits[k].0 > FIXED_WIDTH)
            .collect();
        let rated = case
            .in_service_branches()
            .filter(|(_, b)| b.is_rated())
            .map(|(l, b)| (l, b.s_max))
            .collect();
        let (sens, _) = model.flow_map(&vec![0.0; case.n_bus()])?;
        Ok(DcopfSolver {
            base: case.base_mva,
            model,
            limits,
            cost,
            gens,
            free,
            rated,
            sens,
            case: case.clone(),
        })
    }

    pub fn n_gen(&self) -> usize {
        self.gens.len()
    }

    /// Solves one scenario. Infeasible scenarios come back flagged rather than
    /// as errors.
    pub fn solve(&self, pd: &[f64]) -> DcopfOutcome {
        let total_load: f64 = pd.iter().sum();
        let pmin_sum: f64 = self.limits.iter().map(|l| l.0).sum();
        let pmax_sum: f64 = self.limits.iter().map(|l| l.1).sum();
        let mut pg: Vec<f64> = self.limits.iter().map(|l| l.0).collect();
        let infeasible = |pg: Vec<f64>, iterations| DcopfOutcome {
            sample: OpfSample {
                pd: pd.to_vec(),
                qd: vec![],
                objective: self.case.total_cost(&pg),
                label_pg: pg,
                label_vm: vec![],
                feasible: false,
                solve_time: 0.0,
            },
            kkt_residual: f64::INFINITY,
            iterations,
        };
        if pd.len() != self.case.n_bus()
            || total_load < pmin_sum - FIXED_WIDTH
            || total_load > pmax_sum + FIXED_WIDTH
        {
            return infeasible(pg, 0);
        }

        let base = self.base;
        let nf = self.free.len();
        let fixed_sum: f64 = (0..self.gens.len())
            .filter(|k| !self.free.contains(k))
            .map(|k| self.limits[k].0)
            .sum();
        // offset flows from loads and fixed units, MW
        let offset = match self.model.solve(&pg_fixed_only(&pg, &self.free), pd) {
            Ok(s) => s.branch_p,
            Err(_) => return infeasible(pg, 0),
        };

        let mut q: Vec<f64> = self.free.iter().map(|&k| 2.0 * self.cost[k].0 * base * base).collect();
        let mut c: Vec<f64> = self.free.iter().map(|&k| self.cost[k].1 * base).collect();
        let cs = q.iter().chain(&c).fold(1.0f64, |m, v| m.max(v.abs()));
        q.iter_mut().for_each(|v| *v /= cs);
        c.iter_mut().for_each(|v| *v /= cs);

        let m = 2 * nf + 2 * self.rated.len();
        let mut g = DMatrix::zeros(m, nf);
        let mut h = Vec::with_capacity(m);
        for (j, &k) in self.free.iter().enumerate() {
            g[(j, j)] = 1.0;
            h.push(self.limits[k].1 / base);
        }
        for (j, &k) in self.free.iter().enumerate() {
            g[(nf + j, j)] = -1.0;
            h.push(-self.limits[k].0 / base);
        }
        for (r, &(l, smax)) in self.rated.iter().enumerate() {
            let row_up = 2 * nf + 2 * r;
            for (j, &k) in self.free.iter().enumerate() {
                g[(row_up, j)] = self.sens[(l, k)];
                g[(row_up + 1, j)] = -self.sens[(l, k)];
            }
            h.push((smax - offset[l]) / base);
            h.push((smax + offset[l]) / base);
        }
        let p = QpProblem {
            q,
            c,
            a: DMatrix::from_element(1, nf, 1.0),
            b: vec![(total_load - fixed_sum) / base],
            g,
            h,
        };
        if nf == 0 {
            return if p.b[0].abs() * base <= FIXED_WIDTH && self.lines_ok(&pg, pd) {
                DcopfOutcome {
                    sample: self.sample(pd, pg),
                    kkt_residual: 0.0,
                    iterations: 0,
                }
            } else {
                infeasible(pg, 0)
            };
        }

        let (status, sol) = solve_qp(&p, 1e-10, 200);
        for (j, &k) in self.free.iter().enumerate() {
            pg[k] = sol.x[j] * base;
        }
        polish(&mut pg, &self.free, &self.limits, total_load);
        let x: Vec<f64> = self.free.iter().map(|&k| pg[k] / base).collect();
        let r = p.residuals(&x, &sol.y, &sol.z);
        let kkt = r
            .stationarity
            .max(r.primal_eq)
            .max(r.primal_ineq)
            .max(r.complementarity);
        if status != QpStatus::Solved || !self.lines_ok(&pg, pd) {
            let mut out = infeasible(pg, sol.iterations);
            out.kkt_residual = kkt;
            return out;
        }
        DcopfOutcome {
            sample: self.sample(pd, pg),
            kkt_residual: kkt,
            iterations: sol.iterations,
        }
    }

    fn sample(&self, pd: &[f64], pg: Vec<f64>) -> OpfSample {
        OpfSample {
            pd: pd.to_vec(),
            qd: vec![],
            objective: self.case.total_cost(&pg),
            label_pg: pg,
            label_vm: vec![],
            feasible: true,
            solve_time: 0.0,
        }
    }

    fn lines_ok(&self, pg: &[f64], pd: &[f64]) -> bool {
        match self.model.solve(pg, pd) {
            Ok(s) => self
                .rated
                .iter()
                .all(|&(l, smax)| s.branch_p[l].abs() <= smax + LINE_TOL_MW),
            Err(_) => false,
        }
    }
}

fn pg_fixed_only(pg: &[f64], free: &[usize]) -> Vec<f64> {
    pg.iter()
        .enumerate()
        .map(|(k, &p)| if free.contains(&k) { 0.0 } else { p })
        .collect()
}

/// Clamps the interior-point iterate onto the boxes and restores exact
/// balance (MW) by shifting the remainder onto units with headroom.
fn polish(pg: &mut [f64], free: &[usize], limits: &[(f64, f64)], total: f64) {
    for &k in free {
        pg[k] = pg[k].clamp(limits[k].0, limits[k].1);
    }
    let mut rem = total - pg.iter().sum::<f64>();
    for &k in free {
        if rem == 0.0 {
            break;
        }
        let (lo, hi) = limits[k];
        let step = if rem > 0.0 { rem.min(hi - pg[k]) } else { rem.max(lo - pg[k]) };
        pg[k] += step;
        rem -= step;
    }
    // close the last rounding error on one unit
    for &k in free {
        let others: f64 = pg.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, p)| p).sum();
        let v = total - others;
        if v >= limits[k].0 && v <= limits[k].1 {
            pg[k] = v;
            break;
        }
    }
}

pub fn solve_dcopf(case: &NetworkCase, pd: &[f64]) -> Result<OpfSample, PowerFlowError> {
    Ok(DcopfSolver::new(case)?.solve(pd).sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{bundled, parse_case, tests::two_bus_text, BUNDLED_CASES};
    use crate::metrics::violations_dc;

    fn two_gen(cost1: f64, cost2: f64, pmax1: f64) -> NetworkCase {
        let mut case = parse_case(two_bus_text()).unwrap();
        case.generators[0].cost = vec![cost1, 0.0];
        case.generators[0].pmax = pmax1;
        let mut g = case.generators[0].clone();
        g.bus_id = 2;
        g.cost = vec![cost2, 0.0];
        g.pmax = 200.0;
        case.generators.push(g);
        NetworkCase::new(case.name, case.base_mva, case.buses, case.generators, case.branches).unwrap()
    }

    #[test]
    fn merit_order_dispatch() {
        let case = two_gen(10.0, 20.0, 100.0);
        let out = DcopfSolver::new(&case).unwrap().solve(&[0.0, 150.0]);
        assert!(out.sample.feasible);
        assert!((out.sample.label_pg[0] - 100.0).abs() < 1e-6);
        assert!((out.sample.label_pg[1] - 50.0).abs() < 1e-6);
        assert!((out.sample.objective - 2000.0).abs() < 1e-4);
        assert!(out.kkt_residual <= 1e-6);
    }

    #[test]
    fn single_generator_takes_all_load() {
        let case = parse_case(two_bus_text()).unwrap();
        let s = solve_dcopf(&case, &[7.0, 50.0]).unwrap();
        assert!(s.feasible);
        assert_eq!(s.label_pg, vec![57.0]);
    }

    #[test]
    fn out_of_range_load_is_flagged() {
        let case = parse_case(two_bus_text()).unwrap();
        let s = solve_dcopf(&case, &[0.0, 500.0]).unwrap();
        assert!(!s.feasible);
    }

    #[test]
    fn binding_line_limit() {
        // cheap unit at bus 1 is capped by a 60 MW line
        let mut case = two_gen(10.0, 20.0, 200.0);
        case.branches[0].s_max = 60.0;
        let out = DcopfSolver::new(&case).unwrap().solve(&[0.0, 150.0]);
        assert!(out.sample.feasible);
        assert!((out.sample.label_pg[0] - 60.0).abs() < 1e-6);
        assert!((out.sample.label_pg[1] - 90.0).abs() < 1e-6);
    }

    /// Coarse-to-fine grid search over the four non-slack units, slack unit
    /// closing the balance, ending at 0.01 MW resolution.
    fn grid_oracle(case: &NetworkCase, total: f64) -> f64 {
        let gens: Vec<_> = case
            .active_generators()
            .iter()
            .map(|&g| case.generators[g].clone())
            .collect();
        let n = gens.len();
        let cost = |p: &[f64]| -> Option<f64> {
            let slack = total - p.iter().sum::<f64>();
            if slack < gens[0].pmin || slack > gens[0].pmax {
                return None;
            }
            Some(gens[0].cost_at(slack) + p.iter().zip(&gens[1..]).map(|(x, g)| g.cost_at(*x)).sum::<f64>())
        };
        let mut lo: Vec<f64> = gens[1..].iter().map(|g| g.pmin).collect();
        let mut hi: Vec<f64> = gens[1..].iter().map(|g| g.pmax).collect();
        let mut best = (f64::INFINITY, vec![0.0; n - 1]);
        for step in [10.0, 1.0, 0.1, 0.01] {
            let counts: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| ((h - l) / step).round() as usize + 1).collect();
            let mut idx = vec![0usize; n - 1];
            loop {
                let p: Vec<f64> = idx.iter().zip(&lo).map(|(&i, l)| l + i as f64 * step).collect();
                if let Some(c) = cost(&p) {
                    if c < best.0 {
                        best = (c, p);
                    }
                }
                let mut d = 0;
                while d < n - 1 {
                    idx[d] += 1;
                    if idx[d] < counts[d] {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == n - 1 {
                    break;
                }
            }
            for j in 0..n - 1 {
                lo[j] = (best.1[j] - 10.0 * step).max(gens[j + 1].pmin);
                hi[j] = (best.1[j] + 10.0 * step).min(gens[j + 1].pmax);
            }
        }
        best.0
    }

    #[test]
    fn case14_matches_grid_oracle() {
        let case = parse_case(bundled("case14").unwrap()).unwrap();
        let pd = case.pd();
        let s = solve_dcopf(&case, &pd).unwrap();
        let oracle = grid_oracle(&case, pd.iter().sum());
        assert!(s.feasible);
        assert!(s.objective <= oracle * (1.0 + 1e-3));
        assert!((s.objective - oracle).abs() / oracle < 1e-3, "{} vs {oracle}", s.objective);
    }

    #[test]
    fn labels_respect_all_limits_and_kkt() {
        for name in BUNDLED_CASES {
            let case = parse_case(bundled(name).unwrap()).unwrap();
            let solver = DcopfSolver::new(&case).unwrap();
            let model = DcModel::new(&case).unwrap();
            let out = solver.solve(&case.pd());
            assert!(out.sample.feasible, "{name}");
            assert!(out.kkt_residual <= 1e-6, "{name}: {}", out.kkt_residual);
            let v = violations_dc(&case, &model, &out.sample.label_pg, &case.pd()).unwrap();
            assert!(v.pg.iter().all(|&x| x <= 1e-6));
            assert!(v.branch_pct.iter().all(|&x| x <= 1e-6), "{name}");
            let bal: f64 = out.sample.label_pg.iter().sum::<f64>() - case.pd().iter().sum::<f64>();
            assert!(bal.abs() < 1e-6);
        }
    }

    #[test]
    fn objective_monotone_in_total_load() {
        for name in BUNDLED_CASES {
            let case = parse_case(bundled(name).unwrap()).unwrap();
            let solver = DcopfSolver::new(&case).unwrap();
            let mut last = f64::NEG_INFINITY;
            for k in 0..=20 {
                let f = 0.9 + 0.01 * k as f64;
                let pd: Vec<f64> = case.pd().iter().map(|p| p * f).collect();
                let s = solver.solve(&pd).sample;
                assert!(s.feasible, "{name} at {f}");
                assert!(s.objective >= last - 1e-6, "{name} at {f}");
                last = s.objective;
            }
        }
    }
}
