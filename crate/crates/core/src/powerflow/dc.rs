use nalgebra::{DMatrix, DVector};

use super::{check_len, is_connected, PowerFlowError};
use crate::case::NetworkCase;

#[derive(Debug, Clone, PartialEq)]
pub struct DcpfSolution {
    /// Bus voltage angles, radians; the slack angle is zero.
    pub va: Vec<f64>,
    /// Active flow at the from end of every branch, MW (zero when out of service).
    pub branch_p: Vec<f64>,
    /// Injection picked up at the slack bus on top of the given dispatch, MW.
    /// `Σpg + slack_p − Σpd = 0`.
    pub slack_p: f64,
}

#[derive(Debug, Clone, Copy)]
struct DcBranch {
    index: usize,
    from: usize,
    to: usize,
    b: f64,
    /// Flow offset from phase shifting, p.u.
    p_shift: f64,
}

/// Factored B-θ model of a case.
#[derive(Debug, Clone)]
pub struct DcModel {
    n_bus: usize,
    n_branch: usize,
    slack: usize,
    base_mva: f64,
    /// Position of each bus in the reduced system (`None` for the slack).
    reduced: Vec<Option<usize>>,
    branches: Vec<DcBranch>,
    p_bus_shift: Vec<f64>,
    gen_bus: Vec<usize>,
    b_inv: DMatrix<f64>,
}

impl DcModel {
    pub fn new(case: &NetworkCase) -> Result<Self, PowerFlowError> {
        if !is_connected(case) {
            return Err(PowerFlowError::SingularSystem);
        }
        let n = case.n_bus();
        let slack = case.slack_bus();
        let mut reduced = vec![None; n];
        let mut k = 0;
        for (i, r) in reduced.iter_mut().enumerate() {
            if i != slack {
                *r = Some(k);
                k += 1;
            }
        }
        let mut branches = Vec::new();
        let mut p_bus_shift = vec![0.0; n];
        let mut b_red = DMatrix::<f64>::zeros(n - 1, n - 1);
        for (l, br) in case.in_service_branches() {
            let from = case.bus_idx(br.from_bus).unwrap();
            let to = case.bus_idx(br.to_bus).unwrap();
            let b = 1.0 / (br.x * br.ratio());
            let p_shift = -b * br.shift.to_radians();
            p_bus_shift[from] += p_shift;
            p_bus_shift[to] -= p_shift;
            for (i, j, v) in [(from, from, b), (to, to, b), (from, to, -b), (to, from, -b)] {
                if let (Some(ri), Some(rj)) = (reduced[i], reduced[j]) {
                    b_red[(ri, rj)] += v;
                }
            }
            branches.push(DcBranch {
                index: l,
                from,
                to,
                b,
                p_shift,
            });
        }
        let b_inv = b_red
            .try_inverse()
            .ok_or(PowerFlowError::SingularSystem)?;
        if b_inv.iter().any(|v| !v.is_finite()) {
            return Err(PowerFlowError::SingularSystem);
        }
        let gen_bus = case
            .active_generators()
            .iter()
            .map(|&g| case.bus_idx(case.generators[g].bus_id).unwrap())
            .collect();
        Ok(DcModel {
            n_bus: n,
            n_branch: case.n_branch(),
            slack,
            base_mva: case.base_mva,
            reduced,
            branches,
            p_bus_shift,
            gen_bus,
            b_inv,
        })
    }

    pub fn n_branch(&self) -> usize {
        self.n_branch
    }

    /// Solves for a dispatch given per active generator (MW) and loads per bus (MW).
    pub fn solve(&self, pg: &[f64], pd: &[f64]) -> Result<DcpfSolution, PowerFlowError> {
        check_len("pg", pg, self.gen_bus.len())?;
        check_len("pd", pd, self.n_bus)?;
        let mut p_inj: Vec<f64> = pd.iter().map(|d| -d / self.base_mva).collect();
        for (&bus, &p) in self.gen_bus.iter().zip(pg) {
            p_inj[bus] += p / self.base_mva;
        }
        let slack_p = pd.iter().sum::<f64>() - pg.iter().sum::<f64>();
        Ok(self.solve_injections(&p_inj, slack_p))
    }

    fn solve_injections(&self, p_inj: &[f64], slack_p: f64) -> DcpfSolution {
        let rhs = DVector::from_iterator(
            self.n_bus - 1,
            (0..self.n_bus)
                .filter(|&i| i != self.slack)
                .map(|i| p_inj[i] - self.p_bus_shift[i]),
        );
        let theta_red = &self.b_inv * rhs;
        let va: Vec<f64> = self
            .reduced
            .iter()
            .map(|r| r.map_or(0.0, |k| theta_red[k]))
            .collect();
        let mut branch_p = vec![0.0; self.n_branch];
        for br in &self.branches {
            branch_p[br.index] =
                (br.b * (va[br.from] - va[br.to]) + br.p_shift) * self.base_mva;
        }
        DcpfSolution {
            va,
            branch_p,
            slack_p,
        }
    }

    /// Affine map from active-generator dispatch (MW) to branch flows (MW) at
    /// fixed loads: `flows = sensitivity · pg + offset`. Columns follow the
    /// active generator order.
    pub fn flow_map(&self, pd: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>), PowerFlowError> {
        let n_gen = self.gen_bus.len();
        let zero = vec![0.0; n_gen];
        let offset = self.solve(&zero, pd)?.branch_p;
        let mut sens = DMatrix::zeros(self.n_branch, n_gen);
        let no_load = vec![0.0; self.n_bus];
        let shift_only = self.solve(&zero, &no_load)?.branch_p;
        for g in 0..n_gen {
            let mut unit = zero.clone();
            unit[g] = 1.0;
            let f = self.solve(&unit, &no_load)?.branch_p;
            for l in 0..self.n_branch {
                sens[(l, g)] = f[l] - shift_only[l];
            }
        }
        Ok((sens, offset))
    }
}

/// DC power flow with the slack bus absorbing any imbalance.
pub fn solve_dcpf(case: &NetworkCase, pg: &[f64], pd: &[f64]) -> Result<DcpfSolution, PowerFlowError> {
    DcModel::new(case)?.solve(pg, pd)
}
