use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{check_len, PowerFlowError};
use crate::case::{build_ybus, BranchAdmittance, BusType, NetworkCase, SparseComplex};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcpfOptions {
    /// Infinity-norm bound on the power mismatch, p.u.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AcpfOptions {
    fn default() -> Self {
        AcpfOptions {
            tol: 1e-8,
            max_iter: 30,
        }
    }
}

/// Generator setpoints for a power-flow replay.
#[derive(Debug, Clone, PartialEq)]
pub struct AcSetpoints {
    /// Active output per active generator, MW. The slack unit's entry is ignored.
    pub pg: Vec<f64>,
    /// Voltage magnitude per generator bus ([`NetworkCase::generator_buses`] order), p.u.
    pub vm: Vec<f64>,
}

impl AcSetpoints {
    /// The dispatch and voltage setpoints written in the case file.
    pub fn from_case(case: &NetworkCase) -> Self {
        let pg = case
            .active_generators()
            .iter()
            .map(|&g| case.generators[g].pg)
            .collect();
        let vm = case
            .generator_buses()
            .iter()
            .map(|&bus| {
                let id = case.buses[bus].id;
                case.generators
                    .iter()
                    .find(|g| g.status && g.bus_id == id)
                    .map(|g| g.vg)
                    .unwrap()
            })
            .collect();
        AcSetpoints { pg, vm }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    /// MW per bus.
    pub pd: Vec<f64>,
    /// MVAr per bus.
    pub qd: Vec<f64>,
}

impl Loads {
    pub fn from_case(case: &NetworkCase) -> Self {
        Loads {
            pd: case.pd(),
            qd: case.qd(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcpfSolution {
    pub vm: Vec<f64>,
    /// Radians.
    pub va: Vec<f64>,
    /// Active output per active generator, MW (slack unit as solved).
    pub pg: Vec<f64>,
    pub pg_slack: f64,
    /// Reactive output per active generator, MVAr.
    pub qg: Vec<f64>,
    /// Apparent power at each branch end, MVA (zero for out-of-service branches).
    pub branch_s_from: Vec<f64>,
    pub branch_s_to: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final infinity-norm mismatch, p.u.
    pub max_mismatch: f64,
}

impl AcpfSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }
}

/// Precomputed AC network model.
#[derive(Debug, Clone)]
pub struct AcModel {
    ybus: SparseComplex,
    branches: Vec<BranchAdmittance>,
    n_branch: usize,
    base_mva: f64,
    slack: usize,
    slack_va: f64,
    pv: Vec<usize>,
    pq: Vec<usize>,
    /// Bus of each active generator.
    gen_bus: Vec<usize>,
    gen_qlim: Vec<(f64, f64)>,
    slack_gen: usize,
    /// Generator buses in setpoint order.
    gen_buses: Vec<usize>,
    /// Reactive output of generators on PQ-typed buses, MVAr per bus.
    fixed_q: Vec<f64>,
}

impl AcModel {
    pub fn new(case: &NetworkCase) -> Result<Self, PowerFlowError> {
        let slack = case.slack_bus();
        let slack_gen = case
            .slack_generator()
            .ok_or(PowerFlowError::NoSlackGenerator)?;
        let active = case.active_generators();
        let gen_bus: Vec<usize> = active
            .iter()
            .map(|&g| case.bus_idx(case.generators[g].bus_id).unwrap())
            .collect();
        let gen_buses = case.generator_buses();
        let mut pv = Vec::new();
        let mut pq = Vec::new();
        let mut fixed_q = vec![0.0; case.n_bus()];
        for (i, bus) in case.buses.iter().enumerate() {
            match bus.bus_type {
                BusType::Slack => {}
                BusType::PV if gen_buses.contains(&i) => pv.push(i),
                _ => pq.push(i),
            }
        }
        for (k, &g) in active.iter().enumerate() {
            if pq.contains(&gen_bus[k]) {
                fixed_q[gen_bus[k]] += case.generators[g].qg;
            }
        }
        Ok(AcModel {
            ybus: build_ybus(case),
            branches: BranchAdmittance::for_case(case),
            n_branch: case.n_branch(),
            base_mva: case.base_mva,
            slack,
            slack_va: case.buses[slack].va.to_radians(),
            pv,
            pq,
            gen_qlim: active
                .iter()
                .map(|&g| (case.generators[g].qmin, case.generators[g].qmax))
                .collect(),
            gen_bus,
            slack_gen,
            gen_buses,
            fixed_q,
        })
    }

    pub fn n_bus(&self) -> usize {
        self.ybus.dim()
    }

    pub fn ybus(&self) -> &SparseComplex {
        &self.ybus
    }

    pub fn slack_generator(&self) -> usize {
        self.slack_gen
    }

    /// Flat start: setpoint magnitudes at generator buses, 1.0 elsewhere,
    /// slack angle from the case, zero angles elsewhere.
    pub fn flat_start(&self, setpoints: &AcSetpoints) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(1.0, 0.0); self.n_bus()];
        for (&bus, &vm) in self.gen_buses.iter().zip(&setpoints.vm) {
            if bus == self.slack || self.pv.contains(&bus) {
                v[bus] = Complex64::new(vm, 0.0);
            }
        }
        v[self.slack] = Complex64::from_polar(v[self.slack].re, self.slack_va);
        v
    }

    pub fn solve(
        &self,
        setpoints: &AcSetpoints,
        loads: &Loads,
        options: &AcpfOptions,
    ) -> Result<AcpfSolution, PowerFlowError> {
        self.solve_from(setpoints, loads, options, None)
    }

    /// Newton–Raphson from an optional initial voltage profile. Magnitudes at
    /// PV and slack buses and the slack angle are always reset to their setpoints.
    pub fn solve_from(
        &self,
        setpoints: &AcSetpoints,
        loads: &Loads,
        options: &AcpfOptions,
        initial: Option<&[Complex64]>,
    ) -> Result<AcpfSolution, PowerFlowError> {
        let n = self.n_bus();
        check_len("pg", &setpoints.pg, self.gen_bus.len())?;
        check_len("vm", &setpoints.vm, self.gen_buses.len())?;
        check_len("pd", &loads.pd, n)?;
        check_len("qd", &loads.qd, n)?;
        if !(options.tol > 0.0) {
            return Err(PowerFlowError::InvalidTolerance);
        }

        let mut v = match initial {
            Some(init) if init.len() == n => init.to_vec(),
            _ => self.flat_start(setpoints),
        };
        for (&bus, &vm) in self.gen_buses.iter().zip(&setpoints.vm) {
            if bus == self.slack || self.pv.contains(&bus) {
                v[bus] = Complex64::from_polar(vm, v[bus].arg());
            }
        }
        v[self.slack] = Complex64::from_polar(v[self.slack].norm(), self.slack_va);

        // scheduled injections, p.u.
        let mut sbus: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(-loads.pd[i], self.fixed_q[i] - loads.qd[i]) / self.base_mva)
            .collect();
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            if k != self.slack_gen {
                sbus[bus] += Complex64::new(setpoints.pg[k] / self.base_mva, 0.0);
            }
        }

        let npv = self.pv.len();
        let npq = self.pq.len();
        let pvpq: Vec<usize> = self.pv.iter().chain(&self.pq).copied().collect();
        let mut angle_pos = vec![usize::MAX; n];
        for (k, &i) in pvpq.iter().enumerate() {
            angle_pos[i] = k;
        }
        let mut mag_pos = vec![usize::MAX; n];
        for (k, &i) in self.pq.iter().enumerate() {
            mag_pos[i] = npv + npq + k;
        }
        let dim = npv + 2 * npq;

        let mismatch = |v: &[Complex64]| -> (Vec<f64>, f64) {
            let current = self.ybus.mul_vec(v);
            let mut f = Vec::with_capacity(dim);
            for &i in &pvpq {
                f.push((v[i] * current[i].conj() - sbus[i]).re);
            }
            for &i in &self.pq {
                f.push((v[i] * current[i].conj() - sbus[i]).im);
            }
            let norm = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            (f, if norm.is_nan() { f64::INFINITY } else { norm })
        };

        let (mut f, mut norm) = mismatch(&v);
        let mut iterations = 0;
        let mut converged = norm <= options.tol;
        while !converged && iterations < options.max_iter && norm.is_finite() && norm < 1e8 {
            let current = self.ybus.mul_vec(&v);
            let mut jac = DMatrix::<f64>::zeros(dim, dim);
            for (row_k, &i) in pvpq.iter().enumerate() {
                self.fill_rows(&v, &current, i, row_k, None, &angle_pos, &mag_pos, &mut jac);
            }
            for (k, &i) in self.pq.iter().enumerate() {
                self.fill_rows(&v, &current, i, npv + npq + k, Some(()), &angle_pos, &mag_pos, &mut jac);
            }
            let rhs = DVector::from_iterator(dim, f.iter().map(|x| -x));
            let Some(dx) = jac.lu().solve(&rhs) else {
                break;
            };
            iterations += 1;
            for (k, &i) in pvpq.iter().enumerate() {
                let (m, a) = v[i].to_polar();
                v[i] = Complex64::from_polar(m, a + dx[k]);
            }
            for (k, &i) in self.pq.iter().enumerate() {
                let (m, a) = v[i].to_polar();
                v[i] = Complex64::from_polar(m + dx[npv + npq + k], a);
            }
            (f, norm) = mismatch(&v);
            converged = norm <= options.tol;
        }

        Ok(self.assemble(&v, loads, setpoints, converged, iterations, norm))
    }

    /// Writes the real (`imag = None`) or reactive row of bus `i` into `jac`.
    #[allow(clippy::too_many_arguments)]
    fn fill_rows(
        &self,
        v: &[Complex64],
        current: &[Complex64],
        i: usize,
        row: usize,
        imag: Option<()>,
        angle_pos: &[usize],
        mag_pos: &[usize],
        jac: &mut DMatrix<f64>,
    ) {
        let pick = |z: Complex64| if imag.is_some() { z.im } else { z.re };
        let vi = v[i];
        let j_unit = Complex64::new(0.0, 1.0);
        for (k, y) in self.ybus.row(i) {
            let vk = v[k];
            let term = vi * (y * vk).conj();
            let (d_angle, d_mag) = if k == i {
                let s = vi * current[i].conj();
                let unit = vi / vi.norm();
                (
                    j_unit * s - j_unit * term,
                    unit * current[i].conj() + vi * (y * unit).conj(),
                )
            } else {
                (-j_unit * term, vi * (y * (vk / vk.norm())).conj())
            };
            if angle_pos[k] != usize::MAX {
                jac[(row, angle_pos[k])] += pick(d_angle);
            }
            if mag_pos[k] != usize::MAX {
                jac[(row, mag_pos[k])] += pick(d_mag);
            }
        }
    }

    fn assemble(
        &self,
        v: &[Complex64],
        loads: &Loads,
        setpoints: &AcSetpoints,
        converged: bool,
        iterations: usize,
        max_mismatch: f64,
    ) -> AcpfSolution {
        let n = self.n_bus();
        let base = self.base_mva;
        let current = self.ybus.mul_vec(v);
        let s_inj: Vec<Complex64> = (0..n).map(|i| v[i] * current[i].conj() * base).collect();

        let mut pg = setpoints.pg.clone();
        let slack_bus = self.gen_bus[self.slack_gen];
        let others: f64 = self
            .gen_bus
            .iter()
            .enumerate()
            .filter(|&(k, &b)| b == slack_bus && k != self.slack_gen)
            .map(|(k, _)| setpoints.pg[k])
            .sum();
        pg[self.slack_gen] = s_inj[slack_bus].re + loads.pd[slack_bus] - others;

        let mut qg = vec![0.0; self.gen_bus.len()];
        for &bus in &self.gen_buses {
            let units: Vec<usize> = (0..self.gen_bus.len())
                .filter(|&k| self.gen_bus[k] == bus)
                .collect();
            if !(bus == self.slack || self.pv.contains(&bus)) {
                continue;
            }
            let total = s_inj[bus].im + loads.qd[bus];
            if units.len() == 1 {
                qg[units[0]] = total;
                continue;
            }
            let range: f64 = units.iter().map(|&k| self.gen_qlim[k].1 - self.gen_qlim[k].0).sum();
            let qmin_sum: f64 = units.iter().map(|&k| self.gen_qlim[k].0).sum();
            for &k in &units {
                qg[k] = if range.abs() > 1e-12 {
                    let (lo, hi) = self.gen_qlim[k];
                    lo + (total - qmin_sum) * (hi - lo) / range
                } else {
                    total / units.len() as f64
                };
            }
        }

        let mut branch_s_from = vec![0.0; self.n_branch];
        let mut branch_s_to = vec![0.0; self.n_branch];
        for a in &self.branches {
            let (vf, vt) = (v[a.from], v[a.to]);
            branch_s_from[a.branch] = (vf * (a.yff * vf + a.yft * vt).conj()).norm() * base;
            branch_s_to[a.branch] = (vt * (a.ytf * vf + a.ytt * vt).conj()).norm() * base;
        }

        AcpfSolution {
            vm: v.iter().map(|z| z.norm()).collect(),
            va: v.iter().map(|z| z.arg()).collect(),
            pg_slack: pg[self.slack_gen],
            pg,
            qg,
            branch_s_from,
            branch_s_to,
            converged,
            iterations,
            max_mismatch,
        }
    }
}

/// Polar Newton–Raphson AC power flow. Non-convergence is reported through
/// [`AcpfSolution::converged`], not as an error.
pub fn solve_acpf(
    case: &NetworkCase,
    setpoints: &AcSetpoints,
    loads: &Loads,
    options: &AcpfOptions,
) -> Result<AcpfSolution, PowerFlowError> {
    AcModel::new(case)?.solve(setpoints, loads, options)
}

/// Larger of the sending- and receiving-end apparent power per branch, MVA.
pub fn branch_apparent_flows(solution: &AcpfSolution) -> Vec<f64> {
    solution
        .branch_s_from
        .iter()
        .zip(&solution.branch_s_to)
        .map(|(f, t)| f.max(*t))
        .collect()
}
