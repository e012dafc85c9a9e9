//! Dense convex quadratic programming by a Mehrotra predictor–corrector
//! primal–dual interior point method:
//!
//! ```text
//! minimize ½ xᵀ diag(q) x + cᵀx   subject to  A x = b,  G x ≤ h
//! ```
//!
//! Sized for economic dispatch (a handful of variables, a few hundred
//! inequality rows). Handles the purely linear case `q = 0`.

use nalgebra::{DMatrix, DVector};

pub struct QpProblem {
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub g: DMatrix<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the equality rows.
    pub y: Vec<f64>,
    /// Multipliers of the inequality rows (non-negative).
    pub z: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpStatus {
    Solved,
    /// Residuals stopped decreasing before reaching tolerance; most often the
    /// constraint set is empty.
    Infeasible,
}

pub struct QpResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub complementarity: f64,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// KKT residuals (infinity norms) of a candidate primal–dual point.
    pub fn residuals(&self, x: &[f64], y: &[f64], z: &[f64]) -> QpResiduals {
        let xv = DVector::from_column_slice(x);
        let yv = DVector::from_column_slice(y);
        let zv = DVector::from_column_slice(z);
        let qx = DVector::from_iterator(self.n(), self.q.iter().zip(x).map(|(q, x)| q * x));
        let rd = qx + DVector::from_column_slice(&self.c) + self.a.transpose() * &yv
            + self.g.transpose() * &zv;
        let rp = &self.a * &xv - DVector::from_column_slice(&self.b);
        let gx = &self.g * &xv;
        let ineq = (0..self.h.len()).fold(0.0f64, |m, i| m.max(gx[i] - self.h[i]));
        let comp = (0..self.h.len()).fold(0.0f64, |m, i| m.max((z[i] * (self.h[i] - gx[i])).abs()));
        QpResiduals {
            stationarity: rd.amax(),
            primal_eq: if rp.is_empty() { 0.0 } else { rp.amax() },
            primal_ineq: ineq,
            complementarity: comp,
        }
    }
}

pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> (QpStatus, QpSolution) {
    let n = p.n();
    let m = p.h.len();
    let me = p.b.len();
    let gt = p.g.transpose();
    let at = p.a.transpose();
    let c = DVector::from_column_slice(&p.c);
    let b = DVector::from_column_slice(&p.b);
    let h = DVector::from_column_slice(&p.h);

    let mut x = DVector::<f64>::zeros(n);
    let mut y = DVector::<f64>::zeros(me);
    let gx = &p.g * &x;
    let mut s = DVector::from_iterator(m, (0..m).map(|i| (h[i] - gx[i]).max(1.0)));
    let mut z = DVector::from_element(m, 1.0);

    let scale = 1.0 + c.amax().max(h.amax()).max(b.amax());
    let mut best_primal = f64::INFINITY;
    let mut stall = 0;

    for it in 0..max_iter {
        let qx = DVector::from_iterator(n, p.q.iter().zip(x.iter()).map(|(q, x)| q * x));
        let rd = &qx + &c + &at * &y + &gt * &z;
        let rp = &p.a * &x - &b;
        let ri = &p.g * &x + &s - &h;
        let mu = if m > 0 { s.dot(&z) / m as f64 } else { 0.0 };

        let primal = rp.amax().max(ri.amax());
        if rd.amax() <= tol * scale && primal <= tol * scale && mu <= tol * tol * scale {
            return (
                QpStatus::Solved,
                QpSolution {
                    x: x.as_slice().to_vec(),
                    y: y.as_slice().to_vec(),
                    z: z.as_slice().to_vec(),
                    iterations: it,
                },
            );
        }
        if primal < 0.5 * best_primal {
            best_primal = primal;
            stall = 0;
        } else {
            stall += 1;
            if stall > 40 && primal > 1e-6 * scale {
                break;
            }
        }

        // reduced system [H Aᵀ; A 0]
        let d = DVector::from_iterator(m, (0..m).map(|i| z[i] / s[i]));
        let mut hmat = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            hmat[(j, j)] = p.q[j] + 1e-14;
        }
        for i in 0..m {
            for j in 0..n {
                let gij = p.g[(i, j)];
                if gij == 0.0 {
                    continue;
                }
                for k in 0..n {
                    hmat[(j, k)] += gij * d[i] * p.g[(i, k)];
                }
            }
        }
        let mut kkt = DMatrix::<f64>::zeros(n + me, n + me);
        kkt.view_mut((0, 0), (n, n)).copy_from(&hmat);
        kkt.view_mut((0, n), (n, me)).copy_from(&at);
        kkt.view_mut((n, 0), (me, n)).copy_from(&p.a);
        let lu = kkt.lu();

        let solve_dir = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            // dz = D (G dx + ri) + S⁻¹ rc, ds = Z⁻¹ (rc − S dz)
            let tmp = DVector::from_iterator(m, (0..m).map(|i| d[i] * ri[i] + rc[i] / s[i]));
            let top = -&rd - &gt * &tmp;
            let mut rhs = DVector::<f64>::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(&top);
            rhs.rows_mut(n, me).copy_from(&(-&rp));
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = sol.rows(n, me).into_owned();
            let gdx = &p.g * &dx;
            let dz = DVector::from_iterator(m, (0..m).map(|i| d[i] * (gdx[i] + ri[i]) + rc[i] / s[i]));
            let ds = DVector::from_iterator(m, (0..m).map(|i| (rc[i] - s[i] * dz[i]) / z[i]));
            Some((dx, dy, dz, ds))
        };

        let max_step = |v: &DVector<f64>, dv: &DVector<f64>| -> f64 {
            (0..v.len())
                .filter(|&i| dv[i] < 0.0)
                .fold(1.0f64, |a, i| a.min(-v[i] / dv[i]))
        };

        // predictor
        let rc_aff = DVector::from_iterator(m, (0..m).map(|i| -s[i] * z[i]));
        let Some((_, _, dz_a, ds_a)) = solve_dir(&rc_aff) else {
            break;
        };
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = if m > 0 {
            (0..m)
                .map(|i| (s[i] + alpha_aff * ds_a[i]) * (z[i] + alpha_aff * dz_a[i]))
                .sum::<f64>()
                / m as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };

        // corrector
        let rc = DVector::from_iterator(
            m,
            (0..m).map(|i| -s[i] * z[i] - ds_a[i] * dz_a[i] + sigma * mu),
        );
        let Some((dx, dy, dz, ds)) = solve_dir(&rc) else {
            break;
        };
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
        for i in 0..m {
            s[i] = s[i].max(1e-300);
            z[i] = z[i].max(1e-300);
        }
    }
    (
        QpStatus::Infeasible,
        QpSolution {
            x: x.as_slice().to_vec(),
            y: y.as_slice().to_vec(),
            z: z.as_slice().to_vec(),
            iterations: max_iter,
        },
    )
}
