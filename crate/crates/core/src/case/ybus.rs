use num_complex::Complex64;

use super::NetworkCase;

/// Compressed-sparse-row complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseComplex {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseComplex {
    /// Builds from triplets; duplicate entries are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseComplex {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Non-zeros of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map(|(_, v)| v)
            .unwrap_or_default()
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, y)| y * v[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![Complex64::default(); self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }
}

/// Two-port π-model admittances of an in-service branch, p.u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub branch: usize,
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

impl BranchAdmittance {
    pub fn for_case(case: &NetworkCase) -> Vec<BranchAdmittance> {
        case.in_service_branches()
            .map(|(l, br)| {
                let ys = Complex64::new(br.r, br.x).inv();
                let charging = Complex64::new(0.0, br.b / 2.0);
                let tap = Complex64::from_polar(br.ratio(), br.shift.to_radians());
                let ytt = ys + charging;
                BranchAdmittance {
                    branch: l,
                    from: case.bus_idx(br.from_bus).unwrap(),
                    to: case.bus_idx(br.to_bus).unwrap(),
                    yff: ytt / (tap * tap.conj()),
                    yft: -ys / tap.conj(),
                    ytf: -ys / tap,
                    ytt,
                }
            })
            .collect()
    }
}

/// Bus admittance matrix in p.u., including off-nominal taps, phase shifters,
/// line charging and bus shunts. Out-of-service branches are skipped.
pub fn build_ybus(case: &NetworkCase) -> SparseComplex {
    let n = case.n_bus();
    let mut triplets = Vec::with_capacity(4 * case.n_branch() + n);
    for a in BranchAdmittance::for_case(case) {
        triplets.push((a.from, a.from, a.yff));
        triplets.push((a.from, a.to, a.yft));
        triplets.push((a.to, a.from, a.ytf));
        triplets.push((a.to, a.to, a.ytt));
    }
    for (i, bus) in case.buses.iter().enumerate() {
        triplets.push((i, i, Complex64::new(bus.gs, bus.bs) / case.base_mva));
    }
    SparseComplex::from_triplets(n, triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{bundled, parse_case, tests::two_bus_text, BUNDLED_CASES};

    /// Textbook element stamping into a dense matrix, written independently of
    /// the sparse builder.
    fn dense_oracle(case: &NetworkCase) -> Vec<Vec<Complex64>> {
        let n = case.n_bus();
        let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for br in case.branches.iter().filter(|b| b.status) {
            let f = case.bus_idx(br.from_bus).unwrap();
            let t = case.bus_idx(br.to_bus).unwrap();
            let z = Complex64::new(br.r, br.x);
            let y_series = Complex64::new(1.0, 0.0) / z;
            let a = if br.tap == 0.0 { 1.0 } else { br.tap };
            let phi = br.shift * std::f64::consts::PI / 180.0;
            let t_c = Complex64::new(a * phi.cos(), a * phi.sin());
            let half_b = Complex64::new(0.0, 0.5 * br.b);
            y[f][f] += (y_series + half_b) / (a * a);
            y[t][t] += y_series + half_b;
            y[f][t] -= y_series / t_c.conj();
            y[t][f] -= y_series / t_c;
        }
        for (i, b) in case.buses.iter().enumerate() {
            y[i][i] += Complex64::new(b.gs / case.base_mva, b.bs / case.base_mva);
        }
        y
    }

    #[test]
    fn two_bus_analytic() {
        let case = parse_case(two_bus_text()).unwrap();
        let y = build_ybus(&case);
        assert!((y.get(0, 1) - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        assert!((y.get(1, 0) - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        assert!((y.get(0, 0) - Complex64::new(0.0, -10.0)).norm() < 1e-12);
        assert!((y.get(1, 1) - Complex64::new(0.0, -10.0)).norm() < 1e-12);
    }

    #[test]
    fn matches_dense_stamping_on_bundled_cases() {
        for name in BUNDLED_CASES {
            let case = parse_case(bundled(name).unwrap()).unwrap();
            let sparse = build_ybus(&case).to_dense();
            let dense = dense_oracle(&case);
            for i in 0..case.n_bus() {
                for j in 0..case.n_bus() {
                    assert!(
                        (sparse[i][j] - dense[i][j]).norm() <= 1e-12,
                        "{name} ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn shunt_free_rows_sum_to_zero() {
        let mut case = parse_case(bundled("case14").unwrap()).unwrap();
        for b in &mut case.buses {
            b.gs = 0.0;
            b.bs = 0.0;
        }
        // the π-equivalent of an off-nominal transformer carries shunt legs too
        for br in &mut case.branches {
            br.b = 0.0;
            br.tap = 0.0;
            br.shift = 0.0;
        }
        let y = build_ybus(&case);
        for i in 0..case.n_bus() {
            let s: Complex64 = y.row(i).map(|(_, v)| v).sum();
            assert!(s.norm() < 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn structurally_symmetric() {
        let case = parse_case(bundled("case57").unwrap()).unwrap();
        let y = build_ybus(&case);
        for i in 0..y.dim() {
            for (j, _) in y.row(i) {
                assert!(y.row(j).any(|(c, _)| c == i));
            }
        }
    }

    #[test]
    fn out_of_service_branch_skipped() {
        let mut case = parse_case(two_bus_text()).unwrap();
        case.branches[0].status = false;
        let y = build_ybus(&case);
        assert_eq!(y.get(0, 1), Complex64::default());
    }
}
