use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Features with spread below this are passed through unscaled.
const MIN_SPREAD: f64 = 1e-12;

/// Per-feature standardisation to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardScaler {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let std = x.std_axis(Axis(0), 0.0);
        StandardScaler {
            mean: mean.to_vec(),
            std: std
                .iter()
                .map(|&s| if s < MIN_SPREAD { 1.0 } else { s })
                .collect(),
        }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    pub fn inverse(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        out
    }
}

/// Per-output min–max scaling onto `[0, 1]`. A constant column gets
/// `range = 0`: it scales to 0 and de-scales to its constant whatever the
/// network emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(y: ArrayView2<f64>) -> Self {
        let mut min = vec![f64::INFINITY; y.ncols()];
        let mut max = vec![f64::NEG_INFINITY; y.ncols()];
        for row in y.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let range = min
            .iter()
            .zip(&max)
            .map(|(lo, hi)| if hi - lo < MIN_SPREAD { 0.0 } else { hi - lo })
            .collect();
        let min = min.into_iter().map(|v| if v.is_finite() { v } else { 0.0 }).collect();
        MinMaxScaler { min, range }
    }

    pub fn transform(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let mut out = y.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.range[j] > 0.0 {
                    (*v - self.min[j]) / self.range[j]
                } else {
                    0.0
                };
            }
        }
        out
    }

    pub fn inverse(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let mut out = y.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.range[j] + self.min[j];
            }
        }
        out
    }
}
