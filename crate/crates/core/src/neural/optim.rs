use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Gradients, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        let zeros: Vec<_> = model
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, hyper: &AdamHyper) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    let AdamHyper {
        lr,
        beta1,
        beta2,
        eps,
    } = *hyper;
    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    };
    for (k, layer) in model.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[k];
        let (mw, mb) = &mut state.m[k];
        let (vw, vb) = &mut state.v[k];
        Zip::from(&mut layer.w)
            .and(&g.w)
            .and(mw)
            .and(vw)
            .for_each(update);
        Zip::from(&mut layer.b)
            .and(&g.b)
            .and(mb)
            .and(vb)
            .for_each(update);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Layer, MlpConfig};

    fn scalar_model(w: f64) -> MlpModel {
        MlpModel::from_layers(
            MlpConfig::new(1, &[], 1, 0),
            vec![Layer {
                w: ndarray::arr2(&[[w]]),
                b: ndarray::arr1(&[0.0]),
            }],
        )
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients {
            layers: vec![Layer {
                w: ndarray::arr2(&[[g]]),
                b: ndarray::arr1(&[0.0]),
            }],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = MlpModel::new(MlpConfig::new(3, &[4], 2, 1)).unwrap();
        let before = m.clone();
        let mut st = AdamState::new(&m);
        let g = Gradients::zeros_like(&m);
        adam_step(&mut m, &g, &mut st, &AdamHyper::default());
        assert_eq!(m, before);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        for g in [3.7, -0.02, 150.0] {
            let mut m = scalar_model(1.0);
            let mut st = AdamState::new(&m);
            let hyper = AdamHyper::default();
            adam_step(&mut m, &scalar_grad(g), &mut st, &hyper);
            let delta = m.layers()[0].w[(0, 0)] - 1.0;
            assert!((delta.abs() - hyper.lr).abs() < 1e-9, "{delta}");
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut m = MlpModel::new(MlpConfig::new(3, &[4], 2, 5)).unwrap();
            let mut st = AdamState::new(&m);
            let x = ndarray::Array2::from_elem((2, 3), 0.3);
            for _ in 0..2 {
                m.forward_cached(x.view()).unwrap();
                let g = m.backward(ndarray::Array2::ones((2, 2)).view()).unwrap();
                adam_step(&mut m, &g, &mut st, &AdamHyper::default());
            }
            m
        };
        assert_eq!(run(), run());
    }
}
