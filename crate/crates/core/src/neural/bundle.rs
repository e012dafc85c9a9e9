//! Model bundle: a JSON document holding the configuration, scalers, case
//! name and metrics, with the parameters as a base64 string of little-endian
//! f64 values (each layer's weights row-major, then its biases).

use std::path::Path;

use base64::Engine;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{Layer, MinMaxScaler, MlpConfig, MlpModel, NeuralError, StandardScaler};
use crate::dataset::ProblemKind;
use crate::metrics::MetricReport;

pub const BUNDLE_FORMAT: &str = "gridscale-mlp/1";

/// A trained network together with the scaling that maps raw loads to raw
/// setpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub case_name: String,
    pub kind: ProblemKind,
    pub model: MlpModel,
    pub input_scaler: StandardScaler,
    pub output_scaler: MinMaxScaler,
    pub metrics: Option<MetricReport>,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format: String,
    case_name: String,
    kind: ProblemKind,
    config: MlpConfig,
    input_scaler: StandardScaler,
    output_scaler: MinMaxScaler,
    metrics: Option<MetricReport>,
    weights: String,
}

impl Surrogate {
    /// Raw inputs (one sample per row) to raw outputs.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        let z = self.input_scaler.transform(x);
        let y = self.model.forward(z.view())?;
        Ok(self.output_scaler.inverse(y.view()))
    }

    pub fn to_json(&self) -> String {
        let mut bytes = Vec::with_capacity(self.model.parameter_count() * 8);
        for l in self.model.layers() {
            for v in l.w.iter().chain(l.b.iter()) {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let file = BundleFile {
            format: BUNDLE_FORMAT.into(),
            case_name: self.case_name.clone(),
            kind: self.kind,
            config: self.model.config.clone(),
            input_scaler: self.input_scaler.clone(),
            output_scaler: self.output_scaler.clone(),
            metrics: self.metrics.clone(),
            weights: base64::engine::general_purpose::STANDARD.encode(bytes),
        };
        serde_json::to_string_pretty(&file).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let file: BundleFile =
            serde_json::from_str(text).map_err(|e| NeuralError::Bundle(e.to_string()))?;
        if file.format != BUNDLE_FORMAT {
            return Err(NeuralError::Bundle(format!("unknown format {:?}", file.format)));
        }
        file.config.validate()?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(file.weights.as_bytes())
            .map_err(|e| NeuralError::Bundle(e.to_string()))?;
        let expected = file.config.parameter_count() * 8;
        if bytes.len() != expected {
            return Err(NeuralError::Bundle(format!(
                "weight payload has {} bytes, configuration needs {expected}",
                bytes.len()
            )));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let layers = file
            .config
            .layer_dims()
            .into_iter()
            .map(|(n_in, n_out)| Layer {
                w: Array2::from_shape_simple_fn((n_out, n_in), || values.next().unwrap()),
                b: Array1::from_shape_simple_fn(n_out, || values.next().unwrap()),
            })
            .collect();
        if file.input_scaler.mean.len() != file.config.input_dim
            || file.output_scaler.min.len() != file.config.output_dim
        {
            return Err(NeuralError::Bundle("scaler widths do not match the network".into()));
        }
        Ok(Surrogate {
            case_name: file.case_name,
            kind: file.kind,
            model: MlpModel::from_layers(file.config, layers)?,
            input_scaler: file.input_scaler,
            output_scaler: file.output_scaler,
            metrics: file.metrics,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Surrogate {
        let model = MlpModel::new(MlpConfig::new(3, &[5], 2, 4)).unwrap();
        Surrogate {
            case_name: "case14".into(),
            kind: ProblemKind::DC,
            model,
            input_scaler: StandardScaler {
                mean: vec![1.0, 2.0, 3.0],
                std: vec![0.5, 1.0, 2.0],
            },
            output_scaler: MinMaxScaler {
                min: vec![0.0, 10.0],
                range: vec![100.0, 5.0],
            },
            metrics: Some(MetricReport {
                mae_pg_pct: 1.25,
                n_test: 10,
                ..Default::default()
            }),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = sample();
        let back = Surrogate::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let x = ndarray::arr2(&[[1.0, 2.0, 3.0], [0.3, -1.0, 7.0]]);
        assert_eq!(back.predict(x.view()).unwrap(), s.predict(x.view()).unwrap());
    }

    #[test]
    fn corrupt_payload_rejected() {
        let text = sample().to_json();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["weights"] = serde_json::Value::String("AAAA".into());
        assert!(matches!(
            Surrogate::from_json(&v.to_string()),
            Err(NeuralError::Bundle(_))
        ));
        v["format"] = serde_json::Value::String("other".into());
        assert!(Surrogate::from_json(&v.to_string()).is_err());
    }
}
