use serde::{Deserialize, Serialize};

use super::MlpConfig;

/// Forward-pass FLOPs per sample: `2·n_in·n_out + n_out` per layer.
pub fn count_flops(config: &MlpConfig) -> u64 {
    config
        .layer_dims()
        .iter()
        .map(|&(i, o)| (2 * i * o + o) as u64)
        .sum()
}

/// Training FLOPs: forward plus backward counted as three forward passes per
/// sample per epoch. Exact in integer arithmetic.
pub fn total_training_flops(flops_forward: u64, n_train: u64, n_epochs: u64) -> u128 {
    3 * flops_forward as u128 * n_train as u128 * n_epochs as u128
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsBudget {
    pub flops_forward_per_sample: u64,
    pub flops_total: f64,
    pub n_train: u64,
    pub n_epochs: u64,
}

impl FlopsBudget {
    pub fn new(config: &MlpConfig, n_train: u64, n_epochs: u64) -> Self {
        let f = count_flops(config);
        FlopsBudget {
            flops_forward_per_sample: f,
            flops_total: total_training_flops(f, n_train, n_epochs) as f64,
            n_train,
            n_epochs,
        }
    }

    pub fn tflops(&self) -> f64 {
        self.flops_total / 1e12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_layer() {
        assert_eq!(count_flops(&MlpConfig::new(128, &[], 128, 0)), 32_896);
        assert_eq!(count_flops(&MlpConfig::new(1, &[], 1, 0)), 3);
    }

    #[test]
    fn hand_summed_network() {
        // 118 inputs, two hidden layers of 128, 54 outputs
        let cfg = MlpConfig::new(118, &[128, 128], 54, 0);
        let hand = (2 * 118 * 128 + 128) + (2 * 128 * 128 + 128) + (2 * 128 * 54 + 54);
        assert_eq!(hand, 77_110);
        assert_eq!(count_flops(&cfg), hand);
    }

    #[test]
    fn training_total() {
        assert_eq!(total_training_flops(32_896, 10_000, 1_000), 986_880_000_000);
        assert_eq!(total_training_flops(32_896, 10_000, 1_000) as f64 / 1e12, 0.98688);
        assert_eq!(total_training_flops(12_345, 1, 1), 3 * 12_345);
        assert_eq!(
            total_training_flops(777, 33, 200),
            2 * total_training_flops(777, 33, 100)
        );
        let b = FlopsBudget::new(&MlpConfig::new(128, &[], 128, 0), 10_000, 1_000);
        assert_eq!(b.flops_total, 9.8688e11);
    }
}
