use serde::{Deserialize, Serialize};

use super::ModelError;

/// Midpoint of the randomized-leaky range `[1/8, 1/3]`.
pub const DEFAULT_SLOPE: f64 = (1.0 / 8.0 + 1.0 / 3.0) / 2.0;
pub const SLOPE_RANGE: (f64, f64) = (1.0 / 8.0, 1.0 / 3.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding dimensionality `d`.
    pub dim: usize,
    pub layers_local: usize,
    pub layers_global: usize,
    pub history_local: usize,
    pub history_global: usize,
    /// Registered fusion strategy name.
    pub variant: String,
    /// Negative slope of the leaky activation used in evaluation (and in
    /// training unless `randomized_slope` is set).
    pub slope: f64,
    /// Sample one slope per training forward pass from `[1/8, 1/3]`.
    pub randomized_slope: bool,
    pub channels: usize,
    pub kernel_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            layers_local: 2,
            layers_global: 2,
            history_local: 5,
            history_global: 5,
            variant: "full".into(),
            slope: DEFAULT_SLOPE,
            randomized_slope: false,
            channels: 32,
            kernel_width: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("dim", self.dim),
            ("layers_local", self.layers_local),
            ("layers_global", self.layers_global),
            ("history_local", self.history_local),
            ("history_global", self.history_global),
            ("channels", self.channels),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("model.{field} must be at least 1")));
            }
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(ModelError::InvalidConfig("model.slope must lie in (0, 1)".into()));
        }
        if self.kernel_width % 2 == 0 {
            return Err(ModelError::InvalidConfig("model.kernel_width must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            epochs: 100,
            seed: 0,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lr > 0.0) {
            return Err(ModelError::InvalidConfig("train.lr must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(ModelError::InvalidConfig("train.weight_decay must be non-negative".into()));
        }
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("train.epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(ModelError::InvalidConfig("train.patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        TrainConfig::default().validate().unwrap();
        assert!((DEFAULT_SLOPE - 0.229166).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = ModelConfig {
            kernel_width: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            slope: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            history_global: 0,
            ..Default::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("history_global"));
    }
}
