use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accuracy levels at which training may stop before the epoch budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopTarget {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// L2 coefficient applied by the optimizer; never part of the reported loss.
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// 1-based epochs after which the learning rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub seed: u64,
    /// Size of the held-out stream; `None` means 10% of the training samples.
    pub validation_samples: Option<usize>,
    pub validate_every: usize,
    pub target: Option<StopTarget>,
    /// Decode every training clip once and keep it in memory.
    pub cache_clips: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 300,
            batch_size: 8,
            lr_milestones: vec![100, 200],
            lr_decay: 0.1,
            seed: 0,
            validation_samples: None,
            validate_every: 1,
            target: None,
            cache_clips: true,
        }
    }
}

impl TrainConfig {
    /// Constant learning rate, as used for the tiny configurations.
    pub fn tiny() -> Self {
        Self {
            lr_milestones: Vec::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("lr_decay", self.lr_decay)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("validate_every", self.validate_every),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.validation_samples == Some(0) {
            return Err(Error::Config("validation_samples must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during 1-based `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let passed = self.lr_milestones.iter().filter(|&&m| epoch > m).count();
        self.learning_rate * self.lr_decay.powi(passed as i32)
    }

    pub fn validation_count(&self, train_count: usize) -> usize {
        self.validation_samples
            .unwrap_or_else(|| train_count.div_ceil(10).max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_steps_after_milestones() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate_at(1), 0.01);
        assert_eq!(c.learning_rate_at(100), 0.01);
        assert!((c.learning_rate_at(101) - 0.001).abs() < 1e-15);
        assert!((c.learning_rate_at(300) - 0.0001).abs() < 1e-15);
        assert_eq!(TrainConfig::tiny().learning_rate_at(300), 0.01);
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                momentum: 1.0,
                ..Default::default()
            },
            TrainConfig {
                weight_decay: -1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_defaults_to_a_tenth() {
        let c = TrainConfig::default();
        assert_eq!(c.validation_count(1000), 100);
        assert_eq!(c.validation_count(5), 1);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"learning_rte": 0.1}"#).is_err());
    }
}
