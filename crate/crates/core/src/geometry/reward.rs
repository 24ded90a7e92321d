use serde::{Deserialize, Serialize};

use super::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardThresholds {
    pub delta_low: f64,
    pub delta_high: f64,
}

impl Default for RewardThresholds {
    fn default() -> Self {
        RewardThresholds {
            delta_low: 0.01,
            delta_high: 0.5,
        }
    }
}

impl RewardThresholds {
    pub fn new(delta_low: f64, delta_high: f64) -> Result<Self, GeometryError> {
        let t = RewardThresholds { delta_low, delta_high };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.delta_low >= 0.0 && self.delta_low < self.delta_high && self.delta_high.is_finite() {
            Ok(())
        } else {
            Err(GeometryError::InvalidThresholds {
                low: self.delta_low,
                high: self.delta_high,
            })
        }
    }
}

/// Piecewise linear reward: 1 up to `delta_low`, 0 from `delta_high`, linear
/// in between.
pub fn geometric_reward(scd: f64, t: &RewardThresholds) -> Result<f64, GeometryError> {
    t.validate()?;
    if !(scd >= 0.0) {
        return Err(GeometryError::InvalidDistance(scd));
    }
    Ok(if scd <= t.delta_low {
        1.0
    } else if scd >= t.delta_high {
        0.0
    } else {
        (t.delta_high - scd) / (t.delta_high - t.delta_low)
    })
}
