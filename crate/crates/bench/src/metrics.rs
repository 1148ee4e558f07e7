use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GOOD_MOVEMENT: f64 = 0.4;
const GOOD_LATE: f64 = 1.0;
const POOR_MOVEMENT: f64 = 0.8;
const POOR_LATE: f64 = 2.0;

/// `max((ata - eta) / eta, 0)` on final arrival times.
pub fn late_rate(ata: f64, eta: f64) -> Result<f64> {
    if !(ata > 0.0 && eta > 0.0 && ata.is_finite() && eta.is_finite()) {
        return Err(Error::Invalid(format!(
            "late rate needs positive times, got ata {ata}, eta {eta}"
        )));
    }
    Ok(((ata - eta) / eta).max(0.0))
}

/// Trip peak of the IMU magnitude divided by the wake threshold.
pub fn rel_max_movement(samples: &[f64], threshold: f64) -> Result<f64> {
    if samples.is_empty() || !(threshold > 0.0) {
        return Err(Error::Invalid("movement needs samples and a positive threshold".into()));
    }
    Ok(samples.iter().copied().fold(0.0, f64::max) / threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Good,
    Acceptable,
    Poor,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Good => "good",
            Category::Acceptable => "acceptable",
            Category::Poor => "poor",
        })
    }
}

pub fn categorize(late: f64, movement: f64) -> Result<Category> {
    if !(late >= 0.0 && movement >= 0.0 && late.is_finite() && movement.is_finite()) {
        return Err(Error::Invalid(format!(
            "metrics must be finite and >= 0, got late {late}, movement {movement}"
        )));
    }
    Ok(if movement < GOOD_MOVEMENT && late < GOOD_LATE {
        Category::Good
    } else if movement > POOR_MOVEMENT || late > POOR_LATE {
        Category::Poor
    } else {
        Category::Acceptable
    })
}
