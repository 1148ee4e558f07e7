use serde::{Deserialize, Serialize};

use crate::domain::AggressivenessLevel;
use crate::error::{invalid, Result};

/// Cruise-controller parameters selected by an aggressiveness level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlProfile {
    /// Percent above the speed limit the controller targets.
    pub p_s: f64,
    /// Minimum following distance, meters.
    pub p_d: f64,
    /// Re-planning interval, milliseconds.
    pub p_u: f64,
    /// Automatic lane changes allowed.
    pub p_a: bool,
    /// Keep-right percentage.
    pub p_r: f64,
}

impl ControlProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_d > 0.0) || !(self.p_u > 0.0) || !(0.0..=100.0).contains(&self.p_r) || !self.p_s.is_finite() {
            return Err(invalid(format!("degenerate control profile {self:?}")));
        }
        Ok(())
    }
}

pub fn profile_from_level(a: AggressivenessLevel) -> ControlProfile {
    let a = f64::from(a.value());
    ControlProfile {
        p_s: 1.5 * a,
        p_d: 6.0 - 0.4 * a,
        p_u: 1000.0 - 70.0 * a,
        p_a: a >= 2.0,
        p_r: 100.0 - 10.0 * a,
    }
}

/// Checked variant for raw integers.
pub fn profile_from_raw(level: u8) -> Result<ControlProfile> {
    Ok(profile_from_level(AggressivenessLevel::new(level)?))
}

/// Longitudinal and maneuver limits that scale with aggressiveness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dynamics {
    /// Maximum acceleration, m/s².
    pub a_cap: f64,
    /// Comfortable deceleration, m/s².
    pub b_comf: f64,
    /// Desired time headway, s.
    pub headway: f64,
    /// Jerk limit, m/s³.
    pub jerk: f64,
    /// Speed through intersection turns, m/s.
    pub turn_speed: f64,
    /// Lane change duration, s.
    pub lane_change_time: f64,
    /// Lead slower than this fraction of target triggers an overtake.
    pub overtake_fraction: f64,
}

impl Dynamics {
    pub fn for_level(a: AggressivenessLevel) -> Self {
        let a = f64::from(a.value());
        Self {
            a_cap: 1.0 + 0.25 * a,
            b_comf: 0.5 + 0.15 * a,
            headway: 1.6 - 0.1 * a,
            jerk: 0.8 + 0.4 * a,
            turn_speed: 3.0 + 0.2 * a,
            lane_change_time: 6.0 - 0.3 * a,
            overtake_fraction: 0.5 + 0.05 * a,
        }
    }
}

/// Everything the simulator needs to drive at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub level: AggressivenessLevel,
    pub profile: ControlProfile,
    pub dynamics: Dynamics,
}

impl Controller {
    pub fn new(level: AggressivenessLevel) -> Self {
        Self {
            level,
            profile: profile_from_level(level),
            dynamics: Dynamics::for_level(level),
        }
    }

    pub fn target_speed(&self, speed_limit: f64) -> f64 {
        speed_limit * (1.0 + self.profile.p_s / 100.0)
    }
}
