//! Background vehicles. All of them drive in the rightmost lane under a plain
//! intelligent-driver law and ignore intersections.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const VEHICLE_LENGTH: f64 = 4.5;

const MAX_ACCEL: f64 = 1.5;
const COMFORT_DECEL: f64 = 1.0;
const MAX_BRAKE: f64 = 9.0;
const MIN_GAP: f64 = 2.0;
const HEADWAY: f64 = 1.2;
const SLOWDOWN_RATE: f64 = 0.02;
const SLOWDOWN_FACTOR: f64 = 0.4;
const SLOWDOWN_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    /// Vehicles per kilometre of route.
    pub lead_vehicle_density: f64,
    /// Desired speed of traffic as a fraction of the speed limit.
    pub lead_speed_fraction: f64,
    pub congestion_seed: u64,
    /// Chance that the ego has to stop at an intersection.
    pub stop_probability: f64,
    /// Upper bound of the uniform intersection wait, seconds.
    pub max_wait: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            lead_vehicle_density: 8.0,
            lead_speed_fraction: 0.7,
            congestion_seed: 0,
            stop_probability: 0.5,
            max_wait: 8.0,
        }
    }
}

impl TrafficConfig {
    /// No vehicles and no intersection stops.
    pub fn empty() -> Self {
        Self {
            lead_vehicle_density: 0.0,
            lead_speed_fraction: 1.0,
            congestion_seed: 0,
            stop_probability: 0.0,
            max_wait: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lead_vehicle_density >= 0.0 && self.lead_vehicle_density.is_finite()) {
            return Err(invalid("traffic density must be finite and >= 0"));
        }
        if !(self.lead_speed_fraction > 0.0 && self.lead_speed_fraction <= 1.0) {
            return Err(invalid("lead speed fraction must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.stop_probability) || !(self.max_wait >= 0.0 && self.max_wait.is_finite()) {
            return Err(invalid("stop probability must lie in [0, 1] and max wait must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficVehicle {
    /// Front bumper position along the route, meters.
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    slow_until: f64,
}

impl TrafficVehicle {
    pub fn rear(&self) -> f64 {
        self.position - VEHICLE_LENGTH
    }
}

/// Intelligent-driver acceleration.
///
/// `gap` is bumper to bumper; `None` means a free road. The free-road term
/// never brakes harder than `b`, so a drop in desired speed is followed
/// smoothly.
pub fn idm_accel(v: f64, v0: f64, gap: Option<(f64, f64)>, a_max: f64, b: f64, s0: f64, headway: f64) -> f64 {
    let free = if v0 > 0.0 { 1.0 - (v / v0).powi(4) } else { -1.0 };
    let free = free.max(-b / a_max);
    let interaction = match gap {
        Some((s, lead_speed)) => {
            let dv = v - lead_speed;
            let s_star = s0 + (v * headway + v * dv / (2.0 * (a_max * b).sqrt())).max(0.0);
            (s_star / s.max(0.01)).powi(2)
        }
        None => 0.0,
    };
    a_max * (free - interaction)
}

/// Gap a traffic vehicle at `v` wants behind a leader at `v_lead`.
pub fn safe_gap(v: f64, v_lead: f64) -> f64 {
    MIN_GAP + (v * HEADWAY + v * (v - v_lead) / (2.0 * (MAX_ACCEL * COMFORT_DECEL).sqrt())).max(0.0)
}

/// Lane-0 traffic, kept sorted by position (front first).
#[derive(Debug, Clone)]
pub struct Traffic {
    pub vehicles: Vec<TrafficVehicle>,
}

impl Traffic {
    pub fn spawn(cfg: &TrafficConfig, route_length: f64, limit_at: impl Fn(f64) -> f64, rng: &mut ChaCha8Rng) -> Self {
        let count = (cfg.lead_vehicle_density * route_length / 1000.0).round() as usize;
        let mut positions: Vec<f64> = (0..count)
            .map(|_| 40.0 + rng.random::<f64>() * (route_length - 40.0).max(0.0))
            .collect();
        positions.sort_by(|a, b| b.total_cmp(a));
        let mut vehicles: Vec<TrafficVehicle> = Vec::with_capacity(count);
        for p in positions {
            if vehicles.last().is_some_and(|v| v.rear() - p < 15.0) {
                continue;
            }
            vehicles.push(TrafficVehicle {
                position: p,
                speed: cfg.lead_speed_fraction * limit_at(p),
                accel: 0.0,
                slow_until: f64::NEG_INFINITY,
            });
        }
        Self { vehicles }
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Advances every vehicle. `ego` is the ego's (front, speed) when it
    /// occupies lane 0; vehicles behind it follow it.
    pub fn step(
        &mut self,
        dt: f64,
        t: f64,
        cfg: &TrafficConfig,
        limit_at: impl Fn(f64) -> f64,
        ego: Option<(f64, f64)>,
        rng: &mut ChaCha8Rng,
    ) {
        let n = self.vehicles.len();
        let mut accels = Vec::with_capacity(n);
        for i in 0..n {
            let me = &self.vehicles[i];
            let mut lead = (i > 0).then(|| (self.vehicles[i - 1].rear() - me.position, self.vehicles[i - 1].speed));
            if let Some((front, speed)) = ego {
                let rear = front - VEHICLE_LENGTH;
                if front > me.position {
                    let gap = rear - me.position;
                    if lead.is_none_or(|(s, _)| gap < s) {
                        lead = Some((gap, speed));
                    }
                }
            }
            let mut v0 = cfg.lead_speed_fraction * limit_at(me.position);
            if t < me.slow_until {
                v0 *= SLOWDOWN_FACTOR;
            }
            let a = idm_accel(me.speed, v0, lead, MAX_ACCEL, COMFORT_DECEL, MIN_GAP, HEADWAY);
            accels.push(a.clamp(-MAX_BRAKE, MAX_ACCEL));
        }
        for (veh, a) in self.vehicles.iter_mut().zip(accels) {
            if rng.random::<f64>() < SLOWDOWN_RATE * dt {
                veh.slow_until = t + SLOWDOWN_SECONDS;
            }
            let v_new = (veh.speed + a * dt).max(0.0);
            veh.accel = (v_new - veh.speed) / dt;
            veh.position += 0.5 * (veh.speed + v_new) * dt;
            veh.speed = v_new;
        }
    }

    /// Nearest vehicle whose front is ahead of `front`: (gap, speed).
    pub fn leader_of(&self, front: f64) -> Option<(f64, f64)> {
        self.vehicles
            .iter()
            .rev()
            .find(|v| v.position > front)
            .map(|v| (v.rear() - front, v.speed))
    }

    /// Nearest vehicle whose front is behind the ego front: (gap to the ego
    /// rear, speed). Overlap gives a negative gap.
    pub fn follower_of(&self, front: f64) -> Option<(f64, f64)> {
        self.vehicles
            .iter()
            .find(|v| v.position <= front)
            .map(|v| (front - VEHICLE_LENGTH - v.position, v.speed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn idm_is_zero_at_standstill_gap_equal_to_jam_distance() {
        let a = idm_accel(0.0, 14.0, Some((3.0, 0.0)), 2.0, 1.0, 3.0, 1.5);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn idm_free_road_vanishes_at_desired_speed() {
        assert_eq!(idm_accel(14.0, 14.0, None, 2.0, 1.0, 3.0, 1.5), 0.0);
        assert!(idm_accel(10.0, 14.0, None, 2.0, 1.0, 3.0, 1.5) > 0.0);
    }

    #[test]
    fn spawned_vehicles_are_sorted_and_spaced() {
        let cfg = TrafficConfig {
            lead_vehicle_density: 20.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Traffic::spawn(&cfg, 3000.0, |_| 13.9, &mut rng);
        assert!(!t.is_empty());
        for w in t.vehicles.windows(2) {
            assert!(w[0].rear() - w[1].position >= 15.0);
        }
    }

    #[test]
    fn platoon_never_overlaps() {
        let cfg = TrafficConfig {
            lead_vehicle_density: 20.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = Traffic::spawn(&cfg, 3000.0, |_| 13.9, &mut rng);
        for i in 0..20_000 {
            t.step(0.01, i as f64 * 0.01, &cfg, |_| 13.9, None, &mut rng);
            for w in t.vehicles.windows(2) {
                assert!(w[0].rear() > w[1].position, "overlap at tick {i}");
            }
        }
    }

    #[test]
    fn empty_config_validates() {
        TrafficConfig::empty().validate().unwrap();
        TrafficConfig::default().validate().unwrap();
        let bad = TrafficConfig {
            lead_speed_fraction: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
