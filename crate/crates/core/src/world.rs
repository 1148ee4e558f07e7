//! Kinematic single-road simulator with a checkpointed ego vehicle.
//!
//! The ego follows an intelligent-driver law whose limits come from the
//! current [`Controller`]. Intersections, speed-limit drops and lane ends are
//! approached with a constant-deceleration law; lane changes follow a cycloidal
//! lateral profile and turns a ramped-curvature arc.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::{AggressivenessLevel, StateVector};
use crate::error::{Error, Result};
use crate::occupant::{motion_features, Occupant, OccupantConfig};
use crate::profile::Controller;
use crate::route::{RouteMap, TurnKind};
use crate::traffic::{idm_accel, safe_gap, Traffic, TrafficConfig, VEHICLE_LENGTH};

/// Simulator tick; the IMU is sampled once per tick.
pub const SIM_DT: f64 = 0.01;
pub const DEFAULT_REFERENCE_LEVEL: u8 = 5;

const WHEELBASE: f64 = 2.7;
const LANE_WIDTH: f64 = 3.5;
const TURN_ARC: f64 = 24.0;
const MAX_STEER: f64 = 0.6;
const MAX_BRAKE: f64 = 8.0;
const EMERGENCY_JERK: f64 = 40.0;
const EMERGENCY_FACTOR: f64 = 2.5;
const PEDAL_THRESHOLD: f64 = 0.2;
const STALL_TIMEOUT: f64 = 60.0;
const SIGNAL_LEAD: f64 = 2.0;
const OVERTAKE_LOOKAHEAD: f64 = 60.0;
const APPROACH_DECEL: f64 = 0.8;
const SOFT_STOP_SPEED: f64 = 1.0;
const SOFT_STOP_RATE: f64 = 1.5;
const STOP_MARGIN: f64 = 1.5;
const GOAL_SLACK: f64 = 0.5;
const LIMIT_LOOKAHEAD: f64 = 600.0;
const LIMIT_LEAD_TIME: f64 = 1.0;
const LIMIT_BRAKE_FACTOR: f64 = 1.5;
const LOOKAHEAD: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct VehicleState {
    /// Front bumper position along the route, meters.
    pub position: f64,
    pub lane: u8,
    pub speed: f64,
    pub accel: f64,
    pub steering_angle: f64,
    pub turn_signal: bool,
    pub brake_engaged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub steering: f64,
    pub lane: u8,
    pub turn_signal: u8,
    pub brake: u8,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "t",
        "position",
        "speed",
        "accel",
        "steering",
        "lane",
        "turn_signal",
        "brake",
    ])?;
    for r in rows {
        out.write_record([
            format!("{:.2}", r.t),
            format!("{:.4}", r.position),
            format!("{:.4}", r.speed),
            format!("{:.4}", r.accel),
            format!("{:.5}", r.steering),
            r.lane.to_string(),
            r.turn_signal.to_string(),
            r.brake.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StopState {
    Approach,
    Waiting { until: f64 },
    Released,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Crossing {
    center: f64,
    kind: TurnKind,
    wait: Option<f64>,
    state: StopState,
}

impl Crossing {
    fn arc_start(&self) -> f64 {
        self.center - TURN_ARC / 2.0
    }

    fn arc_end(&self) -> f64 {
        self.center + TURN_ARC / 2.0
    }

    fn is_turn(&self) -> bool {
        self.kind != TurnKind::Straight
    }

    fn curvature_at(&self, s: f64) -> f64 {
        if !self.is_turn() || s < self.arc_start() || s > self.arc_end() {
            return 0.0;
        }
        let u = (s - self.arc_start()) / TURN_ARC;
        let ramp = (u / 0.25).min(1.0).min((1.0 - u) / 0.25);
        // plateau area 0.75 * arc gives a quarter turn
        let k_max = std::f64::consts::FRAC_PI_2 / (0.75 * TURN_ARC);
        let sign = if self.kind == TurnKind::Left { 1.0 } else { -1.0 };
        sign * k_max * ramp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LaneChange {
    Signalling {
        until: f64,
        to: u8,
    },
    Moving {
        start: f64,
        from: u8,
        to: u8,
        duration: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pedal {
    Brake,
    Throttle,
}

/// Per-tick output of [`World::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    pub vehicle: VehicleState,
    pub long_accel: f64,
    pub lat_accel: f64,
    pub imu: f64,
}

/// Result of driving one checkpoint-to-checkpoint section.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionOutcome {
    pub index: usize,
    pub features: StateVector,
    pub elapsed: f64,
    /// Time at which the section's end checkpoint was crossed.
    pub arrival: f64,
    /// Samples of [`World::occupant`]'s stream recorded during the section.
    pub imu: Range<usize>,
    pub woke: bool,
}

/// splitmix64, used to key per-intersection randomness independently of
/// the order in which the ego reaches intersections.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone)]
pub struct World {
    route: RouteMap,
    bounds: Vec<f64>,
    crossings: Vec<Crossing>,
    traffic_cfg: TrafficConfig,
    traffic: Traffic,
    traffic_rng: ChaCha8Rng,
    decision_rng: ChaCha8Rng,
    occupant: Occupant,
    ego: VehicleState,
    accel_state: f64,
    lateral: f64,
    lane_change: Option<LaneChange>,
    pedal: Pedal,
    t: f64,
    next_decision: f64,
    still_since: Option<f64>,
    section: usize,
    acc_cycles: usize,
    signal_edges: usize,
    trace: Option<Vec<TraceRow>>,
}

impl World {
    pub fn new(route: RouteMap, traffic_cfg: TrafficConfig, occupant_cfg: OccupantConfig) -> Result<Self> {
        route.validate()?;
        traffic_cfg.validate()?;
        let bounds = route.boundaries();
        let seed = traffic_cfg.congestion_seed;
        let mut crossings = Vec::new();
        for (si, s) in route.sections.iter().enumerate() {
            for (xi, x) in s.intersections.iter().enumerate() {
                let h = mix(seed ^ mix(((si as u64) << 8) | xi as u64));
                let wait = (unit(h) < traffic_cfg.stop_probability).then(|| unit(mix(h)) * traffic_cfg.max_wait);
                crossings.push(Crossing {
                    center: bounds[si] + x.position,
                    kind: x.kind,
                    wait,
                    state: StopState::Approach,
                });
            }
        }
        let mut traffic_rng = ChaCha8Rng::seed_from_u64(seed);
        let total = *bounds.last().expect("validated route");
        let traffic = {
            let limits = Limits {
                route: &route,
                bounds: &bounds,
            };
            Traffic::spawn(&traffic_cfg, total, |p| limits.at(p), &mut traffic_rng)
        };
        Ok(Self {
            occupant: Occupant::new(occupant_cfg, mix(seed ^ 0x0CC0_9A47))?,
            decision_rng: ChaCha8Rng::seed_from_u64(mix(seed ^ 0xDEC1_5104)),
            route,
            bounds,
            crossings,
            traffic_cfg,
            traffic,
            traffic_rng,
            ego: VehicleState {
                brake_engaged: true,
                ..Default::default()
            },
            accel_state: 0.0,
            lateral: 0.0,
            lane_change: None,
            pedal: Pedal::Brake,
            t: 0.0,
            next_decision: 0.0,
            still_since: None,
            section: 0,
            acc_cycles: 0,
            signal_edges: 0,
            trace: None,
        })
    }

    pub fn record_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceRow]> {
        self.trace.as_deref()
    }

    pub fn route(&self) -> &RouteMap {
        &self.route
    }

    pub fn vehicle(&self) -> &VehicleState {
        &self.ego
    }

    pub fn traffic(&self) -> &Traffic {
        &self.traffic
    }

    pub fn occupant(&self) -> &Occupant {
        &self.occupant
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Index of the next checkpoint-to-checkpoint section to drive.
    pub fn section(&self) -> usize {
        self.section
    }

    pub fn finished(&self) -> bool {
        self.section >= self.route.len()
    }

    /// Wait at each intersection (`None` = no stop), in route order.
    pub fn intersection_waits(&self) -> Vec<Option<f64>> {
        self.crossings.iter().map(|c| c.wait).collect()
    }

    fn limits(&self) -> Limits<'_> {
        Limits {
            route: &self.route,
            bounds: &self.bounds,
        }
    }

    fn section_at(&self, pos: f64) -> usize {
        self.limits().section_at(pos)
    }

    fn occupies_lane0(&self) -> bool {
        match self.lane_change {
            Some(LaneChange::Moving { from, to, .. }) => from == 0 || to == 0,
            _ => self.ego.lane == 0,
        }
    }

    /// True if the ego overlaps a lane-0 vehicle while in lane 0.
    pub fn collision(&self) -> bool {
        if !self.occupies_lane0() {
            return false;
        }
        let front = self.ego.position;
        let rear = front - VEHICLE_LENGTH;
        self.traffic
            .vehicles
            .iter()
            .any(|v| v.rear() < front && v.position > rear)
    }

    /// Position where the lane the ego is in stops being usable: a drop to a
    /// single lane or the start of a turn.
    fn lane_end(&self) -> Option<f64> {
        if self.ego.lane == 0 {
            return None;
        }
        let pos = self.ego.position;
        let mut end = f64::INFINITY;
        for si in self.section_at(pos)..self.route.len() {
            if self.bounds[si] > pos + LOOKAHEAD {
                break;
            }
            if usize::from(self.route.sections[si].lanes) <= usize::from(self.ego.lane) {
                end = end.min(self.bounds[si].max(pos));
                break;
            }
        }
        for c in &self.crossings {
            if c.is_turn() && c.arc_end() > pos && c.arc_start() - 5.0 < end {
                end = c.arc_start() - 5.0;
                break;
            }
        }
        end.is_finite().then_some(end)
    }

    /// Smallest lane count and any turn in `[pos, pos + room]`.
    fn second_lane_free_for(&self, room: f64) -> bool {
        let pos = self.ego.position;
        let mut si = self.section_at(pos);
        while si < self.route.len() && self.bounds[si] < pos + room {
            if self.route.sections[si].lanes < 2 {
                return false;
            }
            si += 1;
        }
        !self
            .crossings
            .iter()
            .any(|c| c.is_turn() && c.arc_end() > pos && c.arc_start() < pos + room)
    }

    /// Whether lane 0 has room for the ego: the ego would not have to brake
    /// harder than its comfortable deceleration, nor would the vehicle behind.
    /// When the ego is stuck at a lane end the follower is allowed to brake.
    fn merge_gap_ok(&self, ctl: &Controller) -> bool {
        let d = &ctl.dynamics;
        let front = self.ego.position;
        let v = self.ego.speed;
        let v0 = ctl.target_speed(self.limits().at(front));
        let ahead = self.traffic.leader_of(front).is_none_or(|lead| {
            lead.0 >= ctl.profile.p_d
                && idm_accel(v, v0, Some(lead), d.a_cap, d.b_comf, ctl.profile.p_d, d.headway) >= -0.5 * d.b_comf
        });
        let stuck = v < 0.5;
        let behind = self.traffic.follower_of(front).is_none_or(|(gap, vf)| {
            if stuck {
                gap >= ctl.profile.p_d + vf
            } else {
                gap >= safe_gap(vf, v)
            }
        });
        ahead && behind
    }

    fn decide_lanes(&mut self, ctl: &Controller) {
        if self.lane_change.is_some() {
            return;
        }
        let lanes_here = self.route.sections[self.section_at(self.ego.position)].lanes;
        let v0 = ctl.target_speed(self.limits().at(self.ego.position));
        let d = &ctl.dynamics;
        let draw: f64 = self.decision_rng.random();
        if self.ego.lane == 0 {
            if !ctl.profile.p_a || lanes_here < 2 {
                return;
            }
            let slow_lead = self
                .traffic
                .leader_of(self.ego.position)
                .is_some_and(|(gap, vl)| gap < OVERTAKE_LOOKAHEAD && vl < d.overtake_fraction * v0);
            let room = v0 * (SIGNAL_LEAD + 2.0 * d.lane_change_time) + 60.0;
            if slow_lead && draw < (100.0 - ctl.profile.p_r) / 100.0 && self.second_lane_free_for(room) {
                self.lane_change = Some(LaneChange::Signalling {
                    until: self.t + SIGNAL_LEAD,
                    to: 1,
                });
            }
        } else {
            let forced = self
                .lane_end()
                .is_some_and(|end| end - self.ego.position < v0 * (SIGNAL_LEAD + d.lane_change_time) + 30.0);
            let voluntary = draw < ctl.profile.p_r / 100.0;
            if (forced || voluntary) && self.merge_gap_ok(ctl) {
                self.lane_change = Some(LaneChange::Signalling {
                    until: self.t + SIGNAL_LEAD,
                    to: self.ego.lane - 1,
                });
            }
        }
    }

    fn advance_lane_change(&mut self, ctl: &Controller) -> f64 {
        match self.lane_change {
            Some(LaneChange::Signalling { until, to }) if self.t >= until => {
                let merging_right = to < self.ego.lane;
                if merging_right && !self.merge_gap_ok(ctl) {
                    self.lane_change = None;
                } else {
                    self.lane_change = Some(LaneChange::Moving {
                        start: self.t,
                        from: self.ego.lane,
                        to,
                        duration: ctl.dynamics.lane_change_time,
                    });
                }
                0.0
            }
            Some(LaneChange::Moving {
                start,
                from,
                to,
                duration,
            }) => {
                let tau = ((self.t - start) / duration).min(1.0);
                let dir = f64::from(to) - f64::from(from);
                let phase = 2.0 * std::f64::consts::PI * tau;
                self.lateral =
                    LANE_WIDTH * (f64::from(from) + dir * (tau - phase.sin() / (2.0 * std::f64::consts::PI)));
                if tau >= 0.5 {
                    self.ego.lane = to;
                }
                if tau >= 1.0 {
                    self.lane_change = None;
                    0.0
                } else {
                    dir * LANE_WIDTH * 2.0 * std::f64::consts::PI / (duration * duration) * phase.sin()
                }
            }
            _ => 0.0,
        }
    }

    fn longitudinal_command(&mut self, ctl: &Controller) -> f64 {
        let d = &ctl.dynamics;
        let pos = self.ego.position;
        let v = self.ego.speed;
        let limits = self.limits();
        let si = limits.section_at(pos);
        let mut v0 = ctl.target_speed(self.route.sections[si].speed_limit);
        for c in &self.crossings {
            if c.is_turn() && pos >= c.arc_start() && pos <= c.arc_end() {
                v0 = v0.min(d.turn_speed);
            }
        }
        let lead = if self.occupies_lane0() {
            self.traffic.leader_of(pos)
        } else {
            None
        };
        // (distance to goal, speed at goal, hard); soft goals are speed-limit drops
        let mut goals: Vec<(f64, f64, bool)> = Vec::new();
        let mut upcoming = v0;
        for j in si + 1..self.route.len() {
            let dist = self.bounds[j] - pos;
            if dist > LIMIT_LOOKAHEAD {
                break;
            }
            let target = ctl.target_speed(self.route.sections[j].speed_limit);
            if target < upcoming {
                goals.push((dist - LIMIT_LEAD_TIME * v, target, false));
                upcoming = target;
            }
        }
        for c in &self.crossings {
            if c.arc_end() < pos {
                continue;
            }
            if c.center - pos > LOOKAHEAD {
                break;
            }
            if c.state == StopState::Approach && c.wait.is_some() {
                goals.push((c.arc_start() - STOP_MARGIN - pos, 0.0, true));
            }
            if c.is_turn() && c.arc_start() > pos {
                goals.push((c.arc_start() - pos, d.turn_speed, true));
            }
        }
        let merging = matches!(self.lane_change, Some(LaneChange::Moving { .. }));
        if let Some(end) = self.lane_end().filter(|_| !merging) {
            goals.push((end - 2.0 - pos, 0.0, true));
        }

        // speed ceiling that reaches every goal at a gentle deceleration
        let mut v_allow = v0;
        for &(dist, v_goal, _) in &goals {
            let room = (dist - 0.5 * v * d.b_comf / d.jerk).max(0.0);
            v_allow = v_allow.min((v_goal * v_goal + 2.0 * APPROACH_DECEL * d.b_comf * room).sqrt());
        }
        let mut cmd = idm_accel(v, v_allow, lead, d.a_cap, d.b_comf, ctl.profile.p_d, d.headway);
        for (dist, v_goal, hard) in goals {
            if v <= v_goal {
                continue;
            }
            if !hard {
                let a_req = if dist > 0.0 {
                    (v * v - v_goal * v_goal) / (2.0 * dist)
                } else {
                    f64::INFINITY
                };
                if a_req >= d.b_comf {
                    cmd = cmd.min(-a_req.min(LIMIT_BRAKE_FACTOR * d.b_comf));
                }
                continue;
            }
            if v_goal == 0.0 && v < SOFT_STOP_SPEED {
                continue;
            }
            if dist <= 0.0 {
                if v_goal == 0.0 {
                    cmd = cmd.min(-MAX_BRAKE);
                }
                continue;
            }
            let v_ok = if v_goal > 0.0 { v_goal + GOAL_SLACK } else { 0.0 };
            if v <= v_ok {
                continue;
            }
            let a_req = (v * v - v_ok * v_ok) / (2.0 * dist);
            if a_req >= d.b_comf {
                cmd = cmd.min(-a_req);
            }
        }
        if cmd >= -EMERGENCY_FACTOR * d.b_comf && v < SOFT_STOP_SPEED {
            cmd = cmd.max(-SOFT_STOP_RATE * v);
        }
        let holding = self
            .crossings
            .iter()
            .any(|c| matches!(c.state, StopState::Waiting { .. }));
        if holding {
            cmd = cmd.min(-d.b_comf);
        }
        cmd.clamp(-MAX_BRAKE, d.a_cap)
    }

    fn update_crossings(&mut self) {
        let pos = self.ego.position;
        let v = self.ego.speed;
        let t = self.t;
        for c in &mut self.crossings {
            if c.arc_end() < pos - 1.0 || c.center - pos > LOOKAHEAD {
                continue;
            }
            match c.state {
                StopState::Approach => match c.wait {
                    Some(w) if v < 0.05 && c.arc_start() - pos < 3.0 => c.state = StopState::Waiting { until: t + w },
                    None => c.state = StopState::Released,
                    _ => {}
                },
                StopState::Waiting { until } if t >= until => c.state = StopState::Released,
                _ => {}
            }
        }
    }

    fn signal_wanted(&self) -> bool {
        if self.lane_change.is_some() {
            return true;
        }
        let pos = self.ego.position;
        self.crossings.iter().any(|c| {
            c.is_turn() && pos <= c.arc_end() && c.arc_start() - pos <= (self.ego.speed * SIGNAL_LEAD).max(5.0)
        })
    }

    /// Advances the world by one tick under `ctl`.
    pub fn step(&mut self, ctl: &Controller) -> Result<Tick> {
        if self.finished() {
            return Err(Error::EpisodeFinished);
        }
        if self.t >= self.next_decision {
            self.decide_lanes(ctl);
            self.next_decision += ctl.profile.p_u / 1000.0;
        }
        let lane_acc = self.advance_lane_change(ctl);
        self.update_crossings();
        let cmd = self.longitudinal_command(ctl);
        let jerk = if cmd < -EMERGENCY_FACTOR * ctl.dynamics.b_comf {
            EMERGENCY_JERK
        } else {
            ctl.dynamics.jerk
        };
        let step = (cmd - self.accel_state).clamp(-jerk * SIM_DT, jerk * SIM_DT);
        self.accel_state += step;

        let v = self.ego.speed;
        let v_new = (v + self.accel_state * SIM_DT).max(0.0);
        let long_acc = (v_new - v) / SIM_DT;
        self.ego.position += 0.5 * (v + v_new) * SIM_DT;
        self.ego.speed = v_new;
        self.ego.accel = long_acc;

        let kappa: f64 = self.crossings.iter().map(|c| c.curvature_at(self.ego.position)).sum();
        let lat_acc = v_new * v_new * kappa + lane_acc;
        let path_kappa = kappa + lane_acc / v_new.max(3.0).powi(2);
        self.ego.steering_angle = (WHEELBASE * path_kappa).atan().clamp(-MAX_STEER, MAX_STEER);

        if self.accel_state > PEDAL_THRESHOLD {
            if self.pedal == Pedal::Brake {
                self.acc_cycles += 1;
            }
            self.pedal = Pedal::Throttle;
        } else if self.accel_state < -PEDAL_THRESHOLD {
            self.pedal = Pedal::Brake;
        }
        self.ego.brake_engaged = self.accel_state < -PEDAL_THRESHOLD;
        let signal = self.signal_wanted();
        if signal && !self.ego.turn_signal {
            self.signal_edges += 1;
        }
        self.ego.turn_signal = signal;

        let imu = self.occupant.sample(long_acc, lat_acc, v_new, SIM_DT)?;

        let ego_in_lane0 = self.occupies_lane0().then_some((self.ego.position, self.ego.speed));
        let limits = Limits {
            route: &self.route,
            bounds: &self.bounds,
        };
        self.traffic.step(
            SIM_DT,
            self.t,
            &self.traffic_cfg,
            |p| limits.at(p),
            ego_in_lane0,
            &mut self.traffic_rng,
        );
        self.t += SIM_DT;

        if v_new < 0.01 {
            let since = *self.still_since.get_or_insert(self.t);
            if self.t - since > STALL_TIMEOUT {
                return Err(Error::Stalled {
                    position: self.ego.position,
                    time: self.t,
                    reason: format!("no progress for {STALL_TIMEOUT} s in lane {}", self.ego.lane),
                });
            }
        } else {
            self.still_since = None;
        }
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRow {
                t: self.t,
                position: self.ego.position,
                speed: v_new,
                accel: long_acc,
                steering: self.ego.steering_angle,
                lane: self.ego.lane,
                turn_signal: u8::from(signal),
                brake: u8::from(self.ego.brake_engaged),
            });
        }
        Ok(Tick {
            vehicle: self.ego,
            long_accel: long_acc,
            lat_accel: lat_acc,
            imu,
        })
    }

    /// Drives from the current checkpoint to the next one at `level`.
    pub fn run_section(&mut self, level: AggressivenessLevel) -> Result<SectionOutcome> {
        if self.finished() {
            return Err(Error::EpisodeFinished);
        }
        let ctl = Controller::new(level);
        let index = self.section;
        let end = self.bounds[index + 1];
        let start_time = self.t;
        let imu_start = self.occupant.sample_count();
        let cycles0 = self.acc_cycles;
        let signals0 = self.signal_edges;
        let mut w_max: f64 = 0.0;
        let mut woke = false;
        let arrival = loop {
            let before = (self.t, self.ego.position);
            let tick = self.step(&ctl)?;
            w_max = w_max.max(tick.vehicle.steering_angle.abs());
            woke |= self.occupant.is_awake();
            if self.ego.position >= end {
                let frac = (end - before.1) / (self.ego.position - before.1);
                break before.0 + frac * (self.t - before.0);
            }
        };
        self.section += 1;
        let imu = imu_start..self.occupant.sample_count();
        let (m_max, m_avg) = motion_features(&self.occupant.stream().samples[imu.clone()])?;
        let elapsed = arrival - start_time;
        let here = &self.route.sections[index];
        let next = self.route.sections.get(index + 1);
        let features = StateVector {
            m_max,
            m_avg,
            n_acc: (self.acc_cycles - cycles0) as f64,
            n_trn: (self.signal_edges - signals0) as f64,
            w_max,
            s_avg: here.length / elapsed,
            s_lmt: here.speed_limit,
            n_lt: here.count(TurnKind::Left) as f64,
            n_rt: here.count(TurnKind::Right) as f64,
            n_st: here.count(TurnKind::Straight) as f64,
            s_lmt_next: next.map_or(here.speed_limit, |s| s.speed_limit),
            n_lt_next: next.map_or(0.0, |s| s.count(TurnKind::Left) as f64),
            n_rt_next: next.map_or(0.0, |s| s.count(TurnKind::Right) as f64),
            n_st_next: next.map_or(0.0, |s| s.count(TurnKind::Straight) as f64),
        };
        Ok(SectionOutcome {
            index,
            features,
            elapsed,
            arrival,
            imu,
            woke,
        })
    }

    /// State vector before the first section: no motion, map data of section 0.
    pub fn initial_state(&self) -> StateVector {
        let s = &self.route.sections[0];
        StateVector {
            s_lmt: s.speed_limit,
            n_lt: s.count(TurnKind::Left) as f64,
            n_rt: s.count(TurnKind::Right) as f64,
            n_st: s.count(TurnKind::Straight) as f64,
            s_lmt_next: s.speed_limit,
            n_lt_next: s.count(TurnKind::Left) as f64,
            n_rt_next: s.count(TurnKind::Right) as f64,
            n_st_next: s.count(TurnKind::Straight) as f64,
            ..Default::default()
        }
    }
}

struct Limits<'a> {
    route: &'a RouteMap,
    bounds: &'a [f64],
}

impl Limits<'_> {
    fn section_at(&self, pos: f64) -> usize {
        let n = self.route.len();
        self.bounds[1..n].partition_point(|&b| b <= pos)
    }

    fn at(&self, pos: f64) -> f64 {
        self.route.sections[self.section_at(pos)].speed_limit
    }
}

/// Fills each section's cumulative ETA by driving the route on an empty
/// road at `reference`.
pub fn compute_etas(route: &RouteMap, reference: AggressivenessLevel) -> Result<RouteMap> {
    let mut world = World::new(route.clone(), TrafficConfig::empty(), OccupantConfig::default())?;
    let mut out = route.clone();
    for s in &mut out.sections {
        s.eta = world.run_section(reference)?.arrival;
    }
    Ok(out)
}

pub fn compute_etas_default(route: &RouteMap) -> Result<RouteMap> {
    compute_etas(route, AggressivenessLevel::new(DEFAULT_REFERENCE_LEVEL)?)
}

/// Drives the whole route at one fixed level; returns per-section outcomes,
/// stopping after the first wake-up if `stop_on_wake`.
pub fn drive_fixed(world: &mut World, level: AggressivenessLevel, stop_on_wake: bool) -> Result<Vec<SectionOutcome>> {
    let mut out = Vec::new();
    while !world.finished() {
        let o = world.run_section(level)?;
        let woke = o.woke;
        out.push(o);
        if woke && stop_on_wake {
            break;
        }
    }
    Ok(out)
}
