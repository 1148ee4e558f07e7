//! Decision-process types shared by every other module.
//!
//! All values here are plain data; the functions are pure.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Number of features in a [`StateVector`].
pub const STATE_DIM: usize = 14;

pub const FEATURE_NAMES: [&str; STATE_DIM] = [
    "m_max",
    "m_avg",
    "n_acc",
    "n_trn",
    "w_max",
    "s_avg",
    "s_lmt",
    "n_lt",
    "n_rt",
    "n_st",
    "s_lmt_next",
    "n_lt_next",
    "n_rt_next",
    "n_st_next",
];

/// Discrete set `{a_min, ..., a_max}` of aggressiveness levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpace {
    pub a_min: u8,
    pub a_max: u8,
}

impl Default for ActionSpace {
    fn default() -> Self {
        Self { a_min: 0, a_max: 10 }
    }
}

impl ActionSpace {
    pub fn new(a_min: u8, a_max: u8) -> Result<Self> {
        let space = Self { a_min, a_max };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a_min >= self.a_max {
            return Err(invalid(format!(
                "action space needs a_min < a_max, got {}..={}",
                self.a_min, self.a_max
            )));
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        usize::from(self.a_max - self.a_min) + 1
    }

    pub fn contains(&self, level: u8) -> bool {
        (self.a_min..=self.a_max).contains(&level)
    }

    /// Level for a categorical action index (`0` maps to `a_min`).
    pub fn level(&self, index: usize) -> Result<AggressivenessLevel> {
        if index >= self.cardinality() {
            return Err(invalid(format!(
                "action index {index} outside space of {} levels",
                self.cardinality()
            )));
        }
        Ok(AggressivenessLevel(self.a_min + index as u8))
    }

    pub fn index(&self, level: AggressivenessLevel) -> Result<usize> {
        if !self.contains(level.0) {
            return Err(invalid(format!(
                "level {} outside {}..={}",
                level.0, self.a_min, self.a_max
            )));
        }
        Ok(usize::from(level.0 - self.a_min))
    }
}

/// Driving aggressiveness level; higher is faster and more maneuver-happy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AggressivenessLevel(u8);

impl AggressivenessLevel {
    /// Validates against the default `{0..10}` space.
    pub fn new(level: u8) -> Result<Self> {
        Self::within(level, &ActionSpace::default())
    }

    pub fn within(level: u8, space: &ActionSpace) -> Result<Self> {
        if space.contains(level) {
            Ok(Self(level))
        } else {
            Err(invalid(format!(
                "aggressiveness level {level} outside {}..={}",
                space.a_min, space.a_max
            )))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl std::fmt::Display for AggressivenessLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-section features: occupant motion, driving operations, and map data for
/// the current and next section.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub m_max: f64,
    pub m_avg: f64,
    pub n_acc: f64,
    pub n_trn: f64,
    pub w_max: f64,
    pub s_avg: f64,
    pub s_lmt: f64,
    pub n_lt: f64,
    pub n_rt: f64,
    pub n_st: f64,
    pub s_lmt_next: f64,
    pub n_lt_next: f64,
    pub n_rt_next: f64,
    pub n_st_next: f64,
}

impl StateVector {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.m_max,
            self.m_avg,
            self.n_acc,
            self.n_trn,
            self.w_max,
            self.s_avg,
            self.s_lmt,
            self.n_lt,
            self.n_rt,
            self.n_st,
            self.s_lmt_next,
            self.n_lt_next,
            self.n_rt_next,
            self.n_st_next,
        ]
    }

    pub fn from_array(v: [f64; STATE_DIM]) -> Self {
        Self {
            m_max: v[0],
            m_avg: v[1],
            n_acc: v[2],
            n_trn: v[3],
            w_max: v[4],
            s_avg: v[5],
            s_lmt: v[6],
            n_lt: v[7],
            n_rt: v[8],
            n_st: v[9],
            s_lmt_next: v[10],
            n_lt_next: v[11],
            n_rt_next: v[12],
            n_st_next: v[13],
        }
    }

    /// Checks the sign and ordering constraints on the features.
    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(invalid("state vector has non-finite features"));
        }
        let counts = [2, 3, 7, 8, 9, 11, 12, 13];
        if counts.iter().any(|&i| a[i] < 0.0) || self.s_avg < 0.0 || self.m_avg < 0.0 {
            return Err(invalid("state vector has negative counts or speeds"));
        }
        if self.m_max < self.m_avg {
            return Err(invalid(format!("m_max {} < m_avg {}", self.m_max, self.m_avg)));
        }
        if self.s_lmt <= 0.0 {
            return Err(invalid("speed limit must be positive"));
        }
        Ok(())
    }
}

/// The `k` most recent state vectors, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub columns: Vec<StateVector>,
}

impl Observation {
    pub fn k(&self) -> usize {
        self.columns.len()
    }
}

/// Window of the last `k` entries of `history`. Short histories are padded on
/// the left by repeating the earliest entry.
pub fn build_observation(history: &[StateVector], k: usize) -> Result<Observation> {
    if k == 0 {
        return Err(invalid("observation window k must be >= 1"));
    }
    let first = *history.first().ok_or_else(|| invalid("empty state history"))?;
    let tail = &history[history.len().saturating_sub(k)..];
    let mut columns = vec![first; k - tail.len()];
    columns.extend_from_slice(tail);
    Ok(Observation { columns })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// ETA/ATA ratio at or below which the reward is zero.
    pub epsilon_th: f64,
    /// Sharpness of the exponential ramp between `epsilon_th` and 1.
    pub beta: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            epsilon_th: 0.5,
            beta: 3.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_th > 0.0 && self.epsilon_th < 1.0) {
            return Err(invalid(format!("epsilon_th {} must lie in (0, 1)", self.epsilon_th)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta {} must be positive", self.beta)));
        }
        Ok(())
    }
}

/// Schedule-adherence reward for an ETA/ATA ratio `eps`.
///
/// Zero up to `epsilon_th`, one from `eps = 1` on, and a normalized
/// exponential ramp in between that meets both ends continuously.
pub fn reward(eps: f64, cfg: &RewardConfig) -> Result<f64> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(invalid(format!("ETA/ATA ratio must be positive and finite, got {eps}")));
    }
    if eps <= cfg.epsilon_th {
        return Ok(0.0);
    }
    if eps >= 1.0 {
        return Ok(1.0);
    }
    let u = (eps - cfg.epsilon_th) / (1.0 - cfg.epsilon_th);
    Ok((cfg.beta * u).exp_m1() / cfg.beta.exp_m1())
}

/// `t_eta / t_ata`.
pub fn eta_ratio(t_eta: f64, t_ata: f64) -> Result<f64> {
    if !(t_eta > 0.0 && t_ata > 0.0) || !t_eta.is_finite() || !t_ata.is_finite() {
        return Err(invalid(format!("times must be positive, got eta {t_eta}, ata {t_ata}")));
    }
    Ok(t_eta / t_ata)
}

/// Per-feature affine range used to condition network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureScales {
    pub min: [f64; STATE_DIM],
    pub max: [f64; STATE_DIM],
}

impl Default for FeatureScales {
    fn default() -> Self {
        Self {
            min: [0.0; STATE_DIM],
            max: [
                3.0, 1.5, 10.0, 10.0, 0.5, 25.0, 25.0, 3.0, 3.0, 3.0, 25.0, 3.0, 3.0, 3.0,
            ],
        }
    }
}

impl FeatureScales {
    pub fn validate(&self) -> Result<()> {
        for i in 0..STATE_DIM {
            let (lo, hi) = (self.min[i], self.max[i]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(invalid(format!(
                    "feature scale for {} needs finite max > min, got [{lo}, {hi}]",
                    FEATURE_NAMES[i]
                )));
            }
        }
        Ok(())
    }
}

/// Maps each feature to `[0, 1]` by its range, clamping values outside it.
pub fn normalize_state(v: &StateVector, scales: &FeatureScales) -> [f64; STATE_DIM] {
    let raw = v.to_array();
    std::array::from_fn(|i| ((raw[i] - scales.min[i]) / (scales.max[i] - scales.min[i])).clamp(0.0, 1.0))
}

/// Inverse of [`normalize_state`] for unclamped values.
pub fn denormalize_state(x: &[f64; STATE_DIM], scales: &FeatureScales) -> StateVector {
    StateVector::from_array(std::array::from_fn(|i| {
        scales.min[i] + x[i] * (scales.max[i] - scales.min[i])
    }))
}

/// One decision of a trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Observation,
    pub action: AggressivenessLevel,
    pub reward: f64,
    pub done: bool,
    pub value_estimate: f64,
    pub log_prob: f64,
}

/// A single episode: decisions in order, ending at route completion or wake-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSequence {
    pub transitions: Vec<Transition>,
    pub terminated_by_wakeup: bool,
    pub route_id: String,
    pub seed: u64,
}

impl TripSequence {
    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.transitions.iter().position(|t| t.done) {
            if pos + 1 != self.transitions.len() {
                return Err(invalid("only the last transition may be terminal"));
            }
        }
        for t in &self.transitions {
            if !(0.0..=1.0).contains(&t.reward) {
                return Err(invalid(format!("reward {} outside [0, 1]", t.reward)));
            }
            if !t.value_estimate.is_finite() {
                return Err(invalid("non-finite value estimate"));
            }
        }
        Ok(())
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}
