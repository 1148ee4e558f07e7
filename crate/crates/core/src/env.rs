//! The checkpoint decision process: one action per section, reward settled at
//! the next checkpoint, termination on wake-up or route completion.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    build_observation, eta_ratio, normalize_state, reward, ActionSpace, AggressivenessLevel, FeatureScales,
    Observation, RewardConfig, StateVector, STATE_DIM,
};
use crate::error::{invalid, Error, Result};
use crate::occupant::OccupantConfig;
use crate::route::{generate_route_with_spacing, RouteMap};
use crate::traffic::TrafficConfig;
use crate::world::{compute_etas, TraceRow, World};

/// Flattened, normalized network input: `k` rows of `dim` features, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    pub k: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl PolicyInput {
    pub fn new(k: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * dim || k == 0 || dim == 0 {
            return Err(invalid(format!("{} values for a {k} x {dim} input", data.len())));
        }
        Ok(Self { k, dim, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: PolicyInput,
    pub reward: f64,
    pub done: bool,
    /// Episode ended because the occupant woke up.
    pub woke: bool,
}

/// Minimal episodic interface used by the trainer.
pub trait Environment {
    fn action_count(&self) -> usize;
    /// Starts a new episode and returns its first observation.
    fn reset(&mut self) -> Result<PolicyInput>;
    /// Applies the action with the given index.
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
}

/// One route plus one traffic draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub route_seed: u64,
    pub traffic_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub checkpoints: usize,
    pub checkpoint_spacing: f64,
    pub k: usize,
    pub reference_level: u8,
    pub actions: ActionSpace,
    pub reward: RewardConfig,
    pub occupant: OccupantConfig,
    pub scales: FeatureScales,
    /// Traffic density is drawn uniformly from `[0, max_density]` per scenario.
    pub max_density: f64,
    /// Lead speed fraction is drawn uniformly from this range per scenario.
    pub speed_fraction: [f64; 2],
    pub stop_probability: f64,
    pub max_wait: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            checkpoints: 100,
            checkpoint_spacing: 300.0,
            k: 5,
            reference_level: 5,
            actions: ActionSpace::default(),
            reward: RewardConfig::default(),
            occupant: OccupantConfig::default(),
            scales: FeatureScales::default(),
            max_density: 20.0,
            speed_fraction: [0.45, 0.95],
            stop_probability: 0.5,
            max_wait: 8.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoints < 2 || self.k == 0 {
            return Err(invalid("need checkpoints >= 2 and k >= 1"));
        }
        self.actions.validate()?;
        self.reward.validate()?;
        self.occupant.validate()?;
        self.scales.validate()?;
        AggressivenessLevel::new(self.reference_level)?;
        let [lo, hi] = self.speed_fraction;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) || !(self.max_density >= 0.0) {
            return Err(invalid("traffic ranges out of bounds"));
        }
        self.traffic_for(Scenario {
            route_seed: 0,
            traffic_seed: 0,
        })
        .validate()
    }

    /// Traffic settings of a scenario, drawn from its traffic seed.
    pub fn traffic_for(&self, s: Scenario) -> TrafficConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(s.traffic_seed ^ 0x7AFF_1C00);
        let [lo, hi] = self.speed_fraction;
        TrafficConfig {
            lead_vehicle_density: rng.random::<f64>() * self.max_density,
            lead_speed_fraction: lo + rng.random::<f64>() * (hi - lo),
            congestion_seed: s.traffic_seed,
            stop_probability: self.stop_probability,
            max_wait: self.max_wait,
        }
    }
}

/// Per-trip record kept by [`DrivingEnv`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripLog {
    pub route_id: String,
    pub levels: Vec<u8>,
    pub rewards: Vec<f64>,
    pub arrivals: Vec<f64>,
    pub etas: Vec<f64>,
    pub woke: bool,
    pub peak_imu: f64,
}

impl TripLog {
    pub fn final_times(&self) -> Option<(f64, f64)> {
        Some((*self.arrivals.last()?, *self.etas.last()?))
    }
}

/// The driving MDP over a pool of scenarios.
pub struct DrivingEnv {
    cfg: EnvConfig,
    pool: Vec<Scenario>,
    rng: ChaCha8Rng,
    routes: HashMap<u64, RouteMap>,
    world: Option<World>,
    route: Option<RouteMap>,
    history: Vec<StateVector>,
    scenario: Option<Scenario>,
    trace: bool,
    log: TripLog,
}

impl DrivingEnv {
    /// `seed` drives scenario sampling in [`Environment::reset`].
    pub fn new(cfg: EnvConfig, pool: Vec<Scenario>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if pool.is_empty() {
            return Err(invalid("scenario pool is empty"));
        }
        Ok(Self {
            cfg,
            pool,
            rng: ChaCha8Rng::seed_from_u64(seed),
            routes: HashMap::new(),
            world: None,
            route: None,
            history: Vec::new(),
            scenario: None,
            trace: false,
            log: TripLog::default(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn record_trace(&mut self, on: bool) {
        self.trace = on;
    }

    /// Route with ETAs, generated on first use.
    pub fn route_for(&mut self, route_seed: u64) -> Result<RouteMap> {
        if let Some(r) = self.routes.get(&route_seed) {
            return Ok(r.clone());
        }
        let raw = generate_route_with_spacing(route_seed, self.cfg.checkpoints, self.cfg.checkpoint_spacing)?;
        let r = compute_etas(&raw, AggressivenessLevel::new(self.cfg.reference_level)?)?;
        self.routes.insert(route_seed, r.clone());
        Ok(r)
    }

    /// Starts an episode on a route that is already loaded (for example from
    /// a file). ETAs are computed if missing.
    pub fn reset_with_route(&mut self, route: RouteMap, traffic: TrafficConfig) -> Result<PolicyInput> {
        let route = if route.has_etas() {
            route
        } else {
            compute_etas(&route, AggressivenessLevel::new(self.cfg.reference_level)?)?
        };
        let mut world = World::new(route.clone(), traffic, self.cfg.occupant)?;
        world.record_trace(self.trace);
        self.history = vec![world.initial_state()];
        self.log = TripLog {
            route_id: route.route_id.clone(),
            ..Default::default()
        };
        self.world = Some(world);
        self.route = Some(route);
        self.observation()
    }

    pub fn reset_to(&mut self, scenario: Scenario) -> Result<PolicyInput> {
        let route = self.route_for(scenario.route_seed)?;
        let traffic = self.cfg.traffic_for(scenario);
        let obs = self.reset_with_route(route, traffic)?;
        self.scenario = Some(scenario);
        Ok(obs)
    }

    pub fn scenario(&self) -> Option<Scenario> {
        self.scenario
    }

    pub fn trip(&self) -> &TripLog {
        &self.log
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    pub fn trace(&self) -> Option<&[TraceRow]> {
        self.world.as_ref().and_then(World::trace)
    }

    pub fn raw_observation(&self) -> Result<Observation> {
        build_observation(&self.history, self.cfg.k)
    }

    fn observation(&self) -> Result<PolicyInput> {
        let obs = self.raw_observation()?;
        let data = obs
            .columns
            .iter()
            .flat_map(|v| normalize_state(v, &self.cfg.scales))
            .collect();
        PolicyInput::new(self.cfg.k, STATE_DIM, data)
    }

    /// Drives one section at an explicit level.
    pub fn step_level(&mut self, level: AggressivenessLevel) -> Result<StepOutcome> {
        let world = self.world.as_mut().ok_or(Error::EpisodeFinished)?;
        let route = self.route.as_ref().ok_or(Error::EpisodeFinished)?;
        if world.finished() || self.log.woke {
            return Err(Error::EpisodeFinished);
        }
        let out = world.run_section(level)?;
        let eta = route.sections[out.index].eta;
        let r = reward(eta_ratio(eta, out.arrival)?, &self.cfg.reward)?;
        let done = out.woke || world.finished();
        let peak = world.occupant().stream().samples[out.imu.clone()]
            .iter()
            .copied()
            .fold(self.log.peak_imu, f64::max);
        self.history.push(out.features);
        self.log.levels.push(level.value());
        self.log.rewards.push(r);
        self.log.arrivals.push(out.arrival);
        self.log.etas.push(eta);
        self.log.woke = out.woke;
        self.log.peak_imu = peak;
        Ok(StepOutcome {
            observation: self.observation()?,
            reward: r,
            done,
            woke: out.woke,
        })
    }
}

impl Environment for DrivingEnv {
    fn action_count(&self) -> usize {
        self.cfg.actions.cardinality()
    }

    fn reset(&mut self) -> Result<PolicyInput> {
        let s = self.pool[self.rng.random_range(0..self.pool.len())];
        self.reset_to(s)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let level = self.cfg.actions.level(action)?;
        self.step_level(level)
    }
}

/// Training pool: route seeds `seeds`, one traffic draw each.
pub fn training_pool(seeds: std::ops::Range<u64>) -> Vec<Scenario> {
    seeds
        .map(|s| Scenario {
            route_seed: s,
            traffic_seed: s,
        })
        .collect()
}

/// Evaluation cells: every route seed crossed with `episodes` traffic draws.
pub fn evaluation_pool(route_seeds: std::ops::Range<u64>, episodes: u64) -> Vec<Scenario> {
    route_seeds
        .flat_map(|r| {
            (0..episodes).map(move |e| Scenario {
                route_seed: r,
                traffic_seed: r * 1000 + e,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EnvConfig {
        EnvConfig {
            checkpoints: 6,
            ..Default::default()
        }
    }

    #[test]
    fn observation_has_k_rows_from_the_start() {
        let mut env = DrivingEnv::new(small(), training_pool(0..3), 1).unwrap();
        let obs = env.reset().unwrap();
        assert_eq!((obs.k, obs.dim, obs.data.len()), (5, STATE_DIM, 5 * STATE_DIM));
        assert_eq!(obs.row(0), obs.row(4));
        assert!(obs.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn episode_runs_to_completion_or_wake() {
        let mut env = DrivingEnv::new(small(), training_pool(0..3), 1).unwrap();
        env.reset().unwrap();
        let mut steps = 0;
        loop {
            let out = env.step(1).unwrap();
            steps += 1;
            assert!((0.0..=1.0).contains(&out.reward));
            if out.done {
                assert_eq!(out.woke, env.trip().woke);
                break;
            }
        }
        assert!(steps <= 6);
        assert!(env.step(1).is_err());
    }

    #[test]
    fn same_scenario_same_trip() {
        let run = || {
            let mut env = DrivingEnv::new(small(), training_pool(0..1), 9).unwrap();
            env.reset().unwrap();
            let mut rewards = Vec::new();
            for a in [3, 7, 2, 5, 0, 10] {
                match env.step(a) {
                    Ok(o) => {
                        rewards.push(o.reward);
                        if o.done {
                            break;
                        }
                    }
                    Err(e) => panic!("{e}"),
                }
            }
            (rewards, env.trip().clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scenario_traffic_is_within_ranges() {
        let cfg = EnvConfig::default();
        for s in training_pool(0..50) {
            let t = cfg.traffic_for(s);
            assert!((0.0..=20.0).contains(&t.lead_vehicle_density));
            assert!((0.45..=0.95).contains(&t.lead_speed_fraction));
        }
    }

    #[test]
    fn evaluation_pool_is_disjoint_from_training() {
        let train = training_pool(0..100);
        let eval = evaluation_pool(1000..1010, 3);
        assert_eq!(eval.len(), 30);
        assert!(eval.iter().all(|e| train.iter().all(|t| t.route_seed != e.route_seed)));
    }
}
