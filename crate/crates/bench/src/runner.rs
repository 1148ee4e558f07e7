use std::ops::Range;

use lullaby_core::domain::AggressivenessLevel;
use lullaby_core::env::{evaluation_pool, DrivingEnv, EnvConfig, Scenario};
use lullaby_nets::{ActMode, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{categorize, late_rate, rel_max_movement};
use crate::report::{EvalReport, TripRecord};

/// How a benchmarked policy picks levels.
#[derive(Debug, Clone)]
pub enum Driver {
    /// Greedy action of a trained network.
    Trained(Box<Policy>),
    Fixed(AggressivenessLevel),
    /// Uniform over the action space, reseeded per trip from `seed` and the
    /// scenario.
    Uniform {
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct BenchPolicy {
    pub name: String,
    pub driver: Driver,
}

impl BenchPolicy {
    pub fn trained(name: impl Into<String>, policy: Policy) -> Self {
        Self {
            name: name.into(),
            driver: Driver::Trained(Box::new(policy)),
        }
    }

    pub fn fixed(name: impl Into<String>, level: u8) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            driver: Driver::Fixed(AggressivenessLevel::new(level)?),
        })
    }

    pub fn uniform(name: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            driver: Driver::Uniform { seed },
        }
    }
}

/// `actn8`, `actn2` and `rand`.
pub fn baselines(rand_seed: u64) -> Vec<BenchPolicy> {
    vec![
        BenchPolicy::fixed("actn8", 8).expect("level 8 is valid"),
        BenchPolicy::fixed("actn2", 2).expect("level 2 is valid"),
        BenchPolicy::uniform("rand", rand_seed),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub env: EnvConfig,
    pub route_seeds: Range<u64>,
    pub episodes_per_route: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            route_seeds: 1000..1010,
            episodes_per_route: 3,
        }
    }
}

impl BenchConfig {
    pub fn scenarios(&self) -> Vec<Scenario> {
        evaluation_pool(self.route_seeds.clone(), self.episodes_per_route)
    }
}

fn trip_rng(seed: u64, s: Scenario) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ s.route_seed.rotate_left(32) ^ s.traffic_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Drives one scenario to wake-up or completion.
pub fn run_trip(env: &mut DrivingEnv, policy: &BenchPolicy, scenario: Scenario) -> Result<TripRecord> {
    let fail = |source| Error::Trip {
        policy: policy.name.clone(),
        route_seed: scenario.route_seed,
        traffic_seed: scenario.traffic_seed,
        source,
    };
    let actions = env.config().actions;
    let mut obs = env.reset_to(scenario).map_err(fail)?;
    let mut rng = match &policy.driver {
        Driver::Uniform { seed } => trip_rng(*seed, scenario),
        _ => ChaCha8Rng::seed_from_u64(0),
    };
    let mut total_reward = 0.0;
    loop {
        let level = match &policy.driver {
            Driver::Trained(p) => p.act(&obs, ActMode::Greedy, &mut rng)?.level,
            Driver::Fixed(l) => *l,
            Driver::Uniform { .. } => actions.level(rng.random_range(0..actions.cardinality()))?,
        };
        let out = env.step_level(level).map_err(fail)?;
        total_reward += out.reward;
        obs = out.observation;
        if out.done {
            break;
        }
    }
    let trip = env.trip();
    let (ata, eta) = trip
        .final_times()
        .ok_or_else(|| Error::Invalid("trip made no decisions".into()))?;
    let threshold = env.config().occupant.wake.threshold;
    let world = env.world().expect("world exists after reset");
    let late = late_rate(ata, eta)?;
    let movement = rel_max_movement(&world.occupant().stream().samples, threshold)?;
    Ok(TripRecord {
        policy: policy.name.clone(),
        route_id: trip.route_id.clone(),
        route_seed: scenario.route_seed,
        traffic_seed: scenario.traffic_seed,
        decisions: trip.levels.len(),
        late_rate: late,
        rel_max_movement: movement,
        woke_up: trip.woke,
        category: categorize(late, movement)?,
        total_reward,
    })
}

/// Every policy on every scenario of `cfg`, in policy-major order.
pub fn run_benchmark(cfg: &BenchConfig, policies: &[BenchPolicy]) -> Result<EvalReport> {
    let scenarios = cfg.scenarios();
    run_on(&cfg.env, &scenarios, policies)
}

/// Like [`run_benchmark`] on an explicit scenario list.
pub fn run_on(env_cfg: &EnvConfig, scenarios: &[Scenario], policies: &[BenchPolicy]) -> Result<EvalReport> {
    if scenarios.is_empty() || policies.is_empty() {
        return Err(Error::Invalid("benchmark needs scenarios and policies".into()));
    }
    let mut env = DrivingEnv::new(env_cfg.clone(), scenarios.to_vec(), 0)?;
    let mut trips = Vec::with_capacity(scenarios.len() * policies.len());
    for p in policies {
        for &s in scenarios {
            trips.push(run_trip(&mut env, p, s)?);
        }
    }
    Ok(EvalReport::from_trips(trips))
}
