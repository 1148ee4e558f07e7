use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::Category;

pub const REPORT_FILE: &str = "report.csv";
pub const AGGREGATES_FILE: &str = "aggregates.csv";
pub const BUBBLES_FILE: &str = "bubbles.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub policy: String,
    pub route_id: String,
    pub route_seed: u64,
    pub traffic_seed: u64,
    pub decisions: usize,
    pub late_rate: f64,
    pub rel_max_movement: f64,
    pub woke_up: bool,
    pub category: Category,
    pub total_reward: f64,
}

/// Per-policy summary. `*_se` are standard errors of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub policy: String,
    pub trips: usize,
    pub mean_late_rate: f64,
    pub late_rate_se: f64,
    pub wake_up_rate: f64,
    pub wake_up_se: f64,
    pub mean_rel_max_movement: f64,
    pub mean_total_reward: f64,
    pub good: usize,
    pub acceptable: usize,
    pub poor: usize,
}

#[derive(Debug, Serialize)]
struct Bubble<'a> {
    policy: &'a str,
    rel_max_movement: f64,
    late_rate: f64,
    category: Category,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl Aggregate {
    pub fn of(policy: &str, trips: &[&TripRecord]) -> Self {
        let late: Vec<f64> = trips.iter().map(|t| t.late_rate).collect();
        let woke: Vec<f64> = trips.iter().map(|t| f64::from(u8::from(t.woke_up))).collect();
        let (mean_late_rate, late_rate_se) = mean_and_se(&late);
        let (wake_up_rate, wake_up_se) = mean_and_se(&woke);
        let n = trips.len() as f64;
        let count = |c| trips.iter().filter(|t| t.category == c).count();
        Self {
            policy: policy.to_string(),
            trips: trips.len(),
            mean_late_rate,
            late_rate_se,
            wake_up_rate,
            wake_up_se,
            mean_rel_max_movement: trips.iter().map(|t| t.rel_max_movement).sum::<f64>() / n,
            mean_total_reward: trips.iter().map(|t| t.total_reward).sum::<f64>() / n,
            good: count(Category::Good),
            acceptable: count(Category::Acceptable),
            poor: count(Category::Poor),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub trips: Vec<TripRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl EvalReport {
    /// Aggregates per policy, in order of first appearance.
    pub fn from_trips(trips: Vec<TripRecord>) -> Self {
        let mut names: Vec<&str> = Vec::new();
        for t in &trips {
            if !names.contains(&t.policy.as_str()) {
                names.push(&t.policy);
            }
        }
        let aggregates = names
            .iter()
            .map(|name| {
                let mine: Vec<&TripRecord> = trips.iter().filter(|t| t.policy == *name).collect();
                Aggregate::of(name, &mine)
            })
            .collect();
        Self { trips, aggregates }
    }

    pub fn aggregate(&self, policy: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.policy == policy)
    }

    pub fn trips_of<'a>(&'a self, policy: &'a str) -> impl Iterator<Item = &'a TripRecord> + 'a {
        self.trips.iter().filter(move |t| t.policy == policy)
    }

    /// Writes `report.csv`, `aggregates.csv` and `bubbles.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(REPORT_FILE))?;
        for t in &self.trips {
            w.serialize(t)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(AGGREGATES_FILE))?;
        for a in &self.aggregates {
            w.serialize(a)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(BUBBLES_FILE))?;
        for t in &self.trips {
            w.serialize(Bubble {
                policy: &t.policy,
                rel_max_movement: t.rel_max_movement,
                late_rate: t.late_rate,
                category: t.category,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads per-trip records back and re-aggregates them.
    pub fn read_trips(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let trips = r.deserialize().collect::<Result<Vec<TripRecord>, _>>()?;
        Ok(Self::from_trips(trips))
    }
}
