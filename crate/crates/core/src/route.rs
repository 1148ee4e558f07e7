//! Checkpointed routes and their on-disk form.
//!
//! Route files are TOML documents:
//!
//! ```toml
//! schema_version = 1
//! route_id = "route-0007"
//! checkpoint_spacing = 300.0
//!
//! [[sections]]
//! length = 300.0        # meters
//! speed_limit = 13.9    # m/s
//! lanes = 2
//! intersections = [{ kind = "left", position = 120.0 }]
//! ```
//!
//! ETAs are not stored; they depend on the reference level and are computed
//! on load by [`crate::world::compute_etas`].

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const ROUTE_SCHEMA_VERSION: u32 = 1;

/// Speed-limit palette for generated routes: 30, 40, 50 and 70 km/h.
pub const SPEED_LIMIT_PALETTE: [f64; 4] = [8.3, 11.1, 13.9, 19.4];

/// Default checkpoint spacing for generated routes, meters.
pub const DEFAULT_SPACING: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnKind {
    Left,
    Right,
    Straight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intersection {
    pub kind: TurnKind,
    /// Distance from the start of the section, meters.
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub length: f64,
    pub speed_limit: f64,
    #[serde(default)]
    pub intersections: Vec<Intersection>,
    pub lanes: u8,
    /// Cumulative ETA at the end of this section, seconds. Zero until
    /// computed.
    #[serde(skip)]
    pub eta: f64,
}

impl Section {
    pub fn count(&self, kind: TurnKind) -> usize {
        self.intersections.iter().filter(|i| i.kind == kind).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteMap {
    pub route_id: String,
    pub checkpoint_spacing: f64,
    pub sections: Vec<Section>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteFile {
    schema_version: u32,
    #[serde(flatten)]
    route: RouteMap,
}

impl RouteMap {
    pub fn validate(&self) -> Result<()> {
        if self.sections.len() < 2 {
            return Err(invalid(format!(
                "route needs >= 2 sections, has {}",
                self.sections.len()
            )));
        }
        if !(self.checkpoint_spacing > 0.0) {
            return Err(invalid("checkpoint spacing must be positive"));
        }
        for (i, s) in self.sections.iter().enumerate() {
            if !(s.length > 0.0 && s.length.is_finite()) {
                return Err(invalid(format!("section {i}: length must be positive")));
            }
            if !(s.speed_limit > 0.0 && s.speed_limit.is_finite()) {
                return Err(invalid(format!("section {i}: speed limit must be positive")));
            }
            if s.lanes == 0 {
                return Err(invalid(format!("section {i}: needs at least one lane")));
            }
            let mut last = -1.0;
            for x in &s.intersections {
                if !(x.position >= 0.0 && x.position < s.length) || x.position <= last {
                    return Err(invalid(format!(
                        "section {i}: intersections must be ordered and inside the section"
                    )));
                }
                last = x.position;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.sections.iter().map(|s| s.length).sum()
    }

    /// Route position of the start of each section, plus the route end.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.sections.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for s in &self.sections {
            acc += s.length;
            out.push(acc);
        }
        out
    }

    pub fn has_etas(&self) -> bool {
        self.sections.windows(2).all(|w| w[1].eta > w[0].eta) && self.sections[0].eta > 0.0
    }

    pub fn etas(&self) -> Vec<f64> {
        self.sections.iter().map(|s| s.eta).collect()
    }

    pub fn to_toml(&self) -> String {
        let file = RouteFile {
            schema_version: ROUTE_SCHEMA_VERSION,
            route: self.clone(),
        };
        toml::to_string(&file).expect("route serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: RouteFile = toml::from_str(text).map_err(|e| invalid(format!("route document: {e}")))?;
        if file.schema_version != ROUTE_SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported route schema version {} (expected {ROUTE_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        file.route.validate()?;
        Ok(file.route)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::RouteFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| Error::RouteFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}

/// Deterministic pseudo-random route with `n_checkpoints` sections.
pub fn generate_route(seed: u64, n_checkpoints: usize) -> Result<RouteMap> {
    generate_route_with_spacing(seed, n_checkpoints, DEFAULT_SPACING)
}

pub fn generate_route_with_spacing(seed: u64, n_checkpoints: usize, spacing: f64) -> Result<RouteMap> {
    if n_checkpoints < 2 {
        return Err(invalid(format!("need at least 2 checkpoints, got {n_checkpoints}")));
    }
    if !(spacing >= 100.0) {
        return Err(invalid(format!("checkpoint spacing {spacing} m is below 100 m")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EC7_10A5);
    let mut sections = Vec::with_capacity(n_checkpoints);
    for _ in 0..n_checkpoints {
        let speed_limit = SPEED_LIMIT_PALETTE[rng.random_range(0..SPEED_LIMIT_PALETTE.len())];
        let lanes = rng.random_range(1..=3u8);
        let count = rng.random_range(0..=3usize);
        // intersections sit in evenly sized slots at least 40 m apart, 30 m clear of each end
        let usable = spacing - 60.0;
        let mut intersections = Vec::with_capacity(count);
        for slot in 0..count {
            let width = usable / count as f64;
            let position = 30.0 + width * slot as f64 + rng.random::<f64>() * (width - 40.0).max(0.0);
            let kind = match rng.random_range(0..3) {
                0 => TurnKind::Left,
                1 => TurnKind::Right,
                _ => TurnKind::Straight,
            };
            intersections.push(Intersection {
                kind,
                position: (position * 10.0).round() / 10.0,
            });
        }
        sections.push(Section {
            length: spacing,
            speed_limit,
            intersections,
            lanes,
            eta: 0.0,
        });
    }
    let route = RouteMap {
        route_id: format!("route-{seed:04}"),
        checkpoint_spacing: spacing,
        sections,
    };
    route.validate()?;
    Ok(route)
}
