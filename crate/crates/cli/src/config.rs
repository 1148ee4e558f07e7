use std::ops::Range;
use std::path::{Path, PathBuf};

use lullaby_core::env::EnvConfig;
use lullaby_nets::{Architecture, PolicyConfig};
use lullaby_ppo::PpoConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "LULLABY__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub arch: Architecture,
    /// Route seeds of the training pool.
    pub route_seeds: Range<u64>,
    /// Print a progress line every this many iterations; 0 silences it.
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            arch: Architecture::Lstm,
            route_seeds: 0..100,
            log_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub route_seeds: Range<u64>,
    pub episodes_per_route: u64,
    pub rand_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            route_seeds: 1000..1010,
            episodes_per_route: 3,
            rand_seed: 0,
        }
    }
}

/// Everything a run needs, loaded from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run_id: String,
    pub output_dir: PathBuf,
    /// Seeds network initialization and scenario sampling; the trainer's
    /// sampling stream uses `seed + ppo.seed + 1`.
    pub seed: u64,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            output_dir: PathBuf::from("runs"),
            seed: 0,
            env: EnvConfig::default(),
            policy: PolicyConfig::default(),
            ppo: PpoConfig::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        if i64::try_from(self.seed).is_err()
            || i64::try_from(self.ppo.seed).is_err()
            || i64::try_from(self.eval.rand_seed).is_err()
        {
            return Err(CliError::Config("seeds must fit in a signed 64-bit integer".into()));
        }
        self.env.validate().map_err(|e| bad(&e))?;
        self.policy.validate().map_err(|e| bad(&e))?;
        self.ppo.validate().map_err(|e| bad(&e))?;
        if self.policy.seq_len != self.env.k {
            return Err(CliError::Config(format!(
                "policy.seq_len ({}) must equal env.k ({})",
                self.policy.seq_len, self.env.k
            )));
        }
        if self.policy.actions != self.env.actions {
            return Err(CliError::Config("policy.actions must equal env.actions".into()));
        }
        if self.train.route_seeds.is_empty() || self.eval.route_seeds.is_empty() || self.eval.episodes_per_route == 0 {
            return Err(CliError::Config(
                "route seed ranges and episode counts must be non-empty".into(),
            ));
        }
        let (t, e) = (&self.train.route_seeds, &self.eval.route_seeds);
        if t.start < e.end && e.start < t.end {
            return Err(CliError::Config("training and evaluation route seeds overlap".into()));
        }
        Ok(())
    }

    /// Reads `path` (or the defaults when `None`), applies environment
    /// overrides and validates.
    pub fn load(path: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut tree: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("config is not valid TOML: {e}")))?;
        apply_overrides(&mut tree, vars)?;
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(tree))
            .map_err(|e| CliError::Config(format!("config field `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }
}

/// Applies `LULLABY__SECTION__KEY=value` variables. Values are read as TOML
/// literals and fall back to plain strings.
pub fn apply_overrides(
    tree: &mut toml::Table,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<(), CliError> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Config(format!("malformed override variable `{key}`")));
        }
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(toml::Value::String(raw));
        let (last, parents) = path.split_last().expect("non-empty path");
        let mut node = &mut *tree;
        for p in parents {
            let entry = node
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("override `{key}` descends into non-table `{p}`")))?;
        }
        node.insert(last.clone(), value);
    }
    Ok(())
}
