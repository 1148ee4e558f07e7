use lullaby_core::domain::{ActionSpace, STATE_DIM};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Lstm,
    Transformer,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lstm => "lstm",
            Self::Transformer => "transformer",
        })
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(Self::Lstm),
            "transformer" => Ok(Self::Transformer),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}` (expected lstm or transformer)"
            ))),
        }
    }
}

/// Per-checkpoint feature extractor shared across the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpEncoderConfig {
    pub layers: usize,
    pub width: usize,
}

impl Default for MlpEncoderConfig {
    fn default() -> Self {
        Self { layers: 2, width: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmPolicyConfig {
    pub hidden: usize,
    pub num_layers: usize,
    /// Applied to the outputs of every layer but the last, while training.
    pub dropout: f64,
}

impl Default for LstmPolicyConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            num_layers: 2,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerPolicyConfig {
    pub encoder_layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub ff_dim: usize,
}

impl Default for TransformerPolicyConfig {
    fn default() -> Self {
        Self {
            encoder_layers: 2,
            heads: 4,
            embed_dim: 128,
            ff_dim: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub arch: Architecture,
    /// Window length K.
    pub seq_len: usize,
    pub input_dim: usize,
    pub actions: ActionSpace,
    pub encoder: MlpEncoderConfig,
    pub lstm: LstmPolicyConfig,
    pub transformer: TransformerPolicyConfig,
    /// Actor and critic read the same encoder and sequence module.
    pub shared_trunk: bool,
    /// Scale of the actor head's initial weights relative to the default.
    pub actor_init_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::Lstm,
            seq_len: 5,
            input_dim: STATE_DIM,
            actions: ActionSpace::default(),
            encoder: MlpEncoderConfig::default(),
            lstm: LstmPolicyConfig::default(),
            transformer: TransformerPolicyConfig::default(),
            shared_trunk: true,
            actor_init_scale: 0.01,
        }
    }
}

impl PolicyConfig {
    pub fn with_arch(arch: Architecture) -> Self {
        Self {
            arch,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.actions.validate()?;
        if self.seq_len == 0 || self.input_dim == 0 {
            return bad("seq_len and input_dim must be positive".into());
        }
        if self.encoder.layers == 0 || self.encoder.width == 0 {
            return bad("encoder needs at least one layer of positive width".into());
        }
        if !(self.actor_init_scale > 0.0 && self.actor_init_scale.is_finite()) {
            return bad(format!(
                "actor_init_scale must be positive, got {}",
                self.actor_init_scale
            ));
        }
        match self.arch {
            Architecture::Lstm => {
                let l = &self.lstm;
                if l.hidden == 0 || l.num_layers == 0 {
                    return bad("lstm hidden size and layer count must be positive".into());
                }
                if !(0.0..1.0).contains(&l.dropout) {
                    return bad(format!("lstm dropout {} outside [0, 1)", l.dropout));
                }
            }
            Architecture::Transformer => {
                let t = &self.transformer;
                if t.encoder_layers == 0 || t.heads == 0 || t.embed_dim == 0 || t.ff_dim == 0 {
                    return bad("transformer sizes must be positive".into());
                }
                if t.embed_dim % t.heads != 0 {
                    return bad(format!("embed_dim {} not divisible by {} heads", t.embed_dim, t.heads));
                }
                if t.embed_dim != self.encoder.width {
                    return bad(format!(
                        "transformer embed_dim {} must equal encoder width {}",
                        t.embed_dim, self.encoder.width
                    ));
                }
            }
        }
        Ok(())
    }

    /// Width of the vector the heads read.
    pub fn feature_dim(&self) -> usize {
        match self.arch {
            Architecture::Lstm => self.lstm.hidden,
            Architecture::Transformer => self.transformer.embed_dim,
        }
    }
}
