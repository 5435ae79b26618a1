//! The five navigation model variants evaluated by the artifact, differing
//! in how latents are sampled (dropout on/off, sample count) and in the
//! control policy (probabilistic ensemble, single probabilistic policy, or
//! a single deterministic policy).

use serde::{Deserialize, Serialize};

use crate::control::PolicyKind;
use crate::decision::Strategy;
use crate::error::{Error, Result};
use crate::perception::LatentMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantId {
    M0,
    M1,
    M2,
    M3,
    M4,
}

impl VariantId {
    pub const ALL: [VariantId; 5] = [
        VariantId::M0,
        VariantId::M1,
        VariantId::M2,
        VariantId::M3,
        VariantId::M4,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m0" => Ok(VariantId::M0),
            "m1" => Ok(VariantId::M1),
            "m2" => Ok(VariantId::M2),
            "m3" => Ok(VariantId::M3),
            "m4" => Ok(VariantId::M4),
            other => Err(Error::invalid(format!("unknown variant '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantId::M0 => "m0",
            VariantId::M1 => "m1",
            VariantId::M2 => "m2",
            VariantId::M3 => "m3",
            VariantId::M4 => "m4",
        }
    }

    pub fn config(self) -> VariantConfig {
        match self {
            // Dropout-on encoder sampling, full probabilistic ensemble.
            VariantId::M0 => VariantConfig {
                id: self,
                latent_mode: LatentMode::Mcd,
                latent_samples: 32,
                policy_kind: PolicyKind::Probabilistic,
                members: 5,
            },
            // Dropout off; latent spread from the encoder (mu, var) only.
            VariantId::M1 => VariantConfig {
                id: self,
                latent_mode: LatentMode::LatentNoise,
                latent_samples: 32,
                policy_kind: PolicyKind::Probabilistic,
                members: 5,
            },
            // Single latent draw into the ensemble.
            VariantId::M2 => VariantConfig {
                id: self,
                latent_mode: LatentMode::LatentNoise,
                latent_samples: 1,
                policy_kind: PolicyKind::Probabilistic,
                members: 5,
            },
            // Deterministic single policy over latent draws.
            VariantId::M3 => VariantConfig {
                id: self,
                latent_mode: LatentMode::LatentNoise,
                latent_samples: 32,
                policy_kind: PolicyKind::Deterministic,
                members: 1,
            },
            // Encoder mean into a single probabilistic policy.
            VariantId::M4 => VariantConfig {
                id: self,
                latent_mode: LatentMode::MeanOnly,
                latent_samples: 1,
                policy_kind: PolicyKind::Probabilistic,
                members: 1,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub id: VariantId,
    pub latent_mode: LatentMode,
    /// Latent samples per observation (LVS).
    pub latent_samples: usize,
    pub policy_kind: PolicyKind,
    /// Ensemble members used at inference.
    pub members: usize,
}

impl VariantConfig {
    /// Control predictions per step (CPS = members x latent samples).
    pub fn prediction_count(&self) -> usize {
        self.members * self.latent_samples
    }

    /// Check a strategy against this variant. Density-based member
    /// selection needs probabilistic predictions, so `mi-mode` is rejected
    /// for the deterministic variant before any computation runs.
    pub fn check_strategy(&self, strategy: Strategy) -> Result<()> {
        match strategy {
            Strategy::DeMean => Ok(()),
            Strategy::MiMode => {
                if self.policy_kind == PolicyKind::Probabilistic {
                    Ok(())
                } else {
                    Err(Error::UnsupportedStrategy(format!(
                        "variant {} uses a deterministic policy; mi-mode needs \
                         probabilistic predictions (use de-mean)",
                        self.id.name()
                    )))
                }
            }
        }
    }
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mi-mode" => Ok(Strategy::MiMode),
            "de-mean" => Ok(Strategy::DeMean),
            other => Err(Error::invalid(format!("unknown strategy '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MiMode => "mi-mode",
            Strategy::DeMean => "de-mean",
        }
    }
}
