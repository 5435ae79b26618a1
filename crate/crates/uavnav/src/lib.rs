//! Uncertainty-aware UAV gate navigation at desk scale.
//!
//! The pipeline chains a stochastic perception encoder (a small cross-modal
//! VAE over synthetic sensor vectors, sampled with Monte Carlo dropout) into
//! an ensemble of probabilistic velocity policies. Passing every latent
//! sample through every ensemble member yields a discrete posterior
//! predictive distribution over body-frame velocity commands, which a
//! decision strategy collapses into one command per control tick:
//!
//! * `de-mean` — the uniform-mixture mean over all predictions, or
//! * `mi-mode` — pick the ensemble member with the lowest mutual-information
//!   lower bound against the all-member mixture, then take conservative
//!   modes of its predicted densities.
//!
//! Everything runs against a kinematic simulator of a circular gate track
//! with configurable gate radius/height noise, which also provides the
//! expert controller used to generate imitation-learning data and the
//! gates-passed metric used for evaluation.
//!
//! All randomness is driven by explicit seeds through [`seeds::derive`];
//! repeated runs with the same seeds are bit-identical.

pub mod control;
pub mod dataset;
pub mod decision;
pub mod error;
pub mod nn;
pub mod perception;
pub mod seeds;
pub mod sim;
pub mod variant;

mod gaussian;

pub use control::{Ensemble, PolicyKind, PolicyModel, PredictiveSet};
pub use decision::{ControlCommand, MiScores, MixtureDensity1D, Strategy};
pub use error::{Error, Result};
pub use gaussian::GaussianVec;
pub use perception::{GatePose, LatentMode, LatentSet, Observation, PerceptionModel};
pub use sim::{EpisodeResult, Gate, Termination, Track, UavState};
pub use variant::{VariantConfig, VariantId};
