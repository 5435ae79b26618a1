//! Closed-loop episodes and the gates-passed evaluation protocol.

use serde::{Deserialize, Serialize};

use super::{expert_command, gate_passed, generate_track, observe, step, Track, UavState};
use crate::control::{ensemble_predict, Ensemble};
use crate::decision::{
    de_mean, mi_lower_bound, mi_mode_command, select_member_min_mi, ControlCommand, ModePolicy,
    Strategy,
};
use crate::error::{Error, Result};
use crate::perception::{sample_latents, PerceptionModel, SensorNoise};
use crate::seeds;
use crate::variant::VariantConfig;

pub const MAX_GATES: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MissionComplete,
    Timeout,
    OutOfBounds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub position: [f64; 3],
    pub yaw: f64,
    pub command: ControlCommand,
    pub selected_member: Option<usize>,
    pub mi_scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub gates_passed: u32,
    pub termination: Termination,
    pub sim_time: f64,
    pub steps: usize,
    /// Per-step log; empty unless requested in [`EpisodeParams`].
    pub trajectory: Vec<StepRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeParams {
    pub dt: f64,
    pub timeout_per_gate: f64,
    pub out_of_bounds: f64,
    /// Monte Carlo samples per KL term in the MI strategy.
    pub mc_samples: usize,
    pub grid_n: usize,
    pub mode_policy: ModePolicy,
    pub record_trajectory: bool,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        EpisodeParams {
            dt: 0.05,
            timeout_per_gate: 30.0,
            out_of_bounds: 40.0,
            mc_samples: 1024,
            grid_n: 512,
            mode_policy: ModePolicy::SmallestAbs,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub grn: f64,
    pub ghn: f64,
}

/// Run the learned stack closed-loop on one track. Per-step pipeline:
/// observe -> sample latents (variant mode and count) -> ensemble predict
/// -> strategy -> step. Terminates on mission completion (32 gates), a
/// per-gate timeout, or leaving the arena.
pub fn run_episode(
    perception: &PerceptionModel,
    ensemble: &Ensemble,
    variant: &VariantConfig,
    strategy: Strategy,
    track: &Track,
    params: &EpisodeParams,
    episode_seed: u64,
) -> Result<EpisodeResult> {
    variant.check_strategy(strategy)?;
    if ensemble.kind() != variant.policy_kind {
        return Err(Error::contract(format!(
            "variant {} needs a {:?} policy",
            variant.id.name(),
            variant.policy_kind
        )));
    }
    if ensemble.len() != variant.members {
        return Err(Error::contract(format!(
            "variant {} needs {} member(s), ensemble has {}",
            variant.id.name(),
            variant.members,
            ensemble.len()
        )));
    }

    let mut obs_rng = seeds::derived_rng(episode_seed, 1);
    let mut perc_rng = seeds::derived_rng(episode_seed, 2);
    let mut dec_rng = seeds::derived_rng(episode_seed, 3);
    let sensor_noise = SensorNoise::default();

    let mut state = UavState::initial();
    let mut last_pass_time = 0.0;
    let mut trajectory = Vec::new();
    let mut steps = 0usize;

    loop {
        let obs = observe(&state, track, &mut obs_rng, Some(&sensor_noise))?;
        let latents = sample_latents(
            perception,
            &obs,
            variant.latent_samples,
            variant.latent_mode,
            &mut perc_rng,
        )?;
        let pset = ensemble_predict(ensemble, &latents)?;
        let (command, selected_member, mi_scores) = match strategy {
            Strategy::DeMean => (de_mean(&pset)?.0, None, None),
            Strategy::MiMode => {
                let scores = mi_lower_bound(&pset, params.mc_samples, &mut dec_rng)?;
                let idx = select_member_min_mi(&scores);
                let cmd = mi_mode_command(&pset, idx, params.grid_n, params.mode_policy)?;
                (cmd, Some(idx), Some(scores.per_member))
            }
        };

        let next = step(&state, &command, params.dt)?;
        steps += 1;
        if params.record_trajectory {
            trajectory.push(StepRecord {
                time: next.time,
                position: next.position,
                yaw: next.yaw,
                command,
                selected_member,
                mi_scores,
            });
        }

        let gate = &track.gates[state.next_gate as usize % track.gates.len()];
        let mut new_state = next;
        if gate_passed(&state, &next, gate) {
            new_state.gates_passed += 1;
            new_state.next_gate += 1;
            last_pass_time = new_state.time;
        }
        state = new_state;

        if state.gates_passed >= MAX_GATES {
            return Ok(done(state, Termination::MissionComplete, steps, trajectory));
        }
        if state.time - last_pass_time >= params.timeout_per_gate {
            return Ok(done(state, Termination::Timeout, steps, trajectory));
        }
        let norm = state
            .position
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm > params.out_of_bounds {
            return Ok(done(state, Termination::OutOfBounds, steps, trajectory));
        }
    }
}

/// Run the privileged expert closed-loop (no learned models).
pub fn run_expert_episode(track: &Track, params: &EpisodeParams) -> Result<EpisodeResult> {
    let mut state = UavState::initial();
    let mut last_pass_time = 0.0;
    let mut trajectory = Vec::new();
    let mut steps = 0usize;
    loop {
        let command = expert_command(&state, track);
        let next = step(&state, &command, params.dt)?;
        steps += 1;
        if params.record_trajectory {
            trajectory.push(StepRecord {
                time: next.time,
                position: next.position,
                yaw: next.yaw,
                command,
                selected_member: None,
                mi_scores: None,
            });
        }
        let gate = &track.gates[state.next_gate as usize % track.gates.len()];
        let mut new_state = next;
        if gate_passed(&state, &next, gate) {
            new_state.gates_passed += 1;
            new_state.next_gate += 1;
            last_pass_time = new_state.time;
        }
        state = new_state;

        if state.gates_passed >= MAX_GATES {
            return Ok(done(state, Termination::MissionComplete, steps, trajectory));
        }
        if state.time - last_pass_time >= params.timeout_per_gate {
            return Ok(done(state, Termination::Timeout, steps, trajectory));
        }
        let norm = state.position.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > params.out_of_bounds {
            return Ok(done(state, Termination::OutOfBounds, steps, trajectory));
        }
    }
}

fn done(
    state: UavState,
    termination: Termination,
    steps: usize,
    trajectory: Vec<StepRecord>,
) -> EpisodeResult {
    EpisodeResult {
        gates_passed: state.gates_passed,
        termination,
        sim_time: state.time,
        steps,
        trajectory,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub track_index: usize,
    pub trial: usize,
    pub track_seed: u64,
    pub episode_seed: u64,
    pub gates_passed: u32,
    pub termination: Termination,
    pub sim_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_gates_passed: f64,
    pub episodes: Vec<EpisodeRow>,
}

/// Evaluation protocol: `n_tracks` tracks at the given noise level, each
/// run for `trials` independently seeded episodes; reports the mean gates
/// passed plus one row per episode. Track seeds are shared across variants
/// and strategies for a given `eval_seed`, so comparisons are paired.
pub fn evaluate(
    perception: &PerceptionModel,
    ensemble: &Ensemble,
    variant: &VariantConfig,
    strategy: Strategy,
    noise: NoiseLevel,
    n_tracks: usize,
    trials: usize,
    eval_seed: u64,
    params: &EpisodeParams,
) -> Result<EvalReport> {
    if n_tracks < 1 || trials < 1 {
        return Err(Error::invalid("n_tracks and trials must be >= 1"));
    }
    variant.check_strategy(strategy)?;

    let jobs: Vec<(usize, usize)> = (0..n_tracks)
        .flat_map(|t| (0..trials).map(move |k| (t, k)))
        .collect();

    let run_one = |&(track_index, trial): &(usize, usize)| -> Result<EpisodeRow> {
        let track_seed = seeds::derive(eval_seed, 100 + track_index as u64);
        let episode_seed = seeds::derive(
            eval_seed,
            1000 + (track_index * 64 + trial) as u64,
        );
        let track = generate_track(noise.grn, noise.ghn, track_seed)?;
        let result = run_episode(
            perception,
            ensemble,
            variant,
            strategy,
            &track,
            params,
            episode_seed,
        )?;
        Ok(EpisodeRow {
            track_index,
            trial,
            track_seed,
            episode_seed,
            gates_passed: result.gates_passed,
            termination: result.termination,
            sim_time: result.sim_time,
        })
    };

    #[cfg(feature = "parallel")]
    let episodes: Vec<EpisodeRow> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run_one).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let episodes: Vec<EpisodeRow> = jobs.iter().map(run_one).collect::<Result<Vec<_>>>()?;

    let mean_gates_passed =
        episodes.iter().map(|e| e.gates_passed as f64).sum::<f64>() / episodes.len() as f64;
    Ok(EvalReport {
        mean_gates_passed,
        episodes,
    })
}
