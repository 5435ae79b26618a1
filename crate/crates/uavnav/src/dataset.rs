//! Dataset synthesis and the plain-CSV dataset formats.
//!
//! Perception data pairs a noisy observation with the true body-frame pose
//! of the nearest visible gate. Scenes mix single- and double-gate layouts
//! and deliberately include near-equal ranges: with slot order decided by
//! the *sensed* range, near-ties sometimes put the label gate in slot 1,
//! which is what makes ambiguous inputs genuinely ambiguous downstream.
//!
//! Control data records (observation, expert command) pairs along expert
//! rollouts on randomized tracks, so the policies imitate the privileged
//! controller from exactly the observations they will see in flight.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::decision::ControlCommand;
use crate::error::{Error, Result};
use crate::perception::{GatePose, Observation, SensorNoise, OBS_DIM};
use crate::seeds;
use crate::sim::{
    expert_command, gate_passed, generate_track, nearest_visible_pose, observe, observe_gates,
    step, Gate, UavState, FOV_HORIZ_HALF, FOV_VERT_HALF, GATE_PASS_RADIUS,
};

// Scene geometry spans the whole sensor envelope, close range included;
// flight spends most steps near gates and the encoder must not
// extrapolate there.
const SCENE_RANGE_MIN: f64 = 0.3;
const SCENE_RANGE_MAX: f64 = 12.0;
const SCENE_BEARING_MAX: f64 = FOV_HORIZ_HALF;
const SCENE_ELEVATION_MAX: f64 = FOV_VERT_HALF;
/// Fraction of scenes with a second gate, and of those, the fraction whose
/// ranges nearly tie.
const TWO_GATE_PROB: f64 = 0.65;
const NEAR_TIE_PROB: f64 = 0.5;

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn scene_gate(rng: &mut ChaCha8Rng, range: f64) -> Gate {
    let bearing = uniform(rng, -SCENE_BEARING_MAX, SCENE_BEARING_MAX);
    let elevation = uniform(rng, -SCENE_ELEVATION_MAX, SCENE_ELEVATION_MAX);
    // Relative yaw stays away from the +/-pi wrap: gates face the travel
    // direction, so nearby gates never appear fully reversed in flight,
    // and regressing through the wrap would only burn latent capacity.
    let yaw = uniform(rng, -2.0, 2.0);
    Gate {
        center: [
            range * elevation.cos() * bearing.cos(),
            range * elevation.cos() * bearing.sin(),
            range * elevation.sin(),
        ],
        yaw,
        pass_radius: GATE_PASS_RADIUS,
    }
}

/// Synthesize (observation, nearest-gate pose) pairs from randomized
/// UAV/gate geometries. Every scene has at least one visible gate.
pub fn gen_perception_dataset(
    count: usize,
    seed: u64,
) -> Result<Vec<(Observation, GatePose)>> {
    if count < 1 {
        return Err(Error::invalid("dataset count must be >= 1"));
    }
    let mut rng = seeds::rng_from(seed);
    let noise = SensorNoise::default();
    let viewer = UavState {
        position: [0.0, 0.0, 0.0],
        yaw: 0.0,
        time: 0.0,
        gates_passed: 0,
        next_gate: 0,
    };
    let mut data = Vec::with_capacity(count);
    while data.len() < count {
        let r0 = uniform(&mut rng, SCENE_RANGE_MIN, SCENE_RANGE_MAX);
        let mut gates = vec![scene_gate(&mut rng, r0)];
        if rng.random::<f64>() < TWO_GATE_PROB {
            let r1 = if rng.random::<f64>() < NEAR_TIE_PROB {
                (r0 + 0.4 * crate::nn::standard_normal(&mut rng))
                    .clamp(SCENE_RANGE_MIN, SCENE_RANGE_MAX)
            } else {
                uniform(&mut rng, SCENE_RANGE_MIN, SCENE_RANGE_MAX)
            };
            gates.push(scene_gate(&mut rng, r1));
        }
        let label = nearest_visible_pose(&viewer, &gates)
            .expect("scene gates are constructed inside the field of view");
        let obs = observe_gates(&viewer, &gates, &mut rng, Some(&noise))?;
        data.push((obs, label));
    }
    Ok(data)
}

/// Exploration noise injected into the *executed* commands during data
/// collection rollouts. Labels stay the expert's clean command, so the
/// dataset covers off-line states together with the correction that leads
/// back — without it, small policy errors compound unrecoverably at
/// flight time.
const EXPLORE_VEL_SIGMA: f64 = 0.4;
const EXPLORE_YAW_SIGMA: f64 = 0.25;

/// Record (observation, expert command) pairs along expert rollouts on
/// randomized tracks (every third step), until `count` pairs exist.
pub fn gen_control_dataset(
    count: usize,
    seed: u64,
) -> Result<Vec<(Observation, ControlCommand)>> {
    if count < 1 {
        return Err(Error::invalid("dataset count must be >= 1"));
    }
    let noise = SensorNoise::default();
    let dt = 0.05;
    let record_every = 3;
    let mut data = Vec::with_capacity(count);
    let mut rollout = 0u64;
    while data.len() < count {
        let mut level_rng = seeds::derived_rng(seed, 2 * rollout);
        let grn = uniform(&mut level_rng, 0.25, 1.5);
        let ghn = uniform(&mut level_rng, 0.5, 3.0);
        let track_seed = seeds::derive(seed, 2 * rollout + 1);
        let track = generate_track(grn, ghn, track_seed)?;
        let mut obs_rng = seeds::derived_rng(track_seed, 7);
        let mut explore_rng = seeds::derived_rng(track_seed, 8);

        let mut state = UavState::initial();
        let mut last_pass_time = 0.0;
        let mut step_idx = 0usize;
        while data.len() < count {
            let cmd = expert_command(&state, &track);
            if step_idx % record_every == 0 {
                let obs = observe(&state, &track, &mut obs_rng, Some(&noise))?;
                data.push((obs, cmd));
            }
            let executed = ControlCommand::clipped([
                cmd.vx + EXPLORE_VEL_SIGMA * crate::nn::standard_normal(&mut explore_rng),
                cmd.vy + EXPLORE_VEL_SIGMA * crate::nn::standard_normal(&mut explore_rng),
                cmd.vz + EXPLORE_VEL_SIGMA * crate::nn::standard_normal(&mut explore_rng),
                cmd.yaw_rate + EXPLORE_YAW_SIGMA * crate::nn::standard_normal(&mut explore_rng),
            ])?;
            let next = step(&state, &executed, dt)?;
            let gate = &track.gates[state.next_gate as usize % track.gates.len()];
            let mut new_state = next;
            if gate_passed(&state, &next, gate) {
                new_state.gates_passed += 1;
                new_state.next_gate += 1;
                last_pass_time = new_state.time;
            }
            state = new_state;
            step_idx += 1;
            if state.gates_passed >= 32 || state.time - last_pass_time >= 30.0 {
                break;
            }
        }
        rollout += 1;
    }
    Ok(data)
}

fn write_csv<W: Write>(
    out: &mut W,
    label_names: [&str; 4],
    rows: impl Iterator<Item = ([f64; OBS_DIM], [f64; 4])>,
) -> Result<()> {
    let mut header: Vec<String> = (0..OBS_DIM).map(|i| format!("f{i}")).collect();
    header.extend(label_names.iter().map(|s| s.to_string()));
    writeln!(out, "{}", header.join(","))?;
    for (features, label) in rows {
        let mut fields: Vec<String> = features.iter().map(|v| v.to_string()).collect();
        fields.extend(label.iter().map(|v| v.to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

fn parse_row(line: &str, line_no: usize) -> Result<([f64; OBS_DIM], [f64; 4])> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != OBS_DIM + 4 {
        return Err(Error::Format(format!(
            "line {line_no}: expected {} fields, got {}",
            OBS_DIM + 4,
            fields.len()
        )));
    }
    let mut features = [0.0; OBS_DIM];
    let mut label = [0.0; 4];
    for (i, field) in fields.iter().enumerate() {
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Format(format!("line {line_no}: bad number '{field}'")))?;
        if i < OBS_DIM {
            features[i] = v;
        } else {
            label[i - OBS_DIM] = v;
        }
    }
    Ok((features, label))
}

pub fn write_perception_csv(path: &Path, data: &[(Observation, GatePose)]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write_csv(
        &mut out,
        ["px", "py", "pz", "pyaw"],
        data.iter().map(|(obs, pose)| (obs.features, pose.to_vec())),
    )
}

pub fn read_perception_csv(path: &Path) -> Result<Vec<(Observation, GatePose)>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut data = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if i == 0 {
            continue; // header
        }
        let (features, label) = parse_row(&line, i + 1)?;
        let obs = Observation { features };
        obs.validate()?;
        data.push((obs, GatePose::from_vec(&label)?));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(data)
}

pub fn write_control_csv(path: &Path, data: &[(Observation, ControlCommand)]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write_csv(
        &mut out,
        ["vx", "vy", "vz", "yaw_rate"],
        data.iter().map(|(obs, cmd)| (obs.features, cmd.as_array())),
    )
}

pub fn read_control_csv(path: &Path) -> Result<Vec<(Observation, ControlCommand)>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut data = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if i == 0 {
            continue;
        }
        let (features, label) = parse_row(&line, i + 1)?;
        let obs = Observation { features };
        obs.validate()?;
        let cmd = ControlCommand {
            vx: label[0],
            vy: label[1],
            vz: label[2],
            yaw_rate: label[3],
        };
        cmd.validate()?;
        data.push((obs, cmd));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(data)
}
