//! Kinematic UAV and gate-track world: track generation with radius/height
//! noise, field-of-view limited observation synthesis, the privileged
//! expert controller used to label imitation data, and gate-pass detection.

mod episode;

pub use episode::{
    evaluate, run_episode, run_expert_episode, EpisodeParams, EpisodeResult, EpisodeRow,
    EvalReport, NoiseLevel, StepRecord, Termination,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::ControlCommand;
use crate::error::{Error, Result};
use crate::perception::{Observation, SensorNoise, SlotReading, N_SLOTS};

pub const N_GATES: usize = 8;
pub const BASE_RADIUS: f64 = 8.0;
pub const BASE_HEIGHT: f64 = 2.0;
pub const GATE_PASS_RADIUS: f64 = 0.75;

/// Field of view half-angles; gates outside are invisible to the sensor.
/// Wide enough that the target gate stays visible until just before the
/// crossing (a gate lost early makes the pre-crossing labels contradict
/// the mid-segment ones), narrow enough that noisy tracks still produce
/// blind stretches.
pub const FOV_HORIZ_HALF: f64 = 60.0 * std::f64::consts::PI / 180.0;
pub const FOV_VERT_HALF: f64 = 40.0 * std::f64::consts::PI / 180.0;

/// Expert controller gains and its look-ahead distance through the gate.
const K_FWD: f64 = 0.6;
const K_LAT: f64 = 0.6;
const K_VERT: f64 = 0.8;
const K_YAW: f64 = 1.2;
const LOOK_AHEAD: f64 = 1.5;

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// World-frame center (m).
    pub center: [f64; 3],
    /// Facing direction of travel (rad).
    pub yaw: f64,
    /// Pass radius around the center within the gate plane (m).
    pub pass_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub gates: Vec<Gate>,
    pub grn: f64,
    pub ghn: f64,
    pub seed: u64,
}

/// Eight gates at 45-degree spacing on a circle of radius 8 m at height
/// 2 m, with per-gate radial offset in `[-grn, grn]` and height offset in
/// `[-ghn, ghn]`. Gates face the (counter-clockwise) direction of travel.
pub fn generate_track(grn: f64, ghn: f64, seed: u64) -> Result<Track> {
    if grn < 0.0 || ghn < 0.0 {
        return Err(Error::invalid("noise half-ranges must be >= 0"));
    }
    let mut rng = crate::seeds::rng_from(seed);
    let mut gates = Vec::with_capacity(N_GATES);
    for i in 0..N_GATES {
        let theta = i as f64 * std::f64::consts::FRAC_PI_4;
        // Uniform in [-h, h); drawing the unit variate unconditionally keeps
        // the stream layout identical across noise levels for a given seed.
        let radius = BASE_RADIUS + grn * (2.0 * rng.random::<f64>() - 1.0);
        let height = BASE_HEIGHT + ghn * (2.0 * rng.random::<f64>() - 1.0);
        gates.push(Gate {
            center: [radius * theta.cos(), radius * theta.sin(), height],
            yaw: wrap_angle(theta + std::f64::consts::FRAC_PI_2),
            pass_radius: GATE_PASS_RADIUS,
        });
    }
    Ok(Track {
        gates,
        grn,
        ghn,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: [f64; 3],
    pub yaw: f64,
    pub time: f64,
    pub gates_passed: u32,
    /// Absolute next-gate counter; the physical gate is `next_gate % 8`.
    pub next_gate: u32,
}

impl UavState {
    /// Start one gate-spacing behind gate 0 on the nominal circle, heading
    /// along the track.
    pub fn initial() -> Self {
        let theta = -std::f64::consts::FRAC_PI_4;
        UavState {
            position: [
                BASE_RADIUS * theta.cos(),
                BASE_RADIUS * theta.sin(),
                BASE_HEIGHT,
            ],
            yaw: wrap_angle(theta + std::f64::consts::FRAC_PI_2),
            time: 0.0,
            gates_passed: 0,
            next_gate: 0,
        }
    }
}

/// One Euler step: the body-frame command is rotated by the current yaw
/// into the world frame; yaw wraps to `(-pi, pi]`.
pub fn step(state: &UavState, cmd: &ControlCommand, dt: f64) -> Result<UavState> {
    if dt <= 0.0 {
        return Err(Error::invalid("dt must be > 0"));
    }
    cmd.validate()?;
    let (sin_psi, cos_psi) = state.yaw.sin_cos();
    Ok(UavState {
        position: [
            state.position[0] + (cmd.vx * cos_psi - cmd.vy * sin_psi) * dt,
            state.position[1] + (cmd.vx * sin_psi + cmd.vy * cos_psi) * dt,
            state.position[2] + cmd.vz * dt,
        ],
        yaw: wrap_angle(state.yaw + cmd.yaw_rate * dt),
        time: state.time + dt,
        gates_passed: state.gates_passed,
        next_gate: state.next_gate,
    })
}

/// A gate as seen from the UAV body frame, before slot packing.
#[derive(Debug, Clone, Copy)]
struct GateSight {
    slot: SlotReading,
}

fn body_frame_sight(state: &UavState, gate: &Gate) -> GateSight {
    let dx = gate.center[0] - state.position[0];
    let dy = gate.center[1] - state.position[1];
    let dz = gate.center[2] - state.position[2];
    let (sin_psi, cos_psi) = state.yaw.sin_cos();
    let bx = cos_psi * dx + sin_psi * dy;
    let by = -sin_psi * dx + cos_psi * dy;
    let horiz = (bx * bx + by * by).sqrt();
    GateSight {
        slot: SlotReading {
            position: [bx, by, dz],
            rel_yaw: wrap_angle(gate.yaw - state.yaw),
            bearing: by.atan2(bx),
            elevation: dz.atan2(horiz),
            range: (bx * bx + by * by + dz * dz).sqrt(),
        },
    }
}

fn in_fov(slot: &SlotReading) -> bool {
    slot.range > 1e-6
        && slot.bearing.abs() <= FOV_HORIZ_HALF
        && slot.elevation.abs() <= FOV_VERT_HALF
}

fn apply_sensor_noise(slot: &SlotReading, noise: &SensorNoise, rng: &mut ChaCha8Rng) -> SlotReading {
    use crate::nn::standard_normal;
    let pos_sigma = noise.pos_factor * slot.range;
    SlotReading {
        position: [
            slot.position[0] + pos_sigma * standard_normal(rng),
            slot.position[1] + pos_sigma * standard_normal(rng),
            slot.position[2] + pos_sigma * standard_normal(rng),
        ],
        rel_yaw: wrap_angle(slot.rel_yaw + noise.angle_sigma * standard_normal(rng)),
        bearing: slot.bearing + noise.angle_sigma * standard_normal(rng),
        elevation: slot.elevation + noise.angle_sigma * standard_normal(rng),
        range: (slot.range + pos_sigma * standard_normal(rng)).max(0.0),
    }
}

/// Observe an arbitrary gate list: the two nearest in-FoV gates fill the
/// slots, ordered by *sensed* range when noise is on (so near-ties can
/// swap slots, exactly the ambiguity a range sensor would produce).
pub fn observe_gates(
    state: &UavState,
    gates: &[Gate],
    rng: &mut ChaCha8Rng,
    noise: Option<&SensorNoise>,
) -> Result<Observation> {
    let mut seen: Vec<SlotReading> = gates
        .iter()
        .map(|g| body_frame_sight(state, g).slot)
        .filter(in_fov)
        .collect();
    // Deterministic pre-noise order (rng consumption must not depend on
    // float comparison quirks).
    seen.sort_by(|a, b| a.range.partial_cmp(&b.range).unwrap());
    if let Some(noise) = noise {
        for slot in &mut seen {
            *slot = apply_sensor_noise(slot, noise, rng);
        }
        seen.sort_by(|a, b| a.range.partial_cmp(&b.range).unwrap());
    }
    seen.truncate(N_SLOTS);
    Observation::from_slots(&seen)
}

/// Observe the track's gates. See [`observe_gates`].
pub fn observe(
    state: &UavState,
    track: &Track,
    rng: &mut ChaCha8Rng,
    noise: Option<&SensorNoise>,
) -> Result<Observation> {
    observe_gates(state, &track.gates, rng, noise)
}

/// The true (noise-free) body-frame pose of the nearest in-FoV gate, if
/// any. This is the perception training label.
pub fn nearest_visible_pose(state: &UavState, gates: &[Gate]) -> Option<crate::GatePose> {
    gates
        .iter()
        .map(|g| body_frame_sight(state, g).slot)
        .filter(in_fov)
        .min_by(|a, b| a.range.partial_cmp(&b.range).unwrap())
        .map(|s| crate::GatePose {
            position: s.position,
            yaw: s.rel_yaw,
        })
}

/// Privileged proportional guidance toward a point `LOOK_AHEAD` meters past
/// the next gate along its facing direction; aiming past the plane keeps
/// forward speed up through the crossing.
///
/// Two situations instead target a staging point 2.5 m *behind* the gate:
/// the UAV ended up past the plane without passing (a miss), or it is close
/// to the plane while still off the gate axis (about to miss). Both aims
/// sit on the gate axis, so the lateral/vertical offset shrinks under
/// either and the controller cannot chatter between them.
pub fn expert_command(state: &UavState, track: &Track) -> ControlCommand {
    let gate = &track.gates[state.next_gate as usize % track.gates.len()];
    let (sin_g, cos_g) = gate.yaw.sin_cos();
    let dx = state.position[0] - gate.center[0];
    let dy = state.position[1] - gate.center[1];
    let dz_gate = state.position[2] - gate.center[2];
    let ahead = dx * cos_g + dy * sin_g;
    let lateral = -dx * sin_g + dy * cos_g;
    let offset = (lateral * lateral + dz_gate * dz_gate).sqrt();
    // 0.2 m of grace covers one step past the plane during a normal pass.
    let missed = ahead > 0.2;
    let misaligned = ahead > -1.2 && offset > 0.55;
    let reach = if missed || misaligned { -2.5 } else { LOOK_AHEAD };
    let aim = [
        gate.center[0] + reach * gate.yaw.cos(),
        gate.center[1] + reach * gate.yaw.sin(),
        gate.center[2],
    ];
    let dx = aim[0] - state.position[0];
    let dy = aim[1] - state.position[1];
    let dz = aim[2] - state.position[2];
    let (sin_psi, cos_psi) = state.yaw.sin_cos();
    let bx = cos_psi * dx + sin_psi * dy;
    let by = -sin_psi * dx + cos_psi * dy;
    let bearing = by.atan2(bx);
    ControlCommand::clipped([K_FWD * bx, K_LAT * by, K_VERT * dz, K_YAW * bearing])
        .expect("expert command is finite")
}

/// True iff the segment `prev -> curr` crosses the gate plane in the travel
/// direction with the intersection inside the pass radius.
pub fn gate_passed(prev: &UavState, curr: &UavState, gate: &Gate) -> bool {
    let (sin_g, cos_g) = gate.yaw.sin_cos();
    let signed = |p: &[f64; 3]| (p[0] - gate.center[0]) * cos_g + (p[1] - gate.center[1]) * sin_g;
    let s0 = signed(&prev.position);
    let s1 = signed(&curr.position);
    if !(s0 < 0.0 && s1 >= 0.0) {
        return false;
    }
    let t = s0 / (s0 - s1);
    let mut dist_sq = 0.0;
    for d in 0..3 {
        let p = prev.position[d] + t * (curr.position[d] - prev.position[d]);
        let delta = p - gate.center[d];
        dist_sq += delta * delta;
    }
    dist_sq <= gate.pass_radius * gate.pass_radius
}

/// Built-in observation scenarios for density inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Two gates at equal range and mirrored bearings: an ambiguous input.
    DoubleGate,
    /// One gate straight ahead.
    SingleGateAhead,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "double_gate" => Ok(Scenario::DoubleGate),
            "single_gate_ahead" => Ok(Scenario::SingleGateAhead),
            other => Err(Error::invalid(format!("unknown scenario '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::DoubleGate => "double_gate",
            Scenario::SingleGateAhead => "single_gate_ahead",
        }
    }

    /// Gate layout relative to a UAV at the origin with zero yaw.
    pub fn gates(self) -> Vec<Gate> {
        match self {
            Scenario::DoubleGate => {
                let bearing = 14.0_f64.to_radians();
                let range = 5.0;
                vec![
                    Gate {
                        center: [range * bearing.cos(), range * bearing.sin(), 0.2],
                        yaw: -0.35,
                        pass_radius: GATE_PASS_RADIUS,
                    },
                    Gate {
                        center: [range * bearing.cos(), -range * bearing.sin(), -0.2],
                        yaw: 0.35,
                        pass_radius: GATE_PASS_RADIUS,
                    },
                ]
            }
            Scenario::SingleGateAhead => vec![Gate {
                center: [5.0, 0.0, 0.0],
                yaw: 0.0,
                pass_radius: GATE_PASS_RADIUS,
            }],
        }
    }

    pub fn observation(
        self,
        noise: Option<&SensorNoise>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Observation> {
        let state = UavState {
            position: [0.0, 0.0, 0.0],
            yaw: 0.0,
            time: 0.0,
            gates_passed: 0,
            next_gate: 0,
        };
        observe_gates(&state, &self.gates(), rng, noise)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use approx::assert_relative_eq;

    #[test]
    fn noiseless_track_is_the_nominal_circle() {
        let track = generate_track(0.0, 0.0, 1).unwrap();
        assert_eq!(track.gates.len(), 8);
        for (i, gate) in track.gates.iter().enumerate() {
            let r = (gate.center[0].powi(2) + gate.center[1].powi(2)).sqrt();
            assert_relative_eq!(r, 8.0, max_relative = 1e-12);
            assert_relative_eq!(gate.center[2], 2.0, max_relative = 1e-12);
            let theta = gate.center[1].atan2(gate.center[0]);
            assert_relative_eq!(
                wrap_angle(theta - i as f64 * std::f64::consts::FRAC_PI_4),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn track_noise_stays_in_bounds() {
        for seed in 0..200 {
            let track = generate_track(1.0, 2.0, seed).unwrap();
            for gate in &track.gates {
                let r = (gate.center[0].powi(2) + gate.center[1].powi(2)).sqrt();
                assert!((7.0..=9.0).contains(&r), "radius {r}");
                assert!((0.0..=4.0).contains(&gate.center[2]), "height {}", gate.center[2]);
            }
        }
    }

    #[test]
    fn same_seed_same_track() {
        assert_eq!(
            generate_track(1.5, 3.0, 99).unwrap(),
            generate_track(1.5, 3.0, 99).unwrap()
        );
    }

    #[test]
    fn zero_command_only_advances_time() {
        let s0 = UavState::initial();
        let s1 = step(&s0, &ControlCommand::zero(), 0.05).unwrap();
        assert_eq!(s1.position, s0.position);
        assert_eq!(s1.yaw, s0.yaw);
        assert_relative_eq!(s1.time, 0.05);
    }

    #[test]
    fn forward_motion_along_heading() {
        let mut s = UavState::initial();
        s.yaw = 0.0;
        let cmd = ControlCommand {
            vx: 1.0,
            vy: 0.0,
            vz: 0.0,
            yaw_rate: 0.0,
        };
        let s1 = step(&s, &cmd, 0.05).unwrap();
        assert_relative_eq!(s1.position[0] - s.position[0], 0.05, max_relative = 1e-12);
        assert_relative_eq!(s1.position[1], s.position[1], epsilon = 1e-15);
    }

    #[test]
    fn yaw_integrates_exactly_for_pure_rotation() {
        let mut s = UavState::initial();
        s.yaw = 0.0;
        let cmd = ControlCommand {
            vx: 0.0,
            vy: 0.0,
            vz: 0.0,
            yaw_rate: std::f64::consts::FRAC_PI_2,
        };
        for _ in 0..20 {
            s = step(&s, &cmd, 0.05).unwrap();
        }
        assert_relative_eq!(s.yaw, std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn step_rejects_non_finite_commands() {
        let cmd = ControlCommand {
            vx: f64::NAN,
            vy: 0.0,
            vz: 0.0,
            yaw_rate: 0.0,
        };
        assert!(step(&UavState::initial(), &cmd, 0.05).is_err());
    }

    #[test]
    fn step_is_yaw_equivariant() {
        // Rotating the world frame (position + yaw) by theta commutes with
        // stepping.
        let theta: f64 = 0.7;
        let cmd = ControlCommand {
            vx: 1.2,
            vy: -0.4,
            vz: 0.3,
            yaw_rate: 0.5,
        };
        let s = UavState {
            position: [2.0, -1.0, 2.5],
            yaw: 0.3,
            time: 0.0,
            gates_passed: 0,
            next_gate: 0,
        };
        let rotate = |st: &UavState| UavState {
            position: [
                theta.cos() * st.position[0] - theta.sin() * st.position[1],
                theta.sin() * st.position[0] + theta.cos() * st.position[1],
                st.position[2],
            ],
            yaw: wrap_angle(st.yaw + theta),
            ..*st
        };
        let a = rotate(&step(&s, &cmd, 0.05).unwrap());
        let b = step(&rotate(&s), &cmd, 0.05).unwrap();
        for d in 0..3 {
            assert_relative_eq!(a.position[d], b.position[d], epsilon = 1e-12);
        }
        assert_relative_eq!(a.yaw, b.yaw, epsilon = 1e-12);
    }

    #[test]
    fn observe_gate_dead_ahead() {
        let state = UavState {
            position: [0.0, 0.0, 0.0],
            yaw: 0.0,
            time: 0.0,
            gates_passed: 0,
            next_gate: 0,
        };
        let gates = vec![Gate {
            center: [5.0, 0.0, 0.0],
            yaw: 0.0,
            pass_radius: GATE_PASS_RADIUS,
        }];
        let mut rng = seeds::rng_from(1);
        let obs = observe_gates(&state, &gates, &mut rng, None).unwrap();
        let slot = obs.slot(0).unwrap();
        assert_relative_eq!(slot.position[0], 5.0, max_relative = 1e-12);
        assert_relative_eq!(slot.position[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(slot.range, 5.0, max_relative = 1e-12);
        assert!(obs.slot(1).is_none());
    }

    #[test]
    fn observe_facing_away_is_empty() {
        let track = generate_track(0.0, 0.0, 2).unwrap();
        // Outside the circle looking away from every gate.
        let state = UavState {
            position: [20.0, 0.0, 2.0],
            yaw: 0.0,
            time: 0.0,
            gates_passed: 0,
            next_gate: 0,
        };
        let mut rng = seeds::rng_from(3);
        let obs = observe(&state, &track, &mut rng, None).unwrap();
        assert_eq!(obs.features, [0.0; 16]);
    }

    #[test]
    fn observe_double_gate_fills_both_slots() {
        let mut rng = seeds::rng_from(4);
        let obs = Scenario::DoubleGate.observation(None, &mut rng).unwrap();
        assert!(obs.slot(0).is_some());
        assert!(obs.slot(1).is_some());
        let s0 = obs.slot(0).unwrap();
        let s1 = obs.slot(1).unwrap();
        assert_relative_eq!(s0.range, s1.range, max_relative = 1e-12);
        assert_relative_eq!(s0.bearing, -s1.bearing, epsilon = 1e-12);
    }

    #[test]
    fn expert_at_gate_center_flies_through() {
        let track = generate_track(0.0, 0.0, 5).unwrap();
        let gate = track.gates[0];
        let state = UavState {
            position: gate.center,
            yaw: gate.yaw,
            time: 0.0,
            gates_passed: 0,
            next_gate: 0,
        };
        let cmd = expert_command(&state, &track);
        assert!(cmd.vx > 0.5);
        assert!(cmd.vy.abs() < 1e-9);
        assert!(cmd.vz.abs() < 1e-9);
        assert!(cmd.yaw_rate.abs() < 1e-9);
    }

    #[test]
    fn expert_turns_toward_gate_on_the_left() {
        // Gate left of the UAV, facing further left: both the lateral
        // velocity and the turn command must be positive.
        let gates = vec![Gate {
            center: [0.0, 6.0, 0.0],
            yaw: std::f64::consts::FRAC_PI_2,
            pass_radius: GATE_PASS_RADIUS,
        }];
        let track = Track {
            gates,
            grn: 0.0,
            ghn: 0.0,
            seed: 0,
        };
        let state = UavState {
            position: [0.0, 0.0, 0.0],
            yaw: 0.0,
            time: 0.0,
            gates_passed: 0,
            next_gate: 0,
        };
        let cmd = expert_command(&state, &track);
        assert!(cmd.vy > 0.0);
        assert!(cmd.yaw_rate > 0.0);
    }

    fn state_at(p: [f64; 3]) -> UavState {
        UavState {
            position: p,
            yaw: 0.0,
            time: 0.0,
            gates_passed: 0,
            next_gate: 0,
        }
    }

    #[test]
    fn gate_pass_detection() {
        let gate = Gate {
            center: [5.0, 0.0, 0.0],
            yaw: 0.0,
            pass_radius: 0.75,
        };
        // Straight through the center.
        assert!(gate_passed(
            &state_at([4.9, 0.0, 0.0]),
            &state_at([5.1, 0.0, 0.0]),
            &gate
        ));
        // Crossing the plane far from the center.
        assert!(!gate_passed(
            &state_at([4.9, 1.5, 0.0]),
            &state_at([5.1, 1.5, 0.0]),
            &gate
        ));
        // Reverse direction.
        assert!(!gate_passed(
            &state_at([5.1, 0.0, 0.0]),
            &state_at([4.9, 0.0, 0.0]),
            &gate
        ));
        // No crossing.
        assert!(!gate_passed(
            &state_at([4.0, 0.0, 0.0]),
            &state_at([4.5, 0.0, 0.0]),
            &gate
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert!(wrap_angle(std::f64::consts::PI + 0.1) < 0.0);
        assert_relative_eq!(wrap_angle(-3.0 * std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(7.0), 7.0 - std::f64::consts::TAU, epsilon = 1e-12);
    }
}
