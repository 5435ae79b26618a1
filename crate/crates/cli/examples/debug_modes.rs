use uavnav::control::ensemble_predict;
use uavnav::decision::*;
use uavnav::perception::{sample_latents, LatentMode, SensorNoise};
use uavnav::sim::*;
use uavnav::variant::VariantId;
use uavnav::seeds;

fn main() {
    let models = uavnav_cli::load_models(std::path::Path::new("/tmp/full/stack_b0.05")).unwrap();
    let variant = VariantId::M0.config();
    let ensemble = models.ensemble_for(&variant).unwrap();
    let track = generate_track(1.0, 2.0, 1001).unwrap();
    let noise = SensorNoise::default();
    let mut obs_rng = seeds::rng_from(1);
    let mut perc_rng = seeds::rng_from(2);
    let mut dec_rng = seeds::rng_from(3);

    // Follow the expert for a few seconds, then inspect the stack's view.
    let mut state = UavState::initial();
    for step_i in 0..400 {
        let cmd = expert_command(&state, &track);
        if step_i % 100 == 0 {
            let obs = observe(&state, &track, &mut obs_rng, Some(&noise)).unwrap();
            let latents = sample_latents(&models.perception, &obs, 32, LatentMode::Mcd, &mut perc_rng).unwrap();
            let pset = ensemble_predict(&ensemble, &latents).unwrap();
            let (de, _) = de_mean(&pset).unwrap();
            let scores = mi_lower_bound(&pset, 64, &mut dec_rng).unwrap();
            let sel = select_member_min_mi(&scores);
            let mi = mi_mode_command(&pset, sel, 512, ModePolicy::SmallestAbs).unwrap();
            println!("step {step_i}: expert=({:.2},{:.2},{:.2},{:.2}) de=({:.2},{:.2},{:.2},{:.2}) mi=({:.2},{:.2},{:.2},{:.2}) sel={sel}",
                cmd.vx, cmd.vy, cmd.vz, cmd.yaw_rate,
                de.vx, de.vy, de.vz, de.yaw_rate,
                mi.vx, mi.vy, mi.vz, mi.yaw_rate);
            for d in 1..4 {
                let mix = MixtureDensity1D::from_member_dim(&pset, sel, d).unwrap();
                let modes = extract_modes(&mix, 512).unwrap();
                let peak = modes.iter().map(|m| m.1).fold(0.0, f64::max);
                let strs: Vec<String> = modes.iter().map(|(l, p)| format!("{l:.2}@{:.0}%", 100.0 * p / peak)).collect();
                println!("   dim {d} member {sel} modes: {}", strs.join(" "));
            }
            // min over latents of mu_vx
            let minvx = pset.row(sel).iter().map(|g| g.mu[0]).fold(f64::INFINITY, f64::min);
            let meanvx = pset.row(sel).iter().map(|g| g.mu[0]).sum::<f64>() / 32.0;
            println!("   vx member {sel}: min={minvx:.2} mean={meanvx:.2}");
        }
        state = step(&state, &cmd, 0.05).unwrap();
        let gate = &track.gates[state.next_gate as usize % 8];
        let prev = state;
        let _ = prev;
        // advance gate counter roughly
        // (reuse gate_passed on successive states is omitted; expert flies through)
        let next = step(&state, &cmd, 0.0001).unwrap();
        if gate_passed(&state, &next, gate) { state.next_gate += 1; }
    }
}
