use uavnav::control::ensemble_predict;
use uavnav::decision::de_mean;
use uavnav::perception::{sample_latents, LatentMode, SensorNoise};
use uavnav::sim::*;
use uavnav::variant::VariantId;
use uavnav::seeds;

fn main() {
    let models = uavnav_cli::load_models(std::path::Path::new("/tmp/full/stack")).unwrap();
    let variant = VariantId::M0.config();
    let ensemble = models.ensemble_for(&variant).unwrap();
    let track = generate_track(1.0, 2.0, 4242).unwrap();
    let noise = SensorNoise::default();
    let mut obs_rng = seeds::rng_from(1);
    let mut perc_rng = seeds::rng_from(2);

    let mut state = UavState::initial();
    let mut last_pass = 0.0;
    // err bins by range: [0-2, 2-4, 4-6, 6+]
    let mut bins = [[0.0f64; 4]; 4];
    let mut counts = [0usize; 4];
    let mut blind = 0usize;
    let mut total = 0usize;
    loop {
        let expert = expert_command(&state, &track);
        let obs = observe(&state, &track, &mut obs_rng, Some(&noise)).unwrap();
        let latents = sample_latents(&models.perception, &obs, 32, LatentMode::Mcd, &mut perc_rng).unwrap();
        let pset = ensemble_predict(&ensemble, &latents).unwrap();
        let (cmd, _) = de_mean(&pset).unwrap();
        let gate = &track.gates[state.next_gate as usize % 8];
        let dx = gate.center[0] - state.position[0];
        let dy = gate.center[1] - state.position[1];
        let range = (dx * dx + dy * dy).sqrt();
        let bin = ((range / 2.0) as usize).min(3);
        let e = expert.as_array();
        let c = cmd.as_array();
        for d in 0..4 {
            bins[bin][d] += (e[d] - c[d]).abs();
        }
        counts[bin] += 1;
        if obs.slot(0).is_none() { blind += 1; }
        total += 1;

        let next = step(&state, &expert, 0.05).unwrap();
        let mut ns = next;
        if gate_passed(&state, &next, gate) {
            ns.gates_passed += 1;
            ns.next_gate += 1;
            last_pass = ns.time;
        }
        state = ns;
        if state.gates_passed >= 16 || state.time - last_pass > 30.0 { break; }
    }
    println!("expert rollout: gates={} blind_obs={}/{}", state.gates_passed, blind, total);
    for (b, name) in ["0-2m", "2-4m", "4-6m", "6+m"].iter().enumerate() {
        if counts[b] == 0 { continue; }
        let n = counts[b] as f64;
        println!(
            "range {name}: n={} |dvx|={:.3} |dvy|={:.3} |dvz|={:.3} |dyaw|={:.3}",
            counts[b], bins[b][0] / n, bins[b][1] / n, bins[b][2] / n, bins[b][3] / n
        );
    }
}
