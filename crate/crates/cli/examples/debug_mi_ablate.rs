use uavnav::control::{ensemble_predict, Ensemble};
use uavnav::decision::*;
use uavnav::perception::{sample_latents, PerceptionModel, SensorNoise};
use uavnav::sim::*;
use uavnav::variant::{VariantConfig, VariantId};
use uavnav::seeds;

// mi variants: 0 = full mi, 1 = mi with member-mean vx, 2 = selected member per-dim mean,
// 3 = de-mean but vx from min rule
fn decide(
    pset: &uavnav::control::PredictiveSet,
    mode: usize,
    mc: usize,
    rng: &mut uavnav::seeds::ChaCha8Rng,
) -> ControlCommand {
    let scores = mi_lower_bound(pset, mc, rng).unwrap();
    let sel = select_member_min_mi(&scores);
    let m = pset.latents() as f64;
    let member_mean = |d: usize| pset.row(sel).iter().map(|g| g.mu[d]).sum::<f64>() / m;
    match mode {
        0 => mi_mode_command(pset, sel, 512, ModePolicy::SmallestAbs).unwrap(),
        1 => {
            let mut cmd = mi_mode_command(pset, sel, 512, ModePolicy::SmallestAbs).unwrap();
            cmd.vx = member_mean(0).clamp(-3.0, 3.0);
            cmd
        }
        2 => ControlCommand::clipped([member_mean(0), member_mean(1), member_mean(2), member_mean(3)]).unwrap(),
        _ => {
            let (mut cmd, _) = de_mean(pset).unwrap();
            cmd.vx = pset.row(sel).iter().map(|g| g.mu[0]).fold(f64::INFINITY, f64::min).clamp(-3.0, 3.0);
            cmd
        }
    }
}

fn run(models: &(PerceptionModel, Ensemble), variant: &VariantConfig, mode: usize, track: &Track, seed: u64) -> u32 {
    let mut obs_rng = seeds::derived_rng(seed, 1);
    let mut perc_rng = seeds::derived_rng(seed, 2);
    let mut dec_rng = seeds::derived_rng(seed, 3);
    let noise = SensorNoise::default();
    let mut state = UavState::initial();
    let mut last_pass = 0.0;
    loop {
        let obs = observe(&state, track, &mut obs_rng, Some(&noise)).unwrap();
        let latents = sample_latents(&models.0, &obs, variant.latent_samples, variant.latent_mode, &mut perc_rng).unwrap();
        let pset = ensemble_predict(&models.1, &latents).unwrap();
        let cmd = decide(&pset, mode, 64, &mut dec_rng);
        let next = step(&state, &cmd, 0.05).unwrap();
        let gate = &track.gates[state.next_gate as usize % 8];
        let mut ns = next;
        if gate_passed(&state, &next, gate) {
            ns.gates_passed += 1;
            ns.next_gate += 1;
            last_pass = ns.time;
        }
        state = ns;
        if state.gates_passed >= 32 { return 32; }
        if state.time - last_pass >= 30.0 { return state.gates_passed; }
        if state.position.iter().map(|v| v * v).sum::<f64>().sqrt() > 40.0 { return state.gates_passed; }
    }
}

fn main() {
    let md = uavnav_cli::load_models(std::path::Path::new("/tmp/full/s2")).unwrap();
    let variant = VariantId::M0.config();
    let ensemble = md.ensemble_for(&variant).unwrap();
    let models = (md.perception, ensemble);
    for mode in 0..4 {
        let mut total = 0;
        let mut per = Vec::new();
        for t in 0..6u64 {
            let track_seed = seeds::derive(seeds::derive(7, seeds::STREAM_EVAL), 100 + t);
            let track = generate_track(1.0, 2.0, track_seed).unwrap();
            let g = run(&models, &variant, mode, &track, 5000 + t);
            per.push(g);
            total += g;
        }
        println!("mode {mode}: {per:?} mean {:.1}", total as f64 / 6.0);
    }
}
