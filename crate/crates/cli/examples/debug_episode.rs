use uavnav::decision::Strategy;
use uavnav::sim::*;
use uavnav::variant::VariantId;

fn main() {
    let models = uavnav_cli::load_models(std::path::Path::new("/tmp/full/stack")).unwrap();
    let variant = VariantId::M0.config();
    let ensemble = models.ensemble_for(&variant).unwrap();
    let args: Vec<String> = std::env::args().collect();
    let strategy = if args.get(1).map(|s| s.as_str()) == Some("mi") { Strategy::MiMode } else { Strategy::DeMean };
    let mut total = 0u32;
    for seed in 0..4u64 {
        let track = generate_track(1.0, 2.0, 1000 + seed).unwrap();
        let params = EpisodeParams { record_trajectory: true, mc_samples: 64, ..Default::default() };
        let res = run_episode(&models.perception, &ensemble, &variant, strategy, &track, &params, 7 + seed).unwrap();
        total += res.gates_passed;
        // plane-crossing miss distances for the active gate
        let mut misses = Vec::new();
        let mut gate_idx = 0usize;
        let mut prev: Option<&StepRecord> = None;
        for rec in &res.trajectory {
            if let Some(p) = prev {
                let gate = &track.gates[gate_idx % 8];
                let (s, c) = gate.yaw.sin_cos();
                let s0 = (p.position[0] - gate.center[0]) * c + (p.position[1] - gate.center[1]) * s;
                let s1 = (rec.position[0] - gate.center[0]) * c + (rec.position[1] - gate.center[1]) * s;
                if s0 < 0.0 && s1 >= 0.0 {
                    let t = s0 / (s0 - s1);
                    let mut d2 = 0.0;
                    for k in 0..3 {
                        let pt = p.position[k] + t * (rec.position[k] - p.position[k]);
                        d2 += (pt - gate.center[k]).powi(2);
                    }
                    let dist = d2.sqrt();
                    misses.push(dist);
                    if dist <= gate.pass_radius { gate_idx += 1; }
                }
            }
            prev = Some(rec);
        }
        let shown: Vec<String> = misses.iter().map(|d| format!("{d:.2}")).collect();
        println!("seed {seed}: gates={} crossings at dist: {}", res.gates_passed, shown.join(" "));
    }
    println!("total gates over 4 tracks: {total}");
}
