use uavnav::decision::Strategy;
use uavnav::sim::*;
use uavnav::variant::VariantId;

fn main() {
    let models = uavnav_cli::load_models(std::path::Path::new("/tmp/full/stack_b0.05")).unwrap();
    let variant = VariantId::M0.config();
    let ensemble = models.ensemble_for(&variant).unwrap();
    let track = generate_track(1.0, 2.0, 1001).unwrap();
    let params = EpisodeParams { record_trajectory: true, mc_samples: 64, ..Default::default() };
    let res = run_episode(&models.perception, &ensemble, &variant, Strategy::MiMode, &track, &params, 7).unwrap();
    println!("gates={} term={:?} time={:.1}", res.gates_passed, res.termination, res.sim_time);
    println!("gate0 at ({:.2},{:.2},{:.2})", track.gates[0].center[0], track.gates[0].center[1], track.gates[0].center[2]);
    for rec in res.trajectory.iter().step_by(15).take(28) {
        println!("t={:5.2} p=({:6.2},{:6.2},{:5.2}) yaw={:5.2} cmd=({:5.2},{:5.2},{:5.2},{:5.2}) sel={:?}",
            rec.time, rec.position[0], rec.position[1], rec.position[2], rec.yaw,
            rec.command.vx, rec.command.vy, rec.command.vz, rec.command.yaw_rate, rec.selected_member);
    }
}
