use uavnav::decision::*;
use uavnav::sim::*;
use uavnav::variant::VariantId;

fn main() {
    let models = uavnav_cli::load_models(std::path::Path::new("/tmp/full/s2")).unwrap();
    let variant = VariantId::M0.config();
    let ensemble = models.ensemble_for(&variant).unwrap();
    // track where de-mean passes 32
    let track_seed = 12028181766694536581u64;
    let track = generate_track(1.0, 2.0, track_seed).unwrap();
    let params = EpisodeParams { record_trajectory: true, mc_samples: 64, ..Default::default() };
    let de = run_episode(&models.perception, &ensemble, &variant, Strategy::DeMean, &track, &params, 42).unwrap();
    let mi = run_episode(&models.perception, &ensemble, &variant, Strategy::MiMode, &track, &params, 42).unwrap();
    println!("de gates={} mi gates={}", de.gates_passed, mi.gates_passed);
    // For mi: how often does each command dim sit near zero while de's doesn't?
    let n = mi.trajectory.len().min(de.trajectory.len());
    let mut small_vy = 0; let mut small_yaw = 0; let mut small_vz = 0;
    for rec in mi.trajectory.iter().take(n) {
        if rec.command.vy.abs() < 0.1 { small_vy += 1; }
        if rec.command.yaw_rate.abs() < 0.05 { small_yaw += 1; }
        if rec.command.vz.abs() < 0.05 { small_vz += 1; }
    }
    println!("mi: steps={} vy~0: {:.0}% yaw~0: {:.0}% vz~0: {:.0}%", n,
        100.0*small_vy as f64/n as f64, 100.0*small_yaw as f64/n as f64, 100.0*small_vz as f64/n as f64);
    let mut small_vy = 0; let mut small_yaw = 0; let mut small_vz = 0;
    for rec in de.trajectory.iter().take(n) {
        if rec.command.vy.abs() < 0.1 { small_vy += 1; }
        if rec.command.yaw_rate.abs() < 0.05 { small_yaw += 1; }
        if rec.command.vz.abs() < 0.05 { small_vz += 1; }
    }
    println!("de: steps={} vy~0: {:.0}% yaw~0: {:.0}% vz~0: {:.0}%", n,
        100.0*small_vy as f64/n as f64, 100.0*small_yaw as f64/n as f64, 100.0*small_vz as f64/n as f64);
    // trajectory tail of mi
    for rec in mi.trajectory.iter().step_by(25).take(18) {
        println!("t={:5.2} p=({:6.2},{:6.2},{:5.2}) cmd=({:5.2},{:5.2},{:5.2},{:5.2}) sel={:?}",
            rec.time, rec.position[0], rec.position[1], rec.position[2],
            rec.command.vx, rec.command.vy, rec.command.vz, rec.command.yaw_rate, rec.selected_member);
    }
}
