use uavnav::dataset::gen_perception_dataset;
use uavnav::perception::{decode_pose, encode, load_perception};
use uavnav::nn::ForwardMode;

fn main() {
    let model = load_perception(std::path::Path::new("/tmp/full/stack/perception.json")).unwrap();
    let data = gen_perception_dataset(4000, 999).unwrap();
    // per-dim squared error binned by label range
    let mut bins = [[0.0f64; 4]; 3];
    let mut counts = [0usize; 3];
    for (obs, pose) in &data {
        let r = (pose.position[0].powi(2) + pose.position[1].powi(2) + pose.position[2].powi(2)).sqrt();
        let bin = if r < 2.0 { 0 } else if r < 6.0 { 1 } else { 2 };
        let g = encode(&model, obs, ForwardMode::EvalDropoutOff, None).unwrap();
        let dec = decode_pose(&model, &g.mu).unwrap();
        let t = pose.to_vec();
        let d = dec.to_vec();
        for k in 0..4 {
            bins[bin][k] += (d[k] - t[k]).powi(2);
        }
        counts[bin] += 1;
    }
    for (b, name) in ["<2m", "2-6m", "6+m"].iter().enumerate() {
        let n = counts[b] as f64;
        println!(
            "range {name}: n={} rmse px={:.3} py={:.3} pz={:.3} yaw={:.3}",
            counts[b],
            (bins[b][0] / n).sqrt(),
            (bins[b][1] / n).sqrt(),
            (bins[b][2] / n).sqrt(),
            (bins[b][3] / n).sqrt()
        );
    }
}
