use uavnav::nn::ForwardMode;
use uavnav::perception::*;
use uavnav::sim::Scenario;
use uavnav::seeds;

fn main() {
    let model = load_perception(std::path::Path::new("/tmp/full/stack_b0.05/perception.json")).unwrap();
    let mut rng = seeds::rng_from(3);
    let obs = Scenario::SingleGateAhead.observation(Some(&SensorNoise::default()), &mut rng).unwrap();
    let base = encode(&model, &obs, ForwardMode::EvalDropoutOff, None).unwrap();
    let mut srng = seeds::rng_from(4);
    let set = sample_latents(&model, &obs, 512, LatentMode::Mcd, &mut srng).unwrap();
    println!("dim | mu_off | posterior_sigma | mcd_mean_spread");
    for d in 0..10 {
        let mean: f64 = set.samples.iter().map(|z| z[d]).sum::<f64>() / 512.0;
        let var: f64 = set.samples.iter().map(|z| (z[d] - mean).powi(2)).sum::<f64>() / 512.0;
        println!("{d}: {:7.3} | {:7.3} | {:7.3}", base.mu[d], base.var[d].sqrt(), var.sqrt());
    }
}
