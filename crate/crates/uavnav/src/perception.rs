//! Stochastic perception: a small cross-modal VAE over synthetic sensor
//! vectors. The encoder maps a 16-feature observation to a diagonal
//! Gaussian in a 10-dimensional latent space; the decoder reconstructs the
//! nearest gate's pose from a latent. Epistemic uncertainty is sampled with
//! Monte Carlo dropout: repeated dropout-on passes of the same observation
//! produce a set of latent samples.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianVec;
use crate::nn::{
    self, adam_step, loss, Activation, AdamState, DenseNet, ForwardMode, TrainConfig,
};
use crate::seeds;

pub const OBS_DIM: usize = 16;
pub const SLOT_DIM: usize = 8;
pub const N_SLOTS: usize = 2;
pub const LATENT_DIM: usize = 10;
pub const POSE_DIM: usize = 4;

const ENCODER_HIDDEN: usize = 64;
const DECODER_HIDDEN: usize = 64;
/// One dropout layer after each encoder hidden activation.
pub const ENCODER_DROPOUT: f64 = 0.1;
/// Default KL weight for the latent regularizer.
pub const DEFAULT_BETA: f64 = 4.0;

/// Additive sensor noise on visible observation slots.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SensorNoise {
    /// Position/range noise std as a fraction of true range.
    pub pos_factor: f64,
    /// Angle noise std in radians (relative yaw, bearing, elevation).
    pub angle_sigma: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        SensorNoise {
            pos_factor: 0.05,
            angle_sigma: 0.02,
        }
    }
}

/// One sensed gate: body-frame position (x forward, y left, z up), relative
/// yaw, bearing, elevation, range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotReading {
    pub position: [f64; 3],
    pub rel_yaw: f64,
    pub bearing: f64,
    pub elevation: f64,
    pub range: f64,
}

impl SlotReading {
    fn write_to(&self, out: &mut [f64]) {
        out[0] = self.position[0];
        out[1] = self.position[1];
        out[2] = self.position[2];
        out[3] = self.rel_yaw;
        out[4] = self.bearing;
        out[5] = self.elevation;
        out[6] = self.range;
        out[7] = 1.0;
    }
}

/// Sensor observation: two gate slots (nearest first by sensed range),
/// each `[x, y, z, rel_yaw, bearing, elevation, range, visible]`. Slots
/// with no visible gate are all-zero with the flag at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: [f64; OBS_DIM],
}

impl Observation {
    pub fn empty() -> Self {
        Observation {
            features: [0.0; OBS_DIM],
        }
    }

    pub fn from_slots(slots: &[SlotReading]) -> Result<Self> {
        if slots.len() > N_SLOTS {
            return Err(Error::contract("at most two observation slots"));
        }
        let mut features = [0.0; OBS_DIM];
        for (i, s) in slots.iter().enumerate() {
            s.write_to(&mut features[i * SLOT_DIM..(i + 1) * SLOT_DIM]);
        }
        let obs = Observation { features };
        obs.validate()?;
        Ok(obs)
    }

    pub fn slot(&self, i: usize) -> Option<SlotReading> {
        let f = &self.features[i * SLOT_DIM..(i + 1) * SLOT_DIM];
        if f[7] == 0.0 {
            return None;
        }
        Some(SlotReading {
            position: [f[0], f[1], f[2]],
            rel_yaw: f[3],
            bearing: f[4],
            elevation: f[5],
            range: f[6],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        for i in 0..N_SLOTS {
            let f = &self.features[i * SLOT_DIM..(i + 1) * SLOT_DIM];
            let flag = f[7];
            if flag != 0.0 && flag != 1.0 {
                return Err(Error::contract("slot flag must be 0 or 1"));
            }
            if flag == 0.0 && f[..7].iter().any(|&v| v != 0.0) {
                return Err(Error::contract("empty slot must be all-zero"));
            }
            if f[6] < 0.0 {
                return Err(Error::contract("slot range must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Pose of a gate relative to the UAV body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePose {
    pub position: [f64; 3],
    pub yaw: f64,
}

impl GatePose {
    pub fn to_vec(self) -> [f64; POSE_DIM] {
        [self.position[0], self.position[1], self.position[2], self.yaw]
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() != POSE_DIM {
            return Err(Error::ShapeMismatch {
                what: "gate pose",
                expected: POSE_DIM,
                got: v.len(),
            });
        }
        Ok(GatePose {
            position: [v[0], v[1], v[2]],
            yaw: v[3],
        })
    }
}

/// How latent samples are drawn from the perception posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentMode {
    /// Monte Carlo dropout: one dropout-on encoder pass per sample, the
    /// sample being that pass's posterior mean. The spread across samples
    /// is purely the epistemic (weight) uncertainty exposed by dropout.
    Mcd,
    /// One dropout-off pass; samples drawn from its (mu, var).
    LatentNoise,
    /// One dropout-off pass; the single sample is the encoder mean.
    MeanOnly,
}

/// A set of latent samples fed to the control ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    pub samples: Vec<[f64; LATENT_DIM]>,
    pub mode: LatentMode,
}

impl LatentSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::contract("LatentSet must hold at least one sample"));
        }
        if self.mode == LatentMode::MeanOnly && self.samples.len() != 1 {
            return Err(Error::contract("mean_only implies exactly one sample"));
        }
        if !self
            .samples
            .iter()
            .all(|z| z.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite("latent sample"));
        }
        Ok(())
    }
}

/// Encoder + pose decoder with the KL weight they were trained under.
#[derive(Debug, Clone)]
pub struct PerceptionModel {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub beta: f64,
    pub sensor_noise: SensorNoise,
}

impl PerceptionModel {
    /// Untrained model with randomly initialized weights. The encoder
    /// carries one dropout layer (after its last hidden activation).
    pub fn init(beta: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut encoder = DenseNet::init(
            &[OBS_DIM, ENCODER_HIDDEN, ENCODER_HIDDEN, 2 * LATENT_DIM],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            ENCODER_DROPOUT,
            rng,
        )?;
        encoder.set_dropout_placement(crate::nn::DropoutPlacement::LastHiddenOnly);
        let decoder = DenseNet::init(
            &[LATENT_DIM, DECODER_HIDDEN, POSE_DIM],
            &[Activation::Relu, Activation::Identity],
            0.0,
            rng,
        )?;
        Ok(PerceptionModel {
            encoder,
            decoder,
            beta,
            sensor_noise: SensorNoise::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.encoder.output_dim() != 2 * LATENT_DIM {
            return Err(Error::Format(
                "encoder output must be twice the latent dimension".into(),
            ));
        }
        if self.decoder.input_dim() != LATENT_DIM {
            return Err(Error::Format("decoder input must match latent dim".into()));
        }
        Ok(())
    }
}

/// Meter-valued features are scaled down before entering the encoder so
/// position and angle features share a comparable range; observations stay
/// in raw meters on the wire.
const METER_SCALE: f64 = 0.1;

fn scaled_features(obs: &Observation) -> [f64; OBS_DIM] {
    let mut f = obs.features;
    for slot in 0..N_SLOTS {
        let base = slot * SLOT_DIM;
        f[base] *= METER_SCALE;
        f[base + 1] *= METER_SCALE;
        f[base + 2] *= METER_SCALE;
        f[base + 6] *= METER_SCALE;
    }
    f
}

/// Encode an observation to the latent posterior `(mu, var)` of one pass.
pub fn encode(
    model: &PerceptionModel,
    obs: &Observation,
    mode: ForwardMode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<GaussianVec> {
    obs.validate()?;
    let out = model.encoder.infer(&scaled_features(obs), mode, rng)?;
    let mu = out[..LATENT_DIM].to_vec();
    let var: Vec<f64> = out[LATENT_DIM..].iter().map(|&s| s.exp()).collect();
    GaussianVec::new(mu, var)
}

/// Decode a latent vector to a gate-pose estimate.
pub fn decode_pose(model: &PerceptionModel, z: &[f64]) -> Result<GatePose> {
    if z.len() != LATENT_DIM {
        return Err(Error::ShapeMismatch {
            what: "latent",
            expected: LATENT_DIM,
            got: z.len(),
        });
    }
    let out = model.decoder.infer(z, ForwardMode::EvalDropoutOff, None)?;
    GatePose::from_vec(&out)
}

/// Draw `m` latent samples under the given mode. See [`LatentMode`].
pub fn sample_latents(
    model: &PerceptionModel,
    obs: &Observation,
    m: usize,
    mode: LatentMode,
    rng: &mut ChaCha8Rng,
) -> Result<LatentSet> {
    sample_latents_scaled(model, obs, m, mode, rng, 1.0)
}

/// [`sample_latents`] with the reparameterization noise of `latent_noise`
/// mode scaled by `eps_scale`; a scale of zero collapses every draw onto
/// the pass mean (test hook).
pub fn sample_latents_scaled(
    model: &PerceptionModel,
    obs: &Observation,
    m: usize,
    mode: LatentMode,
    rng: &mut ChaCha8Rng,
    eps_scale: f64,
) -> Result<LatentSet> {
    if m == 0 {
        return Err(Error::contract("latent sample count must be >= 1"));
    }
    let mut samples = Vec::with_capacity(m);
    match mode {
        LatentMode::Mcd => {
            for _ in 0..m {
                let g = encode(model, obs, ForwardMode::EvalDropoutOn, Some(rng))?;
                let mut z = [0.0; LATENT_DIM];
                z.copy_from_slice(&g.mu);
                samples.push(z);
            }
        }
        LatentMode::LatentNoise => {
            let g = encode(model, obs, ForwardMode::EvalDropoutOff, None)?;
            for _ in 0..m {
                samples.push(reparameterize(&g, rng, eps_scale));
            }
        }
        LatentMode::MeanOnly => {
            if m != 1 {
                return Err(Error::contract("mean_only requires m == 1"));
            }
            let g = encode(model, obs, ForwardMode::EvalDropoutOff, None)?;
            let mut z = [0.0; LATENT_DIM];
            z.copy_from_slice(&g.mu);
            samples.push(z);
        }
    }
    let set = LatentSet { samples, mode };
    set.validate()?;
    Ok(set)
}

fn reparameterize(g: &GaussianVec, rng: &mut ChaCha8Rng, eps_scale: f64) -> [f64; LATENT_DIM] {
    let mut z = [0.0; LATENT_DIM];
    for d in 0..LATENT_DIM {
        let eps = nn::standard_normal(rng) * eps_scale;
        z[d] = g.mu[d] + g.var[d].sqrt() * eps;
    }
    z
}

/// Final losses reported by [`train_cmvae_lite`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerceptionTrainReport {
    pub n_train: usize,
    pub n_val: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean squared pose error per dimension on the two splits.
    pub train_pose_mse: f64,
    pub val_pose_mse: f64,
    pub epoch_train_losses: Vec<f64>,
}

/// Train the encoder/decoder pair on (observation, gate pose) pairs with an
/// 80/20 train/validation split. The objective per sample is
/// `sum-squared pose error + beta * KL(q(z|x) || N(0, I))`, with the
/// reparameterized latent `z = mu + sigma * eps` and dropout active in the
/// encoder.
pub fn train_cmvae_lite(
    dataset: &[(Observation, GatePose)],
    config: &TrainConfig,
    beta: f64,
) -> Result<(PerceptionModel, PerceptionTrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;

    let n_train = ((dataset.len() * 8) / 10).max(1);
    let (train, val) = dataset.split_at(n_train);

    let mut init_rng = seeds::derived_rng(config.seed, 1);
    let mut noise_rng = seeds::derived_rng(config.seed, 2);
    let mut shuffle_rng = seeds::derived_rng(config.seed, 3);

    let mut model = PerceptionModel::init(beta, &mut init_rng)?;
    let mut enc_state = AdamState::new(&model.encoder);
    let mut dec_state = AdamState::new(&model.decoder);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_train_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        shuffle(&mut order, &mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut enc_grads = nn::Gradients::zeros_like(&model.encoder);
            let mut dec_grads = nn::Gradients::zeros_like(&model.decoder);
            for &i in batch {
                let (obs, pose) = &train[i];
                let (loss, eg, dg) = sample_backward(&model, obs, pose, beta, &mut noise_rng)?;
                epoch_loss += loss;
                enc_grads.accumulate(&eg);
                dec_grads.accumulate(&dg);
            }
            let inv = 1.0 / batch.len() as f64;
            enc_grads.scale(inv);
            dec_grads.scale(inv);
            adam_step(&mut model.encoder, &enc_grads, &mut enc_state, config)?;
            adam_step(&mut model.decoder, &dec_grads, &mut dec_state, config)?;
        }
        epoch_train_losses.push(epoch_loss / train.len() as f64);
    }

    let (train_loss, train_pose_mse) = eval_split(&model, train, beta)?;
    let (val_loss, val_pose_mse) = if val.is_empty() {
        (train_loss, train_pose_mse)
    } else {
        eval_split(&model, val, beta)?
    };

    let report = PerceptionTrainReport {
        n_train: train.len(),
        n_val: val.len(),
        train_loss,
        val_loss,
        train_pose_mse,
        val_pose_mse,
        epoch_train_losses,
    };
    Ok((model, report))
}

/// One training sample: forward with dropout, reparameterize, decode, and
/// backpropagate the pose + KL objective through both networks.
fn sample_backward(
    model: &PerceptionModel,
    obs: &Observation,
    pose: &GatePose,
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, nn::Gradients, nn::Gradients)> {
    let (enc_out, enc_cache) =
        model
            .encoder
            .forward(&scaled_features(obs), ForwardMode::TrainDropout, Some(rng))?;
    let (mu, log_var) = enc_out.split_at(LATENT_DIM);

    let mut z = vec![0.0; LATENT_DIM];
    let mut eps = vec![0.0; LATENT_DIM];
    for d in 0..LATENT_DIM {
        eps[d] = nn::standard_normal(rng);
        z[d] = mu[d] + (0.5 * log_var[d]).exp() * eps[d];
    }

    let (dec_out, dec_cache) = model.decoder.forward(&z, ForwardMode::EvalDropoutOff, None)?;
    let target = pose.to_vec();
    let recon = loss::sum_squared_error(&dec_out, &target)?;
    let kl = loss::kl_to_standard_normal(mu, log_var)?;
    let total = recon + beta * kl;

    let d_dec_out = loss::sum_squared_error_grad(&dec_out, &target)?;
    let dec_grads = model.decoder.backward(&dec_cache, &d_dec_out)?;

    // d(loss)/dz via the decoder input; matches W^T g of its first layer.
    let d_z = decoder_input_grad(&model.decoder, &dec_cache, &d_dec_out)?;

    let (kl_d_mu, kl_d_s) = loss::kl_to_standard_normal_grad(mu, log_var)?;
    let mut enc_out_grad = vec![0.0; 2 * LATENT_DIM];
    for d in 0..LATENT_DIM {
        // z = mu + exp(s/2)*eps: dz/dmu = 1, dz/ds = 0.5*exp(s/2)*eps.
        enc_out_grad[d] = d_z[d] + beta * kl_d_mu[d];
        enc_out_grad[LATENT_DIM + d] =
            d_z[d] * 0.5 * (0.5 * log_var[d]).exp() * eps[d] + beta * kl_d_s[d];
    }
    let enc_grads = model.encoder.backward(&enc_cache, &enc_out_grad)?;

    Ok((total, enc_grads, dec_grads))
}

/// Gradient of the decoder loss w.r.t. the decoder *input*.
fn decoder_input_grad(
    decoder: &DenseNet,
    cache: &nn::ForwardCache,
    d_out: &[f64],
) -> Result<Vec<f64>> {
    // Re-run the backward recursion but keep only the propagated signal.
    // Cheaper than generalizing `backward` to return input gradients.
    let grads = decoder.backward(cache, d_out)?;
    // The input gradient is W0^T g_z0; recover g_z0 from d_bias of layer 0.
    let layer0 = &decoder.layers()[0];
    let gz0 = &grads.layers[0].d_bias;
    let mut d_in = vec![0.0; layer0.in_dim];
    for o in 0..layer0.out_dim {
        let row = &layer0.weights[o * layer0.in_dim..(o + 1) * layer0.in_dim];
        for i in 0..layer0.in_dim {
            d_in[i] += row[i] * gz0[o];
        }
    }
    Ok(d_in)
}

fn eval_split(
    model: &PerceptionModel,
    split: &[(Observation, GatePose)],
    beta: f64,
) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut pose_sse = 0.0;
    for (obs, pose) in split {
        let out = model
            .encoder
            .infer(&scaled_features(obs), ForwardMode::EvalDropoutOff, None)?;
        let (mu, log_var) = out.split_at(LATENT_DIM);
        let dec = model.decoder.infer(mu, ForwardMode::EvalDropoutOff, None)?;
        let target = pose.to_vec();
        let sse = loss::sum_squared_error(&dec, &target)?;
        total += sse + beta * loss::kl_to_standard_normal(mu, log_var)?;
        pose_sse += sse;
    }
    let n = split.len() as f64;
    Ok((total / n, pose_sse / (n * POSE_DIM as f64)))
}

pub(crate) fn shuffle<T>(xs: &mut [T], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
}

/// Persisted form of a perception model.
#[derive(Debug, Serialize, Deserialize)]
pub struct PerceptionFile {
    pub format_version: u32,
    pub latent_dim: usize,
    pub beta: f64,
    pub sensor_noise: SensorNoise,
    pub encoder: nn::io::WeightsFile,
    pub decoder: nn::io::WeightsFile,
}

impl PerceptionFile {
    pub fn from_model(model: &PerceptionModel) -> Self {
        PerceptionFile {
            format_version: nn::io::WEIGHTS_FORMAT_VERSION,
            latent_dim: LATENT_DIM,
            beta: model.beta,
            sensor_noise: model.sensor_noise.clone(),
            encoder: nn::io::WeightsFile::from_net(&model.encoder),
            decoder: nn::io::WeightsFile::from_net(&model.decoder),
        }
    }

    pub fn into_model(self) -> Result<PerceptionModel> {
        if self.latent_dim != LATENT_DIM {
            return Err(Error::Format(format!(
                "unsupported latent_dim {}",
                self.latent_dim
            )));
        }
        let model = PerceptionModel {
            encoder: self.encoder.into_net()?,
            decoder: self.decoder.into_net()?,
            beta: self.beta,
            sensor_noise: self.sensor_noise,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_perception(model: &PerceptionModel, path: &std::path::Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&PerceptionFile::from_model(model))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_perception(path: &std::path::Path) -> Result<PerceptionModel> {
    let data = std::fs::read_to_string(path)?;
    let file: PerceptionFile = serde_json::from_str(&data)?;
    file.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_obs() -> Observation {
        Observation::from_slots(&[SlotReading {
            position: [5.0, 0.3, -0.2],
            rel_yaw: 0.4,
            bearing: 0.06,
            elevation: -0.04,
            range: 5.013,
        }])
        .unwrap()
    }

    #[test]
    fn slot_layout_round_trips() {
        let obs = test_obs();
        let s = obs.slot(0).unwrap();
        assert_eq!(s.position, [5.0, 0.3, -0.2]);
        assert_eq!(s.range, 5.013);
        assert!(obs.slot(1).is_none());
        obs.validate().unwrap();
    }

    #[test]
    fn empty_slot_with_nonzero_entries_rejected() {
        let mut obs = Observation::empty();
        obs.features[0] = 1.0; // flag stays 0
        assert!(obs.validate().is_err());
    }

    #[test]
    fn encode_deterministic_with_dropout_off() {
        let mut rng = seeds::rng_from(1);
        let model = PerceptionModel::init(DEFAULT_BETA, &mut rng).unwrap();
        let obs = test_obs();
        let a = encode(&model, &obs, ForwardMode::EvalDropoutOff, None).unwrap();
        let b = encode(&model, &obs, ForwardMode::EvalDropoutOff, None).unwrap();
        assert_eq!(a, b);
        assert!(a.var.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_weight_encoder_outputs_bias() {
        let mut rng = seeds::rng_from(2);
        let mut model = PerceptionModel::init(DEFAULT_BETA, &mut rng).unwrap();
        let enc = DenseNet::zeros(
            &[OBS_DIM, ENCODER_HIDDEN, ENCODER_HIDDEN, 2 * LATENT_DIM],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            ENCODER_DROPOUT,
        )
        .unwrap();
        model.encoder = enc;
        let last = model.encoder.layers().len() - 1;
        for d in 0..LATENT_DIM {
            model.encoder.layers_mut()[last].bias[d] = 0.25;
            model.encoder.layers_mut()[last].bias[LATENT_DIM + d] = -0.5;
        }
        let g = encode(&model, &test_obs(), ForwardMode::EvalDropoutOff, None).unwrap();
        assert!(g.mu.iter().all(|&m| m == 0.25));
        assert!(g.var.iter().all(|&v| (v - (-0.5_f64).exp()).abs() < 1e-15));
    }

    #[test]
    fn mean_only_returns_encoder_mean() {
        let mut rng = seeds::rng_from(3);
        let model = PerceptionModel::init(DEFAULT_BETA, &mut rng).unwrap();
        let obs = test_obs();
        let g = encode(&model, &obs, ForwardMode::EvalDropoutOff, None).unwrap();
        let mut srng = seeds::rng_from(4);
        let set = sample_latents(&model, &obs, 1, LatentMode::MeanOnly, &mut srng).unwrap();
        assert_eq!(set.samples.len(), 1);
        assert_eq!(set.samples[0].to_vec(), g.mu);
    }

    #[test]
    fn mcd_yields_requested_sample_count() {
        let mut rng = seeds::rng_from(5);
        let model = PerceptionModel::init(DEFAULT_BETA, &mut rng).unwrap();
        let mut srng = seeds::rng_from(6);
        let set = sample_latents(&model, &test_obs(), 32, LatentMode::Mcd, &mut srng).unwrap();
        assert_eq!(set.samples.len(), 32);
        set.validate().unwrap();
    }

    #[test]
    fn zero_count_rejected_and_mean_only_needs_one() {
        let mut rng = seeds::rng_from(7);
        let model = PerceptionModel::init(DEFAULT_BETA, &mut rng).unwrap();
        let mut srng = seeds::rng_from(8);
        assert!(sample_latents(&model, &test_obs(), 0, LatentMode::Mcd, &mut srng).is_err());
        assert!(
            sample_latents(&model, &test_obs(), 4, LatentMode::MeanOnly, &mut srng).is_err()
        );
    }

    #[test]
    fn zero_dropout_and_zero_eps_collapse_mcd_samples() {
        let mut rng = seeds::rng_from(9);
        let mut model = PerceptionModel::init(DEFAULT_BETA, &mut rng).unwrap();
        // Rebuild the encoder without dropout but with the trained weights' shapes.
        let mut enc = DenseNet::zeros(
            &[OBS_DIM, ENCODER_HIDDEN, ENCODER_HIDDEN, 2 * LATENT_DIM],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            0.0,
        )
        .unwrap();
        for (dst, src) in enc
            .layers_mut()
            .iter_mut()
            .zip(model.encoder.layers().iter())
        {
            dst.weights = src.weights.clone();
            dst.bias = src.bias.clone();
        }
        model.encoder = enc;
        let mut srng = seeds::rng_from(10);
        let set =
            sample_latents_scaled(&model, &test_obs(), 8, LatentMode::Mcd, &mut srng, 0.0)
                .unwrap();
        for z in &set.samples {
            assert_eq!(z, &set.samples[0]);
        }
    }

    #[test]
    fn latent_noise_spread_matches_encoder_variance() {
        let mut rng = seeds::rng_from(11);
        let model = PerceptionModel::init(DEFAULT_BETA, &mut rng).unwrap();
        let obs = test_obs();
        let g = encode(&model, &obs, ForwardMode::EvalDropoutOff, None).unwrap();
        let mut srng = seeds::rng_from(12);
        let m = 10_000;
        let set = sample_latents(&model, &obs, m, LatentMode::LatentNoise, &mut srng).unwrap();
        for d in 0..LATENT_DIM {
            let mean: f64 = set.samples.iter().map(|z| z[d]).sum::<f64>() / m as f64;
            let var: f64 =
                set.samples.iter().map(|z| (z[d] - mean).powi(2)).sum::<f64>() / m as f64;
            let rel = (var - g.var[d]).abs() / g.var[d];
            assert!(rel < 0.10, "dim {d}: sample var {var} vs {}", g.var[d]);
        }
    }

    #[test]
    fn decode_pose_deterministic() {
        let mut rng = seeds::rng_from(13);
        let model = PerceptionModel::init(DEFAULT_BETA, &mut rng).unwrap();
        let z = [0.1; LATENT_DIM];
        assert_eq!(
            decode_pose(&model, &z).unwrap(),
            decode_pose(&model, &z).unwrap()
        );
        assert!(decode_pose(&model, &[0.0; 3]).is_err());
    }

    #[test]
    fn overfits_single_sample_with_zero_beta() {
        let obs = test_obs();
        let pose = GatePose {
            position: [5.0, 0.3, -0.2],
            yaw: 0.4,
        };
        let config = TrainConfig {
            epochs: 12000,
            batch_size: 1,
            learning_rate: 5e-3,
            seed: 14,
            ..TrainConfig::default()
        };
        let (model, report) = train_cmvae_lite(&[(obs, pose)], &config, 0.0).unwrap();
        assert!(
            report.train_pose_mse < 1e-3,
            "pose mse {}",
            report.train_pose_mse
        );
        let g = encode(&model, &obs, ForwardMode::EvalDropoutOff, None).unwrap();
        let decoded = decode_pose(&model, g.mu.as_slice().try_into().unwrap()).unwrap();
        let err: f64 = decoded
            .to_vec()
            .iter()
            .zip(pose.to_vec().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / POSE_DIM as f64;
        assert!(err < 1e-2);
    }

    #[test]
    fn huge_beta_pins_posterior_to_prior() {
        let mut data = Vec::new();
        let mut rng = seeds::rng_from(15);
        for _ in 0..32 {
            let r = 3.0 + 4.0 * rand::Rng::random::<f64>(&mut rng);
            let obs = Observation::from_slots(&[SlotReading {
                position: [r, 0.1, 0.0],
                rel_yaw: 0.0,
                bearing: 0.03,
                elevation: 0.0,
                range: r,
            }])
            .unwrap();
            let pose = GatePose {
                position: [r, 0.1, 0.0],
                yaw: 0.0,
            };
            data.push((obs, pose));
        }
        let config = TrainConfig {
            epochs: 200,
            batch_size: 8,
            learning_rate: 3e-3,
            seed: 16,
            ..TrainConfig::default()
        };
        let (model, _) = train_cmvae_lite(&data, &config, 1e6).unwrap();
        for (obs, _) in &data {
            let g = encode(&model, obs, ForwardMode::EvalDropoutOff, None).unwrap();
            for d in 0..LATENT_DIM {
                assert!(g.mu[d].abs() < 0.05, "mu {}", g.mu[d]);
                assert!((g.var[d] - 1.0).abs() < 0.05, "var {}", g.var[d]);
            }
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data: Vec<_> = (0..8)
            .map(|i| {
                let r = 2.0 + i as f64;
                (
                    Observation::from_slots(&[SlotReading {
                        position: [r, 0.0, 0.0],
                        rel_yaw: 0.1,
                        bearing: 0.0,
                        elevation: 0.0,
                        range: r,
                    }])
                    .unwrap(),
                    GatePose {
                        position: [r, 0.0, 0.0],
                        yaw: 0.1,
                    },
                )
            })
            .collect();
        let config = TrainConfig {
            epochs: 3,
            batch_size: 4,
            seed: 17,
            ..TrainConfig::default()
        };
        let (a, _) = train_cmvae_lite(&data, &config, DEFAULT_BETA).unwrap();
        let (b, _) = train_cmvae_lite(&data, &config, DEFAULT_BETA).unwrap();
        for (la, lb) in a.encoder.layers().iter().zip(b.encoder.layers().iter()) {
            assert_eq!(la.weights, lb.weights);
            assert_eq!(la.bias, lb.bias);
        }
    }
}
