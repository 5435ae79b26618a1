//! Control policies over latent vectors. An ensemble of independently
//! trained probabilistic policies, each predicting a Gaussian per velocity
//! command, turns a latent sample set into the discrete posterior
//! predictive distribution: one prediction per (member, latent) pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianVec;
use crate::nn::{
    self, adam_step, loss, Activation, AdamState, DenseNet, ForwardMode, TrainConfig,
};
use crate::perception::{self, LatentSet, Observation, PerceptionModel, LATENT_DIM};
use crate::seeds;

pub const CMD_DIM: usize = 4;
const POLICY_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Predicts mean and log-variance per velocity command.
    Probabilistic,
    /// Predicts point commands only.
    Deterministic,
}

#[derive(Debug, Clone)]
pub struct PolicyModel {
    pub kind: PolicyKind,
    pub net: DenseNet,
    pub seed: u64,
}

impl PolicyModel {
    pub fn init(kind: PolicyKind, seed: u64) -> Result<Self> {
        let out_dim = match kind {
            PolicyKind::Probabilistic => 2 * CMD_DIM,
            PolicyKind::Deterministic => CMD_DIM,
        };
        let mut rng = seeds::rng_from(seed);
        let net = DenseNet::init(
            &[LATENT_DIM, POLICY_HIDDEN, POLICY_HIDDEN, out_dim],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            0.0,
            &mut rng,
        )?;
        Ok(PolicyModel { kind, net, seed })
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        let expected = match self.kind {
            PolicyKind::Probabilistic => 2 * CMD_DIM,
            PolicyKind::Deterministic => CMD_DIM,
        };
        if self.net.output_dim() != expected {
            return Err(Error::Format(format!(
                "policy output dim {} does not match kind",
                self.net.output_dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<PolicyModel>,
}

impl Ensemble {
    pub fn new(members: Vec<PolicyModel>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::contract("ensemble needs at least one member"));
        }
        let kind = members[0].kind;
        if members.iter().any(|m| m.kind != kind) {
            return Err(Error::contract("ensemble members must share a kind"));
        }
        let mut seeds: Vec<u64> = members.iter().map(|m| m.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != members.len() {
            return Err(Error::contract("ensemble member seeds must be distinct"));
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[PolicyModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn kind(&self) -> PolicyKind {
        self.members[0].kind
    }

    /// Single-member view (used by variants that run one policy).
    pub fn single(&self, index: usize) -> Result<Ensemble> {
        let member = self
            .members
            .get(index)
            .ok_or_else(|| Error::contract(format!("no ensemble member {index}")))?;
        Ok(Ensemble {
            members: vec![member.clone()],
        })
    }
}

/// The discrete posterior predictive distribution: predictions indexed by
/// `[member][latent]`. Deterministic policies store the zero-variance
/// sentinel and are excluded from density-based operations.
#[derive(Debug, Clone)]
pub struct PredictiveSet {
    pub kind: PolicyKind,
    preds: Vec<Vec<GaussianVec>>,
}

impl PredictiveSet {
    pub fn new(kind: PolicyKind, preds: Vec<Vec<GaussianVec>>) -> Result<Self> {
        if preds.is_empty() || preds[0].is_empty() {
            return Err(Error::contract("predictive set must be non-empty"));
        }
        let m = preds[0].len();
        if preds.iter().any(|row| row.len() != m) {
            return Err(Error::contract("predictive set must be rectangular"));
        }
        Ok(PredictiveSet { kind, preds })
    }

    pub fn members(&self) -> usize {
        self.preds.len()
    }

    pub fn latents(&self) -> usize {
        self.preds[0].len()
    }

    /// Total prediction count (`members x latents`).
    pub fn cardinality(&self) -> usize {
        self.members() * self.latents()
    }

    pub fn pred(&self, member: usize, latent: usize) -> &GaussianVec {
        &self.preds[member][latent]
    }

    pub fn row(&self, member: usize) -> &[GaussianVec] {
        &self.preds[member]
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &GaussianVec> {
        self.preds.iter().flat_map(|row| row.iter())
    }

    pub fn is_probabilistic(&self) -> bool {
        self.kind == PolicyKind::Probabilistic
    }

    /// Reorder members (test/diagnostic helper; indices must be a permutation).
    pub fn permute_members(&self, order: &[usize]) -> Result<PredictiveSet> {
        if order.len() != self.members() {
            return Err(Error::contract("permutation length mismatch"));
        }
        let preds = order
            .iter()
            .map(|&i| {
                self.preds
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::contract("permutation index out of range"))
            })
            .collect::<Result<Vec<_>>>()?;
        PredictiveSet::new(self.kind, preds)
    }
}

/// Evaluate one policy on one latent vector.
pub fn policy_predict(policy: &PolicyModel, z: &[f64]) -> Result<GaussianVec> {
    if z.len() != LATENT_DIM {
        return Err(Error::ShapeMismatch {
            what: "policy input",
            expected: LATENT_DIM,
            got: z.len(),
        });
    }
    let out = policy.net.infer(z, ForwardMode::EvalDropoutOff, None)?;
    match policy.kind {
        PolicyKind::Probabilistic => {
            let mu = out[..CMD_DIM].to_vec();
            let var: Vec<f64> = out[CMD_DIM..].iter().map(|&s| s.exp()).collect();
            GaussianVec::new(mu, var)
        }
        PolicyKind::Deterministic => Ok(GaussianVec::point(out)),
    }
}

/// Pass every latent through every member: `preds[n][m]`.
pub fn ensemble_predict(ensemble: &Ensemble, latents: &LatentSet) -> Result<PredictiveSet> {
    latents.validate()?;
    let preds = ensemble
        .members
        .iter()
        .map(|member| {
            latents
                .samples
                .iter()
                .map(|z| policy_predict(member, z))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    PredictiveSet::new(ensemble.kind(), preds)
}

/// Report from [`train_ensemble`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlTrainReport {
    pub n_train: usize,
    pub n_val: usize,
    /// Final per-member losses on the two splits (NLL for probabilistic,
    /// per-dimension MSE for deterministic).
    pub member_train_loss: Vec<f64>,
    pub member_val_loss: Vec<f64>,
    /// Mean training loss per epoch, per member.
    pub member_epoch_losses: Vec<Vec<f64>>,
}

/// Encode observations with the frozen perception model into the latent
/// pairs that policies train on: the mean-only latent of each observation
/// plus `stochastic_draws` additional latents with the same label,
/// alternating between dropout-on passes and reparameterization draws.
///
/// At flight time policies consume stochastic latents, so training on the
/// means alone leaves them extrapolating off-manifold; the extra draws
/// cover the latent spread every variant will actually produce.
pub fn encode_training_latents(
    perception: &PerceptionModel,
    data: &[(Observation, [f64; CMD_DIM])],
    stochastic_draws: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<([f64; LATENT_DIM], [f64; CMD_DIM])>> {
    use crate::perception::LatentMode;
    let mut pairs = Vec::with_capacity(data.len() * (1 + stochastic_draws));
    for (obs, cmd) in data {
        let g = perception::encode(perception, obs, ForwardMode::EvalDropoutOff, None)?;
        let mut z = [0.0; LATENT_DIM];
        z.copy_from_slice(&g.mu);
        pairs.push((z, *cmd));
        for draw in 0..stochastic_draws {
            let mode = if draw % 2 == 0 {
                LatentMode::Mcd
            } else {
                LatentMode::LatentNoise
            };
            let set = perception::sample_latents(perception, obs, 1, mode, rng)?;
            pairs.push((set.samples[0], *cmd));
        }
    }
    Ok(pairs)
}

/// Train `n` policies independently on (latent, command) pairs with a 90/10
/// train/validation split. Members differ by initialization and shuffle
/// order only; member seeds derive from `config.seed`.
pub fn train_ensemble(
    dataset: &[([f64; LATENT_DIM], [f64; CMD_DIM])],
    n: usize,
    config: &TrainConfig,
    kind: PolicyKind,
) -> Result<(Ensemble, ControlTrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n < 1 {
        return Err(Error::contract("ensemble size must be >= 1"));
    }
    config.validate()?;

    let n_train = ((dataset.len() * 9) / 10).max(1);
    let (train, val) = dataset.split_at(n_train);

    let member_seeds: Vec<u64> = (0..n).map(|i| seeds::derive(config.seed, 10 + i as u64)).collect();

    let train_one = |&member_seed: &u64| -> Result<(PolicyModel, f64, f64, Vec<f64>)> {
        let mut policy = PolicyModel::init(kind, member_seed)?;
        let mut state = AdamState::new(&policy.net);
        let mut shuffle_rng = seeds::derived_rng(member_seed, 1);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut epoch_losses = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            perception::shuffle(&mut order, &mut shuffle_rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(config.batch_size) {
                let mut grads = nn::Gradients::zeros_like(&policy.net);
                for &i in batch {
                    let (z, y) = &train[i];
                    let (l, g) = policy_sample_backward(&policy, z, y)?;
                    epoch_loss += l;
                    grads.accumulate(&g);
                }
                grads.scale(1.0 / batch.len() as f64);
                adam_step(&mut policy.net, &grads, &mut state, config)?;
            }
            epoch_losses.push(epoch_loss / train.len() as f64);
        }
        let train_loss = policy_split_loss(&policy, train)?;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            policy_split_loss(&policy, val)?
        };
        Ok((policy, train_loss, val_loss, epoch_losses))
    };

    #[cfg(feature = "parallel")]
    let trained: Vec<(PolicyModel, f64, f64, Vec<f64>)> = {
        use rayon::prelude::*;
        member_seeds
            .par_iter()
            .map(train_one)
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let trained: Vec<(PolicyModel, f64, f64, Vec<f64>)> =
        member_seeds.iter().map(train_one).collect::<Result<Vec<_>>>()?;

    let mut members = Vec::with_capacity(n);
    let mut member_train_loss = Vec::with_capacity(n);
    let mut member_val_loss = Vec::with_capacity(n);
    let mut member_epoch_losses = Vec::with_capacity(n);
    for (policy, tl, vl, el) in trained {
        members.push(policy);
        member_train_loss.push(tl);
        member_val_loss.push(vl);
        member_epoch_losses.push(el);
    }

    let report = ControlTrainReport {
        n_train: train.len(),
        n_val: val.len(),
        member_train_loss,
        member_val_loss,
        member_epoch_losses,
    };
    Ok((Ensemble::new(members)?, report))
}

fn policy_sample_backward(
    policy: &PolicyModel,
    z: &[f64; LATENT_DIM],
    y: &[f64; CMD_DIM],
) -> Result<(f64, nn::Gradients)> {
    let (out, cache) = policy.net.forward(z, ForwardMode::TrainDropout, None)?;
    match policy.kind {
        PolicyKind::Probabilistic => {
            let (mu, log_var) = out.split_at(CMD_DIM);
            let l = loss::heteroscedastic_nll(mu, log_var, y)?;
            let (d_mu, d_s) = loss::heteroscedastic_nll_grad(mu, log_var, y)?;
            let mut d_out = d_mu;
            d_out.extend(d_s);
            Ok((l, policy.net.backward(&cache, &d_out)?))
        }
        PolicyKind::Deterministic => {
            let l = loss::sum_squared_error(&out, y)?;
            let d_out = loss::sum_squared_error_grad(&out, y)?;
            Ok((l, policy.net.backward(&cache, &d_out)?))
        }
    }
}

fn policy_split_loss(
    policy: &PolicyModel,
    split: &[([f64; LATENT_DIM], [f64; CMD_DIM])],
) -> Result<f64> {
    let mut total = 0.0;
    for (z, y) in split {
        let out = policy.net.infer(z, ForwardMode::EvalDropoutOff, None)?;
        total += match policy.kind {
            PolicyKind::Probabilistic => {
                let (mu, log_var) = out.split_at(CMD_DIM);
                loss::heteroscedastic_nll(mu, log_var, y)?
            }
            PolicyKind::Deterministic => {
                loss::sum_squared_error(&out, y)? / CMD_DIM as f64
            }
        };
    }
    Ok(total / split.len() as f64)
}

/// Persisted form of one policy.
#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format_version: u32,
    pub kind: PolicyKind,
    pub seed: u64,
    pub net: nn::io::WeightsFile,
}

impl PolicyFile {
    pub fn from_policy(policy: &PolicyModel) -> Self {
        PolicyFile {
            format_version: nn::io::WEIGHTS_FORMAT_VERSION,
            kind: policy.kind,
            seed: policy.seed,
            net: nn::io::WeightsFile::from_net(&policy.net),
        }
    }

    pub fn into_policy(self) -> Result<PolicyModel> {
        let policy = PolicyModel {
            kind: self.kind,
            net: self.net.into_net()?,
            seed: self.seed,
        };
        policy.validate()?;
        Ok(policy)
    }
}
