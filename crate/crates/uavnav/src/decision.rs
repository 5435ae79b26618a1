//! Decision strategies: collapse a predictive set into one command.
//!
//! `de_mean` takes the uniform-mixture mean over all member/latent
//! predictions. Averaging symmetric disagreement cancels to zero, which is
//! exactly the failure mode the alternative avoids: `mi_lower_bound` scores
//! each member by the average Monte Carlo KL from its per-latent predicted
//! Gaussians to the all-member mixture (a sampled lower bound on the mutual
//! information between predictions and the latent/weight uncertainty),
//! `select_member_min_mi` keeps the member with the lowest score, and
//! `mi_mode_command` extracts conservative modes from that member's
//! densities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{PredictiveSet, CMD_DIM};
use crate::error::{Error, Result};
use crate::nn::standard_normal;
use crate::seeds;

/// Velocity command limits applied to every strategy output.
pub const V_MAX: f64 = 3.0;
pub const YAW_RATE_MAX: f64 = 1.5;

/// Modes below this fraction of the global density peak are pruned; keeps
/// mode sets stable against minor lumps in sampled mixtures while genuine
/// competing hypotheses (comparable lobes) survive.
pub const MODE_PRUNE_FRACTION: f64 = 0.6;

/// Body-frame velocity command (m/s, m/s, m/s, rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub yaw_rate: f64,
}

impl ControlCommand {
    pub fn zero() -> Self {
        ControlCommand {
            vx: 0.0,
            vy: 0.0,
            vz: 0.0,
            yaw_rate: 0.0,
        }
    }

    /// Build from raw per-dimension values, clipping to the command limits.
    pub fn clipped(raw: [f64; CMD_DIM]) -> Result<Self> {
        if !raw.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("control command"));
        }
        Ok(ControlCommand {
            vx: raw[0].clamp(-V_MAX, V_MAX),
            vy: raw[1].clamp(-V_MAX, V_MAX),
            vz: raw[2].clamp(-V_MAX, V_MAX),
            yaw_rate: raw[3].clamp(-YAW_RATE_MAX, YAW_RATE_MAX),
        })
    }

    pub fn as_array(&self) -> [f64; CMD_DIM] {
        [self.vx, self.vy, self.vz, self.yaw_rate]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.as_array().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("control command"));
        }
        Ok(())
    }
}

/// Decision strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform-mixture mean over all predictions.
    DeMean,
    /// Minimum-MI member selection plus conservative mode extraction.
    MiMode,
}

/// Which mode of a selected member's density becomes the command for the
/// lateral/vertical/yaw dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModePolicy {
    /// Mode with the smallest absolute value (most conservative maneuver).
    SmallestAbs,
    /// Signed minimum mode.
    SignedMin,
}

impl Default for ModePolicy {
    fn default() -> Self {
        ModePolicy::SmallestAbs
    }
}

/// One-dimensional Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDensity1D {
    components: Vec<MixtureComponent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub mean: f64,
    pub var: f64,
    pub weight: f64,
}

impl MixtureDensity1D {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::contract("mixture needs at least one component"));
        }
        let mut wsum = 0.0;
        for c in &components {
            if !(c.mean.is_finite() && c.var.is_finite() && c.weight.is_finite()) {
                return Err(Error::NonFinite("mixture component"));
            }
            if c.var <= 0.0 {
                return Err(Error::contract("mixture component variance must be > 0"));
            }
            if c.weight < 0.0 {
                return Err(Error::contract("mixture weights must be >= 0"));
            }
            wsum += c.weight;
        }
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("mixture weights sum to {wsum}")));
        }
        Ok(MixtureDensity1D { components })
    }

    /// Uniform mixture over the given (mean, var) pairs.
    pub fn uniform(params: &[(f64, f64)]) -> Result<Self> {
        let w = 1.0 / params.len() as f64;
        MixtureDensity1D::new(
            params
                .iter()
                .map(|&(mean, var)| MixtureComponent { mean, var, weight: w })
                .collect(),
        )
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Uniform mixture over all predictions of the set in one dimension.
    pub fn from_pset_dim(pset: &PredictiveSet, dim: usize) -> Result<Self> {
        require_probabilistic(pset)?;
        MixtureDensity1D::uniform(
            &pset
                .iter_all()
                .map(|g| (g.mu[dim], g.var[dim]))
                .collect::<Vec<_>>(),
        )
    }

    /// Uniform mixture over one member's per-latent predictions in one dimension.
    pub fn from_member_dim(pset: &PredictiveSet, member: usize, dim: usize) -> Result<Self> {
        require_probabilistic(pset)?;
        MixtureDensity1D::uniform(
            &pset
                .row(member)
                .iter()
                .map(|g| (g.mu[dim], g.var[dim]))
                .collect::<Vec<_>>(),
        )
    }
}

fn require_probabilistic(pset: &PredictiveSet) -> Result<()> {
    if !pset.is_probabilistic() {
        return Err(Error::UnsupportedStrategy(
            "density operations need probabilistic predictions".into(),
        ));
    }
    Ok(())
}

/// Mixture density at `y`.
pub fn mixture_pdf(mix: &MixtureDensity1D, y: f64) -> f64 {
    let mut p = 0.0;
    for c in &mix.components {
        let d = y - c.mean;
        p += c.weight * (-d * d / (2.0 * c.var)).exp() / (2.0 * std::f64::consts::PI * c.var).sqrt();
    }
    p
}

/// Deep-ensemble mean: the uniform-mixture mean command and the mixture
/// variance per dimension. Point predictions enter with zero variance.
pub fn de_mean(pset: &PredictiveSet) -> Result<(ControlCommand, [f64; CMD_DIM])> {
    let k = pset.cardinality() as f64;
    let mut mean = [0.0; CMD_DIM];
    let mut second = [0.0; CMD_DIM];
    for g in pset.iter_all() {
        for d in 0..CMD_DIM {
            mean[d] += g.mu[d];
            second[d] += g.var[d] + g.mu[d] * g.mu[d];
        }
    }
    let mut var = [0.0; CMD_DIM];
    for d in 0..CMD_DIM {
        mean[d] /= k;
        var[d] = second[d] / k - mean[d] * mean[d];
    }
    Ok((ControlCommand::clipped(mean)?, var))
}

/// Monte Carlo estimate of `KL(g || mix)` from `s` draws of `g`.
///
/// The log-ratio is evaluated in ratio form,
/// `-ln( sum_j w_j * exp(l_j - l_g) )`, so a mixture identical to `g`
/// yields exactly zero for every sample.
pub fn kl_gaussian_to_mixture(
    g: (f64, f64),
    mix: &MixtureDensity1D,
    s: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    kl_gaussian_to_mixture_with_se(g, mix, s, rng).map(|(kl, _)| kl)
}

/// [`kl_gaussian_to_mixture`] plus the Monte Carlo standard error.
pub fn kl_gaussian_to_mixture_with_se(
    g: (f64, f64),
    mix: &MixtureDensity1D,
    s: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    if s < 1 {
        return Err(Error::contract("sample count must be >= 1"));
    }
    let (g_mean, g_var) = g;
    if !(g_var > 0.0 && g_var.is_finite() && g_mean.is_finite()) {
        return Err(Error::contract("degenerate sampling Gaussian"));
    }
    let terms = KlTerms::new(g_mean, g_var, mix);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..s {
        let v = terms.log_ratio(standard_normal(rng));
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / s as f64;
    let var = (sumsq / s as f64 - mean * mean).max(0.0);
    Ok((mean, (var / s as f64).sqrt()))
}

/// Precomputed quantities for the sampled log-ratio `ln g(y) - ln mix(y)`
/// with `y = g_mean + g_std * eps`.
///
/// The ratio `mix(y)/g(y)` is accumulated directly and divided by the
/// stored weight sum, so a mixture whose components all equal `g` gives a
/// ratio of exactly one (log-ratio exactly zero) for every sample.
struct KlTerms {
    g_std: f64,
    g_inv2v: f64,
    weight_sum: f64,
    /// Per component: (mean offset g_mean - mu_j, 1/(2 var_j),
    /// weight_j * sqrt(var_g / var_j)).
    comps: Vec<(f64, f64, f64)>,
}

impl KlTerms {
    fn new(g_mean: f64, g_var: f64, mix: &MixtureDensity1D) -> Self {
        let comps: Vec<(f64, f64, f64)> = mix
            .components
            .iter()
            .map(|c| {
                (
                    g_mean - c.mean,
                    1.0 / (2.0 * c.var),
                    c.weight * (g_var / c.var).sqrt(),
                )
            })
            .collect();
        KlTerms {
            g_std: g_var.sqrt(),
            g_inv2v: 1.0 / (2.0 * g_var),
            weight_sum: mix.components.iter().map(|c| c.weight).sum(),
            comps,
        }
    }

    fn log_ratio(&self, eps: f64) -> f64 {
        let t = self.g_std * eps;
        let tg = t * t * self.g_inv2v;
        let mut ratio = 0.0;
        for &(delta, inv2v, wnorm) in &self.comps {
            let d = delta + t;
            ratio += wnorm * (tg - d * d * inv2v).exp();
        }
        -(ratio / self.weight_sum).max(f64::MIN_POSITIVE).ln()
    }
}

/// Per-member mutual-information scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiScores {
    /// Total score per member (sum over command dimensions), in nats.
    pub per_member: Vec<f64>,
    /// Per-member, per-dimension scores.
    pub per_member_per_dim: Vec<[f64; CMD_DIM]>,
    /// Monte Carlo tolerance `3/sqrt(S)`; estimates may dip below zero by
    /// at most this much.
    pub mc_tolerance: f64,
}

/// Sampled lower bound on the mutual information, per member and dimension:
/// `I[n][d] = (1/M) * sum_m KL( pred[n][m][d] || mix_d )` where `mix_d` is
/// the uniform mixture of all `N*M` predicted Gaussians in dimension `d`.
///
/// The noise streams for the KL draws are antithetic (`+eps`/`-eps` pairs)
/// and derived per (latent, dim), shared across members: mirror-image
/// members receive identical treatment and mean shifts cancel exactly.
pub fn mi_lower_bound(pset: &PredictiveSet, s: usize, rng: &mut ChaCha8Rng) -> Result<MiScores> {
    require_probabilistic(pset)?;
    if s < 1 {
        return Err(Error::contract("sample count must be >= 1"));
    }
    let n = pset.members();
    let m = pset.latents();
    let base_seed: u64 = rng.random();

    let mixes: Vec<MixtureDensity1D> = (0..CMD_DIM)
        .map(|d| MixtureDensity1D::from_pset_dim(pset, d))
        .collect::<Result<Vec<_>>>()?;

    // Half-length eps vector per (latent, dim), shared by every member;
    // each entry is used as an antithetic +/- pair.
    let half = s.div_ceil(2);
    let eps_for = |mi: usize, d: usize| -> Vec<f64> {
        let mut r = seeds::rng_from(seeds::derive(base_seed, (mi * CMD_DIM + d) as u64));
        (0..half).map(|_| standard_normal(&mut r)).collect()
    };

    let term = |member: usize, mi: usize, d: usize, eps: &[f64]| -> f64 {
        let g = pset.pred(member, mi);
        let terms = KlTerms::new(g.mu[d], g.var[d], &mixes[d]);
        let mut sum = 0.0;
        let mut used = 0;
        for &e in eps {
            if used + 2 <= s {
                // Bracketed pair so the accumulation order is symmetric.
                sum += terms.log_ratio(e) + terms.log_ratio(-e);
                used += 2;
            } else {
                sum += terms.log_ratio(e);
                used += 1;
            }
        }
        sum / s as f64
    };

    // KL terms indexed (latent, dim) -> per-member estimates.
    let cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|mi| (0..CMD_DIM).map(move |d| (mi, d)))
        .collect();

    let compute_cell = |&(mi, d): &(usize, usize)| -> Vec<f64> {
        let eps = eps_for(mi, d);
        (0..n).map(|member| term(member, mi, d, &eps)).collect()
    };

    #[cfg(feature = "parallel")]
    let cell_scores: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        cells.par_iter().map(compute_cell).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cell_scores: Vec<Vec<f64>> = cells.iter().map(compute_cell).collect();

    let mut per_member_per_dim = vec![[0.0; CMD_DIM]; n];
    for ((_, d), scores) in cells.iter().zip(cell_scores.iter()) {
        for member in 0..n {
            per_member_per_dim[member][*d] += scores[member];
        }
    }
    let inv_m = 1.0 / m as f64;
    for row in &mut per_member_per_dim {
        for v in row.iter_mut() {
            *v *= inv_m;
        }
    }
    let per_member: Vec<f64> = per_member_per_dim.iter().map(|row| row.iter().sum()).collect();

    Ok(MiScores {
        per_member,
        per_member_per_dim,
        mc_tolerance: 3.0 / (s as f64).sqrt(),
    })
}

/// Index of the member with the minimal total score; ties break low.
pub fn select_member_min_mi(scores: &MiScores) -> usize {
    let mut best = 0;
    for (i, &v) in scores.per_member.iter().enumerate() {
        if v < scores.per_member[best] {
            best = i;
        }
    }
    best
}

/// Strict local maxima of the mixture pdf on a uniform grid spanning
/// `[min mean - 3 max std, max mean + 3 max std]`, pruned below
/// [`MODE_PRUNE_FRACTION`] of the global maximum. A peak that ties across
/// adjacent grid points (a
/// symmetric mixture sampled on an even grid does this exactly) counts as
/// one mode at the plateau center. Returned sorted by location.
pub fn extract_modes(mix: &MixtureDensity1D, grid_n: usize) -> Result<Vec<(f64, f64)>> {
    if grid_n < 64 {
        return Err(Error::contract("mode grid needs at least 64 points"));
    }
    let (lo, hi) = mode_grid_range(mix);
    let step = (hi - lo) / (grid_n - 1) as f64;
    let pdf: Vec<f64> = (0..grid_n)
        .map(|i| mixture_pdf(mix, lo + step * i as f64))
        .collect();
    let peak = pdf.iter().cloned().fold(0.0, f64::max);
    let floor = MODE_PRUNE_FRACTION * peak;
    let mut modes = Vec::new();
    let mut i = 1;
    while i < grid_n - 1 {
        if pdf[i] > pdf[i - 1] {
            let mut j = i;
            while j + 1 < grid_n && pdf[j + 1] == pdf[i] {
                j += 1;
            }
            if j < grid_n - 1 && pdf[j + 1] < pdf[i] && pdf[i] >= floor {
                let loc = lo + step * (i + j) as f64 / 2.0;
                modes.push((loc, pdf[i]));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(modes)
}

/// Grid bounds used by [`extract_modes`].
pub fn mode_grid_range(mix: &MixtureDensity1D) -> (f64, f64) {
    let min_mu = mix.components.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
    let max_mu = mix.components.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
    let max_std = mix
        .components
        .iter()
        .map(|c| c.var.sqrt())
        .fold(0.0, f64::max);
    (min_mu - 3.0 * max_std, max_mu + 3.0 * max_std)
}

/// Grid cell width used by [`extract_modes`] for the given mixture.
pub fn mode_grid_cell(mix: &MixtureDensity1D, grid_n: usize) -> f64 {
    let (lo, hi) = mode_grid_range(mix);
    (hi - lo) / (grid_n - 1) as f64
}

/// Conservative command from the selected member's predicted densities:
/// per lateral/vertical/yaw dimension, the mode of the member's per-latent
/// mixture favored by `policy` (smallest magnitude by default); for the
/// forward velocity, the minimum predicted mean over the member's latents.
pub fn mi_mode_command(
    pset: &PredictiveSet,
    selected: usize,
    grid_n: usize,
    policy: ModePolicy,
) -> Result<ControlCommand> {
    require_probabilistic(pset)?;
    if selected >= pset.members() {
        return Err(Error::contract("selected member out of range"));
    }
    let mut raw = [0.0; CMD_DIM];
    raw[0] = pset
        .row(selected)
        .iter()
        .map(|g| g.mu[0])
        .fold(f64::INFINITY, f64::min);
    for d in 1..CMD_DIM {
        let mix = MixtureDensity1D::from_member_dim(pset, selected, d)?;
        let modes = extract_modes(&mix, grid_n)?;
        raw[d] = match pick_mode(&modes, policy) {
            Some(loc) => loc,
            // Degenerate flat grid; fall back to the member's mean.
            None => pset.row(selected).iter().map(|g| g.mu[d]).sum::<f64>()
                / pset.latents() as f64,
        };
    }
    ControlCommand::clipped(raw)
}

fn pick_mode(modes: &[(f64, f64)], policy: ModePolicy) -> Option<f64> {
    match policy {
        ModePolicy::SmallestAbs => modes
            .iter()
            .map(|&(loc, _)| loc)
            .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap()),
        ModePolicy::SignedMin => modes.first().map(|&(loc, _)| loc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::PolicyKind;
    use crate::gaussian::GaussianVec;
    use approx::assert_relative_eq;

    fn pset_from(rows: Vec<Vec<(Vec<f64>, Vec<f64>)>>, kind: PolicyKind) -> PredictiveSet {
        let preds = rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(mu, var)| GaussianVec { mu, var })
                    .collect()
            })
            .collect();
        PredictiveSet::new(kind, preds).unwrap()
    }

    fn gv(mu: [f64; 4], var: [f64; 4]) -> (Vec<f64>, Vec<f64>) {
        (mu.to_vec(), var.to_vec())
    }

    #[test]
    fn de_mean_single_component_is_identity() {
        let pset = pset_from(
            vec![vec![gv([0.5, -0.2, 0.1, 0.3], [0.9, 0.8, 0.7, 0.6])]],
            PolicyKind::Probabilistic,
        );
        let (cmd, var) = de_mean(&pset).unwrap();
        assert_eq!(cmd.as_array(), [0.5, -0.2, 0.1, 0.3]);
        for (v, expect) in var.iter().zip([0.9, 0.8, 0.7, 0.6]) {
            assert_relative_eq!(*v, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn de_mean_two_component_hand_moments() {
        // N(1,1) and N(3,1) in dim 0: mean 2, var (1+1+1+9)/2 - 4 = 2.
        let pset = pset_from(
            vec![
                vec![gv([1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0])],
                vec![gv([3.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0])],
            ],
            PolicyKind::Probabilistic,
        );
        let (cmd, var) = de_mean(&pset).unwrap();
        assert_relative_eq!(cmd.vx, 2.0, max_relative = 1e-15);
        assert_relative_eq!(var[0], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn de_mean_symmetric_components_average_to_zero() {
        // The "moving straight" failure mode: left/right predictions cancel.
        let pset = pset_from(
            vec![
                vec![gv([1.0, -0.8, 0.2, -0.5], [0.1; 4])],
                vec![gv([1.0, 0.8, -0.2, 0.5], [0.1; 4])],
            ],
            PolicyKind::Probabilistic,
        );
        let (cmd, _) = de_mean(&pset).unwrap();
        assert_eq!(cmd.vy, 0.0);
        assert_eq!(cmd.vz, 0.0);
        assert_eq!(cmd.yaw_rate, 0.0);
    }

    #[test]
    fn de_mean_clips_to_limits() {
        let pset = pset_from(
            vec![vec![gv([5.0, -4.0, 3.5, 2.0], [0.1; 4])]],
            PolicyKind::Probabilistic,
        );
        let (cmd, _) = de_mean(&pset).unwrap();
        assert_eq!(cmd.as_array(), [3.0, -3.0, 3.0, 1.5]);
    }

    #[test]
    fn mixture_pdf_standard_normal_at_zero() {
        let mix = MixtureDensity1D::uniform(&[(0.0, 1.0)]).unwrap();
        assert_relative_eq!(mixture_pdf(&mix, 0.0), 0.3989422804014327, max_relative = 1e-12);
    }

    #[test]
    fn mixture_pdf_integrates_to_one() {
        let mix = MixtureDensity1D::new(vec![
            MixtureComponent { mean: -1.0, var: 0.3, weight: 0.25 },
            MixtureComponent { mean: 0.4, var: 1.2, weight: 0.45 },
            MixtureComponent { mean: 2.2, var: 0.6, weight: 0.30 },
        ])
        .unwrap();
        let (lo, hi) = (-12.0, 14.0);
        let n = 40_000;
        let step = (hi - lo) / n as f64;
        let mut integral = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            integral += w * mixture_pdf(&mix, lo + step * i as f64);
        }
        integral *= step;
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn mixture_pdf_symmetric_mixture_is_even() {
        let mix = MixtureDensity1D::uniform(&[(-1.5, 0.4), (1.5, 0.4)]).unwrap();
        for y in [0.1, 0.7, 2.0, 3.3] {
            assert_relative_eq!(mixture_pdf(&mix, y), mixture_pdf(&mix, -y), max_relative = 1e-12);
        }
    }

    #[test]
    fn kl_to_itself_is_exactly_zero() {
        let mix = MixtureDensity1D::uniform(&[(0.7, 0.35)]).unwrap();
        let mut rng = seeds::rng_from(41);
        let kl = kl_gaussian_to_mixture((0.7, 0.35), &mix, 257, &mut rng).unwrap();
        assert_eq!(kl, 0.0);
    }

    #[test]
    fn kl_matches_gaussian_closed_form() {
        // KL(N(0,1) || N(1,2)) = 0.5*(ln 2 + 2/2 - 1) + extra mean term.
        let closed = 0.5 * ((2.0_f64).ln() + (1.0 + 1.0) / 2.0 - 1.0);
        let mix = MixtureDensity1D::uniform(&[(1.0, 2.0)]).unwrap();
        let mut rng = seeds::rng_from(42);
        let (kl, se) =
            kl_gaussian_to_mixture_with_se((0.0, 1.0), &mix, 4096, &mut rng).unwrap();
        assert!((kl - closed).abs() <= 3.0 * se, "kl {kl} closed {closed} se {se}");
    }

    #[test]
    fn kl_to_bimodal_mixture_matches_quadrature_golden() {
        // Golden value from an independent quadrature of
        // KL(N(0,1) || 0.5 N(-3,1) + 0.5 N(3,1)).
        let golden = 2.693351976596842;
        let mix = MixtureDensity1D::uniform(&[(-3.0, 1.0), (3.0, 1.0)]).unwrap();
        let mut rng = seeds::rng_from(43);
        let (kl, se) =
            kl_gaussian_to_mixture_with_se((0.0, 1.0), &mix, 65_536, &mut rng).unwrap();
        assert!(kl > 0.0);
        assert!((kl - golden).abs() <= 3.0 * se, "kl {kl} golden {golden} se {se}");
        // Reproducible under a fixed seed.
        let mut rng2 = seeds::rng_from(43);
        let kl2 = kl_gaussian_to_mixture((0.0, 1.0), &mix, 65_536, &mut rng2).unwrap();
        assert_eq!(kl, kl2);
    }

    fn identical_pset(n: usize, m: usize) -> PredictiveSet {
        let rows = (0..n)
            .map(|_| (0..m).map(|_| gv([0.4, -0.2, 0.1, 0.0], [0.3; 4])).collect())
            .collect();
        pset_from(rows, PolicyKind::Probabilistic)
    }

    #[test]
    fn mi_scores_exactly_zero_for_identical_predictions() {
        let pset = identical_pset(5, 8);
        let mut rng = seeds::rng_from(44);
        let scores = mi_lower_bound(&pset, 64, &mut rng).unwrap();
        for row in &scores.per_member_per_dim {
            assert_eq!(row, &[0.0; CMD_DIM]);
        }
        assert!(scores.per_member.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mi_mirror_members_score_equal() {
        let a = [0.9, -0.6, 0.2, 0.8];
        let neg_a = [-0.9, 0.6, -0.2, -0.8];
        let pset = pset_from(
            vec![vec![gv(a, [0.25; 4])], vec![gv(neg_a, [0.25; 4])]],
            PolicyKind::Probabilistic,
        );
        let mut rng = seeds::rng_from(45);
        let scores = mi_lower_bound(&pset, 2048, &mut rng).unwrap();
        // Antithetic shared streams make the mirrored estimates exact here
        // (two components, so the inner sums commute).
        assert_eq!(scores.per_member[0], scores.per_member[1]);
    }

    #[test]
    fn mi_two_member_golden_value() {
        // A = N(0,1), B = N(6,1), M = 1: both scores equal
        // KL(N(0,1) || 0.5 A + 0.5 B) = 0.6892979330290725 (quadrature).
        let golden = 0.6892979330290725;
        let pset = pset_from(
            vec![
                vec![gv([0.0, 0.0, 0.0, 0.0], [1.0; 4])],
                vec![gv([6.0, 6.0, 6.0, 6.0], [1.0; 4])],
            ],
            PolicyKind::Probabilistic,
        );
        let mut rng = seeds::rng_from(46);
        let s = 65_536;
        let scores = mi_lower_bound(&pset, s, &mut rng).unwrap();
        let tol = 5.0 / (s as f64).sqrt();
        for member in 0..2 {
            for d in 0..CMD_DIM {
                let v = scores.per_member_per_dim[member][d];
                assert!((v - golden).abs() < tol, "member {member} dim {d}: {v}");
            }
        }
    }

    #[test]
    fn mi_scores_bounded_below_by_mc_tolerance() {
        let pset = pset_from(
            vec![
                vec![gv([0.1, 0.0, -0.1, 0.2], [0.5; 4]), gv([0.2, 0.1, 0.0, 0.1], [0.4; 4])],
                vec![gv([0.0, -0.1, 0.1, 0.0], [0.6; 4]), gv([0.15, 0.0, 0.05, 0.1], [0.5; 4])],
            ],
            PolicyKind::Probabilistic,
        );
        let mut rng = seeds::rng_from(47);
        let scores = mi_lower_bound(&pset, 1024, &mut rng).unwrap();
        for row in &scores.per_member_per_dim {
            for &v in row {
                assert!(v >= -scores.mc_tolerance, "score {v} below tolerance");
            }
        }
    }

    #[test]
    fn mi_rejects_deterministic_sets() {
        let pset = pset_from(
            vec![vec![(vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4])]],
            PolicyKind::Deterministic,
        );
        let mut rng = seeds::rng_from(48);
        assert!(matches!(
            mi_lower_bound(&pset, 16, &mut rng),
            Err(Error::UnsupportedStrategy(_))
        ));
    }

    #[test]
    fn select_member_picks_min_and_breaks_ties_low() {
        let scores = MiScores {
            per_member: vec![0.5, 0.2, 0.9],
            per_member_per_dim: vec![[0.125; 4]; 3],
            mc_tolerance: 0.0,
        };
        assert_eq!(select_member_min_mi(&scores), 1);
        let ties = MiScores {
            per_member: vec![0.4, 0.4, 0.4],
            per_member_per_dim: vec![[0.1; 4]; 3],
            mc_tolerance: 0.0,
        };
        assert_eq!(select_member_min_mi(&ties), 0);
    }

    #[test]
    fn modes_single_gaussian_within_one_cell() {
        let mix = MixtureDensity1D::uniform(&[(0.7, 0.09)]).unwrap();
        let modes = extract_modes(&mix, 512).unwrap();
        assert_eq!(modes.len(), 1);
        assert!((modes[0].0 - 0.7).abs() <= mode_grid_cell(&mix, 512));
    }

    #[test]
    fn modes_well_separated_pair_found() {
        let mix = MixtureDensity1D::uniform(&[(-1.0, 0.01), (1.0, 0.01)]).unwrap();
        let modes = extract_modes(&mix, 512).unwrap();
        assert_eq!(modes.len(), 2);
        let cell = mode_grid_cell(&mix, 512);
        assert!((modes[0].0 + 1.0).abs() <= cell);
        assert!((modes[1].0 - 1.0).abs() <= cell);
    }

    #[test]
    fn modes_merged_pair_is_unimodal() {
        let mix = MixtureDensity1D::uniform(&[(0.0, 1.0), (0.1, 1.0)]).unwrap();
        let modes = extract_modes(&mix, 512).unwrap();
        assert_eq!(modes.len(), 1);
    }

    #[test]
    fn mi_mode_command_single_latent_recovers_means() {
        let pset = pset_from(
            vec![vec![gv([1.2, -0.4, 0.3, 0.6], [0.04; 4])]],
            PolicyKind::Probabilistic,
        );
        let cmd = mi_mode_command(&pset, 0, 513, ModePolicy::SmallestAbs).unwrap();
        assert_eq!(cmd.vx, 1.2); // min over a single mean is exact
        let cell = 6.0 * 0.2 / 512.0;
        assert!((cmd.vy + 0.4).abs() <= cell);
        assert!((cmd.vz - 0.3).abs() <= cell);
        assert!((cmd.yaw_rate - 0.6).abs() <= cell);
    }

    #[test]
    fn mi_mode_command_picks_smallest_abs_mode_and_min_vx() {
        // Member 0 vy mixture has modes near -0.8 and +0.1.
        let pset = pset_from(
            vec![vec![
                gv([1.2, -0.8, 0.0, 0.0], [0.01, 0.002, 0.01, 0.01]),
                gv([0.7, 0.1, 0.0, 0.0], [0.01, 0.002, 0.01, 0.01]),
                gv([0.9, 0.1, 0.0, 0.0], [0.01, 0.002, 0.01, 0.01]),
            ]],
            PolicyKind::Probabilistic,
        );
        let cmd = mi_mode_command(&pset, 0, 512, ModePolicy::SmallestAbs).unwrap();
        assert_eq!(cmd.vx, 0.7);
        assert!((cmd.vy - 0.1).abs() < 0.02, "vy {}", cmd.vy);
        let signed = mi_mode_command(&pset, 0, 512, ModePolicy::SignedMin).unwrap();
        assert!((signed.vy + 0.8).abs() < 0.02, "signed vy {}", signed.vy);
    }

    #[test]
    fn shift_leaves_scores_unchanged_and_shifts_modes() {
        // Dyadic means/vars and a dyadic shift keep fp arithmetic exact.
        let base = pset_from(
            vec![
                vec![gv([0.5, -0.25, 0.125, 0.75], [0.25; 4])],
                vec![gv([-0.5, 0.5, -0.375, 0.25], [0.5; 4])],
            ],
            PolicyKind::Probabilistic,
        );
        let c = 2.0;
        let shifted = pset_from(
            vec![
                vec![gv([0.5 + c, -0.25 + c, 0.125 + c, 0.75 + c], [0.25; 4])],
                vec![gv([-0.5 + c, 0.5 + c, -0.375 + c, 0.25 + c], [0.5; 4])],
            ],
            PolicyKind::Probabilistic,
        );
        let mut r1 = seeds::rng_from(50);
        let mut r2 = seeds::rng_from(50);
        let s1 = mi_lower_bound(&base, 256, &mut r1).unwrap();
        let s2 = mi_lower_bound(&shifted, 256, &mut r2).unwrap();
        assert_eq!(s1.per_member, s2.per_member);

        let mix = MixtureDensity1D::from_pset_dim(&base, 0).unwrap();
        let mix_shifted = MixtureDensity1D::from_pset_dim(&shifted, 0).unwrap();
        let modes = extract_modes(&mix, 512).unwrap();
        let modes_shifted = extract_modes(&mix_shifted, 512).unwrap();
        assert_eq!(modes.len(), modes_shifted.len());
        for (a, b) in modes.iter().zip(modes_shifted.iter()) {
            assert!((a.0 + c - b.0).abs() < 1e-12);
        }
    }

    #[test]
    fn member_permutation_preserves_selected_output() {
        let pset = pset_from(
            vec![
                vec![gv([1.0, 0.5, 0.0, 0.0], [0.2; 4]), gv([1.1, 0.6, 0.0, 0.0], [0.2; 4])],
                vec![gv([0.2, -0.9, 0.1, 0.3], [0.3; 4]), gv([0.3, -1.0, 0.2, 0.2], [0.3; 4])],
                vec![gv([1.05, 0.55, 0.0, 0.0], [0.2; 4]), gv([1.0, 0.5, 0.0, 0.0], [0.2; 4])],
            ],
            PolicyKind::Probabilistic,
        );
        let order = [2usize, 0, 1];
        let permuted = pset.permute_members(&order).unwrap();
        let mut r1 = seeds::rng_from(51);
        let mut r2 = seeds::rng_from(51);
        let sel_a = select_member_min_mi(&mi_lower_bound(&pset, 2048, &mut r1).unwrap());
        let sel_b = select_member_min_mi(&mi_lower_bound(&permuted, 2048, &mut r2).unwrap());
        assert_eq!(order[sel_b], sel_a, "permutation must track the same member");
        let cmd_a = mi_mode_command(&pset, sel_a, 512, ModePolicy::SmallestAbs).unwrap();
        let cmd_b = mi_mode_command(&permuted, sel_b, 512, ModePolicy::SmallestAbs).unwrap();
        assert_eq!(cmd_a, cmd_b);
    }
}
