//! Operator surface: dataset generation, training, evaluation, and density
//! export, with every run described by a manifest that reproduces it
//! byte-for-byte.
//!
//! All randomness derives from one base seed through three named streams
//! (`data`, `train`, `eval`); see [`uavnav::seeds`] for the derivation
//! rule. Outputs are plain JSON and CSV so plots come from external tools.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use uavnav::control::{
    encode_training_latents, ensemble_predict, ControlTrainReport, Ensemble, PolicyFile,
    PolicyKind, PolicyModel, CMD_DIM,
};
use uavnav::decision::{
    de_mean, mi_lower_bound, mi_mode_command, mixture_pdf, select_member_min_mi, MiScores,
    MixtureDensity1D, ModePolicy, Strategy,
};
use uavnav::error::{Error, Result};
use uavnav::nn::TrainConfig;
use uavnav::perception::{
    load_perception, sample_latents, save_perception, PerceptionModel, PerceptionTrainReport,
    SensorNoise, LATENT_DIM,
};
use uavnav::sim::{evaluate, EpisodeParams, EvalReport, NoiseLevel, Scenario};
use uavnav::variant::{VariantConfig, VariantId};
use uavnav::{dataset, seeds};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Documented protocol defaults.
pub const DEFAULT_TRACKS: usize = 6;
pub const DEFAULT_TRIALS: usize = 2;
pub const DEFAULT_MC_SAMPLES: usize = 1024;
pub const DEFAULT_GRID_N: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Perception,
    Control,
}

/// Map an error to the process exit code: 2 for usage/compatibility
/// problems, 3 for numeric failures, 1 otherwise.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_)
        | Error::UnsupportedStrategy(_)
        | Error::Contract(_)
        | Error::EmptyDataset
        | Error::ShapeMismatch { .. }
        | Error::Format(_) => 2,
        Error::NonFinite(_) => 3,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSet {
    pub base: u64,
    pub data: u64,
    pub train: u64,
    pub eval: u64,
}

impl SeedSet {
    pub fn from_base(base: u64) -> Self {
        SeedSet {
            base,
            data: seeds::derive(base, seeds::STREAM_DATA),
            train: seeds::derive(base, seeds::STREAM_TRAIN),
            eval: seeds::derive(base, seeds::STREAM_EVAL),
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a, T: Serialize> {
    format_version: u32,
    command: &'a str,
    seeds: &'a SeedSet,
    args: &'a T,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

fn write_manifest<T: Serialize>(
    dir: &Path,
    name: &str,
    command: &str,
    seed_set: &SeedSet,
    args: &T,
) -> Result<()> {
    write_json(
        &dir.join(name),
        &Manifest {
            format_version: MANIFEST_FORMAT_VERSION,
            command,
            seeds: seed_set,
            args,
        },
    )
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-data

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    /// Which dataset to synthesize.
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Number of records.
    #[arg(long)]
    pub count: usize,
    /// Base seed; the data stream derives from it.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory (dataset CSV plus manifest).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct GenDataSummary {
    pub path: PathBuf,
    pub records: usize,
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<GenDataSummary> {
    if args.count < 1 {
        return Err(Error::invalid("count must be >= 1"));
    }
    let seed_set = SeedSet::from_base(args.seed);
    ensure_dir(&args.out)?;
    let (path, records) = match args.kind {
        DataKind::Perception => {
            let data = dataset::gen_perception_dataset(args.count, seed_set.data)?;
            let path = args.out.join("perception.csv");
            dataset::write_perception_csv(&path, &data)?;
            (path, data.len())
        }
        DataKind::Control => {
            // Separate stream so perception/control sets are independent.
            let data =
                dataset::gen_control_dataset(args.count, seeds::derive(seed_set.data, 2))?;
            let path = args.out.join("control.csv");
            dataset::write_control_csv(&path, &data)?;
            (path, data.len())
        }
    };
    let manifest_name = match args.kind {
        DataKind::Perception => "manifest_gen_perception.json",
        DataKind::Control => "manifest_gen_control.json",
    };
    write_manifest(&args.out, manifest_name, "gen-data", &seed_set, args)?;
    Ok(GenDataSummary { path, records })
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Which model to train.
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Dataset CSV produced by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Perception model file (required when training control).
    #[arg(long)]
    pub perception: Option<PathBuf>,
    /// Base seed; the train stream derives from it.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// KL weight for the perception objective.
    #[arg(long, default_value_t = uavnav::perception::DEFAULT_BETA)]
    pub beta: f64,
    /// Probabilistic ensemble size for control training.
    #[arg(long, default_value_t = 5)]
    pub members: usize,
    /// Stochastic latent draws added per control sample (besides the mean).
    #[arg(long, default_value_t = 2)]
    pub latent_draws: usize,
    /// Output directory for model and metrics files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format_version: u32,
    pub probabilistic: EnsembleEntry,
    pub deterministic: EnsembleEntry,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnsembleEntry {
    pub kind: PolicyKind,
    pub seeds: Vec<u64>,
    pub members: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub perception: Option<PerceptionTrainReport>,
    pub probabilistic: Option<ControlTrainReport>,
    pub deterministic: Option<ControlTrainReport>,
}

fn train_config(args: &TrainArgs, stream: u64) -> TrainConfig {
    TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        seed: stream,
        ..TrainConfig::default()
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary> {
    let seed_set = SeedSet::from_base(args.seed);
    ensure_dir(&args.out)?;
    match args.kind {
        DataKind::Perception => {
            let data = dataset::read_perception_csv(&args.data)?;
            let config = train_config(args, seeds::derive(seed_set.train, 1));
            let (model, report) = uavnav::perception::train_cmvae_lite(&data, &config, args.beta)?;
            save_perception(&model, &args.out.join("perception.json"))?;
            write_json(&args.out.join("metrics_perception.json"), &report)?;
            write_manifest(
                &args.out,
                "manifest_train_perception.json",
                "train",
                &seed_set,
                args,
            )?;
            Ok(TrainSummary {
                perception: Some(report),
                probabilistic: None,
                deterministic: None,
            })
        }
        DataKind::Control => {
            let perception_path = args
                .perception
                .clone()
                .unwrap_or_else(|| args.out.join("perception.json"));
            if !perception_path.exists() {
                return Err(Error::invalid(format!(
                    "control training needs a trained encoder; missing {}",
                    perception_path.display()
                )));
            }
            let perception = load_perception(&perception_path)?;
            let raw = dataset::read_control_csv(&args.data)?;
            let labeled: Vec<_> = raw
                .iter()
                .map(|(obs, cmd)| (*obs, cmd.as_array()))
                .collect();
            let mut latent_rng = seeds::derived_rng(seed_set.train, 4);
            let pairs =
                encode_training_latents(&perception, &labeled, args.latent_draws, &mut latent_rng)?;

            let prob_config = train_config(args, seeds::derive(seed_set.train, 2));
            let (prob, prob_report) =
                uavnav::control::train_ensemble(&pairs, args.members, &prob_config, PolicyKind::Probabilistic)?;
            let det_config = train_config(args, seeds::derive(seed_set.train, 3));
            let (det, det_report) =
                uavnav::control::train_ensemble(&pairs, 1, &det_config, PolicyKind::Deterministic)?;

            let mut prob_files = Vec::new();
            for (i, member) in prob.members().iter().enumerate() {
                let name = format!("policy_{i}.json");
                write_json(&args.out.join(&name), &PolicyFile::from_policy(member))?;
                prob_files.push(name);
            }
            let det_name = "policy_det.json".to_string();
            write_json(
                &args.out.join(&det_name),
                &PolicyFile::from_policy(&det.members()[0]),
            )?;

            let manifest = EnsembleManifest {
                format_version: MANIFEST_FORMAT_VERSION,
                probabilistic: EnsembleEntry {
                    kind: PolicyKind::Probabilistic,
                    seeds: prob.members().iter().map(|m| m.seed).collect(),
                    members: prob_files,
                },
                deterministic: EnsembleEntry {
                    kind: PolicyKind::Deterministic,
                    seeds: vec![det.members()[0].seed],
                    members: vec![det_name],
                },
            };
            write_json(&args.out.join("ensemble.json"), &manifest)?;
            write_json(
                &args.out.join("metrics_control.json"),
                &serde_json::json!({
                    "probabilistic": &prob_report,
                    "deterministic": &det_report,
                }),
            )?;
            write_manifest(
                &args.out,
                "manifest_train_control.json",
                "train",
                &seed_set,
                args,
            )?;
            Ok(TrainSummary {
                perception: None,
                probabilistic: Some(prob_report),
                deterministic: Some(det_report),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// model loading

/// Trained models as stored in a directory by `train`.
pub struct ModelDir {
    pub perception: PerceptionModel,
    pub probabilistic: Ensemble,
    pub deterministic: Ensemble,
}

pub fn load_models(dir: &Path) -> Result<ModelDir> {
    let perception = load_perception(&dir.join("perception.json"))?;
    let manifest: EnsembleManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("ensemble.json"))?)?;
    let load_entry = |entry: &EnsembleEntry| -> Result<Ensemble> {
        let members = entry
            .members
            .iter()
            .map(|name| {
                let file: PolicyFile =
                    serde_json::from_str(&std::fs::read_to_string(dir.join(name))?)?;
                file.into_policy()
            })
            .collect::<Result<Vec<PolicyModel>>>()?;
        Ensemble::new(members)
    };
    Ok(ModelDir {
        perception,
        probabilistic: load_entry(&manifest.probabilistic)?,
        deterministic: load_entry(&manifest.deterministic)?,
    })
}

impl ModelDir {
    /// The ensemble view a variant runs with: the full probabilistic
    /// ensemble, its first member alone, or the deterministic policy.
    pub fn ensemble_for(&self, variant: &VariantConfig) -> Result<Ensemble> {
        match variant.policy_kind {
            PolicyKind::Deterministic => Ok(self.deterministic.clone()),
            PolicyKind::Probabilistic => {
                if variant.members == self.probabilistic.len() {
                    Ok(self.probabilistic.clone())
                } else if variant.members == 1 {
                    self.probabilistic.single(0)
                } else {
                    Err(Error::invalid(format!(
                        "variant {} needs {} members, trained ensemble has {}",
                        variant.id.name(),
                        variant.members,
                        self.probabilistic.len()
                    )))
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Directory holding perception.json / ensemble.json from `train`.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub variant: String,
    /// `mi-mode` or `de-mean`.
    #[arg(long)]
    pub strategy: String,
    /// Gate radius noise half-range (m).
    #[arg(long)]
    pub grn: f64,
    /// Gate height noise half-range (m).
    #[arg(long)]
    pub ghn: f64,
    #[arg(long, default_value_t = DEFAULT_TRACKS)]
    pub tracks: usize,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    /// Base seed; the eval stream derives from it.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Monte Carlo samples per KL term in the MI strategy.
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_N)]
    pub grid_n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct EvaluateSummary {
    pub variant: String,
    pub strategy: String,
    pub grn: f64,
    pub ghn: f64,
    pub mean_gates_passed: f64,
    pub episodes: usize,
}

#[derive(Debug, Serialize)]
struct EvaluateMetrics<'a> {
    variant: &'a str,
    strategy: &'a str,
    grn: f64,
    ghn: f64,
    tracks: usize,
    trials: usize,
    mc_samples: usize,
    grid_n: usize,
    mean_gates_passed: f64,
    report: &'a EvalReport,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateSummary> {
    if args.tracks < 1 || args.trials < 1 {
        return Err(Error::invalid("tracks and trials must be >= 1"));
    }
    let variant = VariantId::parse(&args.variant)?.config();
    let strategy = Strategy::parse(&args.strategy)?;
    variant.check_strategy(strategy)?;

    let models = load_models(&args.models)?;
    let ensemble = models.ensemble_for(&variant)?;
    let seed_set = SeedSet::from_base(args.seed);
    ensure_dir(&args.out)?;

    let params = EpisodeParams {
        mc_samples: args.mc_samples,
        grid_n: args.grid_n,
        ..EpisodeParams::default()
    };
    let report = evaluate(
        &models.perception,
        &ensemble,
        &variant,
        strategy,
        NoiseLevel {
            grn: args.grn,
            ghn: args.ghn,
        },
        args.tracks,
        args.trials,
        seed_set.eval,
        &params,
    )?;

    write_manifest(&args.out, "manifest.json", "evaluate", &seed_set, args)?;
    write_json(
        &args.out.join("metrics.json"),
        &EvaluateMetrics {
            variant: variant.id.name(),
            strategy: strategy.name(),
            grn: args.grn,
            ghn: args.ghn,
            tracks: args.tracks,
            trials: args.trials,
            mc_samples: args.mc_samples,
            grid_n: args.grid_n,
            mean_gates_passed: report.mean_gates_passed,
            report: &report,
        },
    )?;

    let mut csv = String::from(
        "track_index,trial,track_seed,episode_seed,gates_passed,termination,sim_time\n",
    );
    for row in &report.episodes {
        let term = match row.termination {
            uavnav::sim::Termination::MissionComplete => "mission_complete",
            uavnav::sim::Termination::Timeout => "timeout",
            uavnav::sim::Termination::OutOfBounds => "out_of_bounds",
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.track_index,
            row.trial,
            row.track_seed,
            row.episode_seed,
            row.gates_passed,
            term,
            row.sim_time
        ));
    }
    std::fs::write(args.out.join("episodes.csv"), csv)?;

    Ok(EvaluateSummary {
        variant: variant.id.name().to_string(),
        strategy: strategy.name().to_string(),
        grn: args.grn,
        ghn: args.ghn,
        mean_gates_passed: report.mean_gates_passed,
        episodes: report.episodes.len(),
    })
}

// ---------------------------------------------------------------------------
// density

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DensityArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, default_value = "m0")]
    pub variant: String,
    /// Built-in scenario: `double_gate` or `single_gate_ahead`.
    #[arg(long, conflicts_with = "record")]
    pub scenario: Option<String>,
    /// Alternatively, read the first record of a perception dataset CSV.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_N)]
    pub grid_n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct DensitySummary {
    pub components_per_dim: usize,
    pub selected_member: usize,
    pub modes_vy: usize,
}

pub const DIM_NAMES: [&str; CMD_DIM] = ["vx", "vy", "vz", "yaw_rate"];

pub fn cmd_density(args: &DensityArgs) -> Result<DensitySummary> {
    let variant = VariantId::parse(&args.variant)?.config();
    // Density export needs predicted distributions and MI scores.
    variant.check_strategy(Strategy::MiMode)?;
    let models = load_models(&args.models)?;
    let ensemble = models.ensemble_for(&variant)?;
    let seed_set = SeedSet::from_base(args.seed);
    ensure_dir(&args.out)?;

    let mut scenario_rng = seeds::derived_rng(seed_set.eval, 50);
    let obs = match (&args.scenario, &args.record) {
        (Some(name), None) => Scenario::parse(name)?
            .observation(Some(&SensorNoise::default()), &mut scenario_rng)?,
        (None, Some(path)) => {
            let data = dataset::read_perception_csv(path)?;
            data[0].0
        }
        _ => {
            return Err(Error::invalid(
                "density needs exactly one of --scenario or --record",
            ))
        }
    };

    let mut perc_rng = seeds::derived_rng(seed_set.eval, 51);
    let mut dec_rng = seeds::derived_rng(seed_set.eval, 52);
    let latents = sample_latents(
        &models.perception,
        &obs,
        variant.latent_samples,
        variant.latent_mode,
        &mut perc_rng,
    )?;
    let pset = ensemble_predict(&ensemble, &latents)?;

    // latents.csv
    let mut csv = String::from("sample,dim,value\n");
    for (s, z) in latents.samples.iter().enumerate() {
        for (d, v) in z.iter().enumerate().take(LATENT_DIM) {
            csv.push_str(&format!("{s},{d},{v}\n"));
        }
    }
    std::fs::write(args.out.join("latents.csv"), csv)?;

    // components.csv
    let mut csv = String::from("dimension,member,latent,mu,var\n");
    let mut components_per_dim = 0;
    for (d, dim_name) in DIM_NAMES.iter().enumerate() {
        components_per_dim = 0;
        for member in 0..pset.members() {
            for latent in 0..pset.latents() {
                let g = pset.pred(member, latent);
                csv.push_str(&format!(
                    "{dim_name},{member},{latent},{},{}\n",
                    g.mu[d], g.var[d]
                ));
                components_per_dim += 1;
            }
        }
    }
    std::fs::write(args.out.join("components.csv"), csv)?;

    // densities.csv: per member and the all-member mixture, on the shared
    // per-dimension grid.
    let mut csv = String::from("dimension,member,grid_y,pdf\n");
    for (d, dim_name) in DIM_NAMES.iter().enumerate() {
        let all = MixtureDensity1D::from_pset_dim(&pset, d)?;
        let (lo, hi) = uavnav::decision::mode_grid_range(&all);
        let step = (hi - lo) / (args.grid_n - 1) as f64;
        let grid: Vec<f64> = (0..args.grid_n).map(|i| lo + step * i as f64).collect();
        for member in 0..pset.members() {
            let mix = MixtureDensity1D::from_member_dim(&pset, member, d)?;
            for &y in &grid {
                csv.push_str(&format!("{dim_name},{member},{y},{}\n", mixture_pdf(&mix, y)));
            }
        }
        for &y in &grid {
            csv.push_str(&format!("{dim_name},all,{y},{}\n", mixture_pdf(&all, y)));
        }
    }
    std::fs::write(args.out.join("densities.csv"), csv)?;

    // mi_scores.csv and both strategies' commands.
    let scores: MiScores = mi_lower_bound(&pset, args.mc_samples, &mut dec_rng)?;
    let mut csv = String::from("member,total,vx,vy,vz,yaw_rate\n");
    for (member, row) in scores.per_member_per_dim.iter().enumerate() {
        csv.push_str(&format!(
            "{member},{},{},{},{},{}\n",
            scores.per_member[member], row[0], row[1], row[2], row[3]
        ));
    }
    std::fs::write(args.out.join("mi_scores.csv"), csv)?;

    let selected = select_member_min_mi(&scores);
    let mi_cmd = mi_mode_command(&pset, selected, args.grid_n, ModePolicy::SmallestAbs)?;
    let (de_cmd, _) = de_mean(&pset)?;
    let mut csv = String::from("strategy,selected_member,vx,vy,vz,yaw_rate\n");
    csv.push_str(&format!(
        "mi-mode,{selected},{},{},{},{}\n",
        mi_cmd.vx, mi_cmd.vy, mi_cmd.vz, mi_cmd.yaw_rate
    ));
    csv.push_str(&format!(
        "de-mean,,{},{},{},{}\n",
        de_cmd.vx, de_cmd.vy, de_cmd.vz, de_cmd.yaw_rate
    ));
    std::fs::write(args.out.join("commands.csv"), csv)?;

    write_manifest(&args.out, "manifest.json", "density", &seed_set, args)?;

    let vy_mix = MixtureDensity1D::from_pset_dim(&pset, 1)?;
    let modes_vy = uavnav::decision::extract_modes(&vy_mix, args.grid_n)?.len();
    Ok(DensitySummary {
        components_per_dim,
        selected_member: selected,
        modes_vy,
    })
}

// ---------------------------------------------------------------------------

/// Print a one-line human summary to the given writer.
pub fn print_summary<T: Serialize>(out: &mut impl std::io::Write, summary: &T) -> Result<()> {
    let json = serde_json::to_string(summary)?;
    writeln!(out, "{json}")?;
    Ok(())
}

// Re-exports used by the binary and the acceptance suite.
pub use uavnav::decision::ControlCommand;
