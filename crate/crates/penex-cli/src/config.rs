//! Config loading and resolution. Files are TOML (or JSON, chosen by
//! extension) with every field optional; resolution fills the gaps in
//! flag > environment > file > default order and produces both a runnable
//! experiment and a fully-determined echo for `summary.json`, so a run can
//! be reproduced from its own summary.

use std::env;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use penex_core::data::{self, Dataset};
use penex_core::losses::{LossKind, LossSpec, RhoMode};
use penex_core::model::ModelSpec;
use penex_core::optim::{ClipMode, OptimKind, OptimSpec};
use penex_core::penalty::PenaltyConfig;
use penex_core::train::TrainConfig;

/// Environment override for the output directory.
pub const ENV_OUT: &str = "PENEX_OUT";
/// Environment override for the seed.
pub const ENV_SEED: &str = "PENEX_SEED";

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_BATCH: usize = 64;
pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_SPLIT: f64 = 0.8;
pub const DEFAULT_ROUNDS: usize = 50;
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Penalty strength used by the constrained ablations when unset.
pub const DEFAULT_CONSTRAINT_RHO: f64 = 0.5;

pub const DEFAULT_SWEEP_ALPHAS: [f64; 6] = [1e-5, 0.2, 0.4, 0.8, 1.6, 3.2];

pub const DEFAULT_ABLATION_KINDS: [LossKind; 5] = [
    LossKind::Penex,
    LossKind::ConexSqPenalty,
    LossKind::ConexAugLagrangian,
    LossKind::ConexHard,
    LossKind::Ex,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Rings,
    Categorical,
    Csv,
}

/// `[dataset]` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<DatasetKind>,
    /// Seed for generation, splitting, and label noise; defaults to the
    /// top-level seed. Sweeps pin it so every run sees the same data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<usize>,
    /// Cluster standard deviation (blobs) or radial noise (rings).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
    /// Class distribution for the categorical generator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// CSV file for kind = "csv".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// `[model]` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conex_hard: Option<bool>,
}

/// `[loss]` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<LossKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// A number for a fixed weight or the string "adaptive".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<RhoMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conf_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focal_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sq_penalty_conventional: Option<bool>,
}

/// `[optim]` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<OptimKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_mode: Option<ClipMode>,
}

/// `[penalty]` section (the adaptive-ρ controller).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_guard: Option<f64>,
}

/// `[train]` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halt_on_divergence: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_checkpoints: Option<bool>,
}

/// Whole config file. Every field is optional; `resolve` fills the rest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Fraction of training labels flipped to a different class after the
    /// split; validation labels stay clean.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Parameter snapshot consumed by `eval`; defaults to
    /// `<output_dir>/params.json`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablations: Option<Vec<LossKind>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub optim: OptimSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub train: TrainSection,
}

/// Values coming from flags; they win over the environment and the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub loss: Option<LossKind>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub rounds: Option<usize>,
}

/// A fully-resolved experiment, ready to run.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub name: String,
    pub train_config: TrainConfig,
    pub train_data: Dataset,
    pub val_data: Dataset,
    pub output_dir: PathBuf,
    pub params_path: PathBuf,
    pub sweep: Vec<f64>,
    pub ablations: Vec<LossKind>,
    pub rounds: usize,
    /// True when α came from a flag or the file rather than a default;
    /// ablations then keep it instead of recalibrating per loss.
    pub alpha_from_user: bool,
    /// Every-field-set config that reproduces this experiment.
    pub echo: FileConfig,
}

pub fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        }
        Some("json") => {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        }
        other => bail!(
            "unsupported config extension {:?} for {} (use .toml or .json)",
            other,
            path.display()
        ),
    }
}

fn env_u64(key: &str) -> Result<Option<u64>> {
    match env::var(key) {
        Ok(v) => Ok(Some(
            v.parse::<u64>().with_context(|| format!("{key} must be an integer, got {v:?}"))?,
        )),
        Err(_) => Ok(None),
    }
}

fn build_dataset(section: &DatasetSection, seed: u64) -> Result<(Dataset, Vec<String>)> {
    let kind = section.kind.unwrap_or(DatasetKind::Blobs);
    let n = section.n.unwrap_or(400);
    let classes = section.classes.unwrap_or(3);
    let features = section.features.unwrap_or(2);
    match kind {
        DatasetKind::Blobs => {
            let spread = section.spread.unwrap_or(1.0);
            Ok((data::gen_blobs(n, classes, features, spread, seed)?, Vec::new()))
        }
        DatasetKind::Rings => {
            let noise = section.spread.unwrap_or(0.1);
            Ok((data::gen_rings(n, classes, noise, seed)?, Vec::new()))
        }
        DatasetKind::Categorical => {
            let probs = section
                .probs
                .clone()
                .ok_or_else(|| anyhow::anyhow!("categorical dataset needs `probs`"))?;
            Ok((data::gen_categorical_single_x(&probs, n, seed)?, Vec::new()))
        }
        DatasetKind::Csv => {
            let path = section
                .path
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("csv dataset needs `path`"))?;
            if !path.exists() {
                bail!("dataset file {} does not exist", path.display());
            }
            let (set, warnings) = data::load_csv(path)?;
            Ok((set, warnings))
        }
    }
}

/// True for the losses defined at the constraint-calibrated sensitivity.
fn constraint_family(kind: LossKind) -> bool {
    matches!(
        kind,
        LossKind::ConexSqPenalty | LossKind::ConexAugLagrangian | LossKind::ConexHard
    )
}

pub fn resolve(file: &FileConfig, overrides: &Overrides) -> Result<Experiment> {
    let seed = overrides
        .seed
        .or(env_u64(ENV_SEED)?)
        .or(file.seed)
        .unwrap_or(DEFAULT_SEED);
    let output_dir = overrides
        .out
        .clone()
        .or_else(|| env::var(ENV_OUT).ok().map(PathBuf::from))
        .or_else(|| file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("penex-out"));
    let name = file.name.clone().unwrap_or_else(|| "run".to_string());

    let data_seed = file.dataset.seed.unwrap_or(seed);
    let (full_data, warnings) = build_dataset(&file.dataset, data_seed)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let split_ratio = file.split_ratio.unwrap_or(DEFAULT_SPLIT);
    let (mut train_data, val_data) = data::split(&full_data, split_ratio, data_seed)?;
    let noise_fraction = file.noise_fraction.unwrap_or(0.0);
    if noise_fraction > 0.0 {
        train_data = data::flip_labels(&train_data, noise_fraction, data_seed)?;
    }

    let kind = overrides.loss.or(file.loss.kind).unwrap_or(LossKind::Penex);
    if let Some(classes) = file.model.num_classes {
        if classes != full_data.num_classes {
            bail!(
                "model.num_classes = {classes} but the dataset has {} classes",
                full_data.num_classes
            );
        }
    }
    if let Some(dim) = file.model.input_dim {
        if dim != full_data.num_features {
            bail!(
                "model.input_dim = {dim} but the dataset has {} features",
                full_data.num_features
            );
        }
    }
    let num_classes = full_data.num_classes;
    let model = ModelSpec {
        input_dim: full_data.num_features,
        hidden_dims: file.model.hidden_dims.clone().unwrap_or_else(|| vec![16]),
        num_classes,
        dropout_p: file.model.dropout_p.unwrap_or(0.0),
        conex_hard: file.model.conex_hard.unwrap_or(kind == LossKind::ConexHard),
    };

    let alpha_from_user = overrides.alpha.or(file.loss.alpha).is_some();
    let alpha = overrides.alpha.or(file.loss.alpha).unwrap_or_else(|| {
        if constraint_family(kind) {
            1.0 / (num_classes as f64 - 1.0)
        } else {
            DEFAULT_ALPHA
        }
    });
    let rho = file.loss.rho.unwrap_or({
        if kind == LossKind::Penex {
            RhoMode::adaptive()
        } else {
            RhoMode::Fixed(DEFAULT_CONSTRAINT_RHO)
        }
    });
    let defaults = LossSpec::default();
    let loss = LossSpec {
        kind,
        alpha,
        rho,
        smooth_eps: file.loss.smooth_eps.unwrap_or(defaults.smooth_eps),
        conf_lambda: file.loss.conf_lambda.unwrap_or(defaults.conf_lambda),
        focal_gamma: file.loss.focal_gamma.unwrap_or(defaults.focal_gamma),
        nu: file.loss.nu.unwrap_or(defaults.nu),
        sq_penalty_conventional: file
            .loss
            .sq_penalty_conventional
            .unwrap_or(defaults.sq_penalty_conventional),
    };

    let optim_defaults = OptimSpec::adam(DEFAULT_LR);
    let optim = OptimSpec {
        kind: file.optim.kind.unwrap_or(optim_defaults.kind),
        learning_rate: file.optim.learning_rate.unwrap_or(optim_defaults.learning_rate),
        beta1: file.optim.beta1.unwrap_or(optim_defaults.beta1),
        beta2: file.optim.beta2.unwrap_or(optim_defaults.beta2),
        adam_eps: file.optim.adam_eps.unwrap_or(optim_defaults.adam_eps),
        grad_clip_value: file.optim.grad_clip_value.or(optim_defaults.grad_clip_value),
        clip_mode: file.optim.clip_mode.unwrap_or(optim_defaults.clip_mode),
    };

    let penalty_defaults = PenaltyConfig::default();
    let penalty = PenaltyConfig {
        beta: file.penalty.beta.unwrap_or(penalty_defaults.beta),
        rho_min: file.penalty.rho_min.unwrap_or(penalty_defaults.rho_min),
        rho_max: file.penalty.rho_max.unwrap_or(penalty_defaults.rho_max),
        eps_guard: file.penalty.eps_guard.unwrap_or(penalty_defaults.eps_guard),
    };

    let epochs = overrides.epochs.or(file.train.epochs).unwrap_or(DEFAULT_EPOCHS);
    let batch_size = file
        .train
        .batch_size
        .unwrap_or_else(|| DEFAULT_BATCH.min(train_data.len().max(1)));
    let train_config = TrainConfig {
        loss,
        model,
        optim,
        epochs,
        batch_size,
        seed,
        penalty,
        halt_on_divergence: file.train.halt_on_divergence.unwrap_or(true),
        record_checkpoints: file.train.record_checkpoints.unwrap_or(false),
    };
    train_config.validate(train_data.len()).map_err(anyhow::Error::from)?;

    let sweep = file.sweep.clone().unwrap_or_else(|| DEFAULT_SWEEP_ALPHAS.to_vec());
    let ablations =
        file.ablations.clone().unwrap_or_else(|| DEFAULT_ABLATION_KINDS.to_vec());
    let rounds = overrides.rounds.or(file.rounds).unwrap_or(DEFAULT_ROUNDS);
    let params_path = file
        .params_path
        .clone()
        .unwrap_or_else(|| output_dir.join("params.json"));

    let echo = FileConfig {
        name: Some(name.clone()),
        seed: Some(seed),
        noise_fraction: Some(noise_fraction),
        split_ratio: Some(split_ratio),
        output_dir: Some(output_dir.clone()),
        params_path: Some(params_path.clone()),
        sweep: Some(sweep.clone()),
        ablations: Some(ablations.clone()),
        rounds: Some(rounds),
        dataset: DatasetSection {
            kind: Some(file.dataset.kind.unwrap_or(DatasetKind::Blobs)),
            seed: Some(data_seed),
            n: Some(file.dataset.n.unwrap_or(400)),
            classes: Some(full_data.num_classes),
            features: Some(full_data.num_features),
            spread: Some(file.dataset.spread.unwrap_or(1.0)),
            probs: file.dataset.probs.clone(),
            path: file.dataset.path.clone(),
        },
        model: ModelSection {
            input_dim: Some(train_config.model.input_dim),
            hidden_dims: Some(train_config.model.hidden_dims.clone()),
            num_classes: Some(train_config.model.num_classes),
            dropout_p: Some(train_config.model.dropout_p),
            conex_hard: Some(train_config.model.conex_hard),
        },
        loss: LossSection {
            kind: Some(train_config.loss.kind),
            alpha: Some(train_config.loss.alpha),
            rho: Some(train_config.loss.rho),
            smooth_eps: Some(train_config.loss.smooth_eps),
            conf_lambda: Some(train_config.loss.conf_lambda),
            focal_gamma: Some(train_config.loss.focal_gamma),
            nu: Some(train_config.loss.nu),
            sq_penalty_conventional: Some(train_config.loss.sq_penalty_conventional),
        },
        optim: OptimSection {
            kind: Some(train_config.optim.kind),
            learning_rate: Some(train_config.optim.learning_rate),
            beta1: Some(train_config.optim.beta1),
            beta2: Some(train_config.optim.beta2),
            adam_eps: Some(train_config.optim.adam_eps),
            grad_clip_value: train_config.optim.grad_clip_value,
            clip_mode: Some(train_config.optim.clip_mode),
        },
        penalty: PenaltySection {
            beta: Some(train_config.penalty.beta),
            rho_min: Some(train_config.penalty.rho_min),
            rho_max: Some(train_config.penalty.rho_max),
            eps_guard: Some(train_config.penalty.eps_guard),
        },
        train: TrainSection {
            epochs: Some(train_config.epochs),
            batch_size: Some(train_config.batch_size),
            halt_on_divergence: Some(train_config.halt_on_divergence),
            record_checkpoints: Some(train_config.record_checkpoints),
        },
    };

    Ok(Experiment {
        name,
        train_config,
        train_data,
        val_data,
        output_dir,
        params_path,
        sweep,
        ablations,
        rounds,
        alpha_from_user,
        echo,
    })
}

/// Helper shared with the ablation command: the α a loss kind defaults to.
pub fn default_alpha_for(kind: LossKind, num_classes: usize) -> f64 {
    if constraint_family(kind) {
        1.0 / (num_classes as f64 - 1.0)
    } else {
        DEFAULT_ALPHA
    }
}

/// Parses a loss kind from its config spelling ("penex", "ce", ...).
pub fn parse_loss_kind(s: &str) -> Result<LossKind> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .with_context(|| format!("unknown loss kind {s:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_an_adaptive_penex_run() {
        let exp = resolve(&FileConfig::default(), &Overrides::default()).unwrap();
        assert_eq!(exp.train_config.loss.kind, LossKind::Penex);
        assert_eq!(exp.train_config.loss.alpha, DEFAULT_ALPHA);
        assert_eq!(exp.train_config.loss.rho, RhoMode::adaptive());
        assert_eq!(exp.train_config.epochs, DEFAULT_EPOCHS);
        assert_eq!(exp.train_config.batch_size, DEFAULT_BATCH);
        assert_eq!(exp.train_data.len() + exp.val_data.len(), 400);
        assert_eq!(exp.sweep, DEFAULT_SWEEP_ALPHAS.to_vec());
        assert_eq!(exp.ablations.len(), 5);
    }

    #[test]
    fn constraint_losses_default_to_the_calibrated_alpha() {
        let mut file = FileConfig::default();
        file.loss.kind = Some(LossKind::ConexSqPenalty);
        let exp = resolve(&file, &Overrides::default()).unwrap();
        // Three classes: α = 1/(K−1) = 0.5.
        assert_eq!(exp.train_config.loss.alpha, 0.5);
        assert_eq!(exp.train_config.loss.rho, RhoMode::Fixed(DEFAULT_CONSTRAINT_RHO));

        let exp = resolve(
            &file,
            &Overrides { alpha: Some(0.3), ..Default::default() },
        )
        .unwrap();
        assert_eq!(exp.train_config.loss.alpha, 0.3);
    }

    #[test]
    fn hard_constraint_sets_the_model_head() {
        let mut file = FileConfig::default();
        file.loss.kind = Some(LossKind::ConexHard);
        let exp = resolve(&file, &Overrides::default()).unwrap();
        assert!(exp.train_config.model.conex_hard);
    }

    #[test]
    fn flags_beat_the_file() {
        let mut file = FileConfig::default();
        file.seed = Some(3);
        file.train.epochs = Some(10);
        file.loss.kind = Some(LossKind::Ce);
        let over = Overrides {
            seed: Some(9),
            epochs: Some(2),
            loss: Some(LossKind::Focal),
            ..Default::default()
        };
        let exp = resolve(&file, &over).unwrap();
        assert_eq!(exp.train_config.seed, 9);
        assert_eq!(exp.train_config.epochs, 2);
        assert_eq!(exp.train_config.loss.kind, LossKind::Focal);
    }

    #[test]
    fn echo_resolves_to_the_same_experiment() {
        let mut file = FileConfig::default();
        file.train.epochs = Some(3);
        file.dataset.n = Some(60);
        let exp = resolve(&file, &Overrides::default()).unwrap();
        let again = resolve(&exp.echo, &Overrides::default()).unwrap();
        assert_eq!(exp.train_config, again.train_config);
        assert_eq!(exp.train_data, again.train_data);
        assert_eq!(exp.val_data, again.val_data);
        assert_eq!(exp.echo, again.echo);
    }

    #[test]
    fn noise_touches_only_the_training_split() {
        let mut file = FileConfig::default();
        file.noise_fraction = Some(0.25);
        file.dataset.n = Some(80);
        let noisy = resolve(&file, &Overrides::default()).unwrap();
        file.noise_fraction = Some(0.0);
        let clean = resolve(&file, &Overrides::default()).unwrap();
        assert_eq!(noisy.val_data, clean.val_data);
        let changed = noisy
            .train_data
            .labels
            .iter()
            .zip(&clean.train_data.labels)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 16);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let mut file = FileConfig::default();
        file.model.input_dim = Some(5);
        assert!(resolve(&file, &Overrides::default()).is_err());
        let mut file = FileConfig::default();
        file.model.num_classes = Some(7);
        assert!(resolve(&file, &Overrides::default()).is_err());
    }

    #[test]
    fn toml_round_trip_preserves_the_echo() {
        let exp = resolve(&FileConfig::default(), &Overrides::default()).unwrap();
        let text = toml::to_string_pretty(&exp.echo).unwrap();
        let back: FileConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, exp.echo);
    }

    #[test]
    fn loss_kind_spellings_parse() {
        assert_eq!(parse_loss_kind("penex").unwrap(), LossKind::Penex);
        assert_eq!(parse_loss_kind("conex_sq_penalty").unwrap(), LossKind::ConexSqPenalty);
        assert_eq!(parse_loss_kind("label_smoothing").unwrap(), LossKind::LabelSmoothing);
        assert!(parse_loss_kind("nonsense").is_err());
    }
}
