//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sitadda::adapt::AdaptConfig;
use sitadda::bench::SynthBenchConfig;
use sitadda::nn::discriminator::DiscriminatorConfig;
use sitadda::perturb::{PerturbationKind, PerturbationSpec};
use sitadda::train::SourceTrainConfig;
use sitadda::uncertainty::EnsembleConfig;
use sitadda::{FreezeSchedule, GeneratorConfig};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub paths: Paths,
    pub model: ModelSection,
    pub source_train: SourceTrainConfig,
    pub adapt: AdaptSection,
    pub sweep: GridSection,
    pub ensemble: EnsembleSection,
    pub perturb: Option<PerturbSection>,
    pub synthbench: Option<SynthBenchConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Paired `<id>_input` / `<id>_target` images.
    pub source: Option<PathBuf>,
    /// Unlabeled target-domain images.
    pub target: Option<PathBuf>,
    /// Source checkpoint consumed by `adapt` and `sweep`.
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub generator: GeneratorConfig,
    /// Square size every loaded image is resized to.
    pub image_size: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { generator: GeneratorConfig::default(), image_size: Some(1024) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    /// Schedule label such as `prefix:3`.
    pub schedule: String,
    pub disc_lr: f64,
    pub gen_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub steps: Option<usize>,
    pub discriminator: DiscriminatorConfig,
}

impl Default for AdaptSection {
    fn default() -> Self {
        let d = AdaptConfig::default();
        AdaptSection {
            schedule: d.schedule.label(),
            disc_lr: d.disc_lr,
            gen_lr: d.gen_lr,
            beta1: d.beta1,
            beta2: d.beta2,
            epochs: d.epochs,
            steps: d.steps,
            discriminator: d.discriminator,
        }
    }
}

impl AdaptSection {
    pub fn resolve(&self, seed: u64) -> Result<AdaptConfig, CliError> {
        let cfg = AdaptConfig {
            schedule: FreezeSchedule::parse(&self.schedule)?,
            disc_lr: self.disc_lr,
            gen_lr: self.gen_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epochs: self.epochs,
            steps: self.steps,
            discriminator: self.discriminator.clone(),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Candidate grid shared by `sweep` and `autoselect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub lrs: Vec<f64>,
    pub schedules: Vec<String>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            lrs: vec![1e-3, 1e-4, 1e-5, 1e-6],
            schedules: (1..=4).map(|k| FreezeSchedule::TrainablePrefix(k).label()).collect(),
        }
    }
}

impl GridSection {
    pub fn schedules(&self) -> Result<Vec<FreezeSchedule>, CliError> {
        Ok(self.schedules.iter().map(|s| FreezeSchedule::parse(s)).collect::<Result<_, _>>()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub seeds: Vec<u64>,
    pub min_val_pearson: f64,
    /// Pretrained source members, one per seed. When empty, members are
    /// trained from the source data.
    pub checkpoints: Vec<PathBuf>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let d = EnsembleConfig::default();
        EnsembleSection { seeds: d.seeds, min_val_pearson: d.min_val_pearson, checkpoints: Vec::new() }
    }
}

impl EnsembleSection {
    pub fn config(&self) -> Result<EnsembleConfig, CliError> {
        let cfg = EnsembleConfig { seeds: self.seeds.clone(), min_val_pearson: self.min_val_pearson };
        cfg.validate()?;
        if !self.checkpoints.is_empty() && self.checkpoints.len() != self.seeds.len() {
            return Err(CliError::Config(format!(
                "{} ensemble checkpoints for {} seeds",
                self.checkpoints.len(),
                self.seeds.len()
            )));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSection {
    pub kind: PerturbationKind,
    pub magnitude: f64,
    pub input: Option<PathBuf>,
}

impl PerturbSection {
    pub fn spec(&self) -> Result<PerturbationSpec, CliError> {
        Ok(PerturbationSpec::new(self.kind, self.magnitude)?)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// A required path entry that must exist.
pub fn existing(path: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let p = path.clone().ok_or_else(|| CliError::Config(format!("missing `paths.{what}`")))?;
    if !p.exists() {
        return Err(CliError::Config(format!("`paths.{what}` = {} does not exist", p.display())));
    }
    Ok(p)
}
