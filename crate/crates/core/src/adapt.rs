//! Adversarial adaptation of a source-trained translator, inference and
//! grid sweeps.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{denormalize, normalize};
use crate::error::{Error, Result};
use crate::image::{Domain, Image};
use crate::metrics::mean_pearson;
use crate::nn::discriminator::{DiscriminatorConfig, DiscriminatorModel};
use crate::nn::freeze::{FreezeSchedule, LayerRegistry};
use crate::nn::generator::{generator_forward, GeneratorModel};
use crate::nn::optim::{Adam, AdamSettings};
use crate::nn::tensor::Tensor;
use crate::nn::Network;
use crate::rng::substream;
use crate::scalar::Real;
use crate::train::to_tensor;

pub const DEFAULT_GEN_LR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub schedule: FreezeSchedule,
    pub disc_lr: f64,
    pub gen_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// One epoch is one pass over the smaller of the two domains.
    pub epochs: usize,
    /// Explicit step budget; overrides `epochs` when set.
    pub steps: Option<usize>,
    pub discriminator: DiscriminatorConfig,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            schedule: FreezeSchedule::TrainablePrefix(3),
            disc_lr: 1e-4,
            gen_lr: DEFAULT_GEN_LR,
            beta1: 0.5,
            beta2: 0.999,
            epochs: 5,
            steps: None,
            discriminator: DiscriminatorConfig::default(),
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("disc_lr", self.disc_lr), ("gen_lr", self.gen_lr)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self, source_len: usize, target_len: usize) -> usize {
        self.steps.unwrap_or(self.epochs * source_len.min(target_len))
    }

    fn adam(&self, lr: f64) -> AdamSettings {
        AdamSettings { beta1: self.beta1, beta2: self.beta2, ..AdamSettings::adversarial(lr) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Mean critic probability on source-model outputs.
    pub d_real: f64,
    /// Mean critic probability on adapted-model outputs (before the D step).
    pub d_fake: f64,
}

/// Result of one adaptation.
#[derive(Debug, Clone)]
pub struct AdaptationRun<T> {
    pub config: AdaptConfig,
    pub model: GeneratorModel<T>,
    pub discriminator: DiscriminatorModel<T>,
    pub trainable: Vec<bool>,
    pub steps: usize,
    pub history: Vec<StepRecord>,
    pub source_checksum: String,
    pub adapted_checksum: String,
}

impl<T: Real> AdaptationRun<T> {
    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            kind: "adapt".into(),
            config: serde_json::to_value(&self.config).expect("config serializes"),
            schedule: self.config.schedule.label(),
            trainable_blocks: self.trainable.clone(),
            steps: self.steps,
            history: self.history.clone(),
            source_checksum: self.source_checksum.clone(),
            adapted_checksum: self.adapted_checksum.clone(),
            discriminator_checksum: self.discriminator.checksum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config: serde_json::Value,
    pub schedule: String,
    pub trainable_blocks: Vec<bool>,
    pub steps: usize,
    pub history: Vec<StepRecord>,
    pub source_checksum: String,
    pub adapted_checksum: String,
    pub discriminator_checksum: String,
}

// Numerically stable binary cross-entropy on logits, mean over the patch
// map, with its gradient.
fn bce_logits<T: Real>(logits: &Tensor<T>, label: f64) -> (f64, f64, Tensor<T>) {
    let n = logits.data.len() as f64;
    let mut loss = 0.0;
    let mut prob = 0.0;
    let grad = logits
        .data
        .iter()
        .map(|z| {
            let z = z.as_f64();
            loss += z.max(0.0) - z * label + (-z.abs()).exp().ln_1p();
            let p = 1.0 / (1.0 + (-z).exp());
            prob += p;
            T::lit((p - label) / n)
        })
        .collect();
    (loss / n, prob / n, Tensor::from_vec(logits.channels, logits.height, logits.width, grad))
}

/// Adapt a copy of `source` to the target domain.
///
/// The critic learns to tell source-model outputs on `source_inputs` from
/// adapted-model outputs on `target_inputs`; the adapted model is updated
/// only in the blocks the schedule marks trainable. Inputs are normalized
/// images.
pub fn adapt<T: Real>(
    source: &GeneratorModel<T>,
    source_inputs: &[Image<T>],
    target_inputs: &[Image<T>],
    cfg: &AdaptConfig,
) -> Result<AdaptationRun<T>> {
    cfg.validate()?;
    if source_inputs.is_empty() || target_inputs.is_empty() {
        return Err(Error::Config("adaptation needs nonempty source and target image sets".into()));
    }
    for x in source_inputs.iter().chain(target_inputs) {
        if x.domain() != Domain::Norm {
            return Err(Error::Data("adaptation inputs must be normalized".into()));
        }
        source.check_input(x.height(), x.width())?;
    }
    let registry = LayerRegistry::of(source);
    let trainable = cfg.schedule.resolve(&registry)?;
    let source_checksum = source.checksum();

    let mut disc = DiscriminatorModel::new(cfg.discriminator.clone(), &mut substream(cfg.seed, "disc-init"))?;
    let real: Vec<Tensor<T>> = source_inputs
        .iter()
        .map(|x| source.forward(&to_tensor(x)))
        .collect::<Result<_>>()?;
    for r in &real {
        disc.check_input(r)?;
    }
    let targets: Vec<Tensor<T>> = target_inputs.iter().map(to_tensor).collect();

    let mut model = source.clone();
    let mut d_opt = Adam::new(&disc, cfg.adam(cfg.disc_lr));
    let mut g_opt = Adam::new(&model, cfg.adam(cfg.gen_lr));
    let any_trainable = trainable.iter().any(|&t| t);
    let steps = cfg.total_steps(real.len(), targets.len());
    let mut rng = substream(cfg.seed, "adapt-order");
    let mut src_order: Vec<usize> = (0..real.len()).collect();
    let mut tgt_order: Vec<usize> = (0..targets.len()).collect();
    let mut history = Vec::with_capacity(steps);

    for step in 0..steps {
        let (si, ti) = (step % real.len(), step % targets.len());
        if si == 0 {
            src_order.shuffle(&mut rng);
        }
        if ti == 0 {
            tgt_order.shuffle(&mut rng);
        }
        let x_real = &real[src_order[si]];
        let (fake, g_cache) = model.forward_train(&targets[tgt_order[ti]])?;

        // Critic step: source outputs are real, adapted outputs are fake.
        let mut d_grads = disc.zero_grads();
        let (logit_real, cache_real) = disc.forward_train(x_real)?;
        let (loss_real, d_real, g_real) = bce_logits(&logit_real, 1.0);
        disc.backward(cache_real, g_real, Some(&mut d_grads));
        let (logit_fake, cache_fake) = disc.forward_train(&fake)?;
        let (loss_fake, d_fake, g_fake) = bce_logits(&logit_fake, 0.0);
        disc.backward(cache_fake, g_fake, Some(&mut d_grads));
        let d_loss = loss_real + loss_fake;
        if !d_loss.is_finite() {
            return Err(Error::Divergence { stage: "adapt-critic", step: step + 1 });
        }
        d_opt.step(&mut disc, &d_grads, None, cfg.disc_lr);

        // Translator step: non-saturating loss with the critic held fixed.
        let (logit, cache) = disc.forward_train(&fake)?;
        let (g_loss, _, dlogit) = bce_logits(&logit, 1.0);
        if !g_loss.is_finite() {
            return Err(Error::Divergence { stage: "adapt-translator", step: step + 1 });
        }
        if any_trainable {
            let dy = disc.backward(cache, dlogit, None);
            let mut g_grads = model.zero_grads();
            model.backward(g_cache, dy, &mut g_grads, &trainable);
            g_opt.step(&mut model, &g_grads, Some(&trainable), cfg.gen_lr);
        }
        if !model.all_finite() || !disc.all_finite() {
            return Err(Error::Divergence { stage: "adapt", step: step + 1 });
        }
        history.push(StepRecord { step: step + 1, d_loss, g_loss, d_real, d_fake });
    }

    debug_assert_eq!(source.checksum(), source_checksum);
    let adapted_checksum = model.checksum();
    Ok(AdaptationRun {
        config: cfg.clone(),
        model,
        discriminator: disc,
        trainable,
        steps,
        history,
        source_checksum,
        adapted_checksum,
    })
}

/// Prediction for one image. Raw inputs give raw (8-bit) outputs,
/// normalized inputs give normalized outputs.
pub fn infer<T: Real>(model: &GeneratorModel<T>, x: &Image<T>) -> Result<Image<T>> {
    match x.domain() {
        Domain::Norm => generator_forward(model, x),
        Domain::Raw => denormalize(&generator_forward(model, &normalize(x)?)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Excluded,
}

#[derive(Debug, Clone)]
pub struct SweepCell<T> {
    pub disc_lr: f64,
    pub schedule: FreezeSchedule,
    pub status: CellStatus,
    pub reason: Option<String>,
    pub run: Option<AdaptationRun<T>>,
    /// Mean Pearson on the labeled evaluation pairs, when given.
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub disc_lr: f64,
    pub schedule: String,
    pub status: CellStatus,
    pub reason: Option<String>,
    pub pearson: Option<f64>,
    pub final_d_loss: Option<f64>,
    pub final_g_loss: Option<f64>,
    pub checksum: Option<String>,
}

impl<T: Real> SweepCell<T> {
    pub fn row(&self) -> SweepRow {
        let last = self.run.as_ref().and_then(|r| r.history.last());
        SweepRow {
            disc_lr: self.disc_lr,
            schedule: self.schedule.label(),
            status: self.status,
            reason: self.reason.clone(),
            pearson: self.pearson,
            final_d_loss: last.map(|h| h.d_loss),
            final_g_loss: last.map(|h| h.g_loss),
            checksum: self.run.as_ref().map(|r| r.adapted_checksum.clone()),
        }
    }
}

/// Every `(lr, schedule)` combination, lr-major. Divergent cells are kept
/// with status `Excluded`; other errors abort the sweep. Up to `jobs` cells
/// run at once; the result does not depend on `jobs`.
pub fn sweep<T: Real>(
    source: &GeneratorModel<T>,
    source_inputs: &[Image<T>],
    target_inputs: &[Image<T>],
    lrs: &[f64],
    schedules: &[FreezeSchedule],
    base: &AdaptConfig,
    evaluation: Option<&[(Image<T>, Image<T>)]>,
    jobs: usize,
) -> Result<Vec<SweepCell<T>>> {
    if lrs.is_empty() || schedules.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let configs: Vec<AdaptConfig> = lrs
        .iter()
        .flat_map(|&lr| schedules.iter().map(move |s| AdaptConfig { disc_lr: lr, schedule: s.clone(), ..base.clone() }))
        .collect();
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?
        .install(|| {
            configs
                .into_par_iter()
                .map(|cfg| sweep_cell(source, source_inputs, target_inputs, cfg, evaluation))
                .collect()
        })
}

fn sweep_cell<T: Real>(
    source: &GeneratorModel<T>,
    source_inputs: &[Image<T>],
    target_inputs: &[Image<T>],
    cfg: AdaptConfig,
    evaluation: Option<&[(Image<T>, Image<T>)]>,
) -> Result<SweepCell<T>> {
    let (disc_lr, schedule) = (cfg.disc_lr, cfg.schedule.clone());
    match adapt(source, source_inputs, target_inputs, &cfg) {
        Ok(run) => {
            let pearson = match evaluation {
                Some(pairs) => {
                    let preds = pairs.iter().map(|(x, _)| infer(&run.model, x)).collect::<Result<Vec<_>>>()?;
                    let refs: Vec<_> = pairs.iter().map(|(_, y)| y.clone()).collect();
                    mean_pearson(&preds, &refs).ok()
                }
                None => None,
            };
            Ok(SweepCell { disc_lr, schedule, status: CellStatus::Ok, reason: None, run: Some(run), pearson })
        }
        Err(e) if e.is_divergence() => Ok(SweepCell {
            disc_lr,
            schedule,
            status: CellStatus::Excluded,
            reason: Some(e.to_string()),
            run: None,
            pearson: None,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::block::NormKind;
    use crate::nn::generator::GeneratorConfig;

    fn tiny() -> (GeneratorModel<f64>, Vec<Image<f64>>, Vec<Image<f64>>) {
        let cfg = GeneratorConfig { depth: 3, base_channels: 2, channel_cap: 4, norm: NormKind::Instance, input_norm: true };
        let model = GeneratorModel::new(cfg, &mut substream(1, "g")).unwrap();
        let img = |s: f64| Image::from_fn(16, 16, Domain::Norm, |r, c| ((r as f64 * s + c as f64).sin()) * 0.9).unwrap();
        (model, vec![img(0.3), img(0.7)], vec![img(1.1), img(0.2), img(0.5)])
    }

    fn disc() -> DiscriminatorConfig {
        DiscriminatorConfig { num_layers: 2, base_channels: 4, channel_cap: 8, norm: NormKind::Instance }
    }

    #[test]
    fn bce_matches_closed_form() {
        let t = Tensor::from_vec(1, 1, 2, vec![0.0f64, 2.0]);
        let (loss, prob, g) = bce_logits(&t, 1.0);
        let expect = (2f64.ln() + (1.0 + (-2f64).exp()).ln()) / 2.0;
        assert!((loss - expect).abs() < 1e-12);
        assert!((prob - (0.5 + 1.0 / (1.0 + (-2f64).exp())) / 2.0).abs() < 1e-12);
        assert!((g.data[0] - (-0.25)).abs() < 1e-12);
        let huge = Tensor::from_vec(1, 1, 1, vec![800.0f64]);
        assert!(bce_logits(&huge, 0.0).0.is_finite());
    }

    #[test]
    fn zero_rates_and_empty_prefix_keep_source() {
        let (src, s, t) = tiny();
        let base = AdaptConfig { steps: Some(4), discriminator: disc(), ..Default::default() };
        let zero = adapt(&src, &s, &t, &AdaptConfig { disc_lr: 0.0, gen_lr: 0.0, ..base.clone() }).unwrap();
        assert_eq!(zero.model, src);
        let none = adapt(&src, &s, &t, &AdaptConfig { schedule: FreezeSchedule::TrainablePrefix(0), ..base.clone() }).unwrap();
        assert_eq!(none.model, src);
        assert_eq!(none.history.len(), 4);
        let some = adapt(&src, &s, &t, &base).unwrap();
        assert_ne!(some.model, src);
        assert_eq!(some.source_checksum, src.checksum());
    }

    #[test]
    fn step_budget_defaults_to_smaller_domain() {
        let cfg = AdaptConfig { epochs: 3, ..Default::default() };
        assert_eq!(cfg.total_steps(10, 4), 12);
        assert_eq!(AdaptConfig { steps: Some(7), ..cfg }.total_steps(10, 4), 7);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let (src, s, t) = tiny();
        let cfg = AdaptConfig { discriminator: disc(), ..Default::default() };
        assert!(matches!(adapt(&src, &[], &t, &cfg), Err(Error::Config(_))));
        assert!(adapt(&src, &s, &t, &AdaptConfig { disc_lr: -1.0, ..cfg.clone() }).is_err());
        let raw = Image::filled(16, 16, 3.0, Domain::Raw).unwrap();
        assert!(adapt(&src, &[raw], &t, &cfg).is_err());
    }

    #[test]
    fn infer_round_trips_domains() {
        let (src, s, _) = tiny();
        let n = infer(&src, &s[0]).unwrap();
        assert_eq!(n.domain(), Domain::Norm);
        assert_eq!(n, infer(&src, &s[0]).unwrap());
        let raw = denormalize(&s[0]).unwrap();
        let r = infer(&src, &raw).unwrap();
        assert_eq!(r.domain(), Domain::Raw);
    }
}
