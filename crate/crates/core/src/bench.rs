//! Desk-scale synthetic benchmark: procedural paired scenes, a source
//! ensemble, an acquisition shift, per-candidate adaptation and label-free
//! selection, summarized in one deterministic report.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{infer, AdaptConfig};
use crate::data::{split_dataset, Dataset, DomainTag, Sample};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::mean_pearson;
use crate::nn::block::NormKind;
use crate::nn::discriminator::DiscriminatorConfig;
use crate::nn::freeze::FreezeSchedule;
use crate::nn::generator::{GeneratorConfig, GeneratorModel};
use crate::nn::optim::AdamSettings;
use crate::perturb::{generate_synthetic_pair, PerturbationKind, PerturbationSpec, SyntheticSceneSpec};
use crate::rng::substream;
use crate::scalar::Real;
use crate::train::{train_source, SourceTrainConfig};
use crate::uncertainty::{auto_select, CandidateStatus, EnsembleConfig, SourceMember};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Pass thresholds of the benchmark, fixed after the first seed-0 run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchThresholds {
    /// Every source member must validate at least this high.
    pub min_val_pearson: f64,
    /// Absolute drop of test Pearson caused by the shift.
    pub min_degradation: f64,
    /// Fraction of the drop won back by the best shallow candidate.
    pub min_recovery: f64,
    /// Uncertainty and test Pearson must correlate below this.
    pub max_spearman: f64,
}

pub const THRESHOLDS: BenchThresholds =
    BenchThresholds { min_val_pearson: 0.9, min_degradation: 0.15, min_recovery: 0.5, max_spearman: 0.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthBenchConfig {
    pub num_pairs: usize,
    pub scene: SyntheticSceneSpec,
    pub generator: GeneratorConfig,
    pub source: SourceTrainConfig,
    pub shift: PerturbationSpec,
    /// Extra shift magnitudes for the degradation curve.
    pub curve: Vec<f64>,
    pub adapt: AdaptConfig,
    pub schedules: Vec<FreezeSchedule>,
    pub lrs: Vec<f64>,
    pub ensemble: EnsembleConfig,
    /// Candidates with these schedules count towards the recovery check.
    pub recovery_depths: Vec<usize>,
    pub seed: u64,
}

impl Default for SynthBenchConfig {
    fn default() -> Self {
        SynthBenchConfig {
            num_pairs: 300,
            scene: SyntheticSceneSpec::default(),
            generator: GeneratorConfig {
                depth: 5,
                base_channels: 8,
                channel_cap: 64,
                norm: NormKind::Instance,
                input_norm: false,
            },
            source: SourceTrainConfig {
                epochs: 10,
                batch_size: 4,
                optimizer: AdamSettings::regression(2e-3),
                decay_start: 0,
                seed: 0,
            },
            shift: PerturbationSpec { kind: PerturbationKind::Overexpose, magnitude: 1.7 },
            curve: vec![1.2, 1.5, 1.7],
            adapt: AdaptConfig {
                epochs: 2,
                discriminator: DiscriminatorConfig { base_channels: 8, channel_cap: 64, ..Default::default() },
                ..Default::default()
            },
            schedules: (1..=4).map(FreezeSchedule::TrainablePrefix).collect(),
            lrs: vec![1e-3, 1e-4],
            ensemble: EnsembleConfig { seeds: vec![0, 1, 2], ..Default::default() },
            recovery_depths: vec![1, 2, 3],
            seed: 0,
        }
    }
}

impl SynthBenchConfig {
    /// Small, fast variant for smoke and determinism checks.
    pub fn quick() -> Self {
        let base = Self::default();
        SynthBenchConfig {
            num_pairs: 24,
            scene: SyntheticSceneSpec { height: 32, width: 32, num_blobs: 4, ..base.scene },
            generator: GeneratorConfig { depth: 3, ..base.generator },
            source: SourceTrainConfig { epochs: 2, ..base.source },
            curve: vec![1.7],
            adapt: AdaptConfig {
                epochs: 1,
                discriminator: DiscriminatorConfig { num_layers: 2, ..base.adapt.discriminator.clone() },
                ..base.adapt
            },
            schedules: vec![FreezeSchedule::TrainablePrefix(1), FreezeSchedule::TrainablePrefix(2)],
            lrs: vec![1e-4],
            ensemble: EnsembleConfig { seeds: vec![0, 1], ..base.ensemble },
            ..base
        }
    }

    /// Same benchmark under another root seed: scenes, split and member seeds
    /// all move with it.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg.ensemble.seeds = self.ensemble.seeds.iter().map(|s| s.wrapping_add(seed.wrapping_mul(1000))).collect();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_pairs < 10 {
            return Err(Error::Config(format!("synthetic benchmark needs at least 10 pairs, got {}", self.num_pairs)));
        }
        if self.scene.height != self.scene.width {
            return Err(Error::Config("synthetic scenes must be square".into()));
        }
        self.scene.validate()?;
        self.shift.validate()?;
        self.source.validate()?;
        self.adapt.validate()?;
        self.ensemble.validate()?;
        if self.schedules.is_empty() || self.lrs.is_empty() {
            return Err(Error::Config("candidate grids must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub seed: u64,
    pub val_pearson: Option<f64>,
    pub best_epoch: Option<usize>,
    pub diverged: bool,
    pub clean_test_pearson: Option<f64>,
    pub shifted_test_pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub magnitude: f64,
    pub source_pearson: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub candidate: String,
    pub schedule: String,
    pub disc_lr: f64,
    pub status: CandidateStatus,
    pub uncertainty: Option<f64>,
    pub trainable_params: usize,
    pub members: usize,
    /// Mean over surviving members of the adapted test Pearson.
    pub test_pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBenchSummary {
    pub schema_version: u32,
    pub config: SynthBenchConfig,
    pub split: (usize, usize, usize),
    pub members: Vec<MemberSummary>,
    pub clean_test_pearson: f64,
    pub shifted_test_pearson: f64,
    pub degradation: f64,
    pub curve: Vec<CurvePoint>,
    pub candidates: Vec<CandidateSummary>,
    pub chosen: String,
    pub chosen_test_pearson: f64,
    pub best_shallow: Option<String>,
    pub best_shallow_test_pearson: Option<f64>,
    pub recovery: Option<f64>,
    pub spearman: Option<f64>,
    pub checks: Vec<Check>,
}

impl SynthBenchSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Spearman rank correlation (average ranks for ties). `None` when either
/// side is constant or fewer than two points are given.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ranks = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// `num_pairs` scenes, each with its own seed drawn from the root seed.
pub fn synthetic_dataset<T: Real>(scene: &SyntheticSceneSpec, num_pairs: usize, seed: u64) -> Result<Dataset<T>> {
    let mut rng = substream(seed, "synth");
    let samples = (0..num_pairs)
        .map(|i| {
            let (input, target) = generate_synthetic_pair(&scene.with_seed(rng.random()))?;
            Ok(Sample { id: format!("scene{i:04}"), input, target: Some(target) })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, DomainTag::Source)
}

fn pearson_of<T: Real>(model: &GeneratorModel<T>, inputs: &[Image<T>], targets: &[Image<T>]) -> Result<Option<f64>> {
    let preds = inputs.iter().map(|x| infer(model, x)).collect::<Result<Vec<_>>>()?;
    match mean_pearson(&preds, targets) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = v.into_iter().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Run the whole benchmark. Independent runs use up to `jobs` threads; the
/// result does not depend on `jobs`.
pub fn run_synthbench<T: Real>(cfg: &SynthBenchConfig, jobs: usize) -> Result<(SynthBenchSummary, Vec<SourceMember<T>>)> {
    cfg.validate()?;
    let dataset = synthetic_dataset::<T>(&cfg.scene, cfg.num_pairs, cfg.seed)?;
    let (train, val, test) = split_dataset(&dataset, cfg.seed)?;
    let shifted_test = test.map_inputs(|x| cfg.shift.apply(x))?;

    let test_pairs = test.normalized_pairs()?;
    let targets: Vec<Image<T>> = test_pairs.iter().map(|(_, y)| y.clone()).collect();
    let clean_inputs: Vec<Image<T>> = test_pairs.into_iter().map(|(x, _)| x).collect();
    let shifted_inputs = shifted_test.normalized_inputs()?;
    let source_inputs = train.normalized_inputs()?;

    // Stage 1: one source model per ensemble seed.
    let trained: Vec<Result<(u64, GeneratorModel<T>, Option<crate::train::TrainReport>)>> = pool(jobs)?.install(|| {
        cfg.ensemble
            .seeds
            .par_iter()
            .map(|&seed| {
                let init = GeneratorModel::new(cfg.generator.clone(), &mut substream(seed, "source-init"))?;
                let scfg = SourceTrainConfig { seed, ..cfg.source.clone() };
                match train_source(init.clone(), &train, &val, &scfg) {
                    Ok((model, report)) => Ok((seed, model, Some(report))),
                    Err(e) if e.is_divergence() => Ok((seed, init, None)),
                    Err(e) => Err(e),
                }
            })
            .collect()
    });
    let mut members = Vec::new();
    let mut member_summaries = Vec::new();
    for t in trained {
        let (seed, model, report) = t?;
        let diverged = report.is_none();
        let (clean, shifted) = if diverged {
            (None, None)
        } else {
            (pearson_of(&model, &clean_inputs, &targets)?, pearson_of(&model, &shifted_inputs, &targets)?)
        };
        member_summaries.push(MemberSummary {
            seed,
            val_pearson: report.as_ref().map(|r| r.best_val_pearson),
            best_epoch: report.as_ref().map(|r| r.best_epoch),
            diverged,
            clean_test_pearson: clean,
            shifted_test_pearson: shifted,
        });
        members.push(SourceMember { seed, model, val_pearson: report.map(|r| r.best_val_pearson) });
    }
    let eligible: Vec<&MemberSummary> = member_summaries
        .iter()
        .filter(|m| m.val_pearson.is_some_and(|v| v >= cfg.ensemble.min_val_pearson))
        .collect();
    let clean_test_pearson = mean(eligible.iter().filter_map(|m| m.clean_test_pearson)).unwrap_or(f64::NAN);
    let shifted_test_pearson = mean(eligible.iter().filter_map(|m| m.shifted_test_pearson)).unwrap_or(f64::NAN);
    let degradation = clean_test_pearson - shifted_test_pearson;

    // Degradation curve of the first eligible member.
    let mut curve = Vec::new();
    if let Some(first) = members.iter().find(|m| m.val_pearson.is_some_and(|v| v >= cfg.ensemble.min_val_pearson)) {
        for &magnitude in &cfg.curve {
            let spec = PerturbationSpec { magnitude, ..cfg.shift };
            let inputs = test.map_inputs(|x| spec.apply(x))?.normalized_inputs()?;
            if let Some(p) = pearson_of(&first.model, &inputs, &targets)? {
                curve.push(CurvePoint { magnitude, source_pearson: p });
            }
        }
    }

    // Stage 2 and selection.
    let selection = pool(jobs)?.install(|| {
        auto_select(&members, &source_inputs, &shifted_inputs, &cfg.schedules, &cfg.lrs, &cfg.adapt, &cfg.ensemble, jobs)
    })?;
    let mut candidates = Vec::new();
    for r in &selection.results {
        let mut scores = Vec::new();
        for m in &r.models {
            if let Some(p) = pearson_of(m, &shifted_inputs, &targets)? {
                scores.push(p);
            }
        }
        candidates.push(CandidateSummary {
            candidate: r.row.candidate.clone(),
            schedule: r.row.schedule.clone(),
            disc_lr: r.row.disc_lr,
            status: r.row.status,
            uncertainty: r.row.score,
            trainable_params: r.row.trainable_params,
            members: r.row.members,
            test_pearson: mean(scores),
        });
    }
    let chosen = &candidates[selection.chosen];
    let chosen_test_pearson = chosen.test_pearson.unwrap_or(f64::NAN);

    let shallow = candidates
        .iter()
        .filter(|c| {
            c.status == CandidateStatus::Ok
                && cfg.recovery_depths.iter().any(|&k| c.schedule == FreezeSchedule::TrainablePrefix(k).label())
        })
        .filter_map(|c| c.test_pearson.map(|p| (c, p)))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    let recovery = shallow.map(|(_, p)| (p - shifted_test_pearson) / degradation);

    let scored: Vec<(f64, f64)> = candidates
        .iter()
        .filter(|c| c.status == CandidateStatus::Ok)
        .filter_map(|c| Some((c.uncertainty?, c.test_pearson?)))
        .collect();
    let spearman = spearman(
        &scored.iter().map(|s| s.0).collect::<Vec<_>>(),
        &scored.iter().map(|s| s.1).collect::<Vec<_>>(),
    );

    let th = THRESHOLDS;
    let min_val = member_summaries.iter().map(|m| m.val_pearson.unwrap_or(f64::NEG_INFINITY)).fold(f64::INFINITY, f64::min);
    let check = |name: &str, value: f64, threshold: f64, passed: bool| Check { name: name.into(), value, threshold, passed };
    let checks = vec![
        check("source_val_pearson", min_val, th.min_val_pearson, min_val >= th.min_val_pearson),
        check("shift_degradation", degradation, th.min_degradation, degradation >= th.min_degradation),
        check("shallow_recovery", recovery.unwrap_or(f64::NAN), th.min_recovery, recovery.is_some_and(|r| r >= th.min_recovery)),
        check("uncertainty_spearman", spearman.unwrap_or(f64::NAN), th.max_spearman, spearman.is_some_and(|s| s < th.max_spearman)),
        check(
            "selection_vs_baseline",
            chosen_test_pearson - shifted_test_pearson,
            0.0,
            chosen_test_pearson >= shifted_test_pearson,
        ),
    ];

    let summary = SynthBenchSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        config: cfg.clone(),
        split: (train.len(), val.len(), test.len()),
        members: member_summaries,
        clean_test_pearson,
        shifted_test_pearson,
        degradation,
        curve,
        chosen: chosen.candidate.clone(),
        chosen_test_pearson,
        best_shallow: shallow.map(|(c, _)| c.candidate.clone()),
        best_shallow_test_pearson: shallow.map(|(_, p)| p),
        candidates,
        recovery,
        spearman,
        checks,
    };
    Ok((summary, members))
}
