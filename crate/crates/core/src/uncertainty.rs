//! Ensemble uncertainty and label-free selection of the adaptation setting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{adapt, AdaptConfig};
use crate::error::{Error, Result};
use crate::image::{Image, Plane};
use crate::nn::freeze::{FreezeSchedule, LayerRegistry};
use crate::nn::generator::{generator_forward, GeneratorModel};
use crate::scalar::Real;

pub const DEFAULT_MIN_VAL_PEARSON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// One seed per member: used for source training and adaptation alike.
    pub seeds: Vec<u64>,
    /// Members whose source model validated below this are excluded.
    pub min_val_pearson: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { seeds: (0..5).collect(), min_val_pearson: DEFAULT_MIN_VAL_PEARSON }
    }
}

impl EnsembleConfig {
    pub fn k(&self) -> usize {
        self.seeds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.len() < 2 {
            return Err(Error::Config(format!("an ensemble needs K >= 2 members, got {}", self.seeds.len())));
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return Err(Error::Config("ensemble seeds must be distinct".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats<T> {
    pub mean: Plane<T>,
    /// Sample standard deviation (K - 1 denominator).
    pub std: Plane<T>,
}

impl<T: Real> EnsembleStats<T> {
    pub fn mean_std(&self) -> f64 {
        self.std.mean()
    }
}

fn check_same_architecture<T: Real>(models: &[GeneratorModel<T>]) -> Result<()> {
    if models.len() < 2 {
        return Err(Error::Config(format!("an ensemble needs at least 2 models, got {}", models.len())));
    }
    if let Some(m) = models.iter().find(|m| m.config() != models[0].config()) {
        return Err(Error::ArchitectureMismatch(format!("{:?} vs {:?}", m.config(), models[0].config())));
    }
    Ok(())
}

/// Per-pixel mean and sample standard deviation of the members' outputs.
pub fn ensemble_predict<T: Real>(models: &[GeneratorModel<T>], x: &Image<T>) -> Result<EnsembleStats<T>> {
    check_same_architecture(models)?;
    let preds = models.iter().map(|m| generator_forward(m, x)).collect::<Result<Vec<_>>>()?;
    Ok(stats_of(&preds))
}

/// Mean and sample std over equally shaped predictions (at least two).
pub fn stats_of<T: Real>(preds: &[Image<T>]) -> EnsembleStats<T> {
    let (h, w) = preds[0].shape();
    let k = preds.len() as f64;
    let mut mean = Plane::zeros(h, w);
    let mut std = Plane::zeros(h, w);
    for i in 0..h * w {
        let first = preds[0].data()[i];
        if preds.iter().all(|p| p.data()[i] == first) {
            // exact agreement, untouched by rounding in the mean
            mean.data[i] = first;
            continue;
        }
        let m = preds.iter().map(|p| p.data()[i].as_f64()).sum::<f64>() / k;
        let var = preds.iter().map(|p| (p.data()[i].as_f64() - m).powi(2)).sum::<f64>() / (k - 1.0);
        mean.data[i] = T::lit(m);
        std.data[i] = T::lit(var.sqrt());
    }
    EnsembleStats { mean, std }
}

/// Mean over images of the mean per-pixel ensemble std.
pub fn uncertainty_score<T: Real>(models: &[GeneratorModel<T>], inputs: &[Image<T>]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::Data("uncertainty needs at least one image".into()));
    }
    let mut total = 0.0;
    for x in inputs {
        total += ensemble_predict(models, x)?.mean_std();
    }
    Ok(total / inputs.len() as f64)
}

/// A source model that may join an ensemble.
#[derive(Debug, Clone)]
pub struct SourceMember<T> {
    pub seed: u64,
    pub model: GeneratorModel<T>,
    /// `None` when source training diverged.
    pub val_pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub schedule: FreezeSchedule,
    pub disc_lr: f64,
}

impl Candidate {
    pub fn label(&self) -> String {
        format!("{}@{:e}", self.schedule.label(), self.disc_lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Ok,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub candidate: String,
    pub schedule: String,
    pub disc_lr: f64,
    pub score: Option<f64>,
    pub status: CandidateStatus,
    pub trainable_params: usize,
    pub members: usize,
}

#[derive(Debug, Clone)]
pub struct CandidateResult<T> {
    pub candidate: Candidate,
    pub row: RankRow,
    /// Adapted members that survived the exclusion rule.
    pub models: Vec<GeneratorModel<T>>,
}

#[derive(Debug, Clone)]
pub struct Selection<T> {
    /// Index into `results` of the chosen candidate.
    pub chosen: usize,
    pub results: Vec<CandidateResult<T>>,
}

impl<T> Selection<T> {
    pub fn chosen(&self) -> &CandidateResult<T> {
        &self.results[self.chosen]
    }

    /// Ranking table sorted best first; excluded candidates last.
    pub fn ranking(&self) -> Vec<RankRow> {
        let mut rows: Vec<RankRow> = self.results.iter().map(|r| r.row.clone()).collect();
        rows.sort_by(rank_order);
        rows
    }
}

fn rank_order(a: &RankRow, b: &RankRow) -> std::cmp::Ordering {
    let key = |r: &RankRow| r.score.filter(|_| r.status == CandidateStatus::Ok).unwrap_or(f64::INFINITY);
    key(a)
        .total_cmp(&key(b))
        .then(a.trainable_params.cmp(&b.trainable_params))
        .then(a.disc_lr.total_cmp(&b.disc_lr))
}

/// Index of the best surviving row: lowest score, then fewer trainable
/// parameters, then lower learning rate.
pub fn select_best(rows: &[RankRow]) -> Result<usize> {
    (0..rows.len())
        .filter(|&i| rows[i].status == CandidateStatus::Ok && rows[i].score.is_some())
        .min_by(|&i, &j| rank_order(&rows[i], &rows[j]).then(i.cmp(&j)))
        .ok_or(Error::SelectionFailure)
}

/// Adapt every eligible member under every candidate, score each candidate
/// ensemble on `target_inputs` and pick the least uncertain one.
///
/// Member `k` adapts with its own seed. Members that diverge, or whose source
/// model validated below `ensemble.min_val_pearson`, are dropped; a candidate
/// left with fewer than two members is excluded. `jobs` bounds the number of
/// runs executed concurrently.
#[allow(clippy::too_many_arguments)]
pub fn auto_select<T: Real>(
    members: &[SourceMember<T>],
    source_inputs: &[Image<T>],
    target_inputs: &[Image<T>],
    schedules: &[FreezeSchedule],
    lrs: &[f64],
    base: &AdaptConfig,
    ensemble: &EnsembleConfig,
    jobs: usize,
) -> Result<Selection<T>> {
    if schedules.is_empty() || lrs.is_empty() {
        return Err(Error::Config("candidate grids must be nonempty".into()));
    }
    if members.len() < 2 {
        return Err(Error::Config("auto_select needs at least 2 source members".into()));
    }
    if target_inputs.is_empty() {
        return Err(Error::Data("auto_select needs unlabeled target images".into()));
    }
    check_same_architecture(&members.iter().map(|m| m.model.clone()).collect::<Vec<_>>())?;
    let registry = LayerRegistry::of(&members[0].model);
    let eligible: Vec<&SourceMember<T>> = members
        .iter()
        .filter(|m| m.val_pearson.is_some_and(|v| v >= ensemble.min_val_pearson))
        .collect();

    let candidates: Vec<Candidate> = lrs
        .iter()
        .flat_map(|&lr| schedules.iter().map(move |s| Candidate { schedule: s.clone(), disc_lr: lr }))
        .collect();
    for c in &candidates {
        c.schedule.resolve(&registry)?;
    }
    let jobs_list: Vec<(usize, usize)> =
        (0..candidates.len()).flat_map(|c| (0..eligible.len()).map(move |m| (c, m))).collect();
    let run = |&(c, m): &(usize, usize)| -> Result<Option<GeneratorModel<T>>> {
        let member = eligible[m];
        let cfg = AdaptConfig {
            schedule: candidates[c].schedule.clone(),
            disc_lr: candidates[c].disc_lr,
            seed: member.seed,
            ..base.clone()
        };
        match adapt(&member.model, source_inputs, target_inputs, &cfg) {
            Ok(r) => Ok(Some(r.model)),
            Err(e) if e.is_divergence() => Ok(None),
            Err(e) => Err(e),
        }
    };
    let adapted: Vec<Option<GeneratorModel<T>>> = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?
        .install(|| jobs_list.par_iter().map(run).collect::<Result<Vec<_>>>())?;

    let mut results = Vec::with_capacity(candidates.len());
    let mut adapted = adapted.into_iter();
    for candidate in candidates {
        let models: Vec<GeneratorModel<T>> = adapted.by_ref().take(eligible.len()).flatten().collect();
        let trainable_params = registry.trainable_params(&candidate.schedule.resolve(&registry)?);
        let score = if models.len() >= 2 { Some(uncertainty_score(&models, target_inputs)?) } else { None };
        let status = if score.is_some_and(f64::is_finite) { CandidateStatus::Ok } else { CandidateStatus::Excluded };
        let row = RankRow {
            candidate: candidate.label(),
            schedule: candidate.schedule.label(),
            disc_lr: candidate.disc_lr,
            score,
            status,
            trainable_params,
            members: models.len(),
        };
        results.push(CandidateResult { candidate, row, models });
    }
    let rows: Vec<RankRow> = results.iter().map(|r| r.row.clone()).collect();
    let chosen = select_best(&rows)?;
    Ok(Selection { chosen, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Domain;
    use crate::nn::block::NormKind;
    use crate::nn::generator::GeneratorConfig;

    fn row(k: usize, score: Option<f64>, lr: f64) -> RankRow {
        RankRow {
            candidate: format!("prefix:{k}"),
            schedule: format!("prefix:{k}"),
            disc_lr: lr,
            score,
            status: if score.is_some() { CandidateStatus::Ok } else { CandidateStatus::Excluded },
            trainable_params: k * 100,
            members: 5,
        }
    }

    #[test]
    fn selection_rules() {
        let rows = [row(1, Some(0.12), 1e-4), row(2, Some(0.08), 1e-4), row(3, Some(0.08), 1e-4)];
        assert_eq!(select_best(&rows).unwrap(), 1);
        assert_eq!(select_best(&rows[..1]).unwrap(), 0);
        let lr_tie = [row(2, Some(0.08), 1e-3), row(2, Some(0.08), 1e-5)];
        assert_eq!(select_best(&lr_tie).unwrap(), 1);
        let excluded = [row(1, None, 1e-4), row(2, Some(0.5), 1e-4)];
        assert_eq!(select_best(&excluded).unwrap(), 1);
        assert!(matches!(select_best(&[row(1, None, 1e-4)]), Err(Error::SelectionFailure)));
    }

    #[test]
    fn two_constant_members() {
        let a = Image::<f64>::filled(2, 3, 0.0, Domain::Norm).unwrap();
        let b = Image::<f64>::filled(2, 3, 1.0, Domain::Norm).unwrap();
        let s = stats_of(&[a.clone(), b]);
        assert!(s.std.data.iter().all(|v| (v - 0.5f64.sqrt()).abs() < 1e-12));
        assert!(s.mean.data.iter().all(|&v| v == 0.5));
        assert_eq!(stats_of(&[a.clone(), a]).std.mean(), 0.0);
    }

    #[test]
    fn identical_models_score_zero_and_mismatch_is_rejected() {
        let cfg = GeneratorConfig { depth: 2, base_channels: 2, channel_cap: 4, norm: NormKind::Instance, input_norm: true };
        let m = GeneratorModel::<f64>::new(cfg.clone(), &mut crate::rng::substream(3, "g")).unwrap();
        let x = Image::from_fn(8, 8, Domain::Norm, |r, c| ((r * 8 + c) as f64 / 64.0) - 0.5).unwrap();
        assert_eq!(uncertainty_score(&[m.clone(), m.clone(), m.clone()], &[x.clone()]).unwrap(), 0.0);
        assert!(uncertainty_score(&[m.clone(), m.clone()], &[]).is_err());
        let other = GeneratorModel::<f64>::new(GeneratorConfig { base_channels: 3, ..cfg }, &mut crate::rng::substream(3, "g")).unwrap();
        assert!(matches!(ensemble_predict(&[m.clone(), other], &x), Err(Error::ArchitectureMismatch(_))));
        assert!(ensemble_predict(&[m], &x).is_err());
    }

    #[test]
    fn ensemble_config_rules() {
        assert!(EnsembleConfig::default().validate().is_ok());
        assert_eq!(EnsembleConfig::default().k(), 5);
        assert!(EnsembleConfig { seeds: vec![1], ..Default::default() }.validate().is_err());
        assert!(EnsembleConfig { seeds: vec![1, 1], ..Default::default() }.validate().is_err());
    }
}
