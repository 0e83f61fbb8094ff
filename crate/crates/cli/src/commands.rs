//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::json;
use sitadda::adapt::{self, CellStatus};
use sitadda::bench::{run_synthbench, SynthBenchConfig, SynthBenchSummary};
use sitadda::data::{self, DomainTag};
use sitadda::metrics::{self, paired_test_family, ImageMetrics};
use sitadda::nn::checkpoint::{self, Stage};
use sitadda::perturb::{PerturbationKind, PerturbationSpec};
use sitadda::rng::substream;
use sitadda::train::{train_source as fit_source, validate_pearson, SourceTrainConfig};
use sitadda::uncertainty::{auto_select, CandidateStatus, SourceMember};
use sitadda::{Generator, Img, Network};

use crate::config::existing;
use crate::output::{ensure_dir, write_csv, write_json, Manifest};
use crate::plot::{chart, Series};
use crate::{CliError, Context};

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub magnitude: Option<f64>,
    /// Directory of raw images to perturb.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum KindArg {
    Scale,
    Overexpose,
    Gradient,
}

impl From<KindArg> for PerturbationKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Scale => PerturbationKind::Scale,
            KindArg::Overexpose => PerturbationKind::Overexpose,
            KindArg::Gradient => PerturbationKind::Gradient,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub references: PathBuf,
    /// Second set of predictions compared against the first with paired tests.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthbenchArgs {
    /// Small preset that finishes in seconds.
    #[arg(long)]
    pub quick: bool,
}

fn load_source(ctx: &Context) -> Result<data::Dataset<f32>, CliError> {
    let dir = existing(&ctx.config.paths.source, "source")?;
    Ok(data::load_images(&dir, ctx.config.model.image_size, DomainTag::Source)?)
}

fn load_target(ctx: &Context) -> Result<data::Dataset<f32>, CliError> {
    let dir = existing(&ctx.config.paths.target, "target")?;
    Ok(data::load_images(&dir, ctx.config.model.image_size, DomainTag::Target)?)
}

fn load_checkpoint(ctx: &Context) -> Result<Generator, CliError> {
    let path = existing(&ctx.config.paths.checkpoint, "checkpoint")?;
    Ok(checkpoint::load_generator(&path)?.0)
}

/// Labeled target pairs, when the target directory carries `_target` images.
fn target_pairs(target: &data::Dataset<f32>) -> Result<Option<Vec<(Img, Img)>>, CliError> {
    if target.samples.iter().all(|s| s.target.is_some()) && !target.is_empty() {
        Ok(Some(target.normalized_pairs()?))
    } else {
        Ok(None)
    }
}

fn train_member(
    ctx: &Context,
    seed: u64,
    train: &data::Dataset<f32>,
    val: &data::Dataset<f32>,
) -> Result<(Generator, sitadda::train::TrainReport), CliError> {
    let init = Generator::new(ctx.config.model.generator.clone(), &mut substream(seed, "source-init"))?;
    let cfg = SourceTrainConfig { seed, ..ctx.config.source_train.clone() };
    Ok(fit_source(init, train, val, &cfg)?)
}

pub fn train_source(ctx: &Context) -> Result<(), CliError> {
    let source = load_source(ctx)?;
    let (train, val, test) = data::split_dataset(&source, ctx.seed)?;
    let (model, report) = train_member(ctx, ctx.seed, &train, &val)?;

    let ckpt = ctx.out.join("source.ckpt");
    checkpoint::save_generator(&model, Stage::Source, &ckpt)?;
    write_csv(&ctx.out.join("history.csv"), &report.epochs)?;
    let ids = |d: &data::Dataset<f32>| d.samples.iter().map(|s| s.id.clone()).collect::<Vec<_>>();
    write_json(&ctx.out.join("split.json"), &json!({"train": ids(&train), "val": ids(&val), "test": ids(&test)}))?;

    let mut manifest = Manifest::new("train-source", ctx.seed, &ctx.config);
    manifest.outputs = vec!["source.ckpt".into(), "history.csv".into(), "split.json".into()];
    manifest.details = json!({
        "best_epoch": report.best_epoch,
        "best_val_pearson": report.best_val_pearson,
        "checksum": model.checksum(),
    });
    manifest.write(&ctx.out)?;
    println!("best epoch {} val pearson {:.4}", report.best_epoch, report.best_val_pearson);
    Ok(())
}

pub fn adapt(ctx: &Context) -> Result<(), CliError> {
    let source_model = load_checkpoint(ctx)?;
    let source = load_source(ctx)?;
    let target = load_target(ctx)?;
    let cfg = ctx.config.adapt.resolve(ctx.seed)?;
    let run = adapt::adapt(&source_model, &source.normalized_inputs()?, &target.normalized_inputs()?, &cfg)?;

    checkpoint::save_generator(&run.model, Stage::Adapted, ctx.out.join("adapted.ckpt"))?;
    write_csv(&ctx.out.join("history.csv"), &run.history)?;
    write_json(&ctx.out.join("run.json"), &run.manifest())?;
    let pred_dir = ctx.out.join("predictions");
    ensure_dir(&pred_dir)?;
    for s in &target.samples {
        data::write_image(&adapt::infer(&run.model, &s.input)?, &pred_dir.join(format!("{}.png", s.id)))?;
    }

    let mut manifest = Manifest::new("adapt", ctx.seed, &ctx.config);
    manifest.outputs = vec!["adapted.ckpt".into(), "history.csv".into(), "run.json".into(), "predictions".into()];
    if let Some(pairs) = target_pairs(&target)? {
        let p = validate_pearson(&run.model, &pairs)?;
        manifest.details = json!({"target_pearson": p});
        println!("target pearson {p:.4}");
    }
    manifest.write(&ctx.out)?;
    println!("adapted {} steps, schedule {}", run.steps, cfg.schedule.label());
    Ok(())
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let source_model = load_checkpoint(ctx)?;
    let source = load_source(ctx)?;
    let target = load_target(ctx)?;
    let base = ctx.config.adapt.resolve(ctx.seed)?;
    let schedules = ctx.config.sweep.schedules()?;
    let pairs = target_pairs(&target)?;
    let cells = adapt::sweep(
        &source_model,
        &source.normalized_inputs()?,
        &target.normalized_inputs()?,
        &ctx.config.sweep.lrs,
        &schedules,
        &base,
        pairs.as_deref(),
        ctx.jobs,
    )?;
    let rows: Vec<_> = cells.iter().map(|c| c.row()).collect();
    write_csv(&ctx.out.join("sweep.csv"), &rows)?;
    write_json(&ctx.out.join("sweep.json"), &rows)?;

    let excluded = rows.iter().filter(|r| r.status == CellStatus::Excluded).count();
    let mut manifest = Manifest::new("sweep", ctx.seed, &ctx.config);
    manifest.outputs = vec!["sweep.csv".into(), "sweep.json".into()];
    manifest.details = json!({"cells": rows.len(), "excluded": excluded});
    if excluded == rows.len() {
        manifest.status = "all_excluded";
        manifest.write(&ctx.out)?;
        return Err(sitadda::Error::SelectionFailure.into());
    }
    manifest.write(&ctx.out)?;
    println!("{} cells, {excluded} excluded", rows.len());
    Ok(())
}

#[derive(Serialize)]
struct RankingRecord<'a> {
    candidate: &'a str,
    score: Option<f64>,
    status: CandidateStatus,
    trainable_params: usize,
}

pub fn autoselect(ctx: &Context) -> Result<(), CliError> {
    let source = load_source(ctx)?;
    let target = load_target(ctx)?;
    let ensemble = ctx.config.ensemble.config()?;
    let (train, val, _) = data::split_dataset(&source, ctx.seed)?;
    let val_pairs = val.normalized_pairs()?;

    let mut members = Vec::with_capacity(ensemble.k());
    for (i, &seed) in ensemble.seeds.iter().enumerate() {
        let member = match ctx.config.ensemble.checkpoints.get(i) {
            Some(path) => {
                let (model, _) = checkpoint::load_generator::<f32>(path)?;
                let val_pearson = validate_pearson(&model, &val_pairs).ok();
                SourceMember { seed, model, val_pearson }
            }
            None => match train_member(ctx, seed, &train, &val) {
                Ok((model, report)) => SourceMember { seed, model, val_pearson: Some(report.best_val_pearson) },
                Err(CliError::Core(e)) if e.is_divergence() => {
                    let model = Generator::constant(ctx.config.model.generator.clone(), 0.0)?;
                    SourceMember { seed, model, val_pearson: None }
                }
                Err(e) => return Err(e),
            },
        };
        members.push(member);
    }

    let base = ctx.config.adapt.resolve(ctx.seed)?;
    let selection = auto_select(
        &members,
        &train.normalized_inputs()?,
        &target.normalized_inputs()?,
        &ctx.config.sweep.schedules()?,
        &ctx.config.sweep.lrs,
        &base,
        &ensemble,
        ctx.jobs,
    )?;
    let ranking = selection.ranking();
    let records: Vec<RankingRecord> = ranking
        .iter()
        .map(|r| RankingRecord {
            candidate: &r.candidate,
            score: r.score,
            status: r.status,
            trainable_params: r.trainable_params,
        })
        .collect();
    write_csv(&ctx.out.join("ranking.csv"), &records)?;
    let chosen = selection.chosen();
    let mut outputs = vec![PathBuf::from("ranking.csv"), PathBuf::from("selection.json")];
    for (k, model) in chosen.models.iter().enumerate() {
        let name = format!("chosen_{k}.ckpt");
        checkpoint::save_generator(model, Stage::Adapted, ctx.out.join(&name))?;
        outputs.push(name.into());
    }
    let member_val: Vec<_> = members.iter().map(|m| json!({"seed": m.seed, "val_pearson": m.val_pearson})).collect();
    write_json(
        &ctx.out.join("selection.json"),
        &json!({"chosen": chosen.row, "members": member_val, "ranking": ranking}),
    )?;

    let mut manifest = Manifest::new("autoselect", ctx.seed, &ctx.config);
    manifest.outputs = outputs;
    manifest.details = json!({"chosen": chosen.row.candidate, "score": chosen.row.score});
    manifest.write(&ctx.out)?;
    println!("chosen {}", chosen.row.candidate);
    Ok(())
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", dir.display())));
    }
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::Core(e.into()))? {
        let path = entry.map_err(|e| CliError::Core(e.into()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "tif" | "tiff")) {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            files.insert(stem, path);
        }
    }
    Ok(files)
}

pub fn perturb(ctx: &Context, args: &PerturbArgs) -> Result<(), CliError> {
    let section = ctx.config.perturb.as_ref();
    let kind = args
        .kind
        .map(PerturbationKind::from)
        .or(section.map(|s| s.kind))
        .ok_or_else(|| CliError::Config("perturbation kind required (--kind)".into()))?;
    let magnitude = args
        .magnitude
        .or(section.map(|s| s.magnitude))
        .ok_or_else(|| CliError::Config("perturbation magnitude required (--magnitude)".into()))?;
    let spec = PerturbationSpec::new(kind, magnitude)?;
    let input = args
        .input
        .clone()
        .or_else(|| section.and_then(|s| s.input.clone()))
        .ok_or_else(|| CliError::Config("input directory required (--input)".into()))?;

    let files = image_files(&input)?;
    if files.is_empty() {
        return Err(CliError::Data(format!("no images in {}", input.display())));
    }
    let img_dir = ctx.out.join("images");
    ensure_dir(&img_dir)?;
    for (stem, path) in &files {
        let x = data::read_image::<f32>(path)?;
        data::write_image(&spec.apply(&x)?, &img_dir.join(format!("{stem}.png")))?;
    }
    let mut manifest = Manifest::new("perturb", ctx.seed, json!({"perturbation": spec, "input": input}));
    manifest.outputs = vec!["images".into()];
    manifest.details = json!({"images": files.len(), "label": spec.label()});
    manifest.write(&ctx.out)?;
    println!("{} images perturbed ({})", files.len(), spec.label());
    Ok(())
}

fn matched_images(
    predictions: &Path,
    references: &Path,
) -> Result<(Vec<String>, Vec<Img>, Vec<Img>), CliError> {
    let preds = image_files(predictions)?;
    let refs = image_files(references)?;
    let mut ids = Vec::new();
    let (mut p, mut r) = (Vec::new(), Vec::new());
    for (stem, path) in &preds {
        let reference = refs
            .get(stem)
            .or_else(|| refs.get(&format!("{stem}_target")))
            .ok_or_else(|| CliError::Data(format!("no reference image for `{stem}`")))?;
        ids.push(stem.clone());
        p.push(data::read_image::<f32>(path)?);
        r.push(data::read_image::<f32>(reference)?);
    }
    if ids.is_empty() {
        return Err(CliError::Data(format!("no images in {}", predictions.display())));
    }
    Ok((ids, p, r))
}

fn column(rows: &[ImageMetrics], f: impl Fn(&ImageMetrics) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

pub fn evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<(), CliError> {
    let (ids, preds, refs) = matched_images(&args.predictions, &args.references)?;
    let report = metrics::evaluate(&ids, &preds, &refs)?;
    write_csv(&ctx.out.join("per_image.csv"), &report.per_image)?;
    write_json(&ctx.out.join("metrics.json"), &report)?;
    let mut outputs = vec![PathBuf::from("per_image.csv"), PathBuf::from("metrics.json")];

    if let Some(baseline) = &args.baseline {
        let (bids, bpreds, brefs) = matched_images(baseline, &args.references)?;
        if bids != ids {
            return Err(CliError::Data("baseline and predictions cover different images".into()));
        }
        let base = metrics::evaluate(&bids, &bpreds, &brefs)?;
        let names = ["pearson", "ssim", "psnr"];
        let getters: [fn(&ImageMetrics) -> f64; 3] = [|m| m.pearson, |m| m.ssim, |m| m.psnr];
        let cols: Vec<(Vec<f64>, Vec<f64>)> = getters
            .iter()
            .map(|g| (column(&report.per_image, g), column(&base.per_image, g)))
            .collect();
        // PSNR is infinite for exact reconstructions and has no paired rank
        let usable: Vec<usize> =
            (0..names.len()).filter(|&i| cols[i].0.iter().chain(&cols[i].1).all(|v| v.is_finite())).collect();
        let family: Vec<(&[f64], &[f64])> = usable.iter().map(|&i| (&cols[i].0[..], &cols[i].1[..])).collect();
        let tests = paired_test_family(&family)?;
        let table: BTreeMap<&str, _> = usable.iter().zip(tests).map(|(&i, t)| (names[i], t)).collect();
        write_json(&ctx.out.join("significance.json"), &table)?;
        outputs.push("significance.json".into());
    }

    let mut manifest = Manifest::new(
        "evaluate",
        ctx.seed,
        json!({"predictions": args.predictions, "references": args.references, "baseline": args.baseline}),
    );
    manifest.outputs = outputs;
    manifest.details = json!({"images": ids.len(), "pearson": report.pearson, "ssim": report.ssim});
    manifest.write(&ctx.out)?;
    println!("{} images: pearson {:.4} ssim {:.4}", ids.len(), report.pearson, report.ssim);
    Ok(())
}

fn bench_charts(summary: &SynthBenchSummary) -> (String, String) {
    let curve = Series {
        name: "source model".into(),
        points: summary.curve.iter().map(|c| (c.magnitude, c.source_pearson)).collect(),
        lines: true,
    };
    let curve_svg = chart("Shift severity", "overexposure factor", "test Pearson", &[curve]);
    let scatter = Series {
        name: "candidates".into(),
        points: summary
            .candidates
            .iter()
            .filter_map(|c| Some((c.uncertainty?, c.test_pearson?)))
            .collect(),
        lines: false,
    };
    let scatter_svg = chart("Uncertainty against accuracy", "ensemble uncertainty", "test Pearson", &[scatter]);
    (curve_svg, scatter_svg)
}

pub fn synthbench(ctx: &Context, args: &SynthbenchArgs) -> Result<(), CliError> {
    let cfg = if args.quick {
        SynthBenchConfig::quick()
    } else {
        ctx.config.synthbench.clone().unwrap_or_default()
    }
    .with_seed(ctx.seed);
    let (summary, _) = run_synthbench::<f32>(&cfg, ctx.jobs)?;
    write_json(&ctx.out.join("summary.json"), &summary)?;
    write_csv(&ctx.out.join("candidates.csv"), &summary.candidates)?;
    let (curve, scatter) = bench_charts(&summary);
    std::fs::write(ctx.out.join("degradation.svg"), curve).map_err(|e| CliError::Core(e.into()))?;
    std::fs::write(ctx.out.join("uncertainty.svg"), scatter).map_err(|e| CliError::Core(e.into()))?;

    let mut manifest = Manifest::new("synthbench", ctx.seed, &cfg);
    manifest.outputs = ["summary.json", "candidates.csv", "degradation.svg", "uncertainty.svg"]
        .into_iter()
        .map(PathBuf::from)
        .collect();
    manifest.status = if summary.passed() { "ok" } else { "checks_failed" };
    manifest.write(&ctx.out)?;
    for c in &summary.checks {
        println!("{:<24} {:>9.4} (threshold {}) {}", c.name, c.value, c.threshold, if c.passed { "pass" } else { "FAIL" });
    }
    println!("chosen {}", summary.chosen);
    Ok(())
}
