//! Checks on the adaptation machinery shared by the integration and
//! acceptance targets. Each returns a description of the first violation.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitadda::adapt::{adapt, AdaptConfig};
use sitadda::nn::discriminator::discriminator_forward;
use sitadda::nn::generator::generator_forward;
use sitadda::rng::substream;
use sitadda::{
    DiscriminatorConfig, DiscriminatorModel, Domain, Error, FreezeSchedule, GeneratorConfig,
    GeneratorModel, Image, Network, NormKind,
};

pub fn random_norm(rng: &mut ChaCha8Rng, side: usize) -> Image<f32> {
    Image::new(side, side, (0..side * side).map(|_| rng.random_range(-1.0f32..=1.0)).collect(), Domain::Norm).unwrap()
}

fn small_generator() -> GeneratorModel<f32> {
    let cfg = GeneratorConfig { depth: 5, base_channels: 4, channel_cap: 16, norm: NormKind::Instance, input_norm: true };
    GeneratorModel::new(cfg, &mut substream(5, "source-init")).unwrap()
}

fn small_adapt(schedule: FreezeSchedule, steps: usize) -> AdaptConfig {
    AdaptConfig {
        schedule,
        disc_lr: 1e-3,
        gen_lr: 1e-3,
        steps: Some(steps),
        discriminator: DiscriminatorConfig { num_layers: 2, base_channels: 4, channel_cap: 8, norm: NormKind::Instance },
        seed: 9,
        ..Default::default()
    }
}

fn image_sets(seed: u64) -> (Vec<Image<f32>>, Vec<Image<f32>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = (0..6).map(|_| random_norm(&mut rng, 32)).collect();
    let tgt = (0..6).map(|_| random_norm(&mut rng, 32).map_clipped(|v| (v * 1.7).min(1.0))).collect();
    (src, tgt)
}

/// After `steps` adversarial steps with the first `k` blocks trainable,
/// frozen blocks are bit-identical to the source and trainable ones moved.
pub fn freeze_bit_exact(k: usize, steps: usize) -> Result<(), String> {
    let source = small_generator();
    let (src, tgt) = image_sets(k as u64);
    let run = adapt(&source, &src, &tgt, &small_adapt(FreezeSchedule::TrainablePrefix(k), steps)).map_err(|e| e.to_string())?;
    if run.steps != steps {
        return Err(format!("ran {} steps, expected {steps}", run.steps));
    }
    let bits = |b: &sitadda::nn::block::ConvBlock<f32>| -> Vec<u32> {
        b.params.iter().flatten().map(|v| v.to_bits()).collect()
    };
    for (i, (before, after)) in source.blocks().iter().zip(run.model.blocks()).enumerate() {
        let same = bits(before) == bits(after);
        match (run.trainable[i], same) {
            (false, false) => return Err(format!("frozen block {i} ({}) changed", before.spec.name)),
            (true, true) => return Err(format!("trainable block {i} ({}) did not move", before.spec.name)),
            _ => {}
        }
    }
    if run.trainable.iter().filter(|&&t| t).count() != k {
        return Err(format!("{} trainable blocks for k={k}", run.trainable.iter().filter(|&&t| t).count()));
    }
    if k == 0 && run.adapted_checksum != run.source_checksum {
        return Err("k=0 changed the model checksum".into());
    }
    Ok(())
}

/// Before any step the target model reproduces the source model bit for bit.
pub fn init_identity(inputs: usize) -> Result<(), String> {
    let source = small_generator();
    let (src, tgt) = image_sets(77);
    let run = adapt(&source, &src, &tgt, &small_adapt(FreezeSchedule::TrainablePrefix(3), 0)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for i in 0..inputs {
        let x = random_norm(&mut rng, 32);
        let a = generator_forward(&source, &x).map_err(|e| e.to_string())?;
        let b = generator_forward(&run.model, &x).map_err(|e| e.to_string())?;
        if a.data().iter().map(|v| v.to_bits()).ne(b.data().iter().map(|v| v.to_bits())) {
            return Err(format!("input {i}: outputs differ"));
        }
    }
    Ok(())
}

/// Full-size networks: 256 -> 256 in [-1, 1], 3-layer critic gives 32x32,
/// 1056 is rejected with a divisibility error.
pub fn shape_suite() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = GeneratorModel::<f32>::new(GeneratorConfig::default(), &mut substream(8, "init")).map_err(|e| e.to_string())?;
    if g.depth() != 8 {
        return Err(format!("default depth {}", g.depth()));
    }
    let x = random_norm(&mut rng, 256);
    let y = generator_forward(&g, &x).map_err(|e| e.to_string())?;
    if y.shape() != (256, 256) || y.data().iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(format!("generator output {:?} out of contract", y.shape()));
    }
    let d = DiscriminatorModel::<f32>::new(DiscriminatorConfig::default(), &mut substream(8, "disc")).map_err(|e| e.to_string())?;
    let map = discriminator_forward(&d, &y).map_err(|e| e.to_string())?;
    if (map.height, map.width) != (32, 32) {
        return Err(format!("critic map {}x{}", map.height, map.width));
    }
    let big = Image::filled(1056, 1056, 0.0f32, Domain::Norm).unwrap();
    match generator_forward(&g, &big) {
        Err(Error::Divisibility { divisor: 256, .. }) => Ok(()),
        other => Err(format!("1056 input gave {:?}", other.map(|i| i.shape()))),
    }
}
