mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sitadda::nn::checkpoint::{
    discriminator_from_bytes, discriminator_to_bytes, generator_from_bytes, generator_to_bytes, load_generator,
    read_header, save_generator, Stage,
};
use sitadda::nn::generator::generator_forward;
use sitadda::rng::substream;
use sitadda::{DiscriminatorConfig, DiscriminatorModel, Error, GeneratorConfig, GeneratorModel, Network, NormKind};
use support::pipeline;

fn small() -> GeneratorConfig {
    GeneratorConfig { depth: 4, base_channels: 3, channel_cap: 12, norm: NormKind::Instance, input_norm: false }
}

#[test]
fn frozen_blocks_stay_bit_exact() {
    for k in [0, 1, 3] {
        pipeline::freeze_bit_exact(k, 50).unwrap();
    }
}

#[test]
fn untrained_copy_reproduces_source() {
    pipeline::init_identity(10).unwrap();
}

#[test]
fn full_size_shapes() {
    pipeline::shape_suite().unwrap();
}

#[test]
fn generator_checkpoint_round_trips() {
    let g = GeneratorModel::<f32>::new(small(), &mut substream(2, "init")).unwrap();
    let bytes = generator_to_bytes(&g, Stage::Source).unwrap();
    let (back, stage) = generator_from_bytes::<f32>(&bytes).unwrap();
    assert_eq!(stage, Stage::Source);
    assert_eq!(back, g);
    assert_eq!(back.checksum(), g.checksum());
    assert_eq!(read_header(&bytes).unwrap().param_count, g.param_count());

    let x = pipeline::random_norm(&mut ChaCha8Rng::seed_from_u64(4), 16);
    assert_eq!(generator_forward(&g, &x).unwrap(), generator_forward(&back, &x).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    save_generator(&g, Stage::Adapted, &path).unwrap();
    assert_eq!(load_generator::<f32>(&path).unwrap(), (g, Stage::Adapted));
}

#[test]
fn discriminator_checkpoint_round_trips() {
    let cfg = DiscriminatorConfig { num_layers: 2, base_channels: 4, channel_cap: 8, norm: NormKind::Instance };
    let d = DiscriminatorModel::<f64>::new(cfg, &mut substream(3, "disc")).unwrap();
    let back = discriminator_from_bytes::<f64>(&discriminator_to_bytes(&d, Stage::Adapted).unwrap()).unwrap();
    assert_eq!(back, d);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let g = GeneratorModel::<f32>::new(small(), &mut substream(2, "init")).unwrap();
    let bytes = generator_to_bytes(&g, Stage::Source).unwrap();
    assert!(matches!(generator_from_bytes::<f64>(&bytes), Err(Error::Checkpoint(_))));
    assert!(matches!(generator_from_bytes::<f32>(&bytes[..bytes.len() - 1]), Err(Error::Checkpoint(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(generator_from_bytes::<f32>(&bad), Err(Error::Checkpoint(_))));
    let d = DiscriminatorModel::<f32>::new(DiscriminatorConfig::default(), &mut substream(3, "d")).unwrap();
    let dbytes = discriminator_to_bytes(&d, Stage::Initial).unwrap();
    assert!(generator_from_bytes::<f32>(&dbytes).is_err());
    assert!(discriminator_from_bytes::<f32>(&bytes).is_err());
}
