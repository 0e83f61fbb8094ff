//! Finite-difference checks of the hand-written backward passes (f64).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitadda::nn::tensor::Tensor;
use sitadda::{DiscriminatorConfig, DiscriminatorModel, GeneratorConfig, GeneratorModel, Network, NormKind};

fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
    Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn gen_loss(model: &GeneratorModel<f64>, x: &Tensor<f64>, weights: &[f64]) -> f64 {
    let y = model.forward(x).unwrap();
    y.data.iter().zip(weights).map(|(a, b)| a * b).sum()
}

fn check_generator(norm: NormKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = GeneratorConfig { depth: 3, base_channels: 2, channel_cap: 4, norm, input_norm: true };
    let mut model = GeneratorModel::<f64>::new(cfg, &mut rng).unwrap();
    // Larger weights than the default init so every path carries signal.
    for block in model.blocks_mut() {
        for v in block.params[0].iter_mut() {
            *v *= 10.0;
        }
    }
    let x = random_tensor(&mut rng, 1, 16, 16);
    let weights: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();

    let n = model.blocks().len();
    let (_, cache) = model.forward_train(&x).unwrap();
    let mut grads = model.zero_grads();
    model.backward(cache, Tensor::from_vec(1, 16, 16, weights.clone()), &mut grads, &vec![true; n]);

    let h = 1e-6;
    for b in 0..n {
        for t in 0..model.blocks()[b].params.len() {
            let len = model.blocks()[b].params[t].len();
            for &i in &[0, len / 2, len - 1] {
                let orig = model.blocks()[b].params[t][i];
                model.blocks_mut()[b].params[t][i] = orig + h;
                let up = gen_loss(&model, &x, &weights);
                model.blocks_mut()[b].params[t][i] = orig - h;
                let down = gen_loss(&model, &x, &weights);
                model.blocks_mut()[b].params[t][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads[b][t][i];
                assert!(
                    (numeric - analytic).abs() <= 1e-5 * (1.0 + numeric.abs()),
                    "{norm:?} block {b} tensor {t} elem {i}: numeric {numeric} analytic {analytic}"
                );
            }
        }
    }

    // A partial mask yields exactly the full gradients on trainable blocks
    // and nothing elsewhere.
    let mask: Vec<bool> = (0..n).map(|i| i == 1 || i == 4).collect();
    let (_, cache) = model.forward_train(&x).unwrap();
    let mut partial = model.zero_grads();
    model.backward(cache, Tensor::from_vec(1, 16, 16, weights.clone()), &mut partial, &mask);
    for b in 0..n {
        for t in 0..partial[b].len() {
            if mask[b] {
                assert_eq!(partial[b][t], grads[b][t]);
            } else {
                assert!(partial[b][t].iter().all(|&g| g == 0.0));
            }
        }
    }
}

#[test]
fn generator_gradients_instance_norm() {
    check_generator(NormKind::Instance);
}

#[test]
fn generator_gradients_without_norm() {
    check_generator(NormKind::None);
}

#[test]
fn discriminator_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = DiscriminatorConfig { num_layers: 2, base_channels: 3, channel_cap: 8, norm: NormKind::Instance };
    let mut model = DiscriminatorModel::<f64>::new(cfg, &mut rng).unwrap();
    for block in model.blocks_mut() {
        for v in block.params[0].iter_mut() {
            *v *= 10.0;
        }
    }
    let x = random_tensor(&mut rng, 1, 8, 8);
    let weights: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |m: &DiscriminatorModel<f64>, x: &Tensor<f64>| -> f64 {
        m.forward(x).unwrap().data.iter().zip(&weights).map(|(a, b)| a * b).sum()
    };
    let (out, caches) = model.forward_train(&x).unwrap();
    assert_eq!((out.height, out.width), (2, 2));
    let mut grads = model.zero_grads();
    let dx = model.backward(caches, Tensor::from_vec(1, 2, 2, weights.clone()), Some(&mut grads));

    let h = 1e-6;
    for i in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[i] += h;
        let mut xm = x.clone();
        xm.data[i] -= h;
        let numeric = (loss(&model, &xp) - loss(&model, &xm)) / (2.0 * h);
        assert!((numeric - dx.data[i]).abs() <= 1e-5 * (1.0 + numeric.abs()), "input {i}");
    }
    for b in 0..model.blocks().len() {
        for t in 0..model.blocks()[b].params.len() {
            let len = model.blocks()[b].params[t].len();
            for &i in &[0, len - 1] {
                let orig = model.blocks()[b].params[t][i];
                model.blocks_mut()[b].params[t][i] = orig + h;
                let up = loss(&model, &x);
                model.blocks_mut()[b].params[t][i] = orig - h;
                let down = loss(&model, &x);
                model.blocks_mut()[b].params[t][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                assert!(
                    (numeric - grads[b][t][i]).abs() <= 1e-5 * (1.0 + numeric.abs()),
                    "block {b} tensor {t}: {numeric} vs {}",
                    grads[b][t][i]
                );
            }
        }
    }
}
