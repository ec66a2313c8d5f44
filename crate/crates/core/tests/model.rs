use gesturekit::audio::FeatureMatrix;
use gesturekit::model::{evaluate_mse, train, Checkpoint, ModelConfig, Network, Sample, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples(n: usize, dim: usize, frames: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    (0..n)
        .map(|i| {
            let rows: Vec<Vec<f64>> = (0..frames).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let mean: f64 = rows.iter().map(|r| r[0]).sum::<f64>() / frames as f64;
            Sample {
                stroke_id: format!("s{i}"),
                features: FeatureMatrix::from_rows(format!("c{i}"), names.clone(), &rows).unwrap(),
                target: [0.5 + 0.4 * mean, 0.5 - 0.4 * mean],
            }
        })
        .collect()
}

fn small(dim: usize) -> ModelConfig {
    ModelConfig {
        ff_size: 8,
        hidden_size: 8,
        epochs: 3,
        batch_size: 4,
        seed: 11,
        ..ModelConfig::new(dim)
    }
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let cfg = ModelConfig { epochs: 0, ..small(3) };
    let data = samples(6, 3, 12, 1);
    let out = train(&cfg, &data, &data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Network::new(cfg.clone(), Weights::init(&cfg, &mut rng));
    assert_eq!(out.best_epoch, 0);
    assert_eq!(out.log.len(), 1);
    assert_eq!(out.network.weights, init.weights);
    assert_eq!(out.log[0].validation_mse, evaluate_mse(&init, &data).unwrap());
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let cfg = small(3);
    let data = samples(10, 3, 15, 2);
    let a = train(&cfg, &data[..8], &data[8..]).unwrap();
    let b = train(&cfg, &data[..8], &data[8..]).unwrap();
    assert_eq!(
        Checkpoint::from_network(&a.network, a.best_epoch).to_json(),
        Checkpoint::from_network(&b.network, b.best_epoch).to_json()
    );
    let c = train(&ModelConfig { seed: 12, ..cfg }, &data[..8], &data[8..]).unwrap();
    assert_ne!(a.network.weights, c.network.weights);
}

#[test]
fn overfits_a_single_sample() {
    let cfg = ModelConfig {
        input_dropout: 0.0,
        output_dropout: 0.0,
        learning_rate: 1e-2,
        epochs: 300,
        batch_size: 1,
        ..small(4)
    };
    let data = samples(1, 4, 20, 3);
    let out = train(&cfg, &data, &data).unwrap();
    let first = out.log[0].validation_mse;
    let best = out.log[out.best_epoch].validation_mse;
    assert!(best < 1e-4, "initial {first}, best {best}");
}

#[test]
fn empty_sets_are_rejected() {
    let data = samples(2, 3, 5, 4);
    assert!(train(&small(3), &[], &data).is_err());
    assert!(train(&small(3), &data, &[]).is_err());
}
