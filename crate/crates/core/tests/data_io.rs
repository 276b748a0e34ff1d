use std::path::Path;

use ssoftmax_core::data::{
    background_attack, gen_noise_trap, gen_two_view, impulse_noise, load_idx, split, Dataset, FeatureRanges,
    NoiseTrapSpec, TwoViewSpec,
};
use ssoftmax_core::error::IdxError;
use ssoftmax_core::train::{evaluate, init_model, train, HeadSpec, ModelSpec, TrainConfig};
use ssoftmax_core::{Error, RngState};

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = 0x0000_0803u32.to_be_bytes().to_vec();
    for d in [n, rows, cols] {
        b.extend(d.to_be_bytes());
    }
    b.extend(pixels);
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = 0x0000_0801u32.to_be_bytes().to_vec();
    b.extend((labels.len() as u32).to_be_bytes());
    b.extend(labels);
    b
}

fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
    let (i, l) = (dir.join("images.idx"), dir.join("labels.idx"));
    std::fs::write(&i, images).unwrap();
    std::fs::write(&l, labels).unwrap();
    (i, l)
}

#[test]
fn idx_fixture_loads() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..4 * 2 * 3).map(|k| if k == 5 { 255 } else { k as u8 }).collect();
    let (i, l) = write_pair(dir.path(), &idx_images(4, 2, 3, &pixels), &idx_labels(&[3, 0, 1, 3]));
    let ds = load_idx(&i, &l).unwrap();
    assert_eq!((ds.len(), ds.dims(), ds.classes()), (4, 6, 4));
    assert_eq!(ds.labels(), &[3, 0, 1, 3]);
    assert_eq!(ds.sample(0)[5], 1.0);
    assert_eq!(ds.sample(1)[0], 6.0 / 255.0);
    assert!(ds.features().iter().all(|x| (0.0..=1.0).contains(x)));
}

#[test]
fn idx_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let images = idx_images(2, 1, 2, &[1, 2, 3, 4]);

    let mut bad = idx_labels(&[0, 1]);
    bad[3] = 0x02;
    let (i, l) = write_pair(dir.path(), &images, &bad);
    assert!(matches!(
        load_idx(&i, &l),
        Err(Error::Idx(IdxError::BadMagic { found: 0x0802, .. }))
    ));

    let (i, l) = write_pair(dir.path(), &images[..images.len() - 1], &idx_labels(&[0, 1]));
    assert!(matches!(load_idx(&i, &l), Err(Error::Idx(IdxError::Truncated { .. }))));

    let (i, l) = write_pair(dir.path(), &images, &idx_labels(&[0, 1, 1]));
    assert!(matches!(
        load_idx(&i, &l),
        Err(Error::Idx(IdxError::CountMismatch { images: 2, labels: 3 }))
    ));
}

#[test]
fn generators_are_bitwise_reproducible() {
    let spec = NoiseTrapSpec {
        train_samples: 300,
        test_samples: 100,
        seed: 5,
        ..Default::default()
    };
    assert_eq!(gen_noise_trap(&spec).unwrap(), gen_noise_trap(&spec).unwrap());
    let other = gen_noise_trap(&NoiseTrapSpec { seed: 6, ..spec }).unwrap();
    assert_ne!(other.train.features(), gen_noise_trap(&spec).unwrap().train.features());
    let tv = TwoViewSpec::default();
    assert_eq!(gen_two_view(&tv).unwrap(), gen_two_view(&tv).unwrap());
}

#[test]
fn noise_trap_needs_prototype_capacity() {
    let spec = NoiseTrapSpec {
        signal_dims: 8,
        ..Default::default()
    };
    assert!(gen_noise_trap(&spec).is_err());
}

#[test]
fn labels_are_balanced_at_ten_thousand() {
    let spec = NoiseTrapSpec {
        train_samples: 10_000,
        test_samples: 10_000,
        signal_dims: 16,
        background_dims: 16,
        ..Default::default()
    };
    let splits = gen_noise_trap(&spec).unwrap();
    for ds in [&splits.train, &splits.test] {
        for c in ds.class_counts() {
            assert!((c as f64 - 1000.0).abs() <= 20.0, "{c}");
        }
    }
}

fn probe_accuracy(train_set: &Dataset, eval_sets: &[&Dataset]) -> Vec<f64> {
    let spec = ModelSpec {
        hidden: vec![],
        ..ModelSpec::mlp(
            train_set.dims(),
            HeadSpec::Softmax {
                classes: train_set.classes(),
            },
        )
    };
    let mut probe = init_model(&spec, &mut RngState::new(1)).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        lr_decay_epochs: vec![],
        ..Default::default()
    };
    train(&mut probe, train_set, &cfg).unwrap();
    eval_sets
        .iter()
        .map(|d| evaluate(&probe, d).unwrap().metrics.top1)
        .collect()
}

#[test]
fn background_probe_certifies_the_trap() {
    let splits = gen_noise_trap(&NoiseTrapSpec::default()).unwrap();
    let train_bg = splits.train.select_block("background").unwrap();
    let test_bg = splits.test.select_block("background").unwrap();
    let acc = probe_accuracy(&train_bg, &[&train_bg, &test_bg]);
    assert!(acc[0] >= 0.90, "train {}", acc[0]);
    assert!(acc[1] <= 0.20, "test {}", acc[1]);

    // A fixed token drives the probe to that token's class everywhere.
    let attacked = background_attack(&splits.test, 4)
        .unwrap()
        .select_block("background")
        .unwrap();
    let spec = ModelSpec {
        hidden: vec![],
        ..ModelSpec::mlp(train_bg.dims(), HeadSpec::Softmax { classes: 10 })
    };
    let mut probe = init_model(&spec, &mut RngState::new(1)).unwrap();
    train(
        &mut probe,
        &train_bg,
        &TrainConfig {
            epochs: 10,
            lr_decay_epochs: vec![],
            ..Default::default()
        },
    )
    .unwrap();
    assert!(evaluate(&probe, &attacked).unwrap().predictions.iter().all(|&p| p == 4));
}

#[test]
fn uninformative_background_gives_no_trap() {
    let spec = NoiseTrapSpec {
        rho_train: 0.1,
        rho_test: 0.1,
        ..Default::default()
    };
    let splits = gen_noise_trap(&spec).unwrap();
    let acc = probe_accuracy(
        &splits.train.select_block("background").unwrap(),
        &[&splits.test.select_block("background").unwrap()],
    );
    assert!(acc[0] <= 0.2, "{}", acc[0]);
}

#[test]
fn impulse_noise_keeps_labels_and_shape() {
    let splits = gen_noise_trap(&NoiseTrapSpec {
        train_samples: 500,
        test_samples: 200,
        ..Default::default()
    })
    .unwrap();
    let ranges = FeatureRanges::of(&splits.train);
    let original = splits.test.clone();
    let mut rng = RngState::new(3);
    let noisy = impulse_noise(&splits.test, 0.3, &ranges, &mut rng).unwrap();
    assert_eq!(splits.test, original);
    assert_eq!(noisy.labels(), original.labels());
    assert_eq!((noisy.len(), noisy.dims()), (original.len(), original.dims()));

    assert_eq!(
        impulse_noise(&original, 0.0, &ranges, &mut rng).unwrap().features(),
        original.features()
    );
    let full = impulse_noise(&original, 1.0, &ranges, &mut rng).unwrap();
    for k in 0..full.len() {
        for (d, &v) in full.sample(k).iter().enumerate() {
            assert!(v == ranges.min[d] || v == ranges.max[d]);
        }
    }
}

#[test]
fn impulse_rate_concentrates() {
    let (m, d) = (10_000, 100);
    let mut rng = RngState::new(4);
    let features: Vec<f64> = (0..m * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let labels = (0..m).map(|k| k % 2).collect();
    let ds = Dataset::new(d, 2, features, labels, Default::default(), Default::default()).unwrap();
    // Extremes outside the data, so every replaced cell differs.
    let ranges = FeatureRanges {
        min: vec![-5.0; d],
        max: vec![5.0; d],
    };
    let noisy = impulse_noise(&ds, 0.2, &ranges, &mut RngState::new(11)).unwrap();
    let changed = noisy
        .features()
        .iter()
        .zip(ds.features())
        .filter(|(a, b)| a != b)
        .count();
    let rate = changed as f64 / (m * d) as f64;
    assert!((rate - 0.2).abs() <= 0.01, "{rate}");
}

#[test]
fn background_attack_is_idempotent_and_checked() {
    let splits = gen_noise_trap(&NoiseTrapSpec {
        train_samples: 50,
        test_samples: 50,
        ..Default::default()
    })
    .unwrap();
    let once = background_attack(&splits.test, 2).unwrap();
    assert_eq!(background_attack(&once, 2).unwrap(), once);
    assert_eq!(once.labels(), splits.test.labels());
    assert!(background_attack(&splits.test, 10).is_err());
    let signal_only = splits.test.select_block("signal").unwrap();
    assert!(background_attack(&signal_only, 0).is_err());
}

#[test]
fn split_examples() {
    let splits = gen_noise_trap(&NoiseTrapSpec {
        train_samples: 10,
        test_samples: 10,
        ..Default::default()
    })
    .unwrap();
    let ds = &splits.train;
    let halves = split(ds, &[0.5, 0.5], 9).unwrap();
    assert_eq!((halves[0].len(), halves[1].len()), (5, 5));
    for a in 0..5 {
        for b in 0..5 {
            assert_ne!(halves[0].sample(a), halves[1].sample(b));
        }
    }
    assert_eq!(split(ds, &[0.5, 0.5], 9).unwrap(), halves);
    let whole = split(ds, &[1.0], 9).unwrap().remove(0);
    assert_eq!(whole.len(), ds.len());
    let mut a = whole.labels().to_vec();
    let mut b = ds.labels().to_vec();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    assert!(split(ds, &[0.7, 0.4], 9).is_err());
}

#[test]
fn container_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let splits = gen_two_view(&TwoViewSpec::default()).unwrap();
    let path = dir.path().join("t.ssds");
    splits.train.save(&path).unwrap();
    assert_eq!(Dataset::load(&path).unwrap(), splits.train);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(Dataset::load(&path).is_err());
}
