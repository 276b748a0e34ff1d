use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ssoftmax_core::data::{gen_noise_trap, NoiseTrapSpec};
use ssoftmax_core::dgss::build_supervision;
use ssoftmax_core::fusion::{gaussian_fuse, FusionConfig};
use ssoftmax_core::heads::grouped_softmax;
use ssoftmax_core::train::{init_model, HeadSpec, HeadTarget, ModelSpec, TrainConfig, Trainer};
use ssoftmax_core::{DgssConfig, RngState, ScoreMatrix, Tensor};

fn random(shape: &[usize], rng: &mut RngState) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn kernels(c: &mut Criterion) {
    let mut rng = RngState::new(0);

    let a = random(&[64, 256], &mut rng);
    let b = random(&[256, 64], &mut rng);
    c.bench_function("matmul 64x256x64", |bch| {
        bch.iter(|| black_box(&a).matmul(black_box(&b)).unwrap())
    });

    let logits = random(&[10, 20], &mut rng);
    c.bench_function("grouped_softmax 10x20", |bch| {
        bch.iter(|| grouped_softmax(black_box(&logits)).unwrap())
    });

    let cfg = DgssConfig::defaults(10, 5).unwrap();
    c.bench_function("build_supervision N=10 G=5", |bch| {
        let mut r = RngState::new(1);
        bch.iter(|| build_supervision(3, &cfg, &mut r).unwrap())
    });

    let mats: Vec<ScoreMatrix> = [5, 10, 20]
        .iter()
        .map(|&g| grouped_softmax(&random(&[10, g], &mut rng)).unwrap())
        .collect();
    let fcfg = FusionConfig::default();
    c.bench_function("gaussian_fuse G=5,10,20", |bch| {
        bch.iter(|| gaussian_fuse(black_box(&mats), &fcfg).unwrap())
    });
}

fn train_step(c: &mut Criterion) {
    let data = gen_noise_trap(&NoiseTrapSpec {
        train_samples: 64,
        test_samples: 1,
        ..Default::default()
    })
    .unwrap()
    .train;
    let spec = ModelSpec::mlp(data.dims(), HeadSpec::ScoreSoftmax { classes: 10, levels: 5 });
    let model = init_model(&spec, &mut RngState::new(2)).unwrap();
    let cfg = TrainConfig {
        head_target: HeadTarget::Dgss(DgssConfig::defaults(10, 5).unwrap()),
        ..Default::default()
    };
    // One epoch over 64 samples is one batch at the default batch size.
    c.bench_function("train step batch=64 dgss", |bch| {
        bch.iter_batched(
            || Trainer::new(model.clone(), cfg.clone()).unwrap(),
            |mut t| t.run_epoch(&data).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, kernels, train_step);
criterion_main!(benches);
