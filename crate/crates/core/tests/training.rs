use ssoftmax_core::data::{gen_noise_trap, Dataset, NoiseTrapSpec};
use ssoftmax_core::dgss::{build_supervision, DgssConfig};
use ssoftmax_core::heads::{cross_entropy, score_loss, LossForm};
use ssoftmax_core::train::{
    evaluate, init_model, train, Checkpoint, HeadOutputs, HeadSpec, HeadTarget, Mlp, ModelSpec, TrainConfig, Trainer,
};
use ssoftmax_core::{Error, RngState, SupervisionMatrix};

fn dataset(dims: usize, classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Dataset {
    Dataset::new(dims, classes, features, labels, Default::default(), Default::default()).unwrap()
}

/// Two classes split on the first feature with a margin of 4; the second
/// feature is noise.
fn separable(m: usize, seed: u64) -> Dataset {
    let mut rng = RngState::new(seed);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for k in 0..m {
        let y = k % 2;
        let sign = if y == 0 { -1.0 } else { 1.0 };
        let a = sign * (2.0 + 0.5 * rng.normal().abs());
        let b = rng.normal();
        features.extend([a, b]);
        labels.push(y);
    }
    dataset(2, 2, features, labels)
}

fn small_model(input: usize, head: HeadSpec, seed: u64) -> Mlp {
    let spec = ModelSpec {
        input_dim: input,
        hidden: vec![16, 8],
        head,
        activation: Default::default(),
    };
    init_model(&spec, &mut RngState::new(seed)).unwrap()
}

fn dgss(n: usize, g: usize) -> HeadTarget {
    HeadTarget::Dgss(DgssConfig::defaults(n, g).unwrap())
}

fn heads(n: usize) -> [(HeadSpec, HeadTarget); 2] {
    [
        (HeadSpec::Softmax { classes: n }, HeadTarget::OneHot),
        (HeadSpec::ScoreSoftmax { classes: n, levels: 5 }, dgss(n, 5)),
    ]
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let data = separable(40, 1);
    for (head, target) in heads(2) {
        let mut model = small_model(2, head, 3);
        let before = model.clone();
        let cfg = TrainConfig {
            epochs: 0,
            head_target: target,
            ..Default::default()
        };
        let log = train(&mut model, &data, &cfg).unwrap();
        assert_eq!(model, before);
        assert!(log.epochs.is_empty() && log.batch_losses.is_empty());
    }
}

#[test]
fn separable_toy_is_fit_by_both_heads() {
    let data = separable(1000, 2);
    for (head, target) in heads(2) {
        let mut model = small_model(2, head, 4);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 16,
            head_target: target,
            ..Default::default()
        };
        train(&mut model, &data, &cfg).unwrap();
        let acc = evaluate(&model, &data).unwrap().metrics.top1;
        assert_eq!(acc, 1.0, "{head:?}");
    }
}

#[test]
fn same_seed_same_final_loss() {
    let data = separable(100, 5);
    for (head, target) in heads(2) {
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 10,
            head_target: target,
            ..Default::default()
        };
        let mut a = small_model(2, head, 6);
        let mut b = a.clone();
        let la = train(&mut a, &data, &cfg).unwrap();
        let lb = train(&mut b, &data, &cfg).unwrap();
        let bits = |l: &[f64]| l.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&la.batch_losses), bits(&lb.batch_losses));
        assert_eq!(a, b);
    }
}

#[test]
fn fixed_batch_loss_decreases_for_ten_steps() {
    let splits = gen_noise_trap(&NoiseTrapSpec {
        train_samples: 128,
        test_samples: 10,
        ..Default::default()
    })
    .unwrap();
    let data = splits.train;
    let n = data.classes();
    for (head, target) in heads(n) {
        let model = init_model(&ModelSpec::mlp(data.dims(), head), &mut RngState::new(7)).unwrap();
        let cfg = TrainConfig {
            batch_size: data.len(),
            jitter: 0.0,
            lr_decay_epochs: vec![],
            head_target: target.clone(),
            ..Default::default()
        };
        // DGSS targets move every step; measure against one fixed draw.
        let fixed: Vec<SupervisionMatrix> = match &target {
            HeadTarget::Dgss(c) => {
                let mut rng = RngState::new(99);
                data.labels()
                    .iter()
                    .map(|&y| build_supervision(y, c, &mut rng).unwrap())
                    .collect()
            }
            _ => vec![],
        };
        let loss = |m: &Mlp| -> f64 {
            let ev = evaluate(m, &data).unwrap();
            let total: f64 = match &ev.outputs {
                HeadOutputs::Probabilities(p) => p
                    .iter()
                    .zip(data.labels())
                    .map(|(r, &y)| cross_entropy(r, y).unwrap())
                    .sum(),
                HeadOutputs::ScoreMatrices(s) => s
                    .iter()
                    .zip(&fixed)
                    .map(|(s, y)| score_loss(y, s, LossForm::Squared).unwrap())
                    .sum(),
            };
            total / data.len() as f64
        };
        let mut t = Trainer::new(model, cfg).unwrap();
        let mut prev = loss(&t.model);
        for step in 0..10 {
            t.run_epoch(&data).unwrap();
            let now = loss(&t.model);
            assert!(now < prev, "{head:?} step {step}: {now} >= {prev}");
            prev = now;
        }
    }
}

#[test]
fn dgss_loss_ema_is_non_increasing_across_epochs() {
    let splits = gen_noise_trap(&NoiseTrapSpec {
        train_samples: 1000,
        test_samples: 10,
        ..Default::default()
    })
    .unwrap();
    let data = splits.train;
    let model = init_model(
        &ModelSpec::mlp(data.dims(), HeadSpec::ScoreSoftmax { classes: 10, levels: 5 }),
        &mut RngState::new(8),
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 15,
        head_target: dgss(10, 5),
        ..Default::default()
    };
    let mut t = Trainer::new(model, cfg).unwrap();
    let log = t.train(&data, None).unwrap();
    // EMA of the per-epoch training loss, span 10.
    let alpha = 2.0 / 11.0;
    let mut ema = log.epochs[0].loss;
    let mut at_epoch_end = vec![ema];
    for e in &log.epochs[1..] {
        ema = alpha * e.loss + (1.0 - alpha) * ema;
        at_epoch_end.push(ema);
    }
    for w in at_epoch_end.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{at_epoch_end:?}");
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = separable(120, 9);
    let dir = tempfile::tempdir().unwrap();
    for (k, (head, target)) in heads(2).into_iter().enumerate() {
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 16,
            head_target: target,
            ..Default::default()
        };
        let model = small_model(2, head, 10);

        let mut straight = Trainer::new(model.clone(), cfg.clone()).unwrap();
        let full = straight.train(&data, None).unwrap();

        let mut first = Trainer::new(model, cfg).unwrap();
        let head_log = first.train_until(&data, None, 2).unwrap();
        let path = dir.path().join(format!("ck{k}.ssck"));
        Checkpoint::from_trainer(&first, "hash").save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, Checkpoint::from_trainer(&first, "hash"));
        let mut second = loaded.into_trainer().unwrap();
        let tail_log = second.train(&data, None).unwrap();

        let mut resumed: Vec<u64> = head_log.batch_losses.iter().map(|x| x.to_bits()).collect();
        resumed.extend(tail_log.batch_losses.iter().map(|x| x.to_bits()));
        let straight_bits: Vec<u64> = full.batch_losses.iter().map(|x| x.to_bits()).collect();
        assert_eq!(resumed, straight_bits);
        assert_eq!(second.model, straight.model);
        assert_eq!(second.optim, straight.optim);
    }
}

#[test]
fn evaluate_is_pure_and_survives_checkpoint() {
    let data = separable(50, 11);
    let model = small_model(2, HeadSpec::ScoreSoftmax { classes: 2, levels: 4 }, 12);
    let t = Trainer::new(
        model.clone(),
        TrainConfig {
            head_target: dgss(2, 4),
            ..Default::default()
        },
    )
    .unwrap();
    let a = evaluate(&model, &data).unwrap();
    let b = evaluate(&model, &data).unwrap();
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ssck");
    Checkpoint::from_trainer(&t, "h").save(&path).unwrap();
    let reloaded = Checkpoint::load(&path).unwrap().model().unwrap();
    assert_eq!(evaluate(&reloaded, &data).unwrap(), a);
}

#[test]
fn constant_model_scores_one_over_n() {
    let n = 4;
    let features: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
    let labels: Vec<usize> = (0..20).map(|k| k % n).collect();
    let data = dataset(2, n, features, labels);
    let mut model = small_model(2, HeadSpec::Softmax { classes: n }, 1);
    for p in model.params_mut() {
        p.data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    assert_eq!(evaluate(&model, &data).unwrap().metrics.top1, 1.0 / n as f64);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let data = separable(10, 1);
    let model = small_model(3, HeadSpec::Softmax { classes: 2 }, 1);
    assert!(evaluate(&model, &data).is_err());
}

#[test]
fn divergence_aborts_with_coordinates() {
    let data = separable(40, 1);
    let model = small_model(2, HeadSpec::Softmax { classes: 2 }, 1);
    let cfg = TrainConfig {
        lr: 1e305,
        epochs: 5,
        batch_size: 8,
        ..Default::default()
    };
    let mut t = Trainer::new(model, cfg).unwrap();
    let err = t.train(&data, None).unwrap_err();
    assert!(matches!(err, Error::NumericalAbort(_)), "{err}");
    let msg = err.to_string();
    assert!(msg.contains("epoch") && msg.contains("batch"), "{msg}");
}

#[test]
fn config_validation() {
    let model = small_model(2, HeadSpec::Softmax { classes: 2 }, 1);
    for cfg in [
        TrainConfig {
            lr: 0.0,
            ..Default::default()
        },
        TrainConfig {
            beta1: 1.0,
            ..Default::default()
        },
        TrainConfig {
            batch_size: 0,
            ..Default::default()
        },
    ] {
        assert!(Trainer::new(model.clone(), cfg).is_err());
    }
}
