use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use anyhow::{bail, Context as _};
use serde_json::json;
use ssoftmax_core::data::{background_attack, impulse_noise, Dataset, FeatureRanges};
use ssoftmax_core::dgss::{build_static, StaticPreset};
use ssoftmax_core::eval::{curve_points, decline_summary, CurveKind};
use ssoftmax_core::fusion::{additive_fuse, gaussian_fuse};
use ssoftmax_core::gradcheck::{run_suite, SuiteOptions};
use ssoftmax_core::heads::{predict, score_loss, weighted_scores, LossForm};
use ssoftmax_core::train::{evaluate, init_model, Checkpoint, Evaluation, HeadOutputs, Mlp, Trainer};
use ssoftmax_core::{Error, RngState, ScoreMatrix, ScoreTable};

use crate::config::{ExperimentConfig, FusionMethod};
use crate::report::{sample_id, write_json, write_text, HeadKind, SampleScores, ScoreDump};
use crate::GradCheckFailed;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub config_path: Option<PathBuf>,
}

impl Context {
    fn header(&self, command: &str) -> anyhow::Result<serde_json::Value> {
        Ok(json!({
            "command": command,
            "config_hash": self.cfg.hash()?,
            "seed": self.cfg.seed(),
        }))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn load_data(&self, path: &Path) -> anyhow::Result<Dataset> {
        let ds = Dataset::load(path).with_context(|| format!("loading {}", path.display()))?;
        self.cfg.select(ds)
    }
}

fn merge(mut base: serde_json::Value, extra: serde_json::Value) -> serde_json::Value {
    if let (Some(b), serde_json::Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

fn split_summary(ds: &Dataset, file: &str) -> serde_json::Value {
    json!({
        "file": file,
        "samples": ds.len(),
        "dims": ds.dims(),
        "classes": ds.classes(),
        "class_counts": ds.class_counts(),
        "generator": ds.provenance().generator,
    })
}

pub fn gen_data(ctx: &Context) -> anyhow::Result<()> {
    let (train, test) = ctx.cfg.generate()?;
    train.save(&ctx.path("train.ssds"))?;
    test.save(&ctx.path("test.ssds"))?;
    let report = merge(
        ctx.header("gen-data")?,
        json!({
            "dataset": ctx.cfg.dataset,
            "splits": {
                "train": split_summary(&train, "train.ssds"),
                "test": split_summary(&test, "test.ssds"),
            },
        }),
    );
    write_json(&ctx.path("gen_data.json"), &report)?;
    println!(
        "wrote {} train / {} test samples to {}",
        train.len(),
        test.len(),
        ctx.out.display()
    );
    Ok(())
}

fn training_data(ctx: &Context, data: Option<&Path>) -> anyhow::Result<(Dataset, Option<Dataset>)> {
    match data {
        Some(dir) => {
            let train = ctx.load_data(&dir.join("train.ssds"))?;
            let test_path = dir.join("test.ssds");
            let test = if test_path.exists() {
                Some(ctx.load_data(&test_path)?)
            } else {
                None
            };
            Ok((train, test))
        }
        None => {
            let (train, test) = ctx.cfg.generate()?;
            Ok((ctx.cfg.select(train)?, Some(ctx.cfg.select(test)?)))
        }
    }
}

pub fn train(
    ctx: &Context,
    data: Option<&Path>,
    resume: Option<&Path>,
    stop_after: Option<usize>,
) -> anyhow::Result<()> {
    let (train, test) = training_data(ctx, data)?;
    let config_hash = ctx.cfg.hash()?;
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            if ckpt.config_hash != config_hash {
                bail!(Error::param(
                    "resume",
                    format!(
                        "checkpoint was written under config {} but this run is {config_hash}",
                        ckpt.config_hash
                    )
                ));
            }
            ckpt.into_trainer()?
        }
        None => {
            let spec = ctx.cfg.model_spec(&train)?;
            let mut rng = RngState::derive(ctx.cfg.seed(), &[0x696e_6974]);
            Trainer::new(init_model(&spec, &mut rng)?, ctx.cfg.train.clone())?
        }
    };
    let start_epoch = trainer.epoch;
    let start = Instant::now();
    let log = trainer.train_until(&train, test.as_ref(), stop_after.unwrap_or(usize::MAX))?;
    let wall = start.elapsed().as_secs_f64();

    Checkpoint::from_trainer(&trainer, config_hash).save(&ctx.path("model.ssck"))?;
    let report = merge(
        ctx.header("train")?,
        json!({
            "model": trainer.model.spec(),
            "train": ctx.cfg.train,
            "start_epoch": start_epoch,
            "epochs_completed": trainer.epoch,
            "log": log,
        }),
    );
    write_json(&ctx.path("train_log.json"), &report)?;
    // Wall time lives in its own file so the log stays reproducible.
    write_json(
        &ctx.path("timing.json"),
        &json!({ "command": "train", "wall_seconds": wall }),
    )?;
    for e in &log.epochs {
        match e.eval_accuracy {
            Some(a) => println!(
                "epoch {:3}  lr {:.0e}  loss {:.6}  train {:.4}  eval {:.4}",
                e.epoch, e.lr, e.loss, e.train_accuracy, a
            ),
            None => println!(
                "epoch {:3}  lr {:.0e}  loss {:.6}  train {:.4}",
                e.epoch, e.lr, e.loss, e.train_accuracy
            ),
        }
    }
    Ok(())
}

/// Runs `train` once per seed in child processes, `jobs` at a time.
pub fn fan_out(
    ctx: &Context,
    seeds: &[u64],
    jobs: usize,
    data: Option<&Path>,
    stop_after: Option<usize>,
) -> anyhow::Result<()> {
    let exe = std::env::current_exe()?;
    let mut failed = Vec::new();
    for chunk in seeds.chunks(jobs.max(1)) {
        let mut children = Vec::new();
        for &seed in chunk {
            let mut cmd = Command::new(&exe);
            cmd.arg("train")
                .arg("--seed")
                .arg(seed.to_string())
                .arg("--out")
                .arg(ctx.out.join(format!("seed-{seed}")));
            if let Some(c) = &ctx.config_path {
                cmd.arg("--config").arg(c);
            }
            if let Some(d) = data {
                cmd.arg("--data").arg(d);
            }
            if let Some(n) = stop_after {
                cmd.arg("--stop-after").arg(n.to_string());
            }
            children.push((seed, cmd.spawn()?));
        }
        for (seed, mut child) in children {
            if !child.wait()?.success() {
                failed.push(seed);
            }
        }
    }
    if !failed.is_empty() {
        bail!("training failed for seeds {failed:?}");
    }
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<(Checkpoint, Mlp)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let model = ckpt.model()?;
    Ok((ckpt, model))
}

fn score_dump(ctx: &Context, ev: &Evaluation, labels: &[usize], classes: usize) -> anyhow::Result<ScoreDump> {
    let (head, levels, rows): (HeadKind, Option<usize>, Vec<Vec<Vec<f64>>>) = match &ev.outputs {
        HeadOutputs::Probabilities(p) => (HeadKind::Softmax, None, p.iter().map(|r| vec![r.clone()]).collect()),
        HeadOutputs::ScoreMatrices(m) => (
            HeadKind::ScoreSoftmax,
            m.first().map(|s| s.levels()),
            m.iter().map(|s| s.rows().map(<[f64]>::to_vec).collect()).collect(),
        ),
    };
    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(k, scores)| {
            (
                sample_id(k),
                SampleScores {
                    label: labels[k],
                    prediction: ev.predictions[k],
                    scores,
                },
            )
        })
        .collect();
    Ok(ScoreDump {
        command: "eval".into(),
        config_hash: ctx.cfg.hash()?,
        seed: ctx.cfg.seed(),
        head,
        classes,
        levels,
        samples,
    })
}

fn curves_csv(ev: &Evaluation, labels: &[usize], classes: usize) -> String {
    let mut out = String::from("kind,class,x,y\n");
    for (kind, name) in [(CurveKind::Roc, "roc"), (CurveKind::Pr, "pr")] {
        for c in 0..classes {
            let scores: Vec<f64> = ev.class_scores.iter().map(|s| s[c]).collect();
            if let Ok(points) = curve_points(kind, &scores, labels, c) {
                for (x, y) in points {
                    out.push_str(&format!("{name},{c},{x},{y}\n"));
                }
            }
        }
    }
    out
}

pub fn eval(ctx: &Context, model_path: &Path, data_path: &Path) -> anyhow::Result<()> {
    let (ckpt, model) = load_model(model_path)?;
    let ds = ctx.load_data(data_path)?;
    let ev = evaluate(&model, &ds)?;
    let classes = model.spec().head.classes();

    // Distance to the fixed Gaussian target, in both loss forms.
    let score_losses = match &ev.outputs {
        HeadOutputs::ScoreMatrices(m) => {
            let (mut sq, mut fro) = (0.0, 0.0);
            for (s, &y) in m.iter().zip(ds.labels()) {
                let target = build_static(y, StaticPreset::Y2, s.classes(), s.levels())?;
                sq += score_loss(&target, s, LossForm::Squared)?;
                fro += score_loss(&target, s, LossForm::Frobenius)?;
            }
            let k = m.len() as f64;
            Some(json!({ "target": "Y2", "squared": sq / k, "frobenius": fro / k }))
        }
        HeadOutputs::Probabilities(_) => None,
    };
    let report = merge(
        ctx.header("eval")?,
        json!({
            "checkpoint": {
                "config_hash": ckpt.config_hash,
                "epoch": ckpt.epoch,
                "seed": ckpt.seed,
            },
            "data": {
                "generator": ds.provenance().generator,
                "samples": ds.len(),
            },
            "metrics": ev.metrics,
            "score_loss": score_losses,
        }),
    );
    write_json(&ctx.path("eval_report.json"), &report)?;
    write_text(&ctx.path("confusion.csv"), &ev.metrics.confusion_csv())?;
    write_text(&ctx.path("curves.csv"), &curves_csv(&ev, ds.labels(), classes))?;
    write_json(&ctx.path("scores.json"), &score_dump(ctx, &ev, ds.labels(), classes)?)?;
    println!("top-1 accuracy {:.4} on {} samples", ev.metrics.top1, ds.len());
    Ok(())
}

pub fn attack(
    ctx: &Context,
    model_path: &Path,
    data_path: &Path,
    reference: Option<&Path>,
    p: Vec<f64>,
    token: Option<usize>,
) -> anyhow::Result<()> {
    let (_, model) = load_model(model_path)?;
    let ds = ctx.load_data(data_path)?;
    let ranges = match reference {
        Some(r) => FeatureRanges::of(&ctx.load_data(r)?),
        None => FeatureRanges::of(&ds),
    };
    let ps = if p.is_empty() {
        ctx.cfg.attack.impulse_p.clone()
    } else {
        p
    };
    let token = token.or(ctx.cfg.attack.background_token);

    let clean = evaluate(&model, &ds)?.metrics.top1;
    let mut attacked = Vec::new();
    for (i, &prob) in ps.iter().enumerate() {
        let mut rng = RngState::derive(ctx.cfg.seed(), &[0x696d_7075, i as u64]);
        let noisy = impulse_noise(&ds, prob, &ranges, &mut rng)?;
        attacked.push((prob, evaluate(&model, &noisy)?.metrics.top1));
    }
    let impulse = decline_summary(clean, &attacked);
    for w in &impulse.warnings {
        eprintln!("warning: {w}");
    }
    let background = match token {
        Some(t) => {
            let ev = evaluate(&model, &background_attack(&ds, t)?)?;
            let to_token = ev.predictions.iter().filter(|&&p| p == t).count() as f64 / ds.len() as f64;
            Some(json!({
                "token": t,
                "accuracy": ev.metrics.top1,
                "decline": clean - ev.metrics.top1,
                "predicted_token_rate": to_token,
            }))
        }
        None => None,
    };
    let report = merge(
        ctx.header("attack")?,
        json!({ "impulse": impulse, "background": background }),
    );
    write_json(&ctx.path("attack_report.json"), &report)?;
    println!("clean {clean:.4}");
    for row in &impulse.rows {
        println!(
            "impulse p={}  accuracy {:.4}  decline {:.4}",
            row.p, row.accuracy, row.decline
        );
    }
    Ok(())
}

pub fn fuse(
    ctx: &Context,
    inputs: &[PathBuf],
    method: Option<FusionMethod>,
    target_g: Option<usize>,
) -> anyhow::Result<()> {
    if inputs.len() < 2 {
        bail!(Error::Fusion("need at least two score files".into()));
    }
    let method = method.unwrap_or(ctx.cfg.fusion.method);
    let mut fcfg = ctx.cfg.fusion.fusion_config();
    if target_g.is_some() {
        fcfg.target_g = target_g;
    }
    fcfg.validate()?;

    let dumps: Vec<ScoreDump> = inputs
        .iter()
        .map(|p| ScoreDump::load(p))
        .collect::<anyhow::Result<_>>()?;
    let mats: Vec<BTreeMap<String, ScoreMatrix>> =
        dumps.iter().map(ScoreDump::matrices).collect::<anyhow::Result<_>>()?;
    let first = &dumps[0];
    for (d, path) in dumps.iter().zip(inputs).skip(1) {
        if d.classes != first.classes {
            bail!(Error::Fusion(format!(
                "{} has {} classes, expected {}",
                path.display(),
                d.classes,
                first.classes
            )));
        }
        if !d.samples.keys().eq(first.samples.keys()) {
            bail!(Error::Fusion(format!(
                "{} covers a different sample set",
                path.display()
            )));
        }
        if d.samples
            .iter()
            .zip(&first.samples)
            .any(|((_, a), (_, b))| a.label != b.label)
        {
            bail!(Error::Fusion(format!("{} disagrees on labels", path.display())));
        }
    }

    let mut correct = 0usize;
    for (id, s) in &first.samples {
        let channel: Vec<ScoreMatrix> = mats.iter().map(|m| m[id].clone()).collect();
        let fused = match method {
            FusionMethod::Gaussian => gaussian_fuse(&channel, &fcfg)?,
            FusionMethod::Additive => additive_fuse(&channel)?,
        };
        let table = ScoreTable::new(fused.levels())?;
        if predict(&weighted_scores(&fused, &table)?)? == s.label {
            correct += 1;
        }
    }
    let fused_accuracy = correct as f64 / first.samples.len() as f64;
    let branches: Vec<_> = dumps
        .iter()
        .zip(inputs)
        .map(|(d, p)| json!({ "input": p, "accuracy": d.accuracy(), "levels": d.levels, "config_hash": d.config_hash }))
        .collect();
    let report = merge(
        ctx.header("fuse")?,
        json!({
            "method": method,
            "fusion": fcfg,
            "samples": first.samples.len(),
            "branches": branches,
            "fused_accuracy": fused_accuracy,
        }),
    );
    write_json(&ctx.path("fuse_report.json"), &report)?;
    for (d, p) in dumps.iter().zip(inputs) {
        println!("branch {}  accuracy {:.4}", p.display(), d.accuracy());
    }
    println!("fused ({method:?})  accuracy {fused_accuracy:.4}");
    Ok(())
}

pub fn grad_check(ctx: &Context, instances: usize, negative_control: bool) -> anyhow::Result<()> {
    let opts = SuiteOptions {
        instances,
        seed: ctx.cfg.seed(),
        corrupt_relu: negative_control,
        ..Default::default()
    };
    let suite = run_suite(&opts)?;
    for c in &suite.checks {
        println!(
            "{} {:<40} max rel. error {:.3e} over {} instances",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.max_error,
            c.instances
        );
    }
    let report = merge(ctx.header("grad-check")?, json!({ "options": opts, "suite": suite }));
    write_json(&ctx.path("grad_check.json"), &report)?;
    if !suite.passed {
        let failed: Vec<_> = suite
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        bail!(GradCheckFailed(failed.join(", ")));
    }
    Ok(())
}
