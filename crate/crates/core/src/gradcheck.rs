//! Finite-difference gradient suite over every differentiable path.

use serde::{Deserialize, Serialize};

use crate::dgss::{build_supervision, DgssConfig};
use crate::error::Result;
use crate::heads::{cross_entropy_var, grouped_softmax_var, score_loss_var, smooth_labels, LossForm};
use crate::rng::RngState;
use crate::tensor::{grad_check, ReduceOp, Tape, Tensor, UnaryOp, Var};
use crate::train::{forward_layers, init_model, HeadSpec, ModelSpec};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub instances: usize,
    pub eps: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Replaces relu with a version whose backward ignores the mask.
    /// Only useful as a negative control.
    pub corrupt_relu: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            instances: 100,
            eps: 1e-5,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
            corrupt_relu: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub max_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub eps: f64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

fn random(rng: &mut RngState, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).expect("finite")
}

// Reduces `v` to a scalar through a fixed random weighting so that every
// output coordinate carries a distinct upstream gradient.
fn project(tape: &mut Tape, v: Var, w: &Tensor) -> Result<Var> {
    let w = tape.leaf(w.clone());
    let p = tape.mul(v, w)?;
    tape.sum_all(p)
}

fn relu_act(corrupt: bool) -> impl Fn(&mut Tape, Var) -> Result<Var> {
    move |tape: &mut Tape, v: Var| {
        if !corrupt {
            return tape.relu(v);
        }
        let x = tape.value(v);
        let y = Tensor::new(x.shape().to_vec(), x.data().iter().map(|a| a.max(0.0)).collect())?;
        tape.custom(
            &[v],
            y,
            Box::new(|up: &[f64], _: &[&Tensor], _: &Tensor| vec![up.to_vec()]),
        )
    }
}

struct Case {
    name: &'static str,
    shape: Vec<usize>,
    lo: f64,
    hi: f64,
    build: Box<dyn Fn(&mut RngState) -> Box<dyn Fn(&mut Tape, Var) -> Result<Var>>>,
}

fn projected(
    name: &'static str,
    shape: &[usize],
    lo: f64,
    hi: f64,
    op: fn(&mut Tape, Var) -> Result<Var>,
    out: Vec<usize>,
) -> Case {
    Case {
        name,
        shape: shape.to_vec(),
        lo,
        hi,
        build: Box::new(move |rng| {
            let w = random(rng, &out, -1.0, 1.0);
            Box::new(move |tape, x| {
                let y = op(tape, x)?;
                project(tape, y, &w)
            })
        }),
    }
}

fn primitive_cases() -> Vec<Case> {
    let mut cases = vec![
        projected("relu", &[3, 4], -2.0, 2.0, |t, x| t.relu(x), vec![3, 4]),
        projected("exp", &[3, 4], -2.0, 2.0, |t, x| t.unary(UnaryOp::Exp, x), vec![3, 4]),
        projected("log", &[3, 4], 0.5, 2.0, |t, x| t.unary(UnaryOp::Log, x), vec![3, 4]),
        projected("sqrt", &[3, 4], 0.5, 2.0, |t, x| t.unary(UnaryOp::Sqrt, x), vec![3, 4]),
        projected("neg", &[3, 4], -2.0, 2.0, |t, x| t.unary(UnaryOp::Neg, x), vec![3, 4]),
        projected(
            "reduce_sum",
            &[3, 4],
            -2.0,
            2.0,
            |t, x| t.reduce(ReduceOp::Sum, x, 1),
            vec![3],
        ),
        projected(
            "reduce_mean",
            &[3, 4],
            -2.0,
            2.0,
            |t, x| t.reduce(ReduceOp::Mean, x, 0),
            vec![4],
        ),
        projected(
            "reduce_max",
            &[3, 4],
            -2.0,
            2.0,
            |t, x| t.reduce(ReduceOp::Max, x, 1),
            vec![3],
        ),
        projected("softmax_last", &[3, 4], -2.0, 2.0, |t, x| t.softmax_last(x), vec![3, 4]),
        projected(
            "log_softmax_last",
            &[3, 4],
            -2.0,
            2.0,
            |t, x| t.log_softmax_last(x),
            vec![3, 4],
        ),
        projected(
            "reshape",
            &[3, 4],
            -2.0,
            2.0,
            |t, x| t.reshape(x, vec![2, 6]),
            vec![2, 6],
        ),
        projected("scale", &[3, 4], -2.0, 2.0, |t, x| t.scale(x, -1.7), vec![3, 4]),
    ];
    for (name, op) in [("matmul", 0usize), ("add_broadcast", 1), ("sub", 2), ("mul", 3)] {
        cases.push(Case {
            name,
            shape: vec![3, 4],
            lo: -2.0,
            hi: 2.0,
            build: Box::new(move |rng| {
                let other = match op {
                    0 => random(rng, &[4, 2], -2.0, 2.0),
                    1 => random(rng, &[4], -2.0, 2.0),
                    _ => random(rng, &[3, 4], -2.0, 2.0),
                };
                let w = random(rng, if op == 0 { &[3, 2] } else { &[3, 4] }, -1.0, 1.0);
                Box::new(move |tape, x| {
                    let o = tape.leaf(other.clone());
                    let y = match op {
                        0 => tape.matmul(x, o)?,
                        1 => tape.add(x, o)?,
                        2 => tape.sub(o, x)?,
                        _ => tape.mul(x, o)?,
                    };
                    project(tape, y, &w)
                })
            }),
        });
    }
    cases
}

const N: usize = 4;
const G: usize = 5;
const BATCH: usize = 3;

fn head_cases() -> Vec<Case> {
    let mut cases = vec![Case {
        name: "softmax+cross_entropy",
        shape: vec![BATCH, N],
        lo: -2.0,
        hi: 2.0,
        build: Box::new(|rng| {
            let eps = if rng.bernoulli(0.5) { 0.0 } else { 0.1 };
            let targets: Vec<f64> = (0..BATCH)
                .flat_map(|_| smooth_labels(rng.below(N), N, eps).expect("valid"))
                .collect();
            let y = Tensor::new(vec![BATCH, N], targets).expect("finite");
            Box::new(move |tape, x| {
                let yv = tape.leaf(y.clone());
                cross_entropy_var(tape, x, yv)
            })
        }),
    }];
    for (name, form) in [
        ("grouped_softmax+score_loss_squared", LossForm::Squared),
        ("grouped_softmax+score_loss_frobenius", LossForm::Frobenius),
    ] {
        cases.push(Case {
            name,
            shape: vec![BATCH, N * G],
            lo: -2.0,
            hi: 2.0,
            build: Box::new(move |rng| {
                let y = dgss_targets(rng);
                Box::new(move |tape, x| {
                    let s = grouped_softmax_var(tape, x, N, G)?;
                    let yv = tape.leaf(y.clone());
                    score_loss_var(tape, yv, s, form)
                })
            }),
        });
    }
    cases
}

fn dgss_targets(rng: &mut RngState) -> Tensor {
    let cfg = DgssConfig::defaults(N, G).expect("defaults are valid");
    let cells: Vec<f64> = (0..BATCH)
        .flat_map(|_| {
            let label = rng.below(N);
            build_supervision(label, &cfg, rng).expect("valid").cells().to_vec()
        })
        .collect();
    Tensor::new(vec![BATCH, N, G], cells).expect("finite")
}

fn mlp_check(head: HeadSpec, opts: &SuiteOptions, rng: &mut RngState) -> Result<f64> {
    let spec = ModelSpec {
        input_dim: 3,
        hidden: vec![5, 4],
        head,
        activation: Default::default(),
    };
    let mut init_rng = RngState::new(rng.below(usize::MAX) as u64);
    let model = init_model(&spec, &mut init_rng)?;
    // Xavier weights as in training; random biases so no layer starts at zero.
    let params: Vec<Tensor> = model
        .params()
        .iter()
        .map(|p| {
            if p.rank() == 1 {
                random(rng, p.shape(), -0.5, 0.5)
            } else {
                p.clone()
            }
        })
        .collect();
    let x = random(rng, &[BATCH, 3], -2.0, 2.0);
    let target = match head {
        HeadSpec::Softmax { classes } => {
            let t: Vec<f64> = (0..BATCH)
                .flat_map(|_| smooth_labels(rng.below(classes), classes, 0.0).expect("valid"))
                .collect();
            Tensor::new(vec![BATCH, classes], t)?
        }
        HeadSpec::ScoreSoftmax { .. } => dgss_targets(rng),
    };
    let act = relu_act(opts.corrupt_relu);
    let mut worst: f64 = 0.0;
    for which in 0..params.len() {
        let f = |tape: &mut Tape, p: Var| -> Result<Var> {
            let vars: Vec<Var> = params
                .iter()
                .enumerate()
                .map(|(i, t)| if i == which { p } else { tape.leaf(t.clone()) })
                .collect();
            let xv = tape.leaf(x.clone());
            let logits = forward_layers(tape, xv, &vars, &act)?;
            let yv = tape.leaf(target.clone());
            match head {
                HeadSpec::Softmax { .. } => cross_entropy_var(tape, logits, yv),
                HeadSpec::ScoreSoftmax { classes, levels } => {
                    let s = grouped_softmax_var(tape, logits, classes, levels)?;
                    score_loss_var(tape, yv, s, LossForm::Squared)
                }
            }
        };
        worst = worst.max(grad_check(f, &params[which], opts.eps)?);
    }
    Ok(worst)
}

/// Runs every check `opts.instances` times and reports the worst error of each.
pub fn run_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let record = |name: &str, max_error: f64| CheckResult {
        name: name.to_string(),
        instances: opts.instances,
        max_error,
        passed: max_error < opts.tolerance,
    };
    let mut cases = primitive_cases();
    cases.extend(head_cases());
    for (c, case) in cases.iter().enumerate() {
        let mut rng = RngState::derive(opts.seed, &[c as u64]);
        let mut worst: f64 = 0.0;
        for _ in 0..opts.instances {
            let f = (case.build)(&mut rng);
            let x = random(&mut rng, &case.shape, case.lo, case.hi);
            let err = if case.name == "relu" && opts.corrupt_relu {
                let act = relu_act(true);
                let w = random(&mut rng, &case.shape, -1.0, 1.0);
                grad_check(
                    |t, v| {
                        let y = act(t, v)?;
                        project(t, y, &w)
                    },
                    &x,
                    opts.eps,
                )?
            } else {
                grad_check(|t, v| f(t, v), &x, opts.eps)?
            };
            worst = worst.max(err);
        }
        checks.push(record(case.name, worst));
    }
    for (k, (name, head)) in [
        ("mlp+softmax+cross_entropy", HeadSpec::Softmax { classes: N }),
        (
            "mlp+score_softmax+score_loss",
            HeadSpec::ScoreSoftmax { classes: N, levels: G },
        ),
    ]
    .into_iter()
    .enumerate()
    {
        let mut rng = RngState::derive(opts.seed, &[0x6d6c70, k as u64]);
        let mut worst: f64 = 0.0;
        for _ in 0..opts.instances {
            worst = worst.max(mlp_check(head, opts, &mut rng)?);
        }
        checks.push(record(name, worst));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport {
        tolerance: opts.tolerance,
        eps: opts.eps,
        checks,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let r = run_suite(&SuiteOptions {
            instances: 5,
            ..Default::default()
        })
        .unwrap();
        for c in &r.checks {
            assert!(c.passed, "{} {}", c.name, c.max_error);
        }
        assert!(r.checks.iter().any(|c| c.name.starts_with("mlp+score")));
    }

    #[test]
    fn corrupted_relu_is_caught() {
        let r = run_suite(&SuiteOptions {
            instances: 5,
            corrupt_relu: true,
            ..Default::default()
        })
        .unwrap();
        assert!(!r.passed);
        let relu = r.checks.iter().find(|c| c.name == "relu").unwrap();
        assert!(!relu.passed);
    }
}
