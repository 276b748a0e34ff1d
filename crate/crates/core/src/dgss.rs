//! Dynamic Gaussian smoothing supervision.
//!
//! Each training sample gets a fresh `N×G` target matrix on every
//! iteration. The true-class row is a narrow discrete Gaussian centred at
//! `λᵀ·G`; every other row draws its own centre `λ·G` and width from the
//! configured false-class ranges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{expected_level, ScoreMatrix};
use crate::rng::RngState;

/// Discrete Gaussian over the levels `1..=g`, normalised to sum to one.
///
/// Evaluated in the log domain so that narrow rows (σ = 0.2 puts the
/// neighbouring levels at `e^{-12.5}`) and centres far outside the grid
/// stay well-defined.
pub fn discrete_gaussian_row(mu: f64, sigma: f64, g: usize) -> Result<Vec<f64>> {
    if sigma.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !sigma.is_finite() {
        return Err(Error::param("sigma", format!("{sigma} must be finite and > 0")));
    }
    if g < 2 {
        return Err(Error::param("G", format!("{g} must be >= 2")));
    }
    if !mu.is_finite() {
        return Err(Error::param("mu", "must be finite"));
    }
    let denom = 2.0 * sigma * sigma;
    let logw: Vec<f64> = (1..=g).map(|j| -((j as f64 - mu).powi(2)) / denom).collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut row: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= sum);
    Ok(row)
}

/// Named λ ranges for false classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaStage {
    /// `[0, 0.5]`
    Low,
    /// `[0.5, 0.75]`
    Middle,
    /// `[0.75, 1]`
    High,
}

impl LambdaStage {
    pub fn range(self) -> (f64, f64) {
        match self {
            LambdaStage::Low => (0.0, 0.5),
            LambdaStage::Middle => (0.5, 0.75),
            LambdaStage::High => (0.75, 1.0),
        }
    }
}

/// Named σ ranges for false classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaStage {
    /// `[0.2, 0.6]`
    Narrow,
    /// `[0.6, 1.0]`
    Medium,
    /// `[1.0, 1.4]`
    Wide,
}

impl SigmaStage {
    pub fn range(self) -> (f64, f64) {
        match self {
            SigmaStage::Narrow => (0.2, 0.6),
            SigmaStage::Medium => (0.6, 1.0),
            SigmaStage::Wide => (1.0, 1.4),
        }
    }
}

/// Hyperparameters of the supervision generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDgssConfig", into = "RawDgssConfig")]
pub struct DgssConfig {
    n: usize,
    g: usize,
    lambda_true: f64,
    sigma_true: f64,
    lambda_false: (f64, f64),
    sigma_false: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct RawDgssConfig {
    n: usize,
    g: usize,
    lambda_true: f64,
    sigma_true: f64,
    lambda_false_range: [f64; 2],
    sigma_false_range: [f64; 2],
}

impl TryFrom<RawDgssConfig> for DgssConfig {
    type Error = Error;

    fn try_from(r: RawDgssConfig) -> Result<Self> {
        DgssConfig::new(
            r.n,
            r.g,
            r.lambda_true,
            r.sigma_true,
            (r.lambda_false_range[0], r.lambda_false_range[1]),
            (r.sigma_false_range[0], r.sigma_false_range[1]),
        )
    }
}

impl From<DgssConfig> for RawDgssConfig {
    fn from(c: DgssConfig) -> Self {
        RawDgssConfig {
            n: c.n,
            g: c.g,
            lambda_true: c.lambda_true,
            sigma_true: c.sigma_true,
            lambda_false_range: [c.lambda_false.0, c.lambda_false.1],
            sigma_false_range: [c.sigma_false.0, c.sigma_false.1],
        }
    }
}

impl DgssConfig {
    /// Defaults: λᵀ = 0.8, σᵀ = 0.2, λᶠ ∈ [0, 0.5], σᶠ ∈ [0.6, 1.0].
    pub fn defaults(n: usize, g: usize) -> Result<Self> {
        Self::new(n, g, 0.8, 0.2, LambdaStage::Low.range(), SigmaStage::Medium.range())
    }

    pub fn with_stages(n: usize, g: usize, lambda: LambdaStage, sigma: SigmaStage) -> Result<Self> {
        Self::new(n, g, 0.8, 0.2, lambda.range(), sigma.range())
    }

    /// Validates the ranges and that the true-class row dominates.
    ///
    /// Besides `λᵀ > λᶠ_max`, the weighted score of the true row must exceed
    /// that of the worst false row. Grid truncation pulls wide rows towards
    /// the middle level, so the first condition alone does not guarantee
    /// dominance when `λᵀ·G` sits below the centre of the grid. The false-row
    /// score increases with its centre, so the worst case is `λᶠ_max` and
    /// the σ range is scanned densely.
    pub fn new(
        n: usize,
        g: usize,
        lambda_true: f64,
        sigma_true: f64,
        lambda_false: (f64, f64),
        sigma_false: (f64, f64),
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", format!("{n} classes; need at least 2")));
        }
        if g < 2 {
            return Err(Error::param("g", format!("{g} levels; need at least 2")));
        }
        if !(lambda_true > 0.0 && lambda_true <= 1.0) {
            return Err(Error::param("lambda_true", format!("{lambda_true} is outside (0, 1]")));
        }
        if !(sigma_true > 0.0 && sigma_true.is_finite()) {
            return Err(Error::param("sigma_true", format!("{sigma_true} must be > 0")));
        }
        let (lmin, lmax) = lambda_false;
        if !(0.0..=1.0).contains(&lmin) || !(0.0..=1.0).contains(&lmax) || lmin > lmax {
            return Err(Error::param(
                "lambda_false_range",
                format!("[{lmin}, {lmax}] must be an ordered sub-range of [0, 1]"),
            ));
        }
        let (smin, smax) = sigma_false;
        if !(smin > 0.0) || !smax.is_finite() || smin > smax {
            return Err(Error::param(
                "sigma_false_range",
                format!("[{smin}, {smax}] must be ordered with a positive minimum"),
            ));
        }
        if lambda_true * g as f64 <= lmax * g as f64 {
            return Err(Error::param(
                "lambda_true",
                format!("true-class mean {lambda_true}·G must exceed the false-class maximum {lmax}·G"),
            ));
        }
        let true_score = expected_level(&discrete_gaussian_row(lambda_true * g as f64, sigma_true, g)?);
        const SCAN: usize = 400;
        for k in 0..=SCAN {
            let s = smin + (smax - smin) * k as f64 / SCAN as f64;
            let false_score = expected_level(&discrete_gaussian_row(lmax * g as f64, s, g)?);
            if false_score >= true_score {
                return Err(Error::param(
                    "lambda_false_range",
                    format!(
                        "false row (λ={lmax}, σ={s:.3}) scores {false_score:.4} >= true row {true_score:.4} on the G={g} grid"
                    ),
                ));
            }
        }
        Ok(DgssConfig {
            n,
            g,
            lambda_true,
            sigma_true,
            lambda_false,
            sigma_false,
        })
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.g
    }

    pub fn lambda_true(&self) -> f64 {
        self.lambda_true
    }

    pub fn sigma_true(&self) -> f64 {
        self.sigma_true
    }

    pub fn lambda_false_range(&self) -> (f64, f64) {
        self.lambda_false
    }

    pub fn sigma_false_range(&self) -> (f64, f64) {
        self.sigma_false
    }
}

/// `N×G` soft target with rows summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionMatrix {
    n: usize,
    g: usize,
    cells: Vec<f64>,
}

impl SupervisionMatrix {
    fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let g = rows[0].len();
        SupervisionMatrix {
            n,
            g,
            cells: rows.concat(),
        }
    }

    /// Uses a score matrix as a target.
    pub fn from_score_matrix(s: &ScoreMatrix) -> Self {
        SupervisionMatrix {
            n: s.classes(),
            g: s.levels(),
            cells: s.cells().to_vec(),
        }
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.g
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.g..(i + 1) * self.g]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Expected level of each row.
    pub fn weighted_scores(&self) -> Vec<f64> {
        self.cells.chunks(self.g).map(expected_level).collect()
    }
}

/// Draws a supervision matrix for one sample.
///
/// The true row is deterministic; each false row samples `λ` and then `σ`,
/// in class order, from `rng`.
pub fn build_supervision(label: usize, cfg: &DgssConfig, rng: &mut RngState) -> Result<SupervisionMatrix> {
    if label >= cfg.n {
        return Err(Error::LabelOutOfRange { label, n: cfg.n });
    }
    let g = cfg.g as f64;
    let rows = (0..cfg.n)
        .map(|i| {
            if i == label {
                discrete_gaussian_row(cfg.lambda_true * g, cfg.sigma_true, cfg.g)
            } else {
                let lambda = rng.uniform(cfg.lambda_false.0, cfg.lambda_false.1);
                let sigma = rng.uniform(cfg.sigma_false.0, cfg.sigma_false.1);
                discrete_gaussian_row(lambda * g, sigma, cfg.g)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SupervisionMatrix::from_rows(rows))
}

/// Fixed supervision presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaticPreset {
    /// Hard target: true row one-hot at level G, false rows at level 1.
    Y1,
    /// Fixed Gaussians: true row (0.8·G, 0.2), false rows (0.25·G, 0.8).
    Y2,
}

impl std::str::FromStr for StaticPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Y1" | "y1" => Ok(StaticPreset::Y1),
            "Y2" | "y2" => Ok(StaticPreset::Y2),
            other => Err(Error::param("preset", format!("unknown static preset `{other}`"))),
        }
    }
}

pub fn build_static(label: usize, preset: StaticPreset, n: usize, g: usize) -> Result<SupervisionMatrix> {
    if label >= n {
        return Err(Error::LabelOutOfRange { label, n });
    }
    if g < 2 {
        return Err(Error::param("g", format!("{g} must be >= 2")));
    }
    let gf = g as f64;
    let rows = (0..n)
        .map(|i| match preset {
            StaticPreset::Y1 => {
                let mut r = vec![0.0; g];
                r[if i == label { g - 1 } else { 0 }] = 1.0;
                Ok(r)
            }
            StaticPreset::Y2 if i == label => discrete_gaussian_row(0.8 * gf, 0.2, g),
            StaticPreset::Y2 => discrete_gaussian_row(0.25 * gf, 0.8, g),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SupervisionMatrix::from_rows(rows))
}

/// One-hot class target.
pub fn onehot_target(label: usize, n: usize) -> Result<Vec<f64>> {
    if label >= n {
        return Err(Error::LabelOutOfRange { label, n });
    }
    let mut v = vec![0.0; n];
    v[label] = 1.0;
    Ok(v)
}
