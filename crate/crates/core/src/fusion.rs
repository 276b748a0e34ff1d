//! Fusion of score matrices from several channels.
//!
//! Gaussian fusion summarises every class row of every channel by its
//! discrete mean and standard deviation, moves those moments onto a common
//! unit scale, combines them (mean of means, root-sum-square of sigmas) and
//! regenerates a score matrix from the fused Gaussian. Additive fusion is
//! the cellwise baseline and only exists when all channels share `G`.

use serde::{Deserialize, Serialize};

use crate::dgss::discrete_gaussian_row;
use crate::error::{Error, Result};
use crate::heads::{predict, weighted_scores, ScoreMatrix, ScoreTable};

/// Grid that a set of moments is expressed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentScale {
    /// Levels `1..=G`.
    Grid(usize),
    /// `[0, 1]`, level 1 at 0 and level G at 1.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub scale: MomentScale,
}

impl GaussianMoments {
    pub fn classes(&self) -> usize {
        self.mu.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Levels of the regenerated matrix; `None` takes the largest input G.
    pub target_g: Option<usize>,
    /// Lower bound on unit-scale σ.
    pub sigma_floor: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            target_g: None,
            sigma_floor: 1e-3,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.target_g {
            if g < 2 {
                return Err(Error::param("target_g", format!("{g} must be >= 2")));
            }
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::param("sigma_floor", "must be > 0"));
        }
        Ok(())
    }
}

/// Discrete mean and standard deviation of every row, on the source grid.
pub fn estimate_moments(s: &ScoreMatrix) -> GaussianMoments {
    let mut mu = Vec::with_capacity(s.classes());
    let mut sigma = Vec::with_capacity(s.classes());
    for row in s.rows() {
        let m: f64 = row.iter().enumerate().map(|(j, w)| (j + 1) as f64 * w).sum();
        let var: f64 = row
            .iter()
            .enumerate()
            .map(|(j, w)| ((j + 1) as f64 - m).powi(2) * w)
            .sum();
        mu.push(m);
        sigma.push(var.max(0.0).sqrt());
    }
    GaussianMoments {
        mu,
        sigma,
        scale: MomentScale::Grid(s.levels()),
    }
}

/// Affine map from levels `1..=G` onto `[0, 1]`.
pub fn normalize_moments(m: &GaussianMoments) -> Result<GaussianMoments> {
    let g = match m.scale {
        MomentScale::Unit => return Err(Error::Fusion("moments are already unit-scale".into())),
        MomentScale::Grid(g) if g < 2 => return Err(Error::Fusion(format!("grid G = {g} is too small"))),
        MomentScale::Grid(g) => g as f64,
    };
    Ok(GaussianMoments {
        mu: m.mu.iter().map(|x| (x - 1.0) / (g - 1.0)).collect(),
        sigma: m.sigma.iter().map(|s| s / (g - 1.0)).collect(),
        scale: MomentScale::Unit,
    })
}

// Sums in sorted order so the result does not depend on channel order.
fn ordered_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Mean of the channel means and root-sum-square of the channel sigmas,
/// with σ floored at `sigma_floor`.
pub fn fuse_moments(channels: &[GaussianMoments], sigma_floor: f64) -> Result<GaussianMoments> {
    let first = channels.first().ok_or(Error::Empty("fuse_moments"))?;
    let n = first.classes();
    for (k, c) in channels.iter().enumerate() {
        if c.scale != MomentScale::Unit {
            return Err(Error::Fusion(format!("channel {k} is not unit-scale")));
        }
        if c.classes() != n || c.sigma.len() != n {
            return Err(Error::Fusion(format!(
                "channel {k} has {} classes, expected {n}",
                c.classes()
            )));
        }
    }
    let k = channels.len() as f64;
    let mu = (0..n)
        .map(|i| ordered_sum(channels.iter().map(|c| c.mu[i])) / k)
        .collect();
    let sigma = (0..n)
        .map(|i| {
            ordered_sum(channels.iter().map(|c| c.sigma[i] * c.sigma[i]))
                .sqrt()
                .max(sigma_floor)
        })
        .collect();
    Ok(GaussianMoments {
        mu,
        sigma,
        scale: MomentScale::Unit,
    })
}

/// Rebuilds a score matrix on `target_g` levels from unit-scale moments.
pub fn regenerate(m: &GaussianMoments, target_g: usize, sigma_floor: f64) -> Result<ScoreMatrix> {
    if m.scale != MomentScale::Unit {
        return Err(Error::Fusion("regenerate expects unit-scale moments".into()));
    }
    if target_g < 2 {
        return Err(Error::param("target_g", format!("{target_g} must be >= 2")));
    }
    let span = (target_g - 1) as f64;
    let mut cells = Vec::with_capacity(m.classes() * target_g);
    for (mu, sigma) in m.mu.iter().zip(&m.sigma) {
        let row = discrete_gaussian_row(1.0 + mu * span, sigma.max(sigma_floor) * span, target_g)?;
        cells.extend(row);
    }
    ScoreMatrix::new(m.classes(), target_g, cells)
}

fn common_classes(matrices: &[ScoreMatrix]) -> Result<usize> {
    let n = matrices.first().ok_or(Error::Empty("fusion"))?.classes();
    if let Some((k, m)) = matrices.iter().enumerate().find(|(_, m)| m.classes() != n) {
        return Err(Error::Fusion(format!(
            "channel {k} has {} classes, expected {n}",
            m.classes()
        )));
    }
    Ok(n)
}

/// estimate → normalize → fuse → regenerate.
pub fn gaussian_fuse(matrices: &[ScoreMatrix], cfg: &FusionConfig) -> Result<ScoreMatrix> {
    cfg.validate()?;
    if matrices.len() < 2 {
        return Err(Error::Fusion(format!(
            "need at least 2 channels, got {}",
            matrices.len()
        )));
    }
    common_classes(matrices)?;
    let target = cfg
        .target_g
        .unwrap_or_else(|| matrices.iter().map(ScoreMatrix::levels).max().unwrap_or(2));
    let unit = matrices
        .iter()
        .map(|m| normalize_moments(&estimate_moments(m)))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_moments(&unit, cfg.sigma_floor)?;
    regenerate(&fused, target, cfg.sigma_floor)
}

/// Cellwise mean of same-grid score matrices.
pub fn additive_fuse(matrices: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    let n = common_classes(matrices)?;
    let g = matrices[0].levels();
    if let Some(m) = matrices.iter().find(|m| m.levels() != g) {
        return Err(Error::AdditiveGridMismatch(g, m.levels()));
    }
    let k = matrices.len() as f64;
    let mut cells = vec![0.0; n * g];
    for m in matrices {
        cells.iter_mut().zip(m.cells()).for_each(|(a, b)| *a += b);
    }
    cells.iter_mut().for_each(|x| *x /= k);
    ScoreMatrix::new(n, g, cells)
}

/// Top-1 class of the Gaussian-fused matrix.
pub fn fuse_predict(matrices: &[ScoreMatrix], cfg: &FusionConfig) -> Result<usize> {
    let fused = gaussian_fuse(matrices, cfg)?;
    let table = ScoreTable::new(fused.levels())?;
    predict(&weighted_scores(&fused, &table)?)
}
