use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use ssoftmax_core::ScoreMatrix;

/// Writes pretty JSON with sorted keys and a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    // Round-tripping through Value sorts every object's keys.
    let v = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Stable id for sample `k`; zero-padded so lexical order is index order.
pub fn sample_id(k: usize) -> String {
    format!("{k:08}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Softmax,
    ScoreSoftmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub label: usize,
    pub prediction: usize,
    /// `N × G` score matrix rows, or one probability row for softmax heads.
    pub scores: Vec<Vec<f64>>,
}

/// Per-sample head outputs keyed by sample id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDump {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub head: HeadKind,
    pub classes: usize,
    pub levels: Option<usize>,
    pub samples: BTreeMap<String, SampleScores>,
}

impl ScoreDump {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let dump: ScoreDump = serde_json::from_str(&text)
            .map_err(ssoftmax_core::Error::from)
            .with_context(|| format!("parsing score dump {}", path.display()))?;
        Ok(dump)
    }

    pub fn matrices(&self) -> anyhow::Result<BTreeMap<String, ScoreMatrix>> {
        if self.head != HeadKind::ScoreSoftmax {
            bail!(ssoftmax_core::Error::Fusion(
                "fusion needs S-Softmax score matrices".into()
            ));
        }
        self.samples
            .iter()
            .map(|(id, s)| Ok((id.clone(), ScoreMatrix::from_rows(&s.scores)?)))
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let hit = self.samples.values().filter(|s| s.label == s.prediction).count();
        hit as f64 / self.samples.len().max(1) as f64
    }
}
