use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use ssoftmax_core::data::{gen_noise_trap, gen_two_view, load_idx, Dataset, NoiseTrapSpec, TwoViewSpec};
use ssoftmax_core::fusion::FusionConfig;
use ssoftmax_core::train::{HeadSpec, HeadTarget, ModelSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSection {
    NoiseTrap(NoiseTrapSpec),
    TwoView(TwoViewSpec),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection::NoiseTrap(NoiseTrapSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    /// Inferred from the head target and the data when absent.
    pub head: Option<HeadSpec>,
    /// Levels used for static targets when `head` is absent.
    pub levels: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: vec![256, 64],
            head: None,
            levels: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub impulse_p: Vec<f64>,
    pub background_token: Option<usize>,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            impulse_p: vec![0.1, 0.2],
            background_token: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub method: FusionMethod,
    pub target_g: Option<usize>,
    pub sigma_floor: f64,
}

impl Default for FusionSection {
    fn default() -> Self {
        let d = FusionConfig::default();
        FusionSection {
            method: FusionMethod::Gaussian,
            target_g: d.target_g,
            sigma_floor: d.sigma_floor,
        }
    }
}

impl FusionSection {
    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            target_g: self.target_g,
            sigma_floor: self.sigma_floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    Gaussian,
    Additive,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    /// Restricts training and evaluation to one named feature block.
    pub block: Option<String>,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub attack: AttackSection,
    pub fusion: FusionSection,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(ssoftmax_core::Error::from)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Applies a `--seed` override to every seeded section.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.train.seed = s;
            match &mut self.dataset {
                DatasetSection::NoiseTrap(spec) => spec.seed = s,
                DatasetSection::TwoView(spec) => spec.seed = s,
                DatasetSection::Idx { .. } => {}
            }
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn hash(&self) -> anyhow::Result<String> {
        Ok(ssoftmax_core::config_hash(self)?)
    }

    /// Train and test splits described by the dataset section.
    pub fn generate(&self) -> anyhow::Result<(Dataset, Dataset)> {
        Ok(match &self.dataset {
            DatasetSection::NoiseTrap(spec) => {
                let s = gen_noise_trap(spec)?;
                (s.train, s.test)
            }
            DatasetSection::TwoView(spec) => {
                let s = gen_two_view(spec)?;
                (s.train, s.test)
            }
            DatasetSection::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => (
                load_idx(train_images, train_labels)?,
                load_idx(test_images, test_labels)?,
            ),
        })
    }

    pub fn select(&self, ds: Dataset) -> anyhow::Result<Dataset> {
        Ok(match &self.block {
            Some(b) => ds.select_block(b)?,
            None => ds,
        })
    }

    pub fn model_spec(&self, data: &Dataset) -> anyhow::Result<ModelSpec> {
        let head = match (self.model.head, &self.train.head_target) {
            (Some(h), _) => h,
            (None, HeadTarget::OneHot | HeadTarget::Vls { .. }) => HeadSpec::Softmax {
                classes: data.classes(),
            },
            (None, HeadTarget::Dgss(d)) => HeadSpec::ScoreSoftmax {
                classes: d.classes(),
                levels: d.levels(),
            },
            (None, HeadTarget::Static { .. }) => HeadSpec::ScoreSoftmax {
                classes: data.classes(),
                levels: self.model.levels,
            },
        };
        if head.classes() < data.classes() {
            bail!(ssoftmax_core::Error::LabelOutOfRange {
                label: data.classes() - 1,
                n: head.classes()
            });
        }
        Ok(ModelSpec {
            input_dim: data.dims(),
            hidden: self.model.hidden.clone(),
            head,
            activation: Default::default(),
        })
    }
}
