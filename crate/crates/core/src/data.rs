//! Datasets: the synthetic noise-trap benchmark, a two-view task for
//! fusion experiments, input attacks, IDX loading and splitting.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, IdxError, Result};
use crate::io::{read_container, write_container};
use crate::rng::RngState;

pub const DATASET_MAGIC: &[u8; 4] = b"SSDS";

/// A named, contiguous range of feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub name: String,
    pub offset: usize,
    pub dims: usize,
    /// Amplitude of a token-coded block (the background shortcut).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Layout {
    pub blocks: Vec<FeatureBlock>,
}

impl Layout {
    pub fn block(&self, name: &str) -> Option<&FeatureBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub class_counts: Vec<usize>,
}

/// Labelled samples stored as a row-major `M×D` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    layout: Layout,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        dims: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        layout: Layout,
        provenance: Provenance,
    ) -> Result<Self> {
        if dims == 0 || features.len() != dims * labels.len() {
            return Err(Error::Construction {
                shape: vec![labels.len(), dims],
                expected: dims * labels.len(),
                got: features.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label: l, n: classes });
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        for b in &layout.blocks {
            if b.offset + b.dims > dims {
                return Err(Error::param(
                    "layout",
                    format!("block `{}` exceeds {dims} columns", b.name),
                ));
            }
        }
        Ok(Dataset {
            dims,
            classes,
            features,
            labels,
            layout,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.features[k * self.dims..(k + 1) * self.dims]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.classes)
    }

    /// Copy restricted to the columns of one block.
    pub fn select_block(&self, name: &str) -> Result<Dataset> {
        let b = self
            .layout
            .block(name)
            .ok_or_else(|| Error::param("layout", format!("no block named `{name}`")))?
            .clone();
        let features = (0..self.len())
            .flat_map(|k| self.sample(k)[b.offset..b.offset + b.dims].to_vec())
            .collect();
        let layout = Layout {
            blocks: vec![FeatureBlock { offset: 0, ..b.clone() }],
        };
        Dataset::new(
            b.dims,
            self.classes,
            features,
            self.labels.clone(),
            layout,
            self.provenance.clone(),
        )
    }

    fn with_features(&self, features: Vec<f64>) -> Dataset {
        Dataset {
            features,
            ..self.clone()
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = json!({
            "classes": self.classes,
            "dims": self.dims,
            "samples": self.len(),
            "labels": self.labels,
            "layout": self.layout,
            "provenance": self.provenance,
        });
        let f = BufWriter::new(File::create(path)?);
        write_container(f, DATASET_MAGIC, &header, self.features.iter().copied())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let f = BufReader::new(File::open(path)?);
        let (header, features) = read_container(f, DATASET_MAGIC)?;
        let field = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("dataset header is missing `{k}`")))
        };
        let dims: usize = serde_json::from_value(field("dims")?)?;
        let classes: usize = serde_json::from_value(field("classes")?)?;
        let labels: Vec<usize> = serde_json::from_value(field("labels")?)?;
        let layout: Layout = serde_json::from_value(field("layout")?)?;
        let provenance: Provenance = serde_json::from_value(field("provenance")?)?;
        Dataset::new(dims, classes, features, labels, layout, provenance)
    }
}

fn class_counts(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut c = vec![0; classes];
    for &l in labels {
        c[l] += 1;
    }
    c
}

/// ±1 code for `class` over `dims` columns.
///
/// Codes are rows `1..=N` of a Sylvester–Hadamard matrix of order `P`
/// (the smallest power of two above `N`), tiled across the columns. They
/// are zero-mean and exactly orthogonal when `dims` is a multiple of `P`.
pub fn prototype(class: usize, classes: usize, dims: usize) -> Vec<f64> {
    let order = (classes + 1).next_power_of_two();
    let row = class + 1;
    (0..dims)
        .map(|d| {
            if ((row & (d % order)).count_ones() & 1) == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Parameters of the spurious-correlation benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseTrapSpec {
    pub classes: usize,
    pub signal_dims: usize,
    pub background_dims: usize,
    /// Std-dev of the Gaussian noise on the signal block.
    pub signal_noise: f64,
    /// Amplitude of the background token code.
    pub background_gain: f64,
    /// P(background token == label) in the training split.
    pub rho_train: f64,
    /// P(background token == label) in the test split.
    pub rho_test: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub seed: u64,
}

impl Default for NoiseTrapSpec {
    fn default() -> Self {
        NoiseTrapSpec {
            classes: 10,
            signal_dims: 32,
            background_dims: 32,
            signal_noise: 0.6,
            background_gain: 3.0,
            rho_train: 0.95,
            rho_test: 0.1,
            train_samples: 2000,
            test_samples: 1000,
            seed: 0,
        }
    }
}

impl NoiseTrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::param("classes", "need at least 2"));
        }
        if self.signal_dims < self.classes {
            return Err(Error::param(
                "signal_dims",
                format!("{} is smaller than the class count {}", self.signal_dims, self.classes),
            ));
        }
        if self.background_dims == 0 {
            return Err(Error::param("background_dims", "must be > 0"));
        }
        for (name, v) in [("rho_train", self.rho_train), ("rho_test", self.rho_test)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} is outside [0, 1]")));
            }
        }
        if !(self.background_gain > 0.0) {
            return Err(Error::param("background_gain", "must be > 0"));
        }
        if !(self.signal_noise >= 0.0) {
            return Err(Error::param("signal_noise", "must be >= 0"));
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return Err(Error::param("samples", "both splits need at least one sample"));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        Layout {
            blocks: vec![
                FeatureBlock {
                    name: "signal".into(),
                    offset: 0,
                    dims: self.signal_dims,
                    gain: None,
                },
                FeatureBlock {
                    name: "background".into(),
                    offset: self.signal_dims,
                    dims: self.background_dims,
                    gain: Some(self.background_gain),
                },
            ],
        }
    }

    fn split(&self, split: &str, count: usize, rho: f64) -> Result<Dataset> {
        let stream = if split == "train" { 0 } else { 1 };
        let mut rng = RngState::derive(self.seed, &[0x7261_7031, stream]);
        let labels = balanced_labels(count, self.classes, &mut rng);
        let n = self.classes;
        let signal: Vec<Vec<f64>> = (0..n).map(|c| prototype(c, n, self.signal_dims)).collect();
        let background: Vec<Vec<f64>> = (0..n).map(|c| prototype(c, n, self.background_dims)).collect();
        let dims = self.signal_dims + self.background_dims;
        let mut features = Vec::with_capacity(count * dims);
        for &y in &labels {
            features.extend(signal[y].iter().map(|v| v + self.signal_noise * rng.normal()));
            let token = if rng.bernoulli(rho) {
                y
            } else {
                let other = rng.below(n - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            };
            features.extend(background[token].iter().map(|v| v * self.background_gain));
        }
        let provenance = Provenance {
            generator: format!("noise_trap/{split}"),
            seed: self.seed,
            params: serde_json::to_value(self)?,
            class_counts: class_counts(&labels, n),
        };
        Dataset::new(dims, n, features, labels, self.layout(), provenance)
    }
}

/// `count` labels cycling through the classes, then shuffled.
fn balanced_labels(count: usize, classes: usize, rng: &mut RngState) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..count).map(|k| k % classes).collect();
    labels.shuffle(rng);
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

/// Generates the train/test pair. The train split does not depend on
/// `rho_test`, so shifted and unshifted test sets share one training set.
pub fn gen_noise_trap(spec: &NoiseTrapSpec) -> Result<Splits> {
    spec.validate()?;
    Ok(Splits {
        train: spec.split("train", spec.train_samples, spec.rho_train)?,
        test: spec.split("test", spec.test_samples, spec.rho_test)?,
    })
}

/// Two independent noisy views of the class code, for fusion experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoViewSpec {
    pub classes: usize,
    pub view_dims: usize,
    pub noise: [f64; 2],
    pub train_samples: usize,
    pub test_samples: usize,
    pub seed: u64,
}

impl Default for TwoViewSpec {
    fn default() -> Self {
        TwoViewSpec {
            classes: 10,
            view_dims: 16,
            noise: [2.2, 2.2],
            train_samples: 2000,
            test_samples: 1000,
            seed: 0,
        }
    }
}

pub fn gen_two_view(spec: &TwoViewSpec) -> Result<Splits> {
    if spec.view_dims < spec.classes || spec.classes < 2 {
        return Err(Error::param("view_dims", "must be at least the class count (>= 2)"));
    }
    if spec.noise.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::param("noise", "must be >= 0"));
    }
    let n = spec.classes;
    let codes: Vec<Vec<f64>> = (0..n).map(|c| prototype(c, n, spec.view_dims)).collect();
    let layout = Layout {
        blocks: ["view_a", "view_b"]
            .iter()
            .enumerate()
            .map(|(i, name)| FeatureBlock {
                name: name.to_string(),
                offset: i * spec.view_dims,
                dims: spec.view_dims,
                gain: None,
            })
            .collect(),
    };
    let make = |split: &str, stream: u64, count: usize| -> Result<Dataset> {
        let mut rng = RngState::derive(spec.seed, &[0x7476_6f31, stream]);
        let labels = balanced_labels(count, n, &mut rng);
        let mut features = Vec::with_capacity(count * 2 * spec.view_dims);
        for &y in &labels {
            for sigma in spec.noise {
                features.extend(codes[y].iter().map(|v| v + sigma * rng.normal()));
            }
        }
        let provenance = Provenance {
            generator: format!("two_view/{split}"),
            seed: spec.seed,
            params: serde_json::to_value(spec)?,
            class_counts: class_counts(&labels, n),
        };
        Dataset::new(2 * spec.view_dims, n, features, labels, layout.clone(), provenance)
    };
    Ok(Splits {
        train: make("train", 0, spec.train_samples)?,
        test: make("test", 1, spec.test_samples)?,
    })
}

/// Per-feature `[min, max]` of a reference (training) split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureRanges {
    pub fn of(ds: &Dataset) -> Self {
        let mut min = vec![f64::INFINITY; ds.dims];
        let mut max = vec![f64::NEG_INFINITY; ds.dims];
        for k in 0..ds.len() {
            for (d, &v) in ds.sample(k).iter().enumerate() {
                min[d] = min[d].min(v);
                max[d] = max[d].max(v);
            }
        }
        FeatureRanges { min, max }
    }
}

/// Salt-and-pepper noise on feature vectors: each feature is replaced with
/// probability `p` by the minimum or maximum of its reference range.
pub fn impulse_noise(ds: &Dataset, p: f64, ranges: &FeatureRanges, rng: &mut RngState) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("{p} is outside [0, 1]")));
    }
    if ranges.min.len() != ds.dims {
        return Err(Error::ShapeMismatch {
            op: "impulse_noise",
            lhs: vec![ds.dims],
            rhs: vec![ranges.min.len()],
        });
    }
    let mut features = ds.features.clone();
    for (i, v) in features.iter_mut().enumerate() {
        if rng.bernoulli(p) {
            let d = i % ds.dims;
            *v = if rng.bernoulli(0.5) {
                ranges.min[d]
            } else {
                ranges.max[d]
            };
        }
    }
    Ok(ds.with_features(features))
}

/// Overwrites the background block of every sample with the code of
/// `token_class` at the block's gain.
pub fn background_attack(ds: &Dataset, token_class: usize) -> Result<Dataset> {
    let b = ds
        .layout
        .block("background")
        .ok_or_else(|| Error::param("layout", "dataset has no background block"))?;
    if token_class >= ds.classes {
        return Err(Error::LabelOutOfRange {
            label: token_class,
            n: ds.classes,
        });
    }
    let gain = b.gain.unwrap_or(1.0);
    let code: Vec<f64> = prototype(token_class, ds.classes, b.dims)
        .iter()
        .map(|v| v * gain)
        .collect();
    let mut features = ds.features.clone();
    for row in features.chunks_mut(ds.dims) {
        row[b.offset..b.offset + b.dims].copy_from_slice(&code);
    }
    Ok(ds.with_features(features))
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn idx_body<'a>(bytes: &'a [u8], file: &str, magic: u32, ndims: usize) -> Result<(Vec<usize>, &'a [u8])> {
    let header = 4 + 4 * ndims;
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            file: file.into(),
            expected: header,
            found: bytes.len(),
        }
        .into());
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(IdxError::BadMagic {
            file: file.into(),
            found,
            expected: magic,
        }
        .into());
    }
    if bytes.len() < header {
        return Err(IdxError::Truncated {
            file: file.into(),
            expected: header,
            found: bytes.len(),
        }
        .into());
    }
    let dims: Vec<usize> = (0..ndims).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            file: file.into(),
            expected,
            found: bytes.len(),
        }
        .into());
    }
    Ok((dims, &bytes[header..expected]))
}

/// Reads an IDX image/label pair (unsigned-byte payloads). Pixels are
/// scaled to `[0, 1]` and flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = std::fs::read(images_path)?;
    let lab = std::fs::read(labels_path)?;
    let (idims, pixels) = idx_body(&img, &images_path.display().to_string(), IDX_IMAGES, 3)?;
    let (ldims, labels) = idx_body(&lab, &labels_path.display().to_string(), IDX_LABELS, 1)?;
    if idims[0] != ldims[0] {
        return Err(IdxError::CountMismatch {
            images: idims[0],
            labels: ldims[0],
        }
        .into());
    }
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    let dims = idims[1] * idims[2];
    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let layout = Layout {
        blocks: vec![FeatureBlock {
            name: "pixels".into(),
            offset: 0,
            dims,
            gain: None,
        }],
    };
    let provenance = Provenance {
        generator: "idx".into(),
        seed: 0,
        params: json!({
            "images": images_path.display().to_string(),
            "labels": labels_path.display().to_string(),
            "rows": idims[1],
            "cols": idims[2],
        }),
        class_counts: class_counts(&labels, classes),
    };
    Dataset::new(dims, classes, features, labels, layout, provenance)
}

/// Seeded shuffle followed by contiguous slices of the given fractions.
pub fn split(ds: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::param("fractions", "must be a non-empty list of positive values"));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::param("fractions", format!("sum {total} exceeds 1")));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut RngState::derive(seed, &[0x7370_6c74]));
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0;
    let mut acc = 0.0;
    for (i, f) in fractions.iter().enumerate() {
        acc += f;
        let end = ((acc * ds.len() as f64).round() as usize).min(ds.len());
        let idx = &order[start..end];
        let features = idx.iter().flat_map(|&k| ds.sample(k).to_vec()).collect();
        let labels: Vec<usize> = idx.iter().map(|&k| ds.labels[k]).collect();
        let provenance = Provenance {
            generator: format!("{}/split{i}", ds.provenance.generator),
            seed,
            params: json!({ "fractions": fractions, "parent": ds.provenance.params }),
            class_counts: class_counts(&labels, ds.classes),
        };
        out.push(Dataset::new(
            ds.dims,
            ds.classes,
            features,
            labels,
            ds.layout.clone(),
            provenance,
        )?);
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> NoiseTrapSpec {
        NoiseTrapSpec {
            train_samples: 200,
            test_samples: 100,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn prototypes_are_orthogonal() {
        for a in 0..10 {
            for b in 0..10 {
                let dot: f64 = prototype(a, 10, 32)
                    .iter()
                    .zip(prototype(b, 10, 32))
                    .map(|(x, y)| x * y)
                    .sum();
                assert_eq!(dot, if a == b { 32.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn noise_trap_is_seeded() {
        let a = gen_noise_trap(&small_spec()).unwrap();
        let b = gen_noise_trap(&small_spec()).unwrap();
        assert_eq!(a, b);
        let shifted = gen_noise_trap(&NoiseTrapSpec {
            rho_test: 0.95,
            ..small_spec()
        })
        .unwrap();
        assert_eq!(a.train.features(), shifted.train.features());
        assert_eq!(a.train.labels(), shifted.train.labels());
    }

    #[test]
    fn noise_trap_validation() {
        let bad = NoiseTrapSpec {
            signal_dims: 8,
            ..small_spec()
        };
        assert!(gen_noise_trap(&bad).is_err());
        let err = gen_noise_trap(&NoiseTrapSpec {
            rho_train: 1.5,
            ..small_spec()
        })
        .unwrap_err();
        assert!(err.to_string().contains("rho_train"));
    }

    #[test]
    fn background_tokens_follow_rho() {
        let spec = NoiseTrapSpec {
            rho_train: 1.0,
            rho_test: 0.0,
            ..small_spec()
        };
        let s = gen_noise_trap(&spec).unwrap();
        let bg = s.train.layout().block("background").unwrap().clone();
        let codes: Vec<Vec<f64>> = (0..10)
            .map(|c| prototype(c, 10, 32).iter().map(|v| v * 3.0).collect())
            .collect();
        for k in 0..s.train.len() {
            let row = &s.train.sample(k)[bg.offset..];
            assert_eq!(row, &codes[s.train.labels()[k]][..]);
        }
        for k in 0..s.test.len() {
            let row = &s.test.sample(k)[bg.offset..];
            assert_ne!(row, &codes[s.test.labels()[k]][..]);
        }
    }

    #[test]
    fn impulse_examples() {
        let s = gen_noise_trap(&small_spec()).unwrap();
        let ranges = FeatureRanges::of(&s.train);
        let same = impulse_noise(&s.test, 0.0, &ranges, &mut RngState::new(1)).unwrap();
        assert_eq!(same, s.test);
        let all = impulse_noise(&s.test, 1.0, &ranges, &mut RngState::new(1)).unwrap();
        for (i, v) in all.features().iter().enumerate() {
            let d = i % all.dims();
            assert!(*v == ranges.min[d] || *v == ranges.max[d]);
        }
        assert_eq!(all.labels(), s.test.labels());
        assert!(impulse_noise(&s.test, 1.1, &ranges, &mut RngState::new(1)).is_err());
    }

    #[test]
    fn background_attack_examples() {
        let s = gen_noise_trap(&small_spec()).unwrap();
        let once = background_attack(&s.test, 4).unwrap();
        assert_eq!(background_attack(&once, 4).unwrap(), once);
        assert_eq!(once.labels(), s.test.labels());
        let plain = s.test.select_block("signal").unwrap();
        assert!(background_attack(&plain, 0).is_err());
    }

    #[test]
    fn split_examples() {
        let s = gen_noise_trap(&NoiseTrapSpec {
            train_samples: 10,
            ..small_spec()
        })
        .unwrap();
        let whole = split(&s.train, &[1.0], 3).unwrap();
        assert_eq!(whole[0].len(), 10);
        let halves = split(&s.train, &[0.5, 0.5], 3).unwrap();
        assert_eq!((halves[0].len(), halves[1].len()), (5, 5));
        let mut rows: Vec<Vec<u64>> = halves
            .iter()
            .flat_map(|d| {
                (0..d.len())
                    .map(|k| d.sample(k).iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 10, "splits must be disjoint");
        assert_eq!(split(&s.train, &[0.5, 0.5], 3).unwrap(), halves);
        assert!(split(&s.train, &[0.7, 0.5], 3).is_err());
        assert_eq!(halves[0].provenance().class_counts.iter().sum::<usize>(), 5);
    }

    #[test]
    fn container_round_trip() {
        let s = gen_noise_trap(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.ssds");
        s.train.save(&p).unwrap();
        assert_eq!(Dataset::load(&p).unwrap(), s.train);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(Dataset::load(&p), Err(Error::Format(_))));
    }
}
