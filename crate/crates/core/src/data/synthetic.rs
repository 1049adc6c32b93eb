//! Synthetic benchmark with a known "real" prototype per class.
//!
//! True prototypes `z*_c ~ U[0,1]^A` are lifted to features by a fixed random
//! map, `x = ReLU(W·z*_c + b + ε)`. The prototypes handed to the learner are
//! corrupted copies: Gaussian attribute noise plus a fixed number of zeroed
//! (occluded) attributes per class.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SplitTag, ZslDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fraction of each seen class's samples tagged `seen-train`.
pub const SEEN_TRAIN_FRACTION: f64 = 0.8;
const LIFT_GAIN: f32 = 2.0;
const BIAS_STD: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corruption {
    pub attr_noise_sigma: f32,
    pub occlusion_rate: f32,
}

impl Corruption {
    pub const NONE: Corruption = Corruption {
        attr_noise_sigma: 0.0,
        occlusion_rate: 0.0,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub seen_classes: usize,
    pub unseen_classes: usize,
    pub attr_dim: usize,
    pub feature_dim: usize,
    pub n_per_class: usize,
    pub noise_sigma: f32,
    pub corruption: Corruption,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// A miniature CUB-like benchmark.
    fn default() -> Self {
        Self {
            seen_classes: 15,
            unseen_classes: 5,
            attr_dim: 32,
            feature_dim: 128,
            n_per_class: 100,
            noise_sigma: 0.5,
            corruption: Corruption {
                attr_noise_sigma: 0.3,
                occlusion_rate: 0.3,
            },
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        if self.unseen_classes == 0 {
            return bad("at least one unseen class is required");
        }
        if self.seen_classes == 0 || self.attr_dim == 0 || self.feature_dim == 0 {
            return bad("class, attribute and feature counts must be positive");
        }
        if self.n_per_class < 2 {
            return bad("n_per_class must be at least 2 so seen classes have train and test rows");
        }
        if !(0.0..=1.0).contains(&self.corruption.occlusion_rate) {
            return bad("occlusion_rate must lie in [0, 1]");
        }
        if !(self.noise_sigma >= 0.0 && self.corruption.attr_noise_sigma >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        Ok(())
    }

    /// Attributes zeroed per class: `⌊rate·A⌋`.
    pub fn occluded_per_class(&self) -> usize {
        (self.corruption.occlusion_rate as f64 * self.attr_dim as f64).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub dataset: ZslDataset,
    pub true_prototypes: Tensor,
    /// Lifting weights, `A × d`.
    pub lifting: Tensor,
    /// Lifting bias, `1 × d`.
    pub lifting_bias: Tensor,
}

impl SyntheticData {
    /// Noise-free feature centre `ReLU(z·W + b)` for each row of `z`.
    pub fn lift(&self, z: &Tensor) -> Result<Tensor> {
        let wz = z.matmul(&self.lifting)?;
        let b = self.lifting_bias.data();
        let cols = wz.cols();
        let data = wz
            .data()
            .iter()
            .enumerate()
            .map(|(k, v)| (v + b[k % cols]).max(0.0))
            .collect();
        Tensor::new(wz.rows(), cols, data)
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.seen_classes + spec.unseen_classes;
    let (a, d) = (spec.attr_dim, spec.feature_dim);

    let mut order: Vec<u32> = (0..c as u32).collect();
    order.shuffle(&mut rng);
    let mut unseen_ids = order[..spec.unseen_classes].to_vec();
    let mut seen_ids = order[spec.unseen_classes..].to_vec();
    unseen_ids.sort_unstable();
    seen_ids.sort_unstable();

    let true_data: Vec<f32> = (0..c * a).map(|_| rng.random::<f32>()).collect();
    let true_prototypes = Tensor::new(c, a, true_data)?;
    let lifting = Tensor::randn(a, d, LIFT_GAIN / (a as f32).sqrt(), &mut rng);
    let lifting_bias = Tensor::randn(1, d, BIAS_STD, &mut rng);

    let noise = Tensor::randn(c, a, 1.0, &mut rng);
    let mut predefined =
        true_prototypes.zip_map(&noise, |z, e| z + spec.corruption.attr_noise_sigma * e)?;
    let k = spec.occluded_per_class();
    for row in 0..c {
        for j in sample(&mut rng, a, k) {
            predefined.data_mut()[row * a + j] = 0.0;
        }
    }

    let mut synth = SyntheticData {
        dataset: ZslDataset {
            features: Tensor::zeros(0, d),
            labels: Vec::new(),
            tags: Vec::new(),
            prototypes: predefined,
            seen_ids,
            unseen_ids,
        },
        true_prototypes,
        lifting,
        lifting_bias,
    };
    let pre_act = synth.true_prototypes.matmul(&synth.lifting)?;

    let n = spec.n_per_class;
    let n_train = ((n as f64 * SEEN_TRAIN_FRACTION).floor() as usize).clamp(1, n - 1);
    let mut features = Vec::with_capacity(c * n * d);
    let mut labels = Vec::with_capacity(c * n);
    let mut tags = Vec::with_capacity(c * n);
    for class in 0..c {
        let eps = Tensor::randn(n, d, spec.noise_sigma, &mut rng);
        for i in 0..n {
            let base = pre_act.row(class);
            let b = synth.lifting_bias.data();
            features.extend(
                eps.row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, e)| (base[j] + b[j] + e).max(0.0)),
            );
        }
        labels.extend(std::iter::repeat_n(class as u32, n));
        if synth.dataset.is_seen(class as u32) {
            let mut t = vec![SplitTag::SeenTest; n];
            for i in sample(&mut rng, n, n_train) {
                t[i] = SplitTag::SeenTrain;
            }
            tags.extend(t);
        } else {
            tags.extend(std::iter::repeat_n(SplitTag::UnseenTest, n));
        }
    }
    synth.dataset.features = Tensor::new(c * n, d, features)?;
    synth.dataset.labels = labels;
    synth.dataset.tags = tags;
    synth.dataset.validate()?;
    Ok(synth)
}

/// Empty 200-class, 312-attribute, 2048-feature dataset with a 150/50 class
/// partition, ready to be filled with real features.
pub fn cub_shape_scaffold() -> ZslDataset {
    ZslDataset::new(
        Tensor::zeros(0, 2048),
        Vec::new(),
        Vec::new(),
        Tensor::zeros(200, 312),
        (0..150).collect(),
        (150..200).collect(),
    )
    .expect("scaffold is valid")
}
