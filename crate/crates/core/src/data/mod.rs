//! Zero-shot datasets: in-memory representation, validation, on-disk format,
//! normalization and a synthetic benchmark with a planted domain shift.

mod io;
mod normalize;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

pub use io::{
    load_dataset, load_true_prototypes, read_matrix, save_dataset, save_true_prototypes,
    write_csv_mirrors, write_matrix, DATA_MAGIC, FEATURES_FILE, LABELS_FILE, PROTOTYPES_FILE,
    SPLIT_FILE, TRUE_PROTOTYPES_FILE,
};
pub use normalize::{MinMaxScaler, ScaleScope};
pub use synthetic::{
    cub_shape_scaffold, generate_synthetic, Corruption, SyntheticData, SyntheticSpec,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitTag {
    SeenTrain,
    SeenTest,
    UnseenTest,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::SeenTrain => "seen-train",
            SplitTag::SeenTest => "seen-test",
            SplitTag::UnseenTest => "unseen-test",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "seen-train" => Ok(SplitTag::SeenTrain),
            "seen-test" => Ok(SplitTag::SeenTest),
            "unseen-test" => Ok(SplitTag::UnseenTest),
            other => Err(format!("unknown split tag `{other}`")),
        }
    }
}

/// Features with labels, per-sample split tags and the predefined class
/// prototypes. Row `c` of `prototypes` belongs to class id `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZslDataset {
    pub features: Tensor,
    pub labels: Vec<u32>,
    pub tags: Vec<SplitTag>,
    pub prototypes: Tensor,
    pub seen_ids: Vec<u32>,
    pub unseen_ids: Vec<u32>,
}

/// Rows of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatures {
    pub features: Tensor,
    pub labels: Vec<u32>,
}

impl LabeledFeatures {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl ZslDataset {
    /// Builds and validates a dataset.
    pub fn new(
        features: Tensor,
        labels: Vec<u32>,
        tags: Vec<SplitTag>,
        prototypes: Tensor,
        seen_ids: Vec<u32>,
        unseen_ids: Vec<u32>,
    ) -> Result<Self> {
        let ds = Self {
            features,
            labels,
            tags,
            prototypes,
            seen_ids,
            unseen_ids,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn attr_dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_seen(&self, class: u32) -> bool {
        self.seen_ids.contains(&class)
    }

    /// Checks every dataset invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.labels.len() != n || self.tags.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} feature rows, {} labels, {} split tags",
                self.labels.len(),
                self.tags.len()
            )));
        }
        let c = self.num_classes();
        let total = self.seen_ids.len() + self.unseen_ids.len();
        let seen: HashSet<u32> = self.seen_ids.iter().copied().collect();
        if let Some(&both) = self.unseen_ids.iter().find(|id| seen.contains(id)) {
            return Err(Error::OverlappingSplits(both));
        }
        if total != c {
            return Err(Error::DimensionMismatch(format!(
                "{c} prototype rows but {} seen + {} unseen classes",
                self.seen_ids.len(),
                self.unseen_ids.len()
            )));
        }
        let mut all = HashSet::with_capacity(total);
        for &id in self.seen_ids.iter().chain(&self.unseen_ids) {
            if id as usize >= c {
                return Err(Error::InvalidDataset(format!(
                    "class id {id} out of range for {c} classes"
                )));
            }
            if !all.insert(id) {
                return Err(Error::InvalidDataset(format!("class id {id} listed twice")));
            }
        }
        if self.seen_ids.is_empty() || self.unseen_ids.is_empty() {
            return Err(Error::InvalidDataset(
                "both seen and unseen class sets must be non-empty".into(),
            ));
        }
        for (i, (&y, &tag)) in self.labels.iter().zip(&self.tags).enumerate() {
            if y as usize >= c {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} has label {y} beyond {c} classes"
                )));
            }
            let ok = match tag {
                SplitTag::SeenTrain | SplitTag::SeenTest => seen.contains(&y),
                SplitTag::UnseenTest => !seen.contains(&y),
            };
            if !ok {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} of class {y} is tagged {tag}"
                )));
            }
        }
        if !self.features.is_finite() {
            return Err(Error::InvalidDataset(
                "features contain non-finite values".into(),
            ));
        }
        if !self.prototypes.is_finite() {
            return Err(Error::InvalidDataset(
                "prototypes contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.tags[i] == tag).collect()
    }

    pub fn split(&self, tag: SplitTag) -> LabeledFeatures {
        let idx = self.indices(tag);
        LabeledFeatures {
            features: self
                .features
                .gather_rows(&idx)
                .expect("indices are in range"),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Prototype rows of the given classes, in order.
    pub fn prototypes_of(&self, ids: &[u32]) -> Result<Tensor> {
        let idx: Vec<usize> = ids.iter().map(|&c| c as usize).collect();
        self.prototypes.gather_rows(&idx)
    }

    /// Min-max scales every feature column with parameters fit on the
    /// seen-train rows only.
    pub fn normalized(&self, scope: ScaleScope) -> Result<(Self, MinMaxScaler)> {
        let train = self.split(SplitTag::SeenTrain);
        let scaler = MinMaxScaler::fit(&train.features, scope)?;
        let mut out = self.clone();
        out.features = scaler.transform(&self.features)?;
        Ok((out, scaler))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ZslDataset {
        ZslDataset::new(
            Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap(),
            vec![0, 0, 1],
            vec![
                SplitTag::SeenTrain,
                SplitTag::SeenTest,
                SplitTag::UnseenTest,
            ],
            Tensor::from_rows(&[[1.0], [0.0]]).unwrap(),
            vec![0],
            vec![1],
        )
        .unwrap()
    }

    #[test]
    fn splits_and_indices() {
        let ds = tiny();
        assert_eq!(ds.indices(SplitTag::SeenTest), vec![1]);
        let u = ds.split(SplitTag::UnseenTest);
        assert_eq!(u.labels, vec![1]);
        assert_eq!(u.features.row(0), &[5.0, 6.0]);
    }

    #[test]
    fn overlapping_classes_rejected() {
        let mut ds = tiny();
        ds.unseen_ids = vec![0];
        assert!(matches!(ds.validate(), Err(Error::OverlappingSplits(0))));
    }

    #[test]
    fn unseen_sample_in_training_rejected() {
        let mut ds = tiny();
        ds.tags[2] = SplitTag::SeenTrain;
        assert!(matches!(ds.validate(), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn class_count_must_match_prototypes() {
        let mut ds = tiny();
        ds.prototypes = Tensor::zeros(3, 1);
        assert!(matches!(ds.validate(), Err(Error::DimensionMismatch(_))));
        let mut ds = tiny();
        ds.labels.pop();
        assert!(matches!(ds.validate(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn label_out_of_range_rejected() {
        let mut ds = tiny();
        ds.labels[0] = 9;
        assert!(matches!(ds.validate(), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn tag_parsing() {
        for t in [
            SplitTag::SeenTrain,
            SplitTag::SeenTest,
            SplitTag::UnseenTest,
        ] {
            assert_eq!(t.as_str().parse::<SplitTag>().unwrap(), t);
        }
        assert!("train".parse::<SplitTag>().is_err());
    }

    #[test]
    fn normalization_fits_on_seen_train_only() {
        let (ds, scaler) = tiny().normalized(ScaleScope::PerColumn).unwrap();
        // A single training row gives zero range, so every column maps to 0.
        assert_eq!(scaler.min(), &[1.0, 2.0]);
        assert_eq!(ds.features.row(2), &[0.0, 0.0]);
    }
}
