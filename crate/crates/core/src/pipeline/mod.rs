//! End-to-end training, synthesis, classification and evaluation.

mod classifier;
mod config;
mod embed;
mod inference;
mod metrics;
mod run;
mod train;

pub use classifier::{train_classifier, SoftmaxClassifier};
pub use config::{
    Ablation, Cadence, ClassifierConfig, EnhanceLabels, PrototypeNorm, SeenEnhanceSource,
    TrainConfig, Widths,
};
pub use embed::{centroid_gap, embedding_csv, pca_embedding, EmbedRow, SampleKind};
pub use inference::{enhance, infer_classes, synthesize_unseen};
pub use metrics::{harmonic_mean, macro_accuracy, GzslMetrics, METRICS_HEADER};
pub use run::{
    drift_reference, evaluate_models, normalize_prototypes, prepare, run_experiment, Evaluation,
    RunOutput,
};
pub use train::{train_dsp, EpochRecord, History, TrainOutput};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 0,
    Batches = 1,
    Noise = 2,
    Synthesis = 3,
    Classifier = 4,
}

pub fn rng_stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
