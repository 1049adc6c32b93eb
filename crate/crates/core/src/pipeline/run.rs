use super::classifier::{train_classifier, SoftmaxClassifier};
use super::config::{EnhanceLabels, PrototypeNorm, SeenEnhanceSource, TrainConfig};
use super::inference::{enhance, infer_classes, synthesize_unseen};
use super::metrics::{macro_accuracy, GzslMetrics};
use super::train::{train_dsp, TrainOutput};
use super::{rng_stream, Stream};
use crate::data::{LabeledFeatures, ScaleScope, SplitTag, ZslDataset};
use crate::error::{Error, Result};
use crate::evolvement::{freeze_inference_prototypes, InferencePrototypes};
use crate::models::Models;
use crate::tensor::Tensor;

/// Applies the configured preprocessing: min-max feature scaling fit on the
/// seen-train rows and optional unit-L2 prototypes.
pub fn prepare(data: &ZslDataset, cfg: &TrainConfig) -> Result<ZslDataset> {
    let mut out = if cfg.normalize_features && !data.indices(SplitTag::SeenTrain).is_empty() {
        data.normalized(ScaleScope::PerColumn)?.0
    } else {
        data.clone()
    };
    out.prototypes = normalize_prototypes(&out.prototypes, cfg.prototype_norm);
    Ok(out)
}

pub fn normalize_prototypes(z: &Tensor, norm: PrototypeNorm) -> Tensor {
    match norm {
        PrototypeNorm::Raw => z.clone(),
        PrototypeNorm::UnitL2 => {
            let mut out = z.clone();
            let cols = z.cols();
            for i in 0..z.rows() {
                let n = z
                    .row(i)
                    .iter()
                    .map(|&v| (v as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if n > 0.0 {
                    for v in &mut out.data_mut()[i * cols..(i + 1) * cols] {
                        *v = (*v as f64 / n) as f32;
                    }
                }
            }
            out
        }
    }
}

/// Everything produced by inference and classification.
pub struct Evaluation {
    pub metrics: GzslMetrics,
    pub prototypes: InferencePrototypes,
    pub synthetic: LabeledFeatures,
    /// Prototype appended to each class's rows, indexed by class id.
    pub enhance_table: Tensor,
    pub gzsl: SoftmaxClassifier,
    pub czsl: SoftmaxClassifier,
}

/// Inference and evaluation with trained networks on a prepared dataset.
/// `final_state` holds the seen-class dynamic prototypes at the end of
/// training (rows in `seen_ids` order).
pub fn evaluate_models(
    models: &Models,
    data: &ZslDataset,
    final_state: Option<&Tensor>,
    cfg: &TrainConfig,
) -> Result<Evaluation> {
    let seen_test = data.split(SplitTag::SeenTest);
    let unseen_test = data.split(SplitTag::UnseenTest);
    let seen_train = data.split(SplitTag::SeenTrain);
    if seen_test.is_empty() || unseen_test.is_empty() || seen_train.is_empty() {
        return Err(Error::InvalidDataset(
            "evaluation needs seen-train, seen-test and unseen-test rows".into(),
        ));
    }
    let infp = freeze_inference_prototypes(
        &data.prototypes,
        &data.unseen_ids,
        &models.vope,
        cfg.inference_alpha(),
    )?;
    let synthetic = synthesize_unseen(
        &models.generator,
        &infp,
        cfg.n_syn,
        &mut rng_stream(cfg.seed, Stream::Synthesis),
    )?;

    let mut table = infp.z_tilde.clone();
    let a = table.cols();
    if cfg.enhance_with_blend {
        for (r, &c) in infp.unseen_ids.iter().enumerate() {
            let c = c as usize;
            table.data_mut()[c * a..(c + 1) * a].copy_from_slice(infp.z_blend.row(r));
        }
    }
    if let (SeenEnhanceSource::TrainingState, Some(state)) = (cfg.seen_enhance, final_state) {
        let evolved = models.vope.evolve(state)?;
        for (r, &c) in data.seen_ids.iter().enumerate() {
            let c = c as usize;
            table.data_mut()[c * a..(c + 1) * a].copy_from_slice(evolved.row(r));
        }
    }

    let all: Vec<u32> = (0..data.num_classes() as u32).collect();
    let rows = |x: &Tensor, truth: &[u32], candidates: &[u32]| -> Result<Tensor> {
        if !cfg.ablation.enhancement {
            return Ok(x.clone());
        }
        let labels = match cfg.enhance_labels {
            EnhanceLabels::Label => truth.to_vec(),
            EnhanceLabels::Inferred => infer_classes(&models.v2sm, x, &table, candidates)?,
        };
        enhance(x, &labels, &table)
    };

    let mut rng = rng_stream(cfg.seed, Stream::Classifier);
    let train_x = seen_train.features.concat_rows(&synthetic.features)?;
    let train_y: Vec<u32> = seen_train
        .labels
        .iter()
        .chain(&synthetic.labels)
        .copied()
        .collect();
    let gzsl = train_classifier(
        &rows(&train_x, &train_y, &all)?,
        &train_y,
        &all,
        &cfg.classifier,
        &mut rng,
    )?;
    let czsl = train_classifier(
        &rows(&synthetic.features, &synthetic.labels, &data.unseen_ids)?,
        &synthetic.labels,
        &data.unseen_ids,
        &cfg.classifier,
        &mut rng,
    )?;

    let u_pred = gzsl.predict(&rows(&unseen_test.features, &unseen_test.labels, &all)?)?;
    let s_pred = gzsl.predict(&rows(&seen_test.features, &seen_test.labels, &all)?)?;
    let c_pred = czsl.predict(&rows(
        &unseen_test.features,
        &unseen_test.labels,
        &data.unseen_ids,
    )?)?;
    let metrics = GzslMetrics::new(
        macro_accuracy(&u_pred, &unseen_test.labels),
        macro_accuracy(&s_pred, &seen_test.labels),
        macro_accuracy(&c_pred, &unseen_test.labels),
    );
    Ok(Evaluation {
        metrics,
        prototypes: infp,
        synthetic,
        enhance_table: table,
        gzsl,
        czsl,
    })
}

pub struct RunOutput {
    pub trained: TrainOutput,
    pub evaluation: Evaluation,
    /// The preprocessed dataset the run used.
    pub data: ZslDataset,
}

/// Drift reference rows for the seen classes: the true prototypes when
/// known, else the predefined ones.
pub fn drift_reference(
    data: &ZslDataset,
    true_prototypes: Option<&Tensor>,
    cfg: &TrainConfig,
) -> Result<Tensor> {
    let idx: Vec<usize> = data.seen_ids.iter().map(|&c| c as usize).collect();
    match true_prototypes {
        Some(t) => {
            if t.shape() != data.prototypes.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "true prototypes {:?} vs predefined {:?}",
                    t.shape(),
                    data.prototypes.shape()
                )));
            }
            normalize_prototypes(t, cfg.prototype_norm).gather_rows(&idx)
        }
        None => data.prototypes.gather_rows(&idx),
    }
}

/// Preprocess, train, synthesize, classify and score.
pub fn run_experiment(
    raw: &ZslDataset,
    true_prototypes: Option<&Tensor>,
    cfg: &TrainConfig,
) -> Result<RunOutput> {
    let data = prepare(raw, cfg)?;
    let reference = drift_reference(&data, true_prototypes, cfg)?;
    let trained = train_dsp(&data, cfg, &reference)?;
    let evaluation = evaluate_models(&trained.models, &data, Some(&trained.state.z), cfg)?;
    Ok(RunOutput {
        trained,
        evaluation,
        data,
    })
}
