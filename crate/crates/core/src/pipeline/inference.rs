use rand::Rng;

use crate::data::LabeledFeatures;
use crate::error::{Error, Result};
use crate::evolvement::InferencePrototypes;
use crate::models::{GeneratorNet, V2smNet};
use crate::tensor::Tensor;

/// `n_syn` generated features per unseen class, conditioned on the blended
/// prototypes, class-major order. Noise is drawn fresh for every row.
pub fn synthesize_unseen<R: Rng + ?Sized>(
    generator: &GeneratorNet,
    infp: &InferencePrototypes,
    n_syn: usize,
    rng: &mut R,
) -> Result<LabeledFeatures> {
    if n_syn == 0 {
        return Err(Error::InvalidArgument("n_syn must be at least 1".into()));
    }
    let rows: Vec<usize> = (0..infp.unseen_ids.len())
        .flat_map(|r| std::iter::repeat_n(r, n_syn))
        .collect();
    let cond = infp.z_blend.gather_rows(&rows)?;
    let noise = Tensor::randn(rows.len(), generator.attr_dim, 1.0, rng);
    Ok(LabeledFeatures {
        features: generator.generate(&noise, &cond)?,
        labels: rows.iter().map(|&r| infp.unseen_ids[r]).collect(),
    })
}

/// `[x | table[label]]` for each row. `table` is indexed by class id.
pub fn enhance(features: &Tensor, labels: &[u32], table: &Tensor) -> Result<Tensor> {
    if labels.len() != features.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if let Some(&missing) = labels.iter().find(|&&c| c as usize >= table.rows()) {
        return Err(Error::InvalidArgument(format!(
            "no prototype row for class {missing}"
        )));
    }
    let idx: Vec<usize> = labels.iter().map(|&c| c as usize).collect();
    features.concat_cols(&table.gather_rows(&idx)?)
}

/// For each row, the candidate class whose prototype in `table` has the
/// largest cosine similarity with `V2SM(x)`. Ties go to the earlier
/// candidate.
pub fn infer_classes(
    v2sm: &V2smNet,
    features: &Tensor,
    table: &Tensor,
    candidates: &[u32],
) -> Result<Vec<u32>> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate classes".into()));
    }
    let mapped = v2sm.map(features)?;
    let protos: Vec<(u32, &[f32], f64)> = candidates
        .iter()
        .map(|&c| {
            let row = table.row(c as usize);
            (c, row, norm(row))
        })
        .collect();
    Ok((0..mapped.rows())
        .map(|i| {
            let m = mapped.row(i);
            let mn = norm(m);
            let mut best = (candidates[0], f64::NEG_INFINITY);
            for &(c, p, pn) in &protos {
                let dot: f64 = m.iter().zip(p).map(|(a, b)| *a as f64 * *b as f64).sum();
                let cos = if mn > 0.0 && pn > 0.0 {
                    dot / (mn * pn)
                } else {
                    0.0
                };
                if cos > best.1 {
                    best = (c, cos);
                }
            }
            best.0
        })
        .collect())
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
}
