use rand::seq::SliceRandom;
use rand::Rng;

use super::config::ClassifierConfig;
use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::models::Linear;
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

/// Single linear layer over a fixed label space, trained with softmax
/// cross-entropy.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxClassifier {
    /// Class id of each output unit.
    pub classes: Vec<u32>,
    pub layer: Linear,
}

impl SoftmaxClassifier {
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.layer.bind_as(&mut g, false);
        let vx = g.constant(x);
        let out = vars.forward(&mut g, vx)?;
        Ok(g.value(out).clone())
    }

    /// Top-1 class ids. Ties go to the lower output index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<u32>> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows())
            .map(|i| {
                let row = logits.row(i);
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

/// Trains on `(features, labels)` over the label space `classes`. Every class
/// must have at least one row.
pub fn train_classifier<R: Rng + ?Sized>(
    features: &Tensor,
    labels: &[u32],
    classes: &[u32],
    cfg: &ClassifierConfig,
    rng: &mut R,
) -> Result<SoftmaxClassifier> {
    if labels.len() != features.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let max_id = classes.iter().copied().max().unwrap_or(0) as usize;
    let mut slot = vec![usize::MAX; max_id + 1];
    for (k, &c) in classes.iter().enumerate() {
        slot[c as usize] = k;
    }
    let mut targets = Vec::with_capacity(labels.len());
    for &y in labels {
        match slot.get(y as usize) {
            Some(&k) if k != usize::MAX => targets.push(k),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "label {y} is outside the label space"
                )))
            }
        }
    }
    let mut counts = vec![0usize; classes.len()];
    for &t in &targets {
        counts[t] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(classes[k]));
    }

    let mut clf = SoftmaxClassifier {
        classes: classes.to_vec(),
        layer: Linear::new(features.cols(), classes.len(), rng),
    };
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, 0.9, 0.999));
    let mut order: Vec<usize> = (0..targets.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x = features.gather_rows(chunk)?;
            let t: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let mut g = Graph::new();
            let vars = clf.layer.bind(&mut g);
            let vx = g.constant(&x);
            let logits = vars.forward(&mut g, vx)?;
            let loss = g.softmax_cross_entropy(logits, &t)?;
            let grads = g.backward(loss)?;
            let gs = [grads.wrt(vars.weight), grads.wrt(vars.bias)];
            adam.step(&mut [&mut clf.layer.weight, &mut clf.layer.bias], &gs)?;
        }
    }
    Ok(clf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(rng: &mut ChaCha8Rng) -> (Tensor, Vec<u32>) {
        let centres = [[4.0f32, 0.0], [0.0, 4.0], [-4.0, -4.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, centre) in centres.iter().enumerate() {
            for _ in 0..30 {
                rows.push([
                    centre[0] + rng.random_range(-1.0..1.0),
                    centre[1] + rng.random_range(-1.0..1.0),
                ]);
                labels.push(c as u32 + 10);
            }
        }
        (Tensor::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_toy_set_is_fit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (x, y) = toy(&mut rng);
        let cfg = ClassifierConfig {
            epochs: 200,
            lr: 0.05,
            batch_size: 32,
        };
        let clf = train_classifier(&x, &y, &[10, 11, 12], &cfg, &mut rng).unwrap();
        assert_eq!(clf.predict(&x).unwrap(), y);
        assert_eq!(clf.layer.outputs(), 3);
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = toy(&mut ChaCha8Rng::seed_from_u64(1));
        let cfg = ClassifierConfig::default();
        let a = train_classifier(
            &x,
            &y,
            &[10, 11, 12],
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let b = train_classifier(
            &x,
            &y,
            &[10, 11, 12],
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_class_rejected() {
        let (x, y) = toy(&mut ChaCha8Rng::seed_from_u64(1));
        let err = train_classifier(
            &x,
            &y,
            &[10, 11, 12, 13],
            &ClassifierConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(err, Err(Error::EmptyClass(13))));
        let err = train_classifier(
            &x,
            &y,
            &[10, 11],
            &ClassifierConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}
