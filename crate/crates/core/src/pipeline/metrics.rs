use std::collections::BTreeMap;

/// Accuracies in percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GzslMetrics {
    /// Unseen-class accuracy of the GZSL classifier.
    pub u: f64,
    /// Seen-class accuracy of the GZSL classifier.
    pub s: f64,
    pub h: f64,
    /// Unseen-class accuracy of the CZSL classifier.
    pub acc: f64,
}

impl GzslMetrics {
    pub fn new(u: f64, s: f64, acc: f64) -> Self {
        Self {
            u,
            s,
            h: harmonic_mean(s, u),
            acc,
        }
    }

    /// `run_id,seed,U,S,H,acc` row (no newline).
    pub fn csv_row(&self, run_id: &str, seed: u64) -> String {
        format!(
            "{run_id},{seed},{},{},{},{}",
            self.u, self.s, self.h, self.acc
        )
    }
}

pub const METRICS_HEADER: &str = "run_id,seed,U,S,H,acc";

/// `2·S·U/(S+U)`, or 0 when both are 0.
pub fn harmonic_mean(s: f64, u: f64) -> f64 {
    if s + u > 0.0 {
        2.0 * s * u / (s + u)
    } else {
        0.0
    }
}

/// Per-class top-1 accuracy averaged over the classes present in `truth`,
/// in percent. Empty input gives 0.
pub fn macro_accuracy(pred: &[u32], truth: &[u32]) -> f64 {
    let mut per_class: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        let e = per_class.entry(t).or_default();
        e.0 += usize::from(p == t);
        e.1 += 1;
    }
    if per_class.is_empty() {
        return 0.0;
    }
    let sum: f64 = per_class
        .values()
        .map(|&(hit, n)| hit as f64 / n as f64)
        .sum();
    100.0 * sum / per_class.len() as f64
}
