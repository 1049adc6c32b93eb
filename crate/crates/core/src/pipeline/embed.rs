//! Two-component PCA of real and synthesized unseen features.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::LabeledFeatures;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    Real,
    Syn,
}

impl SampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::Real => "real",
            SampleKind::Syn => "syn",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbedRow {
    pub class_id: u32,
    pub kind: SampleKind,
    pub pc: [f64; 2],
}

/// Projects the union of `real` and `syn` (real rows first) onto its two
/// leading principal components. Each component's sign is fixed so that its
/// largest-magnitude loading is positive.
pub fn pca_embedding(real: &LabeledFeatures, syn: &LabeledFeatures) -> Result<Vec<EmbedRow>> {
    let m = real.len() + syn.len();
    if m < 3 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 3 samples, got {m}"
        )));
    }
    if real.features.cols() != syn.features.cols() {
        return Err(Error::DimensionMismatch(
            "real and synthesized feature widths differ".into(),
        ));
    }
    let d = real.features.cols();
    let x = DMatrix::from_fn(m, d, |i, j| {
        if i < real.len() {
            real.features.get(i, j) as f64
        } else {
            syn.features.get(i - real.len(), j) as f64
        }
    });
    let mean = x.row_mean();
    let mut centred = x;
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }

    // Work in the smaller of feature space and sample space.
    let components: DMatrix<f64> = if d <= m {
        let cov = centred.transpose() * &centred;
        let eig = SymmetricEigen::new(cov);
        top_two(eig.eigenvalues.as_slice(), &eig.eigenvectors)
    } else {
        let gram = &centred * centred.transpose();
        let eig = SymmetricEigen::new(gram);
        let u = top_two(eig.eigenvalues.as_slice(), &eig.eigenvectors);
        let mut v = centred.transpose() * u;
        for mut col in v.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        v
    };
    let mut comps = components;
    for mut col in comps.column_iter_mut() {
        let lead = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            col.neg_mut();
        }
    }
    let proj = centred * comps;
    Ok((0..m)
        .map(|i| {
            let (class_id, kind) = if i < real.len() {
                (real.labels[i], SampleKind::Real)
            } else {
                (syn.labels[i - real.len()], SampleKind::Syn)
            };
            EmbedRow {
                class_id,
                kind,
                pc: [proj[(i, 0)], proj[(i, 1)]],
            }
        })
        .collect())
}

/// Eigenvectors of the two largest eigenvalues, as columns. With a single
/// dimension the second column is zero.
fn top_two(values: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    DMatrix::from_fn(vectors.nrows(), 2, |i, k| {
        order.get(k).map_or(0.0, |&c| vectors[(i, c)])
    })
}

/// `class_id,kind,pc1,pc2`.
pub fn embedding_csv(rows: &[EmbedRow]) -> String {
    let mut out = String::from("class_id,kind,pc1,pc2\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.class_id,
            r.kind.as_str(),
            r.pc[0],
            r.pc[1]
        )
        .unwrap();
    }
    out
}

/// Mean over classes present in both sets of the L2 distance between the
/// real and synthesized class centroids, in feature space.
pub fn centroid_gap(real: &LabeledFeatures, syn: &LabeledFeatures) -> Result<f64> {
    if real.features.cols() != syn.features.cols() {
        return Err(Error::DimensionMismatch(
            "real and synthesized feature widths differ".into(),
        ));
    }
    let centroids = |set: &LabeledFeatures| {
        let mut acc: std::collections::BTreeMap<u32, (Vec<f64>, usize)> = Default::default();
        for (i, &y) in set.labels.iter().enumerate() {
            let e = acc
                .entry(y)
                .or_insert_with(|| (vec![0.0; set.features.cols()], 0));
            for (s, &v) in e.0.iter_mut().zip(set.features.row(i)) {
                *s += v as f64;
            }
            e.1 += 1;
        }
        acc
    };
    let (r, s) = (centroids(real), centroids(syn));
    let mut total = 0.0;
    let mut count = 0usize;
    for (c, (sum_r, n_r)) in &r {
        if let Some((sum_s, n_s)) = s.get(c) {
            let dist: f64 = sum_r
                .iter()
                .zip(sum_s)
                .map(|(a, b)| (a / *n_r as f64 - b / *n_s as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            total += dist;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "no class appears in both sets".into(),
        ));
    }
    Ok(total / count as f64)
}
