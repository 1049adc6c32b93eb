use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleScope {
    /// One (min, max) pair per feature column.
    PerColumn,
    /// A single (min, max) pair over the whole matrix.
    Global,
}

/// Min-max scaling parameters, fit once and reused on held-out rows.
/// Constant columns map to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxScaler {
    min: Vec<f32>,
    range: Vec<f32>,
}

impl MinMaxScaler {
    pub fn fit(x: &Tensor, scope: ScaleScope) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyReduction {
                op: "minmax_normalize",
            });
        }
        let cols = x.cols();
        let mut lo = vec![f32::INFINITY; cols];
        let mut hi = vec![f32::NEG_INFINITY; cols];
        for i in 0..x.rows() {
            for (j, &v) in x.row(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        if scope == ScaleScope::Global {
            let l = lo.iter().copied().fold(f32::INFINITY, f32::min);
            let h = hi.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            lo.fill(l);
            hi.fill(h);
        }
        let range = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
        Ok(Self { min: lo, range })
    }

    pub fn min(&self) -> &[f32] {
        &self.min
    }

    pub fn range(&self) -> &[f32] {
        &self.range
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.min.len() {
            return Err(Error::DimensionMismatch(format!(
                "scaler fit on {} columns, got {}",
                self.min.len(),
                x.cols()
            )));
        }
        let cols = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let j = k % cols;
                if self.range[j] > 0.0 {
                    (v - self.min[j]) / self.range[j]
                } else {
                    0.0
                }
            })
            .collect();
        Tensor::new(x.rows(), cols, data)
    }

    pub fn fit_transform(x: &Tensor, scope: ScaleScope) -> Result<(Tensor, Self)> {
        let s = Self::fit(x, scope)?;
        Ok((s.transform(x)?, s))
    }
}
