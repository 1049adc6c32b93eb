//! Finite-difference helpers shared by unit tests.

use crate::tensor::Tensor;

/// Entries smaller than this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-3;

/// Central differences of `f` at `x` in `f64`.
pub fn central_diff(x: &[f64], f: impl Fn(&[f64]) -> f64, h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(REL_FLOOR)
}

pub fn assert_close_to_fd(ad: &Tensor, fd: &[f64], tol: f64) {
    assert_eq!(ad.len(), fd.len());
    for (i, (&a, &f)) in ad.data().iter().zip(fd).enumerate() {
        let e = rel_err(a as f64, f);
        assert!(
            e < tol,
            "entry {i}: reverse-mode {a} vs finite difference {f} (rel err {e})"
        );
    }
}
