//! Dynamic semantic prototypes.
//!
//! During training each seen class carries a prototype `z_k` that starts at
//! the predefined attribute vector and is pulled toward the evolver output by
//! an exponential moving average, `z_{k+1} = α·z_k + (1−α)·VOPE(z_k)`. At
//! inference the evolver is applied once to the predefined prototypes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::models::VopeNet;
use crate::tensor::Tensor;

/// Elementwise `α·a + (1−α)·b`, evaluated in `f64` and rounded once so each
/// result lies between its two inputs.
pub fn blend(a: &Tensor, b: &Tensor, alpha: f32) -> Result<Tensor> {
    if alpha == 1.0 {
        if a.shape() != b.shape() {
            return Err(Error::shape("blend", &a.shape(), &b.shape()));
        }
        return Ok(a.clone());
    }
    let al = alpha as f64;
    a.zip_map(b, |x, y| (al * x as f64 + (1.0 - al) * y as f64) as f32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicPrototypeState {
    /// Class id of each row of `z`.
    pub class_ids: Vec<u32>,
    pub z: Tensor,
    pub alpha: f32,
    pub step: u64,
}

impl DynamicPrototypeState {
    /// Step-0 state: the predefined prototypes, unchanged.
    pub fn new(class_ids: Vec<u32>, predefined: Tensor, alpha: f32) -> Result<Self> {
        if class_ids.len() != predefined.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} class ids for {} prototype rows",
                class_ids.len(),
                predefined.rows()
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha {alpha} outside [0, 1]"
            )));
        }
        Ok(Self {
            class_ids,
            z: predefined,
            alpha,
            step: 0,
        })
    }

    pub fn row_of(&self, class_id: u32) -> Option<usize> {
        self.class_ids.iter().position(|&c| c == class_id)
    }

    /// Current prototype of each labelled sample.
    pub fn rows_for(&self, labels: &[u32]) -> Result<Tensor> {
        let idx = labels
            .iter()
            .map(|&c| {
                self.row_of(c).ok_or_else(|| {
                    Error::InvalidArgument(format!("class {c} has no dynamic prototype"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.z.gather_rows(&idx)
    }

    /// One evolvement step; `self` is left untouched.
    pub fn evolve_step(&self, vope: &VopeNet) -> Result<Self> {
        let evolved = vope.evolve(&self.z)?;
        self.step_towards(&evolved)
    }

    /// Blends toward a given evolver output `z_tilde`.
    pub fn step_towards(&self, z_tilde: &Tensor) -> Result<Self> {
        if !z_tilde.is_finite() {
            return Err(Error::NonFinite { op: "evolve_step" });
        }
        Ok(Self {
            class_ids: self.class_ids.clone(),
            z: blend(&self.z, z_tilde, self.alpha)?,
            alpha: self.alpha,
            step: self.step + 1,
        })
    }

    /// Per-class L2 distance to `reference`, whose rows follow `class_ids`.
    pub fn drift(&self, reference: &Tensor) -> Result<Vec<f32>> {
        prototype_drift(&self.z, reference)
    }
}

/// `‖a_c − b_c‖₂` for every row `c`.
pub fn prototype_drift(a: &Tensor, b: &Tensor) -> Result<Vec<f32>> {
    if a.shape() != b.shape() {
        return Err(Error::shape("prototype_drift", &a.shape(), &b.shape()));
    }
    Ok((0..a.rows())
        .map(|i| {
            a.row(i)
                .iter()
                .zip(b.row(i))
                .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
                .sum::<f64>()
                .sqrt() as f32
        })
        .collect())
}

/// Prototypes used after training.
#[derive(Clone, Debug, PartialEq)]
pub struct InferencePrototypes {
    /// `VOPE(z^c)` for every class, indexed by class id.
    pub z_tilde: Tensor,
    /// `α·z^u + (1−α)·VOPE(z^u)` for the unseen classes, in `unseen_ids` order.
    pub z_blend: Tensor,
    pub unseen_ids: Vec<u32>,
}

/// Runs the evolver once over the predefined prototypes (all classes, rows
/// indexed by class id) and blends the unseen rows.
pub fn freeze_inference_prototypes(
    predefined: &Tensor,
    unseen_ids: &[u32],
    vope: &VopeNet,
    alpha: f32,
) -> Result<InferencePrototypes> {
    if let Some(&bad) = unseen_ids
        .iter()
        .find(|&&c| c as usize >= predefined.rows())
    {
        return Err(Error::DimensionMismatch(format!(
            "unseen class {bad} but only {} prototype rows",
            predefined.rows()
        )));
    }
    let z_tilde = vope.evolve(predefined)?;
    if !z_tilde.is_finite() {
        return Err(Error::NonFinite {
            op: "freeze_inference_prototypes",
        });
    }
    let idx: Vec<usize> = unseen_ids.iter().map(|&c| c as usize).collect();
    let z_blend = blend(
        &predefined.gather_rows(&idx)?,
        &z_tilde.gather_rows(&idx)?,
        alpha,
    )?;
    Ok(InferencePrototypes {
        z_tilde,
        z_blend,
        unseen_ids: unseen_ids.to_vec(),
    })
}

/// CSV with header `class_id,a_0,...,a_{n-1}`, one row per class.
pub fn prototypes_csv(class_ids: &[u32], z: &Tensor) -> String {
    let mut out = String::from("class_id");
    for j in 0..z.cols() {
        write!(out, ",a_{j}").unwrap();
    }
    out.push('\n');
    for (i, c) in class_ids.iter().enumerate() {
        write!(out, "{c}").unwrap();
        for v in z.row(i) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Linear;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_vope(dim: usize) -> VopeNet {
        let mut v = VopeNet::new(dim, 2 * dim, &mut ChaCha8Rng::seed_from_u64(0));
        v.out = Linear::zeros(2 * dim, dim);
        v.gate = Linear::zeros(dim, dim);
        v.gate.bias = Tensor::full(1, dim, 60.0);
        v
    }

    #[test]
    fn alpha_one_keeps_state_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Tensor::randn(4, 6, 1.0, &mut rng);
        let state = DynamicPrototypeState::new(vec![0, 1, 2, 3], z.clone(), 1.0).unwrap();
        let vope = VopeNet::new(6, 12, &mut rng);
        let next = state.evolve_step(&vope).unwrap();
        assert_eq!(next.z.data(), z.data());
        assert_eq!(next.step, 1);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn smooth_update_example() {
        let state =
            DynamicPrototypeState::new(vec![0], Tensor::from_rows(&[[1.0, 0.0]]).unwrap(), 0.9)
                .unwrap();
        let next = state
            .step_towards(&Tensor::from_rows(&[[0.0, 1.0]]).unwrap())
            .unwrap();
        assert!((next.z.get(0, 0) - 0.9).abs() < 1e-7);
        assert!((next.z.get(0, 1) - 0.1).abs() < 1e-7);
    }

    #[test]
    fn non_finite_evolver_output_is_rejected() {
        let state = DynamicPrototypeState::new(vec![0], Tensor::zeros(1, 2), 0.9).unwrap();
        let bad = Tensor::from_rows(&[[f32::NAN, 0.0]]).unwrap();
        assert!(matches!(
            state.step_towards(&bad),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn drift_examples() {
        let a = Tensor::from_rows(&[[3.0, 4.0], [1.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(prototype_drift(&a, &b).unwrap(), vec![5.0, 0.0]);
        assert!(prototype_drift(&a, &Tensor::zeros(1, 2)).is_err());
    }

    #[test]
    fn identity_evolver_freezes_to_predefined() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Tensor::randn(6, 4, 1.0, &mut rng);
        let inf = freeze_inference_prototypes(&z, &[1, 4], &identity_vope(4), 0.9).unwrap();
        assert_eq!(inf.z_tilde, z);
        assert!(inf.z_blend.max_abs_diff(&z.gather_rows(&[1, 4]).unwrap()) < 1e-6);
    }

    #[test]
    fn alpha_zero_blend_is_evolver_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = Tensor::randn(5, 3, 1.0, &mut rng);
        let vope = VopeNet::new(3, 6, &mut rng);
        let inf = freeze_inference_prototypes(&z, &[0, 2], &vope, 0.0).unwrap();
        let direct = vope.evolve(&z).unwrap().gather_rows(&[0, 2]).unwrap();
        assert_eq!(inf.z_blend, direct);
        // Deterministic and idempotent for fixed parameters.
        assert_eq!(
            freeze_inference_prototypes(&z, &[0, 2], &vope, 0.0).unwrap(),
            inf
        );
    }

    #[test]
    fn cub_shaped_inference_prototypes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = Tensor::randn(200, 312, 1.0, &mut rng);
        let unseen: Vec<u32> = (150..200).collect();
        let vope = VopeNet::new(312, 624, &mut rng);
        let inf = freeze_inference_prototypes(&z, &unseen, &vope, 0.9).unwrap();
        assert_eq!(inf.z_tilde.shape(), [200, 312]);
        assert_eq!(inf.z_blend.shape(), [50, 312]);
        assert!(freeze_inference_prototypes(&z, &[200], &vope, 0.9).is_err());
    }

    #[test]
    fn csv_export_header() {
        let z = Tensor::from_rows(&[[0.5, 1.0, 2.0]]).unwrap();
        let csv = prototypes_csv(&[7], &z);
        assert_eq!(csv, "class_id,a_0,a_1,a_2\n7,0.5,1,2\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn blend_is_between_and_contracts(
            pairs in prop::collection::vec((-10.0f32..10.0, -10.0f32..10.0), 1..40),
            alpha in 0.0f32..=1.0,
        ) {
            let (a, b): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
            let n = a.len();
            let za = Tensor::new(1, n, a).unwrap();
            let zb = Tensor::new(1, n, b).unwrap();
            let next = blend(&za, &zb, alpha).unwrap();
            let mut before = 0.0f64;
            let mut after = 0.0f64;
            for i in 0..n {
                let (x, y, v) = (za.data()[i], zb.data()[i], next.data()[i]);
                prop_assert!(v >= x.min(y) && v <= x.max(y));
                prop_assert!((v - x).abs() as f64 <= (1.0 - alpha as f64) * (y - x).abs() as f64
                    + 1e-6 * (1.0 + x.abs().max(y.abs()) as f64));
                before += (x as f64 - y as f64).abs();
                after += (v as f64 - y as f64).abs();
            }
            prop_assert!((after - alpha as f64 * before).abs() <= 1e-6 * (n as f64 + before + after));
        }
    }
}
