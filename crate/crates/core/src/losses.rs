//! Training objectives.
//!
//! The graph-level functions record their computation so that the training
//! loop can differentiate the weighted total. Value-only helpers exist for
//! reporting and for checking the weighted sum.

use rand::Rng;

use crate::autodiff::{Graph, Reduce, Var};
use crate::error::{Error, Result};
use crate::models::{CriticNet, CriticVars, GeneratorNet};
use crate::tensor::Tensor;

/// Gradient-penalty coefficient of the critic loss.
pub const GP_WEIGHT: f32 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub scyc: f32,
    pub v2s: f32,
    pub s2s: f32,
}

impl LossWeights {
    /// Weights with the cycle and reconstruction terms tied together.
    pub fn coupled(semantic: f32, v2s: f32) -> Self {
        Self {
            scyc: semantic,
            v2s,
            s2s: semantic,
        }
    }

    pub fn zero() -> Self {
        Self {
            scyc: 0.0,
            v2s: 0.0,
            s2s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_scyc", self.scyc),
            ("lambda_v2s", self.v2s),
            ("lambda_s2s", self.s2s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-step loss values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub l_g: f32,
    pub l_d: f32,
    pub l_scyc: f32,
    pub l_v2s: f32,
    pub l_s2s: f32,
    pub l_total: f32,
}

/// `l_g + λ_Scyc·l_scyc + λ_V2S·l_v2s + λ_S2S·l_s2s`.
pub fn total_loss(l_g: f32, l_scyc: f32, l_v2s: f32, l_s2s: f32, w: &LossWeights) -> Result<f32> {
    if ![l_g, l_scyc, l_v2s, l_s2s].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { op: "total_loss" });
    }
    let total = l_g as f64
        + w.scyc as f64 * l_scyc as f64
        + w.v2s as f64 * l_v2s as f64
        + w.s2s as f64 * l_s2s as f64;
    Ok(total as f32)
}

/// Adds `weight · term` to `acc`, leaving `acc` untouched when the weight is
/// zero so that a disabled term never enters the graph.
pub fn add_weighted(g: &mut Graph, acc: Var, term: Option<Var>, weight: f32) -> Result<Var> {
    match term {
        Some(t) if weight != 0.0 => {
            let scaled = g.scale(t, weight)?;
            g.add(acc, scaled)
        }
        _ => Ok(acc),
    }
}

fn require_same_shape(g: &Graph, op: &'static str, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (g.value(a).shape(), g.value(b).shape());
    if sa != sb {
        return Err(Error::DimensionMismatch(format!("{op}: {sa:?} vs {sb:?}")));
    }
    Ok(())
}

/// `mean(|z_hat_real − z_k|) + mean(|z_hat_syn − z_k|)`, each mean over batch
/// and attribute dimensions.
pub fn semantic_cycle_loss(
    g: &mut Graph,
    z_hat_real: Var,
    z_hat_syn: Var,
    z_k: Var,
) -> Result<Var> {
    require_same_shape(g, "semantic_cycle_loss", z_hat_real, z_k)?;
    require_same_shape(g, "semantic_cycle_loss", z_hat_syn, z_k)?;
    let dr = g.sub(z_hat_real, z_k)?;
    let ds = g.sub(z_hat_syn, z_k)?;
    let lr = g.l1_mean(dr)?;
    let ls = g.l1_mean(ds)?;
    g.add(lr, ls)
}

/// `mean_i(1 − cos(z_hat_i, z_tilde_i))`.
pub fn v2s_alignment_loss(g: &mut Graph, z_hat: Var, z_tilde: Var) -> Result<Var> {
    require_same_shape(g, "v2s_alignment_loss", z_hat, z_tilde)?;
    let na = g.reduce(Reduce::L2Norm, z_hat, Some(1))?;
    let nb = g.reduce(Reduce::L2Norm, z_tilde, Some(1))?;
    for norms in [na, nb] {
        if let Some(row) = g.value(norms).data().iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroNorm { row });
        }
    }
    let prod = g.hadamard(z_hat, z_tilde)?;
    let dots = g.reduce(Reduce::Sum, prod, Some(1))?;
    let denom = g.hadamard(na, nb)?;
    let cos = g.div(dots, denom)?;
    let mean_cos = g.mean(cos)?;
    let neg = g.scale(mean_cos, -1.0)?;
    g.add_scalar(neg, 1.0)
}

/// `mean(|z_tilde − z_k|)` over batch and attribute dimensions.
pub fn s2s_reconstruction_loss(g: &mut Graph, z_tilde: Var, z_k: Var) -> Result<Var> {
    require_same_shape(g, "s2s_reconstruction_loss", z_tilde, z_k)?;
    let d = g.sub(z_tilde, z_k)?;
    g.l1_mean(d)
}

/// `mean_i (‖∂D/∂x (x_i, z_i)‖₂ − 1)²`.
pub fn gradient_penalty(g: &mut Graph, critic: &CriticVars, x: Var, z: Var) -> Result<Var> {
    let grad = critic.input_gradient(g, x, z)?;
    let norms = g.reduce(Reduce::L2Norm, grad, Some(1))?;
    let gap = g.add_scalar(norms, -1.0)?;
    let sq = g.hadamard(gap, gap)?;
    g.mean(sq)
}

/// Parts of the critic objective.
pub struct CriticLoss {
    pub loss: Var,
    pub penalty: Var,
}

/// `mean D(x_fake) − mean D(x_real) + gp_weight · GP(x_interp)`.
pub fn critic_loss(
    g: &mut Graph,
    critic: &CriticVars,
    x_real: Var,
    x_fake: Var,
    x_interp: Var,
    z: Var,
    gp_weight: f32,
) -> Result<CriticLoss> {
    let real = critic.forward(g, x_real, z)?;
    let fake = critic.forward(g, x_fake, z)?;
    let real = g.mean(real)?;
    let fake = g.mean(fake)?;
    let wass = g.sub(fake, real)?;
    let penalty = gradient_penalty(g, critic, x_interp, z)?;
    let weighted = g.scale(penalty, gp_weight)?;
    let loss = g.add(wass, weighted)?;
    Ok(CriticLoss { loss, penalty })
}

/// `−mean D(x_fake, z)`.
pub fn generator_adversarial_loss(
    g: &mut Graph,
    critic: &CriticVars,
    x_fake: Var,
    z: Var,
) -> Result<Var> {
    let s = critic.forward(g, x_fake, z)?;
    let m = g.mean(s)?;
    g.scale(m, -1.0)
}

/// Row-wise interpolation `t·a + (1−t)·b` with one coefficient per row.
pub fn interpolate_rows(a: &Tensor, b: &Tensor, t: &[f32]) -> Result<Tensor> {
    if a.shape() != b.shape() || t.len() != a.rows() {
        return Err(Error::shape("interpolate_rows", &a.shape(), &b.shape()));
    }
    let cols = a.cols();
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .enumerate()
        .map(|(i, (&x, &y))| {
            let w = t[i / cols];
            w * x + (1.0 - w) * y
        })
        .collect();
    Tensor::new(a.rows(), cols, data)
}

/// Evaluates the conditional WGAN-GP objectives `(l_d, l_g)` for one batch.
pub fn wgan_gp_losses<R: Rng + ?Sized>(
    critic: &CriticNet,
    generator: &GeneratorNet,
    x_real: &Tensor,
    z_cond: &Tensor,
    noise: &Tensor,
    rng: &mut R,
) -> Result<(f32, f32)> {
    let x_fake = generator.generate(noise, z_cond)?;
    let t: Vec<f32> = (0..x_real.rows()).map(|_| rng.random::<f32>()).collect();
    let x_interp = interpolate_rows(x_real, &x_fake, &t)?;
    let mut g = Graph::new();
    let d = critic.bind(&mut g);
    let (xr, xf, xi, z) = (
        g.constant(x_real),
        g.constant(&x_fake),
        g.constant(&x_interp),
        g.constant(z_cond),
    );
    let parts = critic_loss(&mut g, &d, xr, xf, xi, z, GP_WEIGHT)?;
    let l_g = generator_adversarial_loss(&mut g, &d, xf, z)?;
    let (l_d, l_g) = (g.value(parts.loss).item(), g.value(l_g).item());
    if !g.value(parts.penalty).is_finite() {
        return Err(Error::NonFinite {
            op: "gradient_penalty",
        });
    }
    Ok((l_d, l_g))
}
