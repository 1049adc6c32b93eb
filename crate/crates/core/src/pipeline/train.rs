use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{Cadence, TrainConfig};
use super::{rng_stream, Stream};
use crate::autodiff::{Gradients, Graph, Var};
use crate::data::{LabeledFeatures, SplitTag, ZslDataset};
use crate::error::{Error, Result};
use crate::evolvement::{prototype_drift, DynamicPrototypeState};
use crate::losses::{
    add_weighted, critic_loss, generator_adversarial_loss, interpolate_rows,
    s2s_reconstruction_loss, semantic_cycle_loss, total_loss, v2s_alignment_loss, LossReport,
    GP_WEIGHT,
};
use crate::models::{Models, Network};
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

/// Mean losses of one epoch and the prototype drift after it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: LossReport,
    pub drift_mean: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Mean drift of the predefined seen prototypes to the reference.
    pub initial_drift: f32,
}

impl History {
    pub fn final_drift(&self) -> f32 {
        self.epochs
            .last()
            .map_or(self.initial_drift, |r| r.drift_mean)
    }

    /// `epoch,l_g,l_d,l_scyc,l_v2s,l_s2s,drift_mean`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,l_g,l_d,l_scyc,l_v2s,l_s2s,drift_mean\n");
        for r in &self.epochs {
            let l = &r.losses;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, l.l_g, l.l_d, l.l_scyc, l.l_v2s, l.l_s2s, r.drift_mean
            ));
        }
        out
    }
}

pub struct TrainOutput {
    pub models: Models,
    pub state: DynamicPrototypeState,
    pub history: History,
}

struct Optimizers {
    critic: Adam,
    generator: Adam,
    v2sm: Adam,
    vope: Adam,
}

fn mean_drift(state: &DynamicPrototypeState, reference: &Tensor) -> Result<f32> {
    let d = prototype_drift(&state.z, reference)?;
    Ok((d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64) as f32)
}

fn apply(adam: &mut Adam, net: &mut dyn Network, grads: &Gradients, vars: &[Var]) -> Result<()> {
    let gs: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();
    adam.step(&mut net.parameters_mut(), &gs)
}

/// Trains the generator, critic, V2SM and VOPE on the seen-train split.
///
/// `reference` holds one row per seen class (in `seen_ids` order) and is
/// only used for the drift column of the history; pass the true prototypes
/// when known, the predefined ones otherwise.
pub fn train_dsp(data: &ZslDataset, cfg: &TrainConfig, reference: &Tensor) -> Result<TrainOutput> {
    cfg.validate()?;
    let train = data.split(SplitTag::SeenTrain);
    if train.is_empty() {
        return Err(Error::InvalidDataset("seen-train split is empty".into()));
    }
    let dims = cfg.widths.dims(data.attr_dim(), data.feature_dim());
    let mut models = Models::new(dims, &mut rng_stream(cfg.seed, Stream::Init));
    let mut data_rng = rng_stream(cfg.seed, Stream::Batches);
    let mut noise_rng = rng_stream(cfg.seed, Stream::Noise);

    let mut state = DynamicPrototypeState::new(
        data.seen_ids.clone(),
        data.prototypes_of(&data.seen_ids)?,
        cfg.effective_alpha(),
    )?;
    let initial_drift = mean_drift(&state, reference)?;
    let w = cfg.effective_weights();
    let adam = AdamConfig::new(cfg.lr, cfg.beta1, cfg.beta2);
    let mut opt = Optimizers {
        critic: Adam::new(adam),
        generator: Adam::new(adam),
        v2sm: Adam::new(adam),
        vope: Adam::new(adam),
    };

    let n = train.len();
    let b = cfg.batch_size.min(n);
    let attr = data.attr_dim();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut global_batch = 0usize;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut data_rng);
        let mut sum = [0f64; 6];
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(b).enumerate() {
            let ctx = |e: Error| Error::Diverged {
                epoch,
                batch: bi,
                source: Box::new(e),
            };
            let mut l_d = 0.0;
            for step in 0..cfg.critic_steps {
                let idx: Vec<usize> = if step == 0 {
                    chunk.to_vec()
                } else {
                    (0..chunk.len())
                        .map(|_| data_rng.random_range(0..n))
                        .collect()
                };
                l_d = critic_step(
                    &mut models,
                    &mut opt,
                    &train,
                    &state,
                    &idx,
                    attr,
                    &mut noise_rng,
                )
                .map_err(ctx)?;
            }
            let report = generator_step(
                &mut models,
                &mut opt,
                &train,
                &state,
                chunk,
                attr,
                cfg,
                &mut noise_rng,
            )
            .and_then(|mut r| {
                r.l_d = l_d;
                r.l_total = total_loss(r.l_g, r.l_scyc, r.l_v2s, r.l_s2s, &w)?;
                Ok(r)
            })
            .map_err(ctx)?;
            for (s, v) in sum.iter_mut().zip([
                report.l_g,
                report.l_d,
                report.l_scyc,
                report.l_v2s,
                report.l_s2s,
                report.l_total,
            ]) {
                *s += v as f64;
            }
            batches += 1;
            global_batch += 1;
            if let Cadence::PerBatches(every) = cfg.cadence {
                if global_batch.is_multiple_of(every) {
                    state = state.evolve_step(&models.vope).map_err(ctx)?;
                }
            }
        }
        if cfg.cadence == Cadence::PerEpoch {
            state = state
                .evolve_step(&models.vope)
                .map_err(|e| Error::Diverged {
                    epoch,
                    batch: batches,
                    source: Box::new(e),
                })?;
        }
        let m = |k: usize| (sum[k] / batches as f64) as f32;
        epochs.push(EpochRecord {
            epoch,
            losses: LossReport {
                l_g: m(0),
                l_d: m(1),
                l_scyc: m(2),
                l_v2s: m(3),
                l_s2s: m(4),
                l_total: m(5),
            },
            drift_mean: mean_drift(&state, reference)?,
        });
    }
    Ok(TrainOutput {
        models,
        state,
        history: History {
            epochs,
            initial_drift,
        },
    })
}

fn critic_step(
    models: &mut Models,
    opt: &mut Optimizers,
    train: &LabeledFeatures,
    state: &DynamicPrototypeState,
    idx: &[usize],
    attr: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f32> {
    let x = train.features.gather_rows(idx)?;
    let labels: Vec<u32> = idx.iter().map(|&i| train.labels[i]).collect();
    let z = state.rows_for(&labels)?;
    let noise = Tensor::randn(idx.len(), attr, 1.0, rng);
    let x_fake = models.generator.generate(&noise, &z)?;
    let t: Vec<f32> = (0..idx.len()).map(|_| rng.random::<f32>()).collect();
    let x_interp = interpolate_rows(&x, &x_fake, &t)?;

    let mut g = Graph::new();
    let d = models.critic.bind(&mut g);
    let (xr, xf, xi, zc) = (
        g.constant(&x),
        g.constant(&x_fake),
        g.constant(&x_interp),
        g.constant(&z),
    );
    let parts = critic_loss(&mut g, &d, xr, xf, xi, zc, GP_WEIGHT)?;
    let grads = g.backward(parts.loss)?;
    let loss = g.value(parts.loss).item();
    apply(&mut opt.critic, &mut models.critic, &grads, &d.all())?;
    Ok(loss)
}

#[allow(clippy::too_many_arguments)]
fn generator_step(
    models: &mut Models,
    opt: &mut Optimizers,
    train: &LabeledFeatures,
    state: &DynamicPrototypeState,
    idx: &[usize],
    attr: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossReport> {
    let w = cfg.effective_weights();
    let x = train.features.gather_rows(idx)?;
    let labels: Vec<u32> = idx.iter().map(|&i| train.labels[i]).collect();
    let z = state.rows_for(&labels)?;
    let noise = Tensor::randn(idx.len(), attr, 1.0, rng);

    let use_v2sm = w.scyc > 0.0 || w.v2s > 0.0;
    let use_vope = w.v2s > 0.0 || w.s2s > 0.0;

    let mut g = Graph::new();
    let gen = models.generator.bind(&mut g);
    let critic = models.critic.bind_frozen(&mut g);
    // V2SM is trained only through the cycle term; the alignment term uses
    // its output as a fixed target.
    let v2sm = use_v2sm.then(|| {
        if w.scyc > 0.0 {
            models.v2sm.bind(&mut g)
        } else {
            models.v2sm.bind_frozen(&mut g)
        }
    });
    let vope = use_vope.then(|| models.vope.bind(&mut g));

    let (vo, vz, vx) = (g.constant(&noise), g.constant(&z), g.constant(&x));
    let x_fake = gen.forward(&mut g, vo, vz)?;
    let l_g = generator_adversarial_loss(&mut g, &critic, x_fake, vz)?;

    let mut report = LossReport::default();
    let (mut scyc, mut v2s, mut s2s) = (None, None, None);
    let mut mapped = None;
    if let Some(m) = &v2sm {
        let z_real = m.forward(&mut g, vx)?;
        let z_syn = m.forward(&mut g, x_fake)?;
        if w.scyc > 0.0 {
            scyc = Some(semantic_cycle_loss(&mut g, z_real, z_syn, vz)?);
        }
        mapped = Some((g.value(z_real).clone(), g.value(z_syn).clone()));
    }
    if let Some(v) = &vope {
        let z_next = v.forward(&mut g, vz)?;
        if let Some((real, syn)) = &mapped {
            if w.v2s > 0.0 {
                let current = g.value(z_next).clone();
                let lr = v2s_alignment_loss_masked(&mut g, real, &current, z_next)?;
                let ls = v2s_alignment_loss_masked(&mut g, syn, &current, z_next)?;
                let sum = g.add(lr, ls)?;
                v2s = Some(g.scale(sum, 0.5)?);
            }
        }
        if w.s2s > 0.0 {
            s2s = Some(s2s_reconstruction_loss(&mut g, z_next, vz)?);
        }
    }

    let mut total = l_g;
    total = add_weighted(&mut g, total, scyc, w.scyc)?;
    total = add_weighted(&mut g, total, v2s, w.v2s)?;
    total = add_weighted(&mut g, total, s2s, w.s2s)?;
    let grads = g.backward(total)?;

    report.l_g = g.value(l_g).item();
    let item = |v: Option<Var>| v.map_or(0.0, |v| g.value(v).item());
    report.l_scyc = item(scyc);
    report.l_v2s = item(v2s);
    report.l_s2s = item(s2s);

    apply(
        &mut opt.generator,
        &mut models.generator,
        &grads,
        &gen.all(),
    )?;
    if let (Some(m), true) = (&v2sm, w.scyc > 0.0) {
        apply(&mut opt.v2sm, &mut models.v2sm, &grads, &m.all())?;
    }
    if let Some(v) = &vope {
        apply(&mut opt.vope, &mut models.vope, &grads, &v.all())?;
    }
    Ok(report)
}

/// Cosine alignment of `z_next` to the fixed targets `mapped`. A target row
/// with zero norm (all mapped attributes inactive) is replaced by the current
/// value of `z_next`, which contributes neither loss nor gradient.
fn v2s_alignment_loss_masked(
    g: &mut Graph,
    mapped: &Tensor,
    current: &Tensor,
    z_next: Var,
) -> Result<Var> {
    let mut target = mapped.clone();
    let cols = target.cols();
    for i in 0..target.rows() {
        if target.row(i).iter().all(|&v| v == 0.0) {
            target.data_mut()[i * cols..(i + 1) * cols].copy_from_slice(current.row(i));
        }
    }
    let t = g.constant(&target);
    v2s_alignment_loss(g, t, z_next)
}
