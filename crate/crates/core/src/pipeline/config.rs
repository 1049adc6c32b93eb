use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::models::ModelDims;

/// When the dynamic prototypes take an evolvement step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cadence {
    Disabled,
    PerEpoch,
    /// Every `n` generator batches.
    PerBatches(usize),
}

impl fmt::Display for Cadence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cadence::Disabled => f.write_str("disabled"),
            Cadence::PerEpoch => f.write_str("epoch"),
            Cadence::PerBatches(n) => write!(f, "batches:{n}"),
        }
    }
}

impl FromStr for Cadence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "disabled" => Ok(Cadence::Disabled),
            "epoch" => Ok(Cadence::PerEpoch),
            other => match other.strip_prefix("batches:").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => Ok(Cadence::PerBatches(n)),
                _ => Err(format!(
                    "cadence must be disabled, epoch or batches:<n>, got `{other}`"
                )),
            },
        }
    }
}

/// Independently switchable parts of the method. `true` means enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ablation {
    pub scyc: bool,
    pub v2s: bool,
    pub s2s: bool,
    pub smooth_evolve: bool,
    pub enhancement: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        scyc: true,
        v2s: true,
        s2s: true,
        smooth_evolve: true,
        enhancement: true,
    };

    pub const NONE: Ablation = Ablation {
        scyc: false,
        v2s: false,
        s2s: false,
        smooth_evolve: false,
        enhancement: false,
    };

    /// Disables one named component (`no-scyc`, `no-v2s`, `no-s2s`,
    /// `no-smooth`, `no-enhance`).
    pub fn without(mut self, name: &str) -> Result<Self> {
        match name {
            "no-scyc" => self.scyc = false,
            "no-v2s" => self.v2s = false,
            "no-s2s" => self.s2s = false,
            "no-smooth" => self.smooth_evolve = false,
            "no-enhance" => self.enhancement = false,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation `{other}` (expected no-scyc, no-v2s, no-s2s, no-smooth or no-enhance)"
                )))
            }
        }
        Ok(self)
    }
}

/// Which evolved prototypes enhance the seen classes at test time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeenEnhanceSource {
    /// One evolver pass over the predefined prototypes.
    Fresh,
    /// One evolver pass over the final dynamic prototypes of training.
    TrainingState,
}

/// How a row picks the prototype appended to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnhanceLabels {
    /// The class whose evolved prototype is most cosine-similar to
    /// `V2SM(x)`, for training and test rows alike.
    Inferred,
    /// The row's ground-truth class, test rows included (the default).
    /// Test labels then leak into the classifier input.
    Label,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrototypeNorm {
    Raw,
    UnitL2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            lr: 1e-3,
            batch_size: 256,
        }
    }
}

/// Hidden widths; input and output sizes come from the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Widths {
    pub g_hidden: usize,
    pub d_hidden: usize,
    pub v2sm_hidden: (usize, usize),
    pub vope_hidden: usize,
}

impl Widths {
    pub fn dims(&self, attr_dim: usize, feature_dim: usize) -> ModelDims {
        ModelDims {
            attr_dim,
            feature_dim,
            g_hidden: self.g_hidden,
            d_hidden: self.d_hidden,
            v2sm_hidden: self.v2sm_hidden,
            vope_hidden: self.vope_hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub critic_steps: usize,
    pub weights: LossWeights,
    /// Require `λ_Scyc == λ_S2S`.
    pub couple_weights: bool,
    pub alpha: f32,
    pub cadence: Cadence,
    pub n_syn: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub widths: Widths,
    pub classifier: ClassifierConfig,
    pub normalize_features: bool,
    pub prototype_norm: PrototypeNorm,
    pub seen_enhance: SeenEnhanceSource,
    /// Enhance unseen rows with the blended prototypes instead of the
    /// single evolver pass.
    pub enhance_with_blend: bool,
    pub enhance_labels: EnhanceLabels,
}

impl TrainConfig {
    /// Same settings with every method-specific path switched off: plain
    /// conditional WGAN-GP on the predefined prototypes.
    pub fn baseline(&self) -> Self {
        Self {
            weights: LossWeights::zero(),
            ablation: Ablation::NONE,
            cadence: Cadence::Disabled,
            ..self.clone()
        }
    }

    pub fn is_baseline(&self) -> bool {
        let w = self.effective_weights();
        w == LossWeights::zero() && self.cadence == Cadence::Disabled && !self.ablation.enhancement
    }

    /// Loss weights after ablation switches.
    pub fn effective_weights(&self) -> LossWeights {
        let on = |flag: bool, v: f32| if flag { v } else { 0.0 };
        LossWeights {
            scyc: on(self.ablation.scyc, self.weights.scyc),
            v2s: on(self.ablation.v2s, self.weights.v2s),
            s2s: on(self.ablation.s2s, self.weights.s2s),
        }
    }

    /// Moving-average factor actually used; disabling smooth evolvement
    /// replaces prototypes by the evolver output outright.
    pub fn effective_alpha(&self) -> f32 {
        if self.ablation.smooth_evolve {
            self.alpha
        } else {
            0.0
        }
    }

    /// Blend factor for the unseen generator condition. Without evolvement
    /// the raw predefined prototypes are used.
    pub fn inference_alpha(&self) -> f32 {
        if self.cadence == Cadence::Disabled {
            1.0
        } else {
            self.effective_alpha()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.weights.validate()?;
        if self.couple_weights && self.weights.scyc != self.weights.s2s {
            return bad(format!(
                "lambda_scyc ({}) and lambda_s2s ({}) must match while couple_weights is on",
                self.weights.scyc, self.weights.s2s
            ));
        }
        if self.n_syn == 0 {
            return bad("n_syn must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.batch_size == 0 || self.classifier.batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.critic_steps == 0 {
            return bad("critic_steps must be at least 1".into());
        }
        for (name, v) in [("lr", self.lr), ("clf_lr", self.classifier.lr)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        let w = &self.widths;
        if w.g_hidden == 0 || w.d_hidden == 0 || w.v2sm_hidden.0 == 0 || w.v2sm_hidden.1 == 0 {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }
}
