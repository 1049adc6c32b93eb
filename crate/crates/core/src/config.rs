//! `key = value` run configuration and named presets.
//!
//! A file may start from a preset (`preset = mini`) and override any key.
//! Without a preset every key must be given. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::pipeline::{
    Ablation, Cadence, ClassifierConfig, EnhanceLabels, PrototypeNorm, SeenEnhanceSource,
    TrainConfig, Widths,
};

/// Every configuration key, in file order.
pub const KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "critic_steps",
    "lambda_scyc",
    "lambda_v2s",
    "lambda_s2s",
    "couple_weights",
    "alpha",
    "cadence",
    "n_syn",
    "seed",
    "use_scyc",
    "use_v2s",
    "use_s2s",
    "smooth_evolve",
    "enhancement",
    "g_hidden",
    "d_hidden",
    "v2sm_hidden1",
    "v2sm_hidden2",
    "vope_hidden",
    "clf_epochs",
    "clf_lr",
    "clf_batch_size",
    "normalize_features",
    "prototype_norm",
    "seen_enhance",
    "enhance_with_blend",
    "enhance_labels",
];

/// Per-method, per-dataset settings `(N_syn, λ_Scyc, λ_V2S, α)`.
const METHOD_ROWS: &[(&str, &str, usize, f32, f32, f32)] = &[
    ("clswgan", "cub", 300, 0.15, 1.0, 0.9),
    ("clswgan", "sun", 300, 0.005, 1.0, 0.9),
    ("clswgan", "awa2", 3400, 0.1, 1.0, 0.9),
    ("fvaegan", "cub", 800, 0.1, 0.6, 0.9),
    ("fvaegan", "sun", 150, 0.01, 1.0, 0.9),
    ("fvaegan", "awa2", 3400, 0.001, 0.6, 0.9),
    ("tfvaegan", "cub", 400, 0.01, 1.0, 0.9),
    ("tfvaegan", "sun", 500, 0.05, 1.5, 0.9),
    ("tfvaegan", "awa2", 5300, 0.09, 1.4, 0.9),
    ("free", "cub", 600, 0.1, 0.6, 0.9),
    ("free", "sun", 150, 0.01, 1.0, 0.9),
    ("free", "awa2", 4000, 0.001, 2.0, 0.9),
];

/// `paper-<dataset>` aliases resolve to this method's rows.
const PAPER_METHOD: &str = "fvaegan";

/// Desk-scale settings for the synthetic benchmark.
pub fn mini() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        batch_size: 32,
        lr: 1e-3,
        beta1: 0.5,
        beta2: 0.999,
        critic_steps: 5,
        weights: LossWeights::coupled(0.1, 0.6),
        couple_weights: true,
        alpha: 0.9,
        cadence: Cadence::PerEpoch,
        n_syn: 200,
        seed: 0,
        ablation: Ablation::FULL,
        widths: Widths {
            g_hidden: 128,
            d_hidden: 128,
            v2sm_hidden: (128, 64),
            vope_hidden: 0,
        },
        classifier: ClassifierConfig::default(),
        normalize_features: true,
        prototype_norm: PrototypeNorm::Raw,
        seen_enhance: SeenEnhanceSource::Fresh,
        enhance_with_blend: false,
        enhance_labels: EnhanceLabels::Label,
    }
}

fn full_scale(n_syn: usize, scyc: f32, v2s: f32, alpha: f32) -> TrainConfig {
    TrainConfig {
        epochs: 100,
        batch_size: 64,
        lr: 1e-4,
        n_syn,
        alpha,
        weights: LossWeights::coupled(scyc, v2s),
        widths: Widths {
            g_hidden: 4096,
            d_hidden: 4096,
            v2sm_hidden: (4096, 2048),
            vope_hidden: 0,
        },
        ..mini()
    }
}

/// Names accepted by [`preset`].
pub fn preset_names() -> Vec<String> {
    let mut names = vec!["mini".to_string()];
    names.extend(["paper-cub", "paper-sun", "paper-awa2"].map(String::from));
    names.extend(METHOD_ROWS.iter().map(|(m, d, ..)| format!("{m}-{d}")));
    names
}

pub fn preset(name: &str) -> Result<TrainConfig> {
    if name == "mini" {
        return Ok(mini());
    }
    let (method, dataset) = match name.strip_prefix("paper-") {
        Some(d) => (PAPER_METHOD, d),
        None => name.split_once('-').unwrap_or((name, "")),
    };
    METHOD_ROWS
        .iter()
        .find(|(m, d, ..)| *m == method && *d == dataset)
        .map(|&(_, _, n, scyc, v2s, alpha)| full_scale(n, scyc, v2s, alpha))
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown preset `{name}` (known: {})",
                preset_names().join(", ")
            ))
        })
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected true or false, got `{v}`"
        ))),
    }
}

fn set(cfg: &mut TrainConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "epochs" => cfg.epochs = parse(key, v)?,
        "batch_size" => cfg.batch_size = parse(key, v)?,
        "lr" => cfg.lr = parse(key, v)?,
        "beta1" => cfg.beta1 = parse(key, v)?,
        "beta2" => cfg.beta2 = parse(key, v)?,
        "critic_steps" => cfg.critic_steps = parse(key, v)?,
        "lambda_scyc" => cfg.weights.scyc = parse(key, v)?,
        "lambda_v2s" => cfg.weights.v2s = parse(key, v)?,
        "lambda_s2s" => cfg.weights.s2s = parse(key, v)?,
        "couple_weights" => cfg.couple_weights = parse_bool(key, v)?,
        "alpha" => cfg.alpha = parse(key, v)?,
        "cadence" => {
            cfg.cadence = v
                .parse()
                .map_err(|e| Error::Config(format!("`{key}`: {e}")))?
        }
        "n_syn" => cfg.n_syn = parse(key, v)?,
        "seed" => cfg.seed = parse(key, v)?,
        "use_scyc" => cfg.ablation.scyc = parse_bool(key, v)?,
        "use_v2s" => cfg.ablation.v2s = parse_bool(key, v)?,
        "use_s2s" => cfg.ablation.s2s = parse_bool(key, v)?,
        "smooth_evolve" => cfg.ablation.smooth_evolve = parse_bool(key, v)?,
        "enhancement" => cfg.ablation.enhancement = parse_bool(key, v)?,
        "g_hidden" => cfg.widths.g_hidden = parse(key, v)?,
        "d_hidden" => cfg.widths.d_hidden = parse(key, v)?,
        "v2sm_hidden1" => cfg.widths.v2sm_hidden.0 = parse(key, v)?,
        "v2sm_hidden2" => cfg.widths.v2sm_hidden.1 = parse(key, v)?,
        "vope_hidden" => cfg.widths.vope_hidden = parse(key, v)?,
        "clf_epochs" => cfg.classifier.epochs = parse(key, v)?,
        "clf_lr" => cfg.classifier.lr = parse(key, v)?,
        "clf_batch_size" => cfg.classifier.batch_size = parse(key, v)?,
        "normalize_features" => cfg.normalize_features = parse_bool(key, v)?,
        "prototype_norm" => {
            cfg.prototype_norm = match v {
                "raw" => PrototypeNorm::Raw,
                "l2" => PrototypeNorm::UnitL2,
                _ => {
                    return Err(Error::Config(format!(
                        "`{key}`: expected raw or l2, got `{v}`"
                    )))
                }
            }
        }
        "seen_enhance" => {
            cfg.seen_enhance = match v {
                "fresh" => SeenEnhanceSource::Fresh,
                "state" => SeenEnhanceSource::TrainingState,
                _ => {
                    return Err(Error::Config(format!(
                        "`{key}`: expected fresh or state, got `{v}`"
                    )))
                }
            }
        }
        "enhance_with_blend" => cfg.enhance_with_blend = parse_bool(key, v)?,
        "enhance_labels" => {
            cfg.enhance_labels = match v {
                "inferred" => EnhanceLabels::Inferred,
                "label" => EnhanceLabels::Label,
                _ => {
                    return Err(Error::Config(format!(
                        "`{key}`: expected inferred or label, got `{v}`"
                    )))
                }
            }
        }
        other => return Err(Error::Config(format!("unknown key `{other}`"))),
    }
    Ok(())
}

/// Parses a configuration file.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", ln + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k != "preset" && !KEYS.contains(&k.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key `{k}`", ln + 1)));
        }
        if entries.insert(k.clone(), (ln + 1, v)).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{k}`",
                ln + 1
            )));
        }
    }
    let mut cfg = match entries.remove("preset") {
        Some((_, name)) => preset(&name)?,
        None => {
            let missing: Vec<String> = KEYS
                .iter()
                .filter(|k| !entries.contains_key(**k))
                .map(|k| k.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(Error::MissingConfigKeys(missing));
            }
            mini()
        }
    };
    for (k, (_, v)) in &entries {
        set(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes every key so that [`parse_config`] reproduces `cfg` exactly.
pub fn to_config_text(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    let b = |v: bool| if v { "true" } else { "false" };
    let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
    put("epochs", cfg.epochs.to_string());
    put("batch_size", cfg.batch_size.to_string());
    put("lr", cfg.lr.to_string());
    put("beta1", cfg.beta1.to_string());
    put("beta2", cfg.beta2.to_string());
    put("critic_steps", cfg.critic_steps.to_string());
    put("lambda_scyc", cfg.weights.scyc.to_string());
    put("lambda_v2s", cfg.weights.v2s.to_string());
    put("lambda_s2s", cfg.weights.s2s.to_string());
    put("couple_weights", b(cfg.couple_weights).into());
    put("alpha", cfg.alpha.to_string());
    put("cadence", cfg.cadence.to_string());
    put("n_syn", cfg.n_syn.to_string());
    put("seed", cfg.seed.to_string());
    put("use_scyc", b(cfg.ablation.scyc).into());
    put("use_v2s", b(cfg.ablation.v2s).into());
    put("use_s2s", b(cfg.ablation.s2s).into());
    put("smooth_evolve", b(cfg.ablation.smooth_evolve).into());
    put("enhancement", b(cfg.ablation.enhancement).into());
    put("g_hidden", cfg.widths.g_hidden.to_string());
    put("d_hidden", cfg.widths.d_hidden.to_string());
    put("v2sm_hidden1", cfg.widths.v2sm_hidden.0.to_string());
    put("v2sm_hidden2", cfg.widths.v2sm_hidden.1.to_string());
    put("vope_hidden", cfg.widths.vope_hidden.to_string());
    put("clf_epochs", cfg.classifier.epochs.to_string());
    put("clf_lr", cfg.classifier.lr.to_string());
    put("clf_batch_size", cfg.classifier.batch_size.to_string());
    put("normalize_features", b(cfg.normalize_features).into());
    put(
        "prototype_norm",
        match cfg.prototype_norm {
            PrototypeNorm::Raw => "raw",
            PrototypeNorm::UnitL2 => "l2",
        }
        .into(),
    );
    put(
        "seen_enhance",
        match cfg.seen_enhance {
            SeenEnhanceSource::Fresh => "fresh",
            SeenEnhanceSource::TrainingState => "state",
        }
        .into(),
    );
    put("enhance_with_blend", b(cfg.enhance_with_blend).into());
    put(
        "enhance_labels",
        match cfg.enhance_labels {
            EnhanceLabels::Inferred => "inferred",
            EnhanceLabels::Label => "label",
        }
        .into(),
    );
    out
}
