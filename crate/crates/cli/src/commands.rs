use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dsp_core::checkpoint::{load_run_checkpoint, save_run_checkpoint};
use dsp_core::config::{parse_config, preset, to_config_text};
use dsp_core::data::{
    cub_shape_scaffold, generate_synthetic, load_dataset, load_true_prototypes, save_dataset,
    save_true_prototypes, write_csv_mirrors, SplitTag, SyntheticSpec, ZslDataset,
};
use dsp_core::evolvement::{freeze_inference_prototypes, prototypes_csv};
use dsp_core::pipeline::{
    centroid_gap, embedding_csv, evaluate_models, pca_embedding, prepare, rng_stream,
    run_experiment, synthesize_unseen, GzslMetrics, Stream, TrainConfig, METRICS_HEADER,
};

use crate::manifest::{dataset_fingerprint, git_describe, RunManifest};
use crate::{
    AblateArg, CliError, ConfigArgs, DataPreset, EvalArgs, ExportArgs, SweepArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(parse_config(&text)?)
}

fn base_config(config: Option<&Path>, preset_name: Option<&str>) -> Result<TrainConfig> {
    match config {
        Some(p) => read_config(p),
        None => Ok(preset(preset_name.unwrap_or("mini"))?),
    }
}

/// Applies seed override and variant selection. Returns the run id.
fn variant(mut cfg: TrainConfig, seed: Option<u64>, name: &str) -> Result<(TrainConfig, String)> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let cfg = match name {
        "full" => cfg,
        "baseline" => cfg.baseline(),
        other => TrainConfig {
            ablation: cfg.ablation.without(other)?,
            ..cfg
        },
    };
    cfg.validate()?;
    Ok((cfg, name.to_string()))
}

fn variant_name(ablate: Option<AblateArg>, baseline: bool) -> &'static str {
    match (ablate, baseline) {
        (Some(a), _) => a.name(),
        (None, true) => "baseline",
        (None, false) => "full",
    }
}

fn metrics_table(rows: &[(String, u64, GzslMetrics)]) -> String {
    let mut out = format!(
        "{:<12} {:>6} {:>7} {:>7} {:>7} {:>7}\n",
        "run", "seed", "U", "S", "H", "acc"
    );
    for (id, seed, m) in rows {
        writeln!(
            out,
            "{id:<12} {seed:>6} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
            m.u, m.s, m.h, m.acc
        )
        .unwrap();
    }
    out
}

fn metrics_csv(rows: &[(String, u64, GzslMetrics)]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for (id, seed, m) in rows {
        out.push_str(&m.csv_row(id, *seed));
        out.push('\n');
    }
    out
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn data_gen(which: DataPreset, seed: u64, csv: bool, out: &Path) -> Result<()> {
    create_dir(out)?;
    let ds = match which {
        DataPreset::Mini => {
            let syn = generate_synthetic(&SyntheticSpec {
                seed,
                ..SyntheticSpec::default()
            })?;
            save_true_prototypes(&syn.true_prototypes, out)?;
            syn.dataset
        }
        DataPreset::CubShape => cub_shape_scaffold(),
    };
    save_dataset(&ds, out)?;
    if csv {
        write_csv_mirrors(&ds, out)?;
    }
    println!("{}", summary(&ds));
    Ok(())
}

fn summary(ds: &ZslDataset) -> String {
    format!(
        "{} classes ({} seen / {} unseen), {} attributes, {} samples x {} features (train {}, seen-test {}, unseen-test {})",
        ds.num_classes(),
        ds.seen_ids.len(),
        ds.unseen_ids.len(),
        ds.attr_dim(),
        ds.len(),
        ds.feature_dim(),
        ds.indices(SplitTag::SeenTrain).len(),
        ds.indices(SplitTag::SeenTest).len(),
        ds.indices(SplitTag::UnseenTest).len(),
    )
}

pub fn data_check(dir: &Path) -> Result<()> {
    let ds = load_dataset(dir)?;
    if let Some(t) = load_true_prototypes(dir)? {
        if t.shape() != ds.prototypes.shape() {
            return Err(dsp_core::Error::DimensionMismatch(format!(
                "true prototypes {:?} vs predefined {:?}",
                t.shape(),
                ds.prototypes.shape()
            ))
            .into());
        }
    }
    println!("ok: {}", summary(&ds));
    Ok(())
}

fn config_from_args(a: &ConfigArgs) -> Result<(TrainConfig, String)> {
    let base = base_config(a.config.as_deref(), a.preset.as_deref())?;
    variant(base, a.seed, variant_name(a.ablate, a.baseline))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let (cfg, run_id) = config_from_args(&a.cfg)?;
    let raw = load_dataset(&a.dataset)?;
    let truth = load_true_prototypes(&a.dataset)?;
    let fingerprint = dataset_fingerprint(&a.dataset)?;
    create_dir(&a.out)?;

    let run = run_experiment(&raw, truth.as_ref(), &cfg)?;
    let state = &run.trained.state;
    let names = [
        "checkpoint.bin",
        "history.csv",
        "prototypes.csv",
        "config.txt",
        "metrics.csv",
        "manifest.txt",
    ];
    let path = |n: &str| a.out.join(n);
    save_run_checkpoint(&path(names[0]), &run.trained.models, Some(&state.z))?;
    write(&path(names[1]), run.trained.history.to_csv())?;
    write(&path(names[2]), prototypes_csv(&state.class_ids, &state.z))?;
    let config_text = to_config_text(&cfg);
    write(&path(names[3]), &config_text)?;
    let rows = vec![(run_id, cfg.seed, run.evaluation.metrics)];
    write(&path(names[4]), metrics_csv(&rows))?;
    let manifest = RunManifest {
        config_text,
        seed: cfg.seed,
        git_describe: git_describe(),
        dataset_fingerprint: fingerprint,
        outputs: names.iter().map(|n| n.to_string()).collect(),
    };
    write(&path(names[5]), manifest.to_text())?;

    let h = &run.trained.history;
    println!(
        "prototype drift: {:.4} -> {:.4}",
        h.initial_drift,
        h.final_drift()
    );
    print!("{}", metrics_table(&rows));
    Ok(())
}

fn config_beside(checkpoint: &Path, explicit: Option<&PathBuf>) -> Result<TrainConfig> {
    let path = match explicit {
        Some(p) => p.clone(),
        None => checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("config.txt"),
    };
    read_config(&path)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let trained_cfg = config_beside(&a.checkpoint, a.config.as_ref())?;
    let name = variant_name(a.ablate, a.baseline);
    let (cfg, run_id) = variant(trained_cfg, a.seed, name)?;
    let raw = load_dataset(&a.dataset)?;
    let metrics = if name == "full" {
        let data = prepare(&raw, &cfg)?;
        let dims = cfg.widths.dims(data.attr_dim(), data.feature_dim());
        let (models, state) = load_run_checkpoint(&a.checkpoint, dims, data.seen_ids.len())?;
        evaluate_models(&models, &data, state.as_ref(), &cfg)?.metrics
    } else {
        // Ablated variants need their own training run.
        let truth = load_true_prototypes(&a.dataset)?;
        run_experiment(&raw, truth.as_ref(), &cfg)?
            .evaluation
            .metrics
    };
    let rows = vec![(run_id, cfg.seed, metrics)];
    write(&a.out, metrics_csv(&rows))?;
    print!("{}", metrics_table(&rows));
    Ok(())
}

pub fn export_embed(a: &ExportArgs) -> Result<()> {
    let cfg = config_beside(&a.checkpoint, a.config.as_ref())?;
    let data = prepare(&load_dataset(&a.dataset)?, &cfg)?;
    let dims = cfg.widths.dims(data.attr_dim(), data.feature_dim());
    let (models, _) = load_run_checkpoint(&a.checkpoint, dims, data.seen_ids.len())?;
    let infp = freeze_inference_prototypes(
        &data.prototypes,
        &data.unseen_ids,
        &models.vope,
        cfg.inference_alpha(),
    )?;
    let syn = synthesize_unseen(
        &models.generator,
        &infp,
        cfg.n_syn,
        &mut rng_stream(cfg.seed, Stream::Synthesis),
    )?;
    let real = data.split(SplitTag::UnseenTest);
    let rows = pca_embedding(&real, &syn)?;
    write(&a.out, embedding_csv(&rows))?;
    println!(
        "{} rows ({} real, {} synthesized); mean real/syn centroid gap {:.4}",
        rows.len(),
        real.len(),
        syn.len(),
        centroid_gap(&real, &syn)?
    );
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    const KNOWN: &[&str] = &[
        "full",
        "baseline",
        "no-scyc",
        "no-s2s",
        "no-v2s",
        "no-smooth",
        "no-enhance",
    ];
    if let Some(v) = a.variants.iter().find(|v| !KNOWN.contains(&v.as_str())) {
        return Err(CliError::Usage(format!(
            "unknown variant `{v}` (known: {})",
            KNOWN.join(", ")
        )));
    }
    let base = base_config(a.config.as_deref(), a.preset.as_deref())?;
    let raw = load_dataset(&a.dataset)?;
    let truth = load_true_prototypes(&a.dataset)?;
    create_dir(&a.out)?;
    let mut rows = Vec::new();
    for name in &a.variants {
        for &seed in &a.seeds {
            let (cfg, run_id) = variant(base.clone(), Some(seed), name)?;
            let run = run_experiment(&raw, truth.as_ref(), &cfg)?;
            let dir = a.out.join(format!("{run_id}-seed{seed}"));
            create_dir(&dir)?;
            write(&dir.join("history.csv"), run.trained.history.to_csv())?;
            eprintln!("{run_id} seed {seed}: H {:.2}", run.evaluation.metrics.h);
            rows.push((run_id, seed, run.evaluation.metrics));
        }
    }
    write(&a.out.join("metrics.csv"), metrics_csv(&rows))?;
    print!("{}", metrics_table(&rows));
    for name in &a.variants {
        let hs: Vec<f64> = rows
            .iter()
            .filter(|r| &r.0 == name)
            .map(|r| r.2.h)
            .collect();
        println!(
            "{name:<12} mean H {:.2}",
            hs.iter().sum::<f64>() / hs.len().max(1) as f64
        );
    }
    Ok(())
}
