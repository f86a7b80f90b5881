use std::fs;
use std::path::{Path, PathBuf};

use scrnn::cells::{load_checkpoint, rollout, save_checkpoint};
use scrnn::datamodel::{load_csv, parse_csv, save_csv, synth_generate, write_atomic, SkeletonSequence, SynthKind};
use scrnn::loss::{horizon_frames, mean_angle_error, MaeTable, DEFAULT_HORIZONS_MS};
use scrnn::training::{grad_check, history_csv, run_ablation, train, TrainConfig};
use scrnn::{Error, Result};

use super::{Cli, Command, ConfigArgs, Kind, TableFormat};
use crate::manifest::{hash_files, RunManifest};

pub fn run(cli: Cli) -> Result<()> {
    let Cli {
        threads,
        deterministic,
        command,
    } = cli;
    match command {
        Command::Train {
            config,
            manifest,
            data,
            out,
        } => cmd_train(&config, manifest.as_deref(), &data, &out, threads, deterministic),
        Command::Predict {
            checkpoint,
            input,
            horizon,
            out,
        } => cmd_predict(&checkpoint, &input, horizon, &out),
        Command::Eval {
            pred,
            truth,
            horizons_ms,
            frame_interval_ms,
            tag,
            format,
            out,
        } => cmd_eval(
            &pred,
            &truth,
            horizons_ms,
            frame_interval_ms,
            tag,
            format,
            out.as_deref(),
        ),
        Command::Gradcheck {
            config,
            joints,
            instance_seed,
            out,
        } => cmd_gradcheck(&config, joints, instance_seed, out.as_deref(), threads),
        Command::Ablate { config, data, out } => cmd_ablate(&config, &data, &out, threads, deterministic),
        Command::Synth {
            kind,
            joints,
            frames,
            count,
            seed,
            out,
        } => cmd_synth(kind, joints, frames, count, seed, &out),
    }
}

fn load_config(args: &ConfigArgs, threads: Option<usize>) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config {
                key: "--config".into(),
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            TrainConfig::from_json(&text)?
        }
        None => TrainConfig::default(),
    };
    for o in &args.overrides {
        config.apply_override(o)?;
    }
    if let Some(t) = threads {
        config.apply_override(&format!("threads={t}"))?;
    }
    Ok(config)
}

/// CSV files directly inside `dir`, sorted by name.
fn data_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "csv") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no .csv files in {}", dir.display())));
    }
    Ok(files)
}

fn load_dataset(files: &[PathBuf], config: &TrainConfig) -> Result<Vec<SkeletonSequence>> {
    files
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv(
                &text,
                &path.display().to_string(),
                config.joint_selection.as_deref(),
                config.frame_interval_ms,
            )
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_train(
    args: &ConfigArgs,
    replay: Option<&Path>,
    data: &Path,
    out: &Path,
    threads: Option<usize>,
    deterministic: bool,
) -> Result<()> {
    let files = data_files(data)?;
    let config = match replay {
        Some(path) => {
            let recorded = RunManifest::load(path)?;
            let hash = hash_files(&files)?;
            if hash != recorded.data_hash {
                return Err(Error::Data(format!(
                    "data in {} does not match the manifest (hash {hash}, recorded {})",
                    data.display(),
                    recorded.data_hash
                )));
            }
            recorded.config
        }
        None => load_config(args, threads)?,
    };
    let dataset = load_dataset(&files, &config)?;

    create_dir(out)?;
    let checkpoint = out.join("checkpoint.txt");
    let history = out.join("history.csv");
    let manifest_path = out.join("manifest.json");
    let mut manifest = RunManifest::new("train", &config, deterministic, &files)?;
    manifest.outputs = vec![manifest_path.clone(), checkpoint.clone(), history.clone()];
    manifest.save(&manifest_path)?;

    let outcome = train(&dataset, &config)?;
    save_checkpoint(&checkpoint, &outcome.model, &outcome.params)?;
    write_atomic(&history, history_csv(&outcome.history).as_bytes())?;

    let last = outcome.history.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "trained {} parameters on {} sequences: {} steps, final batch loss {last:.6}",
        outcome.params.num_scalars(),
        dataset.len(),
        outcome.history.len()
    );
    println!(
        "wrote {}, {}, {}",
        manifest_path.display(),
        checkpoint.display(),
        history.display()
    );
    Ok(())
}

fn cmd_predict(checkpoint: &Path, input: &Path, horizon: usize, out: &Path) -> Result<()> {
    if horizon == 0 {
        return Err(Error::Argument("--horizon must be at least 1".into()));
    }
    let (model, params) = load_checkpoint(checkpoint)?;
    let observed = load_csv(input, None)?;
    if observed.joints() != model.joints {
        return Err(Error::Dimension {
            op: "checkpoint vs input joints",
            lhs: scrnn::error::Shape(model.joints, 3),
            rhs: scrnn::error::Shape(observed.joints(), 3),
        });
    }
    let predicted = rollout(&observed, horizon, &params, &model)?;
    save_csv(&predicted, out)?;
    println!("wrote {} predicted frames to {}", predicted.len(), out.display());
    Ok(())
}

fn cmd_eval(
    pred: &Path,
    truth: &Path,
    horizons_ms: Option<Vec<f64>>,
    frame_interval_ms: f64,
    tag: Option<String>,
    format: TableFormat,
    out: Option<&Path>,
) -> Result<()> {
    let p = load_csv(pred, None)?;
    let t = load_csv(truth, None)?;
    if p.len() != t.len() {
        return Err(Error::Data(format!(
            "prediction has {} frames but truth has {}",
            p.len(),
            t.len()
        )));
    }
    let horizons = match horizons_ms {
        Some(h) => h,
        None => {
            let limit = p.len() as f64 * frame_interval_ms;
            let h: Vec<f64> = DEFAULT_HORIZONS_MS
                .into_iter()
                .filter(|&ms| ms <= limit + 1e-9)
                .collect();
            if h.is_empty() {
                vec![limit]
            } else {
                h
            }
        }
    };
    let frames = horizon_frames(&horizons, frame_interval_ms)?;
    let errors = mean_angle_error(&p, &t, &frames)?;
    let tag = tag.unwrap_or_else(|| truth.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    let mut table = MaeTable::new(horizons);
    table.push(tag, errors)?;
    let text = match format {
        TableFormat::Markdown => table.to_markdown(),
        TableFormat::Csv => table.to_csv(),
    };
    if let Some(path) = out {
        write_atomic(path, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_gradcheck(
    args: &ConfigArgs,
    joints: usize,
    instance_seed: u64,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<()> {
    let config = load_config(args, threads)?;
    let report = grad_check(&config, joints, instance_seed)?;
    let table = report.to_table();
    if let Some(path) = out {
        write_atomic(path, table.as_bytes())?;
    }
    print!("{table}");
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "max relative error {:.3e} over {} entries (threshold {:e}): {verdict}",
        report.max_rel_error(),
        report.entries(),
        report.threshold
    );
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Numeric {
            location: "gradient check".into(),
            message: format!(
                "max relative error {:.3e} exceeds {:e}",
                report.max_rel_error(),
                report.threshold
            ),
        })
    }
}

fn cmd_ablate(args: &ConfigArgs, data: &Path, out: &Path, threads: Option<usize>, deterministic: bool) -> Result<()> {
    let config = load_config(args, threads)?;
    let files = data_files(data)?;
    let dataset = load_dataset(&files, &config)?;

    create_dir(out)?;
    let manifest_path = out.join("manifest.json");
    let markdown = out.join("ablation.md");
    let csv = out.join("ablation.csv");
    let mut manifest = RunManifest::new("ablate", &config, deterministic, &files)?;
    manifest.outputs = vec![manifest_path.clone(), markdown.clone(), csv.clone()];
    manifest.save(&manifest_path)?;

    let report = run_ablation(&dataset, &config)?;
    let table = report.table();
    write_atomic(&markdown, table.to_markdown().as_bytes())?;
    write_atomic(&csv, table.to_csv().as_bytes())?;
    print!("{}", table.to_markdown());
    for row in &report.rows {
        println!("{}: {} parameters", row.variant, row.parameters);
    }
    if let Some(leads) = report.full_leads_at_longest_horizon() {
        println!("full model best at longest horizon: {leads}");
    }
    Ok(())
}

fn cmd_synth(kind: Kind, joints: usize, frames: usize, count: usize, seed: u64, out: &Path) -> Result<()> {
    let (kind, prefix) = match kind {
        Kind::Sinusoid => (SynthKind::Sinusoid, "sinusoid"),
        Kind::WalkLike => (SynthKind::WalkLike, "walk_like"),
    };
    // Generate everything first so a bad argument leaves no files behind.
    let sequences = (0..count as u64)
        .map(|i| synth_generate(kind, joints, frames, seed + i))
        .collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    for (i, seq) in sequences.iter().enumerate() {
        save_csv(seq, out.join(format!("{prefix}_{i:03}.csv")))?;
    }
    println!("wrote {count} sequences to {}", out.display());
    Ok(())
}
