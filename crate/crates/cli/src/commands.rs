use crate::config::RunConfig;
use crate::CliError;
use anyhow::Context;
use rayon::prelude::*;
use sacts_core::encoder::encode_window;
use sacts_core::eval::{render_table, MetricReport};
use sacts_core::ingest::split_train_test_with;
use sacts_core::pipeline::naive_forecast;
use sacts_core::train::{train_on, Forecaster, TrainingSet};
use sacts_core::{Dataset, Hyper, SacModel, TimeSeries};
use std::path::{Path, PathBuf};

pub fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn write(path: &Path, contents: &str, artifacts: &mut Vec<PathBuf>) -> Result<(), CliError> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    artifacts.push(path.to_path_buf());
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

struct Loaded {
    path: PathBuf,
    dataset: Dataset,
    horizon: usize,
}

fn load(cfg: &RunConfig, path: &Path) -> Result<Loaded, CliError> {
    let dataset = Dataset::load(path, cfg.missing_policy).with_context(|| format!("loading {}", path.display()))?;
    let horizon = cfg.horizon.or(dataset.horizon).ok_or_else(|| {
        CliError::Validation(format!("{}: no horizon declared; pass --horizon", path.display()))
    })?;
    if dataset.series.is_empty() {
        return Err(anyhow::anyhow!("{}: dataset has no series", path.display()).into());
    }
    Ok(Loaded { path: path.to_path_buf(), dataset, horizon })
}

fn single(cfg: &RunConfig) -> Result<Loaded, CliError> {
    match cfg.data.as_slice() {
        [one] => load(cfg, one),
        [] => Err(CliError::Validation("no dataset given; pass --data".into())),
        _ => Err(CliError::Validation("this command takes exactly one dataset".into())),
    }
}

fn splits(l: &Loaded) -> Result<(Dataset, Dataset), CliError> {
    Ok(split_train_test_with(&l.dataset, l.horizon).with_context(|| format!("splitting {}", l.path.display()))?)
}

fn fit(
    train_series: &[TimeSeries],
    hyper: &Hyper,
    cfg: &RunConfig,
    seed: u64,
) -> Result<(sacts_core::TrainOutcome, TrainingSet), CliError> {
    let set = TrainingSet::build(train_series, hyper.window).context("building training windows")?;
    let tc = sacts_core::TrainConfig { seed, ..cfg.train.clone() };
    let outcome = train_on(&set, hyper, &tc).context("training")?;
    Ok((outcome, set))
}

fn finish(cfg: &RunConfig, command: &str, extras: &[(String, String)], mut artifacts: Vec<PathBuf>) -> Result<(), CliError> {
    let path = cfg.output.join("manifest.txt");
    let text = cfg.manifest(command, extras, &artifacts);
    write(&path, &text, &mut artifacts)
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let loaded = single(cfg)?;
    let (train_ds, _) = splits(&loaded)?;
    create_dir(&cfg.output)?;
    let (outcome, set) = fit(&train_ds.series, &cfg.hyper, cfg, cfg.train.seed)?;
    let mut artifacts = Vec::new();
    write(&cfg.output.join("checkpoint.sacts"), &outcome.model.to_checkpoint(), &mut artifacts)?;
    write(&cfg.output.join("loss_curve.csv"), &outcome.loss_curve_csv(), &mut artifacts)?;
    if cfg.dump_encoded > 0 {
        let dir = cfg.output.join("encoded");
        create_dir(&dir)?;
        for (j, w) in set.windows.iter().take(cfg.dump_encoded).enumerate() {
            let enc = encode_window(w, &set.universe);
            write(&dir.join(format!("window_{j:05}.csv")), &enc.to_csv(), &mut artifacts)?;
        }
    }
    let last = outcome.loss_curve.last().map_or(f64::NAN, |e| e.loss);
    eprintln!("trained on {} windows, final loss {last:.6} (scaled)", outcome.n_windows);
    let extras = vec![
        ("training_windows".to_string(), outcome.n_windows.to_string()),
        ("effective_horizon".to_string(), loaded.horizon.to_string()),
    ];
    finish(cfg, "train", &extras, artifacts)
}

/// Hyperparameters the user set explicitly must agree with the checkpoint.
fn check_compatible(cfg: &RunConfig, model: &SacModel) -> Result<(), CliError> {
    let (a, b) = (&cfg.hyper, &model.hyper);
    let fields: [(&str, usize, usize); 9] = [
        ("window_size", a.window, b.window),
        ("out_factor", a.out_factor, b.out_factor),
        ("stages", a.stages, b.stages),
        ("kernel_h", a.kernel_h, b.kernel_h),
        ("kernel_v", a.kernel_v, b.kernel_v),
        ("cbaa_size", a.cbaa_size, b.cbaa_size),
        ("dilation", a.dilation, b.dilation),
        ("hidden", a.hidden, b.hidden),
        ("independent_sides", a.independent_sides as usize, b.independent_sides as usize),
    ];
    for (key, want, got) in fields {
        if cfg.explicit.contains(key) && want != got {
            return Err(CliError::Validation(format!(
                "CheckpointMismatch: {key} is {want} in the configuration but {got} in the checkpoint"
            )));
        }
    }
    Ok(())
}

pub fn forecast(cfg: &RunConfig, checkpoint: &Path) -> Result<(), CliError> {
    let loaded = single(cfg)?;
    let model = SacModel::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    check_compatible(cfg, &model)?;
    create_dir(&cfg.output)?;
    let forecaster = Forecaster::new(model);
    let (fcs, fallbacks) = forecaster
        .forecast_all(&loaded.dataset.series, loaded.horizon, cfg.train.exec)
        .context("forecasting")?;
    let mut csv = String::from("series,step,q,forecast\n");
    for (s, fc) in loaded.dataset.series.iter().zip(&fcs) {
        let mut prev = *s.values.last().expect("series are non-empty");
        for (k, &v) in fc.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{}\n", s.id, k + 1, v - prev, v));
            prev = v;
        }
    }
    if fallbacks > 0 {
        eprintln!("{fallbacks} series shorter than W + 1 used the naive forecast");
    }
    let mut artifacts = Vec::new();
    write(&cfg.output.join("forecast.csv"), &csv, &mut artifacts)?;
    let extras = vec![
        ("checkpoint".to_string(), checkpoint.display().to_string()),
        ("effective_horizon".to_string(), loaded.horizon.to_string()),
        ("naive_fallbacks".to_string(), fallbacks.to_string()),
    ];
    finish(cfg, "forecast", &extras, artifacts)
}

pub fn benchmark(cfg: &RunConfig, naive_only: bool) -> Result<(), CliError> {
    if cfg.data.is_empty() {
        return Err(CliError::Validation("no dataset given; pass --data".into()));
    }
    create_dir(&cfg.output)?;
    let mut artifacts = Vec::new();
    let mut reports = Vec::new();
    let mut extras = vec![("naive_only".to_string(), naive_only.to_string())];
    for path in &cfg.data {
        let loaded = load(cfg, path)?;
        let name = stem(path);
        let (train_ds, test_ds) = splits(&loaded)?;
        let naive: Vec<Vec<f64>> = train_ds
            .series
            .iter()
            .map(|s| naive_forecast(s, loaded.horizon))
            .collect::<Result<_, _>>()
            .context("naive forecast")?;
        let report = MetricReport::from_forecasts(&name, "naive", &naive, &test_ds.series).context("naive metrics")?;
        write(&cfg.output.join(format!("{name}_naive.csv")), &report.to_csv(), &mut artifacts)?;
        reports.push(report);
        if naive_only {
            continue;
        }
        let (outcome, _) = fit(&train_ds.series, &cfg.hyper, cfg, cfg.train.seed)?;
        write(&cfg.output.join(format!("{name}_loss_curve.csv")), &outcome.loss_curve_csv(), &mut artifacts)?;
        write(&cfg.output.join(format!("{name}_checkpoint.sacts")), &outcome.model.to_checkpoint(), &mut artifacts)?;
        let forecaster = Forecaster::new(outcome.model);
        let (fcs, fallbacks) =
            forecaster.forecast_all(&train_ds.series, loaded.horizon, cfg.train.exec).context("forecasting")?;
        let report = MetricReport::from_forecasts(&name, "sac", &fcs, &test_ds.series).context("model metrics")?;
        write(&cfg.output.join(format!("{name}_model.csv")), &report.to_csv(), &mut artifacts)?;
        extras.push((format!("{name}.naive_fallbacks"), fallbacks.to_string()));
        reports.push(report);
    }
    let table = render_table(&reports);
    print!("{table}");
    write(&cfg.output.join("summary.txt"), &table, &mut artifacts)?;
    finish(cfg, "benchmark", &extras, artifacts)
}

struct PointResult {
    window: usize,
    out_factor: usize,
    seed: u64,
    mae: f64,
    rmse: f64,
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let loaded = single(cfg)?;
    let (train_ds, test_ds) = splits(&loaded)?;
    let windows = if cfg.sweep_windows.is_empty() { vec![cfg.hyper.window] } else { cfg.sweep_windows.clone() };
    let outs =
        if cfg.sweep_out_factors.is_empty() { vec![cfg.hyper.out_factor] } else { cfg.sweep_out_factors.clone() };
    if let Some(&w) = windows.iter().find(|&&w| w < 2) {
        return Err(CliError::Validation(format!("InvalidWindow: window size must be at least 2 (got {w})")));
    }
    let grid: Vec<(usize, usize)> = windows.iter().flat_map(|&w| outs.iter().map(move |&o| (w, o))).collect();
    for &(w, o) in &grid {
        Hyper { window: w, out_factor: o, ..cfg.hyper.clone() }.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let points_dir = cfg.output.join("points");
    create_dir(&points_dir)?;
    let workers = if cfg.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get()).min(grid.len())
    } else {
        cfg.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building the sweep worker pool")?;
    let results: Vec<Result<(PointResult, Vec<PathBuf>), CliError>> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(idx, &(w, o))| {
                let hyper = Hyper { window: w, out_factor: o, ..cfg.hyper.clone() };
                let seed = cfg.train.seed.wrapping_add(idx as u64);
                let (outcome, _) = fit(&train_ds.series, &hyper, cfg, seed)?;
                let dir = points_dir.join(format!("{idx:03}_w{w}_out{o}"));
                create_dir(&dir)?;
                let mut files = Vec::new();
                write(&dir.join("loss_curve.csv"), &outcome.loss_curve_csv(), &mut files)?;
                write(&dir.join("checkpoint.sacts"), &outcome.model.to_checkpoint(), &mut files)?;
                let forecaster = Forecaster::new(outcome.model);
                let (fcs, _) = forecaster
                    .forecast_all(&train_ds.series, loaded.horizon, cfg.train.exec)
                    .context("forecasting")?;
                let report = MetricReport::from_forecasts("sweep", "sac", &fcs, &test_ds.series).context("metrics")?;
                Ok((PointResult { window: w, out_factor: o, seed, mae: report.mae, rmse: report.rmse }, files))
            })
            .collect()
    });
    let mut csv = String::from("window_size,out_factor,seed,mae,rmse\n");
    let mut artifacts = Vec::new();
    for r in results {
        let (p, files) = r?;
        csv.push_str(&format!("{},{},{},{},{}\n", p.window, p.out_factor, p.seed, p.mae, p.rmse));
        artifacts.extend(files);
    }
    write(&cfg.output.join("sweep.csv"), &csv, &mut artifacts)?;
    let extras = vec![("grid_points".to_string(), grid.len().to_string()), ("workers_used".to_string(), workers.to_string())];
    finish(cfg, "sweep", &extras, artifacts)
}
