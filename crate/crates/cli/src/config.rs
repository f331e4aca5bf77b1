//! Run configuration: defaults, then a `key = value` file, then flags, then
//! the `SACTS_SEED` environment variable.
//!
//! The manifest written by every command uses the same syntax, so passing it
//! back with `--config` reproduces the run.

use crate::CliError;
use clap::Args;
use sacts_core::train::TrainConfig;
use sacts_core::{Execution, Hyper, MissingPolicy};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

pub const SEED_ENV: &str = "SACTS_SEED";

/// Flags shared by every command. Unset flags fall back to the config file,
/// then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Dataset file(s), `.tsf` or `.csv`.
    #[arg(long = "data", value_delimiter = ',')]
    pub data: Vec<PathBuf>,
    /// Plain `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Window size W.
    #[arg(long)]
    pub window_size: Option<usize>,
    /// Lifting factor OUT.
    #[arg(long)]
    pub out_factor: Option<usize>,
    /// Number of stages L.
    #[arg(long)]
    pub stages: Option<usize>,
    /// Horizontal kernel width H.
    #[arg(long)]
    pub kernel_h: Option<usize>,
    /// Vertical kernel height V.
    #[arg(long)]
    pub kernel_v: Option<usize>,
    /// CBAA filter size v.
    #[arg(long)]
    pub cbaa_size: Option<usize>,
    /// CBAA dilation d.
    #[arg(long)]
    pub dilation: Option<usize>,
    /// Separate CBAA filters for the two directions.
    #[arg(long)]
    pub independent_sides: Option<bool>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `forward-fill` or `drop-series`.
    #[arg(long)]
    pub missing_policy: Option<MissingPolicy>,
    /// Forecast horizon; overrides the dataset's declared horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// `parallel` or `sequential`.
    #[arg(long)]
    pub execution: Option<String>,
    /// Write the first N encoded training windows as CSV under `encoded/`.
    #[arg(long)]
    pub dump_encoded: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Vec<PathBuf>,
    pub output: PathBuf,
    pub hyper: Hyper,
    pub train: TrainConfig,
    pub missing_policy: MissingPolicy,
    pub horizon: Option<usize>,
    pub dump_encoded: usize,
    /// Sweep grid; empty means the single configured value.
    pub sweep_windows: Vec<usize>,
    pub sweep_out_factors: Vec<usize>,
    /// Sweep worker threads; 0 picks the available parallelism.
    pub workers: usize,
    /// Keys supplied by the user rather than defaulted.
    pub explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: Vec::new(),
            output: PathBuf::from("sacts-out"),
            hyper: Hyper::default(),
            train: TrainConfig::default(),
            missing_policy: MissingPolicy::default(),
            horizon: None,
            dump_encoded: 0,
            sweep_windows: Vec::new(),
            sweep_out_factors: Vec::new(),
            workers: 0,
            explicit: BTreeSet::new(),
        }
    }
}

fn invalid(key: &str, value: &str) -> CliError {
    CliError::Validation(format!("{key}: invalid value `{value}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| invalid(key, value))
}

fn list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|v| num(key, v)).collect()
}

fn joined(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn execution_label(e: Execution) -> &'static str {
    match e {
        Execution::Parallel => "parallel",
        Execution::Sequential => "sequential",
    }
}

impl RunConfig {
    /// Sets one key from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let h = &mut self.hyper;
        let t = &mut self.train;
        match key {
            "data" => {
                self.data = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
            }
            "output" => self.output = PathBuf::from(value),
            "window_size" => h.window = num(key, value)?,
            "out_factor" => h.out_factor = num(key, value)?,
            "stages" => h.stages = num(key, value)?,
            "kernel_h" => h.kernel_h = num(key, value)?,
            "kernel_v" => h.kernel_v = num(key, value)?,
            "cbaa_size" => h.cbaa_size = num(key, value)?,
            "dilation" => h.dilation = num(key, value)?,
            "independent_sides" => h.independent_sides = num(key, value)?,
            "hidden" => h.hidden = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "lr" => t.lr = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "missing_policy" => self.missing_policy = value.parse().map_err(|_| invalid(key, value))?,
            "horizon" => self.horizon = if value == "none" { None } else { Some(num(key, value)?) },
            "execution" => {
                t.exec = match value {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => return Err(invalid(key, value)),
                }
            }
            "dump_encoded" => self.dump_encoded = num(key, value)?,
            "sweep_windows" => self.sweep_windows = list(key, value)?,
            "sweep_out_factors" => self.sweep_out_factors = list(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "beta1" => t.beta1 = num(key, value)?,
            "beta2" => t.beta2 = num(key, value)?,
            "eps_opt" => t.eps_opt = num(key, value)?,
            "plateau_factor" => t.plateau_factor = num(key, value)?,
            "plateau_patience" => t.plateau_patience = num(key, value)?,
            "plateau_threshold" => t.plateau_threshold = num(key, value)?,
            "plateau_eps" => t.plateau_eps = num(key, value)?,
            _ => return Err(CliError::Validation(format!("unknown configuration key `{key}`"))),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("config {} line {}: expected key = value", path.display(), i + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    fn apply_args(&mut self, a: &CommonArgs) -> Result<(), CliError> {
        if !a.data.is_empty() {
            let joined: Vec<String> = a.data.iter().map(|p| p.display().to_string()).collect();
            self.set("data", &joined.join(","))?;
        }
        let pairs: [(&str, Option<String>); 18] = [
            ("output", a.output.as_ref().map(|p| p.display().to_string())),
            ("window_size", a.window_size.map(|v| v.to_string())),
            ("out_factor", a.out_factor.map(|v| v.to_string())),
            ("stages", a.stages.map(|v| v.to_string())),
            ("kernel_h", a.kernel_h.map(|v| v.to_string())),
            ("kernel_v", a.kernel_v.map(|v| v.to_string())),
            ("cbaa_size", a.cbaa_size.map(|v| v.to_string())),
            ("dilation", a.dilation.map(|v| v.to_string())),
            ("independent_sides", a.independent_sides.map(|v| v.to_string())),
            ("hidden", a.hidden.map(|v| v.to_string())),
            ("batch_size", a.batch_size.map(|v| v.to_string())),
            ("epochs", a.epochs.map(|v| v.to_string())),
            ("lr", a.lr.map(|v| v.to_string())),
            ("seed", a.seed.map(|v| v.to_string())),
            ("missing_policy", a.missing_policy.map(|p| p.to_string())),
            ("horizon", a.horizon.map(|v| v.to_string())),
            ("execution", a.execution.clone()),
            ("dump_encoded", a.dump_encoded.map(|v| v.to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                self.set(k, &v)?;
            }
        }
        Ok(())
    }

    /// Defaults ← config file ← flags ← `SACTS_SEED`.
    pub fn resolve(a: &CommonArgs, seed_env: Option<String>) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &a.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_args(a)?;
        if let Some(seed) = seed_env {
            cfg.set("seed", seed.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.hyper.window < 2 {
            return Err(CliError::Validation(format!("InvalidWindow: window size must be at least 2 (got {})", self.hyper.window)));
        }
        self.hyper.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if self.train.batch_size == 0 {
            return Err(CliError::Validation("batch_size must be at least 1".into()));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(CliError::Validation(format!("lr must be positive (got {})", self.train.lr)));
        }
        if !(self.train.plateau_factor > 0.0 && self.train.plateau_factor < 1.0) {
            return Err(CliError::Validation("plateau_factor must lie in (0, 1)".into()));
        }
        if self.train.plateau_patience == 0 {
            return Err(CliError::Validation("plateau_patience must be at least 1".into()));
        }
        if self.horizon == Some(0) {
            return Err(CliError::Validation("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Every key with its effective value, in the config-file syntax.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (h, t) = (&self.hyper, &self.train);
        let data: Vec<String> = self.data.iter().map(|p| p.display().to_string()).collect();
        vec![
            ("data", data.join(",")),
            ("output", self.output.display().to_string()),
            ("window_size", h.window.to_string()),
            ("out_factor", h.out_factor.to_string()),
            ("stages", h.stages.to_string()),
            ("kernel_h", h.kernel_h.to_string()),
            ("kernel_v", h.kernel_v.to_string()),
            ("cbaa_size", h.cbaa_size.to_string()),
            ("dilation", h.dilation.to_string()),
            ("independent_sides", h.independent_sides.to_string()),
            ("hidden", h.hidden.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("lr", t.lr.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("eps_opt", t.eps_opt.to_string()),
            ("plateau_factor", t.plateau_factor.to_string()),
            ("plateau_patience", t.plateau_patience.to_string()),
            ("plateau_threshold", t.plateau_threshold.to_string()),
            ("plateau_eps", t.plateau_eps.to_string()),
            ("seed", t.seed.to_string()),
            ("missing_policy", self.missing_policy.to_string()),
            ("horizon", self.horizon.map_or("none".into(), |h| h.to_string())),
            ("execution", execution_label(t.exec).into()),
            ("dump_encoded", self.dump_encoded.to_string()),
            ("sweep_windows", joined(&self.sweep_windows)),
            ("sweep_out_factors", joined(&self.sweep_out_factors)),
            ("workers", self.workers.to_string()),
        ]
    }

    /// Manifest text: a header comment, the command-specific extras as
    /// comments, then every configuration key.
    pub fn manifest(&self, command: &str, extras: &[(String, String)], artifacts: &[PathBuf]) -> String {
        let mut out = format!("# sacts {}\n# command = {command}\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in extras {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        for a in artifacts {
            out.push_str(&format!("# artifact = {}\n", a.display()));
        }
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_and_env_beats_flags() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "# comment\nwindow_size = 6\nepochs = 9\nseed = 1\n").unwrap();
        let args = CommonArgs { config: Some(file), epochs: Some(3), seed: Some(2), ..CommonArgs::default() };
        let cfg = RunConfig::resolve(&args, None).unwrap();
        assert_eq!((cfg.hyper.window, cfg.train.epochs, cfg.train.seed), (6, 3, 2));
        let cfg = RunConfig::resolve(&args, Some("77".into())).unwrap();
        assert_eq!(cfg.train.seed, 77);
        assert!(cfg.explicit.contains("window_size"));
        assert!(!cfg.explicit.contains("stages"));
    }

    #[test]
    fn manifest_reproduces_the_config() {
        let args = CommonArgs {
            data: vec!["a.tsf".into(), "b.csv".into()],
            window_size: Some(5),
            lr: Some(0.003),
            horizon: Some(4),
            execution: Some("sequential".into()),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::resolve(&args, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        std::fs::write(&path, cfg.manifest("train", &[], &[])).unwrap();
        let back = RunConfig::resolve(&CommonArgs { config: Some(path), ..CommonArgs::default() }, None).unwrap();
        assert_eq!(back.entries(), cfg.entries());
    }

    #[test]
    fn window_of_one_is_invalid() {
        let args = CommonArgs { window_size: Some(1), ..CommonArgs::default() };
        match RunConfig::resolve(&args, None) {
            Err(CliError::Validation(msg)) => assert!(msg.starts_with("InvalidWindow")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("windw", "3"), Err(CliError::Validation(_))));
    }
}
