//! Line-oriented text checkpoint. Reals are stored as the hex of their IEEE
//! bits so a save/load cycle is exact.
//!
//! ```text
//! sacts-checkpoint 1
//! hyper window=12 cbaa_size=2 dilation=1 independent_sides=false stages=2 kernel_h=3 kernel_v=2 out_factor=4 hidden=64
//! universe <beta_l> <beta_u> <n_intervals> <phi>
//! target_scale <x>
//! bn_running <mean> <var>
//! tensor <name> <d0>x<d1>... <x> <x> ...
//! ```

use super::{Hyper, NetworkError, Params, SacModel, Tensor};
use crate::encoder::Universe;
use std::path::Path;
use thiserror::Error;

const MAGIC: &str = "sacts-checkpoint 1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("checkpoint does not fit its hyper block: {0}")]
    Network(#[from] NetworkError),
    #[error("checkpoint {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn hex(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn unhex(tok: &str, line: usize) -> Result<f64, CheckpointError> {
    u64::from_str_radix(tok, 16)
        .map(f64::from_bits)
        .map_err(|_| CheckpointError::Format { line, message: format!("bad real `{tok}`") })
}

impl Hyper {
    pub fn to_line(&self) -> String {
        format!(
            "window={} cbaa_size={} dilation={} independent_sides={} stages={} kernel_h={} kernel_v={} out_factor={} hidden={}",
            self.window,
            self.cbaa_size,
            self.dilation,
            self.independent_sides,
            self.stages,
            self.kernel_h,
            self.kernel_v,
            self.out_factor,
            self.hidden
        )
    }

    fn from_tokens<'a>(tokens: impl Iterator<Item = &'a str>, line: usize) -> Result<Hyper, CheckpointError> {
        let err = |message: String| CheckpointError::Format { line, message };
        let mut h = Hyper::default();
        let mut seen = 0;
        for tok in tokens {
            let (k, v) = tok.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{tok}`")))?;
            let num = || v.parse::<usize>().map_err(|_| err(format!("{k}: bad integer `{v}`")));
            match k {
                "window" => h.window = num()?,
                "cbaa_size" => h.cbaa_size = num()?,
                "dilation" => h.dilation = num()?,
                "independent_sides" => {
                    h.independent_sides = v.parse().map_err(|_| err(format!("{k}: bad bool `{v}`")))?
                }
                "stages" => h.stages = num()?,
                "kernel_h" => h.kernel_h = num()?,
                "kernel_v" => h.kernel_v = num()?,
                "out_factor" => h.out_factor = num()?,
                "hidden" => h.hidden = num()?,
                _ => return Err(err(format!("unknown hyperparameter `{k}`"))),
            }
            seen += 1;
        }
        if seen != 9 {
            return Err(err(format!("hyper block has {seen} of 9 fields")));
        }
        Ok(h)
    }
}

impl SacModel {
    pub fn to_checkpoint(&self) -> String {
        let u = &self.universe;
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        out.push_str(&format!("hyper {}\n", self.hyper.to_line()));
        out.push_str(&format!(
            "universe {} {} {} {}\n",
            hex(u.beta_l),
            hex(u.beta_u),
            u.n_intervals,
            hex(u.phi)
        ));
        out.push_str(&format!("target_scale {}\n", hex(self.target_scale)));
        out.push_str(&format!("bn_running {} {}\n", hex(self.running_mean), hex(self.running_var)));
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            out.push_str(&format!("tensor {name} {}", dims.join("x")));
            for &x in t.data() {
                out.push(' ');
                out.push_str(&hex(x));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<SacModel, CheckpointError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| CheckpointError::Format { line: 0, message: format!("missing {what}") })
        };
        let fmt = |line: usize, message: String| CheckpointError::Format { line, message };

        let (ln, magic) = next("header")?;
        if magic != MAGIC {
            return Err(fmt(ln, format!("expected `{MAGIC}`")));
        }
        let (ln, l) = next("hyper block")?;
        let hyper = match l.strip_prefix("hyper ") {
            Some(rest) => Hyper::from_tokens(rest.split_whitespace(), ln)?,
            None => return Err(fmt(ln, "expected hyper block".into())),
        };

        let (ln, l) = next("universe")?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 5 || tok[0] != "universe" {
            return Err(fmt(ln, "expected `universe beta_l beta_u n phi`".into()));
        }
        let n: usize = tok[3].parse().map_err(|_| fmt(ln, format!("bad interval count `{}`", tok[3])))?;
        if n == 0 {
            return Err(fmt(ln, "interval count must be positive".into()));
        }
        let universe = Universe::from_bounds(unhex(tok[1], ln)?, unhex(tok[2], ln)?, n, unhex(tok[4], ln)?);

        let (ln, l) = next("target scale")?;
        let target_scale = match l.split_whitespace().collect::<Vec<_>>()[..] {
            ["target_scale", x] => unhex(x, ln)?,
            _ => return Err(fmt(ln, "expected `target_scale x`".into())),
        };
        let (ln, l) = next("batchnorm running statistics")?;
        let (running_mean, running_var) = match l.split_whitespace().collect::<Vec<_>>()[..] {
            ["bn_running", m, v] => (unhex(m, ln)?, unhex(v, ln)?),
            _ => return Err(fmt(ln, "expected `bn_running mean var`".into())),
        };

        let dims = hyper.dims(&universe)?;
        let mut params = Params::zeros(&hyper, &dims);
        let names = params.names();
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let (ln, l) = next(name)?;
            let mut tok = l.split_whitespace();
            if tok.next() != Some("tensor") || tok.next() != Some(name.as_str()) {
                return Err(fmt(ln, format!("expected tensor `{name}`")));
            }
            let shape: Vec<usize> = tok
                .next()
                .ok_or_else(|| fmt(ln, "missing shape".into()))?
                .split('x')
                .map(|d| d.parse().map_err(|_| fmt(ln, format!("bad extent `{d}`"))))
                .collect::<Result<_, _>>()?;
            let data: Vec<f64> = tok.map(|x| unhex(x, ln)).collect::<Result<_, _>>()?;
            *slot = Tensor::from_vec(&shape, data).map_err(|e| fmt(ln, e.to_string()))?;
        }
        if let Some((ln, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(fmt(ln, format!("unexpected trailing content `{l}`")));
        }
        Ok(SacModel::from_parts(hyper, universe, target_scale, params, running_mean, running_var)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_checkpoint())
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<SacModel, CheckpointError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        SacModel::from_checkpoint(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(seed: u64, independent: bool) -> SacModel {
        let alphas: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 3.0 + 0.1).collect();
        let u = Universe::build(&alphas).unwrap();
        let h = Hyper { independent_sides: independent, window: 6, ..Hyper::default() };
        SacModel::new(h, u, 1.7, -0.25, seed).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for independent in [false, true] {
            let mut m = model(9, independent);
            m.running_mean = 0.1 + 0.2;
            m.running_var = std::f64::consts::PI;
            let text = m.to_checkpoint();
            let back = SacModel::from_checkpoint(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_checkpoint(), text);
        }
    }

    #[test]
    fn rejects_truncated_and_mismatched() {
        let text = model(1, false).to_checkpoint();
        let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(SacModel::from_checkpoint(&truncated).is_err());
        let bad = text.replacen("hidden=64", "hidden=32", 1);
        assert!(SacModel::from_checkpoint(&bad).is_err());
        assert!(SacModel::from_checkpoint("nonsense").is_err());
    }
}
