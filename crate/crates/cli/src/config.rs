//! Flat `key = value` experiment configuration.
//!
//! Values are kept as text so the resolved configuration can be echoed
//! verbatim into the run manifest and replayed.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use balnet_core::{Complex64, InitialCondition, ModelParams, NoiseKind, NoiseLaw, NoiseWeights, TimeGrid};

use crate::CliError;

pub const OUTPUT_DIR_ENV: &str = "BALNET_OUTPUT_DIR";

const DEFAULTS: &[(&str, &str)] = &[
    ("n", "1000"),
    ("f", "0.5"),
    ("sigma_i", "2"),
    ("sigma_e", "1"),
    ("a", "1"),
    ("kappa", "0"),
    ("c_i", "1"),
    ("c_e", "-1"),
    ("noise", "gaussian"),
    ("sigma0_i", "0.25"),
    ("sigma0_e", "0.25"),
    ("t_max", "2"),
    ("n_steps", "4"),
    ("n_trials", "100"),
    ("master_seed", "0"),
    ("n_list", "100,200,400,800"),
    ("output_dir", "out"),
    ("threads", "0"),
    ("weights", "swapped"),
    ("rows", "100000"),
    ("route_trials", "100000"),
    ("rotated_trials", "10000"),
    ("lambda_points", "201"),
    ("z_re", "0"),
    ("z_im", "1"),
    ("kappas", "0,0.5,1,1.5,2,3"),
    ("stability_points", "501"),
    ("unconstrained", "true"),
    ("route", "projection"),
    ("tol", "1e-6"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim().to_string();
        if key == "sigma0" {
            self.values.insert("sigma0_i".into(), value.clone());
            self.values.insert("sigma0_e".into(), value);
            return Ok(());
        }
        match self.values.get_mut(&key) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(usage(format!("unknown config key `{key}`"))),
        }
    }

    /// Applies a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies `--key=value` flags.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), CliError> {
        for arg in args {
            let body = arg
                .strip_prefix("--")
                .ok_or_else(|| usage(format!("expected --key=value, got `{arg}`")))?;
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| usage(format!("expected --key=value, got `{arg}`")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| usage(format!("cannot parse `{key}` from `{raw}`")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        let raw = self.raw(key);
        raw.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| usage(format!("cannot parse `{key}` entry `{s}`")))
            })
            .collect()
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(
            self.get("n")?,
            self.get("f")?,
            self.get("sigma_i")?,
            self.get("sigma_e")?,
            self.get("a")?,
            self.get("kappa")?,
        )?)
    }

    pub fn initial(&self) -> Result<InitialCondition, CliError> {
        let kind: NoiseKind = self.raw("noise").parse()?;
        Ok(InitialCondition::new(
            self.get("c_i")?,
            self.get("c_e")?,
            NoiseLaw::new(kind, self.get("sigma0_i")?)?,
            NoiseLaw::new(kind, self.get("sigma0_e")?)?,
        )?)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::uniform(self.get("t_max")?, self.get("n_steps")?)?)
    }

    pub fn n_trials(&self) -> Result<u64, CliError> {
        let n: u64 = self.get("n_trials")?;
        if n == 0 {
            return Err(usage("n_trials must be at least 1"));
        }
        Ok(n)
    }

    pub fn z(&self) -> Result<Complex64, CliError> {
        Ok(Complex64::new(self.get("z_re")?, self.get("z_im")?))
    }

    pub fn weights(&self) -> Result<NoiseWeights, CliError> {
        Ok(self.raw("weights").parse()?)
    }

    pub fn threads(&self) -> Result<Option<usize>, CliError> {
        let t: usize = self.get("threads")?;
        Ok((t > 0).then_some(t))
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("output_dir"))
    }
}

/// File, then environment, then flags.
pub fn resolve(file: Option<&str>, env_output: Option<String>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(text) = file {
        cfg.apply_text(text)?;
    }
    if let Some(dir) = env_output {
        cfg.set("output_dir", &dir)?;
    }
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}
