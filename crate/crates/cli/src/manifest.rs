use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::commands::{Outcome, Outputs};
use crate::config::ExperimentConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub passed: bool,
    pub seeds: Vec<Value>,
    /// File name to lowercase hex SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn bad(msg: &str) -> CliError {
    CliError::Usage(format!("malformed manifest: {msg}"))
}

impl Manifest {
    pub fn build(
        command: &str,
        cfg: &ExperimentConfig,
        wall_clock_seconds: f64,
        outcome: &Outcome,
        out: &Outputs,
    ) -> Result<Self, CliError> {
        let mut outputs = BTreeMap::new();
        for name in out.files() {
            outputs.insert(name.clone(), sha256_file(&out.dir().join(name))?);
        }
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.entries().clone(),
            wall_clock_seconds,
            passed: outcome.passed,
            seeds: outcome.seeds.clone(),
            outputs,
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "version": self.version,
            "config": self.config,
            "wall_clock_seconds": self.wall_clock_seconds,
            "passed": self.passed,
            "seeds": {
                "master_seed": self.config.get("master_seed"),
                "streams": self.seeds,
            },
            "outputs": self.outputs,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(std::io::Error::from)?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| bad(&e.to_string()))?;
        let strings = |key: &str| -> Result<BTreeMap<String, String>, CliError> {
            v[key]
                .as_object()
                .ok_or_else(|| bad(key))?
                .iter()
                .map(|(k, x)| Ok((k.clone(), x.as_str().ok_or_else(|| bad(key))?.to_string())))
                .collect()
        };
        Ok(Self {
            command: v["command"].as_str().ok_or_else(|| bad("command"))?.to_string(),
            version: v["version"].as_str().unwrap_or_default().to_string(),
            config: strings("config")?,
            wall_clock_seconds: v["wall_clock_seconds"].as_f64().unwrap_or(0.0),
            passed: v["passed"].as_bool().unwrap_or(false),
            seeds: v["seeds"]["streams"].as_array().cloned().unwrap_or_default(),
            outputs: strings("outputs")?,
        })
    }

    /// Output files whose checksum differs or is missing in `other`.
    pub fn mismatches(&self, other: &Manifest) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|(name, sum)| other.outputs.get(*name) != Some(sum))
            .map(|(name, _)| name.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        Manifest {
            command: "spectrum".into(),
            version: "0.1.0".into(),
            config: ExperimentConfig::default().entries().clone(),
            wall_clock_seconds: 1.5,
            passed: true,
            seeds: vec![json!({"label": "x", "sweep": null, "trials": [0, 1]})],
            outputs: [("spectrum.csv".to_string(), "ab".to_string())].into(),
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample();
        m.write(dir.path()).unwrap();
        assert_eq!(Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
    }

    #[test]
    fn mismatches_list_changed_files() {
        let a = sample();
        let mut b = sample();
        assert!(a.mismatches(&b).is_empty());
        b.outputs.insert("spectrum.csv".into(), "cd".into());
        assert_eq!(a.mismatches(&b), vec!["spectrum.csv".to_string()]);
    }

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
