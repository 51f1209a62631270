use std::fs;
use std::path::{Path, PathBuf};

use pace::ppo::{PpoConfig, Preset};
use pace::predator_prey::PpConfig;
use pace::{EnvKind, Error, Result};
use serde::{Deserialize, Serialize};

pub const OUTPUT_ROOT_VAR: &str = "PACE_OUTPUT_ROOT";

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Where the peer pool comes from: a file, or generation from a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSource {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub n_eps: usize,
    pub window: usize,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_th: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub seed: u64,
    pub preset: Preset,
    pub out_dir: PathBuf,
    /// Updates between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub pool: PoolSource,
    pub ppo: PpoConfig,
    pub eval: EvalConfig,
    pub predator_prey: PpConfig,
}

impl ExperimentConfig {
    pub fn defaults(env: EnvKind) -> Self {
        let (train, test, n_eps, window) = match env {
            EnvKind::Kuhn => (40, 10, 100, 10),
            EnvKind::PredatorPreyW => (16, 24, 5, 1),
        };
        ExperimentConfig {
            env,
            seed: 1,
            preset: Preset::Pace,
            out_dir: default_output_root().join(env.as_str()),
            checkpoint_every: 10,
            pool: PoolSource {
                path: None,
                train,
                test,
                seed: 0,
            },
            ppo: PpoConfig::for_env(env),
            eval: EvalConfig {
                n_eps,
                window,
                seeds: vec![1, 2, 3],
                c_th: None,
                switch_at: None,
            },
            predator_prey: PpConfig::default(),
        }
    }

    /// Reads a config file, filling every key it leaves out with the
    /// defaults of its environment.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        let schema = |msg: String| Error::Schema {
            path: path.to_path_buf(),
            msg,
        };
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| schema(e.to_string()))?;
        let env = match user.get("env") {
            None => EnvKind::Kuhn,
            Some(toml::Value::String(s)) => s.parse()?,
            Some(other) => return Err(schema(format!("`env` must be a string, found {other}"))),
        };
        let mut merged = toml::Value::try_from(Self::defaults(env)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, toml::Value::Table(user));
        let mut config: ExperimentConfig = merged.try_into().map_err(|e: toml::de::Error| schema(e.to_string()))?;
        if let Some(p) = &config.pool.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.pool.path = Some(base.join(p));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.pool.path {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        self.ppo.validate()?;
        self.predator_prey.validate()?;
        if self.eval.n_eps == 0 || self.eval.window == 0 || self.eval.seeds.is_empty() {
            return Err(Error::Config("eval needs n_eps, window and at least one seed".into()));
        }
        if let Some(c) = self.eval.c_th {
            pace::adapt::ChangeDetectorConfig::new(c)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
