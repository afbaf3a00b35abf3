use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvId, EnvOptions};
use crate::error::{Error, Result};
use crate::ot::SinkhornParams;
use crate::rl::{RatioBaseline, UpdateConfig};

/// Environment variable naming the default root directory for run outputs.
pub const OUTPUT_ROOT_VAR: &str = "SIPP_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ppo")]
    Ppo,
    #[serde(rename = "sipp-match")]
    SippMatch,
    #[serde(rename = "sipp-replay")]
    SippReplay,
    #[serde(rename = "sipp-replay+rnd")]
    SippReplayRnd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Ppo, Algorithm::SippMatch, Algorithm::SippReplay, Algorithm::SippReplayRnd];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::SippMatch => "sipp-match",
            Algorithm::SippReplay => "sipp-replay",
            Algorithm::SippReplayRnd => "sipp-replay+rnd",
        }
    }

    pub fn is_replay(self) -> bool {
        matches!(self, Algorithm::SippReplay | Algorithm::SippReplayRnd)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| {
            Error::Config(format!("unknown algorithm {s:?}; expected one of ppo, sipp-match, sipp-replay, sipp-replay+rnd"))
        })
    }
}

/// Every hyperparameter of a run. All fields are always materialized; see
/// [`TrainConfig::defaults`] for the per-algorithm, per-environment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub env: EnvId,
    /// Maze layout file; empty for the built-in layout.
    pub layout_file: String,
    pub random_start: bool,
    /// Episode horizon; 0 for the environment default.
    pub horizon: usize,

    /// Imitation-exploration trade-off: probability of the imitation path.
    pub xi: f64,
    pub sinkhorn_reg: f64,
    pub sinkhorn_iters: usize,
    pub sinkhorn_tol: f64,
    pub temperature: f64,

    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub lr: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    pub n_steps: usize,
    pub n_epochs: usize,
    pub normalize_advantage: bool,
    pub ratio: RatioBaseline,
    pub hidden: Vec<usize>,

    pub buffer_capacity: usize,
    pub reward_threshold: f64,

    pub rnd_coef: f64,
    pub rnd_lr: f64,

    /// Budget in real environment steps.
    pub total_steps: u64,
    /// Master seed of this run.
    pub seed: u64,
    /// Seeds a sweep expands this config over.
    pub seeds: Vec<u64>,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Iterations between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
    /// Run directory; empty derives `<output root>/<run name>`.
    pub output_dir: String,
}

impl TrainConfig {
    pub fn defaults(algorithm: Algorithm, env: EnvId) -> Self {
        let dense = env == EnvId::DensePoint;
        Self {
            algorithm,
            env,
            layout_file: String::new(),
            random_start: false,
            horizon: 0,
            xi: match (algorithm, dense) {
                (Algorithm::Ppo, _) => 0.0,
                (Algorithm::SippReplayRnd, _) | (_, true) => 0.1,
                _ => 0.3,
            },
            sinkhorn_reg: 0.05,
            sinkhorn_iters: 500,
            sinkhorn_tol: 1e-6,
            temperature: 0.5,
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            lr: 3e-4,
            vf_coef: 0.5,
            ent_coef: if env == EnvId::MaskedMaze { 0.02 } else { 0.0 },
            max_grad_norm: 0.5,
            batch_size: 64,
            n_steps: 2048,
            n_epochs: 10,
            normalize_advantage: true,
            ratio: RatioBaseline::PreviousIterate,
            hidden: vec![64, 64],
            buffer_capacity: match algorithm {
                Algorithm::SippReplay => 10,
                _ => 1,
            },
            reward_threshold: 0.0,
            rnd_coef: 0.5,
            rnd_lr: 1e-4,
            total_steps: if dense { 300_000 } else { 150_000 },
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            eval_interval: 10,
            eval_episodes: 10,
            checkpoint_interval: 0,
            output_dir: String::new(),
        }
    }

    /// Builds a config from TOML key-value text layered over the defaults, then applies
    /// `overrides` (`key`, `value` pairs whose values use TOML syntax, with bare strings
    /// accepted). `algorithm` and `env` are resolved first since they select the defaults.
    pub fn resolve(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        Self::resolve_named("config file", file_text, overrides)
    }

    fn resolve_named(source: &str, file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match file_text {
            Some(text) => text.parse::<toml::Table>().map_err(|e| Error::format(source, e.to_string()))?,
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            table.insert(key.replace('-', "_"), parse_override(raw));
        }
        let pick = |key: &str, fallback: &str| -> Result<String> {
            match table.get(key) {
                None => Ok(fallback.to_string()),
                Some(toml::Value::String(s)) => Ok(s.clone()),
                Some(other) => Err(Error::Config(format!("{key} must be a string, got {other}"))),
            }
        };
        let algorithm: Algorithm = pick("algorithm", "ppo")?.parse()?;
        let env: EnvId = pick("env", "sparse-maze")?.parse()?;

        let mut merged = toml::Table::try_from(Self::defaults(algorithm, env))
            .map_err(|e| Error::Config(format!("cannot encode defaults: {e}")))?;
        for (k, v) in table {
            if !merged.contains_key(&k) {
                return Err(Error::Config(format!(
                    "unknown config key {k:?}; valid keys: {}",
                    merged.keys().cloned().collect::<Vec<_>>().join(", ")
                )));
            }
            let v = match (&merged[&k], v) {
                // Integers are accepted where floats are expected.
                (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
                (_, v) => v,
            };
            merged.insert(k, v);
        }
        let config: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config file {name}: {e}")))?;
        Self::resolve_named(&name, Some(&text), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Lists every violated constraint at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        check((0.0..=1.0).contains(&self.xi), format!("xi must lie in [0, 1], got {}", self.xi));
        check(self.sinkhorn_reg > 0.0 && self.sinkhorn_reg.is_finite(), format!("sinkhorn_reg must be positive, got {}", self.sinkhorn_reg));
        check(self.sinkhorn_iters >= 1, "sinkhorn_iters must be at least 1".into());
        check(self.sinkhorn_tol > 0.0, format!("sinkhorn_tol must be positive, got {}", self.sinkhorn_tol));
        check(self.temperature > 0.0 && self.temperature.is_finite(), format!("temperature must be positive, got {}", self.temperature));
        check(unit(self.gamma), format!("gamma must lie in (0, 1], got {}", self.gamma));
        check(unit(self.lam), format!("lam must lie in (0, 1], got {}", self.lam));
        check(self.clip > 0.0 && self.clip < 1.0, format!("clip must lie in (0, 1), got {}", self.clip));
        check(self.lr > 0.0 && self.lr.is_finite(), format!("lr must be positive, got {}", self.lr));
        check(self.vf_coef >= 0.0, format!("vf_coef must be nonnegative, got {}", self.vf_coef));
        check(self.ent_coef >= 0.0, format!("ent_coef must be nonnegative, got {}", self.ent_coef));
        check(self.max_grad_norm > 0.0, format!("max_grad_norm must be positive, got {}", self.max_grad_norm));
        check(self.batch_size >= 1, "batch_size must be at least 1".into());
        check(self.n_steps >= self.batch_size, format!("n_steps ({}) must hold at least one batch ({})", self.n_steps, self.batch_size));
        check(self.n_epochs >= 1, "n_epochs must be at least 1".into());
        check(!self.hidden.is_empty() && self.hidden.iter().all(|&h| h > 0), "hidden layer sizes must be positive".into());
        check(self.buffer_capacity >= 1, "buffer_capacity must be at least 1".into());
        check(
            self.algorithm != Algorithm::SippMatch || self.buffer_capacity == 1,
            format!("sipp-match keeps exactly one trajectory, got buffer_capacity {}", self.buffer_capacity),
        );
        check(!self.reward_threshold.is_nan(), "reward_threshold is NaN".into());
        check(self.rnd_coef >= 0.0, format!("rnd_coef must be nonnegative, got {}", self.rnd_coef));
        check(self.rnd_lr > 0.0, format!("rnd_lr must be positive, got {}", self.rnd_lr));
        check(self.total_steps >= 1, "total_steps must be at least 1".into());
        check(self.eval_interval >= 1, "eval_interval must be at least 1".into());
        check(
            self.algorithm != Algorithm::Ppo || self.xi == 0.0,
            format!("ppo has no imitation path; xi must be 0, got {}", self.xi),
        );
        check(
            !(self.algorithm == Algorithm::SippMatch && self.env.is_sparse()),
            "sipp-match needs a dense-reward env".into(),
        );
        check(
            !(self.algorithm.is_replay() && !self.env.is_sparse()),
            format!("{} needs a sparse-reward env", self.algorithm),
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn update_config(&self) -> UpdateConfig {
        UpdateConfig {
            clip: self.clip,
            vf_coef: self.vf_coef,
            ent_coef: self.ent_coef,
            max_grad_norm: self.max_grad_norm,
            batch_size: self.batch_size,
            n_epochs: self.n_epochs,
            normalize_advantage: self.normalize_advantage,
            ratio: self.ratio,
        }
    }

    pub fn sinkhorn_params(&self) -> SinkhornParams {
        SinkhornParams {
            reg: self.sinkhorn_reg,
            max_iters: self.sinkhorn_iters,
            tol: self.sinkhorn_tol,
        }
    }

    pub fn env_options(&self) -> Result<EnvOptions> {
        let layout = if self.layout_file.is_empty() {
            None
        } else {
            Some(std::fs::read_to_string(&self.layout_file).map_err(|e| Error::format(&self.layout_file, e.to_string()))?)
        };
        Ok(EnvOptions {
            layout,
            random_start: self.random_start,
            horizon: (self.horizon > 0).then_some(self.horizon),
        })
    }

    pub fn run_name(&self) -> String {
        format!("{}-seed{}", self.group_name(), self.seed)
    }

    /// [`TrainConfig::run_name`] without the seed.
    pub fn group_name(&self) -> String {
        format!("{}-{}-xi{}", self.algorithm.as_str().replace('+', "-"), self.env, self.xi)
    }

    /// `output_dir`, else `$SIPP_OUTPUT_ROOT/<run name>`, else `runs/<run name>`.
    pub fn run_dir(&self) -> PathBuf {
        if !self.output_dir.is_empty() {
            return PathBuf::from(&self.output_dir);
        }
        output_root().join(self.run_name())
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn parse_override(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(kv: &[(&str, &str)]) -> Vec<(String, String)> {
        kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_follow_algorithm_and_env() {
        let c = TrainConfig::resolve(None, &pairs(&[("algorithm", "sipp-replay")])).unwrap();
        assert_eq!((c.xi, c.buffer_capacity, c.total_steps), (0.3, 10, 150_000));
        let c = TrainConfig::resolve(None, &pairs(&[("algorithm", "sipp-match"), ("env", "dense-point")])).unwrap();
        assert_eq!((c.xi, c.buffer_capacity, c.total_steps), (0.1, 1, 300_000));
        let c = TrainConfig::resolve(None, &pairs(&[("algorithm", "sipp-replay+rnd"), ("env", "masked-maze")])).unwrap();
        assert_eq!((c.xi, c.buffer_capacity, c.ent_coef), (0.1, 1, 0.02));
    }

    #[test]
    fn overrides_beat_file() {
        let file = "algorithm = \"sipp-replay\"\nxi = 0.7\nseed = 3\n";
        let c = TrainConfig::resolve(Some(file), &pairs(&[("xi", "0.1"), ("n-steps", "4096")])).unwrap();
        assert_eq!((c.xi, c.seed, c.n_steps), (0.1, 3, 4096));
    }

    #[test]
    fn integers_accepted_for_floats_and_bare_strings_for_enums() {
        let c = TrainConfig::resolve(None, &pairs(&[("algorithm", "sipp-replay"), ("xi", "1"), ("ratio", "rollout")])).unwrap();
        assert_eq!(c.xi, 1.0);
        assert_eq!(c.ratio, RatioBaseline::Rollout);
    }

    #[test]
    fn every_violation_is_listed() {
        let err = TrainConfig::resolve(None, &pairs(&[("algorithm", "sipp-replay"), ("xi", "2.0"), ("gamma", "0")]))
            .unwrap_err()
            .to_string();
        assert!(err.contains("xi") && err.contains("gamma"), "{err}");
        assert!(TrainConfig::resolve(None, &pairs(&[("bogus", "1")])).unwrap_err().to_string().contains("bogus"));
        assert!(TrainConfig::resolve(None, &pairs(&[("algorithm", "sipp-match")])).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig::defaults(Algorithm::SippReplay, EnvId::SparseMaze);
        assert_eq!(TrainConfig::resolve(Some(&c.to_toml()), &[]).unwrap(), c);
    }
}
