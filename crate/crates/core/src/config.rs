//! Run configuration: one TOML file with a section per component. Every key
//! is optional; missing keys take the defaults of the selected flow.
//!
//! ```toml
//! [env]
//! kind = "turb"
//! mode = "test"
//! dataset = "data/turb64"
//!
//! [ppo]
//! num_envs = 20
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::a2c::A2cConfig;
use crate::baselines::SurfingConfig;
use crate::env::{EnvConfig, FlowKind};
use crate::ppo::PpoConfig;
use crate::qlearning::QlConfig;
use crate::turbulence::{SimulationPlan, SolverConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Moving-average window of learning curves.
    pub window: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            seed: 0,
            window: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub solver: SolverConfig,
    pub simulation: SimulationPlan,
    pub surfing: SurfingConfig,
    pub ql: QlConfig,
    pub a2c: A2cConfig,
    pub ppo: PpoConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn for_kind(kind: FlowKind) -> Self {
        Self {
            env: EnvConfig::for_kind(kind),
            solver: SolverConfig::desk_scale(),
            simulation: SimulationPlan::default(),
            surfing: SurfingConfig::for_kind(kind),
            ql: QlConfig::for_kind(kind),
            a2c: A2cConfig::for_kind(kind),
            ppo: PpoConfig::for_kind(kind),
            eval: EvalConfig::default(),
        }
    }

    /// Parses `text` over the defaults of a flow. The flow is `kind` when
    /// given, else `env.kind` from the text, else TGV.
    pub fn from_toml_str(text: &str, kind: Option<FlowKind>) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let file_kind = match user.get("env").and_then(|e| e.get("kind")) {
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| Error::Config("env.kind must be a string".into()))?
                    .parse::<FlowKind>()?,
            ),
            None => None,
        };
        let kind = kind.or(file_kind).unwrap_or(FlowKind::Tgv);
        let mut merged = toml::Table::try_from(Self::for_kind(kind)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        if let Some(toml::Value::Table(env)) = merged.get_mut("env") {
            env.insert("kind".into(), toml::Value::String(kind.name().into()));
        }
        let cfg: Self = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, kind: Option<FlowKind>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, kind)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.solver.validate()?;
        self.ppo.validate()?;
        if self.eval.window == 0 {
            return Err(Error::Config("eval.window must be at least 1".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("", None).unwrap(), RunConfig::for_kind(FlowKind::Tgv));
        assert_eq!(
            RunConfig::from_toml_str("", Some(FlowKind::Abc)).unwrap(),
            RunConfig::for_kind(FlowKind::Abc)
        );
    }

    #[test]
    fn kind_from_file_selects_defaults() {
        let cfg = RunConfig::from_toml_str("[env]\nkind = \"turb\"\nmode = \"test\"\n", None).unwrap();
        assert_eq!(cfg.env.episode_steps, 500);
        assert_eq!(cfg.ql.gamma, 0.99);
        assert_eq!(cfg.ppo.rollout_len, 100);
        assert_eq!(cfg.env.mode, crate::env::Mode::Test);
    }

    #[test]
    fn overrides_and_typos() {
        let cfg = RunConfig::from_toml_str("[ppo]\nnum_envs = 7\n[eval]\nepisodes = 1234\n", None).unwrap();
        assert_eq!(cfg.ppo.num_envs, 7);
        assert_eq!(cfg.ppo.rollout_len, 10);
        assert_eq!(cfg.eval.episodes, 1234);
        assert!(RunConfig::from_toml_str("[ppo]\nnum_env = 7\n", None).is_err());
        assert!(RunConfig::from_toml_str("[env]\nkind = \"xyz\"\n", None).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::for_kind(FlowKind::Abc);
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string(), None).unwrap(), cfg);
    }
}
