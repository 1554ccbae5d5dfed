//! Environments addressable by name.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use vsrl_core::environments::{
    make_cliff, make_grid, make_three_state, CliffParams, CliffWorld, GridParams, ThreeStateParams,
};
use vsrl_core::mdp::MdpDocument;
use vsrl_core::{Channel, Mdp, Scheme};

use crate::config::{decode, EnvSpec};
use crate::error::{HarnessError, Result};

pub const ENV_NAMES: [&str; 4] = ["cliff", "three_state", "grid", "file"];

#[derive(Debug, Clone)]
pub enum EnvKind {
    Cliff(Box<CliffWorld<f64>>),
    ThreeState(ThreeStateParams<f64>),
    Grid(GridParams<f64>),
    File,
}

/// A constructed environment with what the runner needs to know about it.
#[derive(Debug, Clone)]
pub struct BuiltEnv {
    pub mdp: Mdp,
    pub channel: Channel,
    /// The environment's own interruption scheme, if it has one.
    pub scheme: Option<Scheme>,
    /// States that end an episode.
    pub terminal_states: Vec<usize>,
    pub kind: EnvKind,
}

fn with_overrides<T: Serialize + DeserializeOwned>(defaults: T, overrides: &Value) -> Result<T> {
    let mut base = serde_json::to_value(defaults)?;
    match overrides {
        Value::Null => {}
        Value::Object(map) => {
            let target = base.as_object_mut().expect("parameter structs serialize to objects");
            for (key, value) in map {
                if !target.contains_key(key) {
                    return Err(HarnessError::Config {
                        path: format!("env.overrides.{key}"),
                        reason: "unknown parameter".into(),
                    });
                }
                target.insert(key.clone(), value.clone());
            }
        }
        _ => {
            return Err(HarnessError::Config {
                path: "env.overrides".into(),
                reason: "must be an object".into(),
            })
        }
    }
    decode(base).map_err(|e| match e {
        HarnessError::Config { path, reason } => HarnessError::Config {
            path: format!("env.overrides.{path}"),
            reason,
        },
        other => other,
    })
}

fn rejected(e: vsrl_core::Error) -> HarnessError {
    HarnessError::Config {
        path: "env.overrides".into(),
        reason: e.to_string(),
    }
}

pub fn build_env(spec: &EnvSpec) -> Result<BuiltEnv> {
    match spec.name.as_str() {
        "cliff" => {
            let params: CliffParams<f64> = with_overrides(CliffParams::default(), &spec.overrides)?;
            let world = make_cliff(&params).map_err(rejected)?;
            Ok(BuiltEnv {
                mdp: world.mdp.clone(),
                channel: world.channel.clone(),
                scheme: world.scheme.clone(),
                terminal_states: vec![world.goal],
                kind: EnvKind::Cliff(Box::new(world)),
            })
        }
        "three_state" => {
            let params: ThreeStateParams<f64> =
                with_overrides(ThreeStateParams::default(), &spec.overrides)?;
            let env = make_three_state(&params).map_err(rejected)?;
            Ok(BuiltEnv {
                mdp: env.mdp,
                channel: env.channel,
                scheme: Some(env.scheme),
                terminal_states: Vec::new(),
                kind: EnvKind::ThreeState(params),
            })
        }
        "grid" => {
            let params: GridParams<f64> = with_overrides(GridParams::default(), &spec.overrides)?;
            let grid = make_grid(&params).map_err(rejected)?;
            Ok(BuiltEnv {
                mdp: grid.mdp,
                channel: grid.channel,
                scheme: None,
                terminal_states: Vec::new(),
                kind: EnvKind::Grid(params),
            })
        }
        "file" => {
            let path = spec.path.as_ref().ok_or_else(|| HarnessError::Config {
                path: "env.path".into(),
                reason: "required for file environments".into(),
            })?;
            let doc = load_mdp_document(path)?;
            let mdp = Mdp::from_document(&doc).map_err(rejected)?;
            let channel = match &doc.channel {
                Some(c) => Channel::from_document(c, doc.states, doc.actions).map_err(rejected)?,
                None => Channel::identity(doc.states, doc.actions),
            };
            Ok(BuiltEnv {
                mdp,
                channel,
                scheme: None,
                terminal_states: Vec::new(),
                kind: EnvKind::File,
            })
        }
        other => Err(HarnessError::Config {
            path: "env.name".into(),
            reason: format!("unknown environment `{other}` (expected one of {ENV_NAMES:?})"),
        }),
    }
}

pub fn load_mdp_document(path: &std::path::Path) -> Result<MdpDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

impl BuiltEnv {
    pub fn cliff(&self) -> Option<&CliffWorld<f64>> {
        match &self.kind {
            EnvKind::Cliff(w) => Some(w),
            _ => None,
        }
    }

    pub fn is_three_state(&self) -> bool {
        matches!(self.kind, EnvKind::ThreeState(_))
    }

    /// First state of each observation under the susceptible channel.
    pub fn representative_states(&self) -> Vec<usize> {
        let map = self.channel.susceptible_map();
        (0..self.channel.n_observations())
            .map(|o| map.iter().position(|&x| x == o).unwrap_or(0))
            .collect()
    }

    /// A per-state table re-indexed by observation.
    pub fn by_observation(&self, per_state: &[f64]) -> Vec<f64> {
        let m = self.mdp.n_actions();
        self.representative_states()
            .into_iter()
            .flat_map(|s| per_state[s * m..(s + 1) * m].to_vec())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str, overrides: Value) -> EnvSpec {
        EnvSpec {
            name: name.into(),
            overrides,
            path: None,
        }
    }

    #[test]
    fn named_environments() {
        let cliff = build_env(&spec("cliff", Value::Null)).unwrap();
        assert_eq!(cliff.mdp.n_states(), 48);
        assert_eq!(cliff.terminal_states.len(), 1);
        let zoned = build_env(&spec("cliff", serde_json::json!({"cliff_is_interruption_zone": true}))).unwrap();
        assert!(zoned.scheme.is_some());
        let three = build_env(&spec("three_state", serde_json::json!({"slip_to_z": 0.2}))).unwrap();
        assert_eq!(three.channel.n_observations(), 3);
        assert_eq!(three.representative_states(), vec![0, 1, 3]);
        assert_eq!(build_env(&spec("grid", Value::Null)).unwrap().mdp.n_states(), 16);
    }

    #[test]
    fn override_errors_name_the_field() {
        let err = build_env(&spec("cliff", serde_json::json!({"colz": 3}))).unwrap_err();
        assert!(err.to_string().contains("env.overrides.colz"), "{err}");
        let err = build_env(&spec("three_state", serde_json::json!({"slip_to_z": "high"}))).unwrap_err();
        assert!(err.to_string().contains("slip_to_z"), "{err}");
        let err = build_env(&spec("cliff", serde_json::json!({"cliff_reward": 5.0}))).unwrap_err();
        assert!(err.is_usage());
        assert!(build_env(&spec("maze", Value::Null)).is_err());
    }
}
