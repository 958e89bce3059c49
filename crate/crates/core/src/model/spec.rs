//! JSON model files.
//!
//! ```json
//! { "format_version": 1, "kind": "gridworld", "N": 8, "V": 32, ... }
//! ```
//!
//! `kind` selects the family (`tabular`, `gridworld`, `linear_drafter`); the
//! remaining fields are those of the family's spec struct.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    GridWorldSpec, LinearDrafterSpec, SharedDrafter, SharedTarget, TabularModelSpec, TargetAsDrafter,
};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: i64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Tabular(TabularModelSpec),
    Gridworld(GridWorldSpec),
    LinearDrafter(LinearDrafterSpec),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Tabular(_) => "tabular",
            ModelSpec::Gridworld(_) => "gridworld",
            ModelSpec::LinearDrafter(_) => "linear_drafter",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut value {
            map.insert("format_version".into(), Value::from(FORMAT_VERSION));
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        let Value::Object(map) = &mut value else {
            return Err(Error::config("model file must contain a JSON object"));
        };
        match map.remove("format_version").map(|v| v.as_i64()) {
            Some(Some(FORMAT_VERSION)) => {}
            Some(Some(other)) => return Err(Error::UnsupportedVersion(other)),
            Some(None) => return Err(Error::config("format_version must be an integer")),
            None => return Err(Error::config("missing format_version")),
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn into_target(self) -> Result<SharedTarget> {
        match self {
            ModelSpec::Tabular(s) => Ok(Arc::new(s.build()?)),
            ModelSpec::Gridworld(s) => Ok(Arc::new(s.build()?)),
            ModelSpec::LinearDrafter(_) => Err(Error::config("a linear drafter cannot serve as the target")),
        }
    }

    /// Any model can draft; target families draft with their own `q`.
    pub fn into_drafter(self) -> Result<SharedDrafter> {
        match self {
            ModelSpec::LinearDrafter(s) => Ok(Arc::new(s.build()?)),
            other => Ok(Arc::new(TargetAsDrafter(other.into_target()?))),
        }
    }
}

pub fn load_model_spec(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelSpec::from_json(&text)
}

pub fn save_model_spec(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, spec.to_json()? + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gridworld_roundtrip() {
        let spec = ModelSpec::Gridworld(GridWorldSpec::desk_default());
        let text = spec.to_json().unwrap();
        assert!(text.contains("\"format_version\": 1"));
        assert!(text.contains("\"inClusterMass\": 0.8"));
        assert!(text.contains("\"kind\": \"gridworld\""));
        assert_eq!(ModelSpec::from_json(&text).unwrap(), spec);
    }

    #[test]
    fn tabular_and_drafter_roundtrip() {
        for spec in [
            ModelSpec::Tabular(TabularModelSpec::random(3, 1, 4, 5)),
            ModelSpec::LinearDrafter(LinearDrafterSpec::zeros(3, 2)),
        ] {
            let back = ModelSpec::from_json(&spec.to_json().unwrap()).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let mut v: Value = serde_json::from_str(&ModelSpec::LinearDrafter(LinearDrafterSpec::zeros(2, 1)).to_json().unwrap()).unwrap();
        v["format_version"] = Value::from(2);
        assert!(matches!(ModelSpec::from_json(&v.to_string()), Err(Error::UnsupportedVersion(2))));
        v.as_object_mut().unwrap().remove("format_version");
        assert!(ModelSpec::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn drafter_is_not_a_target() {
        assert!(ModelSpec::LinearDrafter(LinearDrafterSpec::zeros(2, 1)).into_target().is_err());
    }
}
