//! Layered run configuration: built-in defaults, then a preset section, then
//! a JSON config file, then command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const COMMANDS: [&str; 5] = ["simulate", "fit", "summarize", "changepoints", "dmd"];

const PRESETS: [(&str, &str); 3] = [
    ("triple-well", include_str!("../presets/triple-well.json")),
    ("pendulum-synth", include_str!("../presets/pendulum-synth.json")),
    ("video", include_str!("../presets/video.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(name, _)| *name).collect()
}

/// The preset's section for `command`, or an empty object when the preset
/// has nothing to say about it.
pub fn preset_section(name: &str, command: &str) -> Result<Value> {
    let name = if name == "pendulum" { "pendulum-synth" } else { name };
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| anyhow!("unknown preset {name:?}; available: {}", preset_names().join(", ")))?;
    let value: Value = serde_json::from_str(text).with_context(|| format!("preset {name}"))?;
    Ok(value.get(command).cloned().unwrap_or_else(|| Value::Object(Map::new())))
}

/// Reads a config file. Accepted layouts are an echoed run config
/// (`{"command": ..., "config": {...}}`), a file with one section per command
/// (like the presets), or a bare object of fields for this command.
pub fn file_section(path: &Path, command: &str) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Value::Object(map) = value else {
        bail!("{}: config must be a JSON object", path.display());
    };
    if let Some(found) = map.get("command") {
        if found.as_str() != Some(command) {
            bail!("{}: config was written by {found}, not {command:?}", path.display());
        }
        return map
            .get("config")
            .cloned()
            .ok_or_else(|| anyhow!("{}: echoed config lacks a \"config\" field", path.display()));
    }
    if !map.is_empty() && map.keys().all(|k| COMMANDS.contains(&k.as_str())) {
        return Ok(map.get(command).cloned().unwrap_or_else(|| Value::Object(Map::new())));
    }
    Ok(Value::Object(map))
}

/// Overlays `top` onto `base`. Objects merge key by key; anything else
/// replaces. Keys unknown to `base` are rejected so typos do not pass
/// silently.
pub fn merge(base: &mut Value, top: Value, path: &str) -> Result<()> {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (key, value) in t {
                let here = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value, &here)?,
                    None => bail!("unknown configuration key {here:?}"),
                }
            }
            Ok(())
        }
        (slot, value) => {
            *slot = value;
            Ok(())
        }
    }
}

/// Resolves a command configuration from all layers.
pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    command: &str,
    preset: Option<&str>,
    file: Option<&Path>,
    flags: Value,
) -> Result<T> {
    let mut value = serde_json::to_value(defaults)?;
    if let Some(name) = preset {
        merge(&mut value, preset_section(name, command)?, "")
            .with_context(|| format!("preset {name}"))?;
    }
    if let Some(path) = file {
        merge(&mut value, file_section(path, command)?, "")
            .with_context(|| format!("config file {}", path.display()))?;
    }
    merge(&mut value, flags, "")?;
    serde_json::from_value(value).context("invalid configuration")
}

/// The JSON written next to every run's outputs.
pub fn echo<T: Serialize>(command: &str, config: &T) -> Result<String> {
    let value = serde_json::json!({ "command": command, "config": config });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// Builds a flag overlay from `(dotted key, value)` pairs, skipping unset
/// flags.
pub fn overlay(entries: Vec<(&str, Option<Value>)>) -> Value {
    let mut root = Map::new();
    for (key, value) in entries {
        let Some(value) = value else { continue };
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().expect("non-empty key");
        let mut node = &mut root;
        for part in parts {
            node = node
                .entry(part)
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("nested flag keys are objects");
        }
        node.insert(last.to_owned(), value);
    }
    Value::Object(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_is_recursive_and_rejects_unknown_keys() {
        let mut base = json!({"a": 1, "b": {"c": 2, "d": 3}, "e": null});
        merge(&mut base, json!({"b": {"c": 5}, "e": [1, 2]}), "").unwrap();
        assert_eq!(base, json!({"a": 1, "b": {"c": 5, "d": 3}, "e": [1, 2]}));
        let err = merge(&mut base, json!({"b": {"x": 1}}), "").unwrap_err();
        assert!(err.to_string().contains("b.x"));
    }

    #[test]
    fn overlay_nests_dotted_keys() {
        let v = overlay(vec![
            ("a.b", Some(json!(1))),
            ("a.c", None),
            ("d", Some(json!("x"))),
        ]);
        assert_eq!(v, json!({"a": {"b": 1}, "d": "x"}));
    }

    #[test]
    fn presets_parse_and_alias() {
        for name in preset_names() {
            for command in COMMANDS {
                assert!(preset_section(name, command).unwrap().is_object());
            }
        }
        assert_eq!(
            preset_section("pendulum", "simulate").unwrap(),
            json!({"system": "pendulum"})
        );
        assert!(preset_section("nope", "fit").is_err());
    }

    #[test]
    fn config_file_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let echoed = dir.path().join("echo.json");
        fs::write(&echoed, r#"{"command": "fit", "config": {"epsilon": 2.0}}"#).unwrap();
        assert_eq!(file_section(&echoed, "fit").unwrap(), json!({"epsilon": 2.0}));
        assert!(file_section(&echoed, "dmd").is_err());

        let sectioned = dir.path().join("sections.json");
        fs::write(&sectioned, r#"{"fit": {"lag": 3}, "dmd": {"lag": 4}}"#).unwrap();
        assert_eq!(file_section(&sectioned, "dmd").unwrap(), json!({"lag": 4}));
        assert_eq!(file_section(&sectioned, "simulate").unwrap(), json!({}));

        let bare = dir.path().join("bare.json");
        fs::write(&bare, r#"{"lag": 7}"#).unwrap();
        assert_eq!(file_section(&bare, "fit").unwrap(), json!({"lag": 7}));
    }
}
