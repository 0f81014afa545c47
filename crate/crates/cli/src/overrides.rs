//! `key=value` configuration overrides in TOML value syntax.

use std::path::Path;

use deformsplat::train::TrainConfig;
use deformsplat::{Error, Result};
use serde_json::{Map, Value};

/// Parses one `--config` argument. An existing file is read as a TOML table;
/// anything else must be `key=value` where the value is a TOML literal. Bare
/// words that are not valid TOML are taken as strings.
pub fn parse_override(arg: &str) -> Result<Map<String, Value>> {
    let path = Path::new(arg);
    if !arg.contains('=') && path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return table_to_json(&text);
    }
    let (key, value) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("config override `{arg}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("config override `{arg}` has an empty key")));
    }
    let value = value.trim();
    let doc = format!("v = {value}");
    let parsed = match doc.parse::<toml::Table>() {
        Ok(mut t) => toml_to_json(t.remove("v").expect("key present")),
        Err(_) => Value::String(value.to_string()),
    };
    let mut map = Map::new();
    map.insert(key.to_string(), parsed);
    Ok(map)
}

fn table_to_json(text: &str) -> Result<Map<String, Value>> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("config file: {e}")))?;
    Ok(table.into_iter().map(|(k, v)| (k, toml_to_json(v))).collect())
}

fn toml_to_json(v: toml::Value) -> Value {
    match v {
        toml::Value::String(s) => Value::String(s),
        toml::Value::Integer(i) => Value::from(i),
        toml::Value::Float(f) => Value::from(f),
        toml::Value::Boolean(b) => Value::Bool(b),
        toml::Value::Datetime(d) => Value::String(d.to_string()),
        toml::Value::Array(a) => Value::Array(a.into_iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => Value::Object(t.into_iter().map(|(k, v)| (k, toml_to_json(v))).collect()),
    }
}

/// Applies all overrides in order on top of `base`.
pub fn apply_overrides(base: &TrainConfig, args: &[String]) -> Result<TrainConfig> {
    let mut merged = Map::new();
    for arg in args {
        merged.extend(parse_override(arg)?);
    }
    base.with_overrides(&merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_follow_toml_literals() {
        let m = parse_override("iterations=300").unwrap();
        assert_eq!(m["iterations"], Value::from(300));
        let m = parse_override("lambda_ssim = 0.5").unwrap();
        assert_eq!(m["lambda_ssim"], Value::from(0.5));
        let m = parse_override("background=[1, 0.5, 0]").unwrap();
        assert_eq!(m["background"], serde_json::json!([1, 0.5, 0]));
        let m = parse_override("fix_scale=true").unwrap();
        assert_eq!(m["fix_scale"], Value::Bool(true));
    }

    #[test]
    fn every_field_is_addressable() {
        let base = TrainConfig::default();
        let json = serde_json::to_value(&base).unwrap();
        for (key, value) in json.as_object().unwrap() {
            let cfg = apply_overrides(&base, &[format!("{key}={value}")]).unwrap();
            assert_eq!(cfg, base, "{key}");
        }
        let cfg = apply_overrides(&base, &["deform_sh=true".into(), "mlp_width=32".into()]).unwrap();
        assert!(cfg.deform_sh);
        assert_eq!(cfg.mlp_width, 32);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        let base = TrainConfig::default();
        for arg in ["iterations", "=3", "no_such_key=1", "iterations=\"many\""] {
            assert!(matches!(apply_overrides(&base, &[arg.to_string()]), Err(Error::Config(_))), "{arg}");
        }
    }

    #[test]
    fn config_file_is_read_as_a_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "iterations = 10\nloss_switch_iter = 5\nseed = 7\n").unwrap();
        let cfg = apply_overrides(&TrainConfig::default(), &[path.display().to_string(), "seed=9".into()]).unwrap();
        assert_eq!((cfg.iterations, cfg.loss_switch_iter, cfg.seed), (10, 5, 9));
    }
}
