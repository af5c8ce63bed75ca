//! Loading and validating JSON inputs.

use std::path::Path;

use junction_core::world::ScenarioSpec;
use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Parses `text`, reporting the JSON path of the first offending field.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::Parse {
            path: path.to_owned(),
            field: if field == "." { String::from("<root>") } else { field },
            message: e.into_inner().to_string(),
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, path)
}

pub fn validate_scenario(spec: &ScenarioSpec, path: &Path) -> Result<()> {
    spec.validate().map_err(|e| match e {
        junction_core::Error::InvalidConfig { field, reason } => Error::Invalid {
            path: path.to_owned(),
            field,
            reason,
        },
        other => Error::Core(other),
    })
}

/// Reads a scenario file and checks every field.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec = read_json(path)?;
    validate_scenario(&spec, path)?;
    Ok(spec)
}

pub fn scenario_json(spec: &ScenarioSpec) -> Result<String> {
    let mut s = serde_json::to_string_pretty(spec)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use junction_core::preset;

    #[test]
    fn presets_round_trip() {
        for spec in preset::all() {
            let text = scenario_json(&spec).unwrap();
            let back: ScenarioSpec = parse_json(&text, Path::new("x.json")).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn type_error_names_field() {
        let mut v = serde_json::to_value(preset::pilot(preset::Category::NoTraffic)).unwrap();
        v["rules"]["v_sl"] = serde_json::json!("fast");
        let err = parse_json::<ScenarioSpec>(&v.to_string(), Path::new("x.json")).unwrap_err();
        assert_eq!(err.field(), Some("rules.v_sl"));
    }

    #[test]
    fn validation_names_field() {
        let mut spec = preset::pilot(preset::Category::NoTraffic);
        spec.rules.a_min = 1.0;
        let err = validate_scenario(&spec, Path::new("x.json")).unwrap_err();
        assert_eq!(err.field(), Some("rules.a_min"));
        spec = preset::pilot(preset::Category::NoTraffic);
        spec.vehicle.l = -1.0;
        let err = validate_scenario(&spec, Path::new("x.json")).unwrap_err();
        assert!(err.field().unwrap().starts_with("vehicle."), "{err}");
    }
}
