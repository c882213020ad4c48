//! JSON model files.
//!
//! ```json
//! {
//!   "states": ["active", "dead"],
//!   "interest": "0.01",
//!   "horizon": 40,
//!   "parameters": { "S": 1 },
//!   "intensities": { "active->dead": "0.0005 + 10^(5.88 + 0.038*(t+40) - 10)" },
//!   "contracts": [
//!     { "name": "death", "transition": { "active->dead": "{S}" } }
//!   ]
//! }
//! ```
//!
//! States may be referenced by name or by index. `{NAME}` placeholders in
//! expressions are replaced by the value of the parameter `NAME`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::markov::ModelSpec;
use crate::payments::{Contract, PaymentSet};
use crate::timefun::TimeFunction;

/// Name of the bundled disability model with recoveries.
pub const DISABILITY_MODEL: &str = "disability_g82m";

const DISABILITY_JSON: &str = include_str!("../models/disability_g82m.json");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    interest: String,
    #[serde(default)]
    horizon: Option<f64>,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
    #[serde(default)]
    intensities: BTreeMap<String, String>,
    contracts: Vec<ContractFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractFile {
    name: String,
    #[serde(default)]
    sojourn: BTreeMap<String, String>,
    #[serde(default)]
    transition: BTreeMap<String, String>,
}

/// A model together with its contracts and the parameter values used.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: ModelSpec,
    pub payments: PaymentSet,
    pub parameters: BTreeMap<String, f64>,
}

/// Horizon used when the file does not give one.
pub const DEFAULT_HORIZON: f64 = 100.0;

/// Loads a model from a file, or the bundled model when `source` is
/// [`DISABILITY_MODEL`].
pub fn load_model(source: &str, overrides: &[(String, f64)]) -> Result<LoadedModel> {
    if source == DISABILITY_MODEL {
        return parse_model(DISABILITY_JSON, DISABILITY_MODEL, overrides);
    }
    load_model_file(Path::new(source), overrides)
}

pub fn load_model_file(path: &Path, overrides: &[(String, f64)]) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_model(&text, &path.display().to_string(), overrides)
}

/// The bundled disability model with the given parameter overrides.
pub fn disability_model(overrides: &[(String, f64)]) -> Result<LoadedModel> {
    parse_model(DISABILITY_JSON, DISABILITY_MODEL, overrides)
}

/// Parses a model document; `origin` names it in error messages.
pub fn parse_model(text: &str, origin: &str, overrides: &[(String, f64)]) -> Result<LoadedModel> {
    let file: ModelFile = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
    let mut parameters = file.parameters.clone();
    for (name, value) in overrides {
        if !parameters.contains_key(name) {
            return Err(Error::Config(format!(
                "{origin}: unknown parameter `{name}`"
            )));
        }
        parameters.insert(name.clone(), *value);
    }
    let ctx = Context {
        text,
        origin,
        states: &file.states,
        parameters: &parameters,
    };

    let interest = ctx.function("interest", &file.interest)?;
    let mut intensities = Vec::new();
    for (key, src) in &file.intensities {
        let pair = ctx.transition(key)?;
        intensities.push((pair, ctx.function(&format!("intensities[{key}]"), src)?));
    }
    let horizon = file.horizon.unwrap_or(DEFAULT_HORIZON);
    let model = ModelSpec::new(file.states.clone(), interest, intensities, horizon)?;

    let j = file.states.len();
    let mut contracts = Vec::new();
    for c in &file.contracts {
        let mut sojourn = Vec::new();
        for (key, src) in &c.sojourn {
            let field = format!("contracts[{}].sojourn[{key}]", c.name);
            sojourn.push((ctx.state(key)?, ctx.function(&field, src)?));
        }
        let mut transition = Vec::new();
        for (key, src) in &c.transition {
            let field = format!("contracts[{}].transition[{key}]", c.name);
            transition.push((ctx.transition(key)?, ctx.function(&field, src)?));
        }
        contracts.push(Contract::new(c.name.clone(), j, sojourn, transition)?);
    }
    let payments = PaymentSet::new(&model, contracts)?;
    Ok(LoadedModel {
        model,
        payments,
        parameters,
    })
}

struct Context<'a> {
    text: &'a str,
    origin: &'a str,
    states: &'a [String],
    parameters: &'a BTreeMap<String, f64>,
}

impl Context<'_> {
    /// `origin:line` of the first occurrence of `needle` in the document.
    fn locate(&self, needle: &str) -> String {
        match self.text.find(needle) {
            Some(at) => format!("{}:{}", self.origin, self.text[..at].lines().count().max(1)),
            None => self.origin.to_string(),
        }
    }

    fn state(&self, key: &str) -> Result<usize> {
        let key = key.trim();
        if let Ok(i) = key.parse::<usize>() {
            if i < self.states.len() {
                return Ok(i);
            }
        } else if let Some(i) = self.states.iter().position(|s| s == key) {
            return Ok(i);
        }
        Err(Error::Config(format!(
            "{}: unknown state `{key}` (model has {} states)",
            self.locate(key),
            self.states.len()
        )))
    }

    fn transition(&self, key: &str) -> Result<(usize, usize)> {
        let (a, b) = key.split_once("->").ok_or_else(|| {
            Error::Config(format!(
                "{}: transition key `{key}` is not of the form `i->j`",
                self.locate(key)
            ))
        })?;
        Ok((self.state(a)?, self.state(b)?))
    }

    fn substitute(&self, field: &str, src: &str) -> Result<String> {
        let mut out = String::with_capacity(src.len());
        let mut rest = src;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let close = rest[open..].find('}').ok_or_else(|| {
                Error::Config(format!("{}: {field}: unterminated `{{`", self.locate(src)))
            })? + open;
            let name = rest[open + 1..close].trim();
            let value = self.parameters.get(name).ok_or_else(|| {
                Error::Config(format!(
                    "{}: {field}: unknown parameter `{name}`",
                    self.locate(src)
                ))
            })?;
            out.push_str(&format!("({value:?})"));
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    fn function(&self, field: &str, src: &str) -> Result<TimeFunction> {
        let expanded = self.substitute(field, src)?;
        TimeFunction::parse(&expanded).map_err(|e| {
            Error::Config(format!(
                "{}: {field}: {e} in `{expanded}`",
                self.locate(src)
            ))
        })
    }
}

/// Parses `NAME=VALUE`.
pub fn parse_override(src: &str) -> Result<(String, f64)> {
    let (name, value) = src
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected NAME=VALUE, got `{src}`")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("parameter value `{value}` is not a number")))?;
    Ok((name.trim().to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_model_loads() {
        let m = disability_model(&[]).unwrap();
        assert_eq!(m.model.num_states(), 3);
        assert_eq!(m.payments.len(), 3);
        assert_eq!(m.model.horizon(), 70.0);
        assert_eq!(m.parameters["S"], 1.0);
    }

    #[test]
    fn overrides_apply() {
        let m = disability_model(&[("S".into(), 5.0)]).unwrap();
        assert_eq!(m.parameters["S"], 5.0);
        assert!(disability_model(&[("Q".into(), 5.0)]).is_err());
    }

    #[test]
    fn json_errors_carry_line() {
        let err = parse_model("{\n \"states\": [\"a\"],\n oops }", "m.json", &[]).unwrap_err();
        assert!(err.to_string().contains("m.json:3:"), "{err}");
    }

    #[test]
    fn dsl_errors_carry_line() {
        let text = "{\n\"states\": [\"a\", \"b\"],\n\"interest\": \"0.01\",\n\"intensities\": {\"a->b\": \"foo(t)\"},\n\"contracts\": [{\"name\": \"x\"}]\n}";
        let err = parse_model(text, "m.json", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("m.json:4") && msg.contains("foo"), "{msg}");
    }

    #[test]
    fn unknown_state_is_config_error() {
        let text = r#"{"states": ["a", "b", "c"], "interest": "0", "intensities": {"0->5": "1"}, "contracts": [{"name": "x"}]}"#;
        assert!(matches!(parse_model(text, "m", &[]), Err(Error::Config(_))));
    }

    #[test]
    fn negative_intensity_is_validation_error() {
        let text = r#"{"states": ["a", "b"], "interest": "0", "intensities": {"0->1": "-0.1"}, "contracts": [{"name": "x"}]}"#;
        assert!(matches!(
            parse_model(text, "m", &[]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn override_syntax() {
        assert_eq!(parse_override("S=2.5").unwrap(), ("S".to_string(), 2.5));
        assert!(parse_override("S").is_err());
        assert!(parse_override("S=x").is_err());
    }
}
