use serde_json::Value;
use toml::Table as TomlTable;

use crate::error::{Error, Result};

/// Type of a scenario parameter, taken from its default value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Float,
    Int,
    Bool,
    Str,
    FloatList,
    IntList,
}

impl ParamKind {
    pub fn of(v: &toml::Value) -> Option<Self> {
        Some(match v {
            toml::Value::Float(_) => ParamKind::Float,
            toml::Value::Integer(_) => ParamKind::Int,
            toml::Value::Boolean(_) => ParamKind::Bool,
            toml::Value::String(_) => ParamKind::Str,
            toml::Value::Array(a) if a.iter().all(|x| x.is_integer()) && !a.is_empty() => ParamKind::IntList,
            toml::Value::Array(a) if a.iter().all(|x| x.is_float() || x.is_integer()) => ParamKind::FloatList,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Float => "float",
            ParamKind::Int => "integer",
            ParamKind::Bool => "bool",
            ParamKind::Str => "string",
            ParamKind::FloatList => "list of floats",
            ParamKind::IntList => "list of integers",
        }
    }

    /// Converts `v` to this kind, widening integers to floats.
    fn coerce(self, v: toml::Value) -> Option<toml::Value> {
        use toml::Value as V;
        let to_float = |x: &V| match x {
            V::Float(f) => Some(V::Float(*f)),
            V::Integer(i) => Some(V::Float(*i as f64)),
            _ => None,
        };
        match (self, v) {
            (ParamKind::Float, v) => to_float(&v),
            (ParamKind::Int, v @ V::Integer(_)) => Some(v),
            (ParamKind::Bool, v @ V::Boolean(_)) => Some(v),
            (ParamKind::Str, v @ V::String(_)) => Some(v),
            (ParamKind::IntList, V::Array(a)) if a.iter().all(|x| x.is_integer()) => Some(V::Array(a)),
            (ParamKind::FloatList, V::Array(a)) => a.iter().map(to_float).collect::<Option<Vec<_>>>().map(V::Array),
            _ => None,
        }
    }
}

/// Validated parameter values of one scenario run.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    values: TomlTable,
}

fn parse_raw(kind: ParamKind, raw: &str) -> Option<toml::Value> {
    let text = match kind {
        ParamKind::FloatList | ParamKind::IntList if !raw.trim_start().starts_with('[') => format!("[{raw}]"),
        _ => raw.to_string(),
    };
    match toml::from_str::<TomlTable>(&format!("v = {text}")).ok().and_then(|mut t| t.remove("v")) {
        Some(v) => Some(v),
        None if kind == ParamKind::Str => Some(toml::Value::String(raw.to_string())),
        None => None,
    }
}

impl Params {
    /// Checks that every default has a supported kind.
    pub fn from_defaults(defaults: &TomlTable) -> Result<Self> {
        for (k, v) in defaults {
            if ParamKind::of(v).is_none() {
                return Err(Error::Override(format!("parameter `{k}` has an unsupported type")));
            }
        }
        Ok(Params { values: defaults.clone() })
    }

    /// Applies `key=value` overrides, type-checked against the defaults.
    pub fn with_overrides(mut self, scenario: &str, overrides: &[(String, String)]) -> Result<Self> {
        for (key, raw) in overrides {
            let Some(current) = self.values.get(key) else {
                let known: Vec<&str> = self.values.keys().map(String::as_str).collect();
                return Err(Error::Override(format!(
                    "unknown parameter `{key}` for scenario {scenario} (known: {})",
                    known.join(", ")
                )));
            };
            let kind = ParamKind::of(current).expect("validated defaults");
            let value = parse_raw(kind, raw)
                .and_then(|v| kind.coerce(v))
                .ok_or_else(|| Error::Override(format!("parameter `{key}` expects a {}, got `{raw}`", kind.name())))?;
            self.values.insert(key.clone(), value);
        }
        Ok(self)
    }

    fn get(&self, key: &str) -> Result<&toml::Value> {
        self.values.get(key).ok_or_else(|| Error::Override(format!("missing parameter `{key}`")))
    }

    fn wrong(key: &str, kind: ParamKind) -> Error {
        Error::Override(format!("parameter `{key}` is not a {}", kind.name()))
    }

    pub fn float(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        v.as_float().or_else(|| v.as_integer().map(|i| i as f64)).ok_or_else(|| Self::wrong(key, ParamKind::Float))
    }

    pub fn int(&self, key: &str) -> Result<i64> {
        self.get(key)?.as_integer().ok_or_else(|| Self::wrong(key, ParamKind::Int))
    }

    /// A non-negative integer.
    pub fn count(&self, key: &str) -> Result<usize> {
        usize::try_from(self.int(key)?).map_err(|_| Error::Override(format!("parameter `{key}` must be non-negative")))
    }

    pub fn string(&self, key: &str) -> Result<&str> {
        self.get(key)?.as_str().ok_or_else(|| Self::wrong(key, ParamKind::Str))
    }

    pub fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let a = self.get(key)?.as_array().ok_or_else(|| Self::wrong(key, ParamKind::FloatList))?;
        a.iter()
            .map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)))
            .collect::<Option<_>>()
            .ok_or_else(|| Self::wrong(key, ParamKind::FloatList))
    }

    pub fn counts(&self, key: &str) -> Result<Vec<usize>> {
        let a = self.get(key)?.as_array().ok_or_else(|| Self::wrong(key, ParamKind::IntList))?;
        a.iter()
            .map(|x| x.as_integer().and_then(|i| usize::try_from(i).ok()))
            .collect::<Option<_>>()
            .ok_or_else(|| Self::wrong(key, ParamKind::IntList))
    }

    pub fn kinds(&self) -> Vec<(String, ParamKind)> {
        self.values.iter().map(|(k, v)| (k.clone(), ParamKind::of(v).expect("validated"))).collect()
    }

    pub fn to_json(&self) -> serde_json::Map<String, Value> {
        match serde_json::to_value(&self.values).expect("toml values serialize") {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }
}
