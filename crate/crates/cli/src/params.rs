//! Parameter resolution: command-line flag, then config file, then default.
//! Every resolved value is recorded so the manifest can replay the run.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use twophase::scale_grid;

#[derive(Debug, Default)]
pub struct Resolver {
    config: Map<String, Value>,
    used: Map<String, Value>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl Resolver {
    /// Reads a JSON object of `key: value` pairs. A manifest written by an
    /// earlier run is accepted too; its `params` object is used.
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text)
            .with_context(|| format!("config {} is not valid JSON", path.display()))?;
        let Value::Object(mut obj) = value else {
            bail!("config {} must hold a JSON object", path.display());
        };
        if let Some(Value::Object(params)) = obj.remove("params") {
            obj = params;
        }
        let config = obj
            .into_iter()
            .map(|(k, v)| (k.replace('-', "_"), v))
            .collect();
        Ok(Self {
            config,
            used: Map::new(),
        })
    }

    fn from_config<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.config.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .with_context(|| format!("config key `{key}` has the wrong type")),
        }
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.used.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn opt<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_config(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v)?;
        }
        Ok(v)
    }

    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.record(key, &v)?;
        Ok(v)
    }

    pub fn require<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<T> {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => bail!("missing required parameter `--{}`", key.replace('_', "-")),
        }
    }

    /// A list parameter; the config may give a single value or an array.
    pub fn list<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<Vec<T>>) -> Result<Option<Vec<T>>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_config::<OneOrMany<T>>(key)?.map(|v| match v {
                OneOrMany::One(x) => vec![x],
                OneOrMany::Many(xs) => xs,
            }),
        };
        if let Some(v) = &v {
            self.record(key, v)?;
        }
        Ok(v)
    }

    /// Scale grid from `MIN:MAX:COUNT`, a comma list, or (in a config) an
    /// explicit array. Recorded as the expanded list.
    pub fn scales(&mut self, flag: Option<String>, default: &str) -> Result<Vec<usize>> {
        let scales = match flag {
            Some(s) => parse_scales(&s)?,
            None => match self.config.get("scales") {
                None | Some(Value::Null) => parse_scales(default)?,
                Some(Value::String(s)) => parse_scales(s)?,
                Some(v) => serde_json::from_value(v.clone())
                    .context("config key `scales` must be a string or an integer array")?,
            },
        };
        self.record("scales", &scales)?;
        Ok(scales)
    }

    pub fn resolved(&self) -> &Map<String, Value> {
        &self.used
    }

    /// Config keys that no parameter consumed.
    pub fn unused(&self) -> Vec<&str> {
        self.config
            .keys()
            .filter(|k| !self.used.contains_key(*k))
            .map(String::as_str)
            .collect()
    }
}

pub fn parse_scales(spec: &str) -> Result<Vec<usize>> {
    let spec = spec.trim();
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [min, max, count] = parts.as_slice() else {
            bail!("scale grid `{spec}` must look like MIN:MAX:COUNT");
        };
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("bad number `{s}` in scale grid `{spec}`"))
        };
        return Ok(scale_grid(num(min)?, num(max)?, num(count)?)?);
    }
    let mut scales = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("bad scale `{s}`"))
        })
        .collect::<Result<Vec<_>>>()?;
    scales.sort_unstable();
    scales.dedup();
    if scales.iter().any(|&s| s < 2) {
        bail!("scales must be at least 2");
    }
    Ok(scales)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_config_beats_default() {
        let mut r = Resolver {
            config: [("r_bins".to_string(), Value::from(8))].into_iter().collect(),
            used: Map::new(),
        };
        assert_eq!(r.get("r_bins", None, 12usize).unwrap(), 8);
        assert_eq!(r.get("r_bins", Some(5usize), 12).unwrap(), 5);
        assert_eq!(r.get("persist", None, 2usize).unwrap(), 2);
        assert_eq!(r.resolved()["persist"], Value::from(2));
    }

    #[test]
    fn scale_specs() {
        assert_eq!(parse_scales("2:4:3").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_scales("20,5,10").unwrap(), vec![5, 10, 20]);
        assert!(parse_scales("1,5").is_err());
        assert!(parse_scales("2:4").is_err());
    }

    #[test]
    fn list_accepts_scalar_config() {
        let mut r = Resolver {
            config: [("zeta".to_string(), Value::from(1.5))].into_iter().collect(),
            used: Map::new(),
        };
        assert_eq!(r.list::<f64>("zeta", None).unwrap(), Some(vec![1.5]));
    }
}
