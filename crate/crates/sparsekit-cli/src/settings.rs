//! Parameter resolution: command-line flags override JSON config-file
//! values, which override built-in defaults.
//!
//! The config file is a flat JSON object keyed by long flag names, e.g.
//! `{"k1": 1.2, "seed": 7, "lambda-flops-q": 0.01}`. File paths are always
//! given as flags; the config file carries tunable parameters so batch
//! sweeps can share one file and vary a flag or two.

use std::path::Path;

use serde_json::{Map, Value};
use sparsekit::error::{Error, Result};

pub struct Settings {
    values: Map<String, Value>,
    threads: usize,
}

impl Settings {
    pub fn load(config: Option<&Path>, threads_flag: Option<usize>) -> Result<Self> {
        let values = match config {
            None => Map::new(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let value: Value = serde_json::from_str(&text).map_err(|e| Error::Json {
                    path: path.to_path_buf(),
                    source: e,
                })?;
                match value {
                    Value::Object(map) => map,
                    _ => {
                        return Err(Error::invalid(
                            "config file",
                            format!("{} must contain a JSON object", path.display()),
                        ))
                    }
                }
            }
        };

        let mut settings = Settings { values, threads: 1 };
        let threads = settings.usize("threads", threads_flag, Some(1))?;
        if threads == 0 {
            return Err(Error::invalid(
                "threads",
                "thread count must be at least 1".to_string(),
            ));
        }
        settings.threads = threads;
        Ok(settings)
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    fn lookup(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    fn missing(key: &str) -> Error {
        Error::invalid(
            "parameters",
            format!("--{key} is required (pass the flag or set {key:?} in the config file)"),
        )
    }

    fn type_error(key: &str, expected: &str, got: &Value) -> Error {
        Error::invalid(
            "config file",
            format!("key {key:?} must be {expected}, got {got}"),
        )
    }

    /// Resolves an f64 parameter. `default: None` makes it required.
    pub fn f64(&self, key: &str, flag: Option<f64>, default: Option<f64>) -> Result<f64> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.lookup(key) {
            Some(value) => value
                .as_f64()
                .ok_or_else(|| Self::type_error(key, "a number", value)),
            None => default.ok_or_else(|| Self::missing(key)),
        }
    }

    pub fn u64(&self, key: &str, flag: Option<u64>, default: Option<u64>) -> Result<u64> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.lookup(key) {
            Some(value) => value
                .as_u64()
                .ok_or_else(|| Self::type_error(key, "a non-negative integer", value)),
            None => default.ok_or_else(|| Self::missing(key)),
        }
    }

    pub fn usize(&self, key: &str, flag: Option<usize>, default: Option<usize>) -> Result<usize> {
        let flag64 = flag.map(|v| v as u64);
        let default64 = default.map(|v| v as u64);
        Ok(self.u64(key, flag64, default64)? as usize)
    }

    pub fn u32(&self, key: &str, flag: Option<u32>, default: Option<u32>) -> Result<u32> {
        let value = self.u64(key, flag.map(u64::from), default.map(u64::from))?;
        u32::try_from(value).map_err(|_| {
            Error::invalid(
                "parameters",
                format!("--{key} value {value} does not fit in 32 bits"),
            )
        })
    }

    pub fn string(
        &self,
        key: &str,
        flag: Option<String>,
        default: Option<&str>,
    ) -> Result<String> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.lookup(key) {
            Some(value) => value
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| Self::type_error(key, "a string", value)),
            None => default.map(str::to_string).ok_or_else(|| Self::missing(key)),
        }
    }
}
