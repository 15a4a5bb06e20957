use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Every key a config file may set. Keys a command does not use are ignored
/// so one file can serve all subcommands.
const KNOWN_KEYS: &[&str] = &[
    "content",
    "style",
    "output",
    "method",
    "patch-size",
    "shifts",
    "superpixel-params",
    "fill-color",
    "alpha-min",
    "alpha-max",
    "uniform-alpha",
    "mask",
    "save-mask",
    "segmentation-map",
    "iterations",
    "step-size",
    "style-weight",
    "init",
    "seed",
    "trace",
    "backend",
    "topk",
    "weights-dir",
    "max-side",
];

/// Parsed `key = value` config file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let (k, v) = (k.trim(), v.trim());
            let v = v
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .unwrap_or(v);
            if !KNOWN_KEYS.contains(&k) {
                return Err(format!("line {}: unknown key {k:?}", n + 1));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(format!("line {}: duplicate key {k:?}", n + 1));
            }
        }
        Ok(Self { entries })
    }

    /// The flag value if given, else the parsed config entry.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        if flag.is_some() {
            return Ok(flag);
        }
        self.entries
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required")))
    }
}
