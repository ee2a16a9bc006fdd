//! Flat `key = value` manifests. A pipeline manifest supplies defaults for
//! any flag (command-line flags win); a sidecar manifest next to each feature
//! archive carries its frame period and side map.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aud_core::corpus::{read_feature_archive, FeatureSet, DEFAULT_FRAME_PERIOD_S};

use crate::failure::{Failure, Stage};

/// Parses `key = value` lines; `#` starts a comment line. Keys are
/// normalized so that `frame-period-s` and `frame_period_s` are the same.
pub fn parse(text: &str, origin: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Failure::invalid("manifest", format!("{}:{}: expected key = value", origin.display(), i + 1))
        })?;
        let key = key.trim().replace('-', "_");
        if key.is_empty() {
            return Err(Failure::invalid("manifest", format!("{}:{}: empty key", origin.display(), i + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Failure::invalid(
                "manifest",
                format!("{}:{}: duplicate key {key:?}", origin.display(), i + 1),
            ));
        }
    }
    Ok(map)
}

fn read(path: &Path, stage: &str) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(stage, path, e))
}

/// Option lookup: flag, then manifest, then default.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let values = parse(&read(path, "manifest")?, path)?;
        Ok(Settings {
            values,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Failure::invalid("manifest", format!("{key} = {v:?}: {e}"))),
        }
    }

    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    #[cfg(test)]
    pub fn req<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(flag, key)?
            .ok_or_else(|| Failure::usage(format!("missing --{} (or `{key}` in the manifest)", key.replace('_', "-"))))
    }

    /// Manifest paths are relative to the manifest's directory.
    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.values.get(key).map(|v| self.base_dir.join(v)))
    }

    pub fn req_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, Failure> {
        self.path(flag, key)
            .ok_or_else(|| Failure::usage(format!("missing --{} (or `{key}` in the manifest)", key.replace('_', "-"))))
    }
}

pub fn sidecar_path(archive: &Path) -> PathBuf {
    let mut name = archive.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

/// Reads a feature archive and applies its sidecar manifest, if any.
/// `frame_period_s` overrides the sidecar value.
pub fn load_features(path: &Path, frame_period_s: Option<f64>) -> Result<FeatureSet, Failure> {
    let fs = read_feature_archive(path).stage("load features")?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        parse(&read(&side, "load features")?, &side)?
    } else {
        BTreeMap::new()
    };
    let period = match (frame_period_s, meta.get("frame_period_s")) {
        (Some(p), _) => p,
        (None, Some(v)) => v
            .parse()
            .map_err(|_| Failure::invalid("load features", format!("{}: bad frame_period_s {v:?}", side.display())))?,
        (None, None) => DEFAULT_FRAME_PERIOD_S,
    };
    let sides: BTreeMap<String, String> = meta
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("side.").map(|u| (u.to_string(), v.clone())))
        .collect();
    FeatureSet::new(fs.utterances().to_vec(), period)
        .and_then(|f| f.with_sides(sides))
        .stage("load features")
}

pub fn write_sidecar(archive: &Path, fs: &FeatureSet) -> Result<(), Failure> {
    let mut out = String::new();
    writeln!(out, "frame_period_s = {}", fs.frame_period_s()).unwrap();
    for (utt, side) in fs.side_map() {
        writeln!(out, "side.{utt} = {side}").unwrap();
    }
    let path = sidecar_path(archive);
    std::fs::write(&path, out).map_err(|e| Failure::io("write features", &path, e))
}

pub fn save_features(path: &Path, fs: &FeatureSet) -> Result<(), Failure> {
    aud_core::corpus::write_feature_archive(path, fs).stage("write features")?;
    write_sidecar(path, fs)
}
