use std::fs;
use std::path::{Path, PathBuf};

use resmatch::dataio::{read_scene, RunConfig, SyntheticScene};
use resmatch::{Error, Result};

use crate::{OptRunArgs, RunArgs};

/// Apply `KEY=VALUE` overrides; values are parsed as TOML scalars, falling
/// back to a bare string (`--set mode=accurate`).
fn apply_overrides(cfg: RunConfig, overrides: &[String]) -> Result<RunConfig> {
    if overrides.is_empty() {
        return Ok(cfg);
    }
    let mut table: toml::Table = toml::from_str(&cfg.to_toml()).map_err(|e| Error::Config(e.to_string()))?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {o:?} is not KEY=VALUE")))?;
        let (k, v) = (k.trim(), v.trim());
        let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(v.to_owned()),
        };
        table.insert(k.to_owned(), value);
    }
    RunConfig::from_toml(&toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?)
}

fn resolve(path: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = apply_overrides(cfg, overrides)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn config(run: &RunArgs) -> Result<RunConfig> {
    resolve(Some(&run.config), run.seed, &run.overrides)
}

pub fn opt_config(run: &OptRunArgs) -> Result<RunConfig> {
    resolve(run.config.as_deref(), run.seed, &run.overrides)
}

/// Directory that receives the resolved configuration for an output file.
pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Every pair directory under `dir` (sorted by name) with its id.
pub fn load_scenes(dir: &Path) -> Result<Vec<(String, SyntheticScene)>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("left.png").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Input(format!("no pair directories under {}", dir.display())));
    }
    dirs.into_iter()
        .map(|d| {
            let id = d.file_name().unwrap_or_default().to_string_lossy().into_owned();
            Ok((id, read_scene(&d)?))
        })
        .collect()
}

pub fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}
