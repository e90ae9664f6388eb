use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Overlays the flags given on the command line onto the settings in the
/// `--config` file. Keys in the file are the long flag names with `_` in
/// place of `-`; unknown keys are rejected by the argument type itself.
pub fn resolve<A>(flags: A, file: Option<&Path>) -> Result<A>
where
    A: Serialize + DeserializeOwned,
{
    let Some(path) = file else { return Ok(flags) };
    let mut base: Value = read_json(path)?;
    let Value::Object(base_map) = &mut base else {
        return Err(hbtm::Error::Config(format!("{} must hold a JSON object", path.display())).into());
    };
    let Value::Object(given) = serde_json::to_value(&flags)? else {
        unreachable!("argument structs serialize to objects")
    };
    for (key, value) in given {
        let unset = value.is_null() || value.as_array().is_some_and(Vec::is_empty);
        if !unset {
            base_map.insert(key, value);
        }
    }
    serde_json::from_value(base)
        .map_err(|e| hbtm::Error::Config(format!("{}: {e}", path.display())))
        .map_err(Into::into)
}

pub fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| hbtm::Error::Config(format!("--{flag} is required")).into())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// `path` with `suffix` appended to its file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}
