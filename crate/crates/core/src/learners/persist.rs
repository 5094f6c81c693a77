//! Versioned JSON model files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainedModel;
use crate::error::{Error, Result};

pub const FORMAT: &str = "safety-pool-model";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    model: T,
}

pub fn to_json<T: Serialize>(model: &T) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        model,
    })?)
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let head: serde_json::Value = serde_json::from_str(text)?;
    match head.get("format").and_then(|f| f.as_str()) {
        Some(FORMAT) => {}
        other => return Err(Error::ModelFormat(format!("format {other:?}"))),
    }
    match head.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == VERSION as u64 => {}
        other => return Err(Error::ModelFormat(format!("version {other:?}"))),
    }
    let env: Envelope<T> = serde_json::from_value(head)?;
    Ok(env.model)
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    save(path, model)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    load(path)
}

pub fn save<T: Serialize>(path: &Path, model: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_other_formats() {
        let r: Result<u32> = from_json(r#"{"format":"x","version":1,"model":3}"#);
        assert!(matches!(r, Err(Error::ModelFormat(_))));
        let r: Result<u32> = from_json(r#"{"format":"safety-pool-model","version":9,"model":3}"#);
        assert!(matches!(r, Err(Error::ModelFormat(_))));
        let ok: u32 = from_json(r#"{"format":"safety-pool-model","version":1,"model":3}"#).unwrap();
        assert_eq!(ok, 3);
    }
}
