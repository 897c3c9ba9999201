//! Versioned, self-describing JSON model files (`.acwb`).
//!
//! Floats are written with the shortest representation that parses back to
//! the identical `f64`, so a loaded model predicts bit-identically.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelFileError, Result};
use crate::stages::FittedModel;

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_EXTENSION: &str = "acwb";

#[derive(Serialize)]
struct FileOut<'a> {
    format: &'static str,
    format_version: u32,
    model: &'a FittedModel,
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
}

#[derive(Deserialize)]
struct FileIn {
    model: FittedModel,
}

fn parse_error(text: &str, e: &serde_json::Error) -> ModelFileError {
    // serde_json reports 1-based line/column; convert to a byte offset.
    let offset = text
        .split_inclusive('\n')
        .take(e.line().saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + e.column().saturating_sub(1);
    ModelFileError::Parse {
        offset: offset.min(text.len()),
        message: e.to_string(),
    }
}

pub fn to_string(model: &FittedModel) -> Result<String> {
    serde_json::to_string_pretty(&FileOut {
        format: "acwb-model",
        format_version: FORMAT_VERSION,
        model,
    })
    .map_err(|e| Error::Fit(format!("model serialization failed: {e}")))
}

pub fn from_str(text: &str) -> Result<FittedModel> {
    let header: Header = serde_json::from_str::<Header>(text).map_err(|e| parse_error(text, &e))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ModelFileError::Version {
            found: header.format_version,
            supported: FORMAT_VERSION,
        }
        .into());
    }
    let file: FileIn = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
    Ok(file.model)
}

/// Write atomically: a temporary sibling file is renamed over the target.
pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    let text = to_string(model)?;
    let tmp = path.with_extension("acwb.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_and_truncation_errors() {
        let e = from_str(r#"{"format_version": 7, "model": {}}"#).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains('7') && msg.contains('1'), "{msg}");
        let e = from_str("{\n  \"format_version\": 1,\n  \"model\": {\"kind\": \"sin").unwrap_err();
        assert!(matches!(e, Error::ModelFile(ModelFileError::Parse { .. })));
    }

    #[test]
    fn byte_offset_points_into_text() {
        let text = "{\n  \"format_version\": x\n}";
        match from_str(text).unwrap_err() {
            Error::ModelFile(ModelFileError::Parse { offset, .. }) => {
                assert_eq!(&text[offset..offset + 1], "x");
            }
            other => panic!("{other:?}"),
        }
    }
}
