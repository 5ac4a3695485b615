//! Versioned JSON container shared by every model type.

use std::io::{Read, Write};

use serde::de::{DeserializeOwned, IgnoredAny};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "causeway-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("model file holds a `{found}` model, expected `{expected}`")]
    Kind { found: String, expected: String },
    #[error("bad model file: {0}")]
    Format(String),
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u32,
    kind: &'a str,
    model: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    #[allow(dead_code)]
    model: IgnoredAny,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    model: T,
}

pub fn write_model<W: Write, T: Serialize>(
    mut writer: W,
    kind: &str,
    model: &T,
) -> Result<(), ModelFileError> {
    let env = EnvelopeOut {
        format: MODEL_FORMAT,
        version: MODEL_VERSION,
        kind,
        model,
    };
    serde_json::to_writer(&mut writer, &env).map_err(|e| ModelFileError::Format(e.to_string()))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_model<R: Read, T: DeserializeOwned>(
    mut reader: R,
    kind: &str,
) -> Result<T, ModelFileError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    let header: Header =
        serde_json::from_slice(&buf).map_err(|e| ModelFileError::Format(e.to_string()))?;
    if header.format != MODEL_FORMAT {
        return Err(ModelFileError::Format(format!(
            "unknown format `{}`",
            header.format
        )));
    }
    if header.version != MODEL_VERSION {
        return Err(ModelFileError::Version {
            found: header.version,
            expected: MODEL_VERSION,
        });
    }
    if header.kind != kind {
        return Err(ModelFileError::Kind {
            found: header.kind,
            expected: kind.to_string(),
        });
    }
    let env: EnvelopeIn<T> =
        serde_json::from_slice(&buf).map_err(|e| ModelFileError::Format(e.to_string()))?;
    Ok(env.model)
}
