//! Versioned JSON envelope shared by every serialized model.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    version: u32,
    scalar: String,
    model: M,
}

/// Serializes `model` tagged with `format`, the format version and the
/// scalar type name.
pub fn encode<T, M: Serialize>(format: &str, model: &M) -> Result<String> {
    let env = Envelope {
        format: format.to_string(),
        version: FORMAT_VERSION,
        scalar: std::any::type_name::<T>().to_string(),
        model,
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn decode<T, M: DeserializeOwned>(format: &str, text: &str) -> Result<M> {
    let env: Envelope<M> = serde_json::from_str(text)?;
    if env.format != format || env.version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "expected {format} v{FORMAT_VERSION}, found {} v{}",
            env.format, env.version
        )));
    }
    let scalar = std::any::type_name::<T>();
    if env.scalar != scalar {
        return Err(Error::ModelFormat(format!(
            "expected scalar type {scalar}, found {}",
            env.scalar
        )));
    }
    Ok(env.model)
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}
