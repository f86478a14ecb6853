//! Self-describing JSON envelope shared by every data file and report.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "mde-report/1";

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: schema {found:?}, expected {SCHEMA:?}")]
    Version { path: String, found: String },
    #[error("{path}: kind {found:?}, expected {expected:?}")]
    Kind { path: String, found: String, expected: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema: String,
    pub kind: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(kind: &str, body: T) -> Self {
        Versioned { schema: SCHEMA.to_string(), kind: kind.to_string(), body }
    }
}

/// Pretty JSON with a trailing newline; field order follows the types, so
/// equal values always give equal bytes.
pub fn to_bytes<T: Serialize>(kind: &str, body: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(&Versioned::new(kind, body)).expect("data types serialise");
    v.push(b'\n');
    v
}

pub fn from_bytes<T: DeserializeOwned>(bytes: &[u8], kind: &str, path: &str) -> Result<T, SchemaError> {
    #[derive(Deserialize)]
    struct Header {
        schema: String,
        kind: String,
    }
    let json = |source| SchemaError::Json { path: path.to_string(), source };
    let header: Header = serde_json::from_slice(bytes).map_err(json)?;
    if header.schema != SCHEMA {
        return Err(SchemaError::Version { path: path.to_string(), found: header.schema });
    }
    if header.kind != kind {
        return Err(SchemaError::Kind { path: path.to_string(), found: header.kind, expected: kind.to_string() });
    }
    let v: Versioned<T> = serde_json::from_slice(bytes).map_err(json)?;
    Ok(v.body)
}

pub fn write_file<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<(), SchemaError> {
    let io = |source| SchemaError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, to_bytes(kind, body)).map_err(io)
}

pub fn read_file<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, SchemaError> {
    let bytes = std::fs::read(path).map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
    from_bytes(&bytes, kind, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Body {
        x: f64,
        name: String,
    }

    #[test]
    fn envelope_round_trip() {
        let b = Body { x: 0.1 + 0.2, name: "n".into() };
        let bytes = to_bytes("probe", &b);
        let text = std::str::from_utf8(&bytes).unwrap();
        assert!(text.starts_with("{\n  \"schema\": \"mde-report/1\",\n  \"kind\": \"probe\""));
        assert_eq!(from_bytes::<Body>(&bytes, "probe", "mem").unwrap(), b);
        assert!(matches!(from_bytes::<Body>(&bytes, "other", "mem"), Err(SchemaError::Kind { .. })));
        let old = text.replace("mde-report/1", "mde-report/0");
        assert!(matches!(from_bytes::<Body>(old.as_bytes(), "probe", "mem"), Err(SchemaError::Version { .. })));
    }
}
