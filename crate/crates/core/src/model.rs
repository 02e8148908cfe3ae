//! Versioned JSON envelope used for every persisted model.
//!
//! ```json
//! { "kind": "dictionary", "version": 1, "payload": { ... } }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! round-tripping, so `load(save(x)) == x` bit for bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("model file {path} holds a `{found}` model, expected `{expected}`")]
    WrongKind {
        path: String,
        expected: String,
        found: String,
    },
    #[error("model file {path} has version {found}, this build reads version {expected}")]
    Version {
        path: String,
        expected: u32,
        found: u32,
    },
}

/// A type that can be stored in the model envelope.
pub trait ModelKind {
    const KIND: &'static str;
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    kind: &'a str,
    version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    kind: String,
    version: u32,
    payload: T,
}

pub fn to_string<T: Serialize + ModelKind>(model: &T) -> String {
    let env = EnvelopeRef {
        kind: T::KIND,
        version: FORMAT_VERSION,
        payload: model,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("model serialization is infallible");
    s.push('\n');
    s
}

pub fn from_str<T: DeserializeOwned + ModelKind>(text: &str, origin: &str) -> Result<T, ModelError> {
    #[derive(Deserialize)]
    struct Header {
        kind: String,
        version: u32,
    }
    let header: Header = serde_json::from_str(text).map_err(|source| ModelError::Parse {
        path: origin.to_string(),
        source,
    })?;
    if header.kind != T::KIND {
        return Err(ModelError::WrongKind {
            path: origin.to_string(),
            expected: T::KIND.to_string(),
            found: header.kind,
        });
    }
    if header.version != FORMAT_VERSION {
        return Err(ModelError::Version {
            path: origin.to_string(),
            expected: FORMAT_VERSION,
            found: header.version,
        });
    }
    let env: Envelope<T> = serde_json::from_str(text).map_err(|source| ModelError::Parse {
        path: origin.to_string(),
        source,
    })?;
    debug_assert_eq!(env.kind, T::KIND);
    debug_assert_eq!(env.version, FORMAT_VERSION);
    Ok(env.payload)
}

pub fn save<T: Serialize + ModelKind>(model: &T, path: &Path) -> Result<(), ModelError> {
    fs::write(path, to_string(model)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load<T: DeserializeOwned + ModelKind>(path: &Path) -> Result<T, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_str(&text, &path.display().to_string())
}
