//! Versioned JSON envelopes for files exchanged with the command line.
//!
//! Every document carries a `format_version` string `"MAJOR.MINOR"`.
//! Readers accept any minor of a known major and reject everything else.
//! A missing version is read as the current one.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1.0";
const MAJOR: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub format_version: String,
    /// Seconds since the Unix epoch; omitted for reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T, timestamp: bool) -> Self {
        let created_unix = timestamp.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Versioned {
            format_version: FORMAT_VERSION.to_string(),
            created_unix,
            body,
        }
    }
}

pub fn check_version(v: &str) -> Result<()> {
    match v.split_once('.') {
        Some((major, minor)) if major == MAJOR && minor.parse::<u32>().is_ok() => Ok(()),
        _ => Err(Error::UnsupportedFormat(v.to_string())),
    }
}

/// Serializes `body` with a version header, pretty printed.
pub fn to_json<T: Serialize>(body: &T, timestamp: bool) -> Result<String> {
    serde_json::to_string_pretty(&Versioned::new(body, timestamp)).map_err(|e| Error::Format(e.to_string()))
}

/// Parses a document, checking and then discarding the header fields.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if let Value::Object(map) = &mut value {
        match map.remove("format_version") {
            Some(Value::String(v)) => check_version(&v)?,
            Some(other) => return Err(Error::UnsupportedFormat(other.to_string())),
            None => {}
        }
        map.remove("created_unix");
    }
    serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))
}
