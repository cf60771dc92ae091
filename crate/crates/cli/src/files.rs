//! JSON documents and atomic file output.

use std::fs;
use std::io::Write;
use std::path::Path;

use mapcons::LocalVectorMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MAP_FORMAT_VERSION: u32 = 1;

/// A sequence of local maps as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub version: u32,
    pub frames: Vec<LocalVectorMap>,
}

impl MapDocument {
    pub fn new(frames: Vec<LocalVectorMap>) -> Self {
        Self {
            version: MAP_FORMAT_VERSION,
            frames,
        }
    }
}

/// Parses JSON, reporting failures with the file, line, column and the path
/// of the offending field.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        CliError::Parse {
            path: path.to_path_buf(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(path, &text)
}

pub fn read_map(path: &Path) -> CliResult<MapDocument> {
    let doc: MapDocument = read_json(path)?;
    if doc.version != MAP_FORMAT_VERSION {
        return Err(CliError::Validation(format!(
            "{}: unsupported map format version {} (expected {MAP_FORMAT_VERSION})",
            path.display(),
            doc.version
        )));
    }
    for (f, frame) in doc.frames.iter().enumerate() {
        if !frame.ego_pose.is_finite() {
            return Err(CliError::Validation(format!(
                "{}: frames[{f}].ego_pose is not finite",
                path.display()
            )));
        }
        for (i, inst) in frame.instances.iter().enumerate() {
            inst.validate().map_err(|e| {
                CliError::Validation(format!("{}: frames[{f}].instances[{i}]: {e}", path.display()))
            })?;
        }
    }
    Ok(doc)
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))
            .map_err(|e| CliError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, to_json(value).as_bytes())
}

pub fn write_map(path: &Path, frames: &[LocalVectorMap]) -> CliResult<()> {
    write_json(path, &MapDocument::new(frames.to_vec()))
}
