use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::{TimelineError, TimelineProject, SCHEMA_VERSION};

pub const PROJECT_EXTENSION: &str = ".mangaroll.json";

/// JSON value with object keys in sorted order.
pub fn canonical_value<T: Serialize>(value: &T) -> Value {
    // serde_json's map is ordered by key unless insertion order is
    // requested, so a round trip through Value sorts every object.
    serde_json::to_value(value).expect("project types serialize to JSON")
}

/// Canonical file bytes: sorted keys, two-space indent, trailing newline.
pub fn canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&canonical_value(value)).expect("values serialize");
    out.push(b'\n');
    out
}

/// Validates and writes the project atomically.
pub fn save_project(project: &TimelineProject, path: &Path) -> Result<(), TimelineError> {
    project.validate()?;
    crate::broll::write_atomic(path, &canonical_bytes(project))?;
    Ok(())
}

pub fn project_from_bytes(bytes: &[u8]) -> Result<TimelineProject, TimelineError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| TimelineError::Parse(e.to_string()))?;
    let found = value.get("version").and_then(Value::as_u64).unwrap_or(0);
    if found != u64::from(SCHEMA_VERSION) {
        return Err(TimelineError::SchemaVersionMismatch { found });
    }
    let project: TimelineProject = serde_json::from_value(value).map_err(|e| TimelineError::Parse(e.to_string()))?;
    super::validate_project(&project).map_err(|(which, detail)| TimelineError::ValidationFailed { which, detail })?;
    Ok(project)
}

pub fn load_project(path: &Path) -> Result<TimelineProject, TimelineError> {
    project_from_bytes(&std::fs::read(path)?)
}
