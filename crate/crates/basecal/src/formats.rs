//! JSON and CSV inputs: transforms, boxes, DH tables, joint angles.

use std::path::Path;

use basecal_core::geometry::RigidTransform;
use basecal_core::handeye::DhTable;
use basecal_core::Aabb;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Location, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

/// Pretty JSON with a trailing newline; field order follows the type, so equal values
/// always give equal bytes.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, to_json_bytes(value)).map_err(|e| Error::io(path, e))
}

/// `{"min": [..], "max": [..]}` in meters.
pub fn read_box(path: &Path) -> Result<Aabb> {
    read_json(path)
}

/// `{"rows": [{"a", "alpha", "d", "theta_offset"}, ..], "tool": optional transform}`.
pub fn read_dh(path: &Path) -> Result<DhTable> {
    let table: DhTable = read_json(path)?;
    table.validate()?;
    Ok(table)
}

/// `{"R": [[..], [..], [..]], "t": [..]}`.
pub fn read_transform(path: &Path) -> Result<RigidTransform> {
    read_json(path)
}

/// A transform list from a JSON array whose entries are transforms or objects holding
/// one under `transform`, `gt`, `x` or `estimate` (dataset manifests, result dumps).
pub fn read_transform_list(path: &Path) -> Result<Vec<RigidTransform>> {
    let value: serde_json::Value = read_json(path)?;
    let json_err = |source| Error::Json {
        path: path.into(),
        source,
    };
    let items = match value {
        serde_json::Value::Array(items) => items,
        serde_json::Value::Object(mut m) if m.contains_key("records") => match m.remove("records") {
            Some(serde_json::Value::Array(items)) => items,
            _ => return Err(Error::config("records", "must be an array")),
        },
        _ => {
            return Err(Error::config(
                path.display().to_string(),
                "expected a JSON array of transforms",
            ))
        }
    };
    items
        .into_iter()
        .map(|item| {
            let inner = match &item {
                serde_json::Value::Object(m) if !m.contains_key("R") => ["transform", "gt", "x", "estimate"]
                    .iter()
                    .find_map(|k| m.get(*k).cloned())
                    .unwrap_or(item),
                _ => item,
            };
            serde_json::from_value(inner).map_err(json_err)
        })
        .collect()
}

/// Numbers separated by commas or whitespace; `#` starts a comment.
pub fn parse_numbers(text: &str) -> std::result::Result<Vec<f64>, (Location, String)> {
    parse_rows(text).map(|rows| rows.into_iter().flatten().collect())
}

/// One row of numbers per non-empty line. A first line that is not numeric is taken as a
/// header and skipped.
pub fn parse_rows(text: &str) -> std::result::Result<Vec<Vec<f64>>, (Location, String)> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = tokens.iter().map(|t| t.parse::<f64>()).collect();
        match parsed {
            Ok(row) if row.iter().all(|v| v.is_finite()) => rows.push(row),
            Ok(_) => return Err((Location::Line(i + 1), "non-finite value".into())),
            Err(_) if rows.is_empty() && !tokens.iter().any(|t| t.parse::<f64>().is_ok()) => {}
            Err(_) => {
                let bad = tokens.iter().find(|t| t.parse::<f64>().is_err()).unwrap();
                return Err((Location::Line(i + 1), format!("`{bad}` is not a number")));
            }
        }
    }
    Ok(rows)
}

/// Joint angles from an inline list (`"0.1,-1.57,..."`) or from a file holding one.
/// Values are radians unless `degrees` is set.
pub fn read_joints(arg: &str, degrees: bool) -> Result<Vec<f64>> {
    let as_path = Path::new(arg);
    let (text, path) = if as_path.is_file() {
        (
            std::fs::read_to_string(as_path).map_err(|e| Error::io(as_path, e))?,
            Some(as_path),
        )
    } else {
        (arg.to_string(), None)
    };
    let values = parse_numbers(&text).map_err(|(at, message)| match path {
        Some(p) => Error::Parse {
            path: p.into(),
            at,
            message,
        },
        None => Error::config("joints", message),
    })?;
    if values.is_empty() {
        return Err(Error::config("joints", "no joint angles given"));
    }
    let scale = if degrees { std::f64::consts::PI / 180.0 } else { 1.0 };
    Ok(values.into_iter().map(|v| v * scale).collect())
}
