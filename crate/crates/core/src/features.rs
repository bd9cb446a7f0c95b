//! Feature vectors, their manifests, and the feature-matrix file format
//! (CSV matrix plus a JSON manifest sidecar).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Kinematic,
    Spatial,
    Temporal,
    Dynamic,
    Global,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub version: String,
    pub entries: Vec<ManifestEntry>,
}

impl FeatureManifest {
    pub fn new(version: impl Into<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::MalformedHeader(format!(
                    "duplicate feature name {:?}",
                    e.name
                )));
            }
        }
        Ok(FeatureManifest {
            version: version.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: FeatureManifest =
            serde_json::from_str(text).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        FeatureManifest::new(m.version, m.entries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub manifest_version: String,
    pub sample_id: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub type FeatureMap = BTreeMap<String, FeatureVector>;

/// Path of the manifest sidecar for a matrix file: `x.csv` -> `x.manifest.json`.
pub fn manifest_path(matrix: &Path) -> std::path::PathBuf {
    matrix.with_extension("manifest.json")
}

pub fn write_feature_matrix(path: &Path, manifest: &FeatureManifest, rows: &FeatureMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(manifest.names().map(str::to_string));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for (id, v) in rows {
        if v.len() != manifest.len() {
            return Err(Error::DimensionMismatch {
                expected: manifest.len(),
                found: v.len(),
            });
        }
        let mut rec = Vec::with_capacity(v.len() + 1);
        rec.push(id.clone());
        rec.extend(v.values.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    std::fs::write(&mpath, manifest.to_json()).map_err(|e| Error::io(&mpath, e))
}

pub fn read_feature_matrix(path: &Path) -> Result<(FeatureManifest, FeatureMap)> {
    let mpath = manifest_path(path);
    let mtext = std::fs::read_to_string(&mpath).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(mpath.clone()),
        _ => Error::io(&mpath, e),
    })?;
    let manifest = FeatureManifest::from_json(&mtext)?;
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header = r.headers().map_err(|e| csv_io(path, e))?.clone();
    let names: Vec<&str> = header.iter().skip(1).collect();
    if header.get(0) != Some("sample_id") || names != manifest.names().collect::<Vec<_>>() {
        return Err(Error::MalformedHeader(format!(
            "{} does not match its manifest",
            path.display()
        )));
    }
    let mut rows = FeatureMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::NonFiniteValue(id.clone()))?;
        if values.len() != manifest.len() {
            return Err(Error::DimMismatch {
                sample_id: id,
                expected: manifest.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(id));
        }
        let fv = FeatureVector {
            values,
            manifest_version: manifest.version.clone(),
            sample_id: id.clone(),
        };
        if rows.insert(id.clone(), fv).is_some() {
            return Err(Error::DuplicateSampleId(id));
        }
    }
    Ok((manifest, rows))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::MalformedHeader(format!("{}: {other:?}", path.display())),
    }
}
