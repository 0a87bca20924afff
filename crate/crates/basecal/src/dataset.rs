//! On-disk synthetic datasets: one binary PLY and one ground-truth JSON per record, plus
//! a manifest listing them all.

use std::path::{Path, PathBuf};

use basecal_core::geometry::RigidTransform;
use basecal_core::synth::{generate_records, SynthParams, Viewpoint};
use basecal_core::PointCloud;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{to_json_bytes, write_json};
use crate::io::{self, Format};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_DIR: &str = "records";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub source_file: String,
    pub reference_id: String,
    /// Maps the source cloud onto the reference.
    pub gt: RigidTransform,
    pub viewpoint: Viewpoint,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSummary {
    pub records: usize,
    pub manifest_path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// Loads the model and writes its dataset under `out_dir`. The reference id defaults to
/// the model's file stem.
pub fn generate_dataset(
    model_path: &Path,
    reference_id: Option<&str>,
    params: &SynthParams,
    out_dir: &Path,
    units: Option<io::Units>,
) -> Result<DatasetSummary> {
    let model = io::load_with(model_path, units)?;
    let stem = model_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .to_string();
    write_dataset(&model, reference_id.unwrap_or(&stem), params, out_dir)
}

pub fn write_dataset(
    model: &PointCloud,
    reference_id: &str,
    params: &SynthParams,
    out_dir: &Path,
) -> Result<DatasetSummary> {
    if reference_id.is_empty() || reference_id.contains(['/', '\\']) {
        return Err(Error::config(
            "reference_id",
            "must be a non-empty name without path separators",
        ));
    }
    let records = generate_records(model, reference_id, params)?;
    let dir = out_dir.join(RECORDS_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let k = params.k_augment.max(1);
    let mut entries = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let name = format!("{reference_id}_v{:03}_a{:02}", i / k, i % k);
        let source_file = format!("{RECORDS_DIR}/{name}.ply");
        io::save(&out_dir.join(&source_file), &rec.source, Format::PlyBinaryLe)?;
        let entry = ManifestEntry {
            source_file,
            reference_id: rec.reference_id.clone(),
            gt: rec.gt_transform,
            viewpoint: rec.viewpoint,
            seed: rec.seed,
        };
        let gt_path = dir.join(format!("{name}.json"));
        std::fs::write(&gt_path, to_json_bytes(&entry)).map_err(|e| Error::io(&gt_path, e))?;
        entries.push(entry);
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_json(&manifest_path, &entries)?;
    Ok(DatasetSummary {
        records: entries.len(),
        manifest_path,
        entries,
    })
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    crate::formats::read_json(path)
}
