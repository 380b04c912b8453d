//! Annotation serialization (COCO-style JSON, YOLO text, scene manifests),
//! deterministic train/val/test splitting and nested ablation subsampling.

mod coco;
mod split;
mod yolo;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::Annotation;
use crate::error::{Error, Result};
use crate::scenegen::SceneSpec;

pub use coco::{read_coco, read_coco_file, write_coco, write_coco_file};
pub use split::{
    read_split_file, split_dataset, subsample_train, write_split_files, SplitAssignment,
    DEFAULT_RATIOS,
};
pub use yolo::{read_yolo, write_yolo, yolo_line};

pub const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<Annotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_spec: Option<SceneSpec>,
}

/// An immutable, validated list of labelled images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(class_names: Vec<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = DatasetManifest {
            version: MANIFEST_VERSION.to_string(),
            class_names,
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    /// Checks id uniqueness and that every class id indexes `class_names`.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::invalid(format!("duplicate image id `{}`", e.image_id)));
            }
            for a in &e.annotations {
                if a.class_id as usize >= self.class_names.len() {
                    return Err(Error::invalid(format!(
                        "image `{}`: class id {} out of range for {} classes",
                        e.image_id,
                        a.class_id,
                        self.class_names.len()
                    )));
                }
                if a.image_id != e.image_id {
                    return Err(Error::invalid(format!(
                        "annotation for `{}` listed under image `{}`",
                        a.image_id, e.image_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn image_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.image_id.clone()).collect()
    }

    pub fn entry(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn annotations(&self) -> impl Iterator<Item = &Annotation> {
        self.entries.iter().flat_map(|e| e.annotations.iter())
    }
}

/// Writes one `SceneSpec` per line for every entry that carries one.
pub fn write_scene_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for spec in manifest.entries.iter().filter_map(|e| e.scene_spec.as_ref()) {
        let line = serde_json::to_string(spec).expect("SceneSpec serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scene_manifest(path: impl AsRef<Path>) -> Result<Vec<SceneSpec>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), &path.display().to_string())
}

/// Parses JSON lines, skipping blank lines. Errors carry the file line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead, what: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(what, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            what: what.to_string(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}
