//! Dataset materialization: one `.tok` file per video plus a JSON-lines
//! manifest (`manifest.jsonl`) describing labels, salient tokens and
//! segment boundaries.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::synthgen::{gen_video, ClassBasis, GenConfig, LabeledVideo, Stage};
use crate::tokenstream::{read_token_grid, write_token_grid};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub stage: Stage,
    pub label: usize,
    /// Path of the `.tok` file relative to the manifest.
    pub path: String,
    /// Flat `t * N + i` indices of salient tokens.
    pub salient: Vec<usize>,
    pub boundary_frames: Vec<usize>,
}

/// Write videos `first..first + count` of a stage stream into `dir`.
pub fn materialize(
    cfg: &GenConfig,
    basis: &ClassBasis,
    stage: Stage,
    first: u64,
    count: usize,
    dir: impl AsRef<Path>,
) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = BufWriter::new(File::create(dir.join(MANIFEST_NAME))?);
    let mut entries = Vec::with_capacity(count);
    for id in first..first + count as u64 {
        let video = gen_video(cfg, basis, stage, id)?;
        let name = format!("{}_{id:06}.tok", stage.name());
        write_token_grid(&video.grid, dir.join(&name))?;
        let entry = ManifestEntry {
            id,
            stage,
            label: video.class_label,
            path: name,
            salient: video.salient_indices(),
            boundary_frames: video.boundary_frames.clone(),
        };
        serde_json::to_writer(&mut manifest, &entry)?;
        manifest.write_all(b"\n")?;
        entries.push(entry);
    }
    manifest.flush()?;
    Ok(entries)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Rebuild a labeled video from a manifest entry and its token file.
pub fn load_video(manifest_dir: impl AsRef<Path>, entry: &ManifestEntry) -> Result<LabeledVideo> {
    let path: PathBuf = manifest_dir.as_ref().join(&entry.path);
    let grid = read_token_grid(path)?;
    let mut saliency = vec![0u8; grid.token_count()];
    for &i in &entry.salient {
        *saliency.get_mut(i).ok_or_else(|| {
            HarnessError::Config(format!("salient index {i} outside video {}", entry.id))
        })? = 1;
    }
    Ok(LabeledVideo {
        id: entry.id,
        grid,
        class_label: entry.label,
        saliency,
        boundary_frames: entry.boundary_frames.clone(),
    })
}
