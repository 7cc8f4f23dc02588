//! Dataset manifest: one `sequence camera subject trajectory` line per
//! recording. Frames live in `<root>/<sequence>/<camera>/`, detections in
//! `<root>/<sequence>/<camera>.det`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{PfmError, Result};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceEntry {
    pub root: PathBuf,
    pub sequence: String,
    pub camera: String,
    pub subject: String,
    pub trajectory: String,
}

impl SequenceEntry {
    pub fn frames_dir(&self) -> PathBuf {
        self.root.join(&self.sequence).join(&self.camera)
    }

    pub fn detections_path(&self) -> PathBuf {
        self.root
            .join(&self.sequence)
            .join(format!("{}.det", self.camera))
    }
}

pub fn parse_manifest(text: &str, root: &Path) -> Result<Vec<SequenceEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(PfmError::Parse {
                line: i + 1,
                reason: format!("manifest line needs 4 fields, got {}", toks.len()),
            });
        }
        out.push(SequenceEntry {
            root: root.to_path_buf(),
            sequence: toks[0].into(),
            camera: toks[1].into(),
            subject: toks[2].into(),
            trajectory: toks[3].into(),
        });
    }
    let mut seen = BTreeSet::new();
    for e in &out {
        if !seen.insert((&e.sequence, &e.camera)) {
            return Err(PfmError::Config(format!(
                "duplicate manifest entry {} {}",
                e.sequence, e.camera
            )));
        }
    }
    Ok(out)
}

pub fn read_manifest(root: &Path) -> Result<Vec<SequenceEntry>> {
    if !root.is_dir() {
        return Err(PfmError::MissingDirectory(root.to_path_buf()));
    }
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| PfmError::io(&path, e))?;
    parse_manifest(&text, root)
}

/// Sorted distinct trajectory ids.
pub fn trajectories(entries: &[SequenceEntry]) -> Vec<String> {
    entries
        .iter()
        .map(|e| e.trajectory.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Sorted distinct camera ids.
pub fn cameras(entries: &[SequenceEntry]) -> Vec<String> {
    entries
        .iter()
        .map(|e| e.camera.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
