//! Dataset manifest JSON.
//!
//! ```json
//! { "pairs": [["s01", "s02"]],
//!   "samples": [{"sample_id": "s01_v1", "subject": "s01", "modality": "voice",
//!                "take": 1, "path": "voice/s01_1.wav"}] }
//! ```
//!
//! Relative sample paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twinfuse_core::datamodel::{
    validate_dataset, Capture, Dataset, EarSide, Modality, SampleRecord, SubjectId, Violation,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleEntry {
    sample_id: String,
    subject: String,
    modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    take: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    side: Option<EarSide>,
    path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    pairs: Vec<[String; 2]>,
    samples: Vec<SampleEntry>,
}

/// A loaded dataset together with the directory its paths are relative to.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dataset: Dataset,
    pub root: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, sample_path: &str) -> PathBuf {
        self.root.join(sample_path)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_dataset(&self.dataset, |p| self.resolve(p).is_file())
    }
}

fn subject(path: &Path, s: &str) -> Result<SubjectId> {
    SubjectId::new(s).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn entry_to_record(path: &Path, e: SampleEntry) -> Result<SampleRecord> {
    let bad = |reason: &str| Error::Manifest {
        path: path.to_path_buf(),
        reason: format!("sample `{}`: {reason}", e.sample_id),
    };
    let capture = match (e.modality, e.take, e.side) {
        (Modality::Voice, Some(take), None) => Capture::Voice { take },
        (Modality::Ear, None, Some(side)) => Capture::Ear { side },
        (Modality::Voice, None, _) => return Err(bad("voice samples need `take`")),
        (Modality::Voice, Some(_), Some(_)) => return Err(bad("voice samples take no `side`")),
        (Modality::Ear, _, None) => return Err(bad("ear samples need `side`")),
        (Modality::Ear, Some(_), Some(_)) => return Err(bad("ear samples take no `take`")),
    };
    Ok(SampleRecord::new(e.sample_id, subject(path, &e.subject)?, capture, e.path))
}

pub fn parse_manifest(path: &Path, text: &str) -> Result<Dataset> {
    let doc: ManifestDoc = serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let pairs = doc
        .pairs
        .iter()
        .map(|[a, b]| Ok((subject(path, a)?, subject(path, b)?)))
        .collect::<Result<Vec<_>>>()?;
    let samples = doc
        .samples
        .into_iter()
        .map(|e| entry_to_record(path, e))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(pairs, samples).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dataset = parse_manifest(path, &text)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    log::info!(
        "loaded {}: {} subjects in {} pairs, {} samples",
        path.display(),
        dataset.pairs().len() * 2,
        dataset.pairs().len(),
        dataset.samples().len()
    );
    Ok(Manifest { dataset, root })
}

pub fn manifest_json(ds: &Dataset) -> String {
    let doc = ManifestDoc {
        pairs: ds
            .pairs()
            .iter()
            .map(|(a, b)| [a.as_str().to_string(), b.as_str().to_string()])
            .collect(),
        samples: ds
            .samples()
            .iter()
            .map(|s| {
                let (take, side) = match s.capture {
                    Capture::Voice { take } => (Some(take), None),
                    Capture::Ear { side } => (None, Some(side)),
                };
                SampleEntry {
                    sample_id: s.sample_id.clone(),
                    subject: s.subject.as_str().to_string(),
                    modality: s.modality(),
                    take,
                    side,
                    path: s.path.clone(),
                }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n"
}

pub fn write_manifest(path: &Path, ds: &Dataset) -> Result<()> {
    fs::write(path, manifest_json(ds)).map_err(|e| Error::io(path, e))
}
