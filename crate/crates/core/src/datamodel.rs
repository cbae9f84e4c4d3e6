//! Subjects, samples, twin pairs and the gallery/probe protocol.
//!
//! Voice takes 1 and 2 of every subject are enrolled in the gallery and take
//! 3 is the probe. The left ear image is enrolled and the right ear image is
//! the probe.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity label of one person.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(String);

impl SubjectId {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() {
            return Err(Error::InvalidConfig("subject id must not be empty".into()));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Voice,
    Ear,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Voice => "voice",
            Modality::Ear => "ear",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EarSide {
    Left,
    Right,
}

/// Which capture of a subject a sample is: a numbered voice take or one ear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Capture {
    Voice { take: u8 },
    Ear { side: EarSide },
}

impl Capture {
    pub fn modality(self) -> Modality {
        match self {
            Capture::Voice { .. } => Modality::Voice,
            Capture::Ear { .. } => Modality::Ear,
        }
    }
}

pub const VOICE_TAKES: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub subject: SubjectId,
    /// Index into [`Dataset::pairs`]; assigned by [`Dataset::new`].
    pub twin_pair: usize,
    pub capture: Capture,
    pub path: String,
}

impl SampleRecord {
    pub fn new(
        sample_id: impl Into<String>,
        subject: SubjectId,
        capture: Capture,
        path: impl Into<String>,
    ) -> Self {
        Self {
            sample_id: sample_id.into(),
            subject,
            twin_pair: 0,
            capture,
            path: path.into(),
        }
    }

    pub fn modality(&self) -> Modality {
        self.capture.modality()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pairs: Vec<(SubjectId, SubjectId)>,
    samples: Vec<SampleRecord>,
}

impl Dataset {
    /// Validates pair membership and sample ids and links every sample to
    /// its twin pair.
    pub fn new(pairs: Vec<(SubjectId, SubjectId)>, mut samples: Vec<SampleRecord>) -> Result<Self> {
        let mut pair_of: BTreeMap<&SubjectId, (usize, usize)> = BTreeMap::new();
        for (idx, (a, b)) in pairs.iter().enumerate() {
            for s in [a, b] {
                pair_of.entry(s).or_insert((idx, 0)).1 += 1;
            }
            if a == b {
                return Err(Error::PairMembership {
                    subject: a.as_str().into(),
                    count: 2,
                });
            }
        }
        if let Some((s, (_, n))) = pair_of.iter().find(|(_, (_, n))| *n != 1) {
            return Err(Error::PairMembership {
                subject: s.as_str().into(),
                count: *n,
            });
        }
        let mut seen = BTreeSet::new();
        let mut links = Vec::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateId(s.sample_id.clone()));
            }
            if let Capture::Voice { take } = s.capture {
                if !(1..=VOICE_TAKES).contains(&take) {
                    return Err(Error::InvalidSample {
                        sample_id: s.sample_id.clone(),
                        reason: format!("voice take {take} outside 1..={VOICE_TAKES}"),
                    });
                }
            }
            match pair_of.get(&s.subject) {
                Some((idx, _)) => links.push(*idx),
                None => {
                    return Err(Error::PairMembership {
                        subject: s.subject.as_str().into(),
                        count: 0,
                    })
                }
            }
        }
        for (s, idx) in samples.iter_mut().zip(links) {
            s.twin_pair = idx;
        }
        Ok(Self { pairs, samples })
    }

    pub fn pairs(&self) -> &[(SubjectId, SubjectId)] {
        &self.pairs
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    /// Subjects in pair order (first twin, then second).
    pub fn subjects(&self) -> impl Iterator<Item = &SubjectId> + '_ {
        self.pairs.iter().flat_map(|(a, b)| [a, b])
    }

    pub fn twin_of(&self, subject: &SubjectId) -> Option<&SubjectId> {
        self.pairs.iter().find_map(|(a, b)| {
            if a == subject {
                Some(b)
            } else if b == subject {
                Some(a)
            } else {
                None
            }
        })
    }

    pub fn sample(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }

    fn captures_of(&self, subject: &SubjectId, modality: Modality) -> Vec<&SampleRecord> {
        self.samples
            .iter()
            .filter(|s| &s.subject == subject && s.modality() == modality)
            .collect()
    }
}

/// What to do with a subject that lacks samples required by the protocol.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exclusion {
    /// Drop the subject and its twin from the affected modality.
    #[default]
    Pair,
    /// Drop only the incomplete subject.
    Subject,
    /// Fail the split.
    Abort,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModalitySplit {
    pub gallery: Vec<SampleRecord>,
    pub probes: Vec<SampleRecord>,
    pub excluded: Vec<SubjectId>,
}

impl ModalitySplit {
    /// Subjects with at least one gallery sample, in enrollment order.
    pub fn gallery_subjects(&self) -> Vec<SubjectId> {
        let mut out: Vec<SubjectId> = Vec::new();
        for s in &self.gallery {
            if out.last() != Some(&s.subject) && !out.contains(&s.subject) {
                out.push(s.subject.clone());
            }
        }
        out
    }

    /// Removes every sample of the given subjects and records them as excluded.
    pub fn exclude(&mut self, subjects: &BTreeSet<SubjectId>) {
        self.gallery.retain(|s| !subjects.contains(&s.subject));
        self.probes.retain(|s| !subjects.contains(&s.subject));
        for s in subjects {
            if !self.excluded.contains(s) {
                self.excluded.push(s.clone());
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitPlan {
    pub voice: ModalitySplit,
    pub ear: ModalitySplit,
}

impl SplitPlan {
    pub fn modality(&self, m: Modality) -> &ModalitySplit {
        match m {
            Modality::Voice => &self.voice,
            Modality::Ear => &self.ear,
        }
    }

    pub fn modality_mut(&mut self, m: Modality) -> &mut ModalitySplit {
        match m {
            Modality::Voice => &mut self.voice,
            Modality::Ear => &mut self.ear,
        }
    }
}

/// Required captures a subject lacks for the given modality.
fn missing_captures(ds: &Dataset, subject: &SubjectId, modality: Modality) -> Vec<String> {
    let present: BTreeSet<Capture> = ds
        .captures_of(subject, modality)
        .iter()
        .map(|s| s.capture)
        .collect();
    let required: Vec<Capture> = match modality {
        Modality::Voice => (1..=VOICE_TAKES).map(|take| Capture::Voice { take }).collect(),
        Modality::Ear => [EarSide::Left, EarSide::Right]
            .into_iter()
            .map(|side| Capture::Ear { side })
            .collect(),
    };
    required
        .into_iter()
        .filter(|c| !present.contains(c))
        .map(describe_capture)
        .collect()
}

fn describe_capture(c: Capture) -> String {
    match c {
        Capture::Voice { take } => format!("voice take {take}"),
        Capture::Ear { side: EarSide::Left } => "left ear".into(),
        Capture::Ear { side: EarSide::Right } => "right ear".into(),
    }
}

fn is_gallery(c: Capture) -> bool {
    matches!(
        c,
        Capture::Voice { take: 1 | 2 } | Capture::Ear { side: EarSide::Left }
    )
}

/// Splits both modalities into gallery and probe sets.
///
/// Ordering follows pair order, then capture order (take index or
/// left-before-right), never the order samples were listed in.
pub fn apply_split(ds: &Dataset, policy: Exclusion) -> Result<SplitPlan> {
    let mut plan = SplitPlan::default();
    for modality in [Modality::Voice, Modality::Ear] {
        let mut excluded = BTreeSet::new();
        for subject in ds.subjects() {
            let missing = missing_captures(ds, subject, modality);
            if missing.is_empty() {
                continue;
            }
            match policy {
                Exclusion::Abort => {
                    return Err(Error::MissingSample {
                        subject: subject.as_str().into(),
                        what: missing.join(", "),
                    })
                }
                Exclusion::Subject => {
                    excluded.insert(subject.clone());
                }
                Exclusion::Pair => {
                    excluded.insert(subject.clone());
                    if let Some(twin) = ds.twin_of(subject) {
                        excluded.insert(twin.clone());
                    }
                }
            }
        }
        let split = plan.modality_mut(modality);
        for subject in ds.subjects() {
            if excluded.contains(subject) {
                split.excluded.push(subject.clone());
                continue;
            }
            let mut caps = ds.captures_of(subject, modality);
            caps.sort_by_key(|s| s.capture);
            for s in caps {
                if is_gallery(s.capture) {
                    split.gallery.push(s.clone());
                } else {
                    split.probes.push(s.clone());
                }
            }
        }
    }
    Ok(plan)
}

/// One reason a dataset does not satisfy the protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingSample {
        subject: SubjectId,
        modality: Modality,
        what: String,
    },
    DuplicateCapture {
        subject: SubjectId,
        sample_id: String,
    },
    MissingFile {
        sample_id: String,
        path: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingSample {
                subject,
                modality,
                what,
            } => write!(f, "subject {subject} lacks {what} ({modality})"),
            Violation::DuplicateCapture { subject, sample_id } => {
                write!(f, "subject {subject} has a repeated capture in {sample_id}")
            }
            Violation::MissingFile { sample_id, path } => {
                write!(f, "sample {sample_id}: file {path} does not exist")
            }
        }
    }
}

/// Lists every protocol violation; `file_exists` decides whether a sample
/// path resolves.
pub fn validate_dataset(ds: &Dataset, mut file_exists: impl FnMut(&str) -> bool) -> Vec<Violation> {
    let mut out = Vec::new();
    for subject in ds.subjects() {
        for modality in [Modality::Voice, Modality::Ear] {
            for what in missing_captures(ds, subject, modality) {
                out.push(Violation::MissingSample {
                    subject: subject.clone(),
                    modality,
                    what,
                });
            }
        }
    }
    let mut seen = BTreeSet::new();
    for s in ds.samples() {
        if !seen.insert((&s.subject, s.capture)) {
            out.push(Violation::DuplicateCapture {
                subject: s.subject.clone(),
                sample_id: s.sample_id.clone(),
            });
        }
    }
    for s in ds.samples() {
        if !file_exists(&s.path) {
            out.push(Violation::MissingFile {
                sample_id: s.sample_id.clone(),
                path: s.path.clone(),
            });
        }
    }
    out
}
