//! Probe-by-identity dissimilarity matrices.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datamodel::SubjectId;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Score orientation. Every scorer emits dissimilarities, so only
/// lower-is-better exists.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    probe_ids: Vec<String>,
    subject_ids: Vec<SubjectId>,
    values: Matrix,
    orientation: Orientation,
    normalized: bool,
}

impl ScoreMatrix {
    pub fn new(
        probe_ids: Vec<String>,
        subject_ids: Vec<SubjectId>,
        values: Matrix,
        normalized: bool,
    ) -> Result<Self> {
        if probe_ids.is_empty() || subject_ids.is_empty() {
            return Err(Error::Empty("score matrix"));
        }
        if values.rows() != probe_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: probe_ids.len(),
                found: values.rows(),
            });
        }
        if values.cols() != subject_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: subject_ids.len(),
                found: values.cols(),
            });
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("score matrix"));
        }
        if normalized && values.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig(
                "normalized score matrix has entries outside [0, 1]".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = probe_ids.iter().find(|p| !seen.insert(p.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = subject_ids.iter().find(|s| !seen.insert(*s)) {
            return Err(Error::DuplicateId(dup.as_str().into()));
        }
        Ok(Self {
            probe_ids,
            subject_ids,
            values,
            orientation: Orientation::LowerBetter,
            normalized,
        })
    }

    pub fn probe_ids(&self) -> &[String] {
        &self.probe_ids
    }

    pub fn subject_ids(&self) -> &[SubjectId] {
        &self.subject_ids
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn n_probes(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn get(&self, probe: usize, subject: usize) -> f64 {
        self.values.get(probe, subject)
    }

    pub fn subject_index(&self, subject: &SubjectId) -> Option<usize> {
        self.subject_ids.iter().position(|s| s == subject)
    }

    /// Same ids and orientation, new values. Used by normalization and fusion.
    pub(crate) fn with_values(&self, values: Matrix, normalized: bool) -> Self {
        debug_assert_eq!((values.rows(), values.cols()), (self.values.rows(), self.values.cols()));
        Self {
            probe_ids: self.probe_ids.clone(),
            subject_ids: self.subject_ids.clone(),
            values,
            orientation: self.orientation,
            normalized,
        }
    }

    /// True when both matrices share probe ids, subject ids (in order) and
    /// orientation.
    pub fn same_layout(&self, other: &ScoreMatrix) -> bool {
        self.probe_ids == other.probe_ids
            && self.subject_ids == other.subject_ids
            && self.orientation == other.orientation
    }
}

/// Builds a probe × subject matrix from labelled probe and gallery items.
///
/// Subject columns appear in first-enrollment order; a subject with several
/// gallery items scores the minimum distance over them.
pub fn pairwise_scores<T>(
    probes: &[(String, T)],
    gallery: &[(SubjectId, T)],
    mut distance: impl FnMut(&T, &T) -> Result<f64>,
) -> Result<ScoreMatrix> {
    if probes.is_empty() {
        return Err(Error::Empty("probe set"));
    }
    if gallery.is_empty() {
        return Err(Error::Empty("gallery"));
    }
    let mut subjects: Vec<SubjectId> = Vec::new();
    let mut column_of = Vec::with_capacity(gallery.len());
    for (s, _) in gallery {
        let col = match subjects.iter().position(|x| x == s) {
            Some(c) => c,
            None => {
                subjects.push(s.clone());
                subjects.len() - 1
            }
        };
        column_of.push(col);
    }
    let mut values = Matrix::zeros(probes.len(), subjects.len());
    values.as_mut_slice().fill(f64::INFINITY);
    for (p, (_, probe)) in probes.iter().enumerate() {
        for ((_, item), &col) in gallery.iter().zip(&column_of) {
            let d = distance(probe, item)?;
            if d < values.get(p, col) {
                values.set(p, col, d);
            }
        }
    }
    ScoreMatrix::new(
        probes.iter().map(|(id, _)| id.clone()).collect(),
        subjects,
        values,
        false,
    )
}
