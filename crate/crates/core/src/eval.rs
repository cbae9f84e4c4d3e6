//! Closed-set identification metrics: per-probe ranks, CMC, rank-k and AUC.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datamodel::SubjectId;
use crate::error::{Error, Result};
use crate::score::ScoreMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankResult {
    pub probe_id: String,
    pub truth: SubjectId,
    pub rank: usize,
    /// Other subjects scoring exactly the true subject's score.
    pub tie_count: usize,
}

/// Rank of the true subject in every probe row, lower scores first.
///
/// Ties are pessimistic: every other subject scoring equal to the true one
/// is placed ahead of it.
pub fn probe_ranks(m: &ScoreMatrix, truth: &BTreeMap<String, SubjectId>) -> Result<Vec<RankResult>> {
    let mut out = Vec::with_capacity(m.n_probes());
    for (p, probe_id) in m.probe_ids().iter().enumerate() {
        let subject = truth
            .get(probe_id)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("no truth label for probe `{probe_id}`")))?;
        let col = m
            .subject_index(subject)
            .ok_or_else(|| Error::UnknownSubject(subject.as_str().into()))?;
        let row = m.values().row(p);
        let target = row[col];
        let mut better = 0;
        let mut ties = 0;
        for (c, &v) in row.iter().enumerate() {
            if c == col {
                continue;
            }
            if v < target {
                better += 1;
            } else if v == target {
                ties += 1;
            }
        }
        out.push(RankResult {
            probe_id: probe_id.clone(),
            truth: subject.clone(),
            rank: 1 + better + ties,
            tie_count: ties,
        });
    }
    Ok(out)
}

/// Cumulative match characteristic: `rates[k - 1]` is the fraction of
/// probes ranked at or above `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    pub rates: Vec<f64>,
}

impl CmcCurve {
    pub fn n_subjects(&self) -> usize {
        self.rates.len()
    }

    /// Rank-k rate; ranks past the gallery size clamp to the last rank and
    /// report `true`.
    pub fn rank(&self, k: usize) -> (f64, bool) {
        let k = k.max(1);
        if k > self.rates.len() {
            (*self.rates.last().unwrap_or(&1.0), true)
        } else {
            (self.rates[k - 1], false)
        }
    }
}

pub fn cmc_curve(ranks: &[RankResult], n_subjects: usize) -> Result<CmcCurve> {
    cmc_from_ranks(&ranks.iter().map(|r| r.rank).collect::<Vec<_>>(), n_subjects)
}

pub fn cmc_from_ranks(ranks: &[usize], n_subjects: usize) -> Result<CmcCurve> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    if let Some(&bad) = ranks.iter().find(|&&r| r == 0 || r > n_subjects) {
        return Err(Error::InvalidConfig(alloc::format!(
            "rank {bad} outside 1..={n_subjects}"
        )));
    }
    let mut counts = alloc::vec![0usize; n_subjects];
    for &r in ranks {
        counts[r - 1] += 1;
    }
    let n = ranks.len() as f64;
    let mut acc = 0usize;
    let rates = counts
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect();
    Ok(CmcCurve { rates })
}

/// Normalized area under the CMC: the mean rate over ranks 1..N.
pub fn cmc_auc(c: &CmcCurve) -> f64 {
    if c.rates.is_empty() {
        return 1.0;
    }
    c.rates.iter().sum::<f64>() / c.rates.len() as f64
}

/// The rank-1/2/5 and AUC figures of one scorer or fusion node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcSummary {
    pub rank1: f64,
    pub rank2: f64,
    pub rank5: f64,
    pub auc: f64,
    /// Requested ranks that exceeded the gallery size and were clamped.
    pub clamped: Vec<usize>,
}

pub fn summarize(c: &CmcCurve) -> CmcSummary {
    let mut clamped = Vec::new();
    let mut at = |k: usize| {
        let (v, was_clamped) = c.rank(k);
        if was_clamped {
            clamped.push(k);
        }
        v
    };
    let (rank1, rank2, rank5) = (at(1), at(2), at(5));
    CmcSummary {
        rank1,
        rank2,
        rank5,
        auc: cmc_auc(c),
        clamped,
    }
}

/// Ranks and CMC of a score matrix in one go.
pub fn evaluate(m: &ScoreMatrix, truth: &BTreeMap<String, SubjectId>) -> Result<CmcCurve> {
    cmc_curve(&probe_ranks(m, truth)?, m.n_subjects())
}
