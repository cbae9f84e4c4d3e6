//! Externally computed ear embeddings, PCA reduction and vector matching.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datamodel::SubjectId;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::matrix::Matrix;
use crate::score::{pairwise_scores, ScoreMatrix};

/// Embedding vectors keyed by sample id, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: BTreeMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = rows.first().map_or(0, |(_, v)| v.len());
        let mut table = Self {
            dim,
            ids: Vec::with_capacity(rows.len()),
            vectors: Vec::with_capacity(rows.len()),
            index: BTreeMap::new(),
        };
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("embedding"));
            }
            if table.index.insert(id.clone(), table.ids.len()).is_some() {
                return Err(Error::DuplicateId(id));
            }
            table.ids.push(id);
            table.vectors.push(v);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&[f64]> {
        self.index.get(sample_id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| (id.as_str(), v.as_slice()))
    }
}

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaDim {
    Fixed(usize),
    /// Smallest k whose eigenvalues reach this fraction of the total variance.
    Variance(f64),
}

impl Default for PcaDim {
    fn default() -> Self {
        PcaDim::Variance(0.95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k × dim, orthonormal rows.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }
}

fn centered(vectors: &[&[f64]]) -> Result<(Vec<f64>, Matrix)> {
    let n = vectors.len();
    let dim = vectors.first().map_or(0, |v| v.len());
    if dim == 0 {
        return Err(Error::Empty("pca input vectors"));
    }
    let mut mean = alloc::vec![0.0; dim];
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut x = Matrix::zeros(n, dim);
    for (r, v) in vectors.iter().enumerate() {
        for (c, (val, m)) in v.iter().zip(&mean).enumerate() {
            x.set(r, c, val - m);
        }
    }
    Ok((mean, x))
}

/// Eigenpairs of the sample covariance (n − 1 denominator), sorted.
fn covariance_eigen(x: &Matrix) -> (Vec<f64>, Matrix) {
    let (n, dim) = (x.rows(), x.cols());
    let mut cov = Matrix::zeros(dim, dim);
    for row in x.iter_rows() {
        for i in 0..dim {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let cov_row = cov.row_mut(i);
            for j in i..dim {
                cov_row[j] += ri * row[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    symmetric_eigen(&cov)
}

/// Eigenpairs of the n × n Gram matrix of the centered samples; its
/// non-zero spectrum equals the covariance spectrum.
fn gram_eigen(x: &Matrix) -> (Vec<f64>, Matrix) {
    let n = x.rows();
    let denom = (n - 1) as f64;
    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum::<f64>() / denom;
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    symmetric_eigen(&gram)
}

/// Maps the top-k Gram eigenvectors back to sample space. `None` when a
/// requested eigenvalue vanishes and its component is not recoverable.
fn gram_components(x: &Matrix, vals: &[f64], vecs: &Matrix, k: usize) -> Option<Matrix> {
    let denom = (x.rows() - 1) as f64;
    let trace: f64 = vals.iter().map(|l| l.max(0.0)).sum();
    if vals.iter().take(k).any(|&l| !(l > 1e-12 * trace)) {
        return None;
    }
    let mut comps = Matrix::zeros(k, x.cols());
    for c in 0..k {
        let scale = 1.0 / libm::sqrt(denom * vals[c]);
        let row = comps.row_mut(c);
        for (s, u) in vecs.row(c).iter().enumerate() {
            for (r, xv) in row.iter_mut().zip(x.row(s)) {
                *r += u * xv;
            }
        }
        for r in row.iter_mut() {
            *r *= scale;
        }
    }
    Some(comps)
}

/// Flips each component so that its largest-magnitude coordinate is positive
/// (first such coordinate on ties).
fn fix_signs(components: &mut Matrix) {
    for r in 0..components.rows() {
        let row = components.row_mut(r);
        let mut best = 0usize;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = i;
            }
        }
        if row[best] < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
    }
}

/// Resolves the retained dimension for `n` samples of dimension `dim` given
/// the full eigenvalue spectrum.
fn resolve_k(k: PcaDim, n: usize, dim: usize, spectrum: &[f64]) -> Result<usize> {
    let max = (n - 1).min(dim);
    match k {
        PcaDim::Fixed(k) => {
            if k == 0 || k > max {
                Err(Error::KOutOfRange { k, max })
            } else {
                Ok(k)
            }
        }
        PcaDim::Variance(frac) => {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "variance fraction {frac} outside (0, 1]"
                )));
            }
            let total: f64 = spectrum.iter().map(|l| l.max(0.0)).sum();
            if total <= 0.0 {
                return Ok(1);
            }
            let mut acc = 0.0;
            for (i, l) in spectrum.iter().enumerate() {
                acc += l.max(0.0);
                if acc >= frac * total {
                    return Ok((i + 1).min(max));
                }
            }
            Ok(max)
        }
    }
}

/// Fits PCA on gallery vectors.
pub fn pca_fit(vectors: &[&[f64]], k: PcaDim) -> Result<PcaModel> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::InvalidConfig("pca needs at least two vectors".into()));
    }
    let (mean, x) = centered(vectors)?;
    let dim = x.cols();
    if let PcaDim::Fixed(k) = k {
        resolve_k(PcaDim::Fixed(k), n, dim, &[])?;
    }

    if dim > n {
        let (vals, vecs) = gram_eigen(&x);
        let kk = resolve_k(k, n, dim, &vals)?;
        if let Some(mut comps) = gram_components(&x, &vals, &vecs, kk) {
            fix_signs(&mut comps);
            return Ok(PcaModel {
                mean,
                components: comps,
                eigenvalues: vals[..kk].to_vec(),
            });
        }
    }

    let (vals, vecs) = covariance_eigen(&x);
    let kk = resolve_k(k, n, dim, &vals)?;
    let mut comps = Matrix::zeros(kk, dim);
    for r in 0..kk {
        comps.row_mut(r).copy_from_slice(vecs.row(r));
    }
    fix_signs(&mut comps);
    Ok(PcaModel {
        mean,
        components: comps,
        eigenvalues: vals[..kk].to_vec(),
    })
}

pub fn pca_project(m: &PcaModel, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: v.len(),
        });
    }
    Ok(m
        .components
        .iter_rows()
        .map(|c| c.iter().zip(v).zip(&m.mean).map(|((ci, vi), mi)| ci * (vi - mi)).sum())
        .collect())
}

/// `mean + componentsᵀ · proj`.
pub fn pca_reconstruct(m: &PcaModel, proj: &[f64]) -> Result<Vec<f64>> {
    if proj.len() != m.k() {
        return Err(Error::DimensionMismatch {
            expected: m.k(),
            found: proj.len(),
        });
    }
    let mut out = m.mean.clone();
    for (c, p) in m.components.iter_rows().zip(proj) {
        for (o, ci) in out.iter_mut().zip(c) {
            *o += ci * p;
        }
    }
    Ok(out)
}

pub fn manhattan_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    crate::dtw::local_distance(a, b)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Manhattan,
    Euclidean,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Metric::Manhattan => manhattan_distance(a, b),
            Metric::Euclidean => euclidean_distance(a, b),
        }
    }
}

/// Vector score matrix; a subject's cell is the minimum over its gallery vectors.
pub fn pairwise_vector_scores(
    probes: &[(String, &[f64])],
    gallery: &[(SubjectId, &[f64])],
    metric: Metric,
) -> Result<ScoreMatrix> {
    pairwise_scores(probes, gallery, |p, g| metric.distance(p, g))
}
