//! tanh score normalization and hierarchical weighted score-level fusion.
//!
//! Each leaf score matrix is mapped through
//! `s' = 0.5 · (tanh(0.01 · (s − μ) / σ) + 1)` and fusion nodes take convex
//! combinations of their (already normalized) children, bottom-up.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datamodel::SubjectId;
use crate::error::{Error, Result};
use crate::eval::{cmc_auc, evaluate};
use crate::matrix::Matrix;
use crate::score::ScoreMatrix;

pub const TANH_SCALE: f64 = 0.01;
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Which entries the normalization statistics are computed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScope {
    #[default]
    Matrix,
    Row,
}

/// Location and population standard deviation used by the tanh map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhParams {
    pub mean: f64,
    pub std: f64,
}

impl TanhParams {
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: libm::sqrt(var),
        }
    }

    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        if self.std == 0.0 {
            return 0.5;
        }
        0.5 * (libm::tanh(TANH_SCALE * (s - self.mean) / self.std) + 1.0)
    }
}

pub fn tanh_normalize(m: &ScoreMatrix) -> Result<ScoreMatrix> {
    tanh_normalize_with(m, NormScope::Matrix)
}

pub fn tanh_normalize_with(m: &ScoreMatrix, scope: NormScope) -> Result<ScoreMatrix> {
    if m.is_normalized() {
        return Err(Error::AlreadyNormalized);
    }
    let src = m.values();
    let mut out = Matrix::zeros(src.rows(), src.cols());
    match scope {
        NormScope::Matrix => {
            let params = TanhParams::fit(src.as_slice());
            for (o, s) in out.as_mut_slice().iter_mut().zip(src.as_slice()) {
                *o = params.apply(*s);
            }
        }
        NormScope::Row => {
            for r in 0..src.rows() {
                let params = TanhParams::fit(src.row(r));
                for (o, s) in out.row_mut(r).iter_mut().zip(src.row(r)) {
                    *o = params.apply(*s);
                }
            }
        }
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("normalized scores"));
    }
    Ok(m.with_values(out, true))
}

pub fn validate_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Empty("weights"));
    }
    if let Some(&bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidWeight(bad));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::WeightSum(sum));
    }
    Ok(())
}

/// Elementwise `Σ wᵢ · mᵢ` over normalized matrices sharing one layout.
pub fn weighted_fuse(ms: &[&ScoreMatrix], w: &[f64]) -> Result<ScoreMatrix> {
    if ms.is_empty() {
        return Err(Error::Empty("score matrices"));
    }
    if ms.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: ms.len(),
            found: w.len(),
        });
    }
    validate_weights(w)?;
    let first = ms[0];
    for m in ms {
        if !m.is_normalized() {
            return Err(Error::NotNormalized);
        }
        if m.probe_ids() != first.probe_ids() {
            return Err(Error::ScoreMismatch("probe ids"));
        }
        if m.subject_ids() != first.subject_ids() {
            return Err(Error::ScoreMismatch("subject ids"));
        }
        if m.orientation() != first.orientation() {
            return Err(Error::ScoreMismatch("orientation"));
        }
    }
    let mut out = Matrix::zeros(first.n_probes(), first.n_subjects());
    for (m, &wi) in ms.iter().zip(w) {
        for (o, v) in out.as_mut_slice().iter_mut().zip(m.values().as_slice()) {
            *o += wi * v;
        }
    }
    // a convex combination can overshoot [0, 1] by an ulp
    for o in out.as_mut_slice() {
        *o = o.clamp(0.0, 1.0);
    }
    Ok(first.with_values(out, true))
}

/// A node of the fusion tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionNode {
    /// A raw scorer output, looked up by id.
    Leaf(String),
    Fuse { name: String, inputs: Vec<WeightedInput> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedInput {
    pub weight: f64,
    pub node: FusionNode,
}

impl FusionNode {
    pub fn name(&self) -> &str {
        match self {
            FusionNode::Leaf(id) => id,
            FusionNode::Fuse { name, .. } => name,
        }
    }

    fn fuse(name: &str, inputs: &[(f64, FusionNode)]) -> Self {
        FusionNode::Fuse {
            name: name.into(),
            inputs: inputs
                .iter()
                .cloned()
                .map(|(weight, node)| WeightedInput { weight, node })
                .collect(),
        }
    }
}

pub const LEAF_HOG: &str = "hog";
pub const LEAF_EMBEDDING: &str = "densenet_pca";
pub const LEAF_DTW: &str = "dtw";
pub const LEAF_LSTM: &str = "lstm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub root: FusionNode,
}

impl Default for FusionPlan {
    /// Ear scorers fused into `fusion-1`, voice scorers into `fusion-2`,
    /// then both modalities into `fusion-3`.
    fn default() -> Self {
        let ear = FusionNode::fuse(
            "fusion-1",
            &[
                (0.21, FusionNode::Leaf(LEAF_HOG.into())),
                (0.79, FusionNode::Leaf(LEAF_EMBEDDING.into())),
            ],
        );
        let voice = FusionNode::fuse(
            "fusion-2",
            &[
                (0.98, FusionNode::Leaf(LEAF_DTW.into())),
                (0.02, FusionNode::Leaf(LEAF_LSTM.into())),
            ],
        );
        FusionPlan {
            root: FusionNode::fuse("fusion-3", &[(0.14, ear), (0.86, voice)]),
        }
    }
}

impl FusionPlan {
    pub fn leaf(id: &str) -> Self {
        FusionPlan {
            root: FusionNode::Leaf(id.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn walk<'a>(node: &'a FusionNode, names: &mut BTreeSet<&'a str>) -> Result<()> {
            if !names.insert(node.name()) {
                return Err(Error::InvalidPlan(alloc::format!(
                    "node name `{}` used twice",
                    node.name()
                )));
            }
            if let FusionNode::Fuse { inputs, name } = node {
                if inputs.is_empty() {
                    return Err(Error::InvalidPlan(alloc::format!("node `{name}` has no inputs")));
                }
                let w: Vec<f64> = inputs.iter().map(|i| i.weight).collect();
                validate_weights(&w)?;
                for i in inputs {
                    walk(&i.node, names)?;
                }
            }
            Ok(())
        }
        walk(&self.root, &mut BTreeSet::new())
    }

    pub fn leaves(&self) -> Vec<&str> {
        fn walk<'a>(node: &'a FusionNode, out: &mut Vec<&'a str>) {
            match node {
                FusionNode::Leaf(id) => out.push(id),
                FusionNode::Fuse { inputs, .. } => inputs.iter().for_each(|i| walk(&i.node, out)),
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Drops leaves for which `keep` is false. Surviving sibling weights are
    /// rescaled to sum to one; a fusion node left with a single input is
    /// replaced by that input. `None` when no leaf survives.
    pub fn prune(&self, keep: impl Fn(&str) -> bool) -> Option<FusionPlan> {
        fn walk(node: &FusionNode, keep: &dyn Fn(&str) -> bool) -> Option<FusionNode> {
            match node {
                FusionNode::Leaf(id) => keep(id).then(|| node.clone()),
                FusionNode::Fuse { name, inputs } => {
                    let mut kept: Vec<WeightedInput> = inputs
                        .iter()
                        .filter_map(|i| {
                            walk(&i.node, keep).map(|node| WeightedInput {
                                weight: i.weight,
                                node,
                            })
                        })
                        .collect();
                    match kept.len() {
                        0 => None,
                        1 => kept.pop().map(|i| i.node),
                        n => {
                            let sum: f64 = kept.iter().map(|i| i.weight).sum();
                            for i in &mut kept {
                                i.weight = if sum > 0.0 { i.weight / sum } else { 1.0 / n as f64 };
                            }
                            Some(FusionNode::Fuse {
                                name: name.clone(),
                                inputs: kept,
                            })
                        }
                    }
                }
            }
        }
        walk(&self.root, &keep).map(|root| FusionPlan { root })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Leaf,
    Fusion,
}

/// The normalized matrix produced at one node of the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutput {
    pub name: String,
    pub kind: NodeKind,
    /// Weight of this node inside its parent; `None` at the root.
    pub weight: Option<f64>,
    pub matrix: ScoreMatrix,
}

/// Normalizes every leaf and fuses bottom-up. Outputs come in post-order,
/// root last.
pub fn evaluate_plan(
    plan: &FusionPlan,
    leaves: &BTreeMap<String, ScoreMatrix>,
    scope: NormScope,
) -> Result<Vec<NodeOutput>> {
    plan.validate()?;
    fn walk(
        node: &FusionNode,
        weight: Option<f64>,
        leaves: &BTreeMap<String, ScoreMatrix>,
        scope: NormScope,
        out: &mut Vec<NodeOutput>,
    ) -> Result<usize> {
        let matrix = match node {
            FusionNode::Leaf(id) => {
                let raw = leaves.get(id).ok_or_else(|| Error::UnresolvedLeaf(id.clone()))?;
                tanh_normalize_with(raw, scope)?
            }
            FusionNode::Fuse { inputs, .. } => {
                let mut idx = Vec::with_capacity(inputs.len());
                for i in inputs {
                    idx.push(walk(&i.node, Some(i.weight), leaves, scope, out)?);
                }
                let children: Vec<&ScoreMatrix> = idx.iter().map(|&k| &out[k].matrix).collect();
                let w: Vec<f64> = inputs.iter().map(|i| i.weight).collect();
                weighted_fuse(&children, &w)?
            }
        };
        out.push(NodeOutput {
            name: node.name().into(),
            kind: match node {
                FusionNode::Leaf(_) => NodeKind::Leaf,
                FusionNode::Fuse { .. } => NodeKind::Fusion,
            },
            weight,
            matrix,
        });
        Ok(out.len() - 1)
    }
    let mut out = Vec::new();
    walk(&plan.root, None, leaves, scope, &mut out)?;
    Ok(out)
}

pub fn run_fusion_plan(plan: &FusionPlan, leaves: &BTreeMap<String, ScoreMatrix>) -> Result<ScoreMatrix> {
    let mut nodes = evaluate_plan(plan, leaves, NormScope::Matrix)?;
    Ok(nodes.pop().expect("plan has a root").matrix)
}

/// Exhaustive search of the weight `w` in `w·a + (1 − w)·b` over a grid of
/// the given step, maximizing rank-1 rate then AUC on labelled probes.
/// Both matrices must already be normalized. Ties keep the smallest `w`.
pub fn search_pair_weight(
    a: &ScoreMatrix,
    b: &ScoreMatrix,
    truth: &BTreeMap<String, SubjectId>,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig("grid step must lie in (0, 1]".into()));
    }
    let n = libm::round(1.0 / step) as usize;
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0);
    for i in 0..=n {
        let w = (i as f64 / n as f64).min(1.0);
        let fused = weighted_fuse(&[a, b], &[w, 1.0 - w])?;
        let cmc = evaluate(&fused, truth)?;
        let key = (cmc.rates[0], cmc_auc(&cmc));
        if key.0 > best.0 || (key.0 == best.0 && key.1 > best.1) {
            best = (key.0, key.1, w);
        }
    }
    Ok(best.2)
}
