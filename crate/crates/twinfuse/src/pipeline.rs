//! End-to-end run: split → features → raw score matrices → normalization
//! and fusion → CMC evaluation → report. Each stage also stands alone so
//! the CLI can rerun it from files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use twinfuse_core::audio::{FeatureSequence, MfccExtractor};
use twinfuse_core::datamodel::{apply_split, Modality, SampleRecord, SplitPlan, SubjectId, Violation};
use twinfuse_core::dtw::pairwise_dtw_scores;
use twinfuse_core::embeddings::{pairwise_vector_scores, pca_fit, pca_project, EmbeddingTable};
use twinfuse_core::eval::evaluate;
use twinfuse_core::fusion::{evaluate_plan, FusionPlan, NodeKind, NodeOutput, NormScope};
use twinfuse_core::fusion::{LEAF_DTW, LEAF_EMBEDDING, LEAF_HOG, LEAF_LSTM};
use twinfuse_core::hog::hog_descriptor;
use twinfuse_core::lstm::{lstm_scores, train_classifier, LstmModel};
use twinfuse_core::ScoreMatrix;

use crate::config::RunConfig;
use crate::error::{Error, Result, StageExt};
use crate::manifest::{load_manifest, Manifest};
use crate::pgm::load_image_gray;
use crate::report::{write_report, Report, ReportPaths, ReportRow};
use crate::tables::{
    load_embeddings, read_feature_dump, read_score_matrix, read_vector_table, write_feature_dump,
    write_score_matrix, write_vector_table,
};
use crate::wav::read_wav;

pub const SCORES_DIR: &str = "scores";
pub const FUSED_DIR: &str = "fused";
pub const FEATURES_DIR: &str = "features";
pub const TRUTH_FILE: &str = "truth.csv";
pub const MODEL_FILE: &str = "lstm_model.json";

/// Dataset after validation and the gallery/probe split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub manifest: Manifest,
    pub split: SplitPlan,
    pub modalities: Vec<Modality>,
    /// Subjects removed from every enabled modality.
    pub excluded: Vec<SubjectId>,
}

impl Prepared {
    fn samples(&self, m: Modality) -> impl Iterator<Item = &SampleRecord> {
        let s = self.split.modality(m);
        s.gallery.iter().chain(&s.probes)
    }

    /// Probe rows are labelled by subject: one probe per subject and modality.
    pub fn truth(&self) -> BTreeMap<String, SubjectId> {
        self.modalities
            .iter()
            .flat_map(|m| &self.split.modality(*m).probes)
            .map(|s| (s.subject.as_str().to_string(), s.subject.clone()))
            .collect()
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let path = cfg
        .manifest
        .as_deref()
        .ok_or_else(|| Error::Config("no manifest given".into()))?;
    let manifest = load_manifest(path).stage("load")?;
    let modalities = cfg.modality.enabled();

    let mut fatal = Vec::new();
    for v in manifest.validate() {
        match &v {
            Violation::MissingSample { modality, .. } if modalities.contains(modality) => {
                log::warn!("{v}");
            }
            Violation::MissingSample { .. } => {}
            Violation::MissingFile { sample_id, .. } => {
                let relevant = manifest
                    .dataset
                    .sample(sample_id)
                    .is_some_and(|s| modalities.contains(&s.modality()));
                if relevant {
                    fatal.push(v.to_string());
                }
            }
            Violation::DuplicateCapture { .. } => fatal.push(v.to_string()),
        }
    }
    if !fatal.is_empty() {
        let more = if fatal.len() > 5 {
            format!(" (and {} more)", fatal.len() - 5)
        } else {
            String::new()
        };
        fatal.truncate(5);
        return Err(Error::Dataset(fatal.join("; ") + &more)).stage("validate");
    }

    let mut split = apply_split(&manifest.dataset, cfg.exclusion).stage("split")?;
    let excluded: BTreeSet<SubjectId> = modalities
        .iter()
        .flat_map(|m| split.modality(*m).excluded.iter().cloned())
        .collect();
    if !excluded.is_empty() {
        log::warn!(
            "excluding {} subject(s) from every enabled modality: {}",
            excluded.len(),
            excluded.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    for m in &modalities {
        let part = split.modality_mut(*m);
        part.exclude(&excluded);
        if part.probes.is_empty() {
            return Err(Error::Dataset(format!("no {m} probes left after exclusions"))).stage("split");
        }
        log::info!(
            "{m}: {} gallery samples, {} probes",
            part.gallery.len(),
            part.probes.len()
        );
    }
    Ok(Prepared {
        manifest,
        split,
        modalities,
        excluded: excluded.into_iter().collect(),
    })
}

/// Per-sample features, keyed by sample id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Features {
    pub mfcc: BTreeMap<String, FeatureSequence>,
    pub hog: BTreeMap<String, Vec<f64>>,
}

pub fn extract_features(prep: &Prepared, cfg: &RunConfig) -> Result<Features> {
    let mut out = Features::default();
    if prep.modalities.contains(&Modality::Voice) {
        let mut extractors: BTreeMap<u32, MfccExtractor> = BTreeMap::new();
        for s in prep.samples(Modality::Voice) {
            let signal = read_wav(&prep.manifest.resolve(&s.path)).stage("extract:mfcc")?;
            let rate = signal.sample_rate();
            if !extractors.contains_key(&rate) {
                extractors.insert(rate, MfccExtractor::new(&cfg.mfcc, rate).stage("extract:mfcc")?);
            }
            let seq = extractors[&rate].extract(&signal).stage("extract:mfcc")?;
            out.mfcc.insert(s.sample_id.clone(), seq);
        }
        log::info!("extracted MFCC sequences for {} voice samples", out.mfcc.len());
    }
    if prep.modalities.contains(&Modality::Ear) {
        for s in prep.samples(Modality::Ear) {
            let img = load_image_gray(&prep.manifest.resolve(&s.path), cfg.hog.resize).stage("extract:hog")?;
            let d = hog_descriptor(&img, &cfg.hog).stage("extract:hog")?;
            out.hog.insert(s.sample_id.clone(), d);
        }
        log::info!("extracted HOG descriptors for {} ear images", out.hog.len());
    }
    Ok(out)
}

/// Writes `voice/<sample_id>.csv` MFCC dumps and a `hog.csv` descriptor table.
pub fn write_features(dir: &Path, f: &Features) -> Result<()> {
    for (id, seq) in &f.mfcc {
        write_feature_dump(&dir.join("voice").join(format!("{id}.csv")), seq.frames())?;
    }
    if !f.hog.is_empty() {
        let rows: Vec<(String, Vec<f64>)> = f.hog.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        write_vector_table(&dir.join("hog.csv"), &rows)?;
    }
    Ok(())
}

pub fn read_features(dir: &Path, prep: &Prepared) -> Result<Features> {
    let mut out = Features::default();
    if prep.modalities.contains(&Modality::Voice) {
        for s in prep.samples(Modality::Voice) {
            let frames = read_feature_dump(&dir.join("voice").join(format!("{}.csv", s.sample_id)))?;
            out.mfcc.insert(s.sample_id.clone(), FeatureSequence::from_frames(frames)?);
        }
    }
    if prep.modalities.contains(&Modality::Ear) {
        out.hog = read_vector_table(&dir.join("hog.csv"))?.into_iter().collect();
    }
    Ok(out)
}

/// Raw (unnormalized) leaf matrices plus the probe truth labels.
#[derive(Debug, Clone)]
pub struct Scores {
    pub leaves: BTreeMap<String, ScoreMatrix>,
    pub truth: BTreeMap<String, SubjectId>,
    /// Scorers skipped because their inputs were unavailable.
    pub pruned: Vec<String>,
    pub lstm_model: Option<LstmModel>,
}

fn lookup<'a, T>(map: &'a BTreeMap<String, T>, id: &str, stage: &'static str) -> Result<&'a T> {
    map.get(id)
        .ok_or_else(|| Error::Invariant(format!("no features for sample `{id}`")))
        .stage(stage)
}

fn labelled<'a, T>(
    samples: &[SampleRecord],
    map: &'a BTreeMap<String, T>,
    stage: &'static str,
) -> Result<Vec<(SubjectId, &'a T)>> {
    samples
        .iter()
        .map(|s| Ok((s.subject.clone(), lookup(map, &s.sample_id, stage)?)))
        .collect()
}

fn as_probes<T>(v: Vec<(SubjectId, T)>) -> Vec<(String, T)> {
    v.into_iter().map(|(s, x)| (s.as_str().to_string(), x)).collect()
}

fn slices<'a>(v: &[(SubjectId, &'a Vec<f64>)]) -> Vec<(SubjectId, &'a [f64])> {
    v.iter().map(|(s, x)| (s.clone(), x.as_slice())).collect()
}

/// Embedding scorer input, or the reason it is unavailable.
fn embedding_table(cfg: &RunConfig, ear_samples: &[&SampleRecord]) -> Result<std::result::Result<EmbeddingTable, String>> {
    let Some(path) = cfg.embeddings.as_deref() else {
        return Ok(Err("no embedding table configured".into()));
    };
    if !path.is_file() {
        return Ok(Err(format!("embedding table {} not found", path.display())));
    }
    let table = load_embeddings(path).stage("load:embeddings")?;
    if let Some(s) = ear_samples.iter().find(|s| table.get(&s.sample_id).is_none()) {
        return Ok(Err(format!("embedding table has no row for `{}`", s.sample_id)));
    }
    Ok(Ok(table))
}

pub fn compute_scores(prep: &Prepared, f: &Features, cfg: &RunConfig) -> Result<Scores> {
    let mut leaves = BTreeMap::new();
    let mut pruned = Vec::new();
    let mut lstm_model = None;

    if prep.modalities.contains(&Modality::Voice) {
        let split = &prep.split.voice;
        let gallery = labelled(&split.gallery, &f.mfcc, "score:dtw")?;
        let probes = as_probes(labelled(&split.probes, &f.mfcc, "score:dtw")?);
        let dtw = pairwise_dtw_scores(&probes, &gallery, cfg.dtw).stage("score:dtw")?;
        log::info!("dtw: {}x{} scores", dtw.n_probes(), dtw.n_subjects());
        leaves.insert(LEAF_DTW.to_string(), dtw);

        let trained = train_classifier(&gallery, &cfg.lstm).stage("score:lstm")?;
        log::info!(
            "lstm: loss {:.4} -> {:.4} over {} epochs",
            trained.loss_trace[0],
            trained.loss_trace[trained.loss_trace.len() - 1],
            cfg.lstm.epochs
        );
        leaves.insert(
            LEAF_LSTM.to_string(),
            lstm_scores(&probes, &trained.model).stage("score:lstm")?,
        );
        lstm_model = Some(trained.model);
    }

    if prep.modalities.contains(&Modality::Ear) {
        let split = &prep.split.ear;
        let gallery = labelled(&split.gallery, &f.hog, "score:hog")?;
        let probes = as_probes(labelled(&split.probes, &f.hog, "score:hog")?);
        let g = slices(&gallery);
        let p: Vec<(String, &[f64])> = probes.iter().map(|(s, x)| (s.clone(), x.as_slice())).collect();
        let hog = pairwise_vector_scores(&p, &g, cfg.metric).stage("score:hog")?;
        log::info!("hog: {}x{} scores", hog.n_probes(), hog.n_subjects());
        leaves.insert(LEAF_HOG.to_string(), hog);

        let ear_samples: Vec<&SampleRecord> = split.gallery.iter().chain(&split.probes).collect();
        match embedding_table(cfg, &ear_samples)? {
            Ok(table) => {
                let vec_of = |s: &SampleRecord| table.get(&s.sample_id).expect("checked above");
                let gallery_vecs: Vec<&[f64]> = split.gallery.iter().map(vec_of).collect();
                let model = pca_fit(&gallery_vecs, cfg.pca).stage("score:embedding")?;
                log::info!("pca: {} -> {} dimensions", model.dim(), model.k());
                let project = |samples: &[SampleRecord]| -> Result<Vec<(SubjectId, Vec<f64>)>> {
                    samples
                        .iter()
                        .map(|s| Ok((s.subject.clone(), pca_project(&model, vec_of(s))?)))
                        .collect()
                };
                let g = project(&split.gallery).stage("score:embedding")?;
                let p = project(&split.probes).stage("score:embedding")?;
                let g: Vec<(SubjectId, &[f64])> = g.iter().map(|(s, v)| (s.clone(), v.as_slice())).collect();
                let p: Vec<(String, &[f64])> = p.iter().map(|(s, v)| (s.as_str().to_string(), v.as_slice())).collect();
                let m = pairwise_vector_scores(&p, &g, cfg.metric).stage("score:embedding")?;
                leaves.insert(LEAF_EMBEDDING.to_string(), m);
            }
            Err(reason) if cfg.strict => {
                return Err(Error::Config(reason)).stage("score:embedding");
            }
            Err(reason) => {
                log::warn!("{reason}; dropping the {LEAF_EMBEDDING} scorer");
                pruned.push(LEAF_EMBEDDING.to_string());
            }
        }
    }

    Ok(Scores {
        leaves,
        truth: prep.truth(),
        pruned,
        lstm_model,
    })
}

pub fn write_truth(path: &Path, truth: &BTreeMap<String, SubjectId>) -> Result<()> {
    let mut out = String::from("probe,subject\n");
    for (p, s) in truth {
        out.push_str(&format!("{p},{s}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<BTreeMap<String, SubjectId>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (p, s) = line
            .split_once(',')
            .ok_or_else(|| Error::table(path, i + 1, "expected `probe,subject`"))?;
        let subject = SubjectId::new(s.trim()).map_err(|e| Error::table(path, i + 1, e.to_string()))?;
        out.insert(p.trim().to_string(), subject);
    }
    Ok(out)
}

/// Writes raw leaf matrices, truth labels and the trained LSTM model.
pub fn write_scores(dir: &Path, s: &Scores) -> Result<()> {
    for (name, m) in &s.leaves {
        write_score_matrix(&dir.join(format!("{name}.csv")), m)?;
    }
    write_truth(&dir.join(TRUTH_FILE), &s.truth)?;
    if let Some(model) = &s.lstm_model {
        let path = dir.join(MODEL_FILE);
        let json = serde_json::to_string(model).expect("model serializes") + "\n";
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads every leaf matrix of the plan that exists in `dir`.
pub fn read_scores(dir: &Path, plan: &FusionPlan) -> Result<BTreeMap<String, ScoreMatrix>> {
    let mut out = BTreeMap::new();
    for leaf in plan.leaves() {
        let path = dir.join(format!("{leaf}.csv"));
        if path.is_file() {
            out.insert(leaf.to_string(), read_score_matrix(&path)?);
        }
    }
    Ok(out)
}

pub fn load_lstm_model(path: &Path) -> Result<LstmModel> {
    crate::config::load_json(path)
}

/// Plan restricted to the available leaves, with the names of dropped leaves.
pub fn effective_plan(plan: &FusionPlan, leaves: &BTreeMap<String, ScoreMatrix>) -> Result<(FusionPlan, Vec<String>)> {
    plan.validate()?;
    let dropped: Vec<String> = plan
        .leaves()
        .into_iter()
        .filter(|l| !leaves.contains_key(*l))
        .map(String::from)
        .collect();
    let pruned = plan
        .prune(|l| leaves.contains_key(l))
        .ok_or_else(|| Error::Config("none of the fusion plan's scorers is available".into()))?;
    pruned.validate().map_err(|e| Error::Invariant(format!("pruned plan is invalid: {e}")))?;
    Ok((pruned, dropped))
}

/// Normalizes and fuses; every node output must come out normalized.
pub fn fuse(plan: &FusionPlan, leaves: &BTreeMap<String, ScoreMatrix>, scope: NormScope) -> Result<Vec<NodeOutput>> {
    let nodes = evaluate_plan(plan, leaves, scope).stage("fuse")?;
    if let Some(n) = nodes.iter().find(|n| !n.matrix.is_normalized()) {
        return Err(Error::Invariant(format!("node `{}` produced unnormalized scores", n.name)));
    }
    Ok(nodes)
}

/// CMC rows for every plan node, then for leaves the plan does not use.
pub fn evaluate_nodes(
    nodes: &[NodeOutput],
    extra_leaves: &BTreeMap<String, ScoreMatrix>,
    truth: &BTreeMap<String, SubjectId>,
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let mut push = |name: &str, kind, weight, m: &ScoreMatrix| -> Result<()> {
        let row = ReportRow::new(name, kind, weight, evaluate(m, truth).stage("evaluate")?);
        let s = &row.summary;
        if !(s.rank1 <= s.rank2 && s.rank2 <= s.rank5 && s.auc >= s.rank1 && s.auc <= 1.0) {
            return Err(Error::Invariant(format!("CMC summary of `{name}` is not monotone")));
        }
        rows.push(row);
        Ok(())
    };
    for n in nodes {
        push(&n.name, n.kind, n.weight, &n.matrix)?;
    }
    for (name, m) in extra_leaves {
        if !nodes.iter().any(|n| &n.name == name) {
            push(name, NodeKind::Leaf, None, m)?;
        }
    }
    Ok(rows)
}

/// Fused matrices of every fusion node, one CSV each.
pub fn write_fused(dir: &Path, nodes: &[NodeOutput]) -> Result<()> {
    for n in nodes.iter().filter(|n| n.kind == NodeKind::Fusion) {
        write_score_matrix(&dir.join(format!("{}.csv", n.name)), &n.matrix)?;
    }
    Ok(())
}

/// Replaces the fusion node matrices with the ones stored in `dir`.
pub fn read_fused(dir: &Path, nodes: &mut [NodeOutput]) -> Result<()> {
    for n in nodes.iter_mut().filter(|n| n.kind == NodeKind::Fusion) {
        let m = read_score_matrix(&dir.join(format!("{}.csv", n.name)))?;
        if !m.is_normalized() || !m.same_layout(&n.matrix) {
            return Err(Error::Invariant(format!("stored fusion node `{}` does not match the plan", n.name)));
        }
        n.matrix = m;
    }
    Ok(())
}

/// Restricts the plan to the available leaves, then normalizes and fuses.
/// Also returns the plan leaves that were dropped.
pub fn fuse_scores(cfg: &RunConfig, leaves: &BTreeMap<String, ScoreMatrix>) -> Result<(Vec<NodeOutput>, Vec<String>)> {
    let (plan, dropped) = effective_plan(&cfg.fusion, leaves).stage("fuse")?;
    if !dropped.is_empty() {
        log::info!("fusion plan pruned to the available scorers; dropped {}", dropped.join(", "));
    }
    Ok((fuse(&plan, leaves, cfg.norm_scope)?, dropped))
}

pub fn build_report(
    cfg: &RunConfig,
    prep: &Prepared,
    dropped: Vec<String>,
    nodes: &[NodeOutput],
    leaves: &BTreeMap<String, ScoreMatrix>,
    truth: &BTreeMap<String, SubjectId>,
) -> Result<Report> {
    let rows = evaluate_nodes(nodes, leaves, truth)?;
    let first = &nodes[0].matrix;
    Ok(Report {
        seed: Some(cfg.seed()),
        n_probes: first.n_probes(),
        n_subjects: first.n_subjects(),
        excluded_subjects: prep.excluded.iter().map(|s| s.as_str().to_string()).collect(),
        pruned_scorers: dropped,
        rows,
        config: serde_json::to_value(cfg).expect("config serializes"),
    })
}

pub fn log_report(report: &Report) {
    for r in &report.rows {
        log::info!(
            "{:<14} rank-1 {:.4}  rank-2 {:.4}  rank-5 {:.4}  auc {:.4}",
            r.name,
            r.summary.rank1,
            r.summary.rank2,
            r.summary.rank5,
            r.summary.auc
        );
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub paths: ReportPaths,
    pub out_dir: PathBuf,
}

/// Runs every stage and writes intermediate artifacts and the report to
/// `out_dir`.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let features = extract_features(&prep, cfg)?;
    let scores = compute_scores(&prep, &features, cfg)?;
    write_scores(&out_dir.join(SCORES_DIR), &scores)?;

    let (nodes, dropped) = fuse_scores(cfg, &scores.leaves)?;
    write_fused(&out_dir.join(FUSED_DIR), &nodes)?;
    let report = build_report(cfg, &prep, dropped, &nodes, &scores.leaves, &scores.truth)?;
    let paths = write_report(&report, out_dir).stage("report")?;
    log_report(&report);
    Ok(RunOutput {
        report,
        paths,
        out_dir: out_dir.to_path_buf(),
    })
}
