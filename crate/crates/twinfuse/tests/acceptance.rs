//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Criterion 9 runs twenty full pipelines and dominates the
//! runtime; its seeds are spread over the available cores.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twinfuse::config::{RunConfig, SynthConfig};
use twinfuse::pipeline::run_pipeline;
use twinfuse::report::Report;
use twinfuse::synth::generate_synthetic;
use twinfuse_core::audio::{FeatureSequence, MfccConfig, Signal, mfcc};
use twinfuse_core::datamodel::SubjectId;
use twinfuse_core::dtw::{dtw_distance, DtwOptions};
use twinfuse_core::embeddings::{pca_fit, pca_project, pca_reconstruct, PcaDim};
use twinfuse_core::eval::{cmc_curve, cmc_from_ranks, probe_ranks};
use twinfuse_core::fusion::{
    tanh_normalize, validate_weights, weighted_fuse, FusionNode, FusionPlan, NodeKind, TanhParams,
    WEIGHT_TOLERANCE,
};
use twinfuse_core::hog::{hog_descriptor, GrayImage, HogConfig};
use twinfuse_core::lstm::{gradient_check, ClassifierHead, LstmParams};
use twinfuse_core::{Matrix, ScoreMatrix};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn subjects(n: usize) -> Vec<SubjectId> {
    (0..n).map(|i| SubjectId::new(format!("s{i:02}")).unwrap()).collect()
}

fn random_scores(rows: usize, cols: usize, rng: &mut ChaCha8Rng, f: impl Fn(&mut ChaCha8Rng) -> f64) -> ScoreMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| f(rng)).collect();
    ScoreMatrix::new(
        (0..rows).map(|i| format!("p{i:02}")).collect(),
        subjects(cols),
        Matrix::from_vec(rows, cols, data).unwrap(),
        false,
    )
    .unwrap()
}

fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v < row[best] {
            best = i;
        }
    }
    best
}

/// Cheapest monotone warping path by enumerating every path explicitly.
fn all_paths_min(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, cost: f64, best: &mut f64) {
        let cost = cost + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(cost);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, cost, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, cost, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, cost, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

fn c1_dtw_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut seq = || -> Vec<f64> {
            let n = rng.random_range(1..=6);
            (0..n).map(|_| f64::from(rng.random_range(0..3u8))).collect()
        };
        let (a, b) = (seq(), seq());
        let got = dtw_distance(
            &FeatureSequence::from_scalars(&a).unwrap(),
            &FeatureSequence::from_scalars(&b).unwrap(),
            DtwOptions { normalize: false },
        )
        .unwrap();
        if got.distance.to_bits() != all_paths_min(&a, &b).to_bits() {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{} of 1000 cases bitwise equal", 1000 - mismatches))
}

fn c2_lstm_gradients() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = LstmParams::random(4, 3, 0.5, &mut rng);
        let mut head = ClassifierHead::zeros(subjects(3), 4);
        for v in head.w_out.as_mut_slice().iter_mut().chain(head.b_out.iter_mut()) {
            *v = rng.random_range(-0.5..0.5);
        }
        let data: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let seq = Matrix::from_vec(5, 3, data).unwrap();
        let label = rng.random_range(0..3);
        worst = worst.max(gradient_check(&p, &head, &seq, label, 1e-5));
    }
    check(worst < 1e-4, format!("max relative error {worst:.3e} over 20 configurations (limit 1e-4)"))
}

fn c3_tanh() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut range, mut mean_dev, mut argmin_changed): (usize, f64, usize) = (0, 0.0, 0);
    for _ in 0..1000 {
        let rows = rng.random_range(1..=8);
        let cols = rng.random_range(2..=8);
        let offset = rng.random_range(-100.0..100.0);
        let spread = 10f64.powf(rng.random_range(-2.0..3.0));
        let m = random_scores(rows, cols, &mut rng, |r| offset + spread * r.random_range(-1.0..1.0));
        let n = tanh_normalize(&m).unwrap();
        range += n.values().as_slice().iter().filter(|v| !(**v > 0.0 && **v < 1.0)).count();
        let vals = m.values().as_slice();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        mean_dev = mean_dev.max((TanhParams::fit(vals).apply(mean) - 0.5).abs());
        for r in 0..rows {
            if argmin(m.values().row(r)) != argmin(n.values().row(r)) {
                argmin_changed += 1;
            }
        }
    }
    check(
        range == 0 && mean_dev <= 1e-12 && argmin_changed == 0,
        format!(
            "{range} entries outside (0,1), mean maps to 0.5 within {mean_dev:.1e}, {argmin_changed} probe argmins moved"
        ),
    )
}

fn c4_cmc() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut problems = Vec::new();
    for case in 0..100 {
        // every other matrix uses coarse integer scores to force ties
        let m = if case % 2 == 0 {
            random_scores(10, 10, &mut rng, |r| r.random_range(0.0..1.0))
        } else {
            random_scores(10, 10, &mut rng, |r| f64::from(r.random_range(0..4u8)))
        };
        let ids = subjects(10);
        let truth: BTreeMap<String, SubjectId> = m
            .probe_ids()
            .iter()
            .map(|p| (p.clone(), ids[rng.random_range(0..10)].clone()))
            .collect();
        let ranks = probe_ranks(&m, &truth).unwrap();
        for (r, res) in ranks.iter().enumerate() {
            let t = m.subject_index(&truth[&res.probe_id]).unwrap();
            let mut row = m.values().row(r).to_vec();
            row.sort_by(f64::total_cmp);
            let oracle = row.iter().rposition(|v| *v == m.get(r, t)).unwrap() + 1;
            if res.rank != oracle {
                problems.push(format!("case {case} probe {r}: rank {} vs sort {oracle}", res.rank));
            }
        }
        let c = cmc_curve(&ranks, 10).unwrap();
        if c.rates.windows(2).any(|w| w[1] < w[0]) || *c.rates.last().unwrap() != 1.0 {
            problems.push(format!("case {case}: CMC not monotone or not ending at 1"));
        }
    }
    let example = cmc_from_ranks(&[1, 1, 2, 5], 5).unwrap().rates;
    if example != [0.5, 0.75, 0.75, 0.75, 1.0] {
        problems.push(format!("cmc of [1,1,2,5] over 5 = {example:?}"));
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "100 matrices match the sort oracle; [1,1,2,5] gives [0.5,0.75,0.75,0.75,1.0]".into()
        } else {
            problems.join("; ")
        },
    )
}

fn c5_hog() -> Verdict {
    let cfg = HogConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base: Vec<f64> = (0..64 * 128).map(|_| rng.random_range(0.0..0.6)).collect();
    let img = GrayImage::new(64, 128, base.clone()).unwrap();
    let d = hog_descriptor(&img, &cfg).unwrap();
    let flat = hog_descriptor(&GrayImage::new(64, 128, vec![0.4; 64 * 128]).unwrap(), &cfg).unwrap();
    let shifted = GrayImage::new(64, 128, base.iter().map(|v| v + 0.3).collect()).unwrap();
    let ds = hog_descriptor(&shifted, &cfg).unwrap();
    let shift_err = d.iter().zip(&ds).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let zero = flat.iter().all(|v| *v == 0.0);
    check(
        d.len() == 3780 && zero && shift_err <= 1e-12,
        format!(
            "length {}, constant image zero: {zero}, shift difference {shift_err:.1e}",
            d.len()
        ),
    )
}

fn c6_mfcc() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<f64> = (0..16_000)
        .map(|i| 0.3 * (i as f64 * 0.07).sin() + 0.2 * rng.random_range(-1.0..1.0))
        .collect();
    let cfg = MfccConfig::default();
    let a = mfcc(&Signal::new(x.clone(), 16_000).unwrap(), &cfg).unwrap();
    let b = mfcc(&Signal::new(x.iter().map(|v| 0.37 * v).collect(), 16_000).unwrap(), &cfg).unwrap();
    let (fa, fb) = (a.frames(), b.frames());
    let mut others: f64 = 0.0;
    let mut c0: f64 = f64::INFINITY;
    for r in 0..fa.rows() {
        c0 = c0.min((fa.get(r, 0) - fb.get(r, 0)).abs());
        for c in 1..fa.cols() {
            others = others.max((fa.get(r, c) - fb.get(r, c)).abs());
        }
    }
    check(
        (fa.rows(), fa.cols()) == (98, 13) && others <= 1e-9 && c0 > 1e-3,
        format!(
            "shape {}x{}, scaling moves c0 by >= {c0:.3}, others by <= {others:.1e}",
            fa.rows(),
            fa.cols()
        ),
    )
}

fn c7_pca() -> Verdict {
    let pts = [[1.0, 1.0], [-1.0, -1.0], [2.0, 2.0], [-2.0, -2.0]];
    let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
    let m = pca_fit(&refs, PcaDim::Fixed(2)).unwrap();
    let pc = m.components.row(0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sign = pc[0].signum();
    let dir_err = (pc[0] * sign - s).abs().max((pc[1] * sign - s).abs());
    let second = m.eigenvalues[1];

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<Vec<f64>> = (0..12).map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let refs: Vec<&[f64]> = data.iter().map(|v| v.as_slice()).collect();
    let full = pca_fit(&refs, PcaDim::Fixed(6)).unwrap();
    let mut round: f64 = 0.0;
    for v in &data {
        let back = pca_reconstruct(&full, &pca_project(&full, v).unwrap()).unwrap();
        round = round.max(v.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    check(
        dir_err <= 1e-9 && second.abs() <= 1e-9 && round < 1e-9,
        format!("first component off by {dir_err:.1e}, second eigenvalue {second:.1e}, round trip {round:.1e}"),
    )
}

fn node_weight_sums(node: &FusionNode, out: &mut Vec<f64>) {
    if let FusionNode::Fuse { inputs, .. } = node {
        out.push(inputs.iter().map(|i| i.weight).sum());
        let w: Vec<f64> = inputs.iter().map(|i| i.weight).collect();
        validate_weights(&w).unwrap();
        for i in inputs {
            node_weight_sums(&i.node, out);
        }
    }
}

fn c8_fusion() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut moved = 0;
    for _ in 0..50 {
        let a = tanh_normalize(&random_scores(6, 7, &mut rng, |r| r.random_range(0.0..50.0))).unwrap();
        let b = tanh_normalize(&random_scores(6, 7, &mut rng, |r| r.random_range(0.0..50.0))).unwrap();
        let f = weighted_fuse(&[&a, &b], &[1.0, 0.0]).unwrap();
        for r in 0..6 {
            let order = |m: &ScoreMatrix| {
                let mut idx: Vec<usize> = (0..7).collect();
                idx.sort_by(|x, y| m.get(r, *x).total_cmp(&m.get(r, *y)));
                idx
            };
            if order(&a) != order(&f) {
                moved += 1;
            }
        }
    }
    let plan = FusionPlan::default();
    let valid = plan.validate().is_ok();
    let mut sums = Vec::new();
    node_weight_sums(&plan.root, &mut sums);
    let dev = sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    check(
        moved == 0 && valid && sums.len() == 3 && dev <= WEIGHT_TOLERANCE,
        format!(
            "{moved} of 300 probe rankings changed by weights (1,0); default plan valid: {valid}, {} nodes sum to 1 within {dev:.1e}",
            sums.len()
        ),
    )
}

/// Fusion-3 against every single scorer: rank-1 at least as good, and CMC
/// at least as high at every rank.
fn fusion_wins(r: &Report) -> (bool, bool) {
    let top = r.row("fusion-3").expect("fusion-3 row");
    let leaves: Vec<_> = r.rows.iter().filter(|x| x.kind == NodeKind::Leaf).collect();
    assert_eq!(leaves.len(), 4, "expected four scorers");
    let rank1 = leaves.iter().all(|l| top.summary.rank1 >= l.summary.rank1);
    let dominates = leaves
        .iter()
        .all(|l| top.cmc.rates.iter().zip(&l.cmc.rates).all(|(f, x)| f >= x));
    (rank1, dominates)
}

fn benchmark_seed(seed: u64, root: &Path) -> (bool, bool, String) {
    let data = root.join(format!("data{seed}"));
    let synth = SynthConfig {
        n_pairs: 38,
        twin_correlation: 0.8,
        seed,
        ..SynthConfig::default()
    };
    generate_synthetic(&synth, &data).unwrap();
    let mut cfg = RunConfig {
        manifest: Some(data.join("manifest.json")),
        embeddings: Some(data.join("embeddings.csv")),
        ..RunConfig::default()
    };
    cfg.lstm.seed = seed;
    let report = run_pipeline(&cfg, &root.join(format!("run{seed}"))).unwrap().report;
    let (a, b) = fusion_wins(&report);
    let line = report
        .rows
        .iter()
        .map(|r| format!("{}={:.3}", r.name, r.summary.rank1))
        .collect::<Vec<_>>()
        .join(" ");
    (a, b, line)
}

fn c9_benchmark() -> Verdict {
    const SEEDS: u64 = 20;
    let root = tempfile::tempdir().unwrap();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(BTreeMap::new());
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(SEEDS as usize);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let seed = next.fetch_add(1, Ordering::SeqCst) as u64;
                if seed >= SEEDS {
                    break;
                }
                let r = benchmark_seed(seed, root.path());
                eprintln!("  seed {seed:2}: rank-1 {} dominates {} | {}", r.0, r.1, r.2);
                results.lock().unwrap().insert(seed, r);
            });
        }
    });
    let results = results.into_inner().unwrap();
    if results.len() != SEEDS as usize {
        return Err(format!("only {} of {SEEDS} runs finished", results.len()));
    }
    let rank1 = results.values().filter(|r| r.0).count();
    let dominates = results.values().filter(|r| r.1).count();
    check(
        rank1 >= 18 && dominates >= 15,
        format!("fusion-3 rank-1 >= best scorer in {rank1}/20 (need 18), CMC dominates in {dominates}/20 (need 15)"),
    )
}

fn c10_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let bin = env!("CARGO_BIN_EXE_twinfuse");
    let run = |args: &[&str]| {
        let o = Command::new(bin).args(args).current_dir(cwd).env("RUST_LOG", "warn").output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["synth", "--pairs", "38", "--twin-correlation", "0.8", "--seed", "11", "--out", "data"]);
    fs::write(
        cwd.join("cfg.json"),
        r#"{"manifest": "data/manifest.json", "embeddings": "data/embeddings.csv"}"#,
    )
    .unwrap();
    for out in ["a", "b"] {
        run(&["run", "--config", "cfg.json", "--seed", "11", "--out", out]);
    }
    let mut differ = Vec::new();
    for f in ["report.json", "cmc.csv", "cmc.svg"] {
        if fs::read(cwd.join("a").join(f)).unwrap() != fs::read(cwd.join("b").join(f)).unwrap() {
            differ.push(f);
        }
    }
    check(
        differ.is_empty(),
        if differ.is_empty() {
            "two runs with seed 11 wrote byte-identical report.json, cmc.csv and cmc.svg".into()
        } else {
            format!("files differ: {}", differ.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("DTW matches exhaustive path enumeration", c1_dtw_oracle),
        ("LSTM gradients match central differences", c2_lstm_gradients),
        ("tanh normalization range, centre and order", c3_tanh),
        ("CMC properties and rank oracle", c4_cmc),
        ("HOG length, constant image, shift invariance", c5_hog),
        ("MFCC shape and gain invariance", c6_mfcc),
        ("PCA line dataset and round trip", c7_pca),
        ("fusion arithmetic and default plan", c8_fusion),
        ("synthetic benchmark: fusion beats single scorers", c9_benchmark),
        ("end-to-end determinism", c10_determinism),
    ];
    // optional criterion numbers on the command line select a subset
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let verdict = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(v) => v,
            Err(e) => Err(format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            )),
        };
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS {:>2} {name}: {d} ({secs:.1}s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
