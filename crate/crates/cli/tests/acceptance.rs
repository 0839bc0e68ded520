//! End-to-end acceptance checks. Each test writes one
//! `criterion N: PASS|FAIL ...` line to stderr before asserting.
//!
//! Criteria run one at a time under a shared lock so their wall-clock
//! budgets are measured without contention.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use common::{
    blob_dataset, dense_adjacency, dense_normalized, graph_from, matmul, matrix_from, rel_err,
    softmax_oracle_accuracy, to_mat, worst_gradient_error, GRAD_TOL,
};
use ggd_cli::commands::DataPaths;
use ggd_cli::diagnose::{activation_stats, cora_shape, epsilon_sweep, EPSILONS};
use ggd_cli::settings::Settings;
use ggd_core::bench::{run_scaling, BenchConfig};
use ggd_core::discriminate::{train, Aggregation, TrainConfig};
use ggd_core::graph::{normalized_adjacency, CsrGraph, LabeledSplit, NodeFeatures};
use ggd_core::inference::{graph_power, EmbeddingSet, DEFAULT_POWER};
use ggd_core::probe::{logistic_probe, sbm_generate, OuterMap, ProbeConfig, SbmConfig, SoftmaxModel};
use ggd_core::rng::{RngState, Stream};
use ggd_core::sampler::{minibatch_train, MinibatchConfig};
use ggd_core::tensor::{spmm, Activation};

static SERIAL: Mutex<()> = Mutex::new(());

/// Writes past the test harness's output capture so verdicts show up in
/// plain `cargo test` runs.
fn report(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

/// Prints the verdict line, then fails the test if the criterion or its
/// time budget was missed.
fn verdict(id: u32, pass: bool, detail: &str, start: Instant, budget_s: f64) {
    let secs = start.elapsed().as_secs_f64();
    let ok = pass && secs < budget_s;
    let tag = if ok { "PASS" } else { "FAIL" };
    let budget = if budget_s.is_finite() { format!(" of {budget_s:.0}s") } else { String::new() };
    report(&format!("criterion {id}: {tag} {detail} ({secs:.1}s{budget})"));
    assert!(ok, "criterion {id} failed: {detail}, {secs:.1}s");
}

fn sbm_fixture(n: usize) -> (CsrGraph, NodeFeatures, LabeledSplit) {
    let cfg = SbmConfig { n, ..Default::default() };
    sbm_generate(&cfg, &mut RngState::new(0, Stream::Data)).unwrap()
}

fn probe_test(g: &CsrGraph, x: &NodeFeatures, split: &LabeledSplit, params: &ggd_core::encoder::EncoderParams) -> f64 {
    let emb = EmbeddingSet::compute(g, x, params, DEFAULT_POWER, 0, "").unwrap();
    logistic_probe(&emb.h, split, &ProbeConfig::default()).unwrap().test
}

#[test]
fn criterion_1_summary_statistics() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (g, x) = cora_shape(0).unwrap();
    let rows = activation_stats(&g, &x, 512, 0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in rows.iter().filter(|r| r.outer == OuterMap::Sigmoid) {
        let s = r.stats;
        let ok = match r.activation {
            Activation::Sigmoid => (0.61..=0.63).contains(&s.mean),
            _ => (0.49..=0.51).contains(&s.mean) && s.std <= 5e-3,
        };
        pass &= ok;
        parts.push(format!("{}: mean {:.4} std {:.2e}", r.activation, s.mean, s.std));
    }
    verdict(1, pass, &parts.join(", "), start, 10.0);
}

#[test]
fn criterion_2_epsilon_sweep() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (g, x, split) = sbm_fixture(2000);
    let cfg = TrainConfig {
        hidden: 16,
        num_proj: 0,
        patience: None,
        ..Default::default()
    };
    let rows = epsilon_sweep(&g, &x, &split, &cfg, &EPSILONS, 0, &ProbeConfig::default()).unwrap();
    assert_eq!(rows[0].label, "0");
    let rest: Vec<f64> = rows[1..].iter().map(|r| r.accuracy).collect();
    let hi = rest.iter().cloned().fold(f64::MIN, f64::max);
    let lo = rest.iter().cloned().fold(f64::MAX, f64::min);
    let zero = rows[0].accuracy;
    let pass = hi - lo <= 0.02 && lo - zero >= 0.10;
    let accs: Vec<String> = rows.iter().map(|r| format!("{}={:.3}", r.label, r.accuracy)).collect();
    let detail = format!("{} spread {:.3} gap {:.3}", accs.join(" "), hi - lo, lo - zero);
    verdict(2, pass, &detail, start, 180.0);
}

#[test]
fn criterion_3_finite_difference_gradients() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut worst = 0.0f64;
    for mode in Aggregation::ALL {
        worst = worst.max(worst_gradient_error(Activation::PRelu, mode, 2, 2, 3));
    }
    for act in [Activation::Relu, Activation::LeakyRelu, Activation::Sigmoid] {
        worst = worst.max(worst_gradient_error(act, Aggregation::Linear, 2, 1, 5));
    }
    worst = worst.max(worst_gradient_error(Activation::PRelu, Aggregation::Linear, 1, 0, 7));
    verdict(3, worst <= GRAD_TOL, &format!("max relative error {worst:.2e}"), start, 30.0);
}

#[test]
fn criterion_4_oracle_equivalence() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    const CASES: u64 = 100;
    let (mut spmm_ok, mut norm_ok, mut power_ok, mut probe_ok) = (0, 0, 0, 0);
    for seed in 0..CASES {
        let n = 2 + (seed as usize * 7) % 45;
        let m = (seed as usize * 13) % 150;
        let d = 1 + seed as usize % 8;

        let g = graph_from(n, m, seed % 3 == 0, seed % 2 == 0, seed);
        let x = matrix_from(n, d, seed);
        let got = spmm(&g, &x).unwrap();
        let want = matmul(&dense_adjacency(&g), &to_mat(&x));
        spmm_ok += all_close(|i, j| (got.get(i, j) as f64, want[i][j]), n, d, |a, b| rel_err(a, b, 1.0) <= 1e-5) as u32;

        let plain = graph_from(n, m, seed % 3 == 0, false, seed);
        let got = dense_adjacency(&normalized_adjacency(&plain).unwrap());
        let want = dense_normalized(&plain);
        norm_ok += all_close(|i, j| (got[i][j], want[i][j]), n, n, |a, b| (a - b).abs() <= 1e-12) as u32;

        let a = dense_normalized(&plain);
        let want = matmul(&a, &matmul(&a, &matmul(&a, &to_mat(&x))));
        let got = graph_power(&normalized_adjacency(&plain).unwrap(), &x, 3).unwrap();
        power_ok += all_close(|i, j| (got.get(i, j) as f64, want[i][j]), n, d, |a, b| rel_err(a, b, 1.0) <= 1e-5) as u32;

        let (h, split) = blob_dataset(120 + 4 * seed as usize, 2 + seed as usize % 6, 2 + seed as usize % 3, 0.5 + 0.05 * seed as f64, seed);
        let cfg = ProbeConfig {
            epochs: 100,
            seed,
            ..Default::default()
        };
        let classes = split.num_classes();
        let init = SoftmaxModel::init(h.cols(), classes, seed);
        let (train_acc, test_acc) =
            softmax_oracle_accuracy(&h, &split, &init.weight, classes, cfg.lr, cfg.epochs, cfg.l2_weight);
        let report = logistic_probe(&h, &split, &cfg).unwrap();
        probe_ok += (report.train == train_acc && report.test == test_acc) as u32;
    }
    let all = CASES as u32;
    let pass = [spmm_ok, norm_ok, power_ok, probe_ok].iter().all(|&k| k == all);
    let detail = format!("spmm {spmm_ok}/{all}, normalize {norm_ok}/{all}, power {power_ok}/{all}, probe {probe_ok}/{all}");
    verdict(4, pass, &detail, start, 60.0);
}

fn all_close(at: impl Fn(usize, usize) -> (f64, f64), rows: usize, cols: usize, ok: impl Fn(f64, f64) -> bool) -> bool {
    (0..rows).all(|i| {
        (0..cols).all(|j| {
            let (a, b) = at(i, j);
            ok(a, b)
        })
    })
}

#[test]
fn criterion_5_learning_signal() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (g, x, split) = sbm_fixture(2000);
    let raw = logistic_probe(x.matrix(), &split, &ProbeConfig::default()).unwrap().test;
    let cfg = TrainConfig {
        hidden: 64,
        patience: None,
        ..Default::default()
    };
    let (params, trace) = train(&g, &x, &cfg).unwrap();
    let acc = probe_test(&g, &x, &split, &params);
    let loss = trace.final_loss().unwrap();
    let pass = trace.losses.len() == 500 && acc >= 0.90 && acc >= raw + 0.05 && loss < std::f64::consts::LN_2;
    let detail = format!("accuracy {acc:.3} raw {raw:.3} final loss {loss:.4}");
    verdict(5, pass, &detail, start, 120.0);
}

#[test]
fn criterion_6_linear_scaling() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let report = run_scaling(&BenchConfig::default()).unwrap();
    let speedup = report.seconds("pairwise", 4096).unwrap() / report.seconds("gd", 4096).unwrap();
    let (gd, pw) = (report.gd_fit, report.pairwise_fit);
    let pass = gd.slope <= 1.3 && gd.r2 >= 0.95 && pw.slope >= 1.7 && speedup >= 20.0;
    let detail = format!(
        "gd slope {:.2} r2 {:.3}, pairwise slope {:.2}, speedup at 4096 {speedup:.1}x",
        gd.slope, gd.r2, pw.slope
    );
    verdict(6, pass, &detail, start, 300.0);
}

#[test]
fn criterion_7_minibatch_fidelity() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();

    let (g, x, _) = sbm_fixture(2000);
    let cfg = TrainConfig {
        hidden: 32,
        num_conv: 2,
        epochs: 1,
        ..Default::default()
    };
    let saturating = MinibatchConfig {
        batch_size: g.num_nodes(),
        fanouts: vec![g.num_nodes(); 2],
        prefetch: 0,
    };
    let (_, full) = train(&g, &x, &cfg).unwrap();
    let (_, mb) = minibatch_train(&g, &x, &cfg, &saturating).unwrap();
    let first = rel_err(mb.losses[0], full.losses[0], 0.0);

    let (g, x, split) = sbm_fixture(5000);
    let cfg = TrainConfig {
        hidden: 64,
        num_conv: 2,
        patience: None,
        ..Default::default()
    };
    let sampled = MinibatchConfig {
        batch_size: 512,
        fanouts: vec![12, 12],
        prefetch: 0,
    };
    let batches = g.num_nodes().div_ceil(sampled.batch_size);
    let (full_params, _) = train(&g, &x, &cfg).unwrap();
    // Same number of optimizer steps as the full-batch run.
    let mb_cfg = TrainConfig {
        epochs: cfg.epochs.div_ceil(batches),
        ..cfg.clone()
    };
    let (mb_params, _) = minibatch_train(&g, &x, &mb_cfg, &sampled).unwrap();
    let acc_full = probe_test(&g, &x, &split, &full_params);
    let acc_mb = probe_test(&g, &x, &split, &mb_params);

    let pass = first <= 1e-5 && (acc_full - acc_mb).abs() <= 0.03;
    let detail = format!("first-epoch rel diff {first:.2e}, accuracy full {acc_full:.3} minibatch {acc_mb:.3}");
    verdict(7, pass, &detail, start, 300.0);
}

fn ggd(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_ggd")).args(args).output().unwrap();
    assert!(out.status.success(), "ggd {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// gen → train → embed → probe in `dir`; returns the checkpoint, embedding
/// and report bytes.
fn pipeline(dir: &Path, workers: &str) -> [Vec<u8>; 3] {
    let p = |name: &str| dir.join(name).display().to_string();
    let (data, model, emb, report) = (p("data"), p("model.ggdp"), p("emb.ggdf"), p("report.csv"));
    let graph = format!("{data}/graph.edges");
    let features = format!("{data}/features.ggdf");
    let labels = format!("{data}/labels.txt");
    let w = ["--workers", workers];
    let inputs = ["--graph", graph.as_str(), "--features", features.as_str()];
    ggd(&[&w[..], &["gen", "--nodes", "600", "--seed", "3", "--out-dir", &data]].concat());
    let train = ["train", "--epochs", "40", "--hidden", "32", "--seed", "7", "--out", &model];
    ggd(&[&w[..], &train, &inputs].concat());
    let embed = ["embed", "--model", &model, "--seed", "7", "--out", &emb];
    ggd(&[&w[..], &embed, &inputs].concat());
    let probe = ["probe", "--embeddings", &emb, "--labels", &labels, "--seed", "7", "--out", &report];
    ggd(&[&w[..], &probe].concat());
    ["model.ggdp", "emb.ggdf", "report.csv"].map(|f| std::fs::read(dir.join(f)).unwrap())
}

#[test]
fn criterion_8_determinism() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path(), "1");
    let second = pipeline(b.path(), "2");
    let same: Vec<bool> = first.iter().zip(&second).map(|(x, y)| x == y).collect();
    let pass = same.iter().all(|&s| s) && first.iter().all(|f| !f.is_empty());
    let detail = format!("checkpoint {} embeddings {} report {}", same[0], same[1], same[2]);
    verdict(8, pass, &detail, start, f64::INFINITY);
}

#[test]
fn criterion_9_cora() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let Some(dir) = std::env::var_os("GGD_CORA_DIR").map(PathBuf::from) else {
        report("criterion 9: SKIPPED (set GGD_CORA_DIR to graph.edges, features.ggdf and labels.txt)");
        return;
    };
    let start = Instant::now();
    let data = DataPaths {
        graph: dir.join("graph.edges"),
        features: dir.join("features.ggdf"),
        labels: Some(dir.join("labels.txt")),
        directed: false,
    }
    .load()
    .unwrap();
    let settings = Settings::default();
    let split = data.split.expect("labels");
    let (params, _) = train(&data.graph, &data.features, &settings.train).unwrap();
    let emb = EmbeddingSet::compute(&data.graph, &data.features, &params, settings.power, 0, "").unwrap();
    let acc = logistic_probe(&emb.h, &split, &settings.probe_config()).unwrap().test;
    verdict(9, acc >= 0.82, &format!("test accuracy {acc:.3}"), start, f64::INFINITY);
}
