use std::path::{Path, PathBuf};
use std::time::Instant;

use ggd_core::bench::{run_scaling, BenchConfig};
use ggd_core::discriminate::train;
use ggd_core::encoder::EncoderParams;
use ggd_core::graph::{
    load_edge_list, load_features, load_labels, load_matrix, save_edge_list, save_features, save_labels, CsrGraph,
    LabeledSplit, LoadedGraph, NodeFeatures, NodeIdMap,
};
use ggd_core::inference::{bench_graph_power, EmbeddingSet};
use ggd_core::probe::{logistic_probe, sbm_generate, SbmConfig};
use ggd_core::rng::{RngState, Stream};
use ggd_core::sampler::minibatch_train;

use crate::diagnose::{
    activation_stats, aggregation_ablation, cora_shape, epsilon_sweep, stats_csv, sweep_csv, trained_stats, EPSILONS,
};
use crate::error::CliError;
use crate::manifest::{peak_rss_kib, write_atomic, RunManifest};
use crate::settings::Settings;

/// Graph, features and optional labels named on the command line.
#[derive(Debug, Clone)]
pub struct DataPaths {
    pub graph: PathBuf,
    pub features: PathBuf,
    pub labels: Option<PathBuf>,
    pub directed: bool,
}

pub struct Dataset {
    pub graph: CsrGraph,
    pub ids: NodeIdMap,
    pub features: NodeFeatures,
    pub split: Option<LabeledSplit>,
}

fn core_io(path: &Path) -> impl FnOnce(ggd_core::GgdError) -> CliError + '_ {
    move |e| match e {
        ggd_core::GgdError::Io(source) => CliError::io(path, source),
        other => other.into(),
    }
}

impl DataPaths {
    pub fn load(&self) -> Result<Dataset, CliError> {
        let LoadedGraph { graph, ids } = load_edge_list(&self.graph, !self.directed).map_err(core_io(&self.graph))?;
        let features = load_features(&self.features).map_err(core_io(&self.features))?;
        let n = features.num_nodes();
        // Ids that all index feature rows are taken as row numbers, so
        // isolated nodes missing from the edge list keep their place.
        let (graph, ids) = if indexes_rows(&ids, n) && !(ids.is_identity() && graph.num_nodes() == n) {
            let edges: Vec<(u32, u32)> = graph
                .edges()
                .map(|(u, v)| (ids.original(u as usize) as u32, ids.original(v as usize) as u32))
                .collect();
            (CsrGraph::from_edges(n, edges, false)?, NodeIdMap::Identity(n))
        } else {
            (graph, ids)
        };
        features.check_nodes(graph.num_nodes())?;
        let split = match &self.labels {
            Some(p) => Some(load_labels(p, &ids, graph.num_nodes()).map_err(core_io(p))?),
            None => None,
        };
        Ok(Dataset {
            graph,
            ids,
            features,
            split,
        })
    }

    fn record(&self, m: &mut RunManifest) -> Result<(), CliError> {
        m.input("graph", &self.graph)?;
        m.input("features", &self.features)?;
        if let Some(l) = &self.labels {
            m.input("labels", l)?;
        }
        Ok(())
    }
}

fn indexes_rows(ids: &NodeIdMap, n: usize) -> bool {
    (0..ids.len()).all(|i| (0..n as i64).contains(&ids.original(i)))
}

fn require_split(d: &Dataset) -> Result<&LabeledSplit, CliError> {
    d.split
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs --labels".into()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn finish(mut m: RunManifest, path: &Path, start: Instant) -> Result<(), CliError> {
    m.seconds = start.elapsed().as_secs_f64();
    m.peak_rss_kib = peak_rss_kib();
    m.save(path)
}

pub struct TrainArgs {
    pub data: DataPaths,
    pub out: PathBuf,
    pub trace: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

/// Trains and writes the checkpoint, the loss trace and the run manifest.
pub fn cmd_train(args: &TrainArgs, settings: &Settings) -> Result<String, CliError> {
    let start = Instant::now();
    settings.validate()?;
    let d = args.data.load()?;
    let (params, trace) = if settings.minibatch {
        minibatch_train(&d.graph, &d.features, &settings.train, &settings.mb)?
    } else {
        train(&d.graph, &d.features, &settings.train)?
    };
    let mut ckpt = Vec::new();
    params.write_checkpoint(&mut ckpt)?;
    write_atomic(&args.out, &ckpt)?;
    let trace_path = args.trace.clone().unwrap_or_else(|| with_suffix(&args.out, ".trace.csv"));
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    write_atomic(&trace_path, &csv)?;

    let mut m = RunManifest::new("train", settings);
    args.data.record(&mut m)?;
    m.extra.push(("graph_checksum".into(), d.graph.checksum()));
    m.extra.push(("feature_dim".into(), d.features.dim().to_string()));
    m.output("model", &args.out);
    m.output("trace", &trace_path);
    finish(m, &args.manifest.clone().unwrap_or_else(|| with_suffix(&args.out, ".manifest")), start)?;
    Ok(format!(
        "epochs={}\nfinal_loss={}\nbest_epoch={}\n",
        trace.losses.len(),
        trace.final_loss().unwrap_or(f64::NAN),
        trace.best_epoch
    ))
}

pub struct EmbedArgs {
    pub data: DataPaths,
    pub model: PathBuf,
    pub out: PathBuf,
    pub manifest: Option<PathBuf>,
}

/// Frozen encoding, propagation and reinforcement of a trained model.
pub fn cmd_embed(args: &EmbedArgs, settings: &Settings) -> Result<String, CliError> {
    let start = Instant::now();
    settings.validate()?;
    let d = args.data.load()?;
    let params = EncoderParams::load(&args.model).map_err(core_io(&args.model))?;
    if params.in_dim() != d.features.dim() {
        return Err(CliError::Config(format!(
            "checkpoint expects {} feature columns, features have {}",
            params.in_dim(),
            d.features.dim()
        )));
    }
    let train_manifest = with_suffix(&args.model, ".manifest");
    if let Ok(text) = std::fs::read_to_string(&train_manifest) {
        if let Some(sum) = RunManifest::lookup(&text, "graph_checksum") {
            if sum != d.graph.checksum() {
                return Err(CliError::Config(format!(
                    "graph differs from the one recorded in {}",
                    train_manifest.display()
                )));
            }
        }
    }
    let emb = EmbeddingSet::compute(
        &d.graph,
        &d.features,
        &params,
        settings.power,
        settings.train.seed,
        &settings.hash(),
    )?;
    emb.save(&args.out).map_err(core_io(&args.out))?;

    let mut m = RunManifest::new("embed", settings);
    args.data.record(&mut m)?;
    m.input("model", &args.model)?;
    m.output("embeddings", &args.out);
    finish(m, &args.manifest.clone().unwrap_or_else(|| with_suffix(&args.out, ".manifest")), start)?;
    Ok(format!("rows={}\ncols={}\n", emb.h.rows(), emb.h.cols()))
}

pub struct ProbeArgs {
    pub embeddings: PathBuf,
    pub labels: PathBuf,
    /// Edge list whose id mapping the labels refer to.
    pub graph: Option<PathBuf>,
    pub directed: bool,
    pub out: Option<PathBuf>,
}

pub fn cmd_probe(args: &ProbeArgs, settings: &Settings) -> Result<String, CliError> {
    settings.validate()?;
    let h = load_matrix(&args.embeddings).map_err(core_io(&args.embeddings))?;
    let ids = match &args.graph {
        Some(g) => {
            let loaded = load_edge_list(g, !args.directed).map_err(core_io(g))?;
            if indexes_rows(&loaded.ids, h.rows()) {
                NodeIdMap::Identity(h.rows())
            } else {
                loaded.ids
            }
        }
        None => NodeIdMap::Identity(h.rows()),
    };
    let split = load_labels(&args.labels, &ids, h.rows()).map_err(core_io(&args.labels))?;
    let report = logistic_probe(&h, &split, &settings.probe_config())?;
    let csv = report.to_csv();
    if let Some(out) = &args.out {
        write_atomic(out, csv.as_bytes())?;
    }
    Ok(csv)
}

pub enum DiagnoseSource {
    CoraShape,
    Files(DataPaths),
}

pub struct DiagnoseArgs {
    pub source: DiagnoseSource,
    /// Labeled data for the ε sweep; defaults to the synthetic block model.
    pub sweep_data: Option<DataPaths>,
    pub sbm: SbmConfig,
    pub out_dir: PathBuf,
}

/// Summary statistics at init and the constant-summary ε sweep.
pub fn cmd_diagnose(args: &DiagnoseArgs, settings: &Settings) -> Result<String, CliError> {
    let start = Instant::now();
    settings.validate()?;
    let seed = settings.train.seed;
    let mut m = RunManifest::new("diagnose", settings);
    let (g, x) = match &args.source {
        DiagnoseSource::CoraShape => cora_shape(seed)?,
        DiagnoseSource::Files(p) => {
            p.record(&mut m)?;
            let d = p.load()?;
            (d.graph, d.features)
        }
    };
    let mut stats = activation_stats(&g, &x, settings.train.hidden, seed)?;
    stats.extend(trained_stats(&g, &x, &settings.train)?);
    let stats = stats_csv(&stats);

    let (g, x, split) = match &args.sweep_data {
        Some(p) => {
            let d = p.load()?;
            let split = require_split(&d)?.clone();
            (d.graph, d.features, split)
        }
        None => sbm_generate(&args.sbm, &mut RngState::new(seed, Stream::Data))?,
    };
    let rows = epsilon_sweep(&g, &x, &split, &settings.train, &EPSILONS, 0, &settings.probe_config())?;
    let sweep = sweep_csv("epsilon", &rows);

    let stats_path = args.out_dir.join("summary_stats.csv");
    let sweep_path = args.out_dir.join("epsilon_sweep.csv");
    write_atomic(&stats_path, stats.as_bytes())?;
    write_atomic(&sweep_path, sweep.as_bytes())?;
    m.output("summary_stats", &stats_path);
    m.output("epsilon_sweep", &sweep_path);
    finish(m, &args.out_dir.join("manifest.txt"), start)?;
    Ok(format!("{stats}\n{sweep}"))
}

pub struct AblateArgs {
    pub data: DataPaths,
    pub out: Option<PathBuf>,
}

pub fn cmd_ablate(args: &AblateArgs, settings: &Settings) -> Result<String, CliError> {
    settings.validate()?;
    let d = args.data.load()?;
    let split = require_split(&d)?;
    let rows = aggregation_ablation(&d.graph, &d.features, split, &settings.train, settings.power, &settings.probe_config())?;
    let csv = sweep_csv("aggregation", &rows);
    if let Some(out) = &args.out {
        write_atomic(out, csv.as_bytes())?;
    }
    Ok(csv)
}

pub fn cmd_bench(cfg: &BenchConfig, out: Option<&Path>) -> Result<String, CliError> {
    let report = run_scaling(cfg)?;
    let mut csv = report.to_csv();
    csv.push_str("graph_power,num_nodes,seconds\n");
    for t in bench_graph_power(&cfg.sizes, cfg.power_hops, cfg.avg_degree, cfg.hidden, cfg.repeats, cfg.seed)? {
        csv.push_str(&format!("{},{},{}\n", cfg.power_hops, t.num_nodes, t.seconds));
    }
    if let Some(kib) = peak_rss_kib() {
        csv.push_str(&format!("peak_rss_kib,{kib}\n"));
    }
    if let Some(out) = out {
        write_atomic(out, csv.as_bytes())?;
    }
    Ok(csv)
}

/// Writes a block-model dataset as `graph.edges`, `features.ggdf` and
/// `labels.txt`.
pub fn cmd_gen(cfg: &SbmConfig, seed: u64, out_dir: &Path) -> Result<String, CliError> {
    let (g, x, split) = sbm_generate(cfg, &mut RngState::new(seed, Stream::Data))?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let (gp, fp, lp) = (out_dir.join("graph.edges"), out_dir.join("features.ggdf"), out_dir.join("labels.txt"));
    save_edge_list(&g, &gp).map_err(core_io(&gp))?;
    save_features(&x, &fp).map_err(core_io(&fp))?;
    save_labels(&split, &NodeIdMap::Identity(g.num_nodes()), &lp).map_err(core_io(&lp))?;
    Ok(format!(
        "nodes={}\nedges={}\nfeatures={}\nclasses={}\n",
        g.num_nodes(),
        g.nnz() / 2,
        x.dim(),
        split.num_classes()
    ))
}
