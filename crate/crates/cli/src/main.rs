use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ggd_cli::commands::{
    cmd_ablate, cmd_bench, cmd_diagnose, cmd_embed, cmd_gen, cmd_probe, cmd_train, AblateArgs, DataPaths,
    DiagnoseArgs, DiagnoseSource, EmbedArgs, ProbeArgs, TrainArgs,
};
use ggd_cli::settings::{parse_list, Settings};
use ggd_cli::CliError;
use ggd_core::bench::BenchConfig;
use ggd_core::probe::SbmConfig;

#[derive(Parser)]
#[command(name = "ggd", version, about = "Group-discrimination node embeddings")]
struct Cli {
    /// Threads for row-parallel kernels. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides one key; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Edge list, one `src dst` pair per line.
    #[arg(long)]
    graph: PathBuf,
    /// Feature matrix in GGDF format.
    #[arg(long)]
    features: PathBuf,
    /// Keep edges one-directional instead of symmetrizing.
    #[arg(long)]
    directed: bool,
}

impl DataArgs {
    fn paths(&self, labels: Option<PathBuf>) -> DataPaths {
        DataPaths {
            graph: self.graph.clone(),
            features: self.features.clone(),
            labels,
            directed: self.directed,
        }
    }
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Train on sampled neighborhoods instead of the full graph.
    #[arg(long)]
    minibatch: bool,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Comma-separated fanouts, outermost layer first.
    #[arg(long)]
    fanouts: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder and write a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long, default_value = "model.ggdp")]
        out: PathBuf,
        /// Loss trace CSV [default: <out>.trace.csv].
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Run manifest [default: <out>.manifest].
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Compute final embeddings from a checkpoint.
    Embed {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        /// Propagation hops added to the encoder output.
        #[arg(long)]
        power: Option<usize>,
        #[arg(long, default_value = "embeddings.ggdf")]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Fit a logistic-regression probe on embeddings.
    Probe {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Edge list the label ids refer to, when ids are not row numbers.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        directed: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summary-vector statistics and the constant-summary sweep.
    Diagnose {
        #[arg(long, value_enum)]
        synthetic: Option<Synthetic>,
        #[arg(long, required_unless_present = "synthetic")]
        graph: Option<PathBuf>,
        #[arg(long, required_unless_present = "synthetic")]
        features: Option<PathBuf>,
        /// Labels enabling the sweep on the given data instead of the block model.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        directed: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        sbm: SbmArgs,
        #[arg(long, default_value = "diagnose")]
        out_dir: PathBuf,
    },
    /// Train once per aggregation mode and probe each.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time training epochs against a pairwise reference.
    Bench {
        /// Comma-separated node counts.
        #[arg(long, default_value = "1024,2048,4096,8192")]
        sizes: String,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 256)]
        hidden: usize,
        #[arg(long, default_value_t = 64)]
        feat_dim: usize,
        #[arg(long, default_value_t = 5.0)]
        avg_degree: f64,
        /// Hops in the graph-power timing.
        #[arg(long, default_value_t = 10)]
        power: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a stochastic-block-model dataset.
    Gen {
        #[command(flatten)]
        sbm: SbmArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Synthetic {
    CoraShape,
}

#[derive(Args, Clone)]
struct SbmArgs {
    #[arg(long, default_value_t = SbmConfig::default().n)]
    nodes: usize,
    #[arg(long, default_value_t = SbmConfig::default().k)]
    classes: usize,
    #[arg(long, default_value_t = SbmConfig::default().p_in)]
    p_in: f64,
    #[arg(long, default_value_t = SbmConfig::default().p_out)]
    p_out: f64,
    #[arg(long, default_value_t = SbmConfig::default().feat_dim)]
    feat_dim: usize,
    #[arg(long, default_value_t = SbmConfig::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = SbmConfig::default().proto_density)]
    proto_density: f64,
}

impl SbmArgs {
    fn config(&self) -> SbmConfig {
        SbmConfig {
            n: self.nodes,
            k: self.classes,
            p_in: self.p_in,
            p_out: self.p_out,
            feat_dim: self.feat_dim,
            noise: self.noise,
            proto_density: self.proto_density,
        }
    }
}

fn settings(cfg: &ConfigArgs, flags: Option<&TrainFlags>) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(path) = &cfg.config {
        s.apply_file(path)?;
    }
    s.apply_overrides(&cfg.set)?;
    if let Some(seed) = cfg.seed {
        s.train.seed = seed;
    }
    if let Some(f) = flags {
        if let Some(v) = f.epochs {
            s.train.epochs = v;
        }
        if let Some(v) = f.lr {
            s.train.lr = v;
        }
        if let Some(v) = f.hidden {
            s.train.hidden = v;
        }
        if f.minibatch {
            s.minibatch = true;
        }
        if let Some(v) = f.batch_size {
            s.mb.batch_size = v;
        }
        if let Some(v) = &f.fanouts {
            s.mb.fanouts = parse_list("fanouts", v)?;
        }
    }
    s.validate()?;
    Ok(s)
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Train {
            data,
            cfg,
            flags,
            out,
            trace,
            manifest,
        } => {
            let s = settings(&cfg, Some(&flags))?;
            let args = TrainArgs {
                data: data.paths(None),
                out,
                trace,
                manifest,
            };
            cmd_train(&args, &s)
        }
        Command::Embed {
            data,
            cfg,
            model,
            power,
            out,
            manifest,
        } => {
            let mut s = settings(&cfg, None)?;
            if let Some(p) = power {
                s.power = p;
            }
            let args = EmbedArgs {
                data: data.paths(None),
                model,
                out,
                manifest,
            };
            cmd_embed(&args, &s)
        }
        Command::Probe {
            embeddings,
            labels,
            graph,
            directed,
            cfg,
            out,
        } => {
            let s = settings(&cfg, None)?;
            let args = ProbeArgs {
                embeddings,
                labels,
                graph,
                directed,
                out,
            };
            cmd_probe(&args, &s)
        }
        Command::Diagnose {
            synthetic,
            graph,
            features,
            labels,
            directed,
            cfg,
            sbm,
            out_dir,
        } => {
            let s = settings(&cfg, None)?;
            let files = match (graph, features) {
                (Some(graph), Some(features)) => Some(DataPaths {
                    graph,
                    features,
                    labels: labels.clone(),
                    directed,
                }),
                _ => None,
            };
            let source = match (synthetic, &files) {
                (Some(Synthetic::CoraShape), _) => DiagnoseSource::CoraShape,
                (None, Some(f)) => DiagnoseSource::Files(f.clone()),
                (None, None) => return Err(CliError::Config("pass --synthetic or --graph and --features".into())),
            };
            let args = DiagnoseArgs {
                source,
                sweep_data: files.filter(|f| f.labels.is_some()),
                sbm: sbm.config(),
                out_dir,
            };
            cmd_diagnose(&args, &s)
        }
        Command::Ablate {
            data,
            labels,
            cfg,
            flags,
            out,
        } => {
            let s = settings(&cfg, Some(&flags))?;
            let args = AblateArgs {
                data: data.paths(Some(labels)),
                out,
            };
            cmd_ablate(&args, &s)
        }
        Command::Bench {
            sizes,
            repeats,
            hidden,
            feat_dim,
            avg_degree,
            power,
            seed,
            out,
        } => {
            let cfg = BenchConfig {
                sizes: parse_list("sizes", &sizes)?,
                repeats,
                hidden,
                feat_dim,
                avg_degree,
                power_hops: power,
                seed,
                ..Default::default()
            };
            cmd_bench(&cfg, out.as_deref())
        }
        Command::Gen { sbm, seed, out_dir } => cmd_gen(&sbm.config(), seed, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers.max(1)).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
