//! `pcl` — train and evaluate pseudo-contrastive learning on graph bundles.
//!
//! Subcommands: `train`, `sweep`, `robustness`, `ablation`, `separability`,
//! `convert`. Flags fall back to values from an optional TOML config file
//! (`--config`), then to the built-in defaults. All output files are
//! deterministic for a fixed seed; timings go to stdout only.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use pcl_core::backbone::{gcn_forward, mlp_forward, BackboneKind, Mode};
use pcl_core::experiments::{
    ablation_matrix, default_gamma_grid, default_k_grid, hyper_sweep, robustness_sweep,
    DEFAULT_SWAP_COUNTS,
};
use pcl_core::graph::{convert_linqs, load_bundle, save_bundle};
use pcl_core::losses::Method;
use pcl_core::metrics::separability_report;
use pcl_core::report;
use pcl_core::trainer::{multi_run, train_model, TrainConfig};
use pcl_core::{GraphBundle, TrainContext};

#[derive(Parser)]
#[command(
    name = "pcl",
    version,
    about = "Pseudo-contrastive learning for graph node classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over several seeds and report mean accuracy.
    Train(TrainArgs),
    /// Grid-search the confidence threshold and negative-set size.
    Sweep(SweepArgs),
    /// Label-noise robustness: swap training labels and compare methods.
    Robustness(RobustnessArgs),
    /// The 8-row loss/sampling/positive-pair ablation grid.
    Ablation(AblationArgs),
    /// Train once and measure representation separability per hop.
    Separability(SeparabilityArgs),
    /// Convert citation `.content`/`.cites` text files into a bundle.
    Convert(ConvertArgs),
}

fn parse_in_unit_open(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn parse_gamma_pos(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1]"))
    }
}

fn parse_dropout(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1)"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be > 0"))
    }
}

fn parse_nonneg(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be >= 0"))
    }
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Dataset bundle directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Optional TOML file providing flag defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Encoder: gcn or mlp.
    #[arg(long, value_parser = BackboneKind::from_str)]
    backbone: Option<BackboneKind>,
    /// Auxiliary objective: none, pcl, ucl, ppl, or npl.
    #[arg(long, value_parser = Method::from_str)]
    method: Option<Method>,
    /// Positive pseudo-label confidence threshold, in (0, 1] [default: 0.5].
    #[arg(long, value_parser = parse_gamma_pos)]
    gamma_pos: Option<f64>,
    /// Negative nodes per class [default: 20].
    #[arg(long)]
    k_neg: Option<usize>,
    /// Contrastive temperature [default: 0.05].
    #[arg(long, value_parser = parse_positive)]
    tau: Option<f64>,
    /// Warm-up epochs, cross-entropy only [default: 200].
    #[arg(long)]
    e1: Option<usize>,
    /// Co-training epochs [default: 300].
    #[arg(long)]
    e2: Option<usize>,
    /// Hidden width of the encoder [default: 64].
    #[arg(long)]
    hidden: Option<usize>,
    /// Adam learning rate [default: 0.01].
    #[arg(long, value_parser = parse_positive)]
    lr: Option<f64>,
    /// L2 weight decay folded into the gradient [default: 5e-4].
    #[arg(long, value_parser = parse_nonneg)]
    weight_decay: Option<f64>,
    /// Dropout rate before each encoder layer, in [0, 1) [default: 0.5].
    #[arg(long, value_parser = parse_dropout)]
    dropout: Option<f64>,
    /// RWR continuation probability, in (0, 1) [default: 0.85].
    #[arg(long, value_parser = parse_in_unit_open)]
    q_restart: Option<f64>,
    /// Base RNG seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs (seeds) per configuration [default: 10].
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads for parallel runs; defaults to the available cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add the sampled positive-pair agreement term.
    #[arg(long)]
    use_positive_pairs: bool,
    /// Negative-learning selection threshold, in (0, 1) [default: 0.05].
    #[arg(long, value_parser = parse_in_unit_open)]
    gamma_neg: Option<f64>,
    /// Skip row-normalizing the feature matrix.
    #[arg(long)]
    raw_features: bool,
    /// Seed for generating a split when the bundle ships none.
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated gamma values; defaults to 0.5..0.9.
    #[arg(long, value_delimiter = ',', value_parser = parse_gamma_pos)]
    gamma_grid: Option<Vec<f64>>,
    /// Comma-separated K values; defaults to 10,20,..,100.
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
}

#[derive(Args)]
struct RobustnessArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated swapped-pair counts; defaults to 1,2,5,10,20.
    #[arg(long, value_delimiter = ',')]
    swaps: Option<Vec<usize>>,
}

#[derive(Args)]
struct AblationArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SeparabilityArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Largest hop distance reported.
    #[arg(long, default_value_t = 4)]
    hops: usize,
}

#[derive(Args)]
struct ConvertArgs {
    /// `.content` file: one `id feature... label` line per node.
    #[arg(long)]
    content: PathBuf,
    /// `.cites` file: one `cited citing` pair per line.
    #[arg(long)]
    cites: PathBuf,
    /// Bundle directory to write.
    #[arg(long)]
    out: PathBuf,
    /// Also generate a train/val/test split.
    #[arg(long)]
    with_split: bool,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 500)]
    n_val: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
}

/// Flag defaults loadable from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    backbone: Option<String>,
    method: Option<String>,
    gamma_pos: Option<f64>,
    k_neg: Option<usize>,
    tau: Option<f64>,
    e1: Option<usize>,
    e2: Option<usize>,
    hidden: Option<usize>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    dropout: Option<f64>,
    q_restart: Option<f64>,
    seed: Option<u64>,
    runs: Option<usize>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    use_positive_pairs: Option<bool>,
    gamma_neg: Option<f64>,
    raw_features: Option<bool>,
    split_seed: Option<u64>,
}

struct Resolved {
    cfg: TrainConfig,
    runs: usize,
    out: PathBuf,
    raw_features: bool,
    split_seed: u64,
    dataset: PathBuf,
    dataset_name: String,
}

fn resolve(common: &CommonArgs) -> anyhow::Result<Resolved> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let file_backbone = match &file.backbone {
        Some(s) => Some(BackboneKind::from_str(s).map_err(anyhow::Error::msg)?),
        None => None,
    };
    let file_method = match &file.method {
        Some(s) => Some(Method::from_str(s).map_err(anyhow::Error::msg)?),
        None => None,
    };

    let d = TrainConfig::default();
    let cfg = TrainConfig {
        gamma_pos: common.gamma_pos.or(file.gamma_pos).unwrap_or(d.gamma_pos),
        k_neg: common.k_neg.or(file.k_neg).unwrap_or(d.k_neg),
        tau: common.tau.or(file.tau).unwrap_or(d.tau),
        e1: common.e1.or(file.e1).unwrap_or(d.e1),
        e2: common.e2.or(file.e2).unwrap_or(d.e2),
        hidden: common.hidden.or(file.hidden).unwrap_or(d.hidden),
        weight_decay: common
            .weight_decay
            .or(file.weight_decay)
            .unwrap_or(d.weight_decay),
        lr: common.lr.or(file.lr).unwrap_or(d.lr),
        dropout: common.dropout.or(file.dropout).unwrap_or(d.dropout),
        q_restart: common.q_restart.or(file.q_restart).unwrap_or(d.q_restart),
        seed: common.seed.or(file.seed).unwrap_or(d.seed),
        method: common.method.or(file_method).unwrap_or(d.method),
        backbone: common.backbone.or(file_backbone).unwrap_or(d.backbone),
        use_positive_pairs: common.use_positive_pairs
            || file.use_positive_pairs.unwrap_or(false),
        gamma_neg: common.gamma_neg.or(file.gamma_neg).unwrap_or(d.gamma_neg),
    };

    let jobs = common
        .jobs
        .or(file.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    pcl_core::init_thread_pool(jobs);

    let dataset = common.dataset.clone();
    let dataset_name = dataset
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned());

    Ok(Resolved {
        cfg,
        runs: common.runs.or(file.runs).unwrap_or(10),
        out: common
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("pcl-out")),
        raw_features: common.raw_features || file.raw_features.unwrap_or(false),
        split_seed: common.split_seed.or(file.split_seed).unwrap_or(0),
        dataset,
        dataset_name,
    })
}

fn load_dataset(r: &Resolved) -> anyhow::Result<GraphBundle> {
    let bundle = load_bundle::<f64>(&r.dataset)
        .with_context(|| format!("loading dataset {}", r.dataset.display()))?;
    if bundle.dropped_self_loops() + bundle.dropped_duplicate_edges() > 0 {
        eprintln!(
            "warning: dropped {} self-loops and {} duplicate edges from {}",
            bundle.dropped_self_loops(),
            bundle.dropped_duplicate_edges(),
            r.dataset.display()
        );
    }
    let bundle = if r.raw_features {
        bundle
    } else {
        bundle.row_normalize_features()
    };
    if bundle.has_split() {
        Ok(bundle)
    } else {
        eprintln!(
            "note: bundle has no split.json; sampling a 20-per-class split with seed {}",
            r.split_seed
        );
        let mut rng = ChaCha8Rng::seed_from_u64(r.split_seed);
        Ok(bundle.planetoid_split(20, 500, 1000, &mut rng)?)
    }
}

fn write_out(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let r = resolve(&args.common)?;
    let bundle = load_dataset(&r)?;
    let start = Instant::now();
    let summary = multi_run(&r.cfg, &bundle, r.runs)?;
    let secs = start.elapsed().as_secs_f64();

    write_out(
        &r.out,
        "summary.csv",
        &report::summary_csv(&r.dataset_name, &r.cfg, &summary.runs),
    )?;
    for run in &summary.runs {
        let run_cfg = TrainConfig {
            seed: run.seed,
            ..r.cfg
        };
        write_out(
            &r.out,
            &format!("run_{}.json", run.seed),
            &report::run_trace_json(&r.dataset_name, &run_cfg, run),
        )?;
    }
    println!(
        "{} {} {}: test accuracy {:.4} +/- {:.4} over {} runs ({:.1}s)",
        r.dataset_name,
        r.cfg.backbone.name(),
        r.cfg.method.name(),
        summary.mean,
        summary.std,
        r.runs,
        secs
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let r = resolve(&args.common)?;
    let bundle = load_dataset(&r)?;
    let gammas = args.gamma_grid.clone().unwrap_or_else(default_gamma_grid);
    let ks = args.k_grid.clone().unwrap_or_else(default_k_grid);
    let start = Instant::now();
    let cells = hyper_sweep(&r.cfg, &bundle, &gammas, &ks, r.runs)?;
    write_out(&r.out, "sweep.csv", &report::sweep_csv(&cells))?;
    let best = cells
        .iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("nonempty grid");
    println!(
        "best cell: gamma={} K={} accuracy {:.4} +/- {:.4} ({:.1}s)",
        best.gamma_pos,
        best.k_neg,
        best.mean,
        best.std,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_robustness(args: &RobustnessArgs) -> anyhow::Result<()> {
    let r = resolve(&args.common)?;
    let bundle = load_dataset(&r)?;
    let swaps = args
        .swaps
        .clone()
        .unwrap_or_else(|| DEFAULT_SWAP_COUNTS.to_vec());
    let start = Instant::now();
    let cells = robustness_sweep(&r.cfg, &bundle, &swaps, r.runs)?;
    write_out(&r.out, "robustness.csv", &report::robustness_csv(&cells))?;
    println!(
        "robustness sweep over n in {:?} done ({:.1}s)",
        swaps,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_ablation(args: &AblationArgs) -> anyhow::Result<()> {
    let r = resolve(&args.common)?;
    let bundle = load_dataset(&r)?;
    let start = Instant::now();
    let rows = ablation_matrix(&r.cfg, &bundle, r.runs)?;
    write_out(&r.out, "ablation.csv", &report::ablation_csv(&rows))?;
    for row in &rows {
        let pp = match row.positive_pairs {
            Some(true) => " w P",
            Some(false) => " w/o P",
            None => "",
        };
        println!("{:>5}{:7} {:.4} +/- {:.4}", row.component, pp, row.mean, row.std);
    }
    println!("ablation done ({:.1}s)", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_separability(args: &SeparabilityArgs) -> anyhow::Result<()> {
    let r = resolve(&args.common)?;
    let bundle = load_dataset(&r)?;
    let ctx = TrainContext::new(&bundle, r.cfg.q_restart);
    let start = Instant::now();
    let trained = train_model(&r.cfg, &bundle, &ctx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(r.cfg.seed);
    // separability looks at the final learned representations, not the
    // best-validation checkpoint used for accuracy reporting
    let out = match r.cfg.backbone {
        BackboneKind::Gcn => gcn_forward(
            &trained.final_params,
            &bundle,
            &ctx.operators,
            Mode::Eval,
            r.cfg.dropout,
            &mut rng,
        )?,
        BackboneKind::Mlp => mlp_forward(
            &trained.final_params,
            &bundle,
            Mode::Eval,
            r.cfg.dropout,
            &mut rng,
        )?,
    };
    let rep = separability_report(out.representations(), &bundle, args.hops, &mut rng);
    write_out(&r.out, "separability.csv", &report::separability_csv(&rep))?;
    for (i, hop) in rep.per_hop.iter().enumerate() {
        match hop {
            Some((v, pairs)) => println!("hop {}: separability {:.4} over {} pairs", i + 1, v, pairs),
            None => println!("hop {}: no nodes at this distance", i + 1),
        }
    }
    println!(
        "global separability {:.4}; test accuracy {:.4} ({:.1}s)",
        rep.global,
        trained.result.test_accuracy,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_convert(args: &ConvertArgs) -> anyhow::Result<()> {
    let (bundle, stats) = convert_linqs::<f64>(&args.content, &args.cites)?;
    let bundle = if args.with_split {
        let mut rng = ChaCha8Rng::seed_from_u64(args.split_seed);
        bundle.planetoid_split(args.per_class, args.n_val, args.n_test, &mut rng)?
    } else {
        bundle
    };
    save_bundle(&bundle, &args.out)?;
    println!(
        "converted: {} nodes, {} edges, {} features, {} classes -> {}",
        bundle.n_nodes(),
        bundle.edges().len(),
        bundle.n_features(),
        bundle.n_classes(),
        args.out.display()
    );
    if stats.skipped_citations + stats.dropped_self_loops + stats.dropped_duplicate_edges > 0 {
        println!(
            "skipped {} citations with unknown ids; dropped {} self-loops, {} duplicate edges",
            stats.skipped_citations, stats.dropped_self_loops, stats.dropped_duplicate_edges
        );
    }
    if !args.with_split {
        println!("no split generated; training will sample one (see --split-seed)");
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Robustness(a) => cmd_robustness(a),
        Command::Ablation(a) => cmd_ablation(a),
        Command::Separability(a) => cmd_separability(a),
        Command::Convert(a) => cmd_convert(a),
    }
}
