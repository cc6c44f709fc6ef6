use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use homonym::cluster::write_traces;
use homonym::counts::{build_global_counts, GlobalCounts};
use homonym::ingest::{ingest_records, read_blocks, read_records, write_blocks, write_records};
use homonym::metrics::{
    build_report, pooled_pair_f1, write_convergence_hist, write_report, write_trace_stats,
    EvalReport, Prf,
};
use homonym::model::{Block, Clustering, Combine, CountScope, FeatureType, Params, ScoreKind};
use homonym::pipeline::{cluster_blocks, evaluate_blocks, partial_gold};
use homonym::synth::{generate_corpus, write_gold, SynthConfig};
use homonym::train::{
    fit_weights, load_lambda, sample_pairs, save_lambda, sweep_stopping, weight_preset,
    write_sweep, write_sweep_hist, FitHyper,
};

/// Disambiguates homonymous author names: mentions are grouped into
/// per-name blocks and each block is clustered on relative feature
/// frequencies.
#[derive(Parser, Debug)]
#[command(name = "homonym", version)]
struct Cli {
    /// Worker threads for block-parallel stages (0 uses all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic gold-labeled corpus.
    Synth(SynthArgs),
    /// Turn document records into per-name mention blocks.
    Ingest(IngestArgs),
    /// Accumulate corpus-wide feature counts from blocks.
    Counts(CountsArgs),
    /// Cluster every block and write the assignments.
    Cluster(ClusterArgs),
    /// Cluster and score against gold labels, writing report CSVs.
    Evaluate(EvaluateArgs),
    /// Fit feature-type weights on gold-labeled blocks.
    TrainWeights(TrainArgs),
    /// Grid-search the merge limit on gold-labeled blocks.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    /// Weighted sum over mention pairs.
    Prob,
    /// Best single weighted mention pair.
    Max,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScoreArg {
    Conditional,
    Joint,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    Within,
    Overall,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Bcube,
    Pairf1,
}

#[derive(Args, Debug)]
struct ParamArgs {
    /// Smoothing constant.
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,

    /// Cluster score accumulation.
    #[arg(long, value_enum, default_value_t = VariantArg::Prob)]
    variant: VariantArg,

    /// Conditional score alone, or multiplied by the cluster prior.
    #[arg(long, value_enum, default_value_t = ScoreArg::Conditional)]
    score: ScoreArg,

    /// Where feature counts come from.
    #[arg(long, value_enum, default_value_t = ScopeArg::Overall)]
    scope: ScopeArg,

    /// Merge limit intercept.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,

    /// Merge limit slope per block mention.
    #[arg(long, default_value_t = 7.5e-5)]
    beta: f64,

    /// Feature-type weights: uniform, author, doc, select:TYPE,
    /// leave-out:TYPE, trained:PATH, or opposed:PATH.
    #[arg(long, default_value = "uniform")]
    weights: String,
}

impl ParamArgs {
    fn to_params(&self) -> Result<Params> {
        let params = Params {
            epsilon: self.epsilon,
            lambda: parse_weights(&self.weights)?,
            alpha: self.alpha,
            beta: self.beta,
            count_scope: match self.scope {
                ScopeArg::Within => CountScope::Within,
                ScopeArg::Overall => CountScope::Overall,
            },
            score_kind: match self.score {
                ScoreArg::Conditional => ScoreKind::Conditional,
                ScoreArg::Joint => ScoreKind::Joint,
            },
            combine: match self.variant {
                VariantArg::Prob => Combine::Prob,
                VariantArg::Max => Combine::Max,
            },
        };
        params.validate()?;
        Ok(params)
    }
}

fn parse_weights(spec: &str) -> Result<[f64; FeatureType::COUNT]> {
    match spec.split_once(':') {
        Some((kind, path)) if kind == "trained" || kind == "opposed" => {
            let base = read_lambda_file(Path::new(path))?;
            Ok(weight_preset(kind, Some(&base))?)
        }
        _ => Ok(weight_preset(spec, None)?),
    }
}

fn read_lambda_file(path: &Path) -> Result<[f64; FeatureType::COUNT]> {
    let file =
        File::open(path).with_context(|| format!("opening weights {}", path.display()))?;
    Ok(load_lambda(BufReader::new(file), &path.display().to_string())?)
}

/// Header line carried by every output file: tool version, seed (or "-"
/// for seedless subcommands) and the full flag set of the run.
fn provenance(seed: Option<u64>) -> String {
    let args: Vec<String> = std::env::args().skip(1).collect();
    format!(
        "# homonym {} seed={} args={}\n",
        env!("CARGO_PKG_VERSION"),
        seed.map_or_else(|| "-".to_string(), |s| s.to_string()),
        args.join(" ")
    )
}

fn create_output(path: &Path, seed: Option<u64>) -> Result<File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    let mut file =
        File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(provenance(seed).as_bytes())?;
    Ok(file)
}

fn load_blocks(path: &Path) -> Result<Vec<Block>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_blocks(
        BufReader::new(file),
        &path.display().to_string(),
    )?)
}

/// Overall-scope runs need corpus counts: loaded from `path` when given,
/// rebuilt from the blocks otherwise. Within-scope runs need none.
fn load_or_build_counts(
    blocks: &[Block],
    path: Option<&Path>,
    scope: CountScope,
) -> Result<Option<GlobalCounts>> {
    if scope == CountScope::Within {
        if path.is_some() {
            log::warn!("--counts is unused with --scope within");
        }
        return Ok(None);
    }
    let counts = match path {
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            GlobalCounts::load(BufReader::new(file), &p.display().to_string())?
        }
        None => {
            log::info!("no --counts given; building corpus counts from the input blocks");
            build_global_counts(blocks.iter().flat_map(|b| b.mentions()))
        }
    };
    Ok(Some(counts))
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output document records (JSON lines).
    #[arg(long)]
    out: PathBuf,

    /// Optional gold mention-to-author TSV.
    #[arg(long)]
    gold_out: Option<PathBuf>,

    /// Blocks are generated for every true author count 1..=max-size.
    #[arg(long, default_value_t = 10)]
    max_size: usize,

    /// Blocks per true author count.
    #[arg(long, default_value_t = 50)]
    blocks_per_size: usize,

    /// Fewest documents per author.
    #[arg(long, default_value_t = 3)]
    mentions_min: usize,

    /// Most documents per author.
    #[arg(long, default_value_t = 8)]
    mentions_max: usize,

    /// Probability that one content draw comes from another author of
    /// the same block.
    #[arg(long, default_value_t = 0.1)]
    overlap: f64,

    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let mut config = SynthConfig::balanced(args.max_size, args.blocks_per_size, args.seed);
    config.mentions_per_author = (args.mentions_min, args.mentions_max);
    config.overlap = args.overlap;
    let (records, gold) = generate_corpus(&config)?;
    let mut out = create_output(&args.out, Some(args.seed))?;
    write_records(&mut out, &records)?;
    if let Some(path) = &args.gold_out {
        let mut out = create_output(path, Some(args.seed))?;
        write_gold(&mut out, &gold)?;
    }
    println!("wrote {} records, {} gold labels", records.len(), gold.len());
    Ok(())
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Document records (JSON lines).
    #[arg(long)]
    input: PathBuf,

    /// Output blocks (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

fn run_ingest(args: &IngestArgs) -> Result<()> {
    let file =
        File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let records = read_records(BufReader::new(file), &args.input.display().to_string())?;
    let (blocks, report) = ingest_records(&records)?;
    let mut out = create_output(&args.out, None)?;
    write_blocks(&mut out, &blocks)?;
    println!("{report}; {} blocks", blocks.len());
    Ok(())
}

#[derive(Args, Debug)]
struct CountsArgs {
    /// Blocks (JSON lines).
    #[arg(long)]
    input: PathBuf,

    /// Output counts TSV.
    #[arg(long)]
    out: PathBuf,
}

fn run_counts(args: &CountsArgs) -> Result<()> {
    let blocks = load_blocks(&args.input)?;
    let counts = build_global_counts(blocks.iter().flat_map(|b| b.mentions()));
    let mut out = create_output(&args.out, None)?;
    counts.save(&mut out)?;
    println!(
        "counted {} mentions across {} blocks",
        counts.mention_count(),
        blocks.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
struct ClusterArgs {
    /// Blocks (JSON lines).
    #[arg(long)]
    input: PathBuf,

    /// Corpus counts TSV; rebuilt from the input when omitted.
    #[arg(long)]
    counts: Option<PathBuf>,

    #[command(flatten)]
    params: ParamArgs,

    /// Output assignments TSV.
    #[arg(long)]
    out: PathBuf,

    /// Continue past convergence and write the iteration traces here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn run_cluster(args: &ClusterArgs) -> Result<()> {
    let blocks = load_blocks(&args.input)?;
    let params = args.params.to_params()?;
    let overall = load_or_build_counts(&blocks, args.counts.as_deref(), params.count_scope)?;
    let results = cluster_blocks(&blocks, &params, overall.as_ref(), args.trace.is_some())?;
    let (clusterings, traces): (Vec<Clustering>, Vec<_>) = results.into_iter().unzip();

    let mut out = create_output(&args.out, None)?;
    writeln!(out, "block\tmention_id\tcluster")?;
    for (block, clustering) in blocks.iter().zip(&clusterings) {
        for (idx, mention) in block.mentions().iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}",
                block.name(),
                mention.mention_id,
                clustering.assignment()[idx]
            )?;
        }
    }
    if let Some(path) = &args.trace {
        let mut out = create_output(path, None)?;
        write_traces(&mut out, &traces)?;
    }
    let clusters: usize = clusterings.iter().map(Clustering::n_clusters).sum();
    println!("clustered {} blocks into {clusters} clusters", blocks.len());
    Ok(())
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Blocks (JSON lines) carrying gold author ids.
    #[arg(long)]
    input: PathBuf,

    /// Corpus counts TSV; rebuilt from the input when omitted.
    #[arg(long)]
    counts: Option<PathBuf>,

    #[command(flatten)]
    params: ParamArgs,

    /// Directory for report.csv, convergence_hist.csv, trace_stats.csv.
    #[arg(long)]
    out_dir: PathBuf,

    /// Metric shown on the console table.
    #[arg(long, value_enum, default_value_t = MetricArg::Bcube)]
    metric: MetricArg,

    /// Also pool pair counts over the whole corpus instead of only
    /// macro-averaging per block.
    #[arg(long)]
    pooled: bool,
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let blocks = load_blocks(&args.input)?;
    let params = args.params.to_params()?;
    let overall = load_or_build_counts(&blocks, args.counts.as_deref(), params.count_scope)?;
    let results = cluster_blocks(&blocks, &params, overall.as_ref(), true)?;
    let evals = evaluate_blocks(&blocks, &results)?;
    if evals.is_empty() {
        bail!("no gold-labeled blocks to evaluate");
    }
    let report = build_report(&evals);
    let pooled = if args.pooled {
        Some(compute_pooled(&blocks, &results)?)
    } else {
        None
    };

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut out = create_output(&args.out_dir.join("report.csv"), None)?;
    write_report(&mut out, &report)?;
    if let Some(prf) = pooled {
        writeln!(
            out,
            "pairf1_pooled,all,{},{},{},{}",
            prf.precision, prf.recall, prf.f1, report.n_blocks
        )?;
    }
    let mut out = create_output(&args.out_dir.join("convergence_hist.csv"), None)?;
    write_convergence_hist(&mut out, &report)?;
    let mut out = create_output(&args.out_dir.join("trace_stats.csv"), None)?;
    write_trace_stats(&mut out, &evals)?;

    print_table(&report, args.metric, pooled);
    Ok(())
}

fn compute_pooled<T>(blocks: &[Block], results: &[(Clustering, T)]) -> Result<Prf> {
    let mut pairs: Vec<(Clustering, Clustering)> = Vec::new();
    for (block, (sys, _)) in blocks.iter().zip(results) {
        if let Some((keep, gold)) = partial_gold(block) {
            pairs.push((sys.restricted_to(&keep), gold));
        }
    }
    Ok(pooled_pair_f1(pairs.iter().map(|(s, c)| (s, c)))?)
}

fn print_table(report: &EvalReport, metric: MetricArg, pooled: Option<Prf>) {
    let (name, base_name) = match metric {
        MetricArg::Bcube => ("bcube", "bcube_baseline"),
        MetricArg::Pairf1 => ("pairf1", "pairf1_baseline"),
    };
    let rows = report.metric_rows(name);
    let base = report.metric_rows(base_name);
    println!("{name} per true cluster count, macro-averaged:");
    println!("size  blocks   prec.    rec.      f1  base prec.  base rec.  base f1");
    for (bucket, row) in rows {
        let base_row = &base[&bucket];
        println!(
            "{:>4}  {:>6}  {:>6.4}  {:>6.4}  {:>6.4}  {:>10.4}  {:>9.4}  {:>7.4}",
            bucket.to_string(),
            row.n_blocks,
            row.precision,
            row.recall,
            row.f1,
            base_row.precision,
            base_row.recall,
            base_row.f1,
        );
    }
    if let Some(v) = report.mean_max_rec_at_perfect_precision {
        println!("mean max recall at perfect precision: {v:.4}");
    }
    if let Some(v) = report.mean_max_prec_at_perfect_recall {
        println!("mean max precision at perfect recall: {v:.4}");
    }
    if let Some(prf) = pooled {
        println!(
            "pooled pairf1: prec. {:.4}  rec. {:.4}  f1 {:.4}",
            prf.precision, prf.recall, prf.f1
        );
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Blocks (JSON lines) carrying gold author ids.
    #[arg(long)]
    input: PathBuf,

    /// Corpus counts TSV; rebuilt from the input when omitted.
    #[arg(long)]
    counts: Option<PathBuf>,

    /// Smoothing constant for the sampled scores.
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,

    /// Where feature counts come from.
    #[arg(long, value_enum, default_value_t = ScopeArg::Overall)]
    scope: ScopeArg,

    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,

    #[arg(long, default_value_t = 500)]
    epochs: usize,

    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Output weights TSV.
    #[arg(long)]
    out: PathBuf,
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let blocks = load_blocks(&args.input)?;
    let scope = match args.scope {
        ScopeArg::Within => CountScope::Within,
        ScopeArg::Overall => CountScope::Overall,
    };
    let overall = load_or_build_counts(&blocks, args.counts.as_deref(), scope)?;
    let mut samples = Vec::new();
    let mut trained_blocks = 0usize;
    for (idx, block) in blocks.iter().enumerate() {
        let Some(gold) = block.gold_clustering() else {
            continue;
        };
        let block_counts;
        let counts = match &overall {
            Some(c) => c,
            None => {
                block_counts = homonym::counts::block_counts(block);
                &block_counts
            }
        };
        let drawn = sample_pairs(
            block,
            &gold,
            counts,
            args.epsilon,
            args.seed.wrapping_add(idx as u64),
        )?;
        if !drawn.is_empty() {
            trained_blocks += 1;
        }
        samples.extend(drawn);
    }
    if samples.is_empty() {
        bail!("no trainable blocks: need gold labels with at least two authors");
    }
    let hyper = FitHyper {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
    };
    let lambda = fit_weights(&samples, hyper);
    let mut out = create_output(&args.out, Some(args.seed))?;
    save_lambda(&mut out, &lambda)?;
    println!(
        "fitted weights on {} samples from {trained_blocks} blocks:",
        samples.len()
    );
    for ftype in FeatureType::ALL {
        println!("  {:<6} {:.4}", ftype.name(), lambda[ftype.index()]);
    }
    Ok(())
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Blocks (JSON lines) carrying gold author ids.
    #[arg(long)]
    input: PathBuf,

    /// Corpus counts TSV; rebuilt from the input when omitted.
    #[arg(long)]
    counts: Option<PathBuf>,

    #[command(flatten)]
    params: ParamArgs,

    /// Merge limit intercepts to try.
    #[arg(long, value_delimiter = ',', default_value = "0.0")]
    alphas: Vec<f64>,

    /// Merge limit slopes to try; every alpha is crossed with every beta.
    #[arg(long, value_delimiter = ',', default_value = "0.000075")]
    betas: Vec<f64>,

    /// Directory for sweep.csv and sweep_hist.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let blocks = load_blocks(&args.input)?;
    let params = args.params.to_params()?;
    let overall = load_or_build_counts(&blocks, args.counts.as_deref(), params.count_scope)?;
    let grid: Vec<(f64, f64)> = args
        .alphas
        .iter()
        .flat_map(|&a| args.betas.iter().map(move |&b| (a, b)))
        .collect();
    let rows = sweep_stopping(&blocks, &params, overall.as_ref(), &grid)?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut out = create_output(&args.out_dir.join("sweep.csv"), None)?;
    write_sweep(&mut out, &rows)?;
    let mut out = create_output(&args.out_dir.join("sweep_hist.csv"), None)?;
    write_sweep_hist(&mut out, &rows)?;

    let best = &rows[0];
    println!(
        "best limit: alpha {} beta {} with mean f1 {:.4} over {} grid points",
        best.alpha,
        best.beta,
        best.mean_f1,
        rows.len()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HOMONYM_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Ingest(args) => run_ingest(args),
        Command::Counts(args) => run_counts(args),
        Command::Cluster(args) => run_cluster(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::TrainWeights(args) => run_train(args),
        Command::Sweep(args) => run_sweep(args),
    }
}
