use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tsr_core::eval::{run_benchmark, BenchmarkOptions, SelfInclusion};
use tsr_core::pipeline::{
    build_index, query, stage_one, BuildConfig, QueryFeatures, QueryMode, RetrievalIndex,
};
use tsr_core::relevance::cost;
use tsr_core::shapeio::{
    self, encode_pgm, load_dataset, load_index, save_index, LabelRule, DEFAULT_THRESHOLD,
};
use tsr_core::{BinaryShape, TsrError};

#[derive(Parser)]
#[command(
    name = "tsr",
    version,
    about = "Two-stage shape retrieval over binary silhouettes"
)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "TSR_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert images of any common format to binary PGM.
    Convert(ConvertArgs),
    /// Build a retrieval index from a dataset directory.
    Build(BuildArgs),
    /// Rank the gallery against one query image.
    Query(QueryArgs),
    /// Query every gallery shape against its own index and score the results.
    Benchmark(BenchmarkArgs),
    /// Write per-shape global features as CSV.
    DumpFeatures(DumpArgs),
    /// Write cluster membership as CSV, or per-cluster costs for a query.
    DumpClusters(DumpClustersArgs),
}

#[derive(Args)]
struct ConvertArgs {
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Gray level at or above which a pixel is foreground.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
    /// Treat dark pixels as foreground.
    #[arg(long)]
    invert: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    Prefix,
    Parent,
    Digits,
}

impl From<LabelArg> for LabelRule {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::Prefix => LabelRule::PrefixBeforeLastDash,
            LabelArg::Parent => LabelRule::ParentDirectory,
            LabelArg::Digits => LabelRule::StripTrailingDigits,
        }
    }
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "prefix")]
    labels: LabelArg,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
    /// Fail on the first undecodable file or shape.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    out: PathBuf,
    /// Starting parameters: kimia99, mpeg7 or tari1000.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Contour samples per shape.
    #[arg(long)]
    samples: Option<usize>,
    /// Trees per feature group.
    #[arg(long)]
    trees: Option<usize>,
    /// Diffusion iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    knn_w: Option<usize>,
    #[arg(long)]
    kernel_k: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Tsr,
    #[value(name = "tsr+dp")]
    TsrDp,
    LocalOnly,
    #[value(name = "local+dp")]
    LocalDp,
}

impl From<ModeArg> for QueryMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tsr => QueryMode::Tsr,
            ModeArg::TsrDp => QueryMode::TsrDp,
            ModeArg::LocalOnly => QueryMode::LocalOnly,
            ModeArg::LocalDp => QueryMode::LocalDp,
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    index: PathBuf,
    shape: PathBuf,
    #[arg(long, value_enum, default_value = "tsr+dp")]
    mode: ModeArg,
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Metric {
    All,
    Bullseye,
    Topn,
    Pr,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelfArg {
    Include,
    Exclude,
}

#[derive(Args)]
struct BenchmarkArgs {
    index: PathBuf,
    /// Labeled dataset whose labels replace the ones stored in the index.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "prefix")]
    labels: LabelArg,
    #[arg(long, value_enum, default_value = "tsr+dp")]
    mode: ModeArg,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum, default_value = "all")]
    metric: Metric,
    /// Whether a query stays in its own ranking for the top-N count.
    #[arg(long, value_enum, default_value = "exclude")]
    self_inclusion: SelfArg,
    /// Directory for the summary and CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock time in the summary.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct DumpArgs {
    index: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpClustersArgs {
    index: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit per-cluster local and global costs of this query instead.
    #[arg(long)]
    query: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
}

enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl From<TsrError> for Failure {
    fn from(e: TsrError) -> Self {
        match e {
            TsrError::InvalidConfig(_) | TsrError::InvalidM { .. } => Failure::Usage(e.to_string()),
            e if e.is_data_error() => Failure::Data(e.to_string()),
            e => Failure::Internal(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, body: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, body).map_err(|e| io_failure(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            // a closed pipe is not an error worth reporting
            let _ = stdout.write_all(body.as_bytes());
            Ok(())
        }
    }
}

/// Native PBM/PGM/PNG first, then anything the image crate reads.
fn read_shape(path: &Path, threshold: u8, invert: bool) -> Result<BinaryShape, Failure> {
    if !invert {
        match shapeio::load_shape(path, threshold) {
            Err(TsrError::UnsupportedFormat(_)) => {}
            r => return r.map_err(Failure::from),
        }
    }
    let img = image::open(path)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grid: Vec<bool> = img
        .pixels()
        .map(|p| (p.0[0] >= threshold) != invert)
        .collect();
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("shape");
    if !grid.contains(&true) {
        return Err(TsrError::EmptyShape(id.to_string()).into());
    }
    Ok(BinaryShape::new(id, w, h, grid))
}

fn convert(a: ConvertArgs) -> Outcome {
    if a.inputs.is_empty() {
        return Err(Failure::Usage(
            "convert needs at least one input image".into(),
        ));
    }
    fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    for input in &a.inputs {
        let shape = read_shape(input, a.threshold, a.invert)?;
        let dest = a.out.join(format!("{}.pgm", shape.id));
        fs::write(&dest, encode_pgm(&shape)).map_err(|e| io_failure(&dest, e))?;
        log::info!("{} -> {}", input.display(), dest.display());
    }
    Ok(())
}

fn build(a: BuildArgs) -> Outcome {
    let mut config = match &a.preset {
        Some(p) => {
            BuildConfig::preset(p).ok_or_else(|| Failure::Usage(format!("unknown preset {p}")))?
        }
        None => BuildConfig::default(),
    };
    config.seed = a.seed;
    config.k = a.k;
    if let Some(m) = a.m {
        config.m = m;
    }
    if let Some(e) = a.epsilon {
        config.epsilon = e;
    }
    if let Some(n) = a.samples {
        config.local.n_samples = n;
    }
    if let Some(t) = a.trees {
        config.forest.trees = t;
    }
    if let Some(i) = a.iters {
        config.diffusion.iters = i;
    }
    if let Some(k) = a.knn_w {
        config.diffusion.knn_w = k;
    }
    if let Some(k) = a.kernel_k {
        config.diffusion.kernel_k = k;
    }
    let gallery = load_dataset(
        &a.data.dataset,
        a.data.labels.into(),
        a.data.threshold,
        a.data.strict,
    )?;
    log::info!(
        "loaded {} shapes from {}",
        gallery.len(),
        a.data.dataset.display()
    );
    let (index, failed) = build_index(&gallery.shapes, &config, a.data.strict)?;
    for (id, why) in gallery.skipped.iter().chain(&failed) {
        eprintln!("skipped {id}: {why}");
    }
    save_index(&index, &a.out)?;
    log::info!(
        "wrote {} ({} shapes, {} clusters)",
        a.out.display(),
        index.len(),
        index.clusters.m
    );
    Ok(())
}

fn run_query(a: QueryArgs) -> Outcome {
    let index = load_index(&a.index)?;
    let shape = read_shape(&a.shape, a.threshold, false)?;
    let q = QueryFeatures::extract(&index, &shape)?;
    let mut r = query(&index, &q, a.mode.into(), a.epsilon, false)?;
    if let Some(t) = a.top {
        r.ranking.truncate(t);
    }
    if r.fallback {
        eprintln!("no cluster passed the threshold; using the cheapest one");
    }
    let mut body = String::from("rank\tid\tscore\tcluster\tJ\n");
    for (rank, s) in r.ranking.iter().enumerate() {
        let c = index.clusters.assignment[s.index];
        body.push_str(&format!(
            "{}\t{}\t{:.6}\t{}\t{:.4}\n",
            rank + 1,
            index.ids[s.index],
            s.score,
            c,
            r.relevant.costs[c]
        ));
    }
    emit(None, &body)
}

fn relabel(index: &mut RetrievalIndex, dataset: &Path, rule: LabelRule) -> Outcome {
    let gallery = load_dataset(dataset, rule, DEFAULT_THRESHOLD, false)?;
    let by_id: std::collections::HashMap<&str, &Option<String>> = gallery
        .shapes
        .iter()
        .map(|s| (s.id.as_str(), &s.label))
        .collect();
    for (id, label) in index.ids.iter().zip(index.labels.iter_mut()) {
        match by_id.get(id.as_str()) {
            Some(l) => label.clone_from(l),
            None => {
                return Err(Failure::Data(format!(
                    "index shape {id} is not in {}",
                    dataset.display()
                )))
            }
        }
    }
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Outcome {
    let mut index = load_index(&a.index)?;
    if let Some(d) = &a.dataset {
        relabel(&mut index, d, a.labels.into())?;
    }
    let dataset = a
        .dataset
        .as_deref()
        .unwrap_or(&a.index)
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("")
        .to_string();
    let opts = BenchmarkOptions {
        mode: a.mode.into(),
        epsilon: a.epsilon,
        topn_self: match a.self_inclusion {
            SelfArg::Include => SelfInclusion::Include,
            SelfArg::Exclude => SelfInclusion::Exclude,
        },
        dataset,
        ..Default::default()
    };
    let report = run_benchmark(&index, &opts)?;
    if let Some(dir) = &a.out {
        report.write_files(dir, a.timing)?;
    }
    let body = match a.metric {
        Metric::All => report.summary(a.timing),
        Metric::Bullseye => report.bulls_eye_csv(),
        Metric::Topn => report.topn_csv(),
        Metric::Pr => report.pr_csv(),
    };
    if a.timing && a.metric != Metric::All {
        eprintln!("time: {:.2}s", report.seconds);
    }
    emit(None, &body)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn dump_features(a: DumpArgs) -> Outcome {
    let index = load_index(&a.index)?;
    let mut body = String::from(
        "id,label,cluster,turning,end,t_junction,cross_junction,haar1,haar2,haar3,haar4,haar5,aspect,circularity,symmetry,solidity,\
         raw_turning,raw_end,raw_t_junction,raw_cross_junction\n",
    );
    for i in 0..index.len() {
        let mut row = vec![
            csv_field(&index.ids[i]),
            csv_field(index.labels[i].as_deref().unwrap_or("")),
            index.clusters.assignment[i].to_string(),
        ];
        row.extend(index.global[i].0.iter().map(|v| format!("{v:.6}")));
        let s = &index.raw_global[i].skeleton;
        row.extend(
            [
                s.turning_pts,
                s.end_pts,
                s.t_junction_pts,
                s.cross_junction_pts,
            ]
            .map(|v| v.to_string()),
        );
        body.push_str(&row.join(","));
        body.push('\n');
    }
    emit(a.out.as_deref(), &body)
}

fn dump_clusters(a: DumpClustersArgs) -> Outcome {
    let index = load_index(&a.index)?;
    let body = match &a.query {
        None => {
            let training: std::collections::HashSet<usize> = index
                .clusters
                .training_set
                .iter()
                .map(|&(i, _)| i)
                .collect();
            let mut body = String::from("id,label,cluster,medoid,training\n");
            for i in 0..index.len() {
                let c = index.clusters.assignment[i];
                body.push_str(&format!(
                    "{},{},{},{},{}\n",
                    csv_field(&index.ids[i]),
                    csv_field(index.labels[i].as_deref().unwrap_or("")),
                    c,
                    index.clusters.medoids[c] == i,
                    training.contains(&i)
                ));
            }
            body
        }
        Some(path) => {
            let shape = read_shape(path, DEFAULT_THRESHOLD, false)?;
            let q = QueryFeatures::extract(&index, &shape)?;
            let eps = a.epsilon.unwrap_or(index.config.epsilon);
            let (set, p_rf, p_knn) = stage_one(&index, &q, eps)?;
            let floor = index.config.floor;
            let mut body = String::from("cluster,size,local_cost,global_cost,J,relevant\n");
            let sizes = index.clusters.sizes();
            for c in 0..index.clusters.m {
                body.push_str(&format!(
                    "{c},{},{:.6},{:.6},{:.6},{}\n",
                    sizes[c],
                    cost(1.0, p_knn[c], floor),
                    cost(p_rf[c], 1.0, floor),
                    set.costs[c],
                    set.clusters.contains(&c)
                ));
            }
            body
        }
    };
    emit(a.out.as_deref(), &body)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: cannot start worker threads: {e}");
        return ExitCode::from(3);
    }
    let outcome = match cli.command {
        Command::Convert(a) => convert(a),
        Command::Build(a) => build(a),
        Command::Query(a) => run_query(a),
        Command::Benchmark(a) => benchmark(a),
        Command::DumpFeatures(a) => dump_features(a),
        Command::DumpClusters(a) => dump_clusters(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(3)
        }
    }
}
