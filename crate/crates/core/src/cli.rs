//! Command-line front end: argument parsing, run configuration, worker pool
//! and output emission for the `corrverify` binary.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{load_image, read_cmap, save_image, write_cmap};
use crate::image::Image;
use crate::matcher::{match_prepared, to_working, PreparedImage};
use crate::metrics::{match_report, retrieval_report, EvalReport};
use crate::rerank::{run_query, Index, PipelineConfig};
use crate::synth::{gen_benchmark, procedural_sources, write_benchmark, BenchmarkConfig, BenchmarkManifest, WarpKind};
use crate::verify::{cyclic_mask, verify_pair};

/// Exit code for validation and usage errors.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit code for filesystem errors.
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "corrverify",
    version,
    about = "Dense correspondence matching, geometric verification and staged re-ranking"
)]
pub struct Cli {
    /// JSON run configuration (unknown keys are rejected) [default: built-in defaults]
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads [default: `workers` from the config, else the number of CPUs]
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic retrieval benchmark with ground-truth maps
    Synth(SynthArgs),
    /// Dense matching of two images; writes both correspondence maps
    Match(MatchArgs),
    /// Score one image pair and print the JSON record
    VerifyPair(VerifyArgs),
    /// Build a global-descriptor index over a directory of images
    Index(IndexArgs),
    /// Rank the index for every query image; one JSON line per query
    Rerank(RerankArgs),
    /// Evaluate rankings against a benchmark manifest, or a map against ground truth
    Eval(EvalArgs),
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Warp kind: affine, homography, tps or all [default: all]
    #[arg(long)]
    pub kind: Option<String>,
    /// Warp magnitude in [0, 1] [default: 0.3]
    #[arg(long)]
    pub magnitude: Option<f64>,
    /// Number of queries [default: 10]
    #[arg(long)]
    pub n_queries: Option<usize>,
    /// Warped positives per query [default: 5]
    #[arg(long)]
    pub positives: Option<usize>,
    /// Untouched distractor images [default: 50]
    #[arg(long)]
    pub distractors: Option<usize>,
    /// Image side in pixels [default: 240]
    #[arg(long)]
    pub size: Option<usize>,
    /// Benchmark seed [default: `seed` from the config, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory of source images, used in sorted order [default: procedural textures]
    #[arg(long, value_name = "DIR")]
    pub sources: Option<PathBuf>,
    /// Skip writing ground-truth maps [default: false]
    #[arg(long)]
    pub no_gt: bool,
}

#[derive(Debug, clap::Args)]
pub struct MatchArgs {
    /// Image A
    pub a: PathBuf,
    /// Image B
    pub b: PathBuf,
    /// Output prefix; writes <PREFIX>_ab.cmap and <PREFIX>_ba.cmap
    #[arg(long, value_name = "PREFIX")]
    pub out: PathBuf,
    /// Side-by-side PPM with match strokes (green: cyclically consistent) [default: none]
    #[arg(long, value_name = "PATH")]
    pub viz: Option<PathBuf>,
    /// Grid spacing of drawn strokes, in working pixels
    #[arg(long, default_value_t = 16)]
    pub viz_stride: usize,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    /// Image A
    pub a: PathBuf,
    /// Image B
    pub b: PathBuf,
    /// Write the record here instead of stdout [default: stdout]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct IndexArgs {
    /// Directory of PGM/PPM database images
    pub db_dir: PathBuf,
    /// Index output directory
    pub out_dir: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct RerankArgs {
    /// Index directory written by `index`
    #[arg(long, value_name = "DIR")]
    pub index: PathBuf,
    /// Directory of query images (ids are file stems)
    #[arg(long, value_name = "DIR")]
    pub queries: PathBuf,
    /// Write JSON lines here instead of stdout [default: stdout]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Gaussian noise added to the index descriptors before ranking
    #[arg(long, default_value_t = 0.0)]
    pub descriptor_noise: f64,
    /// Seed of the descriptor noise [default: `seed` from the config, else 0]
    #[arg(long)]
    pub noise_seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
#[command(group(ArgGroup::new("input").required(true).args(["rankings", "pred"])))]
pub struct EvalArgs {
    /// JSON-lines output of `rerank`
    #[arg(long, value_name = "PATH", requires = "manifest")]
    pub rankings: Option<PathBuf>,
    /// Benchmark manifest.json giving relevance
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Predicted correspondence map (CMAP)
    #[arg(long, value_name = "PATH", requires = "gt")]
    pub pred: Option<PathBuf>,
    /// Ground-truth correspondence map (CMAP)
    #[arg(long, value_name = "PATH")]
    pub gt: Option<PathBuf>,
    /// Recall cutoffs, comma separated [default: 1,5,10,20]
    #[arg(long, value_delimiter = ',')]
    pub recall_n: Option<Vec<usize>>,
    /// PCK thresholds in pixels, comma separated [default: 1,3,5,10]
    #[arg(long, value_delimiter = ',')]
    pub pck: Option<Vec<f64>>,
    /// Border band excluded from map metrics [default: 0]
    #[arg(long)]
    pub border: Option<usize>,
    /// Write the report here instead of stdout [default: stdout]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub recall_ns: Vec<usize>,
    pub pck_thresholds: Vec<f64>,
    pub border: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            recall_ns: vec![1, 5, 10, 20],
            pck_thresholds: vec![1.0, 3.0, 5.0, 10.0],
            border: 0,
        }
    }
}

/// Everything a run can be configured with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides the benchmark and RANSAC seeds when set.
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub pipeline: PipelineConfig,
    pub benchmark: BenchmarkConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(seed) = cfg.seed {
            cfg.benchmark.seed = seed;
            cfg.pipeline.verify.ransac.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        self.pipeline.validate()?;
        self.benchmark.validate()?;
        if self.eval.recall_ns.iter().any(|&n| n == 0) {
            return Err(Error::Config("recall cutoffs must be >= 1".into()));
        }
        if self.eval.pck_thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("PCK thresholds must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_IO
    }
}

/// Parse the process arguments and run; returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Run with explicit arguments (the first is the program name).
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("CORRVERIFY_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let workers = cli
        .workers
        .or(config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Config("--workers must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    info!("running with {workers} workers");
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a, &config),
        Command::Match(a) => cmd_match(&a, &config),
        Command::VerifyPair(a) => cmd_verify(&a, &config),
        Command::Index(a) => cmd_index(&a, &config),
        Command::Rerank(a) => cmd_rerank(&a, &config),
        Command::Eval(a) => cmd_eval(&a, &config),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::InvalidInput(format!("serialization: {e}")))
}

/// Image files of a directory sorted by path, as `(stem, path)`.
fn image_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out: Vec<(String, PathBuf)> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                    Some("pgm" | "ppm" | "pnm")
                )
        })
        .filter_map(|p| Some((p.file_stem()?.to_string_lossy().into_owned(), p)))
        .collect();
    out.sort();
    Ok(out)
}

pub fn cmd_synth(args: &SynthArgs, config: &RunConfig) -> Result<()> {
    let mut bc = config.benchmark.clone();
    if let Some(k) = &args.kind {
        bc.kinds = match k.as_str() {
            "all" => WarpKind::ALL.to_vec(),
            other => vec![other.parse()?],
        };
    }
    if let Some(m) = args.magnitude {
        bc.magnitude = m;
    }
    if let Some(n) = args.n_queries {
        bc.n_queries = n;
    }
    if let Some(n) = args.positives {
        bc.positives_per_query = n;
    }
    if let Some(n) = args.distractors {
        bc.n_distractors = n;
    }
    if let Some(s) = args.size {
        bc.size = s;
    }
    if let Some(s) = args.seed {
        bc.seed = s;
    }
    bc.validate()?;
    let sources = match &args.sources {
        Some(dir) => image_files(dir)?
            .into_iter()
            .map(|(_, p)| load_image(p))
            .collect::<Result<Vec<Image>>>()?,
        None => procedural_sources(bc.sources_needed(), bc.size, bc.seed),
    };
    let bench = gen_benchmark(&sources, &bc)?;
    write_benchmark(&bench, &args.out, !args.no_gt)?;
    info!(
        "wrote {} queries and {} database images to {}",
        bench.queries.len(),
        bench.database.len(),
        args.out.display()
    );
    Ok(())
}

fn cmap_path(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!("_{suffix}.cmap"));
    PathBuf::from(s)
}

#[derive(Serialize)]
struct MatchSummary {
    ab: PathBuf,
    ba: PathBuf,
    valid_ab: usize,
    valid_ba: usize,
    cyclic_ab: usize,
}

pub fn cmd_match(args: &MatchArgs, config: &RunConfig) -> Result<()> {
    let (a, b) = (load_image(&args.a)?, load_image(&args.b)?);
    let p = &config.pipeline;
    let (pa, pb) = rayon::join(|| PreparedImage::new(&a, &p.descriptor), || PreparedImage::new(&b, &p.descriptor));
    let (pa, pb) = (pa?, pb?);
    let dense = match_prepared(&pa, &pb, &p.matching)?;
    let (ab_path, ba_path) = (cmap_path(&args.out, "ab"), cmap_path(&args.out, "ba"));
    write_cmap(&dense.ab, &ab_path)?;
    write_cmap(&dense.ba, &ba_path)?;
    let cyclic = cyclic_mask(&dense.ab, &dense.ba, p.verify.cyclic_epsilon);
    if let Some(viz) = &args.viz {
        if args.viz_stride == 0 {
            return Err(Error::Config("--viz-stride must be >= 1".into()));
        }
        let canvas = draw_matches(&to_working(&a)?, &to_working(&b)?, &dense.ab, &cyclic, args.viz_stride)?;
        save_image(&canvas, viz)?;
    }
    let summary = MatchSummary {
        valid_ab: dense.ab.valid_count(),
        valid_ba: dense.ba.valid_count(),
        cyclic_ab: cyclic.count(),
        ab: ab_path,
        ba: ba_path,
    };
    emit(None, &(to_json(&summary)? + "\n"))
}

/// A and B side by side in RGB with a stroke per sampled pixel of B to its
/// match in A.
pub fn draw_matches(
    a: &Image,
    b: &Image,
    ab: &crate::cmap::CorrespondenceMap,
    cyclic: &crate::cmap::Mask,
    stride: usize,
) -> Result<Image> {
    let (ha, wa) = (a.height(), a.width());
    let (hb, wb) = (b.height(), b.width());
    let (h, w) = (ha.max(hb), wa + wb);
    let mut px = vec![0.0f32; h * w * 3];
    for (img, x0) in [(a, 0), (b, wa)] {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let v = img.luma(y, x);
                let i = (y * w + x0 + x) * 3;
                px[i..i + 3].copy_from_slice(&[v, v, v]);
            }
        }
    }
    let offset = stride / 2;
    for y in (offset..hb).step_by(stride) {
        for x in (offset..wb).step_by(stride) {
            let Some([sx, sy]) = ab.get(y, x) else { continue };
            let color = if cyclic.get(y, x) { [0.1, 0.9, 0.1] } else { [0.9, 0.1, 0.1] };
            line(&mut px, (h, w), (sx as f64, sy as f64), ((wa + x) as f64, y as f64), color);
        }
    }
    Image::new(h, w, 3, px)
}

fn line(px: &mut [f32], (h, w): (usize, usize), from: (f64, f64), to: (f64, f64), color: [f32; 3]) {
    let steps = (to.0 - from.0).abs().max((to.1 - from.1).abs()).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let x = (from.0 + t * (to.0 - from.0)).round();
        let y = (from.1 + t * (to.1 - from.1)).round();
        if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
            let i = (y as usize * w + x as usize) * 3;
            px[i..i + 3].copy_from_slice(&color);
        }
    }
}

pub fn cmd_verify(args: &VerifyArgs, config: &RunConfig) -> Result<()> {
    let (a, b) = (load_image(&args.a)?, load_image(&args.b)?);
    let p = &config.pipeline;
    let (pa, pb) = rayon::join(|| PreparedImage::new(&a, &p.descriptor), || PreparedImage::new(&b, &p.descriptor));
    let scores = verify_pair(&pa?, &pb?, &p.matching, &p.verify)?;
    emit(args.out.as_deref(), &(to_json(&scores)? + "\n"))
}

#[derive(Serialize)]
struct IndexSummary<'a> {
    entries: usize,
    config_hash: &'a str,
    out: &'a Path,
}

pub fn cmd_index(args: &IndexArgs, config: &RunConfig) -> Result<()> {
    let index = Index::build(&args.db_dir, &config.pipeline.descriptor)?;
    index.save(&args.out_dir)?;
    let summary = IndexSummary {
        entries: index.len(),
        config_hash: &index.config_hash,
        out: &args.out_dir,
    };
    emit(None, &(to_json(&summary)? + "\n"))
}

pub fn cmd_rerank(args: &RerankArgs, config: &RunConfig) -> Result<()> {
    let mut index = Index::load(&args.index)?;
    if index.descriptor_config != config.pipeline.descriptor {
        return Err(Error::Config("index was built with a different descriptor config".into()));
    }
    if args.descriptor_noise < 0.0 || !args.descriptor_noise.is_finite() {
        return Err(Error::Config("--descriptor-noise must be finite and non-negative".into()));
    }
    if args.descriptor_noise > 0.0 {
        let seed = args.noise_seed.or(config.seed).unwrap_or(0);
        index = index.with_descriptor_noise(args.descriptor_noise, seed)?;
    }
    let queries = image_files(&args.queries)?;
    if queries.is_empty() {
        return Err(Error::InvalidInput(format!("no query images in {}", args.queries.display())));
    }
    let mut out = String::new();
    for (id, path) in &queries {
        let result = run_query(id, &load_image(path)?, &index, &index, &config.pipeline)?;
        info!("query {id}: top {:?}", result.stage2.items.first().map(|i| &i.id));
        out.push_str(&to_json(&result)?);
        out.push('\n');
    }
    emit(args.out.as_deref(), &out)
}

/// Per-stage id lists read back from `rerank` output.
fn read_rankings(path: &Path) -> Result<BTreeMap<&'static str, Vec<(String, Vec<String>)>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut stages: BTreeMap<&'static str, Vec<(String, Vec<String>)>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| Error::InvalidInput(format!("{}:{}: {what}", path.display(), n + 1));
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
        let query = v["query"].as_str().ok_or_else(|| bad("missing `query`"))?.to_string();
        for stage in ["global", "stage1", "stage2"] {
            let items = v[stage]["items"]
                .as_array()
                .ok_or_else(|| bad(&format!("missing `{stage}.items`")))?;
            let ids = items
                .iter()
                .map(|it| it["id"].as_str().map(str::to_string).ok_or_else(|| bad("item without id")))
                .collect::<Result<Vec<_>>>()?;
            stages.entry(stage).or_default().push((query.clone(), ids));
        }
    }
    if stages.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no rankings", path.display())));
    }
    Ok(stages)
}

pub fn cmd_eval(args: &EvalArgs, config: &RunConfig) -> Result<()> {
    let ec = &config.eval;
    let text = if let Some(rankings) = &args.rankings {
        let manifest_path = args
            .manifest
            .as_ref()
            .ok_or_else(|| Error::Config("--rankings needs --manifest".into()))?;
        let relevance = BenchmarkManifest::load(manifest_path)?.relevance();
        let ns = args.recall_n.clone().unwrap_or_else(|| ec.recall_ns.clone());
        if ns.iter().any(|&n| n == 0) {
            return Err(Error::Config("recall cutoffs must be >= 1".into()));
        }
        let reports = read_rankings(rankings)?
            .into_iter()
            .map(|(stage, r)| Ok((stage, retrieval_report(&r, &relevance, &ns)?)))
            .collect::<Result<BTreeMap<&str, EvalReport>>>()?;
        to_json(&reports)?
    } else {
        let (pred, gt) = match (&args.pred, &args.gt) {
            (Some(p), Some(g)) => (read_cmap(p)?, read_cmap(g)?),
            _ => return Err(Error::Config("--pred needs --gt".into())),
        };
        let thresholds = args.pck.clone().unwrap_or_else(|| ec.pck_thresholds.clone());
        if thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("PCK thresholds must be finite and non-negative".into()));
        }
        to_json(&match_report(&pred, &gt, &thresholds, args.border.unwrap_or(ec.border))?)?
    };
    emit(args.out.as_deref(), &(text + "\n"))
}
