use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use layoutpref::dataio::{load_dataset, save_dataset, make_synthetic, SyntheticSpec, SyntheticStyle};
use layoutpref::eval::{mean_iou, win_rate, write_instances_csv, EvalMode, PolicyPredictor};
use layoutpref::judge::{CachedJudge, DecisionCache, HeuristicJudge, Judge, JudgeConfig, RemoteJudge};
use layoutpref::layout::DEFAULT_BINS;
use layoutpref::metrics::{dataset_stats, quality};
use layoutpref::policy::loss::reference_log_probs;
use layoutpref::policy::optim::warmup_steps;
use layoutpref::policy::{checkpoint, ce_loss_and_grad, finite_diff_check, preference_loss_and_grad, AdamWState};
use layoutpref::policy::{CeExample, PolicyParams, PreferenceExample, DEFAULT_BETA, FEATURE_DIM};
use layoutpref::preference::{build_dataset, load_pairs, PairingConfig};
use layoutpref::render::{encode_png, render, AssetResolver, DirAssets, NoAssets, RenderMode, RenderStyle};
use layoutpref::train::{ce_examples, train_ce, train_preference, StepLog, TrainConfig};
use layoutpref::layout::TokenizedLayout;

#[derive(Debug, Parser)]
#[command(name = "layoutpref", version, about = "Layout generation pipeline: data, quality filtering, training, pairing, evaluation")]
#[command(args_override_self = true)]
struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for parallel stages; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    /// File of `key=value` lines; each becomes `--key value` and overrides the command line.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Load and validate a dataset, optionally rewriting it canonically.
    Ingest(IngestArgs),
    /// Per-layout quality report as CSV.
    Stats(StatsArgs),
    /// Keep layouts whose quality is strictly above mean minus one std.
    Filter(FilterArgs),
    /// Cross-entropy training on ground-truth layouts.
    TrainCe(TrainCeArgs),
    /// Build a judged preference dataset from policy samples.
    Pair(PairArgs),
    /// Preference training against a frozen snapshot of the starting policy.
    TrainAapa(TrainAapaArgs),
    /// Mean IoU of greedy predictions.
    EvalIou(EvalIouArgs),
    /// Judge win rate of greedy predictions against ground truth.
    EvalWinrate(EvalWinrateArgs),
    /// Render one sample to PNG.
    Render(RenderArgs),
    /// Check analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    /// grid_aligned, jittered or random.
    #[arg(long, default_value = "grid_aligned")]
    style: SyntheticStyle,
    #[arg(long)]
    out: PathBuf,
    /// Maximum per-coordinate noise in pixels for the jittered style.
    #[arg(long, default_value_t = 8)]
    jitter_px: u32,
    #[arg(long, default_value_t = 4)]
    min_elements: usize,
    #[arg(long, default_value_t = 6)]
    max_elements: usize,
    /// Fraction of samples whose boxes collapse onto one shared box.
    #[arg(long, default_value_t = 0.0)]
    degenerate_fraction: f64,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Also require ground-truth boxes on every element.
    #[arg(long)]
    validate: bool,
    /// Write the validated dataset in canonical form.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Clone)]
struct TrainArgs {
    #[arg(long, default_value_t = 1000)]
    steps: u64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.03)]
    warmup_ratio: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    /// Write every `step,lr,loss` line here instead of stdout.
    #[arg(long)]
    log_csv: Option<PathBuf>,
}

impl TrainArgs {
    fn config(&self, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            lr,
            warmup_ratio: self.warmup_ratio,
            weight_decay: self.weight_decay,
            seed,
        }
    }
}

#[derive(Debug, Args)]
struct TrainCeArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Start from this checkpoint instead of zeros.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: u32,
    /// Peak learning rate. The linear policy wants far larger steps than a
    /// pretrained network.
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[command(flatten)]
    train_args: TrainArgs,
}

#[derive(Debug, Args)]
struct JudgeArgs {
    /// heuristic or remote.
    #[arg(long, default_value = "heuristic")]
    judge: String,
    #[arg(long, default_value = "http://127.0.0.1:8000/v1")]
    endpoint: String,
    #[arg(long, default_value = "judge")]
    model_name: String,
    #[arg(long, default_value_t = 60.0)]
    timeout_secs: f64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 0.0)]
    judge_temperature: f64,
    #[arg(long)]
    swap_and_vote: bool,
    /// boxes or composite rendering for the remote judge.
    #[arg(long, default_value = "boxes")]
    render_mode: RenderMode,
    /// Directory that asset references resolve against.
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Append-only decision cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Concurrent judge requests.
    #[arg(long, default_value_t = 4)]
    in_flight: usize,
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    p_gt: f64,
    #[arg(long, default_value_t = 2)]
    candidates: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Independent pairing attempts per input.
    #[arg(long, default_value_t = 1)]
    attempts: usize,
    /// Skip the quality filter before judging.
    #[arg(long)]
    no_filter: bool,
    #[command(flatten)]
    judge: JudgeArgs,
}

#[derive(Debug, Args)]
struct TrainAapaArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Starting policy; also the frozen reference.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Peak learning rate.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[command(flatten)]
    train_args: TrainArgs,
}

#[derive(Debug, Args)]
struct EvalIouArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    /// all, single or multiple.
    #[arg(long, default_value = "all")]
    mode: EvalMode,
    /// Per-instance `instance_id,score` CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalWinrateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    judge: JudgeArgs,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    id: String,
    #[arg(long, default_value = "boxes")]
    mode: RenderMode,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Draw this policy's greedy prediction instead of ground truth.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    long_side: u32,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Alphabet size for the probe model.
    #[arg(long, default_value_t = 16)]
    bins: u32,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

/// Splices `key=value` lines from the `--config` file onto the end of argv,
/// so they take precedence over earlier flags. `key=true` becomes a bare
/// switch and `key=false` is dropped.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut out = argv;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{path}:{}: expected key=value", n + 1);
        };
        let key = format!("--{}", k.trim().replace('_', "-"));
        match v.trim() {
            "true" => out.push(key),
            "false" => {}
            v => {
                out.push(key);
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).target(env_logger::Target::Stderr).init();
    log::info!("resolved config: {cli:?}");
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Filter(a) => filter(a),
        Command::TrainCe(a) => train_ce_cmd(a, cli.seed),
        Command::Pair(a) => pair(a, cli.seed),
        Command::TrainAapa(a) => train_aapa(a, cli.seed),
        Command::EvalIou(a) => eval_iou(a),
        Command::EvalWinrate(a) => eval_winrate(a),
        Command::Render(a) => render_cmd(a),
        Command::Gradcheck(a) => gradcheck(a, cli.seed),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let mut spec = SyntheticSpec::new(seed, a.n, a.style);
    spec.jitter_px = a.jitter_px;
    spec.elements_per_sample = (a.min_elements, a.max_elements);
    spec.degenerate_fraction = a.degenerate_fraction;
    if a.n == 0 || a.min_elements > a.max_elements || !(0.0..=1.0).contains(&a.degenerate_fraction) {
        bail!("invalid synthetic spec: {spec:?}");
    }
    let samples = make_synthetic(&spec);
    save_dataset(&samples, &a.out)?;
    println!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let samples = load_dataset(&a.input)?;
    if a.validate {
        if let Some(s) = samples.iter().find(|s| !s.has_ground_truth()) {
            bail!("sample `{}` lacks ground-truth boxes", s.id);
        }
    }
    if let Some(out) = &a.out {
        save_dataset(&samples, out)?;
    }
    println!("{} valid samples in {}", samples.len(), a.input.display());
    Ok(())
}

/// `(id, report)` for every sample, in dataset order.
fn quality_rows(samples: &[layoutpref::dataio::DatasetSample]) -> Result<Vec<(String, layoutpref::metrics::QualityReport)>> {
    samples
        .iter()
        .map(|s| Ok((s.id.clone(), quality(&s.gt_layout()?)?)))
        .collect()
}

fn stats(a: &StatsArgs) -> Result<()> {
    let samples = load_dataset(&a.input)?;
    let rows = quality_rows(&samples)?;
    let st = dataset_stats(&rows.iter().map(|(_, r)| r.q).collect::<Vec<_>>())?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(out, "id,q_align,q_overlap_raw,q_overlap_norm,q,kept")?;
    for (id, r) in &rows {
        writeln!(out, "{id},{},{},{},{},{}", r.q_align, r.q_overlap_raw, r.q_overlap_norm, r.q, st.keeps(r.q))?;
    }
    out.flush()?;
    log::info!("mean {} std {} threshold {} count {}", st.mean, st.std, st.threshold, st.count);
    Ok(())
}

fn filter(a: &FilterArgs) -> Result<()> {
    let samples = load_dataset(&a.input)?;
    let rows = quality_rows(&samples)?;
    let st = dataset_stats(&rows.iter().map(|(_, r)| r.q).collect::<Vec<_>>())?;
    let kept: Vec<_> = samples.into_iter().zip(&rows).filter(|(_, (_, r))| st.keeps(r.q)).map(|(s, _)| s).collect();
    if kept.is_empty() {
        log::warn!("the filter dropped every sample (std {})", st.std);
    }
    save_dataset(&kept, &a.out)?;
    println!("kept {} of {} (threshold {})", kept.len(), st.count, st.threshold);
    Ok(())
}

fn step_sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    let mut w: Box<dyn Write> = match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(w, "step,lr,loss")?;
    Ok(w)
}

fn manifest(kind: &str, cfg: &TrainConfig, prior_steps: u64, extra: &[(&str, String)]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("objective".into(), kind.into());
    m.insert("steps".into(), (prior_steps + cfg.steps).to_string());
    m.insert("run_steps".into(), cfg.steps.to_string());
    m.insert("batch_size".into(), cfg.batch_size.to_string());
    m.insert("lr_peak".into(), cfg.lr.to_string());
    m.insert("lr_warmup_steps".into(), warmup_steps(cfg.steps, cfg.warmup_ratio).to_string());
    m.insert("lr_schedule".into(), "linear-warmup-cosine".into());
    m.insert("lr_schedule_position".into(), format!("{}/{}", cfg.steps, cfg.steps));
    m.insert("weight_decay".into(), cfg.weight_decay.to_string());
    m.insert("seed".into(), cfg.seed.to_string());
    for (k, v) in extra {
        m.insert((*k).into(), v.clone());
    }
    m
}

fn write_steps(w: &mut dyn Write, log: &StepLog, failed: &mut Option<io::Error>) {
    if failed.is_none() {
        if let Err(e) = writeln!(w, "{log}") {
            *failed = Some(e);
        }
    }
}

fn train_ce_cmd(a: &TrainCeArgs, seed: u64) -> Result<()> {
    let samples = load_dataset(&a.train)?;
    let (mut params, prior) = match &a.resume {
        Some(p) => {
            let params = checkpoint::load(p)?;
            let prior = checkpoint::load_manifest(p)?.get("steps").and_then(|s| s.parse().ok()).unwrap_or(0);
            log::info!("resuming from {} after {prior} steps", p.display());
            (params, prior)
        }
        None => (PolicyParams::zeros(a.bins), 0),
    };
    let examples = ce_examples(&samples, params.bins)?;
    let cfg = a.train_args.config(a.lr, seed);
    // optimizer moments restart with each invocation
    let mut state = AdamWState::new(params.len());
    let mut sink = step_sink(a.train_args.log_csv.as_deref())?;
    let mut failed = None;
    train_ce(&mut params, &mut state, &examples, &cfg, |l| write_steps(&mut sink, l, &mut failed))?;
    sink.flush()?;
    if let Some(e) = failed {
        return Err(e.into());
    }
    checkpoint::save(&params, &a.out, &manifest("ce", &cfg, prior, &[]))?;
    log::info!("saved {}", a.out.display());
    Ok(())
}

fn make_judge(a: &JudgeArgs) -> Result<CachedJudge<Box<dyn Judge>>> {
    let inner: Box<dyn Judge> = match a.judge.as_str() {
        "heuristic" => Box::new(HeuristicJudge),
        "remote" => {
            let cfg = JudgeConfig {
                endpoint: a.endpoint.clone(),
                model_name: a.model_name.clone(),
                timeout: Duration::try_from_secs_f64(a.timeout_secs).context("invalid timeout")?,
                max_retries: a.max_retries,
                temperature: a.judge_temperature,
                swap_and_vote: a.swap_and_vote,
                ..JudgeConfig::default()
            };
            let style = match a.render_mode {
                RenderMode::Boxes => RenderStyle::boxes(),
                RenderMode::Composite => RenderStyle::composite(),
            };
            let assets: Arc<dyn AssetResolver> = match &a.assets {
                Some(root) => Arc::new(DirAssets { root: root.clone() }),
                None => Arc::new(NoAssets),
            };
            Box::new(RemoteJudge::new(cfg, style, assets)?)
        }
        other => bail!("unknown judge `{other}` (heuristic|remote)"),
    };
    let cache = match &a.cache {
        Some(p) => {
            let c = DecisionCache::open(p)?;
            if c.skipped_lines() > 0 {
                log::warn!("skipped {} corrupt cache lines in {}", c.skipped_lines(), p.display());
            }
            c
        }
        None => DecisionCache::in_memory(),
    };
    Ok(CachedJudge::new(inner, cache))
}

fn pair(a: &PairArgs, seed: u64) -> Result<()> {
    let samples = load_dataset(&a.input)?;
    let params = checkpoint::load(&a.policy)?;
    let judge = make_judge(&a.judge)?;
    let cfg = PairingConfig {
        p_gt: a.p_gt,
        candidates_per_input: a.candidates,
        temperature: a.temperature,
        seed,
        apply_quality_filter: !a.no_filter,
        attempts_per_sample: a.attempts,
        in_flight: a.judge.in_flight,
    };
    let summary = build_dataset(&samples, &params, &judge, &cfg, &a.out)?;
    println!("{}", serde_json::to_string(&summary)?);
    log::info!("judge calls {} cache hits {}", judge.judge_calls(), judge.cache_hits());
    Ok(())
}

fn train_aapa(a: &TrainAapaArgs, seed: u64) -> Result<()> {
    let pairs = load_pairs(&a.pairs)?;
    let mut params = checkpoint::load(&a.policy)?;
    let prior = checkpoint::load_manifest(&a.policy)?.get("steps").and_then(|s| s.parse().ok()).unwrap_or(0);
    let reference = params.clone();
    let examples = pairs.iter().map(|p| p.to_example(params.bins)).collect::<Result<Vec<_>, _>>()?;
    let cfg = a.train_args.config(a.lr, seed);
    let mut state = AdamWState::new(params.len());
    let mut sink = step_sink(a.train_args.log_csv.as_deref())?;
    let mut failed = None;
    train_preference(&mut params, &reference, &mut state, &examples, a.beta, &cfg, |l| write_steps(&mut sink, l, &mut failed))?;
    sink.flush()?;
    if let Some(e) = failed {
        return Err(e.into());
    }
    let refs = reference_log_probs(&reference, &examples)?;
    let mut margin_sum = 0.0;
    for (ex, r) in examples.iter().zip(&refs) {
        margin_sum += a.beta * layoutpref::policy::loss::margin(&params, ex, *r)?;
    }
    log::info!("mean implicit reward margin on training pairs {}", margin_sum / examples.len() as f64);
    let extra = [("beta", a.beta.to_string()), ("reference", a.policy.display().to_string())];
    checkpoint::save(&params, &a.out, &manifest("preference", &cfg, prior, &extra))?;
    log::info!("saved {}", a.out.display());
    Ok(())
}

fn write_csv(path: Option<&Path>, scores: &[layoutpref::eval::InstanceScore]) -> Result<()> {
    if let Some(p) = path {
        let mut w = create(p)?;
        write_instances_csv(scores, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn eval_iou(a: &EvalIouArgs) -> Result<()> {
    let samples = load_dataset(&a.input)?;
    let params = checkpoint::load(&a.policy)?;
    let (report, scores) = mean_iou(&samples, &PolicyPredictor { params: &params }, a.mode, params.bins)?;
    write_csv(a.out.as_deref(), &scores)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn eval_winrate(a: &EvalWinrateArgs) -> Result<()> {
    let samples = load_dataset(&a.input)?;
    let params = checkpoint::load(&a.policy)?;
    let judge = make_judge(&a.judge)?;
    let (report, scores) = win_rate(&samples, &PolicyPredictor { params: &params }, &judge, a.judge.in_flight)?;
    write_csv(a.out.as_deref(), &scores)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn render_cmd(a: &RenderArgs) -> Result<()> {
    let samples = load_dataset(&a.input)?;
    let Some(sample) = samples.iter().find(|s| s.id == a.id) else {
        bail!("no sample `{}` in {}", a.id, a.input.display());
    };
    let layout = match &a.policy {
        Some(p) => {
            use layoutpref::eval::Predictor;
            let params = checkpoint::load(p)?;
            let boxes = PolicyPredictor { params: &params }.predict(sample, &Default::default())?;
            sample.layout_with(&boxes)?
        }
        None => sample.gt_layout()?,
    };
    let mut style = match a.mode {
        RenderMode::Boxes => RenderStyle::boxes(),
        RenderMode::Composite => RenderStyle::composite(),
    };
    style.target_long_side = a.long_side;
    let assets: Box<dyn AssetResolver> = match &a.assets {
        Some(root) => Box::new(DirAssets { root: root.clone() }),
        None => Box::new(NoAssets),
    };
    let img = render(&layout, &style, assets.as_ref())?;
    fs::write(&a.out, encode_png(&img)).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {}x{} to {}", img.width(), img.height(), a.out.display());
    Ok(())
}

/// Random policy, features and token sequences on a small alphabet.
fn probe_batch(bins: u32, rng: &mut ChaCha8Rng) -> (Vec<CeExample>, Vec<PreferenceExample>) {
    use rand::Rng;
    let mut features = || -> Vec<[f64; FEATURE_DIM]> {
        (0..3).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()
    };
    let f1 = features();
    let f2 = features();
    let mut tokens = |n: usize| TokenizedLayout { tokens: (0..4 * n).map(|_| rng.random_range(0..=bins)).collect(), bins };
    let ce = vec![CeExample { features: f1.clone(), tokens: tokens(3) }, CeExample { features: f2.clone(), tokens: tokens(3) }];
    let pref = vec![
        PreferenceExample { features: f1, winner: tokens(3), loser: tokens(3) },
        PreferenceExample { features: f2, winner: tokens(3), loser: tokens(3) },
    ];
    (ce, pref)
}

fn gradcheck(a: &GradcheckArgs, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = PolicyParams::random(a.bins, 0.5, &mut rng);
    let reference = PolicyParams::random(a.bins, 0.5, &mut rng);
    let (ce, pref) = probe_batch(a.bins, &mut rng);
    let ce_report = finite_diff_check(|p| ce_loss_and_grad(p, &ce).expect("valid probe batch"), &params, a.eps, seed);
    let pref_report = finite_diff_check(
        |p| preference_loss_and_grad(p, &reference, &pref, DEFAULT_BETA).expect("valid probe batch"),
        &params,
        a.eps,
        seed.wrapping_add(1),
    );
    let worst = ce_report.max_rel_error.max(pref_report.max_rel_error);
    println!("ce max_rel_error {:.3e} over {} coordinates", ce_report.max_rel_error, ce_report.probed);
    println!("preference max_rel_error {:.3e} over {} coordinates", pref_report.max_rel_error, pref_report.probed);
    println!("max relative error {worst:.3e}");
    if !(worst < a.tolerance) {
        bail!("gradient check failed: {worst:.3e} >= {:.1e}", a.tolerance);
    }
    Ok(())
}
