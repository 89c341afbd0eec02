//! The `cia` command line. [`dispatch`] parses arguments, runs one
//! subcommand and maps failures to exit codes: 0 ok, 1 usage, 2 data or
//! validation, 3 backend.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::ablation::{self, AblationError, GbdtParams};
use crate::baselines::{self, BaselineError, CutoffStrategy, Embedder, HashingEmbedder, HttpEmbedder, SimilarityRanking};
use crate::config::{CliConfig, ConfigError, EmbeddingBackendKind, EntailmentBackendKind};
use crate::corpus::{gold_stats, load_dataset, resolve_dataset_path, ChangeRationale, CorpusError, Dataset, ReqId};
use crate::entailment::{
    build_loo_folds, run_loo, EntailmentError, LabelSource, LexicalEntailment, LexicalNliService, NliClient,
    NliHyperparams, NliService, Predictor, TrainedModel,
};
use crate::llm::{ChatBackend, HttpChatBackend, LlmError, ReplayBackend, ReplayMode, ReplayStore};
use crate::metrics::{self, render_report, render_stage_table, EvalReport, MetricsError, ReportFormat, StageRow};
use crate::pipeline::{
    for_each_rationale, read_impact_set, read_trace, write_run_artifacts, ImpactCandidate, ImpactSet, Origin,
    Pipeline, PipelineConfig, PipelineError, RunTrace, IMPACT_SET_FILE, TRACE_FILE,
};
use crate::promptkit::{enumerate_prompts, DetailTextCatalog, PromptError, PromptSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<EntailmentError> for CliError {
    fn from(e: EntailmentError) -> Self {
        match e {
            EntailmentError::Corpus(_)
            | EntailmentError::MissingRefinedSet(_)
            | EntailmentError::MissingLabel { .. }
            | EntailmentError::UnknownRequirement(_)
            | EntailmentError::EmptyText(_) => CliError::Data(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Prompt(p) => p.into(),
            PipelineError::Llm(l) => l.into(),
            PipelineError::Entailment(x) => x.into(),
            PipelineError::Ranking { .. } => CliError::Backend(e.to_string()),
            PipelineError::ZeroBudget => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Llm(l) => l.into(),
            BaselineError::Embedding(_) => CliError::Backend(e.to_string()),
            BaselineError::BadK { .. } | BaselineError::EmptyGrid => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AblationError> for CliError {
    fn from(e: AblationError) -> Self {
        match e {
            AblationError::NoEstimators | AblationError::BadSubsample(_) | AblationError::EmptyGrid => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_data(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "cia", version, about = "Change impact analysis over natural-language requirements")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dataset utilities.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Prompt variants.
    Prompts {
        #[command(subcommand)]
        command: PromptsCommand,
    },
    /// Run the impact pipeline on every change rationale.
    Run(RunArgs),
    /// `run` against the live backend, storing every response for replay.
    Record(RunArgs),
    /// Comparison baselines.
    Baseline {
        #[command(subcommand)]
        command: BaselineCommand,
    },
    /// Score run artifacts against gold.
    Eval(EvalArgs),
    /// Prompt-detail importance from per-prompt F2 scores.
    Ablate(AblateArgs),
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Check a dataset file (or directory holding `dataset.json`).
    Validate { path: PathBuf },
}

#[derive(Debug, Subcommand)]
enum PromptsCommand {
    /// All 64 variants with their detail sets.
    List,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReplayArg {
    Record,
    Replay,
    Strict,
}

impl From<ReplayArg> for ReplayMode {
    fn from(r: ReplayArg) -> Self {
        match r {
            ReplayArg::Record => ReplayMode::Record,
            ReplayArg::Replay => ReplayMode::Replay,
            ReplayArg::Strict => ReplayMode::StrictReplay,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct LlmArgs {
    /// Dataset file or directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Prompt variant, P1..P64.
    #[arg(long)]
    prompt: Option<String>,
    /// Replay mode; without it every call goes to the live endpoint.
    #[arg(long, value_enum)]
    replay: Option<ReplayArg>,
    /// Replay store directory [default: <dataset dir>/replay].
    #[arg(long)]
    replay_dir: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// LLM sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Domain named in the context detail [default: dataset name].
    #[arg(long)]
    domain: Option<String>,
    /// Directory with prompt template files.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Output directory for per-rationale artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rationales processed concurrently.
    #[arg(long)]
    parallel: Option<usize>,
    /// Restrict to these change rationales.
    #[arg(long = "rationale")]
    rationales: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EntailmentArg {
    Lexical,
    Remote,
    Loo,
    LooLexical,
}

impl From<EntailmentArg> for EntailmentBackendKind {
    fn from(e: EntailmentArg) -> Self {
        match e {
            EntailmentArg::Lexical => EntailmentBackendKind::Lexical,
            EntailmentArg::Remote => EntailmentBackendKind::Remote,
            EntailmentArg::Loo => EntailmentBackendKind::Loo,
            EntailmentArg::LooLexical => EntailmentBackendKind::LooLexical,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[command(flatten)]
    llm: LlmArgs,
    /// Token budget per LLM call; longer requirement lists are batched.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    no_refinement: bool,
    #[arg(long)]
    no_filtering: bool,
    /// Source of entailment labels for filtering.
    #[arg(long, value_enum)]
    entailment: Option<EntailmentArg>,
    /// Lexical entailment threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Trained model id on the NLI service (remote entailment).
    #[arg(long)]
    nli_model: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    T1,
    T2,
    T3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmbedderArg {
    Hashing,
    Http,
}

#[derive(Debug, Subcommand)]
enum BaselineCommand {
    /// Embedding similarity with a cutoff strategy.
    Sim {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// JSON similarity ranking (`{"entries": [[id, score], ..]}`) to cut instead of a dataset.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "t1")]
        strategy: StrategyArg,
        /// T1 threshold.
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, value_enum)]
        embedder: Option<EmbedderArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The impact prompt applied to each requirement separately.
    Iter {
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Similarity retrieval of the top k, then a yes/no question per pair.
    Cot {
        #[command(flatten)]
        llm: LlmArgs,
        /// Retrieval depth; without it k is chosen on gold from {5, 10, ..}.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        embedder: Option<EmbedderArg>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Directory written by `run` (or a baseline with `--out`).
    #[arg(long)]
    run: PathBuf,
    /// Per-stage totals (initial, refinement, filtering) instead of per-rationale rows.
    #[arg(long)]
    stages: bool,
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
}

#[derive(Debug, Clone, Args)]
struct AblateArgs {
    /// CSV with prompt_id and f2 (or F2 / f2_pct) columns.
    #[arg(long)]
    scores: PathBuf,
    /// One row per (prompt, rationale) instead of one per prompt.
    #[arg(long)]
    per_rationale: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    n_estimators: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    #[arg(long, default_value_t = 1.0)]
    subsample: f64,
    /// Pick the estimator count by the MSE elbow over this grid, e.g. 10,20,40.
    #[arg(long, value_delimiter = ',')]
    elbow: Vec<usize>,
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
}

/// Runs the command line `argv` (including the program name), writing
/// results to stdout and diagnostics to stderr. Returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    dispatch_to(argv, &mut out)
}

/// [`dispatch`] with results written to `out`.
pub fn dispatch_to<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let w = |r: std::io::Result<()>| r.map_err(|e| CliError::Data(format!("cannot write output: {e}")));
    match cli.command {
        Command::Dataset {
            command: DatasetCommand::Validate { path },
        } => {
            let ds = load_dataset(&path)?;
            let gold = match gold_stats(&ds) {
                Ok(g) => format!(
                    "gold: {} impacted ({:.1}%)",
                    g.impacted,
                    metrics::pct1(g.percentage)
                ),
                Err(_) => "gold: none".to_string(),
            };
            w(writeln!(
                out,
                "{}: {} requirements, {} change rationales, {}",
                ds.name(),
                ds.n_req(),
                ds.n_rationales(),
                gold
            ))
        }
        Command::Prompts {
            command: PromptsCommand::List,
        } => {
            for p in enumerate_prompts() {
                w(writeln!(out, "{}: {}", p.prompt_id, p.detail_label()))?;
            }
            Ok(())
        }
        Command::Run(args) => cmd_run(&cfg, args, None, out),
        Command::Record(args) => cmd_run(&cfg, args, Some(ReplayMode::Record), out),
        Command::Baseline { command } => cmd_baseline(&cfg, command, out),
        Command::Eval(args) => cmd_eval(&cfg, args, out),
        Command::Ablate(args) => cmd_ablate(args, out),
    }
}

struct Session {
    dataset: Dataset,
    rationales: Vec<ChangeRationale>,
    catalog: DetailTextCatalog,
    pipeline: PipelineConfig,
    llm: Box<dyn ChatBackend>,
    out: Option<PathBuf>,
    parallel: usize,
}

fn dataset_path(flag: &Option<PathBuf>, cfg: &CliConfig) -> Result<PathBuf, CliError> {
    flag.clone()
        .or_else(|| cfg.dataset.clone())
        .ok_or_else(|| CliError::Usage("no dataset given (--dataset or `dataset` in the config)".into()))
}

fn dataset_dir(path: &Path) -> PathBuf {
    let file = resolve_dataset_path(path);
    file.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

fn open_session(cfg: &CliConfig, a: &LlmArgs, forced_mode: Option<ReplayMode>) -> Result<Session, CliError> {
    let path = dataset_path(&a.dataset, cfg)?;
    let dataset = load_dataset(&path)?;

    let rationales: Vec<ChangeRationale> = if a.rationales.is_empty() {
        dataset.rationales().to_vec()
    } else {
        a.rationales
            .iter()
            .map(|id| {
                dataset
                    .rationale(id)
                    .cloned()
                    .ok_or_else(|| CliError::Data(format!("unknown change rationale `{id}`")))
            })
            .collect::<Result<_, _>>()?
    };

    let domain = a
        .domain
        .clone()
        .or_else(|| cfg.pipeline.domain.clone())
        .unwrap_or_else(|| dataset.name().to_string());
    let catalog = match a.templates.as_ref().or(cfg.pipeline.templates.as_ref()) {
        Some(dir) => DetailTextCatalog::from_dir(dir, domain)?,
        None => DetailTextCatalog::builtin(domain),
    };

    let mut params = cfg.llm.params;
    if let Some(s) = a.seed {
        params.seed = s;
    }
    let prompt = a.prompt.clone().unwrap_or_else(|| cfg.pipeline.prompt.clone());
    PromptSpec::from_id(&prompt)?;
    let pipeline = PipelineConfig {
        prompt_id: prompt,
        refinement: cfg.pipeline.refinement,
        filtering: cfg.pipeline.filtering,
        batch_token_budget: cfg.pipeline.batch_token_budget,
        repetitions: 1,
        ranking_fallback: cfg.pipeline.ranking_fallback,
        model: a.model.clone().unwrap_or_else(|| cfg.llm.model.clone()),
        params,
    };

    let live: Option<Box<dyn ChatBackend>> = match &cfg.llm.endpoint {
        Some(url) => Some(Box::new(HttpChatBackend::new(url.clone(), cfg.llm.api_key_env.clone())?)),
        None => None,
    };
    let mode = forced_mode.or(a.replay.map(Into::into)).or(cfg.replay.mode);
    let replay_dir = a
        .replay_dir
        .clone()
        .or_else(|| cfg.replay.dir.clone())
        .unwrap_or_else(|| dataset_dir(&path).join("replay"));
    let llm: Box<dyn ChatBackend> = match mode {
        None => live.ok_or_else(|| {
            CliError::Usage("no LLM endpoint configured (set llm.endpoint) and no --replay mode given".into())
        })?,
        Some(ReplayMode::StrictReplay) => Box::new(ReplayBackend::strict(ReplayStore::open(&replay_dir))),
        Some(ReplayMode::Record) if live.is_none() => {
            return Err(CliError::Usage("record mode needs llm.endpoint in the config".into()))
        }
        Some(m) => Box::new(ReplayBackend::new(ReplayStore::open(&replay_dir), m, live)?),
    };

    Ok(Session {
        dataset,
        rationales,
        catalog,
        pipeline,
        llm,
        out: a.out.clone().or_else(|| cfg.out.clone()),
        parallel: a.parallel.or(cfg.parallel).unwrap_or(1).max(1),
    })
}

fn ids_line(set: &ImpactSet) -> String {
    set.iter().map(|c| c.req_id.as_str()).collect::<Vec<_>>().join(" ")
}

fn emit(
    session: &Session,
    results: Vec<(ImpactSet, RunTrace)>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    for (set, trace) in &results {
        if let Some(dir) = &session.out {
            write_run_artifacts(dir, set, trace)?;
        }
        writeln!(out, "{}: {}", trace.rationale_id, ids_line(set))
            .map_err(|e| CliError::Data(format!("cannot write output: {e}")))?;
    }
    Ok(())
}

fn collect<T>(results: Vec<Result<T, CliError>>) -> Result<Vec<T>, CliError> {
    results.into_iter().collect()
}

fn cmd_run(cfg: &CliConfig, args: RunArgs, forced: Option<ReplayMode>, out: &mut dyn Write) -> Result<(), CliError> {
    let mut session = open_session(cfg, &args.llm, forced)?;
    if let Some(b) = args.budget {
        session.pipeline.batch_token_budget = b;
    }
    if args.no_refinement {
        session.pipeline.refinement = false;
    }
    if args.no_filtering {
        session.pipeline.filtering = false;
    }
    let ent = &cfg.entailment;
    let kind: EntailmentBackendKind = args.entailment.map(Into::into).unwrap_or(ent.backend);
    let lexical = LexicalEntailment::new(args.threshold.unwrap_or(ent.threshold), ent.measure);
    let remote = || -> Result<NliClient, CliError> {
        let url = ent
            .endpoint
            .clone()
            .ok_or_else(|| CliError::Usage("remote entailment needs entailment.endpoint".into()))?;
        Ok(NliClient::new(url, ent.token_env.clone())?)
    };

    let pipeline = Pipeline::new(session.llm.as_ref(), &session.catalog, &session.pipeline);
    let ds = &session.dataset;
    let discovered = collect(for_each_rationale(&session.rationales, session.parallel, |c| {
        pipeline.discover(c, ds).map_err(CliError::from)
    }))?;

    let remote_client: Option<NliClient>;
    let labels: Box<dyn LabelSource> = match kind {
        EntailmentBackendKind::Lexical => Box::new(Predictor(lexical)),
        EntailmentBackendKind::Remote => {
            let model_id = args
                .nli_model
                .clone()
                .or_else(|| ent.model_id.clone())
                .ok_or_else(|| CliError::Usage("remote entailment needs --nli-model".into()))?;
            remote_client = Some(remote()?);
            let service = remote_client.as_ref().expect("just set");
            Box::new(Predictor(TrainedModel { service, model_id }))
        }
        EntailmentBackendKind::Loo | EntailmentBackendKind::LooLexical => {
            if !session.pipeline.filtering {
                Box::new(Predictor(lexical))
            } else {
                let service: Box<dyn NliService> = match kind {
                    EntailmentBackendKind::Loo => Box::new(remote()?),
                    _ => Box::new(LexicalNliService::new(lexical)),
                };
                let refined: HashMap<String, ImpactSet> = discovered
                    .iter()
                    .map(|(set, trace)| (trace.rationale_id.clone(), set.clone()))
                    .collect();
                let mut missing = ds.rationales().iter().filter(|c| !refined.contains_key(&c.id)).peekable();
                if missing.peek().is_some() {
                    return Err(CliError::Usage("leave-one-out entailment needs every change rationale".into()));
                }
                let folds = build_loo_folds(ds, &refined)?;
                let hp = NliHyperparams {
                    learning_rate: ent.learning_rate,
                    seed: ent.seed,
                    ..NliHyperparams::default()
                };
                Box::new(run_loo(&folds, service.as_ref(), &hp)?)
            }
        }
    };

    let mut results = Vec::with_capacity(discovered.len());
    for ((set, mut trace), c) in discovered.into_iter().zip(&session.rationales) {
        let filtered = pipeline.filter(c, ds, set, &mut trace, labels.as_ref())?;
        results.push((filtered, trace));
    }
    emit(&session, results, out)
}

fn embedder(cfg: &CliConfig, flag: Option<EmbedderArg>) -> Result<Box<dyn Embedder>, CliError> {
    let e = &cfg.embedding;
    let kind = match flag {
        Some(EmbedderArg::Hashing) => EmbeddingBackendKind::Hashing,
        Some(EmbedderArg::Http) => EmbeddingBackendKind::Http,
        None => e.backend,
    };
    Ok(match kind {
        EmbeddingBackendKind::Hashing => Box::new(HashingEmbedder::new(e.dim.max(1))),
        EmbeddingBackendKind::Http => {
            let url = e
                .endpoint
                .clone()
                .ok_or_else(|| CliError::Usage("http embedder needs embedding.endpoint".into()))?;
            let model = e
                .model
                .clone()
                .ok_or_else(|| CliError::Usage("http embedder needs embedding.model".into()))?;
            Box::new(HttpEmbedder::new(url, model, e.api_key_env.clone())?)
        }
    })
}

fn cmd_baseline(cfg: &CliConfig, command: BaselineCommand, out: &mut dyn Write) -> Result<(), CliError> {
    let w = |r: std::io::Result<()>| r.map_err(|e| CliError::Data(format!("cannot write output: {e}")));
    match command {
        BaselineCommand::Sim {
            dataset,
            scores,
            strategy,
            theta,
            embedder: emb,
            out: out_dir,
        } => {
            let strategy = match strategy {
                StrategyArg::T1 => {
                    if !(0.0..=1.0).contains(&theta) {
                        return Err(CliError::Usage(format!("--theta must be in [0, 1], got {theta}")));
                    }
                    CutoffStrategy::T1 { theta }
                }
                StrategyArg::T2 => CutoffStrategy::T2,
                StrategyArg::T3 => CutoffStrategy::T3,
            };
            if let Some(path) = scores {
                let raw = fs::read_to_string(&path).map_err(io_data(&path))?;
                let ranking: SimilarityRanking = serde_json::from_str(&raw)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                let ranking = SimilarityRanking::from_scores(ranking.entries);
                for id in baselines::apply_cutoff(&ranking, strategy)? {
                    w(writeln!(out, "{id}"))?;
                }
                return Ok(());
            }
            let path = dataset_path(&dataset, cfg)?;
            let ds = load_dataset(&path)?;
            let embedder = embedder(cfg, emb)?;
            let label = format!("sim-{strategy:?}").to_lowercase();
            for c in ds.rationales() {
                let ranking = baselines::rank_by_similarity(c, &ds, embedder.as_ref())?;
                let kept: HashSet<ReqId> = baselines::apply_cutoff(&ranking, strategy)?.into_iter().collect();
                let set = ImpactSet::from_candidates(ranking.entries.iter().filter(|e| kept.contains(&e.0)).map(|e| {
                    ImpactCandidate::new(e.0 .0.clone(), format!("cosine {:.4}", e.1), Origin::Initial)
                }));
                let mut trace = RunTrace::new(&c.id, &label);
                trace.stages.final_ids = set.ids();
                if let Some(dir) = &out_dir {
                    write_run_artifacts(dir, &set, &trace)?;
                }
                w(writeln!(out, "{}: {}", c.id, ids_line(&set)))?;
            }
            Ok(())
        }
        BaselineCommand::Iter { llm } => {
            let session = open_session(cfg, &llm, None)?;
            let pipeline = Pipeline::new(session.llm.as_ref(), &session.catalog, &session.pipeline);
            let spec = PromptSpec::from_id(&session.pipeline.prompt_id)?;
            let ds = &session.dataset;
            let results = collect(for_each_rationale(&session.rationales, 1, |c| {
                let mut trace = RunTrace::new(&c.id, &spec.prompt_id);
                let set = baselines::iterative_baseline(&pipeline, c, ds, &spec, session.parallel, &mut trace)?;
                Ok((set, trace))
            }))?;
            emit(&session, results, out)
        }
        BaselineCommand::Cot { llm, k, embedder: emb } => {
            let session = open_session(cfg, &llm, None)?;
            let embedder = embedder(cfg, emb)?;
            let pipeline = Pipeline::new(session.llm.as_ref(), &session.catalog, &session.pipeline);
            let ds = &session.dataset;
            let grid = match k {
                Some(k) => vec![k],
                None => {
                    if !ds.has_gold() {
                        return Err(CliError::Data("choosing k needs gold; pass --k".into()));
                    }
                    let g = baselines::default_k_grid(ds.n_req());
                    if g.is_empty() {
                        vec![ds.n_req()]
                    } else {
                        g
                    }
                }
            };
            let k_max = *grid.iter().max().expect("grid is non-empty");
            // Answers do not depend on k, so one pass at the largest k serves the whole grid.
            let full = collect(for_each_rationale(&session.rationales, 1, |c| {
                let ranking = baselines::rank_by_similarity(c, ds, embedder.as_ref())?;
                let mut trace = RunTrace::new(&c.id, "cot");
                let set = baselines::cot_baseline(&pipeline, c, ds, &ranking, k_max, session.parallel, &mut trace)?;
                Ok((ranking, set, trace))
            }))?;
            let at_k = |k: usize| -> Vec<(ImpactSet, RunTrace)> {
                full.iter()
                    .map(|(ranking, set, trace)| {
                        let top: HashSet<ReqId> = ranking.top(k).into_iter().collect();
                        let s = ImpactSet::from_candidates(set.iter().filter(|c| top.contains(&c.req_id)).cloned());
                        let mut t = trace.clone();
                        t.stages.final_ids = s.ids();
                        (s, t)
                    })
                    .collect()
            };
            let (best_k, f2) = baselines::grid_search_k(&grid, |k| -> Result<f64, CliError> {
                if grid.len() == 1 {
                    return Ok(0.0);
                }
                let predicted: HashMap<String, HashSet<ReqId>> =
                    at_k(k).into_iter().map(|(s, t)| (t.rationale_id, s.id_set())).collect();
                Ok(metrics::evaluate(ds, &predicted)?.micro.f2)
            })?;
            if grid.len() > 1 {
                w(writeln!(out, "k = {best_k} (micro F2 {:.1})", metrics::pct1(f2)))?;
            }
            emit(&session, at_k(best_k), out)
        }
    }
}

fn run_dirs(dataset: &Dataset, run: &Path) -> Vec<(String, PathBuf)> {
    dataset
        .rationales()
        .iter()
        .map(|c| (c.id.clone(), run.join(&c.id)))
        .filter(|(_, d)| d.is_dir())
        .collect()
}

fn cmd_eval(cfg: &CliConfig, args: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let path = dataset_path(&args.dataset, cfg)?;
    let ds = load_dataset(&path)?;
    if !ds.has_gold() {
        return Err(CliError::Data(format!("{} has no gold impact sets", path.display())));
    }
    let dirs = run_dirs(&ds, &args.run);
    if dirs.is_empty() {
        return Err(CliError::Data(format!("no run artifacts under {}", args.run.display())));
    }
    let format: ReportFormat = args.format.into();
    let text = if args.stages {
        let traces = dirs
            .iter()
            .map(|(_, d)| {
                let p = d.join(TRACE_FILE);
                read_trace(&p).map_err(io_data(&p))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let stage = |pick: &dyn Fn(&RunTrace) -> Option<Vec<ReqId>>| -> Result<Option<EvalReport>, CliError> {
            let mut predicted = HashMap::new();
            for t in &traces {
                match pick(t) {
                    Some(ids) => {
                        predicted.insert(t.rationale_id.clone(), ids.into_iter().collect::<HashSet<_>>());
                    }
                    None => return Ok(None),
                }
            }
            Ok(Some(metrics::evaluate(&ds, &predicted)?))
        };
        let mut rows = Vec::new();
        if let Some(r) = stage(&|t| Some(t.stages.initial.clone()))? {
            rows.push(StageRow::from_report("w/o", &r));
        }
        let refined = stage(&|t| t.stages.refined.clone())?;
        if let Some(r) = &refined {
            rows.push(StageRow::from_report("Refinement", r));
        }
        if let Some(r) = stage(&|t| t.stages.ranked.as_ref().map(|_| t.stages.final_ids.clone()))? {
            let label = if refined.is_some() { "Refinement+Filtering" } else { "Filtering" };
            rows.push(StageRow::from_report(label, &r));
        }
        render_stage_table(&rows, format)
    } else {
        let mut predicted = HashMap::new();
        for (id, d) in &dirs {
            let p = d.join(IMPACT_SET_FILE);
            let doc = read_impact_set(&p).map_err(io_data(&p))?;
            predicted.insert(id.clone(), doc.candidates.into_iter().map(|c| c.req_id).collect::<HashSet<_>>());
        }
        let report = metrics::evaluate(&ds, &predicted)?;
        for warning in &report.warnings {
            eprintln!("warning: {warning}");
        }
        render_report(&report, format)
    };
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(format!("cannot write output: {e}")))
}

fn cmd_ablate(args: AblateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = fs::File::open(&args.scores).map_err(io_data(&args.scores))?;
    let records = ablation::read_score_table(file)?;
    let mut params = GbdtParams {
        n_estimators: args.n_estimators,
        learning_rate: args.learning_rate,
        max_depth: args.max_depth,
        subsample: args.subsample,
        seed: args.seed,
    };
    let mut reports = Vec::new();
    for (context, rows) in ablation::rows_by_context(&records, args.per_rationale)? {
        if !args.elbow.is_empty() {
            params.n_estimators = ablation::elbow_select(&rows, &args.elbow, &params)?;
            eprintln!("{context}: elbow at {} estimators", params.n_estimators);
        }
        reports.push(ablation::importance_report(context, &rows, &params)?);
    }
    out.write_all(ablation::render_importance(&reports, args.format.into()).as_bytes())
        .map_err(|e| CliError::Data(format!("cannot write output: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = dispatch_to(std::iter::once("cia").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn prompts_list_has_64_lines() {
        let (code, text) = run(&["prompts", "list"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 64);
        assert_eq!(lines[0], "P1: {2}");
        assert_eq!(lines[29], "P30: {1,2,5,6}");
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run(&["nonsense"]).0, 1);
        assert_eq!(run(&["run", "--replay", "sideways"]).0, 1);
        assert_eq!(run(&["--help"]).0, 0);
    }

    #[test]
    fn missing_dataset_is_a_data_error() {
        assert_eq!(run(&["dataset", "validate", "/nonexistent/dataset.json"]).0, 2);
    }
}
