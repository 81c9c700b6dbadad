//! One function per subcommand.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{anyhow, Context};
use mathqa_core::campaign::{
    aggregate, create_campaign, export_judgments_csv, import_judgments_csv, Campaign, CampaignConfig, Judgments,
    TaskKind,
};
use mathqa_core::corpus::{parse_corpus, CorpusConfig, SegmentTree, TokenizerSpec};
use mathqa_core::generation::{
    chat_clients, parse_queries, run_matrix, ChatClient, ChatRequest, ChatResponse, Pipeline, RunArtifact, RunStore,
    SamplingParams,
};
use mathqa_core::http::{ProviderError, ProviderSettings};
use mathqa_core::metrics::{
    metrics, score_run, ExternalMetric, ExternalMetricSpec, GroundednessMetric, MetricSettings, MetricTable,
    NormalizationSpec,
};
use mathqa_core::retrieval::{
    build_index, embedding_providers, expand_context, retrieve as top_match, Embedder, EmbeddingCache, EmbeddingIndex,
    EmbeddingProvider, IndexOptions,
};
use mathqa_core::stats::{analyze as run_analysis, AnalysisOptions};

use crate::artifacts::Outcome;
use crate::cli::{
    AnalyzeArgs, AppError, CampaignCreateArgs, CampaignExportArgs, CampaignImportArgs, Ctx, EmbedArgs, ExportFormat,
    GenerateArgs, IngestArgs, RetrieveArgs, ScoreArgs, ServeArgs,
};
use crate::server::{ServerState, ServiceHandle};

type Res = Result<(), AppError>;

fn missing(artifact: &Path, hint: &str) -> AppError {
    AppError::MissingPrerequisite {
        artifact: artifact.to_path_buf(),
        hint: hint.to_string(),
    }
}

fn read_prerequisite(path: &Path, hint: &str) -> Result<String, AppError> {
    if !path.exists() {
        return Err(missing(path, hint));
    }
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(AppError::from)
}

/// A user-supplied input path, tried as given and then under the data dir.
fn input_path(ctx: &Ctx<'_>, path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        path.to_path_buf()
    } else {
        let under = ctx.cfg.data_dir.join(path);
        if under.exists() {
            under
        } else {
            path.to_path_buf()
        }
    }
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Res {
    writeln!(out, "{}", line.as_ref()).map_err(|e| AppError::Failed(e.into()))
}

fn load_tree(ctx: &Ctx<'_>) -> Result<SegmentTree, AppError> {
    let path = ctx.layout.corpus();
    let text = read_prerequisite(&path, "run `mathqa ingest --corpus <file>` first")?;
    SegmentTree::from_json(&text)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(AppError::from)
}

fn load_index(ctx: &Ctx<'_>, tree: &SegmentTree, provider: &dyn EmbeddingProvider) -> Result<EmbeddingIndex, AppError> {
    let path = ctx.layout.index();
    let text = read_prerequisite(&path, "run `mathqa embed` first")?;
    let index = EmbeddingIndex::from_json(&text).with_context(|| format!("reading {}", path.display()))?;
    if index.is_stale(tree) {
        return Err(AppError::Usage(format!(
            "{} was built from a different corpus; re-run `mathqa embed`",
            path.display()
        )));
    }
    if index.model_id != provider.model_id() {
        return Err(AppError::Usage(format!(
            "{} was built with `{}`, not `{}`; re-run `mathqa embed` with matching settings",
            path.display(),
            index.model_id,
            provider.model_id()
        )));
    }
    Ok(index)
}

fn embedding_provider(ctx: &Ctx<'_>, mock: bool) -> Result<Box<dyn EmbeddingProvider>, AppError> {
    let (name, settings) = if mock {
        ("mock", ProviderSettings::with_model(""))
    } else {
        ("openai", ctx.cfg.embedding_settings())
    };
    embedding_providers()
        .build(name, &settings)
        .map_err(|e| AppError::Failed(anyhow!("{e}")))
}

fn open_cache(ctx: &Ctx<'_>) -> Result<EmbeddingCache, AppError> {
    let path = ctx.layout.embedding_cache();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(anyhow::Error::from)?;
    }
    EmbeddingCache::open(&path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(AppError::from)
}

pub(crate) fn ingest(ctx: &Ctx<'_>, args: &IngestArgs, outcome: &mut Outcome, out: &mut dyn Write) -> Res {
    let text = read_prerequisite(&args.corpus, "pass an existing textbook file to --corpus")?;
    let mut config = CorpusConfig {
        exclude_exercises: args.exclude_exercises,
        ..CorpusConfig::default()
    };
    if let Some(t) = &args.tokenizer {
        config.tokenizer = TokenizerSpec::new(t.clone());
    }
    let tree = parse_corpus(&text, &config).map_err(anyhow::Error::from)?;
    let s = tree.summary();
    say(
        out,
        format!(
            "{} chapters, {} sections, {} subsections",
            s.chapters, s.sections, s.subsections
        ),
    )?;
    let path = args.out.clone().unwrap_or_else(|| ctx.layout.corpus());
    let json = tree.to_json().map_err(anyhow::Error::from)? + "\n";
    outcome.put(&path, json.as_bytes()).map_err(anyhow::Error::from)?;
    Ok(())
}

pub(crate) fn embed(ctx: &Ctx<'_>, args: &EmbedArgs, outcome: &mut Outcome, out: &mut dyn Write) -> Res {
    let tree = load_tree(ctx)?;
    let provider = embedding_provider(ctx, args.mock_embeddings)?;
    let path = ctx.layout.index();
    if let Some(existing) = fs::read_to_string(&path)
        .ok()
        .and_then(|t| EmbeddingIndex::from_json(&t).ok())
    {
        if !existing.is_stale(&tree)
            && existing.model_id == provider.model_id()
            && existing.include_titles == ctx.cfg.include_titles
        {
            say(
                out,
                format!("index is up to date ({} subsections)", existing.entries.len()),
            )?;
            outcome.unchanged.push(path);
            return Ok(());
        }
    }
    let cache = open_cache(ctx)?;
    let embedder = Embedder::new(provider.as_ref())
        .with_cache(&cache)
        .with_retry(ctx.cfg.retry());
    let options = IndexOptions {
        include_titles: ctx.cfg.include_titles,
        parallelism: ctx.cfg.parallelism,
    };
    let built = build_index(&tree, &embedder, &options);
    outcome.provider_calls.embeddings = embedder.provider_calls();
    let index = built.map_err(anyhow::Error::from)?;
    say(
        out,
        format!("embedded {} subsections with {}", index.entries.len(), index.model_id),
    )?;
    let json = index.to_json().map_err(anyhow::Error::from)? + "\n";
    outcome.put(&path, json.as_bytes()).map_err(anyhow::Error::from)?;
    Ok(())
}

pub(crate) fn retrieve(ctx: &Ctx<'_>, args: &RetrieveArgs, outcome: &mut Outcome, out: &mut dyn Write) -> Res {
    let tree = load_tree(ctx)?;
    let provider = embedding_provider(ctx, args.mock_embeddings)?;
    let index = load_index(ctx, &tree, provider.as_ref())?;
    let cache = open_cache(ctx)?;
    let embedder = Embedder::new(provider.as_ref())
        .with_cache(&cache)
        .with_retry(ctx.cfg.retry());
    let found = top_match(&args.query, &index, &embedder);
    outcome.provider_calls.embeddings = embedder.provider_calls();
    let m = found.map_err(anyhow::Error::from)?;
    let doc = expand_context(&m, &tree, ctx.cfg.token_budget, ctx.cfg.expansion_scope).map_err(anyhow::Error::from)?;
    if args.json {
        say(out, serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)?)?;
    } else {
        say(out, format!("{}\t{:.4}", m.segment_id, m.similarity))?;
        say(
            out,
            format!(
                "{} tokens from {}",
                doc.token_count,
                doc.included_segment_ids.join(", ")
            ),
        )?;
        say(out, "")?;
        say(out, &doc.text)?;
    }
    Ok(())
}

/// Counts requests passed to the wrapped client.
struct CountingChat<'a> {
    inner: &'a dyn ChatClient,
    calls: AtomicUsize,
}

impl ChatClient for CountingChat<'_> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

pub(crate) fn generate(ctx: &Ctx<'_>, args: &GenerateArgs, outcome: &mut Outcome, out: &mut dyn Write) -> Res {
    let queries_path = input_path(ctx, &args.queries);
    let queries = parse_queries(&read_prerequisite(
        &queries_path,
        "pass a JSONL file of {id, text} to --queries",
    )?)
    .map_err(anyhow::Error::from)?;
    let needs_document = args.conditions.iter().any(|c| c.uses_document());

    let provider = embedding_provider(ctx, args.mock_embeddings)?;
    let retrieval = if needs_document {
        let tree = load_tree(ctx)?;
        let index = load_index(ctx, &tree, provider.as_ref())?;
        Some((tree, index))
    } else {
        None
    };
    let cache = open_cache(ctx)?;
    let embedder = Embedder::new(provider.as_ref())
        .with_cache(&cache)
        .with_retry(ctx.cfg.retry());

    let (name, settings) = if args.mock_llm {
        ("mock", ProviderSettings::with_model(""))
    } else {
        ("openai", ctx.cfg.chat_settings())
    };
    let client = chat_clients()
        .build(name, &settings)
        .map_err(|e| AppError::Failed(anyhow!("{e}")))?;
    let chat = CountingChat {
        inner: client.as_ref(),
        calls: AtomicUsize::new(0),
    };

    let mut pipeline = Pipeline::new(&chat);
    if let Some((tree, index)) = &retrieval {
        pipeline = pipeline.with_retrieval(tree, index, &embedder);
    }
    pipeline.budget = ctx.cfg.token_budget;
    pipeline.scope = ctx.cfg.expansion_scope;
    pipeline.sampling = SamplingParams::default();
    pipeline.retry = ctx.cfg.retry();
    pipeline.parallelism = ctx.cfg.parallelism;

    let path = args.out.clone().unwrap_or_else(|| ctx.layout.run());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(anyhow::Error::from)?;
    }
    let before = fs::read(&path).ok();
    let store = RunStore::open(&path).map_err(anyhow::Error::from)?;
    let result = run_matrix(&queries, &args.conditions, &pipeline, &store);
    outcome.provider_calls.embeddings = embedder.provider_calls();
    outcome.provider_calls.chat = chat.calls.load(Ordering::SeqCst);
    outcome.touched(&path, before);
    let summary = result.map_err(anyhow::Error::from)?;
    say(
        out,
        format!(
            "{} cells: {} generated, {} already done, {} failed",
            summary.cells,
            summary.generated,
            summary.skipped,
            summary.failed.len()
        ),
    )?;
    for f in &summary.failed {
        say(out, format!("failed {} / {}: {}", f.query_id, f.condition, f.error))?;
    }
    if !summary.failed.is_empty() {
        return Err(AppError::Failed(anyhow!(
            "{} cells failed; re-run `mathqa generate` to retry them",
            summary.failed.len()
        )));
    }
    Ok(())
}

pub(crate) fn score(ctx: &Ctx<'_>, args: &ScoreArgs, outcome: &mut Outcome, out: &mut dyn Write) -> Res {
    let run_path = args
        .run
        .as_ref()
        .map(|p| input_path(ctx, p))
        .unwrap_or_else(|| ctx.layout.run());
    let run = RunArtifact::parse_jsonl(&read_prerequisite(&run_path, "run `mathqa generate` first")?)
        .map_err(anyhow::Error::from)?;

    let mut registry = metrics();
    let mut extra = Vec::new();
    for spec_path in &args.external {
        let text = read_prerequisite(spec_path, "pass an external metric spec JSON file")?;
        let spec: ExternalMetricSpec =
            serde_json::from_str(&text).with_context(|| format!("reading {}", spec_path.display()))?;
        extra.push(spec.name.clone());
        registry.register(spec.name.clone(), move |_| {
            Ok(Box::new(ExternalMetric { spec: spec.clone() }))
        });
    }
    let settings = MetricSettings {
        normalization: if args.keep_articles {
            NormalizationSpec::keep_articles()
        } else {
            NormalizationSpec::default()
        },
    };
    let mut names: Vec<String> = args
        .metrics
        .iter()
        .map(|m| m.trim().to_string())
        .filter(|m| !m.is_empty())
        .collect();
    names.extend(extra.into_iter().filter(|n| !args.metrics.contains(n)));
    let built: Vec<Box<dyn GroundednessMetric>> = names
        .iter()
        .map(|n| registry.build(n, &settings))
        .collect::<Result<_, _>>()
        .map_err(|e| AppError::Usage(e.to_string()))?;
    let refs: Vec<&dyn GroundednessMetric> = built.iter().map(|m| m.as_ref()).collect();

    let scored = score_run(&run, &refs);
    for s in &scored.skipped {
        say(out, format!("skipped {} / {}: {}", s.query_id, s.condition, s.reason))?;
    }
    for u in &scored.unavailable {
        say(out, format!("metric {} unavailable: {}", u.metric, u.error))?;
    }
    say(
        out,
        format!("{} rows for {}", scored.table.rows.len(), names.join(", ")),
    )?;
    let path = args.out.clone().unwrap_or_else(|| ctx.layout.scores());
    let text = if path.extension().is_some_and(|e| e == "jsonl") {
        scored.table.to_jsonl()
    } else {
        scored.table.to_csv().map_err(anyhow::Error::from)?
    };
    outcome.put(&path, text.as_bytes()).map_err(anyhow::Error::from)?;
    Ok(())
}

/// Campaigns are equal for re-run purposes when everything but the
/// submissions matches.
fn same_design(a: &Campaign, b: &Campaign) -> bool {
    a.id == b.id
        && a.kind == b.kind
        && a.seed == b.seed
        && a.config == b.config
        && a.surveys == b.surveys
        && a.tasks == b.tasks
        && a.plan == b.plan
}

pub(crate) fn campaign_config(ctx: &Ctx<'_>, args: &CampaignCreateArgs) -> CampaignConfig {
    let mut config = ctx.cfg.campaign.clone();
    if args.annotators.is_some() || args.survey_sizes.is_some() {
        config.survey_annotators = None;
    }
    if let Some(a) = &args.annotators {
        config.annotators = a.clone();
    }
    if let Some(s) = &args.survey_sizes {
        config.survey_sizes = s.clone();
    }
    if args.kind == Some(TaskKind::Relevance) && config.kind != TaskKind::Relevance {
        config = CampaignConfig::relevance(config.annotators);
    }
    if let Some(n) = args.min_annotators {
        config.min_annotators_per_query = n;
    }
    if let Some(n) = args.max_annotators {
        config.max_annotators_per_query = n;
    }
    config
}

pub(crate) fn campaign_create(
    ctx: &Ctx<'_>,
    args: &CampaignCreateArgs,
    outcome: &mut Outcome,
    out: &mut dyn Write,
) -> Res {
    let run_path = args
        .run
        .as_ref()
        .map(|p| input_path(ctx, p))
        .unwrap_or_else(|| ctx.layout.run());
    let run = RunArtifact::parse_jsonl(&read_prerequisite(&run_path, "run `mathqa generate` first")?)
        .map_err(anyhow::Error::from)?;
    let config = campaign_config(ctx, args);
    let seed = args
        .campaign_seed
        .unwrap_or_else(|| ctx.cfg.stage_seed(&format!("campaign/{}", args.id)));
    let campaign = create_campaign(&args.id, &run, &config, seed).map_err(anyhow::Error::from)?;

    let path = ctx.layout.campaign(&args.id);
    if path.exists() {
        let existing = Campaign::from_jsonl(&fs::read_to_string(&path).map_err(anyhow::Error::from)?)
            .with_context(|| format!("reading {}", path.display()))?;
        if !same_design(&existing, &campaign) {
            return Err(AppError::Usage(format!(
                "campaign `{}` already exists in {} with different settings; choose another id",
                args.id,
                path.display()
            )));
        }
        say(
            out,
            format!(
                "campaign {} exists with {} submissions",
                args.id,
                existing.submissions.len()
            ),
        )?;
        outcome.unchanged.push(path);
        return Ok(());
    }
    let sizes: Vec<String> = campaign.surveys.iter().map(|s| s.len().to_string()).collect();
    say(
        out,
        format!(
            "campaign {}: {} tasks, surveys [{}]",
            campaign.id,
            campaign.tasks.len(),
            sizes.join(", ")
        ),
    )?;
    for (annotator, tasks) in &campaign.plan {
        say(out, format!("  {annotator}: {}", tasks.len()))?;
    }
    outcome
        .put(&path, campaign.to_jsonl().as_bytes())
        .map_err(anyhow::Error::from)?;
    Ok(())
}

fn load_campaign(ctx: &Ctx<'_>, id: &str) -> Result<Campaign, AppError> {
    let path = ctx.layout.campaign(id);
    let text = read_prerequisite(&path, "run `mathqa campaign-create` or `mathqa campaign-import` first")?;
    Campaign::from_jsonl(&text)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(AppError::from)
}

pub(crate) fn campaign_export(
    ctx: &Ctx<'_>,
    args: &CampaignExportArgs,
    outcome: &mut Outcome,
    out: &mut dyn Write,
) -> Res {
    let campaign = load_campaign(ctx, &args.id)?;
    match args.format {
        ExportFormat::Jsonl => {
            if args.anonymize {
                return Err(AppError::Usage("--anonymize applies to --format csv".into()));
            }
            outcome
                .put(&args.out, campaign.to_jsonl().as_bytes())
                .map_err(anyhow::Error::from)?;
        }
        ExportFormat::Csv => {
            let csv = export_judgments_csv(&campaign.judgments(), args.anonymize).map_err(anyhow::Error::from)?;
            let responses = args.out.join(format!("{}_responses.csv", args.id));
            let relevance = args.out.join(format!("{}_relevance.csv", args.id));
            outcome
                .put(&responses, csv.responses.as_bytes())
                .map_err(anyhow::Error::from)?;
            outcome
                .put(&relevance, csv.relevance.as_bytes())
                .map_err(anyhow::Error::from)?;
        }
    }
    say(out, format!("exported {} submissions", campaign.submissions.len()))
}

pub(crate) fn campaign_import(
    ctx: &Ctx<'_>,
    args: &CampaignImportArgs,
    outcome: &mut Outcome,
    out: &mut dyn Write,
) -> Res {
    let text = read_prerequisite(&args.file, "pass an existing file to --file")?;
    if args.file.extension().is_some_and(|e| e == "jsonl") {
        let campaign = Campaign::from_jsonl(&text).with_context(|| format!("reading {}", args.file.display()))?;
        let path = ctx.layout.campaign(&campaign.id);
        let bytes = campaign.to_jsonl();
        if path.exists() && fs::read_to_string(&path).ok().as_deref() != Some(bytes.as_str()) {
            return Err(AppError::Usage(format!(
                "a different campaign `{}` already exists in {}",
                campaign.id,
                path.display()
            )));
        }
        say(
            out,
            format!("campaign {}: {} submissions", campaign.id, campaign.submissions.len()),
        )?;
        outcome.put(&path, bytes.as_bytes()).map_err(anyhow::Error::from)?;
        return Ok(());
    }
    let judgments = import_judgments_csv(&text).with_context(|| format!("reading {}", args.file.display()))?;
    let name = match &args.name {
        Some(n) => n.clone(),
        None => args
            .file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| AppError::Usage("cannot derive a name from --file; pass --name".into()))?
            .to_string(),
    };
    let csv = export_judgments_csv(&judgments, false).map_err(anyhow::Error::from)?;
    let body = if judgments.relevance.is_empty() {
        csv.responses
    } else {
        csv.relevance
    };
    say(
        out,
        format!(
            "{} rankings, {} groundedness, {} relevance judgments",
            judgments.rankings.len(),
            judgments.groundedness.len(),
            judgments.relevance.len()
        ),
    )?;
    let path = ctx.layout.judgments().join(format!("{name}.csv"));
    outcome.put(&path, body.as_bytes()).map_err(anyhow::Error::from)?;
    Ok(())
}

fn judgments_path(ctx: &Ctx<'_>, p: &Path) -> PathBuf {
    let direct = input_path(ctx, p);
    if direct.exists() {
        return direct;
    }
    let named = ctx.layout.judgments().join(p).with_extension("csv");
    if named.exists() {
        named
    } else {
        direct
    }
}

pub(crate) fn analyze(ctx: &Ctx<'_>, args: &AnalyzeArgs, outcome: &mut Outcome, out: &mut dyn Write) -> Res {
    if args.campaign.is_empty() && args.judgments.is_empty() {
        return Err(AppError::Usage(
            "analyze needs at least one --campaign or --judgments".into(),
        ));
    }
    let mut judgments = Judgments::default();
    for id in &args.campaign {
        judgments = judgments.merge(load_campaign(ctx, id)?.judgments());
    }
    for p in &args.judgments {
        let path = judgments_path(ctx, p);
        let text = read_prerequisite(
            &path,
            "pass a judgments CSV or import one with `mathqa campaign-import`",
        )?;
        let j = import_judgments_csv(&text).with_context(|| format!("reading {}", path.display()))?;
        judgments = judgments.merge(j);
    }
    let table = match &args.metrics {
        Some(p) => {
            let path = input_path(ctx, p);
            if !path.exists() {
                return Err(missing(&path, "run `mathqa score` first"));
            }
            Some(MetricTable::load(&path).with_context(|| format!("reading {}", path.display()))?)
        }
        None => None,
    };
    let defaults = AnalysisOptions::default();
    let opts = AnalysisOptions {
        seed: ctx.cfg.stage_seed("analyze"),
        ci_method: args.ci.unwrap_or(defaults.ci_method),
        anova_unit: args.anova_unit.unwrap_or(defaults.anova_unit),
        groundedness_level: args.groundedness_level.unwrap_or(defaults.groundedness_level),
        relevance_level: args.relevance_level.unwrap_or(defaults.relevance_level),
        fisher: args.fisher,
        ..defaults
    };
    let report = run_analysis(&aggregate(&judgments), table.as_ref(), &opts);
    if args.json {
        say(out, report.to_json())?;
    } else {
        write!(out, "{}", report.to_text()).map_err(anyhow::Error::from)?;
    }
    let path = args.out.clone().unwrap_or_else(|| ctx.layout.report());
    outcome
        .put(&path, (report.to_json() + "\n").as_bytes())
        .map_err(anyhow::Error::from)?;
    if table.is_some() {
        let csv = report.correlation_table_csv().map_err(anyhow::Error::from)?;
        let path = args.table.clone().unwrap_or_else(|| ctx.layout.report_table());
        outcome.put(&path, csv.as_bytes()).map_err(anyhow::Error::from)?;
    }
    Ok(())
}

pub(crate) fn serve(ctx: &Ctx<'_>, args: &ServeArgs, _outcome: &mut Outcome, out: &mut dyn Write) -> Res {
    let state = ServerState::from_config(&ctx.cfg, ctx.env).map_err(anyhow::Error::from)?;
    if state.store.ids().is_empty() && state.admin_token.is_none() {
        return Err(AppError::Usage(format!(
            "no campaigns in {} and admin routes are disabled; create one with `mathqa campaign-create` or set {}",
            ctx.layout.campaigns().display(),
            ctx.cfg.server.admin_token_env
        )));
    }
    let addr = args.addr.clone().unwrap_or_else(|| ctx.cfg.server.addr.clone());
    let static_dir = args.static_dir.clone().or_else(|| ctx.cfg.server.static_dir.clone());
    let handle =
        ServiceHandle::start(state, &addr, static_dir).with_context(|| format!("starting server on {addr}"))?;
    say(out, format!("listening on http://{}", handle.addr()))?;
    out.flush().map_err(anyhow::Error::from)?;
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(anyhow::Error::from)?
        .block_on(tokio::signal::ctrl_c())
        .map_err(anyhow::Error::from)?;
    log::info!("shutting down");
    handle.shutdown().map_err(anyhow::Error::from)?;
    Ok(())
}
