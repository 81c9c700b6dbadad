//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mathqa_core::campaign::TaskKind;
use mathqa_core::generation::GuidanceCondition;
use mathqa_core::stats::{AnovaUnit, CiMethod, MeasurementLevel};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::artifacts::{Layout, Outcome};
use crate::commands;
use crate::config::{AppConfig, ConfigError, Overrides};

const AFTER_HELP: &str = "\
Configuration precedence, highest first: command line flags, MATHQA_* environment
variables, the TOML file given by --config (or MATHQA_CONFIG), built-in defaults.
The provider API key is read from the environment variable named by
--api-key-env (default OPENAI_API_KEY) and is never written anywhere.";

#[derive(Debug, Parser)]
#[command(name = "mathqa", version, about = "Textbook-grounded math QA pipeline", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Retrieved-document budget in tokens.
    #[arg(long, global = true)]
    pub token_budget: Option<usize>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub max_attempts: Option<u32>,
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    #[arg(long, global = true)]
    pub chat_model: Option<String>,
    #[arg(long, global = true)]
    pub embedding_model: Option<String>,
    /// Name of the environment variable that holds the API key.
    #[arg(long, global = true)]
    pub api_key_env: Option<String>,
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            data_dir: self.data_dir.clone(),
            seed: self.seed,
            token_budget: self.token_budget,
            parallelism: self.parallelism,
            max_attempts: self.max_attempts,
            base_url: self.base_url.clone(),
            chat_model: self.chat_model.clone(),
            embedding_model: self.embedding_model.clone(),
            api_key_env: self.api_key_env.clone(),
        }
    }
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a marked-up textbook into the corpus artifact.
    Ingest(IngestArgs),
    /// Embed every subsection into the index.
    Embed(EmbedArgs),
    /// Print the best subsection and its expanded document for a query.
    Retrieve(RetrieveArgs),
    /// Generate responses for each (query, condition) cell.
    Generate(GenerateArgs),
    /// Score the run with groundedness metrics.
    Score(ScoreArgs),
    /// Build an annotation campaign from the run.
    CampaignCreate(CampaignCreateArgs),
    /// Write a campaign as JSONL or its judgments as CSV.
    CampaignExport(CampaignExportArgs),
    /// Add a campaign JSONL file or a judgments CSV to the data directory.
    CampaignImport(CampaignImportArgs),
    /// Run the statistical analysis.
    Analyze(AnalyzeArgs),
    /// Serve the annotation API.
    Serve(ServeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Ingest(_) => "ingest",
            Self::Embed(_) => "embed",
            Self::Retrieve(_) => "retrieve",
            Self::Generate(_) => "generate",
            Self::Score(_) => "score",
            Self::CampaignCreate(_) => "campaign-create",
            Self::CampaignExport(_) => "campaign-export",
            Self::CampaignImport(_) => "campaign-import",
            Self::Analyze(_) => "analyze",
            Self::Serve(_) => "serve",
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Textbook with `#`, `##`, `###` headings.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub exclude_exercises: bool,
    /// `heuristic` or `whitespace`.
    #[arg(long)]
    pub tokenizer: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Use the deterministic hashing embedder instead of the provider.
    #[arg(long)]
    pub mock_embeddings: bool,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub mock_embeddings: bool,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSONL of `{id, text}` objects.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "none,low,high")]
    pub conditions: Vec<GuidanceCondition>,
    /// Use the echo chat client instead of the provider.
    #[arg(long)]
    pub mock_llm: bool,
    #[arg(long)]
    pub mock_embeddings: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, value_delimiter = ',', default_value = "kf1pp,knowledge_f1")]
    pub metrics: Vec<String>,
    /// JSON adapter spec for an external metric; may be repeated.
    #[arg(long)]
    pub external: Vec<PathBuf>,
    /// Keep articles when normalizing tokens.
    #[arg(long)]
    pub keep_articles: bool,
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// `.csv` or `.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CampaignCreateArgs {
    #[arg(long)]
    pub id: String,
    #[arg(long, value_parser = serde_enum::<TaskKind>)]
    pub kind: Option<TaskKind>,
    #[arg(long, value_delimiter = ',')]
    pub annotators: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub survey_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub min_annotators: Option<usize>,
    #[arg(long)]
    pub max_annotators: Option<usize>,
    /// Overrides the seed derived from the root seed and campaign id.
    #[arg(long)]
    pub campaign_seed: Option<u64>,
    #[arg(long)]
    pub run: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
pub struct CampaignExportArgs {
    #[arg(long)]
    pub id: String,
    /// File for `jsonl`, directory for `csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: ExportFormat,
    /// Replace annotator ids with R1, R2, ... (csv only).
    #[arg(long)]
    pub anonymize: bool,
}

#[derive(Debug, Args)]
pub struct CampaignImportArgs {
    /// Campaign `.jsonl` or judgments `.csv`.
    #[arg(long)]
    pub file: PathBuf,
    /// Stored name for a judgments CSV (default: the file stem).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Campaign id in the data directory; may be repeated.
    #[arg(long)]
    pub campaign: Vec<String>,
    /// Judgments CSV (path, or name under the judgments directory); may be repeated.
    #[arg(long)]
    pub judgments: Vec<PathBuf>,
    /// Metric table from `score`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Correlation table CSV (written when metrics are given).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, value_parser = serde_enum::<CiMethod>)]
    pub ci: Option<CiMethod>,
    #[arg(long, value_parser = serde_enum::<AnovaUnit>)]
    pub anova_unit: Option<AnovaUnit>,
    #[arg(long, value_parser = serde_enum::<MeasurementLevel>)]
    pub groundedness_level: Option<MeasurementLevel>,
    #[arg(long, value_parser = serde_enum::<MeasurementLevel>)]
    pub relevance_level: Option<MeasurementLevel>,
    /// Also report the equal-variance ANOVA.
    #[arg(long)]
    pub fisher: bool,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    /// Directory of static UI assets.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("missing {artifact}: {hint}")]
    MissingPrerequisite { artifact: PathBuf, hint: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0:#}")]
    Failed(#[from] anyhow::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::MissingPrerequisite { .. } | Self::Config(_) => 2,
            Self::Failed(_) => 1,
        }
    }

    /// One-object error report for stderr.
    pub fn report(&self) -> Value {
        let kind = match self {
            Self::Usage(_) => "usage",
            Self::MissingPrerequisite { .. } => "missing-prerequisite",
            Self::Config(_) => "config",
            Self::Failed(_) => "failed",
        };
        let mut v = json!({ "error": kind, "message": self.to_string() });
        if let Self::MissingPrerequisite { artifact, .. } = self {
            v["artifact"] = json!(artifact);
        }
        v
    }
}

/// Everything a subcommand needs besides its own arguments.
pub(crate) struct Ctx<'a> {
    pub cfg: AppConfig,
    pub layout: Layout,
    pub env: &'a dyn Fn(&str) -> Option<String>,
}

/// Parses `argv` (program name first), resolves the configuration and runs
/// the subcommand. Output goes to `out`; `env` stands in for the process
/// environment.
pub fn run<I, T>(argv: I, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write) -> Result<Outcome, AppError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            write!(out, "{}", e.render()).map_err(anyhow::Error::from)?;
            return Ok(Outcome::new("help"));
        }
        Err(e) => return Err(AppError::Usage(e.render().to_string().trim_end().to_string())),
    };
    let file = cli
        .global
        .config
        .clone()
        .or_else(|| env("MATHQA_CONFIG").map(PathBuf::from));
    let cfg = AppConfig::resolve(file.as_deref(), env, &cli.global.overrides())?;
    let ctx = Ctx {
        layout: Layout::new(cfg.data_dir.clone()),
        cfg,
        env,
    };
    let mut outcome = Outcome::new(cli.command.name());
    match &cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, a, &mut outcome, out)?,
        Command::Embed(a) => commands::embed(&ctx, a, &mut outcome, out)?,
        Command::Retrieve(a) => commands::retrieve(&ctx, a, &mut outcome, out)?,
        Command::Generate(a) => commands::generate(&ctx, a, &mut outcome, out)?,
        Command::Score(a) => commands::score(&ctx, a, &mut outcome, out)?,
        Command::CampaignCreate(a) => commands::campaign_create(&ctx, a, &mut outcome, out)?,
        Command::CampaignExport(a) => commands::campaign_export(&ctx, a, &mut outcome, out)?,
        Command::CampaignImport(a) => commands::campaign_import(&ctx, a, &mut outcome, out)?,
        Command::Analyze(a) => commands::analyze(&ctx, a, &mut outcome, out)?,
        Command::Serve(a) => commands::serve(&ctx, a, &mut outcome, out)?,
    }
    for p in &outcome.written {
        writeln!(out, "wrote {}", p.display()).map_err(anyhow::Error::from)?;
    }
    for p in &outcome.unchanged {
        writeln!(out, "unchanged {}", p.display()).map_err(anyhow::Error::from)?;
    }
    writeln!(
        out,
        "provider calls: embeddings={} chat={}",
        outcome.provider_calls.embeddings, outcome.provider_calls.chat
    )
    .map_err(anyhow::Error::from)?;
    Ok(outcome)
}
