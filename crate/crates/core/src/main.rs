use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use groundcheck::aggregate::{ClaimLabel, ResponseLabel, ResponseVerdict};
use groundcheck::bench::{self, map_samples, parse_samples, Report};
use groundcheck::chunker::{chunk_paragraphs, chunk_text, ChunkerConfig};
use groundcheck::{
    BackendDescriptor, Backends, DetectionRequest, Error, Pipeline, PipelineConfig, ScoringMode, TokenCounter,
};

const EXIT_HALLUCINATED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "groundcheck", version, about = "Detect ungrounded claims in model outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one output against its context documents.
    Detect(DetectArgs),
    /// Score every sample of a JSONL file, writing one verdict per line.
    Batch(BatchArgs),
    /// Evaluate a labelled JSONL corpus and write report.json / report.txt.
    Bench(BenchArgs),
    /// Print the chunks of a file as JSONL.
    Chunk(ChunkArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendChoice {
    Mock,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeChoice {
    Pairwise,
    Packed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendChoice,
    /// Base URL of the model server (remote backend).
    #[arg(long, env = "GROUNDCHECK_ENDPOINT")]
    endpoint: Option<String>,
    /// Hallucination threshold on grounding scores.
    #[arg(long, env = "GROUNDCHECK_THETA")]
    theta: Option<f64>,
    /// Soft-minimum sharpness.
    #[arg(long, env = "GROUNDCHECK_BETA")]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeChoice>,
    /// Multiplier applied to builtin token counts.
    #[arg(long)]
    token_margin: Option<f64>,
    /// Request timeout for the remote backend.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    /// Retries after a failed remote request.
    #[arg(long, default_value_t = 2)]
    retries: usize,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, num_args = 1.., required = true)]
    context: Vec<PathBuf>,
    #[arg(long, conflicts_with = "output_text", required_unless_present = "output_text")]
    output: Option<PathBuf>,
    #[arg(long)]
    output_text: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Exit with status 1 when the response is labelled hallucinated.
    #[arg(long)]
    fail_on_hallucination: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct BatchArgs {
    /// JSONL samples (`id`, `context`, `response`).
    #[arg(long)]
    input: PathBuf,
    /// Destination file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "report")]
    report_dir: PathBuf,
    /// Row label in the report table.
    #[arg(long, default_value = "groundcheck")]
    name: String,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct ChunkArgs {
    #[arg(long)]
    input: PathBuf,
    /// Maximum chunk size in tokens; 0 emits one chunk per paragraph.
    #[arg(long, default_value_t = 60)]
    s_max: usize,
    #[arg(long, default_value_t = 0)]
    o_max: usize,
    /// Use the claim splitter (never merges across sentences).
    #[arg(long)]
    claims: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Contract(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_FAILURE,
        message: format!("{}: {e}", path.display()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => run_detect(a),
        Command::Batch(a) => run_batch(a),
        Command::Bench(a) => run_bench(a),
        Command::Chunk(a) => run_chunk(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("groundcheck: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

impl EngineArgs {
    fn config(&self) -> Result<PipelineConfig, Failure> {
        let mut config = PipelineConfig::default();
        if let Some(theta) = self.theta {
            config.aggregation.theta = theta;
        }
        if let Some(beta) = self.beta {
            config.aggregation.beta = beta;
        }
        if let Some(mode) = self.mode {
            config.scoring_mode = match mode {
                ModeChoice::Pairwise => ScoringMode::Pairwise,
                ModeChoice::Packed => ScoringMode::Packed,
            };
        }
        if let Some(m) = self.token_margin {
            config.token_margin = m;
        }
        config.validate()?;
        Ok(config)
    }

    fn backends(&self) -> Result<Backends, Failure> {
        match self.backend {
            BackendChoice::Mock => Ok(Backends::builtin()),
            BackendChoice::Remote => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| usage("--backend remote needs --endpoint or GROUNDCHECK_ENDPOINT"))?;
                let mut d = BackendDescriptor::remote(endpoint);
                d.timeout_ms = self.timeout_ms;
                d.retries = self.retries;
                Ok(Backends::remote(d)?)
            }
        }
    }

    fn label(&self) -> &'static str {
        match self.backend {
            BackendChoice::Mock => "mock",
            BackendChoice::Remote => "remote",
        }
    }

    fn pipeline(&self) -> Result<Pipeline, Failure> {
        Ok(Pipeline::new(self.config()?, self.backends()?)?)
    }
}

fn run_detect(a: DetectArgs) -> Result<u8, Failure> {
    let pipeline = a.engine.pipeline()?;
    let context = a.context.iter().map(|p| read(p)).collect::<Result<Vec<_>, _>>()?;
    let output = match (&a.output, &a.output_text) {
        (Some(p), _) => read(p)?,
        (None, Some(t)) => t.clone(),
        (None, None) => return Err(usage("one of --output or --output-text is required")),
    };
    let verdict = pipeline.detect(&DetectionRequest::new(context, output))?;
    let rendered = match a.format {
        Format::Json => serde_json::to_string_pretty(&verdict).expect("verdict serializes") + "\n",
        Format::Text => render_text(&verdict),
    };
    print!("{rendered}");
    let flagged = verdict.label == ResponseLabel::Hallucinated;
    Ok(if a.fail_on_hallucination && flagged {
        EXIT_HALLUCINATED
    } else {
        0
    })
}

fn render_text(v: &ResponseVerdict) -> String {
    let mut out = String::new();
    let label = serde_json::to_value(v.label).expect("label serializes");
    let _ = writeln!(
        out,
        "response: {} (score {:.4})",
        label.as_str().unwrap_or_default(),
        v.response_score
    );
    for c in &v.claim_verdicts {
        let flag = match c.label {
            ClaimLabel::Grounded => "ok  ",
            ClaimLabel::Hallucinated => "FLAG",
            ClaimLabel::NonFactualUnscored => "skip",
        };
        let score = c
            .grounding_score
            .map_or_else(|| "  -   ".to_string(), |g| format!("{g:.4}"));
        let _ = writeln!(out, "[{flag}] {score} #{} {}", c.claim_index, c.text.replace('\n', " "));
    }
    for w in &v.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[derive(Serialize)]
struct BatchLine<'a> {
    id: &'a str,
    verdict: Option<ResponseVerdict>,
    error: Option<String>,
}

fn run_batch(a: BatchArgs) -> Result<u8, Failure> {
    let pipeline = a.engine.pipeline()?;
    let samples = parse_samples(&read(&a.input)?, false)?;
    let lines = map_samples(&samples, a.jobs, |s| {
        let (verdict, error) = match pipeline.detect(&s.request()) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        serde_json::to_string(&BatchLine {
            id: &s.id,
            verdict,
            error,
        })
        .expect("batch line serializes")
    })?;
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_failure(Path::new("<stdout>"), e))?,
    }
    Ok(0)
}

fn run_bench(a: BenchArgs) -> Result<u8, Failure> {
    let pipeline = a.engine.pipeline()?;
    let samples = parse_samples(&read(&a.data)?, true)?;
    if samples.is_empty() {
        return Err(usage(format!("{}: dataset has no samples", a.data.display())));
    }
    if a.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let report: Report = bench::evaluate(&samples, &pipeline, &a.name, a.engine.label(), a.jobs)?;
    report.write_to_dir(&a.report_dir)?;
    println!("{}", report.overall_line());
    if report.failures() > 0 {
        eprintln!("groundcheck: {} sample(s) failed; see report.json", report.failures());
    }
    Ok(0)
}

#[derive(Serialize)]
struct ChunkLine<'a> {
    index: usize,
    start: usize,
    end: usize,
    tokens: usize,
    text: &'a str,
}

fn run_chunk(a: ChunkArgs) -> Result<u8, Failure> {
    let text = read(&a.input)?;
    let counter = TokenCounter::builtin();
    let chunks = if a.s_max == 0 {
        chunk_paragraphs(&counter, &text)
    } else {
        let config = if a.claims {
            if a.o_max != 0 {
                return Err(usage("--claims does not take --o-max"));
            }
            ChunkerConfig::claims_with_max(a.s_max)
        } else {
            ChunkerConfig::new(a.s_max, a.o_max)
        };
        chunk_text(&config, &counter, &text)?
    };
    let mut out = String::new();
    for c in &chunks {
        let line = ChunkLine {
            index: c.index,
            start: c.start,
            end: c.end,
            tokens: c.tokens,
            text: &c.text,
        };
        out.push_str(&serde_json::to_string(&line).expect("chunk serializes"));
        out.push('\n');
    }
    std::io::stdout()
        .write_all(out.as_bytes())
        .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
    Ok(0)
}
