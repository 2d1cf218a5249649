//! Response-level benchmark harness over JSON Lines corpora.
//!
//! Each line is one sample:
//!
//! ```json
//! {"id": "s1", "task_type": "qa", "context": ["doc", "..."], "response": "...", "label_hallucinated": true}
//! ```
//!
//! `context` may be a single string. `task_type` is optional (defaults to
//! `other`) and also accepts RAGTruth's names (`QA`, `Data2txt`,
//! `Summary`). Unknown fields are ignored. Hallucinated is the positive
//! class.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{ResponseLabel, ResponseVerdict};
use crate::error::{Error, Result};
use crate::pipeline::{DetectionRequest, Pipeline, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskType {
    Qa,
    DataToText,
    Summarization,
    Other,
}

impl TaskType {
    pub fn parse_lenient(raw: &str) -> Self {
        let key: String = raw
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "qa" | "questionanswering" => TaskType::Qa,
            "datatotext" | "data2txt" | "data2text" | "datatotextwriting" => TaskType::DataToText,
            "summarization" | "summarisation" | "summary" | "newssummarization" => TaskType::Summarization,
            _ => TaskType::Other,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TaskType::Qa => "QUESTION ANSWERING",
            TaskType::DataToText => "DATA-TO-TEXT WRITING",
            TaskType::Summarization => "SUMMARIZATION",
            TaskType::Other => "OTHER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub id: String,
    pub task_type: TaskType,
    pub context: Vec<String>,
    pub response: String,
    pub label_hallucinated: bool,
    /// 1-based line in the source file.
    #[serde(skip)]
    pub line: usize,
}

impl EvalSample {
    pub fn request(&self) -> DetectionRequest {
        DetectionRequest::new(self.context.clone(), self.response.clone())
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ContextField {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
struct RawSample {
    id: String,
    #[serde(default)]
    task_type: Option<String>,
    context: ContextField,
    response: String,
    #[serde(default)]
    label_hallucinated: Option<bool>,
}

/// Parses JSONL text. Blank lines are skipped. With `require_label`, every
/// sample must carry `label_hallucinated`; otherwise it defaults to false.
pub fn parse_samples(text: &str, require_label: bool) -> Result<Vec<EvalSample>> {
    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let raw: RawSample = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let context = match raw.context {
            ContextField::One(s) => vec![s],
            ContextField::Many(v) => v,
        };
        if context.is_empty() || context.iter().all(|c| c.trim().is_empty()) {
            return Err(parse_err(format!("sample {:?} has an empty context", raw.id)));
        }
        if raw.response.trim().is_empty() {
            return Err(parse_err(format!("sample {:?} has an empty response", raw.id)));
        }
        let label = match (raw.label_hallucinated, require_label) {
            (Some(l), _) => l,
            (None, false) => false,
            (None, true) => return Err(parse_err("missing field `label_hallucinated`".to_string())),
        };
        if let Some(first) = seen.insert(raw.id.clone(), line_no) {
            return Err(parse_err(format!(
                "duplicate id {:?} (first seen on line {first})",
                raw.id
            )));
        }
        samples.push(EvalSample {
            id: raw.id,
            task_type: raw
                .task_type
                .as_deref()
                .map_or(TaskType::Other, TaskType::parse_lenient),
            context,
            response: raw.response,
            label_hallucinated: label,
            line: line_no,
        });
    }
    Ok(samples)
}

pub fn load_samples(path: &Path) -> Result<Vec<EvalSample>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_samples(&text, true)
}

/// `(precision, recall, f1)` with 0 for every zero denominator.
pub fn compute_prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub failures: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl TaskMetrics {
    fn record(&mut self, gold: bool, predicted: Option<bool>) {
        match (gold, predicted) {
            (_, None) => self.failures += 1,
            (true, Some(true)) => self.tp += 1,
            (false, Some(true)) => self.fp += 1,
            (true, Some(false)) => self.fn_ += 1,
            (false, Some(false)) => self.tn += 1,
        }
    }

    fn finish(&mut self) {
        let (p, r, f) = compute_prf(self.tp, self.fp, self.fn_);
        self.precision = p;
        self.recall = r;
        self.f1 = f;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn + self.failures
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub overall: TaskMetrics,
    pub per_task: BTreeMap<TaskType, TaskMetrics>,
}

/// Outcome of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub task_type: TaskType,
    pub label_hallucinated: bool,
    pub predicted_hallucinated: Option<bool>,
    pub response_score: Option<f64>,
    pub error: Option<String>,
    pub verdict: Option<ResponseVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub backend: String,
    pub config: PipelineConfig,
    pub samples: usize,
    pub metrics: EvalMetrics,
    pub records: Vec<SampleRecord>,
}

impl Report {
    /// Rebuilds metrics from a verdict log; records are ordered by id.
    pub fn from_records(name: String, backend: String, config: PipelineConfig, mut records: Vec<SampleRecord>) -> Self {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let mut overall = TaskMetrics::default();
        let mut per_task: BTreeMap<TaskType, TaskMetrics> = BTreeMap::new();
        for r in &records {
            overall.record(r.label_hallucinated, r.predicted_hallucinated);
            per_task
                .entry(r.task_type)
                .or_default()
                .record(r.label_hallucinated, r.predicted_hallucinated);
        }
        overall.finish();
        per_task.values_mut().for_each(TaskMetrics::finish);
        Self {
            name,
            backend,
            config,
            samples: records.len(),
            metrics: EvalMetrics { overall, per_task },
            records,
        }
    }

    pub fn failures(&self) -> u64 {
        self.metrics.overall.failures
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned table: one row per method, Prec./Rec./F1 (percent) per task
    /// and overall.
    pub fn to_table(&self) -> String {
        let mut tasks = vec![TaskType::Qa, TaskType::DataToText, TaskType::Summarization];
        if self.metrics.per_task.contains_key(&TaskType::Other) {
            tasks.push(TaskType::Other);
        }
        let mut groups: Vec<(&str, Option<&TaskMetrics>)> = tasks
            .iter()
            .map(|t| (t.title(), self.metrics.per_task.get(t)))
            .collect();
        groups.push(("OVERALL", Some(&self.metrics.overall)));

        let name_width = self.name.chars().count().max("Method".len());
        const GROUP: usize = 22;
        let mut out = String::new();
        let _ = write!(out, "{:<name_width$}", "");
        for (title, _) in &groups {
            let _ = write!(out, " | {title:^GROUP$}");
        }
        out.push('\n');
        let _ = write!(out, "{:<name_width$}", "Method");
        for _ in &groups {
            let _ = write!(out, " | {:>6} {:>7} {:>7}", "Prec.", "Rec.", "F1");
        }
        out.push('\n');
        let _ = write!(out, "{:<name_width$}", self.name);
        for (_, m) in &groups {
            match m {
                Some(m) => {
                    let _ = write!(
                        out,
                        " | {:>6.2} {:>7.2} {:>7.2}",
                        m.precision * 100.0,
                        m.recall * 100.0,
                        m.f1 * 100.0
                    );
                }
                None => {
                    let _ = write!(out, " | {:>6} {:>7} {:>7}", "-", "-", "-");
                }
            }
        }
        out.push('\n');
        let o = &self.metrics.overall;
        let _ = writeln!(
            out,
            "\nsamples: {}  tp: {}  fp: {}  fn: {}  tn: {}  failures: {}",
            self.samples, o.tp, o.fp, o.fn_, o.tn, o.failures
        );
        out
    }

    /// One-line overall summary.
    pub fn overall_line(&self) -> String {
        let o = &self.metrics.overall;
        format!(
            "{} OVERALL precision={:.4} recall={:.4} f1={:.4} (samples={}, failures={})",
            self.name, o.precision, o.recall, o.f1, self.samples, o.failures
        )
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| Error::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()).map_err(io(&json))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.to_table()).map_err(io(&txt))?;
        Ok(())
    }
}

pub fn run_sample(pipeline: &Pipeline, sample: &EvalSample) -> SampleRecord {
    match pipeline.detect(&sample.request()) {
        Ok(verdict) => SampleRecord {
            id: sample.id.clone(),
            task_type: sample.task_type,
            label_hallucinated: sample.label_hallucinated,
            predicted_hallucinated: Some(verdict.label == ResponseLabel::Hallucinated),
            response_score: Some(verdict.response_score),
            error: None,
            verdict: Some(verdict),
        },
        Err(e) => SampleRecord {
            id: sample.id.clone(),
            task_type: sample.task_type,
            label_hallucinated: sample.label_hallucinated,
            predicted_hallucinated: None,
            response_score: None,
            error: Some(e.to_string()),
            verdict: None,
        },
    }
}

/// Runs detection over every sample on up to `jobs` threads. Failed
/// samples are counted separately, never as negatives.
pub fn evaluate(samples: &[EvalSample], pipeline: &Pipeline, name: &str, backend: &str, jobs: usize) -> Result<Report> {
    if samples.is_empty() {
        return Err(Error::contract("no samples to evaluate"));
    }
    let records = map_samples(samples, jobs, |s| run_sample(pipeline, s))?;
    Ok(Report::from_records(
        name.to_string(),
        backend.to_string(),
        pipeline.config().clone(),
        records,
    ))
}

/// Order-preserving map over samples on a dedicated pool of `jobs` threads.
pub fn map_samples<T, F>(samples: &[EvalSample], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&EvalSample) -> T + Sync + Send,
{
    if jobs <= 1 {
        return Ok(samples.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(|| samples.par_iter().map(&f).collect()))
}
