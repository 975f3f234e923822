//! Manifest-driven stages. Each stage reads only what earlier stages wrote
//! under the output directory, so any stage can be re-run on its own.
//!
//! ```text
//! <output>/
//!   instances.jsonl  prompts.jsonl  run_manifest.json
//!   responses/<model>__t<temperature>.jsonl
//!   extractions/<model>__t<temperature>.jsonl
//!   classifications.jsonl
//!   reports/   analysis/
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::extraction::{extract, ExtractionConfig};
use crate::gateway::{
    run_batch, BatchSummary, BiasProfile, HttpTransport, LiveSource, ModelConfig, ResponseRecord, RunStore,
    Simulator,
};
use crate::prompt::{expand_prompt_set, Prompt, PromptKey};
use crate::scoring::{
    classify, emit_report, resistance, resistance_csv, Classification, Dimension, PivotTable, ReportFormat,
};
use crate::stats::{analysis_csv, analyze, cell_scores, CovariateTest, ModelMeta};
use crate::template::{fill_corpus, parse_template, validate_corpus, PhraseLexicon, TemplateScenario, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Runtime,
}

#[derive(Debug, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub class: ErrorClass,
    pub message: String,
}

impl PipelineError {
    pub fn validation(stage: &'static str, message: impl Into<String>) -> Self {
        PipelineError {
            stage,
            class: ErrorClass::Validation,
            message: message.into(),
        }
    }

    pub fn runtime(stage: &'static str, message: impl ToString) -> Self {
        PipelineError {
            stage,
            class: ErrorClass::Runtime,
            message: message.to_string(),
        }
    }

    /// Process exit code: 1 for validation problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Validation => 1,
            ErrorClass::Runtime => 2,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn default_parallelism() -> usize {
    4
}

/// One model with the temperatures to run it at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub model_id: String,
    #[serde(default)]
    pub endpoint: String,
    pub temperatures: Vec<f64>,
    /// Parameter count in billions.
    #[serde(default)]
    pub params_b: Option<f64>,
    #[serde(default)]
    pub reasoning: bool,
    #[serde(default)]
    pub top_p: Option<f64>,
    #[serde(default)]
    pub top_k: Option<i64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub request_timeout_secs: Option<f64>,
    #[serde(default)]
    pub max_attempts: Option<u32>,
    #[serde(default)]
    pub backoff_ms: Option<u64>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub requests_per_second: Option<f64>,
}

impl ModelEntry {
    pub fn configs(&self) -> Vec<ModelConfig> {
        self.temperatures
            .iter()
            .map(|&t| {
                let mut c = ModelConfig::new(&self.model_id, &self.endpoint, t);
                if let Some(v) = self.top_p {
                    c.top_p = v;
                }
                if let Some(v) = self.top_k {
                    c.top_k = v;
                }
                if let Some(v) = self.max_tokens {
                    c.max_tokens = v;
                }
                if let Some(v) = self.request_timeout_secs {
                    c.request_timeout_secs = v;
                }
                if let Some(v) = self.max_attempts {
                    c.max_attempts = v;
                }
                if let Some(v) = self.backoff_ms {
                    c.backoff_ms = v;
                }
                c.api_key_env = self.api_key_env.clone();
                c.requests_per_second = self.requests_per_second;
                c
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default)]
    pub profile: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

/// The run manifest. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub corpus: PathBuf,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub base_seed: u64,
    pub k: usize,
    pub output: PathBuf,
    #[serde(default)]
    pub extraction: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
}

impl RunManifest {
    pub fn from_toml_str(src: &str, base_dir: &Path) -> Result<RunManifest> {
        let mut m: RunManifest =
            toml::from_str(src).map_err(|e| PipelineError::validation("manifest", e.to_string()))?;
        m.resolve_paths(base_dir);
        m.check()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let src = fs::read_to_string(path)
            .map_err(|e| PipelineError::validation("manifest", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&src, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.corpus);
        join(&mut self.output);
        if let Some(p) = self.lexicon.as_mut() {
            join(p);
        }
        if let Some(p) = self.extraction.as_mut() {
            join(p);
        }
        if let Some(p) = self.simulate.as_mut().and_then(|s| s.profile.as_mut()) {
            join(p);
        }
    }

    fn check(&self) -> Result<()> {
        let fail = |msg: String| Err(PipelineError::validation("manifest", msg));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.models.is_empty() {
            return fail("no models listed".into());
        }
        if !self.corpus.is_dir() {
            return fail(format!("corpus directory {} does not exist", self.corpus.display()));
        }
        for p in self
            .lexicon
            .iter()
            .chain(&self.extraction)
            .chain(self.simulate.as_ref().and_then(|s| s.profile.as_ref()))
        {
            if !p.is_file() {
                return fail(format!("{} does not exist", p.display()));
            }
        }
        for m in &self.models {
            if m.temperatures.is_empty() {
                return fail(format!("model {} has no temperatures", m.model_id));
            }
            for c in m.configs() {
                c.validate().map_err(|e| PipelineError::validation("manifest", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn model_meta(&self) -> BTreeMap<String, ModelMeta> {
        self.models
            .iter()
            .map(|m| {
                (
                    m.model_id.clone(),
                    ModelMeta {
                        params_b: m.params_b,
                        reasoning: m.reasoning,
                    },
                )
            })
            .collect()
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.output.clone(),
        }
    }
}

/// Paths inside the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn instances(&self) -> PathBuf {
        self.root.join("instances.jsonl")
    }
    pub fn prompts(&self) -> PathBuf {
        self.root.join("prompts.jsonl")
    }
    pub fn run_manifest(&self) -> PathBuf {
        self.root.join("run_manifest.json")
    }
    pub fn responses(&self) -> PathBuf {
        self.root.join("responses")
    }
    pub fn extractions(&self) -> PathBuf {
        self.root.join("extractions")
    }
    pub fn classifications(&self) -> PathBuf {
        self.root.join("classifications.jsonl")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }
}

fn write_jsonl<T: Serialize>(stage: &'static str, path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", dir.display())))?;
    }
    let io = |e: std::io::Error| PipelineError::runtime(stage, format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| PipelineError::runtime(stage, e))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_jsonl<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| {
        PipelineError::runtime(stage, format!("{}: {e} (run the earlier stages first)", path.display()))
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::runtime(stage, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| PipelineError::runtime(stage, format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn write_file(stage: &'static str, path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| PipelineError::runtime(stage, format!("{}: {e}", path.display())))
}

/// Parsed corpus with its content hash.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub templates: Vec<TemplateScenario>,
    pub lexicon: PhraseLexicon,
    pub hash: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads every `*.toml` template under `dir` (sorted by file name) and the
/// lexicon. Parse errors are validation failures naming the file.
pub fn load_corpus(dir: &Path, lexicon: Option<&Path>) -> Result<Corpus> {
    let stage = "validate";
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PipelineError::validation(stage, format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    let mut hasher = Sha256::new();
    let mut templates = Vec::with_capacity(files.len());
    let mut errors = Vec::new();
    for f in &files {
        let src = fs::read_to_string(f).map_err(|e| PipelineError::validation(stage, format!("{}: {e}", f.display())))?;
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((src.len() as u64).to_le_bytes());
        hasher.update(src.as_bytes());
        match parse_template(&src) {
            Ok(t) => templates.push(t),
            Err(e) => errors.push(format!("{name}: {e}")),
        }
    }
    if !errors.is_empty() {
        return Err(PipelineError::validation(stage, errors.join("\n")));
    }
    let lexicon = match lexicon {
        Some(p) => {
            let src = fs::read(p).map_err(|e| PipelineError::validation(stage, format!("{}: {e}", p.display())))?;
            hasher.update(b"lexicon");
            hasher.update(&src);
            PhraseLexicon::load(p).map_err(|e| PipelineError::validation(stage, e.to_string()))?
        }
        None => PhraseLexicon::default(),
    };
    Ok(Corpus {
        templates,
        lexicon,
        hash: hex(&hasher.finalize()),
    })
}

/// Validates the corpus; an unclean report is a validation error.
pub fn cmd_validate(manifest: &RunManifest) -> Result<(Corpus, ValidationReport)> {
    let corpus = load_corpus(&manifest.corpus, manifest.lexicon.as_deref())?;
    let report = validate_corpus(&corpus.templates, &corpus.lexicon);
    if !report.is_clean() {
        return Err(PipelineError::validation("validate", report.to_string().trim_end()));
    }
    Ok((corpus, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandSummary {
    pub templates: usize,
    pub instances: usize,
    pub prompts: usize,
}

impl std::fmt::Display for ExpandSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} → {} → {}", self.templates, self.instances, self.prompts)
    }
}

/// What a run was built from; written once by `expand`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub corpus_hash: String,
    pub base_seed: u64,
    pub k: usize,
    pub templates: usize,
    pub instances: usize,
    pub prompts: usize,
    pub simulate_seed: Option<u64>,
    pub models: Vec<ModelEntry>,
}

/// Validates, fills and renders the corpus.
pub fn cmd_expand(manifest: &RunManifest) -> Result<ExpandSummary> {
    let (corpus, _) = cmd_validate(manifest)?;
    let instances = fill_corpus(&corpus.templates, &corpus.lexicon, manifest.base_seed, manifest.k)
        .map_err(|e| PipelineError::validation("expand", e.to_string()))?;
    let prompts = expand_prompt_set(&instances).map_err(|e| PipelineError::validation("expand", e.to_string()))?;
    let layout = manifest.layout();
    write_jsonl("expand", &layout.instances(), &instances)?;
    write_jsonl("expand", &layout.prompts(), &prompts)?;
    let summary = ExpandSummary {
        templates: corpus.templates.len(),
        instances: instances.len(),
        prompts: prompts.len(),
    };
    let record = RunRecord {
        corpus_hash: corpus.hash,
        base_seed: manifest.base_seed,
        k: manifest.k,
        templates: summary.templates,
        instances: summary.instances,
        prompts: summary.prompts,
        simulate_seed: manifest.simulate.as_ref().map(|s| s.seed),
        models: manifest.models.clone(),
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| PipelineError::runtime("expand", e))?;
    write_file("expand", &layout.run_manifest(), &(json + "\n"))?;
    Ok(summary)
}

/// Overrides for the `run` stage.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Only these model ids.
    pub models: Option<Vec<String>>,
    /// Replaces every model's temperatures.
    pub temperatures: Option<Vec<f64>>,
    pub parallelism: Option<usize>,
    /// Keep existing responses and submit only the missing ones.
    pub resume: bool,
    /// Use the simulator even if the manifest has no `[simulate]` section.
    pub simulate: bool,
    pub profile: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn selected_configs(manifest: &RunManifest, opts: &RunOptions) -> Result<Vec<ModelConfig>> {
    let mut configs = Vec::new();
    for entry in &manifest.models {
        if let Some(only) = &opts.models {
            if !only.contains(&entry.model_id) {
                continue;
            }
        }
        let mut entry = entry.clone();
        if let Some(t) = &opts.temperatures {
            entry.temperatures = t.clone();
        }
        configs.extend(entry.configs());
    }
    if configs.is_empty() {
        return Err(PipelineError::validation("run", "no model matches the selection"));
    }
    for c in &configs {
        c.validate().map_err(|e| PipelineError::validation("run", e.to_string()))?;
    }
    Ok(configs)
}

/// Collects responses for every prompt under every selected configuration.
pub fn cmd_run(manifest: &RunManifest, opts: &RunOptions) -> Result<BatchSummary> {
    let layout = manifest.layout();
    let prompts: Vec<Prompt> = read_jsonl("run", &layout.prompts())?;
    let configs = selected_configs(manifest, opts)?;
    let store = RunStore::open(layout.responses()).map_err(|e| PipelineError::runtime("run", e))?;
    if !opts.resume {
        for c in &configs {
            let path = store.path_for(&c.model_id, c.temperature);
            if path.exists() {
                fs::remove_file(&path).map_err(|e| PipelineError::runtime("run", format!("{}: {e}", path.display())))?;
            }
        }
    }
    let parallelism = opts.parallelism.unwrap_or(manifest.parallelism).max(1);
    let simulate = opts.simulate || manifest.simulate.is_some() || opts.profile.is_some();
    let summary = if simulate {
        let section = manifest.simulate.clone().unwrap_or(SimulateSection { profile: None, seed: 0 });
        let profile = match opts.profile.as_ref().or(section.profile.as_ref()) {
            Some(p) => BiasProfile::load(p).map_err(|e| PipelineError::validation("run", e.to_string()))?,
            None => BiasProfile::default(),
        };
        let sim = Simulator::new(profile, opts.seed.unwrap_or(section.seed));
        run_batch(&prompts, &configs, &sim, &store, parallelism)
    } else {
        let live = LiveSource::new(HttpTransport::new());
        run_batch(&prompts, &configs, &live, &store, parallelism)
    }
    .map_err(|e| PipelineError::runtime("run", e))?;
    Ok(summary)
}

/// Per-choice extraction output for one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    #[serde(flatten)]
    pub prompt: PromptKey,
    pub model_id: String,
    pub temperature: f64,
    pub selected: Option<String>,
    pub choices: Vec<ChoiceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceSummary {
    pub key: String,
    pub presence: f64,
    pub sentiment_weight: f64,
    pub confidence: f64,
}

fn extraction_config(manifest: &RunManifest) -> Result<ExtractionConfig> {
    match &manifest.extraction {
        Some(p) => ExtractionConfig::load(p).map_err(|e| PipelineError::validation("extract", e.to_string())),
        None => Ok(ExtractionConfig::default()),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub responses: usize,
    pub skipped_errors: usize,
    pub unrelated: usize,
}

/// Runs answer extraction over every stored response. Error records are
/// skipped.
pub fn cmd_extract(manifest: &RunManifest) -> Result<ExtractSummary> {
    let layout = manifest.layout();
    let cfg = extraction_config(manifest)?;
    let prompts: Vec<Prompt> = read_jsonl("extract", &layout.prompts())?;
    let by_key: HashMap<&PromptKey, &Prompt> = prompts.iter().map(|p| (&p.key, p)).collect();
    let store = RunStore::open(layout.responses()).map_err(|e| PipelineError::runtime("extract", e))?;
    let records = store.records().map_err(|e| PipelineError::runtime("extract", e))?;
    let out_dir = layout.extractions();
    if out_dir.exists() {
        fs::remove_dir_all(&out_dir).map_err(|e| PipelineError::runtime("extract", e))?;
    }
    let mut summary = ExtractSummary::default();
    let mut grouped: BTreeMap<String, Vec<&ResponseRecord>> = BTreeMap::new();
    for r in &records {
        if r.is_error() {
            summary.skipped_errors += 1;
            continue;
        }
        grouped
            .entry(RunStore::file_name(&r.model_id, r.temperature))
            .or_default()
            .push(r);
    }
    for (file, group) in grouped {
        let extracted: Vec<ExtractionRecord> = group
            .par_iter()
            .map(|r| {
                let prompt = by_key.get(&r.prompt).ok_or_else(|| {
                    PipelineError::runtime("extract", format!("response for unknown prompt {}", r.prompt))
                })?;
                let scores = extract(&r.response_text, &prompt.answers, &cfg);
                Ok(ExtractionRecord {
                    prompt: r.prompt.clone(),
                    model_id: r.model_id.clone(),
                    temperature: r.temperature,
                    selected: scores.selected.clone(),
                    choices: scores
                        .choices
                        .iter()
                        .map(|c| ChoiceSummary {
                            key: c.key.clone(),
                            presence: c.presence,
                            sentiment_weight: c.sentiment_weight,
                            confidence: c.confidence,
                        })
                        .collect(),
                })
            })
            .collect::<Result<_>>()?;
        summary.responses += extracted.len();
        summary.unrelated += extracted.iter().filter(|e| e.selected.is_none()).count();
        write_jsonl("extract", &out_dir.join(file), &extracted)?;
    }
    Ok(summary)
}

fn load_extractions(layout: &Layout) -> Result<Vec<ExtractionRecord>> {
    let dir = layout.extractions();
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| PipelineError::runtime("score", format!("{}: {e} (run extract first)", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_jsonl::<ExtractionRecord>("score", &f)?);
    }
    Ok(out)
}

/// Classifies every extraction and writes the long-form resistance table
/// grouped by `group_by`.
pub fn cmd_score(manifest: &RunManifest, group_by: &[Dimension]) -> Result<Vec<Classification>> {
    let layout = manifest.layout();
    let prompts: Vec<Prompt> = read_jsonl("score", &layout.prompts())?;
    let by_key: HashMap<&PromptKey, &Prompt> = prompts.iter().map(|p| (&p.key, p)).collect();
    let mut classifications = Vec::new();
    for e in load_extractions(&layout)? {
        let prompt = by_key
            .get(&e.prompt)
            .ok_or_else(|| PipelineError::runtime("score", format!("extraction for unknown prompt {}", e.prompt)))?;
        let scores = crate::extraction::AnswerScores {
            choices: Vec::new(),
            selected: e.selected.clone(),
        };
        classifications.push(Classification {
            prompt: e.prompt,
            bias: prompt.bias,
            model_id: e.model_id,
            temperature: e.temperature,
            outcome: classify(&scores, &prompt.answers),
        });
    }
    classifications.sort_by(|a, b| {
        (&a.model_id, a.temperature.to_bits(), &a.prompt).cmp(&(&b.model_id, b.temperature.to_bits(), &b.prompt))
    });
    write_jsonl("score", &layout.classifications(), &classifications)?;
    let rows = resistance(&classifications, group_by);
    let name: Vec<&str> = group_by
        .iter()
        .map(|d| match d {
            Dimension::Model => "model",
            Dimension::Bias => "bias",
            Dimension::Level => "level",
            Dimension::Temperature => "temperature",
        })
        .collect();
    let file = if name.is_empty() {
        "resistance_overall.csv".to_string()
    } else {
        format!("resistance_by_{}.csv", name.join("_"))
    };
    write_file("score", &layout.reports().join(file), &resistance_csv(&rows, group_by))?;
    Ok(classifications)
}

/// Pivot tables written by `report`, keyed by file stem.
pub fn pivot_tables(classifications: &[Classification]) -> Vec<(&'static str, PivotTable)> {
    vec![
        ("model_by_bias", PivotTable::model_by_bias(classifications)),
        ("level_by_bias", PivotTable::level_by_bias(classifications)),
        ("temperature_by_bias", PivotTable::temperature_by_bias(classifications)),
    ]
}

/// Writes the pivot tables as CSV and Markdown. Returns the files written.
pub fn cmd_report(manifest: &RunManifest) -> Result<Vec<PathBuf>> {
    let layout = manifest.layout();
    let classifications: Vec<Classification> = read_jsonl("report", &layout.classifications())?;
    let dir = layout.reports();
    fs::create_dir_all(&dir).map_err(|e| PipelineError::runtime("report", e))?;
    let mut written = Vec::new();
    for (stem, table) in pivot_tables(&classifications) {
        for (format, ext) in [(ReportFormat::Csv, "csv"), (ReportFormat::Markdown, "md")] {
            let path = dir.join(format!("{stem}.{ext}"));
            emit_report(&table, format, &path).map_err(|e| PipelineError::runtime("report", e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Runs one covariate test for every bias and writes `analysis/<test>.csv`.
pub fn cmd_analyze(manifest: &RunManifest, test: CovariateTest) -> Result<String> {
    let layout = manifest.layout();
    let classifications: Vec<Classification> = read_jsonl("analyze", &layout.classifications())?;
    let cells = cell_scores(&classifications);
    let rows = analyze(&cells, &manifest.model_meta(), test);
    let csv = analysis_csv(&rows);
    let name = match test {
        CovariateTest::Temperature => "temperature",
        CovariateTest::Size => "size",
        CovariateTest::Reasoning => "reasoning",
    };
    write_file("analyze", &layout.analysis().join(format!("{name}.csv")), &csv)?;
    Ok(csv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub expand: ExpandSummary,
    pub run: BatchSummary,
    pub extract: ExtractSummary,
    pub classified: usize,
}

/// Every stage in order. Responses already on disk are reused.
pub fn cmd_pipeline(manifest: &RunManifest, opts: &RunOptions) -> Result<PipelineSummary> {
    let expand = cmd_expand(manifest)?;
    let opts = RunOptions {
        resume: true,
        ..opts.clone()
    };
    let run = cmd_run(manifest, &opts)?;
    let extract = cmd_extract(manifest)?;
    let classifications = cmd_score(manifest, &[Dimension::Model, Dimension::Bias])?;
    cmd_report(manifest)?;
    for test in [CovariateTest::Temperature, CovariateTest::Size, CovariateTest::Reasoning] {
        cmd_analyze(manifest, test)?;
    }
    Ok(PipelineSummary {
        expand,
        run,
        extract,
        classified: classifications.len(),
    })
}
