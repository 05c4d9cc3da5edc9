//! Single-stage subcommands and the helpers they share with the pipeline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use advneg_core::corpus::{
    assemble_test_instances, assemble_training_instances, load_corpus, AdversarialSource,
    CandidateInstance, Corpus, CorpusFormat, NegativeEntry, NegativeTable, Split, TestKind,
};
use advneg_core::eval::{
    contamination_report, evaluate, format_contamination_table, format_quality_table,
    quality_report, BackendFactory, LabeledResponse,
};
use advneg_core::generator::{generate_batch, GenerationResult, GenerationSettings};
use advneg_core::jsonl::{read_jsonl, write_jsonl};
use advneg_core::llm::{
    CannedBackend, CompletionBackend, HttpBackend, LlmClient, SyntheticBackend, UreqTransport,
    BASE_URL_ENV, DEFAULT_BASE_URL,
};
use advneg_core::negatives::{build_negative_table, EmbeddingProvider, SamplerSettings};
use advneg_core::prompt::{render_prompt, select_examples, ExampleSet, PromptSpec};
use advneg_core::ranker::{train, CorpusStats, RankerModel};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::args::{AssembleKind, LlmFlags, PromptFlags};
use crate::config::RunConfig;
use crate::manifest::ManifestBuilder;

/// How a command finished; `Partial` maps to exit code 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    Partial,
}

impl Status {
    pub fn from_skipped(skipped: usize) -> Self {
        if skipped == 0 {
            Status::Complete
        } else {
            Status::Partial
        }
    }
}

pub fn apply_llm_flags(cfg: &mut RunConfig, flags: &LlmFlags) {
    let g = &mut cfg.generation;
    if let Some(v) = &flags.model {
        g.client.model_name = v.clone();
    }
    if let Some(v) = flags.temperature {
        g.client.temperature = v;
    }
    if let Some(v) = flags.frequency_penalty {
        g.client.frequency_penalty = v;
    }
    if let Some(v) = flags.presence_penalty {
        g.client.presence_penalty = v;
    }
    if let Some(v) = flags.max_retries {
        g.client.max_retries = v;
    }
    if let Some(v) = flags.max_in_flight {
        g.client.max_in_flight = v;
    }
    if let Some(v) = &flags.canned {
        g.canned = Some(v.clone());
    }
    if let Some(v) = flags.attempt_cap {
        g.attempt_cap = v;
    }
}

pub fn apply_prompt_flags(cfg: &mut RunConfig, flags: &PromptFlags) {
    if let Some(v) = flags.instruction {
        cfg.prompt.instruction = v;
    }
    if let Some(v) = flags.k {
        cfg.prompt.k = v;
    }
    if let Some(v) = flags.e_fraction {
        cfg.prompt.e_fraction = v;
    }
    if flags.reuse {
        cfg.prompt.reuse = true;
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    ensure_parent(path)?;
    Ok(write_jsonl(path, items)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `<out>.manifest.json`, written next to a single-stage output.
pub fn sidecar_manifest(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", out.display()))
}

pub fn manifest_root(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn load(path: &Path, cfg: &RunConfig, split: Split) -> Result<Corpus> {
    let format: CorpusFormat = cfg.data.format.parse().map_err(anyhow::Error::msg)?;
    load_corpus(path, format, split).with_context(|| format!("loading {}", path.display()))
}

pub fn load_table(path: &Path, method: &str) -> Result<NegativeTable> {
    let entries: Vec<NegativeEntry> = read_jsonl(path)?;
    Ok(NegativeTable::from_entries(method, entries))
}

/// Completion backend chosen by the config: canned fixtures, the synthetic
/// mock (drawing filler sentences from `pool`), or the HTTP endpoint.
pub fn backend_factory(cfg: &RunConfig, pool: &[String]) -> Result<BackendFactory> {
    if let Some(path) = &cfg.generation.canned {
        let canned = CannedBackend::from_file(path)?;
        return Ok(Arc::new(move || Box::new(canned.clone()) as Box<dyn CompletionBackend>));
    }
    if cfg.generation.mock {
        let pool = pool.to_vec();
        return Ok(Arc::new(move || Box::new(SyntheticBackend::new(pool.clone())) as Box<dyn CompletionBackend>));
    }
    let Some(key) = cfg.generation.resolved_api_key() else {
        bail!("no API key available for the HTTP backend");
    };
    let base = cfg
        .generation
        .endpoint
        .clone()
        .or_else(|| std::env::var(BASE_URL_ENV).ok())
        .unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
    let timeout = Duration::from_secs_f64(cfg.generation.client.request_timeout_secs);
    Ok(Arc::new(move || {
        Box::new(HttpBackend::new(base.clone(), key.clone(), Box::new(UreqTransport::new(timeout))))
            as Box<dyn CompletionBackend>
    }))
}

pub fn embedding_provider(spec: &str, texts: &[String]) -> Result<EmbeddingProvider> {
    match spec.strip_prefix("file:") {
        Some(path) => Ok(EmbeddingProvider::from_vectors_file(Path::new(path))?),
        None => Ok(EmbeddingProvider::tfidf(texts.iter().map(String::as_str))),
    }
}

pub fn ingest(cfg: &RunConfig, format: &str, input: &Path, out: &Path, split: Split) -> Result<Status> {
    let format: CorpusFormat = format.parse().map_err(anyhow::Error::msg)?;
    let corpus = load_corpus(input, format, split).with_context(|| format!("loading {}", input.display()))?;
    let summary = corpus.summary();
    log::info!(
        "{} records, {} with adversarial negatives, pool of {}",
        summary.records,
        summary.adversarial_bearing,
        summary.pool_size
    );
    write_lines(out, &corpus.records)?;
    let manifest = sidecar_manifest(out);
    let mut m = ManifestBuilder::new("ingest", cfg, manifest_root(&manifest));
    m.input(input)?;
    m.stage("ingest", &[out], vec![])?;
    m.finish(&manifest)?;
    Ok(Status::Complete)
}

pub fn assemble(
    cfg: &RunConfig,
    kind: AssembleKind,
    input: &Path,
    source: AdversarialSource,
    negatives: Option<&Path>,
    out: &Path,
) -> Result<Status> {
    let split = if kind == AssembleKind::Train { Split::Train } else { Split::Test };
    let corpus = load(input, cfg, split)?;
    let instances = match kind {
        AssembleKind::Train => {
            let table = match negatives {
                Some(p) => Some(load_table(p, &format!("{source:?}").to_lowercase())?),
                None => None,
            };
            assemble_training_instances(&corpus, source, table.as_ref(), cfg.seed)?
        }
        AssembleKind::RandomTest => assemble_test_instances(&corpus, TestKind::Random, cfg.seed)?,
        AssembleKind::AdvTest => assemble_test_instances(&corpus, TestKind::Adversarial, cfg.seed)?,
    };
    let kept: std::collections::HashSet<&str> = instances.iter().map(|i| i.context_id.as_str()).collect();
    let skipped: Vec<String> = corpus
        .records
        .iter()
        .filter(|r| !kept.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    write_lines(out, &instances)?;
    log::info!("{} instances, {} records skipped", instances.len(), skipped.len());

    let manifest = sidecar_manifest(out);
    let mut m = ManifestBuilder::new("assemble", cfg, manifest_root(&manifest));
    m.input(input)?;
    if let Some(p) = negatives {
        m.input(p)?;
    }
    let status = Status::from_skipped(skipped.len());
    m.stage("assemble", &[out], skipped)?;
    m.finish(&manifest)?;
    Ok(status)
}

pub fn prompt_render(
    cfg: &RunConfig,
    input: &Path,
    examples: Option<&Path>,
    target_id: &str,
    out: Option<&Path>,
) -> Result<Status> {
    let corpus = load(input, cfg, Split::Train)?;
    let source = match examples {
        Some(p) => load(p, cfg, Split::Train)?,
        None => corpus.clone(),
    };
    let mut target = corpus
        .get(target_id)
        .with_context(|| format!("no record with id {target_id:?}"))?
        .clone();
    target.adversarial_negatives.clear();
    let set = ExampleSet::from_corpus(&source, cfg.prompt.e_fraction, false, cfg.seed)?;
    let demos = select_examples(&set, cfg.prompt.k, Some(target_id), cfg.seed)?;
    let rendered = render_prompt(&PromptSpec::new(cfg.prompt.instruction, demos, target))?;
    match out {
        Some(path) => {
            write_text(path, &rendered.text)?;
            let manifest = sidecar_manifest(path);
            let mut m = ManifestBuilder::new("prompt render", cfg, manifest_root(&manifest));
            m.input(input)?;
            if let Some(p) = examples {
                m.input(p)?;
            }
            m.stage("prompt", &[path], vec![])?;
            m.finish(&manifest)?;
        }
        None => print!("{}", rendered.text),
    }
    Ok(Status::Complete)
}

/// Generation records live next to the negative table.
pub fn generations_path(out: &Path) -> PathBuf {
    out.with_extension("generations.jsonl")
}

pub fn generate(cfg: &RunConfig, input: &Path, examples: Option<&Path>, out: &Path) -> Result<Status> {
    let corpus = load(input, cfg, Split::Train)?;
    let source = match examples {
        Some(p) => load(p, cfg, Split::Train)?,
        None => corpus.clone(),
    };
    let factory = backend_factory(cfg, source.response_pool.texts())?;
    let client = LlmClient::new(factory(), cfg.generation.client.clone())?;
    let mut set = ExampleSet::from_corpus(&source, cfg.prompt.e_fraction, cfg.prompt.reuse, cfg.seed)?;
    let before = set.len();
    let settings = GenerationSettings {
        instruction: cfg.prompt.instruction,
        k: cfg.prompt.k,
        attempt_cap: cfg.generation.attempt_cap,
        seed: cfg.seed,
    };
    let outcome = generate_batch(&corpus.records, &mut set, &settings, &client)?;
    log::info!(
        "generated for {} targets, skipped {}, |E| {} -> {}",
        outcome.results.len(),
        outcome.skipped.len(),
        before,
        set.len()
    );
    let table = outcome.table("generated");
    write_lines(out, &table.to_entries())?;
    let generations = generations_path(out);
    write_lines(&generations, &outcome.results)?;

    let manifest = sidecar_manifest(out);
    let mut m = ManifestBuilder::new("generate", cfg, manifest_root(&manifest));
    m.input(input)?;
    if let Some(p) = examples {
        m.input(p)?;
    }
    if let Some(p) = &cfg.generation.canned {
        m.input(p)?;
    }
    let skipped: Vec<String> = outcome.skipped.iter().map(|(id, _)| id.clone()).collect();
    let status = Status::from_skipped(skipped.len());
    m.stage("generate", &[out, &generations], skipped)?;
    m.ledger(client.ledger().summary());
    m.finish(&manifest)?;
    Ok(status)
}

pub fn negatives(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Status> {
    let corpus = load(input, cfg, Split::Train)?;
    let provider = match cfg.negatives.embeddings.as_str() {
        "tfidf" => None,
        spec => Some(embedding_provider(spec, corpus.response_pool.texts())?),
    };
    let settings = SamplerSettings {
        method: cfg.negatives.method,
        n: cfg.negatives.n,
        alpha: cfg.negatives.alpha,
        seed: cfg.seed,
        ..Default::default()
    };
    let (table, skipped) = build_negative_table(&corpus, &settings, provider.as_ref())?;
    write_lines(out, &table.to_entries())?;
    let manifest = sidecar_manifest(out);
    let mut m = ManifestBuilder::new("negatives", cfg, manifest_root(&manifest));
    m.input(input)?;
    if let Some(path) = cfg.negatives.embeddings.strip_prefix("file:") {
        m.input(Path::new(path))?;
    }
    let status = Status::from_skipped(skipped.len());
    m.stage("negatives", &[out], skipped)?;
    m.finish(&manifest)?;
    Ok(status)
}

pub fn train_cmd(cfg: &RunConfig, instances_path: &Path, out: &Path) -> Result<Status> {
    let instances: Vec<CandidateInstance> = read_jsonl(instances_path)?;
    let stats = CorpusStats::from_instances(&instances);
    let model = train(&instances, &cfg.train, &stats)?;
    log::info!(
        "trained on {} instances in {} steps, final loss {:.6}",
        instances.len(),
        model.trace.len().saturating_sub(1),
        model.final_loss().unwrap_or(f64::NAN)
    );
    write_json(out, &model)?;
    let manifest = sidecar_manifest(out);
    let mut m = ManifestBuilder::new("train", cfg, manifest_root(&manifest));
    m.input(instances_path)?;
    m.stage("train", &[out], vec![])?;
    m.finish(&manifest)?;
    Ok(Status::Complete)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScore {
    pub name: String,
    pub instances: usize,
    pub recall_at_1: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub tests: Vec<TestScore>,
    pub mean_recall_at_1: f64,
}

pub fn score_tests(
    model: &RankerModel,
    stats: &CorpusStats,
    tests: &[(String, Vec<CandidateInstance>)],
) -> Result<EvalSummary> {
    let mut scores = Vec::new();
    for (name, instances) in tests {
        let report = evaluate(model, instances, stats).with_context(|| format!("evaluating {name}"))?;
        scores.push(TestScore {
            name: name.clone(),
            instances: instances.len(),
            recall_at_1: report.recall_at_1,
            mrr: report.mrr,
        });
    }
    let mean = scores.iter().map(|s| s.recall_at_1).sum::<f64>() / scores.len().max(1) as f64;
    Ok(EvalSummary {
        tests: scores,
        mean_recall_at_1: mean,
    })
}

pub fn format_eval_summary(summary: &EvalSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>9} {:>7} {:>7}", "Test", "Instances", "R@1", "MRR");
    for t in &summary.tests {
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>7.3} {:>7.3}",
            t.name, t.instances, t.recall_at_1, t.mrr
        );
    }
    let _ = writeln!(out, "{:<16} {:>9} {:>7.3}", "mean", "", summary.mean_recall_at_1);
    out
}

pub fn eval_cmd(
    cfg: &RunConfig,
    model_path: &Path,
    train_instances: &Path,
    tests: &[(String, PathBuf)],
    out: &Path,
) -> Result<Status> {
    let model: RankerModel = read_json(model_path)?;
    let train_set: Vec<CandidateInstance> = read_jsonl(train_instances)?;
    let stats = CorpusStats::from_instances(&train_set);
    let loaded = tests
        .iter()
        .map(|(name, p)| Ok((name.clone(), read_jsonl::<CandidateInstance>(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let summary = score_tests(&model, &stats, &loaded)?;
    let table = format_eval_summary(&summary);
    print!("{table}");
    write_json(out, &summary)?;
    let text_out = out.with_extension("txt");
    write_text(&text_out, &table)?;

    let manifest = sidecar_manifest(out);
    let mut m = ManifestBuilder::new("eval", cfg, manifest_root(&manifest));
    m.input(model_path)?;
    m.input(train_instances)?;
    for (_, p) in tests {
        m.input(p)?;
    }
    m.stage("eval", &[out, &text_out], vec![])?;
    m.finish(&manifest)?;
    Ok(Status::Complete)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedResponse {
    #[serde(rename = "type")]
    pub response_type: String,
    pub context: String,
    pub response: String,
}

pub fn group_labeled(items: Vec<TypedResponse>) -> BTreeMap<String, Vec<LabeledResponse>> {
    let mut groups: BTreeMap<String, Vec<LabeledResponse>> = BTreeMap::new();
    for t in items {
        groups.entry(t.response_type).or_default().push(LabeledResponse {
            context: t.context,
            response: t.response,
        });
    }
    groups
}

/// Every distinct context and candidate text of an instance set.
pub fn instance_texts(instances: &[CandidateInstance]) -> Vec<String> {
    let mut texts = std::collections::BTreeSet::new();
    for inst in instances {
        texts.insert(inst.context_text());
        texts.extend(inst.candidates.iter().cloned());
    }
    texts.into_iter().collect()
}

pub fn quality_cmd(
    cfg: &RunConfig,
    model_path: &Path,
    train_instances: &Path,
    labeled: &Path,
    out: &Path,
) -> Result<Status> {
    let model: RankerModel = read_json(model_path)?;
    let train_set: Vec<CandidateInstance> = read_jsonl(train_instances)?;
    let stats = CorpusStats::from_instances(&train_set);
    let provider = embedding_provider(&cfg.negatives.embeddings, &instance_texts(&train_set))?;
    let groups = group_labeled(read_jsonl(labeled)?);
    let q = quality_report(&model, &stats, &provider, &groups)?;
    let table = format_quality_table(&q);
    print!("{table}");
    write_json(out, &q)?;
    let text_out = out.with_extension("txt");
    write_text(&text_out, &table)?;

    let manifest = sidecar_manifest(out);
    let mut m = ManifestBuilder::new("quality", cfg, manifest_root(&manifest));
    m.input(model_path)?;
    m.input(train_instances)?;
    m.input(labeled)?;
    m.stage("quality", &[out, &text_out], vec![])?;
    m.finish(&manifest)?;
    Ok(Status::Complete)
}

pub fn contamination_cmd(cfg: &RunConfig, generations: &Path, out: &Path) -> Result<Status> {
    let results: Vec<GenerationResult> = read_jsonl(generations)?;
    let rows = contamination_report(&results);
    let table = format_contamination_table(&rows);
    print!("{table}");
    write_json(out, &rows)?;
    let text_out = out.with_extension("txt");
    write_text(&text_out, &table)?;

    let manifest = sidecar_manifest(out);
    let mut m = ManifestBuilder::new("contamination", cfg, manifest_root(&manifest));
    m.input(generations)?;
    m.stage("contamination", &[out, &text_out], vec![])?;
    m.finish(&manifest)?;
    Ok(Status::Complete)
}
