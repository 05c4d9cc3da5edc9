//! Multi-stage runs: the end-to-end pipeline and ablation grids. Both write
//! every artifact under one output directory with a `manifest.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use advneg_core::corpus::synthetic::{synthetic_corpus, SyntheticOptions};
use advneg_core::corpus::{
    assemble_test_instances, assemble_training_instances, AdversarialSource, CandidateInstance,
    Corpus, NegativeTable, Split, TestKind,
};
use advneg_core::eval::{
    contamination_report, format_ablation_table, format_contamination_table, format_quality_table,
    quality_report, run_ablation, AblationAxes, AblationCellSpec, AblationGrid, AblationInputs,
    LabeledResponse,
};
use advneg_core::generator::{generate_batch, GenerationSettings};
use advneg_core::llm::LlmClient;
use advneg_core::negatives::{build_negative_table, NegativeMethod, SamplerSettings};
use advneg_core::prompt::ExampleSet;
use advneg_core::ranker::{train, CorpusStats};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::args::Axis;
use crate::commands::{
    backend_factory, embedding_provider, instance_texts, load, score_tests, write_json,
    write_lines, write_text, EvalSummary, Status,
};
use crate::config::RunConfig;
use crate::manifest::ManifestBuilder;

/// Test contexts generated alongside `train` synthetic contexts.
fn synthetic_test_size(train: usize) -> usize {
    (train / 2).max(20)
}

fn synthetic(split: Split, records: usize, seed: u64, id_prefix: &'static str) -> Result<Corpus> {
    Ok(synthetic_corpus(
        split,
        &SyntheticOptions {
            records,
            seed,
            id_prefix,
            ..Default::default()
        },
    )?)
}

/// Train/test corpora from explicit paths, the config, or a synthetic draw.
/// Corpora that were not read from disk are written under `dir` and recorded
/// as stage outputs.
fn corpora(
    cfg: &RunConfig,
    train: Option<&Path>,
    test: Option<&Path>,
    synthetic_size: Option<usize>,
    dir: &Path,
    m: &mut ManifestBuilder,
) -> Result<(Corpus, Corpus)> {
    let train = train.map(Path::to_path_buf).or_else(|| cfg.data.train.clone());
    let test = test.map(Path::to_path_buf).or_else(|| cfg.data.test.clone());
    match (train, test, synthetic_size) {
        (Some(tr), Some(te), _) => {
            m.input(&tr)?;
            m.input(&te)?;
            Ok((load(&tr, cfg, Split::Train)?, load(&te, cfg, Split::Test)?))
        }
        (_, _, Some(n)) => {
            let train = synthetic(Split::Train, n, cfg.seed, "syn-train")?;
            let test = synthetic(Split::Test, synthetic_test_size(n), cfg.seed, "syn-test")?;
            let (tp, sp) = (dir.join("corpus/train.jsonl"), dir.join("corpus/test.jsonl"));
            write_lines(&tp, &train.records)?;
            write_lines(&sp, &test.records)?;
            m.stage("corpus", &[&tp, &sp], vec![])?;
            Ok((train, test))
        }
        _ => anyhow::bail!("need --train and --test (or data.train/data.test in the config), or --synthetic N"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    /// Training negatives → scores on each test set.
    pub rows: Vec<(String, EvalSummary)>,
    pub generated_targets: usize,
    pub skipped_targets: usize,
}

/// R@1 on the random and adversarial tests, one row per training negative type.
pub fn format_pipeline_table(rows: &[(String, EvalSummary)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>7} {:>7} {:>7}", "Negatives", "Random", "Adv", "Mean");
    for (name, s) in rows {
        let get = |test: &str| {
            s.tests
                .iter()
                .find(|t| t.name == test)
                .map_or_else(|| "-".to_string(), |t| format!("{:.3}", t.recall_at_1))
        };
        let _ = writeln!(
            out,
            "{:<12} {:>7} {:>7} {:>7.3}",
            name,
            get("random"),
            get("adversarial"),
            s.mean_recall_at_1
        );
    }
    out
}

fn labeled(corpus: &Corpus, table: &NegativeTable) -> Vec<LabeledResponse> {
    corpus
        .records
        .iter()
        .filter_map(|r| table.get(&r.id).map(|negs| (r, negs)))
        .flat_map(|(r, negs)| {
            negs.iter().map(move |n| LabeledResponse {
                context: r.context_text(),
                response: n.clone(),
            })
        })
        .collect()
}

pub fn pipeline(
    cfg: &RunConfig,
    train_path: Option<&Path>,
    test_path: Option<&Path>,
    synthetic_size: Option<usize>,
    dir: &Path,
) -> Result<Status> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut m = ManifestBuilder::new("pipeline", cfg, dir);
    let (train_corpus, test_corpus) = corpora(cfg, train_path, test_path, synthetic_size, dir, &mut m)?;
    let p = |rel: &str| dir.join(rel);

    // generate
    let factory = backend_factory(cfg, train_corpus.response_pool.texts())?;
    let client = LlmClient::new(factory(), cfg.generation.client.clone())?;
    let mut examples = ExampleSet::from_corpus(&train_corpus, cfg.prompt.e_fraction, cfg.prompt.reuse, cfg.seed)?;
    let settings = GenerationSettings {
        instruction: cfg.prompt.instruction,
        k: cfg.prompt.k,
        attempt_cap: cfg.generation.attempt_cap,
        seed: cfg.seed,
    };
    let outcome = generate_batch(&train_corpus.records, &mut examples, &settings, &client)?;
    let generated = outcome.table("generated");
    let skipped: Vec<String> = outcome.skipped.iter().map(|(id, _)| id.clone()).collect();
    write_lines(&p("negatives/generated.jsonl"), &generated.to_entries())?;
    write_lines(&p("negatives/generations.jsonl"), &outcome.results)?;
    m.stage(
        "generate",
        &[&p("negatives/generated.jsonl"), &p("negatives/generations.jsonl")],
        skipped.clone(),
    )?;
    m.ledger(client.ledger().summary());

    // baseline negatives for the quality report
    let sampler = |method| SamplerSettings {
        method,
        n: cfg.negatives.n,
        alpha: cfg.negatives.alpha,
        seed: cfg.seed,
        ..Default::default()
    };
    let (random_table, _) = build_negative_table(&train_corpus, &sampler(NegativeMethod::Random), None)?;
    let (semihard_table, semihard_skipped) =
        build_negative_table(&train_corpus, &sampler(NegativeMethod::Semihard), None)?;
    write_lines(&p("negatives/random.jsonl"), &random_table.to_entries())?;
    write_lines(&p("negatives/semihard.jsonl"), &semihard_table.to_entries())?;
    m.stage(
        "negatives",
        &[&p("negatives/random.jsonl"), &p("negatives/semihard.jsonl")],
        semihard_skipped,
    )?;

    // assemble
    let train_pneg = assemble_training_instances(&train_corpus, AdversarialSource::Generated, Some(&generated), cfg.seed)?;
    let train_random = assemble_training_instances(&train_corpus, AdversarialSource::Random, None, cfg.seed)?;
    let test_random = assemble_test_instances(&test_corpus, TestKind::Random, cfg.seed)?;
    let test_adv = assemble_test_instances(&test_corpus, TestKind::Adversarial, cfg.seed)?;
    let instance_files: [(&str, &Vec<CandidateInstance>); 4] = [
        ("instances/train_pneg.jsonl", &train_pneg),
        ("instances/train_random.jsonl", &train_random),
        ("instances/test_random.jsonl", &test_random),
        ("instances/test_adversarial.jsonl", &test_adv),
    ];
    for (rel, items) in instance_files {
        write_lines(&p(rel), items)?;
    }
    let paths: Vec<PathBuf> = instance_files.iter().map(|(rel, _)| p(rel)).collect();
    m.stage("assemble", &paths.iter().map(PathBuf::as_path).collect::<Vec<_>>(), vec![])?;

    // train + eval
    let tests = vec![("random".to_string(), test_random), ("adversarial".to_string(), test_adv)];
    let mut rows = Vec::new();
    let mut models = BTreeMap::new();
    for (name, instances) in [("random", &train_random), ("pneg", &train_pneg)] {
        let stats = CorpusStats::from_instances(instances);
        let model = train(instances, &cfg.train, &stats)?;
        let model_path = p(&format!("models/{name}.json"));
        write_json(&model_path, &model)?;
        m.stage(&format!("train/{name}"), &[&model_path], vec![])?;
        rows.push((name.to_string(), score_tests(&model, &stats, &tests)?));
        models.insert(name, (model, stats));
    }
    let summary = PipelineSummary {
        rows,
        generated_targets: outcome.results.len(),
        skipped_targets: skipped.len(),
    };
    let eval_table = format_pipeline_table(&summary.rows);
    write_json(&p("reports/eval.json"), &summary)?;
    write_text(&p("reports/eval.txt"), &eval_table)?;
    m.stage("eval", &[&p("reports/eval.json"), &p("reports/eval.txt")], vec![])?;

    // reports: scores come from the model trained on random negatives
    let (baseline, baseline_stats) = &models["random"];
    let mut groups = BTreeMap::new();
    groups.insert("random".to_string(), labeled(&train_corpus, &random_table));
    groups.insert("semi-hard".to_string(), labeled(&train_corpus, &semihard_table));
    groups.insert("pneg".to_string(), labeled(&train_corpus, &generated));
    groups.insert(
        "positive".to_string(),
        train_corpus
            .records
            .iter()
            .map(|r| LabeledResponse {
                context: r.context_text(),
                response: r.positives[0].clone(),
            })
            .collect(),
    );
    let human: Vec<LabeledResponse> = train_corpus
        .records
        .iter()
        .flat_map(|r| {
            r.adversarial_negatives.iter().map(move |n| LabeledResponse {
                context: r.context_text(),
                response: n.clone(),
            })
        })
        .collect();
    groups.insert("human".to_string(), human);
    let provider = embedding_provider(&cfg.negatives.embeddings, &instance_texts(&train_random))?;
    let quality = quality_report(baseline, baseline_stats, &provider, &groups)?;
    write_json(&p("reports/quality.json"), &quality)?;
    write_text(&p("reports/quality.txt"), &format_quality_table(&quality))?;
    let contamination = contamination_report(&outcome.results);
    write_json(&p("reports/contamination.json"), &contamination)?;
    write_text(&p("reports/contamination.txt"), &format_contamination_table(&contamination))?;
    m.stage(
        "reports",
        &[
            &p("reports/quality.json"),
            &p("reports/quality.txt"),
            &p("reports/contamination.json"),
            &p("reports/contamination.txt"),
        ],
        vec![],
    )?;

    print!("{eval_table}");
    let manifest = m.finish(&p("manifest.json"))?;
    Ok(Status::from_skipped(manifest.skipped_count()))
}

/// Cells for one axis.
pub fn axis_cells(axis: Axis, sizes: &[usize]) -> Vec<AblationCellSpec> {
    match axis {
        Axis::E => AblationAxes::example_set_grid(),
        Axis::K => AblationAxes::k_grid(),
        Axis::Instruction => AblationAxes::instruction_grid(),
        Axis::Augmentation => AblationAxes::augmentation_grid(sizes),
    }
}

pub fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::E => "example set |E|",
        Axis::K => "number of examples k",
        Axis::Instruction => "instruction",
        Axis::Augmentation => "augmentation size",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub axes: Vec<(String, Vec<AblationCellSpec>)>,
    pub grid: AblationGrid,
}

/// One table per axis; cells shared between axes are run once.
pub fn format_ablation_report(report: &AblationReport) -> String {
    let mut out = String::new();
    for (name, specs) in &report.axes {
        let grid = AblationGrid {
            cells: specs
                .iter()
                .filter_map(|s| report.grid.cells.iter().find(|c| c.spec == *s).cloned())
                .collect(),
        };
        let _ = writeln!(out, "## {name}");
        out.push_str(&format_ablation_table(&grid));
        out.push('\n');
    }
    out
}

pub fn ablate(
    cfg: &RunConfig,
    axes: &[Axis],
    train_path: Option<&Path>,
    test_path: Option<&Path>,
    augmentation_path: Option<&Path>,
    sizes: &[usize],
    synthetic_size: Option<usize>,
    dir: &Path,
) -> Result<Status> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut m = ManifestBuilder::new("ablate", cfg, dir);
    let (train_corpus, test_corpus) = corpora(cfg, train_path, test_path, synthetic_size, dir, &mut m)?;

    let augmentation = if axes.contains(&Axis::Augmentation) {
        let needed = sizes.iter().copied().max().unwrap_or(0);
        match (augmentation_path, synthetic_size) {
            (Some(path), _) => {
                m.input(path)?;
                Some(load(path, cfg, Split::Train)?)
            }
            (None, Some(_)) => {
                let corpus = synthetic(Split::Train, needed, cfg.seed, "syn-aug")?;
                let path = dir.join("corpus/augmentation.jsonl");
                write_lines(&path, &corpus.records)?;
                m.stage("corpus/augmentation", &[&path], vec![])?;
                Some(corpus)
            }
            (None, None) => anyhow::bail!("the augmentation axis needs --augmentation-contexts or --synthetic"),
        }
    } else {
        None
    };

    let mut specs: Vec<AblationCellSpec> = Vec::new();
    let mut per_axis = Vec::new();
    for &axis in axes {
        let cells = axis_cells(axis, sizes);
        for c in &cells {
            if !specs.contains(c) {
                specs.push(*c);
            }
        }
        per_axis.push((axis_name(axis).to_string(), cells));
    }

    let inputs = AblationInputs {
        train: &train_corpus,
        test: &test_corpus,
        augmentation: augmentation.as_ref(),
        backend: backend_factory(cfg, train_corpus.response_pool.texts())?,
        generation: cfg.generation.client.clone(),
        training: cfg.train,
        attempt_cap: cfg.generation.attempt_cap,
        seed: cfg.seed,
    };
    let grid = run_ablation(&specs, &inputs);
    let report = AblationReport { axes: per_axis, grid };
    let table = format_ablation_report(&report);
    let (json_path, text_path) = (dir.join("ablation.json"), dir.join("ablation.txt"));
    write_json(&json_path, &report)?;
    write_text(&text_path, &table)?;
    let problems: Vec<String> = report
        .grid
        .cells
        .iter()
        .filter(|c| c.error.is_some() || c.skipped_targets > 0)
        .map(|c| c.spec.label())
        .collect();
    m.stage("ablate", &[&json_path, &text_path], problems)?;
    print!("{table}");
    let manifest = m.finish(&dir.join("manifest.json"))?;
    Ok(Status::from_skipped(manifest.skipped_count()))
}
