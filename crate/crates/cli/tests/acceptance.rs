//! Acceptance suite. Every criterion runs, prints one PASS/FAIL line with its
//! wall-clock time, and the test fails at the end if any criterion failed.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use advneg_cli::pipeline::AblationReport;
use advneg_core::corpus::synthetic::{synthetic_corpus, SyntheticOptions};
use advneg_core::corpus::{
    alternating_context, assemble_training_instances, AdversarialSource, Corpus, DialogueRecord,
    NegativeTable, Source, Split,
};
use advneg_core::eval::{
    bootstrap_mean_difference, mean_reciprocal_rank, quality_report, rank_of_positive, recall_at_1,
    LabeledResponse, RankingOutcome,
};
use advneg_core::generator::{
    detect_errors, generate_batch, generate_negatives, parse_numbered_list, GenerationSettings,
};
use advneg_core::jsonl::read_jsonl;
use advneg_core::llm::{GenerationConfig, LlmClient, ScriptedBackend, SyntheticBackend};
use advneg_core::negatives::{
    build_negative_table, retrieve_bm25, retrieve_semihard_scored, Bm25Index, Bm25Params,
    EmbeddedPool, EmbeddingProvider, NegativeMethod, SamplerSettings, SemiHardConfig,
};
use advneg_core::prompt::{render_prompt, ExampleFraction, ExampleSet, InstructionType, PromptSpec};
use advneg_core::ranker::{
    batch_loss, gradient, listwise_loss, train, train_featurized, CorpusStats, FeatureVector,
    FeaturizedInstance, RankerModel, TrainConfig, FEATURE_COUNT,
};
use advneg_core::seed::rng_for;
use advneg_core::text::tokenize;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn record(id: &str, turns: &[&str], positive: &str, negatives: &[&str]) -> DialogueRecord {
    DialogueRecord {
        id: id.into(),
        context: alternating_context(turns),
        persona: None,
        positives: vec![positive.into()],
        adversarial_negatives: negatives.iter().map(|s| s.to_string()).collect(),
        source: Source::DailyDialogPP,
    }
}

// 1 ---------------------------------------------------------------------------

fn golden_prompt() -> Outcome {
    let price = record(
        "ex-price",
        &[
            "How about taking the damaged portion at a lower price?",
            "What kind of price did you want?",
            "I was thinking of 30% off.",
        ],
        "placeholder positive",
        &[
            "I have not completed the portions of the children, ...",
            "Shall I inquire about the price of the plane tickets ...",
            "I have been thinking up new ways of supplying money ...",
            "My car roof was not damaged in the accident.",
            "I purchased a different kind of dress in the shopping mall ...",
        ],
    );
    let random = record(
        "ex-random",
        &[
            "No, but that was a random change of subject.",
            "It may have been random, but have you?",
            "I haven't lately.",
        ],
        "placeholder positive",
        &[
            "Yeah, Our society is annoying. They keep on changing ...",
            "I am not sure which subject I am going to take. Lately, ...",
            "I don't know that day Prof. Lesley was randomly picking up ...",
            "Today In college some random guy came and started talking ...",
            "Have you seen Tina lately? I am feeling weird as ...",
        ],
    );
    let target = record(
        "target-interview",
        &[
            "Paul, a company called me for an interview.",
            "That's great! You need to prepare for it.",
            "How?",
        ],
        "placeholder positive",
        &[],
    );
    let spec = PromptSpec::new(InstructionType::Direct, vec![price, random], target);
    let rendered = render_prompt(&spec).map_err(|e| e.to_string())?;
    let expected = std::fs::read(core_fixture("interview_prompt.txt")).map_err(|e| e.to_string())?;
    check(rendered.text.as_bytes() == expected.as_slice(), "rendered prompt differs from fixture")?;
    Ok(format!("{} bytes identical", expected.len()))
}

// 2 ---------------------------------------------------------------------------

const WORDS: &[&str] = &[
    "price", "interview", "company", "salary", "train", "late", "coffee", "rain", "movie",
    "ticket", "dog", "park", "the", "a", "is",
];

fn bm25_oracle(query: &str, docs: &[String], k1: f64, b: f64) -> Vec<f64> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
    let n = docs.len() as f64;
    let avgdl = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: std::collections::BTreeSet<String> = tokenize(query).into_iter().collect();
    toks.iter()
        .map(|d| {
            terms
                .iter()
                .map(|t| {
                    let df = toks.iter().filter(|x| x.contains(t)).count() as f64;
                    let tf = d.iter().filter(|x| *x == t).count() as f64;
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl))
                })
                .sum()
        })
        .collect()
}

fn sentence(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(1..9);
    (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn bm25_oracle_check() -> Outcome {
    let mut rng = rng_for(2, "acceptance-bm25");
    let params = Bm25Params::default();
    let mut corpora = 0;
    while corpora < 50 {
        let docs: Vec<String> = (0..rng.gen_range(6..=50)).map(|_| sentence(&mut rng)).collect();
        let turns: Vec<String> = (0..rng.gen_range(1..4)).map(|_| sentence(&mut rng)).collect();
        let positive = docs[rng.gen_range(0..docs.len())].clone();
        let mut ranked: Vec<usize> = (0..docs.len()).filter(|&i| docs[i] != positive).collect();
        if ranked.len() < 5 {
            continue;
        }
        corpora += 1;
        let turn_refs: Vec<&str> = turns.iter().map(String::as_str).collect();
        let rec = record("q", &turn_refs, &positive, &[]);
        let scores = bm25_oracle(&rec.context_text(), &docs, params.k1, params.b);
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let expected: Vec<String> = ranked[..5].iter().map(|&i| docs[i].clone()).collect();

        let index = Bm25Index::build(docs.iter().cloned(), params);
        let got = retrieve_bm25(&rec, &index, 5, &HashSet::new()).map_err(|e| e.to_string())?;
        check(got == expected, format!("corpus {corpora}: top-5 differs"))?;
        let skip: HashSet<&str> = [positive.as_str()].into_iter().collect();
        let scored = index
            .top_n(&tokenize(&rec.context_text()), 5, &skip)
            .map_err(|e| e.to_string())?;
        for ((id, s), &want) in scored.iter().zip(&ranked[..5]) {
            check(*id == want, format!("corpus {corpora}: index order differs"))?;
            check((s - scores[want]).abs() < 1e-9, format!("corpus {corpora}: score off by {}", s - scores[want]))?;
        }
    }
    Ok("50 corpora, top-5 and scores within 1e-9".into())
}

// 3 ---------------------------------------------------------------------------

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

fn small_vector(rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..4).map(|_| f64::from(rng.gen_range(-3i32..=3))).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn semihard_oracle_check() -> Outcome {
    let mut rng = rng_for(3, "acceptance-semihard");
    let alpha = 0.07;
    let mut selected_total = 0;
    for case in 0..200 {
        let anchor = small_vector(&mut rng);
        let mut entries = vec![("positive".to_string(), anchor.clone())];
        entries.push(("duplicate".to_string(), anchor.clone()));
        let mut texts = vec!["duplicate".to_string()];
        for i in 0..rng.gen_range(1..=48) {
            entries.push((format!("r{i}"), small_vector(&mut rng)));
            texts.push(format!("r{i}"));
        }
        let n = rng.gen_range(1..=5);
        let provider = EmbeddingProvider::from_vectors(entries.clone()).map_err(|e| e.to_string())?;
        let pool = EmbeddedPool::new(&texts, &provider).map_err(|e| e.to_string())?;
        let mut oracle: Vec<(usize, f64)> = entries[1..]
            .iter()
            .enumerate()
            .map(|(i, (_, v))| (i, cosine(&anchor, v)))
            .filter(|(_, c)| *c <= 1.0 - alpha)
            .collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let cfg = SemiHardConfig { alpha, n };
        match retrieve_semihard_scored("positive", &pool, &provider, &cfg, &HashSet::new()) {
            Ok(got) => {
                check(oracle.len() >= n && got.len() == n, format!("case {case}: wrong size"))?;
                for ((text, c), (i, _)) in got.iter().zip(&oracle) {
                    check(text == &texts[*i], format!("case {case}: differs from oracle"))?;
                    check(*c <= 1.0 - alpha, format!("case {case}: cosine {c} above threshold"))?;
                    check(text != "duplicate", format!("case {case}: duplicate selected"))?;
                }
                selected_total += got.len();
            }
            Err(_) => check(oracle.len() < n, format!("case {case}: spurious shortfall"))?,
        }
    }
    Ok(format!("200 pools, {selected_total} selections match the oracle"))
}

// 4 ---------------------------------------------------------------------------

fn random_instance(rng: &mut impl Rng, width: usize) -> FeaturizedInstance {
    FeaturizedInstance {
        context_id: "c".into(),
        features: (0..width)
            .map(|_| {
                let mut f = [1.0; FEATURE_COUNT];
                for x in &mut f[1..] {
                    *x = rng.gen_range(-2.0..2.0);
                }
                FeatureVector(f)
            })
            .collect(),
        positive_index: rng.gen_range(0..width),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn listwise_check() -> Outcome {
    let uniform = listwise_loss(&[0.7; 11], 3).map_err(|e| e.to_string())?;
    check((uniform - 11f64.ln()).abs() < 1e-9, format!("uniform loss {uniform}"))?;
    let mut rng = rng_for(4, "acceptance-gradient");
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let batch: Vec<FeaturizedInstance> =
            (0..rng.gen_range(1..6)).map(|_| random_instance(&mut rng, 11)).collect();
        let w: Vec<f64> = (0..FEATURE_COUNT).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let analytic = gradient(&w, &batch).map_err(|e| e.to_string())?;
        let numeric: Vec<f64> = (0..FEATURE_COUNT)
            .map(|k| {
                let (mut up, mut down) = (w.clone(), w.clone());
                up[k] += eps;
                down[k] -= eps;
                (batch_loss(&up, &batch).unwrap() - batch_loss(&down, &batch).unwrap()) / (2.0 * eps)
            })
            .collect();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        worst = worst.max(norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12));
    }
    check(worst < 1e-5, format!("relative gradient error {worst:e}"))?;
    Ok(format!("ln 11 exact, worst relative gradient error {worst:.1e}"))
}

// 5 ---------------------------------------------------------------------------

fn separable_fixture(contexts: usize) -> Vec<FeaturizedInstance> {
    let planted = [0.0, 2.0, 1.0, -0.5, 1.5, 0.0, 1.0];
    let mut rng = rng_for(5, "acceptance-separable");
    let dot = |f: &[f64; FEATURE_COUNT]| planted.iter().zip(f).map(|(w, x)| w * x).sum::<f64>();
    (0..contexts)
        .map(|c| {
            let mut features: Vec<FeatureVector> = (0..11)
                .map(|_| {
                    let mut f = [1.0; FEATURE_COUNT];
                    for x in &mut f[1..] {
                        *x = rng.gen_range(0.0..1.0);
                    }
                    FeatureVector(f)
                })
                .collect();
            let best = (0..11)
                .max_by(|&a, &b| dot(&features[a].0).total_cmp(&dot(&features[b].0)))
                .unwrap();
            features[best].0[1] += 0.3;
            let positive_index = rng.gen_range(0..11);
            features.swap(best, positive_index);
            FeaturizedInstance {
                context_id: format!("ctx-{c}"),
                features,
                positive_index,
            }
        })
        .collect()
}

fn model_outcomes(model: &RankerModel, batch: &[FeaturizedInstance]) -> Vec<RankingOutcome> {
    batch
        .iter()
        .map(|inst| {
            let scores: Vec<f64> = inst
                .features
                .iter()
                .map(|f| model.weights.iter().zip(&f.0).map(|(w, x)| w * x).sum())
                .collect();
            RankingOutcome {
                context_id: inst.context_id.clone(),
                rank: rank_of_positive(&scores, inst.positive_index),
                scores,
                positive_index: inst.positive_index,
            }
        })
        .collect()
}

fn training_r1(model: &RankerModel, batch: &[FeaturizedInstance]) -> f64 {
    recall_at_1(&model_outcomes(model, batch)).unwrap()
}

fn training_check() -> Outcome {
    let batch = separable_fixture(200);
    let model = train_featurized(&batch, &TrainConfig::default()).map_err(|e| e.to_string())?;
    for pair in model.trace.windows(2) {
        check(pair[1].loss <= pair[0].loss, format!("loss rose at step {}", pair[1].step))?;
    }
    let r1 = training_r1(&model, &batch);
    check(r1 >= 0.95, format!("training R@1 {r1}"))?;

    let f = FeatureVector([1.0, 0.4, 0.2, 0.0, 0.3, 0.9, 0.5]);
    let symmetric: Vec<FeaturizedInstance> = (0..20)
        .map(|i| FeaturizedInstance {
            context_id: format!("sym-{i}"),
            features: vec![f.clone(); 11],
            positive_index: i % 11,
        })
        .collect();
    let sym = train_featurized(&symmetric, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let g = sym.trace.last().map_or(f64::INFINITY, |s| s.gradient_norm);
    check(sym.trace.len() == 1 && g < 1e-6, format!("symmetric run took {} steps, |g|={g:e}", sym.trace.len()))?;
    Ok(format!(
        "separable: {} steps, R@1 {r1:.3}; symmetric stopped at |g|={g:.1e}",
        model.trace.len()
    ))
}

// 6 ---------------------------------------------------------------------------

fn outcome(scores: Vec<f64>, positive_index: usize) -> RankingOutcome {
    RankingOutcome {
        context_id: "c".into(),
        rank: rank_of_positive(&scores, positive_index),
        scores,
        positive_index,
    }
}

fn metrics_check() -> Outcome {
    let outcomes: Vec<RankingOutcome> = [1usize, 2, 4]
        .iter()
        .map(|&r| outcome((0..6).map(|j| if j == 0 { 0.0 } else if j < r { 1.0 } else { -1.0 }).collect(), 0))
        .collect();
    let mrr = mean_reciprocal_rank(&outcomes).map_err(|e| e.to_string())?;
    check((mrr - 0.583333).abs() < 1e-6 && (mrr - 7.0 / 12.0).abs() < 1e-9, format!("MRR {mrr}"))?;

    // a zero-weight model scores every candidate identically
    let zero = RankerModel::zeros();
    let batch: Vec<FeaturizedInstance> = {
        let mut rng = rng_for(6, "acceptance-zero");
        (0..6)
            .map(|p| FeaturizedInstance { positive_index: p, ..random_instance(&mut rng, 6) })
            .collect()
    };
    let zero_outcomes = model_outcomes(&zero, &batch);
    let r1 = recall_at_1(&zero_outcomes).map_err(|e| e.to_string())?;
    let zmrr = mean_reciprocal_rank(&zero_outcomes).map_err(|e| e.to_string())?;
    check(r1 == 0.0, format!("zero model R@1 {r1}"))?;
    check((zmrr - 1.0 / 6.0).abs() < 1e-9, format!("zero model MRR {zmrr}"))?;
    Ok(format!("MRR {mrr:.6}; zero model R@1 {r1}, MRR {zmrr:.6}"))
}

// 7 ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct Labeled {
    label: String,
    completion: String,
}

fn error_filter_check() -> Outcome {
    let cases: Vec<Labeled> = read_jsonl(&core_fixture("error_filter.jsonl")).map_err(|e| e.to_string())?;
    check(cases.len() == 12, format!("{} fixture lines", cases.len()))?;
    let mut errors = 0;
    for case in &cases {
        let report = detect_errors(&parse_numbered_list(&case.completion));
        let got = if report.numbering_violation {
            "numbering"
        } else if report.responses.iter().any(|r| r.repetition) {
            "repetition"
        } else if report.responses.iter().any(|r| r.underscore_junk) {
            "underscore"
        } else {
            "clean"
        };
        if got != case.label || report.clean != (case.label == "clean") {
            errors += 1;
        }
    }
    check(errors == 0, format!("{errors} misclassified"))?;

    let dirty = " I went to the the the the store.\n2. b\n3. c\n4. d\n5. e\n";
    let clean = " Paul bought a company car.\n2. The interview hall was cold.\n3. Prepare the soup.\n4. How tall is Paul?\n5. Great weather today.\n";
    let client = LlmClient::new(
        Box::new(ScriptedBackend::new([dirty, clean])),
        GenerationConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let examples: Vec<DialogueRecord> = (0..4)
        .map(|i| record(&format!("ex{i}"), &["Hello there.", "Hi."], "Hey.", &["a", "b", "c", "d", "e"]))
        .collect();
    let mut set = ExampleSet::new(examples, false).map_err(|e| e.to_string())?;
    let target = record("t", &["Paul, a company called me for an interview.", "How?"], "Prepare.", &[]);
    let result = generate_negatives(&target, &mut set, &GenerationSettings::default(), &client)
        .map_err(|e| e.to_string())?;
    check(result.attempts == 2, format!("attempts={}", result.attempts))?;
    Ok("12/12 classified, dirty-then-clean attempts=2".into())
}

// 8 ---------------------------------------------------------------------------

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

fn quality_check() -> Outcome {
    let e = |e: &dyn std::fmt::Display| e.to_string();
    let corpus = synthetic_corpus(Split::Train, &SyntheticOptions { records: 500, seed: 8, ..Default::default() })
        .map_err(|x| e(&x))?;
    let sampler = |method| SamplerSettings { method, seed: 8, ..Default::default() };
    let (random, _) = build_negative_table(&corpus, &sampler(NegativeMethod::Random), None).map_err(|x| e(&x))?;
    let (semihard, _) = build_negative_table(&corpus, &sampler(NegativeMethod::Semihard), None).map_err(|x| e(&x))?;
    let client = LlmClient::new(
        Box::new(SyntheticBackend::new(corpus.response_pool.texts().to_vec())),
        GenerationConfig::default(),
    )
    .map_err(|x| e(&x))?;
    let mut examples = ExampleSet::from_corpus(&corpus, ExampleFraction::Full, false, 8).map_err(|x| e(&x))?;
    let settings = GenerationSettings { seed: 8, ..Default::default() };
    let generated = generate_batch(&corpus.records, &mut examples, &settings, &client)
        .map_err(|x| e(&x))?
        .table("generated");

    let mut groups = BTreeMap::new();
    groups.insert("random".to_string(), labeled(&corpus, &random));
    groups.insert("semi-hard".to_string(), labeled(&corpus, &semihard));
    groups.insert("pneg".to_string(), labeled(&corpus, &generated));
    groups.insert(
        "positive".to_string(),
        corpus
            .records
            .iter()
            .map(|r| LabeledResponse { context: r.context_text(), response: r.positives[0].clone() })
            .collect(),
    );
    let instances = assemble_training_instances(&corpus, AdversarialSource::Random, None, 8).map_err(|x| e(&x))?;
    let stats = CorpusStats::from_instances(&instances);
    let model = train(&instances, &TrainConfig::default(), &stats).map_err(|x| e(&x))?;
    let provider = EmbeddingProvider::tfidf(corpus.response_pool.texts().iter().map(String::as_str));
    let q = quality_report(&model, &stats, &provider, &groups).map_err(|x| e(&x))?;
    let sim = |name: &str| q.get(name).unwrap().similarities.clone();
    let pred = |name: &str| q.get(name).unwrap().normalized_scores.clone();
    let above = |a: Vec<f64>, b: Vec<f64>, what: &str| -> Result<f64, String> {
        let ci = bootstrap_mean_difference(&a, &b, 1000, 0.95, 8).map_err(|x| e(&x))?;
        check(ci.strictly_positive(), format!("{what}: interval {ci:?}"))?;
        Ok(ci.lower)
    };
    above(sim("semi-hard"), sim("random"), "similarity semi-hard > random")?;
    above(sim("positive"), sim("semi-hard"), "similarity positive > semi-hard")?;
    let lo = above(pred("pneg"), pred("random"), "score pneg > random")?;
    Ok(format!("all three orderings hold at 95% (pneg-random score gap lower bound {lo:.3})"))
}

// 9 ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["advneg"];
    full.extend_from_slice(args);
    advneg_cli::main_with_args(full)
}

fn pipeline_check() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut manifests = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let out_str = out.to_str().unwrap();
        let start = Instant::now();
        let code = run_cli(&["--mock", "--seed", "7", "pipeline", "--synthetic", "100", "--out-dir", out_str]);
        let elapsed = start.elapsed();
        check(code == 0, format!("run {run} exited {code}"))?;
        check(elapsed < Duration::from_secs(60), format!("run {run} took {elapsed:?}"))?;
        for rel in ["reports/eval.txt", "reports/quality.json", "reports/contamination.json", "instances/train_pneg.jsonl", "instances/test_random.jsonl", "instances/test_adversarial.jsonl"] {
            check(out.join(rel).is_file(), format!("missing {rel}"))?;
        }
        manifests.push(std::fs::read(out.join("manifest.json")).map_err(|e| e.to_string())?);
    }
    check(manifests[0] == manifests[1], "manifests differ between runs")?;
    Ok(format!("two runs, identical {}-byte manifests", manifests[0].len()))
}

// 10 --------------------------------------------------------------------------

fn ablation_check() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cells = 0;
    for axis in ["e", "k", "instruction"] {
        let out = dir.path().join(axis);
        let code = run_cli(&["--mock", "--seed", "10", "ablate", "--axes", axis, "--synthetic", "60", "--out-dir", out.to_str().unwrap()]);
        check(code == 0, format!("{axis} grid exited {code}"))?;
        let report: AblationReport = serde_json::from_slice(&std::fs::read(out.join("ablation.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let table = std::fs::read_to_string(out.join("ablation.txt")).map_err(|e| e.to_string())?;
        check(["Random", "Adv", "Mean"].iter().all(|h| table.contains(h)), format!("{axis}: table header missing"))?;
        let expected = match axis {
            "e" => 5,
            _ => 3,
        };
        check(report.grid.cells.len() == expected, format!("{axis}: {} cells", report.grid.cells.len()))?;
        for cell in &report.grid.cells {
            check(cell.error.is_none(), format!("{axis}: {} failed: {:?}", cell.spec.label(), cell.error))?;
            check(
                cell.r1_random.is_some() && cell.r1_adversarial.is_some() && cell.r1_mean.is_some(),
                format!("{axis}: {} has no scores", cell.spec.label()),
            )?;
            if cell.spec.reuse {
                let growth = cell.example_set_after - cell.example_set_before;
                check(growth == cell.processed_targets, format!("REUSE grew |E| by {growth} over {} targets", cell.processed_targets))?;
            }
        }
        if axis == "e" {
            check(report.grid.cells.iter().any(|c| c.spec.reuse), "no REUSE cell in |E| grid")?;
        }
        cells += report.grid.cells.len();
    }
    Ok(format!("{cells} cells across three grids"))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("1 golden prompt", Duration::from_secs(1), golden_prompt),
        ("2 BM25 oracle", Duration::from_secs(10), bm25_oracle_check),
        ("3 semi-hard oracle", Duration::from_secs(10), semihard_oracle_check),
        ("4 listwise objective", Duration::from_secs(10), listwise_check),
        ("5 training", Duration::from_secs(30), training_check),
        ("6 metrics", Duration::from_secs(10), metrics_check),
        ("7 error filter", Duration::from_secs(10), error_filter_check),
        ("8 quality ordering", Duration::from_secs(60), quality_check),
        ("9 pipeline", Duration::from_secs(120), pipeline_check),
        ("10 ablation grids", Duration::from_secs(120), ablation_check),
    ];
    let mut failed = Vec::new();
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(detail) => println!("PASS criterion {name} ({elapsed:.2?}): {detail}"),
            Err(why) => {
                println!("FAIL criterion {name} ({elapsed:.2?}): {why}");
                failed.push(name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
