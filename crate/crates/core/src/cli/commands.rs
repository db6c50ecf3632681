//! One function per subcommand. Each returns the run-relative paths it
//! wrote so the caller can record them in the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::config::SplitMode;
use super::run::*;
use crate::corpus::{generate_synthetic_corpus, length_stats, load_ads, save_ads};
use crate::datasets::{
    collect_triplets, component_author_labels, read_jsonl, sample_pairs, split_by_component, split_by_post,
    write_jsonl, LabeledPair, TripletExample,
};
use crate::encoder::checkpoint::{self, PoolingSpec};
use crate::encoder::pretrain::checkpoint_name;
use crate::encoder::{
    finetune_triplet, init_encoder, pretrain, triplet_satisfaction, EncoderModel, SentenceEncoder, Triplet,
};
use crate::error::{Error, Result};
use crate::graph::{build_bipartite_with, connected_components, project_giant, score_edges, sweep_thresholds};
use crate::lexicon::{emoji_tokens, extract_table, filter_tokens, nearest_tokens, EMOJI_LEXICON_CSV};
use crate::sparse::{fit_tfidf, IdfVariant, TfidfModel, TokenizerKind};
use crate::tokenize::train_wordpiece;
use crate::verify::{
    evaluate, featurize_pair, predict, random_baseline, train_classifier, MetricGrid, Metrics, PairClassifier,
    PairFeatures,
};

pub type Outputs = Vec<String>;

pub const DENSE_MODELS: [&str; 3] = ["none", "pretrained", "finetuned"];
pub const SPARSE_MODELS: [&str; 3] = ["none", "tfidf-emoji", "tfidf-wordpiece"];
pub const GRID_METRICS: [&str; 4] = ["accuracy", "recall", "f1", "roc_auc"];

pub fn synth(run: &RunDir) -> Result<Outputs> {
    let corpus = generate_synthetic_corpus(&run.config.synthetic)?;
    save_ads(&run.out(ADS)?, &corpus.ads)?;
    let authors: BTreeMap<String, usize> = corpus.authors.iter().map(|(p, a)| (p.to_string(), *a)).collect();
    run.write_json(AUTHORS, &authors)?;
    log::info!(
        "synthesized {} ad rows from {} authors",
        corpus.ads.len(),
        run.config.synthetic.n_authors
    );
    Ok(vec![ADS.into(), AUTHORS.into()])
}

pub fn ingest(run: &RunDir, path: Option<&Path>) -> Result<Outputs> {
    let path = path
        .or(run.config.ads.as_deref())
        .ok_or_else(|| Error::Config("ingest needs a path argument or the `ads` config key".into()))?;
    let ads = load_ads(path)?;
    if ads.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} holds no ad records",
            path.display()
        )));
    }
    save_ads(&run.out(ADS)?, &ads)?;
    log::info!("ingested {} ad rows", ads.len());
    Ok(vec![ADS.into()])
}

fn corpus_texts(run: &RunDir) -> Result<Vec<String>> {
    Ok(run.texts()?.into_values().collect())
}

pub fn train_tokenizer(run: &RunDir) -> Result<Outputs> {
    let texts = corpus_texts(run)?;
    let t = &run.config.tokenizer;
    let vocab = train_wordpiece(&texts, t.vocab_size, t.min_frequency)?;
    vocab.save(&run.out(VOCAB)?)?;
    log::info!("trained a {}-token vocabulary", vocab.len());
    Ok(vec![VOCAB.into()])
}

pub fn fit_tfidf_models(run: &RunDir) -> Result<Outputs> {
    let texts = corpus_texts(run)?;
    let variant = run.config.tfidf.variant;
    fit_tfidf(&texts, TokenizerKind::EmojiWord, variant)?.save(&run.out(TFIDF_EMOJI)?)?;
    fit_tfidf(&texts, TokenizerKind::WordPiece(run.vocab()?), variant)?.save(&run.out(TFIDF_WORDPIECE)?)?;
    Ok(vec![TFIDF_EMOJI.into(), TFIDF_WORDPIECE.into()])
}

pub fn pretrain_step(run: &RunDir) -> Result<Outputs> {
    let texts = corpus_texts(run)?;
    let vocab = run.vocab()?;
    let mut cfg = run.config.encoder.clone();
    cfg.vocab_size = vocab.len();
    let mut model = init_encoder(&cfg)?;
    let dir = run.ensure_dir(PRETRAIN_DIR)?;
    let report = pretrain(&mut model, &texts, &vocab, &run.config.pretrain, Some(&dir))?;
    checkpoint::save(
        &run.out(PRETRAINED)?,
        &model,
        &vocab.sha256(),
        None,
        Some(report.epoch_losses.len()),
    )?;
    run.write_json(
        "pretrain/report.json",
        &serde_json::json!({ "epoch_losses": report.epoch_losses, "steps": report.steps }),
    )?;
    let mut out: Outputs = (1..=report.epoch_losses.len())
        .map(|e| format!("{PRETRAIN_DIR}/{}", checkpoint_name(e)))
        .collect();
    out.push(PRETRAINED.into());
    out.push("pretrain/report.json".into());
    Ok(out)
}

pub fn make_datasets(run: &RunDir) -> Result<Outputs> {
    let d = &run.config.datasets;
    let ads = run.ads()?;
    let texts = crate::corpus::post_texts(&ads);
    let graph = build_bipartite_with(&ads, run.config.decompose.include_phones);
    let components = connected_components(&graph);
    let posts: BTreeSet<i64> = texts.keys().copied().collect();
    let labels = component_author_labels(&components, &posts);
    let (train, test) = match d.split {
        SplitMode::Posts => split_by_post(&labels, d.heldout_fraction, d.seed)?,
        SplitMode::Components => split_by_component(&labels, d.heldout_fraction, d.seed)?,
    };
    let docs: Vec<&String> = texts.values().collect();
    let screen = fit_tfidf(&docs, TokenizerKind::EmojiWord, IdfVariant::Smoothed)?;

    let triplets = collect_triplets(
        &train,
        &texts,
        &screen,
        d.triplets,
        d.triplet_threshold,
        d.max_attempts,
        d.seed,
        50,
    )?;
    let heldout = collect_triplets(
        &test,
        &texts,
        &screen,
        d.heldout_triplets,
        d.triplet_threshold,
        d.max_attempts,
        d.seed ^ 0x5a5a,
        50,
    )?;
    let train_pairs = sample_pairs(&train, &texts, d.train_pairs, d.positive_fraction, d.seed + 1)?;
    let test_pairs = sample_pairs(&test, &texts, d.test_pairs, d.positive_fraction, d.seed + 2)?;

    write_jsonl(&run.out(TRIPLETS)?, &triplets)?;
    write_jsonl(&run.out(HELDOUT_TRIPLETS)?, &heldout)?;
    write_jsonl(&run.out(TRAIN_PAIRS)?, &train_pairs)?;
    write_jsonl(&run.out(TEST_PAIRS)?, &test_pairs)?;
    let labels_json: BTreeMap<String, usize> = labels.iter().map(|(p, c)| (p.to_string(), *c)).collect();
    run.write_json("datasets/labels.json", &labels_json)?;
    log::info!(
        "{} components, {} labelled posts, {} + {} triplets",
        components.len(),
        labels.len(),
        triplets.len(),
        heldout.len()
    );
    Ok(vec![
        TRIPLETS.into(),
        HELDOUT_TRIPLETS.into(),
        TRAIN_PAIRS.into(),
        TEST_PAIRS.into(),
        "datasets/labels.json".into(),
    ])
}

fn load_triplets(run: &RunDir, rel: &str) -> Result<Vec<Triplet>> {
    Ok(read_jsonl::<TripletExample>(&run.require(rel)?)?
        .iter()
        .map(TripletExample::to_triplet)
        .collect())
}

fn save_encoder(path: &Path, enc: &SentenceEncoder) -> Result<()> {
    checkpoint::save(
        path,
        &enc.model,
        &enc.vocab.sha256(),
        Some(PoolingSpec {
            include_special: enc.include_special,
        }),
        None,
    )
}

/// Dense-only verifier metrics of `enc` on the stored pair sets.
fn dense_metrics(run: &RunDir, enc: &SentenceEncoder) -> Result<Metrics> {
    let train: Vec<LabeledPair> = read_jsonl(&run.require(TRAIN_PAIRS)?)?;
    let test: Vec<LabeledPair> = read_jsonl(&run.require(TEST_PAIRS)?)?;
    let clf = fit_verifier(run, &train, None, Some(enc))?;
    score_verifier(run, &clf, &test, None, Some(enc))
}

pub fn finetune_step(run: &RunDir, from_each_checkpoint: bool) -> Result<Outputs> {
    let vocab = run.vocab()?;
    let triplets = load_triplets(run, TRIPLETS)?;
    let heldout = load_triplets(run, HELDOUT_TRIPLETS)?;
    let cfg = &run.config.finetune;
    let mut out = Outputs::new();

    if from_each_checkpoint {
        let epochs = run.read_json::<serde_json::Value>("pretrain/report.json")?["epoch_losses"]
            .as_array()
            .map_or(0, |a| a.len());
        let mut csv = String::from("epoch,triplet_satisfaction,accuracy,recall,f1,roc_auc\n");
        for epoch in 1..=epochs {
            let model = run.model(&format!("{PRETRAIN_DIR}/{}", checkpoint_name(epoch)))?;
            let (enc, _) = finetune_triplet(model, vocab.clone(), &triplets, cfg)?;
            let rel = format!("finetune/sweep/{}", checkpoint_name(epoch));
            save_encoder(&run.out(&rel)?, &enc)?;
            let m = dense_metrics(run, &enc)?;
            let _ = writeln!(
                csv,
                "{epoch},{},{},{},{},{}",
                triplet_satisfaction(&enc, &heldout),
                m.accuracy,
                m.recall,
                m.f1,
                m.roc_auc.unwrap_or(f64::NAN)
            );
            out.push(rel);
        }
        run.write("finetune/sweep.csv", csv.as_bytes())?;
        out.push("finetune/sweep.csv".into());
    }

    let model = run.model(PRETRAINED)?;
    let (enc, report) = finetune_triplet(model, vocab, &triplets, cfg)?;
    save_encoder(&run.out(FINETUNED)?, &enc)?;
    run.write_json(
        "finetune/report.json",
        &serde_json::json!({
            "epoch_losses": report.epoch_losses,
            "steps": report.steps,
            "skipped_batches": report.skipped_batches,
            "heldout_triplet_satisfaction": triplet_satisfaction(&enc, &heldout),
        }),
    )?;
    out.push(FINETUNED.into());
    out.push("finetune/report.json".into());
    Ok(out)
}

fn features(
    pairs: &[LabeledPair],
    sparse: Option<&TfidfModel>,
    dense: Option<&SentenceEncoder>,
) -> Result<Vec<PairFeatures>> {
    pairs.iter().map(|p| featurize_pair(p, sparse, dense)).collect()
}

fn labels_of(pairs: &[LabeledPair]) -> Vec<u8> {
    pairs.iter().map(|p| p.label).collect()
}

fn fit_verifier(
    run: &RunDir,
    pairs: &[LabeledPair],
    sparse: Option<&TfidfModel>,
    dense: Option<&SentenceEncoder>,
) -> Result<PairClassifier> {
    train_classifier(
        &features(pairs, sparse, dense)?,
        &labels_of(pairs),
        &run.config.verifier.classifier,
    )
}

fn score_verifier(
    run: &RunDir,
    clf: &PairClassifier,
    pairs: &[LabeledPair],
    sparse: Option<&TfidfModel>,
    dense: Option<&SentenceEncoder>,
) -> Result<Metrics> {
    let scores = features(pairs, sparse, dense)?
        .iter()
        .map(|f| predict(clf, f))
        .collect::<Result<Vec<f64>>>()?;
    evaluate(&scores, &labels_of(pairs), run.config.verifier.decision_threshold)
}

struct Models {
    sparse: BTreeMap<&'static str, TfidfModel>,
    dense: BTreeMap<&'static str, SentenceEncoder>,
}

impl Models {
    fn load(run: &RunDir) -> Result<Self> {
        let vocab = run.vocab()?;
        let mut sparse = BTreeMap::new();
        sparse.insert("tfidf-emoji", run.tfidf(TFIDF_EMOJI)?);
        sparse.insert("tfidf-wordpiece", run.tfidf(TFIDF_WORDPIECE)?);
        let mut dense = BTreeMap::new();
        dense.insert("pretrained", run.encoder(PRETRAINED, &vocab)?);
        dense.insert("finetuned", run.encoder(FINETUNED, &vocab)?);
        Ok(Self { sparse, dense })
    }

    fn pick(&self, dense: &str, sparse: &str) -> (Option<&TfidfModel>, Option<&SentenceEncoder>) {
        (self.sparse.get(sparse), self.dense.get(dense))
    }
}

fn combos() -> impl Iterator<Item = (&'static str, &'static str)> {
    DENSE_MODELS
        .iter()
        .flat_map(|d| SPARSE_MODELS.iter().map(move |s| (*d, *s)))
        .filter(|(d, s)| (*d, *s) != ("none", "none"))
}

fn verifier_path(dense: &str, sparse: &str) -> String {
    format!("verifier/{dense}+{sparse}.json")
}

pub fn train_verifier(run: &RunDir) -> Result<Outputs> {
    let models = Models::load(run)?;
    let pairs: Vec<LabeledPair> = read_jsonl(&run.require(TRAIN_PAIRS)?)?;
    let mut out = Outputs::new();
    for (d, s) in combos() {
        let (sm, dm) = models.pick(d, s);
        let clf = fit_verifier(run, &pairs, sm, dm)?;
        let rel = verifier_path(d, s);
        run.write_json(&rel, &clf)?;
        out.push(rel);
    }
    Ok(out)
}

pub fn evaluate_step(run: &RunDir) -> Result<Outputs> {
    let models = Models::load(run)?;
    let pairs: Vec<LabeledPair> = read_jsonl(&run.require(TEST_PAIRS)?)?;
    let mut results: BTreeMap<String, Metrics> = BTreeMap::new();
    let mut grid = MetricGrid {
        rows: DENSE_MODELS.iter().map(|s| s.to_string()).collect(),
        columns: SPARSE_MODELS.iter().map(|s| s.to_string()).collect(),
        cells: vec![vec![None; SPARSE_MODELS.len()]; DENSE_MODELS.len()],
    };
    for (r, d) in DENSE_MODELS.iter().enumerate() {
        for (c, s) in SPARSE_MODELS.iter().enumerate() {
            if (*d, *s) == ("none", "none") {
                continue;
            }
            let clf: PairClassifier = run.read_json(&verifier_path(d, s))?;
            let (sm, dm) = models.pick(d, s);
            let m = score_verifier(run, &clf, &pairs, sm, dm)?;
            grid.cells[r][c] = Some(m);
            results.insert(format!("{d}+{s}"), m);
        }
    }
    let v = &run.config.verifier;
    let labels = labels_of(&pairs);
    let baseline: Vec<f64> = random_baseline(labels.len(), v.baseline_positive_rate, v.baseline_seed)?
        .into_iter()
        .map(f64::from)
        .collect();
    let baseline = evaluate(&baseline, &labels, v.decision_threshold)?;
    let metrics = serde_json::json!({
        "classifier": "logistic regression on cosine-similarity features",
        "decision_threshold": v.decision_threshold,
        "test_pairs": labels.len(),
        "positives": labels.iter().filter(|&&y| y == 1).count(),
        "models": results.iter().map(|(k, m)| (k.clone(), m.to_json())).collect::<serde_json::Map<_, _>>(),
        "random_baseline": baseline.to_json(),
    });
    run.write_json("metrics/metrics.json", &metrics)?;
    let mut out = vec!["metrics/metrics.json".to_string()];
    for metric in GRID_METRICS {
        let rel = format!("metrics/grid-{metric}.csv");
        run.write(&rel, grid.to_csv(metric)?.as_bytes())?;
        out.push(rel);
    }
    Ok(out)
}

pub fn decompose(run: &RunDir, grid: Option<Vec<f64>>) -> Result<Outputs> {
    let ads = run.ads()?;
    let texts = crate::corpus::post_texts(&ads);
    let graph = build_bipartite_with(&ads, run.config.decompose.include_phones);
    let components = connected_components(&graph);
    let projected = project_giant(&graph, &components)?;
    let vocab = run.vocab()?;
    let enc = run.encoder(FINETUNED, &vocab)?;
    let scored = score_edges(&projected, &enc, &texts)?;
    let grid = grid.unwrap_or_else(|| run.config.decompose.grid.clone());
    let report = sweep_thresholds(&scored, &grid, components.len())?;
    run.write("decompose/sweep.csv", report.to_csv().as_bytes())?;
    run.write_json("decompose/plot.json", &report.to_plot_json())?;
    Ok(vec!["decompose/sweep.csv".into(), "decompose/plot.json".into()])
}

pub fn lexicon(run: &RunDir, queries: &[String], k: Option<usize>) -> Result<Outputs> {
    let l = &run.config.lexicon;
    let vocab = run.vocab()?;
    let model: EncoderModel = run.model(PRETRAINED)?;
    let mut table = extract_table(&model, &vocab, l.include_special)?;
    let emojis: Vec<String> = emoji_tokens(&table)
        .into_iter()
        .filter(|t| !t.starts_with(crate::tokenize::vocab::CONTINUATION_PREFIX))
        .collect();
    if l.emoji_only {
        table = filter_tokens(&table, &emojis, true).table;
    }
    let queries: Vec<String> = match (queries.is_empty(), l.queries.is_empty()) {
        (false, _) => queries.to_vec(),
        (true, false) => l.queries.clone(),
        (true, true) => emojis,
    };
    let k = k.unwrap_or(l.k);
    let mut csv = String::from("query,rank,token,cosine\n");
    for q in &queries {
        for (rank, (token, cos)) in nearest_tokens(&table, q, k)?.iter().enumerate() {
            let _ = writeln!(csv, "{q},{},{token},{cos}", rank + 1);
        }
    }
    run.write("lexicon/neighbours.csv", csv.as_bytes())?;
    run.write("lexicon/emoji_lexicon.csv", EMOJI_LEXICON_CSV.as_bytes())?;
    Ok(vec![
        "lexicon/neighbours.csv".into(),
        "lexicon/emoji_lexicon.csv".into(),
    ])
}

pub fn report(run: &RunDir) -> Result<Outputs> {
    let ads = run.ads()?;
    let texts: Vec<String> = crate::corpus::post_texts(&ads).into_values().collect();
    let vocab = run.vocab()?;
    let stats = length_stats(&texts, &vocab)?;
    let mut csv = String::from("length,count\n");
    for (len, count) in &stats.histogram {
        let _ = writeln!(csv, "{len},{count}");
    }
    run.write("report/lengths.csv", csv.as_bytes())?;

    let components = connected_components(&build_bipartite_with(&ads, run.config.decompose.include_phones));
    let optional = |rel: &str| -> Result<serde_json::Value> {
        if run.exists(rel) {
            run.read_json(rel)
        } else {
            Ok(serde_json::Value::Null)
        }
    };
    let summary = serde_json::json!({
        "corpus": {
            "ad_rows": ads.len(),
            "posts": texts.len(),
            "components": components.len(),
            "giant_vertices": components.first().map_or(0, |c| c.len()),
            "vocabulary": vocab.len(),
        },
        "length_coverage": stats.coverage_at.iter().map(|(k, v)| (k.to_string(), serde_json::json!(v))).collect::<serde_json::Map<_, _>>(),
        "pretrain": optional("pretrain/report.json")?,
        "finetune": optional("finetune/report.json")?,
        "metrics": optional("metrics/metrics.json")?,
        "decomposition": optional("decompose/plot.json")?,
    });
    run.write_json("report/summary.json", &summary)?;
    Ok(vec!["report/lengths.csv".into(), "report/summary.json".into()])
}
