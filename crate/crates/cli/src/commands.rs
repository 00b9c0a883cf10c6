use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use formgraph::eval::{
    ablation_suite, ablation_text, entity_prf, neighborhood_tradeoff, predict_document, relation_prf,
    tradeoff_csv, AblationSuite, DocPrediction,
};
use formgraph::gnn::{self, load_checkpoint, save_checkpoint, Checkpoint};
use formgraph::graph::{Edge, EntityRelationGraph, WordRelationGraph, WordRelationLabel};
use formgraph::ingest::{
    annotated_to_json, annotation_dir, build_neighborhood, load_corpus_dir, load_funsd_dir, load_xfund,
    split_training, AnnotatedDocument, Coverage, DatasetSplit, FUNSD_VALIDATION,
};
use formgraph::synthetic::{FormGenerator, SyntheticConfig};
use formgraph::write_atomic;

use crate::config::RunConfig;
use crate::{AblateArgs, CommonArgs, EvaluateArgs, Fail, Level, PredictArgs, PrepareArgs, SuiteArg, SynthArgs, TrainArgs};

const MANIFEST: &str = "manifest.json";
const SUMMARY: &str = "summary.json";

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), Fail> {
    let mut s = serde_json::to_string_pretty(v).map_err(Fail::data)?;
    s.push('\n');
    Ok(write_atomic(path, s.as_bytes())?)
}

fn config_with(common: &CommonArgs) -> Result<RunConfig, Fail> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.model.seed = s;
    }
    if let Some(k) = common.k {
        cfg.model.k = k;
    }
    Ok(cfg)
}

// ---------------------------------------------------------------- prepare

#[derive(Default, Serialize)]
struct Totals {
    documents: usize,
    raw_entities: usize,
    entities: usize,
    raw_words: usize,
    words: usize,
    dropped_other_entities: usize,
    dropped_other_words: usize,
    dropped_unlinked_entities: usize,
    dropped_unlinked_words: usize,
    ignored_links: usize,
    page_size_inferred: usize,
    word_edges: BTreeMap<String, usize>,
    entity_edges: BTreeMap<String, usize>,
    gold_word_edges: usize,
    gold_word_edges_outside_neighborhood: usize,
}

fn tally(t: &mut Totals, d: &AnnotatedDocument, cov: Coverage) {
    let f = &d.flags;
    t.documents += 1;
    t.raw_entities += f.raw_entities;
    t.entities += d.gold_erg.entities.len();
    t.raw_words += f.raw_words;
    t.words += d.document.len();
    t.dropped_other_entities += f.dropped_other_entities;
    t.dropped_other_words += f.dropped_other_words;
    t.dropped_unlinked_entities += f.dropped_unlinked_entities;
    t.dropped_unlinked_words += f.dropped_unlinked_words;
    t.ignored_links += f.ignored_links;
    t.page_size_inferred += usize::from(f.page_size_inferred);
    for e in &d.gold_wrg.edges {
        *t.word_edges.entry(e.label.name().to_string()).or_default() += 1;
    }
    for e in &d.gold_erg.edges {
        let name = serde_json::to_value(e.label)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_else(|| format!("{:?}", e.label));
        *t.entity_edges.entry(name).or_default() += 1;
    }
    t.gold_word_edges += cov.total;
    t.gold_word_edges_outside_neighborhood += cov.total - cov.covered;
}

/// Loads one folder of FUNSD files, keeping the per-file failures.
fn load_folder(dir: &Path, failed: &mut Vec<Value>) -> Result<Vec<AnnotatedDocument>, Fail> {
    let mut docs = Vec::new();
    for (path, r) in load_funsd_dir(dir)? {
        match r {
            Ok(d) => docs.push(d),
            Err(e) => failed.push(json!({"file": path.display().to_string(), "error": e.to_string()})),
        }
    }
    Ok(docs)
}

pub fn prepare(a: &PrepareArgs) -> Result<(), Fail> {
    let cfg = config_with(&a.common)?;
    let mut failed = Vec::new();
    let mut parts: Vec<(&str, Vec<AnnotatedDocument>)> = Vec::new();
    let source;
    if let Some(dir) = &a.funsd_dir {
        source = dir.clone();
        if !dir.is_dir() {
            return Err(Fail::data(anyhow!("{} is not a directory", dir.display())));
        }
        let train_dir = annotation_dir(dir, "training_data");
        let test_dir = annotation_dir(dir, "testing_data");
        if train_dir.is_dir() {
            let (train, val) = split_training(load_folder(&train_dir, &mut failed)?, FUNSD_VALIDATION);
            parts.push(("train", train));
            parts.push(("validation", val));
            if test_dir.is_dir() {
                parts.push(("test", load_folder(&test_dir, &mut failed)?));
            }
        } else {
            parts.push(("", load_folder(dir, &mut failed)?));
        }
        if let Some(lang) = &a.lang {
            for (_, docs) in &mut parts {
                for d in docs.iter_mut() {
                    d.document.language = lang.clone();
                }
            }
        }
    } else {
        let dir = a.xfund_dir.as_ref().expect("clap requires a source");
        let lang = a.lang.as_deref().expect("clap requires --lang with --xfund-dir");
        source = dir.clone();
        for (part, suffix) in [("train", "train"), ("test", "val")] {
            let path = dir.join(format!("{lang}.{suffix}.json"));
            if !path.is_file() {
                continue;
            }
            match load_xfund(&path, lang) {
                Ok(docs) => parts.push((part, docs)),
                Err(e) => failed.push(json!({"file": path.display().to_string(), "error": e.to_string()})),
            }
        }
    }

    let n_docs: usize = parts.iter().map(|(_, d)| d.len()).sum();
    for f in &failed {
        warn!("failed: {} ({})", f["file"].as_str().unwrap_or(""), f["error"].as_str().unwrap_or(""));
    }
    if n_docs == 0 && failed.is_empty() {
        return Err(Fail::data(anyhow!("no annotation files found under {}", source.display())));
    }

    let mut totals = Totals::default();
    let mut documents = Vec::new();
    let mut splits = BTreeMap::new();
    for (part, docs) in &parts {
        let dir = if part.is_empty() { a.out.clone() } else { a.out.join(part) };
        splits.insert(if part.is_empty() { "all" } else { part }.to_string(), docs.len());
        for d in docs {
            let nbhd = build_neighborhood(d.document.len(), cfg.model.k)?;
            let cov = nbhd.coverage(&d.gold_wrg);
            tally(&mut totals, d, cov);
            let file = dir.join(format!("{}.json", d.document.doc_id));
            write_atomic(&file, annotated_to_json(d)?.as_bytes())?;
            documents.push(json!({
                "doc_id": d.document.doc_id,
                "split": part,
                "words": d.document.len(),
                "entities": d.gold_erg.entities.len(),
                "gold_word_edges_outside_neighborhood": cov.total - cov.covered,
                "flags": d.flags,
            }));
        }
    }
    let manifest = json!({
        "source": source.display().to_string(),
        "language": a.lang.clone().unwrap_or_else(|| "en".into()),
        "config": cfg.to_json(),
        "splits": splits,
        "totals": totals,
        "documents": documents,
        "failed": failed,
    });
    write_json(&a.out.join(MANIFEST), &manifest)?;
    info!(
        "wrote {n_docs} documents ({} entities over {} words) to {}",
        totals.entities,
        totals.words,
        a.out.display()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Fail::data(anyhow!("{} file(s) failed to load", failed.len())))
    }
}

// ---------------------------------------------------------------- corpora

fn load_dir(dir: &Path) -> Result<Vec<AnnotatedDocument>, Fail> {
    if !dir.is_dir() {
        return Err(Fail::data(anyhow!("{} is not a directory", dir.display())));
    }
    Ok(load_corpus_dir(dir)?)
}

/// A prepared corpus: `train/`, `validation/`, `test/` when present,
/// otherwise a flat folder split into train and validation.
fn corpus_split(root: &Path) -> Result<DatasetSplit, Fail> {
    let sub = |p: &str| root.join(p);
    if sub("train").is_dir() {
        let train = load_dir(&sub("train"))?;
        let (train, validation) = if sub("validation").is_dir() {
            (train, load_dir(&sub("validation"))?)
        } else {
            split_training(train, FUNSD_VALIDATION)
        };
        let test = if sub("test").is_dir() { load_dir(&sub("test"))? } else { Vec::new() };
        Ok(DatasetSplit { train, validation, test })
    } else {
        let (train, validation) = split_training(load_dir(root)?, FUNSD_VALIDATION);
        Ok(DatasetSplit { train, validation, test: Vec::new() })
    }
}

/// The documents to predict on or score against.
fn eval_docs_dir(root: &Path) -> PathBuf {
    if root.join("test").is_dir() {
        root.join("test")
    } else {
        root.to_path_buf()
    }
}

// ---------------------------------------------------------------- train

pub fn train(a: &TrainArgs) -> Result<(), Fail> {
    let mut cfg = config_with(&a.common)?;
    if let Some(n) = a.max_iterations {
        cfg.model.max_iterations = n;
    }
    if let Some(lr) = a.learning_rate {
        cfg.model.learning_rate = lr;
    }
    if let Some(p) = a.patience {
        cfg.model.patience = p;
    }
    let split = corpus_split(&a.corpus)?;
    let (params, log) = gnn::train(&split.train, &split.validation, &cfg.model)?;
    let ck = Checkpoint::new(&cfg.model, params, log.best_iteration, log.best_val_f1);
    save_checkpoint(&ck, &a.out_checkpoint)?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut name = a.out_checkpoint.file_stem().unwrap_or_default().to_os_string();
        name.push(".log.json");
        a.out_checkpoint.with_file_name(name)
    });
    write_json(&log_path, &json!({"config": cfg.to_json(), "log": log}))?;
    info!(
        "best validation F1 {:.4} at iteration {} of {}; checkpoint {}",
        log.best_val_f1,
        log.best_iteration,
        log.iterations.len(),
        a.out_checkpoint.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- predict

#[derive(Serialize, Deserialize)]
struct Edges {
    edges: Vec<Edge<WordRelationLabel>>,
}

/// The fields shared by prediction files and canonical documents.
#[derive(Deserialize)]
struct GraphRecord {
    doc_id: String,
    wrg: Edges,
    erg: EntityRelationGraph,
}

fn prediction_json(p: &DocPrediction, decoder: &str) -> Value {
    json!({
        "doc_id": p.doc_id,
        "decoder": decoder,
        "wrg": Edges { edges: p.wrg.edges.clone() },
        "erg": p.erg,
        "violations": p.violations,
        "violations_total": p.violations.total(),
        "gold_coverage": p.coverage,
        "solver": p.solver,
    })
}

pub fn predict(a: &PredictArgs) -> Result<(), Fail> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    if let Some(d) = a.decoder {
        cfg.decode.decoder = d.into();
    }
    if let Some(t) = a.time_limit {
        cfg.decode.time_limit_seconds = t;
    }
    if let Some(n) = a.node_limit {
        cfg.decode.node_limit = Some(n);
    }
    let ck = load_checkpoint(&a.checkpoint)?;
    cfg.model = ck.config.clone();
    let opts = cfg.decode_options()?;
    let docs = load_dir(&eval_docs_dir(&a.corpus))?;
    let decoder = match opts.decoder {
        formgraph::eval::Decoder::Greedy => "greedy",
        formgraph::eval::Decoder::Ilp => "ilp",
    };

    let results: Vec<_> = docs
        .par_iter()
        .map(|d| (d.document.doc_id.clone(), predict_document(d, &ck.params, &ck.config, &opts)))
        .collect();

    let mut totals = formgraph::convert::ViolationCounts::default();
    let mut per_document = Vec::new();
    let mut failed = Vec::new();
    let mut not_optimal = 0;
    for (doc_id, r) in results {
        match r {
            Ok(p) => {
                write_json(&a.out.join(format!("{doc_id}.json")), &prediction_json(&p, decoder))?;
                totals = totals + p.violations;
                let optimal = p.solver.as_ref().map(|s| s.optimal);
                if optimal == Some(false) {
                    not_optimal += 1;
                }
                per_document.push(json!({
                    "doc_id": doc_id,
                    "violations_total": p.violations.total(),
                    "optimal": optimal,
                }));
            }
            Err(e) => {
                warn!("{doc_id}: {e}");
                failed.push(json!({"doc_id": doc_id, "error": e.to_string()}));
            }
        }
    }
    let summary = json!({
        "config": cfg.to_json(),
        "checkpoint": a.checkpoint.display().to_string(),
        "decoder": decoder,
        "documents": per_document.len(),
        "violations": totals,
        "violations_total": totals.total(),
        "not_proven_optimal": not_optimal,
        "per_document": per_document,
        "failed": failed,
    });
    write_json(&a.out.join(SUMMARY), &summary)?;
    println!(
        "{} documents, {} failed; violations C1 {} C2 {} C3 {} C4 {} C5 {} (total {})",
        summary["documents"],
        failed.len(),
        totals.c1,
        totals.c2,
        totals.c3,
        totals.c4,
        totals.c5,
        totals.total()
    );
    if not_optimal > 0 {
        warn!("{not_optimal} document(s) hit the solver limit; their labelings are feasible but not proven optimal");
    }
    Ok(())
}

// ---------------------------------------------------------------- evaluate

fn read_records(dir: &Path) -> Result<BTreeMap<String, GraphRecord>, Fail> {
    if !dir.is_dir() {
        return Err(Fail::data(anyhow!("{} is not a directory", dir.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))
        .map_err(Fail::data)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != MANIFEST && n != SUMMARY))
        .collect();
    files.sort();
    let mut out = BTreeMap::new();
    for f in files {
        let text = fs::read_to_string(&f)
            .with_context(|| format!("reading {}", f.display()))
            .map_err(Fail::data)?;
        let r: GraphRecord = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", f.display()))
            .map_err(Fail::data)?;
        if out.contains_key(&r.doc_id) {
            return Err(Fail::data(anyhow!("duplicate document id {} in {}", r.doc_id, dir.display())));
        }
        out.insert(r.doc_id.clone(), r);
    }
    Ok(out)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), Fail> {
    let pred = read_records(&eval_docs_dir(&a.pred))?;
    let gold = read_records(&eval_docs_dir(&a.gold))?;
    let (level, report) = match a.level {
        Level::Word => {
            let wrg = |m: &BTreeMap<String, GraphRecord>| -> BTreeMap<String, WordRelationGraph> {
                m.iter()
                    .map(|(k, r)| (k.clone(), WordRelationGraph { word_ids: Vec::new(), edges: r.wrg.edges.clone() }))
                    .collect()
            };
            ("word", relation_prf(&wrg(&pred), &wrg(&gold))?)
        }
        Level::Entity => {
            let erg = |m: &BTreeMap<String, GraphRecord>| -> BTreeMap<String, EntityRelationGraph> {
                m.iter().map(|(k, r)| (k.clone(), r.erg.clone())).collect()
            };
            ("entity", entity_prf(&erg(&pred), &erg(&gold))?)
        }
    };
    print!("{}", report.to_text(&format!("{level}-level micro average over {} documents", gold.len())));
    if let Some(out) = &a.out {
        write_json(
            out,
            &json!({
                "level": level,
                "pred": a.pred.display().to_string(),
                "gold": a.gold.display().to_string(),
                "documents": gold.len(),
                "report": report,
            }),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- ablate

fn emit(out: Option<&Path>, text: &str) -> Result<(), Fail> {
    match out {
        Some(p) => Ok(write_atomic(p, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn ablate(a: &AblateArgs) -> Result<(), Fail> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    if let Some(n) = a.max_iterations {
        cfg.model.max_iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.model.seed = s;
    }
    let opts = cfg.decode_options()?;
    let split = corpus_split(&a.corpus)?;
    if split.test.is_empty() {
        return Err(Fail::data(anyhow!("{} has no test/ documents", a.corpus.display())));
    }
    match a.suite {
        SuiteArg::Neighborhood => {
            if a.k.is_empty() || a.k.contains(&0) {
                return Err(Fail::usage(anyhow!("--k needs positive neighborhood sizes")));
            }
            let rows = neighborhood_tradeoff(&split, &cfg.model, &a.k, &opts)?;
            emit(a.out.as_deref(), &tradeoff_csv(&rows))
        }
        SuiteArg::Constraints | SuiteArg::EdgeFeatures => {
            let suite = match a.suite {
                SuiteArg::Constraints => AblationSuite::Constraints,
                _ => AblationSuite::EdgeFeatures,
            };
            let rows = ablation_suite(&split, &cfg.model, suite, &opts)?;
            print!("{}", ablation_text(&rows));
            if let Some(out) = &a.out {
                write_json(out, &json!({"config": cfg.to_json(), "suite": suite, "rows": rows}))?;
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- synth

pub fn synth(a: &SynthArgs) -> Result<(), Fail> {
    let g = FormGenerator::new(SyntheticConfig {
        language: a.lang.clone(),
        ..Default::default()
    });
    for (part, n, offset) in [("training_data", a.train, 0u64), ("testing_data", a.test, 1_000_000)] {
        let dir = a.out.join(part).join("annotations");
        for k in 0..n {
            let id = format!("{}_{k:04}", if offset == 0 { "train" } else { "test" });
            let raw = g.raw(a.seed.wrapping_add(offset).wrapping_add(k as u64), &id);
            write_json(&dir.join(format!("{id}.json")), &raw)?;
        }
    }
    info!("wrote {} + {} synthetic forms to {}", a.train, a.test, a.out.display());
    Ok(())
}
