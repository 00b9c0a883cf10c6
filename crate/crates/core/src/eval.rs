//! Micro-averaged metrics, the predict-and-decode pipeline, and the
//! experiment harnesses built on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convert::{verify_constraints, wrg_to_erg_with, ConversionMode, ViolationCounts};
use crate::error::{Error, Result};
use crate::gnn::{forward_inputs, predict_greedy, train, ModelConfig, ModelParams};
use crate::graph::{Edge, EntityRelationGraph, WordRelationGraph, WordRelationLabel as L};
use crate::ilp::{decode_scores, ConstraintConfig, Family, SolverOptions};
use crate::ingest::{build_neighborhood, AnnotatedDocument, Coverage, DatasetSplit};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// True/false positive and false negative counts per label.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrfCounts {
    pub labels: BTreeMap<String, LabelCounts>,
}

impl std::ops::Add for PrfCounts {
    type Output = PrfCounts;
    fn add(mut self, o: PrfCounts) -> PrfCounts {
        for (k, c) in o.labels {
            let e = self.labels.entry(k).or_default();
            e.tp += c.tp;
            e.fp += c.fp;
            e.fn_ += c.fn_;
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Gold count.
    pub support: usize,
}

impl LabelPrf {
    fn from_counts(c: LabelCounts) -> Self {
        let precision = if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
        let recall = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        LabelPrf {
            precision,
            recall,
            f1,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            support: c.tp + c.fn_,
        }
    }
}

/// Micro-averaged precision, recall and F1 with a per-label breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub support: usize,
    pub per_label: BTreeMap<String, LabelPrf>,
}

impl PrfCounts {
    pub fn report(&self) -> PrfReport {
        let total = self.labels.values().fold(LabelCounts::default(), |a, c| LabelCounts {
            tp: a.tp + c.tp,
            fp: a.fp + c.fp,
            fn_: a.fn_ + c.fn_,
        });
        let micro = LabelPrf::from_counts(total);
        PrfReport {
            precision: micro.precision,
            recall: micro.recall,
            f1: micro.f1,
            tp: micro.tp,
            fp: micro.fp,
            fn_: micro.fn_,
            support: micro.support,
            per_label: self
                .labels
                .iter()
                .map(|(k, &c)| (k.clone(), LabelPrf::from_counts(c)))
                .collect(),
        }
    }
}

impl PrfReport {
    /// Aligned plain-text table.
    pub fn to_text(&self, title: &str) -> String {
        let mut s = format!("{title}\n");
        let _ = writeln!(s, "{:<16} {:>9} {:>9} {:>9} {:>8}", "label", "precision", "recall", "f1", "support");
        for (k, r) in &self.per_label {
            let _ = writeln!(s, "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}", k, r.precision, r.recall, r.f1, r.support);
        }
        let _ = writeln!(
            s,
            "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            "micro", self.precision, self.recall, self.f1, self.support
        );
        s
    }
}

fn count_sets<K: Ord + Clone>(
    pred: &BTreeSet<K>,
    gold: &BTreeSet<K>,
    name: impl Fn(&K) -> String,
    all_names: &[String],
) -> PrfCounts {
    let mut out = PrfCounts::default();
    for n in all_names {
        out.labels.insert(n.clone(), LabelCounts::default());
    }
    for k in pred {
        let c = out.labels.entry(name(k)).or_default();
        if gold.contains(k) {
            c.tp += 1;
        } else {
            c.fp += 1;
        }
    }
    for k in gold.difference(pred) {
        out.labels.entry(name(k)).or_default().fn_ += 1;
    }
    out
}

fn relation_names() -> Vec<String> {
    L::REAL.iter().map(|l| l.name().to_string()).collect()
}

/// Exact `(src, label, dst)` matches over one document's graphs; undirected
/// edges are compared in canonical orientation.
pub fn relation_counts(pred: &WordRelationGraph, gold: &WordRelationGraph) -> PrfCounts {
    let set = |g: &WordRelationGraph| -> BTreeSet<Edge<L>> {
        g.edges
            .iter()
            .filter(|e| e.label != L::NoRelation)
            .map(|e| e.oriented())
            .collect()
    };
    count_sets(&set(pred), &set(gold), |e| e.label.name().to_string(), &relation_names())
}

/// An entity matches when its type and word set both match.
pub fn entity_counts(pred: &EntityRelationGraph, gold: &EntityRelationGraph) -> PrfCounts {
    let set = |g: &EntityRelationGraph| -> BTreeSet<(String, Vec<usize>)> {
        g.entities
            .iter()
            .map(|e| {
                let mut w = e.word_ids.clone();
                w.sort_unstable();
                (e.kind.to_string(), w)
            })
            .collect()
    };
    let names: Vec<String> = ["question", "answer", "header"].map(String::from).to_vec();
    count_sets(&set(pred), &set(gold), |k| k.0.clone(), &names)
}

fn paired<'a, T>(
    pred: &'a BTreeMap<String, T>,
    gold: &'a BTreeMap<String, T>,
) -> Result<Vec<(&'a T, &'a T)>> {
    let missing: Vec<&String> = gold.keys().filter(|k| !pred.contains_key(*k)).collect();
    let extra: Vec<&String> = pred.keys().filter(|k| !gold.contains_key(*k)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::DocumentMismatch(format!(
            "missing predictions for {missing:?}; predictions without gold for {extra:?}"
        )));
    }
    Ok(gold.iter().map(|(k, g)| (&pred[k], g)).collect())
}

/// Corpus-pooled relation metrics. Both maps are keyed by document id and
/// must cover the same documents.
pub fn relation_prf(
    pred: &BTreeMap<String, WordRelationGraph>,
    gold: &BTreeMap<String, WordRelationGraph>,
) -> Result<PrfReport> {
    Ok(paired(pred, gold)?
        .into_iter()
        .map(|(p, g)| relation_counts(p, g))
        .fold(PrfCounts::default(), |a, b| a + b)
        .report())
}

pub fn entity_prf(
    pred: &BTreeMap<String, EntityRelationGraph>,
    gold: &BTreeMap<String, EntityRelationGraph>,
) -> Result<PrfReport> {
    Ok(paired(pred, gold)?
        .into_iter()
        .map(|(p, g)| entity_counts(p, g))
        .fold(PrfCounts::default(), |a, b| a + b)
        .report())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    Greedy,
    #[default]
    Ilp,
}

impl std::str::FromStr for Decoder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Decoder::Greedy),
            "ilp" => Ok(Decoder::Ilp),
            _ => Err(Error::Config(format!("unknown decoder {s:?} (expected greedy or ilp)"))),
        }
    }
}

/// Decoding settings shared by prediction and the harnesses.
#[derive(Clone, Debug, Default)]
pub struct DecodeOptions {
    pub decoder: Decoder,
    pub constraints: ConstraintConfig,
    pub solver: SolverOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub objective: f64,
    pub nodes: usize,
    pub optimal: bool,
}

/// One document's decoded output.
#[derive(Clone, Debug, PartialEq)]
pub struct DocPrediction {
    pub doc_id: String,
    pub wrg: WordRelationGraph,
    /// Lenient conversion of `wrg`.
    pub erg: EntityRelationGraph,
    pub violations: ViolationCounts,
    pub coverage: Coverage,
    pub solver: Option<SolverStats>,
    pub forward_seconds: f64,
    pub decode_seconds: f64,
}

pub fn predict_document(
    doc: &AnnotatedDocument,
    params: &ModelParams,
    cfg: &ModelConfig,
    opts: &DecodeOptions,
) -> Result<DocPrediction> {
    let nbhd = build_neighborhood(doc.document.len(), cfg.k)?;
    let t0 = Instant::now();
    let inputs = crate::gnn::DocInputs::new(&doc.document, &nbhd)?;
    let scores = forward_inputs(&inputs, params, cfg);
    let forward_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (wrg, solver) = match opts.decoder {
        Decoder::Greedy => (predict_greedy(&scores, &nbhd)?, None),
        Decoder::Ilp => {
            let (g, sol) = decode_scores(&scores, &nbhd, &opts.constraints, &opts.solver)?;
            let stats = SolverStats {
                objective: sol.objective,
                nodes: sol.nodes,
                optimal: sol.optimal,
            };
            (g, Some(stats))
        }
    };
    let decode_seconds = t1.elapsed().as_secs_f64();
    let erg = wrg_to_erg_with(&wrg, ConversionMode::Lenient)?;
    Ok(DocPrediction {
        doc_id: doc.document.doc_id.clone(),
        violations: verify_constraints(&wrg, &nbhd),
        coverage: nbhd.coverage(&doc.gold_wrg),
        wrg,
        erg,
        solver,
        forward_seconds,
        decode_seconds,
    })
}

pub fn predict_corpus(
    docs: &[AnnotatedDocument],
    params: &ModelParams,
    cfg: &ModelConfig,
    opts: &DecodeOptions,
) -> Result<Vec<DocPrediction>> {
    docs.par_iter()
        .map(|d| predict_document(d, params, cfg, opts))
        .collect()
}

/// Relation and entity scores of predictions against their documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub relations: PrfReport,
    pub entities: PrfReport,
    pub violations: ViolationCounts,
    pub coverage: Coverage,
}

pub fn score_predictions(preds: &[DocPrediction], docs: &[AnnotatedDocument]) -> Result<CorpusScores> {
    let by_id = |f: &dyn Fn(&DocPrediction) -> WordRelationGraph| -> BTreeMap<String, WordRelationGraph> {
        preds.iter().map(|p| (p.doc_id.clone(), f(p))).collect()
    };
    let pred_w = by_id(&|p| p.wrg.clone());
    let gold_w: BTreeMap<_, _> = docs
        .iter()
        .map(|d| (d.document.doc_id.clone(), d.gold_wrg.clone()))
        .collect();
    let pred_e: BTreeMap<_, _> = preds.iter().map(|p| (p.doc_id.clone(), p.erg.clone())).collect();
    let gold_e: BTreeMap<_, _> = docs
        .iter()
        .map(|d| (d.document.doc_id.clone(), d.gold_erg.clone()))
        .collect();
    Ok(CorpusScores {
        relations: relation_prf(&pred_w, &gold_w)?,
        entities: entity_prf(&pred_e, &gold_e)?,
        violations: preds
            .iter()
            .fold(ViolationCounts::default(), |a, p| a + p.violations),
        coverage: preds
            .iter()
            .fold(Coverage::default(), |a, p| a + p.coverage),
    })
}

pub fn evaluate(
    docs: &[AnnotatedDocument],
    params: &ModelParams,
    cfg: &ModelConfig,
    opts: &DecodeOptions,
) -> Result<CorpusScores> {
    score_predictions(&predict_corpus(docs, params, cfg, opts)?, docs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotReport {
    pub per_language: BTreeMap<String, PrfReport>,
    /// Mean relation F1 over all languages given.
    pub average_f1: f64,
}

/// Scores one checkpoint on every language's test documents, no retraining.
pub fn zero_shot_eval(
    params: &ModelParams,
    cfg: &ModelConfig,
    languages: &BTreeMap<String, Vec<AnnotatedDocument>>,
    opts: &DecodeOptions,
) -> Result<ZeroShotReport> {
    let mut per_language = BTreeMap::new();
    for (lang, docs) in languages {
        per_language.insert(lang.clone(), evaluate(docs, params, cfg, opts)?.relations);
    }
    let average_f1 = if per_language.is_empty() {
        0.0
    } else {
        per_language.values().map(|r| r.f1).sum::<f64>() / per_language.len() as f64
    };
    Ok(ZeroShotReport {
        per_language,
        average_f1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub k: usize,
    pub candidate_pairs: usize,
    pub coverage: f64,
    pub greedy_f1: f64,
    pub ilp_f1: f64,
    /// Solver time per document, forward pass excluded.
    pub mean_decode_seconds: f64,
    pub mean_total_seconds: f64,
}

/// Retrains and evaluates at every `K`.
pub fn neighborhood_tradeoff(
    split: &DatasetSplit,
    cfg: &ModelConfig,
    ks: &[usize],
    opts: &DecodeOptions,
) -> Result<Vec<TradeoffRow>> {
    let mut rows = Vec::new();
    for &k in ks {
        let cfg_k = ModelConfig { k, ..cfg.clone() };
        let (params, _) = train(&split.train, &split.validation, &cfg_k)?;
        let greedy = evaluate(
            &split.test,
            &params,
            &cfg_k,
            &DecodeOptions { decoder: Decoder::Greedy, ..opts.clone() },
        )?;
        let ilp_opts = DecodeOptions { decoder: Decoder::Ilp, ..opts.clone() };
        // Sequential so timings are not inflated by contention.
        let preds = split
            .test
            .iter()
            .map(|d| predict_document(d, &params, &cfg_k, &ilp_opts))
            .collect::<Result<Vec<_>>>()?;
        let n = preds.len().max(1) as f64;
        let ilp = score_predictions(&preds, &split.test)?;
        rows.push(TradeoffRow {
            k,
            candidate_pairs: split
                .test
                .iter()
                .map(|d| build_neighborhood(d.document.len(), k).map(|nb| nb.len()))
                .sum::<Result<usize>>()?,
            coverage: ilp.coverage.fraction(),
            greedy_f1: greedy.relations.f1,
            ilp_f1: ilp.relations.f1,
            mean_decode_seconds: preds.iter().map(|p| p.decode_seconds).sum::<f64>() / n,
            mean_total_seconds: preds
                .iter()
                .map(|p| p.decode_seconds + p.forward_seconds)
                .sum::<f64>()
                / n,
        });
    }
    Ok(rows)
}

pub fn tradeoff_csv(rows: &[TradeoffRow]) -> String {
    let mut s = String::from("k,candidate_pairs,coverage,greedy_f1,ilp_f1,mean_decode_seconds,mean_total_seconds\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.k, r.candidate_pairs, r.coverage, r.greedy_f1, r.ilp_f1, r.mean_decode_seconds, r.mean_total_seconds
        );
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSuite {
    Constraints,
    EdgeFeatures,
}

impl std::str::FromStr for AblationSuite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constraints" => Ok(AblationSuite::Constraints),
            "edge-features" | "edge_features" => Ok(AblationSuite::EdgeFeatures),
            _ => Err(Error::Config(format!("unknown ablation suite {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub decoder: Decoder,
    pub relations: PrfReport,
    pub violations: ViolationCounts,
}

/// Constraint-removal variants decoded from one trained model.
pub fn constraint_variants(base: &ConstraintConfig) -> Vec<(String, ConstraintConfig)> {
    vec![
        ("all constraints".into(), *base),
        ("- C1".into(), base.without(Family::C1)),
        ("- C2".into(), base.without(Family::C2)),
        ("- C4 - C5".into(), base.without(Family::C4).without(Family::C5)),
    ]
}

/// `(name, edge_in_attention, edge_at_classifier)`.
pub const EDGE_FEATURE_VARIANTS: [(&str, bool, bool); 4] = [
    ("edge features in attention and at classifier", true, true),
    ("no edge features", false, false),
    ("edge features at classifier only", false, true),
    ("edge features in attention only", true, false),
];

pub fn ablation_suite(
    split: &DatasetSplit,
    cfg: &ModelConfig,
    suite: AblationSuite,
    opts: &DecodeOptions,
) -> Result<Vec<AblationRow>> {
    let row = |variant: &str, decoder, scores: CorpusScores| AblationRow {
        variant: variant.into(),
        decoder,
        relations: scores.relations,
        violations: scores.violations,
    };
    let mut rows = Vec::new();
    match suite {
        AblationSuite::Constraints => {
            let (params, _) = train(&split.train, &split.validation, cfg)?;
            let greedy = DecodeOptions { decoder: Decoder::Greedy, ..opts.clone() };
            rows.push(row("no constraints", Decoder::Greedy, evaluate(&split.test, &params, cfg, &greedy)?));
            for (name, c) in constraint_variants(&opts.constraints) {
                let o = DecodeOptions {
                    decoder: Decoder::Ilp,
                    constraints: c,
                    solver: opts.solver,
                };
                rows.push(row(&name, Decoder::Ilp, evaluate(&split.test, &params, cfg, &o)?));
            }
        }
        AblationSuite::EdgeFeatures => {
            for (name, att, cls) in EDGE_FEATURE_VARIANTS {
                let c = ModelConfig {
                    edge_in_attention: att,
                    edge_at_classifier: cls,
                    ..cfg.clone()
                };
                let (params, _) = train(&split.train, &split.validation, &c)?;
                for decoder in [Decoder::Greedy, Decoder::Ilp] {
                    let o = DecodeOptions { decoder, ..opts.clone() };
                    rows.push(row(name, decoder, evaluate(&split.test, &params, &c, &o)?));
                }
            }
        }
    }
    Ok(rows)
}

pub fn ablation_text(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<48} {:>7} {:>9} {:>9} {:>9} {:>10}\n",
        "variant", "decoder", "precision", "recall", "f1", "violations"
    );
    for r in rows {
        let dec = match r.decoder {
            Decoder::Greedy => "greedy",
            Decoder::Ilp => "ilp",
        };
        let _ = writeln!(
            s,
            "{:<48} {:>7} {:>9.4} {:>9.4} {:>9.4} {:>10}",
            r.variant,
            dec,
            r.relations.precision,
            r.relations.recall,
            r.relations.f1,
            r.violations.total()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Entity, EntityType};

    fn g(edges: Vec<Edge<L>>) -> WordRelationGraph {
        WordRelationGraph {
            word_ids: (0..6).collect(),
            edges,
        }
    }

    fn one(id: &str, w: WordRelationGraph) -> BTreeMap<String, WordRelationGraph> {
        BTreeMap::from([(id.to_string(), w)])
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let gold = g(vec![Edge::new(0, L::SameEntity, 1), Edge::new(1, L::QuestionAnswer, 2)]);
        let r = relation_prf(&one("d", gold.clone()), &one("d", gold.clone())).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = relation_prf(&one("d", g(vec![])), &one("d", gold)).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert_eq!(r.support, 2);
    }

    #[test]
    fn direction_matters_for_directed_labels_only() {
        let gold = g(vec![Edge::new(1, L::QuestionAnswer, 2), Edge::new(3, L::ProximateV, 4)]);
        let pred = g(vec![Edge::new(2, L::QuestionAnswer, 1), Edge::new(4, L::ProximateV, 3)]);
        let r = relation_prf(&one("d", pred), &one("d", gold)).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
        assert_eq!(r.per_label["proximate_v"].tp, 1);
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let gold = g(vec![
            Edge::new(0, L::SameEntity, 1),
            Edge::new(1, L::QuestionAnswer, 2),
            Edge::new(3, L::SameEntity, 4),
        ]);
        let pred = g(vec![Edge::new(0, L::SameEntity, 1), Edge::new(2, L::SameEntity, 3)]);
        let r = relation_prf(&one("d", pred), &one("d", gold)).unwrap();
        assert!((r.precision - 0.5).abs() < 1e-12);
        assert!((r.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.f1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn mismatched_documents_are_an_error() {
        let e = relation_prf(&one("a", g(vec![])), &one("b", g(vec![]))).unwrap_err();
        assert!(e.to_string().contains("\"b\""), "{e}");
    }

    #[test]
    fn entity_exact_match() {
        let ent = |words: &[usize], kind| Entity { id: 0, kind, word_ids: words.to_vec() };
        let gold = EntityRelationGraph {
            entities: vec![ent(&[0, 1], EntityType::Question), ent(&[2], EntityType::Answer)],
            edges: vec![],
        };
        let pred = EntityRelationGraph {
            entities: vec![ent(&[0], EntityType::Question), ent(&[2], EntityType::Answer)],
            edges: vec![],
        };
        let c = entity_counts(&pred, &gold).report();
        assert_eq!((c.tp, c.fp, c.fn_), (1, 1, 1));
        assert_eq!(entity_counts(&gold, &gold).report().f1, 1.0);
    }

    #[test]
    fn micro_metrics_ignore_document_order() {
        let a = g(vec![Edge::new(0, L::SameEntity, 1)]);
        let b = g(vec![Edge::new(1, L::QuestionAnswer, 2)]);
        let pred = BTreeMap::from([("x".to_string(), a.clone()), ("y".to_string(), a.clone())]);
        let gold = BTreeMap::from([("y".to_string(), b), ("x".to_string(), a)]);
        let r = relation_prf(&pred, &gold).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
    }
}
