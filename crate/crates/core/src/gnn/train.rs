use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{relation_counts, PrfCounts};
use crate::gnn::model::{forward_inputs, gold_labels, loss_and_gradient, DocInputs};
use crate::gnn::params::ModelParams;
use crate::gnn::{predict_greedy, ModelConfig};
use crate::graph::{WordRelationGraph, WordRelationLabel};
use crate::ilp::labels_to_graph;
use crate::ingest::{build_neighborhood, AnnotatedDocument, Coverage, Neighborhood};

/// A document with its neighborhood, model inputs and gold labels computed
/// once up front.
pub struct PreparedDoc {
    pub doc_id: String,
    pub nbhd: Neighborhood,
    pub inputs: DocInputs,
    pub gold: Vec<usize>,
    pub gold_wrg: WordRelationGraph,
}

pub fn prepare_inputs(docs: &[AnnotatedDocument], k: usize) -> Result<Vec<PreparedDoc>> {
    docs.par_iter()
        .map(|d| {
            let nbhd = build_neighborhood(d.document.len(), k)?;
            let inputs = DocInputs::new(&d.document, &nbhd)?;
            let gold = gold_labels(&d.gold_wrg, nbhd.pairs());
            Ok(PreparedDoc {
                doc_id: d.document.doc_id.clone(),
                nbhd,
                inputs,
                gold,
                gold_wrg: d.gold_wrg.clone(),
            })
        })
        .collect()
}

/// Adam over the flattened parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.t += 1;
        let g = grad.to_flat();
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        let (m, v) = (&mut self.m, &mut self.v);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        params.for_each_mut(|p| {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            *p -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            k += 1;
        });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// Summed training loss before this iteration's updates.
    pub loss: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub iterations: Vec<IterationLog>,
    pub best_iteration: usize,
    pub best_val_f1: f64,
    pub stopped_early: bool,
    pub param_count: usize,
    pub train_coverage: Coverage,
    pub majority_baseline_f1: f64,
}

fn batch_gradient(
    batch: &[PreparedDoc],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> (f64, ModelParams) {
    let parts: Vec<(f64, ModelParams)> = batch
        .par_iter()
        .map(|d| loss_and_gradient(&d.inputs, &d.gold, params, cfg))
        .collect();
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_scaled(g, 1.0);
    }
    (loss, total)
}

/// Pooled greedy-decode counts on prepared documents.
pub fn greedy_counts(docs: &[PreparedDoc], params: &ModelParams, cfg: &ModelConfig) -> PrfCounts {
    let parts: Vec<PrfCounts> = docs
        .par_iter()
        .map(|d| {
            let scores = forward_inputs(&d.inputs, params, cfg);
            let pred = predict_greedy(&scores, &d.nbhd).expect("greedy labels form a valid graph");
            relation_counts(&pred, &d.gold_wrg)
        })
        .collect();
    parts.into_iter().fold(PrfCounts::default(), |a, b| a + b)
}

pub fn validation_f1(docs: &[PreparedDoc], params: &ModelParams, cfg: &ModelConfig) -> f64 {
    greedy_counts(docs, params, cfg).report().f1
}

/// F1 of labeling every validation pair with the most frequent training
/// pair label.
pub fn majority_baseline_f1(train: &[PreparedDoc], val: &[PreparedDoc]) -> f64 {
    let mut freq = [0usize; WordRelationLabel::COUNT];
    for d in train {
        for &y in &d.gold {
            freq[y] += 1;
        }
    }
    let mut best = 0;
    for z in 1..freq.len() {
        if freq[z] > freq[best] {
            best = z;
        }
    }
    let label = WordRelationLabel::ALL[best];
    val.iter()
        .map(|d| {
            let pred = labels_to_graph(&vec![label; d.nbhd.len()], &d.nbhd)
                .expect("uniform labels form a valid graph");
            relation_counts(&pred, &d.gold_wrg)
        })
        .fold(PrfCounts::default(), |a, b| a + b)
        .report()
        .f1
}

/// Trains from `cfg.seed`, keeping the parameters with the best validation
/// F1. Stops after `patience` iterations without strict improvement.
pub fn train(
    train_docs: &[AnnotatedDocument],
    val_docs: &[AnnotatedDocument],
    cfg: &ModelConfig,
) -> Result<(ModelParams, TrainingLog)> {
    cfg.validate()?;
    if train_docs.is_empty() || val_docs.is_empty() {
        return Err(Error::Config(
            "training needs non-empty train and validation sets".into(),
        ));
    }
    let train_set = prepare_inputs(train_docs, cfg.k)?;
    let val_set = prepare_inputs(val_docs, cfg.k)?;
    let train_coverage = train_set
        .iter()
        .map(|d| d.nbhd.coverage(&d.gold_wrg))
        .fold(Coverage::default(), |a, b| a + b);
    info!(
        "training on {} documents ({} pairs), validating on {}; gold coverage {:.4}",
        train_set.len(),
        train_set.iter().map(|d| d.nbhd.len()).sum::<usize>(),
        val_set.len(),
        train_coverage.fraction()
    );

    let mut params = ModelParams::init(cfg);
    let mut adam = Adam::new(cfg.learning_rate, params.len());
    let batch = if cfg.batch_docs == 0 {
        train_set.len()
    } else {
        cfg.batch_docs
    };

    let mut log = TrainingLog {
        iterations: Vec::new(),
        best_iteration: 0,
        best_val_f1: f64::NEG_INFINITY,
        stopped_early: false,
        param_count: params.active_count(cfg),
        train_coverage,
        majority_baseline_f1: majority_baseline_f1(&train_set, &val_set),
    };
    let mut best = params.clone();
    let mut since_best = 0;

    for iteration in 1..=cfg.max_iterations {
        let mut loss = 0.0;
        for chunk in train_set.chunks(batch) {
            let (l, grad) = batch_gradient(chunk, &params, cfg);
            if !l.is_finite() {
                return Err(Error::Divergence { iteration, loss: l });
            }
            loss += l;
            adam.step(&mut params, &grad);
        }
        let val_f1 = validation_f1(&val_set, &params, cfg);
        debug!("iteration {iteration}: loss {loss:.6} val F1 {val_f1:.4}");
        log.iterations.push(IterationLog {
            iteration,
            loss,
            val_f1,
        });
        if val_f1 > log.best_val_f1 {
            log.best_val_f1 = val_f1;
            log.best_iteration = iteration;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.patience {
            log.stopped_early = iteration < cfg.max_iterations;
            break;
        }
    }
    if log.iterations.is_empty() {
        log.best_val_f1 = validation_f1(&val_set, &params, cfg);
    }
    info!(
        "best validation F1 {:.4} at iteration {} of {}",
        log.best_val_f1,
        log.best_iteration,
        log.iterations.len()
    );
    Ok((best, log))
}
