//! Layout-only graph attention scorer over candidate word pairs, and its
//! training loop.

mod checkpoint;
mod model;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use model::{
    backward, cross_entropy, forward, forward_cached, forward_inputs, gold_labels, log_softmax,
    loss_and_gradient, loss_only, DocInputs, ForwardCache,
};
pub use params::{HeadParams, ModelParams};
pub use train::{
    majority_baseline_f1, prepare_inputs, train, validation_f1, Adam, IterationLog, PreparedDoc,
    TrainingLog,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{WordRelationGraph, WordRelationLabel};
use crate::ilp::labels_to_graph;
use crate::ingest::{Neighborhood, DEFAULT_K};

/// Nonlinearity applied to the aggregated messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub heads: usize,
    pub hidden_dim: usize,
    pub leaky_slope: f64,
    pub label_count: usize,
    pub activation: Activation,
    pub seed: u64,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub patience: usize,
    pub k: usize,
    /// Edge features enter the attention logits and messages.
    pub edge_in_attention: bool,
    /// Raw edge features are appended to the classifier input.
    pub edge_at_classifier: bool,
    /// Loss weight of the no-relation label; the others weigh 1.
    pub no_relation_weight: f64,
    /// Documents per optimizer step; 0 means the whole training set.
    pub batch_docs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            heads: 3,
            hidden_dim: 64,
            leaky_slope: 0.2,
            label_count: WordRelationLabel::COUNT,
            activation: Activation::Tanh,
            seed: 42,
            learning_rate: 1e-3,
            max_iterations: 500,
            patience: 100,
            k: DEFAULT_K,
            edge_in_attention: true,
            edge_at_classifier: true,
            no_relation_weight: 1.0,
            batch_docs: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        if self.heads == 0 {
            return bad("heads must be positive");
        }
        if self.label_count != WordRelationLabel::COUNT {
            return bad("label_count must be 6");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.no_relation_weight > 0.0 && self.no_relation_weight.is_finite()) {
            return bad("no_relation_weight must be positive");
        }
        Ok(())
    }

    pub fn label_weights(&self) -> [f64; WordRelationLabel::COUNT] {
        let mut w = [1.0; WordRelationLabel::COUNT];
        w[WordRelationLabel::NoRelation.index()] = self.no_relation_weight;
        w
    }
}

/// Per-pair logits and their softmax.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub logits: Vec<[f64; WordRelationLabel::COUNT]>,
    pub probs: Vec<[f64; WordRelationLabel::COUNT]>,
}

impl ScoreTable {
    pub fn from_logits(logits: Vec<[f64; WordRelationLabel::COUNT]>) -> Self {
        let probs = logits.iter().map(|s| log_softmax(s).map(f64::exp)).collect();
        ScoreTable { logits, probs }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn log_probs(&self) -> Vec<[f64; WordRelationLabel::COUNT]> {
        self.logits.iter().map(log_softmax).collect()
    }

    /// Argmax label per pair; ties go to the lower label index.
    pub fn argmax(&self) -> Vec<WordRelationLabel> {
        self.logits
            .iter()
            .map(|s| {
                let mut best = 0;
                for z in 1..s.len() {
                    if s[z] > s[best] {
                        best = z;
                    }
                }
                WordRelationLabel::ALL[best]
            })
            .collect()
    }
}

/// Unconstrained decode: the argmax label of every pair, no-relation dropped.
pub fn predict_greedy(scores: &ScoreTable, nbhd: &Neighborhood) -> Result<WordRelationGraph> {
    labels_to_graph(&scores.argmax(), nbhd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_neighborhood;
    use WordRelationLabel as L;

    #[test]
    fn softmax_rows_sum_to_one() {
        let t = ScoreTable::from_logits(vec![[3.0, -1.0, 0.5, 700.0, -700.0, 2.0], [0.0; 6]]);
        for p in &t.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!((t.probs[1][0] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_prefer_lower_index() {
        let t = ScoreTable::from_logits(vec![[0.0, 1.0, 1.0, 0.0, 0.0, 1.0], [0.0; 6]]);
        assert_eq!(t.argmax(), vec![L::HeaderQuestion, L::QuestionAnswer]);
    }

    #[test]
    fn greedy_all_no_relation_is_empty() {
        let nbhd = build_neighborhood(4, 2).unwrap();
        let mut s = [0.0; 6];
        s[L::NoRelation.index()] = 5.0;
        let g = predict_greedy(&ScoreTable::from_logits(vec![s; nbhd.len()]), &nbhd).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.word_ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let c = ModelConfig { hidden_dim: 0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { k: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
