use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{EDGE_DIM, NODE_DIM};
use crate::gnn::ModelConfig;

/// One attention head: node and edge projections plus the attention vector
/// over `[projected source ‖ projected target ‖ projected edge]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `hidden × NODE_DIM`, row-major.
    pub node_w: Vec<f64>,
    pub node_b: Vec<f64>,
    /// `hidden × EDGE_DIM`, row-major.
    pub edge_w: Vec<f64>,
    pub edge_b: Vec<f64>,
    /// `3 · hidden`.
    pub attn: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hidden: usize,
    pub heads: Vec<HeadParams>,
    /// `labels × (2·hidden + EDGE_DIM)`, row-major.
    pub cls_w: Vec<f64>,
    pub cls_b: Vec<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let a = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

impl ModelParams {
    pub fn classifier_inputs(hidden: usize) -> usize {
        2 * hidden + EDGE_DIM
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden_dim;
        ModelParams {
            hidden: h,
            heads: (0..cfg.heads)
                .map(|_| HeadParams {
                    node_w: vec![0.0; h * NODE_DIM],
                    node_b: vec![0.0; h],
                    edge_w: vec![0.0; h * EDGE_DIM],
                    edge_b: vec![0.0; h],
                    attn: vec![0.0; 3 * h],
                })
                .collect(),
            cls_w: vec![0.0; cfg.label_count * Self::classifier_inputs(h)],
            cls_b: vec![0.0; cfg.label_count],
        }
    }

    /// Fan-in scaled uniform initialization from `cfg.seed`.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let h = cfg.hidden_dim;
        let heads = (0..cfg.heads)
            .map(|_| HeadParams {
                node_w: uniform(&mut rng, h * NODE_DIM, NODE_DIM),
                node_b: uniform(&mut rng, h, NODE_DIM),
                edge_w: uniform(&mut rng, h * EDGE_DIM, EDGE_DIM),
                edge_b: uniform(&mut rng, h, EDGE_DIM),
                attn: uniform(&mut rng, 3 * h, 3 * h),
            })
            .collect();
        let fan = Self::classifier_inputs(h);
        ModelParams {
            hidden: h,
            heads,
            cls_w: uniform(&mut rng, cfg.label_count * fan, fan),
            cls_b: uniform(&mut rng, cfg.label_count, fan),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|v| *v = 0.0);
        z
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (k, h) in self.heads.iter().enumerate() {
            out.push((format!("head{k}.node_w"), h.node_w.as_slice()));
            out.push((format!("head{k}.node_b"), h.node_b.as_slice()));
            out.push((format!("head{k}.edge_w"), h.edge_w.as_slice()));
            out.push((format!("head{k}.edge_b"), h.edge_b.as_slice()));
            out.push((format!("head{k}.attn"), h.attn.as_slice()));
        }
        out.push(("cls_w".into(), self.cls_w.as_slice()));
        out.push(("cls_b".into(), self.cls_b.as_slice()));
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for h in &mut self.heads {
            out.push(&mut h.node_w);
            out.push(&mut h.node_b);
            out.push(&mut h.edge_w);
            out.push(&mut h.edge_b);
            out.push(&mut h.attn);
        }
        out.push(&mut self.cls_w);
        out.push(&mut self.cls_b);
        out
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for t in self.slices_mut() {
            t.iter_mut().for_each(&mut f);
        }
    }

    /// All values flattened in tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        self.for_each_mut(|v| {
            *v = flat[k];
            k += 1;
        });
        assert_eq!(k, flat.len(), "flat parameter length mismatch");
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameters that influence the output under `cfg`'s edge-feature
    /// switches. Independent of document size.
    pub fn active_count(&self, cfg: &ModelConfig) -> usize {
        let h = self.hidden;
        let mut n = self.len();
        if !cfg.edge_in_attention {
            n -= self.heads.len() * (h * EDGE_DIM + h + h);
        }
        if !cfg.edge_at_classifier {
            n -= self.cls_b.len() * EDGE_DIM;
        }
        n
    }

    pub fn add_scaled(&mut self, other: &ModelParams, c: f64) {
        let flat = other.to_flat();
        let mut k = 0;
        self.for_each_mut(|v| {
            *v += c * flat[k];
            k += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_small() {
        let cfg = ModelConfig::default();
        let p = ModelParams::init(&cfg);
        // 3 heads × (256 + 64 + 384 + 64 + 192) + 6 × 134 + 6
        assert_eq!(p.len(), 3 * 960 + 804 + 6);
        assert_eq!(p.active_count(&cfg), 3690);
        assert!(p.active_count(&cfg) < 15_000);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::default();
        assert_eq!(ModelParams::init(&cfg), ModelParams::init(&cfg));
        let other = ModelConfig { seed: cfg.seed + 1, ..cfg.clone() };
        assert_ne!(ModelParams::init(&cfg), ModelParams::init(&other));
    }

    #[test]
    fn flat_round_trip() {
        let p = ModelParams::init(&ModelConfig::default());
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat());
        assert_eq!(p, q);
    }
}
