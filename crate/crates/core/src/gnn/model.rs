//! Forward and reverse-mode backward passes of the single-layer,
//! multi-head graph attention scorer.
//!
//! For head `h` and candidate pair `p = (a, b)`:
//!
//! ```text
//! u_i   = Wn·x_i + bn                    node projection
//! v_p   = We·d_p + be                    edge projection
//! e_p   = LeakyReLU(attn · [u_a ‖ u_b ‖ v_p])
//! α_ip  = softmax of e over the pairs touching i
//! H_i   = tanh(Σ_p α_ip (u_other + v_p))
//! ```
//!
//! Node embeddings average the heads; each pair is scored by a linear
//! layer over `[E_a ‖ E_b ‖ d_p]`.

use crate::error::Result;
use crate::features::{edge_features, node_features, EdgeFeature, NodeFeature, EDGE_DIM, NODE_DIM};
use crate::gnn::params::{HeadParams, ModelParams};
use crate::gnn::{ModelConfig, ScoreTable};
use crate::graph::{BoundingBox, Document, WordRelationGraph, WordRelationLabel};
use crate::ingest::Neighborhood;

/// Everything the model sees of a document: geometry and candidate pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DocInputs {
    pub nodes: Vec<NodeFeature>,
    pub edges: Vec<EdgeFeature>,
    pub pairs: Vec<(usize, usize)>,
    pub incident: Vec<Vec<usize>>,
}

impl DocInputs {
    /// Builds inputs from boxes only; `pairs` may be in any orientation.
    pub fn from_boxes(
        boxes: &[BoundingBox],
        width: f64,
        height: f64,
        pairs: &[(usize, usize)],
    ) -> Result<Self> {
        let nodes = boxes
            .iter()
            .map(|b| node_features(b, width, height))
            .collect::<Result<Vec<_>>>()?;
        let edges = pairs
            .iter()
            .map(|&(a, b)| edge_features(&boxes[a], &boxes[b], width, height))
            .collect::<Result<Vec<_>>>()?;
        let mut incident = vec![Vec::new(); boxes.len()];
        for (p, &(a, b)) in pairs.iter().enumerate() {
            incident[a].push(p);
            incident[b].push(p);
        }
        Ok(DocInputs {
            nodes,
            edges,
            pairs: pairs.to_vec(),
            incident,
        })
    }

    pub fn new(doc: &Document, nbhd: &Neighborhood) -> Result<Self> {
        let boxes: Vec<BoundingBox> = doc.boxes().copied().collect();
        Self::from_boxes(&boxes, doc.width, doc.height, nbhd.pairs())
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }
}

/// Gold label index per candidate pair: the graph's label on that pair, or
/// no-relation.
pub fn gold_labels(gold: &WordRelationGraph, pairs: &[(usize, usize)]) -> Vec<usize> {
    let map = gold.label_map();
    pairs
        .iter()
        .map(|&(a, b)| {
            map.get(&(a.min(b), a.max(b)))
                .map_or(WordRelationLabel::NoRelation.index(), |e| e.label.index())
        })
        .collect()
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

struct HeadCache {
    u: Vec<f64>,
    v: Vec<f64>,
    e: Vec<f64>,
    /// Attention weights aligned with `DocInputs::incident`.
    alpha: Vec<Vec<f64>>,
    out: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    heads: Vec<HeadCache>,
    embed: Vec<f64>,
    pub logits: Vec<[f64; WordRelationLabel::COUNT]>,
}

fn head_forward(inp: &DocInputs, hp: &HeadParams, hidden: usize, cfg: &ModelConfig) -> HeadCache {
    let n = inp.n_nodes();
    let np = inp.n_pairs();
    let mut u = vec![0.0; n * hidden];
    for i in 0..n {
        let x = &inp.nodes[i];
        for k in 0..hidden {
            u[i * hidden + k] = hp.node_b[k] + dot(&hp.node_w[k * NODE_DIM..(k + 1) * NODE_DIM], x);
        }
    }
    let mut v = vec![0.0; np * hidden];
    if cfg.edge_in_attention {
        for p in 0..np {
            let d = &inp.edges[p];
            for k in 0..hidden {
                v[p * hidden + k] =
                    hp.edge_b[k] + dot(&hp.edge_w[k * EDGE_DIM..(k + 1) * EDGE_DIM], d);
            }
        }
    }
    let (a_src, rest) = hp.attn.split_at(hidden);
    let (a_dst, a_edge) = rest.split_at(hidden);
    let e: Vec<f64> = inp
        .pairs
        .iter()
        .enumerate()
        .map(|(p, &(a, b))| {
            let mut s = dot(a_src, &u[a * hidden..(a + 1) * hidden])
                + dot(a_dst, &u[b * hidden..(b + 1) * hidden]);
            if cfg.edge_in_attention {
                s += dot(a_edge, &v[p * hidden..(p + 1) * hidden]);
            }
            s
        })
        .collect();
    let g: Vec<f64> = e.iter().map(|&x| leaky(x, cfg.leaky_slope)).collect();

    let mut alpha = Vec::with_capacity(n);
    let mut out = vec![0.0; n * hidden];
    for i in 0..n {
        let inc = &inp.incident[i];
        let row = &mut out[i * hidden..(i + 1) * hidden];
        if inc.is_empty() {
            for k in 0..hidden {
                row[k] = u[i * hidden + k].tanh();
            }
            alpha.push(Vec::new());
            continue;
        }
        let mx = inc.iter().map(|&p| g[p]).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = inc.iter().map(|&p| (g[p] - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        let a: Vec<f64> = w.iter().map(|x| x / s).collect();
        for (&p, &ap) in inc.iter().zip(&a) {
            let (pa, pb) = inp.pairs[p];
            let other = if pa == i { pb } else { pa };
            axpy(row, ap, &u[other * hidden..(other + 1) * hidden]);
            axpy(row, ap, &v[p * hidden..(p + 1) * hidden]);
        }
        row.iter_mut().for_each(|m| *m = m.tanh());
        alpha.push(a);
    }
    HeadCache { u, v, e, alpha, out }
}

pub fn forward_cached(inp: &DocInputs, params: &ModelParams, cfg: &ModelConfig) -> ForwardCache {
    let hidden = params.hidden;
    let n = inp.n_nodes();
    let heads: Vec<HeadCache> = params
        .heads
        .iter()
        .map(|hp| head_forward(inp, hp, hidden, cfg))
        .collect();
    let mut embed = vec![0.0; n * hidden];
    let scale = 1.0 / heads.len() as f64;
    for hc in &heads {
        axpy(&mut embed, scale, &hc.out);
    }
    let fan = ModelParams::classifier_inputs(hidden);
    let labels = params.cls_b.len();
    let logits = inp
        .pairs
        .iter()
        .enumerate()
        .map(|(p, &(a, b))| {
            let mut s = [0.0; WordRelationLabel::COUNT];
            for (z, out) in s.iter_mut().enumerate().take(labels) {
                let w = &params.cls_w[z * fan..(z + 1) * fan];
                let mut acc = params.cls_b[z]
                    + dot(&w[..hidden], &embed[a * hidden..(a + 1) * hidden])
                    + dot(&w[hidden..2 * hidden], &embed[b * hidden..(b + 1) * hidden]);
                if cfg.edge_at_classifier {
                    acc += dot(&w[2 * hidden..], &inp.edges[p]);
                }
                *out = acc;
            }
            s
        })
        .collect();
    ForwardCache {
        heads,
        embed,
        logits,
    }
}

pub fn forward_inputs(inp: &DocInputs, params: &ModelParams, cfg: &ModelConfig) -> ScoreTable {
    ScoreTable::from_logits(forward_cached(inp, params, cfg).logits)
}

/// Scores every candidate pair of a document.
pub fn forward(
    doc: &Document,
    nbhd: &Neighborhood,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<ScoreTable> {
    Ok(forward_inputs(&DocInputs::new(doc, nbhd)?, params, cfg))
}

/// Accumulates the gradient of `Σ_p dlogits[p] · logits[p]` into `grad`.
pub fn backward(
    inp: &DocInputs,
    params: &ModelParams,
    cfg: &ModelConfig,
    cache: &ForwardCache,
    dlogits: &[[f64; WordRelationLabel::COUNT]],
    grad: &mut ModelParams,
) {
    let hidden = params.hidden;
    let n = inp.n_nodes();
    let fan = ModelParams::classifier_inputs(hidden);
    let labels = params.cls_b.len();
    let embed = &cache.embed;

    let mut d_embed = vec![0.0; n * hidden];
    for (p, &(a, b)) in inp.pairs.iter().enumerate() {
        for (z, &dz) in dlogits[p].iter().enumerate().take(labels) {
            if dz == 0.0 {
                continue;
            }
            grad.cls_b[z] += dz;
            let gw = &mut grad.cls_w[z * fan..(z + 1) * fan];
            axpy(&mut gw[..hidden], dz, &embed[a * hidden..(a + 1) * hidden]);
            axpy(&mut gw[hidden..2 * hidden], dz, &embed[b * hidden..(b + 1) * hidden]);
            if cfg.edge_at_classifier {
                axpy(&mut gw[2 * hidden..], dz, &inp.edges[p]);
            }
            let w = &params.cls_w[z * fan..(z + 1) * fan];
            axpy(&mut d_embed[a * hidden..(a + 1) * hidden], dz, &w[..hidden]);
            axpy(&mut d_embed[b * hidden..(b + 1) * hidden], dz, &w[hidden..2 * hidden]);
        }
    }

    let scale = 1.0 / params.heads.len() as f64;
    for ((hp, hc), hg) in params.heads.iter().zip(&cache.heads).zip(grad.heads.iter_mut()) {
        let mut du = vec![0.0; n * hidden];
        let mut dv = vec![0.0; inp.n_pairs() * hidden];
        let mut dg = vec![0.0; inp.n_pairs()];
        for i in 0..n {
            let h_out = &hc.out[i * hidden..(i + 1) * hidden];
            let dm: Vec<f64> = (0..hidden)
                .map(|k| scale * d_embed[i * hidden + k] * (1.0 - h_out[k] * h_out[k]))
                .collect();
            let inc = &inp.incident[i];
            if inc.is_empty() {
                axpy(&mut du[i * hidden..(i + 1) * hidden], 1.0, &dm);
                continue;
            }
            let alpha = &hc.alpha[i];
            let mut d_alpha = Vec::with_capacity(inc.len());
            for (&p, &ap) in inc.iter().zip(alpha) {
                let (pa, pb) = inp.pairs[p];
                let other = if pa == i { pb } else { pa };
                let uo = &hc.u[other * hidden..(other + 1) * hidden];
                let vp = &hc.v[p * hidden..(p + 1) * hidden];
                d_alpha.push(dot(&dm, uo) + dot(&dm, vp));
                axpy(&mut du[other * hidden..(other + 1) * hidden], ap, &dm);
                if cfg.edge_in_attention {
                    axpy(&mut dv[p * hidden..(p + 1) * hidden], ap, &dm);
                }
            }
            let s: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            for ((&p, &ap), &da) in inc.iter().zip(alpha).zip(&d_alpha) {
                dg[p] += ap * (da - s);
            }
        }

        let (a_src, rest) = hp.attn.split_at(hidden);
        let (a_dst, a_edge) = rest.split_at(hidden);
        for (p, &(a, b)) in inp.pairs.iter().enumerate() {
            let de = dg[p] * leaky_grad(hc.e[p], cfg.leaky_slope);
            if de == 0.0 {
                continue;
            }
            let (ga_src, grest) = hg.attn.split_at_mut(hidden);
            let (ga_dst, ga_edge) = grest.split_at_mut(hidden);
            axpy(ga_src, de, &hc.u[a * hidden..(a + 1) * hidden]);
            axpy(ga_dst, de, &hc.u[b * hidden..(b + 1) * hidden]);
            axpy(&mut du[a * hidden..(a + 1) * hidden], de, a_src);
            axpy(&mut du[b * hidden..(b + 1) * hidden], de, a_dst);
            if cfg.edge_in_attention {
                axpy(ga_edge, de, &hc.v[p * hidden..(p + 1) * hidden]);
                axpy(&mut dv[p * hidden..(p + 1) * hidden], de, a_edge);
            }
        }

        for i in 0..n {
            let x = &inp.nodes[i];
            for k in 0..hidden {
                let g = du[i * hidden + k];
                hg.node_b[k] += g;
                axpy(&mut hg.node_w[k * NODE_DIM..(k + 1) * NODE_DIM], g, x);
            }
        }
        if cfg.edge_in_attention {
            for p in 0..inp.n_pairs() {
                let d = &inp.edges[p];
                for k in 0..hidden {
                    let g = dv[p * hidden + k];
                    hg.edge_b[k] += g;
                    axpy(&mut hg.edge_w[k * EDGE_DIM..(k + 1) * EDGE_DIM], g, d);
                }
            }
        }
    }
}

/// Summed cross-entropy over candidate pairs, with per-label weights.
/// Returns the loss and its gradient with respect to the logits.
pub fn cross_entropy(
    logits: &[[f64; WordRelationLabel::COUNT]],
    gold: &[usize],
    weights: &[f64; WordRelationLabel::COUNT],
) -> (f64, Vec<[f64; WordRelationLabel::COUNT]>) {
    let mut loss = 0.0;
    let grads = logits
        .iter()
        .zip(gold)
        .map(|(s, &y)| {
            let lp = log_softmax(s);
            let w = weights[y];
            loss -= w * lp[y];
            let mut g = lp.map(|v| w * v.exp());
            g[y] -= w;
            g
        })
        .collect();
    (loss, grads)
}

pub fn log_softmax(s: &[f64; WordRelationLabel::COUNT]) -> [f64; WordRelationLabel::COUNT] {
    let mx = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + s.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    s.map(|v| v - lse)
}

/// Loss and exact parameter gradient for one document.
pub fn loss_and_gradient(
    inp: &DocInputs,
    gold: &[usize],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> (f64, ModelParams) {
    let cache = forward_cached(inp, params, cfg);
    let (loss, dlogits) = cross_entropy(&cache.logits, gold, &cfg.label_weights());
    let mut grad = params.zeros_like();
    backward(inp, params, cfg, &cache, &dlogits, &mut grad);
    (loss, grad)
}

pub fn loss_only(inp: &DocInputs, gold: &[usize], params: &ModelParams, cfg: &ModelConfig) -> f64 {
    let cache = forward_cached(inp, params, cfg);
    cross_entropy(&cache.logits, gold, &cfg.label_weights()).0
}
