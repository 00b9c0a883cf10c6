//! Conversion between entity-relation and word-relation graphs, and
//! constraint checks on word-relation graphs.
//!
//! Word-level anchors of each entity-level edge:
//!
//! | label           | word edge                  |
//! |-----------------|----------------------------|
//! | question-answer | last(Q) -> first(A)        |
//! | header-question | first(H) -> first(Q)       |
//! | proximate_v     | first(A) - first(B)        |
//! | proximate_h     | last(A) - first(B)         |
//!
//! For the undirected labels `A` is the entity whose first word comes first.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    Edge, EdgeLabel, Entity, EntityId, EntityRelationGraph, EntityRelationLabel as R,
    EntityType, WordId, WordRelationGraph, WordRelationLabel as L,
};
use crate::ilp::{constraint_rows, ConstraintConfig, Family, IlpProblem};
use crate::ingest::Neighborhood;

/// Word endpoints of an entity-level edge. `a` and `b` are ordered so that
/// `a` is the source (directed) or the entity that comes first.
fn anchors(label: R, a: &Entity, b: &Entity) -> (WordId, WordId) {
    match label {
        R::QuestionAnswer => (a.last_word(), b.first_word()),
        R::HeaderQuestion => (a.first_word(), b.first_word()),
        R::ProximateV => (a.first_word(), b.first_word()),
        R::ProximateH => (a.last_word(), b.first_word()),
    }
}

/// Orders an edge's endpoints for [`anchors`].
fn roles<'a>(label: R, src: &'a Entity, dst: &'a Entity) -> (&'a Entity, &'a Entity) {
    if label.is_directed() || src.first_word() < dst.first_word() {
        (src, dst)
    } else {
        (dst, src)
    }
}

pub fn erg_to_wrg(erg: &EntityRelationGraph) -> Result<WordRelationGraph> {
    let by_id: BTreeMap<EntityId, &Entity> = erg.entities.iter().map(|e| (e.id, e)).collect();
    let mut word_ids = Vec::new();
    let mut edges = Vec::new();
    for e in &erg.entities {
        if e.word_ids.is_empty() {
            return Err(Error::MalformedGraph(format!("entity {} has no words", e.id)));
        }
        word_ids.extend_from_slice(&e.word_ids);
        for w in e.word_ids.windows(2) {
            edges.push(Edge::new(w[0], L::SameEntity, w[1]));
        }
    }
    for e in &erg.edges {
        let get = |id| {
            by_id.get(&id).copied().ok_or_else(|| {
                Error::MalformedGraph(format!("edge references unknown entity {id}"))
            })
        };
        let (a, b) = roles(e.label, get(e.src)?, get(e.dst)?);
        let (u, v) = anchors(e.label, a, b);
        edges.push(Edge::new(u, L::from_entity_label(e.label), v));
    }
    WordRelationGraph { word_ids, edges }.canonicalize()
}

/// How [`wrg_to_erg_with`] treats graphs that are not exact images of an
/// entity-relation graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversionMode {
    /// Any inconsistency is an error.
    #[default]
    Strict,
    /// Best effort for scoring unconstrained predictions: branching
    /// same-entity links are cut (the nearest partner is kept), chains with
    /// no type or conflicting types are dropped with their edges, and edges
    /// that land off their anchor words are still mapped.
    Lenient,
}

/// Entities are maximal same-entity chains; types come from incident
/// question-answer and header-question edges.
pub fn wrg_to_erg(wrg: &WordRelationGraph) -> Result<EntityRelationGraph> {
    wrg_to_erg_with(wrg, ConversionMode::Strict)
}

pub fn wrg_to_erg_with(wrg: &WordRelationGraph, mode: ConversionMode) -> Result<EntityRelationGraph> {
    let strict = mode == ConversionMode::Strict;
    let wrg = if strict {
        wrg.canonicalize()?
    } else {
        lenient_edges(wrg)
    };
    let mut words: BTreeSet<WordId> = wrg.word_ids.iter().copied().collect();
    for e in &wrg.edges {
        words.insert(e.src);
        words.insert(e.dst);
    }

    // Same-entity partners on each side.
    let mut right: BTreeMap<WordId, WordId> = BTreeMap::new();
    let mut left: BTreeMap<WordId, WordId> = BTreeMap::new();
    let mut se: Vec<(WordId, WordId)> = wrg
        .edges
        .iter()
        .filter(|e| e.label == L::SameEntity)
        .map(|e| e.unordered_pair())
        .collect();
    se.sort_by_key(|&(a, b)| (b - a, a));
    for (a, b) in se {
        let clash = right.contains_key(&a) || left.contains_key(&b);
        if clash {
            if strict {
                let w = if right.contains_key(&a) { a } else { b };
                return Err(Error::MalformedGraph(format!(
                    "same-entity chain branches at word {w}"
                )));
            }
            continue;
        }
        right.insert(a, b);
        left.insert(b, a);
    }

    let mut chain_of: BTreeMap<WordId, usize> = BTreeMap::new();
    let mut chains: Vec<Vec<WordId>> = Vec::new();
    for &w in &words {
        if left.contains_key(&w) {
            continue;
        }
        let mut chain = vec![w];
        let mut cur = w;
        while let Some(&nxt) = right.get(&cur) {
            chain.push(nxt);
            cur = nxt;
        }
        for &x in &chain {
            chain_of.insert(x, chains.len());
        }
        chains.push(chain);
    }

    // Type evidence per chain, with the edges that produced it.
    let mut evidence: Vec<BTreeMap<EntityType, Vec<Edge<L>>>> = vec![BTreeMap::new(); chains.len()];
    for e in &wrg.edges {
        let (s, d) = match e.label {
            L::QuestionAnswer => (EntityType::Question, EntityType::Answer),
            L::HeaderQuestion => (EntityType::Header, EntityType::Question),
            _ => continue,
        };
        evidence[chain_of[&e.src]].entry(s).or_default().push(*e);
        evidence[chain_of[&e.dst]].entry(d).or_default().push(*e);
    }
    let mut kinds: Vec<Option<EntityType>> = Vec::with_capacity(chains.len());
    for (c, ev) in evidence.iter().enumerate() {
        match ev.len() {
            1 => kinds.push(ev.keys().next().copied()),
            0 if strict => {
                return Err(Error::MalformedGraph(format!(
                    "chain starting at word {} has no question-answer or header-question edge",
                    chains[c][0]
                )))
            }
            _ if strict => {
                let listed: Vec<String> = ev
                    .iter()
                    .map(|(k, es)| format!("{k} from {es:?}"))
                    .collect();
                return Err(Error::TypeConflict(format!(
                    "chain starting at word {}: {}",
                    chains[c][0],
                    listed.join("; ")
                )));
            }
            _ => kinds.push(None),
        }
    }

    // Chains become entities in first-word order, which is chain order.
    let mut entity_of_chain: Vec<Option<EntityId>> = vec![None; chains.len()];
    let mut entities = Vec::new();
    for (c, chain) in chains.iter().enumerate() {
        if let Some(kind) = kinds[c] {
            entity_of_chain[c] = Some(entities.len());
            entities.push(Entity {
                id: entities.len(),
                kind,
                word_ids: chain.clone(),
            });
        }
    }

    let mut edges = Vec::new();
    let mut taken: BTreeSet<(EntityId, EntityId)> = BTreeSet::new();
    let mut ordered: Vec<&Edge<L>> = wrg.edges.iter().filter(|e| e.label != L::SameEntity).collect();
    // Lenient mode keeps the first label per entity pair, semantic first.
    ordered.sort_by_key(|e| (e.label, e.src, e.dst));
    for e in ordered {
        let label = e.label.to_entity_label().expect("no same-entity or no-relation here");
        let (cs, cd) = (chain_of[&e.src], chain_of[&e.dst]);
        let (Some(s), Some(d)) = (entity_of_chain[cs], entity_of_chain[cd]) else {
            continue;
        };
        if s == d {
            if strict {
                return Err(Error::MalformedGraph(format!(
                    "{} edge ({}, {}) stays inside one entity",
                    e.label, e.src, e.dst
                )));
            }
            continue;
        }
        let edge = Edge::new(s, label, d).oriented();
        if strict {
            let (a, b) = roles(label, &entities[edge.src], &entities[edge.dst]);
            let (u, v) = anchors(label, a, b);
            let expected = Edge::new(u, e.label, v).oriented();
            if expected != *e {
                return Err(Error::MalformedGraph(format!(
                    "{} edge ({}, {}) does not sit on its entity anchors ({u}, {v})",
                    e.label, e.src, e.dst
                )));
            }
        } else if !taken.insert(edge.unordered_pair()) {
            continue;
        }
        edges.push(edge);
    }
    EntityRelationGraph { entities, edges }.canonicalize()
}

/// Drops the later of two labels on one word pair.
fn lenient_edges(wrg: &WordRelationGraph) -> WordRelationGraph {
    let mut seen = BTreeSet::new();
    let mut sorted: Vec<Edge<L>> = wrg
        .edges
        .iter()
        .filter(|e| e.label != L::NoRelation && e.src != e.dst)
        .map(|e| e.oriented())
        .collect();
    sorted.sort_by_key(|e| (e.label, e.src, e.dst));
    let mut edges: Vec<Edge<L>> = sorted
        .into_iter()
        .filter(|e| seen.insert(e.unordered_pair()))
        .collect();
    edges.sort();
    WordRelationGraph {
        word_ids: wrg.word_ids.clone(),
        edges,
    }
}

/// Violations per constraint family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    pub c4: usize,
    pub c5: usize,
}

impl ViolationCounts {
    pub fn total(&self) -> usize {
        self.c1 + self.c2 + self.c3 + self.c4 + self.c5
    }

    fn bump(&mut self, f: Family) {
        match f {
            Family::C1 => self.c1 += 1,
            Family::C2 => self.c2 += 1,
            Family::C3 => self.c3 += 1,
            Family::C4 => self.c4 += 1,
            Family::C5 => self.c5 += 1,
        }
    }
}

impl std::ops::Add for ViolationCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ViolationCounts {
            c1: self.c1 + o.c1,
            c2: self.c2 + o.c2,
            c3: self.c3 + o.c3,
            c4: self.c4 + o.c4,
            c5: self.c5 + o.c5,
        }
    }
}

/// Counts violated rows of every family under the default constraint forms.
pub fn verify_constraints(wrg: &WordRelationGraph, nbhd: &Neighborhood) -> ViolationCounts {
    verify_constraints_with(wrg, nbhd, &ConstraintConfig::default())
}

/// Reads the graph as one label per candidate pair (no-relation where it has
/// no edge) and evaluates the decoding rows on it. Single-label violations
/// are candidate pairs that carry more than one edge. Edges outside the
/// neighborhood are not seen by any row.
pub fn verify_constraints_with(
    wrg: &WordRelationGraph,
    nbhd: &Neighborhood,
    cfg: &ConstraintConfig,
) -> ViolationCounts {
    let mut labels = vec![L::NoRelation; nbhd.len()];
    let mut multiplicity = vec![0usize; nbhd.len()];
    let distinct: BTreeSet<Edge<L>> = wrg.edges.iter().map(|e| e.oriented()).collect();
    for e in &distinct {
        if e.label == L::NoRelation {
            continue;
        }
        if let Some(p) = nbhd.pair_index(e.src, e.dst) {
            labels[p] = e.label;
            multiplicity[p] += 1;
        }
    }
    let mut counts = ViolationCounts {
        c3: multiplicity.iter().filter(|&&m| m > 1).count(),
        ..Default::default()
    };
    let problem = IlpProblem {
        n_pairs: nbhd.len(),
        costs: vec![0.0; nbhd.len() * L::COUNT],
        rows: constraint_rows(nbhd, cfg),
        cuts: Vec::new(),
    };
    for r in problem.violated_rows(&labels) {
        let family = problem.rows[r].family;
        if family != Family::C3 {
            counts.bump(family);
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_neighborhood;

    fn ent(id: usize, kind: EntityType, words: &[usize]) -> Entity {
        Entity {
            id,
            kind,
            word_ids: words.to_vec(),
        }
    }

    fn wrg(edges: Vec<Edge<L>>, n: usize) -> WordRelationGraph {
        WordRelationGraph {
            word_ids: (0..n).collect(),
            edges,
        }
    }

    #[test]
    fn question_answer_example() {
        let erg = EntityRelationGraph {
            entities: vec![
                ent(0, EntityType::Question, &[0, 1]),
                ent(1, EntityType::Answer, &[2]),
            ],
            edges: vec![Edge::new(0, R::QuestionAnswer, 1)],
        };
        let w = erg_to_wrg(&erg).unwrap();
        assert_eq!(
            w.edges,
            vec![Edge::new(0, L::SameEntity, 1), Edge::new(1, L::QuestionAnswer, 2)]
        );
        assert_eq!(wrg_to_erg(&w).unwrap(), erg.canonicalize().unwrap());
    }

    #[test]
    fn single_word_header() {
        let erg = EntityRelationGraph {
            entities: vec![
                ent(0, EntityType::Header, &[0]),
                ent(1, EntityType::Question, &[1]),
            ],
            edges: vec![Edge::new(0, R::HeaderQuestion, 1)],
        };
        let w = erg_to_wrg(&erg).unwrap();
        assert_eq!(w.edges, vec![Edge::new(0, L::HeaderQuestion, 1)]);
        assert_eq!(wrg_to_erg(&w).unwrap(), erg);
    }

    #[test]
    fn proximate_anchors_round_trip() {
        // Q0 = [0, 1] -> A = [2]; Q1 = [3, 4] -> A = [5];
        // proximate_h Q0-Q1 (last(Q0)=1 - first(Q1)=3);
        // Q2 = [6] -> A = [7]; proximate_v Q0-Q2 (0 - 6).
        let erg = EntityRelationGraph {
            entities: vec![
                ent(0, EntityType::Question, &[0, 1]),
                ent(1, EntityType::Answer, &[2]),
                ent(2, EntityType::Question, &[3, 4]),
                ent(3, EntityType::Answer, &[5]),
                ent(4, EntityType::Question, &[6]),
                ent(5, EntityType::Answer, &[7]),
            ],
            edges: vec![
                Edge::new(0, R::QuestionAnswer, 1),
                Edge::new(2, R::QuestionAnswer, 3),
                Edge::new(4, R::QuestionAnswer, 5),
                Edge::new(2, R::ProximateH, 0),
                Edge::new(0, R::ProximateV, 4),
            ],
        };
        let w = erg_to_wrg(&erg).unwrap();
        assert!(w.edges.contains(&Edge::new(1, L::ProximateH, 3)));
        assert!(w.edges.contains(&Edge::new(0, L::ProximateV, 6)));
        let n_words = 8;
        let expected_edges = (n_words - 6) + erg.edges.len();
        assert_eq!(w.edges.len(), expected_edges);
        assert_eq!(wrg_to_erg(&w).unwrap(), erg.canonicalize().unwrap());
    }

    #[test]
    fn isolated_same_entity_pair_is_rejected() {
        let w = wrg(vec![Edge::new(0, L::SameEntity, 1)], 2);
        assert!(matches!(wrg_to_erg(&w), Err(Error::MalformedGraph(_))));
        let lenient = wrg_to_erg_with(&w, ConversionMode::Lenient).unwrap();
        assert!(lenient.entities.is_empty());
    }

    #[test]
    fn branching_chain_is_rejected() {
        let w = wrg(
            vec![
                Edge::new(0, L::SameEntity, 1),
                Edge::new(0, L::SameEntity, 2),
                Edge::new(2, L::QuestionAnswer, 3),
            ],
            4,
        );
        assert!(matches!(wrg_to_erg(&w), Err(Error::MalformedGraph(_))));
        let lenient = wrg_to_erg_with(&w, ConversionMode::Lenient).unwrap();
        // The nearer partner stays; word 2 becomes its own question.
        assert_eq!(lenient.entities.len(), 2);
        assert_eq!(lenient.entities[0].word_ids, vec![2]);
    }

    #[test]
    fn question_and_header_conflict() {
        let w = wrg(
            vec![Edge::new(0, L::QuestionAnswer, 1), Edge::new(0, L::HeaderQuestion, 2)],
            3,
        );
        assert!(matches!(wrg_to_erg(&w), Err(Error::TypeConflict(_))));
        // The conflicting chain goes with its edges; its partners keep their types.
        let lenient = wrg_to_erg_with(&w, ConversionMode::Lenient).unwrap();
        assert_eq!(lenient.entities.len(), 2);
        assert!(lenient.edges.is_empty());
    }

    #[test]
    fn typing_ignores_edge_order() {
        let mut edges = vec![
            Edge::new(0, L::SameEntity, 1),
            Edge::new(1, L::QuestionAnswer, 2),
            Edge::new(3, L::HeaderQuestion, 4),
            Edge::new(4, L::QuestionAnswer, 5),
        ];
        let a = wrg_to_erg(&wrg(edges.clone(), 6)).unwrap();
        edges.reverse();
        assert_eq!(wrg_to_erg(&wrg(edges, 6)).unwrap(), a);
    }

    #[test]
    fn gold_like_graph_has_no_violations() {
        // "Name: John Smith"
        let erg = EntityRelationGraph {
            entities: vec![
                ent(0, EntityType::Question, &[0]),
                ent(1, EntityType::Answer, &[1, 2]),
            ],
            edges: vec![Edge::new(0, R::QuestionAnswer, 1)],
        };
        let w = erg_to_wrg(&erg).unwrap();
        let nbhd = build_neighborhood(3, 10).unwrap();
        assert_eq!(verify_constraints(&w, &nbhd), ViolationCounts::default());
    }

    #[test]
    fn counts_each_family() {
        let nbhd = build_neighborhood(3, 2).unwrap();
        // Nothing predicted: every word misses C1 and C4.
        let empty = wrg(vec![], 3);
        let v = verify_constraints(&empty, &nbhd);
        assert_eq!((v.c1, v.c4, v.c2, v.c3), (3, 3, 0, 0));
        // Two labels on one candidate pair.
        let dup = wrg(vec![Edge::new(0, L::QuestionAnswer, 1), Edge::new(0, L::SameEntity, 1)], 3);
        assert_eq!(verify_constraints(&dup, &nbhd).c3, 1);
        // A lone same-entity pair has no support.
        let lone = wrg(vec![Edge::new(0, L::SameEntity, 1)], 3);
        assert_eq!(verify_constraints(&lone, &nbhd).c5, 1);
    }
}
