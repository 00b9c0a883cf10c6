//! Domain types shared by every stage of the pipeline: documents, words,
//! entity-relation graphs and word-relation graphs.
//!
//! Undirected edges are stored once, with `src < dst`. Directed edges keep
//! their orientation. [`EntityRelationGraph::canonicalize`] and
//! [`WordRelationGraph::canonicalize`] put a graph in sorted, duplicate-free
//! form; equality of canonical forms is graph equality.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type WordId = usize;
pub type EntityId = usize;

/// Pixel-space box, serialized as `[x_left, y_top, x_right, y_bottom]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_left: f64,
    pub y_top: f64,
    pub x_right: f64,
    pub y_bottom: f64,
}

impl BoundingBox {
    /// Builds a box from two corners in any order.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BoundingBox {
            x_left: x1.min(x2),
            y_top: y1.min(y2),
            x_right: x1.max(x2),
            y_bottom: y1.max(y2),
        }
    }

    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn height(&self) -> f64 {
        self.y_bottom - self.y_top
    }

    pub fn y_center(&self) -> f64 {
        0.5 * (self.y_top + self.y_bottom)
    }

    pub fn is_well_formed(&self) -> bool {
        self.x_left.is_finite()
            && self.y_top.is_finite()
            && self.x_right.is_finite()
            && self.y_bottom.is_finite()
            && self.x_left >= 0.0
            && self.y_top >= 0.0
            && self.x_left <= self.x_right
            && self.y_top <= self.y_bottom
    }

    pub fn fits_in(&self, width: f64, height: f64) -> bool {
        self.x_right <= width && self.y_bottom <= height
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        BoundingBox {
            x_left: self.x_left + dx,
            y_top: self.y_top + dy,
            x_right: self.x_right + dx,
            y_bottom: self.y_bottom + dy,
        }
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        BoundingBox {
            x_left: v[0],
            y_top: v[1],
            x_right: v[2],
            y_bottom: v[3],
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_left, b.y_top, b.x_right, b.y_bottom]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub id: WordId,
    /// Carried through for output only. Features and models never read it.
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub width: f64,
    pub height: f64,
    pub words: Vec<Word>,
    #[serde(default)]
    pub language: String,
}

impl Document {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn boxes(&self) -> impl Iterator<Item = &BoundingBox> {
        self.words.iter().map(|w| &w.bbox)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Question,
    Answer,
    /// FUNSD's "header"; also called a section.
    Header,
    Other,
}

impl EntityType {
    pub fn from_label(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "question" => Some(EntityType::Question),
            "answer" => Some(EntityType::Answer),
            "header" | "section" => Some(EntityType::Header),
            "other" => Some(EntityType::Other),
            _ => None,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityType::Question => "question",
            EntityType::Answer => "answer",
            EntityType::Header => "header",
            EntityType::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub kind: EntityType,
    /// Strictly increasing reading-order ids.
    pub word_ids: Vec<WordId>,
}

impl Entity {
    pub fn first_word(&self) -> WordId {
        self.word_ids[0]
    }

    pub fn last_word(&self) -> WordId {
        *self.word_ids.last().expect("entity has at least one word")
    }
}

/// Edge labels that know whether they are directed.
pub trait EdgeLabel: Copy + Ord + fmt::Debug {
    fn is_directed(self) -> bool;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityRelationLabel {
    QuestionAnswer,
    HeaderQuestion,
    ProximateV,
    ProximateH,
}

impl EdgeLabel for EntityRelationLabel {
    fn is_directed(self) -> bool {
        matches!(
            self,
            EntityRelationLabel::QuestionAnswer | EntityRelationLabel::HeaderQuestion
        )
    }
}

/// Word-level labels. The discriminant order is the label index used by the
/// scorer, and ties in argmax go to the lower index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordRelationLabel {
    QuestionAnswer = 0,
    HeaderQuestion = 1,
    ProximateV = 2,
    ProximateH = 3,
    SameEntity = 4,
    NoRelation = 5,
}

impl WordRelationLabel {
    /// Number of labels including [`WordRelationLabel::NoRelation`].
    pub const COUNT: usize = 6;

    /// All labels, in index order.
    pub const ALL: [WordRelationLabel; 6] = [
        WordRelationLabel::QuestionAnswer,
        WordRelationLabel::HeaderQuestion,
        WordRelationLabel::ProximateV,
        WordRelationLabel::ProximateH,
        WordRelationLabel::SameEntity,
        WordRelationLabel::NoRelation,
    ];

    /// The five labels that can appear in a stored graph.
    pub const REAL: [WordRelationLabel; 5] = [
        WordRelationLabel::QuestionAnswer,
        WordRelationLabel::HeaderQuestion,
        WordRelationLabel::ProximateV,
        WordRelationLabel::ProximateH,
        WordRelationLabel::SameEntity,
    ];

    /// Labels that determine entity membership or type.
    pub const SEMANTIC: [WordRelationLabel; 3] = [
        WordRelationLabel::QuestionAnswer,
        WordRelationLabel::SameEntity,
        WordRelationLabel::HeaderQuestion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_semantic(self) -> bool {
        Self::SEMANTIC.contains(&self)
    }

    pub fn from_entity_label(l: EntityRelationLabel) -> Self {
        match l {
            EntityRelationLabel::QuestionAnswer => WordRelationLabel::QuestionAnswer,
            EntityRelationLabel::HeaderQuestion => WordRelationLabel::HeaderQuestion,
            EntityRelationLabel::ProximateV => WordRelationLabel::ProximateV,
            EntityRelationLabel::ProximateH => WordRelationLabel::ProximateH,
        }
    }

    pub fn to_entity_label(self) -> Option<EntityRelationLabel> {
        match self {
            WordRelationLabel::QuestionAnswer => Some(EntityRelationLabel::QuestionAnswer),
            WordRelationLabel::HeaderQuestion => Some(EntityRelationLabel::HeaderQuestion),
            WordRelationLabel::ProximateV => Some(EntityRelationLabel::ProximateV),
            WordRelationLabel::ProximateH => Some(EntityRelationLabel::ProximateH),
            WordRelationLabel::SameEntity | WordRelationLabel::NoRelation => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WordRelationLabel::QuestionAnswer => "question_answer",
            WordRelationLabel::HeaderQuestion => "header_question",
            WordRelationLabel::ProximateV => "proximate_v",
            WordRelationLabel::ProximateH => "proximate_h",
            WordRelationLabel::SameEntity => "same_entity",
            WordRelationLabel::NoRelation => "no_relation",
        }
    }
}

impl EdgeLabel for WordRelationLabel {
    fn is_directed(self) -> bool {
        matches!(
            self,
            WordRelationLabel::QuestionAnswer | WordRelationLabel::HeaderQuestion
        )
    }
}

impl fmt::Display for WordRelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge<L> {
    pub src: usize,
    pub label: L,
    pub dst: usize,
}

impl<L: EdgeLabel> Edge<L> {
    pub fn new(src: usize, label: L, dst: usize) -> Self {
        Edge { src, label, dst }
    }

    /// Undirected edges oriented low to high; directed edges unchanged.
    pub fn oriented(self) -> Self {
        if !self.label.is_directed() && self.src > self.dst {
            Edge {
                src: self.dst,
                label: self.label,
                dst: self.src,
            }
        } else {
            self
        }
    }

    pub fn unordered_pair(&self) -> (usize, usize) {
        (self.src.min(self.dst), self.src.max(self.dst))
    }
}

/// Orients, sorts and deduplicates `edges`, rejecting self loops and pairs
/// that carry more than one label or direction.
pub fn canonicalize_edges<L: EdgeLabel>(edges: &[Edge<L>]) -> Result<Vec<Edge<L>>> {
    let mut out: Vec<Edge<L>> = edges.iter().map(|e| e.oriented()).collect();
    out.sort();
    out.dedup();
    let mut seen: BTreeMap<(usize, usize), Edge<L>> = BTreeMap::new();
    for e in &out {
        if e.src == e.dst {
            return Err(Error::MalformedGraph(format!(
                "self loop {:?} on node {}",
                e.label, e.src
            )));
        }
        if let Some(prev) = seen.insert(e.unordered_pair(), *e) {
            return Err(Error::MalformedGraph(format!(
                "pair ({}, {}) carries both {:?} and {:?}",
                e.src, e.dst, prev, e
            )));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRelationGraph {
    pub entities: Vec<Entity>,
    pub edges: Vec<Edge<EntityRelationLabel>>,
}

impl EntityRelationGraph {
    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn canonicalize(&self) -> Result<Self> {
        let mut entities = self.entities.clone();
        entities.sort_by_key(|e| e.id);
        let mut owner: BTreeMap<WordId, EntityId> = BTreeMap::new();
        for (k, e) in entities.iter().enumerate() {
            if k > 0 && entities[k - 1].id == e.id {
                return Err(Error::MalformedGraph(format!("duplicate entity id {}", e.id)));
            }
            if e.word_ids.is_empty() {
                return Err(Error::MalformedGraph(format!("entity {} has no words", e.id)));
            }
            if e.word_ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::MalformedGraph(format!(
                    "entity {} words not strictly increasing",
                    e.id
                )));
            }
            for &w in &e.word_ids {
                if let Some(other) = owner.insert(w, e.id) {
                    return Err(Error::MalformedGraph(format!(
                        "word {w} belongs to entities {other} and {}",
                        e.id
                    )));
                }
            }
        }
        let kind_of = |id: EntityId| -> Result<EntityType> {
            entities
                .binary_search_by_key(&id, |e| e.id)
                .map(|k| entities[k].kind)
                .map_err(|_| Error::MalformedGraph(format!("edge references unknown entity {id}")))
        };
        for e in &self.edges {
            let (s, d) = (kind_of(e.src)?, kind_of(e.dst)?);
            let ok = match e.label {
                EntityRelationLabel::QuestionAnswer => {
                    s == EntityType::Question && d == EntityType::Answer
                }
                EntityRelationLabel::HeaderQuestion => {
                    s == EntityType::Header && d == EntityType::Question
                }
                _ => true,
            };
            if !ok {
                return Err(Error::MalformedGraph(format!(
                    "{:?} edge {} -> {} joins {s} to {d}",
                    e.label, e.src, e.dst
                )));
            }
        }
        // Renumber by first word so ids are recoverable from the words alone.
        entities.sort_by_key(|e| e.first_word());
        let renumber: BTreeMap<EntityId, EntityId> = entities
            .iter()
            .enumerate()
            .map(|(k, e)| (e.id, k))
            .collect();
        for (k, e) in entities.iter_mut().enumerate() {
            e.id = k;
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| Edge::new(renumber[&e.src], e.label, renumber[&e.dst]))
            .collect();
        let edges = canonicalize_edges(&edges)?;
        Ok(EntityRelationGraph { entities, edges })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordRelationGraph {
    pub word_ids: Vec<WordId>,
    pub edges: Vec<Edge<WordRelationLabel>>,
}

impl WordRelationGraph {
    pub fn canonicalize(&self) -> Result<Self> {
        if let Some(e) = self
            .edges
            .iter()
            .find(|e| e.label == WordRelationLabel::NoRelation)
        {
            return Err(Error::MalformedGraph(format!(
                "no_relation edge ({}, {}) in a stored graph",
                e.src, e.dst
            )));
        }
        let mut word_ids = self.word_ids.clone();
        word_ids.sort_unstable();
        word_ids.dedup();
        let edges = canonicalize_edges(&self.edges)?;
        Ok(WordRelationGraph { word_ids, edges })
    }

    /// Label on the unordered pair `(a, b)`, with its stored orientation.
    pub fn label_map(&self) -> BTreeMap<(WordId, WordId), Edge<WordRelationLabel>> {
        self.edges.iter().map(|e| (e.unordered_pair(), *e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use WordRelationLabel::*;

    fn wrg(edges: Vec<Edge<WordRelationLabel>>) -> WordRelationGraph {
        WordRelationGraph {
            word_ids: (0..10).collect(),
            edges,
        }
    }

    #[test]
    fn undirected_edge_is_flipped() {
        let g = wrg(vec![Edge::new(5, ProximateH, 2)]).canonicalize().unwrap();
        assert_eq!(g.edges, vec![Edge::new(2, ProximateH, 5)]);
    }

    #[test]
    fn directed_edge_keeps_orientation() {
        let g = wrg(vec![Edge::new(5, QuestionAnswer, 2)]).canonicalize().unwrap();
        assert_eq!(g.edges, vec![Edge::new(5, QuestionAnswer, 2)]);
    }

    #[test]
    fn canonical_graph_is_unchanged() {
        let g = wrg(vec![Edge::new(0, SameEntity, 1), Edge::new(1, QuestionAnswer, 2)])
            .canonicalize()
            .unwrap();
        assert_eq!(g.canonicalize().unwrap(), g);
    }

    #[test]
    fn two_labels_on_one_pair_is_malformed() {
        let err = wrg(vec![Edge::new(1, QuestionAnswer, 2), Edge::new(1, SameEntity, 2)])
            .canonicalize()
            .unwrap_err();
        assert!(matches!(err, Error::MalformedGraph(_)));
    }

    #[test]
    fn no_relation_is_rejected() {
        assert!(wrg(vec![Edge::new(1, NoRelation, 2)]).canonicalize().is_err());
    }

    #[test]
    fn erg_checks_edge_types() {
        let erg = EntityRelationGraph {
            entities: vec![
                Entity { id: 0, kind: EntityType::Answer, word_ids: vec![0] },
                Entity { id: 1, kind: EntityType::Question, word_ids: vec![1] },
            ],
            edges: vec![Edge::new(0, EntityRelationLabel::QuestionAnswer, 1)],
        };
        assert!(erg.canonicalize().is_err());
    }

    #[test]
    fn erg_ids_follow_first_words() {
        let erg = EntityRelationGraph {
            entities: vec![
                Entity { id: 7, kind: EntityType::Answer, word_ids: vec![2, 3] },
                Entity { id: 3, kind: EntityType::Question, word_ids: vec![0, 1] },
            ],
            edges: vec![Edge::new(3, EntityRelationLabel::QuestionAnswer, 7)],
        };
        let c = erg.canonicalize().unwrap();
        assert_eq!(c.entities[0].word_ids, vec![0, 1]);
        assert_eq!(c.entities[0].id, 0);
        assert_eq!(c.entities[1].id, 1);
        assert_eq!(c.edges, vec![Edge::new(0, EntityRelationLabel::QuestionAnswer, 1)]);
        assert_eq!(c.canonicalize().unwrap(), c);
    }

    #[test]
    fn box_serializes_as_array() {
        let b = BoundingBox::from_corners(3.0, 4.0, 1.0, 2.0);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,2.0,3.0,4.0]");
    }

    fn arb_edge() -> impl Strategy<Value = Edge<WordRelationLabel>> {
        (0usize..12, 0usize..5, 0usize..12).prop_map(|(a, l, b)| {
            Edge::new(a, WordRelationLabel::from_index(l).unwrap(), b)
        })
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent_and_order_free(
            edges in proptest::collection::vec(arb_edge(), 0..20),
            seed in any::<u64>(),
        ) {
            let g = wrg(edges.clone());
            if let Ok(c) = g.canonicalize() {
                prop_assert_eq!(c.canonicalize().unwrap(), c.clone());
                let mut shuffled = edges;
                let n = shuffled.len();
                if n > 1 {
                    shuffled.rotate_left((seed as usize) % n);
                    shuffled.reverse();
                }
                prop_assert_eq!(wrg(shuffled).canonicalize().unwrap(), c);
            }
        }
    }
}
