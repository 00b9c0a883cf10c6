//! Layout-derived proximate relations between entities.
//!
//! * Horizontal: an entity links to the closest question or header that
//!   starts on its last line, to the right of its last word.
//! * Vertical: an entity links to the leftmost entity starting on the first
//!   line below its last line, unless that entity is an answer or already
//!   related to it or to one of its parents.
//!
//! An entity's line is the line of its first word. A pair of entities never
//! receives a proximate edge if any edge already joins them.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{
    Document, Edge, EdgeLabel, EntityId, EntityRelationGraph, EntityRelationLabel, EntityType,
};
use crate::ingest::reading::line_index;

struct Span {
    id: EntityId,
    kind: EntityType,
    first: usize,
    last: usize,
    first_line: usize,
    last_line: usize,
    first_x: f64,
}

pub fn augment_proximate(erg: &EntityRelationGraph, doc: &Document) -> EntityRelationGraph {
    let lines = line_index(&doc.words);
    let mut spans: Vec<Span> = erg
        .entities
        .iter()
        .filter(|e| !e.word_ids.is_empty())
        .map(|e| Span {
            id: e.id,
            kind: e.kind,
            first: e.first_word(),
            last: e.last_word(),
            first_line: lines[e.first_word()],
            last_line: lines[e.last_word()],
            first_x: doc.words[e.first_word()].bbox.x_left,
        })
        .collect();
    spans.sort_by_key(|s| s.id);

    let mut related: BTreeSet<(EntityId, EntityId)> = erg
        .edges
        .iter()
        .map(|e| e.unordered_pair())
        .collect();
    let mut parents: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
    for e in erg.edges.iter().filter(|e| e.label.is_directed()) {
        parents.entry(e.dst).or_default().push(e.src);
    }
    let key = |a: EntityId, b: EntityId| (a.min(b), a.max(b));
    let leftmost = |cands: Vec<&Span>| -> Option<EntityId> {
        cands
            .into_iter()
            .min_by(|x, y| x.first_x.total_cmp(&y.first_x).then(x.id.cmp(&y.id)))
            .map(|s| s.id)
    };

    let mut edges = erg.edges.clone();

    for a in &spans {
        let right = spans
            .iter()
            .filter(|b| {
                b.id != a.id
                    && matches!(b.kind, EntityType::Question | EntityType::Header)
                    && b.first_line == a.last_line
                    && b.first > a.last
            })
            .collect();
        if let Some(b) = leftmost(right) {
            if related.insert(key(a.id, b)) {
                edges.push(Edge::new(a.id, EntityRelationLabel::ProximateH, b).oriented());
            }
        }
    }

    for a in &spans {
        let Some(next_line) = spans
            .iter()
            .filter(|b| b.first_line > a.last_line)
            .map(|b| b.first_line)
            .min()
        else {
            continue;
        };
        let below = spans.iter().filter(|b| b.first_line == next_line).collect();
        let Some(b) = leftmost(below) else { continue };
        let b_kind = spans.iter().find(|s| s.id == b).map(|s| s.kind);
        if b_kind == Some(EntityType::Answer) || related.contains(&key(a.id, b)) {
            continue;
        }
        let parent_related = parents
            .get(&b)
            .is_some_and(|ps| ps.iter().any(|&p| p == a.id || related.contains(&key(a.id, p))));
        if parent_related {
            continue;
        }
        related.insert(key(a.id, b));
        edges.push(Edge::new(a.id, EntityRelationLabel::ProximateV, b).oriented());
    }

    edges.sort();
    edges.dedup();
    EntityRelationGraph {
        entities: erg.entities.clone(),
        edges,
    }
}
