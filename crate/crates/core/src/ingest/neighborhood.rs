use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{WordId, WordRelationGraph};

/// Candidate word pairs: each word may relate to the next `k` words in
/// reading order. Every unordered pair appears once, as `(i, j)` with
/// `i < j`, and pairs are indexed densely in `(i, j)` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    k: usize,
    n_words: usize,
    pairs: Vec<(WordId, WordId)>,
    index: HashMap<(WordId, WordId), usize>,
    incident: Vec<Vec<usize>>,
}

pub const DEFAULT_K: usize = 10;

pub fn build_neighborhood(n_words: usize, k: usize) -> Result<Neighborhood> {
    if k < 1 {
        return Err(Error::Config("neighborhood size K must be at least 1".into()));
    }
    let mut pairs = Vec::new();
    for i in 0..n_words {
        for j in (i + 1)..n_words.min(i + k + 1) {
            pairs.push((i, j));
        }
    }
    let index = pairs.iter().enumerate().map(|(p, &ij)| (ij, p)).collect();
    let mut incident = vec![Vec::new(); n_words];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        incident[i].push(p);
        incident[j].push(p);
    }
    Ok(Neighborhood {
        k,
        n_words,
        pairs,
        index,
        incident,
    })
}

/// How many gold edges fall inside a neighborhood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: usize,
    pub total: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.covered as f64 / self.total as f64
        }
    }

    pub fn missing(&self) -> usize {
        self.total - self.covered
    }
}

impl std::ops::Add for Coverage {
    type Output = Coverage;
    fn add(self, o: Coverage) -> Coverage {
        Coverage {
            covered: self.covered + o.covered,
            total: self.total + o.total,
        }
    }
}

impl Neighborhood {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(WordId, WordId)] {
        &self.pairs
    }

    /// Dense index of the unordered pair `{a, b}`, if it is a candidate.
    pub fn pair_index(&self, a: WordId, b: WordId) -> Option<usize> {
        self.index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Words that follow `i` in its candidate list.
    pub fn candidates(&self, i: WordId) -> impl Iterator<Item = WordId> + '_ {
        (i + 1)..self.n_words.min(i + self.k + 1)
    }

    /// Pair indices touching word `i`, in either role.
    pub fn incident(&self, i: WordId) -> &[usize] {
        &self.incident[i]
    }

    pub fn coverage(&self, gold: &WordRelationGraph) -> Coverage {
        let covered = gold
            .edges
            .iter()
            .filter(|e| self.pair_index(e.src, e.dst).is_some())
            .count();
        Coverage {
            covered,
            total: gold.edges.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, WordRelationLabel};

    #[test]
    fn five_words_k2() {
        let n = build_neighborhood(5, 2).unwrap();
        assert_eq!(
            n.pairs(),
            &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]
        );
        assert_eq!(n.pair_index(3, 1), Some(3));
        assert_eq!(n.pair_index(0, 3), None);
        assert_eq!(n.candidates(3).collect::<Vec<_>>(), [4]);
        assert_eq!(n.incident(2), &[1, 2, 4, 5]);
    }

    #[test]
    fn large_k_is_complete_graph() {
        for n in 0..8 {
            let nb = build_neighborhood(n, n.max(1)).unwrap();
            assert_eq!(nb.len(), n * n.saturating_sub(1) / 2);
        }
    }

    #[test]
    fn zero_k_is_rejected() {
        assert!(matches!(build_neighborhood(3, 0), Err(Error::Config(_))));
    }

    #[test]
    fn candidates_are_capped() {
        let nb = build_neighborhood(30, 4).unwrap();
        for i in 0..30 {
            assert!(nb.candidates(i).count() <= 4);
            assert!(nb.candidates(i).all(|j| j > i));
        }
    }

    #[test]
    fn coverage_counts_far_edges() {
        let g = WordRelationGraph {
            word_ids: (0..6).collect(),
            edges: vec![
                Edge::new(0, WordRelationLabel::SameEntity, 1),
                Edge::new(5, WordRelationLabel::QuestionAnswer, 0),
            ],
        };
        let c = build_neighborhood(6, 2).unwrap().coverage(&g);
        assert_eq!(c, Coverage { covered: 1, total: 2 });
        assert_eq!(build_neighborhood(6, 5).unwrap().coverage(&g).fraction(), 1.0);
    }
}
