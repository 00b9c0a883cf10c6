//! Constrained decoding: build the per-document 0-1 program from a score
//! table, solve it exactly, and read the word-relation graph back out.

mod bnb;
mod brute;
mod problem;

pub use bnb::{solve_branch_and_bound, IlpSolution, SolverOptions};
pub use brute::{brute_force, BRUTE_FORCE_LIMIT};
pub use problem::{
    column, constraint_rows, implied_rows, C2Form, C5Form, ConstraintConfig, Family, IlpProblem, Row, Sense,
    LABELS,
};

use crate::error::Result;
use crate::gnn::ScoreTable;
use crate::graph::{Edge, WordRelationGraph, WordRelationLabel};
use crate::ingest::Neighborhood;

/// Costs are negative log-probabilities, so the minimum-cost feasible
/// labeling is the most probable graph that satisfies the rows.
pub fn build_ilp(scores: &ScoreTable, nbhd: &Neighborhood, cfg: &ConstraintConfig) -> IlpProblem {
    assert_eq!(scores.len(), nbhd.len(), "score table does not match neighborhood");
    let costs = scores
        .log_probs()
        .into_iter()
        .flat_map(|lp| lp.map(|v| -v))
        .collect();
    IlpProblem {
        n_pairs: nbhd.len(),
        costs,
        rows: constraint_rows(nbhd, cfg),
        cuts: implied_rows(nbhd, cfg),
    }
}

/// Turns one label per candidate pair into a canonical graph. Directed
/// labels run from the earlier word to the later one.
pub fn labels_to_graph(labels: &[WordRelationLabel], nbhd: &Neighborhood) -> Result<WordRelationGraph> {
    let edges = labels
        .iter()
        .zip(nbhd.pairs())
        .filter(|(z, _)| **z != WordRelationLabel::NoRelation)
        .map(|(&z, &(i, j))| Edge::new(i, z, j))
        .collect();
    WordRelationGraph {
        word_ids: (0..nbhd.n_words()).collect(),
        edges,
    }
    .canonicalize()
}

pub fn decode(sol: &IlpSolution, nbhd: &Neighborhood) -> Result<WordRelationGraph> {
    labels_to_graph(&sol.labels, nbhd)
}

/// Scores a document, then solves and decodes its program.
pub fn decode_scores(
    scores: &ScoreTable,
    nbhd: &Neighborhood,
    cfg: &ConstraintConfig,
    opts: &SolverOptions,
) -> Result<(WordRelationGraph, IlpSolution)> {
    let problem = build_ilp(scores, nbhd, cfg);
    let sol = solve_branch_and_bound(&problem, opts)?;
    Ok((decode(&sol, nbhd)?, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_neighborhood;
    use WordRelationLabel as L;

    #[test]
    fn smallest_instance_shape() {
        let nbhd = build_neighborhood(2, 1).unwrap();
        let scores = ScoreTable::from_logits(vec![[0.0; LABELS]]);
        let p = build_ilp(&scores, &nbhd, &ConstraintConfig::default());
        assert_eq!(p.n_columns(), 6);
        assert_eq!(p.count_rows(Family::C3), 1);
        assert_eq!(p.count_rows(Family::C1), 2);
        assert_eq!(p.count_rows(Family::C4), 2);
        assert_eq!(p.count_rows(Family::C2), 0);
        let literal = ConstraintConfig {
            c5_form: C5Form::Literal,
            ..Default::default()
        };
        assert_eq!(build_ilp(&scores, &nbhd, &literal).count_rows(Family::C5), 0);
    }

    #[test]
    fn uniform_scores_give_some_feasible_graph() {
        let nbhd = build_neighborhood(6, 3).unwrap();
        let scores = ScoreTable::from_logits(vec![[0.0; LABELS]; nbhd.len()]);
        let p = build_ilp(&scores, &nbhd, &ConstraintConfig::default());
        let sol = solve_branch_and_bound(&p, &SolverOptions::default()).unwrap();
        assert!(p.violated_rows(&sol.labels).is_empty());
        let expected = nbhd.len() as f64 * (LABELS as f64).ln();
        assert!((sol.objective - expected).abs() < 1e-9);
    }

    #[test]
    fn costs_are_negative_log_probabilities() {
        let nbhd = build_neighborhood(2, 1).unwrap();
        let scores = ScoreTable::from_logits(vec![[1.0, 0.0, 0.0, 0.0, 0.0, 2.0]]);
        let p = build_ilp(&scores, &nbhd, &ConstraintConfig::none());
        let z: f64 = [1.0f64, 0.0, 0.0, 0.0, 0.0, 2.0].iter().map(|v| v.exp()).sum();
        assert!((p.cost(0, L::NoRelation) - (z.ln() - 2.0)).abs() < 1e-12);
        assert!((p.cost(0, L::QuestionAnswer) - (z.ln() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn decode_drops_no_relation() {
        let nbhd = build_neighborhood(3, 2).unwrap();
        let g = labels_to_graph(&[L::NoRelation, L::NoRelation, L::NoRelation], &nbhd).unwrap();
        assert!(g.edges.is_empty());
        let g = labels_to_graph(&[L::SameEntity, L::NoRelation, L::QuestionAnswer], &nbhd).unwrap();
        assert_eq!(
            g.edges,
            vec![Edge::new(0, L::SameEntity, 1), Edge::new(1, L::QuestionAnswer, 2)]
        );
    }

    #[test]
    fn lp_dump_lists_every_row() {
        let nbhd = build_neighborhood(3, 2).unwrap();
        let scores = ScoreTable::from_logits(vec![[0.0; LABELS]; nbhd.len()]);
        let p = build_ilp(&scores, &nbhd, &ConstraintConfig::default());
        let mut buf = Vec::new();
        p.write_lp(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("\\"));
        assert!(text.contains("Subject To"));
        assert_eq!(text.lines().filter(|l| l.contains(">=") || l.contains(" = ")).count(), p.rows.len());
        assert!(text.trim_end().ends_with("End"));
    }
}
