//! The 0-1 program: one binary column per (candidate pair, label), costs
//! from negative log-probabilities, and linear rows generated from the
//! structural constraints on word-relation graphs.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::graph::WordRelationLabel as L;
use crate::ingest::Neighborhood;

pub const LABELS: usize = L::COUNT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// Which constraint family generated a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Every word has at least one real relation.
    C1,
    /// A question-answer edge constrains the pair that follows it.
    C2,
    /// Exactly one label per pair.
    C3,
    /// Every word has at least one semantic relation.
    C4,
    /// Same-entity links need further semantic support.
    C5,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Shape of the QA-continuation rows. For a pair `(i, j)` labeled
/// question-answer:
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C2Form {
    /// `(i, j+1)` must be proximate_h or same_entity.
    Literal,
    /// `(j, j+1)` must be proximate_h or same_entity.
    AnswerSuccessor,
    /// `(j, j+1)` must not be question-answer or header-question.
    #[default]
    AnswerSuccessorRelaxed,
}

/// Shape of the chain-continuation rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C5Form {
    /// Same-entity on `(i-1, i)` requires a semantic label on `(i, i+1)`.
    Literal,
    /// Same-entity on `(a, b)` requires another semantic label on some
    /// other candidate pair touching `a` or `b`.
    #[default]
    PairSupport,
}

/// Switches for the constraint families. The single-label rows are always
/// present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintConfig {
    pub c1: bool,
    pub c2: bool,
    pub c4: bool,
    pub c5: bool,
    pub c2_form: C2Form,
    pub c5_form: C5Form,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            c1: true,
            c2: true,
            c4: true,
            c5: true,
            c2_form: C2Form::default(),
            c5_form: C5Form::default(),
        }
    }
}

impl ConstraintConfig {
    pub fn none() -> Self {
        ConstraintConfig {
            c1: false,
            c2: false,
            c4: false,
            c5: false,
            ..Default::default()
        }
    }

    pub fn without(mut self, family: Family) -> Self {
        match family {
            Family::C1 => self.c1 = false,
            Family::C2 => self.c2 = false,
            Family::C4 => self.c4 = false,
            Family::C5 => self.c5 = false,
            Family::C3 => {}
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// `(column, coefficient)`; columns are `pair * LABELS + label`.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub family: Family,
}

impl Row {
    pub fn lhs(&self, x: &[bool]) -> f64 {
        self.terms
            .iter()
            .filter(|(c, _)| x[*c])
            .map(|(_, a)| a)
            .sum()
    }

    pub fn is_satisfied(&self, x: &[bool]) -> bool {
        let lhs = self.lhs(x);
        const EPS: f64 = 1e-9;
        match self.sense {
            Sense::Le => lhs <= self.rhs + EPS,
            Sense::Ge => lhs >= self.rhs - EPS,
            Sense::Eq => (lhs - self.rhs).abs() <= EPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpProblem {
    pub n_pairs: usize,
    /// Cost per column, `pair * LABELS + label`.
    pub costs: Vec<f64>,
    pub rows: Vec<Row>,
    /// Inequalities implied by `rows`. They cut off no feasible labeling and
    /// only tighten the solver's bounds.
    #[serde(default)]
    pub cuts: Vec<Row>,
}

pub fn column(pair: usize, label: L) -> usize {
    pair * LABELS + label.index()
}

impl IlpProblem {
    pub fn n_columns(&self) -> usize {
        self.n_pairs * LABELS
    }

    pub fn cost(&self, pair: usize, label: L) -> f64 {
        self.costs[column(pair, label)]
    }

    /// Objective of a one-label-per-pair assignment.
    pub fn objective(&self, labels: &[L]) -> f64 {
        labels
            .iter()
            .enumerate()
            .map(|(p, &z)| self.cost(p, z))
            .sum()
    }

    pub fn indicator(&self, labels: &[L]) -> Vec<bool> {
        let mut x = vec![false; self.n_columns()];
        for (p, &z) in labels.iter().enumerate() {
            x[column(p, z)] = true;
        }
        x
    }

    /// Indices of rows violated by a one-label-per-pair assignment.
    pub fn violated_rows(&self, labels: &[L]) -> Vec<usize> {
        let x = self.indicator(labels);
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_satisfied(&x))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn count_rows(&self, family: Family) -> usize {
        self.rows.iter().filter(|r| r.family == family).count()
    }

    /// Writes the problem in CPLEX LP text format.
    pub fn write_lp<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let var = |c: usize| format!("u_{}_{}", c / LABELS, L::ALL[c % LABELS].name());
        writeln!(out, "\\ word-relation decoding problem")?;
        writeln!(out, "Minimize")?;
        write!(out, " obj:")?;
        for (c, &w) in self.costs.iter().enumerate() {
            write!(out, " {} {} {}", if w < 0.0 { "-" } else { "+" }, w.abs(), var(c))?;
        }
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for (k, r) in self.rows.iter().enumerate() {
            write!(out, " {}_{k}:", r.family)?;
            for &(c, a) in &r.terms {
                write!(out, " {} {} {}", if a < 0.0 { "-" } else { "+" }, a.abs(), var(c))?;
            }
            let op = match r.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            writeln!(out, " {op} {}", r.rhs)?;
        }
        writeln!(out, "Binary")?;
        for c in 0..self.n_columns() {
            writeln!(out, " {}", var(c))?;
        }
        writeln!(out, "End")
    }
}

fn sum_terms(pair: usize, labels: &[L], coef: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    labels.iter().map(move |&z| (column(pair, z), coef))
}

/// Constraint rows for a neighborhood. They depend only on the candidate
/// structure, not on scores.
pub fn constraint_rows(nbhd: &Neighborhood, cfg: &ConstraintConfig) -> Vec<Row> {
    let mut rows = Vec::new();

    for p in 0..nbhd.len() {
        rows.push(Row {
            terms: sum_terms(p, &L::ALL, 1.0).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
            family: Family::C3,
        });
    }

    let mut degree_rows = |labels: &[L], family: Family| {
        for i in 0..nbhd.n_words() {
            let inc = nbhd.incident(i);
            if inc.is_empty() {
                continue;
            }
            rows.push(Row {
                terms: inc.iter().flat_map(|&p| sum_terms(p, labels, 1.0)).collect(),
                sense: Sense::Ge,
                rhs: 1.0,
                family,
            });
        }
    };
    if cfg.c1 {
        degree_rows(&L::REAL, Family::C1);
    }
    if cfg.c4 {
        degree_rows(&L::SEMANTIC, Family::C4);
    }

    if cfg.c2 {
        for (p, &(i, j)) in nbhd.pairs().iter().enumerate() {
            let (next, allowed): (_, &[L]) = match cfg.c2_form {
                C2Form::Literal => (nbhd.pair_index(i, j + 1), &[L::ProximateH, L::SameEntity]),
                C2Form::AnswerSuccessor => {
                    (nbhd.pair_index(j, j + 1), &[L::ProximateH, L::SameEntity])
                }
                C2Form::AnswerSuccessorRelaxed => (
                    nbhd.pair_index(j, j + 1),
                    &[L::ProximateH, L::SameEntity, L::ProximateV, L::NoRelation],
                ),
            };
            if j + 1 >= nbhd.n_words() {
                continue;
            }
            let Some(q) = next else { continue };
            let mut terms: Vec<_> = sum_terms(q, allowed, 1.0).collect();
            terms.push((column(p, L::QuestionAnswer), -1.0));
            rows.push(Row {
                terms,
                sense: Sense::Ge,
                rhs: 0.0,
                family: Family::C2,
            });
        }
    }

    if cfg.c5 {
        match cfg.c5_form {
            C5Form::Literal => {
                for i in 1..nbhd.n_words().saturating_sub(1) {
                    let (Some(prev), Some(next)) =
                        (nbhd.pair_index(i - 1, i), nbhd.pair_index(i, i + 1))
                    else {
                        continue;
                    };
                    let mut terms: Vec<_> = sum_terms(
                        next,
                        &[L::HeaderQuestion, L::SameEntity, L::QuestionAnswer],
                        1.0,
                    )
                    .collect();
                    terms.push((column(prev, L::SameEntity), -1.0));
                    rows.push(Row {
                        terms,
                        sense: Sense::Ge,
                        rhs: 0.0,
                        family: Family::C5,
                    });
                }
            }
            C5Form::PairSupport => {
                for (p, &(a, b)) in nbhd.pairs().iter().enumerate() {
                    let mut others: Vec<usize> = nbhd
                        .incident(a)
                        .iter()
                        .chain(nbhd.incident(b))
                        .copied()
                        .filter(|&q| q != p)
                        .collect();
                    others.sort_unstable();
                    others.dedup();
                    let mut terms: Vec<_> = others
                        .iter()
                        .flat_map(|&q| sum_terms(q, &L::SEMANTIC, 1.0))
                        .collect();
                    terms.push((column(p, L::SameEntity), -1.0));
                    rows.push(Row {
                        terms,
                        sense: Sense::Ge,
                        rhs: 0.0,
                        family: Family::C5,
                    });
                }
            }
        }
    }

    rows
}

/// Pair-cover inequalities. Both words of a pair need a semantic edge, and a
/// same-entity edge needs a second semantic edge beside it, so at least two
/// semantic edges touch the pair unless the pair itself is question-answer
/// or header-question. Only implied when both of those row families are on.
pub fn implied_rows(nbhd: &Neighborhood, cfg: &ConstraintConfig) -> Vec<Row> {
    if !(cfg.c4 && cfg.c5 && cfg.c5_form == C5Form::PairSupport) {
        return Vec::new();
    }
    nbhd.pairs()
        .iter()
        .enumerate()
        .map(|(p, &(a, b))| {
            let mut touching: Vec<usize> = nbhd.incident(a).iter().chain(nbhd.incident(b)).copied().collect();
            touching.sort_unstable();
            touching.dedup();
            let mut terms: Vec<_> = touching
                .iter()
                .flat_map(|&q| sum_terms(q, &L::SEMANTIC, 1.0))
                .collect();
            terms.extend(sum_terms(p, &[L::QuestionAnswer, L::HeaderQuestion], 1.0));
            Row {
                terms,
                sense: Sense::Ge,
                rhs: 2.0,
                family: Family::C5,
            }
        })
        .collect()
}
