//! Best-first branch-and-bound over per-pair label domains.
//!
//! Every pair takes exactly one label, so a node is a vector of allowed-label
//! bitmasks. Bounds come from a Lagrangian relaxation of the coupling rows,
//! tightened by subgradient ascent and inherited by child nodes. Rows are
//! propagated to a fixpoint after each branching decision, removing labels
//! that would leave some row unsatisfiable.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WordRelationLabel as L;
use crate::ilp::problem::{IlpProblem, Sense, LABELS};

const EPS: f64 = 1e-9;
const FULL: u8 = (1 << LABELS) - 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpSolution {
    pub labels: Vec<L>,
    pub objective: f64,
    /// Branch-and-bound nodes expanded.
    pub nodes: usize,
    /// False when the time limit stopped the search before it closed.
    pub optimal: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub time_limit: Duration,
    /// Caps expanded nodes. Unlike the time limit, stopping here does not
    /// depend on machine speed, so results are reproducible.
    pub node_limit: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            time_limit: Duration::from_secs(10),
            node_limit: None,
        }
    }
}

/// A row with its coefficients grouped per pair and label.
pub(crate) struct CompiledRow {
    pub sense: Sense,
    pub rhs: f64,
    pub entries: Vec<(usize, [f64; LABELS])>,
}

pub(crate) struct Compiled {
    pub rows: Vec<CompiledRow>,
    /// Original row index of each compiled row; cuts follow the rows.
    pub origin: Vec<usize>,
    pub pair_rows: Vec<Vec<usize>>,
}

fn extremes(coef: &[f64; LABELS], mask: u8) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (z, &c) in coef.iter().enumerate() {
        if mask & (1 << z) != 0 {
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    (lo, hi)
}

impl CompiledRow {
    fn bounds(&self, masks: &[u8]) -> (f64, f64) {
        self.entries.iter().fold((0.0, 0.0), |(lo, hi), (p, coef)| {
            let (l, h) = extremes(coef, masks[*p]);
            (lo + l, hi + h)
        })
    }

    fn value(&self, labels: &[L]) -> f64 {
        self.entries
            .iter()
            .map(|(p, coef)| coef[labels[*p].index()])
            .sum()
    }

    fn satisfied_by(&self, value: f64) -> bool {
        match self.sense {
            Sense::Ge => value >= self.rhs - EPS,
            Sense::Le => value <= self.rhs + EPS,
            Sense::Eq => (value - self.rhs).abs() <= EPS,
        }
    }

    fn always_satisfied(&self) -> bool {
        let (lo, hi) = self.entries.iter().fold((0.0, 0.0), |(lo, hi), (_, coef)| {
            let (l, h) = extremes(coef, FULL);
            (lo + l, hi + h)
        });
        match self.sense {
            Sense::Ge => lo >= self.rhs - EPS,
            Sense::Le => hi <= self.rhs + EPS,
            Sense::Eq => (lo - self.rhs).abs() <= EPS && (hi - self.rhs).abs() <= EPS,
        }
    }
}

pub(crate) fn compile(problem: &IlpProblem) -> Compiled {
    let mut rows = Vec::new();
    let mut origin = Vec::new();
    for (k, row) in problem.rows.iter().chain(&problem.cuts).enumerate() {
        let mut entries: Vec<(usize, [f64; LABELS])> = Vec::new();
        let mut terms = row.terms.clone();
        terms.sort_by_key(|t| t.0);
        for (col, a) in terms {
            let (p, z) = (col / LABELS, col % LABELS);
            match entries.last_mut() {
                Some((q, coef)) if *q == p => coef[z] += a,
                _ => {
                    let mut coef = [0.0; LABELS];
                    coef[z] = a;
                    entries.push((p, coef));
                }
            }
        }
        let compiled = CompiledRow {
            sense: row.sense,
            rhs: row.rhs,
            entries,
        };
        if !compiled.always_satisfied() {
            rows.push(compiled);
            origin.push(k);
        }
    }
    let mut pair_rows = vec![Vec::new(); problem.n_pairs];
    for (r, row) in rows.iter().enumerate() {
        for (p, _) in &row.entries {
            pair_rows[*p].push(r);
        }
    }
    Compiled {
        rows,
        origin,
        pair_rows,
    }
}

/// Removes labels that cannot appear in any assignment satisfying the rows
/// in `queue` (and, transitively, rows touching changed pairs). Returns
/// false if some domain or row becomes infeasible.
fn propagate(c: &Compiled, masks: &mut [u8], mut queue: VecDeque<usize>) -> bool {
    let mut queued = vec![false; c.rows.len()];
    for &r in &queue {
        queued[r] = true;
    }
    while let Some(r) = queue.pop_front() {
        queued[r] = false;
        let row = &c.rows[r];
        let (lo, hi) = row.bounds(masks);
        let need_ge = matches!(row.sense, Sense::Ge | Sense::Eq);
        let need_le = matches!(row.sense, Sense::Le | Sense::Eq);
        if (need_ge && hi < row.rhs - EPS) || (need_le && lo > row.rhs + EPS) {
            return false;
        }
        for (p, coef) in &row.entries {
            let m = masks[*p];
            let (elo, ehi) = extremes(coef, m);
            let mut keep = m;
            for (z, &a) in coef.iter().enumerate() {
                if m & (1 << z) == 0 {
                    continue;
                }
                let too_small = need_ge && hi - ehi + a < row.rhs - EPS;
                let too_large = need_le && lo - elo + a > row.rhs + EPS;
                if too_small || too_large {
                    keep &= !(1 << z);
                }
            }
            if keep != m {
                if keep == 0 {
                    return false;
                }
                masks[*p] = keep;
                for &r2 in &c.pair_rows[*p] {
                    if !queued[r2] {
                        queued[r2] = true;
                        queue.push_back(r2);
                    }
                }
            }
        }
    }
    true
}

fn cheapest(problem: &IlpProblem, p: usize, mask: u8) -> (usize, f64) {
    let mut best = (LABELS, f64::INFINITY);
    for z in 0..LABELS {
        if mask & (1 << z) != 0 {
            let c = problem.costs[p * LABELS + z];
            if c < best.1 {
                best = (z, c);
            }
        }
    }
    best
}

fn min_masked(v: &[f64; LABELS], mask: u8) -> (usize, f64) {
    let mut best = (LABELS, f64::INFINITY);
    for (z, &c) in v.iter().enumerate() {
        if mask & (1 << z) != 0 && c < best.1 {
            best = (z, c);
        }
    }
    best
}

fn argmin_labels(problem: &IlpProblem, masks: &[u8]) -> Vec<usize> {
    (0..problem.n_pairs).map(|p| cheapest(problem, p, masks[p]).0).collect()
}

fn row_value(row: &CompiledRow, labels: &[usize]) -> f64 {
    row.entries.iter().map(|(p, coef)| coef[labels[*p]]).sum()
}

fn violated(c: &Compiled, labels: &[L]) -> Vec<usize> {
    c.rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.satisfied_by(r.value(labels)))
        .map(|(k, _)| k)
        .collect()
}

fn coef_of(row: &CompiledRow, p: usize) -> &[f64; LABELS] {
    let k = row
        .entries
        .binary_search_by_key(&p, |(q, _)| *q)
        .expect("pair listed in its row");
    &row.entries[k].1
}

/// A full labeling with its row values kept up to date.
struct State<'a> {
    c: &'a Compiled,
    labels: Vec<usize>,
    values: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(c: &'a Compiled, labels: Vec<usize>) -> Self {
        let values = c.rows.iter().map(|r| row_value(r, &labels)).collect();
        State { c, labels, values }
    }

    fn ok(&self, r: usize) -> bool {
        self.c.rows[r].satisfied_by(self.values[r])
    }

    fn set(&mut self, p: usize, z: usize) {
        let old = self.labels[p];
        self.labels[p] = z;
        for &r in &self.c.pair_rows[p] {
            let k = coef_of(&self.c.rows[r], p);
            self.values[r] += k[z] - k[old];
        }
    }

    /// Rows that `p -> z` would break minus rows it would fix.
    fn broken_by(&self, p: usize, z: usize) -> i64 {
        let cur = self.labels[p];
        let mut broken = 0i64;
        for &r in &self.c.pair_rows[p] {
            let row = &self.c.rows[r];
            let k = coef_of(row, p);
            let was = row.satisfied_by(self.values[r]);
            let now = row.satisfied_by(self.values[r] + k[z] - k[cur]);
            broken += i64::from(was && !now) - i64::from(!was && now);
        }
        broken
    }

    /// The flip within row `r` that moves it toward feasibility, breaking
    /// the fewest other rows and then costing the least under `cost`.
    fn best_fix(&self, r: usize, cost: &[f64], skip: Option<usize>) -> Option<(i64, f64, usize, usize)> {
        let row = &self.c.rows[r];
        let wants_up = match row.sense {
            Sense::Ge => true,
            Sense::Le => false,
            Sense::Eq => self.values[r] < row.rhs,
        };
        let mut best: Option<(i64, f64, usize, usize)> = None;
        for (p, coef) in &row.entries {
            if skip == Some(*p) {
                continue;
            }
            let cur = self.labels[*p];
            for (z, &a) in coef.iter().enumerate() {
                let improves = if wants_up { a > coef[cur] } else { a < coef[cur] };
                if !improves {
                    continue;
                }
                let broken = self.broken_by(*p, z);
                let delta = cost[p * LABELS + z] - cost[p * LABELS + cur];
                if best.is_none_or(|(b, d, _, _)| broken < b || (broken == b && delta < d)) {
                    best = Some((broken, delta, *p, z));
                }
            }
        }
        best
    }
}

/// Single-pair flips until every row holds, ranked by `cost`.
fn repair(problem: &IlpProblem, c: &Compiled, labels: Vec<usize>, cost: &[f64]) -> Option<Vec<usize>> {
    let mut s = State::new(c, labels);
    for _ in 0..(4 * problem.n_pairs + 16) {
        let Some(r) = (0..c.rows.len()).find(|&r| !s.ok(r)) else {
            return Some(s.labels);
        };
        let (_, _, p, z) = s.best_fix(r, cost, None)?;
        s.set(p, z);
    }
    None
}

/// First-improvement local search from a feasible labeling. A move sets one
/// pair to a cheaper label and then repairs up to a few broken rows with
/// flips elsewhere; it is kept only if the total cost drops.
fn improve(problem: &IlpProblem, c: &Compiled, labels: Vec<usize>) -> Vec<usize> {
    let cost = &problem.costs;
    let mut s = State::new(c, labels);
    for _ in 0..64 {
        let mut any = false;
        for p in 0..problem.n_pairs {
            let cur = s.labels[p];
            let mut order: Vec<usize> = (0..LABELS)
                .filter(|&z| cost[p * LABELS + z] < cost[p * LABELS + cur])
                .collect();
            order.sort_by(|&a, &b| cost[p * LABELS + a].total_cmp(&cost[p * LABELS + b]));
            for z in order {
                let mut undo = vec![(p, cur)];
                let mut delta = cost[p * LABELS + z] - cost[p * LABELS + cur];
                s.set(p, z);
                for _ in 0..4 {
                    let Some(&r) = c.pair_rows[p].iter().find(|&&r| !s.ok(r)) else {
                        break;
                    };
                    let Some((broken, d, q, y)) = s.best_fix(r, cost, Some(p)) else {
                        break;
                    };
                    if broken > 0 {
                        break;
                    }
                    undo.push((q, s.labels[q]));
                    delta += d;
                    s.set(q, y);
                }
                let feasible = undo
                    .iter()
                    .all(|&(q, _)| c.pair_rows[q].iter().all(|&r| s.ok(r)));
                if feasible && delta < -1e-12 {
                    any = true;
                    break;
                }
                for &(q, y) in undo.iter().rev() {
                    s.set(q, y);
                }
            }
        }
        if !any {
            break;
        }
    }
    s.labels
}

/// Greedy labels repaired by cheapest single-pair flips. Falls back to
/// labeling every pair header-question, which satisfies every row family the
/// decoder generates.
pub(crate) fn warm_start(problem: &IlpProblem, c: &Compiled) -> Option<Vec<L>> {
    let start = argmin_labels(problem, &vec![FULL; problem.n_pairs]);
    if let Some(labels) = repair(problem, c, start, &problem.costs) {
        let labels = improve(problem, c, labels);
        return Some(labels.into_iter().map(|z| L::ALL[z]).collect());
    }
    let fallback = vec![L::HeaderQuestion; problem.n_pairs];
    violated(c, &fallback).is_empty().then_some(fallback)
}

/// Lagrangian relaxation of every row except the one-label-per-pair choice.
/// For multipliers `mu` the relaxed problem separates per pair, and its
/// value is a lower bound on every feasible labeling inside the masks.
struct Relaxation<'a> {
    problem: &'a IlpProblem,
    c: &'a Compiled,
    /// +1 for `>=` and `=` rows, -1 for `<=` rows.
    dir: Vec<f64>,
}

struct Relaxed {
    bound: f64,
    mu: Vec<f64>,
    reduced: Vec<[f64; LABELS]>,
    labels: Vec<usize>,
}

impl<'a> Relaxation<'a> {
    fn new(problem: &'a IlpProblem, c: &'a Compiled) -> Self {
        let dir = c
            .rows
            .iter()
            .map(|r| if r.sense == Sense::Le { -1.0 } else { 1.0 })
            .collect();
        Relaxation { problem, c, dir }
    }

    fn evaluate(&self, mu: &[f64], masks: &[u8]) -> Relaxed {
        let mut reduced: Vec<[f64; LABELS]> = self
            .problem
            .costs
            .chunks_exact(LABELS)
            .map(|ch| ch.try_into().expect("chunk of LABELS"))
            .collect();
        let mut bound = 0.0;
        for (r, row) in self.c.rows.iter().enumerate() {
            let m = mu[r] * self.dir[r];
            if m == 0.0 {
                continue;
            }
            bound += m * row.rhs;
            for (p, coef) in &row.entries {
                for z in 0..LABELS {
                    reduced[*p][z] -= m * coef[z];
                }
            }
        }
        let labels = reduced
            .iter()
            .zip(masks)
            .map(|(rc, &m)| {
                let (z, v) = min_masked(rc, m);
                bound += v;
                z
            })
            .collect();
        Relaxed {
            bound,
            mu: mu.to_vec(),
            reduced,
            labels,
        }
    }

    /// Projected subgradient ascent with Polyak steps toward `target`.
    fn ascend(&self, masks: &[u8], mu0: &[f64], iters: usize, target: Option<f64>) -> Relaxed {
        let mut best = self.evaluate(mu0, masks);
        let mut cur_mu = mu0.to_vec();
        let mut cur_labels = best.labels.clone();
        let mut cur_bound = best.bound;
        let mut theta = 1.0;
        let mut stall = 0;
        let mut g = vec![0.0; self.c.rows.len()];
        for _ in 0..iters {
            if target.is_some_and(|t| best.bound >= t - EPS) || theta < 1e-3 {
                break;
            }
            let mut norm = 0.0;
            for (r, row) in self.c.rows.iter().enumerate() {
                let mut gr = self.dir[r] * (row.rhs - row_value(row, &cur_labels));
                if row.sense != Sense::Eq && cur_mu[r] <= 0.0 && gr < 0.0 {
                    gr = 0.0;
                }
                g[r] = gr;
                norm += gr * gr;
            }
            if norm < 1e-18 {
                break;
            }
            let gap = match target {
                Some(t) => (t - cur_bound).max(1e-6),
                None => 1.0 + 0.1 * cur_bound.abs(),
            };
            let step = theta * gap / norm;
            for (r, row) in self.c.rows.iter().enumerate() {
                cur_mu[r] += step * g[r];
                if row.sense != Sense::Eq {
                    cur_mu[r] = cur_mu[r].max(0.0);
                }
            }
            let next = self.evaluate(&cur_mu, masks);
            cur_bound = next.bound;
            cur_labels.clone_from(&next.labels);
            if next.bound > best.bound + 1e-12 {
                best = next;
                stall = 0;
            } else {
                stall += 1;
                if stall >= 4 {
                    theta /= 2.0;
                    stall = 0;
                }
            }
        }
        best
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    masks: Vec<u8>,
    mu: Rc<Vec<f64>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    /// Max-heap order: lowest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

const ROOT_ITERATIONS: usize = 400;
const NODE_ITERATIONS: usize = 20;
/// Local search runs on the root and then on every this-many nodes.
const IMPROVE_EVERY: usize = 8;
/// Nodes whose bound is within this of the incumbent cannot improve on it.
const PRUNE_TOL: f64 = 1e-10;

pub fn solve_branch_and_bound(problem: &IlpProblem, opts: &SolverOptions) -> Result<IlpSolution> {
    let start = Instant::now();
    let c = compile(problem);
    let mut root = vec![FULL; problem.n_pairs];
    if !propagate(&c, &mut root, (0..c.rows.len()).collect()) {
        let all_hq = vec![L::HeaderQuestion; problem.n_pairs];
        return Err(Error::Infeasible(
            violated(&c, &all_hq)
                .into_iter()
                .map(|r| c.origin[r])
                .filter(|&k| k < problem.rows.len())
                .collect(),
        ));
    }

    let mut incumbent: Option<(Vec<L>, f64)> = warm_start(problem, &c).map(|l| {
        let obj = problem.objective(&l);
        (l, obj)
    });
    let relax = Relaxation::new(problem, &c);

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        masks: root,
        mu: Rc::new(vec![0.0; c.rows.len()]),
    });
    let mut nodes = 0;
    let mut optimal = true;

    while let Some(mut node) = heap.pop() {
        let ub = incumbent.as_ref().map(|(_, b)| *b);
        if ub.is_some_and(|u| node.bound >= u - PRUNE_TOL) {
            continue;
        }
        if start.elapsed() >= opts.time_limit || opts.node_limit.is_some_and(|n| nodes >= n) {
            optimal = false;
            break;
        }
        nodes += 1;
        let iters = if node.depth == 0 { ROOT_ITERATIONS } else { NODE_ITERATIONS };
        let rel = relax.ascend(&node.masks, &node.mu, iters, ub);

        // Relaxed labels repaired into a feasible labeling, guided by
        // reduced costs, then polished.
        let flat: Vec<f64> = rel.reduced.iter().flatten().copied().collect();
        if let Some(labels) = repair(problem, &c, rel.labels.clone(), &flat) {
            let labels = if nodes % IMPROVE_EVERY == 1 {
                improve(problem, &c, labels)
            } else {
                labels
            };
            let labels: Vec<L> = labels.into_iter().map(|z| L::ALL[z]).collect();
            let obj = problem.objective(&labels);
            if incumbent.as_ref().is_none_or(|(_, b)| obj < *b - PRUNE_TOL) {
                incumbent = Some((labels, obj));
            }
        }
        let ub = incumbent.as_ref().map(|(_, b)| *b);
        if ub.is_some_and(|u| rel.bound >= u - PRUNE_TOL) {
            continue;
        }

        // Reduced-cost fixing: a label whose reduced cost alone lifts the
        // bound past the incumbent cannot be in a better labeling.
        let mut masks = std::mem::take(&mut node.masks);
        if let Some(u) = ub {
            let slack = u - rel.bound - PRUNE_TOL;
            let mut changed = VecDeque::new();
            for p in 0..problem.n_pairs {
                let rc = &rel.reduced[p];
                let lo = rc[rel.labels[p]];
                let mut keep = masks[p];
                for (z, &r) in rc.iter().enumerate() {
                    if keep & (1 << z) != 0 && r - lo > slack {
                        keep &= !(1 << z);
                    }
                }
                if keep != masks[p] {
                    masks[p] = keep;
                    changed.extend(c.pair_rows[p].iter().copied());
                }
            }
            if !changed.is_empty() && !propagate(&c, &mut masks, changed) {
                continue;
            }
        }

        let child_bound = |m: &[u8]| -> f64 {
            let mut b = rel.bound;
            for (p, &mp) in m.iter().enumerate() {
                if mp != FULL {
                    b += min_masked(&rel.reduced[p], mp).1 - rel.reduced[p][rel.labels[p]];
                }
            }
            b
        };
        let labels = &rel.labels;
        // Pairs in rows the relaxed labeling violates, or whose positive
        // multiplier sits on a slack row.
        let mut candidates: Vec<usize> = Vec::new();
        for (r, row) in c.rows.iter().enumerate() {
            let v = row_value(row, labels);
            let slack_row = rel.mu[r] > 0.0 && (v - row.rhs).abs() > EPS;
            if !row.satisfied_by(v) || slack_row {
                candidates.extend(row.entries.iter().map(|(p, _)| *p));
            }
        }
        if candidates.is_empty() {
            candidates = (0..problem.n_pairs).collect();
        }
        let mut pick: Option<(f64, usize)> = None;
        for &p in &candidates {
            let m = masks[p];
            if m.count_ones() < 2 {
                continue;
            }
            let (bz, bc) = min_masked(&rel.reduced[p], m);
            let (_, sc) = min_masked(&rel.reduced[p], m & !(1 << bz));
            let gap = sc - bc;
            if pick.is_none_or(|(g, q)| gap > g || (gap == g && p < q)) {
                pick = Some((gap, p));
            }
        }
        let Some((_, p)) = pick else {
            // Every pair is decided, so the relaxed labeling is the only
            // one left; it was offered to the incumbent by the repair step.
            continue;
        };
        let (bz, _) = min_masked(&rel.reduced[p], masks[p]);
        let mu = Rc::new(rel.mu.clone());
        for keep in [1u8 << bz, masks[p] & !(1 << bz)] {
            let mut child = masks.clone();
            child[p] = keep;
            if !propagate(&c, &mut child, c.pair_rows[p].iter().copied().collect()) {
                continue;
            }
            let b = child_bound(&child).max(rel.bound);
            if ub.is_some_and(|u| b >= u - PRUNE_TOL) {
                continue;
            }
            seq += 1;
            heap.push(Node {
                bound: b,
                depth: node.depth + 1,
                seq,
                masks: child,
                mu: Rc::clone(&mu),
            });
        }
    }

    let (labels, objective) = incumbent.ok_or_else(|| Error::Infeasible(Vec::new()))?;
    Ok(IlpSolution {
        labels,
        objective,
        nodes,
        optimal,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ilp::problem::{column, Family, Row};

    fn problem(costs: Vec<[f64; LABELS]>, rows: Vec<Row>) -> IlpProblem {
        IlpProblem {
            n_pairs: costs.len(),
            costs: costs.into_iter().flatten().collect(),
            rows,
            cuts: vec![],
        }
    }

    #[test]
    fn unconstrained_is_argmin() {
        let p = problem(vec![[3., 1., 2., 5., 5., 0.5], [0., 1., 1., 1., 1., 1.]], vec![]);
        let s = solve_branch_and_bound(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.labels, vec![L::NoRelation, L::QuestionAnswer]);
        assert!(s.optimal);
        assert!((s.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn forced_away_from_no_relation() {
        // A single pair that prefers no-relation but must carry a semantic label.
        let p = problem(
            vec![[4.0, 3.0, 0.5, 0.7, 2.0, 0.1]],
            vec![Row {
                terms: L::SEMANTIC.iter().map(|&z| (column(0, z), 1.0)).collect(),
                sense: Sense::Ge,
                rhs: 1.0,
                family: Family::C4,
            }],
        );
        let s = solve_branch_and_bound(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.labels, vec![L::SameEntity]);
    }

    #[test]
    fn infeasible_rows_are_reported() {
        let p = problem(
            vec![[0.0; LABELS]],
            vec![Row {
                terms: vec![(column(0, L::QuestionAnswer), 1.0)],
                sense: Sense::Ge,
                rhs: 2.0,
                family: Family::C1,
            }],
        );
        assert!(matches!(
            solve_branch_and_bound(&p, &SolverOptions::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn propagation_fixes_last_free_pair() {
        let rows = vec![Row {
            terms: vec![(column(0, L::SameEntity), 1.0), (column(1, L::SameEntity), 1.0)],
            sense: Sense::Ge,
            rhs: 1.0,
            family: Family::C4,
        }];
        let p = problem(vec![[0.0; LABELS]; 2], rows);
        let c = compile(&p);
        let mut masks = vec![FULL, 1 << L::NoRelation.index()];
        assert!(propagate(&c, &mut masks, VecDeque::from(vec![0])));
        assert_eq!(masks[0], 1 << L::SameEntity.index());
    }
}
