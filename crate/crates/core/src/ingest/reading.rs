//! Reading order: group words into lines, order lines top to bottom and
//! words left to right.
//!
//! Two words share a line when the vertical center of each lies inside the
//! other's vertical span. Lines are the connected components of that
//! relation, so the grouping does not depend on input order.

use std::cmp::Ordering;

use crate::graph::{BoundingBox, Word};

fn shares_line(a: &BoundingBox, b: &BoundingBox) -> bool {
    let (ca, cb) = (a.y_center(), b.y_center());
    ca >= b.y_top && ca <= b.y_bottom && cb >= a.y_top && cb <= a.y_bottom
}

fn word_key_cmp(a: &Word, b: &Word) -> Ordering {
    a.bbox
        .x_left
        .total_cmp(&b.bbox.x_left)
        .then(a.bbox.y_top.total_cmp(&b.bbox.y_top))
        .then(a.bbox.x_right.total_cmp(&b.bbox.x_right))
        .then(a.bbox.y_bottom.total_cmp(&b.bbox.y_bottom))
        .then_with(|| a.text.cmp(&b.text))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Groups word indices into lines, returned in reading order with each
/// line's words in reading order.
fn group_lines(words: &[Word]) -> Vec<Vec<usize>> {
    let n = words.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if shares_line(&words[i].bbox, &words[j].bbox) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        by_root.entry(r).or_default().push(i);
    }
    let mut lines: Vec<Vec<usize>> = by_root.into_values().collect();
    for line in &mut lines {
        line.sort_by(|&a, &b| word_key_cmp(&words[a], &words[b]));
    }
    let mean_top = |line: &Vec<usize>| {
        line.iter().map(|&i| words[i].bbox.y_top).sum::<f64>() / line.len() as f64
    };
    let mut keyed: Vec<(f64, Vec<usize>)> = lines.into_iter().map(|l| (mean_top(&l), l)).collect();
    keyed.sort_by(|(ma, la), (mb, lb)| {
        ma.total_cmp(mb).then_with(|| {
            la.iter()
                .zip(lb.iter())
                .map(|(&a, &b)| word_key_cmp(&words[a], &words[b]))
                .find(|o| o.is_ne())
                .unwrap_or_else(|| la.len().cmp(&lb.len()))
        })
    });
    keyed.into_iter().map(|(_, l)| l).collect()
}

/// Input indices of `words` listed in reading order.
pub fn reading_order_permutation(words: &[Word]) -> Vec<usize> {
    group_lines(words).into_iter().flatten().collect()
}

/// Sorts words into reading order and renumbers their ids densely.
pub fn sort_reading_order(words: &[Word]) -> Vec<Word> {
    reading_order_permutation(words)
        .into_iter()
        .enumerate()
        .map(|(new_id, old)| Word {
            id: new_id,
            ..words[old].clone()
        })
        .collect()
}

/// Line number of every word, for words already in reading order.
pub fn line_index(words: &[Word]) -> Vec<usize> {
    let mut out = vec![0; words.len()];
    for (k, line) in group_lines(words).iter().enumerate() {
        for &i in line {
            out[i] = k;
        }
    }
    out
}
