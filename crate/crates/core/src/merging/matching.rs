use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::merging::state::TokenState;
use crate::tensor::{cosine_of_normalized, normalize_f64, Tensor};

/// A candidate merge: token `src` (from A) into token `dst` (from B).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteMatch {
    pub partition_a: Vec<usize>,
    pub partition_b: Vec<usize>,
    /// Best B partner for every A token, in `partition_a` order.
    pub best: Vec<Edge>,
    /// The kept edges, highest similarity first.
    pub selected: Vec<Edge>,
}

impl BipartiteMatch {
    pub fn empty() -> Self {
        Self {
            partition_a: Vec::new(),
            partition_b: Vec::new(),
            best: Vec::new(),
            selected: Vec::new(),
        }
    }
}

/// Splits the unprotected tokens alternately: even positions of the
/// unprotected subsequence go to A, odd positions to B. With fewer than two
/// unprotected tokens both sets are empty.
pub fn partition_alternating(state: &TokenState) -> (Vec<usize>, Vec<usize>) {
    let free = state.unprotected_indices();
    if free.len() < 2 {
        return (Vec::new(), Vec::new());
    }
    let a = free.iter().step_by(2).copied().collect();
    let b = free.iter().skip(1).step_by(2).copied().collect();
    (a, b)
}

/// Descending score, then ascending source, then ascending destination.
pub fn edge_order(x: &Edge, y: &Edge) -> Ordering {
    y.score
        .total_cmp(&x.score)
        .then(x.src.cmp(&y.src))
        .then(x.dst.cmp(&y.dst))
}

/// Links each A token to its most similar B token by key cosine similarity
/// and keeps the `r` strongest links.
///
/// Ties on a row go to the lowest B index; ties between rows go to the lower
/// A index.
pub fn bipartite_soft_match(
    keys: &Tensor,
    partition_a: &[usize],
    partition_b: &[usize],
    r: usize,
) -> Result<BipartiteMatch> {
    let (rows, _) = keys.matrix_dims()?;
    if let Some(&bad) = partition_a.iter().chain(partition_b).find(|&&i| i >= rows) {
        return Err(Error::Shape(format!("token {bad} out of range for {rows} keys")));
    }
    if r == 0 || partition_a.is_empty() || partition_b.is_empty() {
        return Ok(BipartiteMatch {
            partition_a: partition_a.to_vec(),
            partition_b: partition_b.to_vec(),
            best: Vec::new(),
            selected: Vec::new(),
        });
    }

    let unit_b: Vec<Vec<f64>> = partition_b.iter().map(|&j| normalize_f64(keys.row(j))).collect();
    let best: Vec<Edge> = partition_a
        .iter()
        .map(|&i| {
            let unit_a = normalize_f64(keys.row(i));
            let mut edge = Edge {
                src: i,
                dst: partition_b[0],
                score: f64::NEG_INFINITY,
            };
            for (&j, ub) in partition_b.iter().zip(&unit_b) {
                let s = cosine_of_normalized(&unit_a, ub);
                if s > edge.score {
                    edge = Edge { src: i, dst: j, score: s };
                }
            }
            edge
        })
        .collect();

    let mut ranked = best.clone();
    ranked.sort_by(edge_order);
    ranked.truncate(r.min(ranked.len()));
    Ok(BipartiteMatch {
        partition_a: partition_a.to_vec(),
        partition_b: partition_b.to_vec(),
        best,
        selected: ranked,
    })
}
