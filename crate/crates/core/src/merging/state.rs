use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The live token sequence of one layer: features, per-token sizes, and the
/// original patch indices each token stands for.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenState {
    pub features: Tensor,
    pub sizes: Vec<u32>,
    pub trace: Vec<Vec<u32>>,
    /// Per-token flag; protected tokens never take part in reduction.
    pub protected: Vec<bool>,
}

impl TokenState {
    /// Fresh state where token `i` is original patch `i` with size 1.
    pub fn initial(features: Tensor, protected: &[usize]) -> Result<Self> {
        let (s, _) = features.matrix_dims()?;
        let origins = (0..s as u32).collect();
        Self::with_origins(features, origins, protected)
    }

    /// Fresh state whose token `i` is original patch `origins[i]`.
    pub fn with_origins(features: Tensor, origins: Vec<u32>, protected: &[usize]) -> Result<Self> {
        let (s, _) = features.matrix_dims()?;
        if origins.len() != s {
            return Err(Error::Trace(format!(
                "{} origins for {s} tokens",
                origins.len()
            )));
        }
        let mut mask = vec![false; s];
        for &p in protected {
            *mask
                .get_mut(p)
                .ok_or_else(|| Error::Trace(format!("protected index {p} out of range")))? = true;
        }
        let state = Self {
            features,
            sizes: vec![1; s],
            trace: origins.into_iter().map(|o| vec![o]).collect(),
            protected: mask,
        };
        state.check_invariants()?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn dim(&self) -> usize {
        *self.features.dims().last().unwrap()
    }

    pub fn protected_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.protected[i]).collect()
    }

    pub fn unprotected_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.protected[i]).collect()
    }

    pub fn protected_count(&self) -> usize {
        self.protected.iter().filter(|&&p| p).count()
    }

    pub fn total_size(&self) -> u64 {
        self.sizes.iter().map(|&s| s as u64).sum()
    }

    /// Checks per-token bookkeeping: sizes ≥ 1, trace length equals size,
    /// traces pairwise disjoint, and row counts agree.
    pub fn check_invariants(&self) -> Result<()> {
        let (rows, _) = self.features.matrix_dims()?;
        if rows != self.sizes.len() || rows != self.trace.len() || rows != self.protected.len() {
            return Err(Error::Trace(format!(
                "row count {rows} vs sizes {} / trace {} / protected {}",
                self.sizes.len(),
                self.trace.len(),
                self.protected.len()
            )));
        }
        let mut seen = HashSet::new();
        for (i, (t, &n)) in self.trace.iter().zip(&self.sizes).enumerate() {
            if n == 0 {
                return Err(Error::Trace(format!("token {i} has size 0")));
            }
            if t.len() != n as usize {
                return Err(Error::Trace(format!(
                    "token {i} has size {n} but trace of {}",
                    t.len()
                )));
            }
            for &o in t {
                if !seen.insert(o) {
                    return Err(Error::Trace(format!("patch {o} appears in two tokens")));
                }
            }
        }
        Ok(())
    }

    /// Original patch indices still represented by some token, ascending.
    pub fn covered_patches(&self) -> Vec<u32> {
        let mut all: Vec<u32> = self.trace.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Concatenates states along the token axis.
    pub fn concat(parts: &[TokenState]) -> Result<TokenState> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of zero states".into()))?;
        let d = first.dim();
        let mut data = Vec::new();
        let mut sizes = Vec::new();
        let mut trace = Vec::new();
        let mut protected = Vec::new();
        for p in parts {
            if p.dim() != d {
                return Err(Error::Shape(format!("concat of widths {d} and {}", p.dim())));
            }
            data.extend_from_slice(p.features.data());
            sizes.extend_from_slice(&p.sizes);
            trace.extend(p.trace.iter().cloned());
            protected.extend_from_slice(&p.protected);
        }
        Ok(TokenState {
            features: Tensor::new(vec![sizes.len(), d], data)?,
            sizes,
            trace,
            protected,
        })
    }

    /// Applies merges (`source → destination`) and deletions in one pass.
    ///
    /// Each destination becomes the size-weighted mean of itself and all of
    /// its sources; sources and dropped tokens disappear; survivors keep
    /// their relative order.
    pub(crate) fn merge_and_drop(&self, merges: &[(usize, usize)], drops: &[usize]) -> TokenState {
        let s = self.len();
        let d = self.dim();
        let mut removed = vec![false; s];
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); s];
        for &(src, dst) in merges {
            debug_assert!(!self.protected[src] && !self.protected[dst]);
            removed[src] = true;
            incoming[dst].push(src);
        }
        for &i in drops {
            debug_assert!(!self.protected[i]);
            removed[i] = true;
        }

        let kept = s - removed.iter().filter(|&&r| r).count();
        let mut data = Vec::with_capacity(kept * d);
        let mut sizes = Vec::with_capacity(kept);
        let mut trace = Vec::with_capacity(kept);
        let mut protected = Vec::with_capacity(kept);
        let mut acc = vec![0.0f64; d];
        for i in 0..s {
            if removed[i] {
                continue;
            }
            if incoming[i].is_empty() {
                data.extend_from_slice(self.features.row(i));
                sizes.push(self.sizes[i]);
                trace.push(self.trace[i].clone());
            } else {
                let mut total = self.sizes[i] as u64;
                let mut t = self.trace[i].clone();
                for (a, &x) in acc.iter_mut().zip(self.features.row(i)) {
                    *a = self.sizes[i] as f64 * x as f64;
                }
                for &src in &incoming[i] {
                    let n = self.sizes[src] as f64;
                    for (a, &x) in acc.iter_mut().zip(self.features.row(src)) {
                        *a += n * x as f64;
                    }
                    total += self.sizes[src] as u64;
                    t.extend_from_slice(&self.trace[src]);
                }
                let inv = 1.0 / total as f64;
                data.extend(acc.iter().map(|&a| (a * inv) as f32));
                sizes.push(total as u32);
                t.sort_unstable();
                trace.push(t);
            }
            protected.push(self.protected[i]);
        }
        TokenState {
            features: Tensor::new(vec![kept, d], data).expect("row count matches"),
            sizes,
            trace,
            protected,
        }
    }
}
