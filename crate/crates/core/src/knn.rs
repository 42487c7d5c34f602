//! Exact (brute-force) k-nearest-neighbor search.
//!
//! Results are ordered by decreasing similarity (increasing distance for the
//! Euclidean metric); equal scores are broken by ascending id so every search
//! is deterministic.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::dense::{dot, l2_norm, Matrix};
use crate::error::{contract_err, shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Metric {
    Dot,
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Dot, Metric::Cosine, Metric::Euclidean];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dot => "dot",
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig {
                key: "metric",
                reason: alloc::format!("unknown metric {s:?} (expected dot, cosine or euclidean)"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    /// Similarity, or negated squared distance for [`Metric::Euclidean`].
    pub score: f64,
}

/// Ranking order: higher score first, then lower id.
#[inline]
pub fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

#[derive(Debug, Clone)]
pub struct FlatIndex {
    vectors: Matrix,
    /// Row L2 norms, used by [`Metric::Cosine`].
    norms: Vec<f64>,
    ids: Vec<u64>,
    metric: Metric,
}

impl FlatIndex {
    /// Indexes the rows of `vectors` under `ids`. Cosine scores are
    /// `v·q / (|v| |q|)` on the raw rows, so rows with equal dot product and
    /// norm tie exactly; an all-zero row or query scores 0.
    pub fn build(vectors: Matrix, ids: Vec<u64>, metric: Metric) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(shape_err!(
                "{} ids for {} vectors",
                ids.len(),
                vectors.rows()
            ));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(contract_err!("duplicate id {dup} in index"));
        }
        let norms = if metric == Metric::Cosine {
            (0..vectors.rows())
                .map(|i| l2_norm(vectors.row(i)))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            vectors,
            norms,
            ids,
            metric,
        })
    }

    /// Index whose ids are the row positions `0..rows`.
    pub fn build_positional(vectors: Matrix, metric: Metric) -> Result<Self> {
        let ids = (0..vectors.rows() as u64).collect();
        Self::build(vectors, ids, metric)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    fn score(&self, row: usize, query: &[f64], query_norm: f64) -> f64 {
        let v = self.vectors.row(row);
        match self.metric {
            Metric::Dot => dot(v, query),
            Metric::Cosine => {
                let d = self.norms[row] * query_norm;
                if d == 0.0 {
                    0.0
                } else {
                    dot(v, query) / d
                }
            }
            Metric::Euclidean => -v
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>(),
        }
    }

    /// The `top_n` best matches with their scores.
    pub fn search_scored(&self, query: &[f64], top_n: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.dim() {
            return Err(shape_err!(
                "query has dimension {}, index has {}",
                query.len(),
                self.dim()
            ));
        }
        if top_n == 0 {
            return Err(contract_err!("top_n must be at least 1"));
        }
        let qn = l2_norm(query);
        let mut all: Vec<Neighbor> = (0..self.len())
            .map(|r| Neighbor {
                id: self.ids[r],
                score: self.score(r, query, qn),
            })
            .collect();
        let keep = top_n.min(all.len());
        if keep < all.len() {
            all.select_nth_unstable_by(keep - 1, rank_order);
            all.truncate(keep);
        }
        all.sort_unstable_by(rank_order);
        Ok(all)
    }

    /// Ids of the `min(top_n, len)` best matches.
    pub fn search(&self, query: &[f64], top_n: usize) -> Result<Vec<u64>> {
        Ok(self
            .search_scored(query, top_n)?
            .into_iter()
            .map(|n| n.id)
            .collect())
    }

    /// Searches `top_n` candidates, then keeps up to `k` of them for which
    /// `is_used` is false, in rank order.
    pub fn filtered_top_k_by(
        &self,
        query: &[f64],
        top_n: usize,
        k: usize,
        mut is_used: impl FnMut(u64) -> bool,
    ) -> Result<Vec<u64>> {
        if k > top_n {
            return Err(contract_err!(
                "k = {k} exceeds the candidate pool top_n = {top_n}"
            ));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        Ok(self
            .search(query, top_n)?
            .into_iter()
            .filter(|id| !is_used(*id))
            .take(k)
            .collect())
    }

    pub fn filtered_top_k(
        &self,
        query: &[f64],
        top_n: usize,
        k: usize,
        used: &BTreeSet<u64>,
    ) -> Result<Vec<u64>> {
        self.filtered_top_k_by(query, top_n, k, |id| used.contains(&id))
    }

    /// One search per query row, in order.
    pub fn search_many(&self, queries: &Matrix, top_n: usize) -> Result<Vec<Vec<u64>>> {
        (0..queries.rows())
            .map(|i| self.search(queries.row(i), top_n))
            .collect()
    }
}
