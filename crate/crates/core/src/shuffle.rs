//! Batch construction: orderings of a dataset that place similar pairs next
//! to each other so consecutive batches carry hard in-batch negatives.
//!
//! * [`example_based_shuffle`] groups every anchor with its nearest unused
//!   neighbors in embedding space, then reverses the sequence so the late,
//!   mostly singleton groups come first.
//! * [`shingle_shuffle`], [`cluster_shuffle`] and [`neighbor_shingle_shuffle`]
//!   sort records by a cheap key (a random word subset, a k-means cluster id,
//!   or the positions of the nearest neighbors), cut runs of equal keys into
//!   groups of at most `group_size`, and order groups by random 64-bit ids.
//! * [`random_shuffle`] is the uniform baseline.
//!
//! Every function returns a permutation of record positions and is a pure
//! function of its inputs and the configured seed.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::Matrix;
use crate::error::{contract_err, Error, Result};
use crate::knn::{FlatIndex, Metric};
use crate::record::{PairElement, PairRecord};
use crate::text::{default_stopwords, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ShuffleMode {
    Random,
    #[default]
    ExampleKnn,
    Words,
    Clusters,
    Neighbors,
}

impl ShuffleMode {
    pub const ALL: [ShuffleMode; 5] = [
        ShuffleMode::Random,
        ShuffleMode::ExampleKnn,
        ShuffleMode::Words,
        ShuffleMode::Clusters,
        ShuffleMode::Neighbors,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShuffleMode::Random => "random",
            ShuffleMode::ExampleKnn => "example_knn",
            ShuffleMode::Words => "words",
            ShuffleMode::Clusters => "clusters",
            ShuffleMode::Neighbors => "neighbors",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(
            self,
            ShuffleMode::ExampleKnn | ShuffleMode::Clusters | ShuffleMode::Neighbors
        )
    }
}

impl fmt::Display for ShuffleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShuffleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig {
                key: "mode",
                reason: alloc::format!("unknown shuffle mode {s:?}"),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ShuffleConfig {
    pub mode: ShuffleMode,
    /// Maximum group size `s`.
    pub group_size: usize,
    /// Neighbors retrieved per anchor before filtering used records.
    pub candidate_pool: usize,
    /// Words per shingle for the `words` mode.
    pub shingle_size: usize,
    pub element: PairElement,
    pub stopwords: Vec<String>,
    /// Skip neighbors whose embedding equals the anchor's exactly.
    pub filter_identical: bool,
    pub k_clusters: usize,
    pub kmeans_iters: usize,
    /// Neighbors per record (itself included) in a `neighbors` shingle.
    pub neighbor_k: usize,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for ShuffleConfig {
    fn default() -> Self {
        Self {
            mode: ShuffleMode::ExampleKnn,
            group_size: 8,
            candidate_pool: 500,
            shingle_size: 2,
            element: PairElement::First,
            stopwords: default_stopwords(),
            filter_identical: false,
            k_clusters: 300,
            kmeans_iters: 25,
            neighbor_k: 7,
            metric: Metric::Cosine,
            seed: 0,
        }
    }
}

impl ShuffleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key, reason: &str| {
            Err(Error::InvalidConfig {
                key,
                reason: reason.into(),
            })
        };
        if self.group_size == 0 {
            return bad("group_size", "must be at least 1");
        }
        if self.candidate_pool + 1 < self.group_size {
            return bad("candidate_pool", "must be at least group_size - 1");
        }
        if self.shingle_size == 0 {
            return bad("shingle_size", "must be at least 1");
        }
        if self.neighbor_k == 0 {
            return bad("neighbor_k", "must be at least 1");
        }
        if self.k_clusters == 0 {
            return bad("k_clusters", "must be at least 1");
        }
        Ok(())
    }
}

/// Record positions in emitted order plus the start offset of every group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffledSequence {
    pub order: Vec<usize>,
    pub group_starts: Vec<usize>,
}

impl ShuffledSequence {
    fn singletons(order: Vec<usize>) -> Self {
        let group_starts = (0..order.len()).collect();
        Self {
            order,
            group_starts,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn groups(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.group_starts
            .iter()
            .enumerate()
            .map(move |(g, &start)| {
                let end = self
                    .group_starts
                    .get(g + 1)
                    .copied()
                    .unwrap_or(self.order.len());
                &self.order[start..end]
            })
    }

    pub fn record_ids<'a>(&self, records: &'a [PairRecord]) -> Vec<&'a str> {
        self.order.iter().map(|&i| records[i].id.as_str()).collect()
    }

    /// Whether `order` is a permutation of `0..n`.
    pub fn is_permutation_of(&self, n: usize) -> bool {
        if self.order.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        self.order
            .iter()
            .all(|&i| i < n && !core::mem::replace(&mut seen[i], true))
    }
}

fn check_embeddings(records: &[PairRecord], embeddings: &Matrix) -> Result<()> {
    if embeddings.rows() != records.len() {
        let missing = records
            .get(embeddings.rows())
            .map_or("?", |r| r.id.as_str());
        return Err(contract_err!(
            "{} embeddings for {} records (first record without one: {missing})",
            embeddings.rows(),
            records.len()
        ));
    }
    Ok(())
}

/// Applies the configured mode. `embeddings` (one row per record, for the
/// configured pair element) is required by the embedding-driven modes.
pub fn shuffle(
    records: &[PairRecord],
    embeddings: Option<&Matrix>,
    cfg: &ShuffleConfig,
) -> Result<ShuffledSequence> {
    cfg.validate()?;
    let need =
        || embeddings.ok_or_else(|| contract_err!("shuffle mode {} needs embeddings", cfg.mode));
    match cfg.mode {
        ShuffleMode::Random => Ok(random_shuffle(records.len(), cfg.seed)),
        ShuffleMode::ExampleKnn => example_based_shuffle(records, need()?, cfg),
        ShuffleMode::Words => shingle_shuffle(records, cfg),
        ShuffleMode::Clusters => cluster_shuffle(records, need()?, cfg.k_clusters, cfg),
        ShuffleMode::Neighbors => neighbor_shingle_shuffle(records, need()?, cfg),
    }
}

/// Uniform permutation of `0..n`; every group is a singleton.
pub fn random_shuffle(n: usize, seed: u64) -> ShuffledSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    ShuffledSequence::singletons(order)
}

/// Groups each unused anchor with up to `group_size - 1` of its nearest unused
/// neighbors (anchor first, then neighbors by rank), visiting anchors in a
/// seeded random order, and returns the reversed sequence.
pub fn example_based_shuffle(
    records: &[PairRecord],
    embeddings: &Matrix,
    cfg: &ShuffleConfig,
) -> Result<ShuffledSequence> {
    cfg.validate()?;
    check_embeddings(records, embeddings)?;
    let n = records.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut visit: Vec<usize> = (0..n).collect();
    visit.shuffle(&mut rng);

    let index = FlatIndex::build_positional(embeddings.clone(), cfg.metric)?;
    // the anchor is its own first candidate, so look one further
    let pool = (cfg.candidate_pool + 1).min(n);
    let k = (cfg.group_size - 1).min(pool);

    let mut used = vec![false; n];
    let mut sequence = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    for &e in &visit {
        if used[e] {
            continue;
        }
        used[e] = true;
        let anchor = embeddings.row(e);
        let neighbors = index.filtered_top_k_by(anchor, pool, k, |id| {
            let id = id as usize;
            used[id] || (cfg.filter_identical && embeddings.row(id) == anchor)
        })?;
        sequence.push(e);
        for id in &neighbors {
            used[*id as usize] = true;
            sequence.push(*id as usize);
        }
        sizes.push(1 + neighbors.len());
    }

    sequence.reverse();
    sizes.reverse();
    let mut group_starts = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for s in sizes {
        group_starts.push(offset);
        offset += s;
    }
    Ok(ShuffledSequence {
        order: sequence,
        group_starts,
    })
}

/// Sorts positions by key, cuts runs of equal keys into groups of at most
/// `cap`, labels each group with a random 64-bit id and sorts by that id.
fn group_by_keys<K: Ord>(keys: &[K], cap: usize, rng: &mut ChaCha8Rng) -> ShuffledSequence {
    let n = keys.len();
    let mut by_key: Vec<usize> = (0..n).collect();
    by_key.sort_by(|&a, &b| keys[a].cmp(&keys[b]));

    let mut gids = vec![0u64; n];
    let mut gid = rng.next_u64();
    let mut size = 0usize;
    let mut prev: Option<usize> = None;
    for &e in &by_key {
        if prev.is_some_and(|p| keys[p] != keys[e]) {
            gid = rng.next_u64();
            size = 0;
        }
        if size >= cap {
            gid = rng.next_u64();
            size = 0;
        }
        gids[e] = gid;
        size += 1;
        prev = Some(e);
    }

    let mut order = by_key;
    order.sort_by_key(|&e| gids[e]);
    let mut group_starts = Vec::new();
    for (pos, &e) in order.iter().enumerate() {
        if pos == 0 || gids[order[pos - 1]] != gids[e] {
            group_starts.push(pos);
        }
    }
    ShuffledSequence {
        order,
        group_starts,
    }
}

/// Shingle of one text: up to `t` distinct non-stop-word tokens chosen at
/// random, sorted and joined with `\u{1f}`. Texts with no usable token get
/// the empty string, which no real shingle can equal.
pub fn text_shingle(
    text: &str,
    t: usize,
    stopwords: &BTreeSet<&str>,
    rng: &mut impl Rng,
) -> String {
    let words: BTreeSet<String> = tokenize(text)
        .into_iter()
        .filter(|w| !stopwords.contains(w.as_str()))
        .collect();
    let mut words: Vec<String> = words.into_iter().collect();
    let take = t.min(words.len());
    let (chosen, _) = words.partial_shuffle(rng, take);
    let mut chosen = chosen.to_vec();
    chosen.sort();
    chosen.join("\u{1f}")
}

/// Shuffle by random word shingles of the configured pair element.
pub fn shingle_shuffle(records: &[PairRecord], cfg: &ShuffleConfig) -> Result<ShuffledSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stop: BTreeSet<&str> = cfg.stopwords.iter().map(String::as_str).collect();
    let keys: Vec<String> = records
        .iter()
        .map(|r| text_shingle(r.text(cfg.element), cfg.shingle_size, &stop, &mut rng))
        .collect();
    Ok(group_by_keys(&keys, cfg.group_size, &mut rng))
}

/// Shuffle whose single-word shingle is the record's k-means cluster.
pub fn cluster_shuffle(
    records: &[PairRecord],
    embeddings: &Matrix,
    k_clusters: usize,
    cfg: &ShuffleConfig,
) -> Result<ShuffledSequence> {
    cfg.validate()?;
    check_embeddings(records, embeddings)?;
    if k_clusters > records.len() {
        return Err(contract_err!(
            "{k_clusters} clusters requested for {} records",
            records.len()
        ));
    }
    let clusters = kmeans(embeddings, k_clusters, cfg.kmeans_iters, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    Ok(group_by_keys(
        &clusters.assignments,
        cfg.group_size,
        &mut rng,
    ))
}

/// Shuffle whose shingle is the sorted positions of the record's
/// `neighbor_k` nearest neighbors (the record itself included).
pub fn neighbor_shingle_shuffle(
    records: &[PairRecord],
    embeddings: &Matrix,
    cfg: &ShuffleConfig,
) -> Result<ShuffledSequence> {
    cfg.validate()?;
    check_embeddings(records, embeddings)?;
    let index = FlatIndex::build_positional(embeddings.clone(), cfg.metric)?;
    let keys: Vec<Vec<u64>> = neighbor_keys(&index, embeddings, cfg.neighbor_k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(group_by_keys(&keys, cfg.group_size, &mut rng))
}

pub(crate) fn neighbor_keys(
    index: &FlatIndex,
    embeddings: &Matrix,
    k: usize,
) -> Result<Vec<Vec<u64>>> {
    if k == 0 {
        return Err(contract_err!("neighbor_k must be at least 1"));
    }
    (0..embeddings.rows())
        .map(|i| {
            let mut ids = index.search(embeddings.row(i), k)?;
            ids.sort_unstable();
            Ok(ids)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia_history: Vec<f64>,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Stops after `max_iters` updates
/// or once assignments no longer change. Nearest-centroid ties go to the
/// lower cluster index and an emptied cluster keeps its previous centroid.
pub fn kmeans(points: &Matrix, k: usize, max_iters: usize, seed: u64) -> Result<KMeans> {
    let (n, dim) = points.shape();
    if k == 0 {
        return Err(contract_err!("k must be at least 1"));
    }
    if k > n {
        return Err(contract_err!("k = {k} exceeds the {n} points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.gen_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            if d2[pick] == 0.0 {
                // rounding ran past the end; take the last point with weight
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    let mut centroids = points.select_rows(&chosen)?;

    let assign = |centroids: &Matrix, out: &mut Vec<usize>| -> f64 {
        let mut inertia = 0.0;
        out.clear();
        for i in 0..n {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(points.row(i), centroids.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            out.push(best);
            inertia += best_d;
        }
        inertia
    };

    let mut assignments = Vec::with_capacity(n);
    let mut history = vec![assign(&centroids, &mut assignments)];
    let mut next = Vec::with_capacity(n);
    for _ in 0..max_iters {
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            sums.row_mut(c)
                .iter_mut()
                .zip(points.row(i))
                .for_each(|(s, p)| *s += p);
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let cnt = count as f64;
                let row = sums.row(c).to_vec();
                centroids
                    .row_mut(c)
                    .iter_mut()
                    .zip(row)
                    .for_each(|(x, s)| *x = s / cnt);
            }
        }
        let inertia = assign(&centroids, &mut next);
        let changed = next != assignments;
        core::mem::swap(&mut assignments, &mut next);
        history.push(inertia);
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        assignments,
        centroids,
        inertia_history: history,
    })
}
