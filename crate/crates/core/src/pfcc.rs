//! Mining graded negatives from a candidate database.
//!
//! Each anchor ranks the whole database by embedding similarity. The top of
//! that ranking is likely to hold unlabeled matches, so negatives are taken
//! from rank `offset + 2^k` (`k = 1, 2, …`) while the rank stays inside the
//! database. Positives are repeated so the classes stay within a factor of
//! two of each other.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dense::Matrix;
use crate::encoder::EncoderModel;
use crate::error::{contract_err, Result};
use crate::knn::{FlatIndex, Metric};
use crate::record::PairRecord;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PfccConfig {
    /// Ranks up to this one are never used as negatives.
    pub offset: usize,
    /// Copies of each positive; `None` picks `ceil(negatives / (2 · positives))`.
    pub oversample: Option<usize>,
    pub triplets: bool,
    pub metric: Metric,
}

impl Default for PfccConfig {
    fn default() -> Self {
        Self {
            offset: 100,
            oversample: None,
            triplets: false,
            metric: Metric::Cosine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TextTriplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PfccOutput {
    /// Oversampled positives followed by the mined negatives (label 0).
    pub records: Vec<PairRecord>,
    /// 1-based database rank of every mined negative, per anchor.
    pub negative_ranks: Vec<Vec<usize>>,
    pub triplets: Vec<TextTriplet>,
}

/// 1-based ranks `offset + 2^k` for `k ≥ 1` that fit in a database of `size`.
pub fn negative_ranks(size: usize, offset: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut step = 2usize;
    while let Some(r) = offset.checked_add(step) {
        if r > size {
            break;
        }
        out.push(r);
        match step.checked_mul(2) {
            Some(s) => step = s,
            None => break,
        }
    }
    out
}

/// Mines negatives for each positive pair. `anchor_emb` has one row per
/// positive (its `text_q`); `db_emb` one row per database text.
pub fn sample_pfcc_negatives(
    positives: &[PairRecord],
    database: &[String],
    anchor_emb: &Matrix,
    db_emb: &Matrix,
    cfg: &PfccConfig,
) -> Result<PfccOutput> {
    if positives.is_empty() {
        return Ok(PfccOutput::default());
    }
    if database.len() <= cfg.offset {
        return Err(contract_err!(
            "candidate database has {} entries, not more than the rank offset {}; lower the offset",
            database.len(),
            cfg.offset
        ));
    }
    if anchor_emb.rows() != positives.len() || db_emb.rows() != database.len() {
        return Err(contract_err!(
            "{} anchor and {} database embeddings for {} positives and {} candidates",
            anchor_emb.rows(),
            db_emb.rows(),
            positives.len(),
            database.len()
        ));
    }

    let index = FlatIndex::build_positional(db_emb.clone(), cfg.metric)?;
    let ranks = negative_ranks(database.len(), cfg.offset);

    let mut known: BTreeSet<(&str, &str)> = BTreeSet::new();
    for p in positives {
        known.insert((p.text_q.as_str(), p.text_a.as_str()));
    }

    let mut negatives = Vec::new();
    let mut per_anchor = Vec::with_capacity(positives.len());
    let mut triplets = Vec::new();
    for (i, p) in positives.iter().enumerate() {
        let order = index.search(anchor_emb.row(i), database.len())?;
        let mut used = Vec::new();
        for &r in &ranks {
            let text = &database[order[r - 1] as usize];
            if known.contains(&(p.text_q.as_str(), text.as_str())) {
                continue;
            }
            let mut neg = PairRecord::new(
                format!("{}-neg{r}", p.id),
                p.text_q.clone(),
                text.clone(),
                0.0,
            );
            neg.group = p.group.clone();
            neg.split = p.split;
            negatives.push(neg);
            used.push(r);
            if cfg.triplets {
                triplets.push(TextTriplet {
                    anchor: p.text_q.clone(),
                    positive: p.text_a.clone(),
                    negative: text.clone(),
                });
            }
        }
        per_anchor.push(used);
    }

    let copies = cfg
        .oversample
        .unwrap_or_else(|| negatives.len().div_ceil(2 * positives.len()))
        .max(1);
    let mut records = Vec::with_capacity(positives.len() * copies + negatives.len());
    for p in positives {
        records.push(p.clone());
        for c in 1..copies {
            let mut dup = p.clone();
            dup.id = format!("{}-dup{c}", p.id);
            records.push(dup);
        }
    }
    records.extend(negatives);
    Ok(PfccOutput {
        records,
        negative_ranks: per_anchor,
        triplets,
    })
}

/// [`sample_pfcc_negatives`] with embeddings taken from `model`.
pub fn sample_with_encoder(
    positives: &[PairRecord],
    database: &[String],
    model: &EncoderModel,
    cfg: &PfccConfig,
) -> Result<PfccOutput> {
    if positives.is_empty() {
        return Ok(PfccOutput::default());
    }
    let anchors: Vec<&str> = positives.iter().map(|p| p.text_q.as_str()).collect();
    let anchor_emb = model.forward(&anchors)?.output().clone();
    let db_emb = model.forward(database)?.output().clone();
    sample_pfcc_negatives(positives, database, &anchor_emb, &db_emb, cfg)
}
