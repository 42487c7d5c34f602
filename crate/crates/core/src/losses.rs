//! Batch-softmax contrastive loss family with analytic gradients.
//!
//! Every loss here takes a [`PairBatch`] of query and answer embeddings and
//! returns the loss value together with its exact gradient with respect to the
//! *raw* (pre-normalization) embeddings. Similarities are `S = Q̂ Âᵀ / τ`, where
//! `Q̂`, `Â` are the normalized embeddings.
//!
//! * `L0` is the mean negative log of the diagonal of the row softmax of `S`.
//! * `L1` is the same quantity for `Sᵀ` (answers scored against queries).
//! * The masked form keeps only rows whose label is above the binarization
//!   threshold, while every column stays available as an in-batch negative.
//!   The divisor stays `m` (the full batch size).
//!
//! The temperature gradient is reported with respect to `θ = ln τ`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dense::{cross_products, log_sum_exp_unchecked, softmax_into, Matrix};
use crate::error::{contract_err, shape_err, Error, Result};
use crate::normalization::{normalize, normalize_backward, NormalizationMode};

/// Bounds applied to a trainable temperature.
pub const TEMPERATURE_BOUNDS: (f64, f64) = (1e-3, 10.0);

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LossConfig {
    pub temperature: f64,
    /// Weight `μ` of the contrastive term in the combo loss.
    pub combo_weight: f64,
    /// Binarization threshold: a pair is positive iff its label is above it.
    pub threshold: f64,
    pub normalization: NormalizationMode,
    /// Add the answer-to-query term `L1`.
    pub symmetrize: bool,
    pub temperature_trainable: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            combo_weight: 0.9,
            threshold: 0.5,
            normalization: NormalizationMode::RowL2,
            symmetrize: true,
            temperature_trainable: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig {
                key: "temperature",
                reason: alloc::format!("must be positive, got {}", self.temperature),
            });
        }
        if !(0.0..=1.0).contains(&self.combo_weight) {
            return Err(Error::InvalidConfig {
                key: "combo_weight",
                reason: alloc::format!("must lie in [0, 1], got {}", self.combo_weight),
            });
        }
        if !self.threshold.is_finite() {
            return Err(Error::InvalidConfig {
                key: "threshold",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Loss variants selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossVariant {
    Bsc,
    #[default]
    BscMasked,
    Mse,
    Combo,
    Triplet,
}

impl LossVariant {
    pub const ALL: [LossVariant; 5] = [
        LossVariant::Bsc,
        LossVariant::BscMasked,
        LossVariant::Mse,
        LossVariant::Combo,
        LossVariant::Triplet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Bsc => "bsc",
            LossVariant::BscMasked => "bsc_masked",
            LossVariant::Mse => "mse",
            LossVariant::Combo => "combo",
            LossVariant::Triplet => "triplet",
        }
    }

    /// Whether the variant contrasts rows against in-batch negatives.
    pub fn is_contrastive(self) -> bool {
        !matches!(self, LossVariant::Mse)
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig {
                key: "loss",
                reason: alloc::format!(
                    "unknown loss {s:?} (expected bsc, bsc_masked, mse, combo or triplet)"
                ),
            })
    }
}

/// Aligned query/answer embeddings with per-pair labels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub q: Matrix,
    pub a: Matrix,
    pub labels: Vec<f64>,
}

impl PairBatch {
    pub fn new(q: Matrix, a: Matrix, labels: Vec<f64>) -> Result<Self> {
        if q.shape() != a.shape() {
            return Err(shape_err!(
                "query {}x{} and answer {}x{} embeddings must match",
                q.rows(),
                q.cols(),
                a.rows(),
                a.cols()
            ));
        }
        if labels.len() != q.rows() {
            return Err(shape_err!("{} labels for {} pairs", labels.len(), q.rows()));
        }
        if let Some(y) = labels.iter().find(|y| !(0.0..=1.0).contains(*y)) {
            return Err(Error::Domain(alloc::format!("label {y} outside [0, 1]")));
        }
        Ok(Self { q, a, labels })
    }

    /// All-positive batch from row slices. Fails with [`Error::EmptyBatch`] on no rows.
    pub fn from_rows<R: AsRef<[f64]>>(q: &[R], a: &[R]) -> Result<Self> {
        if q.is_empty() || a.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let labels = vec![1.0; q.len()];
        Self::new(Matrix::from_rows(q)?, Matrix::from_rows(a)?, labels)
    }

    pub fn len(&self) -> usize {
        self.q.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `y_i > t` for every row.
    pub fn is_positive(&self, threshold: f64) -> Vec<bool> {
        self.labels.iter().map(|&y| y > threshold).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_q: Matrix,
    pub grad_a: Matrix,
    /// `∂L/∂ln τ`; zero unless the temperature is trainable.
    pub grad_log_tau: f64,
}

impl LossOutput {
    fn scaled(mut self, w: f64) -> Self {
        self.value *= w;
        self.grad_q.scale(w);
        self.grad_a.scale(w);
        self.grad_log_tau *= w;
        self
    }

    fn add(mut self, other: &LossOutput) -> Self {
        self.value += other.value;
        // shapes agree by construction
        let _ = self.grad_q.add_scaled(&other.grad_q, 1.0);
        let _ = self.grad_a.add_scaled(&other.grad_a, 1.0);
        self.grad_log_tau += other.grad_log_tau;
        self
    }
}

struct Normalized {
    q: Matrix,
    a: Matrix,
}

fn normalized(batch: &PairBatch, cfg: &LossConfig) -> Result<Normalized> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(Normalized {
        q: normalize(&batch.q, cfg.normalization)?,
        a: normalize(&batch.a, cfg.normalization)?,
    })
}

/// Value and `∂L/∂S` of the weighted contrastive terms on the scaled similarity
/// matrix `s`. Row `i` of `L0` and row `i` of `L1` are weighted by `w[i]`.
fn contrastive_terms(s: &Matrix, w: &[f64], symmetrize: bool) -> (f64, Matrix) {
    let m = s.rows();
    let inv_m = 1.0 / m as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(m, m);
    let mut probs = vec![0.0; m];

    for i in 0..m {
        if w[i] == 0.0 {
            continue;
        }
        let row = s.row(i);
        value += w[i] * inv_m * (log_sum_exp_unchecked(row) - row[i]);
        softmax_into(row, &mut probs);
        for (j, p) in probs.iter().enumerate() {
            let delta = if i == j { 1.0 } else { 0.0 };
            let g = grad.get(i, j) + w[i] * inv_m * (p - delta);
            grad.set(i, j, g);
        }
    }

    if symmetrize {
        let mut col = vec![0.0; m];
        for j in 0..m {
            if w[j] == 0.0 {
                continue;
            }
            for (i, c) in col.iter_mut().enumerate() {
                *c = s.get(i, j);
            }
            value += w[j] * inv_m * (log_sum_exp_unchecked(&col) - col[j]);
            softmax_into(&col, &mut probs);
            for (i, p) in probs.iter().enumerate() {
                let delta = if i == j { 1.0 } else { 0.0 };
                let g = grad.get(i, j) + w[j] * inv_m * (p - delta);
                grad.set(i, j, g);
            }
        }
    }
    (value, grad)
}

fn weighted_bsc(batch: &PairBatch, cfg: &LossConfig, w: &[f64]) -> Result<LossOutput> {
    let n = normalized(batch, cfg)?;
    let tau = cfg.temperature;
    let mut s = cross_products(&n.q, &n.a);
    s.scale(1.0 / tau);
    let (value, g) = contrastive_terms(&s, w, cfg.symmetrize);

    let mut grad_qn = g.matmul(&n.a)?;
    grad_qn.scale(1.0 / tau);
    let mut grad_an = g.transpose().matmul(&n.q)?;
    grad_an.scale(1.0 / tau);

    let grad_log_tau = if cfg.temperature_trainable {
        // S = raw · e^{-θ}, so ∂S/∂θ = -S
        -g.as_slice()
            .iter()
            .zip(s.as_slice())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    } else {
        0.0
    };

    Ok(LossOutput {
        value,
        grad_q: normalize_backward(&batch.q, cfg.normalization, &grad_qn)?,
        grad_a: normalize_backward(&batch.a, cfg.normalization, &grad_an)?,
        grad_log_tau,
    })
}

/// Symmetric BSC loss (`L0 + L1`, or `L0` alone when `symmetrize` is off) with
/// every pair treated as positive.
pub fn bsc_loss(batch: &PairBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let w = vec![1.0; batch.len()];
    weighted_bsc(batch, cfg, &w)
}

/// The same loss evaluated term by term:
/// `L0 = -(1/mτ) Σ q̂_i·â_i + (1/m) Σ_i log Σ_j exp(q̂_i·â_j / τ)`, plus `L1`
/// (the same with `q̂` and `â` swapped) when `symmetrize` is on.
pub fn bsc_loss_sum_form(batch: &PairBatch, cfg: &LossConfig) -> Result<f64> {
    let n = normalized(batch, cfg)?;
    let l0 = sum_form_direction(&n.q, &n.a, cfg.temperature);
    if cfg.symmetrize {
        Ok(l0 + sum_form_direction(&n.a, &n.q, cfg.temperature))
    } else {
        Ok(l0)
    }
}

fn sum_form_direction(x: &Matrix, y: &Matrix, tau: f64) -> f64 {
    let m = x.rows();
    let mut positives = 0.0;
    let mut partitions = 0.0;
    let mut row = vec![0.0; m];
    for i in 0..m {
        let xi = x.row(i);
        positives += crate::dense::dot(xi, y.row(i));
        for (j, r) in row.iter_mut().enumerate() {
            *r = crate::dense::dot(xi, y.row(j)) / tau;
        }
        partitions += log_sum_exp_unchecked(&row);
    }
    -positives / (m as f64 * tau) + partitions / m as f64
}

/// BSC loss where rows with `y_i <= t` are dropped from the numerator and
/// their own log-sum-exp, but stay in the batch as negatives for other rows.
pub fn bsc_loss_masked(batch: &PairBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let w: Vec<f64> = batch
        .is_positive(cfg.threshold)
        .into_iter()
        .map(|p| if p { 1.0 } else { 0.0 })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::AllMasked {
            threshold: cfg.threshold,
        });
    }
    weighted_bsc(batch, cfg, &w)
}

/// Mean squared error between diagonal similarities `q̂_i·â_i` and the labels.
pub fn mse_loss(batch: &PairBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let n = normalized(batch, cfg)?;
    let m = batch.len();
    let cols = batch.q.cols();
    let mut value = 0.0;
    let mut grad_qn = Matrix::zeros(m, cols);
    let mut grad_an = Matrix::zeros(m, cols);
    for i in 0..m {
        let (qi, ai) = (n.q.row(i), n.a.row(i));
        let r = crate::dense::dot(qi, ai) - batch.labels[i];
        value += r * r / m as f64;
        let c = 2.0 * r / m as f64;
        for k in 0..cols {
            grad_qn.set(i, k, c * ai[k]);
            grad_an.set(i, k, c * qi[k]);
        }
    }
    Ok(LossOutput {
        value,
        grad_q: normalize_backward(&batch.q, cfg.normalization, &grad_qn)?,
        grad_a: normalize_backward(&batch.a, cfg.normalization, &grad_an)?,
        grad_log_tau: 0.0,
    })
}

/// `μ · masked BSC + (1 - μ) · MSE`. A zero-weight component is not evaluated.
pub fn combo_loss(batch: &PairBatch, cfg: &LossConfig) -> Result<LossOutput> {
    let mu = cfg.combo_weight;
    cfg.validate()?;
    if mu == 0.0 {
        return mse_loss(batch, cfg);
    }
    if mu == 1.0 {
        return bsc_loss_masked(batch, cfg);
    }
    let bsc = bsc_loss_masked(batch, cfg)?.scaled(mu);
    let mse = mse_loss(batch, cfg)?.scaled(1.0 - mu);
    Ok(bsc.add(&mse))
}

/// Plain BSC loss computed with the numerator averaged over every answer whose
/// query is bit-identical to the row's query (supervised-contrastive style).
///
/// Because the grouped queries are equal, the averaged numerator collapses to
/// the per-pair numerator and the result equals [`bsc_loss`].
pub fn duplicate_aggregated_loss(batch: &PairBatch, cfg: &LossConfig) -> Result<f64> {
    let n = normalized(batch, cfg)?;
    let m = batch.len();
    let mut s = cross_products(&n.q, &n.a);
    s.scale(1.0 / cfg.temperature);

    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for i in 0..m {
        let key = batch.q.row(i).iter().map(|v| v.to_bits()).collect();
        groups.entry(key).or_default().push(i);
    }
    let mut group_of = vec![0usize; m];
    let members: Vec<Vec<usize>> = groups.into_values().collect();
    for (g, idx) in members.iter().enumerate() {
        for &i in idx {
            group_of[i] = g;
        }
    }

    let inv_m = 1.0 / m as f64;
    let mut value = 0.0;
    let mut col = vec![0.0; m];
    for i in 0..m {
        let p = &members[group_of[i]];
        let numerator = p.iter().map(|&j| s.get(i, j)).sum::<f64>() / p.len() as f64;
        value += inv_m * (log_sum_exp_unchecked(s.row(i)) - numerator);
        if cfg.symmetrize {
            for (r, c) in col.iter_mut().enumerate() {
                *c = s.get(r, i);
            }
            let numerator = p.iter().map(|&j| s.get(j, i)).sum::<f64>() / p.len() as f64;
            value += inv_m * (log_sum_exp_unchecked(&col) - numerator);
        }
    }
    Ok(value)
}

/// `∂L/∂ln τ` of [`bsc_loss`]. Requires `temperature_trainable`.
pub fn temperature_gradient(batch: &PairBatch, cfg: &LossConfig) -> Result<f64> {
    if !cfg.temperature_trainable {
        return Err(contract_err!(
            "temperature gradient requested but temperature_trainable is off"
        ));
    }
    Ok(bsc_loss(batch, cfg)?.grad_log_tau)
}

/// Dispatches the pair-based variants. Triplet batches go through [`triplet_loss`].
pub fn pair_loss(variant: LossVariant, batch: &PairBatch, cfg: &LossConfig) -> Result<LossOutput> {
    match variant {
        LossVariant::Bsc => bsc_loss(batch, cfg),
        LossVariant::BscMasked => bsc_loss_masked(batch, cfg),
        LossVariant::Mse => mse_loss(batch, cfg),
        LossVariant::Combo => combo_loss(batch, cfg),
        LossVariant::Triplet => Err(contract_err!(
            "triplet loss needs (anchor, positive, negative) rows"
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutput {
    pub value: f64,
    pub grad_anchor: Matrix,
    pub grad_positive: Matrix,
    pub grad_negative: Matrix,
}

/// Mean of `max(0, |a - p| - |a - n| + margin)` over rows, Euclidean distance.
/// Inactive rows and zero distances get a zero subgradient.
pub fn triplet_loss(
    anchor: &Matrix,
    positive: &Matrix,
    negative: &Matrix,
    margin: f64,
) -> Result<TripletOutput> {
    crate::dense::ensure_same_shape(anchor, positive)?;
    crate::dense::ensure_same_shape(anchor, negative)?;
    let (m, cols) = anchor.shape();
    let mut out = TripletOutput {
        value: 0.0,
        grad_anchor: Matrix::zeros(m, cols),
        grad_positive: Matrix::zeros(m, cols),
        grad_negative: Matrix::zeros(m, cols),
    };
    let mut diff_p = vec![0.0; cols];
    let mut diff_n = vec![0.0; cols];
    for i in 0..m {
        let a = anchor.row(i);
        for k in 0..cols {
            diff_p[k] = a[k] - positive.get(i, k);
            diff_n[k] = a[k] - negative.get(i, k);
        }
        let dp = crate::dense::l2_norm(&diff_p);
        let dn = crate::dense::l2_norm(&diff_n);
        let hinge = dp - dn + margin;
        if hinge <= 0.0 {
            continue;
        }
        out.value += hinge / m as f64;
        for k in 0..cols {
            let up = if dp > 0.0 {
                diff_p[k] / dp / m as f64
            } else {
                0.0
            };
            let un = if dn > 0.0 {
                diff_n[k] / dn / m as f64
            } else {
                0.0
            };
            out.grad_anchor.set(i, k, up - un);
            out.grad_positive.set(i, k, -up);
            out.grad_negative.set(i, k, un);
        }
    }
    Ok(out)
}

/// Triplet loss on a pair batch after normalization: row `i` with
/// `negatives[i] = Some(j)` contributes `(q̂_i, â_i, â_j)`. The mean runs over
/// contributing rows; rows with `None` are ignored.
pub fn batch_triplet_loss(
    batch: &PairBatch,
    cfg: &LossConfig,
    negatives: &[Option<usize>],
    margin: f64,
) -> Result<LossOutput> {
    if negatives.len() != batch.len() {
        return Err(shape_err!(
            "{} negative slots for a batch of {}",
            negatives.len(),
            batch.len()
        ));
    }
    let rows: Vec<(usize, usize)> = negatives
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    if rows.is_empty() {
        return Err(Error::AllMasked {
            threshold: cfg.threshold,
        });
    }
    if let Some(&(_, j)) = rows.iter().find(|(_, j)| *j >= batch.len()) {
        return Err(contract_err!(
            "negative index {j} outside a batch of {}",
            batch.len()
        ));
    }
    let n = normalized(batch, cfg)?;
    let anchors: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let negs: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let t = triplet_loss(
        &n.q.select_rows(&anchors)?,
        &n.a.select_rows(&anchors)?,
        &n.a.select_rows(&negs)?,
        margin,
    )?;

    let (m, cols) = batch.q.shape();
    let mut grad_qn = Matrix::zeros(m, cols);
    let mut grad_an = Matrix::zeros(m, cols);
    for (r, &(i, j)) in rows.iter().enumerate() {
        for k in 0..cols {
            grad_qn.set(i, k, grad_qn.get(i, k) + t.grad_anchor.get(r, k));
            grad_an.set(i, k, grad_an.get(i, k) + t.grad_positive.get(r, k));
            grad_an.set(j, k, grad_an.get(j, k) + t.grad_negative.get(r, k));
        }
    }
    Ok(LossOutput {
        value: t.value,
        grad_q: normalize_backward(&batch.q, cfg.normalization, &grad_qn)?,
        grad_a: normalize_backward(&batch.a, cfg.normalization, &grad_an)?,
        grad_log_tau: 0.0,
    })
}
