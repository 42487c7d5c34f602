//! Training loop: per-epoch shuffling on fresh embeddings, AdamW with linear
//! warm-up, a checkpoint and dev evaluation after every epoch, and selection
//! of the best epoch and seed.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::Matrix;
use crate::encoder::{Checkpoint, EncoderGrads, EncoderModel, EncoderShape};
use crate::error::{Error, Result};
use crate::eval::{self, EvalProtocol, EvalReport, MetricName};
use crate::losses::{
    batch_triplet_loss, pair_loss, LossConfig, LossOutput, LossVariant, PairBatch,
    TEMPERATURE_BOUNDS,
};
use crate::optim::{
    adamw_step, lr_at, validate_warmup_fraction, warmup_steps, AdamWConfig, AdamWState,
};
use crate::record::{PairElement, PairRecord};
use crate::shuffle::{shuffle, ShuffleConfig};
use crate::text::fnv1a64;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub bias_correction: bool,
    pub weight_decay: f64,
    pub loss: LossVariant,
    pub loss_config: LossConfig,
    pub triplet_margin: f64,
    pub shuffle: ShuffleConfig,
    pub encoder: EncoderShape,
    pub seeds: Vec<u64>,
    pub dev_metric: MetricName,
    /// Cutoff for the `@k` dev metrics.
    pub metric_k: usize,
    pub protocol: EvalProtocol,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 5,
            batch_size: 16,
            warmup_fraction: 0.1,
            bias_correction: true,
            weight_decay: 0.0,
            loss: LossVariant::BscMasked,
            loss_config: LossConfig::default(),
            triplet_margin: 0.5,
            shuffle: ShuffleConfig::default(),
            encoder: EncoderShape::default(),
            seeds: vec![0],
            dev_metric: MetricName::Mrr,
            metric_k: 1,
            protocol: EvalProtocol::Retrieval,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key, reason: String| Err(Error::InvalidConfig { key, reason });
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(
                "learning_rate",
                format!("{} is not a positive number", self.learning_rate),
            );
        }
        if self.epochs < 1 {
            return bad("epochs", "must be at least 1".into());
        }
        if self.batch_size < self.min_batch_rows() {
            return bad(
                "batch_size",
                format!(
                    "{} needs batches of at least {} rows",
                    self.loss,
                    self.min_batch_rows()
                ),
            );
        }
        if validate_warmup_fraction(self.warmup_fraction).is_err() {
            return bad(
                "warmup_fraction",
                format!("{} outside [0, 1)", self.warmup_fraction),
            );
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(
                "weight_decay",
                format!("{} is not a non-negative number", self.weight_decay),
            );
        }
        if !(self.triplet_margin.is_finite() && self.triplet_margin >= 0.0) {
            return bad(
                "triplet_margin",
                format!("{} is not a non-negative number", self.triplet_margin),
            );
        }
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required".into());
        }
        if self.metric_k < 1 {
            return bad("metric_k", "must be at least 1".into());
        }
        self.loss_config.validate()?;
        self.shuffle.validate()?;
        self.encoder.validate()
    }

    /// Smallest batch a step is taken on: a softmax over one row is constant.
    pub fn min_batch_rows(&self) -> usize {
        if self.loss == LossVariant::Mse {
            1
        } else {
            2
        }
    }

    pub fn hash(&self) -> u64 {
        fnv1a64([format!("{self:?}").as_bytes()])
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            weight_decay: self.weight_decay,
            bias_correction: self.bias_correction,
            ..AdamWConfig::default()
        }
    }
}

/// Encodes texts with a fixed model. Implementations may parallelize but must
/// return rows in input order.
pub trait Executor {
    fn encode(&self, model: &EncoderModel, texts: &[&str]) -> Result<Matrix>;
}

/// Encodes on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn encode(&self, model: &EncoderModel, texts: &[&str]) -> Result<Matrix> {
        Ok(model.forward(texts)?.output().clone())
    }
}

/// Called after every epoch, e.g. to persist checkpoints and metrics.
pub trait EpochObserver {
    fn on_epoch(
        &mut self,
        _seed: u64,
        _record: &EpochRecord,
        _checkpoint: &Checkpoint,
    ) -> Result<()> {
        Ok(())
    }
}

impl EpochObserver for () {}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean loss over the steps taken.
    pub train_loss: f64,
    pub steps: usize,
    /// Batches without a positive row under a masked loss.
    pub skipped_batches: usize,
    pub dev_score: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of the best dev score (earliest on ties).
    pub selected_epoch: usize,
    pub best_score: f64,
    pub best: Checkpoint,
}

impl TrainRun {
    pub fn dev_scores(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.dev_score).collect()
    }
}

/// Mixes the run seed and epoch into the seed of that epoch's shuffle.
pub fn epoch_seed(run_seed: u64, shuffle_seed: u64, epoch: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = run_seed
        ^ shuffle_seed.rotate_left(17)
        ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Cuts `order` into consecutive batches; a short last batch is kept only if
/// it has at least `min_rows` rows.
pub fn slice_batches(order: &[usize], batch_size: usize, min_rows: usize) -> Vec<Vec<usize>> {
    order
        .chunks(batch_size.max(1))
        .filter(|c| c.len() >= min_rows)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Batch plan for one epoch: shuffle on the current model's embeddings, then
/// slice. The same model, seed and epoch always give the same plan.
pub fn plan_epoch(
    model: &EncoderModel,
    train: &[PairRecord],
    cfg: &TrainConfig,
    seed: u64,
    epoch: usize,
    exec: &dyn Executor,
) -> Result<Vec<Vec<usize>>> {
    let shuffle_cfg = ShuffleConfig {
        seed: epoch_seed(seed, cfg.shuffle.seed, epoch),
        ..cfg.shuffle.clone()
    };
    let embeddings = if cfg.shuffle.mode.needs_embeddings() {
        let texts: Vec<&str> = train.iter().map(|r| r.text(cfg.shuffle.element)).collect();
        Some(exec.encode(model, &texts)?)
    } else {
        None
    };
    let seq = shuffle(train, embeddings.as_ref(), &shuffle_cfg)?;
    Ok(slice_batches(
        &seq.order,
        cfg.batch_size,
        cfg.min_batch_rows(),
    ))
}

/// Number of batches every epoch yields for `n` records.
pub fn batches_per_epoch(n: usize, cfg: &TrainConfig) -> usize {
    let full = n / cfg.batch_size;
    let rest = n % cfg.batch_size;
    full + usize::from(rest > 0 && rest >= cfg.min_batch_rows())
}

/// Triplet negatives for a batch: a labeled negative sharing the row's query
/// text when there is one, otherwise the most similar in-batch answer with a
/// different text. Rows at or below the threshold get `None`.
pub fn triplet_negatives(
    records: &[&PairRecord],
    batch: &PairBatch,
    cfg: &LossConfig,
) -> Result<Vec<Option<usize>>> {
    let q = crate::normalization::normalize(&batch.q, cfg.normalization)?;
    let a = crate::normalization::normalize(&batch.a, cfg.normalization)?;
    let positive = batch.is_positive(cfg.threshold);
    Ok((0..records.len())
        .map(|i| {
            if !positive[i] {
                return None;
            }
            let labeled = (0..records.len())
                .find(|&j| !positive[j] && records[j].text_q == records[i].text_q);
            labeled.or_else(|| {
                (0..records.len())
                    .filter(|&j| j != i && records[j].text_a != records[i].text_a)
                    .max_by(|&x, &y| {
                        let sx = crate::dense::dot(q.row(i), a.row(x));
                        let sy = crate::dense::dot(q.row(i), a.row(y));
                        // lowest index wins ties
                        sx.total_cmp(&sy).then(y.cmp(&x))
                    })
            })
        })
        .collect())
}

/// Loss value and parameter gradients for one batch of records.
pub struct StepOutput {
    pub loss: LossOutput,
    pub grads: EncoderGrads,
}

pub fn step_gradients(
    model: &EncoderModel,
    records: &[&PairRecord],
    variant: LossVariant,
    loss_cfg: &LossConfig,
    margin: f64,
) -> Result<StepOutput> {
    let qs: Vec<&str> = records.iter().map(|r| r.text_q.as_str()).collect();
    let as_: Vec<&str> = records.iter().map(|r| r.text_a.as_str()).collect();
    let cq = model.forward(&qs)?;
    let ca = model.forward(&as_)?;
    let labels = records.iter().map(|r| r.label).collect();
    let batch = PairBatch::new(cq.output().clone(), ca.output().clone(), labels)?;
    let loss = match variant {
        LossVariant::Triplet => {
            let negatives = triplet_negatives(records, &batch, loss_cfg)?;
            batch_triplet_loss(&batch, loss_cfg, &negatives, margin)?
        }
        v => pair_loss(v, &batch, loss_cfg)?,
    };
    let mut grads = model.backward(&cq, &loss.grad_q)?;
    model.backward_into(&ca, &loss.grad_a, &mut grads);
    Ok(StepOutput { loss, grads })
}

/// Encodes a split and scores it with `metric`.
pub fn evaluate_split(
    model: &EncoderModel,
    records: &[PairRecord],
    metric: MetricName,
    k: usize,
    protocol: EvalProtocol,
    threshold: f64,
    exec: &dyn Executor,
) -> Result<f64> {
    match metric {
        MetricName::Spearman | MetricName::F1 => {
            let scores = pair_scores(model, records, exec)?;
            let gold: Vec<f64> = records.iter().map(|r| r.label).collect();
            if metric == MetricName::Spearman {
                eval::spearman(&scores, &gold)
            } else {
                let labels: Vec<bool> = gold.iter().map(|&y| y > threshold).collect();
                Ok(eval::f1_with_threshold(&scores, &labels, &scores, &labels)?.f1)
            }
        }
        _ => {
            let report = ranking_report(model, records, k, protocol, threshold, exec)?;
            report.metrics.get(&metric.key(k)).copied().ok_or_else(|| {
                Error::Domain(format!("{} is undefined on this split", metric.key(k)))
            })
        }
    }
}

/// Cosine score of every record's own pair.
pub fn pair_scores(
    model: &EncoderModel,
    records: &[PairRecord],
    exec: &dyn Executor,
) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::Domain("no records to score".into()));
    }
    let qs: Vec<&str> = records.iter().map(|r| r.text(PairElement::First)).collect();
    let as_: Vec<&str> = records
        .iter()
        .map(|r| r.text(PairElement::Second))
        .collect();
    Ok(eval::pair_scores(
        &exec.encode(model, &qs)?,
        &exec.encode(model, &as_)?,
    ))
}

/// Ranked groups for a split under `protocol`.
pub fn ranked_groups(
    model: &EncoderModel,
    records: &[PairRecord],
    protocol: EvalProtocol,
    threshold: f64,
    exec: &dyn Executor,
) -> Result<Vec<eval::RankedGroup>> {
    match protocol {
        EvalProtocol::Retrieval => {
            let (qs, as_) = eval::retrieval_texts(records, threshold);
            if qs.is_empty() {
                return Err(Error::Domain("split has no positive query".into()));
            }
            let q = exec.encode(model, &qs)?;
            let a = exec.encode(model, &as_)?;
            eval::retrieval_groups(records, threshold, &q, &a)
        }
        EvalProtocol::Grouped => {
            eval::grouped_groups(records, threshold, &pair_scores(model, records, exec)?)
        }
    }
}

pub fn ranking_report(
    model: &EncoderModel,
    records: &[PairRecord],
    k: usize,
    protocol: EvalProtocol,
    threshold: f64,
    exec: &dyn Executor,
) -> Result<EvalReport> {
    eval::ranking_report(
        &ranked_groups(model, records, protocol, threshold, exec)?,
        k,
    )
}

struct Optimizer {
    states: [AdamWState; 3],
    tau: AdamWState,
}

/// Trains one seed. See the module docs for the loop.
pub fn train(
    train: &[PairRecord],
    dev: &[PairRecord],
    cfg: &TrainConfig,
    seed: u64,
    exec: &dyn Executor,
    observer: &mut dyn EpochObserver,
) -> Result<TrainRun> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    if dev.is_empty() {
        return Err(Error::Contract("dev split is empty".into()));
    }
    let mut model = EncoderModel::init(cfg.encoder, seed)?;
    train_model(&mut model, train, dev, cfg, seed, exec, observer)
}

/// Like [`train`], starting from `model` instead of a fresh initialization.
pub fn train_model(
    model: &mut EncoderModel,
    train: &[PairRecord],
    dev: &[PairRecord],
    cfg: &TrainConfig,
    seed: u64,
    exec: &dyn Executor,
    observer: &mut dyn EpochObserver,
) -> Result<TrainRun> {
    cfg.validate()?;
    let config_hash = cfg.hash();
    let adamw = cfg.adamw();
    let tau_adamw = AdamWConfig {
        weight_decay: 0.0,
        ..adamw
    };
    let sizes = model.groups().map(<[f64]>::len);
    let mut opt = Optimizer {
        states: sizes.map(AdamWState::new),
        tau: AdamWState::new(1),
    };
    let (lo, hi) = (
        libm::log(TEMPERATURE_BOUNDS.0),
        libm::log(TEMPERATURE_BOUNDS.1),
    );
    let mut log_tau = libm::log(cfg.loss_config.temperature);

    let total = batches_per_epoch(train.len(), cfg) * cfg.epochs;
    let warmup = warmup_steps(total, cfg.warmup_fraction);
    let mut step = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Checkpoint)> = None;

    for epoch in 1..=cfg.epochs {
        let plan = plan_epoch(model, train, cfg, seed, epoch, exec)?;
        let (mut loss_sum, mut steps, mut skipped) = (0.0, 0usize, 0usize);
        for batch in &plan {
            step += 1;
            let records: Vec<&PairRecord> = batch.iter().map(|&i| &train[i]).collect();
            let loss_cfg = LossConfig {
                temperature: libm::exp(log_tau),
                ..cfg.loss_config.clone()
            };
            let out = match step_gradients(model, &records, cfg.loss, &loss_cfg, cfg.triplet_margin)
            {
                Ok(o) => o,
                Err(Error::AllMasked { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if !out.loss.value.is_finite() || !out.grads.is_finite() {
                return Err(Error::Diverged {
                    step,
                    detail: format!(
                        "epoch {epoch}: loss {} with non-finite values",
                        out.loss.value
                    ),
                });
            }
            let lr = lr_at(step, warmup, cfg.learning_rate);
            let grad_groups = out.grads.groups();
            for ((params, grads), state) in model
                .groups_mut()
                .into_iter()
                .zip(grad_groups)
                .zip(opt.states.iter_mut())
            {
                adamw_step(params, grads, state, lr, &adamw)?;
            }
            if cfg.loss_config.temperature_trainable {
                let mut theta = [log_tau];
                adamw_step(
                    &mut theta,
                    &[out.loss.grad_log_tau],
                    &mut opt.tau,
                    lr,
                    &tau_adamw,
                )?;
                log_tau = theta[0].clamp(lo, hi);
            }
            if !model.is_finite() {
                return Err(Error::Diverged {
                    step,
                    detail: format!("epoch {epoch}: parameters became non-finite"),
                });
            }
            loss_sum += out.loss.value;
            steps += 1;
        }

        let dev_score = evaluate_split(
            model,
            dev,
            cfg.dev_metric,
            cfg.metric_k,
            cfg.protocol,
            cfg.loss_config.threshold,
            exec,
        )?;
        if !dev_score.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("epoch {epoch}: dev score is not finite"),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: if steps > 0 {
                loss_sum / steps as f64
            } else {
                f64::NAN
            },
            steps,
            skipped_batches: skipped,
            dev_score,
            temperature: libm::exp(log_tau),
        };
        let checkpoint = Checkpoint {
            model: model.clone(),
            log_temperature: log_tau,
            config_hash,
        };
        observer.on_epoch(seed, &record, &checkpoint)?;
        if best.as_ref().is_none_or(|b| dev_score > b.0) {
            best = Some((dev_score, epoch, checkpoint));
        }
        history.push(record);
    }

    let (best_score, selected_epoch, best) = best.expect("at least one epoch");
    Ok(TrainRun {
        seed,
        history,
        selected_epoch,
        best_score,
        best,
    })
}

/// Outcome of [`seed_search`]: the selected run and every attempted seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSearch {
    pub best: TrainRun,
    pub runs: Vec<(u64, core::result::Result<TrainRun, Error>)>,
}

/// Seeds in first-occurrence order with repeats removed.
pub fn dedup_seeds(seeds: &[u64]) -> Vec<u64> {
    let mut seen = BTreeSet::new();
    seeds.iter().copied().filter(|s| seen.insert(*s)).collect()
}

/// Trains every distinct seed and keeps the run with the best selected dev
/// score (lowest seed on ties).
pub fn seed_search(
    train_split: &[PairRecord],
    dev: &[PairRecord],
    cfg: &TrainConfig,
    exec: &dyn Executor,
    observer: &mut dyn EpochObserver,
) -> Result<SeedSearch> {
    cfg.validate()?;
    let seeds = dedup_seeds(&cfg.seeds);
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        runs.push((seed, train(train_split, dev, cfg, seed, exec, observer)));
    }
    let best = runs
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .fold(None::<&TrainRun>, |acc, r| match acc {
            Some(b)
                if b.best_score > r.best_score
                    || (b.best_score == r.best_score && b.seed < r.seed) =>
            {
                Some(b)
            }
            _ => Some(r),
        })
        .cloned();
    match best {
        Some(best) => Ok(SeedSearch { best, runs }),
        None => {
            let first = runs
                .iter()
                .find_map(|(_, r)| r.as_ref().err())
                .map(|e| format!("{e}"))
                .unwrap_or_default();
            Err(Error::AllSeedsFailed {
                count: runs.len(),
                first,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Split;
    use crate::shuffle::ShuffleMode;
    use crate::synth::{generate, SynthConfig};

    fn small_data() -> (Vec<PairRecord>, Vec<PairRecord>) {
        let cfg = SynthConfig {
            topics: 3,
            items_per_topic: 6,
            dev_items_per_topic: 3,
            ..SynthConfig::default()
        };
        let recs = generate(&cfg).unwrap();
        let (tr, dv): (Vec<_>, Vec<_>) = recs.into_iter().partition(|r| r.split == Split::Train);
        (tr, dv)
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.02,
            epochs: 2,
            batch_size: 4,
            encoder: EncoderShape {
                hash_buckets: 256,
                dim: 8,
            },
            shuffle: ShuffleConfig {
                group_size: 4,
                k_clusters: 3,
                ..ShuffleConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn slicing_and_step_accounting() {
        assert_eq!(
            slice_batches(&[0, 1, 2, 3, 4], 2, 2),
            [vec![0, 1], vec![2, 3]]
        );
        assert_eq!(slice_batches(&[0, 1, 2, 3, 4], 2, 1).len(), 3);
        let cfg = TrainConfig {
            batch_size: 16,
            ..TrainConfig::default()
        };
        assert_eq!(batches_per_epoch(2, &cfg), 1);
        assert_eq!(batches_per_epoch(33, &cfg), 2);
        assert_eq!(batches_per_epoch(34, &cfg), 3);

        let two = vec![
            PairRecord::new("a", "red fox", "brown dog", 1.0),
            PairRecord::new("b", "blue sky", "green sea", 1.0),
        ];
        let cfg = TrainConfig {
            epochs: 1,
            encoder: EncoderShape {
                hash_buckets: 64,
                dim: 4,
            },
            ..TrainConfig::default()
        };
        let run = train(&two, &two, &cfg, 1, &Sequential, &mut ()).unwrap();
        assert_eq!(run.history[0].steps, 1);
    }

    #[test]
    fn same_seed_same_history() {
        let (tr, dv) = small_data();
        let cfg = small_cfg();
        let a = train(&tr, &dv, &cfg, 3, &Sequential, &mut ()).unwrap();
        let b = train(&tr, &dv, &cfg, 3, &Sequential, &mut ()).unwrap();
        assert_eq!(a, b);
        let bits = |r: &TrainRun| {
            r.history
                .iter()
                .map(|h| (h.dev_score.to_bits(), h.train_loss.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn every_shuffle_mode_and_loss_trains() {
        let (tr, dv) = small_data();
        for mode in ShuffleMode::ALL {
            let mut cfg = small_cfg();
            cfg.epochs = 1;
            cfg.shuffle.mode = mode;
            train(&tr, &dv, &cfg, 0, &Sequential, &mut ()).unwrap();
        }
        for loss in LossVariant::ALL {
            let mut cfg = small_cfg();
            cfg.epochs = 1;
            cfg.loss = loss;
            cfg.loss_config.temperature_trainable = true;
            let run = train(&tr, &dv, &cfg, 0, &Sequential, &mut ()).unwrap();
            let t = run.history[0].temperature;
            assert!((TEMPERATURE_BOUNDS.0..=TEMPERATURE_BOUNDS.1).contains(&t));
        }
    }

    #[test]
    fn plan_is_reproducible() {
        let (tr, _) = small_data();
        let cfg = small_cfg();
        let model = EncoderModel::init(cfg.encoder, 1).unwrap();
        let a = plan_epoch(&model, &tr, &cfg, 1, 2, &Sequential).unwrap();
        let b = plan_epoch(&model, &tr, &cfg, 1, 2, &Sequential).unwrap();
        assert_eq!(a, b);
        let c = plan_epoch(&model, &tr, &cfg, 1, 3, &Sequential).unwrap();
        assert_ne!(a, c);
        let mut flat: Vec<usize> = a.concat();
        flat.sort_unstable();
        assert_eq!(flat, (0..tr.len()).collect::<Vec<_>>());
    }

    #[test]
    fn selection_and_checkpoint_round_trip() {
        let (tr, dv) = small_data();
        let cfg = small_cfg();
        let run = train(&tr, &dv, &cfg, 5, &Sequential, &mut ()).unwrap();
        let max = run
            .dev_scores()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(run.best_score, max);
        let first = run.history.iter().position(|h| h.dev_score == max).unwrap() + 1;
        assert_eq!(run.selected_epoch, first);

        let loaded = Checkpoint::from_bytes(&run.best.to_bytes(), Some(cfg.encoder)).unwrap();
        let score = evaluate_split(
            &loaded.model,
            &dv,
            cfg.dev_metric,
            cfg.metric_k,
            cfg.protocol,
            0.5,
            &Sequential,
        )
        .unwrap();
        assert_eq!(score.to_bits(), run.best_score.to_bits());
    }

    #[test]
    fn seed_search_contract() {
        let (tr, dv) = small_data();
        let mut cfg = small_cfg();
        cfg.epochs = 1;
        cfg.seeds = vec![7, 7];
        let s = seed_search(&tr, &dv, &cfg, &Sequential, &mut ()).unwrap();
        assert_eq!(s.runs.len(), 1);
        assert_eq!(
            s.best,
            train(&tr, &dv, &cfg, 7, &Sequential, &mut ()).unwrap()
        );

        cfg.seeds = vec![1, 2, 3];
        let s = seed_search(&tr, &dv, &cfg, &Sequential, &mut ()).unwrap();
        let max = s
            .runs
            .iter()
            .map(|(_, r)| r.as_ref().unwrap().best_score)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(s.best.best_score, max);
        assert_eq!(dedup_seeds(&[3, 1, 3, 2, 1]), [3, 1, 2]);
    }

    #[test]
    fn config_validation_names_keys() {
        let check = |cfg: TrainConfig, key: &str| match cfg.validate() {
            Err(Error::InvalidConfig { key: k, .. }) => assert_eq!(k, key),
            other => panic!("expected {key} error, got {other:?}"),
        };
        check(
            TrainConfig {
                batch_size: 1,
                ..TrainConfig::default()
            },
            "batch_size",
        );
        check(
            TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            "epochs",
        );
        check(
            TrainConfig {
                warmup_fraction: 1.0,
                ..TrainConfig::default()
            },
            "warmup_fraction",
        );
        check(
            TrainConfig {
                seeds: vec![],
                ..TrainConfig::default()
            },
            "seeds",
        );
        assert!(TrainConfig {
            batch_size: 1,
            loss: LossVariant::Mse,
            ..TrainConfig::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn empty_splits_rejected() {
        let (tr, dv) = small_data();
        assert!(matches!(
            train(&[], &dv, &small_cfg(), 0, &Sequential, &mut ()),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            train(&tr, &[], &small_cfg(), 0, &Sequential, &mut ()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn divergence_reports_step() {
        let (tr, dv) = small_data();
        let cfg = TrainConfig {
            learning_rate: 1e308,
            warmup_fraction: 0.0,
            ..small_cfg()
        };
        match train(&tr, &dv, &cfg, 0, &Sequential, &mut ()) {
            Err(Error::Diverged { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
