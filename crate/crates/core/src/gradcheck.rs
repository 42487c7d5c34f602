//! Central finite-difference checks of every hand-written backward pass.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::Matrix;
use crate::encoder::{EncoderModel, EncoderShape};
use crate::error::Result;
use crate::losses::{
    batch_triplet_loss, pair_loss, LossConfig, LossOutput, LossVariant, PairBatch,
};
use crate::normalization::NormalizationMode;

/// Tolerance for checks against loss inputs.
pub const LOSS_TOLERANCE: f64 = 1e-6;
/// Tolerance for checks through the encoder into its parameters.
pub const CHAIN_TOLERANCE: f64 = 1e-5;

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-8;

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    let plus = f(x + h);
    let minus = f(x - h);
    (plus - minus) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|)`, with a small floor on the denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)` over whole gradient vectors, floored like
/// [`relative_error`]. Entries that are tiny next to the rest of the vector
/// therefore do not dominate.
pub fn vector_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum());
    let na = crate::dense::l2_norm(a);
    let nb = crate::dense::l2_norm(b);
    diff / na.max(nb).max(FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: String, max_rel_error: f64, tolerance: f64) -> Self {
        Self {
            name,
            max_rel_error,
            tolerance,
            passed: max_rel_error <= tolerance,
        }
    }
}

/// Numerical gradient of `f` with respect to every entry of `m`.
fn fd_matrix(m: &Matrix, mut f: impl FnMut(&Matrix) -> f64) -> Vec<f64> {
    let mut probe = m.clone();
    (0..m.as_slice().len())
        .map(|k| {
            let x = m.as_slice()[k];
            let g = central_difference(
                |v| {
                    probe.as_mut_slice()[k] = v;
                    f(&probe)
                },
                x,
                STEP,
            );
            probe.as_mut_slice()[k] = x;
            g
        })
        .collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).expect("finite random data")
}

fn check_config(mode: NormalizationMode, trainable: bool) -> LossConfig {
    LossConfig {
        temperature: 0.5,
        combo_weight: 0.6,
        threshold: 0.5,
        normalization: mode,
        symmetrize: true,
        temperature_trainable: trainable,
    }
}

/// Row `i` takes answer `i + 1` (cyclically) as its triplet negative; the
/// choice is held fixed while differencing.
fn fixed_negatives(batch: &PairBatch) -> Vec<Option<usize>> {
    let m = batch.len();
    (0..m).map(|i| Some((i + 1) % m)).collect()
}

fn evaluate(
    variant: LossVariant,
    batch: &PairBatch,
    cfg: &LossConfig,
    negatives: &[Option<usize>],
) -> Result<LossOutput> {
    match variant {
        LossVariant::Triplet => batch_triplet_loss(batch, cfg, negatives, 1.0),
        v => pair_loss(v, batch, cfg),
    }
}

/// Checks `∂L/∂Q`, `∂L/∂A` (and `∂L/∂ln τ` when trainable) of one variant
/// under one normalization mode on a random 5×4 batch with mixed labels.
pub fn check_loss(
    variant: LossVariant,
    mode: NormalizationMode,
    trainable: bool,
    seed: u64,
) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (5, 4);
    let q = random_matrix(&mut rng, m, n);
    let a = random_matrix(&mut rng, m, n);
    let batch = PairBatch::new(q, a, vec![1.0, 0.0, 0.9, 0.3, 1.0])?;
    let cfg = check_config(mode, trainable);
    let negatives = fixed_negatives(&batch);

    let out = evaluate(variant, &batch, &cfg, &negatives)?;
    let value = |b: &PairBatch, c: &LossConfig| {
        evaluate(variant, b, c, &negatives)
            .map(|o| o.value)
            .unwrap_or(f64::NAN)
    };

    let fd_q = fd_matrix(&batch.q, |q| {
        value(
            &PairBatch {
                q: q.clone(),
                ..batch.clone()
            },
            &cfg,
        )
    });
    let fd_a = fd_matrix(&batch.a, |a| {
        value(
            &PairBatch {
                a: a.clone(),
                ..batch.clone()
            },
            &cfg,
        )
    });
    let mut worst = vector_relative_error(out.grad_q.as_slice(), &fd_q)
        .max(vector_relative_error(out.grad_a.as_slice(), &fd_a));
    if trainable {
        let theta = libm::log(cfg.temperature);
        let fd_theta = central_difference(
            |t| {
                value(
                    &batch,
                    &LossConfig {
                        temperature: libm::exp(t),
                        ..cfg.clone()
                    },
                )
            },
            theta,
            STEP,
        );
        worst = worst.max(relative_error(out.grad_log_tau, fd_theta));
    }
    let name = format!(
        "loss/{variant}/{mode}{}",
        if trainable { "/trainable_tau" } else { "" }
    );
    Ok(CheckResult::new(
        name,
        nan_is_failure(worst),
        LOSS_TOLERANCE,
    ))
}

fn nan_is_failure(e: f64) -> f64 {
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

const CHAIN_PAIRS: [(&str, &str, f64); 4] = [
    (
        "how do i reset my router",
        "unplug the router and wait thirty seconds",
        1.0,
    ),
    (
        "best way to cook rice",
        "rinse rice then simmer covered",
        0.0,
    ),
    (
        "why is the sky blue",
        "sunlight scatters off air molecules",
        1.0,
    ),
    (
        "router keeps dropping wifi",
        "update the router firmware",
        1.0,
    ),
];

/// Checks the full chain texts → encoder → normalization → loss against
/// finite differences in every encoder parameter.
pub fn check_encoder_chain(
    variant: LossVariant,
    mode: NormalizationMode,
    seed: u64,
) -> Result<CheckResult> {
    let shape = EncoderShape {
        hash_buckets: 64,
        dim: 16,
    };
    let mut model = EncoderModel::init(shape, seed)?;
    // widen the parameters so tanh leaves its linear regime
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for group in model.groups_mut() {
        group
            .iter_mut()
            .for_each(|p| *p += rng.gen_range(-0.3..0.3));
    }
    let qs: Vec<&str> = CHAIN_PAIRS.iter().map(|p| p.0).collect();
    let as_: Vec<&str> = CHAIN_PAIRS.iter().map(|p| p.1).collect();
    let labels: Vec<f64> = CHAIN_PAIRS.iter().map(|p| p.2).collect();
    let cfg = check_config(mode, false);
    let negatives: Vec<Option<usize>> = (0..4).map(|i| Some((i + 1) % 4)).collect();

    let objective = |model: &EncoderModel| -> Result<(LossOutput, _, _)> {
        let cq = model.forward(&qs)?;
        let ca = model.forward(&as_)?;
        let batch = PairBatch::new(cq.output().clone(), ca.output().clone(), labels.clone())?;
        Ok((evaluate(variant, &batch, &cfg, &negatives)?, cq, ca))
    };

    let (out, cq, ca) = objective(&model)?;
    let mut grads = model.backward(&cq, &out.grad_q)?;
    model.backward_into(&ca, &out.grad_a, &mut grads);

    let mut worst: f64 = 0.0;
    for g in 0..3 {
        let len = model.groups()[g].len();
        let mut numeric = Vec::with_capacity(len);
        for k in 0..len {
            let x = model.groups()[g][k];
            let d = central_difference(
                |v| {
                    model.groups_mut()[g][k] = v;
                    objective(&model).map(|o| o.0.value).unwrap_or(f64::NAN)
                },
                x,
                STEP,
            );
            model.groups_mut()[g][k] = x;
            numeric.push(d);
        }
        worst = worst.max(vector_relative_error(grads.groups()[g], &numeric));
    }
    Ok(CheckResult::new(
        format!("encoder/{variant}/{mode}"),
        nan_is_failure(worst),
        CHAIN_TOLERANCE,
    ))
}

/// Every variant × normalization mode × {fixed, trainable} temperature, plus
/// the encoder chain for every variant × mode.
pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();
    for variant in LossVariant::ALL {
        for mode in NormalizationMode::ALL {
            for trainable in [false, true] {
                results.push(check_loss(variant, mode, trainable, seed)?);
            }
        }
    }
    for variant in LossVariant::ALL {
        for mode in NormalizationMode::ALL {
            results.push(check_encoder_chain(variant, mode, seed)?);
        }
    }
    Ok(results)
}
