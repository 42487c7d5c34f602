//! Siamese bag-of-n-grams text encoder.
//!
//! A text is tokenized, its unigrams and bigrams are hashed into `B` buckets
//! with 64-bit FNV-1a, the bucket embeddings are mean-pooled and the result is
//! passed through one dense layer with a `tanh` activation:
//!
//! ```text
//! h = Σ_f (count_f / total) · E[f]      y = tanh(h W + b)
//! ```
//!
//! Both sides of a pair are encoded with the same parameters.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::Matrix;
use crate::error::{shape_err, Error, Result};
use crate::text::{fnv1a64, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EncoderShape {
    pub hash_buckets: usize,
    pub dim: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        Self {
            hash_buckets: 4096,
            dim: 32,
        }
    }
}

impl EncoderShape {
    pub fn validate(&self) -> Result<()> {
        if self.hash_buckets == 0 {
            return Err(Error::InvalidConfig {
                key: "hash_buckets",
                reason: "must be at least 1".into(),
            });
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig {
                key: "dim",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Hashed unigram and bigram buckets of one text with their pooling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures {
    /// `(bucket, count)` sorted by bucket.
    pub counts: Vec<(usize, u32)>,
    pub total: u32,
}

impl TokenFeatures {
    pub fn extract(text: &str, buckets: usize) -> Self {
        let tokens = tokenize(text);
        let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
        let mut bump = |h: u64| *counts.entry((h % buckets as u64) as usize).or_insert(0) += 1;
        for t in &tokens {
            bump(fnv1a64([b"u\x1f".as_slice(), t.as_bytes()]));
        }
        for w in tokens.windows(2) {
            bump(fnv1a64([
                b"b\x1f".as_slice(),
                w[0].as_bytes(),
                b" ".as_slice(),
                w[1].as_bytes(),
            ]));
        }
        let total = counts.values().sum();
        Self {
            counts: counts.into_iter().collect(),
            total,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    shape: EncoderShape,
    /// `B x n` bucket embeddings, row-major.
    pub table: Vec<f64>,
    /// `n x n` projection, row-major; output `l` is `Σ_k h_k W[k][l]`.
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub table: Vec<f64>,
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros(shape: EncoderShape) -> Self {
        Self {
            table: vec![0.0; shape.hash_buckets * shape.dim],
            projection: vec![0.0; shape.dim * shape.dim],
            bias: vec![0.0; shape.dim],
        }
    }

    pub fn accumulate(&mut self, other: &EncoderGrads) {
        for (a, b) in self.groups_mut().into_iter().zip(other.groups()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn groups(&self) -> [&[f64]; 3] {
        [&self.table, &self.projection, &self.bias]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.table, &mut self.projection, &mut self.bias]
    }

    pub fn is_finite(&self) -> bool {
        self.groups()
            .iter()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate values of a batch forward pass, consumed by [`EncoderModel::backward`].
#[derive(Debug, Clone)]
pub struct EncoderCache {
    features: Vec<TokenFeatures>,
    pooled: Matrix,
    output: Matrix,
}

impl EncoderCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl EncoderModel {
    /// Table uniform in `[-0.05, 0.05]`, projection identity plus uniform
    /// noise in `[-0.01, 0.01]`, bias uniform in `[-0.01, 0.01]`.
    pub fn init(shape: EncoderShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.dim;
        let table = (0..shape.hash_buckets * n)
            .map(|_| rng.gen_range(-0.05..=0.05))
            .collect();
        let mut projection: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-0.01..=0.01)).collect();
        for k in 0..n {
            projection[k * n + k] += 1.0;
        }
        let bias = (0..n).map(|_| rng.gen_range(-0.01..=0.01)).collect();
        Ok(Self {
            shape,
            table,
            projection,
            bias,
        })
    }

    /// Builds a model from explicit parameters, checking their sizes.
    pub fn from_parts(
        shape: EncoderShape,
        table: Vec<f64>,
        projection: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        shape.validate()?;
        let n = shape.dim;
        if table.len() != shape.hash_buckets * n || projection.len() != n * n || bias.len() != n {
            return Err(shape_err!(
                "parameter sizes do not match {}x{} encoder",
                shape.hash_buckets,
                n
            ));
        }
        let model = Self {
            shape,
            table,
            projection,
            bias,
        };
        if !model.is_finite() {
            return Err(Error::Domain("non-finite encoder parameter".into()));
        }
        Ok(model)
    }

    pub fn shape(&self) -> EncoderShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn param_count(&self) -> usize {
        self.table.len() + self.projection.len() + self.bias.len()
    }

    pub fn groups(&self) -> [&[f64]; 3] {
        [&self.table, &self.projection, &self.bias]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.table, &mut self.projection, &mut self.bias]
    }

    pub fn is_finite(&self) -> bool {
        self.groups()
            .iter()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn features(&self, text: &str) -> TokenFeatures {
        TokenFeatures::extract(text, self.shape.hash_buckets)
    }

    fn pool(&self, f: &TokenFeatures, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if f.is_empty() {
            return;
        }
        let n = self.shape.dim;
        for &(bucket, count) in &f.counts {
            let w = f64::from(count) / f64::from(f.total);
            let row = &self.table[bucket * n..(bucket + 1) * n];
            out.iter_mut().zip(row).for_each(|(o, e)| *o += w * e);
        }
    }

    fn project(&self, pooled: &[f64], out: &mut [f64]) {
        let n = self.shape.dim;
        out.copy_from_slice(&self.bias);
        for (k, &h) in pooled.iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            let w = &self.projection[k * n..(k + 1) * n];
            out.iter_mut().zip(w).for_each(|(o, x)| *o += h * x);
        }
        out.iter_mut().for_each(|v| *v = libm::tanh(*v));
    }

    pub fn encode_features(&self, f: &TokenFeatures) -> Vec<f64> {
        let n = self.shape.dim;
        let mut pooled = vec![0.0; n];
        let mut out = vec![0.0; n];
        self.pool(f, &mut pooled);
        self.project(&pooled, &mut out);
        out
    }

    /// Encodes one text. An empty text encodes to `tanh(b)`.
    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.encode_features(&self.features(text))
    }

    /// Encodes a batch and keeps what the backward pass needs.
    pub fn forward<S: AsRef<str>>(&self, texts: &[S]) -> Result<EncoderCache> {
        if texts.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = self.shape.dim;
        let m = texts.len();
        let features: Vec<TokenFeatures> =
            texts.iter().map(|t| self.features(t.as_ref())).collect();
        let mut pooled = Matrix::zeros(m, n);
        let mut output = Matrix::zeros(m, n);
        for (i, f) in features.iter().enumerate() {
            self.pool(f, pooled.row_mut(i));
            let (p, o) = (pooled.row(i).to_vec(), output.row_mut(i));
            self.project(&p, o);
        }
        Ok(EncoderCache {
            features,
            pooled,
            output,
        })
    }

    /// Exact parameter gradients given `∂L/∂output` (`m x n`).
    pub fn backward(&self, cache: &EncoderCache, upstream: &Matrix) -> Result<EncoderGrads> {
        if upstream.shape() != cache.output.shape() {
            return Err(shape_err!(
                "upstream gradient is {}x{}, encoder output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                cache.output.rows(),
                cache.output.cols()
            ));
        }
        let n = self.shape.dim;
        let mut grads = EncoderGrads::zeros(self.shape);
        self.backward_into(cache, upstream, &mut grads);
        debug_assert_eq!(grads.bias.len(), n);
        Ok(grads)
    }

    /// Adds the gradients of one batch into `grads` in row order.
    pub fn backward_into(&self, cache: &EncoderCache, upstream: &Matrix, grads: &mut EncoderGrads) {
        let n = self.shape.dim;
        let mut dz = vec![0.0; n];
        let mut dh = vec![0.0; n];
        for (i, f) in cache.features.iter().enumerate() {
            let y = cache.output.row(i);
            let g = upstream.row(i);
            let mut any = false;
            for l in 0..n {
                dz[l] = g[l] * (1.0 - y[l] * y[l]);
                any |= dz[l] != 0.0;
            }
            if !any {
                continue;
            }
            let h = cache.pooled.row(i);
            for (b, d) in grads.bias.iter_mut().zip(&dz) {
                *b += d;
            }
            for k in 0..n {
                let wk = &self.projection[k * n..(k + 1) * n];
                dh[k] = crate::dense::dot(wk, &dz);
                if h[k] != 0.0 {
                    let row = &mut grads.projection[k * n..(k + 1) * n];
                    row.iter_mut().zip(&dz).for_each(|(p, d)| *p += h[k] * d);
                }
            }
            if f.is_empty() {
                continue;
            }
            for &(bucket, count) in &f.counts {
                let w = f64::from(count) / f64::from(f.total);
                let row = &mut grads.table[bucket * n..(bucket + 1) * n];
                row.iter_mut().zip(&dh).for_each(|(e, d)| *e += w * d);
            }
        }
    }
}

const MAGIC: &[u8; 8] = b"BSCENC\r\n";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 8 + 8;

/// Serialized encoder state: parameters, the learned log-temperature and a
/// hash of the run configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EncoderModel,
    pub log_temperature: f64,
    pub config_hash: u64,
}

impl Checkpoint {
    /// Layout (little endian): magic `BSCENC\r\n`, `u32` version, `u64`
    /// buckets, `u64` dim, `u64` config hash, `f64` log-temperature, then the
    /// table, projection and bias as `f64` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.model.shape;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.model.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(shape.hash_buckets as u64).to_le_bytes());
        out.extend_from_slice(&(shape.dim as u64).to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&self.log_temperature.to_le_bytes());
        for group in self.model.groups() {
            for v in group {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a checkpoint; with `expected` set, a different shape is rejected.
    pub fn from_bytes(bytes: &[u8], expected: Option<EncoderShape>) -> Result<Self> {
        let err = |msg: String| Error::Checkpoint(msg);
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(err("not an encoder checkpoint".into()));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(err(alloc::format!("unsupported format version {version}")));
        }
        let shape = EncoderShape {
            hash_buckets: u64_at(12) as usize,
            dim: u64_at(20) as usize,
        };
        if let Some(exp) = expected {
            if exp != shape {
                return Err(err(alloc::format!(
                    "shape mismatch: checkpoint is {}x{}, expected {}x{}",
                    shape.hash_buckets,
                    shape.dim,
                    exp.hash_buckets,
                    exp.dim
                )));
            }
        }
        let config_hash = u64_at(28);
        let log_temperature = f64::from_bits(u64_at(36));
        let n = shape.dim;
        let counts = [shape.hash_buckets.saturating_mul(n), n * n, n];
        let body: usize = counts.iter().sum();
        if bytes.len() != HEADER_LEN + 8 * body {
            return Err(err(alloc::format!(
                "expected {} bytes for a {}x{} encoder, found {}",
                HEADER_LEN + 8 * body,
                shape.hash_buckets,
                n,
                bytes.len()
            )));
        }
        let mut floats = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |k: usize| -> Vec<f64> { floats.by_ref().take(k).collect() };
        let (table, projection, bias) = (take(counts[0]), take(counts[1]), take(counts[2]));
        let model = EncoderModel::from_parts(shape, table, projection, bias)
            .map_err(|e| err(alloc::format!("{e}")))?;
        Ok(Self {
            model,
            log_temperature,
            config_hash,
        })
    }
}
