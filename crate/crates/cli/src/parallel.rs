//! Thread-pool execution for encoding and kNN queries. Work is split per
//! text or per query and collected in input order, so results match the
//! sequential path exactly.

use bsc_core::train::Executor;
use bsc_core::{EncoderModel, Error, FlatIndex, Matrix};
use rayon::prelude::*;

pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    /// `threads == 0` lets rayon pick.
    pub fn new(threads: usize) -> crate::error::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::error::CliError::Runtime(format!("thread pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn search_many(
        &self,
        index: &FlatIndex,
        queries: &Matrix,
        top_n: usize,
    ) -> bsc_core::Result<Vec<Vec<u64>>> {
        self.pool.install(|| {
            (0..queries.rows())
                .into_par_iter()
                .map(|i| index.search(queries.row(i), top_n))
                .collect()
        })
    }
}

impl Executor for Parallel {
    fn encode(&self, model: &EncoderModel, texts: &[&str]) -> bsc_core::Result<Matrix> {
        if texts.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let rows: Vec<Vec<f64>> = self
            .pool
            .install(|| texts.par_iter().map(|t| model.encode(t)).collect());
        Matrix::from_rows(&rows)
    }
}
