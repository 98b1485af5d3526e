//! Exact sampling through the mixture representation
//! `U_m = F_{m, I_m}^{-1}(Q_m)` with the index state `I` drawn first.
//!
//! Random streams: a ChaCha8 generator keyed by the seed, with stream 0
//! for index states and stream `m` for margin `m` (1-based). Row `i` reads
//! the index stream from word `i << 32` and margin streams from word `2i`,
//! so every row is a pure function of `(seed, i)`. Rows are generated in
//! parallel chunks and the output does not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::Component;
use crate::copula::{PoweredCopula, SarmanovCopula};
use crate::error::Result;

/// Rows per parallel work unit.
const CHUNK_ROWS: usize = 4096;

/// `n` points in `[0, 1]^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub copula_id: String,
    pub rows: Vec<f64>,
}

impl SampleBatch {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.rows.iter().skip(m).step_by(self.d).copied().collect()
    }

    /// Header `u1,...,ud`, then one row per point at 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.d).map(|m| format!("u{m}")).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.n {
            line.clear();
            for (m, x) in self.row(i).iter().enumerate() {
                if m > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{x:.16e}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Fraction of rows with every coordinate at or below `u`.
    pub fn empirical_cdf(&self, u: &[f64]) -> f64 {
        let hits = (0..self.n).filter(|&i| self.row(i).iter().zip(u).all(|(x, b)| x <= b)).count();
        hits as f64 / self.n as f64
    }
}

/// The index-state stream of `seed`.
pub fn index_stream(seed: u64) -> ChaCha8Rng {
    margin_stream(seed, 0)
}

/// Stream `stream` of `seed`: 0 is the index stream, `m >= 1` is margin `m`.
pub fn margin_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Positions the index stream at the start of `row`.
pub fn seek_index_row(rng: &mut ChaCha8Rng, row: usize) {
    rng.set_word_pos((row as u128) << 32);
}

fn fill_rows(c: &SarmanovCopula, seed: u64, first_row: usize, out: &mut [f64]) -> Result<()> {
    let d = c.d();
    let sampler = c.bern().index_sampler()?;
    let mut index_rng = index_stream(seed);
    let mut margin_rngs: Vec<ChaCha8Rng> = (0..d)
        .map(|m| {
            let mut rng = margin_stream(seed, m as u64 + 1);
            rng.set_word_pos(2 * first_row as u128);
            rng
        })
        .collect();
    let mut state = vec![false; d];
    for (offset, row) in out.chunks_mut(d).enumerate() {
        seek_index_row(&mut index_rng, first_row + offset);
        sampler.draw(&mut index_rng, &mut state);
        for (m, x) in row.iter_mut().enumerate() {
            let q: f64 = margin_rngs[m].gen();
            *x = c.margins()[m].quantile(Component::from(state[m]), q);
        }
    }
    Ok(())
}

/// `n` rows from `c`, deterministic in `(c, n, seed)`.
pub fn sample(c: &SarmanovCopula, n: usize, seed: u64) -> Result<SampleBatch> {
    let d = c.d();
    c.bern().index_sampler()?;
    let mut rows = vec![0.0; n * d];
    rows.par_chunks_mut(CHUNK_ROWS * d)
        .enumerate()
        .try_for_each(|(chunk, out)| fill_rows(c, seed, chunk * CHUNK_ROWS, out))?;
    Ok(SampleBatch { n, d, seed, copula_id: format!("sarmanov-d{d}"), rows })
}

/// `n` rows from the powered copula: row `i` takes the componentwise maximum
/// of rows `i r .. i r + r - 1` of the auxiliary sampler, raised to the power `r`.
pub fn sample_powered(p: &PoweredCopula, n: usize, seed: u64) -> Result<SampleBatch> {
    let r = p.r() as usize;
    let base = sample(p.aux(), n * r, seed)?;
    let mut rows = vec![0.0; n * 2];
    rows.par_chunks_mut(2).enumerate().for_each(|(i, out)| {
        for (m, x) in out.iter_mut().enumerate() {
            let max = (0..r).map(|k| base.rows[(i * r + k) * 2 + m]).fold(0.0, f64::max);
            *x = max.powi(r as i32);
        }
    });
    Ok(SampleBatch { n, d: 2, seed, copula_id: format!("powered-r{r}"), rows })
}
