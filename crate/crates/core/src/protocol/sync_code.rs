//! Public synchronization strings.
//!
//! A string of length `L = L1 * N1` is built from a balanced base block `b`
//! of length `L1` and a row code `g` of length `N1`:
//! `s[r * L1 + c] = g[r] * b[c]`. Reshaped row-major, the string is the
//! rank-one matrix `g b^T`, which is what lets the receiver correlate in two
//! stages (columns against `b`, then rows against `g`). Both factors are
//! drawn from a seeded generator and then improved by a short seeded local
//! search that lowers their correlation side lobes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{reshape_to_matrix, Matrix};
use crate::error::{param, Result};
use crate::prf;

/// Default small-period length.
pub const DEFAULT_PERIOD_LEN: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncString {
    id: u32,
    base: Vec<i8>,
    rows: Vec<i8>,
    values: Vec<i8>,
}

impl SyncString {
    /// Assembles a string from explicit factors. The factor pair is only
    /// defined up to a common sign, so it is stored with `rows[0] = +1`.
    pub fn from_factors(id: u32, mut base: Vec<i8>, mut rows: Vec<i8>) -> Result<Self> {
        if base.is_empty() || rows.is_empty() {
            return Err(param("sync string factors must be non-empty"));
        }
        if base.iter().chain(rows.iter()).any(|&v| v != 1 && v != -1) {
            return Err(param("sync string entries must be +1 or -1"));
        }
        if rows[0] < 0 {
            base.iter_mut()
                .chain(rows.iter_mut())
                .for_each(|v| *v = -*v);
        }
        let values = rows
            .iter()
            .flat_map(|&g| base.iter().map(move |&b| g * b))
            .collect();
        Ok(SyncString {
            id,
            base,
            rows,
            values,
        })
    }

    /// Recovers the factors from a flat string, if it has the rank-one
    /// structure for the given `L1`.
    pub fn from_values(id: u32, values: &[i8], period_len: usize) -> Result<Self> {
        let m = reshape_to_matrix(values, period_len)?;
        let base = m.row(0).to_vec();
        let mut rows = Vec::with_capacity(m.rows());
        for r in 0..m.rows() {
            let sign = m.get(r, 0) * base[0];
            if m.row(r).iter().zip(&base).any(|(&v, &b)| v != sign * b) {
                return Err(param(format!(
                    "row {r} is not a signed copy of the base block"
                )));
            }
            rows.push(sign);
        }
        Self::from_factors(id, base, rows)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `L1`.
    pub fn period_len(&self) -> usize {
        self.base.len()
    }

    /// `N1`.
    pub fn periods(&self) -> usize {
        self.rows.len()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn base_block(&self) -> &[i8] {
        &self.base
    }

    pub fn row_code(&self) -> &[i8] {
        &self.rows
    }

    /// The public matrix `M_i` (`N1 x L1`).
    pub fn matrix(&self) -> Matrix<i8> {
        reshape_to_matrix(&self.values, self.period_len()).expect("length is N1 * L1")
    }

    /// Cyclic autocorrelation at `lag`.
    pub fn autocorrelation(&self, lag: usize) -> i64 {
        let l = self.len();
        (0..l)
            .map(|j| i64::from(self.values[j]) * i64::from(self.values[(j + lag) % l]))
            .sum()
    }
}

/// Builds the public string for transmitter `id`.
pub fn generate_sync_string(
    len: usize,
    period_len: usize,
    id: u32,
    seed: u64,
) -> Result<SyncString> {
    if period_len < 2 {
        return Err(param("L1 must be at least 2"));
    }
    if len == 0 || len % period_len != 0 {
        return Err(param(format!(
            "L = {len} is not a multiple of L1 = {period_len}"
        )));
    }
    let periods = len / period_len;
    let mut rng = ChaCha8Rng::seed_from_u64(prf::derive(seed, &[0x5359_4E43, u64::from(id)]));

    let mut base: Vec<i8> = (0..period_len)
        .map(|i| if i < period_len / 2 { 1 } else { -1 })
        .collect();
    base.shuffle(&mut rng);
    optimize_base(&mut base, &mut rng);

    let mut rows: Vec<i8> = (0..periods)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    optimize_rows(&mut rows, &mut rng);

    SyncString::from_factors(id, base, rows)
}

/// Picks `L1` for a string of length `L`: 1000 when it divides `L` and
/// leaves at least two periods, otherwise the divisor closest to `sqrt(L)`.
pub fn default_period_len(len: usize) -> usize {
    if len % DEFAULT_PERIOD_LEN == 0 && len / DEFAULT_PERIOD_LEN >= 2 {
        return DEFAULT_PERIOD_LEN;
    }
    let root = (len as f64).sqrt();
    (2..=len)
        .filter(|d| len % d == 0)
        .min_by(|a, b| {
            let da = (*a as f64 - root).abs();
            let db = (*b as f64 - root).abs();
            da.partial_cmp(&db).unwrap()
        })
        .unwrap_or(len)
}

// Budget of elementary updates spent on each local search.
const SEARCH_BUDGET: usize = 8_000_000;

/// Lowers the peak aperiodic autocorrelation of a balanced block with
/// balance-preserving swaps.
fn optimize_base(b: &mut [i8], rng: &mut ChaCha8Rng) {
    let n = b.len();
    if n < 4 {
        return;
    }
    let mut corr: Vec<i64> = (0..n)
        .map(|e| (0..n - e).map(|c| i64::from(b[c] * b[c + e])).sum())
        .collect();
    let peak = |corr: &[i64]| corr[1..].iter().map(|v| v.abs()).max().unwrap_or(0);
    let mut best = peak(&corr);
    let attempts = (SEARCH_BUDGET / (4 * n)).min(40 * n);
    for _ in 0..attempts {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if b[i] == b[j] {
            continue;
        }
        flip_aperiodic(b, &mut corr, i);
        flip_aperiodic(b, &mut corr, j);
        let p = peak(&corr);
        if p <= best {
            best = p;
        } else {
            flip_aperiodic(b, &mut corr, j);
            flip_aperiodic(b, &mut corr, i);
        }
    }
}

fn flip_aperiodic(b: &mut [i8], corr: &mut [i64], j: usize) {
    let n = b.len();
    let bj = i64::from(b[j]);
    for (e, c) in corr.iter_mut().enumerate().skip(1) {
        let mut s = 0;
        if j + e < n {
            s += i64::from(b[j + e]);
        }
        if j >= e {
            s += i64::from(b[j - e]);
        }
        *c -= 2 * bj * s;
    }
    b[j] = -b[j];
}

/// Lowers the peak periodic autocorrelation side lobe of the row code.
fn optimize_rows(g: &mut [i8], rng: &mut ChaCha8Rng) {
    let n = g.len();
    if n < 3 {
        return;
    }
    let mut corr: Vec<i64> = (0..n)
        .map(|k| (0..n).map(|r| i64::from(g[r] * g[(r + k) % n])).sum())
        .collect();
    // Peak side lobe first, side-lobe energy as the tie-break.
    let score = |corr: &[i64]| {
        let side = &corr[1..];
        (
            side.iter().map(|v| v.abs()).max().unwrap_or(0),
            side.iter().map(|v| v * v).sum::<i64>(),
        )
    };
    let mut best = score(&corr);
    for _ in 0..SEARCH_BUDGET / (2 * n) {
        let j = rng.random_range(0..n);
        flip_periodic(g, &mut corr, j);
        let s = score(&corr);
        if s <= best {
            best = s;
        } else {
            flip_periodic(g, &mut corr, j);
        }
    }
}

fn flip_periodic(g: &mut [i8], corr: &mut [i64], j: usize) {
    let n = g.len();
    let gj = i64::from(g[j]);
    for (k, c) in corr.iter_mut().enumerate().skip(1) {
        let fwd = i64::from(g[(j + k) % n]);
        let back = i64::from(g[(j + n - k) % n]);
        *c -= 2 * gj * (fwd + back);
    }
    g[j] = -g[j];
}
