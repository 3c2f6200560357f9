//! Algebraic and spatial empirical measures of words.
//!
//! All block statistics use the cyclic convention: indices past `N` wrap
//! around to the start of the word. Spatial bins are the half-open
//! intervals `((j−1)/L, j/L]`, so site `i` (macroscopic position `i/N`)
//! falls in bin `⌈i·L/N⌉`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::Word;

/// Largest supported block order.
pub const MAX_ORDER: usize = 8;

/// Probability weights on `A^k`, indexed lexicographically (first symbol most
/// significant).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KWordMeasure {
    pub order: usize,
    pub alphabet_size: usize,
    pub weights: Vec<f64>,
}

impl KWordMeasure {
    pub fn new(order: usize, alphabet_size: usize, weights: Vec<f64>) -> Result<Self> {
        check_order(order)?;
        if alphabet_size < 1 {
            return Err(Error::Invalid("alphabet must be non-empty".into()));
        }
        if weights.len() != alphabet_size.pow(order as u32) {
            return Err(Error::Invalid(format!(
                "expected {} weights for order {order}",
                alphabet_size.pow(order as u32)
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Invalid("weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            order,
            alphabet_size,
            weights,
        })
    }

    pub fn uniform(order: usize, alphabet_size: usize) -> Result<Self> {
        let n = alphabet_size.pow(order as u32);
        Self::new(order, alphabet_size, vec![1.0 / n as f64; n])
    }

    pub fn get(&self, word: &[usize]) -> f64 {
        self.weights[word_index(word, self.alphabet_size)]
    }

    /// Marginal on the first `k−1` symbols.
    pub fn prefix_marginal(&self) -> Vec<f64> {
        let a = self.alphabet_size;
        self.weights
            .chunks(a)
            .map(|c| c.iter().sum())
            .collect()
    }

    /// Marginal on the last `k−1` symbols.
    pub fn suffix_marginal(&self) -> Vec<f64> {
        let a = self.alphabet_size;
        let stride = a.pow(self.order as u32 - 1);
        let mut out = vec![0.0; stride];
        for (i, w) in self.weights.iter().enumerate() {
            out[i % stride] += w;
        }
        out
    }

    /// The order `k−1` measure obtained by dropping the last symbol.
    pub fn lower(&self) -> Result<Self> {
        if self.order < 2 {
            return Err(Error::Invalid("order 1 has no lower marginal".into()));
        }
        Self::new(self.order - 1, self.alphabet_size, self.prefix_marginal())
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Masses of the spatial empirical measure per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMeasure {
    pub bins: usize,
    pub masses: Vec<f64>,
}

/// Bin × word masses of the generalized spatial empirical measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedSpatialMeasure {
    pub bins: usize,
    pub order: usize,
    pub alphabet_size: usize,
    /// `masses[j][w]`: mass of word index `w` in bin `j`.
    pub masses: Vec<Vec<f64>>,
}

impl GeneralizedSpatialMeasure {
    /// Total mass per word over all bins.
    pub fn full_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.alphabet_size.pow(self.order as u32)];
        for row in &self.masses {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Rows of a CSV table with columns `bin_left, bin_right, word, mass`.
    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows = vec!["bin_left,bin_right,word,mass".to_string()];
        let l = self.bins as f64;
        for (j, row) in self.masses.iter().enumerate() {
            for (w, m) in row.iter().enumerate() {
                let word = Word::from_index(w, self.order, self.alphabet_size);
                rows.push(format!(
                    "{:.15e},{:.15e},{word},{m:.15e}",
                    j as f64 / l,
                    (j + 1) as f64 / l
                ));
            }
        }
        rows
    }
}

fn check_order(k: usize) -> Result<()> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::Invalid(format!(
            "block order must lie in 1..={MAX_ORDER}, got {k}"
        )));
    }
    Ok(())
}

pub(crate) fn word_index(word: &[usize], alphabet_size: usize) -> usize {
    word.iter().fold(0, |acc, s| acc * alphabet_size + s)
}

/// Index of the cyclic block starting at 0-based site `i`.
fn block_index(symbols: &[usize], i: usize, k: usize, alphabet_size: usize) -> usize {
    let n = symbols.len();
    (0..k).fold(0, |acc, t| acc * alphabet_size + symbols[(i + t) % n])
}

/// Bin (0-based) of the 1-based site `i` among `n` sites and `bins` bins.
pub fn bin_of(i: usize, n: usize, bins: usize) -> usize {
    (i * bins).div_ceil(n) - 1
}

/// Integer counts of cyclic `k`-blocks.
pub fn block_counts(eta: &Word, k: usize) -> Result<Vec<u64>> {
    check_order(k)?;
    let a = eta.alphabet_size();
    let mut counts = vec![0u64; a.pow(k as u32)];
    for i in 0..eta.len() {
        counts[block_index(eta.symbols(), i, k, a)] += 1;
    }
    Ok(counts)
}

/// `ν̂^k = (1/N) Σ_i δ_{η_i … η_{i+k−1}}` with cyclic wrap.
pub fn empirical_k(eta: &Word, k: usize) -> Result<KWordMeasure> {
    let n = eta.len() as f64;
    let weights = block_counts(eta, k)?
        .into_iter()
        .map(|c| c as f64 / n)
        .collect();
    Ok(KWordMeasure {
        order: k,
        alphabet_size: eta.alphabet_size(),
        weights,
    })
}

/// `π̂ = (1/N) Σ_i η_i δ_{i/N}`, binned.
pub fn spatial_empirical(eta: &Word, bins: usize) -> Result<SpatialMeasure> {
    if bins == 0 {
        return Err(Error::Invalid("bins must be at least 1".into()));
    }
    let n = eta.len();
    let mut masses = vec![0.0; bins];
    for (i0, &s) in eta.symbols().iter().enumerate() {
        masses[bin_of(i0 + 1, n, bins)] += s as f64;
    }
    masses.iter_mut().for_each(|m| *m /= n as f64);
    Ok(SpatialMeasure { bins, masses })
}

/// `Π̂^k = (1/N) Σ_i δ_{i/N} ⊗ δ_{η_i … η_{i+k−1}}`, binned, cyclic wrap.
pub fn generalized_spatial(eta: &Word, k: usize, bins: usize) -> Result<GeneralizedSpatialMeasure> {
    check_order(k)?;
    if bins == 0 {
        return Err(Error::Invalid("bins must be at least 1".into()));
    }
    let a = eta.alphabet_size();
    let n = eta.len();
    let mut masses = vec![vec![0.0; a.pow(k as u32)]; bins];
    for i0 in 0..n {
        masses[bin_of(i0 + 1, n, bins)][block_index(eta.symbols(), i0, k, a)] += 1.0 / n as f64;
    }
    Ok(GeneralizedSpatialMeasure {
        bins,
        order: k,
        alphabet_size: a,
        masses,
    })
}

/// Finite stationarity: `Σ_a ν(ξa) = Σ_a ν(aξ)` for every `ξ ∈ A^{k−1}`.
pub fn check_stationary(nu: &KWordMeasure, tol: f64) -> bool {
    if nu.order < 2 {
        return true;
    }
    nu.prefix_marginal()
        .iter()
        .zip(nu.suffix_marginal())
        .all(|(p, s)| (p - s).abs() <= tol)
}
