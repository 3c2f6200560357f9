//! Rational models and their enlarged Markov representation.
//!
//! A rational model assigns to a word `η ∈ A^N` the weight
//! `⟨y| M^(η₁) ⋯ M^(η_N) |x⟩`, normalized by `Z_N = ⟨y| M^N |x⟩` with
//! `M = Σ_a M^(a)`. Enlarged states `(a, b) ∈ A × B` are indexed as
//! `a·|B| + b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::perron::{
    check_primitive, doob_transform, perron_finite, NonNegativeMatrix,
    StochasticMatrix, DEFAULT_MAX_ITER,
};

/// Products below this magnitude switch to scaled (log-space) accumulation.
const UNDERFLOW: f64 = 1e-300;

/// Family of non-negative matrices with boundary vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalModel {
    matrices: Vec<NonNegativeMatrix>,
    x: Vec<f64>,
    y: Vec<f64>,
    total: NonNegativeMatrix,
}

impl RationalModel {
    /// Structural validation only: shared dimension, non-negative non-zero
    /// boundary vectors. Finite-case operations additionally call
    /// [`RationalModel::require_finite_case`].
    pub fn new(matrices: Vec<NonNegativeMatrix>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if matrices.len() < 2 {
            return Err(Error::Invalid("alphabet must have at least 2 symbols".into()));
        }
        let dim = matrices[0].dim();
        if matrices.iter().any(|m| m.dim() != dim) {
            return Err(Error::Invalid("all symbol matrices must share a dimension".into()));
        }
        for (name, v) in [("x", &x), ("y", &y)] {
            if v.len() != dim {
                return Err(Error::Invalid(format!(
                    "vector {name} has length {}, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || v.iter().all(|t| *t == 0.0) {
                return Err(Error::Invalid(format!(
                    "vector {name} must be non-negative and non-zero"
                )));
            }
        }
        let total = NonNegativeMatrix::sum_of(&matrices)?;
        Ok(Self {
            matrices,
            x,
            y,
            total,
        })
    }

    /// Model with `1×1` matrices `m(a)` and `x = y = 1`.
    pub fn scalar(weights: &[f64]) -> Result<Self> {
        let mats = weights
            .iter()
            .map(|&w| NonNegativeMatrix::new(1, vec![w]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(mats, vec![1.0], vec![1.0])
    }

    /// Strictly positive boundary vectors and primitive symbol matrices.
    pub fn require_finite_case(&self) -> Result<()> {
        if self.x.iter().chain(&self.y).any(|v| *v <= 0.0) {
            return Err(Error::Invalid("boundary vectors must be strictly positive".into()));
        }
        for m in &self.matrices {
            let p = check_primitive(m);
            if !p.is_primitive() {
                return Err(Error::NotPrimitive {
                    irreducible: p.irreducible,
                    period: p.period,
                });
            }
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.total.dim()
    }

    pub fn matrix(&self, a: usize) -> &NonNegativeMatrix {
        &self.matrices[a]
    }

    pub fn matrices(&self) -> &[NonNegativeMatrix] {
        &self.matrices
    }

    /// `M = Σ_a M^(a)`.
    pub fn total_matrix(&self) -> &NonNegativeMatrix {
        &self.total
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Same model with every matrix multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.matrices.iter().map(|m| m.scaled(c)).collect(),
            self.x.clone(),
            self.y.clone(),
        )
    }

    /// The enlarged matrix `𝔐_{(a,b),(a',b')} = M^(a)_{b,b'}`.
    pub fn enlarged_matrix(&self) -> NonNegativeMatrix {
        let na = self.alphabet_size();
        let nb = self.dim();
        let n = na * nb;
        let mut entries = vec![0.0; n * n];
        for a in 0..na {
            for b in 0..nb {
                let row = (a * nb + b) * n;
                for a2 in 0..na {
                    for b2 in 0..nb {
                        entries[row + a2 * nb + b2] = self.matrices[a].get(b, b2);
                    }
                }
            }
        }
        NonNegativeMatrix::new(n, entries).expect("entries copied from valid matrices")
    }
}

/// Non-empty word over `{0, …, alphabet_size−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    symbols: Vec<usize>,
    alphabet_size: usize,
}

impl Word {
    pub fn new(symbols: Vec<usize>, alphabet_size: usize) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Invalid("words must be non-empty".into()));
        }
        if let Some(s) = symbols.iter().find(|s| **s >= alphabet_size) {
            return Err(Error::Invalid(format!(
                "symbol {s} outside alphabet of size {alphabet_size}"
            )));
        }
        Ok(Self {
            symbols,
            alphabet_size,
        })
    }

    /// Parses a compact string of decimal digits, e.g. `"0110"`.
    pub fn parse(text: &str, alphabet_size: usize) -> Result<Self> {
        let symbols = text
            .trim()
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::Invalid(format!("invalid symbol character {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(symbols, alphabet_size)
    }

    /// Word with lexicographic index `idx` among `A^n`; the first symbol is
    /// the most significant digit.
    pub fn from_index(mut idx: usize, n: usize, alphabet_size: usize) -> Self {
        let mut symbols = vec![0; n];
        for s in symbols.iter_mut().rev() {
            *s = idx % alphabet_size;
            idx /= alphabet_size;
        }
        Self {
            symbols,
            alphabet_size,
        }
    }

    pub fn index(&self) -> usize {
        self.symbols
            .iter()
            .fold(0, |acc, s| acc * self.alphabet_size + s)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.symbols {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// A non-negative weight carried together with its logarithm.
///
/// When an intermediate product left `[1e-300, 1e300]` the weight was
/// accumulated with rescaling; `value` may then be `0` or `∞` while `ln`
/// stays exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight {
    pub value: f64,
    pub ln: f64,
    pub log_space: bool,
}

impl Weight {
    fn from_scaled(v: f64, log_scale: f64, log_space: bool) -> Self {
        let ln = v.ln() + log_scale;
        let value = if log_space { ln.exp() } else { v };
        Self {
            value,
            ln,
            log_space,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⟨y| A₁ ⋯ A_n |x⟩` with automatic rescaling.
fn chain_product<'a>(
    y: &[f64],
    mats: impl Iterator<Item = &'a NonNegativeMatrix>,
    x: &[f64],
) -> Weight {
    let mut v = y.to_vec();
    let mut log_scale = 0.0;
    let mut log_space = false;
    for m in mats {
        v = m.vec_mul(&v);
        let top = v.iter().fold(0.0_f64, |acc, t| acc.max(*t));
        if top == 0.0 {
            return Weight {
                value: 0.0,
                ln: f64::NEG_INFINITY,
                log_space,
            };
        }
        if log_space || !(UNDERFLOW..=1.0 / UNDERFLOW).contains(&top) {
            if !log_space {
                log_space = true;
            }
            v.iter_mut().for_each(|t| *t /= top);
            log_scale += top.ln();
        }
    }
    Weight::from_scaled(dot(&v, x), log_scale, log_space)
}

fn check_word(model: &RationalModel, eta: &Word) -> Result<()> {
    if eta.alphabet_size() != model.alphabet_size() {
        return Err(Error::Invalid(format!(
            "word alphabet size {} does not match model alphabet size {}",
            eta.alphabet_size(),
            model.alphabet_size()
        )));
    }
    Ok(())
}

/// Unnormalized weight `⟨y| Π M^(η_i) |x⟩`.
pub fn measure_weight(model: &RationalModel, eta: &Word) -> Result<Weight> {
    check_word(model, eta)?;
    Ok(chain_product(
        model.y(),
        eta.symbols().iter().map(|&a| model.matrix(a)),
        model.x(),
    ))
}

/// `Z_N = ⟨y| M^N |x⟩`.
pub fn partition_function(model: &RationalModel, n: usize) -> Result<Weight> {
    if n == 0 {
        return Err(Error::Invalid("N must be at least 1".into()));
    }
    Ok(chain_product(
        model.y(),
        std::iter::repeat_n(model.total_matrix(), n),
        model.x(),
    ))
}

/// `μ_N(η)`.
pub fn measure_probability(model: &RationalModel, eta: &Word) -> Result<f64> {
    let w = measure_weight(model, eta)?;
    let z = partition_function(model, eta.len())?;
    if z.value == 0.0 && !z.log_space {
        return Err(Error::DegenerateLaw);
    }
    Ok((w.ln - z.ln).exp())
}

/// `y(ζ₁) Π M^(η_i)_{ζ_i, ζ_{i+1}} x(ζ_{N+1})`.
pub fn coupling_weight(model: &RationalModel, eta: &Word, zeta: &[usize]) -> Result<f64> {
    check_word(model, eta)?;
    if zeta.len() != eta.len() + 1 {
        return Err(Error::Invalid(format!(
            "ζ must have length N+1 = {}, got {}",
            eta.len() + 1,
            zeta.len()
        )));
    }
    if let Some(b) = zeta.iter().find(|b| **b >= model.dim()) {
        return Err(Error::Invalid(format!("ζ entry {b} outside B")));
    }
    let mut w = model.y()[zeta[0]];
    for (i, &a) in eta.symbols().iter().enumerate() {
        w *= model.matrix(a).get(zeta[i], zeta[i + 1]);
    }
    Ok(w * model.x()[zeta[eta.len()]])
}

/// Perron data of `M` lifted to `A × B`, with the stochastic conjugate `𝔖`
/// and the bridge boundary functions.
#[derive(Debug, Clone)]
pub struct EnlargedChain {
    pub alphabet_size: usize,
    pub dim_b: usize,
    pub lambda: f64,
    pub e: Vec<f64>,
    /// `ε(a,b) = λ⁻¹ Σ_b' M^(a)_{b,b'} e(b')`; `Σ_a ε(a,b) = e(b)`.
    pub epsilon: Vec<f64>,
    pub s_frak: StochasticMatrix,
    /// Doob transform of `M` on `B`.
    pub s_small: StochasticMatrix,
    /// `f(a,b) = y(b) ε(a,b)`.
    pub f: Vec<f64>,
    /// `g(a,b) = x(b) / ε(a,b)`.
    pub g: Vec<f64>,
}

impl EnlargedChain {
    /// Builds the chain from externally supplied Perron data of `M`
    /// (for instance closed-form data of an infinite family restricted to a
    /// truncation). Rows of `𝔖` are renormalized exactly.
    pub fn from_perron(model: &RationalModel, lambda: f64, e: Vec<f64>) -> Result<Self> {
        let na = model.alphabet_size();
        let nb = model.dim();
        if e.len() != nb || !(lambda > 0.0) || e.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InconsistentEigendata(f64::INFINITY));
        }
        let mut epsilon = Vec::with_capacity(na * nb);
        for a in 0..na {
            let me = model.matrix(a).mul_vec(&e);
            epsilon.extend(me.into_iter().map(|v| v / lambda));
        }
        if epsilon.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Invalid(
                "some symbol matrix has a zero row; ε is not positive".into(),
            ));
        }
        let big = model.enlarged_matrix();
        let n = na * nb;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            let row: Vec<f64> = (0..n)
                .map(|j| big.get(i, j) * epsilon[j] / (lambda * epsilon[i]))
                .collect();
            let s: f64 = row.iter().sum();
            entries.extend(row.into_iter().map(|v| v / s));
        }
        let s_frak = StochasticMatrix::new(NonNegativeMatrix::new(n, entries)?)?;
        let s_small = renormalized_conjugate(model.total_matrix(), lambda, &e)?;
        let mut f = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for a in 0..na {
            for b in 0..nb {
                let eps = epsilon[a * nb + b];
                f.push(model.y()[b] * eps);
                g.push(model.x()[b] / eps);
            }
        }
        Ok(Self {
            alphabet_size: na,
            dim_b: nb,
            lambda,
            e,
            epsilon,
            s_frak,
            s_small,
            f,
            g,
        })
    }

    #[inline]
    pub fn state(&self, a: usize, b: usize) -> usize {
        a * self.dim_b + b
    }

    #[inline]
    pub fn split(&self, s: usize) -> (usize, usize) {
        (s / self.dim_b, s % self.dim_b)
    }

    pub fn eps(&self, a: usize, b: usize) -> f64 {
        self.epsilon[self.state(a, b)]
    }

    /// Bridge `f(ξ₁) Π 𝔖 g(ξ_{N+1}) / Z` of horizon `n`; its symbol marginal
    /// on the first `n` letters is `μ_n`.
    pub fn bridge_law(&self, n: usize) -> Result<BridgeLaw> {
        BridgeLaw::new(self.s_frak.clone(), self.f.clone(), self.g.clone(), n)
    }
}

/// `λ⁻¹ e(b)⁻¹ M_{b,b'} e(b')` with each row scaled to sum to 1, which
/// absorbs the eigen-residual of `(λ, e)` (e.g. at a truncation edge).
fn renormalized_conjugate(m: &NonNegativeMatrix, lambda: f64, e: &[f64]) -> Result<StochasticMatrix> {
    let n = m.dim();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        let row: Vec<f64> = (0..n).map(|j| m.get(i, j) * e[j] / (lambda * e[i])).collect();
        let s: f64 = row.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InconsistentEigendata(f64::INFINITY));
        }
        entries.extend(row.into_iter().map(|v| v / s));
    }
    StochasticMatrix::new(NonNegativeMatrix::new(n, entries)?)
}

/// Enlarged chain of a finite-case model from its numerically computed
/// Perron data.
pub fn build_enlarged(model: &RationalModel, tol: f64) -> Result<EnlargedChain> {
    model.require_finite_case()?;
    let pd = perron_finite(model.total_matrix(), tol, DEFAULT_MAX_ITER)?;
    // rejects Perron data whose Doob rows are off by more than round-off
    doob_transform(model.total_matrix(), &pd)?;
    EnlargedChain::from_perron(model, pd.value, pd.right_vector)
}

/// `Θ(a,b) = θ(b) ε(a,b) / e(b)`, the invariant law of `𝔖` induced by the
/// invariant law `θ` of the Doob transform of `M`.
pub fn theta_invariant(chain: &EnlargedChain, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != chain.dim_b {
        return Err(Error::Invalid("θ length must equal |B|".into()));
    }
    let total: f64 = theta.iter().sum();
    if theta.iter().any(|t| *t < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid("θ must be a probability vector".into()));
    }
    let moved = chain.s_small.matrix().vec_mul(theta);
    let residual: f64 = moved.iter().zip(theta).map(|(a, b)| (a - b).abs()).sum();
    if residual > 1e-8 {
        return Err(Error::NotStationaryInput(residual));
    }
    let mut out = Vec::with_capacity(chain.alphabet_size * chain.dim_b);
    for a in 0..chain.alphabet_size {
        for b in 0..chain.dim_b {
            out.push(theta[b] * chain.eps(a, b) / chain.e[b]);
        }
    }
    Ok(out)
}

/// Markov bridge `f(ξ₁) Π P_{ξ_i,ξ_{i+1}} g(ξ_{N+1}) / Z` over `N+1` times.
///
/// The backward filter `g_{N+1} = g`, `g_k = P g_{k+1}` is stored normalized
/// (max entry 1) with its log scales.
#[derive(Debug, Clone)]
pub struct BridgeLaw {
    kernel: NonNegativeMatrix,
    f: Vec<f64>,
    g: Vec<f64>,
    n: usize,
    /// `backward[k]` is the normalized `g_{k+1}`, `k = 0..=n`.
    backward: Vec<Vec<f64>>,
    /// Σ of log scales removed from `backward[0]`.
    log_scale0: f64,
    log_z: f64,
}

impl BridgeLaw {
    pub fn new(p: StochasticMatrix, f: Vec<f64>, g: Vec<f64>, n: usize) -> Result<Self> {
        Self::from_kernel(p.into_inner(), f, g, n)
    }

    /// Same as [`BridgeLaw::new`] but accepting a sub-stochastic kernel (for
    /// instance a truncation of a chain on an infinite state space).
    pub fn from_kernel(kernel: NonNegativeMatrix, f: Vec<f64>, g: Vec<f64>, n: usize) -> Result<Self> {
        let d = kernel.dim();
        if f.len() != d || g.len() != d {
            return Err(Error::Invalid("f and g must match the kernel dimension".into()));
        }
        if f.iter().chain(&g).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Invalid("f and g must be finite and non-negative".into()));
        }
        let mut backward = vec![Vec::new(); n + 1];
        let mut log_scale = 0.0;
        let mut cur = g.clone();
        for k in (0..=n).rev() {
            if k < n {
                cur = kernel.mul_vec(&cur);
            }
            let top = cur.iter().fold(0.0_f64, |a, v| a.max(*v));
            if top == 0.0 {
                return Err(Error::DegenerateLaw);
            }
            cur.iter_mut().for_each(|v| *v /= top);
            log_scale += top.ln();
            backward[k] = cur.clone();
        }
        let head = dot(&f, &backward[0]);
        if !(head > 0.0) {
            return Err(Error::DegenerateLaw);
        }
        let log_z = head.ln() + log_scale;
        Ok(Self {
            kernel,
            f,
            g,
            n,
            backward,
            log_scale0: log_scale,
            log_z,
        })
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn kernel(&self) -> &NonNegativeMatrix {
        &self.kernel
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// `ln Z`.
    pub fn log_normalization(&self) -> f64 {
        self.log_z
    }

    pub fn normalization(&self) -> f64 {
        self.log_z.exp()
    }

    /// `ln Z − ln(f · g₁)` where `g₁` is the normalized backward vector at
    /// time 1; equals the accumulated scale of the filter.
    pub fn backward_log_scale(&self) -> f64 {
        self.log_scale0
    }

    /// Normalized backward vector at time `k ∈ 1..=N+1`.
    pub fn backward(&self, k: usize) -> &[f64] {
        &self.backward[k - 1]
    }
}

/// Probability of a trajectory `ξ₁ … ξ_{N+1}` under the bridge.
pub fn bridge_probability(law: &BridgeLaw, xi: &[usize]) -> Result<f64> {
    if xi.len() != law.n + 1 {
        return Err(Error::Invalid(format!(
            "trajectory must have length {}",
            law.n + 1
        )));
    }
    if xi.iter().any(|s| *s >= law.dim()) {
        return Err(Error::Invalid("trajectory leaves the state space".into()));
    }
    let mut ln = law.f[xi[0]].ln() + law.g[xi[law.n]].ln() - law.log_z;
    for w in xi.windows(2) {
        ln += law.kernel.get(w[0], w[1]).ln();
    }
    Ok(ln.exp())
}

/// Joint law of `(ξ₁, ξ_{N+1})`, as a row-major `d × d` table.
pub fn bridge_endpoint_law(law: &BridgeLaw) -> Vec<Vec<f64>> {
    let d = law.dim();
    // P^N by repeated squaring with per-step max normalization tracked in log space
    let mut result = NonNegativeMatrix::identity(d);
    let mut base = law.kernel.clone();
    let mut log_scale = 0.0;
    let mut base_scale = 0.0;
    let mut e = law.n;
    let renorm = |m: NonNegativeMatrix| -> (NonNegativeMatrix, f64) {
        let top = m.entries().iter().fold(0.0_f64, |a, v| a.max(*v));
        if top == 0.0 {
            return (m, 0.0);
        }
        (m.scaled(1.0 / top), top.ln())
    };
    while e > 0 {
        if e & 1 == 1 {
            let (m, s) = renorm(result.matmul(&base));
            result = m;
            log_scale += s + base_scale;
        }
        e >>= 1;
        if e > 0 {
            let (m, s) = renorm(base.matmul(&base));
            base = m;
            base_scale = 2.0 * base_scale + s;
        }
    }
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let v = law.f[i] * result.get(i, j) * law.g[j];
                    if v == 0.0 {
                        0.0
                    } else {
                        (v.ln() + log_scale - law.log_z).exp()
                    }
                })
                .collect()
        })
        .collect()
}

fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    last
}

/// Exact sampler for a [`BridgeLaw`] by forward sampling against the
/// backward filter.
#[derive(Debug, Clone)]
pub struct BridgeSampler<'a> {
    law: &'a BridgeLaw,
    initial: Vec<f64>,
}

impl<'a> BridgeSampler<'a> {
    pub fn new(law: &'a BridgeLaw) -> Self {
        let initial = law
            .f
            .iter()
            .zip(&law.backward[0])
            .map(|(a, b)| a * b)
            .collect();
        Self { law, initial }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<usize> {
        let d = self.law.dim();
        let mut xi = Vec::with_capacity(self.law.n + 1);
        xi.push(draw(&self.initial, rng));
        let mut weights = vec![0.0; d];
        for k in 1..=self.law.n {
            let cur = xi[k - 1];
            let h = &self.law.backward[k];
            for (w, (p, hv)) in weights.iter_mut().zip(self.law.kernel.row(cur).iter().zip(h)) {
                *w = p * hv;
            }
            xi.push(draw(&weights, rng));
        }
        xi
    }
}

/// One exact bridge sample drawn with a ChaCha8 generator seeded by `seed`.
pub fn sample_bridge(law: &BridgeLaw, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BridgeSampler::new(law).sample(&mut rng)
}
