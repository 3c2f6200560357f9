//! Perron–Frobenius data for finite non-negative matrices.
//!
//! Covers primitivity classification of the support digraph, power iteration
//! for the Perron value and right vector, the generalized Doob transform
//! `S = λ⁻¹ E⁻¹ M E`, stationary laws of stochastic matrices, and the
//! closed-form Perron value of the infinite tridiagonal family
//!
//! ```text
//! A[i][i] = diag,  A[i][i+1] = upper,  A[i+1][i] = lower,   i = 0, 1, 2, ...
//! ```

use crate::error::{Error, Result};

/// Default power-iteration tolerance on the eigen-residual.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default cap on power iterations.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Square matrix with non-negative entries, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NonNegativeMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl NonNegativeMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("matrix dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::Invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Invalid(format!(
                "matrix entries must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Invalid("matrix rows must form a square grid".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Sets an entry; negative or non-finite values are rejected.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::Invalid(format!("entry {value} is not non-negative")));
        }
        self.entries[i * self.dim + j] = value;
        Ok(())
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    /// `M v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `v M` for a row vector `v`.
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(self.row(i)) {
                *o += vi * m;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        Self { dim: n, entries: out }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut result = Self::identity(self.dim);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = result.matmul(&base);
            }
            base = base.matmul(&base);
            e >>= 1;
        }
        result
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = self.entries[i * n + j];
            }
        }
        Self { dim: n, entries: out }
    }

    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0);
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|v| v * c).collect(),
        }
    }

    /// Entrywise sum of a non-empty family of equally sized matrices.
    pub fn sum_of(mats: &[NonNegativeMatrix]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::Invalid("empty matrix family".into()))?;
        let mut out = first.clone();
        for m in &mats[1..] {
            if m.dim != out.dim {
                return Err(Error::Invalid("matrices must share a dimension".into()));
            }
            for (o, v) in out.entries.iter_mut().zip(&m.entries) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Principal submatrix on the given index set (in the given order).
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let k = idx.len();
        let mut out = Vec::with_capacity(k * k);
        for &i in idx {
            for &j in idx {
                out.push(self.get(i, j));
            }
        }
        Self { dim: k, entries: out }
    }

    fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(j, _)| j)
    }
}

/// Irreducibility and period of the support digraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Primitivity {
    pub irreducible: bool,
    pub aperiodic: bool,
    /// gcd of cycle lengths through state 0; meaningful only when irreducible.
    pub period: usize,
}

impl Primitivity {
    pub fn is_primitive(&self) -> bool {
        self.irreducible && self.aperiodic
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn bfs_levels(m: &NonNegativeMatrix, transpose: bool) -> Vec<Option<usize>> {
    let n = m.dim();
    let mut level = vec![None; n];
    level[0] = Some(0);
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap();
        for v in 0..n {
            let w = if transpose { m.get(v, u) } else { m.get(u, v) };
            if w > 0.0 && level[v].is_none() {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

/// Classifies the support digraph of `m`.
pub fn check_primitive(m: &NonNegativeMatrix) -> Primitivity {
    let forward = bfs_levels(m, false);
    let backward = bfs_levels(m, true);
    let irreducible = forward.iter().all(Option::is_some) && backward.iter().all(Option::is_some);
    if !irreducible {
        return Primitivity {
            irreducible: false,
            aperiodic: false,
            period: 0,
        };
    }
    let n = m.dim();
    let mut period = 0;
    for u in 0..n {
        let lu = forward[u].unwrap();
        for v in m.successors(u) {
            let lv = forward[v].unwrap();
            let diff = (lu + 1).abs_diff(lv);
            period = gcd(period, diff);
        }
    }
    Primitivity {
        irreducible,
        aperiodic: period == 1,
        period,
    }
}

/// Strongly connected components of the support digraph (Tarjan).
pub fn strongly_connected_components(m: &NonNegativeMatrix) -> Vec<Vec<usize>> {
    struct State {
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    fn visit(m: &NonNegativeMatrix, v: usize, s: &mut State) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for w in m.successors(v).collect::<Vec<_>>() {
            match s.index[w] {
                None => {
                    visit(m, w, s);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().unwrap();
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            s.out.push(comp);
        }
    }
    let n = m.dim();
    let mut s = State {
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(m, v, &mut s);
        }
    }
    s.out
}

/// Perron value and right eigenvector of a primitive matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronData {
    pub value: f64,
    /// Positive right eigenvector, normalized so that its maximum entry is 1.
    pub right_vector: Vec<f64>,
    /// `‖M e − λ e‖∞ / ‖e‖∞` at the returned pair.
    pub residual: f64,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn eigen_residual(m: &NonNegativeMatrix, value: f64, v: &[f64]) -> f64 {
    let mv = m.mul_vec(v);
    let diff: Vec<f64> = mv.iter().zip(v).map(|(a, b)| a - value * b).collect();
    sup_norm(&diff) / sup_norm(v)
}

/// Power iteration on `M + shift·I`. The shift makes the iteration converge
/// for irreducible periodic matrices as well; callers pass 0 for primitive
/// input.
fn power_iteration(
    m: &NonNegativeMatrix,
    shift: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PerronData> {
    let n = m.dim();
    let mut v = vec![1.0; n];
    let mut value = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut w = m.mul_vec(&v);
        let vv: f64 = v.iter().map(|x| x * x).sum();
        value = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / vv;
        residual = {
            let diff: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - value * b).collect();
            sup_norm(&diff) / sup_norm(&v)
        };
        if residual <= tol {
            break;
        }
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += shift * vi;
        }
        let top = sup_norm(&w);
        if top == 0.0 {
            return Err(Error::NoConvergence {
                what: "power iteration (nilpotent support)",
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / top;
        }
    }
    let top = sup_norm(&v);
    v.iter_mut().for_each(|x| *x /= top);
    residual = residual.min(eigen_residual(m, value, &v));
    if residual > tol {
        return Err(Error::NoConvergence {
            what: "power iteration",
            iterations: max_iter,
            residual,
        });
    }
    Ok(PerronData {
        value,
        right_vector: v,
        residual,
    })
}

/// Perron value and vector of a primitive non-negative matrix.
pub fn perron_finite(m: &NonNegativeMatrix, tol: f64, max_iter: usize) -> Result<PerronData> {
    if !(tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    let class = check_primitive(m);
    if !class.is_primitive() {
        return Err(Error::NotPrimitive {
            irreducible: class.irreducible,
            period: class.period,
        });
    }
    power_iteration(m, 0.0, tol, max_iter)
}

/// Spectral radius with left and right vectors of a possibly reducible matrix.
///
/// The vectors are supported on the strongly connected class attaining the
/// radius (zero elsewhere); for a simple dominant class this is exactly what
/// the derivative `∂ρ/∂M_ij = l_i r_j / ⟨l, r⟩` needs.
#[derive(Debug, Clone)]
pub struct DominantClass {
    pub value: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    pub class: Vec<usize>,
}

pub fn dominant_class(m: &NonNegativeMatrix, tol: f64, max_iter: usize) -> Result<DominantClass> {
    let n = m.dim();
    let mut best: Option<DominantClass> = None;
    for comp in strongly_connected_components(m) {
        let sub = m.submatrix(&comp);
        if comp.len() == 1 && sub.get(0, 0) == 0.0 {
            continue;
        }
        let shift = {
            let total: f64 = sub.entries().iter().sum();
            total / sub.dim() as f64
        };
        let right = power_iteration(&sub, shift, tol, max_iter)?;
        if best.as_ref().is_some_and(|b| b.value >= right.value) {
            continue;
        }
        let left = power_iteration(&sub.transpose(), shift, tol, max_iter)?;
        let mut r = vec![0.0; n];
        let mut l = vec![0.0; n];
        for (k, &i) in comp.iter().enumerate() {
            r[i] = right.right_vector[k];
            l[i] = left.right_vector[k];
        }
        best = Some(DominantClass {
            value: right.value,
            right: r,
            left: l,
            class: comp,
        });
    }
    best.ok_or(Error::Invalid("matrix has spectral radius zero".into()))
}

/// Row-stochastic matrix: non-negative with unit row sums (within 1e-12).
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix(NonNegativeMatrix);

impl StochasticMatrix {
    pub const ROW_TOL: f64 = 1e-12;

    pub fn new(m: NonNegativeMatrix) -> Result<Self> {
        for i in 0..m.dim() {
            let s: f64 = m.row(i).iter().sum();
            if (s - 1.0).abs() > Self::ROW_TOL {
                return Err(Error::Invalid(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(NonNegativeMatrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &NonNegativeMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn into_inner(self) -> NonNegativeMatrix {
        self.0
    }
}

/// Generalized Doob transform `S_{b,b'} = λ⁻¹ e(b)⁻¹ M_{b,b'} e(b')`.
pub fn doob_transform(m: &NonNegativeMatrix, pd: &PerronData) -> Result<StochasticMatrix> {
    let n = m.dim();
    if pd.right_vector.len() != n {
        return Err(Error::Invalid("eigenvector length does not match matrix".into()));
    }
    if !(pd.value > 0.0) || pd.right_vector.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InconsistentEigendata(f64::INFINITY));
    }
    let e = &pd.right_vector;
    let mut entries = Vec::with_capacity(n * n);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let row: Vec<f64> = (0..n)
            .map(|j| m.get(i, j) * e[j] / (pd.value * e[i]))
            .collect();
        let s: f64 = row.iter().sum();
        worst = worst.max((s - 1.0).abs());
        // rows deviate from 1 only by the eigen-residual; fold it back in
        entries.extend(row.into_iter().map(|v| v / s));
    }
    if worst > 1e-9 {
        return Err(Error::InconsistentEigendata(worst));
    }
    StochasticMatrix::new(NonNegativeMatrix::new(n, entries)?)
}

/// Invariant probability vector `θ S = θ`, found by iterating the lazy chain
/// `(I + S)/2` (same invariant law, no periodicity issues).
pub fn stationary_distribution(s: &StochasticMatrix, tol: f64) -> Result<Vec<f64>> {
    stationary_distribution_with(s, tol, 10 * DEFAULT_MAX_ITER)
}

pub fn stationary_distribution_with(
    s: &StochasticMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = s.dim();
    let mut theta = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = s.matrix().vec_mul(&theta);
        residual = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).sum();
        if residual <= tol {
            let total: f64 = next.iter().sum();
            return Ok(next.into_iter().map(|v| v / total).collect());
        }
        for (t, nx) in theta.iter_mut().zip(&next) {
            *t = 0.5 * (*t + nx);
        }
    }
    Err(Error::NoConvergence {
        what: "stationary distribution",
        iterations: max_iter,
        residual,
    })
}

/// Parameters of the infinite tridiagonal matrix with constant diagonals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TridiagonalSpec {
    pub diag: f64,
    pub upper: f64,
    pub lower: f64,
}

impl TridiagonalSpec {
    pub fn new(diag: f64, upper: f64, lower: f64) -> Result<Self> {
        if [diag, upper, lower].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Invalid(
                "tridiagonal coefficients must be positive".into(),
            ));
        }
        Ok(Self { diag, upper, lower })
    }

    /// Top-left `dim × dim` corner of the infinite matrix.
    pub fn truncated(&self, dim: usize) -> NonNegativeMatrix {
        let mut m = NonNegativeMatrix::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = self.diag;
            if i + 1 < dim {
                m.entries[i * dim + i + 1] = self.upper;
                m.entries[(i + 1) * dim + i] = self.lower;
            }
        }
        m
    }
}

/// Closed-form Perron data of the infinite tridiagonal matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TridiagonalPerron {
    pub value: f64,
    ratio: f64,
}

impl TridiagonalPerron {
    /// Component `n` of the positive eigenvector, `(n+1)·(lower/upper)^((n+1)/2)`.
    pub fn eigenvector_term(&self, n: usize) -> f64 {
        (n as f64 + 1.0) * self.ratio.powf((n as f64 + 1.0) / 2.0)
    }
}

pub fn perron_tridiagonal_infinite(spec: &TridiagonalSpec) -> TridiagonalPerron {
    TridiagonalPerron {
        value: spec.diag + 2.0 * (spec.upper * spec.lower).sqrt(),
        ratio: spec.lower / spec.upper,
    }
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

fn ln_catalan(n: u64) -> f64 {
    ln_binomial(2 * n, n) - ((n + 1) as f64).ln()
}

/// Natural log of the weight of length-`2n` excursions from 0 back to 0,
/// `Σ_k Cat(n−k)·C(2n,2k)·diag^{2k}·(upper·lower)^{n−k}`, summed in log space.
pub fn log_return_weight_even(n: u64, spec: &TridiagonalSpec) -> f64 {
    let terms: Vec<f64> = (0..=n)
        .map(|k| {
            ln_catalan(n - k)
                + ln_binomial(2 * n, 2 * k)
                + 2.0 * k as f64 * spec.diag.ln()
                + (n - k) as f64 * (spec.upper * spec.lower).ln()
        })
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// `(A^{2n})_{0,0}` of the infinite tridiagonal matrix via the Catalan sum.
///
/// Small `n` is summed directly with integer-exact binomials; beyond that the
/// log-space sum is exponentiated (and may overflow to `+∞`).
pub fn return_weight_even(n: u64, spec: &TridiagonalSpec) -> f64 {
    if n > 30 {
        return log_return_weight_even(n, spec).exp();
    }
    // binomial and Catalan numbers exactly, as u128
    let binom = |n: u64, k: u64| -> u128 {
        let k = k.min(n - k);
        (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
    };
    let catalan = |m: u64| binom(2 * m, m) / (m as u128 + 1);
    let prod = spec.upper * spec.lower;
    (0..=n)
        .map(|k| {
            catalan(n - k) as f64
                * binom(2 * n, 2 * k) as f64
                * spec.diag.powi(2 * k as i32)
                * prod.powi((n - k) as i32)
        })
        .sum()
}
