//! Boundary-driven TASEP: the infinite bidiagonal representation, its
//! enlarged walk `𝔖`, the effective walk `𝒮`, samplers, empirical
//! observables, the fluid limit and the generator oracle.
//!
//! Matrices on `B = {0, 1, 2, …}`:
//!
//! ```text
//! E = M^(0):  E[b][b] = 1, E[b][b−1] = 1        (lower bidiagonal)
//! D = M^(1):  D[b][b] = 1, D[b][b+1] = 1        (upper bidiagonal)
//! y(b) = k̂ aᵇ,  x(b) = k̂ b̃ᵇ,  a = (1−α)/α,  b̃ = (1−β)/β,  k̂² = (α+β−1)/(αβ)
//! ```
//!
//! `M = D + E` is tridiagonal `(2, 1, 1)` with Perron value 4 and vector
//! `e(b) = b+1`; `ε(a,b) = h(a,b)/4` with `h(a,b) = 2(a+b)+1`.
//!
//! Enlarged states `(a, b)` are indexed as `a·(B_max+1) + b`. Step laws on
//! `{0,1} × {−1,0,+1}` are indexed as `a·3 + (s+1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::empirical::bin_of;
use crate::error::{Error, Result};
use crate::perron::NonNegativeMatrix;
use crate::rational::{BridgeLaw, BridgeSampler, EnlargedChain, RationalModel, Word};

/// Largest truncation tried before giving up.
const MAX_BMAX: usize = 1 << 14;

/// Largest system size accepted by the generator solve.
pub const GENERATOR_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TasepParams {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
}

impl TasepParams {
    /// Requires `α, β ∈ (0, 1]`, `N ≥ 1` and `a·b̃ < 1` (equivalently
    /// `α + β > 1`, which also makes `k̂` real).
    pub fn new(alpha: f64, beta: f64, n: usize) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Invalid(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if n == 0 {
            return Err(Error::Invalid("N must be at least 1".into()));
        }
        let p = Self { alpha, beta, n };
        if p.a() * p.b() >= 1.0 {
            return Err(Error::RegionViolation(format!(
                "a·b = {} ≥ 1 (alpha + beta must exceed 1)",
                p.a() * p.b()
            )));
        }
        Ok(p)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.alpha, self.beta, n)
    }

    /// `a = (1−α)/α`.
    pub fn a(&self) -> f64 {
        (1.0 - self.alpha) / self.alpha
    }

    /// `b̃ = (1−β)/β`.
    pub fn b(&self) -> f64 {
        (1.0 - self.beta) / self.beta
    }

    /// `k̂ = √((α+β−1)/(αβ))`, so that `⟨y|x⟩ = 1`.
    pub fn k_hat(&self) -> f64 {
        ((self.alpha + self.beta - 1.0) / (self.alpha * self.beta)).sqrt()
    }
}

/// `h(a,b) = 2(a+b)+1`.
#[inline]
pub fn h(a: usize, b: usize) -> f64 {
    (2 * (a + b) + 1) as f64
}

/// Entry of the infinite `M^(a)`.
#[inline]
pub fn m_entry(a: usize, b: usize, b2: usize) -> f64 {
    let hit = match a {
        0 => b2 == b || b2 + 1 == b,
        1 => b2 == b || b2 == b + 1,
        _ => false,
    };
    if hit {
        1.0
    } else {
        0.0
    }
}

/// `𝔖_{(a,b),(a',b')} = ¼ h(a',b')/h(a,b) M^(a)_{b,b'}`.
pub fn frak_s_entry(state: (usize, usize), next: (usize, usize)) -> f64 {
    let (a, b) = state;
    let (a2, b2) = next;
    if a > 1 || a2 > 1 {
        return 0.0;
    }
    0.25 * h(a2, b2) / h(a, b) * m_entry(a, b, b2)
}

/// `𝒮_{(a,b),(a',b')} = ¼ M^(a)_{b,b'} · 2^{1[(a,b)=(0,0)]}`.
pub fn effective_s_entry(state: (usize, usize), next: (usize, usize)) -> f64 {
    let (a, b) = state;
    if a > 1 || next.0 > 1 {
        return 0.0;
    }
    let boost = if (a, b) == (0, 0) { 2.0 } else { 1.0 };
    0.25 * m_entry(a, b, next.1) * boost
}

/// `v ↦ v·E` on `0..=bmax` (truncated).
fn row_times_e(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for b in 0..n {
        out[b] = v[b] + if b + 1 < n { v[b + 1] } else { 0.0 };
    }
}

/// `v ↦ v·D` on `0..=bmax` (truncated).
fn row_times_d(v: &[f64], out: &mut [f64]) {
    out[0] = v[0];
    for b in 1..v.len() {
        out[b] = v[b] + v[b - 1];
    }
}

fn row_times(a: usize, v: &[f64], out: &mut [f64]) {
    if a == 0 {
        row_times_e(v, out)
    } else {
        row_times_d(v, out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// TASEP representation truncated to `B = {0, …, B_max}`.
#[derive(Debug, Clone)]
pub struct TruncatedTasepModel {
    pub params: TasepParams,
    pub b_max: usize,
    /// Relative change of `Z_N` at the last doubling of `B_max`.
    pub truncation_error_bound: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    z_n: f64,
}

fn boundary_vectors(p: &TasepParams, b_max: usize) -> (Vec<f64>, Vec<f64>) {
    let k = p.k_hat();
    // powi(0) = 1 also for a base of 0
    let x = (0..=b_max).map(|b| k * p.b().powi(b as i32)).collect();
    let y = (0..=b_max).map(|b| k * p.a().powi(b as i32)).collect();
    (x, y)
}

fn truncated_partition(p: &TasepParams, b_max: usize) -> f64 {
    let (x, y) = boundary_vectors(p, b_max);
    let mut v = y;
    let mut e = vec![0.0; b_max + 1];
    let mut d = vec![0.0; b_max + 1];
    for _ in 0..p.n {
        row_times_e(&v, &mut e);
        row_times_d(&v, &mut d);
        for ((o, ei), di) in v.iter_mut().zip(&e).zip(&d) {
            *o = ei + di;
        }
    }
    dot(&v, &x)
}

/// Chooses `B_max` by doubling from `N+2` until `Z_N` changes by less than
/// `rel_tol` relatively. A fixed `b_max` skips the search.
pub fn build_tasep_with(
    params: TasepParams,
    rel_tol: f64,
    b_max: Option<usize>,
) -> Result<TruncatedTasepModel> {
    let (b_max, bound) = match b_max {
        Some(bm) => {
            if bm == 0 {
                return Err(Error::Invalid("bmax must be at least 1".into()));
            }
            let z1 = truncated_partition(&params, bm);
            let z2 = truncated_partition(&params, 2 * bm);
            (bm, ((z2 - z1) / z2).abs())
        }
        None => {
            let mut bm = params.n + 2;
            let mut z = truncated_partition(&params, bm);
            loop {
                let next = 2 * bm;
                if next > MAX_BMAX {
                    return Err(Error::TruncationFailure(format!(
                        "Z_N not stable to {rel_tol:e} with B_max up to {MAX_BMAX}"
                    )));
                }
                let z2 = truncated_partition(&params, next);
                let change = ((z2 - z) / z2).abs();
                if !z2.is_finite() {
                    return Err(Error::TruncationFailure("Z_N overflowed".into()));
                }
                if change < rel_tol {
                    break (next, change);
                }
                bm = next;
                z = z2;
            }
        }
    };
    let (x, y) = boundary_vectors(&params, b_max);
    let z_n = truncated_partition(&params, b_max);
    if !(z_n > 0.0 && z_n.is_finite()) {
        return Err(Error::TruncationFailure(format!("Z_N = {z_n}")));
    }
    Ok(TruncatedTasepModel {
        params,
        b_max,
        truncation_error_bound: bound,
        x,
        y,
        z_n,
    })
}

pub fn build_tasep(params: TasepParams, rel_tol: f64) -> Result<TruncatedTasepModel> {
    build_tasep_with(params, rel_tol, None)
}

impl TruncatedTasepModel {
    pub fn dim(&self) -> usize {
        self.b_max + 1
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `Z_N = ⟨y|(D+E)^N|x⟩` on the truncation.
    pub fn partition_function(&self) -> f64 {
        self.z_n
    }

    pub fn matrix(&self, a: usize) -> NonNegativeMatrix {
        let n = self.dim();
        let mut entries = vec![0.0; n * n];
        for b in 0..n {
            for b2 in b.saturating_sub(1)..(b + 2).min(n) {
                entries[b * n + b2] = m_entry(a, b, b2);
            }
        }
        NonNegativeMatrix::new(n, entries).expect("0/1 entries")
    }

    /// The truncation as a general rational model.
    pub fn rational_model(&self) -> RationalModel {
        RationalModel::new(
            vec![self.matrix(0), self.matrix(1)],
            self.x.clone(),
            self.y.clone(),
        )
        .expect("valid truncation")
    }

    /// Enlarged chain built from the exact Perron data `λ = 4`, `e(b) = b+1`
    /// of the infinite `M`. Rows near `B_max` are renormalized.
    pub fn enlarged_chain(&self) -> Result<EnlargedChain> {
        EnlargedChain::from_perron(
            &self.rational_model(),
            4.0,
            (0..self.dim()).map(|b| (b + 1) as f64).collect(),
        )
    }

    /// `⟨y| Π M^(η_i) |x⟩` on the truncation.
    pub fn weight(&self, eta: &[usize]) -> f64 {
        let mut v = self.y.clone();
        let mut out = vec![0.0; self.dim()];
        for &a in eta {
            row_times(a, &v, &mut out);
            std::mem::swap(&mut v, &mut out);
        }
        dot(&v, &self.x)
    }

    /// Weights of all completions of `prefix` to length `N`, written to
    /// `out` in lexicographic order of the completion (depth-first, sharing
    /// prefix products).
    pub fn completion_weights(&self, prefix: &[usize], out: &mut [f64]) {
        let n = self.params.n;
        assert!(prefix.len() <= n);
        assert_eq!(out.len(), 1 << (n - prefix.len()));
        let mut v = self.y.clone();
        let mut tmp = vec![0.0; self.dim()];
        for &a in prefix {
            row_times(a, &v, &mut tmp);
            std::mem::swap(&mut v, &mut tmp);
        }
        self.dfs(&v, n - prefix.len(), out);
    }

    fn dfs(&self, v: &[f64], remaining: usize, out: &mut [f64]) {
        if remaining == 0 {
            out[0] = dot(v, &self.x);
            return;
        }
        let half = out.len() / 2;
        let mut next = vec![0.0; v.len()];
        let (lo, hi) = out.split_at_mut(half);
        row_times(0, v, &mut next);
        self.dfs(&next, remaining - 1, lo);
        row_times(1, v, &mut next);
        self.dfs(&next, remaining - 1, hi);
    }
}

/// `μ_N(η)` on the truncation.
pub fn tasep_probability(model: &TruncatedTasepModel, eta: &Word) -> Result<f64> {
    if eta.len() != model.params.n || eta.alphabet_size() != 2 {
        return Err(Error::Invalid(format!(
            "expected a binary word of length {}",
            model.params.n
        )));
    }
    Ok(model.weight(eta.symbols()) / model.z_n)
}

/// Full law of `μ_N` indexed lexicographically (site 1 most significant).
pub fn tasep_distribution(model: &TruncatedTasepModel) -> Vec<f64> {
    let mut out = vec![0.0; 1 << model.params.n];
    model.completion_weights(&[], &mut out);
    out.iter_mut().for_each(|v| *v /= model.z_n);
    out
}

// ------------------------------------------------------------ samplers ----

/// Law on `{0,1} × {−1,0,+1}`, indexed `a·3 + (s+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLaw {
    pub probs: [f64; 6],
}

#[inline]
pub fn step_index(a: usize, s: i64) -> usize {
    a * 3 + (s + 1) as usize
}

#[inline]
pub fn step_of(index: usize) -> (usize, i64) {
    (index / 3, (index % 3) as i64 - 1)
}

impl StepLaw {
    pub fn new(probs: [f64; 6]) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Invalid("step probabilities must be non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("step law sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// Bulk law: `¼` on `(0,0), (0,−1), (1,0), (1,1)`.
    pub fn mu_i() -> Self {
        let mut probs = [0.0; 6];
        for (a, s) in [(0, 0), (0, -1), (1, 0), (1, 1)] {
            probs[step_index(a, s)] = 0.25;
        }
        Self { probs }
    }

    /// Boundary law: `½` on `(0,0)`, `¼` on `(1,0), (1,1)`.
    pub fn mu_b() -> Self {
        let mut probs = [0.0; 6];
        probs[step_index(0, 0)] = 0.5;
        probs[step_index(1, 0)] = 0.25;
        probs[step_index(1, 1)] = 0.25;
        Self { probs }
    }

    pub fn get(&self, a: usize, s: i64) -> f64 {
        self.probs[step_index(a, s)]
    }

    /// Support contained in that of `reference`.
    pub fn within_support_of(&self, reference: &StepLaw) -> bool {
        self.probs
            .iter()
            .zip(&reference.probs)
            .all(|(p, r)| *p == 0.0 || *r > 0.0)
    }

    /// `γ_{1,1} − γ_{0,−1}`.
    pub fn drift(&self) -> f64 {
        self.get(1, 1) - self.get(0, -1)
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let mut u: f64 = rng.gen();
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last = i;
                if u < p {
                    return i;
                }
                u -= p;
            }
        }
        last
    }
}

/// Trajectory `(η_i, ζ_i)_{i=1}^{N+1}` of the enlarged walk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub eta: Vec<usize>,
    pub zeta: Vec<usize>,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.zeta.len() - 1
    }
}

/// Exact sample of the effective walk `𝒮` started from
/// `Bernoulli(½)(η₁) ⊗ δ_{z0}(ζ₁)`, built from i.i.d. step draws.
pub fn sample_effective(n: usize, z0: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_effective_with(n, z0, &mut rng)
}

pub fn sample_effective_with(n: usize, z0: usize, rng: &mut impl Rng) -> Trajectory {
    let mut eta = Vec::with_capacity(n + 1);
    let mut zeta = Vec::with_capacity(n + 1);
    zeta.push(z0);
    let (mu_i, mu_b) = (StepLaw::mu_i(), StepLaw::mu_b());
    for i in 0..n {
        let z = zeta[i];
        if i == 0 {
            // η₁ ~ Bernoulli(½); ζ₂ = 0 from (0,0), else ζ₁ or ζ₁ + 2η₁ − 1 evenly
            let e1 = rng.gen_range(0..2usize);
            eta.push(e1);
            let next = if (e1, z) == (0, 0) || rng.gen::<bool>() {
                z
            } else if e1 == 1 {
                z + 1
            } else {
                z - 1
            };
            zeta.push(next);
            continue;
        }
        let law = if z > 0 { &mu_i } else { &mu_b };
        let (a, s) = step_of(law.draw(rng));
        eta.push(a);
        zeta.push((z as i64 + s) as usize);
    }
    eta.push(rng.gen_range(0..2usize));
    Trajectory { eta, zeta }
}

/// Sample of the perturbed measure together with `log dP^γ/dP^{𝒮,*}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedSample {
    pub trajectory: Trajectory,
    pub log_rn: f64,
}

fn check_tilts(gamma_i: &[StepLaw], gamma_b: &[StepLaw]) -> Result<()> {
    if gamma_i.is_empty() || gamma_i.len() != gamma_b.len() {
        return Err(Error::Invalid(
            "bulk and boundary tilts need the same non-zero number of bins".into(),
        ));
    }
    let (mu_i, mu_b) = (StepLaw::mu_i(), StepLaw::mu_b());
    if let Some(j) = gamma_i.iter().position(|g| !g.within_support_of(&mu_i)) {
        return Err(Error::SupportViolation(format!(
            "bulk law in bin {j} charges a step outside the bulk support"
        )));
    }
    if let Some(j) = gamma_b.iter().position(|g| !g.within_support_of(&mu_b)) {
        return Err(Error::SupportViolation(format!(
            "boundary law in bin {j} charges a step outside the boundary support"
        )));
    }
    Ok(())
}

/// Step `i ∈ 1..=N` uses the laws of the bin containing `i/N`, bulk when
/// `ζ_i > 0` and boundary when `ζ_i = 0`.
pub fn sample_tilted(
    gamma_i: &[StepLaw],
    gamma_b: &[StepLaw],
    n: usize,
    z0: usize,
    seed: u64,
) -> Result<TiltedSample> {
    check_tilts(gamma_i, gamma_b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mu_i, mu_b) = (StepLaw::mu_i(), StepLaw::mu_b());
    let bins = gamma_i.len();
    let mut eta = Vec::with_capacity(n + 1);
    let mut zeta = Vec::with_capacity(n + 1);
    zeta.push(z0);
    let mut log_rn = 0.0;
    for i in 1..=n {
        let z = zeta[i - 1];
        let j = bin_of(i, n, bins);
        let (law, mu) = if z > 0 {
            (&gamma_i[j], &mu_i)
        } else {
            (&gamma_b[j], &mu_b)
        };
        let k = law.draw(&mut rng);
        log_rn += (law.probs[k] / mu.probs[k]).ln();
        let (a, s) = step_of(k);
        eta.push(a);
        zeta.push((z as i64 + s) as usize);
    }
    eta.push(rng.gen_range(0..2usize));
    Ok(TiltedSample {
        trajectory: Trajectory { eta, zeta },
        log_rn,
    })
}

/// Probability of a trajectory under the perturbed measure (with
/// `η_{N+1}` uniform); `μ^I`/`μ^B` tilts give `P^{𝒮,*}`.
pub fn tilted_path_probability(
    gamma_i: &[StepLaw],
    gamma_b: &[StepLaw],
    path: &Trajectory,
) -> Result<f64> {
    check_tilts(gamma_i, gamma_b)?;
    let n = path.n();
    let bins = gamma_i.len();
    let mut p = 0.5;
    for i in 1..=n {
        let z = path.zeta[i - 1];
        let s = path.zeta[i] as i64 - z as i64;
        if !(-1..=1).contains(&s) {
            return Ok(0.0);
        }
        let j = bin_of(i, n, bins);
        let law = if z > 0 { &gamma_i[j] } else { &gamma_b[j] };
        p *= law.get(path.eta[i - 1], s);
    }
    Ok(p)
}

/// Exact bridge `f ∏𝔖 g / 𝔷` on the truncation, with
/// `f(a,b) = aᵇ h(a,b)/4` and `g(a,b) = 4 b̃ᵇ / h(a,b)`.
///
/// The kernel is the restriction of `𝔖` to `b ≤ B_max` (not renormalized),
/// so the `η`-marginal of the first `N` symbols equals the truncated `μ_N`.
#[derive(Debug, Clone)]
pub struct TasepBridge {
    pub law: BridgeLaw,
    pub b_max: usize,
}

impl TasepBridge {
    pub fn new(model: &TruncatedTasepModel) -> Result<Self> {
        let p = &model.params;
        let nb = model.dim();
        let n = 2 * nb;
        let mut entries = vec![0.0; n * n];
        for a in 0..2 {
            for b in 0..nb {
                for a2 in 0..2 {
                    for b2 in b.saturating_sub(1)..(b + 2).min(nb) {
                        entries[(a * nb + b) * n + a2 * nb + b2] = frak_s_entry((a, b), (a2, b2));
                    }
                }
            }
        }
        let kernel = NonNegativeMatrix::new(n, entries)?;
        let mut f = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for a in 0..2 {
            for b in 0..nb {
                f.push(p.a().powi(b as i32) * h(a, b) / 4.0);
                g.push(4.0 * p.b().powi(b as i32) / h(a, b));
            }
        }
        Ok(Self {
            law: BridgeLaw::from_kernel(kernel, f, g, p.n)?,
            b_max: model.b_max,
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Trajectory {
        let nb = self.b_max + 1;
        let xi = BridgeSampler::new(&self.law).sample(rng);
        Trajectory {
            eta: xi.iter().map(|s| s / nb).collect(),
            zeta: xi.iter().map(|s| s % nb).collect(),
        }
    }
}

pub fn sample_tasep_bridge(model: &TruncatedTasepModel, seed: u64) -> Result<Trajectory> {
    let bridge = TasepBridge::new(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(bridge.sample(&mut rng))
}

// ----------------------------------------------------------- empirical ----

/// Binned empirical observables of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleEmpirical {
    pub n: usize,
    pub bins: usize,
    /// `ẑ_N(i/N) = ζ_{i+1}/N`, `i = 0..=N`.
    pub z_grid: Vec<f64>,
    /// `Π̂^B` masses per bin and step.
    pub pi_b: Vec<[f64; 6]>,
    /// `Π̂^I` masses per bin and step.
    pub pi_i: Vec<[f64; 6]>,
    /// `π̂^B` masses per bin.
    pub boundary_mass: Vec<f64>,
}

impl TripleEmpirical {
    /// Piecewise-linear interpolation of `ẑ_N`.
    pub fn z_at(&self, x: f64) -> f64 {
        let t = (x.clamp(0.0, 1.0)) * self.n as f64;
        let i = (t.floor() as usize).min(self.n - 1);
        let w = t - i as f64;
        self.z_grid[i] * (1.0 - w) + self.z_grid[i + 1] * w
    }

    /// `∫ Σ_a Σ_s (1−a) Π̂^B(a,s)`: the fraction of sites `i ≤ N` with
    /// `(η_i, ζ_i) = (0, 0)`.
    pub fn boundary_zero_fraction(&self) -> f64 {
        self.pi_b.iter().map(|r| r[0] + r[1] + r[2]).sum()
    }
}

pub fn triple_empirical(path: &Trajectory, bins: usize) -> Result<TripleEmpirical> {
    let n = path.n();
    if n == 0 || path.eta.len() < n {
        return Err(Error::Invalid("trajectory needs N ≥ 1 and N symbols".into()));
    }
    if bins == 0 {
        return Err(Error::Invalid("bins must be at least 1".into()));
    }
    let nf = n as f64;
    let mut pi_b = vec![[0.0; 6]; bins];
    let mut pi_i = vec![[0.0; 6]; bins];
    let mut boundary_mass = vec![0.0; bins];
    for i in 1..=n {
        let s = path.zeta[i] as i64 - path.zeta[i - 1] as i64;
        if !(-1..=1).contains(&s) {
            return Err(Error::Invalid(format!("ζ jumps by {s} at step {i}")));
        }
        let j = bin_of(i, n, bins);
        let k = step_index(path.eta[i - 1], s);
        if path.zeta[i - 1] == 0 {
            pi_b[j][k] += 1.0 / nf;
            boundary_mass[j] += 1.0 / nf;
        } else {
            pi_i[j][k] += 1.0 / nf;
        }
    }
    Ok(TripleEmpirical {
        n,
        bins,
        z_grid: path.zeta.iter().map(|z| *z as f64 / nf).collect(),
        pi_b,
        pi_i,
        boundary_mass,
    })
}

// ------------------------------------------------------------- oracles ----

/// Stationary law of the continuous-time generator (bulk hops at rate 1,
/// injection at rate α into site 1, extraction at rate β from site N),
/// indexed like [`tasep_distribution`]. Dense LU solve with one balance row
/// replaced by the normalization.
pub fn generator_stationary(params: &TasepParams) -> Result<Vec<f64>> {
    let n = params.n;
    if n > GENERATOR_MAX_N {
        return Err(Error::SizeLimit(format!(
            "generator solve supports N ≤ {GENERATOR_MAX_N}, got {n}"
        )));
    }
    let size = 1usize << n;
    let bit = |i: usize| 1usize << (n - i); // site i ∈ 1..=n
    // Qᵀ π = 0 where Q[s][t] is the rate s → t
    let mut qt = nalgebra::DMatrix::<f64>::zeros(size, size);
    let mut add = |from: usize, to: usize, rate: f64| {
        qt[(to, from)] += rate;
        qt[(from, from)] -= rate;
    };
    for s in 0..size {
        if s & bit(1) == 0 {
            add(s, s | bit(1), params.alpha);
        }
        if s & bit(n) != 0 {
            add(s, s & !bit(n), params.beta);
        }
        for i in 1..n {
            if s & bit(i) != 0 && s & bit(i + 1) == 0 {
                add(s, (s & !bit(i)) | bit(i + 1), 1.0);
            }
        }
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(size);
    for t in 0..size {
        qt[(0, t)] = 1.0;
    }
    rhs[0] = 1.0;
    let sol = qt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoConvergence {
            what: "generator solve (singular system)",
            iterations: 0,
            residual: f64::INFINITY,
        })?;
    Ok(sol.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    MaxCurrent,
    LowDensity,
    HighDensity,
}

pub fn phase(params: &TasepParams) -> Phase {
    let (alpha, beta) = (params.alpha, params.beta);
    if alpha >= 0.5 && beta >= 0.5 {
        Phase::MaxCurrent
    } else if alpha < beta {
        Phase::LowDensity
    } else {
        Phase::HighDensity
    }
}

/// True within `1e-9` of a phase boundary.
pub fn near_phase_boundary(params: &TasepParams) -> bool {
    (params.alpha - 0.5).abs() < 1e-9 || (params.beta - 0.5).abs() < 1e-9
}

/// Limiting bulk density: `½` (max current), `α` (low density), `1−β`
/// (high density).
pub fn rho_bar(params: &TasepParams) -> f64 {
    match phase(params) {
        Phase::MaxCurrent => 0.5,
        Phase::LowDensity => params.alpha,
        Phase::HighDensity => 1.0 - params.beta,
    }
}

/// Additive constants of the TASEP functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdConstants {
    pub rho_bar: f64,
    /// `C = −log 4 − log(ρ̄(1−ρ̄))`.
    pub c_big: f64,
    /// `C' = C + log 4`.
    pub c_prime: f64,
    /// Constant `c` making the infimum of the effective bridge functional
    /// zero: `max(0, Λ(log a)·1[a>1], Λ(log b̃)·1[b̃>1])` with
    /// `Λ(θ) = 2 log cosh(θ/2)`.
    pub c_small: f64,
}

fn step_log_mgf(theta: f64) -> f64 {
    2.0 * (theta / 2.0).cosh().ln()
}

pub fn ld_constants(params: &TasepParams) -> LdConstants {
    let rho = rho_bar(params);
    let c_big = -(4f64.ln()) - (rho * (1.0 - rho)).ln();
    let mut c_small: f64 = 0.0;
    let (a, b) = (params.a(), params.b());
    if a > 1.0 {
        c_small = c_small.max(step_log_mgf(a.ln()));
    }
    if b > 1.0 {
        c_small = c_small.max(step_log_mgf(b.ln()));
    }
    LdConstants {
        rho_bar: rho,
        c_big,
        c_prime: c_big + 4f64.ln(),
        c_small,
    }
}

/// Solution of the fluid ODE on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidPath {
    pub grid: usize,
    /// `z(k/grid)`, `k = 0..=grid`.
    pub z: Vec<f64>,
    /// Boundary fraction `m` on each step.
    pub m: Vec<f64>,
}

impl FluidPath {
    pub fn z_at(&self, x: f64) -> f64 {
        let t = x.clamp(0.0, 1.0) * self.grid as f64;
        let i = (t.floor() as usize).min(self.grid - 1);
        let w = t - i as f64;
        self.z[i] * (1.0 - w) + self.z[i + 1] * w
    }
}

/// Boundary fraction solving `m γ^B_{11} + (1−m)(γ^I_{11} − γ^I_{0,−1}) = 0`
/// when the bulk drift is non-positive; 0 otherwise.
pub fn sticky_fraction(gi: &StepLaw, gb: &StepLaw) -> f64 {
    let d = gi.drift();
    if d > 0.0 {
        return 0.0;
    }
    let denom = gb.get(1, 1) - d;
    if denom <= 0.0 {
        // γ^B never leaves 0 and the bulk does not push up: stay at the boundary
        return 1.0;
    }
    (-d / denom).clamp(0.0, 1.0)
}

/// Forward Euler for `ż = m γ^B_{11} + (1−m)(γ^I_{11} − γ^I_{0,−1})`, with
/// `m = 0` off the boundary and `z` clamped (sticky) at 0. Bin laws are
/// piecewise constant; each step uses the bin containing its midpoint.
pub fn fluid_limit_ode(
    gamma_i: &[StepLaw],
    gamma_b: &[StepLaw],
    z0: f64,
    grid: usize,
) -> Result<FluidPath> {
    check_tilts(gamma_i, gamma_b)?;
    if !(z0 >= 0.0) || grid == 0 {
        return Err(Error::Invalid("need z0 ≥ 0 and grid ≥ 1".into()));
    }
    let bins = gamma_i.len();
    let dt = 1.0 / grid as f64;
    let mut z = vec![z0];
    let mut m = Vec::with_capacity(grid);
    for k in 0..grid {
        let mid = (k as f64 + 0.5) * dt;
        let j = ((mid * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        let (gi, gb) = (&gamma_i[j], &gamma_b[j]);
        let cur = z[k];
        let d = gi.drift();
        let (next, mk) = if cur > 0.0 {
            let free = cur + dt * d;
            if free >= 0.0 {
                (free, 0.0)
            } else {
                // reaches 0 after cur/|d|, then sticks for the rest of the step
                let frac = 1.0 - cur / (-d * dt);
                (0.0, frac * sticky_fraction(gi, gb))
            }
        } else if d > 0.0 {
            (dt * d, 0.0)
        } else {
            (0.0, sticky_fraction(gi, gb))
        };
        z.push(next);
        m.push(mk);
    }
    Ok(FluidPath { grid, z, m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(alpha: f64, beta: f64, n: usize) -> TasepParams {
        TasepParams::new(alpha, beta, n).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(matches!(
            TasepParams::new(0.4, 0.5, 3),
            Err(Error::RegionViolation(_))
        ));
        assert!(TasepParams::new(0.0, 0.5, 3).is_err());
        assert!(TasepParams::new(1.2, 0.5, 3).is_err());
        let q = p(0.75, 0.75, 3);
        assert_abs_diff_eq!(q.k_hat(), (8.0f64 / 9.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(q.a(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn alpha_beta_one_vectors() {
        let m = build_tasep(p(1.0, 1.0, 3), 1e-12).unwrap();
        assert_eq!(m.x()[0], 1.0);
        assert!(m.x()[1..].iter().all(|v| *v == 0.0));
        assert!(m.y()[1..].iter().all(|v| *v == 0.0));
        let m1 = build_tasep(p(1.0, 1.0, 1), 1e-12).unwrap();
        let d = tasep_distribution(&m1);
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn eigen_relations_on_retained_rows() {
        let m = build_tasep(p(0.75, 0.6, 4), 1e-12).unwrap();
        let q = &m.params;
        let d = m.matrix(1);
        let e = m.matrix(0);
        let dx = d.mul_vec(m.x());
        let ye = e.vec_mul(m.y());
        for b in 0..m.b_max {
            assert!((dx[b] - m.x()[b] / q.beta).abs() <= 1e-12 * dx[b].max(1.0));
            assert!((ye[b] - m.y()[b] / q.alpha).abs() <= 1e-12 * ye[b].max(1.0));
        }
        let de = d.matmul(&e);
        for b in 0..m.b_max - 1 {
            for b2 in 0..m.b_max - 1 {
                assert_eq!(de.get(b, b2), d.get(b, b2) + e.get(b, b2));
            }
        }
    }

    #[test]
    fn frak_s_boundary_entries() {
        assert_abs_diff_eq!(frak_s_entry((0, 0), (1, 0)), 0.75);
        assert_abs_diff_eq!(frak_s_entry((0, 0), (0, 0)), 0.25);
        assert_abs_diff_eq!(frak_s_entry((1, 0), (1, 1)), 5.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(frak_s_entry((1, 0), (0, 0)), 1.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(frak_s_entry((1, 0), (0, 1)), 0.25, epsilon = 1e-15);
        for a in 0..2 {
            for b in 0..=50 {
                let row: f64 = (0..2)
                    .flat_map(|a2| (0..=52).map(move |b2| (a2, b2)))
                    .map(|nx| frak_s_entry((a, b), nx))
                    .sum();
                assert_abs_diff_eq!(row, 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn effective_entries() {
        assert_eq!(effective_s_entry((0, 5), (1, 4)), 0.25);
        assert_eq!(effective_s_entry((0, 0), (1, 0)), 0.5);
        assert_eq!(effective_s_entry((1, 3), (0, 4)), 0.25);
        assert_eq!(effective_s_entry((1, 3), (0, 2)), 0.0);
    }

    #[test]
    fn distribution_matches_generator() {
        for (alpha, beta) in [(0.75, 0.75), (0.9, 0.4)] {
            for n in 1..=5 {
                let q = p(alpha, beta, n);
                let mpa = tasep_distribution(&build_tasep(q, 1e-13).unwrap());
                let gen = generator_stationary(&q).unwrap();
                for (a, b) in mpa.iter().zip(&gen) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-10);
                }
            }
        }
        assert!(matches!(
            generator_stationary(&p(0.75, 0.75, 13)),
            Err(Error::SizeLimit(_))
        ));
    }

    #[test]
    fn rho_bar_and_constants() {
        assert_eq!(rho_bar(&p(0.75, 0.75, 1)), 0.5);
        assert_eq!(rho_bar(&p(0.4, 0.9, 1)), 0.4);
        assert_abs_diff_eq!(rho_bar(&p(0.9, 0.4, 1)), 0.6, epsilon = 1e-15);
        let c = ld_constants(&p(0.75, 0.75, 1));
        assert_abs_diff_eq!(c.c_big, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c_prime, 4f64.ln(), epsilon = 1e-15);
        for (alpha, beta) in [(0.4, 0.9), (0.9, 0.4), (0.75, 0.75), (0.3, 0.8)] {
            let c = ld_constants(&p(alpha, beta, 1));
            assert_abs_diff_eq!(c.c_small, c.c_big, epsilon = 1e-12);
            assert_abs_diff_eq!(c.c_prime - c.c_big, 4f64.ln(), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(
            ld_constants(&p(0.4, 0.9, 1)).c_prime,
            -(0.24f64.ln()),
            epsilon = 1e-14
        );
    }

    #[test]
    fn effective_sampler_stays_non_negative() {
        for seed in 0..50 {
            let t = sample_effective(200, 0, seed);
            assert_eq!(t.eta.len(), 201);
            assert!(t.zeta.windows(2).all(|w| (w[1] as i64 - w[0] as i64).abs() <= 1));
        }
    }

    #[test]
    fn tilted_support_is_checked() {
        let mut bad = [0.0; 6];
        bad[step_index(0, 1)] = 1.0;
        let bad = StepLaw::new(bad).unwrap();
        assert!(matches!(
            sample_tilted(&[bad], &[StepLaw::mu_b()], 10, 0, 0),
            Err(Error::SupportViolation(_))
        ));
    }

    #[test]
    fn triple_examples() {
        let flat = Trajectory {
            eta: vec![0; 6],
            zeta: vec![0; 6],
        };
        let t = triple_empirical(&flat, 2).unwrap();
        assert!(t.pi_i.iter().flatten().all(|v| *v == 0.0));
        assert_abs_diff_eq!(t.boundary_mass.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        let stair = Trajectory {
            eta: vec![1; 6],
            zeta: (0..6).collect(),
        };
        let t = triple_empirical(&stair, 3).unwrap();
        assert_abs_diff_eq!(t.z_at(1.0), 1.0, epsilon = 1e-15);
        let total_11: f64 = t
            .pi_b
            .iter()
            .chain(&t.pi_i)
            .map(|r| r[step_index(1, 1)])
            .sum();
        assert_abs_diff_eq!(total_11, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fluid_examples() {
        let mi = vec![StepLaw::mu_i()];
        let mb = vec![StepLaw::mu_b()];
        let f = fluid_limit_ode(&mi, &mb, 0.3, 100).unwrap();
        assert!(f.z.iter().all(|z| (*z - 0.3).abs() < 1e-15));
        assert!(f.m.iter().all(|m| *m == 0.0));
        // γ^I_{0,−1} − γ^I_{11} = 0.2, γ^B_{11} = 0.25
        let mut g = [0.0; 6];
        g[step_index(0, 0)] = 0.25;
        g[step_index(0, -1)] = 0.35;
        g[step_index(1, 0)] = 0.25;
        g[step_index(1, 1)] = 0.15;
        let gi = vec![StepLaw::new(g).unwrap()];
        let f = fluid_limit_ode(&gi, &mb, 0.0, 50).unwrap();
        assert!(f.z.iter().all(|z| *z == 0.0));
        for m in &f.m {
            assert_abs_diff_eq!(*m, 0.2 / 0.45, epsilon = 1e-15);
        }
    }
}
