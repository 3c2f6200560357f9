//! Pair rate functional `I²` of finite rational models.
//!
//! Primal form: minimize
//! `Σ 𝒞²[s,t] log(𝒞²[s,t] / (𝒞¹[s] 𝔐[s,t])) + log λ`
//! over stationary pair laws `𝒞²` on `(A×B)²` whose `A²`-marginal is `ν²`.
//!
//! Dual form: maximize
//! `D(p) = Σ ν²(a,a') log p(a,a') + log λ − log k(p)`
//! where `k(p)` is the Perron value of `M^(a)_{b,b'} p(a,a')`.
//!
//! `ν²` is stationary, so its support splits into strongly connected
//! classes with no edges between them; both problems decompose over these
//! classes, and `I² = Σ_c w_c I²(ν²_c)` with `w_c` the class masses.

use rayon::prelude::*;
use serde::Serialize;

use crate::empirical::KWordMeasure;
use crate::error::{Error, Result};
use crate::perron::{
    dominant_class, perron_finite, stationary_distribution, strongly_connected_components,
    NonNegativeMatrix, DEFAULT_MAX_ITER,
};
use crate::rational::{build_enlarged, theta_invariant, RationalModel};

const EIGEN_TOL: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 1_000_000;

/// Probability law on ordered pairs of `states` states, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMeasure {
    pub states: usize,
    pub weights: Vec<f64>,
}

impl PairMeasure {
    pub fn new(states: usize, weights: Vec<f64>) -> Result<Self> {
        if states == 0 || weights.len() != states * states {
            return Err(Error::Invalid(format!(
                "pair measure on {states} states needs {} weights",
                states * states
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Invalid("pair weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("pair weights sum to {total}, not 1")));
        }
        Ok(Self { states, weights })
    }

    pub fn from_kword(nu: &KWordMeasure) -> Result<Self> {
        if nu.order != 2 {
            return Err(Error::Invalid("a pair measure needs order 2".into()));
        }
        Self::new(nu.alphabet_size, nu.weights.clone())
    }

    pub fn uniform(states: usize) -> Self {
        let n = states * states;
        Self {
            states,
            weights: vec![1.0 / n as f64; n],
        }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.states + b]
    }

    pub fn first_marginal(&self) -> Vec<f64> {
        self.weights
            .chunks(self.states)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn second_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.states];
        for (i, w) in self.weights.iter().enumerate() {
            out[i % self.states] += w;
        }
        out
    }

    /// Max deviation between the two one-dimensional marginals.
    pub fn stationarity_defect(&self) -> f64 {
        self.first_marginal()
            .iter()
            .zip(self.second_marginal())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_stationary(&self, tol: f64) -> bool {
        self.stationarity_defect() <= tol
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Multipliers `p(a,a')`. Optimizer output is non-negative (zero off the
/// support of `ν²`); user input must be strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltMatrix {
    pub size: usize,
    pub p: Vec<f64>,
}

impl TiltMatrix {
    pub fn new(size: usize, p: Vec<f64>) -> Result<Self> {
        if size == 0 || p.len() != size * size {
            return Err(Error::Invalid(format!("tilt needs {} entries", size * size)));
        }
        if p.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Invalid("tilt entries must be positive".into()));
        }
        Ok(Self { size, p })
    }

    pub fn ones(size: usize) -> Self {
        Self {
            size,
            p: vec![1.0; size * size],
        }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.p[a * self.size + b]
    }

    pub fn is_stochastic(&self, tol: f64) -> bool {
        self.p
            .chunks(self.size)
            .all(|r| r.iter().all(|v| *v == 0.0) || (r.iter().sum::<f64>() - 1.0).abs() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Minimizer {
    Pair(PairMeasure),
    Tilt(TiltMatrix),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// The value is `+∞` (empty constraint set or support violation).
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub value: f64,
    pub minimizer: Minimizer,
    /// Primal minus dual value (an estimate when only one side is solved).
    pub gap: f64,
    pub iterations: usize,
    /// Final optimality residual of the solver.
    pub residual: f64,
    pub status: SolveStatus,
}

impl RateReport {
    fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
            minimizer: Minimizer::None,
            gap: 0.0,
            iterations: 0,
            residual: 0.0,
            status: SolveStatus::Infinite,
        }
    }
}

/// Solver knobs shared by the primal and dual.
#[derive(Debug, Clone, Copy)]
pub struct RateOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

fn xlogy_ratio(q: f64, r: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else if r == 0.0 {
        f64::INFINITY
    } else {
        q * (q / r).ln()
    }
}

fn check_input(model: &RationalModel, nu2: &PairMeasure) -> Result<()> {
    if nu2.states != model.alphabet_size() {
        return Err(Error::Invalid(format!(
            "pair measure is on {} symbols, model has {}",
            nu2.states,
            model.alphabet_size()
        )));
    }
    if !nu2.is_stationary(1e-9) {
        return Err(Error::NotStationaryInput(nu2.stationarity_defect()));
    }
    Ok(())
}

/// Support classes of a stationary pair measure, with their masses.
fn support_classes(nu2: &PairMeasure) -> Vec<(Vec<usize>, f64)> {
    let n = nu2.states;
    let support = NonNegativeMatrix::new(
        n,
        nu2.weights.iter().map(|w| if *w > 0.0 { 1.0 } else { 0.0 }).collect(),
    )
    .expect("0/1 support matrix");
    strongly_connected_components(&support)
        .into_iter()
        .filter_map(|c| {
            let mass: f64 = c
                .iter()
                .flat_map(|&a| c.iter().map(move |&b| (a, b)))
                .map(|(a, b)| nu2.get(a, b))
                .sum();
            (mass > 0.0).then_some((c, mass))
        })
        .collect()
}

/// The tilted matrix `M^(a)_{b,b'} p(a,a')` on `A × B`.
pub fn tilted_matrix(model: &RationalModel, p: &[f64]) -> NonNegativeMatrix {
    let na = model.alphabet_size();
    let nb = model.dim();
    let n = na * nb;
    let mut entries = vec![0.0; n * n];
    for a in 0..na {
        for a2 in 0..na {
            let w = p[a * na + a2];
            if w == 0.0 {
                continue;
            }
            for b in 0..nb {
                for b2 in 0..nb {
                    entries[(a * nb + b) * n + a2 * nb + b2] = model.matrix(a).get(b, b2) * w;
                }
            }
        }
    }
    NonNegativeMatrix::new(n, entries).expect("products of non-negative entries")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltedPerron {
    pub k: f64,
    pub gamma: Vec<f64>,
}

/// Perron value and vector of the tilted matrix for a positive tilt.
pub fn tilted_perron(model: &RationalModel, p: &TiltMatrix) -> Result<TiltedPerron> {
    if p.size != model.alphabet_size() {
        return Err(Error::Invalid("tilt size must equal the alphabet size".into()));
    }
    let pd = perron_finite(&tilted_matrix(model, &p.p), 1e-13, DEFAULT_MAX_ITER)?;
    Ok(TiltedPerron {
        k: pd.value,
        gamma: pd.right_vector,
    })
}

/// The `A²`-projection of the stationary enlarged pair law `Θ ⊗ 𝔖`, the
/// zero of `I²`.
pub fn typical_pair_measure(model: &RationalModel) -> Result<PairMeasure> {
    let chain = build_enlarged(model, 1e-13)?;
    let theta = stationary_distribution(&chain.s_small, 1e-15)?;
    let big = theta_invariant(&chain, &theta)?;
    let na = model.alphabet_size();
    let nb = model.dim();
    let mut w = vec![0.0; na * na];
    for s in 0..na * nb {
        for t in 0..na * nb {
            w[(s / nb) * na + t / nb] += big[s] * chain.s_frak.get(s, t);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    PairMeasure::new(na, w)
}

/// Perron value of `M = Σ_a M^(a)`.
fn model_lambda(model: &RationalModel) -> Result<f64> {
    Ok(perron_finite(model.total_matrix(), 1e-13, DEFAULT_MAX_ITER)?.value)
}

// ---------------------------------------------------------------- dual ----

/// Restriction of the dual to one support class.
struct DualClass<'a> {
    model: &'a RationalModel,
    symbols: Vec<usize>,
    edges: Vec<(usize, usize)>,
    /// class-normalized `ν²` on `edges`
    target: Vec<f64>,
}

struct DualEval {
    /// `log k − Σ ν θ`, to be minimized
    objective: f64,
    gradient: Vec<f64>,
}

impl<'a> DualClass<'a> {
    fn matrix(&self, theta: &[f64]) -> NonNegativeMatrix {
        let nb = self.model.dim();
        let m = self.symbols.len();
        let n = m * nb;
        let pos = |a: usize| self.symbols.iter().position(|s| *s == a).unwrap();
        let mut entries = vec![0.0; n * n];
        for (e, &(a, a2)) in self.edges.iter().enumerate() {
            let (i, j) = (pos(a), pos(a2));
            let w = theta[e].exp();
            for b in 0..nb {
                for b2 in 0..nb {
                    entries[(i * nb + b) * n + j * nb + b2] = self.model.matrix(a).get(b, b2) * w;
                }
            }
        }
        NonNegativeMatrix::new(n, entries).expect("finite tilt")
    }

    fn eval(&self, theta: &[f64]) -> Result<Option<DualEval>> {
        let t = self.matrix(theta);
        let dom = match dominant_class(&t, EIGEN_TOL, EIGEN_MAX_ITER) {
            Ok(d) => d,
            Err(Error::Invalid(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let nb = self.model.dim();
        let pos = |a: usize| self.symbols.iter().position(|s| *s == a).unwrap();
        let lr: f64 = dom.left.iter().zip(&dom.right).map(|(a, b)| a * b).sum();
        let gradient = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &(a, a2))| {
                let (i, j) = (pos(a), pos(a2));
                let mut flow = 0.0;
                for b in 0..nb {
                    let l = dom.left[i * nb + b];
                    if l == 0.0 {
                        continue;
                    }
                    for b2 in 0..nb {
                        flow += l * t.get(i * nb + b, j * nb + b2) * dom.right[j * nb + b2];
                    }
                }
                flow / (dom.value * lr) - self.target[e]
            })
            .collect();
        let objective =
            dom.value.ln() - self.target.iter().zip(theta).map(|(n, t)| n * t).sum::<f64>();
        Ok(Some(DualEval {
            objective,
            gradient,
        }))
    }
}

struct Minimized {
    x: Vec<f64>,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Quasi-Newton (BFGS) descent with Armijo backtracking; steps that do not
/// decrease the objective are rejected.
fn bfgs<F>(f: F, x0: Vec<f64>, tol: f64, max_iter: usize) -> Result<Option<Minimized>>
where
    F: Fn(&[f64]) -> Result<Option<DualEval>>,
{
    let d = x0.len();
    let mut x = x0;
    let Some(mut cur) = f(&x)? else {
        return Ok(None);
    };
    let identity = |d: usize| {
        let mut h = vec![0.0; d * d];
        (0..d).for_each(|i| h[i * d + i] = 1.0);
        h
    };
    let mut h = identity(d);
    let norm = |g: &[f64]| g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut iterations = 0;
    while iterations < max_iter && norm(&cur.gradient) > tol {
        iterations += 1;
        let g = &cur.gradient;
        let mut dir: Vec<f64> = (0..d)
            .map(|i| -(0..d).map(|j| h[i * d + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = dir.iter().zip(g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            h = identity(d);
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            if let Some(ev) = f(&trial)? {
                if ev.objective <= cur.objective + 1e-4 * step * slope {
                    accepted = Some((trial, ev));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((nx, next)) = accepted else {
            break;
        };
        let s: Vec<f64> = nx.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.gradient.iter().zip(g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-18 {
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| h[i * d + j] * y[j]).sum())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = nx;
        cur = next;
    }
    let grad_norm = norm(&cur.gradient);
    Ok(Some(Minimized {
        x,
        value: cur.objective,
        grad_norm,
        iterations,
        converged: grad_norm <= tol,
    }))
}

/// Dual evaluation of `I²(ν²)`; the returned tilt is gauged to be row
/// stochastic on each support class (the gauge leaves `D` unchanged).
///
/// The reported gap is `Σ (ν_p − ν²) log p`, where `ν_p` is the `A²`-marginal
/// of the tilted Perron chain; it vanishes at a stationary point.
pub fn pair_rate_dual(
    model: &RationalModel,
    nu2: &PairMeasure,
    opts: RateOptions,
) -> Result<RateReport> {
    check_input(model, nu2)?;
    let lambda = model_lambda(model)?;
    let na = model.alphabet_size();
    let mut p_out = vec![0.0; na * na];
    let mut value = lambda.ln();
    let mut gap = 0.0;
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    let mut converged = true;
    for (symbols, mass) in support_classes(nu2) {
        let edges: Vec<(usize, usize)> = symbols
            .iter()
            .flat_map(|&a| symbols.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| nu2.get(a, b) > 0.0)
            .collect();
        let target = edges.iter().map(|&(a, b)| nu2.get(a, b) / mass).collect();
        let class = DualClass {
            model,
            symbols: symbols.clone(),
            edges: edges.clone(),
            target,
        };
        let theta0 = vec![0.0; edges.len()];
        let Some(sol) = bfgs(|t| class.eval(t), theta0, opts.tol, opts.max_iter)? else {
            return Ok(RateReport::infinite());
        };
        value += mass * (-sol.value);
        iterations += sol.iterations;
        residual = residual.max(sol.grad_norm);
        converged &= sol.converged;
        let ev = class.eval(&sol.x)?.expect("evaluated before");
        gap += mass
            * ev
                .gradient
                .iter()
                .zip(&sol.x)
                .map(|(g, t)| g * t)
                .sum::<f64>();
        // gauge: p(a,a') φ(a') / (ρ φ(a)) with (ρ, φ) the Perron data of p
        let m = symbols.len();
        let mut pm = vec![0.0; m * m];
        for (e, &(a, a2)) in edges.iter().enumerate() {
            let i = symbols.iter().position(|s| *s == a).unwrap();
            let j = symbols.iter().position(|s| *s == a2).unwrap();
            pm[i * m + j] = sol.x[e].exp();
        }
        let pmat = NonNegativeMatrix::new(m, pm).expect("positive tilt");
        let dom = dominant_class(&pmat, EIGEN_TOL, EIGEN_MAX_ITER)?;
        for i in 0..m {
            for j in 0..m {
                let v = pmat.get(i, j);
                if v > 0.0 {
                    p_out[symbols[i] * na + symbols[j]] =
                        v * dom.right[j] / (dom.value * dom.right[i]);
                }
            }
        }
    }
    Ok(RateReport {
        value,
        minimizer: Minimizer::Tilt(TiltMatrix { size: na, p: p_out }),
        gap,
        iterations,
        residual,
        status: if converged {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIterations
        },
    })
}

// -------------------------------------------------------------- primal ----

/// Alternating minimization: with `q` fixed, the I-projection of
/// `q(s) 𝔐(s,t)` onto {block sums = `ν²`, stationary} is computed by cyclic
/// Bregman projections; then `q ← 𝒞¹`. Each outer step does not increase
/// the objective, which equals `KL(𝒞² ‖ 𝒞¹ ⊗ 𝔐)` at `q = 𝒞¹`.
pub fn pair_rate_primal(
    model: &RationalModel,
    nu2: &PairMeasure,
    opts: RateOptions,
) -> Result<RateReport> {
    check_input(model, nu2)?;
    let lambda = model_lambda(model)?;
    let na = model.alphabet_size();
    let nb = model.dim();
    let n = na * nb;
    let big = model.enlarged_matrix();
    let sym = |s: usize| s / nb;

    // block feasibility
    for a in 0..na {
        for a2 in 0..na {
            if nu2.get(a, a2) > 0.0 && model.matrix(a).entries().iter().all(|v| *v == 0.0) {
                return Ok(RateReport::infinite());
            }
        }
    }
    // support of the reference: 𝔐 > 0 on blocks charged by ν²
    let support: Vec<bool> = (0..n * n)
        .map(|k| big.entries()[k] > 0.0 && nu2.get(sym(k / n), sym(k % n)) > 0.0)
        .collect();

    let nu1 = nu2.first_marginal();
    let mut q: Vec<f64> = (0..n).map(|s| nu1[sym(s)] / nb as f64).collect();
    let mut alpha = vec![0.0; na * na];
    let mut phi = vec![0.0; n];
    let mut c = vec![0.0; n * n];
    let mut prev_value = f64::INFINITY;
    let mut value = f64::INFINITY;
    let mut violation = f64::INFINITY;
    let mut stable = 0;
    let mut iterations = 0;

    let build = |q: &[f64], alpha: &[f64], phi: &[f64], c: &mut [f64]| {
        for s in 0..n {
            for t in 0..n {
                let k = s * n + t;
                c[k] = if support[k] {
                    q[s] * big.entries()[k] * (alpha[sym(s) * na + sym(t)] + phi[s] - phi[t]).exp()
                } else {
                    0.0
                };
            }
        }
    };

    while iterations < opts.max_iter {
        iterations += 1;
        build(&q, &alpha, &phi, &mut c);
        for _sweep in 0..200 {
            // block sums
            for a in 0..na {
                for a2 in 0..na {
                    let target = nu2.get(a, a2);
                    if target == 0.0 {
                        continue;
                    }
                    let mut sum = 0.0;
                    for b in 0..nb {
                        for b2 in 0..nb {
                            sum += c[(a * nb + b) * n + a2 * nb + b2];
                        }
                    }
                    if sum == 0.0 {
                        return Ok(RateReport::infinite());
                    }
                    let f = target / sum;
                    alpha[a * na + a2] += f.ln();
                    for b in 0..nb {
                        for b2 in 0..nb {
                            c[(a * nb + b) * n + a2 * nb + b2] *= f;
                        }
                    }
                }
            }
            // state balance, diagonal excluded
            for s in 0..n {
                let mut r = 0.0;
                let mut col = 0.0;
                for t in 0..n {
                    if t != s {
                        r += c[s * n + t];
                        col += c[t * n + s];
                    }
                }
                if r > 0.0 && col > 0.0 {
                    let tau = 0.5 * (col / r).ln();
                    phi[s] += tau;
                    let (up, down) = (tau.exp(), (-tau).exp());
                    for t in 0..n {
                        if t != s {
                            c[s * n + t] *= up;
                            c[t * n + s] *= down;
                        }
                    }
                }
            }
            violation = constraint_violation(&c, nu2, na, nb);
            if violation < 1e-14 {
                break;
            }
        }
        let c1: Vec<f64> = c.chunks(n).map(|r| r.iter().sum()).collect();
        value = lambda.ln();
        for s in 0..n {
            for t in 0..n {
                let k = s * n + t;
                value += xlogy_ratio(c[k], c1[s] * big.entries()[k]);
            }
        }
        if (prev_value - value).abs() <= 1e-15 * (1.0 + value.abs()) && violation < 1e-10 {
            stable += 1;
            if stable >= 3 {
                break;
            }
        } else {
            stable = 0;
        }
        prev_value = value;
        q = c1;
    }
    if violation > 1e-6 {
        return Ok(RateReport::infinite());
    }
    let dual = pair_rate_dual(model, nu2, opts)?;
    let converged = stable >= 3;
    Ok(RateReport {
        value,
        minimizer: Minimizer::Pair(PairMeasure { states: n, weights: c }),
        gap: value - dual.value,
        iterations,
        residual: violation,
        status: if converged {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIterations
        },
    })
}

fn constraint_violation(c: &[f64], nu2: &PairMeasure, na: usize, nb: usize) -> f64 {
    let n = na * nb;
    let mut worst: f64 = 0.0;
    for a in 0..na {
        for a2 in 0..na {
            let mut sum = 0.0;
            for b in 0..nb {
                for b2 in 0..nb {
                    sum += c[(a * nb + b) * n + a2 * nb + b2];
                }
            }
            worst = worst.max((sum - nu2.get(a, a2)).abs());
        }
    }
    for s in 0..n {
        let r: f64 = (0..n).map(|t| c[s * n + t]).sum();
        let col: f64 = (0..n).map(|t| c[t * n + s]).sum();
        worst = worst.max((r - col).abs());
    }
    worst
}

// ------------------------------------------------------- closed forms ----

/// `Σ ν²(a,a') log(ν²(a,a') / (ν¹(a) ℙ(a')))` with `ℙ(a) = m(a)/Σm`.
pub fn rate_parallel_case(m: &[f64], nu2: &PairMeasure) -> Result<f64> {
    if m.len() != nu2.states || m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Invalid("weights must be non-negative, one per symbol".into()));
    }
    let total: f64 = m.iter().sum();
    if total <= 0.0 {
        return Err(Error::Invalid("weights must not all vanish".into()));
    }
    let nu1 = nu2.first_marginal();
    let n = nu2.states;
    let mut value = 0.0;
    for a in 0..n {
        for a2 in 0..n {
            value += xlogy_ratio(nu2.get(a, a2), nu1[a] * m[a2] / total);
        }
    }
    Ok(value)
}

/// Conditional relative entropy of `ν^k` with respect to `ν^{k−1} ⊗ Uniform(A)`.
pub fn rate_stochastic_case(nuk: &KWordMeasure, alphabet_size: usize) -> Result<f64> {
    if nuk.alphabet_size != alphabet_size {
        return Err(Error::Invalid("alphabet size mismatch".into()));
    }
    let a = alphabet_size as f64;
    let prefix = if nuk.order == 1 {
        vec![1.0]
    } else {
        nuk.prefix_marginal()
    };
    Ok(nuk
        .weights
        .iter()
        .enumerate()
        .map(|(w, v)| xlogy_ratio(*v, prefix[w / alphabet_size] / a))
        .sum())
}

/// Riemann sum `(1/L) Σ_j I²(Π²_j)` over bins, each evaluated by the dual.
/// Bins that are not stationary probability laws on `A²` make the value
/// `+∞`.
pub fn spatial_rate(model: &RationalModel, bins: &[Vec<f64>], opts: RateOptions) -> Result<f64> {
    if bins.is_empty() {
        return Err(Error::Invalid("at least one bin is required".into()));
    }
    let na = model.alphabet_size();
    let values = bins
        .par_iter()
        .map(|w| {
            if w.len() != na * na {
                return Err(Error::Invalid("bin law has the wrong size".into()));
            }
            let Ok(nu) = PairMeasure::new(na, w.clone()) else {
                return Ok(f64::INFINITY);
            };
            if !nu.is_stationary(1e-9) {
                return Ok(f64::INFINITY);
            }
            Ok(pair_rate_dual(model, &nu, opts)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / bins.len() as f64)
}
