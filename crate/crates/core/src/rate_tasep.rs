//! TASEP large-deviation functionals on a uniform grid of `L` cells.
//!
//! Conventions: `ż_j = L (z_{j+1} − z_j)`, `F_j = (1/L) Σ_{i≤j} ρ_i`,
//! `G_j = (1/L) Σ_{i≤j} Ġ_i`, `H(x) = x log x + (1−x) log(1−x)` with
//! `H(0) = H(1) = 0`. Functionals return `+∞` outside their domain.
//!
//! The linear boundary terms are `z(0) log(α/(1−α)) = −z(0) log a` and
//! `z(1) log(β/(1−β)) = −z(1) log b̃`, with `0·∞ = 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tasep::{ld_constants, step_index, StepLaw, TasepParams};

/// Absolute tolerance for the cellwise drift relation and `z ≥ 0`.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// `x log x + (1−x) log(1−x)`, `+∞` outside `[0, 1]`.
pub fn neg_entropy(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::INFINITY;
    }
    xlogx(x) + xlogx(1.0 - x)
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `Σ ν log(ν/μ)` with `0 log 0 = 0`; `+∞` if `ν` charges a point outside
/// the support of `μ`.
pub fn step_entropy(nu: &StepLaw, mu: &StepLaw) -> f64 {
    let mut total = 0.0;
    for (n, m) in nu.probs.iter().zip(&mu.probs) {
        if *n > 0.0 {
            if *m <= 0.0 {
                return f64::INFINITY;
            }
            total += n * (n / m).ln();
        }
    }
    total.max(0.0)
}

/// Mean step `Σ s ν(a, s)`.
pub fn mean_step(nu: &StepLaw) -> f64 {
    (0..2)
        .map(|a| nu.get(a, 1) - nu.get(a, -1))
        .sum()
}

/// `coef · z` with `0·∞ = 0`.
fn linear(z: f64, coef: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        z * coef
    }
}

/// `z(0) log(α/(1−α)) + z(1) log(β/(1−β))`.
pub fn boundary_terms(z0: f64, z1: f64, params: &TasepParams) -> f64 {
    linear(z0, -params.a().ln()) + linear(z1, -params.b().ln())
}

fn check_path(z: &[f64]) -> Option<String> {
    if z.len() < 2 {
        return Some("z needs at least two grid points".into());
    }
    if let Some(j) = z.iter().position(|v| !(v.is_finite() && *v >= -CONSTRAINT_TOL)) {
        return Some(format!("z is negative or non-finite at grid point {j}"));
    }
    None
}

fn slopes(z: &[f64]) -> Vec<f64> {
    let l = (z.len() - 1) as f64;
    z.windows(2).map(|w| l * (w[1] - w[0])).collect()
}

/// Macroscopic triple `(z, Π^B = m ν^B, Π^I = (1−m) ν^I)` on `L` cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroTriple {
    pub z: Vec<f64>,
    pub m: Vec<f64>,
    pub nu_b: Vec<StepLaw>,
    pub nu_i: Vec<StepLaw>,
}

impl MacroTriple {
    pub fn cells(&self) -> usize {
        self.m.len()
    }

    /// The typical triple: `z ≡ z0`, `m ≡ 0`, `ν = μ`.
    pub fn typical(cells: usize, z0: f64) -> Self {
        Self {
            z: vec![z0; cells + 1],
            m: vec![0.0; cells],
            nu_b: vec![StepLaw::mu_b(); cells],
            nu_i: vec![StepLaw::mu_i(); cells],
        }
    }

    /// First violated constraint among: `z ≥ 0`, the drift relation
    /// `ż = m·mean(ν^B) + (1−m)·mean(ν^I)`, `m = 0` where `z > 0`, and the
    /// support conditions.
    pub fn violation(&self) -> Option<String> {
        let l = self.cells();
        if l == 0 || self.z.len() != l + 1 || self.nu_b.len() != l || self.nu_i.len() != l {
            return Some("inconsistent cell counts".into());
        }
        if let Some(v) = check_path(&self.z) {
            return Some(v);
        }
        let (mu_b, mu_i) = (StepLaw::mu_b(), StepLaw::mu_i());
        let zdot = slopes(&self.z);
        for j in 0..l {
            let m = self.m[j];
            if !(0.0..=1.0).contains(&m) {
                return Some(format!("m outside [0, 1] in cell {j}"));
            }
            if m > 0.0 && (self.z[j] > CONSTRAINT_TOL || self.z[j + 1] > CONSTRAINT_TOL) {
                return Some(format!("m > 0 in cell {j} where z > 0"));
            }
            if m > 0.0 && !self.nu_b[j].within_support_of(&mu_b) {
                return Some(format!("boundary law in cell {j} leaves the support"));
            }
            if m < 1.0 && !self.nu_i[j].within_support_of(&mu_i) {
                return Some(format!("bulk law in cell {j} leaves the support"));
            }
            let drift = m * mean_step(&self.nu_b[j]) + (1.0 - m) * mean_step(&self.nu_i[j]);
            if (drift - zdot[j]).abs() > CONSTRAINT_TOL {
                return Some(format!(
                    "drift relation fails in cell {j}: ż = {}, mean step = {drift}",
                    zdot[j]
                ));
            }
        }
        None
    }
}

/// `(1/L) Σ_j [m_j h(ν^B_j|μ^B) + (1−m_j) h(ν^I_j|μ^I)]`.
pub fn rate_star(triple: &MacroTriple) -> f64 {
    if triple.violation().is_some() {
        return f64::INFINITY;
    }
    let (mu_b, mu_i) = (StepLaw::mu_b(), StepLaw::mu_i());
    let l = triple.cells() as f64;
    let mut total = 0.0;
    for j in 0..triple.cells() {
        let m = triple.m[j];
        if m > 0.0 {
            total += m * step_entropy(&triple.nu_b[j], &mu_b);
        }
        if m < 1.0 {
            total += (1.0 - m) * step_entropy(&triple.nu_i[j], &mu_i);
        }
    }
    total / l
}

/// Effective-walk bridge functional: boundary terms + `rate_star` + `c`.
pub fn rate_s_bridge(triple: &MacroTriple, params: &TasepParams) -> f64 {
    let star = rate_star(triple);
    if !star.is_finite() {
        return star;
    }
    let z1 = *triple.z.last().expect("non-empty");
    boundary_terms(triple.z[0], z1, params) + star + ld_constants(params).c_small
}

/// Enlarged-walk functional: the effective-walk one with the constant `c`
/// replaced by `C`, plus `log 2 · (1/L) Σ m_j ν^B_{0,0,j}`.
pub fn rate_frak_s(triple: &MacroTriple, params: &TasepParams) -> f64 {
    let bridge = rate_s_bridge(triple, params);
    if !bridge.is_finite() {
        return bridge;
    }
    let k = ld_constants(params);
    let l = triple.cells() as f64;
    let extra: f64 = triple
        .m
        .iter()
        .zip(&triple.nu_b)
        .map(|(m, nu)| m * nu.probs[step_index(0, 0)])
        .sum::<f64>()
        / l;
    bridge - k.c_small + k.c_big + std::f64::consts::LN_2 * extra
}

/// Contraction of [`rate_frak_s`] to `(z, Π = Π^B + Π^I)`:
/// boundary terms + `(1/L) Σ h(Π_j|μ^I)` + `C`.
pub fn rate_pair_contracted(z: &[f64], pi: &[StepLaw], params: &TasepParams) -> f64 {
    if check_path(z).is_some() || pi.len() + 1 != z.len() {
        return f64::INFINITY;
    }
    let mu_i = StepLaw::mu_i();
    let zdot = slopes(z);
    let mut total = 0.0;
    for (j, p) in pi.iter().enumerate() {
        if (mean_step(p) - zdot[j]).abs() > CONSTRAINT_TOL {
            return f64::INFINITY;
        }
        total += step_entropy(p, &mu_i);
    }
    let z1 = *z.last().expect("non-empty");
    boundary_terms(z[0], z1, params) + total / pi.len() as f64 + ld_constants(params).c_big
}

/// `I(z, ρ)`: boundary terms + `(1/L) Σ [H(ρ_j) + H(ρ_j − ż_j)]` + `C'`.
pub fn rate_z_rho(z: &[f64], rho: &Profile, params: &TasepParams) -> f64 {
    if check_path(z).is_some() || rho.rho.len() + 1 != z.len() {
        return f64::INFINITY;
    }
    let zdot = slopes(z);
    let mut total = 0.0;
    for (r, d) in rho.rho.iter().zip(&zdot) {
        let g = r - d;
        // tolerate rounding just outside the region
        let g = if (-CONSTRAINT_TOL..0.0).contains(&g) {
            0.0
        } else if g > 1.0 && g <= 1.0 + CONSTRAINT_TOL {
            1.0
        } else {
            g
        };
        total += neg_entropy(*r) + neg_entropy(g);
    }
    let z1 = *z.last().expect("non-empty");
    boundary_terms(z[0], z1, params) + total / rho.rho.len() as f64 + ld_constants(params).c_prime
}

/// Cell averages of a density profile on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub rho: Vec<f64>,
}

impl Profile {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::Invalid("profile needs at least one cell".into()));
        }
        if let Some(j) = rho.iter().position(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Invalid(format!(
                "profile value {} in cell {j} outside [0, 1]",
                rho[j]
            )));
        }
        Ok(Self { rho })
    }

    pub fn constant(value: f64, cells: usize) -> Result<Self> {
        Self::new(vec![value; cells])
    }

    pub fn cells(&self) -> usize {
        self.rho.len()
    }

    /// `F_j`, `j = 0..=L`.
    pub fn cumulative(&self) -> Vec<f64> {
        cumulative(&self.rho)
    }
}

fn cumulative(rates: &[f64]) -> Vec<f64> {
    let l = rates.len() as f64;
    let mut out = Vec::with_capacity(rates.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for r in rates {
        acc += r;
        out.push(acc / l);
    }
    out
}

/// `G` through its cell slopes `Ġ_j ∈ [0, 1]`, with `G(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GPath {
    pub gdot: Vec<f64>,
}

impl GPath {
    pub fn new(gdot: Vec<f64>) -> Result<Self> {
        if let Some(j) = gdot.iter().position(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::Invalid(format!("Ġ outside [0, 1] in cell {j}")));
        }
        Ok(Self { gdot })
    }

    pub fn cumulative(&self) -> Vec<f64> {
        cumulative(&self.gdot)
    }
}

fn require_profile_params(params: &TasepParams) -> Result<()> {
    if params.alpha >= 1.0 || params.beta >= 1.0 {
        return Err(Error::Invalid(
            "profile functional needs alpha < 1 and beta < 1".into(),
        ));
    }
    Ok(())
}

/// Index of the lowest-index minimum of `F_j − G_j` over `j = 0..=L`.
fn argmin_gap(f: &[f64], g: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..f.len() {
        if f[j] - g[j] < f[best] - g[best] {
            best = j;
        }
    }
    best
}

/// `(1/L) Σ [H(ρ_j) + H(Ġ_j)] + log(ab̃)·min_j (F_j − G_j) − log(b̃)(F_L − G_L) + C'`.
pub fn profile_objective(rho: &Profile, gdot: &[f64], params: &TasepParams) -> f64 {
    assert_eq!(rho.cells(), gdot.len());
    let l = gdot.len() as f64;
    let f = rho.cumulative();
    let g = cumulative(gdot);
    let j = argmin_gap(&f, &g);
    let ent: f64 = rho
        .rho
        .iter()
        .zip(gdot)
        .map(|(r, d)| neg_entropy(*r) + neg_entropy(*d))
        .sum::<f64>()
        / l;
    let (la, lb) = (params.a().ln(), params.b().ln());
    let last = f.len() - 1;
    ent + (la + lb) * (f[j] - g[j]) - lb * (f[last] - g[last]) + ld_constants(params).c_prime
}

/// Optimizer used by [`rate_profile_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSolver {
    /// Golden-section search over `s = −min_j(F_j − G_j)`; for fixed `s` the
    /// problem is separable under prefix-sum barriers and solved exactly by
    /// the taut string below `F + s`.
    Exact,
    /// Projected subgradient on `Ġ ∈ [0,1]^L` with iterate averaging.
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileOptions {
    pub solver: ProfileSolver,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            solver: ProfileSolver::Exact,
            tol: 1e-12,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub value: f64,
    pub gdot: Vec<f64>,
    /// Grid index attaining `min_j (F_j − G_j)` (lowest on ties).
    pub argmin_index: usize,
    pub argmin_x: f64,
    pub iterations: usize,
    /// Spread of objective values across the final search bracket (exact
    /// solver) or between best and averaged iterates (subgradient).
    pub gap: f64,
    pub solver: ProfileSolver,
}

impl ProfileReport {
    /// Rows `(x, rho, F, G_opt, integrand)` at cell right endpoints.
    pub fn csv_rows(&self, rho: &Profile) -> Vec<[f64; 5]> {
        let l = rho.cells();
        let f = rho.cumulative();
        let g = cumulative(&self.gdot);
        (0..l)
            .map(|j| {
                [
                    (j + 1) as f64 / l as f64,
                    rho.rho[j],
                    f[j + 1],
                    g[j + 1],
                    neg_entropy(rho.rho[j]) + neg_entropy(self.gdot[j]),
                ]
            })
            .collect()
    }
}

pub fn rate_profile(rho: &Profile, params: &TasepParams) -> Result<ProfileReport> {
    rate_profile_with(rho, params, &ProfileOptions::default())
}

pub fn rate_profile_with(
    rho: &Profile,
    params: &TasepParams,
    opts: &ProfileOptions,
) -> Result<ProfileReport> {
    require_profile_params(params)?;
    match opts.solver {
        ProfileSolver::Exact => exact_profile(rho, params, opts),
        ProfileSolver::Subgradient => subgradient_profile(rho, params, opts),
    }
}

/// Minimizes `Σ ψ(g_i)` (ψ strictly convex, minimal at `g_free`) subject
/// to `Σ_{i≤j} g_i ≤ caps[j]`; `caps` is non-decreasing with `caps[0] ≥ 0`.
/// Slopes are the successive minimal chords to the barrier, hence
/// non-decreasing, which is the KKT structure of the optimum.
fn taut_string(caps: &[f64], g_free: f64) -> Vec<f64> {
    let l = caps.len() - 1;
    let mut g = Vec::with_capacity(l);
    let mut k = 0;
    let mut pos = 0.0;
    while k < l {
        let mut slope = g_free;
        let mut hit = None;
        for (j, cap) in caps.iter().enumerate().skip(k + 1) {
            let s = (cap - pos) / (j - k) as f64;
            if s <= slope {
                slope = s;
                hit = Some(j);
            }
        }
        match hit {
            None => {
                g.resize(l, g_free);
                break;
            }
            Some(j) => {
                let slope = slope.clamp(0.0, 1.0);
                g.resize(j, slope);
                pos = caps[j];
                k = j;
            }
        }
    }
    g
}

fn exact_profile(rho: &Profile, params: &TasepParams, opts: &ProfileOptions) -> Result<ProfileReport> {
    let l = rho.cells();
    let lf = l as f64;
    let f = rho.cumulative();
    let beta = params.beta;
    let solve = |s: f64| -> (f64, Vec<f64>) {
        let caps: Vec<f64> = f.iter().map(|v| lf * (v + s)).collect();
        let gdot = taut_string(&caps, beta);
        (profile_objective(rho, &gdot, params), gdot)
    };
    // Beyond s_max the free slope β is feasible and the objective only grows.
    let s_max = (0..=l)
        .map(|j| beta * j as f64 / lf - f[j])
        .fold(0.0, f64::max);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, s_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (solve(x1).0, solve(x2).0);
    let mut iterations = 0;
    while hi - lo > opts.tol.max(1e-15) * (1.0 + s_max) && iterations < opts.max_iter {
        iterations += 1;
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = solve(x1).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = solve(x2).0;
        }
    }
    let candidates = [0.0, s_max, lo, hi, 0.5 * (lo + hi)];
    let (value, gdot) = candidates
        .iter()
        .map(|s| solve(*s))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("non-empty");
    if !value.is_finite() {
        return Err(Error::NoConvergence {
            what: "profile functional",
            iterations,
            residual: value,
        });
    }
    let gap = (solve(lo).0 - solve(hi).0).abs();
    Ok(finish(rho, gdot, value, iterations, gap, ProfileSolver::Exact))
}

fn finish(
    rho: &Profile,
    gdot: Vec<f64>,
    value: f64,
    iterations: usize,
    gap: f64,
    solver: ProfileSolver,
) -> ProfileReport {
    let f = rho.cumulative();
    let g = cumulative(&gdot);
    let j = argmin_gap(&f, &g);
    ProfileReport {
        value,
        gdot,
        argmin_index: j,
        argmin_x: j as f64 / rho.cells() as f64,
        iterations,
        gap,
        solver,
    }
}

fn subgradient_profile(
    rho: &Profile,
    params: &TasepParams,
    opts: &ProfileOptions,
) -> Result<ProfileReport> {
    const EDGE: f64 = 1e-12;
    let l = rho.cells();
    let lf = l as f64;
    let f = rho.cumulative();
    let (la, lb) = (params.a().ln(), params.b().ln());
    let mut x: Vec<f64> = rho.rho.iter().map(|r| r.clamp(EDGE, 1.0 - EDGE)).collect();
    let mut best_val = profile_objective(rho, &x, params);
    let mut best = x.clone();
    let mut avg = x.clone();
    let mut weight = 0.0;
    let mut grad = vec![0.0; l];
    for k in 1..=opts.max_iter {
        let g = cumulative(&x);
        let j = argmin_gap(&f, &g);
        for (i, gi) in grad.iter_mut().enumerate() {
            let xi = x[i];
            let mut d = (xi / (1.0 - xi)).ln() + lb;
            if i < j {
                d -= la + lb;
            }
            *gi = d / lf;
        }
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = 0.5 / (k as f64).sqrt();
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi = (*xi - step * gi / norm).clamp(EDGE, 1.0 - EDGE);
        }
        let w = step;
        weight += w;
        for (a, xi) in avg.iter_mut().zip(&x) {
            *a += w / weight * (xi - *a);
        }
        let v = profile_objective(rho, &x, params);
        if v < best_val {
            best_val = v;
            best.clone_from(&x);
        }
    }
    let avg_val = profile_objective(rho, &avg, params);
    let (value, gdot) = if avg_val < best_val {
        (avg_val, avg)
    } else {
        (best_val, best)
    };
    Ok(finish(
        rho,
        gdot,
        value,
        opts.max_iter,
        (avg_val - best_val).abs(),
        ProfileSolver::Subgradient,
    ))
}
