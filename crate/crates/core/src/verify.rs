//! Exact enumeration oracles, finite-N large-deviation estimates and the
//! sandwich check between two laws on a common finite set.
//!
//! Enumeration splits the words by prefix into independent work units
//! (at least 8 when `|A|^N` allows) and writes each unit into its own
//! contiguous block, so results do not depend on scheduling. Monte Carlo
//! units use one ChaCha stream each and are reduced in unit order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::empirical::{bin_of, empirical_k, KWordMeasure};
use crate::error::{Error, Result};
use crate::rate_tasep::Profile;
use crate::rational::{build_enlarged, partition_function, BridgeSampler, RationalModel, Word};
use crate::tasep::{
    build_tasep, fluid_limit_ode, sample_tilted, step_index, triple_empirical, StepLaw, TasepBridge,
    TasepParams, TruncatedTasepModel,
};

/// Largest number of words enumerated exactly.
pub const MAX_ENUMERATION: usize = 1 << 20;

const SPLIT: usize = 8;

fn word_count(alphabet_size: usize, n: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..n {
        total = total.saturating_mul(alphabet_size);
        if total > MAX_ENUMERATION {
            return Err(Error::SizeLimit(format!(
                "{alphabet_size}^{n} words exceed the enumeration limit {MAX_ENUMERATION}"
            )));
        }
    }
    Ok(total)
}

/// Shortest prefix length giving at least [`SPLIT`] units (or all of `N`).
fn prefix_len(alphabet_size: usize, n: usize) -> usize {
    let mut p = 0;
    let mut units = 1;
    while units < SPLIT && p < n {
        units *= alphabet_size;
        p += 1;
    }
    p
}

/// Exact `μ_N` over `A^N`, indexed with the first symbol most significant.
pub fn enumerate_rational(model: &RationalModel, n: usize) -> Result<Vec<f64>> {
    let a = model.alphabet_size();
    let total = word_count(a, n)?;
    let z = partition_function(model, n)?;
    if z.value == 0.0 && !z.log_space {
        return Err(Error::DegenerateLaw);
    }
    let p = prefix_len(a, n);
    let block = total / a.pow(p as u32);
    let mut out = vec![0.0; total];
    out.par_chunks_mut(block).enumerate().for_each(|(unit, chunk)| {
        let prefix = Word::from_index(unit, p, a);
        let mut v = model.y().to_vec();
        let mut log_scale = 0.0;
        for &s in prefix.symbols() {
            v = model.matrix(s).vec_mul(&v);
            rescale(&mut v, &mut log_scale);
        }
        dfs_rational(model, &v, log_scale - z.ln, n - p, chunk);
    });
    Ok(out)
}

fn rescale(v: &mut [f64], log_scale: &mut f64) {
    let top = v.iter().fold(0.0_f64, |m, t| m.max(*t));
    if top > 0.0 {
        v.iter_mut().for_each(|t| *t /= top);
        *log_scale += top.ln();
    }
}

fn dfs_rational(model: &RationalModel, v: &[f64], log_scale: f64, remaining: usize, out: &mut [f64]) {
    if remaining == 0 {
        let w: f64 = v.iter().zip(model.x()).map(|(a, b)| a * b).sum();
        out[0] = if w > 0.0 { (w.ln() + log_scale).exp() } else { 0.0 };
        return;
    }
    let a = model.alphabet_size();
    let block = out.len() / a;
    for (s, chunk) in out.chunks_mut(block).enumerate() {
        let mut next = model.matrix(s).vec_mul(v);
        let mut scale = log_scale;
        rescale(&mut next, &mut scale);
        dfs_rational(model, &next, scale, remaining - 1, chunk);
    }
}

/// Exact truncated TASEP `μ_N`, indexed like [`enumerate_rational`].
pub fn enumerate_tasep(model: &TruncatedTasepModel) -> Result<Vec<f64>> {
    let n = model.params.n;
    let total = word_count(2, n)?;
    let p = prefix_len(2, n);
    let block = total >> p;
    let z = model.partition_function();
    let mut out = vec![0.0; total];
    out.par_chunks_mut(block).enumerate().for_each(|(unit, chunk)| {
        let prefix = Word::from_index(unit, p, 2);
        model.completion_weights(prefix.symbols(), chunk);
        chunk.iter_mut().for_each(|w| *w /= z);
    });
    Ok(out)
}

/// Event defining an `ℓ¹` ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// `‖ν̂^k − center‖₁ ≤ radius` for the cyclic `k`-block measure.
    KWordBall { center: KWordMeasure, radius: f64 },
    /// `Σ_j |π̂_N(bin j) − ρ_j/L| ≤ radius` with one bin per profile cell.
    ProfileBall { profile: Profile, radius: f64 },
}

impl Event {
    pub fn radius(&self) -> f64 {
        match self {
            Event::KWordBall { radius, .. } | Event::ProfileBall { radius, .. } => *radius,
        }
    }

    pub fn metric(&self) -> &'static str {
        match self {
            Event::KWordBall { .. } => "l1_kword",
            Event::ProfileBall { .. } => "l1_binned_profile",
        }
    }

    pub fn description(&self) -> String {
        match self {
            Event::KWordBall { center, radius } => {
                format!("order-{} block ball of radius {radius}", center.order)
            }
            Event::ProfileBall { profile, radius } => {
                format!("{}-bin profile ball of radius {radius}", profile.cells())
            }
        }
    }

    pub fn contains(&self, eta: &[usize], alphabet_size: usize) -> bool {
        match self {
            Event::KWordBall { center, radius } => {
                let word = Word::new(eta.to_vec(), alphabet_size).expect("valid symbols");
                let nu = empirical_k(&word, center.order).expect("valid order");
                nu.l1_distance(center) <= *radius + 1e-12
            }
            Event::ProfileBall { profile, radius } => {
                let bins = profile.cells();
                let n = eta.len();
                let mut mass = vec![0.0; bins];
                for (i0, &s) in eta.iter().enumerate() {
                    mass[bin_of(i0 + 1, n, bins)] += s as f64 / n as f64;
                }
                let dist: f64 = mass
                    .iter()
                    .zip(&profile.rho)
                    .map(|(m, r)| (m - r / bins as f64).abs())
                    .sum();
                dist <= *radius + 1e-12
            }
        }
    }
}

/// Law generating the words.
#[derive(Debug, Clone)]
pub enum LdSource {
    Rational(RationalModel),
    /// TASEP with the given rates; `n` in the params is ignored.
    Tasep { alpha: f64, beta: f64, rel_tol: f64 },
}

impl LdSource {
    fn alphabet_size(&self) -> usize {
        match self {
            LdSource::Rational(m) => m.alphabet_size(),
            LdSource::Tasep { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdOptions {
    pub max_exact: usize,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for LdOptions {
    fn default() -> Self {
        Self {
            max_exact: MAX_ENUMERATION,
            samples: 100_000,
            seed: 0,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdPoint {
    pub n: usize,
    pub probability: f64,
    /// `−(1/N) log P`; `None` when the event is empty at this `N`.
    pub minus_log_over_n: Option<f64>,
    pub method: Method,
    /// 95% Wilson interval for Monte Carlo points.
    pub interval: Option<(f64, f64)>,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LDEstimate {
    pub event: String,
    pub metric: String,
    pub radius: f64,
    pub points: Vec<LdPoint>,
}

impl LDEstimate {
    /// One JSON record per `N`.
    pub fn json_lines(&self) -> Vec<String> {
        self.points
            .iter()
            .map(|p| {
                serde_json::json!({
                    "event": self.event,
                    "metric": self.metric,
                    "radius": self.radius,
                    "n": p.n,
                    "probability": p.probability,
                    "minus_log_over_n": p.minus_log_over_n,
                    "method": p.method,
                    "interval": p.interval,
                    "empty": p.empty,
                })
                .to_string()
            })
            .collect()
    }

    /// The finite `−(1/N) log P` values in order of `N`.
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.minus_log_over_n).collect()
    }
}

/// 95% Wilson score interval for `hits` successes out of `trials`.
pub fn wilson_interval(hits: usize, trials: usize) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if hits == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// `−(1/N) log P(event)` for each `N`: exact when `|A|^N ≤ max_exact`,
/// otherwise Monte Carlo from the exact bridge sampler. Empty events are
/// recorded rather than treated as failures.
pub fn ld_curve(source: &LdSource, ns: &[usize], event: &Event, opts: &LdOptions) -> Result<LDEstimate> {
    let a = source.alphabet_size();
    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            return Err(Error::Invalid("N must be at least 1".into()));
        }
        let exact = (a as f64).powi(n as i32) <= opts.max_exact as f64;
        let point = if exact {
            let law = match source {
                LdSource::Rational(m) => enumerate_rational(m, n)?,
                LdSource::Tasep { alpha, beta, rel_tol } => {
                    enumerate_tasep(&build_tasep(TasepParams::new(*alpha, *beta, n)?, *rel_tol)?)?
                }
            };
            let prob: f64 = law
                .par_iter()
                .enumerate()
                .filter(|(idx, _)| event.contains(Word::from_index(*idx, n, a).symbols(), a))
                .map(|(_, p)| *p)
                .collect::<Vec<_>>()
                .iter()
                .sum();
            LdPoint {
                n,
                probability: prob,
                minus_log_over_n: (prob > 0.0).then(|| -prob.ln() / n as f64),
                method: Method::Exact,
                interval: None,
                empty: prob == 0.0,
            }
        } else {
            let hits = monte_carlo_hits(source, n, event, opts)?;
            let prob = hits as f64 / opts.samples as f64;
            LdPoint {
                n,
                probability: prob,
                minus_log_over_n: (hits > 0).then(|| -prob.ln() / n as f64),
                method: Method::MonteCarlo,
                interval: Some(wilson_interval(hits, opts.samples)),
                empty: hits == 0,
            }
        };
        points.push(point);
    }
    Ok(LDEstimate {
        event: event.description(),
        metric: event.metric().into(),
        radius: event.radius(),
        points,
    })
}

fn monte_carlo_hits(source: &LdSource, n: usize, event: &Event, opts: &LdOptions) -> Result<usize> {
    const UNIT: usize = 4096;
    let units = opts.samples.div_ceil(UNIT);
    let count_unit = |unit: usize, draw: &(dyn Fn(&mut ChaCha8Rng) -> Vec<usize> + Sync)| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(unit as u64);
        let todo = UNIT.min(opts.samples - unit * UNIT);
        (0..todo)
            .filter(|_| event.contains(&draw(&mut rng), source.alphabet_size()))
            .count()
    };
    let counts: Vec<usize> = match source {
        LdSource::Rational(m) => {
            let chain = build_enlarged(m, opts.tol)?;
            let law = chain.bridge_law(n)?;
            let sampler = BridgeSampler::new(&law);
            let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
                let xi = sampler.sample(rng);
                xi[..n].iter().map(|s| chain.split(*s).0).collect()
            };
            (0..units).into_par_iter().map(|u| count_unit(u, &draw)).collect()
        }
        LdSource::Tasep { alpha, beta, rel_tol } => {
            let model = build_tasep(TasepParams::new(*alpha, *beta, n)?, *rel_tol)?;
            let bridge = TasepBridge::new(&model)?;
            let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
                let mut t = bridge.sample(rng);
                t.eta.truncate(n);
                t.eta
            };
            (0..units).into_par_iter().map(|u| count_unit(u, &draw)).collect()
        }
    };
    Ok(counts.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `|log k_N| / N`.
    pub log_lower_over_n: f64,
    /// `|log K_N| / N`.
    pub log_upper_over_n: f64,
}

/// Checks `k·B ≤ A ≤ K·B` pointwise (relative slack `1e-12`).
pub fn sandwich_check(law_a: &[f64], law_b: &[f64], lower: f64, upper: f64, n: usize) -> Result<SandwichReport> {
    if law_a.len() != law_b.len() {
        return Err(Error::Invalid("laws live on different sets".into()));
    }
    if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
        return Err(Error::Invalid(format!("need 0 < k ≤ K < ∞, got [{lower}, {upper}]")));
    }
    const SLACK: f64 = 1e-12;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    for (i, (a, b)) in law_a.iter().zip(law_b).enumerate() {
        let lo_ok = a + SLACK * a.max(*b) >= lower * b;
        let hi_ok = *a <= upper * b + SLACK * a.max(*b);
        let ratio = if *b > 0.0 { a / b } else if *a > 0.0 { f64::INFINITY } else { 1.0 };
        if !(lo_ok && hi_ok) {
            return Err(Error::BoundViolation {
                witness: i,
                ratio,
                lower,
                upper,
            });
        }
        if *b > 0.0 {
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
        }
    }
    Ok(SandwichReport {
        n,
        lower,
        upper,
        min_ratio,
        max_ratio,
        log_lower_over_n: lower.ln().abs() / n as f64,
        log_upper_over_n: upper.ln().abs() / n as f64,
    })
}

/// Piecewise-constant tilt pair with its starting height.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidScenario {
    pub name: String,
    pub gamma_i: Vec<StepLaw>,
    pub gamma_b: Vec<StepLaw>,
    pub z0: f64,
}

fn law(entries: &[((usize, i64), f64)]) -> StepLaw {
    let mut probs = [0.0; 6];
    for ((a, s), p) in entries {
        probs[step_index(*a, *s)] = *p;
    }
    StepLaw::new(probs).expect("built-in law")
}

impl FluidScenario {
    /// Two bins of zero bulk drift started away from the boundary.
    pub fn zero_drift() -> Self {
        Self {
            name: "zero-drift".into(),
            gamma_i: vec![
                StepLaw::mu_i(),
                law(&[((0, 0), 0.4), ((0, -1), 0.1), ((1, 0), 0.4), ((1, 1), 0.1)]),
            ],
            gamma_b: vec![StepLaw::mu_b(), StepLaw::mu_b()],
            z0: 0.2,
        }
    }

    /// Drift −0.3 on the first half (the path hits 0 at `x = 1/3` and sticks
    /// with `m = 0.3/0.55`), then drift +0.2.
    pub fn sticky() -> Self {
        Self {
            name: "sticky".into(),
            gamma_i: vec![
                law(&[((0, 0), 0.25), ((0, -1), 0.45), ((1, 0), 0.15), ((1, 1), 0.15)]),
                law(&[((0, 0), 0.3), ((0, -1), 0.1), ((1, 0), 0.3), ((1, 1), 0.3)]),
            ],
            gamma_b: vec![StepLaw::mu_b(), StepLaw::mu_b()],
            z0: 0.1,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "zero-drift" => Ok(Self::zero_drift()),
            "sticky" => Ok(Self::sticky()),
            other => Err(Error::Invalid(format!(
                "unknown scenario {other:?} (expected zero-drift or sticky)"
            ))),
        }
    }
}

/// `sup_i |ẑ_N(i/N) − z(i/N)|` for `runs` tilted samples (run `r` uses seed
/// `seed + r`), against the fluid ODE on `grid` steps.
pub fn fluid_sup_distances(
    scenario: &FluidScenario,
    n: usize,
    runs: usize,
    grid: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let ode = fluid_limit_ode(&scenario.gamma_i, &scenario.gamma_b, scenario.z0, grid)?;
    let start = (scenario.z0 * n as f64).round() as usize;
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let s = sample_tilted(
                &scenario.gamma_i,
                &scenario.gamma_b,
                n,
                start,
                seed.wrapping_add(r as u64),
            )?;
            let t = triple_empirical(&s.trajectory, 1)?;
            Ok(t.z_grid
                .iter()
                .enumerate()
                .map(|(i, z)| (z - ode.z_at(i as f64 / n as f64)).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}
