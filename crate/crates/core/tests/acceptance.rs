//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Oracles live here and are independent of the code under test
//! wherever possible (dense eigensolves, direct enumeration, brute force).

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use mpa_ld::empirical::KWordMeasure;
use mpa_ld::perron::{
    check_primitive, perron_tridiagonal_infinite, return_weight_even, NonNegativeMatrix,
    StochasticMatrix, TridiagonalSpec,
};
use mpa_ld::rate_finite::{
    pair_rate_dual, pair_rate_primal, rate_parallel_case, rate_stochastic_case,
    typical_pair_measure, PairMeasure, RateOptions,
};
use mpa_ld::rate_tasep::{
    profile_objective, rate_frak_s, rate_pair_contracted, rate_profile, rate_profile_with,
    rate_z_rho, MacroTriple, Profile, ProfileOptions, ProfileSolver,
};
use mpa_ld::rational::{build_enlarged, bridge_probability, BridgeLaw, BridgeSampler, RationalModel};
use mpa_ld::tasep::{
    build_tasep, effective_s_entry, frak_s_entry, generator_stationary, h, rho_bar, step_index,
    tasep_distribution, StepLaw, TasepBridge, TasepParams,
};
use mpa_ld::verify::{fluid_sup_distances, ld_curve, Event, FluidScenario, LdOptions, LdSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = (bool, String);

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("MPA equals generator stationary law", c01_mpa),
        ("Perron identities of the enlarged chain", c02_perron_identities),
        ("Infinite tridiagonal Perron value and return weights", c03_tridiagonal),
        ("Enlarged versus effective walk identities", c04_walk_identities),
        ("Finite-case pair rate functional", c05_pair_rate),
        ("Finite-N large-deviation trend (finite case)", c06_ld_trend),
        ("TASEP profile functional vanishes at the typical profile", c07_profile_zero),
        ("Profile functional against brute-force grid search", c08_profile_bruteforce),
        ("Fluid limit against tilted Monte Carlo", c09_fluid),
        ("Bridge sampler exactness", c10_bridge_sampler),
        ("Contraction-chain monotonicity", c11_contraction_chain),
        ("CLI determinism", c12_determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(check) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} [{:>2}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

fn params(alpha: f64, beta: f64, n: usize) -> TasepParams {
    TasepParams::new(alpha, beta, n).unwrap()
}

// ------------------------------------------------------------------ 1 ----

fn c01_mpa() -> Outcome {
    let mut worst: f64 = 0.0;
    for (alpha, beta) in [(0.75, 0.75), (0.9, 0.4), (0.4, 0.9)] {
        for n in 2..=8 {
            let q = params(alpha, beta, n);
            let mpa = tasep_distribution(&build_tasep(q, 1e-14).unwrap());
            let gen = generator_stationary(&q).unwrap();
            for (a, b) in mpa.iter().zip(&gen) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    (worst < 1e-9, format!("max |deviation| = {worst:.3e} (< 1e-9)"))
}

// ------------------------------------------------------------------ 2 ----

fn random_primitive_model(rng: &mut ChaCha8Rng) -> RationalModel {
    loop {
        let dim = rng.gen_range(1..=4);
        let mats: Vec<NonNegativeMatrix> = (0..2)
            .map(|_| {
                let entries = (0..dim * dim)
                    .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.05..1.0) })
                    .collect();
                NonNegativeMatrix::new(dim, entries).unwrap()
            })
            .collect();
        let x = (0..dim).map(|_| rng.gen_range(0.1..1.0)).collect();
        let y = (0..dim).map(|_| rng.gen_range(0.1..1.0)).collect();
        let Ok(model) = RationalModel::new(mats, x, y) else {
            continue;
        };
        if model.require_finite_case().is_ok()
            && check_primitive(&model.enlarged_matrix()).is_primitive()
        {
            return model;
        }
    }
}

fn dense_spectral_radius(m: &NonNegativeMatrix) -> f64 {
    let n = m.dim();
    let d = nalgebra::DMatrix::from_fn(n, n, |i, j| m.get(i, j));
    d.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn c02_perron_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lambda_err: f64 = 0.0;
    let mut eps_err: f64 = 0.0;
    for _ in 0..50 {
        let model = random_primitive_model(&mut rng);
        let chain = build_enlarged(&model, 1e-14).unwrap();
        let big = dense_spectral_radius(&model.enlarged_matrix());
        let small = dense_spectral_radius(model.total_matrix());
        lambda_err = lambda_err.max((chain.lambda - big).abs() / big).max((small - big).abs() / big);
        for b in 0..model.dim() {
            let s: f64 = (0..2).map(|a| chain.eps(a, b)).sum();
            eps_err = eps_err.max((s - chain.e[b]).abs() / chain.e[b]);
        }
    }
    let tasep = build_tasep(params(0.75, 0.6, 4), 1e-12).unwrap();
    let chain = tasep.enlarged_chain().unwrap();
    let exact = (0..2).all(|a| {
        (0..tasep.b_max).all(|b| chain.eps(a, b) == (2 * a + 2 * b + 1) as f64 / 4.0)
    });
    (
        lambda_err < 1e-10 && eps_err < 1e-10 && exact,
        format!(
            "relative |λ − Λ| ≤ {lambda_err:.2e}, |Σ_a ε − e| ≤ {eps_err:.2e} on 50 models; TASEP ε exact: {exact}"
        ),
    )
}

// ------------------------------------------------------------------ 3 ----

fn c03_tridiagonal() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for (d, u, l) in [(2.0, 1.0, 1.0), (1.0, 2.0, 0.5), (0.5, 3.0, 1.5)] {
        let spec = TridiagonalSpec::new(d, u, l).unwrap();
        let closed = perron_tridiagonal_infinite(&spec).value;
        let dense = dense_spectral_radius(&spec.truncated(100));
        worst = worst.max((closed - dense).abs());
        details.push(format!("{closed:.4}/{dense:.4}"));
    }
    // exact integer powers of the truncated (2,1,1) matrix
    let spec = TridiagonalSpec::new(2.0, 1.0, 1.0).unwrap();
    let dim = 16;
    let t = spec.truncated(dim);
    let mut power = NonNegativeMatrix::identity(dim);
    let mut returns_exact = true;
    for n in 1..=10u64 {
        power = power.matmul(&t).matmul(&t);
        returns_exact &= power.get(0, 0) == return_weight_even(n, &spec);
    }
    (
        worst < 1e-2 && returns_exact,
        format!(
            "closed/dense = {}; max gap {worst:.2e} (< 1e-2); return weights exact for n ≤ 10: {returns_exact}",
            details.join(", ")
        ),
    )
}

// ------------------------------------------------------------------ 4 ----

fn c04_walk_identities() -> Outcome {
    const N: usize = 5;
    const BMAX: usize = 8;
    let q = params(0.75, 0.75, N);
    let (a, bt) = (q.a(), q.b());
    let f = |s: (usize, usize)| a.powi(s.1 as i32) * h(s.0, s.1) / 4.0;
    let g = |s: (usize, usize)| 4.0 * bt.powi(s.1 as i32) / h(s.0, s.1);
    let m = |a: usize, b: usize, b2: usize| -> bool {
        if a == 0 {
            b2 == b || b2 + 1 == b
        } else {
            b2 == b || b2 == b + 1
        }
    };
    let states: Vec<(usize, usize)> = (0..2).flat_map(|a| (0..=BMAX).map(move |b| (a, b))).collect();

    // entrywise relation between the two kernels
    let mut entry_dev: f64 = 0.0;
    for &s in &states {
        for &t in &states {
            let boost = if s == (0, 0) { 2.0 } else { 1.0 };
            let lhs = effective_s_entry(s, t);
            let rhs = frak_s_entry(s, t) * h(s.0, s.1) / h(t.0, t.1) * boost;
            let direct = if m(s.0, s.1, t.1) { 0.25 * boost } else { 0.0 };
            entry_dev = entry_dev.max((lhs - rhs).abs()).max((lhs - direct).abs());
        }
    }

    // every admissible path of N+1 states within b ≤ 8
    let mut paths: Vec<Vec<(usize, usize)>> = states.iter().map(|s| vec![*s]).collect();
    for _ in 0..N {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                let last = *p.last().unwrap();
                states
                    .iter()
                    .filter(move |t| m(last.0, last.1, t.1))
                    .map(move |t| {
                        let mut q = p.clone();
                        q.push(*t);
                        q
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    let mut w_frak = Vec::with_capacity(paths.len());
    let mut w_eff = Vec::with_capacity(paths.len());
    let mut counts = Vec::with_capacity(paths.len());
    for p in &paths {
        let first = p[0];
        let last = p[N];
        let mut wf = f(first) * g(last);
        let mut we = f(first) / h(first.0, first.1) * g(last) * h(last.0, last.1);
        for w in p.windows(2) {
            wf *= frak_s_entry(w[0], w[1]);
            we *= effective_s_entry(w[0], w[1]);
        }
        w_frak.push(wf);
        w_eff.push(we);
        counts.push(p[..N].iter().filter(|s| **s == (0, 0)).count() as i32);
    }
    let z_frak: f64 = w_frak.iter().sum();
    let z_eff: f64 = w_eff.iter().sum();
    let mut path_dev: f64 = 0.0;
    for i in 0..paths.len() {
        let lhs = w_frak[i] / z_frak;
        let rhs = w_eff[i] / z_eff * 2f64.powi(-counts[i]) * z_eff / z_frak;
        path_dev = path_dev.max((lhs - rhs).abs());
    }

    // generic enlarged construction on the truncation agrees on exact rows
    let tasep = build_tasep(params(0.75, 0.75, N), 1e-12).unwrap();
    let chain = tasep.enlarged_chain().unwrap();
    let nb = tasep.dim();
    let mut generic_dev: f64 = 0.0;
    // ε at b_max is itself truncated, so rows reaching b_max are excluded
    for a1 in 0..2 {
        for b1 in 0..tasep.b_max - 1 {
            for a2 in 0..2 {
                for b2 in 0..nb {
                    let got = chain.s_frak.get(a1 * nb + b1, a2 * nb + b2);
                    generic_dev = generic_dev.max((got - frak_s_entry((a1, b1), (a2, b2))).abs());
                }
            }
        }
    }
    let worst = entry_dev.max(path_dev).max(generic_dev);
    (
        worst < 1e-12,
        format!(
            "{} paths; path identity {path_dev:.2e}, kernel relation {entry_dev:.2e}, generic kernel {generic_dev:.2e} (< 1e-12)",
            paths.len()
        ),
    )
}

// ------------------------------------------------------------------ 5 ----

fn random_stationary_pair(rng: &mut ChaCha8Rng, n: usize) -> PairMeasure {
    // π(i) P(i,j) for a random positive kernel P
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = row.iter().sum();
        for j in 0..n {
            p[i * n + j] = row[j] / s;
        }
    }
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let next: Vec<f64> = (0..n).map(|j| (0..n).map(|i| pi[i] * p[i * n + j]).sum()).collect();
        pi = next;
    }
    let mut w: Vec<f64> = (0..n * n).map(|k| pi[k / n] * p[k]).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    PairMeasure::new(n, w).unwrap()
}

fn random_stochastic(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim * dim);
    for _ in 0..dim {
        let row: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = row.iter().sum();
        out.extend(row.iter().map(|v| v / s));
    }
    out
}

fn c05_pair_rate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = RateOptions::default();
    let mut pd: f64 = 0.0;
    let mut typical: f64 = 0.0;
    for _ in 0..20 {
        let dim = rng.gen_range(1..=3);
        let mats = (0..2)
            .map(|_| {
                NonNegativeMatrix::new(dim, (0..dim * dim).map(|_| rng.gen_range(0.05..1.0)).collect())
                    .unwrap()
            })
            .collect();
        let model = RationalModel::new(
            mats,
            (0..dim).map(|_| rng.gen_range(0.1..1.0)).collect(),
            (0..dim).map(|_| rng.gen_range(0.1..1.0)).collect(),
        )
        .unwrap();
        let nu = random_stationary_pair(&mut rng, 2);
        let d = pair_rate_dual(&model, &nu, opts).unwrap().value;
        let p = pair_rate_primal(&model, &nu, opts).unwrap().value;
        pd = pd.max((d - p).abs());
        let t = typical_pair_measure(&model).unwrap();
        typical = typical.max(pair_rate_dual(&model, &t, opts).unwrap().value.abs());
    }
    // parallel models m(a)·S^(a) (scalar when |B| = 1) and stochastic models
    let mut closed: f64 = 0.0;
    for _ in 0..10 {
        let dim = rng.gen_range(1..=3);
        let m: Vec<f64> = (0..2).map(|_| rng.gen_range(0.2..3.0)).collect();
        let mats: Vec<NonNegativeMatrix> = m
            .iter()
            .map(|w| {
                let s = random_stochastic(&mut rng, dim);
                NonNegativeMatrix::new(dim, s.iter().map(|v| v * w).collect()).unwrap()
            })
            .collect();
        let model = RationalModel::new(mats, vec![1.0; dim], vec![1.0; dim]).unwrap();
        let nu = random_stationary_pair(&mut rng, 2);
        let d = pair_rate_dual(&model, &nu, opts).unwrap().value;
        closed = closed.max((d - rate_parallel_case(&m, &nu).unwrap()).abs());

        let half: Vec<NonNegativeMatrix> = (0..2)
            .map(|_| {
                let s = random_stochastic(&mut rng, dim);
                NonNegativeMatrix::new(dim, s.iter().map(|v| v * 0.5).collect()).unwrap()
            })
            .collect();
        let stoch = RationalModel::new(half, vec![1.0; dim], vec![1.0; dim]).unwrap();
        let d = pair_rate_dual(&stoch, &nu, opts).unwrap().value;
        let kw = KWordMeasure::new(2, 2, nu.weights.clone()).unwrap();
        closed = closed.max((d - rate_stochastic_case(&kw, 2).unwrap()).abs());
    }
    (
        pd < 1e-4 && closed < 1e-8 && typical < 1e-6,
        format!(
            "primal/dual gap {pd:.2e} (< 1e-4); closed forms {closed:.2e} (< 1e-8); typical value {typical:.2e} (< 1e-6)"
        ),
    )
}

// ------------------------------------------------------------------ 6 ----

fn c06_ld_trend() -> Outcome {
    let model = RationalModel::scalar(&[1.0, 1.0]).unwrap();
    let center = KWordMeasure::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let event = Event::KWordBall { center, radius: 0.1 };
    let ns: Vec<usize> = (8..=16).collect();
    let est = ld_curve(&LdSource::Rational(model), &ns, &event, &LdOptions::default()).unwrap();
    let v = est.values();
    if v.len() != ns.len() {
        return (false, "event empty at some N".into());
    }
    let ln2 = 2f64.ln();
    let rel = (v[v.len() - 1] - ln2).abs() / ln2;
    let non_increasing = v.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let strictly = v.windows(2).all(|w| w[1] < w[0]);
    (
        rel <= 0.15 && non_increasing,
        format!(
            "value at N=16 {:.6} (log 2 = {ln2:.6}, rel. err {rel:.2e} ≤ 0.15); non-increasing over N=8..16: {non_increasing} (strict: {strictly}; the ball contains only the all-zero word for N < 20)",
            v[v.len() - 1]
        ),
    )
}

// ------------------------------------------------------------------ 7 ----

fn c07_profile_zero() -> Outcome {
    let mut values = Vec::new();
    for (alpha, beta) in [(0.75, 0.75), (0.9, 0.4), (0.4, 0.9)] {
        let q = params(alpha, beta, 1);
        let rho = Profile::constant(rho_bar(&q), 1000).unwrap();
        values.push(rate_profile(&rho, &q).unwrap().value);
    }
    let ok = values.iter().all(|v| (-1e-3..=2e-3).contains(v));
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    (ok, format!("values [{}] in [−1e-3, 2e-3]", shown.join(", ")))
}

// ------------------------------------------------------------------ 8 ----

fn grid_search(rho: &Profile, q: &TasepParams, center: [f64; 3], half: f64, step: f64) -> (f64, [f64; 3]) {
    let k = (half / step).round() as i64;
    let mut best = (f64::INFINITY, center);
    for i in -k..=k {
        for j in -k..=k {
            for l in -k..=k {
                let g = [
                    center[0] + i as f64 * step,
                    center[1] + j as f64 * step,
                    center[2] + l as f64 * step,
                ];
                if g.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    continue;
                }
                let v = profile_objective(rho, &g, q);
                if v < best.0 {
                    best = (v, g);
                }
            }
        }
    }
    best
}

fn c08_profile_bruteforce() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut coarse_dev: f64 = 0.0;
    let mut refined_dev: f64 = 0.0;
    let mut exact_dev: f64 = 0.0;
    let mut never_worse = true;
    for _ in 0..10 {
        let q = loop {
            let (a, b) = (rng.gen_range(0.1..0.95), rng.gen_range(0.1..0.95));
            if let Ok(q) = TasepParams::new(a, b, 1) {
                break q;
            }
        };
        let rho = Profile::new((0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let sub = rate_profile_with(
            &rho,
            &q,
            &ProfileOptions {
                solver: ProfileSolver::Subgradient,
                ..Default::default()
            },
        )
        .unwrap()
        .value;
        let exact = rate_profile(&rho, &q).unwrap().value;
        let (coarse, at) = grid_search(&rho, &q, [0.5; 3], 0.5, 0.05);
        let (mid, at) = grid_search(&rho, &q, at, 0.05, 0.005);
        let (fine, _) = grid_search(&rho, &q, at, 0.005, 0.0005);
        coarse_dev = coarse_dev.max((sub - coarse).abs());
        never_worse &= sub <= coarse + 1e-9;
        refined_dev = refined_dev.max((sub - fine.min(mid)).abs());
        exact_dev = exact_dev.max((exact - fine.min(mid)).abs());
    }
    // The step-0.05 grid alone sits up to a few 1e-3 above the continuous
    // minimum (its own discretization error), so the pass condition uses the
    // exhaustive 0.05 grid refined twice around its best point; the raw
    // coarse-grid figure is reported alongside, and the optimizer must never
    // be worse than the coarse grid.
    (
        refined_dev < 1e-3 && exact_dev < 1e-3 && never_worse,
        format!(
            "|subgradient − refined grid| ≤ {refined_dev:.2e}, |exact − refined grid| ≤ {exact_dev:.2e} (< 1e-3); subgradient ≤ grid(0.05) on all: {never_worse} (max coarse gap {coarse_dev:.2e})"
        ),
    )
}

// ------------------------------------------------------------------ 9 ----

fn c09_fluid() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for sc in [FluidScenario::zero_drift(), FluidScenario::sticky()] {
        let d = fluid_sup_distances(&sc, 10_000, 200, 1000, 9).unwrap();
        let frac = d.iter().filter(|v| **v < 0.02).count() as f64 / d.len() as f64;
        ok &= frac >= 0.95;
        parts.push(format!("{}: {:.1}% of 200 runs below 0.02", sc.name, 100.0 * frac));
    }
    (ok, parts.join("; "))
}

// ----------------------------------------------------------------- 10 ----

/// Counts of `key(sample)` over `samples` draws, split into seeded units.
fn tally<F>(cells: usize, samples: usize, seed: u64, draw: F) -> Vec<u64>
where
    F: Fn(&mut ChaCha8Rng) -> usize + Sync,
{
    const UNIT: usize = 50_000;
    let units = samples.div_ceil(UNIT);
    let per: Vec<Vec<u64>> = (0..units)
        .into_par_iter()
        .map(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u as u64);
            let mut c = vec![0u64; cells];
            for _ in 0..UNIT.min(samples - u * UNIT) {
                c[draw(&mut rng)] += 1;
            }
            c
        })
        .collect();
    let mut total = vec![0u64; cells];
    for c in per {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    total
}

fn max_z_score(counts: &[u64], probs: &[f64], samples: usize) -> f64 {
    let n = samples as f64;
    counts
        .iter()
        .zip(probs)
        .map(|(c, p)| {
            let sd = (n * p * (1.0 - p)).sqrt();
            let diff = (*c as f64 - n * p).abs();
            if sd > 0.0 {
                diff / sd
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn c10_bridge_sampler() -> Outcome {
    const SAMPLES: usize = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let kernel = StochasticMatrix::new(NonNegativeMatrix::new(3, random_stochastic(&mut rng, 3)).unwrap())
        .unwrap();
    let f: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..2.0)).collect();
    let g: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..2.0)).collect();
    let law = BridgeLaw::new(kernel, f, g, 5).unwrap();
    let cells = 3usize.pow(6);
    let index = |xi: &[usize]| xi.iter().fold(0, |acc, s| acc * 3 + s);
    let probs: Vec<f64> = (0..cells)
        .map(|i| {
            let xi: Vec<usize> = (0..6).rev().map(|k| (i / 3usize.pow(k)) % 3).collect();
            bridge_probability(&law, &xi).unwrap()
        })
        .collect();
    let sampler = BridgeSampler::new(&law);
    let counts = tally(cells, SAMPLES, 100, |r| index(&sampler.sample(r)));
    let z3 = max_z_score(&counts, &probs, SAMPLES);

    let model = build_tasep(params(0.75, 0.6, 6), 1e-13).unwrap();
    let exact = tasep_distribution(&model);
    let bridge = TasepBridge::new(&model).unwrap();
    let counts = tally(64, SAMPLES, 101, |r| {
        let t = bridge.sample(r);
        t.eta[..6].iter().fold(0, |acc, s| acc * 2 + s)
    });
    let zt = max_z_score(&counts, &exact, SAMPLES);
    (
        z3 < 4.0 && zt < 4.0,
        format!("max |z| = {z3:.2} on 729 three-state paths, {zt:.2} on 64 TASEP words (< 4)"),
    )
}

// ----------------------------------------------------------------- 11 ----

fn random_bulk_law(rng: &mut ChaCha8Rng, zero_drift: bool) -> StepLaw {
    let mut probs = [0.0; 6];
    if zero_drift {
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s = w[0] + w[1] + 2.0 * w[2];
        probs[step_index(0, 0)] = w[0] / s;
        probs[step_index(1, 0)] = w[1] / s;
        probs[step_index(1, 1)] = w[2] / s;
        probs[step_index(0, -1)] = w[2] / s;
    } else {
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        for (k, (a, st)) in [(0, 0), (0, -1), (1, 0), (1, 1)].iter().enumerate() {
            probs[step_index(*a, *st)] = w[k] / s;
        }
    }
    StepLaw::new(normalize(probs)).unwrap()
}

fn normalize(mut probs: [f64; 6]) -> [f64; 6] {
    let s: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= s);
    let s: f64 = probs.iter().sum();
    // put the last rounding residue on the largest entry
    let k = (0..6).max_by(|a, b| probs[*a].total_cmp(&probs[*b])).unwrap();
    probs[k] += 1.0 - s;
    probs
}

fn swap_drift(law: &StepLaw) -> StepLaw {
    let mut p = law.probs;
    p.swap(step_index(1, 1), step_index(0, -1));
    StepLaw::new(p).unwrap()
}

fn c11_contraction_chain() -> Outcome {
    const L: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = [f64::NEG_INFINITY; 3];
    let mut nontrivial_splits = 0;
    for _ in 0..100 {
        let q = loop {
            let (a, b) = (rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
            if let Ok(q) = TasepParams::new(a, b, 1) {
                break q;
            }
        };
        let mut z = vec![if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.3) }];
        let mut pi = Vec::with_capacity(L);
        let mut triple = MacroTriple::typical(L, 0.0);
        for j in 0..L {
            let boundary = z[j] == 0.0 && rng.gen_bool(0.6);
            let mut law = random_bulk_law(&mut rng, boundary);
            let mut next = z[j] + law.drift() / L as f64;
            if boundary {
                next = 0.0;
            } else if next < 0.0 {
                law = swap_drift(&law);
                next = z[j] + law.drift() / L as f64;
            }
            triple.nu_i[j] = law;
            if boundary {
                // Π = m ν^B + (1−m) ν^I with ν^B on the boundary support
                let w: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                let mut nb = [0.0; 6];
                for (k, (a, st)) in [(0, 0), (1, 0), (1, 1)].iter().enumerate() {
                    nb[step_index(*a, *st)] = w[k] / s;
                }
                let cap = (0..6)
                    .filter(|k| nb[*k] > 0.0)
                    .map(|k| law.probs[k] / nb[k])
                    .fold(1.0, f64::min);
                let m = cap * rng.gen_range(0.05..0.95);
                let ni: Vec<f64> = (0..6).map(|k| ((law.probs[k] - m * nb[k]) / (1.0 - m)).max(0.0)).collect();
                let mut ni_arr = [0.0; 6];
                ni_arr.copy_from_slice(&ni);
                let nu_b = StepLaw::new(normalize(nb)).unwrap();
                let nu_i = StepLaw::new(normalize(ni_arr)).unwrap();
                // re-derive Π from the split so the decomposition is exact
                let mut mix = [0.0; 6];
                for k in 0..6 {
                    mix[k] = m * nu_b.probs[k] + (1.0 - m) * nu_i.probs[k];
                }
                let mixed = StepLaw::new(normalize(mix)).unwrap();
                triple.m[j] = m;
                triple.nu_b[j] = nu_b;
                triple.nu_i[j] = nu_i;
                next = z[j] + mean(&mixed) / L as f64;
                law = mixed;
                nontrivial_splits += 1;
            }
            pi.push(law);
            z.push(next.max(0.0));
        }
        triple.z = z.clone();
        // boundary cells: drift exactly zero only up to rounding
        if triple.violation().is_some() {
            return (false, format!("generated triple invalid: {:?}", triple.violation()));
        }
        let frak = rate_frak_s(&triple, &q);
        let contracted = rate_pair_contracted(&z, &pi, &q);
        let rho = Profile::new(pi.iter().map(|p| p.get(1, 1) + p.get(1, 0)).collect()).unwrap();
        let zr = rate_z_rho(&z, &rho, &q);
        let prof = rate_profile(&rho, &q).unwrap().value;
        if !(frak.is_finite() && contracted.is_finite() && zr.is_finite()) {
            return (false, format!("non-finite value: {frak} {contracted} {zr}"));
        }
        worst[0] = worst[0].max(contracted - frak);
        worst[1] = worst[1].max(zr - contracted);
        worst[2] = worst[2].max(prof - zr);
    }
    let ok = worst.iter().all(|w| *w <= 1e-8);
    (
        ok,
        format!(
            "max violations: contracted − split {:.2e}, z-ρ − contracted {:.2e}, profile − z-ρ {:.2e} (≤ 1e-8); {nontrivial_splits} boundary splits",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn mean(law: &StepLaw) -> f64 {
    (0..2).map(|a| law.get(a, 1) - law.get(a, -1)).sum()
}

// ----------------------------------------------------------------- 12 ----

fn c12_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("mpa-ld-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = |name: &str, body: &str| -> String {
        let p: PathBuf = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p.to_string_lossy().into_owned()
    };
    let profile = {
        let mut s = String::from("x,rho\n");
        for j in 1..=1000 {
            s.push_str(&format!("{},0.5\n", j as f64 / 1000.0));
        }
        file("profile.csv", &s)
    };
    let scalar = file(
        "scalar.json",
        r#"{"type":"explicit","alphabet_size":2,"matrices":[[[1]],[[1]]],"x":[1],"y":[1]}"#,
    );
    let explicit = file(
        "model.json",
        r#"{"type":"explicit","alphabet_size":2,"matrices":[[[0.5,0.2],[0.1,0.3]],[[0.2,0.4],[0.6,0.1]]],"x":[1,0.5],"y":[0.3,1]}"#,
    );
    let nu = file("nu.csv", "pair,mass\n00,0.3\n01,0.2\n10,0.2\n11,0.3\n");
    let commands: Vec<Vec<String>> = vec![
        "stationary-check --alpha 0.75 --beta 0.75 --n 5".into(),
        "measure --tasep --alpha 1 --beta 1 --n 1 --enumerate".into(),
        format!("rate-profile --tasep --alpha 0.75 --beta 0.75 --profile {profile}"),
        "sample-bridge --tasep --alpha 0.75 --beta 0.6 --n 8 --samples 200 --seed 11".into(),
        format!("sample-bridge --model {explicit} --n 6 --samples 100 --seed 5"),
        format!("perron --model {explicit} --enlarged"),
        format!("rate-pair --model {explicit} --nu {nu}"),
        "empirical --word 0110101 --k 2".into(),
        "fluid-check --scenario sticky --n 2000 --runs 16 --seed 3".into(),
        format!("verify-ldp --model {scalar} --ns 8,10,12 --k 2 --center 1,0,0,0 --radius 0.1"),
        format!("verify-ldp --model {scalar} --ns 21 --k 1 --center 0.5,0.5 --radius 0.05 --samples 20000 --seed 4"),
    ]
    .into_iter()
    .map(|c: String| c.split_whitespace().map(String::from).collect())
    .collect();
    let bin = env!("CARGO_BIN_EXE_mpa-ld");
    let mut bad = Vec::new();
    let mut expectations = Vec::new();
    for args in &commands {
        let run = || Command::new(bin).args(args).output().expect("binary runs");
        let (a, b) = (run(), run());
        if a.stdout != b.stdout || a.status.code() != b.status.code() || a.stdout.is_empty() {
            bad.push(args[0].clone());
        }
        if a.status.code() != Some(0) {
            bad.push(format!("{} exited {:?}", args[0], a.status.code()));
        }
        let text = String::from_utf8_lossy(&a.stdout).into_owned();
        expectations.push(text);
    }
    // spot-check the documented outputs
    let n1 = &expectations[1];
    if n1 != "word,probability\n0,5.000000000000000e-1\n1,5.000000000000000e-1\n" {
        bad.push("measure N=1 table".into());
    }
    let prof: serde_json::Value = serde_json::from_str(expectations[2].trim()).unwrap();
    if prof["value"].as_f64().map(f64::abs).unwrap_or(1.0) >= 1e-3 {
        bad.push("rate-profile value".into());
    }
    let _ = std::fs::remove_dir_all(&dir);
    (
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} commands byte-identical across two runs", commands.len())
        } else {
            format!("mismatch: {}", bad.join(", "))
        },
    )
}
