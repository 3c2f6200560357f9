//! Command-line front end.
//!
//! Output conventions: tables are CSV with a header line and floats in
//! `{:.15e}` form; reports are JSON lines with fields `command`, `params`,
//! `value` and `diagnostics`. Nothing depends on locale or scheduling, so
//! identical arguments give byte-identical output.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure.
//! Failures also write one JSON record `{"error", "kind", "message"}` to
//! standard error.
//!
//! Model files are JSON:
//!
//! ```text
//! {"type": "explicit", "alphabet_size": 2,
//!  "matrices": [[[1, 0], [0, 1]], [[0, 1], [1, 0]]], "x": [1, 1], "y": [1, 1]}
//! {"type": "tasep", "alpha": 0.75, "beta": 0.75}
//! ```

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::empirical::{empirical_k, generalized_spatial, spatial_empirical, KWordMeasure};
use crate::error::Error;
use crate::perron::{dominant_class, perron_tridiagonal_infinite, NonNegativeMatrix, TridiagonalSpec};
use crate::rate_finite::{pair_rate_dual, pair_rate_primal, PairMeasure, RateOptions};
use crate::rate_tasep::{rate_profile_with, Profile, ProfileOptions, ProfileSolver};
use crate::rational::{build_enlarged, measure_probability, BridgeSampler, RationalModel, Word};
use crate::tasep::{
    build_tasep_with, generator_stationary, tasep_probability, TasepBridge, TasepParams,
    TruncatedTasepModel,
};
use crate::verify::{
    enumerate_rational, enumerate_tasep, fluid_sup_distances, ld_curve, Event, FluidScenario,
    LdOptions, LdSource,
};

const MAX_ITER: usize = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "mpa-ld", version, about = "Matrix-product measures, bridges and large deviations")]
struct Cli {
    /// RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of spatial bins.
    #[arg(long, global = true, default_value_t = 100)]
    bins: usize,
    /// ODE / profile grid size.
    #[arg(long, global = true, default_value_t = 1000)]
    grid: usize,
    /// Numerical tolerance.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// TASEP truncation level (chosen automatically when absent).
    #[arg(long, global = true)]
    bmax: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// JSON model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Use the TASEP with --alpha and --beta.
    #[arg(long)]
    tasep: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Subgradient,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Perron data of M (and the enlarged chain with --enlarged).
    Perron {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        enlarged: bool,
    },
    /// Probability of a word, or the full law with --enumerate.
    Measure {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        word: Option<String>,
        #[arg(long)]
        enumerate: bool,
    },
    /// Exact bridge samples of the enlarged chain.
    SampleBridge {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Print mean symbol frequencies instead of trajectories.
        #[arg(long)]
        summary: bool,
    },
    /// Empirical measures of words from a file (header `word`) or --word.
    Empirical {
        #[arg(long)]
        words: Option<PathBuf>,
        #[arg(long)]
        word: Option<String>,
        #[arg(long, default_value_t = 2)]
        alphabet: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Binned spatial measure of the occupation variables.
        #[arg(long)]
        spatial: bool,
        /// Binned spatial measure of k-blocks.
        #[arg(long)]
        generalized: bool,
    },
    /// Pair rate functional (primal and dual) of a pair-measure file
    /// (header `pair,mass`).
    RatePair {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        nu: PathBuf,
    },
    /// TASEP profile functional of a profile file (header `x,rho`).
    RateProfile {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
        solver: SolverArg,
        /// Write the per-cell table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-N large-deviation curve as JSON lines.
    VerifyLdp {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated system sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        /// Block order of the ball center.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Comma-separated center weights (lexicographic blocks).
        #[arg(long, value_delimiter = ',')]
        center: Vec<f64>,
        /// Profile file for a spatial ball instead of a block ball.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        /// Monte Carlo samples beyond the enumeration limit.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// TASEP matrix-product law against the generator solve.
    StationaryCheck {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n: usize,
    },
    /// Fluid ODE against tilted Monte Carlo paths.
    FluidCheck {
        #[arg(long, default_value = "zero-drift")]
        scenario: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long, default_value_t = 0.02)]
        threshold: f64,
        /// Print one summary record instead of the per-run table.
        #[arg(long)]
        summary: bool,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Validation(&'static str, String),
    Numerical(&'static str, String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(..) => 2,
            Failure::Numerical(..) => 3,
        }
    }

    fn record(&self) -> Value {
        let (kind, message) = match self {
            Failure::Usage(m) => ("Usage", m.as_str()),
            Failure::Validation(k, m) | Failure::Numerical(k, m) => (*k, m.as_str()),
        };
        json!({"error": self.code(), "kind": kind, "message": message})
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.kind(), e.to_string())
        } else {
            Failure::Numerical(e.kind(), e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation("Io", e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation("Invalid", msg.into())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "{e}");
            let f = Failure::Usage(e.kind().to_string());
            let _ = writeln!(err, "{}", f.record());
            return f.code();
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "{}", f.record());
            f.code()
        }
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.15e}")
}

fn record(command: &str, params: Value, value: Value, diagnostics: Value) -> String {
    json!({"command": command, "params": params, "value": value, "diagnostics": diagnostics})
        .to_string()
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ModelFile {
    Explicit {
        alphabet_size: usize,
        matrices: Vec<Vec<Vec<f64>>>,
        x: Vec<f64>,
        y: Vec<f64>,
    },
    Tasep {
        alpha: f64,
        beta: f64,
    },
}

enum Loaded {
    Explicit(RationalModel),
    Tasep { alpha: f64, beta: f64 },
}

fn parse_model_file(path: &Path) -> CliResult<Loaded> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Validation("Parse", format!("{}: {e}", path.display())))?;
    match file {
        ModelFile::Explicit {
            alphabet_size,
            matrices,
            x,
            y,
        } => {
            if matrices.len() != alphabet_size {
                return Err(invalid(format!(
                    "alphabet_size is {alphabet_size} but {} matrices were given",
                    matrices.len()
                )));
            }
            let mats = matrices
                .iter()
                .map(|rows| NonNegativeMatrix::from_rows(rows))
                .collect::<crate::Result<Vec<_>>>()?;
            Ok(Loaded::Explicit(RationalModel::new(mats, x, y)?))
        }
        ModelFile::Tasep { alpha, beta } => {
            TasepParams::new(alpha, beta, 1)?;
            Ok(Loaded::Tasep { alpha, beta })
        }
    }
}

fn load(args: &ModelArgs) -> CliResult<Loaded> {
    match (&args.model, args.tasep) {
        (Some(_), true) => Err(Failure::Usage("--model and --tasep are exclusive".into())),
        (Some(path), false) => parse_model_file(path),
        (None, _) => match (args.alpha, args.beta) {
            (Some(alpha), Some(beta)) => {
                TasepParams::new(alpha, beta, 1)?;
                Ok(Loaded::Tasep { alpha, beta })
            }
            _ => Err(Failure::Usage(
                "give --model FILE or --tasep --alpha A --beta B".into(),
            )),
        },
    }
}

fn tasep_model(cli: &Cli, alpha: f64, beta: f64, n: usize) -> CliResult<TruncatedTasepModel> {
    Ok(build_tasep_with(
        TasepParams::new(alpha, beta, n)?,
        cli.tol,
        cli.bmax,
    )?)
}

fn read_csv(path: &Path, header: &str) -> CliResult<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().map(str::trim).unwrap_or_default();
    if first.replace(' ', "") != header {
        return Err(invalid(format!(
            "{}: expected header {header:?}, found {first:?}",
            path.display()
        )));
    }
    Ok(lines
        .map(|l| l.split(',').map(|c| c.trim().to_string()).collect())
        .collect())
}

fn parse_f64(s: &str) -> CliResult<f64> {
    s.parse()
        .map_err(|_| invalid(format!("not a number: {s:?}")))
}

fn read_profile(path: &Path) -> CliResult<Profile> {
    let rows = read_csv(path, "x,rho")?;
    let rho = rows
        .iter()
        .map(|r| {
            r.get(1)
                .ok_or_else(|| invalid("profile rows need two columns"))
                .and_then(|v| parse_f64(v))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Profile::new(rho)?)
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult<i32> {
    match &cli.command {
        Command::Perron { model, enlarged } => cmd_perron(cli, model, *enlarged, out),
        Command::Measure {
            model,
            n,
            word,
            enumerate,
        } => cmd_measure(cli, model, *n, word.as_deref(), *enumerate, out),
        Command::SampleBridge {
            model,
            n,
            samples,
            summary,
        } => cmd_sample_bridge(cli, model, *n, *samples, *summary, out),
        Command::Empirical {
            words,
            word,
            alphabet,
            k,
            spatial,
            generalized,
        } => cmd_empirical(cli, words.as_deref(), word.as_deref(), *alphabet, *k, *spatial, *generalized, out),
        Command::RatePair { model, nu } => cmd_rate_pair(cli, model, nu, out),
        Command::RateProfile {
            model,
            profile,
            solver,
            out: csv,
        } => cmd_rate_profile(model, profile, *solver, csv.as_deref(), out),
        Command::VerifyLdp {
            model,
            ns,
            k,
            center,
            profile,
            radius,
            samples,
        } => cmd_verify_ldp(cli, model, ns, *k, center, profile.as_deref(), *radius, *samples, out),
        Command::StationaryCheck { alpha, beta, n } => {
            cmd_stationary_check(cli, *alpha, *beta, *n, out)
        }
        Command::FluidCheck {
            scenario,
            n,
            runs,
            threshold,
            summary,
        } => cmd_fluid_check(cli, scenario, *n, *runs, *threshold, *summary, out),
    }
}

fn cmd_perron(cli: &Cli, args: &ModelArgs, enlarged: bool, out: &mut dyn Write) -> CliResult<i32> {
    match load(args)? {
        Loaded::Explicit(model) => {
            let m = model.total_matrix();
            let d = dominant_class(m, cli.tol, MAX_ITER)?;
            let me = m.mul_vec(&d.right);
            let residual = me
                .iter()
                .zip(&d.right)
                .map(|(a, b)| (a - d.value * b).abs())
                .fold(0.0, f64::max);
            let mut diag = json!({"residual": residual, "class": d.class});
            if enlarged {
                let chain = build_enlarged(&model, cli.tol)?;
                let rows: Vec<Vec<f64>> = (0..chain.s_frak.dim())
                    .map(|i| chain.s_frak.matrix().row(i).to_vec())
                    .collect();
                diag["epsilon"] = json!(chain.epsilon);
                diag["s_frak"] = json!(rows);
            }
            writeln!(
                out,
                "{}",
                record("perron", json!({}), json!({"lambda": d.value, "e": d.right}), diag)
            )?;
        }
        Loaded::Tasep { alpha, beta } => {
            let spec = TridiagonalSpec::new(2.0, 1.0, 1.0)?;
            let value = perron_tridiagonal_infinite(&spec).value;
            let e: Vec<f64> = (0..=5).map(|b| (b + 1) as f64).collect();
            let mut diag = json!({"family": "tridiagonal(2,1,1)"});
            if enlarged {
                let eps: Vec<[f64; 3]> = (0..2)
                    .flat_map(|a| (0..=5).map(move |b| [a as f64, b as f64, (2 * (a + b) + 1) as f64 / 4.0]))
                    .collect();
                diag["epsilon_a_b_value"] = json!(eps);
            }
            writeln!(
                out,
                "{}",
                record(
                    "perron",
                    json!({"alpha": alpha, "beta": beta}),
                    json!({"lambda": value, "e_first": e}),
                    diag
                )
            )?;
        }
    }
    Ok(0)
}

fn cmd_measure(
    cli: &Cli,
    args: &ModelArgs,
    n: Option<usize>,
    word: Option<&str>,
    enumerate: bool,
    out: &mut dyn Write,
) -> CliResult<i32> {
    let loaded = load(args)?;
    let alphabet = match &loaded {
        Loaded::Explicit(m) => m.alphabet_size(),
        Loaded::Tasep { .. } => 2,
    };
    let n = match (n, word) {
        (Some(n), _) => n,
        (None, Some(w)) => w.trim().len(),
        (None, None) => return Err(Failure::Usage("give --n or --word".into())),
    };
    if enumerate == word.is_some() {
        return Err(Failure::Usage("give exactly one of --word and --enumerate".into()));
    }
    if let Some(w) = word {
        let w = Word::parse(w, alphabet)?;
        if w.len() != n {
            return Err(invalid(format!("word has length {}, not {n}", w.len())));
        }
        let p = match &loaded {
            Loaded::Explicit(m) => measure_probability(m, &w)?,
            Loaded::Tasep { alpha, beta } => tasep_probability(&tasep_model(cli, *alpha, *beta, n)?, &w)?,
        };
        writeln!(
            out,
            "{}",
            record("measure", json!({"n": n, "word": w.to_string()}), json!(p), json!({}))
        )?;
        return Ok(0);
    }
    let law = match &loaded {
        Loaded::Explicit(m) => enumerate_rational(m, n)?,
        Loaded::Tasep { alpha, beta } => enumerate_tasep(&tasep_model(cli, *alpha, *beta, n)?)?,
    };
    writeln!(out, "word,probability")?;
    for (i, p) in law.iter().enumerate() {
        writeln!(out, "{},{}", Word::from_index(i, n, alphabet), fmt(*p))?;
    }
    Ok(0)
}

fn cmd_sample_bridge(
    cli: &Cli,
    args: &ModelArgs,
    n: usize,
    samples: usize,
    summary: bool,
    out: &mut dyn Write,
) -> CliResult<i32> {
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut paths: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(samples);
    let alphabet = match load(args)? {
        Loaded::Explicit(model) => {
            let chain = build_enlarged(&model, cli.tol)?;
            let law = chain.bridge_law(n)?;
            let sampler = BridgeSampler::new(&law);
            for _ in 0..samples {
                let xi = sampler.sample(&mut rng);
                let (eta, b) = xi.iter().map(|s| chain.split(*s)).unzip();
                paths.push((eta, b));
            }
            model.alphabet_size()
        }
        Loaded::Tasep { alpha, beta } => {
            let bridge = TasepBridge::new(&tasep_model(cli, alpha, beta, n)?)?;
            for _ in 0..samples {
                let t = bridge.sample(&mut rng);
                paths.push((t.eta, t.zeta));
            }
            2
        }
    };
    if summary {
        let mut freq = vec![0.0; alphabet];
        for (eta, _) in &paths {
            for s in &eta[..n] {
                freq[*s] += 1.0 / (n * samples.max(1)) as f64;
            }
        }
        writeln!(out, "symbol,mean_frequency")?;
        for (s, f) in freq.iter().enumerate() {
            writeln!(out, "{s},{}", fmt(*f))?;
        }
        return Ok(0);
    }
    writeln!(out, "sample,eta,b")?;
    for (i, (eta, b)) in paths.iter().enumerate() {
        let eta: String = eta.iter().map(|s| s.to_string()).collect();
        let b: Vec<String> = b.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{i},{eta},{}", b.join(" "))?;
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_empirical(
    cli: &Cli,
    words: Option<&Path>,
    word: Option<&str>,
    alphabet: usize,
    k: usize,
    spatial: bool,
    generalized: bool,
    out: &mut dyn Write,
) -> CliResult<i32> {
    let texts: Vec<String> = match (words, word) {
        (Some(path), None) => read_csv(path, "word")?
            .into_iter()
            .map(|r| r.into_iter().next().unwrap_or_default())
            .collect(),
        (None, Some(w)) => vec![w.to_string()],
        _ => return Err(Failure::Usage("give exactly one of --words and --word".into())),
    };
    let parsed = texts
        .iter()
        .map(|t| Word::parse(t, alphabet))
        .collect::<crate::Result<Vec<_>>>()?;
    if generalized {
        writeln!(out, "word_id,bin_left,bin_right,block,mass")?;
        for (id, w) in parsed.iter().enumerate() {
            let g = generalized_spatial(w, k, cli.bins)?;
            for row in g.csv_rows().iter().skip(1) {
                writeln!(out, "{id},{row}")?;
            }
        }
    } else if spatial {
        writeln!(out, "word_id,bin_left,bin_right,mass")?;
        for (id, w) in parsed.iter().enumerate() {
            let s = spatial_empirical(w, cli.bins)?;
            let l = s.bins as f64;
            for (j, m) in s.masses.iter().enumerate() {
                writeln!(out, "{id},{},{},{}", fmt(j as f64 / l), fmt((j + 1) as f64 / l), fmt(*m))?;
            }
        }
    } else {
        writeln!(out, "word_id,block,mass")?;
        for (id, w) in parsed.iter().enumerate() {
            let nu = empirical_k(w, k)?;
            for (b, m) in nu.weights.iter().enumerate() {
                writeln!(out, "{id},{},{}", Word::from_index(b, k, alphabet), fmt(*m))?;
            }
        }
    }
    Ok(0)
}

fn cmd_rate_pair(cli: &Cli, model: &Path, nu: &Path, out: &mut dyn Write) -> CliResult<i32> {
    let Loaded::Explicit(model) = parse_model_file(model)? else {
        return Err(invalid("rate-pair needs an explicit model"));
    };
    let a = model.alphabet_size();
    let mut weights = vec![0.0; a * a];
    for row in read_csv(nu, "pair,mass")? {
        let [pair, mass] = row.as_slice() else {
            return Err(invalid("pair rows need two columns"));
        };
        let w = Word::parse(pair, a)?;
        if w.len() != 2 {
            return Err(invalid(format!("{pair:?} is not a pair")));
        }
        weights[w.index()] += parse_f64(mass)?;
    }
    let nu2 = PairMeasure::from_kword(&KWordMeasure::new(2, a, weights)?)?;
    let opts = RateOptions {
        tol: cli.tol,
        ..Default::default()
    };
    let dual = pair_rate_dual(&model, &nu2, opts)?;
    let primal = pair_rate_primal(&model, &nu2, opts)?;
    writeln!(
        out,
        "{}",
        record(
            "rate-pair",
            json!({"tol": cli.tol}),
            json!({"dual": dual.value, "primal": primal.value}),
            json!({
                "difference": (primal.value - dual.value).abs(),
                "dual_status": dual.status,
                "primal_status": primal.status,
                "dual_iterations": dual.iterations,
                "primal_iterations": primal.iterations,
                "dual_gap": dual.gap,
                "primal_gap": primal.gap,
            })
        )
    )?;
    Ok(0)
}

fn cmd_rate_profile(
    args: &ModelArgs,
    profile: &Path,
    solver: SolverArg,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<i32> {
    let Loaded::Tasep { alpha, beta } = load(args)? else {
        return Err(invalid("rate-profile needs a TASEP model"));
    };
    let params = TasepParams::new(alpha, beta, 1)?;
    let rho = read_profile(profile)?;
    let opts = ProfileOptions {
        solver: match solver {
            SolverArg::Exact => ProfileSolver::Exact,
            SolverArg::Subgradient => ProfileSolver::Subgradient,
        },
        ..Default::default()
    };
    let report = rate_profile_with(&rho, &params, &opts)?;
    if let Some(path) = csv {
        let mut text = String::from("x,rho,F,G_opt,integrand\n");
        for row in report.csv_rows(&rho) {
            let cells: Vec<String> = row.iter().map(|v| fmt(*v)).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        std::fs::write(path, text)?;
    }
    writeln!(
        out,
        "{}",
        record(
            "rate-profile",
            json!({"alpha": alpha, "beta": beta, "cells": rho.cells(), "solver": report.solver}),
            json!(report.value),
            json!({
                "argmin_x": report.argmin_x,
                "argmin_index": report.argmin_index,
                "iterations": report.iterations,
                "gap": report.gap,
            })
        )
    )?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify_ldp(
    cli: &Cli,
    args: &ModelArgs,
    ns: &[usize],
    k: usize,
    center: &[f64],
    profile: Option<&Path>,
    radius: f64,
    samples: usize,
    out: &mut dyn Write,
) -> CliResult<i32> {
    let source = match load(args)? {
        Loaded::Explicit(m) => LdSource::Rational(m),
        Loaded::Tasep { alpha, beta } => LdSource::Tasep {
            alpha,
            beta,
            rel_tol: cli.tol,
        },
    };
    let alphabet = match &source {
        LdSource::Rational(m) => m.alphabet_size(),
        LdSource::Tasep { .. } => 2,
    };
    let event = match profile {
        Some(path) => Event::ProfileBall {
            profile: read_profile(path)?,
            radius,
        },
        None => {
            if center.is_empty() {
                return Err(Failure::Usage("give --center or --profile".into()));
            }
            Event::KWordBall {
                center: KWordMeasure::new(k, alphabet, center.to_vec())?,
                radius,
            }
        }
    };
    let opts = LdOptions {
        samples,
        seed: cli.seed,
        tol: cli.tol,
        ..Default::default()
    };
    let est = ld_curve(&source, ns, &event, &opts)?;
    for (line, p) in est.json_lines().iter().zip(&est.points) {
        let diag: Value = serde_json::from_str(line).expect("own output");
        writeln!(
            out,
            "{}",
            record("verify-ldp", json!({"n": p.n, "seed": cli.seed}), json!(p.minus_log_over_n), diag)
        )?;
    }
    Ok(0)
}

fn cmd_stationary_check(cli: &Cli, alpha: f64, beta: f64, n: usize, out: &mut dyn Write) -> CliResult<i32> {
    let model = tasep_model(cli, alpha, beta, n)?;
    let mpa = enumerate_tasep(&model)?;
    let gen = generator_stationary(&model.params)?;
    let dev = mpa
        .iter()
        .zip(&gen)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    writeln!(
        out,
        "{}",
        record(
            "stationary-check",
            json!({"alpha": alpha, "beta": beta, "n": n}),
            json!(dev),
            json!({"b_max": model.b_max, "truncation_error_bound": model.truncation_error_bound})
        )
    )?;
    if dev < 1e-9 {
        Ok(0)
    } else {
        Err(Failure::Numerical(
            "Deviation",
            format!("max deviation {dev:e} exceeds 1e-9"),
        ))
    }
}

fn cmd_fluid_check(
    cli: &Cli,
    scenario: &str,
    n: usize,
    runs: usize,
    threshold: f64,
    summary: bool,
    out: &mut dyn Write,
) -> CliResult<i32> {
    let sc = FluidScenario::by_name(scenario)?;
    let dists = fluid_sup_distances(&sc, n, runs, cli.grid, cli.seed)?;
    if summary {
        let below = dists.iter().filter(|d| **d < threshold).count();
        writeln!(
            out,
            "{}",
            record(
                "fluid-check",
                json!({"scenario": sc.name, "n": n, "runs": runs, "grid": cli.grid, "seed": cli.seed}),
                json!(below as f64 / runs.max(1) as f64),
                json!({"threshold": threshold, "max_distance": dists.iter().copied().fold(0.0, f64::max)})
            )
        )?;
    } else {
        writeln!(out, "run,seed,sup_distance")?;
        for (r, d) in dists.iter().enumerate() {
            writeln!(out, "{r},{},{}", cli.seed.wrapping_add(r as u64), fmt(*d))?;
        }
    }
    Ok(0)
}
