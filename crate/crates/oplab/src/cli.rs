//! Command-line experiments: the structural oracle suite, entropy scaling
//! curves, the periodic-type classifier and single entropy estimates.
//!
//! Configuration comes from an optional `key = value` file; flags override
//! file entries. Every output file starts with `#` lines holding the
//! version and the full configuration as JSON.
//!
//! Worker seeds: task `i` under root seed `s` uses `derive_seed(s, i)`
//! (splitmix64 mixing); draws are grouped in fixed chunks so results do not
//! depend on the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::coding::{adic_on_coded, diag, lambda_window_range, odometer, psi, psi_inv, psi_with_offset, CodedPoint};
use crate::dyadic_group::{low_mask, Config, DigitSeq, GroupElem, SigmaSeq};
use crate::error::Error;
use crate::filtration::{filtration_scaling, filtration_targets, kantorovich, kantorovich_brute_force, max_orbit_size};
use crate::graph_op::{adic_successor, compare_reverse_lex, enumerate_paths, kappa, paths_into, vertex_count, CountMode, PathPrefix, Vertex};
use crate::measures::{
    classify_periodic_type, derive_seed, make_aperiodic, rng_from, BaseLaw, ClassifierReport, MeasureKind,
    MeasureSampler, PeriodDoublingLevels,
};
use crate::metrics_entropy::{
    asymp_compare, bounded, epsilon_entropy, scaling_curve_d, scaling_curve_z, sigma_target, CompareReport,
    EntropyCurve, Semimetric, DEFAULT_EPS, DEFAULT_SAMPLES, Z_RESOLUTION,
};

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "OPLAB_SEED";
pub const VERSION: &str = env!("OPLAB_VERSION");
/// Deepest oracle run accepted.
pub const ORACLE_MAX_DEPTH: u32 = 8;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Run(Error::Limit(_) | Error::DepthLimit { .. } | Error::Invalid(_)) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "oplab", version = VERSION, about = "Adic dynamics and scaled entropy on the graph of ordered pairs")]
pub struct Cli {
    /// `key = value` configuration file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed (default: $OPLAB_SEED, else 1).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output file.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exhaustive small-depth structural checks.
    Oracle(OracleArgs),
    /// Entropy scaling curve and its growth verdict.
    Scaling(ScalingArgs),
    /// Periodic-type classification of a measure.
    Classify(ClassifyArgs),
    /// One entropy estimate.
    Entropy(EntropyArgs),
}

#[derive(Args, Debug, Default)]
pub struct OracleArgs {
    /// Depth of the exhaustive checks.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Random points for the commutation diagram.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Flip this bit of the translation in the coding map.
    #[arg(long, hide = true)]
    pub mutate_psi: Option<u32>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Z,
    D,
    Filtration,
}

#[derive(Args, Debug, Default)]
pub struct ScalingArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub sigma: Option<String>,
    /// Cut level of the generating semimetric.
    #[arg(long)]
    pub k: Option<u32>,
    /// Comma-separated epsilons.
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Comma-separated levels (d, filtration) or log2 times (z).
    #[arg(long)]
    pub scales: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct ClassifyArgs {
    /// Measure description, e.g. "product bernoulli 0.5".
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub kmax: Option<u32>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub cyl_len: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Expected verdict, e.g. "type 2"; a mismatch exits with 1.
    #[arg(long)]
    pub expect: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct EntropyArgs {
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub k: Option<u32>,
    /// Average over D_n.
    #[arg(long)]
    pub group: Option<u32>,
    /// Average over this many adic steps.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
}

/// Validated parameters of one run; echoed into every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    pub output: Option<String>,
    pub sigma: String,
    pub depth: u32,
    pub digits: u32,
    pub samples: usize,
    pub eps: Vec<f64>,
    pub mode: Mode,
    pub k: u32,
    pub scales: Vec<u32>,
    pub spec: String,
    pub kmax: u32,
    pub tol: f64,
    pub cyl_len: usize,
    pub expect: Option<String>,
    pub mutate_psi: Option<u32>,
    pub group: Option<u32>,
    pub steps: Option<u64>,
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| CliError::Usage(format!("bad {key} entry '{p}'"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, s: &str) -> CliResult<T> {
    s.trim().parse().map_err(|_| CliError::Usage(format!("bad value for {key}: '{s}'")))
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

const KNOWN_KEYS: &[&str] = &[
    "seed", "workers", "output", "sigma", "depth", "digits", "samples", "eps", "mode", "k", "scales", "spec",
    "kmax", "tol", "cyl_len", "expect", "mutate_psi", "group", "steps",
];

impl ExperimentConfig {
    /// Merges file entries, flags and defaults, then validates.
    pub fn resolve(cli: &Cli) -> CliResult<Self> {
        let file = match &cli.config {
            Some(p) => parse_config_text(&std::fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        if let Some(bad) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::Usage(format!("unknown config key '{bad}'")));
        }
        let get = |k: &str| file.get(k).cloned();
        let env_seed = std::env::var(SEED_ENV).ok();
        let seed = match (cli.seed, get("seed"), env_seed) {
            (Some(s), _, _) => s,
            (None, Some(s), _) => parse_one("seed", &s)?,
            (None, None, Some(s)) => parse_one(SEED_ENV, &s)?,
            _ => 1,
        };
        let workers = match (cli.workers, get("workers")) {
            (Some(w), _) => w,
            (None, Some(w)) => parse_one("workers", &w)?,
            _ => 1,
        };
        let output = cli.output.as_ref().map(|p| p.display().to_string()).or(get("output"));
        let mut c = ExperimentConfig {
            command: String::new(),
            seed,
            workers,
            output,
            sigma: get("sigma").unwrap_or_else(|| "11111111".into()),
            depth: get("depth").map(|v| parse_one("depth", &v)).transpose()?.unwrap_or(4),
            digits: get("digits").map(|v| parse_one("digits", &v)).transpose()?.unwrap_or(Z_RESOLUTION),
            samples: get("samples").map(|v| parse_one("samples", &v)).transpose()?.unwrap_or(0),
            eps: get("eps").map(|v| parse_list("eps", &v)).transpose()?.unwrap_or_else(|| DEFAULT_EPS.to_vec()),
            mode: match get("mode").as_deref() {
                None | Some("d") => Mode::D,
                Some("z") => Mode::Z,
                Some("filtration") => Mode::Filtration,
                Some(m) => return Err(CliError::Usage(format!("unknown mode '{m}'"))),
            },
            k: get("k").map(|v| parse_one("k", &v)).transpose()?.unwrap_or(u32::MAX),
            scales: get("scales").map(|v| parse_list("scales", &v)).transpose()?.unwrap_or_default(),
            spec: get("spec").unwrap_or_default(),
            kmax: get("kmax").map(|v| parse_one("kmax", &v)).transpose()?.unwrap_or(4),
            tol: get("tol").map(|v| parse_one("tol", &v)).transpose()?.unwrap_or(0.05),
            cyl_len: get("cyl_len").map(|v| parse_one("cyl_len", &v)).transpose()?.unwrap_or(0),
            expect: get("expect"),
            mutate_psi: get("mutate_psi").map(|v| parse_one("mutate_psi", &v)).transpose()?,
            group: get("group").map(|v| parse_one("group", &v)).transpose()?,
            steps: get("steps").map(|v| parse_one("steps", &v)).transpose()?,
        };
        match &cli.command {
            Command::Oracle(a) => {
                c.command = "oracle".into();
                if let Some(d) = a.depth {
                    c.depth = d;
                }
                if let Some(s) = a.samples {
                    c.samples = s;
                }
                if a.mutate_psi.is_some() {
                    c.mutate_psi = a.mutate_psi;
                }
                if c.samples == 0 {
                    c.samples = 10_000;
                }
            }
            Command::Scaling(a) => {
                c.command = "scaling".into();
                if let Some(m) = a.mode {
                    c.mode = m;
                }
                if let Some(s) = &a.sigma {
                    c.sigma = s.clone();
                }
                if let Some(k) = a.k {
                    c.k = k;
                }
                if let Some(e) = &a.eps {
                    c.eps = parse_list("eps", e)?;
                }
                if let Some(s) = a.samples {
                    c.samples = s;
                }
                if let Some(s) = &a.scales {
                    c.scales = parse_list("scales", s)?;
                }
                if c.k == u32::MAX {
                    c.k = if c.mode == Mode::Filtration { 1 } else { 0 };
                }
                if c.samples == 0 {
                    c.samples = DEFAULT_SAMPLES;
                }
                if c.scales.is_empty() {
                    c.scales = match c.mode {
                        Mode::Z => (2..=8).collect(),
                        Mode::D => (3..=8).collect(),
                        Mode::Filtration => (4..=9).collect(),
                    };
                }
            }
            Command::Classify(a) => {
                c.command = "classify".into();
                if let Some(s) = &a.spec {
                    c.spec = s.clone();
                }
                if let Some(k) = a.kmax {
                    c.kmax = k;
                }
                if let Some(t) = a.tol {
                    c.tol = t;
                }
                if let Some(l) = a.cyl_len {
                    c.cyl_len = l;
                }
                if let Some(s) = a.samples {
                    c.samples = s;
                }
                if a.expect.is_some() {
                    c.expect = a.expect.clone();
                }
                if c.samples == 0 {
                    c.samples = 100_000;
                }
                if c.cyl_len == 0 {
                    c.cyl_len = if c.spec.starts_with("aperiodic") { 40 } else { 6 };
                }
            }
            Command::Entropy(a) => {
                c.command = "entropy".into();
                if let Some(s) = &a.sigma {
                    c.sigma = s.clone();
                }
                if let Some(k) = a.k {
                    c.k = k;
                }
                if let Some(e) = a.eps {
                    c.eps = vec![e];
                }
                if let Some(s) = a.samples {
                    c.samples = s;
                }
                if a.group.is_some() {
                    c.group = a.group;
                }
                if a.steps.is_some() {
                    c.steps = a.steps;
                }
                if c.k == u32::MAX {
                    c.k = 0;
                }
                if c.samples == 0 {
                    c.samples = DEFAULT_SAMPLES;
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> CliResult<()> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.workers == 0 {
            return usage("workers must be positive".into());
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return usage(format!("eps values must lie in (0, 1): {:?}", self.eps));
        }
        match self.command.as_str() {
            "oracle" => {
                if self.depth == 0 || self.depth > ORACLE_MAX_DEPTH {
                    return Err(CliError::Run(Error::DepthLimit { depth: self.depth, limit: ORACLE_MAX_DEPTH }));
                }
                if let Some(b) = self.mutate_psi {
                    if b >= self.depth {
                        return usage(format!("mutated bit {b} outside depth {}", self.depth));
                    }
                }
            }
            "scaling" | "entropy" => {
                SigmaSeq::parse(&self.sigma).map_err(|e| CliError::Usage(format!("sigma: {e}")))?;
                if self.samples < 100 {
                    return usage("samples must be at least 100".into());
                }
                if self.k > 6 {
                    return usage(format!("cut level {} above 6", self.k));
                }
                if self.command == "scaling" {
                    if self.scales.len() < 4 {
                        return usage("at least 4 scales are needed for a growth verdict".into());
                    }
                    if self.mode == Mode::Filtration && self.scales.iter().any(|&n| n <= self.k || n > 12) {
                        return usage(format!("filtration levels must lie in ({}, 12]", self.k));
                    }
                    if self.mode == Mode::Filtration && self.k > 4 {
                        return usage("filtration cut level above 4".into());
                    }
                    if self.mode == Mode::D && self.scales.iter().any(|&n| n > 20) {
                        return usage("group levels above 20".into());
                    }
                    if self.mode == Mode::Z && self.scales.iter().any(|&m| m + 1 > Z_RESOLUTION) {
                        return usage(format!("log2 times must stay below {Z_RESOLUTION}"));
                    }
                } else if self.group.is_some() == self.steps.is_some() {
                    return usage("entropy needs exactly one of --group and --steps".into());
                }
            }
            "classify" => {
                parse_measure_spec(&self.spec, self.seed)?;
                if self.kmax == 0 || self.kmax > 12 {
                    return usage("kmax must lie in 1..=12".into());
                }
                if self.cyl_len == 0 || self.cyl_len > 64 {
                    return usage("cylinder length must lie in 1..=64".into());
                }
                if !(self.tol > 0.0 && self.tol < 1.0) {
                    return usage("tol must lie in (0, 1)".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn header(&self) -> String {
        format!(
            "# oplab {VERSION}\n# config: {}\n",
            serde_json::to_string(self).expect("config serializes")
        )
    }
}

/// Measure descriptions: `product bernoulli P`, `product period8`,
/// `periodic k=K period8`, `periodic k=K bernoulli P`,
/// `aperiodic toeplitz alpha=BITS` (period-doubling base).
pub fn parse_measure_spec(spec: &str, seed: u64) -> CliResult<MeasureSampler> {
    let words: Vec<&str> = spec.split_whitespace().collect();
    let bad = || CliError::Usage(format!("unknown measure spec '{spec}'"));
    let base = |w: &[&str]| -> CliResult<BaseLaw> {
        match w {
            ["bernoulli", p] => {
                let b = BaseLaw::Bernoulli { p: parse_one("bernoulli", p)? };
                b.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                Ok(b)
            }
            ["period8"] => Ok(BaseLaw::period8_pair()),
            _ => Err(bad()),
        }
    };
    let kind = match words.as_slice() {
        ["product", rest @ ..] => MeasureKind::Product(base(rest)?),
        ["periodic", k, rest @ ..] => {
            let k: u32 = parse_one("k", kv(k, "k").ok_or_else(bad)?)?;
            if k > 12 {
                return Err(CliError::Usage("periodic type above 12".into()));
            }
            MeasureKind::PeriodicType { k, base: base(rest)? }
        }
        ["aperiodic", "toeplitz" | "period-doubling", a] => {
            let alpha = DigitSeq::parse(kv(a, "alpha").ok_or_else(bad)?).map_err(|e| CliError::Usage(e.to_string()))?;
            if alpha.len() > 12 {
                return Err(CliError::Usage("alpha longer than 12 digits".into()));
            }
            return Ok(make_aperiodic(&BaseLaw::PeriodDoubling, Arc::new(PeriodDoublingLevels), alpha, seed)?);
        }
        _ => return Err(bad()),
    };
    Ok(MeasureSampler::new(kind, seed))
}

fn kv<'a>(w: &'a str, key: &str) -> Option<&'a str> {
    w.strip_prefix(key).and_then(|v| v.strip_prefix('='))
}

/// Outcome of one oracle check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub counterexample: Option<serde_json::Value>,
}

impl CheckOutcome {
    fn ok(name: &str, detail: String) -> Self {
        CheckOutcome { name: name.into(), pass: true, detail, counterexample: None }
    }

    fn fail(name: &str, detail: String, cx: serde_json::Value) -> Self {
        CheckOutcome { name: name.into(), pass: false, detail, counterexample: Some(cx) }
    }
}

fn path_json(x: &PathPrefix) -> serde_json::Value {
    serde_json::to_value(x.to_record()).expect("record serializes")
}

/// Counts of vertices and paths into every vertex up to floor `depth ≤ 4`.
pub fn check_counts(depth: u32) -> crate::Result<CheckOutcome> {
    let name = "vertex and path counts";
    for n in 0..=depth.min(4) {
        let formula = vertex_count(n, CountMode::Formula)?;
        let labels = crate::graph_op::floor_labels(n)?;
        if labels.len() as u128 != formula {
            return Ok(CheckOutcome::fail(name, format!("floor {n}: {} labels vs {formula}", labels.len()), n.into()));
        }
        for v in labels {
            let p = paths_into(&Vertex { label: v.clone() })?;
            if p != 1u128 << n {
                return Ok(CheckOutcome::fail(name, format!("{p} paths into a floor-{n} vertex"), v.to_hex().into()));
            }
        }
    }
    Ok(CheckOutcome::ok(name, format!("floors 0..={}", depth.min(4))))
}

/// Round trip and injectivity of the coding map on all paths, depth by
/// depth, optionally with one translation bit flipped.
pub fn check_psi_bijection(depth: u32, mutate: Option<u32>) -> crate::Result<CheckOutcome> {
    let name = "coding map bijection";
    let offset = mutate.map_or(0, |b| 1u64 << b);
    for n in 1..=depth.min(3) {
        let mut seen = std::collections::HashSet::new();
        for x in enumerate_paths(n)? {
            let p = psi_with_offset(&x, offset)?;
            let back = psi_inv(&p)?;
            if back != x || !seen.insert((p.materialize()?, p.alpha().bits())) {
                return Ok(CheckOutcome::fail(
                    name,
                    format!("round trip fails at depth {n}"),
                    serde_json::json!({ "depth": n, "path": path_json(&x), "image": p.to_record()? }),
                ));
            }
        }
    }
    Ok(CheckOutcome::ok(name, format!("all paths of depth ≤ {}", depth.min(3))))
}

/// `psi(kappa(g_m) x) = diag(g_m) psi(x)` for every path of depth `≤ 4`.
pub fn check_equivariance(depth: u32) -> crate::Result<CheckOutcome> {
    let name = "generator equivariance";
    let n = depth.min(4);
    for x in enumerate_paths(n)? {
        let p = psi(&x)?;
        for m in 0..n {
            let g = GroupElem::generator(m)?;
            if psi(&kappa(g, &x)?)? != diag(g, &p)? {
                return Ok(CheckOutcome::fail(name, format!("generator {m}"), path_json(&x)));
            }
        }
    }
    Ok(CheckOutcome::ok(name, format!("all paths of depth {n}")))
}

/// Window half-width for the commutation diagram.
const DIAGRAM_WINDOW: i64 = 8;

/// Both squares of the commutation diagram on random points at
/// `N = M = 10` with windows of 16 coordinates: the coding map intertwines
/// the adic map, and the window map intertwines the adic map with
/// shift times odometer. Digit prefixes are drawn where every step is defined.
pub fn check_diagram(samples: usize, seed: u64) -> crate::Result<CheckOutcome> {
    let name = "commutation diagram";
    let n = 10u32;
    let (lo, hi) = (-DIAGRAM_WINDOW, DIAGRAM_WINDOW - 1);
    let mut rng = rng_from(derive_seed(seed, 7));
    for i in 0..samples {
        let top = Config::from_fn(n, |_| rand::Rng::random(&mut rng))?;
        let a = rand::Rng::random_range(&mut rng, (DIAGRAM_WINDOW as u64)..(1u64 << n) - DIAGRAM_WINDOW as u64 - 1);
        let x = PathPrefix::new(top, DigitSeq::from_bits(a, n)?)?;
        let p = psi(&x)?;
        let q = adic_on_coded(&p)?;
        if psi(&adic_successor(&x)?)? != q {
            return Ok(CheckOutcome::fail(name, format!("left square, sample {i}"), path_json(&x)));
        }
        let moved = lambda_window_range(&q, lo, hi)?;
        let shifted = lambda_window_range(&p, lo + 1, hi + 1)?.shift_left();
        if moved != shifted || *q.alpha() != odometer(p.alpha())? {
            return Ok(CheckOutcome::fail(name, format!("right square, sample {i}"), path_json(&x)));
        }
    }
    Ok(CheckOutcome::ok(name, format!("{samples} random points")))
}

/// Successor walks through complete tail classes of `2^depth` paths in
/// reverse-lexicographic order.
pub fn check_adic_order(depth: u32, classes: usize, seed: u64) -> crate::Result<CheckOutcome> {
    let name = "adic order";
    let mut rng = rng_from(derive_seed(seed, 11));
    for _ in 0..classes {
        let top = Config::from_fn(depth, |_| rand::Rng::random(&mut rng))?;
        let mut all: Vec<PathPrefix> =
            (0..(1u64 << depth)).map(|a| PathPrefix::new(top.clone(), DigitSeq::from_bits(a, depth)?)).collect::<crate::Result<_>>()?;
        all.sort_by(|a, b| compare_reverse_lex(a, b).expect("same class"));
        let mut x = all[0].clone();
        for y in &all[1..] {
            x = adic_successor(&x)?;
            if &x != y {
                return Ok(CheckOutcome::fail(name, "successor skips a path".into(), path_json(y)));
            }
        }
        if adic_successor(&x).is_ok() {
            return Ok(CheckOutcome::fail(name, "maximal path has a successor".into(), path_json(&x)));
        }
    }
    Ok(CheckOutcome::ok(name, format!("{classes} classes of {} paths", 1u64 << depth)))
}

/// Orbits of D_n on paths have `2^n` elements.
pub fn check_orbit_sizes(depth: u32) -> crate::Result<CheckOutcome> {
    let name = "orbit sizes";
    let n = depth.min(3);
    for x in enumerate_paths(n)? {
        for j in 0..=n {
            let orbit: std::collections::HashSet<PathPrefix> =
                GroupElem::all(j).map(|g| kappa(g, &x)).collect::<crate::Result<_>>()?;
            if orbit.len() != 1 << j {
                return Ok(CheckOutcome::fail(name, format!("D_{j} orbit of size {}", orbit.len()), path_json(&x)));
            }
        }
    }
    Ok(CheckOutcome::ok(name, format!("all paths of depth {n}")))
}

/// Tree recursion against brute force over all automorphisms of depth 3.
pub fn check_tree_recursion(instances: usize, seed: u64) -> crate::Result<CheckOutcome> {
    let name = "tree recursion vs brute force";
    let mut rng = rng_from(derive_seed(seed, 13));
    let metric = |a: &i64, b: &i64| (a - b).abs() as f64;
    for i in 0..instances {
        let x: Vec<i64> = (0..8).map(|_| rand::Rng::random_range(&mut rng, 0..64)).collect();
        let y: Vec<i64> = (0..8).map(|_| rand::Rng::random_range(&mut rng, 0..64)).collect();
        let (dp, bf) = (kantorovich(&x, &y, metric)?, kantorovich_brute_force(&x, &y, metric)?);
        if dp != bf {
            return Ok(CheckOutcome::fail(name, format!("instance {i}: {dp} vs {bf}"), serde_json::json!({"x": x, "y": y})));
        }
    }
    Ok(CheckOutcome::ok(name, format!("{instances} random instances")))
}

pub fn check_max_orbit() -> crate::Result<CheckOutcome> {
    let m2 = max_orbit_size(2, 2)?;
    Ok(if m2 == 4 {
        CheckOutcome::ok("maximal orbit at depth 2", "M_2 = 4".into())
    } else {
        CheckOutcome::fail("maximal orbit at depth 2", format!("M_2 = {m2}"), (m2 as u64).into())
    })
}

/// All oracle checks for a validated config.
pub fn run_oracle(c: &ExperimentConfig) -> crate::Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_counts(c.depth)?,
        check_psi_bijection(c.depth, c.mutate_psi)?,
        check_equivariance(c.depth)?,
        check_diagram(c.samples, c.seed)?,
        check_adic_order(10, 2, c.seed)?,
        check_orbit_sizes(c.depth)?,
        check_tree_recursion(200, c.seed)?,
        check_max_orbit()?,
    ])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingVerdict {
    pub mode: Mode,
    pub eps: f64,
    pub pass: bool,
    pub bounded: bool,
    pub targets: Vec<f64>,
    pub compare: Option<CompareReport>,
}

/// The epsilon a verdict is read at: the middle of the grid.
pub fn verdict_eps(eps: &[f64]) -> f64 {
    let mut v = eps.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Computes the scaling curve; `on_point` sees each scale as it finishes.
pub fn run_scaling(c: &ExperimentConfig, mut on_scale: impl FnMut(&EntropyCurve)) -> crate::Result<(EntropyCurve, ScalingVerdict)> {
    let sigma = SigmaSeq::parse(&c.sigma)?;
    let kind = MeasureKind::OmegaSigma(sigma);
    let rho = Semimetric::CodedCut { k: c.k };
    let mut curve = EntropyCurve::default();
    for (i, &s) in c.scales.iter().enumerate() {
        let seed = derive_seed(c.seed, i as u64);
        let part = match c.mode {
            Mode::D => scaling_curve_d(&kind, &rho, &c.eps, &[s], c.samples, seed)?,
            Mode::Z => scaling_curve_z(&kind, &rho, &c.eps, &[s], c.samples, seed)?,
            Mode::Filtration => filtration_scaling(&sigma, c.k, &[s], &c.eps, c.samples, seed)?,
        };
        curve.points.extend(part.points);
        on_scale(&curve);
    }
    let eps = verdict_eps(&c.eps);
    let targets: Vec<f64> = match c.mode {
        Mode::Filtration => filtration_targets(&sigma, &c.scales),
        _ => c.scales.iter().map(|&s| sigma_target(&sigma, s)).collect(),
    };
    let at = curve
        .at_eps(eps)
        .into_iter()
        .map(|(s, b)| (if c.mode == Mode::Z { s.trailing_zeros() as u64 } else { s }, b))
        .collect::<Vec<_>>();
    let flat = targets.iter().all(|&t| t == 1.0);
    let (pass, compare) = if flat {
        (bounded(&at, 2.0), None)
    } else {
        let r = asymp_compare(&at, &targets);
        (r.pass, Some(r))
    };
    Ok((curve, ScalingVerdict { mode: c.mode, eps, pass, bounded: flat, targets, compare }))
}

pub fn run_classify(c: &ExperimentConfig) -> crate::Result<ClassifierReport> {
    let sampler = parse_measure_spec(&c.spec, c.seed).map_err(|e| Error::Invalid(e.to_string()))?;
    classify_periodic_type(&sampler, c.kmax, c.cyl_len, c.samples, c.tol, derive_seed(c.seed, 1))
}

pub fn run_entropy(c: &ExperimentConfig) -> crate::Result<f64> {
    let sigma = SigmaSeq::parse(&c.sigma)?;
    let sampler = MeasureSampler::new(MeasureKind::OmegaSigma(sigma), c.seed);
    let base = Semimetric::CodedCut { k: c.k };
    let (rho, res) = match (c.group, c.steps) {
        (Some(n), _) => (base.average_group(n), crate::measures::Resolution::coded(n.max(c.k), n.max(c.k))),
        (_, Some(t)) => (base.average_z(t)?, crate::measures::Resolution::coded(Z_RESOLUTION, Z_RESOLUTION)),
        _ => return Err(Error::Invalid("entropy needs a group level or a step count".into())),
    };
    epsilon_entropy(&sampler, &res, &rho, c.eps[0], c.samples, derive_seed(c.seed, 2))
}

fn emit(c: &ExperimentConfig, body: &str) -> CliResult<()> {
    let text = format!("{}{}", c.header(), body);
    match &c.output {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match run_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_inner(cli: Cli) -> CliResult<i32> {
    let c = ExperimentConfig::resolve(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    pool.install(|| execute(&c))
}

/// Executes a validated config, writing its output; returns the exit code.
pub fn execute(c: &ExperimentConfig) -> CliResult<i32> {
    match c.command.as_str() {
        "oracle" => {
            let checks = run_oracle(c)?;
            let mut body = String::new();
            for ch in &checks {
                writeln!(body, "{}", serde_json::to_string(ch).expect("check serializes")).unwrap();
            }
            emit(c, &body)?;
            Ok(if checks.iter().all(|ch| ch.pass) { 0 } else { 1 })
        }
        "scaling" => {
            let partial = |curve: &EntropyCurve| {
                if let Some(p) = &c.output {
                    let _ = std::fs::write(p, format!("{}{}", c.header(), curve.to_csv()));
                }
            };
            let (curve, verdict) = run_scaling(c, partial)?;
            let body = format!(
                "{}# verdict: {}\n",
                curve.to_csv(),
                serde_json::to_string(&verdict).expect("verdict serializes")
            );
            emit(c, &body)?;
            Ok(if verdict.pass { 0 } else { 1 })
        }
        "classify" => {
            let report = run_classify(c)?;
            let body = format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes"));
            emit(c, &body)?;
            Ok(match &c.expect {
                Some(e) if report.verdict.to_string() != *e => 1,
                _ => 0,
            })
        }
        "entropy" => {
            let bits = run_entropy(c)?;
            emit(c, &format!("bits,{bits}\n"))?;
            Ok(0)
        }
        other => Err(CliError::Usage(format!("unknown command {other}"))),
    }
}

/// Masks below `n`, re-exported for callers building custom checks.
pub fn group_mask(n: u32) -> u64 {
    low_mask(n)
}

/// A coded point from explicit data, for config-driven experiments.
pub fn coded_point(w: Config, alpha: DigitSeq) -> CodedPoint {
    CodedPoint::new(w, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("oplab").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn config_text_parsing() {
        let m = parse_config_text("# comment\nsigma = 1010\n\ncyl-len=40 # trailing\n").unwrap();
        assert_eq!(m["sigma"], "1010");
        assert_eq!(m["cyl_len"], "40");
        assert!(parse_config_text("novalue").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("oplab-cfg-{}", std::process::id()));
        std::fs::write(&dir, "sigma = 0000\nsamples = 500\nseed = 9\n").unwrap();
        let c = ExperimentConfig::resolve(&cli(&["--config", dir.to_str().unwrap(), "scaling", "--sigma", "1010"])).unwrap();
        assert_eq!(c.sigma, "1010");
        assert_eq!(c.samples, 500);
        assert_eq!(c.seed, 9);
        assert_eq!(c.scales, vec![3, 4, 5, 6, 7, 8]);
        std::fs::remove_file(dir).unwrap();
    }

    #[test]
    fn validation_errors_are_usage_errors() {
        let bad = ExperimentConfig::resolve(&cli(&["scaling", "--sigma", "10x"])).unwrap_err();
        assert_eq!(bad.exit_code(), 2);
        let bad = ExperimentConfig::resolve(&cli(&["scaling", "--eps", "1.5"])).unwrap_err();
        assert_eq!(bad.exit_code(), 2);
        let deep = ExperimentConfig::resolve(&cli(&["oracle", "--depth", "9"])).unwrap_err();
        assert!(matches!(deep, CliError::Run(Error::DepthLimit { depth: 9, .. })));
        assert_eq!(deep.exit_code(), 2);
        assert!(ExperimentConfig::resolve(&cli(&["classify", "--spec", "mystery"])).is_err());
    }

    #[test]
    fn measure_specs() {
        assert!(matches!(parse_measure_spec("product bernoulli 0.5", 1).unwrap().kind, MeasureKind::Product(_)));
        assert!(matches!(
            parse_measure_spec("periodic k=2 period8", 1).unwrap().kind,
            MeasureKind::PeriodicType { k: 2, .. }
        ));
        assert!(matches!(parse_measure_spec("aperiodic toeplitz alpha=0000", 1).unwrap().kind, MeasureKind::Aperiodic(_)));
        assert!(parse_measure_spec("product bernoulli 2", 1).is_err());
    }

    #[test]
    fn oracle_passes_and_mutation_is_caught_at_depth_two() {
        let mut c = ExperimentConfig::resolve(&cli(&["oracle", "--samples", "500"])).unwrap();
        assert!(run_oracle(&c).unwrap().iter().all(|ch| ch.pass));
        c.mutate_psi = Some(1);
        let r = check_psi_bijection(c.depth, c.mutate_psi).unwrap();
        assert!(!r.pass);
        assert_eq!(r.counterexample.unwrap()["depth"], 2);
    }

    #[test]
    fn header_embeds_config_and_version() {
        let c = ExperimentConfig::resolve(&cli(&["entropy", "--group", "3"])).unwrap();
        let h = c.header();
        assert!(h.starts_with(&format!("# oplab {VERSION}\n# config: {{")));
        assert!(h.contains("\"command\":\"entropy\""));
    }

    #[test]
    fn scaling_output_is_worker_independent() {
        let base = ["scaling", "--mode", "d", "--sigma", "1010", "--samples", "200", "--scales", "2,3,4,5", "--eps", "0.25"];
        let mut outs = Vec::new();
        for w in ["1", "4"] {
            let mut args = vec!["--workers", w];
            args.extend(base);
            let mut c = ExperimentConfig::resolve(&cli(&args)).unwrap();
            c.workers = 1;
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w.parse().unwrap()).build().unwrap();
            let (curve, v) = pool.install(|| run_scaling(&c, |_| {})).unwrap();
            outs.push((curve.to_csv(), serde_json::to_string(&v).unwrap()));
        }
        assert_eq!(outs[0], outs[1]);
    }
}
