//! Command-line front end: argument parsing, ingestion, dispatch and report
//! emission.
//!
//! Payloads go to stdout, or atomically to `--out` with a `<out>.meta.json`
//! sidecar carrying the version, the configuration, a timestamp and cache
//! checksums. Keeping the volatile fields in the sidecar leaves the payload
//! byte-identical across repeated runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{self, CacheError, ClassCache};
use crate::curve::{self, CurveError, CurveQ, PrimeClassRecord};
use crate::f3::{self, F3Error, QuadSpace};
use crate::fans::{self, Case, FanError, FrobeniusOracle, GrowthFn};
use crate::gl2f3;
use crate::markov::{self, Distribution, MarkovError, Parity, PrimeStep};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONSISTENCY: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal consistency error: {0}")]
    Consistency(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Consistency(_) => EXIT_CONSISTENCY,
        }
    }
}

impl From<MarkovError> for CliError {
    fn from(e: MarkovError) -> Self {
        match e {
            MarkovError::NegativeState { .. } => CliError::Consistency(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        match e {
            CurveError::Consistency { .. } => CliError::Consistency(e.to_string()),
            CurveError::Singular { .. } => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FanError> for CliError {
    fn from(e: FanError) -> Self {
        match e {
            FanError::Markov(m) => m.into(),
            FanError::MissingPrimes { .. } | FanError::EmptyFan | FanError::DValueOverflow => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        match e {
            CacheError::Curve(c) => c.into(),
            CacheError::BadLabel(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<F3Error> for CliError {
    fn from(e: F3Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "s3selmer",
    version,
    about = "Selmer rank statistics over fans of S3-cubic fields"
)]
pub struct Cli {
    /// Seed for stochastic subcommands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Write the payload here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Stationary law of the Selmer chain, as CSV `s,mass`.
    Stationary(StationaryArgs),
    /// Apply the Markov operator `w` times, JSON `{s: mass}`.
    Evolve(EvolveArgs),
    /// Monte Carlo run of the chain through a prime stream, JSON `{s: mass}`.
    Simulate(SimulateArgs),
    /// Exact stationary tail against the closed-form bound, CSV.
    Tailbound(TailboundArgs),
    /// Classify good primes of a curve into the cache, CSV of records.
    Classify(ClassifyArgs),
    /// Chebotarev density comparison from the cache, CSV.
    Densities(DensitiesArgs),
    /// Frobenius conjugacy class at one prime, JSON.
    Frobclass(FrobclassArgs),
    /// Fan elements and their pure cubic representatives, JSON.
    Fan(FanArgs),
    /// Lagrangian counts for a block quadratic space over F3, JSON.
    Lagrangians(LagrangianArgs),
    /// Conjugacy classes and coset statistics of GL2(F3), JSON.
    #[command(name = "gl2f3-report")]
    Gl2f3Report,
}

#[derive(Debug, Args, Serialize)]
pub struct StationaryArgs {
    #[arg(long, default_value = "even")]
    pub parity: Parity,
    /// Mix the even and odd laws with this weight on the even one.
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvolveArgs {
    #[arg(long)]
    pub w: usize,
    /// JSON `{s: mass}`; defaults to a point mass at 0.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Average the `w`-th and `(w+1)`-th iterates.
    #[arg(long)]
    pub averaged: bool,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["stream", "synthetic"])))]
pub struct SimulateArgs {
    #[arg(long)]
    pub trials: u64,
    /// JSON-lines file of classification records or `{"class":i,"split":b}` steps.
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// Comma-separated `count:class{s|i}` runs, e.g. `40:1s,5:2s`.
    #[arg(long)]
    pub synthetic: Option<String>,
    #[arg(long)]
    pub initial: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TailboundArgs {
    #[arg(long)]
    pub s: usize,
    #[arg(long, default_value = "even")]
    pub parity: Parity,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub curve_file: PathBuf,
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub max_prime: u64,
    /// Record that the curve's mod-3 image is known to be all of GL2(F3).
    #[arg(long)]
    pub attest_full_image: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DensitiesArgs {
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub max_prime: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FrobclassArgs {
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub p: u64,
    /// Compute directly from this curve file instead of the cache.
    #[arg(long)]
    pub curve_file: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FanArgs {
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub w: u32,
    #[arg(long = "X")]
    pub x: f64,
    #[arg(long, default_value = "log")]
    pub growth: GrowthFn,
    #[arg(long, default_value = "B")]
    pub case: Case,
    /// File of primes (one per line) satisfying the class-field condition.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Write `d,polynomial` CSV of the cubic representatives here.
    #[arg(long)]
    pub emit_cubics: Option<PathBuf>,
    /// Elements drawn when the fan is sampled rather than enumerated.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Compare the fan's Selmer law with the operator using this many trials.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct LagrangianArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    /// Whitespace-separated integer rows; defaults to hyperbolic planes.
    #[arg(long)]
    pub gram: Option<PathBuf>,
    /// Include bases of every Lagrangian.
    #[arg(long)]
    pub list: bool,
}

/// What a subcommand produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub payload: Vec<u8>,
    /// Labels of cache files the payload depends on.
    pub cache_labels: Vec<String>,
}

impl Report {
    fn new(payload: impl Into<Vec<u8>>) -> Self {
        Report {
            payload: payload.into(),
            cache_labels: Vec::new(),
        }
    }

    fn json<T: Serialize>(value: &T) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable payload");
        bytes.push(b'\n');
        Report::new(bytes)
    }
}

/// Formats with 12 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        s
    } else {
        format!("{x:.11e}")
    }
}

fn round12(x: f64) -> f64 {
    fmt_float(x).parse().expect("formatted float parses")
}

fn distribution_json(d: &Distribution) -> BTreeMap<usize, f64> {
    d.to_map()
        .into_iter()
        .filter(|&(_, m)| m > 0.0)
        .map(|(s, m)| (s, round12(m)))
        .collect()
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_distribution(path: &Path) -> Result<Distribution, CliError> {
    let raw: BTreeMap<String, f64> = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (k, v) in raw {
        let s: usize = k.trim().parse().map_err(|_| {
            CliError::Data(format!("{}: state {k:?} is not an integer", path.display()))
        })?;
        map.insert(s, v);
    }
    Distribution::from_map(&map).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Parses curves from CSV `label,A,B`, skipping blank lines, `#` comments and
/// an optional header.
pub fn parse_curves(mut reader: impl Read, source: &str) -> Result<Vec<CurveQ>, CliError> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| CliError::Data(format!("{source}: {e}")))?;
    let mut curves: Vec<CurveQ> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |msg: String| CliError::Data(format!("{source}:{line}: {msg}"));
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        // One physical line at a time keeps line numbers exact.
        let row = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(raw.as_bytes())
            .records()
            .next()
            .transpose()
            .map_err(|e| err(e.to_string()))?
            .unwrap_or_default();
        if row.len() != 3 {
            return Err(err(format!(
                "expected label,A,B but found {} fields",
                row.len()
            )));
        }
        if curves.is_empty() && row[0].eq_ignore_ascii_case("label") {
            continue;
        }
        let coeff = |i: usize| {
            row[i]
                .parse::<i64>()
                .map_err(|_| err(format!("coefficient {:?} is not an integer", &row[i])))
        };
        let label = row[0].to_string();
        if label.is_empty() {
            return Err(err("empty label".into()));
        }
        if curves.iter().any(|c| c.label.as_deref() == Some(&label)) {
            return Err(err(format!("duplicate label {label:?}")));
        }
        let curve =
            CurveQ::new(coeff(1)?, coeff(2)?, Some(label)).map_err(|e| err(e.to_string()))?;
        curves.push(curve);
    }
    Ok(curves)
}

pub fn ingest_curves(path: &Path) -> Result<Vec<CurveQ>, CliError> {
    let file =
        fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_curves(file, &path.display().to_string())
}

fn find_curve(path: &Path, label: &str) -> Result<CurveQ, CliError> {
    ingest_curves(path)?
        .into_iter()
        .find(|c| c.label.as_deref() == Some(label))
        .ok_or_else(|| CliError::Data(format!("label {label:?} not found in {}", path.display())))
}

/// Parses `count:class{s|i}` runs into a prime stream.
pub fn parse_synthetic(text: &str) -> Result<Vec<PrimeStep>, CliError> {
    let bad = |part: &str, why: &str| CliError::Config(format!("synthetic run {part:?}: {why}"));
    let mut stream = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (count, kind) = part
            .split_once(':')
            .ok_or_else(|| bad(part, "expected count:class"))?;
        let count: usize = count
            .parse()
            .map_err(|_| bad(part, "count is not an integer"))?;
        let split = match kind.chars().last() {
            Some('s') => true,
            Some('i') => false,
            _ => return Err(bad(part, "class must end in s (split) or i (inert)")),
        };
        let class: u8 = kind[..kind.len() - 1]
            .parse()
            .map_err(|_| bad(part, "class is not 0, 1 or 2"))?;
        if class > 2 {
            return Err(bad(part, "class is not 0, 1 or 2"));
        }
        if class == 2 && !split {
            return Err(bad(part, "inert primes cannot have class 2"));
        }
        stream.extend(std::iter::repeat_n(PrimeStep { class, split }, count));
    }
    if stream.is_empty() {
        return Err(CliError::Config("synthetic stream is empty".into()));
    }
    Ok(stream)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StreamLine {
    Record(PrimeClassRecord),
    Step(PrimeStep),
}

fn load_stream(path: &Path) -> Result<Vec<PrimeStep>, CliError> {
    let text = read_text(path)?;
    let mut stream = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: StreamLine = serde_json::from_str(line).map_err(|_| {
            CliError::Data(format!(
                "{}:{}: not a record or step",
                path.display(),
                i + 1
            ))
        })?;
        let step = match parsed {
            StreamLine::Record(r) => PrimeStep::from(&r),
            StreamLine::Step(s) => s,
        };
        if step.class > 2 || (step.class == 2 && !step.split) {
            return Err(CliError::Data(format!(
                "{}:{}: invalid step",
                path.display(),
                i + 1
            )));
        }
        stream.push(step);
    }
    Ok(stream)
}

fn load_oracle(path: &Path) -> Result<FrobeniusOracle, CliError> {
    let mut primes = std::collections::BTreeSet::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let p: u64 = t.parse().map_err(|_| {
            CliError::Data(format!(
                "{}:{}: {t:?} is not a prime",
                path.display(),
                i + 1
            ))
        })?;
        primes.insert(p);
    }
    Ok(Arc::new(move |p| primes.contains(&p)))
}

fn load_gram(path: &Path) -> Result<Vec<Vec<i64>>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let row = t
            .split_whitespace()
            .map(|x| x.parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| {
                CliError::Data(format!("{}:{}: non-integer entry", path.display(), i + 1))
            })?;
        rows.push(row);
    }
    Ok(rows)
}

fn require_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Config("this subcommand is stochastic and needs --seed".into()))
}

fn stationary(args: &StationaryArgs) -> Result<Report, CliError> {
    let d = match args.rho {
        Some(rho) => markov::stationary_mixture(rho)?,
        None => markov::stationary(args.parity),
    };
    let mut csv = String::from("s,mass\n");
    for (s, m) in d.to_map() {
        if m > 0.0 {
            writeln!(csv, "{s},{}", fmt_float(m)).expect("string write");
        }
    }
    Ok(Report::new(csv))
}

fn evolve(args: &EvolveArgs) -> Result<Report, CliError> {
    let initial = match &args.initial {
        Some(path) => load_distribution(path)?,
        None => Distribution::point(0)?,
    };
    let d = if args.averaged {
        markov::evolve_averaged(&initial, args.w)
    } else {
        markov::evolve(&initial, args.w)
    };
    Ok(Report::json(&distribution_json(&d)))
}

fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<Report, CliError> {
    if args.trials == 0 {
        return Err(MarkovError::NoTrials.into());
    }
    let seed = require_seed(seed)?;
    let stream = match (&args.stream, &args.synthetic) {
        (Some(path), _) => load_stream(path)?,
        (None, Some(text)) => parse_synthetic(text)?,
        (None, None) => return Err(CliError::Config("need --stream or --synthetic".into())),
    };
    let initial = match &args.initial {
        Some(path) => load_distribution(path)?,
        None => Distribution::point(0)?,
    };
    let d = markov::simulate_chain(&initial, &stream, args.trials, seed)?;
    Ok(Report::json(&distribution_json(&d)))
}

fn tailbound(args: &TailboundArgs) -> Result<Report, CliError> {
    let exact = markov::tail_exact(args.parity, args.s)?;
    let bound = markov::tail_bound(args.s)?;
    Ok(Report::new(format!(
        "s,parity,tail_exact,bound,within\n{},{},{},{},{}\n",
        args.s,
        match args.parity {
            Parity::Even => "even",
            Parity::Odd => "odd",
        },
        fmt_float(exact),
        fmt_float(bound),
        exact < bound
    )))
}

fn records_csv(records: &[PrimeClassRecord]) -> String {
    let mut csv = String::from("p,a_p,dim_fp,dim_fp2,split_in_F,class_k,class_F,in_DB_support\n");
    for r in records {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.p, r.a_p, r.dim_fp, r.dim_fp2, r.split_in_f, r.class_k, r.class_f, r.in_db_support
        )
        .expect("string write");
    }
    csv
}

fn classify(args: &ClassifyArgs, cache: &ClassCache) -> Result<Report, CliError> {
    let curve = find_curve(&args.curve_file, &args.label)?;
    let outcome = cache.ensure(&args.label, &curve, args.max_prime, args.attest_full_image)?;
    for r in &outcome.records {
        r.check_invariants()
            .map_err(|e| CliError::Consistency(format!("p={}: {e}", r.p)))?;
    }
    eprintln!(
        "classified {} primes for {} ({} reused, {} computed)",
        outcome.records.len(),
        args.label,
        outcome.reused,
        outcome.computed
    );
    let mut report = Report::new(records_csv(&outcome.records));
    report.cache_labels.push(args.label.clone());
    Ok(report)
}

fn densities(args: &DensitiesArgs, cache: &ClassCache) -> Result<Report, CliError> {
    if args.max_prime < 100 {
        return Err(CurveError::RangeTooSmall(args.max_prime).into());
    }
    let records = cache.load(&args.label, args.max_prime)?;
    if !cache
        .meta(&args.label)?
        .is_some_and(|m| m.full_image_attested)
    {
        eprintln!(
            "warning: predictions assume full mod-3 image, which was not attested for {}",
            args.label
        );
    }
    let rows = curve::density_report_from_records(&records)?;
    let mut csv =
        String::from("group,category,count,total,empirical,predicted,deviation,std_error\n");
    for r in rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.group,
            r.category,
            r.count,
            r.total,
            fmt_float(r.empirical),
            fmt_float(r.predicted),
            fmt_float(r.deviation),
            fmt_float(r.std_error)
        )
        .expect("string write");
    }
    let mut report = Report::new(csv);
    report.cache_labels.push(args.label.clone());
    Ok(report)
}

#[derive(Serialize)]
struct ClassSummary {
    representative: String,
    size: usize,
    order: u32,
    det: u8,
    trace: u8,
    fixed_dim: u8,
    square_fixed_dim: u8,
}

impl From<&gl2f3::ConjClass> for ClassSummary {
    fn from(c: &gl2f3::ConjClass) -> Self {
        ClassSummary {
            representative: c.representative.to_string(),
            size: c.size,
            order: c.order,
            det: c.det,
            trace: c.trace,
            fixed_dim: c.fixed_dim,
            square_fixed_dim: c.square_fixed_dim,
        }
    }
}

fn frobclass(args: &FrobclassArgs, cache: &ClassCache) -> Result<Report, CliError> {
    let mut labels = Vec::new();
    let record = match &args.curve_file {
        Some(path) => curve::classify_prime(&find_curve(path, &args.label)?, args.p)?,
        None => {
            labels.push(args.label.clone());
            cache
                .load(&args.label, args.p)?
                .into_iter()
                .find(|r| r.p == args.p)
                .ok_or_else(|| CliError::Config(format!("{} is not a cached good prime", args.p)))?
        }
    };
    let class = curve::class_of_record(&record)?;
    #[derive(Serialize)]
    struct Out<'a> {
        label: &'a str,
        p: u64,
        record: &'a PrimeClassRecord,
        class: ClassSummary,
    }
    let mut report = Report::json(&Out {
        label: &args.label,
        p: args.p,
        record: &record,
        class: class.into(),
    });
    report.cache_labels = labels;
    Ok(report)
}

fn fan(args: &FanArgs, seed: Option<u64>, cache: &ClassCache) -> Result<Report, CliError> {
    let oracle = args.oracle.as_deref().map(load_oracle).transpose()?;
    let pred = fans::case_filter(args.case, oracle)?;
    let table = cache.table(&args.label)?;
    let mut report = if let Some(trials) = args.trials {
        let seed = require_seed(seed)?;
        let fd = fans::fan_distribution(
            &table,
            args.m,
            args.w,
            args.x,
            &args.growth,
            &pred,
            args.rho,
            trials,
            seed,
        )?;
        #[derive(Serialize)]
        struct Out {
            elements: usize,
            fan_size: f64,
            tv: f64,
            empirical: BTreeMap<usize, f64>,
            operator: BTreeMap<usize, f64>,
        }
        Report::json(&Out {
            elements: fd.elements,
            fan_size: fd.fan_size,
            tv: round12(fd.tv),
            empirical: distribution_json(&fd.empirical),
            operator: distribution_json(&fd.operator),
        })
    } else {
        let elements = if args.m <= fans::ENUMERATION_MAX_M {
            fans::enumerate_fan(&table, args.m, args.w, args.x, &args.growth, &pred)?
        } else {
            eprintln!(
                "m > {}: listing {} uniform samples",
                fans::ENUMERATION_MAX_M,
                args.samples
            );
            fans::sample_fan(
                &table,
                args.m,
                args.w,
                args.x,
                &args.growth,
                &pred,
                args.samples,
                require_seed(seed)?,
            )?
        };
        if let Some(path) = &args.emit_cubics {
            let mut csv = String::from("d,polynomial\n");
            for e in &elements {
                if !fans::cubic_is_irreducible(e.d_value) {
                    return Err(CliError::Consistency(format!(
                        "x^3 - {} is reducible",
                        e.d_value
                    )));
                }
                writeln!(csv, "{},{}", e.d_value, e.cubic_poly).expect("string write");
            }
            cache::write_atomic(path, csv.as_bytes())?;
            eprintln!(
                "wrote {} cubic representatives to {}",
                elements.len(),
                path.display()
            );
        }
        Report::json(&elements)
    };
    report.cache_labels.push(args.label.clone());
    Ok(report)
}

fn lagrangian_report(args: &LagrangianArgs) -> Result<Report, CliError> {
    let gram = match &args.gram {
        Some(path) => {
            let g = load_gram(path)?;
            if g.len() != args.dim {
                return Err(CliError::Data(format!(
                    "{} has {} rows, expected --dim {}",
                    path.display(),
                    g.len(),
                    args.dim
                )));
            }
            g
        }
        None => {
            if args.dim % 2 != 0 {
                return Err(F3Error::BadShape {
                    rows: args.dim,
                    cols: args.dim,
                }
                .into());
            }
            let mut g = vec![vec![0i64; args.dim]; args.dim];
            for k in 0..args.dim / 2 {
                g[2 * k][2 * k + 1] = 1;
                g[2 * k + 1][2 * k] = 1;
            }
            g
        }
    };
    if args.dim > f3::MAX_ENUM_DIM {
        return Err(F3Error::TooLarge(args.dim).into());
    }
    let space = QuadSpace::new(&gram, args.blocks)?;
    let all = f3::lagrangians(&space)?;
    let coordinatewise = f3::coordinatewise_lagrangians(&space)?;
    let unramified: Result<Vec<f3::Subspace>, F3Error> = (0..space.n_blocks())
        .map(|i| {
            f3::lagrangians(&space.block_space(i)?)?
                .into_iter()
                .next()
                .ok_or(F3Error::DegenerateBlock { block: i })
        })
        .collect();
    let ramified = match unramified {
        Ok(u) => Some(f3::ramified_coordinatewise(&space, &u)?.len()),
        Err(_) => None,
    };

    #[derive(Serialize)]
    struct Out {
        dim: usize,
        blocks: usize,
        hyperbolic: bool,
        lagrangians: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        closed_form: Option<u128>,
        coordinatewise: usize,
        /// `null` when some block has no Lagrangian to designate.
        ramified_coordinatewise: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        bases: Option<Vec<Vec<String>>>,
    }
    let hyperbolic = args.gram.is_none();
    let bases = args.list.then(|| {
        all.iter()
            .map(|w| w.basis().iter().map(|v| v.to_string()).collect())
            .collect()
    });
    Ok(Report::json(&Out {
        dim: args.dim,
        blocks: args.blocks,
        hyperbolic,
        lagrangians: all.len(),
        closed_form: hyperbolic.then(|| f3::hyperbolic_lagrangian_count((args.dim / 2) as u32)),
        coordinatewise: coordinatewise.len(),
        ramified_coordinatewise: ramified,
        bases,
    }))
}

fn gl2f3_report() -> Result<Report, CliError> {
    #[derive(Serialize)]
    struct CosetRow {
        order: u32,
        fixed_dim: u8,
        count: usize,
    }
    #[derive(Serialize)]
    struct DensityRow {
        det: u8,
        fixed_dim: u8,
        density: String,
        value: f64,
    }
    #[derive(Serialize)]
    struct Out {
        order: usize,
        classes: Vec<ClassSummary>,
        det_cosets: BTreeMap<u8, Vec<CosetRow>>,
        fixed_dim_densities: Vec<DensityRow>,
        sl2_has_index2_normal_subgroup: bool,
        psl2_order: usize,
    }
    let mut det_cosets = BTreeMap::new();
    let mut densities = Vec::new();
    for det in [1u8, 2] {
        let stats =
            gl2f3::det_coset_stats(det).map_err(|e| CliError::Consistency(e.to_string()))?;
        det_cosets.insert(
            det,
            stats
                .into_iter()
                .map(|((order, fixed_dim), count)| CosetRow {
                    order,
                    fixed_dim,
                    count,
                })
                .collect(),
        );
        for i in 0..=2u8 {
            let r = gl2f3::fixed_dim_density(det, i)
                .map_err(|e| CliError::Consistency(e.to_string()))?;
            densities.push(DensityRow {
                det,
                fixed_dim: i,
                density: r.to_string(),
                value: round12(*r.numer() as f64 / *r.denom() as f64),
            });
        }
    }
    Ok(Report::json(&Out {
        order: gl2f3::enumerate_group().len(),
        classes: gl2f3::conjugacy_classes()
            .iter()
            .map(ClassSummary::from)
            .collect(),
        det_cosets,
        fixed_dim_densities: densities,
        sl2_has_index2_normal_subgroup: !gl2f3::sl2_no_index2_normal(),
        psl2_order: gl2f3::psl2_order(),
    }))
}

/// Runs the parsed command and returns its report without writing it.
pub fn dispatch(cli: &Cli, cache: &ClassCache) -> Result<Report, CliError> {
    match &cli.command {
        Command::Stationary(a) => stationary(a),
        Command::Evolve(a) => evolve(a),
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Tailbound(a) => tailbound(a),
        Command::Classify(a) => classify(a, cache),
        Command::Densities(a) => densities(a, cache),
        Command::Frobclass(a) => frobclass(a, cache),
        Command::Fan(a) => fan(a, cli.seed, cache),
        Command::Lagrangians(a) => lagrangian_report(a),
        Command::Gl2f3Report => gl2f3_report(),
    }
}

fn metadata(cli: &Cli, report: &Report, cache: &ClassCache) -> Result<Vec<u8>, CliError> {
    let mut checksums = BTreeMap::new();
    for label in &report.cache_labels {
        if let Some(sum) = cache.checksum(label)? {
            checksums.insert(label.clone(), sum);
        }
    }
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let meta = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix": timestamp,
        "config": cli,
        "cache_dir": cache.dir(),
        "cache_sha256": checksums,
        "payload_sha256": cache::sha256_hex(&report.payload),
    });
    let mut bytes = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
    bytes.push(b'\n');
    Ok(bytes)
}

/// Parses, runs and emits; returns the process exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cache = ClassCache::from_env();
    let report = match cli.jobs {
        Some(0) => return Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| dispatch(&cli, &cache))?,
        None => dispatch(&cli, &cache)?,
    };
    match &cli.out {
        Some(path) => {
            cache::write_atomic(path, &report.payload)?;
            let mut meta_path = path.clone().into_os_string();
            meta_path.push(".meta.json");
            cache::write_atomic(Path::new(&meta_path), &metadata(&cli, &report, &cache)?)?;
        }
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(&report.payload)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Data(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

/// Entry point for the binary: parses `args`, prints errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("s3selmer: {e}");
            e.exit_code()
        }
    }
}
