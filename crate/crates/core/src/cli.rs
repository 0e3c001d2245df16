//! Batch front-end: parses a run configuration, executes the cases and
//! writes `results.jsonl`, `summary.csv` and per-sweep CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{self, Objective, ParametricFamily};
use crate::functions::{self, TestFunction};
use crate::geometry::{Domain, GraphDomain, GraphProfile, Polygon2D};
use crate::hardy::{self, HardyCase, IntermediateOptions, LhsOptions, SeriesOptions, SeriesVerdict, VerificationReport};
use crate::logweights::{Tail, WeightChain};
use crate::seminorms::{self, McOptions, Order, SeminormOptions};

#[derive(Parser, Debug)]
#[command(name = "hardylab", version, about = "Numerical checks of boundary Hardy inequalities with iterated-logarithm weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate a weight chain on (0, R].
    #[command(args_override_self = true)]
    Weights(WeightsArgs),
    /// Measure the BV Hardy constant over a range of m.
    #[command(args_override_self = true)]
    VerifyMain(VerifyMainArgs),
    /// Measure the fractional Hardy constant over a list of s.
    #[command(args_override_self = true)]
    VerifyFrac(VerifyFracArgs),
    /// Sum the alpha-weighted series over m.
    #[command(args_override_self = true)]
    Series(SeriesArgs),
    /// Track (1-s)[u]_{W^{s,1}} as s approaches 1.
    #[command(args_override_self = true)]
    Bbm(BbmArgs),
    /// Run the divergence witnesses.
    #[command(args_override_self = true)]
    Counterexample(CounterexampleArgs),
    /// Search a parametric family for large ratios.
    #[command(args_override_self = true)]
    Extremal(ExtremalArgs),
    /// Rebuild summary.csv and sweep CSVs from results.jsonl.
    #[command(args_override_self = true)]
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, env = "HARDYLAB_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads; output order does not depend on it.
    #[arg(long, default_value_t = 1, value_parser = parse_jobs)]
    jobs: usize,
    /// File of `key = value` lines, one per flag; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Relative quadrature tolerance.
    #[arg(long, value_parser = parse_positive)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct WeightsArgs {
    #[arg(long, default_value = "3", value_parser = parse_ms)]
    m: ::std::vec::Vec<u32>,
    #[arg(long = "R", default_value = "e", value_parser = parse_r)]
    r: f64,
    #[arg(long, default_value = "square", value_parser = parse_tail)]
    tail: Tail,
    #[arg(long, default_value_t = 100, value_parser = parse_jobs)]
    grid: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct VerifyMainArgs {
    #[arg(long, default_value = "interval:D=1", value_parser = parse_domain)]
    domain: Domain,
    #[arg(long = "fn", default_value = "bump")]
    function: String,
    #[arg(long, default_value = "2..8", value_parser = parse_ms)]
    m: ::std::vec::Vec<u32>,
    #[arg(long = "R", default_value = "e", value_parser = parse_r)]
    r: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct VerifyFracArgs {
    #[arg(long, default_value = "interval:D=1", value_parser = parse_domain)]
    domain: Domain,
    #[arg(long = "fn", default_value = "bump")]
    function: String,
    #[arg(long, default_value = "0.5,0.7,0.9", value_parser = parse_list)]
    s: ::std::vec::Vec<f64>,
    #[arg(long, default_value = "2", value_parser = parse_ms)]
    m: ::std::vec::Vec<u32>,
    #[arg(long = "R", default_value = "e", value_parser = parse_r)]
    r: f64,
    /// Monte Carlo pairs for two-dimensional seminorms.
    #[arg(long, default_value_t = 1_000_000)]
    budget: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SeriesArgs {
    #[arg(long, default_value = "interval:D=1", value_parser = parse_domain)]
    domain: Domain,
    #[arg(long = "fn", default_value = "tensor")]
    function: String,
    #[arg(long, default_value = "0.4", value_parser = parse_list)]
    alpha: ::std::vec::Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    mmax: u32,
    #[arg(long = "R", default_value = "e", value_parser = parse_r)]
    r: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct BbmArgs {
    #[arg(long, default_value = "interval:D=0.5", value_parser = parse_domain)]
    domain: Domain,
    #[arg(long = "fn", default_value = "linear")]
    function: String,
    #[arg(long, default_value = "0.9,0.95,0.99", value_parser = parse_list)]
    s: ::std::vec::Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    budget: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct CounterexampleArgs {
    /// Domain carrying the boundary plateau.
    #[arg(long, default_value = "interval:D=1", value_parser = parse_domain)]
    domain: Domain,
    #[arg(long, default_value = "1.0", value_parser = parse_list)]
    alpha: ::std::vec::Vec<f64>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    beta: f64,
    #[arg(long, default_value = "1", value_parser = parse_ms)]
    m: ::std::vec::Vec<u32>,
    #[arg(long = "R", default_value = "e", value_parser = parse_r)]
    r: f64,
    #[arg(long, default_value_t = 10_000)]
    mmax: u32,
    /// Collar cutoffs for the plateau sweep.
    #[arg(long, default_value = "1e-2,1e-3,1e-4", value_parser = parse_list)]
    eps: ::std::vec::Vec<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ExtremalArgs {
    #[arg(long, default_value = "interval:D=1", value_parser = parse_domain)]
    domain: Domain,
    /// `bump` or `spline`.
    #[arg(long, default_value = "bump")]
    family: String,
    /// Bumps in the mixture, or spline knots.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value = "2", value_parser = parse_ms)]
    m: ::std::vec::Vec<u32>,
    /// Fractional order; the BV objective when absent.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long = "R", default_value = "e", value_parser = parse_r)]
    r: f64,
    #[arg(long, default_value_t = 500)]
    budget: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding results.jsonl.
    #[arg(long, default_value = "out")]
    from: PathBuf,
    /// Destination; defaults to the source directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_jobs(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("expected a positive integer, got `{s}`")),
    }
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn parse_r(s: &str) -> std::result::Result<f64, String> {
    if s == "e" {
        return Ok(std::f64::consts::E);
    }
    parse_positive(s)
}

/// `N` or the inclusive range `a..b`.
fn parse_ms(s: &str) -> std::result::Result<Vec<u32>, String> {
    let int = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("expected an integer, got `{t}`"));
    let ms = match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (int(a)?, int(b)?);
            if a > b {
                return Err(format!("empty range {s}"));
            }
            (a..=b).collect()
        }
        None => vec![int(s)?],
    };
    if ms.contains(&0) {
        return Err("m must be at least 1".into());
    }
    Ok(ms)
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let v = t.trim().parse::<f64>().map_err(|_| format!("expected a number, got `{t}`"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite value `{t}`"))
            }
        })
        .collect()
}

fn parse_tail(s: &str) -> std::result::Result<Tail, String> {
    let (name, beta) = match s.split_once(':') {
        Some((n, b)) => (n, Some(parse_positive(b)?)),
        None => (s, None),
    };
    match (name, beta) {
        ("square", None) => Ok(Tail::Square),
        ("power", Some(beta)) => Ok(Tail::Power { beta }),
        ("rho", Some(beta)) => Ok(Tail::RhoStar { beta }),
        _ => Err(format!("expected square, power:BETA or rho:BETA, got `{s}`")),
    }
}

/// `key=value,...` with every key drawn from `allowed`.
fn parse_params(s: &str, allowed: &[&str]) -> std::result::Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for item in s.split(',').filter(|t| !t.trim().is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| format!("expected key=value, got `{item}`"))?;
        let k = k.trim();
        if !allowed.contains(&k) {
            return Err(format!("unknown parameter `{k}`; expected one of {}", allowed.join(", ")));
        }
        let v = v.trim().parse::<f64>().map_err(|_| format!("bad number for `{k}`: `{v}`"))?;
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

fn split_spec(s: &str) -> (&str, &str) {
    s.split_once(':').unwrap_or((s, ""))
}

/// `interval[:D=..]`, `box[:d=..,n=..,h=..]`, `square`,
/// `polygon:x y;x y;...` or `graph:PROFILE[:M=..,w=..,h=..]`.
fn parse_domain(s: &str) -> std::result::Result<Domain, String> {
    let (kind, rest) = split_spec(s);
    let domain = match kind {
        "interval" => {
            let p = parse_params(rest, &["D"])?;
            Domain::interval(p.get("D").copied().unwrap_or(1.0))
        }
        "box" => {
            let p = parse_params(rest, &["d", "n", "h"])?;
            let d = p.get("d").copied().unwrap_or(2.0);
            let n = p.get("n").copied().unwrap_or(1.0);
            if d.fract() != 0.0 || n.fract() != 0.0 || d < 1.0 || n < 1.0 {
                return Err("box needs integer d >= 1 and n >= 1".into());
            }
            Domain::axis_box(d as usize, n as u32, p.get("h").copied().unwrap_or(2.0))
        }
        "square" | "unit-square" if rest.is_empty() => Ok(Domain::unit_square()),
        "polygon" => {
            let vertices = rest
                .split(';')
                .map(|pt| {
                    let c: Vec<f64> = pt.split_whitespace().map(|v| v.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| format!("bad vertex `{pt}`"))?;
                    match c[..] {
                        [x, y] => Ok([x, y]),
                        _ => Err(format!("vertex `{pt}` needs two coordinates")),
                    }
                })
                .collect::<std::result::Result<Vec<_>, String>>()?;
            Polygon2D::new(vertices).map(Domain::Polygon)
        }
        "graph" => {
            let (profile, rest) = split_spec(rest);
            let p = parse_params(rest, &["M", "w", "h", "f"])?;
            let m = p.get("M").copied().unwrap_or(1.0);
            let profile = match profile {
                "zero" => GraphProfile::Zero,
                "abs" => GraphProfile::Abs { slope: m },
                "linear" => GraphProfile::Linear { slope: m },
                "sine" => {
                    let f = p.get("f").copied().unwrap_or(1.0);
                    GraphProfile::Sine {
                        amplitude: m / f,
                        frequency: f,
                    }
                }
                other => return Err(format!("unknown graph profile `{other}`")),
            };
            let w = p.get("w").copied().unwrap_or(1.0);
            GraphDomain::new(profile, m, [-w, w], p.get("h").copied().unwrap_or(1.0)).map(Domain::Graph)
        }
        other => return Err(format!("unknown domain kind `{other}`")),
    };
    domain.map_err(|e| e.to_string())
}

/// Named test functions for `--fn` on `domain`.
fn resolve_functions(spec: &str, domain: &Domain) -> Result<Vec<(String, TestFunction)>> {
    let bad = |m: String| Error::config("fn", m);
    let (kind, rest) = split_spec(spec);
    let bbox = domain.bounding_box();
    let one_d = domain.dim() == 1;
    let u = match kind {
        "battery" => {
            return match domain {
                Domain::Interval { half_length } => functions::battery_1d(*half_length),
                _ if domain.as_box() == Some(crate::geometry::Region::rect([0.0, 0.0], [1.0, 1.0])) => functions::battery_2d(),
                _ => Err(bad(format!("no battery for {domain}"))),
            };
        }
        "linear" => {
            parse_params(rest, &[]).map_err(bad)?;
            if one_d {
                TestFunction::linear()
            } else {
                TestFunction::linear_with(1.0, 0.0, 0)
            }
        }
        "constant" => {
            let p = parse_params(rest, &["v"]).map_err(bad)?;
            TestFunction::constant(p.get("v").copied().unwrap_or(1.0))
        }
        "bump" => {
            let p = parse_params(rest, &["c", "cx", "cy", "r", "a"]).map_err(bad)?;
            let mid: Vec<f64> = bbox.lo.iter().zip(&bbox.hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let side = bbox.lo.iter().zip(&bbox.hi).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
            let center = if one_d {
                vec![p.get("c").copied().unwrap_or(mid[0])]
            } else {
                let mut c = mid.clone();
                c[0] = p.get("cx").copied().unwrap_or(c[0]);
                c[1] = p.get("cy").copied().unwrap_or(c[1]);
                c
            };
            let radius = p.get("r").copied().unwrap_or(if one_d { 0.25 * side } else { 0.3 * side });
            TestFunction::bump(center, radius, p.get("a").copied().unwrap_or(1.0))?
        }
        "step" => {
            let p = parse_params(rest, &["at", "h"]).map_err(bad)?;
            let at = p.get("at").copied().unwrap_or(0.5 * (bbox.lo[0] + bbox.hi[0]));
            TestFunction::step(
                0.0,
                vec![functions::Jump {
                    at,
                    height: p.get("h").copied().unwrap_or(1.0),
                }],
            )?
        }
        "plateau" => {
            let p = parse_params(rest, &["level", "collar", "band"]).map_err(bad)?;
            let scale = domain.max_distance_bound();
            TestFunction::plateau(
                p.get("level").copied().unwrap_or(1.0),
                p.get("collar").copied().unwrap_or(0.1 * scale),
                p.get("band").copied().unwrap_or(0.2 * scale),
                domain.clone(),
            )?
        }
        "tensor" => {
            let p = parse_params(rest, &["n"]).map_err(bad)?;
            let n = p.get("n").copied().unwrap_or(1.0);
            TestFunction::tensor_profile(0.5 * (bbox.lo[0] + bbox.hi[0]), 0.5 * n, 1.0)?
        }
        name => {
            let all = match domain {
                Domain::Interval { half_length } => functions::battery_1d(*half_length)?,
                _ => functions::battery_2d()?,
            };
            return match all.into_iter().find(|(n, _)| n == name) {
                Some((n, u)) => {
                    u.check_domain(domain)?;
                    Ok(vec![(n, u)])
                }
                None => Err(bad(format!("unknown function `{name}`"))),
            };
        }
    };
    u.check_domain(domain).map_err(|e| bad(e.to_string()))?;
    Ok(vec![(kind.to_string(), u)])
}

/// A CSV cell that keeps integers and text distinct from floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => fmt_f64(*x),
            Cell::Text(s) => csv_field(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// Rows contributed by one record to `<command>-<variable>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRows {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub command: String,
    pub case_id: String,
    pub m: Option<u32>,
    pub s: Option<Order>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lhs: Option<f64>,
    pub rhs: BTreeMap<String, f64>,
    pub measured_constant: Option<f64>,
    pub verdict: String,
    pub sweep: Option<SweepRows>,
    pub detail: serde_json::Value,
}

impl Record {
    fn new(command: &str, case_id: String, verdict: &str) -> Self {
        Self {
            command: command.into(),
            case_id,
            m: None,
            s: None,
            alpha: None,
            beta: None,
            lhs: None,
            rhs: BTreeMap::new(),
            measured_constant: None,
            verdict: verdict.into(),
            sweep: None,
            detail: serde_json::Value::Null,
        }
    }

    fn from_report(command: &str, case_id: String, r: &VerificationReport) -> Result<Self> {
        Ok(Self {
            m: Some(r.m),
            s: Some(r.s),
            alpha: r.alpha,
            beta: r.beta,
            lhs: Some(r.lhs),
            rhs: r.rhs_components.clone(),
            measured_constant: Some(r.measured_constant),
            detail: serde_json::to_value(r)?,
            ..Self::new(command, case_id, if r.pass { "pass" } else { "fail" })
        })
    }

    fn sweep(mut self, file: &str, columns: &[&str], rows: Vec<Vec<Cell>>) -> Self {
        self.sweep = Some(SweepRows {
            file: file.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        });
        self
    }

    fn check_finite(&self) -> Result<()> {
        let mut values: Vec<f64> = [self.alpha, self.beta, self.lhs, self.measured_constant].into_iter().flatten().collect();
        values.extend(self.rhs.values());
        if let Some(Order::Fractional(s)) = self.s {
            values.push(s);
        }
        if let Some(sw) = &self.sweep {
            for row in &sw.rows {
                values.extend(row.iter().filter_map(|c| match c {
                    Cell::Num(x) => Some(*x),
                    _ => None,
                }));
            }
        }
        if values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("case {}", self.case_id)))
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const SUMMARY_COLUMNS: &str = "case_id,command,m,s,alpha,beta,lhs,rhs_terms,measured_constant,verdict";

/// `summary.csv` contents for `records`.
pub fn render_summary(records: &[Record]) -> String {
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let mut out = String::from(SUMMARY_COLUMNS);
    out.push('\n');
    for r in records {
        let s = match r.s {
            Some(Order::Bv) => "BV".to_string(),
            Some(Order::Fractional(s)) => fmt_f64(s),
            None => String::new(),
        };
        let rhs: Vec<String> = r.rhs.iter().map(|(k, v)| format!("{k}={}", fmt_f64(*v))).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.case_id),
            r.command,
            r.m.map(|m| m.to_string()).unwrap_or_default(),
            s,
            opt(r.alpha),
            opt(r.beta),
            opt(r.lhs),
            csv_field(&rhs.join(";")),
            opt(r.measured_constant),
            r.verdict
        );
    }
    out
}

/// Sweep CSV files keyed by name, rows in record order.
pub fn render_sweeps(records: &[Record]) -> Result<BTreeMap<String, String>> {
    let mut files: BTreeMap<String, (Vec<String>, String)> = BTreeMap::new();
    for sw in records.iter().filter_map(|r| r.sweep.as_ref()) {
        let (columns, body) = files.entry(sw.file.clone()).or_insert_with(|| (sw.columns.clone(), String::new()));
        if *columns != sw.columns {
            return Err(Error::Io(format!("inconsistent columns for {}", sw.file)));
        }
        for row in &sw.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
    }
    Ok(files
        .into_iter()
        .map(|(name, (columns, body))| (name, format!("{}\n{body}", columns.join(","))))
        .collect())
}

fn write_tables(dir: &Path, records: &[Record]) -> Result<()> {
    fs::write(dir.join("summary.csv"), render_summary(records))?;
    for (name, text) in render_sweeps(records)? {
        fs::write(dir.join(name), text)?;
    }
    Ok(())
}

fn write_outputs(dir: &Path, records: &[Record]) -> Result<()> {
    for r in records {
        r.check_finite()?;
    }
    fs::create_dir_all(dir)?;
    let mut jsonl = String::new();
    for r in records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    fs::write(dir.join("results.jsonl"), jsonl)?;
    write_tables(dir, records)
}

/// Reads `results.jsonl` from `dir`.
pub fn read_records(dir: &Path) -> Result<Vec<Record>> {
    let path = dir.join("results.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Records plus the run's status flags.
#[derive(Default)]
struct Outcome {
    records: Vec<Record>,
    failed: bool,
    divergence: bool,
}

impl Outcome {
    fn push(&mut self, r: Record) {
        self.failed |= r.verdict == "fail" || r.verdict == "inconclusive";
        self.records.push(r);
    }
}

fn lhs_options(tol: Option<f64>) -> LhsOptions {
    let mut o = LhsOptions::default();
    if let Some(t) = tol {
        o.quad.rel_tol = t;
    }
    o
}

fn seminorm_options(common: &Common, budget: usize) -> SeminormOptions {
    let mut o = SeminormOptions::default();
    if let Some(t) = common.tol {
        o.quad.rel_tol = t;
    }
    o.mc = McOptions {
        budget,
        seed: common.seed,
        workers: common.jobs,
    };
    o
}

/// Attaches the case id to a failure.
fn in_case<T>(id: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} (case {id})")),
        other => {
            eprintln!("case {id} failed");
            other
        }
    })
}

fn weights(a: &WeightsArgs) -> Result<Outcome> {
    let mut out = Outcome::default();
    for &m in &a.m {
        let chain = WeightChain::new(m, a.r, a.tail).map_err(|e| Error::config("m", e.to_string()))?;
        let id = format!("weights/m={m}/{}", a.tail.label());
        let rows = (1..=a.grid)
            .map(|i| {
                let t = a.r * i as f64 / a.grid as f64;
                Ok(vec![Cell::from(m), t.into(), chain.eval(t)?.into()])
            })
            .collect::<Result<Vec<_>>>();
        let rows = in_case(&id, rows)?;
        let mut rec = Record::new("weights", id, "reported");
        rec.m = Some(m);
        rec.beta = match a.tail {
            Tail::Square => None,
            t => Some(t.beta()),
        };
        rec.detail = serde_json::to_value(chain)?;
        out.push(rec.sweep("weights-t.csv", &["m", "t", "value"], rows));
    }
    Ok(out)
}

fn verify_main(a: &VerifyMainArgs) -> Result<Outcome> {
    let fns = resolve_functions(&a.function, &a.domain)?;
    if let Some(m) = a.m.iter().find(|m| **m < 2) {
        return Err(Error::config("m", format!("m = {m} below 2")));
    }
    let opts = lhs_options(a.common.tol);
    let cases: Vec<(usize, u32)> = (0..fns.len()).flat_map(|i| a.m.iter().map(move |&m| (i, m))).collect();
    let reports = cases
        .par_iter()
        .map(|&(i, m)| {
            let id = format!("verify-main/{}@{}/m={m}", fns[i].0, a.domain);
            in_case(&id, hardy::verify_main_with(&fns[i].1, &a.domain, m, a.r, &opts))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    for (fi, (name, _)) in fns.iter().enumerate() {
        let mine: Vec<&VerificationReport> = cases.iter().zip(&reports).filter(|((i, _), _)| *i == fi).map(|(_, r)| r).collect();
        for r in &mine {
            let id = format!("verify-main/{name}@{}/m={}", a.domain, r.m);
            let row = vec![
                Cell::from(name.as_str()),
                r.m.into(),
                r.lhs.into(),
                r.rhs_components["tv"].into(),
                r.measured_constant.into(),
            ];
            let rec = Record::from_report("verify-main", id, r)?.sweep(
                "verify-main-m.csv",
                &["function", "m", "lhs", "tv", "measured_constant"],
                vec![row],
            );
            out.push(rec);
        }
        let ms: Vec<f64> = mine.iter().map(|r| r.m as f64).collect();
        let cs: Vec<f64> = mine.iter().map(|r| r.measured_constant).collect();
        let bound = cs.iter().copied().fold(0.0, f64::max);
        let trend = hardy::spearman(&ms, &cs);
        let pass = mine.iter().all(|r| r.pass) && bound.is_finite() && trend <= 0.0;
        let mut rec = Record::new("verify-main", format!("verify-main/{name}@{}/sweep", a.domain), if pass { "pass" } else { "fail" });
        rec.s = Some(Order::Bv);
        rec.measured_constant = Some(bound);
        rec.rhs.insert("trend".into(), trend);
        out.push(rec);
    }
    Ok(out)
}

fn verify_frac(a: &VerifyFracArgs) -> Result<Outcome> {
    let fns = resolve_functions(&a.function, &a.domain)?;
    if let Some(s) = a.s.iter().find(|s| !(0.5..1.0).contains(*s)) {
        return Err(Error::config("s", format!("s = {s} outside [1/2, 1)")));
    }
    if let Some(m) = a.m.iter().find(|m| **m < 2) {
        return Err(Error::config("m", format!("m = {m} below 2")));
    }
    let mut opts = IntermediateOptions {
        lhs: lhs_options(a.common.tol),
        seminorm: seminorm_options(&a.common, a.budget),
        c1_poin: None,
    };
    if matches!(a.domain, Domain::Interval { .. }) {
        let reference: Vec<TestFunction> = functions::battery_1d(0.5)?.into_iter().map(|(_, u)| u).collect();
        opts.c1_poin = Some(in_case("verify-frac/c1_poin", hardy::measure_c1_poin(&reference, &a.s, &opts.seminorm))?);
    }
    let cases: Vec<(usize, f64, u32)> = (0..fns.len())
        .flat_map(|i| a.s.iter().flat_map(move |&s| a.m.iter().map(move |&m| (i, s, m))))
        .collect();
    let id = |&(i, s, m): &(usize, f64, u32)| format!("verify-frac/{}@{}/s={s}/m={m}", fns[i].0, a.domain);
    let reports = cases
        .par_iter()
        .map(|c| in_case(&id(c), hardy::verify_intermediate(&fns[c.0].1, &a.domain, c.1, c.2, a.r, &opts)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    for (c, r) in cases.iter().zip(&reports) {
        let row = vec![
            Cell::from(fns[c.0].0.as_str()),
            c.1.into(),
            c.2.into(),
            r.lhs.into(),
            r.rhs_components["seminorm_term"].into(),
            r.rhs_components["l1_term"].into(),
            r.measured_constant.into(),
        ];
        out.push(Record::from_report("verify-frac", id(c), r)?.sweep(
            "verify-frac-s.csv",
            &["function", "s", "m", "lhs", "seminorm_term", "l1_term", "measured_constant"],
            vec![row],
        ));
    }
    Ok(out)
}

fn series(a: &SeriesArgs) -> Result<Outcome> {
    let (kind, rest) = split_spec(&a.function);
    let tensor = kind == "tensor";
    let cases: Vec<(String, HardyCase)> = if tensor {
        let p = parse_params(rest, &["n"]).map_err(|e| Error::config("fn", e))?;
        let n = p.get("n").copied().unwrap_or(1.0);
        if n.fract() != 0.0 || n < 1.0 {
            return Err(Error::config("fn", "tensor needs an integer n >= 1"));
        }
        vec![("tensor".into(), hardy::counterexample_case(n as u32, 2, a.r).map_err(|e| Error::config("R", e.to_string()))?)]
    } else {
        resolve_functions(&a.function, &a.domain)?
            .into_iter()
            .map(|(name, u)| {
                let chain = WeightChain::square(2, a.r)?;
                Ok((name, HardyCase::new(u, a.domain.clone(), chain, Order::Bv).map_err(|e| Error::config("R", e.to_string()))?))
            })
            .collect::<Result<_>>()?
    };
    if let Some(al) = a.alpha.iter().find(|al| !(**al > 0.0)) {
        return Err(Error::config("alpha", format!("alpha = {al} must be positive")));
    }
    let opts = SeriesOptions {
        lhs: lhs_options(a.common.tol),
        ..Default::default()
    };
    let jobs: Vec<(usize, f64)> = (0..cases.len()).flat_map(|i| a.alpha.iter().map(move |&al| (i, al))).collect();
    let id = |&(i, al): &(usize, f64)| format!("series/{}@{}/alpha={al}", cases[i].0, cases[i].1.domain);
    let results = jobs
        .par_iter()
        .map(|j| in_case(&id(j), hardy::series_sum(&cases[j.0].1, j.1, a.mmax, &opts)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    for (j, res) in jobs.iter().zip(&results) {
        let tv = cases[j.0].1.total_variation()?;
        let (verdict, total) = match res.verdict {
            SeriesVerdict::Converged { total, .. } => {
                let ok = res.bound.is_none_or(|b| total <= b * (1.0 + 1e-9));
                (if ok { "converged" } else { "fail" }, Some(total))
            }
            SeriesVerdict::DivergenceWitness { partial, .. } => {
                if !tensor {
                    out.divergence = true;
                }
                ("witness", Some(partial))
            }
            SeriesVerdict::Inconclusive { partial, .. } => ("inconclusive", Some(partial)),
        };
        let mut rec = Record::new("series", id(j), verdict);
        rec.s = Some(Order::Bv);
        rec.alpha = Some(j.1);
        rec.lhs = total;
        rec.measured_constant = Some(res.measured_constant);
        rec.rhs.insert("tv".into(), tv);
        if let Some(b) = res.bound {
            rec.rhs.insert("bound".into(), b);
        }
        rec.detail = serde_json::to_value(res)?;
        let name = cases[j.0].0.as_str();
        let rows = res
            .terms
            .iter()
            .map(|t| vec![Cell::from(name), j.1.into(), t.m.into(), t.lhs.into(), t.term.into(), t.partial.into()])
            .collect();
        out.push(rec.sweep("series-m.csv", &["function", "alpha", "m", "lhs", "term", "partial"], rows));
    }
    Ok(out)
}

fn bbm(a: &BbmArgs) -> Result<Outcome> {
    let fns = resolve_functions(&a.function, &a.domain)?;
    if let Some(s) = a.s.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(Error::config("s", format!("s = {s} outside (0, 1)")));
    }
    let opts = seminorm_options(&a.common, a.budget);
    let c = seminorms::bbm_constant(a.domain.dim() as u32)?;
    let cases: Vec<(usize, f64)> = (0..fns.len()).flat_map(|i| a.s.iter().map(move |&s| (i, s))).collect();
    let id = |&(i, s): &(usize, f64)| format!("bbm/{}@{}/s={s}", fns[i].0, a.domain);
    let values = cases
        .par_iter()
        .map(|k| in_case(&id(k), seminorms::gagliardo(&fns[k.0].1, &a.domain, k.1, &opts)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    for (k, est) in cases.iter().zip(&values) {
        let tv = in_case(&id(k), functions::tv_seminorm(&fns[k.0].1, &a.domain))?;
        let scaled = (1.0 - k.1) * est.value;
        let target = c * tv;
        let ratio = if target > 0.0 { scaled / target } else { 0.0 };
        let mut rec = Record::new("bbm", id(k), "reported");
        rec.s = Some(Order::Fractional(k.1));
        rec.lhs = Some(scaled);
        rec.rhs = BTreeMap::from([("bbm_target".to_string(), target), ("std_error".to_string(), (1.0 - k.1) * est.std_error)]);
        rec.measured_constant = Some(ratio);
        rec.detail = serde_json::to_value(est)?;
        let row = vec![Cell::from(fns[k.0].0.as_str()), k.1.into(), scaled.into(), target.into(), ratio.into()];
        out.push(rec.sweep("bbm-s.csv", &["function", "s", "scaled_seminorm", "target", "ratio"], vec![row]));
    }
    Ok(out)
}

fn counterexample(a: &CounterexampleArgs) -> Result<Outcome> {
    let mut out = Outcome::default();
    let series = series(&SeriesArgs {
        domain: a.domain.clone(),
        function: "tensor".into(),
        alpha: a.alpha.clone(),
        mmax: a.mmax,
        r: a.r,
        common: a.common.clone(),
    })?;
    for mut r in series.records {
        r.command = "counterexample".into();
        if r.alpha.is_some_and(|al| al >= 1.0) && r.verdict != "witness" {
            r.verdict = "fail".into();
        }
        out.push(r);
    }

    let opts = lhs_options(a.common.tol);
    for m in 2..=6 {
        let id = format!("counterexample/tensor/closed-form/m={m}");
        let case = in_case(&id, hardy::counterexample_case(1, m, a.r))?;
        let quad = in_case(&id, hardy::weighted_lhs_with(&case, &opts))?;
        let closed = hardy::tensor_closed_form(&case).ok_or_else(|| Error::NonFinite(format!("case {id}")))?;
        let rel = ((quad - closed) / closed).abs();
        let mut rec = Record::new("counterexample", id, if rel < 1e-4 { "pass" } else { "fail" });
        rec.m = Some(m);
        rec.s = Some(Order::Bv);
        rec.lhs = Some(quad);
        rec.rhs = BTreeMap::from([("closed_form".to_string(), closed), ("relative_error".to_string(), rel)]);
        let row = vec![Cell::from(m), quad.into(), closed.into(), rel.into()];
        out.push(rec.sweep("counterexample-m.csv", &["m", "quadrature", "closed_form", "relative_error"], vec![row]));
    }

    let plateau = resolve_functions("plateau", &a.domain)?.remove(0).1;
    for &m in &a.m {
        let id = format!("counterexample/plateau@{}/power/m={m}/beta={}", a.domain, a.beta);
        let r = in_case(&id, hardy::corollary_beta_verify(&plateau, &a.domain, m, a.r, a.beta, &opts))?;
        out.push(Record::from_report("counterexample", id, &r)?);
        let id = format!("counterexample/plateau@{}/rho/m={m}/beta={}", a.domain, a.beta);
        let r = in_case(&id, hardy::corollary_rho_verify(&plateau, &a.domain, m, a.r, a.beta, &opts))?;
        out.push(Record::from_report("counterexample", id, &r)?);
        let id = format!("counterexample/plateau@{}/cutoff/m={m}/beta={}", a.domain, a.beta);
        let chain = WeightChain::failure_regime(m, a.r, Tail::Power { beta: a.beta })?;
        let case = in_case(&id, HardyCase::new(plateau.clone(), a.domain.clone(), chain, Order::Bv))?;
        let tv = case.total_variation()?;
        let sweep = in_case(&id, hardy::cutoff_sweep(&case, &a.eps, &opts))?;
        let mut rec = Record::new("counterexample", id, "reported");
        rec.m = Some(m);
        rec.s = Some(Order::Bv);
        rec.beta = Some(a.beta);
        rec.rhs.insert("tv".into(), tv);
        if let (Some(first), Some(last)) = (sweep.first(), sweep.last()) {
            rec.lhs = Some(last.1);
            rec.rhs.insert("growth".into(), last.1 / first.1);
        }
        let rows = sweep.iter().map(|&(eta, lhs)| vec![Cell::from(m), eta.into(), lhs.into(), tv.into()]).collect();
        out.push(rec.sweep("counterexample-eps.csv", &["m", "eta", "lhs", "tv"], rows));
    }
    Ok(out)
}

fn extremal(a: &ExtremalArgs) -> Result<Outcome> {
    let family = match a.family.as_str() {
        "bump" => ParametricFamily::bump_mixture(a.k, a.domain.clone()),
        "spline" => ParametricFamily::spline_profile(a.k, a.domain.clone()),
        other => return Err(Error::config("family", format!("expected bump or spline, got `{other}`"))),
    }
    .map_err(|e| Error::config("k", e.to_string()))?;
    if let Some(s) = a.s {
        if !(0.5..1.0).contains(&s) {
            return Err(Error::config("s", format!("s = {s} outside [1/2, 1)")));
        }
    }
    let mut out = Outcome::default();
    for &m in &a.m {
        let objective = match a.s {
            Some(s) => Objective::Intermediate { s, m, r: a.r },
            None => Objective::Main { m, r: a.r },
        };
        let id = format!("extremal/{}{}@{}/m={m}", a.family, a.k, a.domain);
        let res = in_case(&id, extremal::maximize_ratio(&family, objective, a.budget, a.restarts, a.common.seed))?;
        let normalized = res.best_ratio / 2f64.powi(m as i32);
        let mut rec = Record::new("extremal", id, "reported");
        rec.m = Some(m);
        rec.s = Some(a.s.map_or(Order::Bv, Order::Fractional));
        rec.measured_constant = Some(res.best_ratio);
        rec.rhs = BTreeMap::from([
            ("normalized".to_string(), normalized),
            ("restart_dispersion".to_string(), res.restart_dispersion),
        ]);
        let row = vec![Cell::from(m), res.best_ratio.into(), normalized.into(), res.restart_dispersion.into()];
        rec.detail = serde_json::to_value(&res)?;
        out.push(rec.sweep("extremal-m.csv", &["m", "best_ratio", "normalized", "restart_dispersion"], vec![row]));
    }
    Ok(out)
}

/// Splices `--config` file entries in front of the explicit flags so that
/// later occurrences override them.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>> {
    if args.len() < 2 || args[1].starts_with('-') {
        return Ok(args);
    }
    let mut path = None;
    for (i, a) in args.iter().enumerate().skip(2) {
        if a == "--config" {
            path = Some(args.get(i + 1).cloned().ok_or_else(|| Error::config("config", "missing path"))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::config("config", format!("{path}: {e}")))?;
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config("config", format!("{path}:{}: expected `key = value`", n + 1)))?;
        let k = k.trim();
        if k == "config" {
            return Err(Error::config("config", "config files cannot nest"));
        }
        injected.push(format!("--{k}={}", v.trim()));
    }
    args.splice(2..2, injected);
    Ok(args)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => 2,
        _ => 1,
    }
}

fn execute(command: Command) -> Result<i32> {
    if let Command::Report(a) = &command {
        let records = read_records(&a.from)?;
        let dir = a.out.clone().unwrap_or_else(|| a.from.clone());
        fs::create_dir_all(&dir)?;
        write_tables(&dir, &records)?;
        return Ok(0);
    }
    let common = match &command {
        Command::Weights(a) => &a.common,
        Command::VerifyMain(a) => &a.common,
        Command::VerifyFrac(a) => &a.common,
        Command::Series(a) => &a.common,
        Command::Bbm(a) => &a.common,
        Command::Counterexample(a) => &a.common,
        Command::Extremal(a) => &a.common,
        Command::Report(_) => unreachable!(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let outcome = pool.install(|| match &command {
        Command::Weights(a) => weights(a),
        Command::VerifyMain(a) => verify_main(a),
        Command::VerifyFrac(a) => verify_frac(a),
        Command::Series(a) => series(a),
        Command::Bbm(a) => bbm(a),
        Command::Counterexample(a) => counterexample(a),
        Command::Extremal(a) => extremal(a),
        Command::Report(_) => unreachable!(),
    })?;
    write_outputs(&common.out, &outcome.records)?;
    Ok(if outcome.divergence {
        2
    } else if outcome.failed {
        3
    } else {
        0
    })
}

/// Runs the command line `args` (program name first) and returns the exit
/// status: 0 when every check passed, 1 on configuration or numerical
/// errors, 2 when a run outside the counterexample pipeline diverged, 3 when
/// a check failed.
pub fn run(args: Vec<String>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_ms("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_ms("3").unwrap(), vec![3]);
        assert!(parse_ms("5..2").is_err());
        assert!(parse_ms("0").is_err());
        assert_eq!(parse_list("0.5, 0.7").unwrap(), vec![0.5, 0.7]);
        assert_eq!(parse_r("e").unwrap(), std::f64::consts::E);
        assert!(parse_r("-1").is_err());
        assert_eq!(parse_tail("rho:2").unwrap(), Tail::RhoStar { beta: 2.0 });
        assert!(parse_tail("power").is_err());
    }

    #[test]
    fn domains() {
        assert_eq!(parse_domain("interval:D=2").unwrap(), Domain::interval(2.0).unwrap());
        assert_eq!(parse_domain("box:d=2,n=1,h=2").unwrap(), Domain::axis_box(2, 1, 2.0).unwrap());
        assert_eq!(parse_domain("square").unwrap(), Domain::unit_square());
        assert!(parse_domain("polygon:0 0;1 0;1 1;0 1").is_ok());
        assert!(parse_domain("graph:abs:M=1").is_ok());
        assert!(parse_domain("interval:L=2").is_err());
        assert!(parse_domain("torus").is_err());
    }

    #[test]
    fn functions_resolve() {
        let d = Domain::interval(1.0).unwrap();
        assert_eq!(resolve_functions("bump", &d).unwrap().len(), 1);
        assert!(resolve_functions("battery", &d).unwrap().len() >= 10);
        assert_eq!(resolve_functions("zigzag", &d).unwrap()[0].0, "zigzag");
        assert!(matches!(resolve_functions("nope", &d), Err(Error::Config { .. })));
        assert!(resolve_functions("battery", &Domain::unit_square()).is_ok());
    }

    #[test]
    fn config_is_spliced_before_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "# comment\nm = 4\nR = e\n").unwrap();
        let args: Vec<String> = ["hardylab", "weights", "--config", cfg.to_str().unwrap(), "--m", "5"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let expanded = expand_config(args).unwrap();
        assert_eq!(expanded[2], "--m=4");
        let Command::Weights(w) = Cli::try_parse_from(expanded).unwrap().command else {
            panic!("wrong command");
        };
        assert_eq!(w.m, vec![5]);
    }

    #[test]
    fn unknown_flags_exit_one() {
        let args = ["hardylab", "weights", "--bogus", "1"].iter().map(|s| s.to_string()).collect();
        assert_eq!(run(args), 1);
    }

    #[test]
    fn cells_round_trip() {
        let row = vec![Cell::from(3u32), Cell::from(0.1), Cell::from("a,b")];
        let json = serde_json::to_string(&row).unwrap();
        let back: Vec<Cell> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, row);
        assert_eq!(back[2].render(), "\"a,b\"");
        assert_eq!(Cell::from(2.0).render(), "2.0000000000000000e0");
    }
}
