//! Batch front end: one job per invocation, JSON report out.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{FramexError, Result};
use crate::extraction::{self, ExtractionParams};
use crate::frames::{self, VectorFamily};
use crate::linalg::{self, Field, Projection, PsdOperator, Vector, C64};
use crate::pointsets::{self, PointSet};
use crate::sampling::{self, SamplingParams};
use crate::selectors::{self, SelectorOptions, Strategy, DEFAULT_RESTARTS};
use crate::timefreq::{self, ConstructionParams, CyclicSignal, GaborSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Dual,
    Extract,
    Sample,
    Selector,
    Density,
    Gabor,
    Construct45,
    Classify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Dual => "dual",
            Command::Extract => "extract",
            Command::Sample => "sample",
            Command::Selector => "selector",
            Command::Density => "density",
            Command::Gabor => "gabor",
            Command::Construct45 => "construct45",
            Command::Classify => "classify",
        }
    }

    fn allowed_params(self) -> &'static [&'static str] {
        match self {
            Command::Analyze => &["use_scalars"],
            Command::Dual | Command::Gabor | Command::Classify => &[],
            Command::Extract => &[
                "mode",
                "c",
                "strategy",
                "restarts",
                "tail_floor_bits",
                "replica_budget",
                "depth_cap",
            ],
            Command::Sample => &[
                "epsilon",
                "c",
                "beta",
                "strategy",
                "restarts",
                "tail_floor_bits",
                "replica_budget",
                "depth_cap",
                "operator_bound",
            ],
            Command::Selector => &["order", "strategy", "restarts", "delta", "c"],
            Command::Density => &["radii", "step"],
            Command::Construct45 => &["K", "budgets"],
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "framex", version, about = "Finite frame analysis and extraction")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long = "out", value_name = "PATH")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repeatable `key=value` overrides.
    #[arg(long = "param", value_name = "K=V", value_parser = parse_kv)]
    pub params: Vec<(String, String)>,
    /// Leave wall time out of the report so reruns are byte-identical.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Also write the report's main table as CSV.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected key=value, got '{s}'")),
    }
}

#[derive(Clone, Debug)]
pub struct Job {
    pub command: Command,
    pub input_path: PathBuf,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub output_path: PathBuf,
    pub csv_path: Option<PathBuf>,
    pub timestamp: bool,
}

impl From<Cli> for Job {
    fn from(c: Cli) -> Self {
        Job {
            command: c.command,
            input_path: c.input,
            params: c.params.into_iter().collect(),
            seed: c.seed,
            output_path: c.output,
            csv_path: c.csv,
            timestamp: !c.no_timestamp,
        }
    }
}

/// Flat table mirrored to CSV.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn key_values(pairs: &[(&str, String)]) -> Self {
        let mut t = Table::new(&["key", "value"]);
        for (k, v) in pairs {
            t.push(vec![k.to_string(), v.clone()]);
        }
        t
    }
}

enum Stage {
    Input(FramexError),
    Compute(FramexError),
}

fn error_kind(e: &FramexError) -> &'static str {
    match e {
        FramexError::DimensionMismatch { .. } => "dimension_mismatch",
        FramexError::ZeroVector => "zero_vector",
        FramexError::NotHermitian(_) => "not_hermitian",
        FramexError::NotPsd(_) => "not_psd",
        FramexError::NotAFrame { .. } => "not_a_frame",
        FramexError::Precondition(_) => "precondition",
        FramexError::NoAdmissibleBeta(_) => "no_admissible_beta",
        FramexError::BudgetExceeded(_) => "budget_exceeded",
        FramexError::InconsistentTree(_) => "inconsistent_tree",
        FramexError::EmptyMask => "empty_mask",
        FramexError::ZeroWindow => "zero_window",
        FramexError::GridTooCoarse(_) => "grid_too_coarse",
        FramexError::Parse(_) => "parse",
        FramexError::Io(_) => "io",
    }
}

fn exit_code(stage: &Stage) -> i32 {
    match stage {
        Stage::Input(_) => EXIT_PARSE,
        Stage::Compute(FramexError::BudgetExceeded(_)) => EXIT_BUDGET,
        Stage::Compute(FramexError::Parse(_)) => EXIT_PARSE,
        Stage::Compute(_) => EXIT_PRECONDITION,
    }
}

/// Run one job, write its report, return the process exit code.
pub fn run(job: &Job) -> i32 {
    let start = Instant::now();
    let mut report = BTreeMap::new();
    report.insert("command".to_string(), json!(job.command.name()));
    report.insert("version".to_string(), json!(env!("CARGO_PKG_VERSION")));
    report.insert("seed".to_string(), json!(job.seed));
    report.insert("params".to_string(), json!(job.params));
    let (code, table) = match execute(job) {
        Ok((input, result, table)) => {
            report.insert("status".to_string(), json!("ok"));
            report.insert("input".to_string(), input);
            report.insert("result".to_string(), result);
            (EXIT_OK, Some(table))
        }
        Err(stage) => {
            let code = exit_code(&stage);
            let (Stage::Input(e) | Stage::Compute(e)) = &stage;
            eprintln!("framex: {e}");
            report.insert("status".to_string(), json!("error"));
            report.insert(
                "error".to_string(),
                json!({"kind": error_kind(e), "message": e.to_string(), "exit_code": code}),
            );
            (code, None)
        }
    };
    if job.timestamp {
        report.insert(
            "wall_time_ms".to_string(),
            json!(start.elapsed().as_secs_f64() * 1e3),
        );
    }
    if let Err(e) = write_outputs(job, &report, table.as_ref()) {
        eprintln!("framex: cannot write report: {e}");
        return EXIT_OUTPUT;
    }
    code
}

fn write_outputs(job: &Job, report: &BTreeMap<String, Value>, table: Option<&Table>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| FramexError::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(&job.output_path, text)?;
    if let (Some(path), Some(t)) = (&job.csv_path, table) {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        w.write_record(&t.header).map_err(csv_io)?;
        for r in &t.rows {
            w.write_record(r).map_err(csv_io)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_io(e: csv::Error) -> FramexError {
    FramexError::Io(std::io::Error::other(e.to_string()))
}

fn execute(job: &Job) -> std::result::Result<(Value, Value, Table), Stage> {
    let allowed = job.command.allowed_params();
    if let Some(k) = job.params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Stage::Compute(FramexError::precondition(format!(
            "unknown parameter '{k}' for {}; allowed: {}",
            job.command.name(),
            allowed.join(", ")
        ))));
    }
    let text = fs::read_to_string(&job.input_path).map_err(|e| Stage::Input(e.into()))?;
    let input: Value = serde_json::from_str(&text)
        .map_err(|e| Stage::Input(FramexError::Parse(format!("{}: {e}", job.input_path.display()))))?;
    let params = Params(&job.params);
    let (result, table) = dispatch(job, &input, &params).map_err(|e| match e {
        FramexError::Parse(_) => Stage::Input(e),
        other => Stage::Compute(other),
    })?;
    Ok((input, result, table))
}

struct Params<'a>(&'a BTreeMap<String, String>);

impl Params<'_> {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| FramexError::Parse(format!("parameter {key}: cannot parse '{v}'")))
            })
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.0
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<T>().map_err(|_| {
                            FramexError::Parse(format!("parameter {key}: cannot parse '{s}'"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn strategy(&self, seed: u64) -> Result<Strategy> {
        let restarts = self.get::<usize>("restarts")?.unwrap_or(DEFAULT_RESTARTS);
        match self.0.get("strategy").map(String::as_str) {
            None | Some("greedy") => Ok(Strategy::Greedy),
            Some("exhaustive") => Ok(Strategy::Exhaustive),
            Some("randomized") => Ok(Strategy::Randomized { seed, restarts }),
            Some(other) => Err(FramexError::Parse(format!("unknown strategy '{other}'"))),
        }
    }

    fn sampling(&self, seed: u64, base: SamplingParams) -> Result<SamplingParams> {
        Ok(SamplingParams {
            c: self.get("c")?.or(base.c),
            beta: self.get("beta")?.or(base.beta),
            operator_bound: self.get("operator_bound")?.unwrap_or(base.operator_bound),
            depth_cap: self.get("depth_cap")?.unwrap_or(base.depth_cap),
            tail_floor_bits: self.get("tail_floor_bits")?.unwrap_or(base.tail_floor_bits),
            replica_budget: self.get("replica_budget")?.unwrap_or(base.replica_budget),
            strategy: self.strategy(seed)?,
            seed,
        })
    }
}

fn dispatch(job: &Job, input: &Value, p: &Params) -> Result<(Value, Table)> {
    match job.command {
        Command::Analyze => analyze(input, p),
        Command::Dual => dual(input),
        Command::Classify => classify(input),
        Command::Extract => extract(input, p, job.seed),
        Command::Sample => sample(input, p, job.seed),
        Command::Selector => selector(input, p, job.seed),
        Command::Density => density(input, p),
        Command::Gabor => gabor(input),
        Command::Construct45 => construct45(input, p, job.seed),
    }
}

// ---- input schemas ----

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> C64 {
        match self {
            Entry::Real(x) => C64::new(x, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyInput {
    dim: usize,
    #[serde(default)]
    field: Field,
    vectors: Vec<Vec<Entry>>,
    scalars: Option<Vec<Entry>>,
    labels: Option<Vec<String>>,
    /// Basis of the subspace `M` for `sample`; the whole space by default.
    subspace: Option<Vec<Vec<Entry>>>,
}

fn to_vector(dim: usize, row: &[Entry]) -> Result<Vector> {
    if row.len() != dim {
        return Err(FramexError::DimensionMismatch {
            expected: dim,
            found: row.len(),
        });
    }
    Ok(Vector::from_iterator(dim, row.iter().map(|e| e.value())))
}

fn parse<T: for<'de> Deserialize<'de>>(input: &Value) -> Result<T> {
    T::deserialize(input).map_err(|e| FramexError::Parse(e.to_string()))
}

fn read_family(input: &Value) -> Result<(VectorFamily, FamilyInput)> {
    let raw: FamilyInput = parse(input)?;
    let vs = raw
        .vectors
        .iter()
        .map(|r| to_vector(raw.dim, r))
        .collect::<Result<Vec<_>>>()?;
    let mut f = VectorFamily::new(raw.dim, raw.field, vs)?;
    if let Some(s) = &raw.scalars {
        f = f.with_scalars(s.iter().map(|e| e.value()).collect())?;
    }
    if let Some(l) = &raw.labels {
        f = f.with_labels(l.clone())?;
    }
    Ok((f, raw))
}

fn complex_rows(vs: &[Vector]) -> Value {
    json!(vs
        .iter()
        .map(|v| v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| FramexError::Parse(e.to_string()))
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

// ---- commands ----

fn analyze(input: &Value, p: &Params) -> Result<(Value, Table)> {
    let (f, _) = read_family(input)?;
    let use_scalars = p.get::<bool>("use_scalars")?.unwrap_or(f.scalars().is_some());
    let report = frames::frame_bounds(&f, use_scalars)?;
    let spectrum = frames::frame_operator(&f, use_scalars)?.spectrum().to_vec();
    let table = Table::key_values(&[
        ("lower", fmt(report.lower)),
        ("upper", fmt(report.upper)),
        ("is_frame", report.is_frame.to_string()),
        ("is_tight", report.is_tight.to_string()),
        ("is_riesz_basis", report.is_riesz_basis.to_string()),
    ]);
    Ok((
        json!({"use_scalars": use_scalars, "len": f.len(), "dim": f.dim(), "report": to_value(&report)?, "spectrum": spectrum}),
        table,
    ))
}

fn dual(input: &Value) -> Result<(Value, Table)> {
    let (f, _) = read_family(input)?;
    let d = frames::canonical_dual(&f)?;
    let check = extraction::equivalence_c_check(&f, &d)?;
    let mut t = Table::new(&["index", "component", "re", "im"]);
    for (n, v) in d.vectors().iter().enumerate() {
        for (i, z) in v.iter().enumerate() {
            t.push(vec![n.to_string(), i.to_string(), fmt(z.re), fmt(z.im)]);
        }
    }
    Ok((json!({"duals": complex_rows(d.vectors()), "check": to_value(&check)?}), t))
}

fn classify(input: &Value) -> Result<(Value, Table)> {
    let (f, _) = read_family(input)?;
    let c = frames::classify(&f)?;
    let t = Table::key_values(&[
        ("label", to_value(&c.label)?.as_str().unwrap_or_default().to_string()),
        ("spanning", c.spanning.to_string()),
        ("rescale_recommended", c.rescale_recommended.to_string()),
        ("lower", fmt(c.report.lower)),
        ("upper", fmt(c.report.upper)),
    ]);
    Ok((to_value(&c)?, t))
}

fn multiplicity_table(counts: &[u64], weights: Option<&[f64]>) -> Table {
    let mut t = Table::new(&["index", "multiplicity", "weight"]);
    for (n, &k) in counts.iter().enumerate() {
        let w = weights.map(|w| fmt(w[n])).unwrap_or_default();
        t.push(vec![n.to_string(), k.to_string(), w]);
    }
    t
}

fn extract(input: &Value, p: &Params, seed: u64) -> Result<(Value, Table)> {
    let (f, _) = read_family(input)?;
    let base = ExtractionParams::default();
    let params = ExtractionParams {
        c: p.get("c")?,
        sampling: p.sampling(seed, base.sampling)?,
    };
    // plain extraction reads missing scalars as 1
    let with_ones = |f: &VectorFamily| match f.scalars() {
        Some(_) => Ok(f.clone()),
        None => f.clone().with_scalars(vec![C64::new(1.0, 0.0); f.len()]),
    };
    match p.0.get("mode").map(String::as_str) {
        None | Some("extract") => {
            let r = extraction::extract(&with_ones(&f)?, &params)?;
            let s = r.summary();
            let t = multiplicity_table(&s.multiplicity, Some(&s.plan.weights));
            Ok((json!({"mode": "extract", "extraction": to_value(&s)?}), t))
        }
        Some("subsequence") => {
            let r = extraction::equivalence_a_to_d(&f, &params)?;
            let mut t = Table::new(&["index"]);
            for &i in &r.indices {
                t.push(vec![i.to_string()]);
            }
            Ok((
                json!({
                    "mode": "subsequence",
                    "classes": r.classes,
                    "representatives": r.representatives,
                    "class_weights": r.class_weights,
                    "weight_bound": r.weight_bound,
                    "indices": r.indices,
                    "report": to_value(&r.report)?,
                    "max_overlap": r.max_overlap,
                    "extraction": to_value(&r.extraction.summary())?,
                }),
                t,
            ))
        }
        Some("coefficients") => {
            let r = extraction::equivalence_b_to_a(&with_ones(&f)?)?;
            let mut t = Table::new(&["index", "component", "re", "im"]);
            for (n, v) in r.functionals.vectors().iter().enumerate() {
                for (i, z) in v.iter().enumerate() {
                    t.push(vec![n.to_string(), i.to_string(), fmt(z.re), fmt(z.im)]);
                }
            }
            Ok((
                json!({"mode": "coefficients", "functionals": complex_rows(r.functionals.vectors()), "max_residual": r.max_residual}),
                t,
            ))
        }
        Some(other) => Err(FramexError::Parse(format!("unknown extract mode '{other}'"))),
    }
}

/// Rank-one operators `x_n x_n^*` from the family's vectors.
fn rank_ones(f: &VectorFamily) -> Result<Vec<PsdOperator>> {
    f.vectors().iter().map(linalg::rank_one).collect()
}

/// Scalars read as real, nonnegative operator weights.
fn real_weights(f: &VectorFamily) -> Result<Option<Vec<f64>>> {
    f.scalars()
        .map(|s| {
            s.iter()
                .map(|z| {
                    if z.im == 0.0 && z.re >= 0.0 {
                        Ok(z.re)
                    } else {
                        Err(FramexError::precondition("operator weights must be real and nonnegative"))
                    }
                })
                .collect()
        })
        .transpose()
}

fn sample(input: &Value, p: &Params, seed: u64) -> Result<(Value, Table)> {
    let (f, raw) = read_family(input)?;
    let ops = rank_ones(&f)?;
    let weights = real_weights(&f)?
        .ok_or_else(|| FramexError::precondition("sample needs weights in 'scalars'"))?;
    let m = match &raw.subspace {
        Some(rows) => {
            let basis = rows
                .iter()
                .map(|r| to_vector(f.dim(), r))
                .collect::<Result<Vec<_>>>()?;
            linalg::try_project_onto(f.dim(), &basis)?
        }
        None => Projection::full(f.dim()),
    };
    let epsilon = p.get("epsilon")?.unwrap_or(0.5);
    let params = p.sampling(seed, SamplingParams::default())?;
    let out = sampling::sample(&ops, &weights, &m, epsilon, None, &params)?;
    let t = multiplicity_table(&out.sigma.multiplicity, Some(&weights));
    Ok((
        json!({"sigma": to_value(&out.sigma)?, "certificate": to_value(&out.certificate)?}),
        t,
    ))
}

fn selector(input: &Value, p: &Params, seed: u64) -> Result<(Value, Table)> {
    let (f, _) = read_family(input)?;
    let mut ops = rank_ones(&f)?;
    if let Some(w) = real_weights(&f)? {
        ops = ops.iter().zip(&w).map(|(t, &c)| t.scaled(c)).collect();
    }
    let target = PsdOperator::sum(f.dim(), &ops)?;
    let order = p.get("order")?.unwrap_or(1);
    let strategy = match p.0.get("strategy") {
        None => Strategy::Exhaustive,
        Some(_) => p.strategy(seed)?,
    };
    let options = SelectorOptions {
        delta: p.get("delta")?,
        c: p.get("c")?,
    };
    let (tree, cert) = selectors::best_selector_with(&ops, &target, order, strategy, options)?;
    let verified = selectors::verify_certificate(&cert, &tree, &ops, &target)?;
    let mut t = Table::new(&["leaf", "size", "deviation", "members"]);
    for (b, (leaf, dev)) in tree.leaves.iter().zip(&cert.achieved).enumerate() {
        let members: Vec<String> = leaf.iter().map(|i| i.to_string()).collect();
        t.push(vec![b.to_string(), leaf.len().to_string(), fmt(*dev), members.join(" ")]);
    }
    Ok((
        json!({"tree": to_value(&tree)?, "certificate": to_value(&cert)?, "verified": verified}),
        t,
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointSetInput {
    ambient_dim: usize,
    points: Vec<Vec<f64>>,
    extent: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PointsInput {
    Union { sets: Vec<PointSetInput> },
    Single(PointSetInput),
}

fn density(input: &Value, p: &Params) -> Result<(Value, Table)> {
    let sets = match parse::<PointsInput>(input)? {
        PointsInput::Single(s) => vec![s],
        PointsInput::Union { sets } => sets,
    };
    let sets = sets
        .into_iter()
        .map(|s| PointSet::new(s.ambient_dim, s.points, s.extent))
        .collect::<Result<Vec<_>>>()?;
    let min_extent = sets.iter().map(|s| s.extent()).fold(f64::INFINITY, f64::min);
    let radii = p.list::<f64>("radii")?.unwrap_or_else(|| vec![min_extent / 2.0]);
    let step = p.get::<f64>("step")?;
    let est = pointsets::union_density(&sets, &radii, step)?;
    let separations: Vec<_> = sets.iter().map(pointsets::uniformly_discrete).collect();
    let mut t = Table::new(&[
        "radius",
        "step",
        "centers",
        "min_count",
        "max_count",
        "inf_density",
        "sup_density",
    ]);
    for w in &est.per_window {
        t.push(vec![
            fmt(w.radius),
            fmt(w.step),
            w.centers.to_string(),
            w.min_count.to_string(),
            w.max_count.to_string(),
            fmt(w.inf_density),
            fmt(w.sup_density),
        ]);
    }
    Ok((
        json!({"estimate": to_value(&est)?, "separations": to_value(&separations)?}),
        t,
    ))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WindowInput {
    Named(String),
    Samples(Vec<Entry>),
}

#[derive(Debug, Deserialize)]
struct LatticeInput {
    a: usize,
    b: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaborInput {
    #[serde(rename = "L")]
    len: usize,
    window: WindowInput,
    shifts: Option<Vec<(i64, i64)>>,
    lattice: Option<LatticeInput>,
}

fn read_gabor(input: &Value) -> Result<GaborSpec> {
    let raw: GaborInput = parse(input)?;
    let window = match raw.window {
        WindowInput::Named(ref s) if s == "gaussian" => CyclicSignal::gaussian(raw.len)?,
        WindowInput::Named(s) => return Err(FramexError::Parse(format!("unknown window '{s}'"))),
        WindowInput::Samples(s) => {
            if s.len() != raw.len {
                return Err(FramexError::DimensionMismatch {
                    expected: raw.len,
                    found: s.len(),
                });
            }
            CyclicSignal::new(s.into_iter().map(Entry::value).collect())?
        }
    };
    match (raw.shifts, raw.lattice) {
        (Some(s), None) => Ok(GaborSpec::new(window, s)),
        (None, Some(l)) => GaborSpec::lattice(window, l.a, l.b),
        _ => Err(FramexError::Parse(
            "give exactly one of 'shifts' and 'lattice'".to_string(),
        )),
    }
}

fn gabor(input: &Value) -> Result<(Value, Table)> {
    let spec = read_gabor(input)?;
    let f = timefreq::gabor_family(&spec)?;
    let report = frames::frame_bounds(&f, false)?;
    let t = Table::key_values(&[
        ("count", f.len().to_string()),
        ("lower", fmt(report.lower)),
        ("upper", fmt(report.upper)),
        ("is_frame", report.is_frame.to_string()),
    ]);
    Ok((
        json!({"count": f.len(), "window_norm": spec.window().norm(), "report": to_value(&report)?}),
        t,
    ))
}

fn construct45(input: &Value, p: &Params, seed: u64) -> Result<(Value, Table)> {
    let spec = read_gabor(input)?;
    let params = ConstructionParams {
        k: p.list("K")?.unwrap_or_else(|| vec![1, 2, 4, 8]),
        budgets: p.list("budgets")?,
        seed,
    };
    let c = timefreq::clustered_frame_construct(&spec, &params)?;
    let mut t = Table::new(&[
        "base_index",
        "copies",
        "cap",
        "budget",
        "step",
        "max_parameter_distance",
        "max_vector_distance",
    ]);
    for cl in c.report.clusters.iter().filter(|cl| cl.copies > 1 || cl.base_index < params.k.len()) {
        t.push(vec![
            cl.base_index.to_string(),
            cl.copies.to_string(),
            fmt(cl.cap),
            fmt(cl.budget),
            fmt(cl.step),
            fmt(cl.max_parameter_distance),
            fmt(cl.max_vector_distance),
        ]);
    }
    Ok((
        json!({"count": c.family.len(), "report": to_value(&c.report)?}),
        t,
    ))
}

/// Size the global rayon pool from `FRAMEX_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("FRAMEX_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn main_with(cli: Cli) -> i32 {
    configure_threads();
    run(&Job::from(cli))
}

/// Convenience for tests: run a job described by its parts.
pub fn run_paths(command: Command, input: &Path, output: &Path, seed: u64, params: &[(&str, &str)]) -> i32 {
    run(&Job {
        command,
        input_path: input.to_path_buf(),
        params: params
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        seed,
        output_path: output.to_path_buf(),
        csv_path: None,
        timestamp: false,
    })
}
