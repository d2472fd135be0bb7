//! Command-line front end.
//!
//! Every command reads one input (set spec, point file, tree file, or measure
//! dump), writes its results to `--output-dir`, and prints a summary. All
//! outputs carry a SHA-256 hash of the input bytes and the effective
//! parameters. Exit codes: 0 success, 1 internal error, 2 input error,
//! 3 infeasible parameters.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cube::DyadicCube;
use crate::estimate::{self, EstimateError, DEFAULT_BURN_IN};
use crate::format::{self, FormatError, TREE_MAGIC};
use crate::frostman::dump::{read_dump, write_dump_binary, write_dump_text, DumpHeader, MEASURE_MAGIC};
use crate::frostman::{construct, FrostmanError, FrostmanParams};
use crate::report::g12;
use crate::sets::{realize_with, SetError, SetSpec};
use crate::tree::{OccupancyTree, DEFAULT_MAX_CUBES};
use crate::verify::{constant_stability, decay_report, RegimeReport, Sampling, VerifyError};

/// Level-`m` cube count above which `construct` skips the monotonicity audit.
const AUDIT_LIMIT: u128 = 1 << 20;
/// Findings listed in full by the monotonicity audit.
const AUDIT_FINDINGS: usize = 20;
const DEFAULT_THETAS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Parser)]
#[command(name = "frostman", version, about = "Dyadic dimension estimates and constructive Frostman measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Realize a set spec or point file as an occupancy tree file
    Ingest(Config),
    /// Run dimension estimators on a set
    Estimate(Config),
    /// Build the capped cascade measure and its equality cover
    Construct(Config),
    /// Measure decay constants of a constructed measure dump
    Verify(Config),
    /// Tabulate intermediate dimension estimates over a theta x delta grid
    Profile(Config),
    /// Sweep a delta grid and compare decay constants across it
    Stability(Config),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Table,
}

#[derive(Debug, Clone, Args)]
pub struct Config {
    /// Set spec (TOML), point file, tree file, or (for verify) measure dump
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for result files
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// Tree depth for set specs and point files
    #[arg(long)]
    pub n_max: Option<u32>,
    /// Comma-separated theta values
    #[arg(long, value_delimiter = ',', value_parser = parse_value)]
    pub theta: Vec<f64>,
    /// A value, a comma list, or a factor-2 geometric grid "a..b"
    #[arg(long, visible_alias = "delta-grid")]
    pub delta: Option<String>,
    /// Fine-regime exponent, at most t
    #[arg(long, value_parser = parse_value)]
    pub s: Option<f64>,
    /// Mid-regime exponent
    #[arg(long, value_parser = parse_value)]
    pub t: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: u32,
    /// Random occupied leaves used as ball centers, beside the cover cubes
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    /// Seed for the random ball centers
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Run every estimator
    #[arg(long)]
    pub all: bool,
    /// Dyadic dimension (minimum branching)
    #[arg(long)]
    pub dyadic: bool,
    /// Box-counting slope
    #[arg(long = "box")]
    pub box_counting: bool,
    /// Lower dimension over a level window
    #[arg(long)]
    pub lower: bool,
    /// Intermediate dimensions for each theta
    #[arg(long)]
    pub intermediate: bool,
    /// Rescale point files into the unit cube
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

impl From<SetError> for CliError {
    fn from(e: SetError) -> Self {
        match e {
            SetError::Tree(crate::tree::TreeError::Budget(_)) => CliError::Infeasible(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<FrostmanError> for CliError {
    fn from(e: FrostmanError) -> Self {
        match e {
            FrostmanError::TooDeep { .. } | FrostmanError::DimensionMismatch { .. } => CliError::Internal(e.to_string()),
            e => CliError::Infeasible(e.to_string()),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Parameter(_) => CliError::Input(e.to_string()),
            e => CliError::Infeasible(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Frostman(f) => f.into(),
            VerifyError::Radius { .. } => CliError::Infeasible(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("cannot write {}: {e}", path.display()))
}

/// Parses `0.25`, `1/4`, `2^-2`, or `2^(-3)`.
pub fn parse_value(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let bad = || format!("invalid number '{text}'");
    let v = if let Some((base, exp)) = t.split_once('^') {
        let b: f64 = base.trim().parse().map_err(|_| bad())?;
        let e = parse_value(exp.trim().trim_start_matches('(').trim_end_matches(')'))?;
        b.powf(e)
    } else if let Some((n, d)) = t.split_once('/') {
        let n: f64 = n.trim().parse().map_err(|_| bad())?;
        let d: f64 = d.trim().parse().map_err(|_| bad())?;
        n / d
    } else {
        t.parse().map_err(|_| bad())?
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Parses a delta list: comma-separated values and `a..b` ranges, each range
/// stepping by factors of 2 from `a` toward `b` (inclusive).
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in text.split(',').filter(|s| !s.trim().is_empty()) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (parse_value(a)?, parse_value(b)?);
                if !(a > 0.0 && b > 0.0) {
                    return Err(format!("grid '{item}' needs positive endpoints"));
                }
                let steps = (a / b).log2().abs();
                let n = (steps + 1e-9).floor() as i32;
                let sign = if a >= b { -1 } else { 1 };
                out.extend((0..=n).map(|k| a * 2f64.powi(sign * k)));
            }
            None => out.push(parse_value(item)?),
        }
    }
    if out.is_empty() {
        return Err(format!("empty delta list '{text}'"));
    }
    Ok(out)
}

/// Text: `key = value` lines and aligned tables. Table: comma-separated
/// tables with the fields as `#` comment lines.
#[derive(Debug, Default)]
struct Doc {
    title: String,
    fields: Vec<(String, String)>,
    tables: Vec<Table>,
}

#[derive(Debug)]
struct Table {
    name: String,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Doc {
    fn new(title: &str, hash: &str) -> Self {
        let mut d = Doc { title: title.to_string(), ..Default::default() };
        d.field("config_hash", hash);
        d
    }

    fn field(&mut self, key: &str, value: impl ToString) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    fn num(&mut self, key: &str, value: f64) {
        self.field(key, g12(value));
    }

    fn table(&mut self, name: &str, columns: Vec<&'static str>, rows: Vec<Vec<String>>) {
        self.tables.push(Table { name: name.to_string(), columns, rows });
    }

    fn render(&self, format: OutputFormat) -> String {
        let mut s = format!("# {}\n", self.title);
        match format {
            OutputFormat::Text => {
                for (k, v) in &self.fields {
                    s += &format!("{k} = {v}\n");
                }
                for t in &self.tables {
                    s += &format!("\n[{}]\n", t.name);
                    let mut widths: Vec<usize> = t.columns.iter().map(|c| c.len()).collect();
                    for r in &t.rows {
                        for (w, c) in widths.iter_mut().zip(r) {
                            *w = (*w).max(c.len());
                        }
                    }
                    let line = |cells: Vec<&str>| {
                        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                        padded.join("  ").trim_end().to_string() + "\n"
                    };
                    s += &line(t.columns.clone());
                    for r in &t.rows {
                        s += &line(r.iter().map(String::as_str).collect());
                    }
                }
            }
            OutputFormat::Table => {
                for (k, v) in &self.fields {
                    s += &format!("# {k} = {v}\n");
                }
                for t in &self.tables {
                    s += &format!("\n# {}\n", t.name);
                    let mut w = csv::Writer::from_writer(Vec::new());
                    let written = w.write_record(&t.columns).and_then(|_| t.rows.iter().try_for_each(|r| w.write_record(r)));
                    written.expect("writing to memory");
                    s += &String::from_utf8(w.into_inner().expect("writing to memory")).expect("cells are UTF-8");
                }
            }
        }
        s
    }
}

fn extension(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Text => "txt",
        OutputFormat::Table => "csv",
    }
}

struct Session<'a> {
    config: &'a Config,
    command: &'static str,
    out: &'a mut (dyn Write + Send),
}

impl Session<'_> {
    fn output_path(&self, name: &str) -> Result<PathBuf, CliError> {
        let dir = &self.config.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| write_error(dir, e))?;
        Ok(dir.join(name))
    }

    fn save_doc(&self, stem: &str, doc: &Doc) -> Result<(), CliError> {
        let path = self.output_path(&format!("{stem}.{}", extension(self.config.format)))?;
        std::fs::write(&path, doc.render(self.config.format)).map_err(|e| write_error(&path, e))
    }

    fn print(&mut self, doc: &Doc) -> Result<(), CliError> {
        let text = doc.render(self.config.format);
        self.out.write_all(text.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))
    }
}

/// Kind of the `--input` file, detected from its content.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InputKind {
    Tree,
    Spec,
    Points,
    Dump,
}

impl InputKind {
    fn name(&self) -> &'static str {
        match self {
            InputKind::Tree => "tree",
            InputKind::Spec => "set spec",
            InputKind::Points => "point file",
            InputKind::Dump => "measure dump",
        }
    }
}

fn detect(bytes: &[u8]) -> InputKind {
    if bytes.starts_with(TREE_MAGIC) {
        return InputKind::Tree;
    }
    if bytes.starts_with(MEASURE_MAGIC) || bytes.starts_with(b"# cascade measure dump") {
        return InputKind::Dump;
    }
    let is_spec = std::str::from_utf8(bytes)
        .ok()
        .and_then(|s| s.parse::<toml::Table>().ok())
        .is_some_and(|t| t.contains_key("kind"));
    if is_spec {
        InputKind::Spec
    } else {
        InputKind::Points
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

struct Loaded {
    kind: InputKind,
    tree: Arc<OccupancyTree>,
    method: String,
    normalization: Option<crate::sets::Normalization>,
    /// Digest of the input and any file it references.
    digest: String,
}

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn load_set(config: &Config) -> Result<Loaded, CliError> {
    let bytes = read_input(&config.input)?;
    let kind = detect(&bytes);
    let mut digest = sha_hex(&bytes);
    let need_depth = || {
        config.n_max.ok_or_else(|| CliError::Input(format!("--n-max is required for a {} input", kind.name())))
    };
    let (tree, method, normalization) = match kind {
        InputKind::Dump => {
            return Err(CliError::Input("expected a set spec, point file, or tree file; got a measure dump".into()))
        }
        InputKind::Tree => {
            let tree = format::read_tree(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", config.input.display())))?;
            if let Some(n) = config.n_max.filter(|&n| n != tree.max_level()) {
                return Err(CliError::Input(format!("tree file has depth {}, but --n-max {n} was given", tree.max_level())));
            }
            (tree, "stored tree".to_string(), None)
        }
        InputKind::Spec => {
            let spec = SetSpec::load(&config.input)?;
            if let SetSpec::Points { file, .. } = &spec {
                digest += &sha_hex(&read_input(file)?);
            }
            let r = realize_with(&spec, need_depth()?, DEFAULT_MAX_CUBES)?;
            (r.tree, r.method.describe(), r.normalization)
        }
        InputKind::Points => {
            let spec = SetSpec::Points { file: config.input.clone(), normalize: config.normalize };
            let r = realize_with(&spec, need_depth()?, DEFAULT_MAX_CUBES)?;
            (r.tree, r.method.describe(), r.normalization)
        }
    };
    Ok(Loaded { kind, tree: Arc::new(tree), method, normalization, digest })
}

/// Hash of the command, input digest, and every parameter that affects
/// results (output location and format excluded).
fn config_hash(command: &str, digest: &str, c: &Config) -> String {
    let canonical = format!(
        "command={command}\ninput={digest}\nn_max={:?}\ntheta={:?}\ndelta={:?}\ns={:?}\nt={:?}\nburn_in={}\n\
         samples={}\nseed={}\nselect={:?}\nnormalize={}\n",
        c.n_max,
        c.theta,
        c.delta.as_deref().map(parse_grid),
        c.s,
        c.t,
        c.burn_in,
        c.samples,
        c.seed,
        (c.all, c.dyadic, c.box_counting, c.lower, c.intermediate),
        c.normalize,
    );
    sha_hex(canonical.as_bytes())
}

fn single(values: &[f64], flag: &str) -> Result<f64, CliError> {
    match values {
        [v] => Ok(*v),
        [] => Err(CliError::Input(format!("--{flag} is required"))),
        _ => Err(CliError::Input(format!("--{flag} takes a single value here"))),
    }
}

fn required(v: Option<f64>, flag: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Input(format!("--{flag} is required")))
}

fn deltas(config: &Config) -> Result<Vec<f64>, CliError> {
    match &config.delta {
        Some(text) => parse_grid(text).map_err(CliError::Input),
        None => Ok(Vec::new()),
    }
}

fn params_fields(doc: &mut Doc, p: &FrostmanParams) {
    doc.num("theta", p.theta);
    doc.num("delta", p.delta);
    doc.num("s", p.s);
    doc.num("t", p.t);
    doc.field("dim", p.dim);
    doc.field("m", p.m);
    doc.field("ell", p.ell);
    doc.field("top", p.top);
    doc.num("fine_scale", p.fine_scale());
}

fn cube_cell(q: &DyadicCube) -> String {
    q.to_string()
}

/// Runs the command line `args` (program name first), writing the summary
/// to `out` and diagnostics to `err`; returns the exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return e.exit_code();
        }
    };
    let result = match threads() {
        Ok(Some(n)) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, out)),
            Err(e) => Err(CliError::Internal(format!("cannot start worker pool: {e}"))),
        },
        Ok(None) => dispatch(&cli.command, out),
        Err(e) => Err(e),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn threads() -> Result<Option<usize>, CliError> {
    match std::env::var("FROSTMAN_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Input(format!("FROSTMAN_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

fn dispatch(command: &Command, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let (name, config) = match command {
        Command::Ingest(c) => ("ingest", c),
        Command::Estimate(c) => ("estimate", c),
        Command::Construct(c) => ("construct", c),
        Command::Verify(c) => ("verify", c),
        Command::Profile(c) => ("profile", c),
        Command::Stability(c) => ("stability", c),
    };
    let mut session = Session { config, command: name, out };
    match command {
        Command::Ingest(_) => cmd_ingest(&mut session),
        Command::Estimate(_) => cmd_estimate(&mut session),
        Command::Construct(_) => cmd_construct(&mut session),
        Command::Verify(_) => cmd_verify(&mut session),
        Command::Profile(_) => cmd_profile(&mut session),
        Command::Stability(_) => cmd_stability(&mut session),
    }
}

fn cmd_ingest(session: &mut Session) -> Result<(), CliError> {
    let c = session.config;
    let set = load_set(c)?;
    let hash = config_hash(session.command, &set.digest, c);
    let tree_path = session.output_path("tree.dyot")?;
    let crc = format::save_tree(&set.tree, &tree_path).map_err(|e| write_error(&tree_path, e))?;
    let counts = estimate::level_counts(&set.tree);
    let mut doc = Doc::new("frostman ingest", &hash);
    doc.field("input_kind", set.kind.name());
    doc.field("method", &set.method);
    if let Some(n) = &set.normalization {
        doc.field("normalization_origin", n.origin.iter().map(|&x| g12(x)).collect::<Vec<_>>().join(" "));
        doc.num("normalization_scale", n.scale);
    }
    doc.field("dim", set.tree.dim());
    doc.field("max_level", set.tree.max_level());
    doc.field("tree_file", "tree.dyot");
    doc.field("tree_crc32", format!("{crc:08x}"));
    doc.table("levels", vec!["level", "occupied", "log2_occupied", "min_branching"], level_rows(&counts));
    session.save_doc("counts", &doc)?;
    session.print(&doc)
}

fn level_rows(counts: &estimate::LevelCounts) -> Vec<Vec<String>> {
    (0..=counts.max_level as usize)
        .map(|n| {
            vec![
                n.to_string(),
                counts.occupied[n].to_string(),
                g12(estimate::log2_exact(counts.occupied[n])),
                counts.min_branching.get(n).map_or("-".to_string(), |b| b.to_string()),
            ]
        })
        .collect()
}

fn cmd_estimate(session: &mut Session) -> Result<(), CliError> {
    let c = session.config;
    let set = load_set(c)?;
    let hash = config_hash(session.command, &set.digest, c);
    let tree = &set.tree;
    let none = !(c.dyadic || c.box_counting || c.lower || c.intermediate);
    let pick = |flag: bool| c.all || none || flag;
    let counts = estimate::level_counts(tree);
    let mut summary = Doc::new("frostman estimate", &hash);
    summary.field("dim", tree.dim());
    summary.field("max_level", tree.max_level());
    summary.field("burn_in", c.burn_in);
    let (mut dd, mut dl, mut db) = (None, None, None);

    if pick(c.dyadic) {
        let r = estimate::dyadic_dimension(&counts, c.burn_in)?;
        let mut doc = Doc::new("dyadic dimension", &hash);
        doc.num("estimate", r.estimate);
        doc.field("attained_level", r.level);
        doc.field("burn_in", r.burn_in);
        let rows = r.trace.iter().enumerate().map(|(n, v)| vec![n.to_string(), g12(*v)]).collect();
        doc.table("trace", vec!["level", "log2_min_branching"], rows);
        session.save_doc("dyadic", &doc)?;
        summary.num("dyadic", r.estimate);
        dd = Some(r.estimate);
    }
    if pick(c.box_counting) {
        let (lo, hi) = estimate::default_box_range(tree.max_level(), c.burn_in);
        let r = estimate::box_dimension(&counts, lo, hi)?;
        let mut doc = Doc::new("box-counting dimension", &hash);
        doc.num("slope", r.slope);
        doc.num("intercept", r.intercept);
        doc.num("residual", r.residual);
        doc.field("fit_levels", format!("{}..{}", r.lo, r.hi));
        doc.table("counts", vec!["level", "occupied", "log2_occupied", "min_branching"], level_rows(&counts));
        session.save_doc("box", &doc)?;
        summary.num("box", r.slope);
        summary.num("box_residual", r.residual);
        db = Some(r.slope);
    }
    if pick(c.lower) {
        let window = estimate::default_window(tree.max_level(), c.burn_in);
        let r = estimate::lower_dimension(tree, &window)?;
        let mut doc = Doc::new("lower dimension", &hash);
        doc.num("estimate", r.estimate);
        doc.field("witness", cube_cell(&r.witness));
        doc.field("witness_levels", format!("{}..{}", r.a, r.b));
        let rows = r
            .pairs
            .iter()
            .map(|p| vec![p.a.to_string(), p.b.to_string(), p.min_descendants.to_string(), g12(p.slope), cube_cell(&p.witness)])
            .collect();
        doc.table("pairs", vec!["a", "b", "min_descendants", "slope", "witness"], rows);
        session.save_doc("lower", &doc)?;
        summary.num("lower", r.estimate);
        dl = Some(r.estimate);
    }
    if pick(c.intermediate) {
        let thetas = if c.theta.is_empty() { DEFAULT_THETAS.to_vec() } else { c.theta.clone() };
        let given = deltas(c)?;
        let mut rows = Vec::new();
        let mut doc = Doc::new("intermediate dimensions", &hash);
        for &theta in &thetas {
            let grid = if given.is_empty() {
                vec![estimate::finest_feasible_delta(tree.dim(), tree.max_level(), theta)]
            } else {
                given.clone()
            };
            let profile = estimate::intermediate_profile(tree, &[theta], &grid)?;
            for e in &profile.entries {
                rows.push(scale_row(e));
            }
            let sm = &profile.summaries[0];
            let value = if sm.lower == sm.upper { g12(sm.lower) } else { format!("{}..{}", g12(sm.lower), g12(sm.upper)) };
            summary.field(&format!("intermediate[theta={}]", g12(theta)), &value);
            doc.field(&format!("theta={}", g12(theta)), value);
        }
        doc.table("estimates", scale_columns(), rows);
        session.save_doc("intermediate", &doc)?;
    }
    if let (Some(d), Some(l), Some(b)) = (dd, dl, db) {
        let holds = d <= l + 1e-9 && l <= b + 1e-9;
        summary.field("chain", format!("dyadic <= lower <= box {}", if holds { "holds" } else { "fails" }));
    }
    session.save_doc("summary", &summary)?;
    session.print(&summary)
}

fn scale_columns() -> Vec<&'static str> {
    vec!["theta", "delta", "a", "b", "s", "s_lo", "s_hi"]
}

fn scale_row(e: &estimate::ScaleEstimate) -> Vec<String> {
    vec![g12(e.theta), g12(e.delta), e.a.to_string(), e.b.to_string(), g12(e.s), g12(e.s_lo), g12(e.s_hi)]
}

fn cmd_profile(session: &mut Session) -> Result<(), CliError> {
    let c = session.config;
    let set = load_set(c)?;
    let hash = config_hash(session.command, &set.digest, c);
    let tree = &set.tree;
    let thetas = if c.theta.is_empty() { DEFAULT_THETAS.to_vec() } else { c.theta.clone() };
    let mut grid = deltas(c)?;
    if grid.is_empty() {
        let finest = thetas
            .iter()
            .map(|&th| estimate::finest_feasible_delta(tree.dim(), tree.max_level(), th))
            .fold(0.0, f64::max);
        let mut d = 0.5;
        while d >= finest {
            grid.push(d);
            d /= 2.0;
        }
        if grid.is_empty() {
            return Err(CliError::Infeasible(format!("no delta = 2^-k is feasible at depth {}", tree.max_level())));
        }
    }
    let profile = estimate::intermediate_profile(tree, &thetas, &grid)?;
    let mut doc = Doc::new("frostman profile", &hash);
    doc.field("dim", tree.dim());
    doc.field("max_level", tree.max_level());
    let sums = profile.summaries.iter().map(|s| vec![g12(s.theta), g12(s.lower), g12(s.upper)]).collect();
    doc.table("summary", vec!["theta", "lower", "upper"], sums);
    doc.table("profile", scale_columns(), profile.entries.iter().map(scale_row).collect());
    session.save_doc("profile", &doc)?;
    session.print(&doc)
}

fn cmd_construct(session: &mut Session) -> Result<(), CliError> {
    let c = session.config;
    let set = load_set(c)?;
    let hash = config_hash(session.command, &set.digest, c);
    let theta = single(&c.theta, "theta")?;
    let delta = single(&deltas(c)?, "delta")?;
    let (s, t) = (required(c.s, "s")?, required(c.t, "t")?);
    let built = construct(set.tree.clone(), theta, delta, s, t)?;

    let tree_path = session.output_path("tree.dyot")?;
    let crc = format::save_tree(&set.tree, &tree_path).map_err(|e| write_error(&tree_path, e))?;
    let header = DumpHeader::new(&built.measure, &hash, "tree.dyot", crc);
    let dump_path = session.output_path("measure.dump")?;
    let file = std::fs::File::create(&dump_path).map_err(|e| write_error(&dump_path, e))?;
    write_dump_text(&built.measure, &header, std::io::BufWriter::new(file)).map_err(|e| write_error(&dump_path, e))?;
    let bin_path = session.output_path("measure.dyom")?;
    let file = std::fs::File::create(&bin_path).map_err(|e| write_error(&bin_path, e))?;
    write_dump_binary(&built.measure, &header, std::io::BufWriter::new(file)).map_err(|e| write_error(&bin_path, e))?;

    let total = built.total;
    let mut cover = Doc::new("equality cover", &hash);
    let mut rows = Vec::new();
    for block in &built.cover.blocks {
        let diam = g12(block.diameter());
        let (raw, norm) = (g12(block.mass), g12(block.mass / total));
        for q in block.cubes() {
            rows.push(vec![q.level().to_string(), q.code().to_string(), cube_cell(&q), diam.clone(), raw.clone(), norm.clone()]);
        }
    }
    cover.field("cubes", built.cover.len());
    cover.table("cover", vec!["level", "code", "cube", "diameter", "mass", "normalized_mass"], rows);
    session.save_doc("cover", &cover)?;

    let mut doc = Doc::new("frostman construct", &hash);
    params_fields(&mut doc, &built.params);
    doc.field("max_level", set.tree.max_level());
    doc.num("total", total);
    doc.field("cover_cubes", built.cover.len());
    doc.num("normalized_cover_mass", built.cover.total_mass() / total);
    let level_m = set.tree.occupied_count(built.params.m);
    if level_m <= AUDIT_LIMIT {
        let audit = built.measure.audit_monotonicity(AUDIT_FINDINGS);
        doc.field("monotonicity", if audit.holds() { "holds" } else { "violated" });
        doc.field("monotonicity_steps", audit.steps);
        doc.field("monotonicity_checked", audit.cubes_checked);
        doc.field("monotonicity_violations", audit.violations);
        if !audit.findings.is_empty() {
            let rows = audit
                .findings
                .iter()
                .map(|f| vec![f.step_level.to_string(), cube_cell(&f.cube), g12(f.before), g12(f.after)])
                .collect();
            doc.table("monotonicity findings", vec!["capped_level", "cube", "before", "after"], rows);
        }
    } else {
        doc.field("monotonicity", format!("skipped ({level_m} level-m cubes)"));
    }
    let bound = built.measure.branching_bound(s);
    doc.field("branching_premise", bound.premise);
    doc.field("branching_bound", if bound.holds { "holds" } else { "fails" });
    if let Some((q, margin)) = &bound.worst {
        doc.field("branching_worst", format!("{} margin {}", cube_cell(q), g12(*margin)));
    }
    doc.field("tree_file", "tree.dyot");
    doc.field("tree_crc32", format!("{crc:08x}"));
    doc.field("dump", "measure.dump measure.dyom");
    session.save_doc("construct", &doc)?;
    session.print(&doc)
}

fn regime_row(r: &RegimeReport) -> Vec<String> {
    let mut row = vec![r.regime.name().to_string(), r.samples.to_string(), g12(r.constant)];
    match &r.witness {
        Some(w) => row.extend([
            w.x.iter().map(|&v| g12(v)).collect::<Vec<_>>().join(" "),
            g12(w.r),
            g12(w.mass),
            g12(w.bound),
        ]),
        None => row.extend(["-".to_string(), "-".into(), "-".into(), "-".into()]),
    }
    row
}

fn sampling(c: &Config) -> Sampling {
    Sampling { random_centers: c.samples, seed: c.seed, ..Sampling::default() }
}

fn cmd_verify(session: &mut Session) -> Result<(), CliError> {
    let c = session.config;
    let bytes = read_input(&c.input)?;
    if detect(&bytes) != InputKind::Dump {
        return Err(CliError::Input(format!("{} is not a measure dump", c.input.display())));
    }
    let dump = read_dump(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", c.input.display())))?;
    let h = &dump.header;
    let tree_path = c.input.parent().unwrap_or(Path::new(".")).join(&h.tree_file);
    let tree_bytes = read_input(&tree_path)?;
    let tree = format::read_tree(&tree_bytes).map_err(|e: FormatError| CliError::Input(format!("{}: {e}", tree_path.display())))?;
    let crc = u32::from_le_bytes(tree_bytes[tree_bytes.len() - 4..].try_into().expect("tree files end in a checksum"));
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-11 * a.abs().max(b.abs());
    for (flag, given, dumped) in [("theta", c.theta.first().copied(), h.theta), ("s", c.s, h.s), ("t", c.t, h.t)] {
        if given.is_some_and(|g| !close(g, dumped)) {
            return Err(CliError::Input(format!("--{flag} {} does not match the dump's {}", given.unwrap(), g12(dumped))));
        }
    }
    if let [d] = deltas(c)?.as_slice() {
        if !close(*d, h.delta) {
            return Err(CliError::Input(format!("--delta {d} does not match the dump's {}", g12(h.delta))));
        }
    }
    let measure = dump
        .rebuild(Arc::new(tree), crc)
        .map_err(|e| CliError::Input(format!("measure dump does not match its tree: {e}")))?;
    let params = measure.params().clone();
    let cover = measure.equality_cover();
    let total = *measure.total();
    let report = decay_report(&measure, &params, &cover, total, &sampling(c))?;
    let digest = sha_hex(&bytes) + &sha_hex(&tree_bytes);
    let hash = config_hash(session.command, &digest, c);
    let mut doc = Doc::new("frostman verify", &hash);
    doc.field("construct_hash", &h.config_hash);
    params_fields(&mut doc, &params);
    doc.num("total", total);
    doc.field("cover_centers_max", Sampling::default().max_cover_centers);
    doc.field("random_centers", c.samples);
    doc.field("seed", c.seed);
    doc.field("ball_model", "union of the level-n' cubes meeting B(x, r), 2^(-n'-1) < r <= 2^-n'");
    for r in [&report.fine, &report.mid] {
        doc.num(&format!("{}_constant", r.regime.name()), r.constant);
    }
    doc.table(
        "regimes",
        vec!["regime", "samples", "constant", "witness_x", "witness_r", "witness_mass", "bound"],
        vec![regime_row(&report.fine), regime_row(&report.mid)],
    );
    session.save_doc("decay", &doc)?;
    session.print(&doc)
}

fn cmd_stability(session: &mut Session) -> Result<(), CliError> {
    let c = session.config;
    let set = load_set(c)?;
    let hash = config_hash(session.command, &set.digest, c);
    let theta = single(&c.theta, "theta")?;
    let grid = deltas(c)?;
    let (s, t) = (required(c.s, "s")?, required(c.t, "t")?);
    let r = constant_stability(set.tree.clone(), theta, s, t, &grid, &sampling(c))?;
    let mut doc = Doc::new("frostman stability", &hash);
    doc.num("theta", theta);
    doc.num("s", s);
    doc.num("t", t);
    doc.field("seed", c.seed);
    doc.num("mid_ratio", r.mid_ratio);
    doc.num("fine_ratio", r.fine_ratio);
    doc.num("mid_trend", r.mid_trend);
    doc.num("fine_trend", r.fine_trend);
    doc.num("min_total", r.min_total);
    doc.num("total_drop", r.total_drop);
    doc.num("scaled_mid_ratio", r.scaled_mid_ratio);
    doc.field("premise", if r.premise_failed { "failed (total mass vanishes across the grid)" } else { "holds" });
    let rows = r
        .rows
        .iter()
        .map(|row| {
            vec![
                g12(row.delta),
                row.m.to_string(),
                row.top.to_string(),
                g12(row.total),
                row.cover_size.to_string(),
                g12(row.fine),
                g12(row.mid),
            ]
        })
        .collect();
    doc.table("grid", vec!["delta", "m", "top", "total", "cover_cubes", "fine_constant", "mid_constant"], rows);
    session.save_doc("stability", &doc)?;
    session.print(&doc)
}
