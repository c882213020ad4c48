//! Command line front end.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{load_model, parse_override, LoadedModel, DISABILITY_MODEL};
use crate::error::{Error, Result};
use crate::markov::{transition_probability_curves, Numerics, Scheme};
use crate::moments::{
    block_product_integral, clt_margins, conditional_moments, correlation_from_covariance,
    covariance_hattendorff, mgf, partial_moments, scaling_identity, CovarianceCurves, MultiIndex,
};
use crate::montecarlo::Simulator;

pub mod svg;

#[derive(Debug, Parser)]
#[command(
    name = "msmoments",
    version,
    about = "Moments of multi-state present values"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    #[value(name = "csv+svg")]
    CsvSvg,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model file, or the name of a bundled model.
    #[arg(long, default_value = DISABILITY_MODEL)]
    pub model: String,
    /// Override a model parameter, NAME=VALUE.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Maximal grid step in years.
    #[arg(long, default_value_t = 1.0 / 256.0)]
    pub h: f64,
    #[arg(long, default_value = "midpoint-exp")]
    pub scheme: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct Range {
    /// First time point.
    #[arg(long)]
    pub s0: Option<f64>,
    /// Last time point.
    #[arg(long)]
    pub s1: Option<f64>,
    /// Terminal time; defaults to the model horizon.
    #[arg(long)]
    pub t: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a model.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Transition probabilities P(s, t).
    Probabilities {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
    },
    /// Reserves V_i^(e_l)(s, t).
    Reserves {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
    },
    /// Conditional and partial moments for all y <= k.
    Moments {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
        #[arg(long)]
        k: String,
    },
    /// Conditional covariance matrices.
    Covariance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
    },
    /// Conditional correlation matrices.
    Correlation {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
    },
    /// Moment generating function F(theta; s0, t).
    Mgf {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
        #[arg(long, allow_hyphen_values = true)]
        theta: String,
    },
    /// Partial moments from the block product integral, with a check of the
    /// block structure.
    BlockProdint {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
        #[arg(long)]
        k: String,
    },
    /// Monte Carlo estimates of the moments.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
        #[arg(long, default_value_t = 100_000)]
        paths: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial state.
        #[arg(long, default_value_t = 0)]
        state: usize,
        /// Also estimate the raw moments for all y <= k.
        #[arg(long)]
        k: Option<String>,
    },
    /// Normal-approximation safety margins for a portfolio.
    Margins {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
        #[arg(long, default_value_t = 0.975)]
        confidence: f64,
        /// Number of independent, identical policies.
        #[arg(long, default_value_t = 1000)]
        policies: u64,
        /// Initial state.
        #[arg(long, default_value_t = 0)]
        state: usize,
    },
    /// Covariance and correlation curves of the disability example.
    ReproduceDisability {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        range: Range,
    },
}

/// Machine-readable error record written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Parse(_)
        | Error::InvalidArgument(_)
        | Error::CapExceeded { .. } => 2,
        Error::Eval(_)
        | Error::NonFinite { .. }
        | Error::MissingMoment(_)
        | Error::BoundExceeded { .. } => 3,
        Error::Validation(_) => 4,
    }
}

pub fn error_record(err: &Error) -> ErrorRecord {
    let code = exit_code(err);
    ErrorRecord {
        kind: match code {
            2 => "config",
            3 => "numerical",
            _ => "validation",
        },
        exit_code: code,
        message: err.to_string(),
    }
}

/// Parses the arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(&cli.command) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            0
        }
        Err(err) => {
            let record = error_record(&err);
            eprintln!("{}", serde_json::to_string(&record).expect("serializable"));
            record.exit_code
        }
    }
}

/// Resolved settings shared by all commands.
pub struct RunConfig {
    pub loaded: LoadedModel,
    pub numerics: Numerics,
    pub out: PathBuf,
    pub format: Format,
}

impl RunConfig {
    pub fn from_common(common: &Common) -> Result<Self> {
        let overrides = common
            .params
            .iter()
            .map(|p| parse_override(p))
            .collect::<Result<Vec<_>>>()?;
        let loaded = load_model(&common.model, &overrides)?;
        if !(common.h > 0.0 && common.h.is_finite()) {
            return Err(Error::invalid(format!(
                "--h must be positive, got {}",
                common.h
            )));
        }
        let numerics = Numerics {
            h: common.h,
            scheme: common.scheme.parse::<Scheme>()?,
            ..Numerics::default()
        };
        Ok(RunConfig {
            loaded,
            numerics,
            out: common.out.clone(),
            format: common.format,
        })
    }

    /// `(s0, s1, t)` with the defaults `0`, `t` and the model horizon.
    fn range(&self, r: &Range) -> Result<(f64, f64, f64)> {
        let t = r.t.unwrap_or(self.loaded.model.horizon());
        let s0 = r.s0.unwrap_or(0.0);
        let s1 = r.s1.unwrap_or(t);
        if !(0.0 <= s0 && s0 <= s1 && s1 <= t) {
            return Err(Error::invalid(format!(
                "need 0 <= s0 <= s1 <= t, got s0 = {s0}, s1 = {s1}, t = {t}"
            )));
        }
        if t > self.loaded.model.horizon() {
            return Err(Error::invalid(format!(
                "t = {t} exceeds the model horizon {}",
                self.loaded.model.horizon()
            )));
        }
        Ok((s0, s1, t))
    }

    fn svg(&self) -> bool {
        self.format == Format::CsvSvg
    }

    fn write(&self, name: &str, contents: &str) -> Result<String> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Error::Config(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, contents)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(format!("wrote {}", path.display()))
    }

    fn names(&self) -> Vec<String> {
        self.loaded
            .payments
            .names()
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

/// Formats a number with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table built row by row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut text = header
            .iter()
            .map(|h| h.as_ref())
            .collect::<Vec<_>>()
            .join(",");
        text.push('\n');
        Csv { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let line = cells
            .iter()
            .map(|c| c.as_ref())
            .collect::<Vec<_>>()
            .join(",");
        self.text.push_str(&line);
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

fn parse_list(src: &str, what: &str) -> Result<Vec<f64>> {
    src.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad {what} entry `{p}`")))
        })
        .collect()
}

fn parse_k(src: &str, cfg: &RunConfig) -> Result<MultiIndex> {
    let k = MultiIndex::parse(src)?;
    if k.len() != cfg.loaded.payments.len() {
        return Err(Error::invalid(format!(
            "--k has {} entries but the model has {} contracts",
            k.len(),
            cfg.loaded.payments.len()
        )));
    }
    Ok(k)
}

fn in_range(nodes: &[f64], s1: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    let tol = 1e-12 * s1.abs().max(1.0);
    nodes
        .iter()
        .copied()
        .enumerate()
        .filter(move |&(_, s)| s <= s1 + tol)
}

/// Column label for a multi-index, e.g. `1-0-2`.
fn label(y: &MultiIndex) -> String {
    y.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

pub fn run_command(cmd: &Command) -> Result<Vec<String>> {
    match cmd {
        Command::Validate { common } => validate(&RunConfig::from_common(common)?),
        Command::Probabilities { common, range } => {
            probabilities(&RunConfig::from_common(common)?, range)
        }
        Command::Reserves { common, range } => reserves(&RunConfig::from_common(common)?, range),
        Command::Moments { common, range, k } => {
            moments(&RunConfig::from_common(common)?, range, k)
        }
        Command::Covariance { common, range } => {
            covariance(&RunConfig::from_common(common)?, range, false)
        }
        Command::Correlation { common, range } => {
            covariance(&RunConfig::from_common(common)?, range, true)
        }
        Command::Mgf {
            common,
            range,
            theta,
        } => mgf_cmd(&RunConfig::from_common(common)?, range, theta),
        Command::BlockProdint { common, range, k } => {
            block_prodint(&RunConfig::from_common(common)?, range, k)
        }
        Command::Simulate {
            common,
            range,
            paths,
            seed,
            state,
            k,
        } => simulate(
            &RunConfig::from_common(common)?,
            range,
            *paths,
            *seed,
            *state,
            k.as_deref(),
        ),
        Command::Margins {
            common,
            range,
            confidence,
            policies,
            state,
        } => margins(
            &RunConfig::from_common(common)?,
            range,
            *confidence,
            *policies,
            *state,
        ),
        Command::ReproduceDisability { common, range } => {
            reproduce_disability(&RunConfig::from_common(common)?, range)
        }
    }
}

fn validate(cfg: &RunConfig) -> Result<Vec<String>> {
    let m = &cfg.loaded.model;
    let mut bps = m.breakpoints();
    bps.extend(cfg.loaded.payments.breakpoints());
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let params: Vec<String> = cfg
        .loaded
        .parameters
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    Ok(vec![
        format!("states: {}", m.state_names().join(", ")),
        format!("contracts: {}", cfg.names().join(", ")),
        format!("horizon: {}", m.horizon()),
        format!("breakpoints: {bps:?}"),
        format!("parameters: {}", params.join(", ")),
        "ok".into(),
    ])
}

fn probabilities(cfg: &RunConfig, range: &Range) -> Result<Vec<String>> {
    let (s0, s1, t) = cfg.range(range)?;
    let j = cfg.loaded.model.num_states();
    let (grid, ps) = transition_probability_curves(&cfg.loaded.model, s0, t, &cfg.numerics)?;
    let mut header = vec!["s".to_string()];
    for a in 0..j {
        for b in 0..j {
            header.push(format!("p_{a}_{b}"));
        }
    }
    let mut csv = Csv::new(&header);
    let mut xs = Vec::new();
    let mut series: Vec<(String, Vec<f64>)> =
        (0..j).map(|b| (format!("p_0_{b}"), Vec::new())).collect();
    for (g, s) in in_range(grid.nodes(), s1) {
        let mut row = vec![num(s)];
        for a in 0..j {
            for b in 0..j {
                row.push(num(ps[g][(a, b)]));
            }
        }
        csv.row(&row);
        xs.push(s);
        for (b, (_, ys)) in series.iter_mut().enumerate() {
            ys.push(ps[g][(0, b)]);
        }
    }
    let mut out = vec![cfg.write("probabilities.csv", &csv.finish())?];
    if cfg.svg() {
        let chart = svg::line_chart(&format!("P_0j(s, {t})"), "s", &xs, &series);
        out.push(cfg.write("probabilities.svg", &chart)?);
    }
    Ok(out)
}

fn reserves(cfg: &RunConfig, range: &Range) -> Result<Vec<String>> {
    let (s0, s1, t) = cfg.range(range)?;
    let curves = covariance_hattendorff(
        &cfg.loaded.model,
        &cfg.loaded.payments,
        s0,
        t,
        &cfg.numerics,
    )?;
    let j = cfg.loaded.model.num_states();
    let n = cfg.loaded.payments.len();
    let mut header = vec!["s".to_string()];
    for i in 0..j {
        for l in 0..n {
            header.push(format!("reserve_{i}_{}", l + 1));
        }
    }
    let mut csv = Csv::new(&header);
    let mut xs = Vec::new();
    let mut series: Vec<(String, Vec<f64>)> =
        cfg.names().into_iter().map(|nm| (nm, Vec::new())).collect();
    for (g, s) in in_range(curves.nodes(), s1) {
        let mut row = vec![num(s)];
        for i in 0..j {
            for l in 0..n {
                row.push(num(curves.reserve(l, g)[i]));
            }
        }
        csv.row(&row);
        xs.push(s);
        for (l, (_, ys)) in series.iter_mut().enumerate() {
            ys.push(curves.reserve(l, g)[0]);
        }
    }
    let mut out = vec![cfg.write("reserves.csv", &csv.finish())?];
    if cfg.svg() {
        let chart = svg::line_chart(&format!("Reserves in state 0, t = {t}"), "s", &xs, &series);
        out.push(cfg.write("reserves.svg", &chart)?);
    }
    Ok(out)
}

fn moments(cfg: &RunConfig, range: &Range, k: &str) -> Result<Vec<String>> {
    let (s0, s1, t) = cfg.range(range)?;
    let k = parse_k(k, cfg)?;
    let j = cfg.loaded.model.num_states();
    let grid = partial_moments(
        &cfg.loaded.model,
        &cfg.loaded.payments,
        &k,
        s0,
        t,
        &cfg.numerics,
    )?;
    let cond = conditional_moments(&grid);

    let mut header = vec!["s".to_string()];
    for y in grid.order() {
        for i in 0..j {
            header.push(format!("V_{i}_{}", label(y)));
        }
    }
    let mut csv = Csv::new(&header);
    let mut pheader = vec!["s".to_string()];
    for y in grid.order() {
        for a in 0..j {
            for b in 0..j {
                pheader.push(format!("V_{}_{a}_{b}", label(y)));
            }
        }
    }
    let mut partial = Csv::new(&pheader);
    for (g, s) in in_range(grid.nodes(), s1) {
        let mut row = vec![num(s)];
        for v in cond.values_at(g) {
            row.extend(v.iter().map(|&x| num(x)));
        }
        csv.row(&row);
        let mut prow = vec![num(s)];
        for y in grid.order() {
            let m = grid.partial(y, g).unwrap();
            for a in 0..j {
                for b in 0..j {
                    prow.push(num(m[(a, b)]));
                }
            }
        }
        partial.row(&prow);
    }
    Ok(vec![
        cfg.write("moments.csv", &csv.finish())?,
        cfg.write("partial_moments.csv", &partial.finish())?,
    ])
}

/// CSV text, abscissae and named plot series.
type CurveTable = (String, Vec<f64>, Vec<(String, Vec<f64>)>);

fn covariance_csv(curves: &CovarianceCurves, s1: f64, j: usize, correlation: bool) -> CurveTable {
    let n = curves.num_contracts();
    let prefix = if correlation { "corr" } else { "cov" };
    let mut header = vec!["s".to_string(), "state".to_string()];
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a..n {
            if correlation && a == b {
                continue;
            }
            header.push(format!("{prefix}_{}{}", a + 1, b + 1));
            pairs.push((a, b));
        }
    }
    if correlation {
        for a in 0..n {
            header.push(format!("degenerate_{}", a + 1));
        }
    }
    let mut csv = Csv::new(&header);
    let mut xs = Vec::new();
    let mut series: Vec<(String, Vec<f64>)> = pairs
        .iter()
        .map(|(a, b)| (format!("{prefix}_{}{}", a + 1, b + 1), Vec::new()))
        .collect();
    for (g, s) in in_range(curves.nodes(), s1) {
        for i in 0..j {
            let mut row = vec![num(s), i.to_string()];
            let (m, flags) = if correlation {
                let c = curves.correlation_matrix(i, g);
                (c.matrix, c.degenerate)
            } else {
                (curves.covariance_matrix(i, g).clone(), Vec::new())
            };
            for &(a, b) in &pairs {
                row.push(num(m[(a, b)]));
            }
            row.extend(flags.iter().map(|&f| u8::from(f).to_string()));
            csv.row(&row);
            if i == 0 {
                for (p, &(a, b)) in pairs.iter().enumerate() {
                    series[p].1.push(m[(a, b)]);
                }
            }
        }
        xs.push(s);
    }
    (csv.finish(), xs, series)
}

fn covariance(cfg: &RunConfig, range: &Range, correlation: bool) -> Result<Vec<String>> {
    let (s0, s1, t) = cfg.range(range)?;
    let curves = covariance_hattendorff(
        &cfg.loaded.model,
        &cfg.loaded.payments,
        s0,
        t,
        &cfg.numerics,
    )?;
    let j = cfg.loaded.model.num_states();
    let (text, xs, series) = covariance_csv(&curves, s1, j, correlation);
    let stem = if correlation {
        "correlation"
    } else {
        "covariance"
    };
    let mut out = vec![cfg.write(&format!("{stem}.csv"), &text)?];
    if cfg.svg() {
        let chart = svg::line_chart(&format!("{stem} in state 0, t = {t}"), "s", &xs, &series);
        out.push(cfg.write(&format!("{stem}.svg"), &chart)?);
    }
    Ok(out)
}

fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut header = vec!["from".to_string()];
    header.extend((0..m.ncols()).map(|b| format!("to_{b}")));
    let mut csv = Csv::new(&header);
    for a in 0..m.nrows() {
        let mut row = vec![a.to_string()];
        row.extend(m.row(a).iter().map(|&x| num(x)));
        csv.row(&row);
    }
    csv.finish()
}

fn mgf_cmd(cfg: &RunConfig, range: &Range, theta: &str) -> Result<Vec<String>> {
    let (s0, _, t) = cfg.range(range)?;
    let theta = parse_list(theta, "theta")?;
    let f = mgf(
        &cfg.loaded.model,
        &cfg.loaded.payments,
        &theta,
        s0,
        t,
        &cfg.numerics,
    )?;
    Ok(vec![cfg.write("mgf.csv", &matrix_csv(&f))?])
}

#[derive(Serialize)]
struct BlockReport {
    k: String,
    s: f64,
    t: f64,
    dimension: usize,
    scaling_max_abs: f64,
    scaling_max_rel: f64,
}

fn block_prodint(cfg: &RunConfig, range: &Range, k: &str) -> Result<Vec<String>> {
    let (s0, _, t) = cfg.range(range)?;
    let k = parse_k(k, cfg)?;
    let model = &cfg.loaded.model;
    let product = block_product_integral(model, &cfg.loaded.payments, &k, s0, t, &cfg.numerics)?;
    let report = scaling_identity(&product, model.integrated_interest(s0, t, cfg.numerics.h)?);
    let j = model.num_states();
    let mut csv = Csv::new(&["y", "from", "to", "value"]);
    for (i, y) in product.order.iter().enumerate() {
        let v = product.partial(i);
        for a in 0..j {
            for b in 0..j {
                csv.row(&[label(y), a.to_string(), b.to_string(), num(v[(a, b)])]);
            }
        }
    }
    let summary = BlockReport {
        k: k.to_string(),
        s: s0,
        t,
        dimension: product.matrix.nrows(),
        scaling_max_abs: report.max_abs,
        scaling_max_rel: report.max_rel,
    };
    let json = serde_json::to_string_pretty(&summary).expect("serializable");
    Ok(vec![
        cfg.write("block_prodint.csv", &csv.finish())?,
        cfg.write("block_prodint_report.json", &json)?,
        json,
    ])
}

fn simulate(
    cfg: &RunConfig,
    range: &Range,
    paths: u64,
    seed: u64,
    state: usize,
    k: Option<&str>,
) -> Result<Vec<String>> {
    let (s0, _, t) = cfg.range(range)?;
    let sim = Simulator::new(
        &cfg.loaded.model,
        &cfg.loaded.payments,
        s0,
        t,
        &cfg.numerics,
    )?;
    let samples = sim.run(state, paths, seed)?;
    let n = cfg.loaded.payments.len();
    let mut csv = Csv::new(&["quantity", "value", "std_error"]);
    for l in 0..n {
        let e = samples.mean(l);
        csv.row(&[format!("mean_{}", l + 1), num(e.value), num(e.std_error)]);
    }
    for a in 0..n {
        for b in a..n {
            let e = samples.covariance(a, b);
            csv.row(&[
                format!("cov_{}{}", a + 1, b + 1),
                num(e.value),
                num(e.std_error),
            ]);
        }
    }
    for (j, p) in samples.occupancy().iter().enumerate() {
        let se = (p * (1.0 - p) / samples.len() as f64).sqrt();
        csv.row(&[format!("occupancy_{j}"), num(*p), num(se)]);
    }
    if let Some(k) = k {
        let k = parse_k(k, cfg)?;
        for y in crate::moments::lex_enumerate(&k) {
            let e = samples.raw_moment(&y)?;
            csv.row(&[format!("raw_{}", label(&y)), num(e.value), num(e.std_error)]);
        }
    }
    Ok(vec![cfg.write("simulate.csv", &csv.finish())?])
}

fn margins(
    cfg: &RunConfig,
    range: &Range,
    confidence: f64,
    policies: u64,
    state: usize,
) -> Result<Vec<String>> {
    let (s0, _, t) = cfg.range(range)?;
    if state >= cfg.loaded.model.num_states() {
        return Err(Error::invalid(format!("state {state} does not exist")));
    }
    let curves = covariance_hattendorff(
        &cfg.loaded.model,
        &cfg.loaded.payments,
        s0,
        t,
        &cfg.numerics,
    )?;
    let cov = curves.covariance_matrix(state, 0);
    let m = clt_margins(cov, policies, confidence)?;
    let mut csv = Csv::new(&["contract", "reserve", "margin"]);
    let mut total = 0.0;
    for (l, name) in cfg.names().iter().enumerate() {
        let reserve = curves.reserve(l, 0)[state];
        total += reserve;
        csv.row(&[name.clone(), num(reserve), num(m.per_contract[l])]);
    }
    csv.row(&["total".to_string(), num(total), num(m.aggregate)]);
    Ok(vec![
        cfg.write("margins.csv", &csv.finish())?,
        format!("z = {}", m.z),
    ])
}

/// Outcome of the qualitative check on the disability example.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitativeCheck {
    /// `rho(death benefit, life annuity)` at the first time point.
    pub death_annuity: f64,
    pub death_disability: f64,
    pub annuity_disability: f64,
}

impl QualitativeCheck {
    pub fn from_correlation(rho: &DMatrix<f64>) -> Self {
        QualitativeCheck {
            death_annuity: rho[(0, 1)],
            death_disability: rho[(0, 2)],
            annuity_disability: rho[(1, 2)],
        }
    }

    pub fn death_annuity_negative(&self) -> bool {
        self.death_annuity < 0.0
    }

    pub fn death_annuity_largest(&self) -> bool {
        let a = self.death_annuity.abs();
        a >= self.death_disability.abs() && a >= self.annuity_disability.abs()
    }
}

fn reproduce_disability(cfg: &RunConfig, range: &Range) -> Result<Vec<String>> {
    if cfg.loaded.payments.len() != 3 {
        return Err(Error::invalid(
            "the disability example needs exactly three contracts",
        ));
    }
    let range = Range {
        s0: range.s0.or(Some(0.0)),
        s1: range.s1.or(Some(25.0)),
        t: range.t.or(Some(70.0)),
    };
    let (s0, s1, t) = cfg.range(&range)?;
    let curves = covariance_hattendorff(
        &cfg.loaded.model,
        &cfg.loaded.payments,
        s0,
        t,
        &cfg.numerics,
    )?;
    let nodes: Vec<(usize, f64)> = in_range(curves.nodes(), s1).collect();

    let mut cov = Csv::new(&[
        "s", "cov_11", "cov_12", "cov_13", "cov_22", "cov_23", "cov_33",
    ]);
    let mut corr = Csv::new(&[
        "s",
        "corr_12",
        "corr_13",
        "corr_23",
        "degenerate_1",
        "degenerate_2",
        "degenerate_3",
    ]);
    let cov_pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    let corr_pairs = [(0, 1), (0, 2), (1, 2)];
    let mut xs = Vec::new();
    let mut cov_series: Vec<(String, Vec<f64>)> = cov_pairs
        .iter()
        .map(|(a, b)| (format!("cov_{}{}", a + 1, b + 1), Vec::new()))
        .collect();
    let mut corr_series: Vec<(String, Vec<f64>)> = corr_pairs
        .iter()
        .map(|(a, b)| (format!("corr_{}{}", a + 1, b + 1), Vec::new()))
        .collect();
    for &(g, s) in &nodes {
        let c = curves.covariance_matrix(0, g);
        let r = curves.correlation_matrix(0, g);
        let mut row = vec![num(s)];
        for (p, &(a, b)) in cov_pairs.iter().enumerate() {
            row.push(num(c[(a, b)]));
            cov_series[p].1.push(c[(a, b)]);
        }
        cov.row(&row);
        let mut row = vec![num(s)];
        for (p, &(a, b)) in corr_pairs.iter().enumerate() {
            row.push(num(r.matrix[(a, b)]));
            corr_series[p].1.push(r.matrix[(a, b)]);
        }
        row.extend(r.degenerate.iter().map(|&f| u8::from(f).to_string()));
        corr.row(&row);
        xs.push(s);
    }
    let check = QualitativeCheck::from_correlation(
        &correlation_from_covariance(curves.covariance_matrix(0, 0)).matrix,
    );
    let verdict = |ok: bool| if ok { "yes" } else { "NO" };
    Ok(vec![
        cfg.write("disability_covariance.csv", &cov.finish())?,
        cfg.write("disability_correlation.csv", &corr.finish())?,
        cfg.write(
            "disability_covariance.svg",
            &svg::line_chart(&format!("Covariances in state 0, t = {t}"), "s", &xs, &cov_series),
        )?,
        cfg.write(
            "disability_correlation.svg",
            &svg::line_chart(&format!("Correlations in state 0, t = {t}"), "s", &xs, &corr_series),
        )?,
        format!(
            "correlations at s = {s0}: death/annuity {:.6}, death/disability {:.6}, annuity/disability {:.6}",
            check.death_annuity, check.death_disability, check.annuity_disability
        ),
        format!(
            "death/annuity correlation negative: {}; largest in magnitude: {}",
            verdict(check.death_annuity_negative()),
            verdict(check.death_annuity_largest())
        ),
    ])
}
