//! The `ncvx` command line.
//!
//! Exit codes: 0 on success, 1 when a verification fails or a run cannot
//! complete, 2 on usage errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::bounds::{
    compare_nonadaptive, fano_latent_rhs, fano_rhs, kl_delta_theta, mi_exact_small, theorem1_t_lower,
};
use crate::discrepancy::{psi_bruteforce, psi_floor, verify_lemma1_exhaustive};
use crate::error::{Error, Result};
use crate::geometry::{
    build_packing_with_budget, packing_target, required_distance, verify_packing, AlphaVector, PackingSet,
    DEFAULT_RETRY_BUDGET,
};
use crate::harness::{
    aggregate, read_records, run_benchmark_in, write_records, BenchmarkConfig, BenchmarkContext, BenchmarkRecord,
    OptimizerSpec, ReconstructionPolicy, RunManifest, ThetaMode,
};
use crate::instance::{Coupling, HardInstance, HardnessParams, InstanceFile, DEFAULT_C};

#[derive(Debug, Parser)]
#[command(name = "ncvx", version, about = "Hard non-convex instances, coin oracles and query lower bounds")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "NCVX_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PackingKind {
    /// Every sign vector (d ≤ 2).
    Full,
    /// Randomized greedy construction.
    Greedy,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Evaluate an instance at a point.
    Eval(EvalArgs),
    /// Build a packing (or read one) and check it.
    VerifyPacking(VerifyPackingArgs),
    /// Brute-force the minimum discrepancy and compare with δc/2.
    VerifyPsi(VerifyPsiArgs),
    /// Check the KL inequality chain on a grid.
    VerifyKl(VerifyKlArgs),
    /// Exhaustive and randomized uniqueness check.
    VerifyLemma1(VerifyLemma1Args),
    /// Fano lower bound on the misidentification probability.
    Fano(FanoArgs),
    /// Exact single-round mutual information.
    Mi(MiArgs),
    /// Query lower bound for a target error.
    Tbound(TboundArgs),
    /// Grid-search rate against the adaptive rate.
    Compare(CompareArgs),
    /// Run optimizers against coin oracles.
    Bench(BenchArgs),
    /// Merge benchmark directories into a summary with bound columns.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ClassArgs {
    #[arg(long)]
    d: u32,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value = "signed")]
    coupling: Coupling,
}

impl ClassArgs {
    fn params(&self) -> Result<HardnessParams> {
        HardnessParams::new(self.d, self.delta, self.c, self.coupling)
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    class: ClassArgs,
    /// Sign vector as `+-+-` or `1,-1,1,-1`; drawn from the packing when absent.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Packing member used when no sign vector is given.
    #[arg(long, default_value_t = 0)]
    member: usize,
    #[arg(long, default_value_t = 0)]
    instance_id: u64,
    /// Destination file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', required = true)]
    x: Vec<f64>,
}

#[derive(Debug, Args)]
struct VerifyPackingArgs {
    #[arg(long)]
    d: Option<u32>,
    /// Check a packing JSON file instead of building one.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    target: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_RETRY_BUDGET)]
    retries: usize,
    /// Write the built packing here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyPsiArgs {
    #[command(flatten)]
    class: ClassArgs,
    /// Defaults to the full packing for d ≤ 2 and greedy otherwise.
    #[arg(long, value_enum)]
    packing: Option<PackingKind>,
    #[arg(long, default_value_t = 2)]
    steps: usize,
    /// Write the witness table here.
    #[arg(long)]
    witness: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyKlArgs {
    /// Points per axis.
    #[arg(long, default_value_t = 50)]
    grid: usize,
    /// Evaluate a single δ instead of the grid.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    theta0: f64,
}

#[derive(Debug, Args)]
struct VerifyLemma1Args {
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long, value_enum)]
    packing: Option<PackingKind>,
    /// Random complete sets to try.
    #[arg(long, default_value_t = 10_000)]
    fuzz: usize,
}

#[derive(Debug, Args)]
struct FanoArgs {
    #[arg(long)]
    d: Option<u32>,
    #[arg(long, default_value_t = 1)]
    ell: u64,
    /// One budget or a comma-separated sweep.
    #[arg(long = "T", value_delimiter = ',', default_value = "0")]
    t: Vec<u64>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Use the latent form with this mutual information.
    #[arg(long)]
    mi_sup: Option<f64>,
    #[arg(long)]
    packing_size: Option<usize>,
}

#[derive(Debug, Args)]
struct MiArgs {
    #[arg(long)]
    d: u32,
    #[arg(long, default_value_t = 1)]
    ell: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.0)]
    theta0: f64,
    #[arg(long, value_enum)]
    packing: Option<PackingKind>,
}

#[derive(Debug, Args)]
struct TboundArgs {
    #[arg(long)]
    d: u32,
    #[arg(long, default_value_t = 1)]
    ell: u64,
    #[arg(long)]
    eps: f64,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long = "T")]
    t: u64,
    #[arg(long)]
    d: u32,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long, default_value_t = 1)]
    ell: usize,
    /// Budgets to score, comma-separated.
    #[arg(long = "T", value_delimiter = ',', required = true)]
    t: Vec<u64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    trial_start: u64,
    /// Optimizers as `name` or `name:key=value,...`, separated by `;`.
    #[arg(long, value_delimiter = ';', default_value = "random_search")]
    optimizers: Vec<String>,
    #[arg(long, default_value = "snap_best")]
    policy: String,
    #[arg(long, default_value = "zero")]
    theta: String,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Record wall-clock time (makes output machine dependent).
    #[arg(long)]
    timing: bool,
    /// Directory for records.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Benchmark directories to merge.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Directory for summary.csv and summary.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Column-oriented output with an optional verdict.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
    verdict: Option<bool>,
}

impl Table {
    fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            verdict: None,
        }
    }

    fn row(mut self, r: Vec<Value>) -> Self {
        self.rows.push(r);
        self
    }

    fn verdict(mut self, pass: bool) -> Self {
        self.verdict = Some(pass);
        self
    }

    fn render(&self, format: Format, out: &mut dyn Write) -> Result<()> {
        match format {
            Format::Table => {
                let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(cell).collect()).collect();
                let widths: Vec<usize> = self
                    .columns
                    .iter()
                    .enumerate()
                    .map(|(i, c)| cells.iter().map(|r| r[i].len()).chain([c.len()]).max().unwrap_or(0))
                    .collect();
                let line = |items: Vec<&str>| -> String {
                    items
                        .iter()
                        .zip(&widths)
                        .map(|(s, w)| format!("{s:<w$}"))
                        .collect::<Vec<_>>()
                        .join("  ")
                        .trim_end()
                        .to_string()
                };
                writeln!(out, "{}", line(self.columns.clone()))?;
                for r in &cells {
                    writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
                }
                if let Some(pass) = self.verdict {
                    writeln!(out, "{}", if pass { "PASS" } else { "FAIL" })?;
                }
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(&mut *out);
                let mut header = self.columns.clone();
                if self.verdict.is_some() {
                    header.push("verdict");
                }
                w.write_record(&header)?;
                for r in &self.rows {
                    let mut fields: Vec<String> = r.iter().map(raw_cell).collect();
                    if let Some(pass) = self.verdict {
                        fields.push(if pass { "PASS" } else { "FAIL" }.into());
                    }
                    w.write_record(&fields)?;
                }
                w.flush()?;
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
                    .collect();
                let mut doc = json!({ "rows": rows });
                if let Some(pass) = self.verdict {
                    doc["verdict"] = json!(if pass { "PASS" } else { "FAIL" });
                }
                writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
            }
        }
        Ok(())
    }
}

/// Human-readable number: twelve decimals, trailing zeros dropped.
fn pretty(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v != 0.0 && (v.abs() >= 1e12 || v.abs() < 1e-6) {
        return format!("{v:.6e}");
    }
    let s = format!("{v:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => pretty(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn raw_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn parse_alpha(s: &str) -> Result<AlphaVector> {
    let signs: Vec<i64> = if s.contains(',') {
        s.split(',')
            .map(|t| t.trim().parse::<i64>().map_err(|_| Error::Format(format!("bad sign `{t}`"))))
            .collect::<Result<_>>()?
    } else {
        s.chars()
            .map(|ch| match ch {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::Format(format!("bad sign character `{other}`"))),
            })
            .collect::<Result<_>>()?
    };
    AlphaVector::try_from(signs)
}

fn choose_packing(kind: Option<PackingKind>, d: u32, seed: u64) -> Result<PackingSet> {
    match kind.unwrap_or(if d <= 2 { PackingKind::Full } else { PackingKind::Greedy }) {
        PackingKind::Full => PackingSet::all_sign_vectors(d),
        PackingKind::Greedy => crate::geometry::build_packing(d, seed, None),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return if code == 0 { 0 } else { 2 };
        }
    };
    match dispatch(&cli, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::InvalidParameter { .. }
                | Error::Domain(_)
                | Error::DimensionOutOfRange { .. }
                | Error::LengthMismatch { .. }
                | Error::InvalidSign { .. }
                | Error::NonFinite { .. }
                | Error::Format(_) => 2,
                _ => 1,
            }
        }
    }
}

/// Returns whether every check passed.
fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<bool> {
    let seed = cli.seed;
    let fmt = cli.format;
    let table = match &cli.command {
        Command::Gen(a) => return gen(a, seed, out),
        Command::Eval(a) => eval(a)?,
        Command::VerifyPacking(a) => verify_packing_cmd(a, seed)?,
        Command::VerifyPsi(a) => verify_psi(a, seed)?,
        Command::VerifyKl(a) => verify_kl(a)?,
        Command::VerifyLemma1(a) => verify_lemma1(a, seed)?,
        Command::Fano(a) => fano(a)?,
        Command::Mi(a) => mi(a, seed)?,
        Command::Tbound(a) => {
            let b = theorem1_t_lower(a.d, a.ell, a.eps)?;
            Table::new(vec!["d", "ell", "eps", "t_min", "t_order"]).row(vec![
                json!(a.d),
                json!(a.ell),
                num(a.eps),
                num(b.t_min),
                num(b.t_order),
            ])
        }
        Command::Compare(a) => {
            let (grid, adaptive) = compare_nonadaptive(a.t, a.d)?;
            Table::new(vec!["T", "d", "eps_nonadaptive", "eps_adaptive"]).row(vec![
                json!(a.t),
                json!(a.d),
                num(grid),
                num(adaptive),
            ])
        }
        Command::Bench(a) => bench(a, seed)?,
        Command::Report(a) => report(a)?,
    };
    table.render(fmt, out)?;
    Ok(table.verdict.unwrap_or(true))
}

fn gen(a: &GenArgs, seed: u64, out: &mut dyn Write) -> Result<bool> {
    let params = a.class.params()?;
    let alpha = match &a.alpha {
        Some(s) => parse_alpha(s)?,
        None => {
            let packing = crate::geometry::build_packing(params.d, seed, None)?;
            packing
                .members
                .get(a.member)
                .cloned()
                .ok_or_else(|| Error::InvalidParameter {
                    name: "member",
                    reason: format!("packing has {} members", packing.len()),
                })?
        }
    };
    let g = HardInstance::sampled(alpha, params, seed, a.instance_id)?;
    let text = g.to_file()?.to_json()? + "\n";
    match &a.out {
        Some(path) => write_file(path, text.as_bytes())?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(true)
}

fn eval(a: &EvalArgs) -> Result<Table> {
    let g = InstanceFile::from_json(&read_file(&a.instance)?)?.into_instance()?;
    let value = g.evaluate(&a.x)?;
    let grad = g.subgradient(&a.x)?;
    let min = g.global_min();
    Ok(Table::new(vec!["value", "inf", "gap", "subgradient"]).row(vec![
        num(value),
        num(min.value),
        num(value - min.value),
        Value::String(grad.iter().map(|v| pretty(*v)).collect::<Vec<_>>().join(",")),
    ]))
}

fn verify_packing_cmd(a: &VerifyPackingArgs, seed: u64) -> Result<Table> {
    let packing = match (&a.input, a.d) {
        (Some(path), _) => PackingSet::from_json(&read_file(path)?)?,
        (None, Some(d)) => build_packing_with_budget(d, seed, a.target, a.retries)?,
        (None, None) => {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: "give --d or --input".into(),
            })
        }
    };
    if let Some(path) = &a.out {
        write_file(path, packing.to_json()?.as_bytes())?;
    }
    let check = verify_packing(&packing);
    let target = a.target.unwrap_or(packing_target(packing.d) as usize);
    let pass = check.is_ok() && packing.len() >= target;
    Ok(Table::new(vec!["d", "size", "target", "required_distance", "min_distance", "violation"])
        .row(vec![
            json!(packing.d),
            json!(packing.len()),
            json!(target),
            json!(required_distance(packing.d)),
            packing.achieved_min_distance().map_or(Value::Null, |v| json!(v)),
            check.err().map_or(Value::Null, |v| Value::String(v.to_string())),
        ])
        .verdict(pass))
}

fn verify_psi(a: &VerifyPsiArgs, seed: u64) -> Result<Table> {
    let params = a.class.params()?;
    let packing = choose_packing(a.packing, params.d, seed)?;
    let report = psi_bruteforce(&params, &packing, a.steps)?;
    if let Some(path) = &a.witness {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        write_file(path, &buf)?;
    }
    let floor = psi_floor(&params);
    let applies = packing.achieved_min_distance().unwrap_or(0) >= required_distance(params.d);
    let pass = !applies || report.psi >= floor;
    Ok(Table::new(vec!["d", "delta", "c", "packing_size", "psi", "floor", "floor_applies"])
        .row(vec![
            json!(params.d),
            num(params.delta),
            num(params.c),
            json!(packing.len()),
            num(report.psi),
            num(floor),
            json!(applies),
        ])
        .verdict(pass))
}

fn verify_kl(a: &VerifyKlArgs) -> Result<Table> {
    let columns = vec!["points", "max_value_minus_bound1", "max_sup_minus_bound2"];
    let points: Vec<(f64, f64)> = match a.delta {
        Some(delta) => vec![(delta, a.theta0)],
        None => {
            let n = a.grid.max(1);
            (0..n)
                .flat_map(|i| {
                    let delta = 0.24 * (i + 1) as f64 / n as f64;
                    (0..n).map(move |j| (delta, (0.25 - delta / 2.0) * j as f64 / n as f64))
                })
                .collect()
        }
    };
    let mut worst1 = f64::NEG_INFINITY;
    let mut worst2 = f64::NEG_INFINITY;
    for (delta, theta0) in &points {
        let k = kl_delta_theta(*delta, *theta0)?;
        worst1 = worst1.max(k.value - k.bound1);
        worst2 = worst2.max(k.sup_form - k.bound2);
    }
    Ok(Table::new(columns)
        .row(vec![json!(points.len()), num(worst1), num(worst2)])
        .verdict(worst1 <= 0.0 && worst2 <= 0.0))
}

fn verify_lemma1(a: &VerifyLemma1Args, seed: u64) -> Result<Table> {
    let params = a.class.params()?;
    let packing = choose_packing(a.packing, params.d, seed)?;
    let r = verify_lemma1_exhaustive(&params, &packing, a.fuzz, seed)?;
    Ok(
        Table::new(vec!["d", "packing_size", "psi", "pairs_checked", "fuzz_sets", "max_count", "violations"])
            .row(vec![
                json!(params.d),
                json!(packing.len()),
                num(r.psi),
                json!(r.pairs_checked),
                json!(r.fuzz_sets),
                json!(r.max_count),
                json!(r.violations),
            ])
            .verdict(r.pass()),
    )
}

fn fano(a: &FanoArgs) -> Result<Table> {
    if let Some(mi_sup) = a.mi_sup {
        let size = a.packing_size.ok_or(Error::InvalidParameter {
            name: "packing-size",
            reason: "required with --mi-sup".into(),
        })?;
        let r = fano_latent_rhs(size, mi_sup)?;
        return Ok(Table::new(vec!["packing_size", "mi_sup", "raw", "clamped", "vacuous"]).row(vec![
            json!(size),
            num(mi_sup),
            num(r.raw),
            num(r.clamped),
            json!(r.vacuous),
        ]));
    }
    let d = a.d.ok_or(Error::InvalidParameter {
        name: "d",
        reason: "required".into(),
    })?;
    if a.ell == 0 || (d < 64 && a.ell > 1u64 << d) {
        return Err(Error::InvalidParameter {
            name: "ell",
            reason: format!("{} not in [1, 2^{d}]", a.ell),
        });
    }
    let mut table = Table::new(vec!["d", "ell", "T", "delta", "raw", "clamped", "vacuous"]);
    for &t in &a.t {
        let r = fano_rhs(d, a.ell, t, a.delta);
        table = table.row(vec![
            json!(d),
            json!(a.ell),
            json!(t),
            num(a.delta),
            num(r.raw),
            num(r.clamped),
            json!(r.vacuous),
        ]);
    }
    Ok(table)
}

fn mi(a: &MiArgs, seed: u64) -> Result<Table> {
    let packing = choose_packing(a.packing, a.d, seed)?;
    let value = mi_exact_small(a.d, a.ell, a.delta, a.theta0, &packing)?;
    let bound = a.ell as f64 * 2.0 * (1.0 + 2.0 * a.delta).powi(2);
    Ok(Table::new(vec!["d", "ell", "delta", "theta0", "packing_size", "mi", "bound"])
        .row(vec![
            json!(a.d),
            json!(a.ell),
            num(a.delta),
            num(a.theta0),
            json!(packing.len()),
            num(value),
            num(bound),
        ])
        .verdict(value <= bound))
}

fn bench(a: &BenchArgs, seed: u64) -> Result<Table> {
    let params = a.class.params()?;
    let mut checkpoints = a.t.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let optimizers = a
        .optimizers
        .iter()
        .map(|s| s.trim().parse::<OptimizerSpec>())
        .collect::<Result<Vec<_>>>()?;
    let config = BenchmarkConfig {
        ell: a.ell,
        trial_start: a.trial_start,
        tolerance: a.tolerance,
        policy: a.policy.parse::<ReconstructionPolicy>()?,
        theta_mode: a.theta.parse::<ThetaMode>()?,
        timing: a.timing,
        ..BenchmarkConfig::new(params, *checkpoints.last().unwrap_or(&0), a.trials, seed).with_optimizers(optimizers)
    };
    let ctx = BenchmarkContext::new(&config)?;
    let records = run_benchmark_in(&config, &ctx, &checkpoints)?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut buf = Vec::new();
        write_records(&records, &mut buf)?;
        write_file(&dir.join("records.csv"), &buf)?;
        let manifest = RunManifest::new(&config, &ctx, &checkpoints);
        write_file(
            &dir.join("manifest.json"),
            (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes(),
        )?;
    }
    Ok(curve_table(&records, false))
}

fn curve_table(records: &[BenchmarkRecord], with_bounds: bool) -> Table {
    let mut columns = vec![
        "d",
        "delta",
        "ell",
        "optimizer",
        "T",
        "trials",
        "success_rate",
        "success_se",
        "mean_eps",
        "eps_se",
        "worst_alpha_mean_eps",
        "identification_rate",
    ];
    if with_bounds {
        columns.extend(["fano_rhs", "theorem1_T_lower"]);
    }
    let mut table = Table::new(columns);
    for r in aggregate(records) {
        let mut row = vec![
            json!(r.d),
            num(r.delta),
            json!(r.ell),
            json!(r.optimizer),
            json!(r.t),
            json!(r.trials),
            num(r.success_rate),
            num(r.success_se),
            num(r.mean_eps),
            num(r.eps_se),
            num(r.worst_alpha_mean_eps),
            num(r.identification_rate),
        ];
        if with_bounds {
            row.push(num(fano_rhs(r.d, r.ell as u64, r.t, r.delta).raw));
            row.push(
                theorem1_t_lower(r.d, r.ell as u64, r.delta / 144.0)
                    .map_or(Value::Null, |b| num(b.t_min)),
            );
        }
        table = table.row(row);
    }
    table
}

fn report(a: &ReportArgs) -> Result<Table> {
    let mut records = Vec::new();
    for dir in &a.dirs {
        let manifest = dir.join("manifest.json");
        if !manifest.is_file() {
            return Err(Error::MissingManifest(dir.display().to_string()));
        }
        let _: RunManifest = serde_json::from_str(&read_file(&manifest)?)?;
        let file = std::fs::File::open(dir.join("records.csv"))
            .map_err(|e| Error::Io(format!("{}: {e}", dir.join("records.csv").display())))?;
        records.extend(read_records(file)?);
    }
    records.sort_by(|x, y| {
        (x.d, x.delta.to_bits(), x.ell, &x.optimizer, x.t, x.trial, x.seed).cmp(&(
            y.d,
            y.delta.to_bits(),
            y.ell,
            &y.optimizer,
            y.t,
            y.trial,
            y.seed,
        ))
    });
    records.dedup_by(|x, y| {
        (x.d, x.delta.to_bits(), x.ell, &x.optimizer, x.t, x.trial, x.seed)
            == (y.d, y.delta.to_bits(), y.ell, &y.optimizer, y.t, y.trial, y.seed)
    });
    let table = curve_table(&records, true);
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut csv = Vec::new();
        table.render(Format::Csv, &mut csv)?;
        write_file(&dir.join("summary.csv"), &csv)?;
        let mut txt = Vec::new();
        table.render(Format::Table, &mut txt)?;
        write_file(&dir.join("summary.txt"), &txt)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("ncvx").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn fano_example() {
        let (code, out, _) = call(&["fano", "--d", "10", "--ell", "1", "--T", "10", "--delta", "0.1"]);
        assert_eq!(code, 0);
        assert!(out.contains("0.8473"), "{out}");
        assert!(out.contains("false"));
    }

    #[test]
    fn psi_example() {
        let (code, out, _) = call(&["verify-psi", "--d", "1", "--delta", "0.1", "--c", "0.125"]);
        assert_eq!(code, 0);
        assert!(out.contains("0.0125") && out.contains("PASS"), "{out}");
    }

    #[test]
    fn usage_errors() {
        assert_eq!(call(&["fano", "--bogus"]).0, 2);
        assert_eq!(call(&[]).0, 2);
        assert_eq!(call(&["tbound", "--d", "10", "--eps", "0.5"]).0, 2);
        let (code, _, err) = call(&["compare", "--T", "4"]);
        assert_eq!(code, 2);
        assert!(err.contains("--d"));
    }

    #[test]
    fn help_exits_cleanly() {
        for sub in [
            "gen",
            "eval",
            "verify-packing",
            "verify-psi",
            "verify-kl",
            "verify-lemma1",
            "fano",
            "mi",
            "tbound",
            "compare",
            "bench",
            "report",
        ] {
            let (code, out, _) = call(&[sub, "--help"]);
            assert_eq!(code, 0, "{sub}");
            assert!(out.contains("Usage"), "{sub}");
        }
    }

    #[test]
    fn failed_verification_exits_one() {
        let (code, out, _) = call(&["verify-packing", "--d", "2", "--target", "17", "--retries", "50"]);
        assert_eq!(code, 1, "{out}");
    }

    #[test]
    fn pretty_numbers() {
        assert_eq!(pretty(0.012499999999999997), "0.0125");
        assert_eq!(pretty(-0.0), "0");
        assert_eq!(pretty(2.0), "2");
        assert_eq!(pretty(1e-9), "1.000000e-9");
    }

    #[test]
    fn alpha_parsing() {
        assert_eq!(parse_alpha("+-").unwrap(), AlphaVector::new(vec![1, -1]).unwrap());
        assert_eq!(parse_alpha("1,-1").unwrap(), AlphaVector::new(vec![1, -1]).unwrap());
        assert!(parse_alpha("+x").is_err());
        assert!(parse_alpha("1,2").is_err());
    }
}
