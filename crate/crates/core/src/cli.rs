//! Command dispatch for the `clusterforge` binary.
//!
//! Every subcommand writes its tables as CSV (17 significant digits) or
//! JSON, a `<name>.report.json` when it checks something, and a
//! `<subcommand>.manifest.json` listing the artifacts with the config hash,
//! seed and build identifier. Nothing time- or host-dependent is written,
//! so identical config and seed give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::derivative::{fd_validate, l1_remainder_check, DerivativeSettings, FdTarget, SlopeReport};
use crate::graphs::{count, enumerate, FamilyKind, VertexSplit};
use crate::majorant::{
    check_penrose_bound, check_proposition_g, check_tau1_bound, check_tau2_bound, g_majorant_default,
    pair_at, tree_weight_w, MajorantConstants,
};
use crate::oracle::{ursell_with, Oracle, OracleSettings};
use crate::quadrature::QuadratureSpec;
use crate::potential::{activity_bound, regularity_constant};
use crate::rng::Stream;
use crate::ruelle::{phi_abs_mass, phi_direct, phi_recursive, psi, psi_recursive, verify_tree_graph_inequality, PhiContext};
use crate::series::SeriesContext;
use crate::{Error, Result, Vec3};

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ADMISSIBILITY: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

const KEY_CLI: u64 = 0xC11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "clusterforge", version, about = "Cluster-expansion engine with oracle checks")]
pub struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides compute.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// c_β, B, z_max and the tree weight w.
    Constants,
    /// Count a graph family.
    Graphs {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        /// Number of white vertices.
        #[arg(long, default_value_t = 1)]
        white: usize,
        /// Also write every member graph, one per line.
        #[arg(long)]
        list: bool,
    },
    /// Oracle Ξ, ρ^(1), ρ^(2) and ω^(2) at the configured radii.
    Oracle,
    /// Series coefficients, and the χ identity checks on the product grid.
    Series,
    /// Recursion identities and the tree-graph inequality on random configurations.
    Ruelle,
    /// The majorant G and the τ / Penrose bound chain.
    Majorant,
    /// Finite-difference slopes of the potential derivatives, on the product grid.
    DerivativeCheck,
    /// Aggregate every report in the output directory.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Graphs { .. } => "graphs",
            Command::Oracle => "oracle",
            Command::Series => "series",
            Command::Ruelle => "ruelle",
            Command::Majorant => "majorant",
            Command::DerivativeCheck => "derivative-check",
            Command::Report => "report",
        }
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Admissibility { .. } => EXIT_ADMISSIBILITY,
        Error::Parse { .. } | Error::Configuration(_) => EXIT_CONFIG,
        _ => EXIT_ERROR,
    }
}

/// A table with a header; cells are numbers or text.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Extra metadata: a `#` JSON line in CSV, a `header` field in JSON.
    pub header_json: Option<Value>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            header_json: None,
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        self.rows.push(row);
    }

    fn to_csv(&self, meta: &Meta) -> String {
        let mut s = format!("# config_hash={},seed={}\n", meta.config_hash, meta.seed);
        if let Some(h) = &self.header_json {
            s.push_str(&format!("# {h}\n"));
        }
        s.push_str(&self.header.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(csv_cell).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    fn to_json(&self, meta: &Meta) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj: serde_json::Map<String, Value> =
                    self.header.iter().cloned().zip(r.iter().cloned()).collect();
                Value::Object(obj)
            })
            .collect();
        let mut v = json!({"config_hash": meta.config_hash, "seed": meta.seed, "table": self.name, "rows": rows});
        if let Some(h) = &self.header_json {
            v["header"] = h.clone();
        }
        v
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.16e}"),
            _ => n.to_string(),
        },
        Value::String(s) if s.contains(',') || s.contains('"') => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| Value::String(x.to_string()))
}

#[derive(Clone, Debug, Serialize)]
struct Meta {
    config_hash: String,
    seed: u64,
}

/// Collects artifacts for one run and writes them with the manifest.
struct Sink {
    dir: PathBuf,
    format: Format,
    meta: Meta,
    written: Vec<String>,
    failed: Vec<String>,
}

impl Sink {
    fn table(&mut self, t: &Table) -> Result<()> {
        let (file, body) = match self.format {
            Format::Csv => (format!("{}.csv", t.name), t.to_csv(&self.meta)),
            Format::Json => (
                format!("{}.json", t.name),
                serde_json::to_string_pretty(&t.to_json(&self.meta))? + "\n",
            ),
        };
        self.write(&file, &body)
    }

    fn report(&mut self, name: &str, passed: bool, details: Value) -> Result<()> {
        if !passed {
            self.failed.push(name.to_string());
        }
        let v = json!({
            "name": name,
            "passed": passed,
            "config_hash": self.meta.config_hash,
            "seed": self.meta.seed,
            "details": details,
        });
        self.write(&format!("{name}.report.json"), &(serde_json::to_string_pretty(&v)? + "\n"))
    }

    fn write(&mut self, file: &str, body: &str) -> Result<()> {
        fs::write(self.dir.join(file), body)?;
        self.written.push(file.to_string());
        Ok(())
    }

    fn manifest(&mut self, sub: &str, config_text: &str) -> Result<()> {
        let v = json!({
            "subcommand": sub,
            "config_hash": self.meta.config_hash,
            "seed": self.meta.seed,
            "build_id": BUILD_ID,
            "config": config_text,
            "artifacts": self.written,
        });
        fs::write(
            self.dir.join(format!("{sub}.manifest.json")),
            serde_json::to_string_pretty(&v)? + "\n",
        )?;
        Ok(())
    }
}

/// Parses arguments, runs, and returns the exit code; errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// `main_with_args` inside a dedicated pool of `threads` workers.
pub fn main_with_threads<I, T>(args: I, threads: usize) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| main_with_args(args)),
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            EXIT_ERROR
        }
    }
}

/// Thread count from CLUSTERFORGE_THREADS (None = available parallelism).
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("CLUSTERFORGE_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Error::Configuration(format!("CLUSTERFORGE_THREADS must be a positive integer, got '{s}'"))),
        Err(_) => Ok(None),
    }
}

/// Runs one subcommand. Returns false when a check failed.
pub fn run(cli: &Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.compute.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.to_string_lossy().into_owned();
    }
    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir)?;
    let mut sink = Sink {
        dir,
        format: cli.format,
        meta: Meta {
            config_hash: cfg.hash(),
            seed: cfg.compute.seed,
        },
        written: Vec::new(),
        failed: Vec::new(),
    };
    match &cli.command {
        Command::Constants => constants(&cfg, &mut sink)?,
        Command::Graphs { kind, n, white, list } => graphs(kind, *n, *white, *list, &mut sink)?,
        Command::Oracle => oracle(&cfg, &mut sink)?,
        Command::Series => series(&cfg, &mut sink)?,
        Command::Ruelle => ruelle(&cfg, &mut sink)?,
        Command::Majorant => majorant(&cfg, &mut sink)?,
        Command::DerivativeCheck => derivative_check(&cfg, &mut sink)?,
        Command::Report => report(&mut sink)?,
    }
    sink.manifest(cli.command.name(), &cfg.content_text())?;
    Ok(sink.failed.is_empty())
}

fn kv(name: &str, rows: &[(&str, f64)]) -> Table {
    let mut t = Table::new(name, &["quantity", "value"]);
    for (k, v) in rows {
        t.push(vec![Value::String(k.to_string()), num(*v)]);
    }
    t
}

fn constants(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let pot = cfg.potential()?;
    let params = cfg.ensemble(&pot)?;
    let beta = params.beta;
    let b = pot.b()?;
    let c = regularity_constant(&pot, beta)?;
    let z_max = activity_bound(c, b, beta);
    let mut rows = vec![
        ("c_beta", c),
        ("B", b),
        ("z_max", z_max),
        ("z", params.activity_z),
        ("w(z)", tree_weight_w(params.activity_z, c, b, beta)?),
    ];
    if z_max.is_finite() {
        rows.push(("w(z_max/2)", tree_weight_w(0.5 * z_max, c, b, beta)?));
        rows.push(("w(z_max)", tree_weight_w(z_max, c, b, beta)?));
    }
    if let Ok(k) = MajorantConstants::new(&pot, &params) {
        if let Ok(g0) = k.g_hat0() {
            rows.push(("G_hat(0)", g0));
        }
    }
    sink.table(&kv("constants", &rows))
}

fn graphs(kind: &str, n: usize, white: usize, list: bool, sink: &mut Sink) -> Result<()> {
    let k: FamilyKind = kind.parse()?;
    if white > n {
        return Err(Error::Configuration(format!("white count {white} exceeds n = {n}")));
    }
    let c = count(k, white, n - white)?;
    let mut t = Table::new("graphs", &["kind", "n", "white", "count"]);
    t.push(vec![
        Value::String(kind.to_string()),
        json!(n),
        json!(white),
        json!(c),
    ]);
    sink.table(&t)?;
    if list {
        let split = VertexSplit::sized(white, n - white)?;
        let mut body = String::new();
        for g in enumerate(k, &split)? {
            body.push_str(&g.to_string());
            body.push('\n');
        }
        sink.write("graphs_list.txt", &body)?;
    }
    Ok(())
}

fn radii_in_box(cfg: &RunConfig, l: f64) -> Vec<f64> {
    cfg.compute.radii.iter().copied().filter(|r| *r <= l).collect()
}

fn oracle(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let pot = cfg.potential()?;
    let params = cfg.ensemble(&pot)?;
    let o = Oracle::new(&pot, pot.b()?, &params, cfg.oracle_settings())?;
    let mut t = Table::new("oracle", &["quantity", "radius", "value", "stderr", "tail_bound"]);
    t.header_json = Some(json!({"settings": cfg.oracle_settings()}));
    let tail = num(o.tail_bound());
    let xi = o.partition_function();
    t.push(vec![json!("Xi"), num(0.0), num(xi.value), num(xi.stderr), tail.clone()]);
    let r1 = o.ev(&[[0.0; 3]]);
    t.push(vec![json!("rho1"), num(0.0), num(r1.v), num(r1.e), tail.clone()]);
    for r in radii_in_box(cfg, params.box_side) {
        let p = pair_at(r);
        let r2 = o.ev(&p);
        let w2 = ursell_with(&o, &p);
        t.push(vec![json!("rho2"), num(r), num(r2.v), num(r2.e), tail.clone()]);
        t.push(vec![json!("omega2"), num(r), num(w2.v), num(w2.e), tail.clone()]);
    }
    sink.table(&t)
}

fn random_tuple<const N: usize>(s: &mut Stream, side: f64) -> [Vec3; N] {
    std::array::from_fn(|_| s.point_in_box(side))
}

fn series(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let pot = cfg.potential()?;
    let params = cfg.ensemble(&pot)?;
    let order = cfg.compute.order;
    let ctx = SeriesContext::new(&pot, params, cfg.quadrature())?;
    let mut t = Table::new("series", &["quantity", "radius", "order", "value", "stderr"]);
    let one = ctx.rho_series(&[[0.0; 3]], order)?;
    for n in 1..=order {
        t.push(vec![json!("rho1"), num(0.0), json!(n), num(one.term(n)), num(one.term_stderr(n))]);
    }
    for r in radii_in_box(cfg, params.box_side) {
        let p = pair_at(r);
        let rho = ctx.rho_series(&p, order)?;
        let om = ctx.ursell_series(&p, order)?;
        for n in 2..=order {
            t.push(vec![json!("rho2"), num(r), json!(n), num(rho.term(n)), num(rho.term_stderr(n))]);
            t.push(vec![json!("omega2"), num(r), json!(n), num(om.term(n)), num(om.term_stderr(n))]);
        }
    }
    sink.table(&t)?;

    let ctx = SeriesContext::new(&pot, params, QuadratureSpec::Grid(cfg.grid()))?;
    let tol = 1e-10;
    let mut s = Stream::new(cfg.compute.seed, &[KEY_CLI, 1], 0);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut id = Table::new("series_identities", &["identity", "sample", "max_gap"]);
    for i in 0..cfg.compute.samples {
        let p3: [Vec3; 3] = random_tuple(&mut s, params.box_side);
        let p4: [Vec3; 4] = random_tuple(&mut s, params.box_side);
        for (name, r) in [
            ("chi3", ctx.chi3_identity_check(&p3, order.max(3), tol)),
            ("chi4", ctx.chi4_identity_check(&p4, order.max(4), tol)),
        ] {
            let gap = match r {
                Ok(rep) => rep.max_gap,
                Err(Error::IdentityViolation { gap, .. }) => {
                    failures += 1;
                    gap
                }
                Err(e) => return Err(e),
            };
            worst = worst.max(gap);
            id.push(vec![json!(name), json!(i), num(gap)]);
        }
    }
    sink.table(&id)?;
    sink.report(
        "series_identities",
        failures == 0,
        json!({"tolerance": tol, "max_gap": worst, "failures": failures}),
    )
}

fn ruelle(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let pot = cfg.potential()?;
    let params = cfg.ensemble(&pot)?;
    let mut s = Stream::new(cfg.compute.seed, &[KEY_CLI, 2], 0);
    let mut t = Table::new("ruelle", &["n", "configs", "max_phi_rel_err", "max_psi_rel_err", "tree_violations"]);
    let mut ok = true;
    for n in 1..=5usize {
        let (mut e_phi, mut e_psi, mut viol) = (0.0f64, 0.0f64, 0usize);
        for _ in 0..cfg.compute.samples {
            let config: Vec<Vec3> = (0..n).map(|_| s.point_in_box(params.box_side)).collect();
            let ctx = PhiContext::new(&pot, params.beta, config);
            for ni in 1..=n {
                let white: Vec<usize> = (0..ni).collect();
                let black: Vec<usize> = (ni..n).collect();
                let scale = phi_abs_mass(&ctx, &white, &black)?.max(f64::MIN_POSITIVE);
                let d = phi_direct(&ctx, &white, &black)?;
                let r = phi_recursive(&ctx, &white, &black)?;
                e_phi = e_phi.max((d - r).abs() / scale);
                let pd = psi(&ctx, &white, &black)?;
                let pr = psi_recursive(&ctx, &white, &black)?;
                e_psi = e_psi.max((pd - pr).abs() / pd.max(f64::MIN_POSITIVE));
                match verify_tree_graph_inequality(&ctx, &white, &black) {
                    Ok(_) => {}
                    Err(Error::BoundViolation(_)) => viol += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        ok &= e_phi <= 1e-12 && e_psi <= 1e-12 && viol == 0;
        t.push(vec![json!(n), json!(cfg.compute.samples), num(e_phi), num(e_psi), json!(viol)]);
    }
    sink.table(&t)?;
    sink.report("ruelle", ok, json!({"tolerance": 1e-12}))
}

fn majorant(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let pot = cfg.potential()?;
    let params = cfg.ensemble(&pot)?;
    let g = g_majorant_default(&pot, &params)?;
    let mut t = Table::new("majorant_g", &["r", "value"]);
    t.header_json = Some(json!({"tail_model": g.g.tail_model}));
    for (r, v) in g.g.grid.iter().zip(&g.g.values) {
        t.push(vec![num(*r), num(*v)]);
    }
    sink.table(&t)?;
    let prop = check_proposition_g(&g.g);
    let integral_gap = (g.g.radial_integral() - g.g_hat0).abs() / g.g_hat0.abs().max(f64::MIN_POSITIVE);
    let ctx = SeriesContext::new(&pot, params, cfg.bound_quadrature())?;
    let order = cfg.compute.order;
    let radii: Vec<f64> = radii_in_box(cfg, params.box_side);
    let mut rep = check_tau1_bound(&ctx, &g, order)?;
    rep.extend(check_tau2_bound(&ctx, &g, &radii, order)?);
    rep.extend(check_penrose_bound(&ctx, &g, &radii, order)?);
    let passed = prop.passed && rep.passed() && (g.g_hat0 == 0.0 || integral_gap <= 0.01);
    sink.report(
        "majorant",
        passed,
        json!({
            "proposition_g": prop,
            "g_hat0": g.g_hat0,
            "integral_relative_gap": integral_gap,
            "bounds": rep,
        }),
    )
}

fn slope_json(r: &SlopeReport) -> Value {
    json!({
        "target": r.target,
        "slope": r.slope,
        "intercept": r.intercept,
        "per_t_values": r.per_t.iter().map(|p| json!({"t": p.0, "r": p.1, "noise": p.2})).collect::<Vec<_>>(),
        "seeds": r.seeds,
        "conclusive": r.conclusive,
        "note": r.note,
    })
}

fn derivative_check(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let pot = cfg.potential()?;
    let params = cfg.ensemble(&pot)?;
    let v = cfg.perturbation()?;
    let settings = DerivativeSettings {
        oracle: OracleSettings {
            n_cap: cfg.compute.n_cap,
            quadrature: QuadratureSpec::Grid(cfg.grid()),
        },
        sample_points: cfg.compute.samples,
        seed: cfg.compute.seed,
        radial_points: cfg.compute.r_points,
        ..DerivativeSettings::default()
    };
    let ts = &cfg.compute.t_values;
    let mut reports = Vec::new();
    for name in &cfg.compute.targets {
        let rep = if name == "omega2_l1" {
            l1_remainder_check(&v, ts, &pot, &params, &settings)?
        } else {
            let target: FdTarget = name.parse()?;
            fd_validate(target, &v, ts, &pot, &params, &settings)?
        };
        reports.push(rep);
    }
    let mut t = Table::new("derivative_check", &["target", "t", "remainder", "noise"]);
    for r in &reports {
        for p in &r.per_t {
            t.push(vec![json!(r.target), num(p.0), num(p.1), num(p.2)]);
        }
    }
    sink.table(&t)?;
    let passed = reports.iter().all(|r| r.slope_within(1.8, 2.2));
    sink.report(
        "derivative_check",
        passed,
        Value::Array(reports.iter().map(slope_json).collect()),
    )
}

fn report(sink: &mut Sink) -> Result<()> {
    let mut names: Vec<PathBuf> = fs::read_dir(&sink.dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".report.json"))
        .collect();
    names.sort();
    let mut entries = Vec::new();
    let mut all = true;
    for p in &names {
        let v: Value = serde_json::from_str(&fs::read_to_string(p)?)?;
        let passed = v.get("passed").and_then(Value::as_bool).unwrap_or(false);
        all &= passed;
        entries.push(json!({"name": v.get("name").cloned().unwrap_or(Value::Null), "file": file_name(p), "passed": passed}));
    }
    let v = json!({
        "config_hash": sink.meta.config_hash,
        "seed": sink.meta.seed,
        "reports": entries,
        "all_passed": all,
    });
    if !all {
        sink.failed.push("summary".into());
    }
    sink.write("summary.json", &(serde_json::to_string_pretty(&v)? + "\n"))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
