//! Run configuration, persistence of fields, scattering data and ledgers, and
//! the command-line driver behind the `alfven` binary.
//!
//! Fields are stored as raw little-endian f64 with a JSON sidecar manifest.
//! CSV numbers use Rust's shortest round-trip formatting, so identical runs
//! produce identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{divcurl_probe, sobolev_probe, weight_probe, EnergyLedger, LedgerConfig, LedgerSet, LedgerSummary};
use crate::error::{Error, Result};
use crate::experiments::{delta_limit_experiment, rigidity_sweep, uniformity_sweep, LimitParams, RigidityParams, SweepParams};
use crate::greens::{grad_p_direct_spec, grad_p_spectral_at, greens_grad, image_sum, image_tail_bound, kernel_bound_fit, DirectOptions, ImageKernelQuery};
use crate::packet::{gaussian_packet_spec, PacketSpec};
use crate::scattering::{residual_lined, ScatteringAccumulator, ScatteringField, ScatteringManifest};
use crate::solver3d::{run, DtPolicy, RunOptions, RunReport, Solver, SpecState, System};
use crate::spectral::{Parity, Transform};
use crate::types::{ElsasserState, GridSpec, ScalarField, VectorField3, WeightContext, SIGMA_DEFAULT};

pub const FORMAT_VERSION: &str = "1";

/// Sidecar manifest of a stored Elsasser state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldManifest {
    pub version: String,
    pub grid: GridSpec,
    pub delta: f64,
    pub sigma: f64,
    pub a: f64,
    pub t: f64,
    /// `zp1 zp2 zp3 zm1 zm2 zm3`
    pub components: Vec<String>,
    pub parities: Vec<Parity>,
    /// Payload file name, relative to the manifest.
    pub payload: String,
    pub bytes: u64,
}

fn write_f64s(path: &Path, chunks: &[&[f64]]) -> Result<u64> {
    let mut buf = Vec::with_capacity(chunks.iter().map(|c| c.len() * 8).sum());
    for c in chunks {
        for v in c.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, &buf)?;
    Ok(buf.len() as u64)
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let raw = fs::read(path)?;
    if raw.len() != expected * 8 {
        return Err(Error::Format(format!("{}: {} bytes, expected {}", path.display(), raw.len(), expected * 8)));
    }
    Ok(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Write `<dir>/<name>.bin` and `<dir>/<name>.json`.
pub fn save_field(dir: &Path, name: &str, state: &ElsasserState, sigma: f64, a: f64) -> Result<FieldManifest> {
    let g = state.grid();
    let comps: Vec<&[f64]> = [&state.zp, &state.zm].iter().flat_map(|v| v.c.iter().map(|c| &c.data[..])).collect();
    let payload = format!("{name}.bin");
    let bytes = write_f64s(&dir.join(&payload), &comps)?;
    let m = FieldManifest {
        version: FORMAT_VERSION.into(),
        grid: g,
        delta: g.delta,
        sigma,
        a,
        t: state.t,
        components: ["zp1", "zp2", "zp3", "zm1", "zm2", "zm3"].iter().map(|s| s.to_string()).collect(),
        parities: vec![Parity::Cos, Parity::Cos, Parity::Sin, Parity::Cos, Parity::Cos, Parity::Sin],
        payload,
        bytes,
    };
    write_json(&dir.join(format!("{name}.json")), &m)?;
    Ok(m)
}

/// Manifest only; the payload is not touched.
pub fn read_manifest(path: &Path) -> Result<FieldManifest> {
    let m: FieldManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if m.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported field format version {:?}", m.version)));
    }
    m.grid.validate()?;
    if m.components.len() != 6 || m.parities.len() != 6 || m.delta != m.grid.delta {
        return Err(Error::Format("manifest does not describe an Elsasser pair".into()));
    }
    Ok(m)
}

pub fn load_field(path: &Path) -> Result<(FieldManifest, ElsasserState)> {
    let m = read_manifest(path)?;
    let g = m.grid;
    let n = g.len();
    let dir = path.parent().unwrap_or(Path::new("."));
    let data = read_f64s(&dir.join(&m.payload), 6 * n)?;
    let comp = |i: usize| ScalarField { grid: g, data: data[i * n..(i + 1) * n].to_vec() };
    let v = |o: usize| VectorField3 { c: [comp(o), comp(o + 1), comp(o + 2)] };
    let st = ElsasserState { zp: v(0), zm: v(3), t: m.t };
    Ok((m, st))
}

/// Scattering field as nodal values `[component][x3][x2][u]` plus manifest.
pub fn save_scattering(dir: &Path, name: &str, sc: &ScatteringField) -> Result<ScatteringManifest> {
    let mut tr = Transform::new(sc.grid);
    let nodal = sc.values.iter().map(|c| tr.inverse(c).map(|f| f.data)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = nodal.iter().map(|v| &v[..]).collect();
    write_f64s(&dir.join(format!("{name}.bin")), &refs)?;
    let m = sc.manifest();
    write_json(&dir.join(format!("{name}.json")), &m)?;
    Ok(m)
}

/// Nodal values of a stored scattering field, one vector per component.
pub fn load_scattering(path: &Path) -> Result<(ScatteringManifest, [Vec<f64>; 3])> {
    let m: ScatteringManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if m.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported scattering format version {:?}", m.version)));
    }
    let n = m.grid.len();
    let data = read_f64s(&path.with_extension("bin"), 3 * n)?;
    let c = |i: usize| data[i * n..(i + 1) * n].to_vec();
    Ok((m.clone(), [c(0), c(1), c(2)]))
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Plain CSV with a header row.
pub fn write_csv(path: &Path, columns: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&columns.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_ledger_csv(path: &Path, led: &EnergyLedger) -> Result<()> {
    write_csv(path, &led.columns(), &led.csv_rows())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
    pub lh1: f64,
    pub lh2: f64,
    pub mv: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n1: 64, n2: 64, lh1: 16.0 * std::f64::consts::PI, lh2: 16.0 * std::f64::consts::PI, mv: 8 }
    }
}

impl GridConfig {
    pub fn spec(&self, delta: f64) -> Result<GridSpec> {
        GridSpec::with_box(self.n1, self.n2, self.lh1, self.lh2, self.mv, delta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerOptions {
    pub kmax: usize,
    pub every: usize,
    pub monitors: bool,
    /// One ledger per position parameter; the configured `a` is always included first.
    pub extra_a: Vec<f64>,
}

impl Default for LedgerOptions {
    fn default() -> Self {
        LedgerOptions { kmax: 2, every: 4, monitors: true, extra_a: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterOptions {
    /// Times at which residuals against the final field are tabulated.
    pub checkpoints: Vec<f64>,
}

impl Default for ScatterOptions {
    fn default() -> Self {
        ScatterOptions { checkpoints: vec![5.0, 10.0, 20.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigidityOptions {
    pub deltas: Vec<f64>,
    pub horizons: Vec<f64>,
    pub params: RigidityParams,
}

impl Default for RigidityOptions {
    fn default() -> Self {
        RigidityOptions { deltas: vec![1.0, 0.25], horizons: vec![20.0, 40.0], params: RigidityParams::default() }
    }
}

/// Complete run configuration. Every field has a default; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub grid: GridConfig,
    pub delta: f64,
    pub sigma: f64,
    pub a: f64,
    pub packet: PacketSpec,
    /// Stored initial state; when set it replaces the packet.
    pub initial: Option<PathBuf>,
    pub nonlinear: bool,
    pub policy: DtPolicy,
    pub t_end: f64,
    pub boundary_tol: f64,
    pub ledger: LedgerOptions,
    /// Snapshot times written by `simulate`.
    pub snapshots: Vec<f64>,
    pub scatter: ScatterOptions,
    pub rigidity: RigidityOptions,
    pub limit: LimitParams,
    pub sweep: SweepParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            grid: GridConfig::default(),
            delta: 1.0,
            sigma: SIGMA_DEFAULT,
            a: 0.0,
            packet: PacketSpec::default(),
            initial: None,
            nonlinear: true,
            policy: DtPolicy::default(),
            t_end: 10.0,
            boundary_tol: 1e-6,
            ledger: LedgerOptions::default(),
            snapshots: Vec::new(),
            scatter: ScatterOptions::default(),
            rigidity: RigidityOptions::default(),
            limit: LimitParams::default(),
            sweep: SweepParams::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be positive, got {v}")))
    }
}

impl Config {
    pub fn from_json(s: &str) -> Result<Config> {
        let c: Config = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.spec(self.delta)?;
        positive("sigma", self.sigma)?;
        positive("packet widths", self.packet.widths.0.min(self.packet.widths.1))?;
        if !(self.a.is_finite() && self.t_end.is_finite()) {
            return Err(Error::Param("a and t_end must be finite".into()));
        }
        match self.policy {
            DtPolicy::Cfl { cfl } => positive("cfl", cfl)?,
            DtPolicy::Directional { cfl, dt_max } => {
                positive("cfl", cfl)?;
                positive("dt_max", dt_max)?;
            }
            DtPolicy::Fixed { dt } => positive("dt", dt)?,
        }
        if self.ledger.kmax == 0 {
            return Err(Error::Param("ledger kmax must be at least 1".into()));
        }
        for d in self.rigidity.deltas.iter().chain(&self.sweep.deltas).chain(&self.limit.deltas) {
            positive("delta", *d)?;
        }
        Ok(())
    }

    pub fn ledger_configs(&self, delta: f64) -> Vec<LedgerConfig> {
        std::iter::once(self.a)
            .chain(self.ledger.extra_a.iter().copied())
            .map(|a| LedgerConfig {
                kmax: self.ledger.kmax,
                sigma: self.sigma,
                every: self.ledger.every,
                monitors: self.ledger.monitors,
                ..LedgerConfig::slab(delta, a)
            })
            .collect()
    }

    fn run_options(&self, t_end: f64) -> RunOptions {
        RunOptions { boundary_tol: self.boundary_tol, support_radius: self.packet.support_radius(), ..RunOptions::to(t_end) }
    }

    /// Initial state: the stored field if configured, otherwise the packet.
    pub fn initial_state(&self) -> Result<SpecState> {
        if let Some(p) = &self.initial {
            let (_, st) = load_field(p)?;
            return SpecState::from_physical(&st);
        }
        let (zp, zm) = gaussian_packet_spec(self.grid.spec(self.delta)?, &self.packet)?;
        Ok(SpecState { zp, zm, t: 0.0 })
    }

    fn system(&self) -> System {
        if self.nonlinear {
            System::slab()
        } else {
            System::slab().linear()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F64,
}

#[derive(Debug, Parser)]
#[command(name = "alfven", version, about = "Alfven waves in thin slabs: runs, scattering fields and experiments")]
pub struct Cli {
    /// JSON configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Packet seed (overrides the configuration).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, global = true, value_enum, default_value = "f64")]
    pub precision: Precision,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward or backward run with ledgers and snapshots.
    Simulate,
    /// Run with scattering accumulation and a residual table.
    Scatter,
    /// Time-reversal experiment.
    Rigidity,
    /// Thin-slab limit against the planar system.
    Limit,
    /// Uniformity sweep over thickness and position.
    Sweep,
    /// Self-test battery.
    Check,
}

/// Exit codes of [`cli`].
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MONITOR: i32 = 3;

enum Outcome {
    Done,
    Aborted(PathBuf),
    Failed(String),
}

/// Parse `argv` and run; returns the process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Cli::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cfg = match load_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid configuration: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = fs::create_dir_all(&args.out).and_then(|_| {
        fs::write(args.out.join("config.json"), serde_json::to_string_pretty(&cfg).map_err(std::io::Error::other)? + "\n")
    }) {
        eprintln!("cannot write to {}: {e}", args.out.display());
        return EXIT_FAIL;
    }
    let res = match args.command {
        Command::Simulate => simulate(&cfg, &args.out),
        Command::Scatter => scatter(&cfg, &args.out),
        Command::Rigidity => rigidity(&cfg, &args.out, args.threads),
        Command::Limit => limit(&cfg, &args.out, args.threads),
        Command::Sweep => sweep(&cfg, &args.out, args.threads),
        Command::Check => check(&cfg, &args.out),
    };
    match res {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::Aborted(p)) => {
            eprintln!("monitor abort; report at {}", p.display());
            EXIT_MONITOR
        }
        Ok(Outcome::Failed(msg)) => {
            eprintln!("{msg}");
            EXIT_FAIL
        }
        Err(e @ (Error::Param(_) | Error::Shape(_) | Error::Localization(_))) => {
            eprintln!("invalid configuration: {e}");
            EXIT_CONFIG
        }
        Err(Error::Monitor { t, reason }) => {
            eprintln!("monitor abort at t = {t}: {reason}");
            EXIT_MONITOR
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}

fn load_config(args: &Cli) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(p) => Config::from_json(&fs::read_to_string(p)?)?,
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        cfg.packet.seed = seed;
        cfg.limit.packet.seed = seed;
        cfg.sweep.packet.seed = seed;
    }
    if args.threads == 0 {
        return Err(Error::Param("threads must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn snapshot(dir: &Path, s: &SpecState, cfg: &Config) -> Result<()> {
    let snaps = dir.join("snapshots");
    fs::create_dir_all(&snaps)?;
    save_field(&snaps, &format!("t{}", s.t), &s.to_physical()?, cfg.sigma, cfg.a)?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    report: &'a RunReport,
    ledgers: Vec<LedgerSummary>,
}

fn ledger_file(i: usize, led: &EnergyLedger) -> String {
    if i == 0 {
        "ledger.csv".into()
    } else {
        format!("ledger_a{}.csv", led.cfg.a)
    }
}

fn simulate(cfg: &Config, out: &Path) -> Result<Outcome> {
    let s0 = cfg.initial_state()?;
    let g = s0.grid();
    snapshot(out, &s0, cfg)?;
    let mut solver = Solver::new(g, cfg.system(), cfg.policy)?;
    let mut led = LedgerSet::new(g, cfg.ledger_configs(g.delta))?;
    let dir = if cfg.t_end >= s0.t { 1.0 } else { -1.0 };
    let mut stops: Vec<f64> = cfg.snapshots.iter().copied().filter(|t| (t - s0.t) * dir > 0.0 && (cfg.t_end - t) * dir > 0.0).collect();
    stops.sort_by(|a, b| (dir * a).total_cmp(&(dir * b)));
    stops.push(cfg.t_end);
    let opts = cfg.run_options(cfg.t_end);
    let t0 = s0.t;
    let mut cur = s0;
    let mut report: Option<RunReport> = None;
    for (i, &t) in stops.iter().enumerate() {
        let r = run(&mut solver, cur, &RunOptions { t_end: t, ..opts.clone() }, &mut [&mut led])?;
        cur = r.state;
        let aborted = r.report.abort.is_some();
        report = Some(match report {
            None => r.report,
            Some(mut a) => {
                crate::experiments::merge_report(&mut a, r.report);
                a
            }
        });
        if aborted {
            break;
        }
        if i + 1 < stops.len() || t != t0 {
            snapshot(out, &cur, cfg)?;
        }
    }
    let report = report.unwrap_or_default();
    for (i, l) in led.ledgers.iter().enumerate() {
        write_ledger_csv(&out.join(ledger_file(i, l)), l)?;
    }
    let path = out.join("summary.json");
    write_json(&path, &SimulateSummary { report: &report, ledgers: led.ledgers.iter().map(|l| l.summary()).collect() })?;
    Ok(if report.abort.is_some() { Outcome::Aborted(path) } else { Outcome::Done })
}

#[derive(Serialize)]
struct ScatterSummary {
    report: RunReport,
    t_max: f64,
    tail_bound: [f64; 2],
    c_hat: [f64; 2],
    /// `(T, residual_plus, residual_minus)`
    residuals: Vec<[f64; 3]>,
    warnings: Vec<String>,
}

fn scatter(cfg: &Config, out: &Path) -> Result<Outcome> {
    let s0 = cfg.initial_state()?;
    let g = s0.grid();
    let mut solver = Solver::new(g, cfg.system(), cfg.policy)?;
    let mut stops: Vec<f64> = cfg.scatter.checkpoints.iter().copied().filter(|t| *t > s0.t && *t < cfg.t_end).collect();
    stops.sort_by(f64::total_cmp);
    stops.push(cfg.t_end);
    let mut acc = ScatteringAccumulator::new(&s0, &stops);
    let mut led = LedgerSet::new(g, cfg.ledger_configs(g.delta))?;
    let opts = cfg.run_options(cfg.t_end);
    let (_, report) = crate::experiments::run_segments(&mut solver, s0, &opts, &stops, &mut [&mut acc, &mut led], |_| {})?;
    let sc = acc.finalize(cfg.sigma, cfg.a);
    let ctx = WeightContext::new(cfg.sigma, cfg.a);
    let mut residuals = Vec::new();
    for (t, lined) in &acc.snapshots {
        residuals.push([*t, residual_lined(&sc[0], &lined[0], &ctx)?, residual_lined(&sc[1], &lined[1], &ctx)?]);
    }
    save_scattering(out, "scattering_plus", &sc[0])?;
    save_scattering(out, "scattering_minus", &sc[1])?;
    write_csv(
        &out.join("residuals.csv"),
        &["t".into(), "residual_plus".into(), "residual_minus".into()],
        &residuals.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
    )?;
    for (i, l) in led.ledgers.iter().enumerate() {
        write_ledger_csv(&out.join(ledger_file(i, l)), l)?;
    }
    let aborted = report.abort.is_some();
    let summary = ScatterSummary {
        t_max: sc[0].t_max,
        tail_bound: [sc[0].tail_bound, sc[1].tail_bound],
        c_hat: [sc[0].c_hat, sc[1].c_hat],
        residuals,
        warnings: sc.iter().flat_map(|s| s.warnings.clone()).collect(),
        report,
    };
    let path = out.join("summary.json");
    write_json(&path, &summary)?;
    Ok(if aborted { Outcome::Aborted(path) } else { Outcome::Done })
}

fn rigidity(cfg: &Config, out: &Path, threads: usize) -> Result<Outcome> {
    let r = &cfg.rigidity;
    let per = crate::experiments::par_map(&r.deltas, threads, |&delta| -> Result<_> {
        let (zp, zm) = gaussian_packet_spec(cfg.grid.spec(delta)?, &cfg.packet)?;
        rigidity_sweep(&SpecState { zp, zm, t: 0.0 }, &r.params, &r.horizons)
    });
    let reps: Vec<_> = per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let cols = ["delta", "t_end", "a_recentred", "eta_hat", "tail", "data_norm", "recovered_norm", "rho", "reversibility"];
    let rows: Vec<Vec<f64>> = reps
        .iter()
        .map(|x| vec![x.delta, x.t_end, x.a_recentred, x.eta_hat, x.tail, x.data_norm, x.recovered_norm, x.rho, x.reversibility])
        .collect();
    write_csv(&out.join("rigidity.csv"), &cols.map(String::from), &rows)?;
    let path = out.join("summary.json");
    write_json(&path, &reps)?;
    Ok(if reps.iter().any(|x| x.abort.is_some()) { Outcome::Aborted(path) } else { Outcome::Done })
}

fn limit(cfg: &Config, out: &Path, threads: usize) -> Result<Outcome> {
    let rep = delta_limit_experiment(cfg.grid.spec(1.0)?, &cfg.limit, threads)?;
    let mut cols = vec!["delta".to_string()];
    for x in &rep.x3_slices {
        for q in ["diff", "z3", "sc_diff", "sc_z3"] {
            cols.push(format!("{q}@{x}"));
        }
    }
    let rows: Vec<Vec<f64>> = rep
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.delta];
            for i in 0..rep.x3_slices.len() {
                v.extend([r.slice_diff[i], r.slice_z3[i], r.scattering_diff[i], r.scattering_z3[i]]);
            }
            v
        })
        .collect();
    write_csv(&out.join("limit.csv"), &cols, &rows)?;
    let path = out.join("summary.json");
    write_json(&path, &rep)?;
    Ok(if rep.rows.iter().any(|r| r.report.abort.is_some()) { Outcome::Aborted(path) } else { Outcome::Done })
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    spread: f64,
    spread_delta: f64,
    max_ratio: f64,
    max_ratio_delta: f64,
    bootstrap_ok: bool,
    max_boot_ratio: f64,
    summaries: &'a [LedgerSummary],
    reports: Vec<&'a RunReport>,
}

fn sweep(cfg: &Config, out: &Path, threads: usize) -> Result<Outcome> {
    let rep = uniformity_sweep(cfg.grid.spec(1.0)?, &cfg.sweep, threads)?;
    let cols = ["delta", "a", "max_agg_ratio", "max_agg_delta_ratio", "boot_ratio", "max_z1", "sup_gradp", "sup_integrand_plus", "sup_integrand_minus"];
    let rows: Vec<Vec<f64>> = rep
        .summaries
        .iter()
        .map(|s| vec![s.delta, s.a, s.max_agg_ratio, s.max_agg_delta_ratio, s.boot_ratio, s.max_z1, s.sup_gradp, s.sup_integrand[0], s.sup_integrand[1]])
        .collect();
    write_csv(&out.join("sweep.csv"), &cols.map(String::from), &rows)?;
    for r in &rep.runs {
        for l in &r.ledgers {
            write_ledger_csv(&out.join(format!("ledger_d{}_a{}.csv", r.delta, l.cfg.a)), l)?;
        }
    }
    let path = out.join("summary.json");
    write_json(
        &path,
        &SweepSummary {
            spread: rep.spread,
            spread_delta: rep.spread_delta,
            max_ratio: rep.max_ratio,
            max_ratio_delta: rep.max_ratio_delta,
            bootstrap_ok: rep.bootstrap_ok,
            max_boot_ratio: rep.max_boot_ratio,
            summaries: &rep.summaries,
            reports: rep.runs.iter().map(|r| &r.report).collect(),
        },
    )?;
    Ok(if rep.runs.iter().any(|r| r.report.abort.is_some()) { Outcome::Aborted(path) } else { Outcome::Done })
}

/// One line of the self-test battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

fn item(name: &str, value: f64, limit: f64) -> CheckItem {
    CheckItem { name: name.into(), value, limit, pass: value.is_finite() && value <= limit }
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(0.0, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

/// Weight properties, Sobolev and div-curl probes, Green's function checks and
/// manufactured pressure, at reduced sizes.
pub fn check_battery(seed: u64) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    let probes: Vec<_> = [0.0, 10.0, 100.0].iter().map(|&a| weight_probe(&WeightContext::new(SIGMA_DEFAULT, a), 40.0, 2000, seed)).collect();
    items.push(item("weight near-comparability spread", spread(&probes.iter().map(|p| p.near).collect::<Vec<_>>()), 2.0));
    items.push(item("weight derivative spread", spread(&probes.iter().map(|p| p.deriv[0]).collect::<Vec<_>>()), 2.0));
    items.push(item("weight derivative fd error", probes.iter().map(|p| p.fd_error).fold(0.0, f64::max), 1e-4));
    let mut sob = Vec::new();
    let mut dc = Vec::new();
    for delta in [1.0, 0.25, 0.0625] {
        let g = GridSpec::new(32, 32, 8.0 * std::f64::consts::PI, 8, delta)?;
        let f = ScalarField::from_fn(g, |x1, x2, x3| (-(x1 * x1 + x2 * x2) / 8.0).exp() * (1.0 + (std::f64::consts::PI * x3 / delta).cos()));
        sob.push(sobolev_probe(&f, Parity::Cos)?);
        let (zp, _) = gaussian_packet_spec(g, &PacketSpec { seed, widths: (2.0, 2.0), ..Default::default() })?;
        let mut tr = Transform::new(g);
        let v = VectorField3 { c: [tr.inverse(&zp[0])?, tr.inverse(&zp[1])?, tr.inverse(&zp[2])?] };
        let r = divcurl_probe(&v, &WeightContext::new(SIGMA_DEFAULT, 0.0), 0.0)?;
        dc.push(r.lhs / r.rhs());
    }
    items.push(item("sobolev constant spread", spread(&sob), 2.0));
    items.push(item("div-curl constant spread", spread(&dc), 2.0));
    let fits: Vec<f64> = [1.0, 0.5, 0.25].iter().map(|&d| kernel_bound_fit(d, 200, seed)).collect::<Result<_>>()?;
    items.push(item("kernel bound spread", spread(&fits), 2.0));
    let q = ImageKernelQuery::new([0.3, -0.2, 0.1], [1.1, 0.4, -0.3], 0.5);
    let v = greens_grad(&q)?;
    let a = image_sum(&q, 8)?;
    let b = image_sum(&q, 16)?;
    let change = (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    items.push(item("image tail bound minus change", change - image_tail_bound(&q, 8), 0.0));
    items.push(item("image series tail", v.tail_bound, q.tol));
    // manufactured pressure, spectral and direct
    let g = GridSpec::new(32, 32, 4.0 * std::f64::consts::PI, 4, 1.0)?;
    let zero = ScalarField::zeros(g);
    let zp = VectorField3 { c: [ScalarField::from_fn(g, |_, x2, _| x2.sin()), zero.clone(), zero.clone()] };
    let zm = VectorField3 { c: [zero.clone(), ScalarField::from_fn(g, |x1, _, _| x1.sin()), zero] };
    let st = ElsasserState { zp, zm, t: 0.0 };
    let p = crate::solver3d::pressure_from_state(&st)?;
    let err = (0..g.len())
        .map(|q| {
            let (i1, i2) = (q % g.n1, (q / g.n1) % g.n2);
            (p.data[q] - 0.5 * g.x1(i1).cos() * g.x2(i2).cos()).abs()
        })
        .fold(0.0, f64::max);
    items.push(item("manufactured pressure (spectral)", err, 1e-10));
    let sp = SpecState::from_physical(&st)?;
    let pts = [[0.4, -0.3, 0.2], [-1.0, 0.7, -0.5], [2.0, 1.5, 0.0]];
    let mut solver = Solver::new(g, System::slab(), DtPolicy::default())?;
    let ps = solver.rhs(&sp).aux.p;
    let spec = grad_p_spectral_at(&sp, &ps, &pts);
    let dir = grad_p_direct_spec(&sp, &pts, &DirectOptions::default())?;
    let rel = spec
        .iter()
        .zip(&dir.values)
        .map(|(a, b)| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt() / 0.5)
        .fold(0.0, f64::max);
    items.push(item("manufactured pressure gradient (direct)", rel, 1e-2));
    Ok(items)
}

fn check(cfg: &Config, out: &Path) -> Result<Outcome> {
    let items = check_battery(cfg.packet.seed)?;
    for it in &items {
        println!("{} {}: {:e} (limit {:e})", if it.pass { "PASS" } else { "FAIL" }, it.name, it.value, it.limit);
    }
    write_json(&out.join("summary.json"), &items)?;
    let failed = items.iter().filter(|i| !i.pass).count();
    Ok(if failed == 0 { Outcome::Done } else { Outcome::Failed(format!("{failed} checks failed")) })
}
