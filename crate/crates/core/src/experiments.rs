//! Orchestrated experiments: rigidity by time reversal, the thin-slab limit
//! against the planar system, and uniformity sweeps over thickness and position.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{weight_line, EnergyLedger, LedgerConfig, LedgerSet, LedgerSummary, LineEngine};
use crate::error::{Error, Result};
use crate::packet::{gaussian_packet_spec, PacketSpec};
use crate::scattering::{ScatteringAccumulator, ScatteringField};
use crate::solver2d::{hk_norm2, norm2_plane, run2d, Field2, Grid2, ScatteringAccumulator2D, State2D, Solver2D};
use crate::solver3d::{run, DtPolicy, RunOptions, RunReport, Solver, SpecState, System};
use crate::spectral::{Parity, SpecVec, SpectralField, C64};
use crate::types::{GridSpec, Sign, WeightContext, SIGMA_DEFAULT};

/// Map `f` over `items` on at most `threads` scoped workers; output order follows input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|sc| {
        for (inp, res) in items.chunks(chunk).zip(out.chunks_mut(chunk)) {
            let f = &f;
            sc.spawn(move || {
                for (i, r) in inp.iter().zip(res.iter_mut()) {
                    *r = Some(f(i));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("worker finished")).collect()
}

/// Run through each of `times` in turn so that every one is hit exactly.
pub fn run_segments(
    solver: &mut Solver,
    state: SpecState,
    opts: &RunOptions,
    times: &[f64],
    observers: &mut [&mut dyn crate::solver3d::Observer],
    mut at: impl FnMut(&SpecState),
) -> Result<(SpecState, RunReport)> {
    let mut cur = state;
    let mut total: Option<RunReport> = None;
    for &t in times {
        let r = run(solver, cur, &RunOptions { t_end: t, ..opts.clone() }, observers)?;
        cur = r.state;
        let rep = r.report;
        total = Some(match total {
            None => rep,
            Some(mut acc) => {
                merge_report(&mut acc, rep);
                acc
            }
        });
        if total.as_ref().is_some_and(|r| r.abort.is_some()) {
            break;
        }
        at(&cur);
    }
    let rep = total.unwrap_or_default();
    Ok((cur, rep))
}

pub fn merge_report(acc: &mut RunReport, r: RunReport) {
    acc.steps += r.steps;
    acc.t_final = r.t_final;
    if r.steps > 0 {
        acc.dt_min = if acc.steps == r.steps { r.dt_min } else { acc.dt_min.min(r.dt_min) };
        acc.dt_max = acc.dt_max.max(r.dt_max);
    }
    acc.energy_final = r.energy_final;
    for i in 0..2 {
        if acc.energy_start[i] > 0.0 {
            let rel = (r.energy_start[i] - acc.energy_start[i]).abs() / acc.energy_start[i];
            acc.drift[i] = acc.drift[i].max(rel + r.drift[i] * r.energy_start[i] / acc.energy_start[i]);
        }
    }
    acc.max_boundary_fraction = acc.max_boundary_fraction.max(r.max_boundary_fraction);
    acc.max_divergence = acc.max_divergence.max(r.max_divergence);
    acc.max_z1 = acc.max_z1.max(r.max_z1);
    acc.bootstrap_ok &= r.bootstrap_ok;
    acc.wrap_hazard |= r.wrap_hazard;
    acc.warnings.extend(r.warnings);
    if acc.abort.is_none() {
        acc.abort = r.abort;
    }
}

/// `sqrt(sum_s sum_{k+l<=kmax} delta^{2l-1} ||w_s d_h^k d3^l f_s||^2)` over all components,
/// with `w_s^2` given per sign on the x1 nodes.
pub fn weighted_norm(fields: [&SpecVec; 2], weights: [&[f64]; 2], kmax: usize) -> f64 {
    let g = fields[0][0].grid;
    let d = g.delta;
    let mut eng = LineEngine::new(g.n1);
    let mut total = 0.0;
    for si in 0..2 {
        for c in 0..3 {
            let tab = &eng.tables(&fields[si][c], kmax, &[weights[si]])[0];
            for k in 0..=kmax {
                for l in 0..=(kmax - k) {
                    total += d.powf(2.0 * l as f64 - 1.0) * tab.e_kl(k, l);
                }
            }
        }
    }
    total.sqrt()
}

/// Weighted norm of data at time zero (equivalently of fields on the infinities).
pub fn data_norm(fields: [&SpecVec; 2], ctx: &WeightContext, kmax: usize) -> f64 {
    let g = fields[0][0].grid;
    let w: Vec<Vec<f64>> = Sign::BOTH.iter().map(|&s| weight_line(&g, |u| ctx.infinity_density(s, u))).collect();
    weighted_norm(fields, [&w[0], &w[1]], kmax)
}

fn unweighted(a: &SpecState) -> f64 {
    let e = a.energy();
    (e[0] + e[1]).sqrt()
}

fn difference(a: &SpecState, b: &SpecState) -> f64 {
    let mut d = a.clone();
    for (x, y) in d.zp.iter_mut().chain(d.zm.iter_mut()).zip(b.zp.iter().chain(b.zm.iter())) {
        x.axpy(-1.0, y);
    }
    unweighted(&d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigidityParams {
    pub sigma: f64,
    pub a: f64,
    pub policy: DtPolicy,
    pub nonlinear: bool,
    /// Highest derivative order in the data norms.
    pub kmax: usize,
    pub ledger_every: usize,
    /// "Vanishing" threshold on `eta_hat + tail`.
    pub threshold: f64,
    pub boundary_tol: f64,
}

impl Default for RigidityParams {
    fn default() -> Self {
        RigidityParams {
            sigma: SIGMA_DEFAULT,
            a: 0.0,
            policy: DtPolicy::Directional { cfl: 0.4, dt_max: 0.25 },
            nonlinear: true,
            kmax: 2,
            ledger_every: 4,
            threshold: 1e-8,
            boundary_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub delta: f64,
    pub t_end: f64,
    pub a: f64,
    /// Position parameter of the reversed problem.
    pub a_recentred: f64,
    pub sigma: f64,
    pub kmax: usize,
    /// Weighted norm of the scattering fields truncated at `t_end`.
    pub eta_hat: f64,
    pub tail: f64,
    pub data_norm: f64,
    pub recovered_norm: f64,
    pub rho: f64,
    /// Unweighted relative distance between recovered and original data.
    pub reversibility: f64,
    pub vanishing: bool,
    pub forward: RunReport,
    pub backward: RunReport,
    pub backward_ledger: Option<LedgerSummary>,
    pub warnings: Vec<String>,
    pub abort: Option<String>,
}

/// Time-reversal experiment for each horizon in `horizons` (ascending), sharing one forward run.
///
/// Forward to `T` with the scattering accumulator; `eta_hat` is the weighted norm of
/// the truncated fields and `tail` their envelope bound. The state `z(T)` is then run
/// back to `t = 0` with a ledger whose weights are those of the reversed problem with
/// position parameter `a + T`, and the recovered data are measured in the same norm.
pub fn rigidity_sweep(data: &SpecState, p: &RigidityParams, horizons: &[f64]) -> Result<Vec<RigidityReport>> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] <= w[0]) || horizons[0] <= data.t {
        return Err(Error::Param("rigidity horizons must be increasing and after the data time".into()));
    }
    let g = data.grid();
    let ctx = WeightContext::new(p.sigma, p.a);
    let opts = RunOptions { boundary_tol: p.boundary_tol, ..RunOptions::to(horizons[0]) };
    let system = if p.nonlinear { System::slab() } else { System::slab().linear() };
    let mut solver = Solver::new(g, system, p.policy)?;
    let mut acc = ScatteringAccumulator::new(data, &[]);
    let mut stops: Vec<(SpecState, [ScatteringField; 2])> = Vec::new();
    let mut forward: Option<RunReport> = None;
    let mut cur = data.clone();
    for &t in horizons {
        let r = run(&mut solver, cur, &RunOptions { t_end: t, ..opts.clone() }, &mut [&mut acc])?;
        cur = r.state;
        let aborted = r.report.abort.is_some();
        match forward.as_mut() {
            None => forward = Some(r.report),
            Some(f) => merge_report(f, r.report),
        }
        if aborted {
            break;
        }
        stops.push((cur.clone(), acc.finalize(p.sigma, p.a)));
    }
    let forward = forward.unwrap_or_default();
    let d0 = data_norm([&data.zp, &data.zm], &ctx, p.kmax);
    let mut out = Vec::new();
    for (i, &t_end) in horizons.iter().enumerate() {
        let mut rep = RigidityReport {
            delta: g.delta,
            t_end,
            a: p.a,
            a_recentred: p.a + t_end,
            sigma: p.sigma,
            kmax: p.kmax,
            eta_hat: 0.0,
            tail: 0.0,
            data_norm: d0,
            recovered_norm: 0.0,
            rho: 0.0,
            reversibility: 0.0,
            vanishing: false,
            forward: forward.clone(),
            backward: RunReport::default(),
            backward_ledger: None,
            warnings: Vec::new(),
            abort: None,
        };
        let Some((state_t, sc)) = stops.get(i) else {
            rep.abort = forward.abort.clone().or_else(|| Some("forward run stopped early".into()));
            out.push(rep);
            continue;
        };
        rep.eta_hat = data_norm([&sc[0].values, &sc[1].values], &ctx, p.kmax);
        rep.tail = sc[0].tail_bound.hypot(sc[1].tail_bound);
        rep.warnings.extend(sc.iter().flat_map(|s| s.warnings.iter().cloned()));
        rep.vanishing = rep.eta_hat + rep.tail < p.threshold;
        let mut back = Solver::new(g, system, p.policy)?;
        let cfg = LedgerConfig { kmax: p.kmax, sigma: p.sigma, every: p.ledger_every, monitors: false, ..LedgerConfig::slab(g.delta, p.a) };
        let mut led = LedgerSet::new(g, vec![cfg])?;
        let r = run(&mut back, state_t.clone(), &RunOptions { t_end: data.t, ..opts.clone() }, &mut [&mut led])?;
        rep.backward = r.report;
        rep.backward_ledger = Some(led.ledgers[0].summary());
        if let Some(a) = &rep.backward.abort {
            rep.abort = Some(format!("backward run: {a}"));
        }
        let rec = r.state;
        rep.recovered_norm = data_norm([&rec.zp, &rec.zm], &ctx, p.kmax);
        let u0 = unweighted(data);
        rep.reversibility = if u0 > 0.0 { difference(&rec, data) / u0 } else { unweighted(&rec) };
        let den = rep.eta_hat + rep.tail;
        rep.rho = if rep.recovered_norm == 0.0 {
            0.0
        } else if den > 0.0 {
            (rep.recovered_norm / den).max(rep.reversibility)
        } else {
            f64::INFINITY
        };
        out.push(rep);
    }
    Ok(out)
}

/// Single-horizon rigidity experiment.
pub fn rigidity_experiment(data: &SpecState, p: &RigidityParams, t_end: f64) -> Result<RigidityReport> {
    Ok(rigidity_sweep(data, p, &[t_end])?.remove(0))
}

/// Which rescaled data family the limit experiment uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Planar data embedded without x3 dependence and with zero vertical component.
    Embedded,
    /// Planar data plus `delta` times an x3-dependent divergence-free perturbation.
    Generic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitParams {
    pub deltas: Vec<f64>,
    pub t_eval: f64,
    /// Slices in unit-slab coordinates, inside [-1, 1].
    pub x3_slices: Vec<f64>,
    pub kmax: usize,
    pub dt: f64,
    pub sigma: f64,
    pub packet: PacketSpec,
    pub family: Family,
}

impl Default for LimitParams {
    fn default() -> Self {
        LimitParams {
            deltas: vec![0.4, 0.2, 0.1, 0.05],
            t_eval: 10.0,
            x3_slices: vec![-0.5, 0.0, 0.5],
            kmax: 2,
            dt: 0.1,
            sigma: SIGMA_DEFAULT,
            packet: PacketSpec { vertical: 1.0, ..PacketSpec::default() },
            family: Family::Generic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub delta: f64,
    /// `sum_s ||z^h_s(delta) - z^h_s(0)||_{H^kmax}` on each slice at `t_eval`.
    pub slice_diff: Vec<f64>,
    /// `sum_s ||z^3_s(delta)||_{L^2}` on each slice.
    pub slice_z3: Vec<f64>,
    /// Same differences for the scattering fields truncated at `t_eval`.
    pub scattering_diff: Vec<f64>,
    pub scattering_z3: Vec<f64>,
    pub report: RunReport,
}

impl LimitRow {
    pub fn max_diff(&self) -> f64 {
        self.slice_diff.iter().fold(0.0, |m, v| m.max(*v))
    }
    pub fn max_z3(&self) -> f64 {
        self.slice_z3.iter().fold(0.0, |m, v| m.max(*v))
    }
    pub fn max_scattering(&self) -> f64 {
        self.scattering_diff.iter().chain(&self.scattering_z3).fold(0.0, |m, v| m.max(*v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub family: Family,
    pub t_eval: f64,
    pub x3_slices: Vec<f64>,
    pub kmax: usize,
    /// Planar reference norm `sum_s ||z^h_s(0)||_{H^kmax}` at `t_eval`.
    pub reference_norm: f64,
    pub reference: RunReport,
    pub rows: Vec<LimitRow>,
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl LimitReport {
    pub fn diff_trend(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.max_diff()).collect()
    }
    pub fn z3_trend(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.max_z3()).collect()
    }
    pub fn scattering_trend(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.max_scattering()).collect()
    }
    /// Monotone decrease with the final value at most `factor` times the first.
    pub fn trend_ok(v: &[f64], factor: f64) -> bool {
        decreasing(v) && v.last().zip(v.first()).is_some_and(|(l, f)| *l <= factor * f)
    }
}

/// Horizontal slice `f(., x3)` of a cos/sin-expanded field as planar coefficients.
pub fn slice(f: &SpectralField, x3: f64) -> Field2 {
    let g = f.grid;
    let mut out = vec![C64::new(0.0, 0.0); f.plane_len()];
    for k in 0..g.nz() {
        let arg = g.m_k(k) * (x3 + g.delta);
        let c = match f.parity {
            Parity::Cos => arg.cos(),
            Parity::Sin => arg.sin(),
        };
        if c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(f.level(k)) {
            *o += v * c;
        }
    }
    out
}

fn slice_norms(fields: [&SpecVec; 2], reference: [&[Field2; 2]; 2], g2: &Grid2, x3: f64, kmax: usize) -> (f64, f64) {
    let mut dh = 0.0;
    let mut z3 = 0.0;
    for si in 0..2 {
        let mut h = 0.0;
        for c in 0..2 {
            let s = slice(&fields[si][c], x3);
            let d: Field2 = s.iter().zip(&reference[si][c]).map(|(a, b)| a - b).collect();
            h += hk_norm2(g2, &d, kmax);
        }
        dh += h.sqrt();
        z3 += norm2_plane(g2, &slice(&fields[si][2], x3)).sqrt();
    }
    (dh, z3)
}

/// Rescaled data on the unit slab for thickness `delta`.
pub fn limit_data(grid: GridSpec, packet: &PacketSpec, family: Family, delta: f64) -> Result<SpecState> {
    let flat = PacketSpec { vertical: 0.0, ..packet.clone() };
    let (bp, bm) = gaussian_packet_spec(grid, &flat)?;
    let mut s = SpecState { zp: bp, zm: bm, t: 0.0 };
    if family == Family::Generic {
        let (fp, fm) = gaussian_packet_spec(grid, packet)?;
        let base = s.clone();
        for (dst, full, b) in [(&mut s.zp, fp, &base.zp), (&mut s.zm, fm, &base.zm)] {
            for c in 0..3 {
                let mut pert = full[c].clone();
                pert.axpy(-1.0, &b[c]);
                dst[c].axpy(delta, &pert);
            }
        }
    }
    Ok(s)
}

/// Thin-slab limit: rescaled runs on the unit slab against the planar run.
///
/// `grid` must have `delta = 1`. All runs use the fixed step `p.dt`.
pub fn delta_limit_experiment(grid: GridSpec, p: &LimitParams, threads: usize) -> Result<LimitReport> {
    if grid.delta != 1.0 {
        return Err(Error::Param("limit experiment runs on the unit slab (delta = 1)".into()));
    }
    if p.x3_slices.iter().any(|x| x.abs() > 1.0) || p.deltas.iter().any(|d| *d <= 0.0) {
        return Err(Error::Param("slices must lie in [-1, 1] and deltas be positive".into()));
    }
    let policy = DtPolicy::Fixed { dt: p.dt };
    let g2 = Grid2::of_slab(&grid);
    let opts = RunOptions::to(p.t_eval);
    let base = limit_data(grid, &p.packet, Family::Embedded, 1.0)?;
    let plane0 = State2D::from_slab_level0(&base);
    let mut s2 = Solver2D::new(g2, true, policy)?;
    let mut acc2 = ScatteringAccumulator2D::new(&plane0, &[]);
    let r2 = run2d(&mut s2, plane0, &opts, &mut [&mut acc2])?;
    if let Some(a) = &r2.report.abort {
        return Err(Error::Monitor { t: r2.report.t_final, reason: format!("planar reference: {a}") });
    }
    let sc2 = acc2.finalize(p.sigma, 0.0);
    let ref_state = [&r2.state.zp, &r2.state.zm];
    let ref_sc = [&sc2[0].values, &sc2[1].values];
    let reference_norm: f64 = ref_state.iter().map(|f| (hk_norm2(&g2, &f[0], p.kmax) + hk_norm2(&g2, &f[1], p.kmax)).sqrt()).sum();
    let rows = par_map(&p.deltas, threads, |&delta| -> Result<LimitRow> {
        let data = limit_data(grid, &p.packet, p.family, delta)?;
        let mut solver = Solver::new(grid, System::rescaled(delta), policy)?;
        let mut acc = ScatteringAccumulator::new(&data, &[]);
        let r = run(&mut solver, data, &opts, &mut [&mut acc])?;
        let sc = acc.finalize(p.sigma, 0.0);
        let mut row = LimitRow {
            delta,
            slice_diff: Vec::new(),
            slice_z3: Vec::new(),
            scattering_diff: Vec::new(),
            scattering_z3: Vec::new(),
            report: r.report,
        };
        for &x3 in &p.x3_slices {
            let (d, z) = slice_norms([&r.state.zp, &r.state.zm], ref_state, &g2, x3, p.kmax);
            row.slice_diff.push(d);
            row.slice_z3.push(z);
            let (d, z) = slice_norms([&sc[0].values, &sc[1].values], ref_sc, &g2, x3, p.kmax);
            row.scattering_diff.push(d);
            row.scattering_z3.push(z);
        }
        Ok(row)
    });
    Ok(LimitReport {
        family: p.family,
        t_eval: p.t_eval,
        x3_slices: p.x3_slices.clone(),
        kmax: p.kmax,
        reference_norm,
        reference: r2.report,
        rows: rows.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepParams {
    pub deltas: Vec<f64>,
    pub a_values: Vec<f64>,
    pub sigma: f64,
    pub t_end: f64,
    pub policy: DtPolicy,
    pub packet: PacketSpec,
    pub kmax: usize,
    pub ledger_every: usize,
    pub monitors: bool,
    pub boundary_tol: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            deltas: vec![1.0, 0.5, 0.25, 0.1],
            a_values: vec![0.0, 10.0],
            sigma: SIGMA_DEFAULT,
            t_end: 40.0,
            policy: DtPolicy::Directional { cfl: 0.4, dt_max: 0.25 },
            packet: PacketSpec::default(),
            kmax: 2,
            ledger_every: 4,
            monitors: true,
            boundary_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRun {
    pub delta: f64,
    pub report: RunReport,
    /// One ledger per position parameter.
    pub ledgers: Vec<EnergyLedger>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub summaries: Vec<LedgerSummary>,
    /// max / min over the sweep of the largest aggregate ratio of each member.
    pub spread: f64,
    pub spread_delta: f64,
    pub max_ratio: f64,
    pub max_ratio_delta: f64,
    /// Largest bootstrap entry over the initial aggregate, and the z^1 bound, hold in every run.
    pub bootstrap_ok: bool,
    pub max_boot_ratio: f64,
}

/// Bootstrap entries may not exceed this multiple of the initial aggregate.
pub const BOOT_FACTOR: f64 = 2.0;

fn spread(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let hi = v.clone().fold(0.0, f64::max);
    let lo = v.fold(f64::INFINITY, f64::min);
    if lo > 0.0 && lo.is_finite() {
        hi / lo
    } else {
        1.0
    }
}

/// One small-data run per thickness, with a ledger per position parameter.
pub fn uniformity_sweep(grid: GridSpec, p: &SweepParams, threads: usize) -> Result<SweepReport> {
    if p.deltas.is_empty() || p.a_values.is_empty() {
        return Err(Error::Param("sweep needs at least one delta and one position parameter".into()));
    }
    let runs = par_map(&p.deltas, threads, |&delta| -> Result<SweepRun> {
        let g = grid.with_delta(delta);
        let (zp, zm) = gaussian_packet_spec(g, &p.packet)?;
        let data = SpecState { zp, zm, t: 0.0 };
        let cfgs = p
            .a_values
            .iter()
            .map(|&a| LedgerConfig { kmax: p.kmax, sigma: p.sigma, every: p.ledger_every, monitors: p.monitors, ..LedgerConfig::slab(delta, a) })
            .collect();
        let mut led = LedgerSet::new(g, cfgs)?;
        let mut solver = Solver::new(g, System::slab(), p.policy)?;
        let opts = RunOptions { boundary_tol: p.boundary_tol, ..RunOptions::to(p.t_end) };
        let r = run(&mut solver, data, &opts, &mut [&mut led])?;
        Ok(SweepRun { delta, report: r.report, ledgers: led.ledgers })
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let summaries: Vec<LedgerSummary> = runs.iter().flat_map(|r| r.ledgers.iter().map(|l| l.summary())).collect();
    let max_boot_ratio = summaries.iter().map(|s| s.boot_ratio).fold(0.0, f64::max);
    let bootstrap_ok = runs.iter().all(|r| r.report.bootstrap_ok && r.report.abort.is_none()) && max_boot_ratio <= BOOT_FACTOR;
    Ok(SweepReport {
        spread: spread(summaries.iter().map(|s| s.max_agg_ratio)),
        spread_delta: spread(summaries.iter().map(|s| s.max_agg_delta_ratio)),
        max_ratio: summaries.iter().map(|s| s.max_agg_ratio).fold(0.0, f64::max),
        max_ratio_delta: summaries.iter().map(|s| s.max_agg_delta_ratio).fold(0.0, f64::max),
        bootstrap_ok,
        max_boot_ratio,
        summaries,
        runs,
    })
}
