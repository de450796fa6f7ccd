//! Weighted energy and flux norms, nonlinear and pressure monitors, and the
//! inequality probes (Sobolev, weighted div-curl, weight properties).
//!
//! All weights depend on x1 only. A weighted norm of `d1^b d2^c d3^l f` is
//! evaluated by one partial inverse transform in x1 per order `b`; the x2 and
//! x3 integrals are then exact coefficient sums, so every `(c, l)` comes for
//! free. Quadrature: rectangle rule in x1 at the grid nodes, exact in x2 and x3
//! for dealiased fields (equal to the rectangle/trapezoid grid sums).

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::solver3d::{Observer, SpecState, StepView};
use crate::spectral::{
    curl, derivative, derivative_into, divergence, m_der, wz_mode, Parity, SpecVec, SpectralField, Transform,
    Wavenumbers, C64,
};
use crate::types::{GridSpec, ScalarField, Sign, VectorField3, WeightContext};

pub const KMAX_DEFAULT: usize = 4;

/// Table of `int W^2 |d1^b d2^c d3^l f|^2` for `b + c + l <= order`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderTable {
    pub order: usize,
    pub v: Vec<f64>,
}

impl OrderTable {
    fn slot(order: usize, b: usize, c: usize, l: usize) -> usize {
        (b * (order + 1) + c) * (order + 1) + l
    }

    pub fn zeros(order: usize) -> Self {
        OrderTable { order, v: vec![0.0; (order + 1).pow(3)] }
    }

    pub fn get(&self, b: usize, c: usize, l: usize) -> f64 {
        self.v[Self::slot(self.order, b, c, l)]
    }

    /// `sum over |alpha_h| = k` (each multi-index once) at vertical order l.
    pub fn e_kl(&self, k: usize, l: usize) -> f64 {
        (0..=k).map(|b| self.get(b, k - b, l)).sum()
    }

    /// Tensor-norm sum: `||grad_h^k d3^l f||^2` with multinomial multiplicities.
    pub fn tensor_kl(&self, k: usize, l: usize) -> f64 {
        (0..=k).map(|b| binom(k, b) * self.get(b, k - b, l)).sum()
    }

    pub fn add(&mut self, o: &OrderTable) {
        for (a, b) in self.v.iter_mut().zip(o.v.iter()) {
            *a += b;
        }
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Horizontal layout of a coefficient array: `levels x n2 x (n1/2+1)`.
pub struct Layout<'a> {
    pub n1: usize,
    pub n2: usize,
    pub lh1: f64,
    pub lh2: f64,
    /// Vertical wavenumber of each level (0 for planar fields).
    pub lev_m: &'a [f64],
    /// Parseval weight of each level (1 for planar fields).
    pub lev_w: &'a [f64],
}

/// Partial inverse transforms in x1 and weighted reductions.
pub struct LineEngine {
    n1: usize,
    fft: Arc<dyn Fft<f64>>,
    line: Vec<C64>,
    scratch: Vec<C64>,
    acc: Vec<f64>,
}

impl LineEngine {
    pub fn new(n1: usize) -> Self {
        let fft = FftPlanner::<f64>::new().plan_fft_inverse(n1);
        let s = fft.get_inplace_scratch_len();
        LineEngine { n1, fft, line: vec![C64::new(0.0, 0.0); n1], scratch: vec![C64::new(0.0, 0.0); s], acc: Vec::new() }
    }

    /// Weighted order tables of a raw coefficient array, one per weight.
    /// `weights[w][i1]` is the squared weight at x1 node `i1`.
    pub fn tables_raw(&mut self, data: &[C64], lay: &Layout, order: usize, weights: &[&[f64]]) -> Vec<OrderTable> {
        let (n1, n2) = (lay.n1, lay.n2);
        assert_eq!(n1, self.n1);
        let nh1 = n1 / 2 + 1;
        let nlev = lay.lev_m.len();
        let wn = Wavenumbers::new(n1, n2, lay.lh1, lay.lh2);
        let nw = weights.len();
        let mut out = vec![OrderTable::zeros(order); nw];
        let dx1 = lay.lh1 / n1 as f64;
        // acc[w][k][j2]
        self.acc.clear();
        self.acc.resize(nw * nlev * n2, 0.0);
        for b in 0..=order {
            self.acc.iter_mut().for_each(|v| *v = 0.0);
            let mut any = false;
            for k in 0..nlev {
                let base = k * n2 * nh1;
                for j2 in 0..n2 {
                    let row = &data[base + j2 * nh1..base + (j2 + 1) * nh1];
                    let j2c = (n2 - j2) % n2;
                    let partner = &data[base + j2c * nh1..base + (j2c + 1) * nh1];
                    let mut nonzero = false;
                    for j1 in 0..nh1 {
                        let mult = ipow(wn.d1[j1], b);
                        let c = row[j1] * mult;
                        self.line[j1] = c;
                        nonzero |= c.re != 0.0 || c.im != 0.0;
                    }
                    for j1 in 1..n1 - nh1 + 1 {
                        // coefficient at -kappa1 with the same kappa2
                        let c = partner[j1].conj() * ipow(-wn.d1[j1], b);
                        self.line[n1 - j1] = c;
                        nonzero |= c.re != 0.0 || c.im != 0.0;
                    }
                    if !nonzero {
                        continue;
                    }
                    any = true;
                    self.fft.process_with_scratch(&mut self.line, &mut self.scratch);
                    for (w, wt) in weights.iter().enumerate() {
                        let s: f64 = self.line.iter().zip(wt.iter()).map(|(c, x)| c.norm_sqr() * x).sum();
                        self.acc[(w * nlev + k) * n2 + j2] += s;
                    }
                }
            }
            if !any {
                continue;
            }
            for (w, tab) in out.iter_mut().enumerate() {
                for c in 0..=(order - b) {
                    for l in 0..=(order - b - c) {
                        let mut total = 0.0;
                        for k in 0..nlev {
                            let lw = lay.lev_w[k] * lay.lev_m[k].powi(2 * l as i32);
                            if lw == 0.0 {
                                continue;
                            }
                            let mut s = 0.0;
                            for j2 in 0..n2 {
                                s += wn.d2[j2].powi(2 * c as i32) * self.acc[(w * nlev + k) * n2 + j2];
                            }
                            total += lw * s;
                        }
                        tab.v[OrderTable::slot(order, b, c, l)] = total * dx1 * lay.lh2;
                    }
                }
            }
        }
        out
    }

    /// Weighted order tables of a slab field.
    pub fn tables(&mut self, f: &SpectralField, order: usize, weights: &[&[f64]]) -> Vec<OrderTable> {
        let g = f.grid;
        let lev_m: Vec<f64> = (0..g.nz()).map(|k| m_der(&g, k)).collect();
        let lev_w: Vec<f64> = (0..g.nz()).map(|k| wz_mode(&g, f.parity, k)).collect();
        let lay = Layout { n1: g.n1, n2: g.n2, lh1: g.lh1, lh2: g.lh2, lev_m: &lev_m, lev_w: &lev_w };
        self.tables_raw(&f.data, &lay, order, weights)
    }
}

fn ipow(x: f64, b: usize) -> C64 {
    // (i x)^b
    let m = x.powi(b as i32);
    match b % 4 {
        0 => C64::new(m, 0.0),
        1 => C64::new(0.0, m),
        2 => C64::new(-m, 0.0),
        _ => C64::new(0.0, -m),
    }
}

/// Squared weight sampled at the x1 nodes.
pub fn weight_line(g: &GridSpec, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..g.n1).map(|i| f(g.x1(i))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Full,
    H,
    Three,
}

/// `E^(k,l)` of one Elsasser field at the state's time.
pub fn energy(
    state: &SpecState,
    ctx: &WeightContext,
    kmax: usize,
    k: usize,
    l: usize,
    comp: Component,
    sign: Sign,
) -> Result<f64> {
    if k + l > kmax {
        return Err(Error::Order(k + l, kmax));
    }
    let g = state.grid();
    let w = weight_line(&g, |x| ctx.energy_density(sign, state.t, x));
    let mut eng = LineEngine::new(g.n1);
    let comps: &[usize] = match comp {
        Component::Full => &[0, 1, 2],
        Component::H => &[0, 1],
        Component::Three => &[2],
    };
    let mut total = 0.0;
    for &c in comps {
        total += eng.tables(&state.field(sign)[c], k + l, &[&w])[0].e_kl(k, l);
    }
    Ok(total)
}

/// Frame of the ledger's state: the physical slab, or the unit slab holding the
/// rescaled fields of a physical thickness `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Frame {
    Slab { delta: f64 },
    Unit { delta: f64 },
}

impl Frame {
    pub fn delta(&self) -> f64 {
        match *self {
            Frame::Slab { delta } | Frame::Unit { delta } => delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub kmax: usize,
    pub sigma: f64,
    pub a: f64,
    /// Sample every this many accepted steps (and always at the last one).
    pub every: usize,
    /// Also accumulate the I/J/K and pressure monitors.
    pub monitors: bool,
    pub frame: Frame,
}

impl LedgerConfig {
    pub fn slab(delta: f64, a: f64) -> Self {
        LedgerConfig {
            kmax: KMAX_DEFAULT,
            sigma: crate::types::SIGMA_DEFAULT,
            a,
            every: 1,
            monitors: true,
            frame: Frame::Slab { delta },
        }
    }

    pub fn weights(&self) -> WeightContext {
        WeightContext::new(self.sigma, self.a)
    }
}

/// `[sign][component h|3]` tables of `E^(k,l)` indexed `k * (kmax+1) + l`.
pub type KlTables = [[Vec<f64>; 2]; 2];

fn kl_zero(kmax: usize) -> KlTables {
    let z = vec![0.0; (kmax + 1) * (kmax + 1)];
    [[z.clone(), z.clone()], [z.clone(), z]]
}

/// One ledger sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    /// Instantaneous energies in the state's own frame.
    pub e: KlTables,
    /// Accumulated fluxes in the state's own frame.
    pub f: KlTables,
    /// Accumulated squared space-time norms `[sign][k*(kmax+1)+l]`.
    pub i_acc: [Vec<f64>; 2],
    pub j_acc: [Vec<f64>; 2],
    pub p_acc: [Vec<f64>; 2],
    /// `sup |grad p| (1+|t+a|)^{1+sigma}`.
    pub sup_gradp: f64,
    /// `sup |grad p + z_{-s}.grad z_s| (1+|t+a|)^{1+sigma}` per sign.
    pub sup_integrand: [f64; 2],
    pub agg: f64,
    pub agg_delta: f64,
    /// Largest bootstrap entry divided by the initial aggregate.
    pub boot_ratio: f64,
    pub max_z1: f64,
}

/// Energy ledger for one weight configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub cfg: LedgerConfig,
    pub rows: Vec<LedgerRow>,
    /// Running suprema of the slab-frame energies.
    sup_e: KlTables,
    prev_flux_density: Option<(f64, KlTables)>,
    prev_mon: Option<(f64, [Vec<f64>; 6])>,
}

/// Per-sample quantities before time accumulation.
struct Instant {
    e: KlTables,
    fd: KlTables,
    /// I, J, P per sign
    mon: [Vec<f64>; 6],
    sup_gradp: f64,
    sup_g: [f64; 2],
    max_z1: f64,
}

fn idx(kmax: usize, k: usize, l: usize) -> usize {
    k * (kmax + 1) + l
}

impl EnergyLedger {
    pub fn new(cfg: LedgerConfig) -> Self {
        let k = cfg.kmax;
        EnergyLedger { cfg, rows: Vec::new(), sup_e: kl_zero(k), prev_flux_density: None, prev_mon: None }
    }

    /// Convert an own-frame table entry to the slab frame.
    fn to_slab(&self, comp: usize, l: usize, v: f64) -> f64 {
        match self.cfg.frame {
            Frame::Slab { .. } => v,
            Frame::Unit { delta } => {
                let e = if comp == 0 { 2.0 * (l as f64 - 0.5) } else { 2.0 * (l as f64 - 1.5) };
                v / delta.powf(e)
            }
        }
    }

    /// Convert an own-frame entry to the unit frame.
    fn to_unit(&self, comp: usize, l: usize, v: f64) -> f64 {
        match self.cfg.frame {
            Frame::Unit { .. } => v,
            Frame::Slab { delta } => {
                let e = if comp == 0 { 2.0 * (l as f64 - 0.5) } else { 2.0 * (l as f64 - 1.5) };
                v * delta.powf(e)
            }
        }
    }

    /// Slab-frame aggregate from (sup) energies and fluxes, capped at kmax.
    pub fn aggregate(&self, e: &KlTables, f: &KlTables) -> f64 {
        let km = self.cfg.kmax;
        let d = self.cfg.frame.delta();
        let mut total = 0.0;
        for s in 0..2 {
            let full = |tab: &KlTables, k: usize, l: usize| {
                self.to_slab(0, l, tab[s][0][idx(km, k, l)]) + self.to_slab(1, l, tab[s][1][idx(km, k, l)])
            };
            for k in 0..=km {
                for l in 0..=(km - k) {
                    total += d.powf(2.0 * (l as f64 - 0.5)) * (full(e, k, l) + full(f, k, l));
                }
            }
            for k in 0..km {
                let z3 = self.to_slab(1, 0, e[s][1][idx(km, k, 0)]) + self.to_slab(1, 0, f[s][1][idx(km, k, 0)]);
                total += d.powi(-3) * z3;
                for l in 0..(km - k) {
                    total += d.powf(2.0 * (l as f64 - 0.5)) * (full(e, k, l + 1) + full(f, k, l + 1));
                }
            }
        }
        total
    }

    /// Unit-frame aggregate, capped at kmax.
    pub fn aggregate_delta(&self, e: &KlTables, f: &KlTables) -> f64 {
        let km = self.cfg.kmax;
        let d = self.cfg.frame.delta();
        let mut total = 0.0;
        for s in 0..2 {
            let ord = |comp: usize, k: usize, shift: usize| -> f64 {
                (0..=k)
                    .map(|kp| {
                        let l = k - kp + shift;
                        let i = idx(km, kp, l);
                        self.to_unit(comp, l, e[s][comp][i]) + self.to_unit(comp, l, f[s][comp][i])
                    })
                    .sum()
            };
            for k in 0..=km {
                total += ord(0, k, 0);
            }
            for k in 0..km {
                total += ord(1, k, 0);
                total += d.powi(-2) * ord(0, k, 1);
            }
            total += d * d * ord(1, km, 0);
        }
        total
    }

    /// Largest bootstrap entry (slab frame, kmax-capped).
    fn boot_entry(&self, e: &KlTables, f: &KlTables) -> f64 {
        let km = self.cfg.kmax;
        let d = self.cfg.frame.delta();
        let mut m = 0.0f64;
        for s in 0..2 {
            for tab in [e, f] {
                let full = |k: usize, l: usize| {
                    self.to_slab(0, l, tab[s][0][idx(km, k, l)]) + self.to_slab(1, l, tab[s][1][idx(km, k, l)])
                };
                for k in 0..=km {
                    for l in 0..=(km - k) {
                        m = m.max(d.powf(2.0 * (l as f64 - 0.5)) * full(k, l));
                    }
                }
                for k in 0..km {
                    m = m.max(d.powi(-3) * self.to_slab(1, 0, tab[s][1][idx(km, k, 0)]));
                    for l in 0..(km - k) {
                        m = m.max(d.powf(2.0 * (l as f64 - 0.5)) * full(k, l + 1));
                    }
                }
            }
        }
        m
    }

    fn push(&mut self, t: f64, inst: Instant) {
        let km = self.cfg.kmax;
        // flux: trapezoid in |t|
        let mut f = kl_zero(km);
        if let (Some((t0, fd0)), Some(last)) = (&self.prev_flux_density, self.rows.last()) {
            let h = (t - t0).abs();
            for s in 0..2 {
                for c in 0..2 {
                    for i in 0..f[s][c].len() {
                        f[s][c][i] = last.f[s][c][i] + 0.5 * h * (fd0[s][c][i] + inst.fd[s][c][i]);
                    }
                }
            }
        }
        let n = (km + 1) * (km + 1);
        let mut acc: [Vec<f64>; 6] = Default::default();
        for (q, a) in acc.iter_mut().enumerate() {
            *a = vec![0.0; n];
            if let (Some((t0, m0)), Some(last)) = (&self.prev_mon, self.rows.last()) {
                let h = (t - t0).abs();
                let prev = match q {
                    0 | 1 => &last.i_acc[q],
                    2 | 3 => &last.j_acc[q - 2],
                    _ => &last.p_acc[q - 4],
                };
                for i in 0..n {
                    a[i] = prev[i] + 0.5 * h * (m0[q][i] + inst.mon[q][i]);
                }
            }
        }
        for s in 0..2 {
            for c in 0..2 {
                for i in 0..n {
                    self.sup_e[s][c][i] = self.sup_e[s][c][i].max(inst.e[s][c][i]);
                }
            }
        }
        let agg = self.aggregate(&self.sup_e, &f);
        let agg_delta = self.aggregate_delta(&self.sup_e, &f);
        let agg0 = self.rows.first().map(|r| r.agg).unwrap_or(agg);
        let boot = self.boot_entry(&self.sup_e, &f);
        let boot_ratio = if agg0 > 0.0 { boot / agg0 } else { 0.0 };
        let [i0, i1, j0, j1, p0, p1] = acc;
        self.rows.push(LedgerRow {
            t,
            e: inst.e,
            f,
            i_acc: [i0, i1],
            j_acc: [j0, j1],
            p_acc: [p0, p1],
            sup_gradp: inst.sup_gradp,
            sup_integrand: inst.sup_g,
            agg,
            agg_delta,
            boot_ratio,
            max_z1: inst.max_z1,
        });
        self.prev_flux_density = Some((t, inst.fd));
        self.prev_mon = Some((t, inst.mon));
    }

    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    /// Column names of [`EnergyLedger::csv_rows`].
    pub fn columns(&self) -> Vec<String> {
        let km = self.cfg.kmax;
        let mut c = vec!["t".to_string(), "agg".into(), "agg_delta".into(), "boot_ratio".into(), "max_z1".into()];
        c.push("sup_gradp".into());
        for s in Sign::BOTH {
            c.push(format!("sup_G_{}", s.label()));
        }
        for (name, comps) in [("E", 2), ("F", 2)] {
            for s in Sign::BOTH {
                for comp in 0..comps {
                    for k in 0..=km {
                        for l in 0..=(km - k) {
                            let cn = if comp == 0 { "h" } else { "3" };
                            c.push(format!("{name}_{}_{cn}_{k}_{l}", s.label()));
                        }
                    }
                }
            }
        }
        if self.cfg.monitors {
            for name in ["I", "J", "P"] {
                for s in Sign::BOTH {
                    for k in 0..=km {
                        for l in 0..=(km - k) {
                            c.push(format!("{name}_{}_{k}_{l}", s.label()));
                        }
                    }
                }
            }
        }
        c
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        let km = self.cfg.kmax;
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![r.t, r.agg, r.agg_delta, r.boot_ratio, r.max_z1, r.sup_gradp];
                v.extend_from_slice(&r.sup_integrand);
                for tab in [&r.e, &r.f] {
                    for s in 0..2 {
                        for comp in 0..2 {
                            for k in 0..=km {
                                for l in 0..=(km - k) {
                                    v.push(tab[s][comp][idx(km, k, l)]);
                                }
                            }
                        }
                    }
                }
                if self.cfg.monitors {
                    for acc in [&r.i_acc, &r.j_acc, &r.p_acc] {
                        for s in 0..2 {
                            for k in 0..=km {
                                for l in 0..=(km - k) {
                                    v.push(acc[s][idx(km, k, l)]);
                                }
                            }
                        }
                    }
                }
                v
            })
            .collect()
    }

    /// End-of-run monitor summary.
    pub fn summary(&self) -> LedgerSummary {
        let km = self.cfg.kmax;
        let d = self.cfg.frame.delta();
        let first = self.rows.first();
        let last = self.rows.last();
        let agg0 = first.map(|r| r.agg).unwrap_or(0.0);
        let aggd0 = first.map(|r| r.agg_delta).unwrap_or(0.0);
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 1.0 };
        let max_agg = self.rows.iter().map(|r| r.agg).fold(0.0, f64::max);
        let max_aggd = self.rows.iter().map(|r| r.agg_delta).fold(0.0, f64::max);
        let slab = matches!(self.cfg.frame, Frame::Slab { .. });
        let coef = |e: f64| if slab { d.powf(e) } else { 1.0 };
        let mut mon = [0.0f64; 4];
        if let Some(r) = last {
            for s in 0..2 {
                for k in 0..km {
                    for l in 0..(km - k) {
                        let i = idx(km, k, l);
                        mon[0] = mon[0].max(coef(l as f64 + 0.5) * r.i_acc[s][i].sqrt());
                        mon[1] = mon[1].max(coef(l as f64 - 0.5) * r.j_acc[s][i].sqrt());
                        mon[2] = mon[2].max(coef(l as f64 - 0.5) * r.j_acc[s][idx(km, k, l + 1)].sqrt());
                        mon[3] = mon[3].max(coef(l as f64 - 0.5) * r.p_acc[s][i].sqrt());
                    }
                }
            }
        }
        LedgerSummary {
            a: self.cfg.a,
            delta: d,
            kmax: km,
            samples: self.rows.len(),
            agg0,
            agg_delta0: aggd0,
            max_agg_ratio: ratio(max_agg, agg0),
            max_agg_delta_ratio: ratio(max_aggd, aggd0),
            boot_ratio: self.rows.iter().map(|r| r.boot_ratio).fold(0.0, f64::max),
            max_z1: self.rows.iter().map(|r| r.max_z1).fold(0.0, f64::max),
            i_ratio: ratio(mon[0], agg0),
            j_ratio: ratio(mon[1], agg0),
            k_ratio: ratio(mon[2], agg0),
            p_ratio: ratio(mon[3], agg0),
            sup_gradp: self.rows.iter().map(|r| r.sup_gradp).fold(0.0, f64::max),
            sup_integrand: [
                self.rows.iter().map(|r| r.sup_integrand[0]).fold(0.0, f64::max),
                self.rows.iter().map(|r| r.sup_integrand[1]).fold(0.0, f64::max),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub a: f64,
    pub delta: f64,
    pub kmax: usize,
    pub samples: usize,
    pub agg0: f64,
    pub agg_delta0: f64,
    pub max_agg_ratio: f64,
    pub max_agg_delta_ratio: f64,
    pub boot_ratio: f64,
    pub max_z1: f64,
    /// Space-time monitor norms (with their thickness coefficients) over the initial aggregate.
    pub i_ratio: f64,
    pub j_ratio: f64,
    pub k_ratio: f64,
    pub p_ratio: f64,
    pub sup_gradp: f64,
    pub sup_integrand: [f64; 2],
}

/// Products `M_s^{ij} = d_i z_{-s}^k d_k z_s^j` in coefficient space, `[sign][3i+j]`.
pub fn gradient_products(state: &SpecState, tr: &mut Transform) -> [Vec<SpectralField>; 2] {
    let g = state.grid();
    let n = g.len();
    let mut grads: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut tmp = SpectralField::zeros(g, Parity::Cos);
    for (si, f) in [&state.zp, &state.zm].into_iter().enumerate() {
        for i in 0..3 {
            for k in 0..3 {
                derivative_into(&f[k], i + 1, &mut tmp);
                let mut buf = vec![0.0; n];
                tr.inverse_raw(&tmp, &mut buf);
                grads[si].push(buf);
            }
        }
    }
    let mut out: [Vec<SpectralField>; 2] = [Vec::new(), Vec::new()];
    let mut prod = vec![0.0; n];
    for si in 0..2 {
        let other = 1 - si;
        for i in 0..3 {
            for j in 0..3 {
                prod.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..3 {
                    let a = &grads[other][3 * i + k];
                    let b = &grads[si][3 * k + j];
                    for q in 0..n {
                        prod[q] += a[q] * b[q];
                    }
                }
                let odd = (i == 2) ^ (j == 2);
                let par = if odd { Parity::Sin } else { Parity::Cos };
                let mut s = SpectralField::zeros(g, par);
                tr.forward_raw(&prod, par, &mut s, true);
                out[si].push(s);
            }
        }
    }
    out
}

/// Observer running a set of ledgers (differing only in the position parameter)
/// on one trajectory; the partial transforms are shared.
pub struct LedgerSet {
    pub ledgers: Vec<EnergyLedger>,
    engine: LineEngine,
    tr: Transform,
    kmax: usize,
    monitors: bool,
    every: usize,
}

impl LedgerSet {
    pub fn new(grid: GridSpec, cfgs: Vec<LedgerConfig>) -> Result<Self> {
        let first = cfgs.first().ok_or_else(|| Error::Param("at least one ledger configuration".into()))?;
        let (kmax, monitors, every) = (first.kmax, first.monitors, first.every.max(1));
        if cfgs.iter().any(|c| c.kmax != kmax || c.monitors != monitors || c.every.max(1) != every || c.sigma != first.sigma || c.frame != first.frame) {
            return Err(Error::Param("ledgers in one set may differ only in the position parameter".into()));
        }
        Ok(LedgerSet {
            ledgers: cfgs.into_iter().map(EnergyLedger::new).collect(),
            engine: LineEngine::new(grid.n1),
            tr: Transform::new(grid),
            kmax,
            monitors,
            every,
        })
    }

    pub fn sample(&mut self, state: &SpecState, aux: &crate::solver3d::RhsAux) {
        let g = state.grid();
        let t = state.t;
        let km = self.kmax;
        let n = (km + 1) * (km + 1);
        // weights [ledger][sign] -> energy, flux, monitor
        let mut wts: Vec<[[Vec<f64>; 3]; 2]> = Vec::new();
        for led in &self.ledgers {
            let ctx = led.cfg.weights();
            let mk = |s: Sign| {
                [
                    weight_line(&g, |x| ctx.energy_density(s, t, x)),
                    weight_line(&g, |x| ctx.flux_density(s, t, x)),
                    weight_line(&g, |x| ctx.monitor_density(s, t, x)),
                ]
            };
            wts.push([mk(Sign::Plus), mk(Sign::Minus)]);
        }
        let nl = self.ledgers.len();
        let mut inst: Vec<Instant> = (0..nl)
            .map(|_| Instant {
                e: kl_zero(km),
                fd: kl_zero(km),
                mon: Default::default(),
                sup_gradp: 0.0,
                sup_g: [0.0; 2],
                max_z1: aux.max_comp[0][0].max(aux.max_comp[1][0]),
            })
            .collect();
        for it in inst.iter_mut() {
            for m in it.mon.iter_mut() {
                *m = vec![0.0; n];
            }
        }
        for (si, s) in Sign::BOTH.into_iter().enumerate() {
            let f = state.field(s);
            let wl: Vec<&[f64]> = wts.iter().flat_map(|w| [&w[si][0][..], &w[si][1][..]]).collect();
            for c in 0..3 {
                let tabs = self.engine.tables(&f[c], km, &wl);
                let comp = if c == 2 { 1 } else { 0 };
                for (li, it) in inst.iter_mut().enumerate() {
                    for k in 0..=km {
                        for l in 0..=(km - k) {
                            it.e[si][comp][idx(km, k, l)] += tabs[2 * li].e_kl(k, l);
                            it.fd[si][comp][idx(km, k, l)] += tabs[2 * li + 1].e_kl(k, l);
                        }
                    }
                }
            }
        }
        if self.monitors {
            let mo = km.saturating_sub(1);
            let prods = gradient_products(state, &mut self.tr);
            for si in 0..2 {
                let wl: Vec<&[f64]> = wts.iter().map(|w| &w[si][2][..]).collect();
                let mut add = |fields: &[SpectralField], slot: usize, order: usize, eng: &mut LineEngine| {
                    for fld in fields {
                        let tabs = eng.tables(fld, order, &wl);
                        for (li, it) in inst.iter_mut().enumerate() {
                            for k in 0..=order {
                                for l in 0..=(order - k) {
                                    it.mon[slot][idx(km, k, l)] += tabs[li].e_kl(k, l);
                                }
                            }
                        }
                    }
                };
                add(&prods[si], si, mo, &mut self.engine);
                add(&aux.adv[si], 2 + si, km, &mut self.engine);
                add(&aux.grad_p, 4 + si, mo, &mut self.engine);
            }
            // pointwise decay quantities
            let phys = |f: &SpecVec, tr: &mut Transform| -> Vec<Vec<f64>> {
                f.iter()
                    .map(|c| {
                        let mut b = vec![0.0; g.len()];
                        tr.inverse_raw(c, &mut b);
                        b
                    })
                    .collect()
            };
            let gp = phys(&aux.grad_p, &mut self.tr);
            let adv = [phys(&aux.adv[0], &mut self.tr), phys(&aux.adv[1], &mut self.tr)];
            let mut sgp = 0.0f64;
            let mut sg = [0.0f64; 2];
            for q in 0..g.len() {
                let p2 = gp[0][q].powi(2) + gp[1][q].powi(2) + gp[2][q].powi(2);
                sgp = sgp.max(p2);
                for si in 0..2 {
                    let v = (0..3).map(|c| (gp[c][q] + adv[si][c][q]).powi(2)).sum::<f64>();
                    sg[si] = sg[si].max(v);
                }
            }
            for (li, it) in inst.iter_mut().enumerate() {
                let c = &self.ledgers[li].cfg;
                let fac = (1.0 + (t + c.a).abs()).powf(1.0 + c.sigma);
                it.sup_gradp = sgp.sqrt() * fac;
                it.sup_g = [sg[0].sqrt() * fac, sg[1].sqrt() * fac];
            }
        }
        for (led, it) in self.ledgers.iter_mut().zip(inst) {
            led.push(t, it);
        }
    }
}

impl Observer for LedgerSet {
    fn observe(&mut self, v: &StepView) -> Result<()> {
        if v.step % self.every == 0 || v.last {
            self.sample(v.state, v.aux);
        }
        Ok(())
    }
}

/// Both sides of the Sobolev inequality: `(||f||_inf, sum_{k+l<=2} delta^{l-1/2} ||grad_h^k d3^l f||)`.
pub fn sobolev_sides(f: &ScalarField, parity: Parity) -> Result<(f64, f64)> {
    let g = f.grid;
    let s = Transform::new(g).forward(f, parity)?;
    let ones = vec![1.0; g.n1];
    let tab = &LineEngine::new(g.n1).tables(&s, 2, &[&ones])[0];
    let mut rhs = 0.0;
    for k in 0..=2 {
        for l in 0..=(2 - k) {
            rhs += g.delta.powf(l as f64 - 0.5) * tab.tensor_kl(k, l).sqrt();
        }
    }
    Ok((f.max_abs(), rhs))
}

/// Ratio `||f||_inf / rhs` of the Sobolev inequality.
pub fn sobolev_probe(f: &ScalarField, parity: Parity) -> Result<f64> {
    let (l, r) = sobolev_sides(f, parity)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(l / r)
}

/// Terms of the weighted div-curl inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivCurlReport {
    /// `||sqrt(lambda) grad v||^2`
    pub lhs: f64,
    pub div: f64,
    pub curl: f64,
    pub zeroth: f64,
    /// `|int_walls lambda (v^h . grad_h v^3 - v^3 div_h v^h) n3 dx_h|`
    pub wall: f64,
}

impl DivCurlReport {
    pub fn rhs(&self) -> f64 {
        self.div + self.curl + self.zeroth + self.wall
    }
}

/// Weighted div-curl probe with `lambda = <u_->^{2(1+sigma)}` at time `t`.
pub fn divcurl_probe(v: &VectorField3, ctx: &WeightContext, t: f64) -> Result<DivCurlReport> {
    let g = v.grid();
    let mut tr = Transform::new(g);
    let vs: SpecVec = [
        tr.forward(&v.c[0], Parity::Cos)?,
        tr.forward(&v.c[1], Parity::Cos)?,
        tr.forward(&v.c[2], Parity::Sin)?,
    ];
    let lam = weight_line(&g, |x| ctx.energy_density(Sign::Plus, t, x));
    let mut eng = LineEngine::new(g.n1);
    let mut norm1 = |f: &SpectralField, order: usize| eng.tables(f, order, &[&lam]).remove(0);
    let mut lhs = 0.0;
    let mut zeroth = 0.0;
    for c in vs.iter() {
        let tab = norm1(c, 1);
        lhs += tab.tensor_kl(1, 0) + tab.get(0, 0, 1);
        zeroth += tab.get(0, 0, 0);
    }
    let div = norm1(&divergence(&vs), 0).get(0, 0, 0);
    let cu = curl(&vs);
    let curl_n: f64 = cu.iter().map(|c| norm1(c, 0).get(0, 0, 0)).sum();
    // wall term from nodal values
    let v3 = &v.c[2];
    let d1v3 = tr.inverse(&derivative(&vs[2], 1))?;
    let d2v3 = tr.inverse(&derivative(&vs[2], 2))?;
    let mut divh = derivative(&vs[0], 1);
    divh.axpy(1.0, &derivative(&vs[1], 2));
    let divh = tr.inverse(&divh)?;
    let np = g.nplane();
    let mut wall = 0.0;
    for (j3, n3) in [(0usize, -1.0), (g.mv, 1.0)] {
        let mut s = 0.0;
        for i2 in 0..g.n2 {
            for i1 in 0..g.n1 {
                let q = j3 * np + i2 * g.n1 + i1;
                let integrand = v.c[0].data[q] * d1v3.data[q] + v.c[1].data[q] * d2v3.data[q] - v3.data[q] * divh.data[q];
                s += lam[i1] * integrand;
            }
        }
        wall += n3 * s * g.dx1() * g.dx2();
    }
    Ok(DivCurlReport { lhs, div, curl: curl_n, zeroth, wall: wall.abs() })
}

/// Fitted constants of the weight properties over sampled points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightProbe {
    /// Near comparability, `|x - y| <= 2`.
    pub near: f64,
    /// Far growth, `|x - y| >= 1`, normalized by `|x - y|^{3(1+sigma)/2}`.
    pub far: f64,
    /// Derivative bounds `|d1^k <u>^{1+sigma}| / <u>^{1+sigma}`, k = 1..3.
    pub deriv: [f64; 3],
    /// Largest relative error of the analytic derivatives against finite differences.
    pub fd_error: f64,
    /// `(1+|t+a|) / (<u_+><u_->)`.
    pub product: f64,
}

fn mixed_weight(ctx: &WeightContext, s: Sign, t: f64, x1: f64) -> f64 {
    ctx.weight(s.other(), t, x1).powf(1.0 + ctx.sigma) * ctx.weight(s, t, x1).powf(0.5 * (1.0 + ctx.sigma))
}

/// Analytic derivatives of `w(y) = (1 + y^2)^{p/2}` of order 1..3.
fn power_derivs(p: f64, y: f64) -> [f64; 3] {
    let q = 1.0 + y * y;
    let d1 = p * y * q.powf(p / 2.0 - 1.0);
    let d2 = p * q.powf(p / 2.0 - 1.0) + p * (p - 2.0) * y * y * q.powf(p / 2.0 - 2.0);
    let d3 = 3.0 * p * (p - 2.0) * y * q.powf(p / 2.0 - 2.0) + p * (p - 2.0) * (p - 4.0) * y.powi(3) * q.powf(p / 2.0 - 3.0);
    [d1, d2, d3]
}

/// Sample the weight properties on `samples` random (t, x, y) triples. Positions are
/// drawn in a window covering both packet centres `+-(t + a)`.
pub fn weight_probe(ctx: &WeightContext, t_max: f64, samples: usize, seed: u64) -> WeightProbe {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = WeightProbe { near: 0.0, far: 0.0, deriv: [0.0; 3], fd_error: 0.0, product: 0.0 };
    let p = 1.0 + ctx.sigma;
    for _ in 0..samples {
        let t = rng.gen_range(0.0..t_max);
        let c = t + ctx.a;
        let x1 = rng.gen_range(-c - 20.0..c + 20.0);
        let s = if rng.gen_bool(0.5) { Sign::Plus } else { Sign::Minus };
        let wx = mixed_weight(ctx, s, t, x1);
        // near
        let y1 = x1 + rng.gen_range(-2.0..2.0);
        out.near = out.near.max(wx / mixed_weight(ctx, s, t, y1));
        // far
        let d = rng.gen_range(1.0..60.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let wy = mixed_weight(ctx, s, t, x1 + d);
        out.far = out.far.max(wx / wy / d.abs().powf(1.5 * p));
        // derivatives of <u_s>^{1+sigma} in x1
        let y = x1 - s.value() * c;
        let w = (1.0 + y * y).powf(p / 2.0);
        let an = power_derivs(p, y);
        let h = 1e-3;
        let f = |z: f64| (1.0 + z * z).powf(p / 2.0);
        let fd = [
            (f(y + h) - f(y - h)) / (2.0 * h),
            (f(y + h) - 2.0 * f(y) + f(y - h)) / (h * h),
            (f(y + 2.0 * h) - 2.0 * f(y + h) + 2.0 * f(y - h) - f(y - 2.0 * h)) / (2.0 * h * h * h),
        ];
        for k in 0..3 {
            out.deriv[k] = out.deriv[k].max(an[k].abs() / w);
            out.fd_error = out.fd_error.max((fd[k] - an[k]).abs() / w);
        }
        let prod = ctx.weight(Sign::Plus, t, x1) * ctx.weight(Sign::Minus, t, x1);
        out.product = out.product.max((1.0 + c.abs()) / prod);
    }
    out
}

/// Unweighted L2 norm of a vector field, componentwise parities (cos, cos, sin).
pub fn l2_norm(v: &SpecVec) -> f64 {
    v.iter().map(|c| c.norm2()).sum::<f64>().sqrt()
}
