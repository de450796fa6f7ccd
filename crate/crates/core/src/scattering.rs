//! Scattering fields on the infinities, accumulated along characteristic lines.
//!
//! For `z_s` the line through `(u, x2, x3)` is `x1 = u - s t`, so
//! `z_s(inf; u) = z_s(0, u) - int_0^inf G_s(t, u - s t) dt` with
//! `G_s = grad p + z_{-s} . grad z_s`. Sampling at `u - s t` for every `u` at
//! once is the exact phase shift `shift_x1(., s t)`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{weight_line, LineEngine};
use crate::error::{Error, Result};
use crate::solver3d::{Observer, SpecState, StepView};
use crate::spectral::{shift_x1, shift_x1_in_place, SpecVec, Transform};
use crate::types::{GridSpec, Sign, WeightContext};

/// One scattering field `z_s(inf; u, x2, x3)` on the infinity grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringField {
    pub sign: Sign,
    pub grid: GridSpec,
    pub values: SpecVec,
    pub t_max: f64,
    pub tail_bound: f64,
    /// Envelope of `sup_x |G_s| (1 + |t + a|)^{1+sigma}` over the run.
    pub c_hat: f64,
    pub sigma: f64,
    pub a: f64,
    pub warnings: Vec<String>,
}

/// Samples `sup_x |G_s|` along a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub t: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Envelope {
    /// `(C_hat, growing)`: the envelope constant and whether its weighted
    /// profile still grows over the final 20% of the run.
    pub fn fit(&self, sigma: f64, a: f64) -> (f64, bool) {
        if self.t.is_empty() {
            return (0.0, false);
        }
        let w: Vec<f64> = self.t.iter().zip(&self.sup).map(|(t, s)| s * (1.0 + (t + a).abs()).powf(1.0 + sigma)).collect();
        let (t0, t1) = (self.t[0], *self.t.last().unwrap());
        let cut = t0 + 0.8 * (t1 - t0);
        let mut early = 0.0f64;
        let mut late = 0.0f64;
        for (t, v) in self.t.iter().zip(&w) {
            if (*t - t0).abs() <= (cut - t0).abs() {
                early = early.max(*v);
            } else {
                late = late.max(*v);
            }
        }
        (early.max(late), late > early)
    }
}

/// `C_hat (1 + t_max + a)^{-sigma} / sigma`.
pub fn tail_bound(c_hat: f64, t_max: f64, a: f64, sigma: f64) -> f64 {
    if c_hat == 0.0 {
        return 0.0;
    }
    c_hat * (1.0 + t_max + a).powf(-sigma) / sigma
}

/// Observer accumulating both scattering fields with the trapezoid rule at the
/// accepted steps. It also stores line-shifted states at requested times for
/// later residuals.
pub struct ScatteringAccumulator {
    pub values: [SpecVec; 2],
    pub envelope: [Envelope; 2],
    pub t_max: f64,
    /// `(T, [shift(z_+(T), T), shift(z_-(T), -T)])`
    pub snapshots: Vec<(f64, [SpecVec; 2])>,
    pub checkpoints: Vec<f64>,
    prev: Option<(f64, [SpecVec; 2])>,
    tr: Transform,
    grid: GridSpec,
}

fn shifted(f: &SpecVec, s: f64) -> SpecVec {
    [shift_x1(&f[0], s), shift_x1(&f[1], s), shift_x1(&f[2], s)]
}

/// `z_s(T, u - s T)` as a field of `u`.
pub fn along_lines(state: &SpecState, sign: Sign) -> SpecVec {
    shifted(state.field(sign), sign.value() * state.t)
}

impl ScatteringAccumulator {
    pub fn new(initial: &SpecState, checkpoints: &[f64]) -> Self {
        let grid = initial.grid();
        ScatteringAccumulator {
            values: [along_lines(initial, Sign::Plus), along_lines(initial, Sign::Minus)],
            envelope: Default::default(),
            t_max: initial.t,
            snapshots: Vec::new(),
            checkpoints: checkpoints.to_vec(),
            prev: None,
            tr: Transform::new(grid),
            grid,
        }
    }

    /// Add one sample of the integrands at time `t`.
    pub fn push(&mut self, t: f64, integrand: [SpecVec; 2]) {
        if let Some((tp, _)) = &self.prev {
            if *tp == t {
                return;
            }
        }
        let mut cur = integrand;
        let g = self.grid;
        let mut buf = vec![0.0; g.len()];
        for (si, s) in Sign::BOTH.into_iter().enumerate() {
            let mut sq = vec![0.0; g.len()];
            for c in 0..3 {
                self.tr.inverse_raw(&cur[si][c], &mut buf);
                for (q, v) in sq.iter_mut().zip(&buf) {
                    *q += v * v;
                }
                shift_x1_in_place(&mut cur[si][c], s.value() * t);
            }
            self.envelope[si].t.push(t);
            self.envelope[si].sup.push(sq.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt());
        }
        if let Some((tp, prev)) = &self.prev {
            let h = t - tp;
            for si in 0..2 {
                for c in 0..3 {
                    self.values[si][c].axpy(-0.5 * h, &prev[si][c]);
                    self.values[si][c].axpy(-0.5 * h, &cur[si][c]);
                }
            }
        }
        self.t_max = t;
        self.prev = Some((t, cur));
    }

    /// Fields truncated at the current horizon, with tails for the position parameter `a`.
    pub fn finalize(&self, sigma: f64, a: f64) -> [ScatteringField; 2] {
        let mk = |si: usize, s: Sign| {
            let (c_hat, growing) = self.envelope[si].fit(sigma, a);
            let mut warnings = Vec::new();
            if growing {
                warnings.push(format!("{} envelope still growing over the final 20% of the run", s.label()));
            }
            ScatteringField {
                sign: s,
                grid: self.grid,
                values: self.values[si].clone(),
                t_max: self.t_max,
                tail_bound: tail_bound(c_hat, self.t_max, a, sigma),
                c_hat,
                sigma,
                a,
                warnings,
            }
        };
        [mk(0, Sign::Plus), mk(1, Sign::Minus)]
    }
}

impl Observer for ScatteringAccumulator {
    fn observe(&mut self, v: &StepView) -> Result<()> {
        self.push(v.t, [v.aux.integrand(Sign::Plus), v.aux.integrand(Sign::Minus)]);
        if self.checkpoints.iter().any(|c| (c - v.t).abs() < 1e-9) && !self.snapshots.iter().any(|(t, _)| *t == v.t) {
            self.snapshots.push((v.t, [along_lines(v.state, Sign::Plus), along_lines(v.state, Sign::Minus)]));
        }
        Ok(())
    }
}

/// Weighted `L^2(C_s, <u_{-s}>^{2(1+sigma)})` norm squared of a field on the infinity grid,
/// summed over `|alpha_h| = k` at vertical order `l`.
fn weighted(values: &SpecVec, sign: Sign, ctx: &WeightContext, k: usize, l: usize, comps: &[usize]) -> f64 {
    let g = values[0].grid;
    let w = weight_line(&g, |u| ctx.infinity_density(sign, u));
    let mut eng = LineEngine::new(g.n1);
    comps.iter().map(|&c| eng.tables(&values[c], k + l, &[&w])[0].e_kl(k, l)).sum()
}

/// `delta^{l-1/2} || d_h^k d3^l z_s(inf) ||` in the weighted space of the infinity.
pub fn scattering_norm(sc: &ScatteringField, k: usize, l: usize, ctx: &WeightContext) -> f64 {
    let d = sc.grid.delta;
    d.powf(l as f64 - 0.5) * weighted(&sc.values, sc.sign, ctx, k, l, &[0, 1, 2]).sqrt()
}

/// The full list of weighted norms, capped at `kmax`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringNorms {
    /// `(k, l, delta^{l-1/2} ||d_h^k d3^l z||)`, `k + l <= kmax`
    pub field: Vec<(usize, usize, f64)>,
    /// `(k, delta^{-3/2} ||d_h^k z^3||)`, `k <= kmax - 1`
    pub vertical: Vec<(usize, f64)>,
    /// `(k, l, delta^{l-1/2} ||d_h^k d3^l d3 z||)`, `k + l <= kmax - 1`
    pub d3: Vec<(usize, usize, f64)>,
}

pub fn scattering_norms(values: &SpecVec, sign: Sign, ctx: &WeightContext, kmax: usize) -> ScatteringNorms {
    let g = values[0].grid;
    let d = g.delta;
    let w = weight_line(&g, |u| ctx.infinity_density(sign, u));
    let mut eng = LineEngine::new(g.n1);
    let tabs: Vec<_> = (0..3).map(|c| eng.tables(&values[c], kmax, &[&w]).remove(0)).collect();
    let mut out = ScatteringNorms { field: Vec::new(), vertical: Vec::new(), d3: Vec::new() };
    for k in 0..=kmax {
        for l in 0..=(kmax - k) {
            let v: f64 = tabs.iter().map(|t| t.e_kl(k, l)).sum();
            out.field.push((k, l, d.powf(l as f64 - 0.5) * v.sqrt()));
            if k + l < kmax {
                let v1: f64 = tabs.iter().map(|t| t.e_kl(k, l + 1)).sum();
                out.d3.push((k, l, d.powf(l as f64 - 0.5) * v1.sqrt()));
            }
        }
        if k < kmax {
            out.vertical.push((k, d.powf(-1.5) * tabs[2].e_kl(k, 0).sqrt()));
        }
    }
    out
}

/// `|| z_s(inf; .) - z_s(T, u - s T, .) ||` in the weighted space of the infinity.
pub fn residual(sc: &ScatteringField, state: &SpecState, ctx: &WeightContext) -> Result<f64> {
    let lined = along_lines(state, sc.sign);
    residual_lined(sc, &lined, ctx)
}

/// [`residual`] against an already line-shifted field.
pub fn residual_lined(sc: &ScatteringField, lined: &SpecVec, ctx: &WeightContext) -> Result<f64> {
    if !sc.grid.same_lattice(&lined[0].grid) {
        return Err(Error::Shape("scattering field and state live on different grids".into()));
    }
    let mut d = sc.values.clone();
    for c in 0..3 {
        d[c].axpy(-1.0, &lined[c]);
    }
    Ok(weighted(&d, sc.sign, ctx, 0, 0, &[0, 1, 2]).sqrt())
}

/// Pointwise sup of the difference of two scattering fields.
pub fn sup_difference(a: &ScatteringField, b: &ScatteringField) -> Result<f64> {
    if !a.grid.same_lattice(&b.grid) || a.sign != b.sign {
        return Err(Error::Shape("scattering fields are not comparable".into()));
    }
    let mut tr = Transform::new(a.grid);
    let g = a.grid;
    let mut sq = vec![0.0; g.len()];
    let mut buf = vec![0.0; g.len()];
    for c in 0..3 {
        let mut d = a.values[c].clone();
        d.axpy(-1.0, &b.values[c]);
        tr.inverse_raw(&d, &mut buf);
        for (q, v) in sq.iter_mut().zip(&buf) {
            *q += v * v;
        }
    }
    Ok(sq.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt())
}

/// Manifest fields persisted with a scattering field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringManifest {
    pub version: String,
    pub grid: GridSpec,
    pub sign: Sign,
    pub t_max: f64,
    pub tail_bound: f64,
    pub c_hat: f64,
    pub sigma: f64,
    pub a: f64,
    pub delta: f64,
}

impl ScatteringField {
    pub fn manifest(&self) -> ScatteringManifest {
        ScatteringManifest {
            version: "1".into(),
            grid: self.grid,
            sign: self.sign,
            t_max: self.t_max,
            tail_bound: self.tail_bound,
            c_hat: self.c_hat,
            sigma: self.sigma,
            a: self.a,
            delta: self.grid.delta,
        }
    }
}
