//! Pseudo-spectral RK4 integration of the slab Elsasser system
//!
//! `dt z+ = -z-.grad z+ + d1 z+ - grad p`, `dt z- = -z+.grad z- - d1 z- - grad p`,
//! `-Lap p = d_i z+^j d_j z-^i`, with the background field (1,0,0) applied as an
//! exact spectral multiplier. The rescaled system on the unit slab uses the same
//! code with the pressure gradient `(d1 p, d2 p, gamma d3 p)`, `gamma = delta^-2`,
//! and the matching Poisson symbol `|kappa|^2 + gamma m_k^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packet::annulus_fraction_raw;
use crate::spectral::{m_der, spec_vec_zeros, Parity, SpecVec, SpectralField, Transform, Wavenumbers, C64, VEC_PARITY};
use crate::types::{ElsasserState, GridSpec, ScalarField, Sign, VectorField3};

/// Which equations are integrated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SystemKind {
    /// Physical slab of half-thickness `grid.delta`.
    Slab,
    /// Rescaled system on the unit slab for the given physical thickness.
    Rescaled { delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct System {
    pub kind: SystemKind,
    /// `false` drops the quadratic terms and the pressure (pure transport).
    pub nonlinear: bool,
}

impl System {
    pub fn slab() -> Self {
        System { kind: SystemKind::Slab, nonlinear: true }
    }

    pub fn rescaled(delta: f64) -> Self {
        System { kind: SystemKind::Rescaled { delta }, nonlinear: true }
    }

    pub fn linear(self) -> Self {
        System { nonlinear: false, ..self }
    }

    /// Factor multiplying the vertical pressure derivative.
    pub fn gamma(&self) -> f64 {
        match self.kind {
            SystemKind::Slab => 1.0,
            SystemKind::Rescaled { delta } => 1.0 / (delta * delta),
        }
    }
}

/// Time-step selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DtPolicy {
    /// `cfl min(dx1, dx2, dx3) / (1 + max|z+| + max|z-|)`.
    Cfl { cfl: f64 },
    /// `cfl / (s1/dx1 + s2/dx2 + s3/dx3)` with per-direction speeds, capped by `dt_max`.
    Directional { cfl: f64, dt_max: f64 },
    Fixed { dt: f64 },
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy::Cfl { cfl: 0.4 }
    }
}

/// Elsasser pair in coefficient space.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecState {
    pub zp: SpecVec,
    pub zm: SpecVec,
    pub t: f64,
}

impl SpecState {
    pub fn zeros(grid: GridSpec) -> Self {
        SpecState { zp: spec_vec_zeros(grid), zm: spec_vec_zeros(grid), t: 0.0 }
    }

    pub fn grid(&self) -> GridSpec {
        self.zp[0].grid
    }

    pub fn field(&self, s: Sign) -> &SpecVec {
        match s {
            Sign::Plus => &self.zp,
            Sign::Minus => &self.zm,
        }
    }

    pub fn field_mut(&mut self, s: Sign) -> &mut SpecVec {
        match s {
            Sign::Plus => &mut self.zp,
            Sign::Minus => &mut self.zm,
        }
    }

    pub fn from_physical(s: &ElsasserState) -> Result<Self> {
        let mut tr = Transform::new(s.grid());
        let mut conv = |f: &VectorField3| -> Result<SpecVec> {
            Ok([
                tr.forward(&f.c[0], Parity::Cos)?,
                tr.forward(&f.c[1], Parity::Cos)?,
                tr.forward(&f.c[2], Parity::Sin)?,
            ])
        };
        Ok(SpecState { zp: conv(&s.zp)?, zm: conv(&s.zm)?, t: s.t })
    }

    pub fn to_physical(&self) -> Result<ElsasserState> {
        let mut tr = Transform::new(self.grid());
        let mut conv = |f: &SpecVec| -> Result<VectorField3> {
            Ok(VectorField3 { c: [tr.inverse(&f[0])?, tr.inverse(&f[1])?, tr.inverse(&f[2])?] })
        };
        Ok(ElsasserState { zp: conv(&self.zp)?, zm: conv(&self.zm)?, t: self.t })
    }

    /// Unweighted `||z+||^2`, `||z-||^2`.
    pub fn energy(&self) -> [f64; 2] {
        [
            self.zp.iter().map(|c| c.norm2()).sum(),
            self.zm.iter().map(|c| c.norm2()).sum(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.zp.iter().chain(self.zm.iter()).all(|c| c.data.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }

    /// Largest relative divergence residual of the two fields.
    pub fn divergence_residual(&self) -> f64 {
        crate::spectral::divergence_residual(&self.zp).max(crate::spectral::divergence_residual(&self.zm))
    }
}

/// By-products of a right-hand-side evaluation, reused by the diagnostics.
#[derive(Clone, Debug)]
pub struct RhsAux {
    pub p: SpectralField,
    /// `(d1 p, d2 p, gamma d3 p)`.
    pub grad_p: SpecVec,
    /// `adv[0] = z-.grad z+`, `adv[1] = z+.grad z-`.
    pub adv: [SpecVec; 2],
    /// Per-component maxima, `[sign][component]`.
    pub max_comp: [[f64; 3]; 2],
    /// Pointwise Euclidean maxima of z+ and z-.
    pub max_norm: [f64; 2],
    /// Fraction of the total energy in the outer 10% annulus.
    pub boundary_fraction: f64,
    /// Mean removed from the Poisson source, when non-negligible.
    pub mean_warning: Option<f64>,
}

impl RhsAux {
    /// Scattering integrand `grad p + z_{-s}.grad z_s`.
    pub fn integrand(&self, s: Sign) -> SpecVec {
        let i = if s == Sign::Plus { 0 } else { 1 };
        let mut g = self.adv[i].clone();
        for (a, b) in g.iter_mut().zip(self.grad_p.iter()) {
            a.axpy(1.0, b);
        }
        g
    }
}

#[derive(Clone, Debug)]
pub struct Rhs {
    pub dz: [SpecVec; 2],
    pub aux: RhsAux,
}

/// Solver for one grid and one system; owns FFT plans and workspace.
pub struct Solver {
    pub grid: GridSpec,
    pub system: System,
    pub policy: DtPolicy,
    tr: Transform,
    wn: Wavenumbers,
    /// Physical z+ and z- components.
    phys: Vec<Vec<f64>>,
    prod: Vec<f64>,
    /// Coefficients of `T_ij = z-^i z+^j`, row-major in (i, j).
    tij: Vec<SpectralField>,
    /// Stage slopes k2, k3, k4 and the stage state.
    stages: Vec<[SpecVec; 2]>,
    ystage: Option<SpecState>,
}

fn slot_z(sign: usize, j: usize) -> usize {
    3 * sign + j
}

fn tij_parity(i: usize, j: usize) -> Parity {
    if VEC_PARITY[i] == VEC_PARITY[j] {
        Parity::Cos
    } else {
        Parity::Sin
    }
}

/// Multiplier of a derivative on a single coefficient.
#[derive(Clone, Copy)]
struct ModeOps {
    k1: f64,
    k2: f64,
    m: f64,
    sin_ok: bool,
}

impl ModeOps {
    #[inline]
    fn d(&self, axis: usize, par: Parity, c: C64) -> C64 {
        match axis {
            0 => C64::new(-self.k1 * c.im, self.k1 * c.re),
            1 => C64::new(-self.k2 * c.im, self.k2 * c.re),
            _ => match par {
                Parity::Cos if self.sin_ok => -c * self.m,
                Parity::Cos => C64::new(0.0, 0.0),
                Parity::Sin => c * self.m,
            },
        }
    }
}

impl Solver {
    pub fn new(grid: GridSpec, system: System, policy: DtPolicy) -> Result<Self> {
        grid.validate()?;
        if let SystemKind::Rescaled { delta } = system.kind {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(Error::Param(format!("rescaled delta {delta} outside (0, 1]")));
            }
            if grid.delta != 1.0 {
                return Err(Error::Param("the rescaled system lives on the unit slab (grid delta = 1)".into()));
            }
        }
        match policy {
            DtPolicy::Cfl { cfl } | DtPolicy::Directional { cfl, .. } if !(cfl > 0.0) => {
                return Err(Error::Param(format!("cfl {cfl} must be positive")))
            }
            DtPolicy::Directional { dt_max, .. } if !(dt_max > 0.0) => {
                return Err(Error::Param("dt_max must be positive".into()))
            }
            DtPolicy::Fixed { dt } if !(dt > 0.0 && dt.is_finite()) => {
                return Err(Error::Param(format!("fixed dt {dt} must be positive")))
            }
            _ => {}
        }
        let n = grid.len();
        let tij = (0..9).map(|q| SpectralField::zeros(grid, tij_parity(q / 3, q % 3))).collect();
        Ok(Solver {
            grid,
            system,
            policy,
            tr: Transform::new(grid),
            wn: Wavenumbers::for_grid(&grid),
            phys: (0..6).map(|_| vec![0.0; n]).collect(),
            prod: vec![0.0; n],
            tij,
            stages: Vec::new(),
            ystage: None,
        })
    }

    fn fill_physical(&mut self, s: &SpecState) {
        for (si, f) in [&s.zp, &s.zm].into_iter().enumerate() {
            for j in 0..3 {
                self.tr.inverse_raw(&f[j], &mut self.phys[slot_z(si, j)]);
            }
        }
    }

    fn maxima(&self) -> ([[f64; 3]; 2], [f64; 2], f64) {
        let mut mc = [[0.0f64; 3]; 2];
        let mut mn = [0.0f64; 2];
        for si in 0..2 {
            let (a, b, c) = (&self.phys[slot_z(si, 0)], &self.phys[slot_z(si, 1)], &self.phys[slot_z(si, 2)]);
            for n in 0..a.len() {
                mc[si][0] = mc[si][0].max(a[n].abs());
                mc[si][1] = mc[si][1].max(b[n].abs());
                mc[si][2] = mc[si][2].max(c[n].abs());
                mn[si] = mn[si].max(a[n] * a[n] + b[n] * b[n] + c[n] * c[n]);
            }
            mn[si] = mn[si].sqrt();
        }
        let mut frac = 0.0f64;
        for si in 0..2 {
            let c = [&self.phys[slot_z(si, 0)][..], &self.phys[slot_z(si, 1)][..], &self.phys[slot_z(si, 2)][..]];
            frac = frac.max(annulus_fraction_raw(&self.grid, c));
        }
        (mc, mn, frac)
    }

    /// Core evaluation. The quadratic terms use the flux form: with
    /// `T_ij = z-^i z+^j`, `z-.grad z+ = d_i T_ij`, `z+.grad z- = d_j T_ij`, and the
    /// pressure source is `d_i d_j T_ij`. For band-limited divergence-free fields
    /// this equals the advective form up to rounding, and everything after the
    /// nine product transforms is local in the coefficient index.
    fn eval(&mut self, s: &SpecState, dz: &mut [SpecVec; 2], mut aux: Option<&mut RhsAux>) {
        let g = self.grid;
        let gamma = self.system.gamma();
        let nl = self.system.nonlinear;
        if nl || aux.is_some() {
            self.fill_physical(s);
        }
        if let Some(a) = aux.as_deref_mut() {
            let (mc, mn, bf) = self.maxima();
            a.max_comp = mc;
            a.max_norm = mn;
            a.boundary_fraction = bf;
            a.mean_warning = None;
        }
        if nl {
            for i in 0..3 {
                for j in 0..3 {
                    let (zm, zp) = (&self.phys[slot_z(1, i)], &self.phys[slot_z(0, j)]);
                    for ((o, a), b) in self.prod.iter_mut().zip(zm.iter()).zip(zp.iter()) {
                        *o = a * b;
                    }
                    self.tr.forward_raw(&self.prod, tij_parity(i, j), &mut self.tij[3 * i + j], true);
                }
            }
        }
        let nh1 = self.wn.nh1;
        let pl = g.n2 * nh1;
        let zero = C64::new(0.0, 0.0);
        let mut mean = zero;
        for k in 0..g.nz() {
            let m = m_der(&g, k);
            let sin_ok = k >= 1 && k < g.mv;
            for j2 in 0..g.n2 {
                for j1 in 0..nh1 {
                    let q = k * pl + j2 * nh1 + j1;
                    let ops = ModeOps { k1: self.wn.d1[j1], k2: self.wn.d2[j2], m, sin_ok };
                    let mut out = [[zero; 3]; 2];
                    for c in 0..3 {
                        out[0][c] = ops.d(0, VEC_PARITY[c], s.zp[c].data[q]);
                        out[1][c] = -ops.d(0, VEC_PARITY[c], s.zm[c].data[q]);
                    }
                    if nl {
                        let mut adv = [[zero; 3]; 2];
                        for i in 0..3 {
                            for j in 0..3 {
                                let t = &self.tij[3 * i + j];
                                let v = t.data[q];
                                adv[0][j] += ops.d(i, t.parity, v);
                                adv[1][i] += ops.d(j, t.parity, v);
                            }
                        }
                        let mut src = zero;
                        for i in 0..3 {
                            src += ops.d(i, VEC_PARITY[i], adv[1][i]);
                        }
                        let sym = ops.k1 * ops.k1 + ops.k2 * ops.k2 + gamma * m * m;
                        let p = if sym > 0.0 {
                            src / sym
                        } else {
                            mean = src;
                            zero
                        };
                        let mut gp = [ops.d(0, Parity::Cos, p), ops.d(1, Parity::Cos, p), ops.d(2, Parity::Cos, p)];
                        gp[2] *= gamma;
                        for (si, o) in out.iter_mut().enumerate() {
                            for c in 0..3 {
                                o[c] -= adv[si][c] + gp[c];
                            }
                            if sym > 0.0 {
                                let d = ops.d(0, Parity::Cos, o[0]) + ops.d(1, Parity::Cos, o[1]) + o[2] * m;
                                let qq = d / sym;
                                o[0] += ops.d(0, Parity::Cos, qq);
                                o[1] += ops.d(1, Parity::Cos, qq);
                                o[2] -= qq * (gamma * m);
                            }
                        }
                        if let Some(a) = aux.as_deref_mut() {
                            a.p.data[q] = p;
                            for c in 0..3 {
                                a.grad_p[c].data[q] = gp[c];
                                a.adv[0][c].data[q] = adv[0][c];
                                a.adv[1][c].data[q] = adv[1][c];
                            }
                        }
                    }
                    for si in 0..2 {
                        for c in 0..3 {
                            dz[si][c].data[q] = out[si][c];
                        }
                    }
                }
            }
        }
        for si in 0..2 {
            dz[si][2].clean_parity();
        }
        if let Some(a) = aux {
            if mean.norm() > 1e-12 {
                a.mean_warning = Some(mean.re);
            }
            a.grad_p[2].clean_parity();
            a.adv[0][2].clean_parity();
            a.adv[1][2].clean_parity();
        }
    }

    /// Right-hand side with all by-products.
    pub fn rhs(&mut self, s: &SpecState) -> Rhs {
        let g = self.grid;
        let mut dz = [spec_vec_zeros(g), spec_vec_zeros(g)];
        let mut aux = RhsAux {
            p: SpectralField::zeros(g, Parity::Cos),
            grad_p: spec_vec_zeros(g),
            adv: [spec_vec_zeros(g), spec_vec_zeros(g)],
            max_comp: [[0.0; 3]; 2],
            max_norm: [0.0; 2],
            boundary_fraction: 0.0,
            mean_warning: None,
        };
        self.eval(s, &mut dz, Some(&mut aux));
        Rhs { dz, aux }
    }

    /// The isotropic CFL step of the configured policy family.
    pub fn cfl_dt_from(&self, cfl: f64, max_norm: [f64; 2]) -> f64 {
        let g = self.grid;
        let h = g.dx1().min(g.dx2()).min(g.dx3());
        cfl * h / (1.0 + max_norm[0] + max_norm[1])
    }

    /// Largest eigenvalue magnitude of the linearized transport operator.
    fn transport_rate(&self, max_comp: &[[f64; 3]; 2]) -> f64 {
        let g = self.grid;
        let k1 = self.wn.d1.iter().zip(self.wn.keep1.iter()).filter(|p| *p.1).fold(0.0f64, |m, p| m.max(*p.0));
        let k2 = self.wn.d2.iter().zip(self.wn.keep2.iter()).filter(|p| *p.1).fold(0.0f64, |m, p| m.max(p.0.abs()));
        let k3 = (0..g.nz()).filter(|&k| crate::spectral::keep_z(&g, k)).map(|k| m_der(&g, k)).fold(0.0, f64::max);
        let s1 = 1.0 + max_comp[0][0] + max_comp[1][0];
        let s2 = max_comp[0][1] + max_comp[1][1];
        let s3 = max_comp[0][2] + max_comp[1][2];
        s1 * k1 + s2 * k2 + s3 * k3
    }

    /// Largest |dt| for which classical RK4 is stable on the transport spectrum.
    pub fn stable_dt(&self, max_comp: &[[f64; 3]; 2]) -> f64 {
        2.8 / self.transport_rate(max_comp)
    }

    /// Step proposed by the policy for the given maxima.
    pub fn policy_dt(&self, max_comp: &[[f64; 3]; 2], max_norm: [f64; 2]) -> f64 {
        let g = self.grid;
        match self.policy {
            DtPolicy::Cfl { cfl } => self.cfl_dt_from(cfl, max_norm),
            DtPolicy::Directional { cfl, dt_max } => {
                let s1 = 1.0 + max_comp[0][0] + max_comp[1][0];
                let s2 = max_comp[0][1] + max_comp[1][1];
                let s3 = max_comp[0][2] + max_comp[1][2];
                let rate = s1 / g.dx1() + s2 / g.dx2() + s3 / g.dx3();
                (cfl / rate).min(dt_max)
            }
            DtPolicy::Fixed { dt } => dt,
        }
    }

    fn check_dt(&self, dt: f64, aux: &RhsAux) -> Result<()> {
        let lim = self.stable_dt(&aux.max_comp);
        if !(dt.abs() <= lim) {
            let suggested = self.policy_dt(&aux.max_comp, aux.max_norm).min(lim) * dt.signum();
            return Err(Error::Cfl { dt, suggested });
        }
        Ok(())
    }

    fn combine(out: &mut SpecState, base: &SpecState, c: f64, k: &[SpecVec; 2]) {
        for si in 0..2 {
            let (o, b) = if si == 0 { (&mut out.zp, &base.zp) } else { (&mut out.zm, &base.zm) };
            for j in 0..3 {
                for ((x, y), z) in o[j].data.iter_mut().zip(b[j].data.iter()).zip(k[si][j].data.iter()) {
                    *x = y + z * c;
                }
            }
        }
    }

    /// One RK4 step reusing the first-stage evaluation.
    pub fn step_with(&mut self, s: &SpecState, k1: &Rhs, dt: f64) -> Result<SpecState> {
        self.check_dt(dt, &k1.aux)?;
        let g = self.grid;
        let mut stages = std::mem::take(&mut self.stages);
        while stages.len() < 3 {
            stages.push([spec_vec_zeros(g), spec_vec_zeros(g)]);
        }
        let mut y = self.ystage.take().unwrap_or_else(|| s.clone());
        Self::combine(&mut y, s, 0.5 * dt, &k1.dz);
        self.eval(&y, &mut stages[0], None);
        Self::combine(&mut y, s, 0.5 * dt, &stages[0]);
        self.eval(&y, &mut stages[1], None);
        Self::combine(&mut y, s, dt, &stages[1]);
        self.eval(&y, &mut stages[2], None);
        let mut out = s.clone();
        for si in 0..2 {
            let o = if si == 0 { &mut out.zp } else { &mut out.zm };
            for j in 0..3 {
                let (a, b, c, d) =
                    (&k1.dz[si][j].data, &stages[0][si][j].data, &stages[1][si][j].data, &stages[2][si][j].data);
                for (q, x) in o[j].data.iter_mut().enumerate() {
                    *x += (a[q] + (b[q] + c[q]) * 2.0 + d[q]) * (dt / 6.0);
                }
            }
        }
        out.t = s.t + dt;
        self.stages = stages;
        self.ystage = Some(y);
        Ok(out)
    }

    pub fn step_spec(&mut self, s: &SpecState, dt: f64) -> Result<SpecState> {
        let k1 = self.rhs(s);
        self.step_with(s, &k1, dt)
    }

    /// Physical-space step; a negative `dt` integrates backward.
    pub fn step_rk4(&mut self, s: &ElsasserState, dt: f64) -> Result<ElsasserState> {
        let sp = SpecState::from_physical(s)?;
        self.step_spec(&sp, dt)?.to_physical()
    }

    /// Isotropic CFL step of a physical state.
    pub fn cfl_dt(&mut self, s: &ElsasserState, cfl: f64) -> f64 {
        self.cfl_dt_from(cfl, [s.zp.max_norm(), s.zm.max_norm()])
    }
}

/// Data handed to observers at every accepted step (and at the initial and final times).
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub state: &'a SpecState,
    pub aux: &'a RhsAux,
    pub system: System,
    pub last: bool,
}

pub trait Observer {
    fn observe(&mut self, v: &StepView) -> Result<()>;
}

impl<F: FnMut(&StepView) -> Result<()>> Observer for F {
    fn observe(&mut self, v: &StepView) -> Result<()> {
        self(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub t_end: f64,
    /// Packet support radius used by the wrap monitor.
    pub support_radius: f64,
    pub boundary_tol: f64,
    /// Divergence is re-checked every this many steps.
    pub check_every: usize,
}

impl RunOptions {
    pub fn to(t_end: f64) -> Self {
        RunOptions { t_end, support_radius: 27.0, boundary_tol: 1e-6, check_every: 10 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: usize,
    pub t_start: f64,
    pub t_final: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub energy_start: [f64; 2],
    pub energy_final: [f64; 2],
    /// Largest relative change of each unweighted energy along the run.
    pub drift: [f64; 2],
    pub max_boundary_fraction: f64,
    pub max_divergence: f64,
    /// Largest max|z^1| seen (bootstrap requires <= 1/2).
    pub max_z1: f64,
    pub bootstrap_ok: bool,
    pub wrap_hazard: bool,
    pub warnings: Vec<String>,
    pub abort: Option<String>,
}

pub struct RunResult {
    pub state: SpecState,
    pub report: RunReport,
}

/// Integrate from `state.t` to `opts.t_end` (either direction).
///
/// Observers see the stage-one evaluation of every accepted step and the final
/// state. A monitor breach stops the run and is recorded in `report.abort`.
pub fn run(
    solver: &mut Solver,
    state: SpecState,
    opts: &RunOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<RunResult> {
    let t0 = state.t;
    let dir = if opts.t_end >= t0 { 1.0 } else { -1.0 };
    let e0 = state.energy();
    let mut rep = RunReport {
        t_start: t0,
        t_final: t0,
        dt_min: f64::INFINITY,
        dt_max: 0.0,
        energy_start: e0,
        energy_final: e0,
        bootstrap_ok: true,
        ..Default::default()
    };
    let mut cur = state;
    let mut step = 0usize;
    let wrap_limit = 0.5 * solver.grid.lh1 - opts.support_radius;
    loop {
        let k1 = solver.rhs(&cur);
        let e = cur.energy();
        for i in 0..2 {
            if e0[i] > 0.0 {
                rep.drift[i] = rep.drift[i].max((e[i] - e0[i]).abs() / e0[i]);
            }
        }
        rep.energy_final = e;
        rep.max_boundary_fraction = rep.max_boundary_fraction.max(k1.aux.boundary_fraction);
        let z1 = k1.aux.max_comp[0][0].max(k1.aux.max_comp[1][0]);
        rep.max_z1 = rep.max_z1.max(z1);
        if z1 > 0.5 {
            rep.bootstrap_ok = false;
        }
        if (cur.t - t0).abs() > wrap_limit && !rep.wrap_hazard {
            rep.wrap_hazard = true;
            rep.warnings.push(format!("shift exceeds half box minus support radius at t = {}", cur.t));
        }
        if let Some(m) = k1.aux.mean_warning {
            if rep.warnings.len() < 16 {
                rep.warnings.push(format!("Poisson source mean {m:e} removed at t = {}", cur.t));
            }
        }
        if step % opts.check_every.max(1) == 0 {
            rep.max_divergence = rep.max_divergence.max(cur.divergence_residual());
        }
        let remaining = opts.t_end - cur.t;
        let last = remaining.abs() <= 1e-12 * (1.0 + opts.t_end.abs());
        let mut abort = None;
        if !cur.is_finite() {
            abort = Some("non-finite values".to_string());
        } else if k1.aux.boundary_fraction > opts.boundary_tol {
            abort = Some(format!(
                "boundary energy fraction {:e} exceeds {:e}",
                k1.aux.boundary_fraction, opts.boundary_tol
            ));
        } else if rep.max_divergence > crate::types::DIV_TOL {
            abort = Some(format!("divergence residual {:e}", rep.max_divergence));
        }
        {
            let view = StepView { step, t: cur.t, state: &cur, aux: &k1.aux, system: solver.system, last: last || abort.is_some() };
            for o in observers.iter_mut() {
                o.observe(&view)?;
            }
        }
        if let Some(reason) = abort {
            rep.abort = Some(format!("t = {}: {reason}", cur.t));
            break;
        }
        if last {
            break;
        }
        let mut dt = solver.policy_dt(&k1.aux.max_comp, k1.aux.max_norm);
        let finishing = dt >= remaining.abs() * (1.0 - 1e-9);
        if finishing {
            dt = remaining.abs();
        }
        dt *= dir;
        rep.dt_min = rep.dt_min.min(dt.abs());
        rep.dt_max = rep.dt_max.max(dt.abs());
        let mut next = solver.step_with(&cur, &k1, dt)?;
        if finishing {
            next.t = opts.t_end;
        }
        cur = next;
        step += 1;
    }
    rep.steps = step;
    rep.t_final = cur.t;
    if rep.dt_min == f64::INFINITY {
        rep.dt_min = 0.0;
    }
    Ok(RunResult { state: cur, report: rep })
}

/// Neumann pressure of a physical slab state.
pub fn pressure_from_state(s: &ElsasserState) -> Result<ScalarField> {
    let sp = SpecState::from_physical(s)?;
    let mut solver = Solver::new(s.grid(), System::slab(), DtPolicy::default())?;
    let rhs = solver.rhs(&sp);
    Transform::new(s.grid()).inverse(&rhs.aux.p)
}

/// Physical-space right-hand side `(dzp, dzm, p)` of the slab system.
pub fn rhs(s: &ElsasserState, system: System) -> Result<(VectorField3, VectorField3, ScalarField)> {
    let sp = SpecState::from_physical(s)?;
    let mut solver = Solver::new(s.grid(), system, DtPolicy::default())?;
    let r = solver.rhs(&sp);
    let mut tr = Transform::new(s.grid());
    let mut conv = |f: &SpecVec| -> Result<VectorField3> {
        Ok(VectorField3 { c: [tr.inverse(&f[0])?, tr.inverse(&f[1])?, tr.inverse(&f[2])?] })
    };
    let dzp = conv(&r.dz[0])?;
    let dzm = conv(&r.dz[1])?;
    Ok((dzp, dzm, tr.inverse(&r.aux.p)?))
}
