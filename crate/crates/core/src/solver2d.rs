//! Planar Elsasser system on a periodic box, with background field (1,0):
//! `dt z+ = d1 z+ - z-.grad z+ - grad p`, `dt z- = -d1 z- - z+.grad z- - grad p`,
//! `-Lap p = d_i z-^j d_j z+^i`.
//!
//! Uses the horizontal transforms, wavenumbers, dealiasing and flux-form products
//! of the slab solver, so an x3-independent slab state with zero vertical
//! component evolves mode for mode like its planar restriction. Also holds the
//! planar scattering fields, the planar energy ledger and the pressure
//! decomposition probe.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{Layout, LineEngine, OrderTable};
use crate::error::{Error, Result};
use crate::greens::{eval_plane, planar_convolution, tiling_window, upsample_plane, DirectOptions, Plane, RadialWeight};
use crate::packet::{gaussian_packet_spec, PacketSpec};
use crate::scattering::{tail_bound, Envelope};
use crate::solver3d::{DtPolicy, RunOptions, RunReport, SpecState};
use crate::spectral::{HorizontalFft, Wavenumbers, C64};
use crate::types::{GridSpec, Sign, WeightContext};

const ZERO: C64 = C64::new(0.0, 0.0);
static LEV_M: [f64; 1] = [0.0];
static LEV_W: [f64; 1] = [1.0];

/// Periodic planar box `lh1 x lh2` with `n1 x n2` nodes, lower corner at `-lh/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub n1: usize,
    pub n2: usize,
    pub lh1: f64,
    pub lh2: f64,
}

impl Grid2 {
    pub fn new(n1: usize, n2: usize, lh1: f64, lh2: f64) -> Result<Self> {
        GridSpec::with_box(n1, n2, lh1, lh2, 2, 1.0)?;
        Ok(Grid2 { n1, n2, lh1, lh2 })
    }

    /// Horizontal lattice of a slab grid.
    pub fn of_slab(g: &GridSpec) -> Self {
        Grid2 { n1: g.n1, n2: g.n2, lh1: g.lh1, lh2: g.lh2 }
    }

    pub fn nh1(&self) -> usize {
        self.n1 / 2 + 1
    }
    pub fn plane_len(&self) -> usize {
        self.n2 * self.nh1()
    }
    pub fn nplane(&self) -> usize {
        self.n1 * self.n2
    }
    pub fn dx1(&self) -> f64 {
        self.lh1 / self.n1 as f64
    }
    pub fn dx2(&self) -> f64 {
        self.lh2 / self.n2 as f64
    }
    pub fn x1(&self, i: usize) -> f64 {
        -0.5 * self.lh1 + i as f64 * self.dx1()
    }
    pub fn x2(&self, i: usize) -> f64 {
        -0.5 * self.lh2 + i as f64 * self.dx2()
    }

    pub fn layout(&self) -> Layout<'static> {
        Layout { n1: self.n1, n2: self.n2, lh1: self.lh1, lh2: self.lh2, lev_m: &LEV_M, lev_w: &LEV_W }
    }

    fn plane(&self) -> Plane {
        Plane { n1: self.n1, n2: self.n2, lh1: self.lh1, lh2: self.lh2 }
    }

    fn wn(&self) -> Wavenumbers {
        Wavenumbers::new(self.n1, self.n2, self.lh1, self.lh2)
    }
}

/// Normalized half spectrum `[j2][j1]` of a real planar field.
pub type Field2 = Vec<C64>;
/// Two-component planar vector field.
pub type Vec2 = [Field2; 2];

fn zeros2(g: &Grid2) -> Vec2 {
    [vec![ZERO; g.plane_len()], vec![ZERO; g.plane_len()]]
}

/// `||f||^2 = lh1 lh2 sum mult |c|^2`.
pub fn norm2_plane(g: &Grid2, f: &[C64]) -> f64 {
    let wn = g.wn();
    let nh1 = g.nh1();
    let s: f64 = f.iter().enumerate().map(|(q, c)| wn.mult1[q % nh1] * c.norm_sqr()).sum();
    s * g.lh1 * g.lh2
}

/// `sum_{|beta| <= k} ||d^beta f||^2`, each multi-index counted once.
pub fn hk_norm2(g: &Grid2, f: &[C64], k: usize) -> f64 {
    let wn = g.wn();
    let nh1 = g.nh1();
    let mut s = 0.0;
    for (q, c) in f.iter().enumerate() {
        let (k1, k2) = (wn.d1[q % nh1], wn.d2[q / nh1]);
        let mut sym = 0.0;
        for b in 0..=k {
            for cc in 0..=(k - b) {
                sym += k1.powi(2 * b as i32) * k2.powi(2 * cc as i32);
            }
        }
        s += wn.mult1[q % nh1] * sym * c.norm_sqr();
    }
    s * g.lh1 * g.lh2
}

/// Exact translation `f(x1 - s, x2)`.
pub fn shift2(g: &Grid2, f: &mut [C64], s: f64) {
    let nh1 = g.nh1();
    let tau = 2.0 * std::f64::consts::PI;
    let phase: Vec<C64> = (0..nh1)
        .map(|j| {
            if j == g.n1 / 2 {
                C64::new((tau * j as f64 / g.lh1 * s).cos(), 0.0)
            } else {
                C64::from_polar(1.0, -tau * j as f64 / g.lh1 * s)
            }
        })
        .collect();
    for row in f.chunks_mut(nh1) {
        for (c, ph) in row.iter_mut().zip(&phase) {
            *c *= ph;
        }
    }
}

/// Planar Elsasser pair in coefficient space.
#[derive(Clone, Debug, PartialEq)]
pub struct State2D {
    pub grid: Grid2,
    pub zp: Vec2,
    pub zm: Vec2,
    pub t: f64,
}

impl State2D {
    pub fn zeros(grid: Grid2) -> Self {
        State2D { grid, zp: zeros2(&grid), zm: zeros2(&grid), t: 0.0 }
    }

    pub fn field(&self, s: Sign) -> &Vec2 {
        match s {
            Sign::Plus => &self.zp,
            Sign::Minus => &self.zm,
        }
    }

    /// From nodal planes `[x2][x1]`.
    pub fn from_nodal(grid: Grid2, zp: [&[f64]; 2], zm: [&[f64]; 2], t: f64) -> Result<Self> {
        let mut fft = HorizontalFft::new(grid.n1, grid.n2);
        let mut out = State2D::zeros(grid);
        for (dst, src) in [(&mut out.zp, zp), (&mut out.zm, zm)] {
            for c in 0..2 {
                if src[c].len() != grid.nplane() {
                    return Err(Error::Shape(format!("plane of length {} for a {}x{} grid", src[c].len(), grid.n1, grid.n2)));
                }
                fft.forward(src[c], &mut dst[c], None);
            }
        }
        out.t = t;
        Ok(out)
    }

    /// Nodal planes `[sign][component]`.
    pub fn nodal(&self) -> [[Vec<f64>; 2]; 2] {
        let mut fft = HorizontalFft::new(self.grid.n1, self.grid.n2);
        let conv = |f: &Field2, fft: &mut HorizontalFft| {
            let mut w = f.clone();
            let mut out = vec![0.0; self.grid.nplane()];
            fft.inverse(&mut w, &mut out);
            out
        };
        [
            [conv(&self.zp[0], &mut fft), conv(&self.zp[1], &mut fft)],
            [conv(&self.zm[0], &mut fft), conv(&self.zm[1], &mut fft)],
        ]
    }

    /// Level 0 of the horizontal components of a slab state.
    pub fn from_slab_level0(s: &SpecState) -> Self {
        let g = s.grid();
        let grid = Grid2::of_slab(&g);
        let take = |f: &crate::spectral::SpecVec| [f[0].level(0).to_vec(), f[1].level(0).to_vec()];
        State2D { grid, zp: take(&s.zp), zm: take(&s.zm), t: s.t }
    }

    /// x3-independent slab state with zero vertical component.
    pub fn embed(&self, g: GridSpec) -> Result<SpecState> {
        if Grid2::of_slab(&g) != self.grid {
            return Err(Error::Shape("slab grid does not extend the planar grid".into()));
        }
        let mut s = SpecState::zeros(g);
        for c in 0..2 {
            s.zp[c].level_mut(0).copy_from_slice(&self.zp[c]);
            s.zm[c].level_mut(0).copy_from_slice(&self.zm[c]);
        }
        s.t = self.t;
        Ok(s)
    }

    pub fn energy(&self) -> [f64; 2] {
        let g = &self.grid;
        [
            norm2_plane(g, &self.zp[0]) + norm2_plane(g, &self.zp[1]),
            norm2_plane(g, &self.zm[0]) + norm2_plane(g, &self.zm[1]),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.zp.iter().chain(self.zm.iter()).all(|f| f.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
    }

    /// `max ||div z|| / ||grad z||` over the two fields.
    pub fn divergence_residual(&self) -> f64 {
        let g = &self.grid;
        let wn = g.wn();
        let nh1 = g.nh1();
        let mut worst = 0.0f64;
        for f in [&self.zp, &self.zm] {
            let (mut d, mut n) = (0.0, 0.0);
            for q in 0..g.plane_len() {
                let (k1, k2) = (wn.d1[q % nh1], wn.d2[q / nh1]);
                let m = wn.mult1[q % nh1];
                d += m * (f[0][q] * k1 + f[1][q] * k2).norm_sqr();
                n += m * (k1 * k1 + k2 * k2) * (f[0][q].norm_sqr() + f[1][q].norm_sqr());
            }
            if n > 0.0 {
                worst = worst.max((d / n).sqrt());
            }
        }
        worst
    }
}

/// Planar restriction of the packet family: `curl psi` for the Gaussian stream
/// function of [`gaussian_packet_spec`] with the vertical modes switched off.
pub fn packet2d(grid: Grid2, p: &PacketSpec) -> Result<State2D> {
    let g = GridSpec::with_box(grid.n1, grid.n2, grid.lh1, grid.lh2, 8, 1.0)?;
    let flat = PacketSpec { vertical: 0.0, ..p.clone() };
    let (zp, zm) = gaussian_packet_spec(g, &flat)?;
    Ok(State2D::from_slab_level0(&SpecState { zp, zm, t: 0.0 }))
}

/// By-products of a planar right-hand side.
#[derive(Clone, Debug)]
pub struct RhsAux2 {
    pub p: Field2,
    pub grad_p: Vec2,
    /// `adv[0] = z-.grad z+`, `adv[1] = z+.grad z-`.
    pub adv: [Vec2; 2],
    pub max_comp: [[f64; 2]; 2],
    pub max_norm: [f64; 2],
    pub boundary_fraction: f64,
    pub mean_warning: Option<f64>,
}

impl RhsAux2 {
    /// `grad p + z_{-s}.grad z_s`.
    pub fn integrand(&self, s: Sign) -> Vec2 {
        let i = if s == Sign::Plus { 0 } else { 1 };
        let mut g = self.adv[i].clone();
        for (a, b) in g.iter_mut().zip(&self.grad_p) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        g
    }
}

#[derive(Clone, Debug)]
pub struct Rhs2 {
    pub dz: [Vec2; 2],
    pub aux: RhsAux2,
}

/// Planar solver: FFT plans, workspace and time-step policy.
pub struct Solver2D {
    pub grid: Grid2,
    pub nonlinear: bool,
    pub policy: DtPolicy,
    fft: HorizontalFft,
    wn: Wavenumbers,
    phys: Vec<Vec<f64>>,
    prod: Vec<f64>,
    tij: Vec<Field2>,
    work: Field2,
}

fn annulus_fraction2(g: &Grid2, c: [&[f64]; 2]) -> f64 {
    let (h1, h2) = (0.5 * g.lh1, 0.5 * g.lh2);
    let (mut outer, mut total) = (0.0, 0.0);
    for i2 in 0..g.n2 {
        let r2 = (g.x2(i2) / h2).abs();
        for i1 in 0..g.n1 {
            let q = i2 * g.n1 + i1;
            let e = c[0][q] * c[0][q] + c[1][q] * c[1][q];
            total += e;
            if (g.x1(i1) / h1).abs().max(r2) > 0.9 {
                outer += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

impl Solver2D {
    pub fn new(grid: Grid2, nonlinear: bool, policy: DtPolicy) -> Result<Self> {
        Grid2::new(grid.n1, grid.n2, grid.lh1, grid.lh2)?;
        match policy {
            DtPolicy::Cfl { cfl } | DtPolicy::Directional { cfl, .. } if !(cfl > 0.0) => {
                return Err(Error::Param(format!("cfl {cfl} must be positive")))
            }
            DtPolicy::Fixed { dt } if !(dt > 0.0 && dt.is_finite()) => {
                return Err(Error::Param(format!("fixed dt {dt} must be positive")))
            }
            _ => {}
        }
        let n = grid.nplane();
        Ok(Solver2D {
            grid,
            nonlinear,
            policy,
            fft: HorizontalFft::new(grid.n1, grid.n2),
            wn: grid.wn(),
            phys: (0..4).map(|_| vec![0.0; n]).collect(),
            prod: vec![0.0; n],
            tij: (0..4).map(|_| vec![ZERO; grid.plane_len()]).collect(),
            work: vec![ZERO; grid.plane_len()],
        })
    }

    fn fill_physical(&mut self, s: &State2D) {
        for (si, f) in [&s.zp, &s.zm].into_iter().enumerate() {
            for j in 0..2 {
                self.work.copy_from_slice(&f[j]);
                self.fft.inverse(&mut self.work, &mut self.phys[2 * si + j]);
            }
        }
    }

    fn maxima(&self) -> ([[f64; 2]; 2], [f64; 2], f64) {
        let mut mc = [[0.0f64; 2]; 2];
        let mut mn = [0.0f64; 2];
        let mut frac = 0.0f64;
        for si in 0..2 {
            let (a, b) = (&self.phys[2 * si], &self.phys[2 * si + 1]);
            for q in 0..a.len() {
                mc[si][0] = mc[si][0].max(a[q].abs());
                mc[si][1] = mc[si][1].max(b[q].abs());
                mn[si] = mn[si].max(a[q] * a[q] + b[q] * b[q]);
            }
            mn[si] = mn[si].sqrt();
            frac = frac.max(annulus_fraction2(&self.grid, [a, b]));
        }
        (mc, mn, frac)
    }

    fn forward_truncated(&mut self, slot: usize) {
        let nh1 = self.wn.nh1;
        self.fft.forward(&self.prod, &mut self.tij[slot], Some(&self.wn.keep1));
        for j2 in 0..self.grid.n2 {
            if !self.wn.keep2[j2] {
                self.tij[slot][j2 * nh1..(j2 + 1) * nh1].iter_mut().for_each(|c| *c = ZERO);
            }
        }
    }

    /// Same flux form as the slab solver: `T_ij = z-^i z+^j`.
    fn eval(&mut self, s: &State2D, dz: &mut [Vec2; 2], mut aux: Option<&mut RhsAux2>) {
        let nl = self.nonlinear;
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
            for i in 0..2 {
                for j in 0..2 {
                    let (zm, zp) = (&self.phys[2 + i], &self.phys[j]);
                    for ((o, a), b) in self.prod.iter_mut().zip(zm).zip(zp) {
                        *o = a * b;
                    }
                    self.forward_truncated(2 * i + j);
                }
            }
        }
        let nh1 = self.wn.nh1;
        let mut mean = ZERO;
        for j2 in 0..self.grid.n2 {
            for j1 in 0..nh1 {
                let q = j2 * nh1 + j1;
                let kk = [self.wn.d1[j1], self.wn.d2[j2]];
                let d = |axis: usize, c: C64| C64::new(-kk[axis] * c.im, kk[axis] * c.re);
                let mut out = [[ZERO; 2]; 2];
                for c in 0..2 {
                    out[0][c] = d(0, s.zp[c][q]);
                    out[1][c] = -d(0, s.zm[c][q]);
                }
                if nl {
                    let mut adv = [[ZERO; 2]; 2];
                    for i in 0..2 {
                        for j in 0..2 {
                            let v = self.tij[2 * i + j][q];
                            adv[0][j] += d(i, v);
                            adv[1][i] += d(j, v);
                        }
                    }
                    let src = d(0, adv[1][0]) + d(1, adv[1][1]);
                    let sym = kk[0] * kk[0] + kk[1] * kk[1];
                    let p = if sym > 0.0 {
                        src / sym
                    } else {
                        mean = src;
                        ZERO
                    };
                    let gp = [d(0, p), d(1, p)];
                    for (si, o) in out.iter_mut().enumerate() {
                        for c in 0..2 {
                            o[c] -= adv[si][c] + gp[c];
                        }
                        if sym > 0.0 {
                            let qq = (d(0, o[0]) + d(1, o[1])) / sym;
                            o[0] += d(0, qq);
                            o[1] += d(1, qq);
                        }
                    }
                    if let Some(a) = aux.as_deref_mut() {
                        a.p[q] = p;
                        for c in 0..2 {
                            a.grad_p[c][q] = gp[c];
                            a.adv[0][c][q] = adv[0][c];
                            a.adv[1][c][q] = adv[1][c];
                        }
                    }
                }
                for si in 0..2 {
                    for c in 0..2 {
                        dz[si][c][q] = out[si][c];
                    }
                }
            }
        }
        if let Some(a) = aux {
            if mean.norm() > 1e-12 {
                a.mean_warning = Some(mean.re);
            }
        }
    }

    pub fn rhs(&mut self, s: &State2D) -> Rhs2 {
        let g = self.grid;
        let mut dz = [zeros2(&g), zeros2(&g)];
        let mut aux = RhsAux2 {
            p: vec![ZERO; g.plane_len()],
            grad_p: zeros2(&g),
            adv: [zeros2(&g), zeros2(&g)],
            max_comp: [[0.0; 2]; 2],
            max_norm: [0.0; 2],
            boundary_fraction: 0.0,
            mean_warning: None,
        };
        self.eval(s, &mut dz, Some(&mut aux));
        Rhs2 { dz, aux }
    }

    fn transport_rate(&self, mc: &[[f64; 2]; 2]) -> f64 {
        let k1 = self.wn.d1.iter().zip(&self.wn.keep1).filter(|p| *p.1).fold(0.0f64, |m, p| m.max(*p.0));
        let k2 = self.wn.d2.iter().zip(&self.wn.keep2).filter(|p| *p.1).fold(0.0f64, |m, p| m.max(p.0.abs()));
        (1.0 + mc[0][0] + mc[1][0]) * k1 + (mc[0][1] + mc[1][1]) * k2
    }

    pub fn stable_dt(&self, mc: &[[f64; 2]; 2]) -> f64 {
        2.8 / self.transport_rate(mc)
    }

    pub fn policy_dt(&self, mc: &[[f64; 2]; 2], mn: [f64; 2]) -> f64 {
        let g = self.grid;
        match self.policy {
            DtPolicy::Cfl { cfl } => cfl * g.dx1().min(g.dx2()) / (1.0 + mn[0] + mn[1]),
            DtPolicy::Directional { cfl, dt_max } => {
                let rate = (1.0 + mc[0][0] + mc[1][0]) / g.dx1() + (mc[0][1] + mc[1][1]) / g.dx2();
                (cfl / rate).min(dt_max)
            }
            DtPolicy::Fixed { dt } => dt,
        }
    }

    fn combine(out: &mut State2D, base: &State2D, c: f64, k: &[Vec2; 2]) {
        for (o, (b, kk)) in [&mut out.zp, &mut out.zm].into_iter().zip([(&base.zp, &k[0]), (&base.zm, &k[1])]) {
            for j in 0..2 {
                for ((x, y), z) in o[j].iter_mut().zip(&b[j]).zip(&kk[j]) {
                    *x = y + z * c;
                }
            }
        }
    }

    pub fn step_with(&mut self, s: &State2D, k1: &Rhs2, dt: f64) -> Result<State2D> {
        let lim = self.stable_dt(&k1.aux.max_comp);
        if !(dt.abs() <= lim) {
            let suggested = self.policy_dt(&k1.aux.max_comp, k1.aux.max_norm).min(lim) * dt.signum();
            return Err(Error::Cfl { dt, suggested });
        }
        let g = self.grid;
        let mut st = [[zeros2(&g), zeros2(&g)], [zeros2(&g), zeros2(&g)], [zeros2(&g), zeros2(&g)]];
        let mut y = s.clone();
        Self::combine(&mut y, s, 0.5 * dt, &k1.dz);
        self.eval(&y, &mut st[0], None);
        Self::combine(&mut y, s, 0.5 * dt, &st[0]);
        self.eval(&y, &mut st[1], None);
        Self::combine(&mut y, s, dt, &st[1]);
        self.eval(&y, &mut st[2], None);
        let mut out = s.clone();
        for (si, o) in [&mut out.zp, &mut out.zm].into_iter().enumerate() {
            for j in 0..2 {
                let (a, b, c, d) = (&k1.dz[si][j], &st[0][si][j], &st[1][si][j], &st[2][si][j]);
                for (q, x) in o[j].iter_mut().enumerate() {
                    *x += (a[q] + (b[q] + c[q]) * 2.0 + d[q]) * (dt / 6.0);
                }
            }
        }
        out.t = s.t + dt;
        Ok(out)
    }
}

/// One RK4 step (either direction).
pub fn step2d(solver: &mut Solver2D, s: &State2D, dt: f64) -> Result<State2D> {
    let k1 = solver.rhs(s);
    solver.step_with(s, &k1, dt)
}

/// Right-hand side of a planar state.
pub fn rhs2d(s: &State2D, nonlinear: bool) -> Result<Rhs2> {
    Ok(Solver2D::new(s.grid, nonlinear, DtPolicy::default())?.rhs(s))
}

/// Planar pressure (mean zero).
pub fn pressure2d(s: &State2D) -> Result<Field2> {
    Ok(rhs2d(s, true)?.aux.p)
}

pub struct StepView2<'a> {
    pub step: usize,
    pub t: f64,
    pub state: &'a State2D,
    pub aux: &'a RhsAux2,
    pub last: bool,
}

pub trait Observer2 {
    fn observe(&mut self, v: &StepView2) -> Result<()>;
}

impl<F: FnMut(&StepView2) -> Result<()>> Observer2 for F {
    fn observe(&mut self, v: &StepView2) -> Result<()> {
        self(v)
    }
}

pub struct RunResult2 {
    pub state: State2D,
    pub report: RunReport,
}

/// Planar counterpart of [`crate::solver3d::run`], with the same monitors.
pub fn run2d(
    solver: &mut Solver2D,
    state: State2D,
    opts: &RunOptions,
    observers: &mut [&mut dyn Observer2],
) -> Result<RunResult2> {
    let t0 = state.t;
    let dir = if opts.t_end >= t0 { 1.0 } else { -1.0 };
    let e0 = state.energy();
    let mut rep = RunReport {
        t_start: t0,
        t_final: t0,
        dt_min: f64::INFINITY,
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
            abort = Some(format!("boundary energy fraction {:e} exceeds {:e}", k1.aux.boundary_fraction, opts.boundary_tol));
        } else if rep.max_divergence > crate::types::DIV_TOL {
            abort = Some(format!("divergence residual {:e}", rep.max_divergence));
        }
        {
            let view = StepView2 { step, t: cur.t, state: &cur, aux: &k1.aux, last: last || abort.is_some() };
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
    Ok(RunResult2 { state: cur, report: rep })
}

fn nodal_of(fft: &mut HorizontalFft, g: &Grid2, f: &[C64]) -> Vec<f64> {
    let mut w = f.to_vec();
    let mut out = vec![0.0; g.nplane()];
    fft.inverse(&mut w, &mut out);
    out
}

fn sup_norm(fft: &mut HorizontalFft, g: &Grid2, v: &Vec2) -> f64 {
    let a = nodal_of(fft, g, &v[0]);
    let b = nodal_of(fft, g, &v[1]);
    a.iter().zip(&b).map(|(x, y)| x * x + y * y).fold(0.0, f64::max).sqrt()
}

// ---------------------------------------------------------------- scattering

/// Planar scattering field `z_s(inf; u, x2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scattering2D {
    pub sign: Sign,
    pub grid: Grid2,
    pub values: Vec2,
    pub t_max: f64,
    pub tail_bound: f64,
    pub c_hat: f64,
    pub sigma: f64,
    pub a: f64,
    pub warnings: Vec<String>,
}

/// `z_s(T, u - s T, x2)` as a field of `(u, x2)`.
pub fn along_lines2d(state: &State2D, sign: Sign) -> Vec2 {
    let mut f = state.field(sign).clone();
    for c in f.iter_mut() {
        shift2(&state.grid, c, sign.value() * state.t);
    }
    f
}

/// Trapezoid accumulation of both planar scattering fields.
pub struct ScatteringAccumulator2D {
    pub values: [Vec2; 2],
    pub envelope: [Envelope; 2],
    pub t_max: f64,
    pub snapshots: Vec<(f64, [Vec2; 2])>,
    pub checkpoints: Vec<f64>,
    prev: Option<(f64, [Vec2; 2])>,
    fft: HorizontalFft,
    grid: Grid2,
}

impl ScatteringAccumulator2D {
    pub fn new(initial: &State2D, checkpoints: &[f64]) -> Self {
        let g = initial.grid;
        ScatteringAccumulator2D {
            values: [along_lines2d(initial, Sign::Plus), along_lines2d(initial, Sign::Minus)],
            envelope: Default::default(),
            t_max: initial.t,
            snapshots: Vec::new(),
            checkpoints: checkpoints.to_vec(),
            prev: None,
            fft: HorizontalFft::new(g.n1, g.n2),
            grid: g,
        }
    }

    pub fn push(&mut self, t: f64, integrand: [Vec2; 2]) {
        if matches!(&self.prev, Some((tp, _)) if *tp == t) {
            return;
        }
        let g = self.grid;
        let mut cur = integrand;
        for (si, s) in Sign::BOTH.into_iter().enumerate() {
            let sup = sup_norm(&mut self.fft, &g, &cur[si]);
            self.envelope[si].t.push(t);
            self.envelope[si].sup.push(sup);
            for c in cur[si].iter_mut() {
                shift2(&g, c, s.value() * t);
            }
        }
        if let Some((tp, prev)) = &self.prev {
            let h = t - tp;
            for si in 0..2 {
                for c in 0..2 {
                    for ((v, a), b) in self.values[si][c].iter_mut().zip(&prev[si][c]).zip(&cur[si][c]) {
                        *v -= (a + b) * (0.5 * h);
                    }
                }
            }
        }
        self.t_max = t;
        self.prev = Some((t, cur));
    }

    pub fn finalize(&self, sigma: f64, a: f64) -> [Scattering2D; 2] {
        let mk = |si: usize, s: Sign| {
            let (c_hat, growing) = self.envelope[si].fit(sigma, a);
            let mut warnings = Vec::new();
            if growing {
                warnings.push(format!("{} envelope still growing over the final 20% of the run", s.label()));
            }
            Scattering2D {
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

impl Observer2 for ScatteringAccumulator2D {
    fn observe(&mut self, v: &StepView2) -> Result<()> {
        self.push(v.t, [v.aux.integrand(Sign::Plus), v.aux.integrand(Sign::Minus)]);
        if self.checkpoints.iter().any(|c| (c - v.t).abs() < 1e-9) && !self.snapshots.iter().any(|(t, _)| *t == v.t) {
            self.snapshots.push((v.t, [along_lines2d(v.state, Sign::Plus), along_lines2d(v.state, Sign::Minus)]));
        }
        Ok(())
    }
}

fn weighted_tables(g: &Grid2, f: &Vec2, order: usize, w: &[f64]) -> OrderTable {
    let mut eng = LineEngine::new(g.n1);
    let lay = g.layout();
    let mut t = eng.tables_raw(&f[0], &lay, order, &[w]).remove(0);
    t.add(&eng.tables_raw(&f[1], &lay, order, &[w]).remove(0));
    t
}

/// `(k, ||<u_{-s}>^{1+sigma} grad^k z_s(inf)||)` for `k <= kmax`.
pub fn scattering2d_norms(values: &Vec2, sign: Sign, grid: &Grid2, ctx: &WeightContext, kmax: usize) -> Vec<(usize, f64)> {
    let w: Vec<f64> = (0..grid.n1).map(|i| ctx.infinity_density(sign, grid.x1(i))).collect();
    let tab = weighted_tables(grid, values, kmax, &w);
    (0..=kmax).map(|k| (k, tab.tensor_kl(k, 0).sqrt())).collect()
}

/// Weighted distance between a scattering field and a line-shifted planar field.
pub fn residual2d(sc: &Scattering2D, lined: &Vec2, ctx: &WeightContext) -> f64 {
    let g = sc.grid;
    let mut d = sc.values.clone();
    for c in 0..2 {
        for (a, b) in d[c].iter_mut().zip(&lined[c]) {
            *a -= b;
        }
    }
    let w: Vec<f64> = (0..g.n1).map(|i| ctx.infinity_density(sc.sign, g.x1(i))).collect();
    weighted_tables(&g, &d, 0, &w).get(0, 0, 0).sqrt()
}

/// Run to `opts.t_end` and return both scattering fields with the run result.
pub fn scattering2d(
    solver: &mut Solver2D,
    state: State2D,
    opts: &RunOptions,
    sigma: f64,
    a: f64,
    observers: &mut [&mut dyn Observer2],
) -> Result<(RunResult2, [Scattering2D; 2])> {
    let mut acc = ScatteringAccumulator2D::new(&state, &[]);
    let res = {
        let mut obs: Vec<&mut dyn Observer2> = vec![&mut acc];
        for o in observers.iter_mut() {
            obs.push(&mut **o);
        }
        run2d(solver, state, opts, &mut obs)?
    };
    Ok((res, acc.finalize(sigma, a)))
}

// ---------------------------------------------------------------- ledger

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ledger2Config {
    pub kmax: usize,
    pub sigma: f64,
    pub a: f64,
    pub every: usize,
}

impl Ledger2Config {
    pub fn new(a: f64) -> Self {
        Ledger2Config { kmax: crate::diagnostics::KMAX_DEFAULT, sigma: crate::types::SIGMA_DEFAULT, a, every: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ledger2Row {
    pub t: f64,
    /// `||<u_{-s}>^{1+sigma} grad^k z_s||^2`, `[sign][k]`.
    pub e: [Vec<f64>; 2],
    /// Accumulated fluxes `[sign][k]`.
    pub f: [Vec<f64>; 2],
    /// `sum_k sup_t E_k + F_k`.
    pub agg: f64,
    pub sup_gradp: f64,
    pub sup_integrand: [f64; 2],
    pub max_z1: f64,
}

/// Planar energy ledger (kmax-capped bootstrap norm list).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ledger2D {
    pub cfg: Ledger2Config,
    pub rows: Vec<Ledger2Row>,
    sup_e: [Vec<f64>; 2],
    prev_fd: Option<(f64, [Vec<f64>; 2])>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ledger2Summary {
    pub a: f64,
    pub samples: usize,
    pub agg0: f64,
    pub max_agg_ratio: f64,
    pub max_z1: f64,
    pub sup_gradp: f64,
    pub sup_integrand: [f64; 2],
}

impl Ledger2D {
    pub fn new(cfg: Ledger2Config) -> Self {
        let n = cfg.kmax + 1;
        Ledger2D { cfg, rows: Vec::new(), sup_e: [vec![0.0; n], vec![0.0; n]], prev_fd: None }
    }

    fn push(&mut self, t: f64, e: [Vec<f64>; 2], fd: [Vec<f64>; 2], sup_gradp: f64, sup_g: [f64; 2], max_z1: f64) {
        let n = self.cfg.kmax + 1;
        let mut f = [vec![0.0; n], vec![0.0; n]];
        if let (Some((t0, fd0)), Some(last)) = (&self.prev_fd, self.rows.last()) {
            let h = (t - t0).abs();
            for s in 0..2 {
                for k in 0..n {
                    f[s][k] = last.f[s][k] + 0.5 * h * (fd0[s][k] + fd[s][k]);
                }
            }
        }
        let mut agg = 0.0;
        for s in 0..2 {
            for k in 0..n {
                self.sup_e[s][k] = self.sup_e[s][k].max(e[s][k]);
                agg += self.sup_e[s][k] + f[s][k];
            }
        }
        self.rows.push(Ledger2Row { t, e, f, agg, sup_gradp, sup_integrand: sup_g, max_z1 });
        self.prev_fd = Some((t, fd));
    }

    pub fn summary(&self) -> Ledger2Summary {
        let agg0 = self.rows.first().map(|r| r.agg).unwrap_or(0.0);
        let max_agg = self.rows.iter().map(|r| r.agg).fold(0.0, f64::max);
        Ledger2Summary {
            a: self.cfg.a,
            samples: self.rows.len(),
            agg0,
            max_agg_ratio: if agg0 > 0.0 { max_agg / agg0 } else { 1.0 },
            max_z1: self.rows.iter().map(|r| r.max_z1).fold(0.0, f64::max),
            sup_gradp: self.rows.iter().map(|r| r.sup_gradp).fold(0.0, f64::max),
            sup_integrand: [
                self.rows.iter().map(|r| r.sup_integrand[0]).fold(0.0, f64::max),
                self.rows.iter().map(|r| r.sup_integrand[1]).fold(0.0, f64::max),
            ],
        }
    }

    pub fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = ["t", "agg", "max_z1", "sup_gradp", "sup_G_p", "sup_G_m"].iter().map(|s| s.to_string()).collect();
        for name in ["E", "F"] {
            for s in Sign::BOTH {
                for k in 0..=self.cfg.kmax {
                    c.push(format!("{name}_{}_{k}", s.label()));
                }
            }
        }
        c
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![r.t, r.agg, r.max_z1, r.sup_gradp, r.sup_integrand[0], r.sup_integrand[1]];
                for tab in [&r.e, &r.f] {
                    for s in tab.iter() {
                        v.extend_from_slice(s);
                    }
                }
                v
            })
            .collect()
    }
}

/// Ledgers differing only in the position parameter, sampled on one run.
pub struct Ledger2Set {
    pub ledgers: Vec<Ledger2D>,
    fft: HorizontalFft,
    engine: LineEngine,
    every: usize,
}

impl Ledger2Set {
    pub fn new(grid: Grid2, cfgs: Vec<Ledger2Config>) -> Result<Self> {
        let first = cfgs.first().ok_or_else(|| Error::Param("at least one ledger configuration".into()))?;
        if cfgs.iter().any(|c| c.kmax != first.kmax || c.sigma != first.sigma || c.every != first.every) {
            return Err(Error::Param("ledgers in one set may differ only in the position parameter".into()));
        }
        let every = first.every.max(1);
        Ok(Ledger2Set {
            ledgers: cfgs.into_iter().map(Ledger2D::new).collect(),
            fft: HorizontalFft::new(grid.n1, grid.n2),
            engine: LineEngine::new(grid.n1),
            every,
        })
    }

    pub fn sample(&mut self, state: &State2D, aux: &RhsAux2) {
        let g = state.grid;
        let t = state.t;
        let lay = g.layout();
        let km = self.ledgers[0].cfg.kmax;
        let gp = [nodal_of(&mut self.fft, &g, &aux.grad_p[0]), nodal_of(&mut self.fft, &g, &aux.grad_p[1])];
        let mut sg = [0.0f64; 2];
        let mut sgp = 0.0f64;
        for si in 0..2 {
            let ad = [nodal_of(&mut self.fft, &g, &aux.adv[si][0]), nodal_of(&mut self.fft, &g, &aux.adv[si][1])];
            for q in 0..g.nplane() {
                sg[si] = sg[si].max((gp[0][q] + ad[0][q]).powi(2) + (gp[1][q] + ad[1][q]).powi(2));
                sgp = sgp.max(gp[0][q].powi(2) + gp[1][q].powi(2));
            }
        }
        let max_z1 = aux.max_comp[0][0].max(aux.max_comp[1][0]);
        for li in 0..self.ledgers.len() {
            let ctx = WeightContext::new(self.ledgers[li].cfg.sigma, self.ledgers[li].cfg.a);
            let mut e = [vec![0.0; km + 1], vec![0.0; km + 1]];
            let mut fd = [vec![0.0; km + 1], vec![0.0; km + 1]];
            for (si, s) in Sign::BOTH.into_iter().enumerate() {
                let we: Vec<f64> = (0..g.n1).map(|i| ctx.energy_density(s, t, g.x1(i))).collect();
                let wf: Vec<f64> = (0..g.n1).map(|i| ctx.flux_density(s, t, g.x1(i))).collect();
                for c in 0..2 {
                    let tabs = self.engine.tables_raw(&state.field(s)[c], &lay, km, &[&we, &wf]);
                    for k in 0..=km {
                        e[si][k] += tabs[0].tensor_kl(k, 0);
                        fd[si][k] += tabs[1].tensor_kl(k, 0);
                    }
                }
            }
            let fac = (1.0 + (t + ctx.a).abs()).powf(1.0 + ctx.sigma);
            self.ledgers[li].push(t, e, fd, sgp.sqrt() * fac, [sg[0].sqrt() * fac, sg[1].sqrt() * fac], max_z1);
        }
    }
}

impl Observer2 for Ledger2Set {
    fn observe(&mut self, v: &StepView2) -> Result<()> {
        if v.step % self.every == 0 || v.last {
            self.sample(v.state, v.aux);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- pressure probe

/// Direct evaluation of `grad p` and the bounding integrals at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressurePoint {
    pub x: [f64; 2],
    pub spectral: [f64; 2],
    /// Log-kernel quadrature over the periodized source.
    pub direct: [f64; 2],
    /// Parts of `direct` with the cutoff `theta(|x-y|)` and with `1 - theta`.
    pub near: [f64; 2],
    pub far: [f64; 2],
    /// `int_{|x-y|<=2} |S| / |x-y|`, with S the Poisson source.
    pub a1: f64,
    /// `int_{|x-y|>=1} |z-||z+| / |x-y|^3`.
    pub a2: f64,
    /// `int_{1<=|x-y|<=2} |z-||z+|`.
    pub a3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureProbe {
    pub t: f64,
    pub points: Vec<PressurePoint>,
    /// `max |direct - spectral| / max |spectral|`.
    pub rel_error: f64,
    /// `max |grad p| (1 + |t + a|)^{1+sigma}`.
    pub decay_product: f64,
    /// `max |grad p| / (A1 + A2 + A3)`.
    pub bound_ratio: f64,
}

/// Poisson source `d_i z-^j d_j z+^i` in coefficient space (2/3-truncated).
pub fn pressure_source2d(s: &State2D) -> Field2 {
    let g = s.grid;
    let wn = g.wn();
    let nh1 = g.nh1();
    let mut fft = HorizontalFft::new(g.n1, g.n2);
    let der = |f: &Field2, axis: usize, fft: &mut HorizontalFft| {
        let d: Field2 = f
            .iter()
            .enumerate()
            .map(|(q, c)| {
                let k = if axis == 0 { wn.d1[q % nh1] } else { wn.d2[q / nh1] };
                C64::new(-k * c.im, k * c.re)
            })
            .collect();
        nodal_of(fft, &g, &d)
    };
    let mut src = vec![0.0; g.nplane()];
    for i in 0..2 {
        for j in 0..2 {
            let a = der(&s.zm[j], i, &mut fft);
            let b = der(&s.zp[i], j, &mut fft);
            for q in 0..src.len() {
                src[q] += a[q] * b[q];
            }
        }
    }
    let mut out = vec![ZERO; g.plane_len()];
    fft.forward(&src, &mut out, Some(&wn.keep1));
    for j2 in 0..g.n2 {
        if !wn.keep2[j2] {
            out[j2 * nh1..(j2 + 1) * nh1].iter_mut().for_each(|c| *c = ZERO);
        }
    }
    out
}

/// Evaluate a planar field at arbitrary points.
pub fn eval_points2d(g: &Grid2, f: &[C64], points: &[[f64; 2]]) -> Vec<f64> {
    let pl = g.plane();
    points.iter().map(|p| eval_plane(f, &pl, &[p[0]], &[p[1]])[0]).collect()
}

/// Decomposition probe of the planar pressure gradient at `points`.
///
/// `direct`, `near` and `far` use the log-kernel quadrature of the periodized
/// source over 3 x 3 box images; `A1..A3` are evaluated with nodal sums over
/// the same images (A1 on a local lattice centred at the point).
pub fn pressure_decay_probe(
    state: &State2D,
    points: &[[f64; 2]],
    ctx: &WeightContext,
    opts: &DirectOptions,
) -> Result<PressureProbe> {
    let g = state.grid;
    let pl = g.plane();
    let p = pressure2d(state)?;
    let wn = g.wn();
    let nh1 = g.nh1();
    let grad = |axis: usize| -> Field2 {
        p.iter()
            .enumerate()
            .map(|(q, c)| {
                let k = if axis == 0 { wn.d1[q % nh1] } else { wn.d2[q / nh1] };
                C64::new(-k * c.im, k * c.re)
            })
            .collect()
    };
    let gp = [grad(0), grad(1)];
    let src = pressure_source2d(state);
    let (fine, coef, nodal) = upsample_plane(&src, &pl, opts.upsample.max(1));
    let zz = {
        let nd = state.nodal();
        (0..g.nplane())
            .map(|q| (nd[0][0][q].powi(2) + nd[0][1][q].powi(2)).sqrt() * (nd[1][0][q].powi(2) + nd[1][1][q].powi(2)).sqrt())
            .collect::<Vec<f64>>()
    };
    let nb = opts.box_images as i64;
    let area = g.dx1() * g.dx2();
    let mut out = PressureProbe { t: state.t, points: Vec::new(), rel_error: 0.0, decay_product: 0.0, bound_ratio: 0.0 };
    let mut scale = 0.0f64;
    let mut err = 0.0f64;
    for x in points {
        let spectral = [eval_plane(&gp[0], &pl, &[x[0]], &[x[1]])[0], eval_plane(&gp[1], &pl, &[x[0]], &[x[1]])[0]];
        let far_w = if opts.taper { Some(tiling_window(&fine, opts, *x)) } else { None };
        let (direct, _) = planar_convolution(&coef, &nodal, &fine, 0.0, *x, opts, RadialWeight::One, far_w);
        let (near, _) = planar_convolution(&coef, &nodal, &fine, 0.0, *x, opts, RadialWeight::Inner(1.0, 2.0), None);
        let (far, _) = planar_convolution(&coef, &nodal, &fine, 0.0, *x, opts, RadialWeight::Outer(1.0, 2.0), far_w);
        // A1 on a lattice of spacing h centred at x (no node at r = 0)
        let h = fine.lh1 / fine.n1 as f64;
        let nloc = (2.0 / h).ceil() as i64;
        let s1: Vec<f64> = (-nloc..nloc).map(|i| x[0] + (i as f64 + 0.5) * h).collect();
        let s2: Vec<f64> = (-nloc..nloc).map(|i| x[1] + (i as f64 + 0.5) * h).collect();
        let loc = eval_plane(&coef, &fine, &s1, &s2);
        let mut a1 = 0.0;
        for (q2, y2) in s2.iter().enumerate() {
            for (q1, y1) in s1.iter().enumerate() {
                let r = (x[0] - y1).hypot(x[1] - y2);
                if r <= 2.0 {
                    a1 += loc[q2 * s1.len() + q1].abs() / r * h * h;
                }
            }
        }
        let (mut a2, mut a3) = (0.0, 0.0);
        for b2 in -nb..=nb {
            for b1 in -nb..=nb {
                for i2 in 0..g.n2 {
                    let y2 = g.x2(i2) + b2 as f64 * g.lh2;
                    for i1 in 0..g.n1 {
                        let v = zz[i2 * g.n1 + i1];
                        if v == 0.0 {
                            continue;
                        }
                        let y1 = g.x1(i1) + b1 as f64 * g.lh1;
                        let r = (x[0] - y1).hypot(x[1] - y2);
                        if r >= 1.0 {
                            a2 += v / (r * r * r) * area;
                            if r <= 2.0 {
                                a3 += v * area;
                            }
                        }
                    }
                }
            }
        }
        let sn = spectral[0].hypot(spectral[1]);
        scale = scale.max(sn);
        err = err.max((direct[0] - spectral[0]).hypot(direct[1] - spectral[1]));
        let bound = a1 + a2 + a3;
        if bound > 0.0 {
            out.bound_ratio = out.bound_ratio.max(sn / bound);
        }
        out.points.push(PressurePoint { x: *x, spectral, direct, near, far, a1, a2, a3 });
    }
    out.rel_error = if scale > 0.0 { err / scale } else { err };
    out.decay_product = scale * (1.0 + (state.t + ctx.a).abs()).powf(1.0 + ctx.sigma);
    Ok(out)
}
