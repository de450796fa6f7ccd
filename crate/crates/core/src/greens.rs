//! Gradient of the wall-Neumann Green's function of the slab, by images, and
//! direct evaluation of the pressure gradient for cross-checks.
//!
//! The image series is summed in pairs `x_{+,k}, x_{-,k}`. The vertical parts of a
//! pair cancel to leading order, which gives the tail bound
//! `(2r + 4c) / (4 pi 2 delta sqrt(r^2 + A^2) (sqrt(r^2 + A^2) + A))` with
//! `c = |x3| + |y3|` and `A = 2 K delta - c`; it decays like `K^-2`.
//!
//! Direct convolution uses the equivalent vertical-mode expansion of the same
//! kernel: mode 0 is the planar Newtonian kernel `-(1/2pi) log r`, mode `n` is
//! `(1/2pi) K0(m_n r)`. Against a source given in the cos basis the vertical
//! integral is then exact and only planar quadratures remain.

use puruspe::Kn;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::solver3d::SpecState;
use crate::spectral::{derivative_into, HorizontalFft, Parity, SpectralField, Transform, Wavenumbers, C64};
use crate::types::ElsasserState;

pub const KERNEL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageKernelQuery {
    pub x: [f64; 3],
    pub y: [f64; 3],
    pub delta: f64,
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub grad: [f64; 3],
    pub tail_bound: f64,
    /// Number of image pairs summed.
    pub pairs: usize,
}

impl ImageKernelQuery {
    pub fn new(x: [f64; 3], y: [f64; 3], delta: f64) -> Self {
        ImageKernelQuery { x, y, delta, tol: KERNEL_TOL }
    }

    fn check(&self) -> Result<()> {
        let d = self.delta;
        if !(d > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Param("kernel query needs delta > 0 and tol > 0".into()));
        }
        if self.x[2].abs() > d || self.y[2].abs() > d {
            return Err(Error::Param(format!("points must lie in the slab |x3| <= {d}")));
        }
        if self.x == self.y {
            return Err(Error::Singular);
        }
        Ok(())
    }

    fn r(&self) -> f64 {
        (self.x[0] - self.y[0]).hypot(self.x[1] - self.y[1])
    }
}

/// `grad_x |X - y|^{-1}` at image height `X3 = s (x3 - 2 k delta)`, with the chain factor `s`.
fn image_term(q: &ImageKernelQuery, k: i64) -> [f64; 3] {
    let s = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let x3 = s * (q.x[2] - 2.0 * k as f64 * q.delta);
    let d = [q.x[0] - q.y[0], q.x[1] - q.y[1], x3 - q.y[2]];
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let f = -1.0 / (r2 * r2.sqrt());
    [f * d[0], f * d[1], f * d[2] * s]
}

/// Certified bound on the pairs `k > pairs`.
pub fn image_tail_bound(q: &ImageKernelQuery, pairs: usize) -> f64 {
    let r = q.r();
    let c = q.x[2].abs() + q.y[2].abs();
    let a = 2.0 * pairs as f64 * q.delta - c;
    if a <= 0.0 {
        return f64::INFINITY;
    }
    let h = (r * r + a * a).sqrt();
    (2.0 * r + 4.0 * c) / (4.0 * PI * 2.0 * q.delta * h * (h + a))
}

/// Partial sum `S_K` over the direct term and `K` image pairs.
pub fn image_sum(q: &ImageKernelQuery, pairs: usize) -> Result<[f64; 3]> {
    q.check()?;
    let mut g = image_term(q, 0);
    for k in 1..=pairs as i64 {
        for kk in [k, -k] {
            let t = image_term(q, kk);
            for i in 0..3 {
                g[i] += t[i];
            }
        }
    }
    Ok(g.map(|v| v / (4.0 * PI)))
}

/// `grad_x G_delta(x, y)` with `K` chosen so the certified tail is below `q.tol`.
pub fn greens_grad(q: &ImageKernelQuery) -> Result<KernelValue> {
    q.check()?;
    let mut hi = 1usize;
    while image_tail_bound(q, hi) >= q.tol {
        hi *= 2;
        if hi > 1 << 40 {
            return Err(Error::Param("kernel tolerance unreachable".into()));
        }
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if image_tail_bound(q, mid) < q.tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(KernelValue { grad: image_sum(q, hi)?, tail_bound: image_tail_bound(q, hi), pairs: hi })
}

/// The same kernel through its vertical-mode expansion, truncated at `modes`.
pub fn modal_grad(x: [f64; 3], y: [f64; 3], delta: f64, modes: usize) -> [f64; 3] {
    let dh = [x[0] - y[0], x[1] - y[1]];
    let r = dh[0].hypot(dh[1]);
    let mut g = [0.0; 3];
    // mode 0: phi^2 = 1/(2 delta)
    let f0 = -1.0 / (2.0 * PI * r * r) / (2.0 * delta);
    g[0] += f0 * dh[0];
    g[1] += f0 * dh[1];
    for n in 1..=modes {
        let m = n as f64 * PI / (2.0 * delta);
        let (cx, sx) = ((m * (x[2] + delta)).cos(), (m * (x[2] + delta)).sin());
        let cy = (m * (y[2] + delta)).cos();
        let mr = m * r;
        if mr > 700.0 {
            break;
        }
        let fh = -m * Kn(1, mr) / (2.0 * PI * r) * cx * cy / delta;
        g[0] += fh * dh[0];
        g[1] += fh * dh[1];
        g[2] += -m * sx * cy / delta * Kn(0, mr) / (2.0 * PI);
    }
    g
}

/// Fitted constant of `|grad G_delta| <= C / (delta |x_h - y_h|)` over random pairs
/// with horizontal separations log-uniform in `[delta, 20]`.
pub fn kernel_bound_fit(delta: f64, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut c = 0.0f64;
    for _ in 0..samples {
        let r = (delta.ln() + rng.gen::<f64>() * ((20.0f64).ln() - delta.ln())).exp();
        let th = rng.gen_range(0.0..2.0 * PI);
        let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-delta..delta)];
        let y = [x[0] + r * th.cos(), x[1] + r * th.sin(), rng.gen_range(-delta..delta)];
        let v = greens_grad(&ImageKernelQuery::new(x, y, delta))?;
        let n = (v.grad[0].powi(2) + v.grad[1].powi(2) + v.grad[2].powi(2)).sqrt();
        c = c.max(n * delta * r);
    }
    Ok(c)
}

/// Options of the direct planar quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectOptions {
    /// Sub-cells per cell edge in the near zone.
    pub refine: usize,
    /// Cells on each side of the evaluation cell treated as near.
    pub near_cells: usize,
    /// Horizontal box images on each side (1 gives 3 x 3).
    pub box_images: usize,
    /// Taper the planar kernel smoothly to zero before the edge of the image tiling.
    pub taper: bool,
    /// Spectral upsampling factor of the source before quadrature.
    pub upsample: usize,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions { refine: 8, near_cells: 2, box_images: 1, taper: true, upsample: 4 }
    }
}

/// Screened kernels of one vertical mode: `m = 0` is the planar Newtonian kernel.
#[derive(Clone, Copy, Debug)]
struct ModeKernel {
    m: f64,
}

impl ModeKernel {
    /// Beyond this distance the screened kernel is below 1e-11 relative.
    fn cutoff(&self) -> f64 {
        if self.m == 0.0 {
            f64::INFINITY
        } else {
            26.0 / self.m
        }
    }

    /// `(grad_x g(x - y) / (x_h - y_h) factor, g)`: returns `(f, g)` with `grad = f (x_h - y_h)`.
    fn eval(&self, r: f64) -> (f64, f64) {
        if self.m == 0.0 {
            (-1.0 / (2.0 * PI * r * r), -r.ln() / (2.0 * PI))
        } else {
            let mr = self.m * r;
            (-self.m * Kn(1, mr) / (2.0 * PI * r), Kn(0, mr) / (2.0 * PI))
        }
    }
}

/// Planar layout of one coefficient plane.
#[derive(Clone, Copy, Debug)]
pub struct Plane {
    pub n1: usize,
    pub n2: usize,
    pub lh1: f64,
    pub lh2: f64,
}

impl Plane {
    fn dx1(&self) -> f64 {
        self.lh1 / self.n1 as f64
    }
    fn dx2(&self) -> f64 {
        self.lh2 / self.n2 as f64
    }
    fn x1(&self, i: usize) -> f64 {
        -0.5 * self.lh1 + i as f64 * self.dx1()
    }
    fn x2(&self, i: usize) -> f64 {
        -0.5 * self.lh2 + i as f64 * self.dx2()
    }
}

/// Zero-padded copy of a half-spectrum plane on a grid `up` times finer, with its nodal values.
pub fn upsample_plane(coef: &[C64], pl: &Plane, up: usize) -> (Plane, Vec<C64>, Vec<f64>) {
    let fine = Plane { n1: pl.n1 * up, n2: pl.n2 * up, lh1: pl.lh1, lh2: pl.lh2 };
    let (nh1, nh1f) = (pl.n1 / 2 + 1, fine.n1 / 2 + 1);
    let mut out = vec![C64::new(0.0, 0.0); fine.n2 * nh1f];
    for j2 in 0..pl.n2 {
        let m2 = if j2 <= pl.n2 / 2 { j2 as i64 } else { j2 as i64 - pl.n2 as i64 };
        if 2 * m2.unsigned_abs() as usize == pl.n2 {
            continue;
        }
        let r = m2.rem_euclid(fine.n2 as i64) as usize;
        for j1 in 0..nh1 {
            if 2 * j1 == pl.n1 {
                continue;
            }
            out[r * nh1f + j1] = coef[j2 * nh1 + j1];
        }
    }
    let mut nodal = vec![0.0; fine.n1 * fine.n2];
    let mut work = out.clone();
    HorizontalFft::new(fine.n1, fine.n2).inverse(&mut work, &mut nodal);
    (fine, out, nodal)
}

/// Trigonometric interpolant of a half-spectrum plane on a tensor set of points.
/// Returns `values[q2 * s1.len() + q1]`.
pub fn eval_plane(coef: &[C64], pl: &Plane, s1: &[f64], s2: &[f64]) -> Vec<f64> {
    let (n1, n2) = (pl.n1, pl.n2);
    let nh1 = n1 / 2 + 1;
    let wn = Wavenumbers::new(n1, n2, pl.lh1, pl.lh2);
    let tau = 2.0 * PI;
    let x10 = pl.x1(0);
    let x20 = pl.x2(0);
    let cols: Vec<usize> = (0..nh1)
        .filter(|&j| (j < n1 / 2 || n1 % 2 == 1) && (0..n2).any(|r| coef[r * nh1 + j] != C64::new(0.0, 0.0)))
        .collect();
    let rows: Vec<usize> = (0..n2).filter(|&j| coef[j * nh1..(j + 1) * nh1].iter().any(|c| c.re != 0.0 || c.im != 0.0)).collect();
    let e1: Vec<Vec<C64>> = s1
        .iter()
        .map(|&s| cols.iter().map(|&j| C64::from_polar(wn.mult1[j], tau * j as f64 / pl.lh1 * (s - x10))).collect())
        .collect();
    // a[row][q1]
    let mut a = vec![C64::new(0.0, 0.0); rows.len() * s1.len()];
    for (ri, &j2) in rows.iter().enumerate() {
        let row = &coef[j2 * nh1..(j2 + 1) * nh1];
        for (q1, e) in e1.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (ci, &j1) in cols.iter().enumerate() {
                acc += row[j1] * e[ci];
            }
            a[ri * s1.len() + q1] = acc;
        }
    }
    let mut out = vec![0.0; s1.len() * s2.len()];
    for (q2, &s) in s2.iter().enumerate() {
        for (ri, &j2) in rows.iter().enumerate() {
            let e = C64::from_polar(1.0, tau * wn.m2[j2] as f64 / pl.lh2 * (s - x20));
            let o = &mut out[q2 * s1.len()..(q2 + 1) * s1.len()];
            for (q1, v) in o.iter_mut().enumerate() {
                *v += (e * a[ri * s1.len() + q1]).re;
            }
        }
    }
    out
}

/// Smooth window equal to 1 on `[0, r0]` and 0 beyond `r1`.
pub fn window(r: f64, r0: f64, r1: f64) -> f64 {
    if r <= r0 {
        return 1.0;
    }
    if r >= r1 {
        return 0.0;
    }
    let s = (r - r0) / (r1 - r0);
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    b / (a + b)
}

/// Radial factor multiplying the planar kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialWeight {
    One,
    /// Smooth cutoff `theta`: 1 on `[0, r0]`, 0 beyond `r1`.
    Inner(f64, f64),
    /// `1 - theta`.
    Outer(f64, f64),
}

impl RadialWeight {
    fn at(&self, r: f64) -> f64 {
        match *self {
            RadialWeight::One => 1.0,
            RadialWeight::Inner(a, b) => window(r, a, b),
            RadialWeight::Outer(a, b) => 1.0 - window(r, a, b),
        }
    }
}

fn simpson(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = n + n % 2;
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

/// `(int_R grad_x g(x - y) dy, int_R g(x - y) dy)` over the rectangle `R = [a1,b1] x [a2,b2]`
/// containing `x`, through boundary integrals.
fn rect_integrals(ker: &ModeKernel, x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> ([f64; 2], f64) {
    let mut grad = [0.0; 2];
    let mut flux = 0.0;
    // edges: (start, direction, length, outward normal)
    let edges = [
        ([a[0], a[1]], [1.0, 0.0], b[0] - a[0], [0.0, -1.0]),
        ([b[0], a[1]], [0.0, 1.0], b[1] - a[1], [1.0, 0.0]),
        ([b[0], b[1]], [-1.0, 0.0], b[0] - a[0], [0.0, 1.0]),
        ([a[0], b[1]], [0.0, -1.0], b[1] - a[1], [-1.0, 0.0]),
    ];
    for (p0, dir, len, n) in edges {
        let at = |s: f64| {
            let y = [p0[0] + dir[0] * s * len, p0[1] + dir[1] * s * len];
            let d = [x[0] - y[0], x[1] - y[1]];
            let r = d[0].hypot(d[1]);
            let (f, g) = ker.eval(r);
            // grad_y g(x - y) = -f (x - y)
            (g, -f * (d[0] * n[0] + d[1] * n[1]))
        };
        let gi = simpson(400, |s| at(s).0) * len;
        grad[0] -= n[0] * gi;
        grad[1] -= n[1] * gi;
        flux += simpson(400, |s| at(s).1) * len;
    }
    let val = if ker.m > 0.0 { (1.0 + flux) / (ker.m * ker.m) } else { 0.0 };
    (grad, val)
}

/// `(int grad_h g(x_h - y_h) w S dy_h, int g w S dy_h)` for one vertical mode with
/// wavenumber `m`. The value integral is only formed for screened modes (`m > 0`).
/// `window` is an optional smooth far-field cutoff `(r0, r1)` for the planar kernel.
#[allow(clippy::too_many_arguments)]
pub fn planar_convolution(
    coef: &[C64],
    nodal: &[f64],
    pl: &Plane,
    m: f64,
    x: [f64; 2],
    opts: &DirectOptions,
    weight: RadialWeight,
    far: Option<(f64, f64)>,
) -> ([f64; 2], f64) {
    let ker = ModeKernel { m };
    let (dx1, dx2) = (pl.dx1(), pl.dx2());
    let cut = ker.cutoff();
    let wfar = |r: f64| weight.at(r) * far.map_or(1.0, |(a, b)| window(r, a, b));
    let c1 = ((x[0] - pl.x1(0)) / dx1).round() as i64;
    let c2 = ((x[1] - pl.x2(0)) / dx2).round() as i64;
    let nc = opts.near_cells as i64;
    let nb = opts.box_images as i64;
    let mut grad = [0.0; 2];
    let mut val = 0.0;
    let area = dx1 * dx2;
    for b2 in -nb..=nb {
        for b1 in -nb..=nb {
            for i2 in 0..pl.n2 {
                let y2 = pl.x2(i2) + b2 as f64 * pl.lh2;
                let j2 = i2 as i64 + b2 * pl.n2 as i64;
                for i1 in 0..pl.n1 {
                    let j1 = i1 as i64 + b1 * pl.n1 as i64;
                    if (j1 - c1).abs() <= nc && (j2 - c2).abs() <= nc {
                        continue;
                    }
                    let s = nodal[i2 * pl.n1 + i1];
                    if s == 0.0 {
                        continue;
                    }
                    let y1 = pl.x1(i1) + b1 as f64 * pl.lh1;
                    let d = [x[0] - y1, x[1] - y2];
                    let r = d[0].hypot(d[1]);
                    if r > cut {
                        continue;
                    }
                    let w = wfar(r);
                    if w == 0.0 {
                        continue;
                    }
                    let (f, g) = ker.eval(r);
                    let w = w * s * area;
                    grad[0] += w * f * d[0];
                    grad[1] += w * f * d[1];
                    if m > 0.0 {
                        val += w * g;
                    }
                }
            }
        }
    }
    // Near zone R (cell aligned). The singular part is removed by subtracting S(x):
    // int_R k w S = int_R k (w S - S(x)) + S(x) int_R k, the last term in closed form.
    // This needs w = 1 near x; weights vanishing near x need no subtraction.
    let subtract = weight.at(0.0) == 1.0;
    let per = |dx: f64| -> usize {
        let want = if m > 0.0 { (2.0 * m * dx).ceil() as usize } else { 0 };
        opts.refine.max(want)
    };
    let (ns1, ns2) = (per(dx1), per(dx2));
    let h1 = dx1 / ns1 as f64;
    let h2 = dx2 / ns2 as f64;
    let lo = [pl.x1(0) + (c1 - nc) as f64 * dx1 - 0.5 * dx1, pl.x2(0) + (c2 - nc) as f64 * dx2 - 0.5 * dx2];
    let cells = (2 * nc + 1) as usize;
    let hi = [lo[0] + cells as f64 * dx1, lo[1] + cells as f64 * dx2];
    let s1: Vec<f64> = (0..cells * ns1).map(|q| lo[0] + (q as f64 + 0.5) * h1).filter(|s| (s - x[0]).abs() <= cut).collect();
    let s2: Vec<f64> = (0..cells * ns2).map(|q| lo[1] + (q as f64 + 0.5) * h2).filter(|s| (s - x[1]).abs() <= cut).collect();
    let sx = if subtract { eval_plane(coef, pl, &[x[0]], &[x[1]])[0] } else { 0.0 };
    if !s1.is_empty() && !s2.is_empty() {
        let src = eval_plane(coef, pl, &s1, &s2);
        for (q2, &y2) in s2.iter().enumerate() {
            for (q1, &y1) in s1.iter().enumerate() {
                let d = [x[0] - y1, x[1] - y2];
                let r = d[0].hypot(d[1]);
                if r > cut || r == 0.0 {
                    continue;
                }
                let (f, g) = ker.eval(r);
                let w = (wfar(r) * src[q2 * s1.len() + q1] - sx) * h1 * h2;
                grad[0] += w * f * d[0];
                grad[1] += w * f * d[1];
                if m > 0.0 {
                    val += w * g;
                }
            }
        }
    }
    if subtract && sx != 0.0 {
        let (gr, v) = rect_integrals(&ker, x, lo, hi);
        grad[0] += sx * gr[0];
        grad[1] += sx * gr[1];
        val += sx * v;
    }
    (grad, val)
}

/// Far-field window of the periodized quadrature at `x`: the kernel is tapered to
/// zero before the edge of the box-image tiling.
pub fn tiling_window(pl: &Plane, opts: &DirectOptions, x: [f64; 2]) -> (f64, f64) {
    let nb = opts.box_images as f64 + 0.5;
    let r1 = (nb * pl.lh1 - x[0].abs()).min(nb * pl.lh2 - x[1].abs());
    (0.5 * r1, r1)
}

/// Pressure source `d_i z_+^j d_j z_-^i` in the cos basis (dealiased).
pub fn pressure_source(s: &SpecState) -> SpectralField {
    let g = s.grid();
    let mut tr = Transform::new(g);
    let n = g.len();
    let mut tmp = SpectralField::zeros(g, Parity::Cos);
    let mut phys = |f: &SpectralField, axis: usize, tr: &mut Transform| {
        derivative_into(f, axis, &mut tmp);
        let mut b = vec![0.0; n];
        tr.inverse_raw(&tmp, &mut b);
        b
    };
    let mut src = vec![0.0; n];
    for i in 0..3 {
        for j in 0..3 {
            let a = phys(&s.zp[j], i + 1, &mut tr);
            let b = phys(&s.zm[i], j + 1, &mut tr);
            for q in 0..n {
                src[q] += a[q] * b[q];
            }
        }
    }
    let mut out = SpectralField::zeros(g, Parity::Cos);
    tr.forward_raw(&src, Parity::Cos, &mut out, true);
    out
}

/// Direct pressure-gradient evaluation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectResult {
    pub values: Vec<[f64; 3]>,
    pub warnings: Vec<String>,
}

/// `grad p(x) = int grad_x G_delta(x, y) src(y) dy` at the given points.
pub fn grad_p_direct(state: &ElsasserState, points: &[[f64; 3]]) -> Result<DirectResult> {
    grad_p_direct_spec(&SpecState::from_physical(state)?, points, &DirectOptions::default())
}

pub fn grad_p_direct_spec(s: &SpecState, points: &[[f64; 3]], opts: &DirectOptions) -> Result<DirectResult> {
    let g = s.grid();
    let src = pressure_source(s);
    let pl = Plane { n1: g.n1, n2: g.n2, lh1: g.lh1, lh2: g.lh2 };
    let mut levels = Vec::new();
    for k in 0..g.nz() {
        if src.level_is_zero(k) {
            continue;
        }
        let (fine, coef, nodal) = upsample_plane(src.level(k), &pl, opts.upsample.max(1));
        levels.push((k, fine, coef, nodal));
    }
    let mut warnings = Vec::new();
    let mut values = Vec::with_capacity(points.len());
    for p in points {
        if p[2].abs() > g.delta {
            return Err(Error::Param(format!("point {p:?} outside the slab")));
        }
        if p[0].abs() > 0.4 * g.lh1 || p[1].abs() > 0.4 * g.lh2 {
            warnings.push(format!("point {p:?} outside the box core"));
        }
        let mut v = [0.0; 3];
        for (k, fine, coef, nodal) in &levels {
            let m = g.m_k(*k);
            let far = if m == 0.0 && opts.taper { Some(tiling_window(fine, opts, [p[0], p[1]])) } else { None };
            let (gh, val) = planar_convolution(coef, nodal, fine, m, [p[0], p[1]], opts, RadialWeight::One, far);
            let arg = m * (p[2] + g.delta);
            v[0] += arg.cos() * gh[0];
            v[1] += arg.cos() * gh[1];
            v[2] += -m * arg.sin() * val;
        }
        values.push(v);
    }
    Ok(DirectResult { values, warnings })
}

/// Spectral interpolation of `grad p` (from the spectral pressure) at arbitrary points.
pub fn grad_p_spectral_at(s: &SpecState, p: &SpectralField, points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let g = s.grid();
    let pl = Plane { n1: g.n1, n2: g.n2, lh1: g.lh1, lh2: g.lh2 };
    let gp = crate::spectral::gradient_scaled(p, 1.0);
    points
        .iter()
        .map(|x| {
            let mut v = [0.0; 3];
            for (c, f) in gp.iter().enumerate() {
                for k in 0..g.nz() {
                    if f.level_is_zero(k) {
                        continue;
                    }
                    let h = eval_plane(f.level(k), &pl, &[x[0]], &[x[1]])[0];
                    let arg = g.m_k(k) * (x[2] + g.delta);
                    v[c] += h * if f.parity == Parity::Cos { arg.cos() } else { arg.sin() };
                }
            }
            v
        })
        .collect()
}
