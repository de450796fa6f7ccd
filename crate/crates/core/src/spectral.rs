//! Physical <-> coefficient transforms on the slab lattice.
//!
//! Horizontal: real-to-complex FFT in x1 (indices 0..=n1/2) followed by a complex
//! FFT in x2. Coefficients multiply `exp(i k.(x - x0))` with `x0` the lower box
//! corner, so a field is `f(x) = sum_k c_k exp(i k.(x - x0))` with the half
//! spectrum stored and the conjugate half implied.
//!
//! Vertical: `cos(m_k (x3 + delta))`, k = 0..=mv, or `sin(m_k (x3 + delta))`,
//! k = 1..mv-1, with `m_k = k pi / (2 delta)`. Both are computed from the even or
//! odd extension of the mv+1 nodal values, fed to a length-2mv FFT.
//!
//! Parseval (grid trapezoid in x3, rectangle in x_h):
//! `||f||^2 = lh1 lh2 sum mult(j1) w_k |c|^2`, with `mult = 1` on the j1 = 0 and
//! j1 = n1/2 columns and 2 elsewhere, and `w_k = 2 delta` for cos modes 0 and mv,
//! `w_k = delta` otherwise.

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{GridSpec, ScalarField};

pub type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Cos,
    Sin,
}

impl Parity {
    pub fn flip(self) -> Parity {
        match self {
            Parity::Cos => Parity::Sin,
            Parity::Sin => Parity::Cos,
        }
    }
}

/// Parities of the (z1, z2, z3) components.
pub const VEC_PARITY: [Parity; 3] = [Parity::Cos, Parity::Cos, Parity::Sin];

/// Horizontal wavenumbers, derivative multipliers and dealiasing masks.
#[derive(Clone, Debug)]
pub struct Wavenumbers {
    pub nh1: usize,
    /// derivative multipliers (zero on Nyquist)
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// signed integer index of each x2 row
    pub m2: Vec<i64>,
    pub keep1: Vec<bool>,
    pub keep2: Vec<bool>,
    pub mult1: Vec<f64>,
}

impl Wavenumbers {
    pub fn new(n1: usize, n2: usize, lh1: f64, lh2: f64) -> Self {
        let nh1 = n1 / 2 + 1;
        let tau = 2.0 * std::f64::consts::PI;
        let d1 = (0..nh1)
            .map(|j| if j == n1 / 2 { 0.0 } else { tau * j as f64 / lh1 })
            .collect();
        let m2: Vec<i64> = (0..n2)
            .map(|j| if j <= n2 / 2 { j as i64 } else { j as i64 - n2 as i64 })
            .collect();
        let d2 = m2
            .iter()
            .map(|&m| if m.unsigned_abs() as usize == n2 / 2 { 0.0 } else { tau * m as f64 / lh2 })
            .collect();
        let keep1 = (0..nh1).map(|j| 3 * j < n1).collect();
        let keep2 = m2.iter().map(|&m| 3 * (m.unsigned_abs() as usize) < n2).collect();
        let mult1 = (0..nh1).map(|j| if j == 0 || j == n1 / 2 { 1.0 } else { 2.0 }).collect();
        Wavenumbers { nh1, d1, d2, m2, keep1, keep2, mult1 }
    }

    pub fn for_grid(g: &GridSpec) -> Self {
        Self::new(g.n1, g.n2, g.lh1, g.lh2)
    }
}

/// Vertical derivative multiplier of mode k; the cos mode mv has no sine partner.
pub fn m_der(g: &GridSpec, k: usize) -> f64 {
    if k >= g.mv {
        0.0
    } else {
        g.m_k(k)
    }
}

/// Vertical modes kept by the 2/3 rule.
pub fn keep_z(g: &GridSpec, k: usize) -> bool {
    3 * k < 2 * g.mv
}

/// Vertical Parseval weight of mode k.
pub fn wz_mode(g: &GridSpec, parity: Parity, k: usize) -> f64 {
    match parity {
        Parity::Cos if k == 0 || k == g.mv => 2.0 * g.delta,
        _ => g.delta,
    }
}

/// Coefficients indexed `[k][j2][j1]`, `j1` in `0..=n1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub parity: Parity,
    pub data: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec, parity: Parity) -> Self {
        let n = grid.nz() * grid.n2 * (grid.n1 / 2 + 1);
        SpectralField { grid, parity, data: vec![ZERO; n] }
    }

    pub fn nh1(&self) -> usize {
        self.grid.n1 / 2 + 1
    }

    pub fn idx(&self, k: usize, j2: usize, j1: usize) -> usize {
        (k * self.grid.n2 + j2) * self.nh1() + j1
    }

    pub fn plane_len(&self) -> usize {
        self.grid.n2 * self.nh1()
    }

    pub fn level(&self, k: usize) -> &[C64] {
        let p = self.plane_len();
        &self.data[k * p..(k + 1) * p]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [C64] {
        let p = self.plane_len();
        &mut self.data[k * p..(k + 1) * p]
    }

    pub fn level_is_zero(&self, k: usize) -> bool {
        self.level(k).iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|c| *c *= s);
    }

    /// self += s * o
    pub fn axpy(&mut self, s: f64, o: &SpectralField) {
        debug_assert_eq!(self.parity, o.parity);
        for (a, b) in self.data.iter_mut().zip(o.data.iter()) {
            *a += b * s;
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|c| *c = ZERO);
    }

    /// Grid L2 norm squared through Parseval.
    pub fn norm2(&self) -> f64 {
        let g = &self.grid;
        let wn = Wavenumbers::for_grid(g);
        let nh1 = wn.nh1;
        let mut total = 0.0;
        for k in 0..g.nz() {
            let wk = wz_mode(g, self.parity, k);
            let mut s = 0.0;
            for j2 in 0..g.n2 {
                let row = &self.data[self.idx(k, j2, 0)..self.idx(k, j2, 0) + nh1];
                for (j1, c) in row.iter().enumerate() {
                    s += wn.mult1[j1] * c.norm_sqr();
                }
            }
            total += wk * s;
        }
        total * g.lh1 * g.lh2
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, c| m.max(c.norm()))
    }

    /// Zero every coefficient outside the 2/3 band in all three indices.
    pub fn dealias(&mut self) {
        let g = self.grid;
        let wn = Wavenumbers::for_grid(&g);
        let nh1 = wn.nh1;
        for k in 0..g.nz() {
            let kz = keep_z(&g, k);
            for j2 in 0..g.n2 {
                let base = (k * g.n2 + j2) * nh1;
                let row_keep = kz && wn.keep2[j2];
                for j1 in 0..nh1 {
                    if !(row_keep && wn.keep1[j1]) {
                        self.data[base + j1] = ZERO;
                    }
                }
            }
        }
    }

    /// True when every coefficient outside the 2/3 band is exactly zero.
    pub fn is_dealiased(&self) -> bool {
        let mut c = self.clone();
        c.dealias();
        c == *self
    }

    /// Enforce the structural zeros of the sine basis (modes 0 and mv).
    pub fn clean_parity(&mut self) {
        if self.parity == Parity::Sin {
            let mv = self.grid.mv;
            self.level_mut(0).iter_mut().for_each(|c| *c = ZERO);
            self.level_mut(mv).iter_mut().for_each(|c| *c = ZERO);
        }
    }
}

/// Spectral derivative along axis 1, 2 or 3.
pub fn derivative(f: &SpectralField, axis: usize) -> SpectralField {
    let mut out = SpectralField::zeros(f.grid, f.parity);
    derivative_into(f, axis, &mut out);
    out
}

pub fn derivative_into(f: &SpectralField, axis: usize, out: &mut SpectralField) {
    let g = f.grid;
    let wn = Wavenumbers::for_grid(&g);
    let nh1 = wn.nh1;
    out.grid = g;
    out.parity = if axis == 3 { f.parity.flip() } else { f.parity };
    if out.data.len() != f.data.len() {
        out.data = vec![ZERO; f.data.len()];
    }
    match axis {
        1 | 2 => {
            for k in 0..g.nz() {
                for j2 in 0..g.n2 {
                    let base = (k * g.n2 + j2) * nh1;
                    for j1 in 0..nh1 {
                        let kap = if axis == 1 { wn.d1[j1] } else { wn.d2[j2] };
                        let c = f.data[base + j1];
                        out.data[base + j1] = C64::new(-kap * c.im, kap * c.re);
                    }
                }
            }
        }
        3 => {
            let p = f.plane_len();
            for k in 0..g.nz() {
                let m = m_der(&g, k);
                let s = match f.parity {
                    Parity::Cos => -m,
                    Parity::Sin => m,
                };
                let valid = match out.parity {
                    Parity::Sin => k >= 1 && k < g.mv,
                    Parity::Cos => true,
                };
                for i in k * p..(k + 1) * p {
                    out.data[i] = if valid { f.data[i] * s } else { ZERO };
                }
            }
        }
        _ => panic!("axis must be 1, 2 or 3"),
    }
}

/// Mixed derivative d1^a d2^b d3^c.
pub fn derivative_multi(f: &SpectralField, a: usize, b: usize, c: usize) -> SpectralField {
    let mut out = f.clone();
    for _ in 0..a {
        out = derivative(&out, 1);
    }
    for _ in 0..b {
        out = derivative(&out, 2);
    }
    for _ in 0..c {
        out = derivative(&out, 3);
    }
    out
}

/// Exact translation: returns f(x1 - s, x2, x3).
pub fn shift_x1(f: &SpectralField, s: f64) -> SpectralField {
    let mut out = f.clone();
    shift_x1_in_place(&mut out, s);
    out
}

pub fn shift_x1_in_place(f: &mut SpectralField, s: f64) {
    let g = f.grid;
    let nh1 = g.n1 / 2 + 1;
    let tau = 2.0 * std::f64::consts::PI;
    let phase: Vec<C64> = (0..nh1)
        .map(|j| {
            if j == g.n1 / 2 {
                // Nyquist: keep the real part consistent with a real field
                C64::new((tau * j as f64 / g.lh1 * s).cos(), 0.0)
            } else {
                C64::from_polar(1.0, -tau * j as f64 / g.lh1 * s)
            }
        })
        .collect();
    for row in f.data.chunks_mut(nh1) {
        for (c, ph) in row.iter_mut().zip(phase.iter()) {
            *c *= ph;
        }
    }
}

/// Neumann Poisson solve `-Lap p = source` with symbol
/// `|k|^2 + gamma m_k^2` (gamma = 1 on the slab, delta^-2 for the rescaled system).
/// Returns the solution and, when the source mean exceeded 1e-12 in magnitude,
/// the mean that was removed.
pub fn poisson_neumann_scaled(source: &SpectralField, gamma: f64) -> Result<(SpectralField, Option<f64>)> {
    if source.parity != Parity::Cos {
        return Err(Error::Contract("Poisson source must carry cos parity".into()));
    }
    let g = source.grid;
    let wn = Wavenumbers::for_grid(&g);
    let nh1 = wn.nh1;
    let mut p = SpectralField::zeros(g, Parity::Cos);
    let mean = source.data[0];
    let warn = if mean.norm() > 1e-12 { Some(mean.re) } else { None };
    for k in 0..g.nz() {
        let m = m_der(&g, k);
        for j2 in 0..g.n2 {
            let base = (k * g.n2 + j2) * nh1;
            for j1 in 0..nh1 {
                let sym = wn.d1[j1].powi(2) + wn.d2[j2].powi(2) + gamma * m * m;
                if sym > 0.0 {
                    p.data[base + j1] = source.data[base + j1] / sym;
                }
            }
        }
    }
    p.data[0] = ZERO;
    Ok((p, warn))
}

pub fn poisson_neumann(source: &SpectralField) -> Result<(SpectralField, Option<f64>)> {
    poisson_neumann_scaled(source, 1.0)
}

/// Gradient of a cos-parity scalar; the vertical component is scaled by gamma.
pub fn gradient_scaled(p: &SpectralField, gamma: f64) -> [SpectralField; 3] {
    let mut g3 = derivative(p, 3);
    if gamma != 1.0 {
        g3.scale(gamma);
    }
    [derivative(p, 1), derivative(p, 2), g3]
}

/// Divergence of a (cos, cos, sin) vector field.
pub fn divergence(v: &[SpectralField; 3]) -> SpectralField {
    let mut d = derivative(&v[0], 1);
    d.axpy(1.0, &derivative(&v[1], 2));
    d.axpy(1.0, &derivative(&v[2], 3));
    d
}

/// Curl of a field with parities (cos, cos, sin) -> (sin, sin, cos) or the reverse.
pub fn curl(v: &[SpectralField; 3]) -> [SpectralField; 3] {
    let mut c1 = derivative(&v[2], 2);
    c1.axpy(-1.0, &derivative(&v[1], 3));
    let mut c2 = derivative(&v[0], 3);
    c2.axpy(-1.0, &derivative(&v[2], 1));
    let mut c3 = derivative(&v[1], 1);
    c3.axpy(-1.0, &derivative(&v[0], 2));
    [c1, c2, c3]
}

/// Componentwise Laplacian (through repeated spectral derivatives).
pub fn laplacian(f: &SpectralField) -> SpectralField {
    let mut out = derivative(&derivative(f, 1), 1);
    out.axpy(1.0, &derivative(&derivative(f, 2), 2));
    out.axpy(1.0, &derivative(&derivative(f, 3), 3));
    out
}

/// Projection onto the kernel of the divergence with gradient `(d1, d2, gamma d3)`.
/// For gamma = 1 this is the orthogonal Leray projector.
pub fn leray_project_scaled(v: &mut [SpectralField; 3], gamma: f64) {
    let g = v[0].grid;
    let wn = Wavenumbers::for_grid(&g);
    let nh1 = wn.nh1;
    for k in 0..g.nz() {
        let m = m_der(&g, k);
        for j2 in 0..g.n2 {
            let base = (k * g.n2 + j2) * nh1;
            for j1 in 0..nh1 {
                let (k1, k2) = (wn.d1[j1], wn.d2[j2]);
                let sym = k1 * k1 + k2 * k2 + gamma * m * m;
                if sym == 0.0 {
                    continue;
                }
                let i = base + j1;
                let (a, b, c) = (v[0].data[i], v[1].data[i], v[2].data[i]);
                // d = i k1 a + i k2 b + m c
                let d = C64::new(-(k1 * a.im + k2 * b.im), k1 * a.re + k2 * b.re) + c * m;
                let q = d / sym;
                // v - grad_gamma(phi) with phi = -q: (a + i k1 q, b + i k2 q, c - gamma m q)
                v[0].data[i] = a + C64::new(-k1 * q.im, k1 * q.re);
                v[1].data[i] = b + C64::new(-k2 * q.im, k2 * q.re);
                v[2].data[i] = c - q * (gamma * m);
            }
        }
    }
    v[2].clean_parity();
}

pub fn leray_project(v: &mut [SpectralField; 3]) {
    leray_project_scaled(v, 1.0)
}

/// Relative divergence residual ||div v|| / ||grad v||.
pub fn divergence_residual(v: &[SpectralField; 3]) -> f64 {
    let d = divergence(v).norm2().sqrt();
    let mut gn = 0.0;
    for c in v.iter() {
        for ax in 1..=3 {
            gn += derivative(c, ax).norm2();
        }
    }
    if gn == 0.0 {
        0.0
    } else {
        d / gn.sqrt()
    }
}

/// Horizontal FFT pair shared by the slab and the planar code.
pub struct HorizontalFft {
    pub n1: usize,
    pub n2: usize,
    pub nh1: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    f2: Arc<dyn Fft<f64>>,
    i2: Arc<dyn Fft<f64>>,
    col: Vec<C64>,
    scratch: Vec<C64>,
    rscratch: Vec<C64>,
    row: Vec<f64>,
}

impl HorizontalFft {
    pub fn new(n1: usize, n2: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let r2c = rp.plan_fft_forward(n1);
        let c2r = rp.plan_fft_inverse(n1);
        let mut cp = FftPlanner::<f64>::new();
        let f2 = cp.plan_fft_forward(n2);
        let i2 = cp.plan_fft_inverse(n2);
        let slen = f2.get_inplace_scratch_len().max(i2.get_inplace_scratch_len());
        let rlen = r2c.get_scratch_len().max(c2r.get_scratch_len());
        HorizontalFft {
            n1,
            n2,
            nh1: n1 / 2 + 1,
            r2c,
            c2r,
            f2,
            i2,
            col: vec![ZERO; n2],
            scratch: vec![ZERO; slen],
            rscratch: vec![ZERO; rlen],
            row: vec![0.0; n1],
        }
    }

    /// Real plane `[x2][x1]` to normalized half spectrum `[j2][j1]`.
    /// When `keep` is given, only the listed x1-columns are transformed in x2;
    /// all others are set to zero.
    pub fn forward(&mut self, input: &[f64], out: &mut [C64], keep: Option<&[bool]>) {
        let (n1, n2, nh1) = (self.n1, self.n2, self.nh1);
        for i2 in 0..n2 {
            self.row.copy_from_slice(&input[i2 * n1..(i2 + 1) * n1]);
            self.r2c
                .process_with_scratch(&mut self.row, &mut out[i2 * nh1..(i2 + 1) * nh1], &mut self.rscratch)
                .expect("r2c length");
        }
        let norm = 1.0 / (n1 * n2) as f64;
        for j1 in 0..nh1 {
            if let Some(kp) = keep {
                if !kp[j1] {
                    for i2 in 0..n2 {
                        out[i2 * nh1 + j1] = ZERO;
                    }
                    continue;
                }
            }
            for i2 in 0..n2 {
                self.col[i2] = out[i2 * nh1 + j1];
            }
            self.f2.process_with_scratch(&mut self.col, &mut self.scratch);
            for i2 in 0..n2 {
                out[i2 * nh1 + j1] = self.col[i2] * norm;
            }
        }
    }

    /// Half spectrum to real plane. `spec` is used as workspace and left modified.
    pub fn inverse(&mut self, spec: &mut [C64], out: &mut [f64]) {
        let (n1, n2, nh1) = (self.n1, self.n2, self.nh1);
        for j1 in 0..nh1 {
            let mut nonzero = false;
            for i2 in 0..n2 {
                let c = spec[i2 * nh1 + j1];
                nonzero |= c.re != 0.0 || c.im != 0.0;
                self.col[i2] = c;
            }
            if !nonzero {
                continue;
            }
            self.i2.process_with_scratch(&mut self.col, &mut self.scratch);
            for i2 in 0..n2 {
                spec[i2 * nh1 + j1] = self.col[i2];
            }
        }
        for i2 in 0..n2 {
            let row = &mut spec[i2 * nh1..(i2 + 1) * nh1];
            row[0].im = 0.0;
            row[nh1 - 1].im = 0.0;
            self.c2r
                .process_with_scratch(row, &mut out[i2 * n1..(i2 + 1) * n1], &mut self.rscratch)
                .expect("c2r length");
        }
    }
}

/// Real-to-real vertical transforms through extensions of length 2 mv.
pub struct VerticalFft {
    mv: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<C64>,
    scratch: Vec<C64>,
}

const VBATCH: usize = 64;

impl VerticalFft {
    pub fn new(mv: usize) -> Self {
        let mut p = FftPlanner::<f64>::new();
        let m = 2 * mv;
        let fwd = p.plan_fft_forward(m);
        let inv = p.plan_fft_inverse(m);
        let slen = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        VerticalFft { mv, fwd, inv, buf: vec![ZERO; m * VBATCH], scratch: vec![ZERO; slen] }
    }

    /// Nodal values (nz planes of length np) -> mode coefficients, in place.
    pub fn forward(&mut self, data: &mut [f64], np: usize, parity: Parity) {
        let mv = self.mv;
        let m = 2 * mv;
        let npairs = np.div_ceil(2);
        let mut p0 = 0;
        while p0 < npairs {
            let nb = VBATCH.min(npairs - p0);
            for b in 0..nb {
                let ca = 2 * (p0 + b);
                let cb = ca + 1;
                let e = &mut self.buf[b * m..(b + 1) * m];
                for j in 0..=mv {
                    let va = data[j * np + ca];
                    let vb = if cb < np { data[j * np + cb] } else { 0.0 };
                    match parity {
                        Parity::Cos => {
                            e[j] = C64::new(va, vb);
                            if j > 0 && j < mv {
                                e[m - j] = C64::new(va, vb);
                            }
                        }
                        Parity::Sin => {
                            if j == 0 || j == mv {
                                e[j] = ZERO;
                            } else {
                                e[j] = C64::new(va, vb);
                                e[m - j] = C64::new(-va, -vb);
                            }
                        }
                    }
                }
            }
            self.fwd.process_with_scratch(&mut self.buf[..nb * m], &mut self.scratch);
            let inv_m = 1.0 / m as f64;
            for b in 0..nb {
                let ca = 2 * (p0 + b);
                let cb = ca + 1;
                let e = &self.buf[b * m..(b + 1) * m];
                for k in 0..=mv {
                    let gk = e[k];
                    let (ra, rb) = match parity {
                        Parity::Cos => {
                            let f = if k == 0 || k == mv { inv_m } else { 2.0 * inv_m };
                            (gk.re * f, gk.im * f)
                        }
                        Parity::Sin => {
                            if k == 0 || k == mv {
                                (0.0, 0.0)
                            } else {
                                (-2.0 * gk.im * inv_m, 2.0 * gk.re * inv_m)
                            }
                        }
                    };
                    data[k * np + ca] = ra;
                    if cb < np {
                        data[k * np + cb] = rb;
                    }
                }
            }
            p0 += nb;
        }
    }

    /// Mode coefficients -> nodal values, in place.
    pub fn inverse(&mut self, data: &mut [f64], np: usize, parity: Parity) {
        let mv = self.mv;
        let m = 2 * mv;
        let npairs = np.div_ceil(2);
        let mut p0 = 0;
        while p0 < npairs {
            let nb = VBATCH.min(npairs - p0);
            for b in 0..nb {
                let ca = 2 * (p0 + b);
                let cb = ca + 1;
                let e = &mut self.buf[b * m..(b + 1) * m];
                for k in 0..=mv {
                    let va = data[k * np + ca];
                    let vb = if cb < np { data[k * np + cb] } else { 0.0 };
                    match parity {
                        Parity::Cos => {
                            if k == 0 || k == mv {
                                e[k] = C64::new(va, vb);
                            } else {
                                let h = C64::new(0.5 * va, 0.5 * vb);
                                e[k] = h;
                                e[m - k] = h;
                            }
                        }
                        Parity::Sin => {
                            if k == 0 || k == mv {
                                e[k] = ZERO;
                            } else {
                                // H_k = -i b/2 for a, and i * (-i b/2) = b/2 for the packed partner
                                let h = C64::new(0.5 * vb, -0.5 * va);
                                e[k] = h;
                                e[m - k] = C64::new(-0.5 * vb, 0.5 * va);
                            }
                        }
                    }
                }
            }
            self.inv.process_with_scratch(&mut self.buf[..nb * m], &mut self.scratch);
            for b in 0..nb {
                let ca = 2 * (p0 + b);
                let cb = ca + 1;
                let e = &self.buf[b * m..(b + 1) * m];
                for j in 0..=mv {
                    data[j * np + ca] = e[j].re;
                    if cb < np {
                        data[j * np + cb] = e[j].im;
                    }
                }
            }
            p0 += nb;
        }
    }
}

/// Transform engine for one grid. Holds FFT plans and workspace.
pub struct Transform {
    pub grid: GridSpec,
    pub wn: Wavenumbers,
    h: HorizontalFft,
    v: VerticalFft,
    work: Vec<f64>,
    cwork: Vec<C64>,
}

impl Transform {
    pub fn new(grid: GridSpec) -> Self {
        Transform {
            grid,
            wn: Wavenumbers::for_grid(&grid),
            h: HorizontalFft::new(grid.n1, grid.n2),
            v: VerticalFft::new(grid.mv),
            work: vec![0.0; grid.len()],
            cwork: vec![ZERO; grid.n2 * (grid.n1 / 2 + 1)],
        }
    }

    fn check(&self, g: &GridSpec) -> Result<()> {
        if g.n1 != self.grid.n1 || g.n2 != self.grid.n2 || g.mv != self.grid.mv {
            return Err(Error::Shape("field grid does not match transform".into()));
        }
        Ok(())
    }

    /// to_spectral. A sine-parity request on data that does not vanish on the
    /// walls is a contract error.
    pub fn forward(&mut self, f: &ScalarField, parity: Parity) -> Result<SpectralField> {
        self.check(&f.grid)?;
        if parity == Parity::Sin {
            let g = f.grid;
            let np = g.nplane();
            let scale = f.max_abs().max(1e-300);
            let wall = f.data[..np].iter().chain(f.data[g.mv * np..].iter()).fold(0.0f64, |m, v| m.max(v.abs()));
            if wall > 1e-12 * scale.max(1.0) {
                return Err(Error::Contract(format!("sine parity requested but wall values reach {wall:e}")));
            }
        }
        let mut out = SpectralField::zeros(f.grid, parity);
        self.forward_raw(&f.data, parity, &mut out, false);
        Ok(out)
    }

    /// Forward transform of raw nodal data. With `truncate`, only coefficients in
    /// the 2/3 band are computed; all others are exactly zero.
    pub fn forward_raw(&mut self, data: &[f64], parity: Parity, out: &mut SpectralField, truncate: bool) {
        let g = self.grid;
        let np = g.nplane();
        out.parity = parity;
        self.work.copy_from_slice(data);
        self.v.forward(&mut self.work, np, parity);
        let pl = out.plane_len();
        for k in 0..g.nz() {
            let structural_zero = parity == Parity::Sin && (k == 0 || k == g.mv);
            if structural_zero || (truncate && !keep_z(&g, k)) {
                out.data[k * pl..(k + 1) * pl].iter_mut().for_each(|c| *c = ZERO);
                continue;
            }
            let keep = if truncate { Some(self.wn.keep1.as_slice()) } else { None };
            self.h.forward(&self.work[k * np..(k + 1) * np], &mut out.data[k * pl..(k + 1) * pl], keep);
            if truncate {
                let nh1 = self.wn.nh1;
                for j2 in 0..g.n2 {
                    if !self.wn.keep2[j2] {
                        out.data[k * pl + j2 * nh1..k * pl + (j2 + 1) * nh1].iter_mut().for_each(|c| *c = ZERO);
                    }
                }
            }
        }
    }

    /// to_physical.
    pub fn inverse(&mut self, s: &SpectralField) -> Result<ScalarField> {
        self.check(&s.grid)?;
        let mut out = ScalarField::zeros(s.grid);
        self.inverse_raw(s, &mut out.data);
        Ok(out)
    }

    pub fn inverse_raw(&mut self, s: &SpectralField, out: &mut [f64]) {
        let g = self.grid;
        let np = g.nplane();
        let pl = s.plane_len();
        for k in 0..g.nz() {
            let dst = &mut out[k * np..(k + 1) * np];
            if s.level_is_zero(k) {
                dst.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            self.cwork.copy_from_slice(&s.data[k * pl..(k + 1) * pl]);
            self.h.inverse(&mut self.cwork, dst);
        }
        self.v.inverse(out, np, s.parity);
    }
}

/// Convenience wrapper building a transform for a single call.
pub fn to_spectral(f: &ScalarField, parity: Parity) -> Result<SpectralField> {
    Transform::new(f.grid).forward(f, parity)
}

pub fn to_physical(s: &SpectralField) -> Result<ScalarField> {
    Transform::new(s.grid).inverse(s)
}

/// Spectral vector field with parities (cos, cos, sin).
pub type SpecVec = [SpectralField; 3];

pub fn spec_vec_zeros(grid: GridSpec) -> SpecVec {
    [
        SpectralField::zeros(grid, Parity::Cos),
        SpectralField::zeros(grid, Parity::Cos),
        SpectralField::zeros(grid, Parity::Sin),
    ]
}
