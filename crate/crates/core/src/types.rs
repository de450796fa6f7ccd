//! Domain types: parameters, grids, fields, Elsasser states and weights.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default divergence tolerance, relative to the gradient norm of the field.
pub const DIV_TOL: f64 = 1e-10;
/// Default tolerance on wall values of the vertical component.
pub const BC_TOL: f64 = 1e-12;
/// Default weight exponent.
pub const SIGMA_DEFAULT: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn other(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sign::Plus => "p",
            Sign::Minus => "m",
        }
    }

    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];
}

/// Physical and weight parameters. The background field is always (1,0,0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub delta: f64,
    pub sigma: f64,
    pub a: f64,
}

impl PhysParams {
    pub fn new(delta: f64, sigma: f64, a: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Param(format!("delta = {delta} outside (0, 1]")));
        }
        if !(sigma > 0.0 && sigma < 1.0 / 3.0) {
            return Err(Error::Param(format!("sigma = {sigma} outside (0, 1/3)")));
        }
        if !a.is_finite() {
            return Err(Error::Param("position parameter must be finite".into()));
        }
        Ok(PhysParams { delta, sigma, a })
    }

    pub fn b0(&self) -> [f64; 3] {
        [1.0, 0.0, 0.0]
    }

    pub fn weights(&self) -> WeightContext {
        WeightContext { sigma: self.sigma, a: self.a }
    }
}

/// Discretization of the slab: periodic box `lh1 x lh2` with `n1 x n2` points,
/// and `mv + 1` vertical nodes `x3 = delta * (-1 + 2 j / mv)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub lh1: f64,
    pub lh2: f64,
    pub mv: usize,
    pub delta: f64,
}

impl GridSpec {
    /// Square box of side `lh`.
    pub fn new(n1: usize, n2: usize, lh: f64, mv: usize, delta: f64) -> Result<Self> {
        Self::with_box(n1, n2, lh, lh, mv, delta)
    }

    pub fn with_box(n1: usize, n2: usize, lh1: f64, lh2: f64, mv: usize, delta: f64) -> Result<Self> {
        let g = GridSpec { n1, n2, lh1, lh2, mv, delta };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n1.is_power_of_two() || !self.n2.is_power_of_two() || self.n1 < 4 || self.n2 < 4 {
            return Err(Error::Param(format!(
                "horizontal sizes must be powers of two >= 4, got {} x {}",
                self.n1, self.n2
            )));
        }
        if self.mv < 2 {
            return Err(Error::Param(format!("mv must be >= 2, got {}", self.mv)));
        }
        if !(self.lh1 > 0.0 && self.lh2 > 0.0) {
            return Err(Error::Param("box lengths must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Param(format!("half-thickness {} must be positive", self.delta)));
        }
        Ok(())
    }

    /// Same lattice with another half-thickness.
    pub fn with_delta(&self, delta: f64) -> GridSpec {
        GridSpec { delta, ..*self }
    }

    pub fn nz(&self) -> usize {
        self.mv + 1
    }
    pub fn nplane(&self) -> usize {
        self.n1 * self.n2
    }
    pub fn len(&self) -> usize {
        self.nplane() * self.nz()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn dx1(&self) -> f64 {
        self.lh1 / self.n1 as f64
    }
    pub fn dx2(&self) -> f64 {
        self.lh2 / self.n2 as f64
    }
    /// Node spacing in the unit vertical coordinate s.
    pub fn ds(&self) -> f64 {
        2.0 / self.mv as f64
    }
    pub fn dx3(&self) -> f64 {
        self.delta * self.ds()
    }
    pub fn x1(&self, j: usize) -> f64 {
        -0.5 * self.lh1 + j as f64 * self.dx1()
    }
    pub fn x2(&self, j: usize) -> f64 {
        -0.5 * self.lh2 + j as f64 * self.dx2()
    }
    pub fn x3(&self, j: usize) -> f64 {
        self.delta * (-1.0 + j as f64 * self.ds())
    }
    pub fn idx(&self, i3: usize, i2: usize, i1: usize) -> usize {
        (i3 * self.n2 + i2) * self.n1 + i1
    }
    /// Vertical wavenumber of mode k: k pi / (2 delta).
    pub fn m_k(&self, k: usize) -> f64 {
        k as f64 * PI / (2.0 * self.delta)
    }
    /// Trapezoid weight of vertical node j (length units).
    pub fn wz(&self, j: usize) -> f64 {
        if j == 0 || j == self.mv {
            0.5 * self.dx3()
        } else {
            self.dx3()
        }
    }
    /// Volume of the computational box.
    pub fn volume(&self) -> f64 {
        self.lh1 * self.lh2 * 2.0 * self.delta
    }
    /// Cell volume at vertical node j.
    pub fn cell(&self, j: usize) -> f64 {
        self.dx1() * self.dx2() * self.wz(j)
    }
    pub fn same_lattice(&self, o: &GridSpec) -> bool {
        self.n1 == o.n1
            && self.n2 == o.n2
            && self.mv == o.mv
            && self.lh1 == o.lh1
            && self.lh2 == o.lh2
            && self.delta == o.delta
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField { grid, data: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for i3 in 0..grid.nz() {
            let x3 = grid.x3(i3);
            for i2 in 0..grid.n2 {
                let x2 = grid.x2(i2);
                for i1 in 0..grid.n1 {
                    data.push(f(grid.x1(i1), x2, x3));
                }
            }
        }
        ScalarField { grid, data }
    }

    pub fn get(&self, i3: usize, i2: usize, i1: usize) -> f64 {
        self.data[self.grid.idx(i3, i2, i1)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Unweighted L2 norm squared with rectangle-in-x_h, trapezoid-in-x3 quadrature.
    pub fn norm2(&self) -> f64 {
        let g = &self.grid;
        let np = g.nplane();
        let mut total = 0.0;
        for j in 0..g.nz() {
            let s: f64 = self.data[j * np..(j + 1) * np].iter().map(|v| v * v).sum();
            total += s * g.cell(j);
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField3 {
    pub c: [ScalarField; 3],
}

impl VectorField3 {
    pub fn zeros(grid: GridSpec) -> Self {
        VectorField3 { c: [ScalarField::zeros(grid), ScalarField::zeros(grid), ScalarField::zeros(grid)] }
    }

    pub fn grid(&self) -> GridSpec {
        self.c[0].grid
    }

    pub fn norm2(&self) -> f64 {
        self.c.iter().map(|f| f.norm2()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0f64, |m, f| m.max(f.max_abs()))
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_norm(&self) -> f64 {
        let n = self.c[0].data.len();
        let mut m = 0.0f64;
        for i in 0..n {
            let v = self.c[0].data[i].powi(2) + self.c[1].data[i].powi(2) + self.c[2].data[i].powi(2);
            m = m.max(v);
        }
        m.sqrt()
    }

    fn check_grid(&self, o: &VectorField3) -> Result<()> {
        if !self.grid().same_lattice(&o.grid()) {
            return Err(Error::Shape("vector fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn add(&self, o: &VectorField3, scale: f64) -> Result<VectorField3> {
        self.check_grid(o)?;
        let mut out = self.clone();
        for (a, b) in out.c.iter_mut().zip(o.c.iter()) {
            for (x, y) in a.data.iter_mut().zip(b.data.iter()) {
                *x += scale * y;
            }
        }
        Ok(out)
    }
}

/// The pair of Elsasser fluctuations at time t.
#[derive(Clone, Debug, PartialEq)]
pub struct ElsasserState {
    pub zp: VectorField3,
    pub zm: VectorField3,
    pub t: f64,
}

impl ElsasserState {
    pub fn zeros(grid: GridSpec) -> Self {
        ElsasserState { zp: VectorField3::zeros(grid), zm: VectorField3::zeros(grid), t: 0.0 }
    }

    pub fn grid(&self) -> GridSpec {
        self.zp.grid()
    }

    pub fn field(&self, s: Sign) -> &VectorField3 {
        match s {
            Sign::Plus => &self.zp,
            Sign::Minus => &self.zm,
        }
    }

    /// Largest |z3| over both wall planes.
    pub fn wall_residual(&self) -> f64 {
        let g = self.grid();
        let np = g.nplane();
        let mut m = 0.0f64;
        for f in [&self.zp, &self.zm] {
            for j in [0, g.mv] {
                for v in &f.c[2].data[j * np..(j + 1) * np] {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }
}

/// zp = v + b, zm = v - b.
pub fn elsasser_from_physical(v: &VectorField3, b: &VectorField3) -> Result<(VectorField3, VectorField3)> {
    Ok((v.add(b, 1.0)?, v.add(b, -1.0)?))
}

/// v = (zp + zm)/2, b = (zp - zm)/2.
pub fn physical_from_elsasser(zp: &VectorField3, zm: &VectorField3) -> Result<(VectorField3, VectorField3)> {
    let mut v = zp.add(zm, 1.0)?;
    let mut b = zp.add(zm, -1.0)?;
    for f in v.c.iter_mut().chain(b.c.iter_mut()) {
        f.data.iter_mut().for_each(|x| *x *= 0.5);
    }
    Ok((v, b))
}

/// Weight parameters and the evaluators for <u_+> and <u_->.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightContext {
    pub sigma: f64,
    pub a: f64,
}

impl WeightContext {
    pub fn new(sigma: f64, a: f64) -> Self {
        WeightContext { sigma, a }
    }

    /// <u_s>(t, x1) = (1 + |x1 - s (t + a)|^2)^{1/2}.
    pub fn weight(&self, sign: Sign, t: f64, x1: f64) -> f64 {
        let c = sign.value() * (t + self.a);
        (1.0 + (x1 - c).powi(2)).sqrt()
    }

    /// <u_{-s}>^{2(1+sigma)}: squared energy weight for z_s.
    pub fn energy_density(&self, sign: Sign, t: f64, x1: f64) -> f64 {
        self.weight(sign.other(), t, x1).powf(2.0 * (1.0 + self.sigma))
    }

    /// <u_{-s}>^{2(1+sigma)} / <u_s>^{1+sigma}: flux density for z_s.
    pub fn flux_density(&self, sign: Sign, t: f64, x1: f64) -> f64 {
        self.energy_density(sign, t, x1) / self.weight(sign, t, x1).powf(1.0 + self.sigma)
    }

    /// (<u_{-s}>^{1+sigma} <u_s>^{(1+sigma)/2})^2: density for the nonlinear and pressure monitors.
    pub fn monitor_density(&self, sign: Sign, t: f64, x1: f64) -> f64 {
        self.energy_density(sign, t, x1) * self.weight(sign, t, x1).powf(1.0 + self.sigma)
    }

    /// Squared weight of a field on the infinity C_s at coordinate u:
    /// (1 + |u + s a|^2)^{1+sigma}.
    pub fn infinity_density(&self, sign: Sign, u: f64) -> f64 {
        (1.0 + (u + sign.value() * self.a).powi(2)).powf(1.0 + self.sigma)
    }

    /// Energy density for z_s during a role-swapped backward run re-centred at a:
    /// the weight follows the packet located at x1 = -s (a - tb) at backward time tb.
    pub fn reversed_energy_density(&self, sign: Sign, tb: f64, x1: f64) -> f64 {
        let c = -sign.value() * (self.a - tb);
        (1.0 + (x1 - c).powi(2)).powf(1.0 + self.sigma)
    }
}
