//! Localized divergence-free initial data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{derivative, spec_vec_zeros, Parity, SpecVec, SpectralField, Transform, C64};
use crate::types::{ElsasserState, GridSpec, ScalarField, Sign, VectorField3};

/// Gaussian wave-packet family.
///
/// The x3-independent part is `curl_h psi` for a Gaussian stream function `psi`
/// with random polynomial prefactor. Vertical modes `k = 1..=modes` carry a
/// horizontal profile `Phi_k` in the cos basis, scaled by `vertical`, and the
/// matching sine-mode `z3` is fixed per mode by `i kappa . Phi_k + m_k z3 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PacketSpec {
    /// Target value of max |z_+| and max |z_-|.
    pub amplitude: f64,
    pub center: (f64, f64),
    pub widths: (f64, f64),
    /// Relative size of the x3-dependent modes.
    pub vertical: f64,
    pub modes: usize,
    pub seed: u64,
}

impl Default for PacketSpec {
    fn default() -> Self {
        PacketSpec { amplitude: 0.01, center: (0.0, 0.0), widths: (3.0, 3.0), vertical: 0.5, modes: 2, seed: 7 }
    }
}

impl PacketSpec {
    /// Radius outside which the packet is below rounding (used by the wrap monitor).
    pub fn support_radius(&self) -> f64 {
        9.0 * self.widths.0.max(self.widths.1)
    }
}

struct Profile {
    psi: [f64; 3],
    phi: Vec<[[f64; 3]; 2]>,
}

fn draw(rng: &mut ChaCha8Rng, modes: usize) -> Profile {
    let mut c = || rng.gen_range(-1.0..1.0);
    let psi = [c(), c(), c()];
    let phi = (0..modes).map(|_| [[c(), c(), c()], [c(), c(), c()]]).collect();
    Profile { psi, phi }
}

fn shape(p: &PacketSpec, coef: &[f64; 3], x1: f64, x2: f64) -> f64 {
    let u = (x1 - p.center.0) / p.widths.0;
    let v = (x2 - p.center.1) / p.widths.1;
    (coef[0] + coef[1] * u + coef[2] * v) * (-0.5 * (u * u + v * v)).exp()
}

/// One Elsasser field in spectral form, before normalization.
fn field(grid: GridSpec, p: &PacketSpec, prof: &Profile, tr: &mut Transform) -> Result<SpecVec> {
    let psi = ScalarField::from_fn(grid, |x1, x2, _| shape(p, &prof.psi, x1, x2));
    let mut psi_hat = tr.forward(&psi, Parity::Cos)?;
    psi_hat.dealias();
    let mut z = spec_vec_zeros(grid);
    // scale the stream function so that its velocity is O(1)
    let w = p.widths.0.min(p.widths.1);
    z[0] = derivative(&psi_hat, 2);
    z[1] = derivative(&psi_hat, 1);
    z[0].scale(w);
    z[1].scale(-w);
    let pl = z[0].plane_len();
    let wn = tr.wn.clone();
    let nh1 = wn.nh1;
    for (i, ph) in prof.phi.iter().enumerate() {
        let k = i + 1;
        if k >= grid.mv || 3 * k >= 2 * grid.mv {
            return Err(Error::Param(format!("vertical mode {k} outside the dealiased band")));
        }
        let m = grid.m_k(k);
        let mut comps = [SpectralField::zeros(grid, Parity::Cos), SpectralField::zeros(grid, Parity::Cos)];
        for c in 0..2 {
            let f = ScalarField::from_fn(grid, |x1, x2, _| shape(p, &ph[c], x1, x2));
            let mut fh = tr.forward(&f, Parity::Cos)?;
            fh.dealias();
            // keep the horizontal profile, move it to level k
            comps[c].level_mut(k).copy_from_slice(fh.level(0));
        }
        for j2 in 0..grid.n2 {
            for j1 in 0..nh1 {
                let idx = k * pl + j2 * nh1 + j1;
                let a = comps[0].data[idx] * p.vertical;
                let b = comps[1].data[idx] * p.vertical;
                let div_h = C64::new(0.0, wn.d1[j1]) * a + C64::new(0.0, wn.d2[j2]) * b;
                z[0].data[idx] += a;
                z[1].data[idx] += b;
                z[2].data[idx] = -div_h / m;
            }
        }
    }
    Ok(z)
}

fn physical_vec(z: &SpecVec, tr: &mut Transform) -> Result<VectorField3> {
    Ok(VectorField3 { c: [tr.inverse(&z[0])?, tr.inverse(&z[1])?, tr.inverse(&z[2])?] })
}

/// Fraction of the energy of `f` in the outer 10% of the box.
pub fn annulus_fraction(f: &VectorField3) -> f64 {
    annulus_fraction_raw(&f.grid(), [&f.c[0].data, &f.c[1].data, &f.c[2].data])
}

pub fn annulus_fraction_raw(g: &GridSpec, c: [&[f64]; 3]) -> f64 {
    let (h1, h2) = (0.5 * g.lh1, 0.5 * g.lh2);
    let mut outer = 0.0;
    let mut total = 0.0;
    for i3 in 0..g.nz() {
        let cell = g.cell(i3);
        for i2 in 0..g.n2 {
            let r2 = (g.x2(i2) / h2).abs();
            for i1 in 0..g.n1 {
                let r = (g.x1(i1) / h1).abs().max(r2);
                let i = g.idx(i3, i2, i1);
                let e = (c[0][i].powi(2) + c[1][i].powi(2) + c[2][i].powi(2)) * cell;
                total += e;
                if r > 0.9 {
                    outer += e;
                }
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

/// Spectral form of [`gaussian_packet`]; both fields are dealiased and divergence free.
pub fn gaussian_packet_spec(grid: GridSpec, p: &PacketSpec) -> Result<(SpecVec, SpecVec)> {
    grid.validate()?;
    if !(p.amplitude >= 0.0 && p.amplitude.is_finite()) {
        return Err(Error::Param(format!("amplitude {} must be non-negative", p.amplitude)));
    }
    if !(p.widths.0 > 0.0 && p.widths.1 > 0.0) {
        return Err(Error::Param("packet widths must be positive".into()));
    }
    if p.widths.0 >= grid.lh1 / 8.0 || p.widths.1 >= grid.lh2 / 8.0 {
        return Err(Error::Localization(format!(
            "widths {:?} too large for a {} x {} box",
            p.widths, grid.lh1, grid.lh2
        )));
    }
    if p.amplitude == 0.0 {
        return Ok((spec_vec_zeros(grid), spec_vec_zeros(grid)));
    }
    let mut tr = Transform::new(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut out = Vec::with_capacity(2);
    for _ in Sign::BOTH {
        let prof = draw(&mut rng, p.modes);
        let mut z = field(grid, p, &prof, &mut tr)?;
        let phys = physical_vec(&z, &mut tr)?;
        let frac = annulus_fraction(&phys);
        if frac > 1e-6 {
            return Err(Error::Localization(format!("initial annulus energy fraction {frac:e} exceeds 1e-6")));
        }
        let m = phys.max_norm();
        for c in z.iter_mut() {
            c.scale(p.amplitude / m);
        }
        out.push(z);
    }
    let zm = out.pop().unwrap();
    let zp = out.pop().unwrap();
    Ok((zp, zm))
}

/// Localized, divergence-free, wall-compatible Elsasser data.
pub fn gaussian_packet(grid: GridSpec, p: &PacketSpec) -> Result<ElsasserState> {
    let (zp, zm) = gaussian_packet_spec(grid, p)?;
    let mut tr = Transform::new(grid);
    Ok(ElsasserState { zp: physical_vec(&zp, &mut tr)?, zm: physical_vec(&zm, &mut tr)?, t: 0.0 })
}
