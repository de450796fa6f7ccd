use alfven_slab::diagnostics::*;
use alfven_slab::packet::{gaussian_packet_spec, PacketSpec};
use alfven_slab::solver3d::{run, DtPolicy, RunOptions, Solver, SpecState, System};
use alfven_slab::spectral::{derivative_multi, to_physical, SpectralField, VEC_PARITY};
use alfven_slab::types::{GridSpec, ScalarField, Sign, VectorField3, WeightContext};
use alfven_slab::Parity;
use proptest::prelude::*;
use std::f64::consts::PI;

fn grid(delta: f64) -> GridSpec {
    GridSpec::new(64, 64, 16.0 * PI, 8, delta).unwrap()
}

fn state(delta: f64, amp: f64) -> SpecState {
    let (zp, zm) = gaussian_packet_spec(grid(delta), &PacketSpec { amplitude: amp, ..Default::default() }).unwrap();
    SpecState { zp, zm, t: 0.0 }
}

/// Direct nodal quadrature of int W |d1^b d2^c d3^l f|^2.
fn direct(f: &SpectralField, b: usize, c: usize, l: usize, w: impl Fn(f64) -> f64) -> f64 {
    let g = f.grid;
    let d = to_physical(&derivative_multi(f, b, c, l)).unwrap();
    let mut s = 0.0;
    for i3 in 0..g.nz() {
        for i2 in 0..g.n2 {
            for i1 in 0..g.n1 {
                s += w(g.x1(i1)) * d.get(i3, i2, i1).powi(2) * g.cell(i3);
            }
        }
    }
    s
}

#[test]
fn energy_matches_direct_quadrature() {
    let st = state(0.5, 0.01);
    let ctx = WeightContext::new(0.25, 3.0);
    let st = SpecState { t: 1.5, ..st };
    for sign in Sign::BOTH {
        for (k, l) in [(0, 0), (1, 0), (0, 1), (2, 1), (1, 3)] {
            let got = energy(&st, &ctx, 4, k, l, Component::Full, sign).unwrap();
            let mut want = 0.0;
            for comp in 0..3 {
                for b in 0..=k {
                    want += direct(&st.field(sign)[comp], b, k - b, l, |x| ctx.energy_density(sign, st.t, x));
                }
            }
            assert!((got - want).abs() <= 1e-12 * want.max(1e-300), "{k} {l}: {got} {want}");
        }
    }
    assert!(energy(&st, &ctx, 4, 3, 2, Component::H, Sign::Plus).is_err());
}

#[test]
fn unweighted_table_matches_parseval() {
    let st = state(0.5, 0.01);
    let g = st.grid();
    let ones = vec![1.0; g.n1];
    let mut eng = LineEngine::new(g.n1);
    for c in 0..3 {
        let t = eng.tables(&st.zp[c], 0, &[&ones]).remove(0);
        let want = st.zp[c].norm2();
        assert!((t.get(0, 0, 0) - want).abs() < 1e-13 * want);
    }
}

#[test]
fn ledger_energy_constant_without_flux_for_linear_zero_state() {
    let g = grid(0.5);
    let st = SpecState::zeros(g);
    let mut set = LedgerSet::new(g, vec![LedgerConfig::slab(0.5, 0.0)]).unwrap();
    let mut solver = Solver::new(g, System::slab(), DtPolicy::Fixed { dt: 0.1 }).unwrap();
    run(&mut solver, st, &RunOptions::to(0.3), &mut [&mut set]).unwrap();
    let s = set.ledgers[0].summary();
    assert_eq!(s.samples, 4);
    assert_eq!(s.agg0, 0.0);
}

#[test]
fn linear_ledger_energy_is_transported() {
    // Under linear transport each energy weight moves with its packet: E is constant
    // while the flux keeps growing.
    let g = grid(1.0);
    let st = state(1.0, 0.01);
    let mut cfg = LedgerConfig::slab(1.0, 0.0);
    cfg.monitors = false;
    let mut set = LedgerSet::new(g, vec![cfg]).unwrap();
    let mut solver = Solver::new(g, System::slab().linear(), DtPolicy::Fixed { dt: 0.05 }).unwrap();
    run(&mut solver, st, &RunOptions::to(3.0), &mut [&mut set]).unwrap();
    let led = &set.ledgers[0];
    let km = led.cfg.kmax;
    let r0 = &led.rows[0];
    let r = led.last().unwrap();
    for s in 0..2 {
        let i = 0;
        let e0 = r0.e[s][0][i];
        assert!((r.e[s][0][i] - e0).abs() < 1e-6 * e0);
        assert!(r.f[s][0][i] > led.rows[led.rows.len() / 2].f[s][0][i]);
    }
    assert_eq!(r.e[0][0].len(), (km + 1) * (km + 1));
}

#[test]
fn unit_frame_aggregate_matches_slab() {
    // Same physical data seen in both frames gives the same aggregates.
    let delta = 0.5;
    let st = state(delta, 0.01);
    let gu = grid(1.0);
    let mut zp = st.zp.clone();
    let mut zm = st.zm.clone();
    for f in zp.iter_mut().chain(zm.iter_mut()) {
        f.grid = gu;
    }
    zp[2].scale(1.0 / delta);
    zm[2].scale(1.0 / delta);
    let su = SpecState { zp, zm, t: 0.0 };
    let aux_s = Solver::new(grid(delta), System::slab(), DtPolicy::default()).unwrap().rhs(&st).aux;
    let aux_u = Solver::new(gu, System::rescaled(delta), DtPolicy::default()).unwrap().rhs(&su).aux;
    let mut a = LedgerSet::new(grid(delta), vec![LedgerConfig::slab(delta, 0.0)]).unwrap();
    let mut cu = LedgerConfig::slab(delta, 0.0);
    cu.frame = Frame::Unit { delta };
    let mut b = LedgerSet::new(gu, vec![cu]).unwrap();
    a.sample(&st, &aux_s);
    b.sample(&su, &aux_u);
    let (ra, rb) = (a.ledgers[0].last().unwrap(), b.ledgers[0].last().unwrap());
    assert!((ra.agg - rb.agg).abs() < 1e-10 * ra.agg);
    assert!((ra.agg_delta - rb.agg_delta).abs() < 1e-10 * ra.agg_delta);
}

#[test]
fn sobolev_ratio_is_thickness_independent() {
    let mut ratios = Vec::new();
    for delta in [1.0, 0.5, 0.25, 0.125] {
        let g = grid(delta);
        let f = ScalarField::from_fn(g, |x1, x2, x3| {
            let s = x3 / delta;
            (-(x1 * x1 + x2 * x2) / 8.0).exp() * (1.0 + 0.5 * (PI * s).cos() + 0.2 * (2.0 * PI * s).cos())
        });
        ratios.push(sobolev_probe(&f, Parity::Cos).unwrap());
    }
    for r in &ratios {
        assert!((r - ratios[0]).abs() < 1e-10 * ratios[0], "{ratios:?}");
        assert!(*r < 1.0);
    }
}

#[test]
fn divcurl_identity_without_weight() {
    let st = state(0.5, 0.01);
    let v = VectorField3 { c: [to_physical(&st.zp[0]).unwrap(), to_physical(&st.zp[1]).unwrap(), to_physical(&st.zp[2]).unwrap()] };
    let r = divcurl_probe(&v, &WeightContext::new(-1.0, 0.0), 0.0).unwrap();
    assert!(r.wall < 1e-15);
    assert!((r.lhs - r.div - r.curl).abs() < 1e-10 * r.lhs, "{r:?}");
    let w = divcurl_probe(&v, &WeightContext::new(0.25, 0.0), 2.0).unwrap();
    assert!(w.lhs <= 2.0 * w.rhs());
    let _ = VEC_PARITY;
}

#[test]
fn weight_property_constants() {
    for a in [0.0, 10.0] {
        let p = weight_probe(&WeightContext::new(0.25, a), 50.0, 20_000, 3);
        assert!(p.fd_error < 1e-5, "{p:?}");
        assert!(p.near < 20.0 && p.far < 20.0 && p.deriv.iter().all(|d| *d < 5.0) && p.product <= 1.25, "{p:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn tables_are_nonnegative_and_monotone_in_weight(seed in 0u64..1000, a in 0.0f64..20.0) {
        let g = grid(0.5);
        let (zp, _) = gaussian_packet_spec(g, &PacketSpec { seed, ..Default::default() }).unwrap();
        let ctx = WeightContext::new(0.25, a);
        let w1: Vec<f64> = (0..g.n1).map(|i| ctx.energy_density(Sign::Plus, 0.0, g.x1(i))).collect();
        let ones = vec![1.0; g.n1];
        let mut eng = LineEngine::new(g.n1);
        let t = eng.tables(&zp[0], 2, &[&w1, &ones]);
        for i in 0..t[0].v.len() {
            prop_assert!(t[0].v[i] >= 0.0);
            prop_assert!(t[0].v[i] >= t[1].v[i] * (1.0 - 1e-12));
        }
        let _ = VEC_PARITY[0];
    }
}
