use alfven_slab::packet::{gaussian_packet, gaussian_packet_spec, PacketSpec};
use alfven_slab::solver3d::*;
use alfven_slab::spectral::{divergence_residual, shift_x1, to_physical};
use alfven_slab::types::{ElsasserState, GridSpec, ScalarField, VectorField3};
use std::f64::consts::PI;

fn grid(delta: f64) -> GridSpec {
    GridSpec::new(64, 64, 16.0 * PI, 8, delta).unwrap()
}

fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.data.iter().zip(b.data.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn manufactured(g: GridSpec) -> ElsasserState {
    let mut s = ElsasserState::zeros(g);
    s.zp.c[0] = ScalarField::from_fn(g, |_, x2, _| x2.sin());
    s.zm.c[1] = ScalarField::from_fn(g, |x1, _, _| x1.sin());
    s
}

#[test]
fn zero_state_is_fixed() {
    let g = grid(0.5);
    let s = ElsasserState::zeros(g);
    let p = pressure_from_state(&s).unwrap();
    assert_eq!(p.max_abs(), 0.0);
    let mut solver = Solver::new(g, System::slab(), DtPolicy::default()).unwrap();
    let out = solver.step_rk4(&s, 0.05).unwrap();
    assert_eq!(out.zp.max_abs() + out.zm.max_abs(), 0.0);
    assert!((solver.cfl_dt(&s, 0.4) - 0.4 * g.dx3()).abs() < 1e-15);
}

#[test]
fn manufactured_pressure() {
    for delta in [1.0, 0.3] {
        let g = grid(delta);
        let p = pressure_from_state(&manufactured(g)).unwrap();
        let exact = ScalarField::from_fn(g, |x1, x2, _| 0.5 * x1.cos() * x2.cos());
        assert!(max_diff(&p, &exact) < 1e-10);
    }
}

#[test]
fn shear_pair_has_no_pressure() {
    let g = grid(0.5);
    let mut s = ElsasserState::zeros(g);
    s.zp.c[1] = ScalarField::from_fn(g, |x1, _, _| x1.sin());
    s.zm.c[1] = ScalarField::from_fn(g, |x1, _, _| x1.cos());
    assert!(pressure_from_state(&s).unwrap().max_abs() < 1e-14);
}

#[test]
fn linear_rhs_is_transport() {
    let g = grid(0.5);
    let s = gaussian_packet(g, &PacketSpec::default()).unwrap();
    let (dzp, dzm, p) = rhs(&s, System::slab().linear()).unwrap();
    assert_eq!(p.max_abs(), 0.0);
    let sp = SpecState::from_physical(&s).unwrap();
    for j in 0..3 {
        let d1p = to_physical(&alfven_slab::spectral::derivative(&sp.zp[j], 1)).unwrap();
        let d1m = to_physical(&alfven_slab::spectral::derivative(&sp.zm[j], 1)).unwrap();
        assert!(max_diff(&dzp.c[j], &d1p) < 1e-15);
        let neg = ScalarField { grid: g, data: d1m.data.iter().map(|v| -v).collect() };
        assert!(max_diff(&dzm.c[j], &neg) < 1e-15);
    }
}

#[test]
fn rhs_is_divergence_free() {
    let g = grid(0.5);
    let p = PacketSpec { amplitude: 0.3, ..Default::default() };
    let (zp, zm) = gaussian_packet_spec(g, &p).unwrap();
    let s = SpecState { zp, zm, t: 0.0 };
    for sys in [System::slab(), System::slab().linear()] {
        let mut solver = Solver::new(g, sys, DtPolicy::default()).unwrap();
        let r = solver.rhs(&s);
        assert!(divergence_residual(&r.dz[0]) < 1e-12);
        assert!(divergence_residual(&r.dz[1]) < 1e-12);
    }
}

#[test]
fn packet_is_admissible() {
    let g = grid(0.25);
    for seed in 0..4 {
        let p = PacketSpec { seed, ..Default::default() };
        let s = gaussian_packet(g, &p).unwrap();
        assert_eq!(s.wall_residual(), 0.0);
        assert!((s.zp.max_norm() - 0.01).abs() < 1e-15);
        let sp = SpecState::from_physical(&s).unwrap();
        assert!(sp.divergence_residual() < 1e-10);
        assert!(sp.zp[2].max_abs_coeff() > 0.0);
    }
    let zero = gaussian_packet(g, &PacketSpec { amplitude: 0.0, ..Default::default() }).unwrap();
    assert_eq!(zero.zp.max_abs() + zero.zm.max_abs(), 0.0);
    assert!(gaussian_packet(g, &PacketSpec { widths: (8.0, 3.0), ..Default::default() }).is_err());
}

#[test]
fn linear_transport_matches_exact_shift() {
    let g = grid(1.0);
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec::default()).unwrap();
    let s0 = SpecState { zp, zm, t: 0.0 };
    let mut solver = Solver::new(g, System::slab().linear(), DtPolicy::Cfl { cfl: 0.4 }).unwrap();
    let mut errs = Vec::new();
    for dt in [0.2, 0.1] {
        solver.policy = DtPolicy::Fixed { dt };
        let out = run(&mut solver, s0.clone(), &RunOptions::to(4.0), &mut []).unwrap();
        // z+ moves left: z+(T, x) = z+(0, x1 + T)
        let exact = shift_x1(&s0.zp[0], -4.0);
        let a = to_physical(&exact).unwrap();
        let b = to_physical(&out.state.zp[0]).unwrap();
        errs.push(max_diff(&a, &b));
    }
    assert!(errs[1] < 1e-8, "{errs:?}");
    assert!(errs[0] / errs[1] > 12.0, "{errs:?}");
}

#[test]
fn step_reversibility() {
    let g = grid(0.5);
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec { amplitude: 0.1, ..Default::default() }).unwrap();
    let s0 = SpecState { zp, zm, t: 0.0 };
    let mut solver = Solver::new(g, System::slab(), DtPolicy::default()).unwrap();
    let s1 = solver.step_spec(&s0, 0.05).unwrap();
    let s2 = solver.step_spec(&s1, -0.05).unwrap();
    let e: f64 = (0..3)
        .map(|j| {
            let mut d = s2.zp[j].clone();
            d.axpy(-1.0, &s0.zp[j]);
            d.norm2()
        })
        .sum();
    assert!(e.sqrt() < 1e-10 * s0.energy()[0].sqrt());
    assert!(solver.step_spec(&s0, 10.0).is_err());
}

#[test]
fn rescaled_at_unit_delta_equals_slab() {
    let g = grid(1.0);
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec { amplitude: 0.1, ..Default::default() }).unwrap();
    let s0 = SpecState { zp, zm, t: 0.0 };
    let mut a = Solver::new(g, System::slab(), DtPolicy::Fixed { dt: 0.05 }).unwrap();
    let mut b = Solver::new(g, System::rescaled(1.0), DtPolicy::Fixed { dt: 0.05 }).unwrap();
    let ra = run(&mut a, s0.clone(), &RunOptions::to(0.5), &mut []).unwrap();
    let rb = run(&mut b, s0, &RunOptions::to(0.5), &mut []).unwrap();
    assert_eq!(ra.state, rb.state);
}

#[test]
fn run_to_start_is_identity() {
    let g = grid(0.5);
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec::default()).unwrap();
    let s0 = SpecState { zp, zm, t: 0.0 };
    let mut solver = Solver::new(g, System::slab(), DtPolicy::default()).unwrap();
    let mut seen = 0;
    let mut obs = |_: &StepView| -> alfven_slab::Result<()> {
        seen += 1;
        Ok(())
    };
    let out = run(&mut solver, s0.clone(), &RunOptions::to(0.0), &mut [&mut obs]).unwrap();
    assert_eq!(out.state, s0);
    assert_eq!(out.report.steps, 0);
    assert_eq!(seen, 1);
}

#[test]
fn timing_probe() {
    let g = GridSpec::with_box(256, 64, 80.0 * PI, 16.0 * PI, 8, 1.0).unwrap();
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec::default()).unwrap();
    let s0 = SpecState { zp, zm, t: 0.0 };
    let mut solver = Solver::new(g, System::slab(), DtPolicy::default()).unwrap();
    let t = std::time::Instant::now();
    for _ in 0..4 {
        solver.rhs(&s0);
    }
    eprintln!("rhs 256x64x9: {:?}", t.elapsed() / 4);
    let _ = VectorField3::zeros(g);
}
