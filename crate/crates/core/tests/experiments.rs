use alfven_slab::experiments::*;
use alfven_slab::packet::{gaussian_packet_spec, PacketSpec};
use alfven_slab::solver3d::{DtPolicy, SpecState};
use alfven_slab::spectral::Parity;
use alfven_slab::types::{ElsasserState, GridSpec, ScalarField, VectorField3};
use proptest::prelude::*;
use std::f64::consts::PI;

fn grid(delta: f64) -> GridSpec {
    GridSpec::with_box(64, 64, 16.0 * PI, 16.0 * PI, 4, delta).unwrap()
}

fn packet(g: GridSpec, amplitude: f64) -> SpecState {
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec { amplitude, ..Default::default() }).unwrap();
    SpecState { zp, zm, t: 0.0 }
}

#[test]
fn rigidity_of_zero_data_is_zero() {
    let g = grid(0.5);
    let r = rigidity_experiment(&SpecState::zeros(g), &RigidityParams::default(), 2.0).unwrap();
    assert_eq!([r.eta_hat, r.tail, r.recovered_norm, r.rho], [0.0; 4]);
    assert!(r.vanishing);
    assert!(r.abort.is_none());
}

#[test]
fn linear_rigidity_recovers_data_norm() {
    let g = grid(1.0);
    let s0 = packet(g, 0.01);
    let p = RigidityParams { nonlinear: false, policy: DtPolicy::Cfl { cfl: 0.2 }, ..Default::default() };
    let reps = rigidity_sweep(&s0, &p, &[2.0, 4.0]).unwrap();
    for r in &reps {
        assert!((r.eta_hat - r.data_norm).abs() < 1e-12 * r.data_norm, "{r:?}");
        assert_eq!(r.tail, 0.0);
        assert!((r.rho - 1.0).abs() < 1e-6, "{}", r.rho);
        assert!(r.reversibility < 1e-6);
        assert_eq!(r.a_recentred, r.t_end);
    }
}

#[test]
fn rigidity_rejects_bad_horizons() {
    let s0 = SpecState::zeros(grid(1.0));
    assert!(rigidity_sweep(&s0, &RigidityParams::default(), &[4.0, 2.0]).is_err());
    assert!(rigidity_sweep(&s0, &RigidityParams::default(), &[]).is_err());
}

#[test]
fn slice_evaluates_vertical_expansion() {
    let g = grid(1.0);
    let f = |x1: f64, x2: f64, x3: f64| (0.25 * x1).sin() * (1.0 + (PI * 0.5 * (x3 + 1.0)).cos()) + (0.125 * x2).cos();
    let h = |_x1: f64, x2: f64, x3: f64| (0.25 * x2).cos() * (PI * (x3 + 1.0)).sin();
    let zero = ScalarField::zeros(g);
    let v = VectorField3 { c: [ScalarField::from_fn(g, f), zero.clone(), ScalarField::from_fn(g, h)] };
    let st = SpecState::from_physical(&ElsasserState { zp: v.clone(), zm: v, t: 0.0 }).unwrap();
    assert_eq!(st.zp[2].parity, Parity::Sin);
    let g2 = alfven_slab::solver2d::Grid2::of_slab(&g);
    for x3 in [-0.5, 0.0, 0.3] {
        for (comp, fun) in [(0usize, &f as &dyn Fn(f64, f64, f64) -> f64), (2, &h)] {
            let plane = slice(&st.zp[comp], x3);
            let pts = [[1.0, 2.0], [-3.0, 0.5]];
            let vals = alfven_slab::solver2d::eval_points2d(&g2, &plane, &pts);
            for (p, v) in pts.iter().zip(vals) {
                assert!((v - fun(p[0], p[1], x3)).abs() < 1e-10, "{comp} {x3} {v}");
            }
        }
    }
}

fn limit(family: Family, deltas: Vec<f64>) -> LimitReport {
    let p = LimitParams { deltas, t_eval: 2.0, dt: 0.1, family, packet: PacketSpec { amplitude: 0.05, vertical: 1.0, ..Default::default() }, ..Default::default() };
    delta_limit_experiment(grid(1.0), &p, 2).unwrap()
}

#[test]
fn embedded_family_matches_planar_run() {
    let r = limit(Family::Embedded, vec![0.4, 0.05]);
    for row in &r.rows {
        assert!(row.max_diff() < 1e-10 * r.reference_norm, "{row:?}");
        assert_eq!(row.max_z3(), 0.0);
        assert!(row.max_scattering() < 1e-10 * r.reference_norm);
    }
}

#[test]
fn generic_family_converges() {
    let r = limit(Family::Generic, vec![0.4, 0.2, 0.1]);
    for v in [r.diff_trend(), r.z3_trend(), r.scattering_trend()] {
        assert!(LimitReport::trend_ok(&v, 0.5), "{v:?}");
    }
}

#[test]
fn limit_rejects_non_unit_grid() {
    assert!(delta_limit_experiment(grid(0.5), &LimitParams::default(), 1).is_err());
}

fn short_sweep(amplitude: f64, deltas: Vec<f64>) -> SweepReport {
    let p = SweepParams { deltas, t_end: 2.0, packet: PacketSpec { amplitude, ..Default::default() }, ..Default::default() };
    uniformity_sweep(grid(1.0), &p, 2).unwrap()
}

#[test]
fn sweep_of_zero_data_has_unit_ratios() {
    let r = short_sweep(0.0, vec![1.0, 0.5]);
    assert!(r.summaries.iter().all(|s| s.max_agg_ratio == 1.0 && s.max_agg_delta_ratio == 1.0));
    assert_eq!(r.spread, 1.0);
}

#[test]
fn single_run_sweep_reproduces_itself() {
    let a = short_sweep(0.01, vec![0.5]);
    let b = short_sweep(0.01, vec![0.5]);
    assert_eq!(a.summaries, b.summaries);
    assert_eq!(a.summaries.len(), 2);
    assert!(a.bootstrap_ok);
    assert!(a.spread >= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn par_map_keeps_order(v in proptest::collection::vec(-1e6f64..1e6, 0..40), threads in 1usize..6) {
        let out = par_map(&v, threads, |x| 2.0 * x);
        prop_assert_eq!(out, v.iter().map(|x| 2.0 * x).collect::<Vec<_>>());
    }
}
