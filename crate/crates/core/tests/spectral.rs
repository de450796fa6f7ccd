use alfven_slab::spectral::*;
use alfven_slab::types::{GridSpec, ScalarField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn grid(delta: f64) -> GridSpec {
    GridSpec::new(32, 32, 16.0 * PI, 8, delta).unwrap()
}

/// Random band-limited field built directly from coefficients.
fn random_spec(g: GridSpec, parity: Parity, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SpectralField::zeros(g, parity);
    for c in s.data.iter_mut() {
        *c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    s.dealias();
    s.clean_parity();
    // make the field real: round-trip through physical space
    let mut tr = Transform::new(g);
    let f = tr.inverse(&s).unwrap();
    let mut out = SpectralField::zeros(g, parity);
    tr.forward_raw(&f.data, parity, &mut out, false);
    out
}

fn smooth_field(g: GridSpec, parity: Parity, seed: u64) -> ScalarField {
    let mut tr = Transform::new(g);
    tr.inverse(&random_spec(g, parity, seed)).unwrap()
}

fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.data.iter().zip(b.data.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn constant_maps_to_single_coefficient() {
    let g = grid(0.5);
    let f = ScalarField::from_fn(g, |_, _, _| 2.5);
    let s = to_spectral(&f, Parity::Cos).unwrap();
    assert!((s.data[0].re - 2.5).abs() < 1e-14);
    let rest: f64 = s.data[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!(rest < 1e-14);
}

#[test]
fn basis_function_single_coefficient() {
    let g = grid(0.5);
    let d = g.delta;
    let f = ScalarField::from_fn(g, |x1, _, x3| x1.cos() * (PI * (x3 + d) / (2.0 * d)).cos());
    let s = to_spectral(&f, Parity::Cos).unwrap();
    // kappa1 = 1 is index lh1 / (2 pi) = 8 with phase exp(i 8 (x - x0)) -> factor (-1)^8
    let m = (g.lh1 / (2.0 * PI)).round() as usize;
    let c = s.data[s.idx(1, 0, m)];
    assert!((c.re - 0.5).abs() < 1e-13 && c.im.abs() < 1e-13, "{c}");
    let mut others = 0.0f64;
    for (i, v) in s.data.iter().enumerate() {
        if i != s.idx(1, 0, m) {
            others = others.max(v.norm());
        }
    }
    assert!(others < 1e-13);
}

#[test]
fn sine_parity_rejects_wall_values() {
    let g = grid(1.0);
    let f = ScalarField::from_fn(g, |x1, _, _| x1.cos());
    assert!(to_spectral(&f, Parity::Sin).is_err());
}

#[test]
fn round_trip_both_parities() {
    for (parity, seed) in [(Parity::Cos, 1), (Parity::Sin, 2)] {
        let g = grid(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = ScalarField::from_fn(g, |_, _, _| rng.gen_range(-1.0..1.0));
        if parity == Parity::Sin {
            let np = g.nplane();
            f.data[..np].iter_mut().for_each(|v| *v = 0.0);
            f.data[g.mv * np..].iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tr = Transform::new(g);
        let s = tr.forward(&f, parity).unwrap();
        let back = tr.inverse(&s).unwrap();
        assert!(max_diff(&f, &back) < 1e-13 * f.max_abs().max(1.0));
    }
}

#[test]
fn parseval_matches_grid_norm() {
    for parity in [Parity::Cos, Parity::Sin] {
        let g = grid(0.7);
        let s = random_spec(g, parity, 9);
        let f = to_physical(&s).unwrap();
        let a = s.norm2();
        let b = f.norm2();
        assert!((a - b).abs() < 1e-12 * b, "{a} vs {b}");
    }
}

#[test]
fn parseval_without_dealiasing() {
    let g = grid(0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = ScalarField::from_fn(g, |_, _, _| rng.gen_range(-1.0..1.0));
    let s = to_spectral(&f, Parity::Cos).unwrap();
    assert!((s.norm2() - f.norm2()).abs() < 1e-12 * f.norm2());
}

#[test]
fn horizontal_derivative_of_cosine() {
    let g = grid(1.0);
    let f = ScalarField::from_fn(g, |x1, _, _| x1.cos());
    let d = to_physical(&derivative(&to_spectral(&f, Parity::Cos).unwrap(), 1)).unwrap();
    let exact = ScalarField::from_fn(g, |x1, _, _| -x1.sin());
    assert!(max_diff(&d, &exact) < 1e-13);
}

#[test]
fn vertical_derivative_of_sine_mode() {
    let g = grid(0.4);
    let d = g.delta;
    let m1 = g.m_k(1);
    let f = ScalarField::from_fn(g, |_, x2, x3| x2.cos() * (m1 * (x3 + d)).sin());
    let df = to_physical(&derivative(&to_spectral(&f, Parity::Sin).unwrap(), 3)).unwrap();
    let exact = ScalarField::from_fn(g, |_, x2, x3| m1 * x2.cos() * (m1 * (x3 + d)).cos());
    assert!(max_diff(&df, &exact) < 1e-12);
    let f2 = ScalarField::from_fn(g, |_, x2, x3| x2.cos() * (m1 * (x3 + d)).cos());
    let df2 = to_physical(&derivative(&to_spectral(&f2, Parity::Cos).unwrap(), 3)).unwrap();
    let exact2 = ScalarField::from_fn(g, |_, x2, x3| -m1 * x2.cos() * (m1 * (x3 + d)).sin());
    assert!(max_diff(&df2, &exact2) < 1e-12);
}

#[test]
fn poisson_manufactured() {
    let g = grid(0.37);
    let src = ScalarField::from_fn(g, |x1, x2, _| x1.cos() * x2.cos());
    let (p, warn) = poisson_neumann(&to_spectral(&src, Parity::Cos).unwrap()).unwrap();
    assert!(warn.is_none());
    let p = to_physical(&p).unwrap();
    let exact = ScalarField::from_fn(g, |x1, x2, _| 0.5 * x1.cos() * x2.cos());
    let e = max_diff(&p, &exact);
    assert!(e < 1e-13, "{e}");
}

#[test]
fn poisson_zeroes_mean_with_warning() {
    let g = grid(1.0);
    let src = ScalarField::from_fn(g, |x1, _, _| 1.0 + x1.cos());
    let (p, warn) = poisson_neumann(&to_spectral(&src, Parity::Cos).unwrap()).unwrap();
    assert!((warn.unwrap() - 1.0).abs() < 1e-13);
    assert_eq!(p.data[0], C64::new(0.0, 0.0));
    let (z, w) = poisson_neumann(&SpectralField::zeros(g, Parity::Cos)).unwrap();
    assert!(w.is_none() && z.max_abs_coeff() == 0.0);
}

#[test]
fn poisson_residual_random() {
    let g = grid(0.25);
    let mut s = random_spec(g, Parity::Cos, 5);
    s.data[0] = C64::new(0.0, 0.0);
    let (p, _) = poisson_neumann(&s).unwrap();
    let mut lap = laplacian(&p);
    lap.scale(-1.0);
    let diff: f64 = lap.data.iter().zip(s.data.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-12 * s.max_abs_coeff());
}

fn random_vec(g: GridSpec, seed: u64) -> SpecVec {
    [
        random_spec(g, Parity::Cos, seed),
        random_spec(g, Parity::Cos, seed + 100),
        random_spec(g, Parity::Sin, seed + 200),
    ]
}

#[test]
fn leray_projection_properties() {
    let g = grid(0.5);
    let mut v = random_vec(g, 11);
    assert!(divergence_residual(&v) > 1e-3);
    leray_project(&mut v);
    assert!(divergence_residual(&v) < 1e-12);
    let once = v.clone();
    leray_project(&mut v);
    for c in 0..3 {
        let d: f64 = v[c].data.iter().zip(once[c].data.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-14);
    }
    // gradients are annihilated
    let phi = random_spec(g, Parity::Cos, 12);
    let mut gr = gradient_scaled(&phi, 1.0);
    leray_project(&mut gr);
    let m = gr.iter().map(|c| c.max_abs_coeff()).fold(0.0, f64::max);
    assert!(m < 1e-13 * phi.max_abs_coeff().max(1.0) * 10.0, "{m}");
}

#[test]
fn scaled_projection_removes_scaled_divergence() {
    let g = grid(1.0);
    let gamma = 1.0 / 0.1f64.powi(2);
    let mut v = random_vec(g, 21);
    leray_project_scaled(&mut v, gamma);
    assert!(divergence_residual(&v) < 1e-12);
    let phi = random_spec(g, Parity::Cos, 22);
    let mut gr = gradient_scaled(&phi, gamma);
    leray_project_scaled(&mut gr, gamma);
    let m = gr.iter().map(|c| c.max_abs_coeff()).fold(0.0, f64::max);
    assert!(m < 1e-11, "{m}");
}

#[test]
fn vector_identity_curl_curl() {
    let g = grid(0.6);
    let v = random_vec(g, 31);
    let cc = curl(&curl(&v));
    let gd = gradient_scaled(&divergence(&v), 1.0);
    for c in 0..3 {
        let lap = laplacian(&v[c]);
        // -lap v = -grad div v + curl curl v
        let scale = lap.max_abs_coeff();
        let mut err = 0.0f64;
        for i in 0..lap.data.len() {
            let r = -lap.data[i] + gd[c].data[i] - cc[c].data[i];
            err = err.max(r.norm());
        }
        assert!(err < 1e-12 * scale, "component {c}: {err}");
    }
}

#[test]
fn shift_of_cosine_is_sine() {
    let g = grid(1.0);
    let f = ScalarField::from_fn(g, |x1, _, _| x1.cos());
    let s = shift_x1(&to_spectral(&f, Parity::Cos).unwrap(), PI / 2.0);
    let exact = ScalarField::from_fn(g, |x1, _, _| x1.sin());
    assert!(max_diff(&to_physical(&s).unwrap(), &exact) < 1e-13);
    let id = shift_x1(&to_spectral(&f, Parity::Cos).unwrap(), 0.0);
    assert!(max_diff(&to_physical(&id).unwrap(), &f) < 1e-15);
}

#[test]
fn dealiasing_zeroes_outer_band() {
    let g = grid(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = ScalarField::from_fn(g, |_, _, _| rng.gen_range(-1.0..1.0));
    let mut s = to_spectral(&f, Parity::Cos).unwrap();
    assert!(!s.is_dealiased());
    s.dealias();
    assert!(s.is_dealiased());
    let mut t = SpectralField::zeros(g, Parity::Cos);
    Transform::new(g).forward_raw(&f.data, Parity::Cos, &mut t, true);
    assert_eq!(s, t);
}

#[test]
fn divergence_identity_on_projected_field() {
    // d3 z3 = -div_h z_h for a divergence-free field
    let g = grid(0.45);
    let mut v = random_vec(g, 41);
    leray_project(&mut v);
    let d3 = derivative(&v[2], 3);
    let mut dh = derivative(&v[0], 1);
    dh.axpy(1.0, &derivative(&v[1], 2));
    let err = d3.data.iter().zip(dh.data.iter()).map(|(a, b)| (a + b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-12 * dh.max_abs_coeff());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn shift_group_property(s in -20.0f64..20.0, seed in 0u64..1000) {
        let g = grid(0.8);
        let f = random_spec(g, Parity::Cos, seed);
        let back = shift_x1(&shift_x1(&f, s), -s);
        let a = to_physical(&f).unwrap();
        let b = to_physical(&back).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-13 * a.max_abs().max(1.0));
    }

    #[test]
    fn round_trip_smooth(seed in 0u64..1000, delta in 0.05f64..1.0) {
        let g = grid(delta);
        let f = smooth_field(g, Parity::Sin, seed);
        let back = to_physical(&to_spectral(&f, Parity::Sin).unwrap()).unwrap();
        prop_assert!(max_diff(&f, &back) < 1e-13 * f.max_abs().max(1.0));
    }
}
