use alfven_slab::cli_io::*;
use alfven_slab::packet::{gaussian_packet, PacketSpec};
use alfven_slab::scattering::ScatteringAccumulator;
use alfven_slab::solver3d::{run, DtPolicy, RunOptions, Solver, SpecState, System};
use alfven_slab::types::{ElsasserState, GridSpec, ScalarField, VectorField3};
use alfven_slab::Transform;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use std::fs;
use std::path::Path;

fn small() -> GridSpec {
    GridSpec::new(16, 8, 20.0, 4, 0.5).unwrap()
}

fn random_state(seed: u64) -> ElsasserState {
    let g = small();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut f = || ScalarField { grid: g, data: (0..g.len()).map(|_| rng.gen::<f64>() * 1e3 - 5e2).collect() };
    let mut v = || VectorField3 { c: [f(), f(), f()] };
    ElsasserState { zp: v(), zm: v(), t: 1.25 }
}

fn run_cli(dir: &Path, cmd: &str, config: Option<&str>) -> i32 {
    let mut args = vec!["alfven".to_string(), cmd.to_string(), "--out".into(), dir.display().to_string()];
    if let Some(c) = config {
        let p = dir.with_extension("json");
        fs::write(&p, c).unwrap();
        args.extend(["--config".into(), p.display().to_string()]);
    }
    cli(args)
}

const TINY: &str = r#"{"grid": {"n1": 64, "n2": 32, "lh1": 50.0, "lh2": 25.0, "mv": 4},
  "packet": {"amplitude": 0.02, "widths": [2.0, 2.0]},
  "t_end": 1.0, "snapshots": [0.5], "ledger": {"kmax": 2, "every": 2, "extra_a": [10.0]}}"#;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn field_round_trip_is_bit_exact(seed in 0u64..10_000) {
        let dir = tempfile::tempdir().unwrap();
        let s = random_state(seed);
        let m = save_field(dir.path(), "f", &s, 0.25, 3.0).unwrap();
        let (m2, back) = load_field(&dir.path().join("f.json")).unwrap();
        prop_assert_eq!(m, m2);
        for (a, b) in [&s.zp, &s.zm].iter().flat_map(|v| v.c.iter()).zip([&back.zp, &back.zm].iter().flat_map(|v| v.c.iter())) {
            prop_assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(back.t, s.t);
    }
}

#[test]
fn manifest_only_and_corrupt_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let s = random_state(1);
    save_field(dir.path(), "f", &s, 0.25, 0.0).unwrap();
    let json = dir.path().join("f.json");
    fs::remove_file(dir.path().join("f.bin")).unwrap();
    let m = read_manifest(&json).unwrap();
    assert_eq!((m.grid, m.t, m.version.as_str()), (small(), 1.25, "1"));
    assert!(load_field(&json).is_err());
    save_field(dir.path(), "f", &s, 0.25, 0.0).unwrap();
    let bin = fs::read(dir.path().join("f.bin")).unwrap();
    fs::write(dir.path().join("f.bin"), &bin[..bin.len() - 8]).unwrap();
    assert!(load_field(&json).is_err());
    let text = fs::read_to_string(&json).unwrap().replace("\"version\": \"1\"", "\"version\": \"2\"");
    fs::write(&json, text).unwrap();
    assert!(read_manifest(&json).is_err());
}

#[test]
fn scattering_fields_persist_nodal_values() {
    let g = GridSpec::with_box(64, 32, 50.0, 25.0, 4, 1.0).unwrap();
    let st = gaussian_packet(g, &PacketSpec { widths: (2.0, 2.0), ..Default::default() }).unwrap();
    let s0 = SpecState::from_physical(&st).unwrap();
    let mut solver = Solver::new(g, System::slab(), DtPolicy::default()).unwrap();
    let mut acc = ScatteringAccumulator::new(&s0, &[]);
    run(&mut solver, s0, &RunOptions::to(0.5), &mut [&mut acc]).unwrap();
    let sc = acc.finalize(0.25, 0.0);
    let dir = tempfile::tempdir().unwrap();
    save_scattering(dir.path(), "sc", &sc[1]).unwrap();
    let (m, vals) = load_scattering(&dir.path().join("sc.json")).unwrap();
    assert_eq!(m, sc[1].manifest());
    let want = Transform::new(g).inverse(&sc[1].values[2]).unwrap();
    assert_eq!(vals[2], want.data);
}

#[test]
fn config_defaults_and_validation() {
    assert_eq!(Config::from_json("{}").unwrap(), Config::default());
    let echo = serde_json::to_string(&Config::default()).unwrap();
    assert_eq!(Config::from_json(&echo).unwrap(), Config::default());
    assert!(Config::from_json(r#"{"unknown": 1}"#).is_err());
    assert!(Config::from_json(r#"{"grid": {"n1": 0}}"#).is_err());
    assert!(Config::from_json(r#"{"sigma": -1.0}"#).is_err());
    assert!(Config::from_json(r#"{"policy": {"Fixed": {"dt": 0.0}}}"#).is_err());
    let c = Config::from_json(TINY).unwrap();
    assert_eq!(c.packet.widths, (2.0, 2.0));
    assert_eq!(c.packet.seed, PacketSpec::default().seed);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    assert_eq!(run_cli(&out, "simulate", Some("{ not json")), 2);
    assert_eq!(run_cli(&out, "simulate", Some(r#"{"delta": -0.5}"#)), 2);
    assert_eq!(cli(["alfven", "simulate", "--precision", "f32"]), 2);
}

#[test]
fn simulate_without_time_writes_initial_snapshot_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zero");
    let cfg = TINY.replace("\"t_end\": 1.0", "\"t_end\": 0.0");
    assert_eq!(run_cli(&out, "simulate", Some(&cfg)), 0);
    let snaps: Vec<_> = fs::read_dir(out.join("snapshots")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(snaps.len(), 2, "{snaps:?}");
    assert!(out.join("snapshots/t0.json").exists());
    for f in ["config.json", "ledger.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run_cli(&a, "simulate", Some(TINY)), 0);
    assert_eq!(run_cli(&b, "simulate", Some(TINY)), 0);
    for f in ["ledger.csv", "ledger_a10.csv", "summary.json", "snapshots/t0.5.bin", "snapshots/t1.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("ledger.csv")).unwrap();
    assert!(csv.lines().count() > 2);
    let (_, st) = load_field(&a.join("snapshots/t1.json")).unwrap();
    assert_eq!(st.t, 1.0);
}

#[test]
fn monitor_abort_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abort");
    let cfg = TINY.replace("\"t_end\": 1.0", "\"t_end\": 1.0, \"boundary_tol\": 1e-300");
    assert_eq!(run_cli(&out, "simulate", Some(&cfg)), 3);
    assert!(out.join("summary.json").exists());
}

#[test]
fn scatter_writes_fields_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sc");
    let cfg = TINY.replace("\"snapshots\": [0.5]", "\"scatter\": {\"checkpoints\": [0.5]}");
    assert_eq!(run_cli(&out, "scatter", Some(&cfg)), 0);
    let res = fs::read_to_string(out.join("residuals.csv")).unwrap();
    assert_eq!(res.lines().count(), 3, "{res}");
    for f in ["scattering_plus.bin", "scattering_plus.json", "scattering_minus.bin", "ledger.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn check_battery_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_cli(&dir.path().join("check"), "check", None), 0);
}
