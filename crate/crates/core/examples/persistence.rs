//! Save a state with its manifest, read it back, and drive the CLI in-process.
//!
//!     cargo run --example persistence

use alfven_slab::cli_io::{cli, load_field, read_manifest, save_field, Config};
use alfven_slab::{gaussian_packet, GridSpec, PacketSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("alfven-persistence-example");
    let g = GridSpec::with_box(64, 32, 50.0, 25.0, 4, 0.5)?;
    let st = gaussian_packet(g, &PacketSpec { widths: (2.0, 2.0), ..Default::default() })?;
    std::fs::create_dir_all(&dir)?;
    save_field(&dir, "packet", &st, 0.25, 0.0)?;
    let m = read_manifest(&dir.join("packet.json"))?;
    println!("manifest: version {}, grid {:?}, components {:?}", m.version, m.grid, m.components);
    let (_, back) = load_field(&dir.join("packet.json"))?;
    println!("round trip exact: {}", back.zp.c[0].data == st.zp.c[0].data);

    let cfg = Config { t_end: 1.0, ..Config::from_json(r#"{"grid": {"n1": 64, "n2": 32, "lh1": 50.0, "lh2": 25.0, "mv": 4}, "packet": {"widths": [2.0, 2.0]}}"#)? };
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg)?)?;
    let out = dir.join("run");
    let code = cli(["alfven", "simulate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    println!("simulate exited with {code}; outputs in {}", out.display());
    Ok(())
}
