//! Regenerates the shipped color-name table.
//!
//! Usage: `cargo run -p scf-core --example write_color_table [OUT]`

use std::path::PathBuf;

use scf_core::features::ColorTable;

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/color_names.bin")));
    std::fs::write(&out, ColorTable::prototype().to_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}
