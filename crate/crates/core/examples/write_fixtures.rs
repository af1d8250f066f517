//! Regenerates the files under `fixtures/` from the built-in mall scenario.
//!
//!     cargo run --example write_fixtures

use std::path::Path;

use responsibility_engine::scenario::fixture_files;

fn main() -> std::io::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    for (rel, content) in fixture_files() {
        std::fs::write(root.join(rel), content)?;
        println!("wrote {rel}");
    }
    Ok(())
}
