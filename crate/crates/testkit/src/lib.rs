//! Shared test support: checked-in fixtures, seeded generators and the
//! brute-force oracles the property and acceptance suites compare against.
//!
//! Nothing here calls into the code paths it is used to check, apart from
//! public data types and the primitive `project` where noted.

use std::path::PathBuf;

pub mod gen;
pub mod glast;
pub mod mutate;
pub mod oracle;

pub use rand_chacha::ChaCha8Rng as Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Directory holding the checked-in fixture and golden files.
pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn data_path(name: &str) -> PathBuf {
    data_dir().join(name)
}

pub fn read_data(name: &str) -> Vec<u8> {
    let path = data_path(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// True when golden files should be rewritten instead of compared
/// (`HEPREP_BLESS=1`).
pub fn blessing() -> bool {
    std::env::var_os("HEPREP_BLESS").is_some_and(|v| v == "1")
}

/// Compares `actual` with the golden file `name`, or rewrites it when blessing.
pub fn check_golden(name: &str, actual: &[u8]) -> Result<(), String> {
    let path = data_path(name);
    if blessing() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        let first = expected
            .iter()
            .zip(actual)
            .position(|(a, b)| a != b)
            .unwrap_or(expected.len().min(actual.len()));
        Err(format!(
            "{name}: differs from golden at byte {first} (golden {} bytes, actual {} bytes)",
            expected.len(),
            actual.len()
        ))
    }
}

pub const MINIMAL: &str = "minimal.heprep";
pub const GLAST: &str = "glast.heprep.gz";

/// Writes the three-event server fixture into `dir`: `a.heprep` (the minimal
/// file), `b.heprep.gz` (the GLAST-like fixture) and `c.heprep` (a random
/// document), plus a file the server must ignore. Returns the event files in
/// index order.
pub fn seed_event_dir(dir: &std::path::Path) -> Vec<PathBuf> {
    use heprep_core::xmlio;
    let files = [
        ("c.heprep", xmlio::serialize(&gen::document(&mut rng(7)), false).unwrap()),
        ("a.heprep", read_data(MINIMAL)),
        ("b.heprep.gz", read_data(GLAST)),
        ("notes.txt", b"not an event".to_vec()),
    ];
    for (name, bytes) in &files {
        std::fs::write(dir.join(name), bytes).unwrap();
    }
    ["a.heprep", "b.heprep.gz", "c.heprep"]
        .iter()
        .map(|n| dir.join(n))
        .collect()
}
