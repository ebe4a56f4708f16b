//! Report plumbing: config hashes, version stamps, file or stdout emission.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use mrw_core::Result;

/// Hash of the canonical JSON encoding of a command's configuration; embedded
/// in every report so runs can be tied back to their inputs.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(16);
    for b in &digest[..8] {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Write pretty JSON to `dir/name` when an output directory is given, and
/// echo it to stdout otherwise. A closed stdout (downstream `head`) is not an
/// error.
pub fn emit_json<T: Serialize>(out: &Option<PathBuf>, name: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), text)?;
        }
        None => {
            use std::io::Write;
            if let Err(e) = writeln!(std::io::stdout(), "{text}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

/// Write a CSV series into the output directory. Without `--out` the series
/// is skipped so stdout stays a single JSON document.
pub fn with_csv_sink<F>(out: &Option<PathBuf>, name: &str, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn std::io::Write) -> Result<()>,
{
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut file = std::fs::File::create(dir.join(name))?;
            f(&mut file)
        }
        None => {
            eprintln!("note: pass --out DIR to write {name}");
            Ok(())
        }
    }
}

pub fn announce(out: &Option<PathBuf>, name: &str) {
    if let Some(dir) = out {
        eprintln!("wrote {}", Path::new(dir).join(name).display());
    }
}
