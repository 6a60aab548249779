//! Run manifests, deterministic output plumbing, and flag-value parsing.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Everything that determines a run's outputs. Two runs with equal
/// manifests write byte-identical artifacts.
#[derive(serde::Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub subcommand: &'static str,
    /// fnv1a64 over the raw problem-file bytes
    pub input_digest: String,
    pub master_seed: Option<u64>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(
        subcommand: &'static str,
        input_digest: String,
        master_seed: Option<u64>,
        config: serde_json::Value,
    ) -> Self {
        RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            input_digest,
            master_seed,
            config,
        }
    }

    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn fnv1a64(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("fnv1a64:{h:016x}")
}

/// Write through a temp file in the same directory, then rename into
/// place, so readers never observe a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Manifest sibling for an artifact path: the extension becomes
/// `manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

/// A budget grid: either a single value `V` or an inclusive range
/// `A:B:STEP`.
pub fn parse_grid(flag: &str, s: &str) -> Result<Vec<f64>, String> {
    let parse = |t: &str| -> Result<f64, String> {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("{flag}: `{t}` is not a number"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![parse(v)?]),
        [a, b, step] => {
            let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
            if !(step > 0.0) {
                return Err(format!("{flag}: step must be positive, got {step}"));
            }
            if b < a {
                return Err(format!("{flag}: range end {b} is below start {a}"));
            }
            // slop so 0:1:0.2 lands exactly on 1
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            if count > 10_000 {
                return Err(format!("{flag}: grid has {count} points, limit 10000"));
            }
            Ok((0..count).map(|i| a + i as f64 * step).collect())
        }
        _ => Err(format!("{flag}: expected `V` or `A:B:STEP`, got `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing_handles_singletons_and_ranges() {
        assert_eq!(parse_grid("--x", "0.3").unwrap(), vec![0.3]);
        let g = parse_grid("--x", "0:1:0.25").unwrap();
        assert_eq!(g.len(), 5);
        assert!((g[4] - 1.0).abs() < 1e-12);
        assert!(parse_grid("--x", "1:0:0.1").is_err());
        assert!(parse_grid("--x", "0:1:0").is_err());
        assert!(parse_grid("--x", "a:b").is_err());
    }

    #[test]
    fn digest_is_stable() {
        // FNV-1a reference value for "a"
        assert_eq!(fnv1a64(b"a"), "fnv1a64:af63dc4c8601ec8c");
        assert_eq!(fnv1a64(b""), "fnv1a64:cbf29ce484222325");
    }

    #[test]
    fn manifest_sibling_replaces_extension() {
        assert_eq!(
            manifest_path(Path::new("runs/curve.csv")),
            PathBuf::from("runs/curve.manifest.json")
        );
    }
}
