#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use sappkg::ingest::{generate_synthetic_corpus, write_app_records, SyntheticConfig};
use sappkg_cli::{execute, Cli};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

/// A temporary run directory with a synthetic corpus and a config file.
pub struct Fixture {
    pub dir: TempDir,
}

pub const BASE_CONFIG: &str = r#"corpus = "apps.jsonl"
snapshot_date = "2023-03-01"
seed = 7

[train]
epochs = 20

[deep]
epochs = 10

[ablation]
models = ["TransE"]
"#;

impl Fixture {
    pub fn new(apps: usize, extra: &str) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let records = generate_synthetic_corpus(&SyntheticConfig {
            count: apps,
            seed: 3,
            ..SyntheticConfig::default()
        })
        .unwrap();
        fs::write(dir.path().join("apps.jsonl"), write_app_records(&records).unwrap()).unwrap();
        fs::write(dir.path().join("sappkg.toml"), format!("{BASE_CONFIG}{extra}")).unwrap();
        Fixture { dir }
    }

    pub fn config(&self) -> PathBuf {
        self.dir.path().join("sappkg.toml")
    }

    pub fn work(&self, rel: &str) -> PathBuf {
        self.dir.path().join("work").join(rel)
    }

    /// Run the CLI in-process with `--config` pointing at the fixture and
    /// return its exit code; stdout text is discarded.
    pub fn run(&self, args: &[&str]) -> i32 {
        self.output(args).map_or_else(|code| code, |_| 0)
    }

    pub fn output(&self, args: &[&str]) -> Result<String, i32> {
        let config = self.config();
        let mut argv = vec!["sappkg".to_string(), "--config".to_string(), config.display().to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        let cli = Cli::try_parse_from(argv).map_err(|e| if e.use_stderr() { 2 } else { 0 })?;
        execute(&cli).map_err(|e| e.exit_code())
    }

    pub fn ok(&self, args: &[&str]) {
        assert_eq!(self.run(args), 0, "sappkg {}", args.join(" "));
    }
}

pub fn sha256(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

/// Header and rows of a TSV file.
pub fn read_tsv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(|l| l.split('\t').map(str::to_string).collect::<Vec<_>>());
    let header = lines.next().unwrap();
    (header, lines.collect())
}

/// Exact arithmetic mean of finite non-negative doubles, rounded once: every
/// value is widened to a common fixed-point scale and summed as an integer.
pub fn exact_mean(values: &[f64]) -> f64 {
    let parts: Vec<(i128, i32)> = values
        .iter()
        .map(|&v| {
            assert!(v.is_finite() && v >= 0.0);
            if v == 0.0 {
                return (0, 0);
            }
            let bits = v.to_bits();
            let exp = ((bits >> 52) & 0x7ff) as i32;
            let frac = (bits & ((1u64 << 52) - 1)) as i128;
            if exp == 0 {
                (frac, -1074)
            } else {
                (frac | (1i128 << 52), exp - 1075)
            }
        })
        .collect();
    let lo = parts.iter().filter(|p| p.0 != 0).map(|p| p.1).min().unwrap_or(0);
    let sum: i128 = parts.iter().map(|&(m, e)| if m == 0 { 0 } else { m << (e - lo) }).sum();
    let n = values.len() as i128;
    // widen so the quotient keeps >= 55 significant bits, fold the remainder
    // into a sticky bit, and let the one int-to-float conversion round
    let shift = (126 - (128 - sum.leading_zeros() as i32)).clamp(0, 60);
    let scaled = sum << shift;
    let q = scaled / n;
    let sticky = (scaled % n != 0) as i128;
    ((q | sticky) as f64) * 2f64.powi(lo - shift)
}
