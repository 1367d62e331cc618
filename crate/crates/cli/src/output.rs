//! Run directories: CSV tables, the JSON manifest and pass/fail checks.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{to_flat_config, RunContext};
use crate::error::Result;

/// One assertion with its measured value.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: String,
    pub passed: bool,
}

impl Check {
    /// Passes when `measured < limit`.
    pub fn below(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance: format!("< {limit:e}"),
            passed: measured < limit,
        }
    }

    /// Passes when `measured >= min`.
    pub fn at_least(name: impl Into<String>, measured: f64, min: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance: format!(">= {min}"),
            passed: measured >= min,
        }
    }

    /// Passes when `lo <= measured <= hi`.
    pub fn within(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&measured),
        }
    }

    /// A boolean property; `measured` is 1 or 0.
    pub fn holds(name: impl Into<String>, ok: bool, what: &str) -> Self {
        Self {
            name: name.into(),
            measured: if ok { 1.0 } else { 0.0 },
            tolerance: what.to_string(),
            passed: ok,
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// What every run leaves behind besides its tables.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub scale: String,
    pub seed: u64,
    pub threads: usize,
    pub params: serde_json::Value,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Output directory of one run; records every file it creates.
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Self {
            root: root.as_ref().to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.root.join(name))?))
    }

    /// Writes serializable rows as a CSV table with a header.
    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.file(name)?);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `manifest.json` and `config.txt`; the latter, passed back via
    /// `--config` with the same seed, reproduces the run.
    pub fn finish(
        mut self,
        experiment: &str,
        ctx: &RunContext,
        params: &impl Serialize,
        checks: &[Check],
    ) -> Result<Manifest> {
        let mut config = format!("scale={}\nseed={}\nthreads={}\n", ctx.scale, ctx.seed, ctx.threads);
        for line in to_flat_config(params)?.lines() {
            let key = line.split('=').next().unwrap_or("");
            if !matches!(key, "scale" | "seed" | "threads") {
                config.push_str(line);
                config.push('\n');
            }
        }
        self.file("config.txt")?.write_all(config.as_bytes())?;
        let manifest = Manifest {
            experiment: experiment.to_string(),
            version: concat!("mrf-cli ", env!("CARGO_PKG_VERSION")).to_string(),
            scale: ctx.scale.to_string(),
            seed: ctx.seed,
            threads: ctx.threads,
            params: serde_json::to_value(params)?,
            outputs: self.outputs.clone(),
            checks: checks.to_vec(),
            passed: all_passed(checks),
        };
        let mut f = self.file("manifest.json")?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_constructors() {
        assert!(Check::below("a", 0.5, 1.0).passed);
        assert!(!Check::below("a", 1.0, 1.0).passed);
        assert!(Check::at_least("b", 0.95, 0.95).passed);
        assert!(!Check::within("c", 5.0, 3.2, 4.8).passed);
        assert!(!Check::holds("d", false, "x").passed);
    }

    #[test]
    fn manifest_lists_outputs_and_echoes_params() {
        #[derive(Serialize)]
        struct P {
            walks: usize,
        }
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path()).unwrap();
        run.csv("rows.csv", &[P { walks: 3 }]).unwrap();
        let ctx = RunContext::new(dir.path()).with_seed(9);
        let m = run
            .finish("demo", &ctx, &P { walks: 3 }, &[Check::below("x", 0.0, 1.0)])
            .unwrap();
        assert!(m.passed);
        assert_eq!(m.outputs, vec!["rows.csv", "config.txt"]);
        let text = std::fs::read_to_string(dir.path().join("config.txt")).unwrap();
        assert_eq!(text, "scale=desk\nseed=9\nthreads=1\nwalks=3\n");
        let rows = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
        assert_eq!(rows, "walks\n3\n");
        assert!(dir.path().join("manifest.json").exists());
    }
}
