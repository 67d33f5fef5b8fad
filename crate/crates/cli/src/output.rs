//! Artifact writer. Every file starts with a comment line naming the
//! manifest and the run id, so loose files can be traced back to the
//! configuration that produced them.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub struct Output {
    dir: PathBuf,
    run_id: String,
    files: Vec<String>,
}

/// Short stable id of a resolved configuration.
pub fn run_id(resolved: &Value) -> String {
    let digest = Sha256::digest(resolved.to_string().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl Output {
    pub fn create(dir: &Path, run_id: String) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            run_id,
            files: Vec::new(),
        })
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "# manifest {MANIFEST} run {}", self.run_id)?;
        self.files.push(name.to_string());
        Ok(w)
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let w = self.open(name)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for row in rows {
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let mut w = self.open(name)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn finish(self, mut manifest: Value) -> Result<PathBuf> {
        manifest["run_id"] = json!(self.run_id);
        manifest["outputs"] = json!(self.files);
        let path = self.dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Shortest round-trip formatting, `NaN` for missing values.
pub fn num(x: f64) -> String {
    format!("{x}")
}
