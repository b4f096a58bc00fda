//! All-or-nothing artifact writes: every file is staged as a temporary in the
//! target directory and renamed into place only once all of them are written.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Artifact {
            name: name.into(),
            bytes: bytes.into(),
        }
    }
}

pub fn write_atomically(dir: &Path, artifacts: &[Artifact]) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let mut tmp = tempfile::Builder::new()
            .prefix(&format!(".{}.", a.name))
            .tempfile_in(dir)
            .with_context(|| format!("cannot stage {} in {}", a.name, dir.display()))?;
        tmp.write_all(&a.bytes)
            .and_then(|_| tmp.as_file().sync_all())
            .with_context(|| format!("cannot write {}", a.name))?;
        staged.push((tmp, dir.join(&a.name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        tmp.persist(&target)
            .map_err(|e| e.error)
            .with_context(|| format!("cannot move {} into place", target.display()))?;
        written.push(target);
    }
    Ok(written)
}
