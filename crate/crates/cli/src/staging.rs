//! Outputs are written to a staging directory and moved into place only when
//! a command succeeds, so a failed run leaves no partial files behind.

use anyhow::{Context, Result};
use std::fs;
use std::path::{Path, PathBuf};

pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    created_out: bool,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path, command: &str) -> Result<Self> {
        let created_out = !out.exists();
        fs::create_dir_all(out).with_context(|| format!("{}: cannot create output directory", out.display()))?;
        let dir = out.join(format!(".staging-{command}"));
        if dir.exists() {
            fs::remove_dir_all(&dir).with_context(|| format!("{}: cannot clear stale staging", dir.display()))?;
        }
        fs::create_dir(&dir).with_context(|| format!("{}: cannot create staging directory", dir.display()))?;
        Ok(Self { out: out.to_path_buf(), dir, created_out, committed: false })
    }

    /// Staging location of an output path relative to the output directory.
    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn subdir(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        fs::create_dir_all(&p).with_context(|| format!("{}: cannot create directory", p.display()))?;
        Ok(p)
    }

    /// Final location of a staged path.
    pub fn final_path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Moves every staged entry into the output directory, replacing older ones.
    pub fn commit(mut self) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(&self.dir)
            .with_context(|| format!("{}: cannot list staging", self.dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for src in entries {
            let dst = self.out.join(src.file_name().expect("entry has a name"));
            if dst.is_dir() {
                fs::remove_dir_all(&dst).with_context(|| format!("{}: cannot replace", dst.display()))?;
            }
            fs::rename(&src, &dst).with_context(|| format!("{}: cannot move into place", dst.display()))?;
        }
        fs::remove_dir(&self.dir).ok();
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            fs::remove_dir_all(&self.dir).ok();
            if self.created_out {
                // only succeeds when nothing else was put there
                fs::remove_dir(&self.out).ok();
            }
        }
    }
}
