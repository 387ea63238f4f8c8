//! Output directories that appear complete or not at all.
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tempfile::TempDir;

/// Artifacts are written into a hidden sibling directory and renamed onto
/// the target in [`OutputDir::commit`]. Dropping without committing removes
/// everything written so far.
pub struct OutputDir {
    staging: TempDir,
    target: PathBuf,
    force: bool,
}

impl OutputDir {
    pub fn create(target: &Path, force: bool) -> Result<Self> {
        if target.exists() && !force && !is_empty_dir(target)? {
            bail!(
                "output directory {} exists and is not empty (use --force to replace it)",
                target.display()
            );
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)
            .with_context(|| format!("creating {}", parent.display()))?;
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let staging = tempfile::Builder::new()
            .prefix(&format!(".{name}.partial-"))
            .tempdir_in(&parent)
            .with_context(|| format!("creating staging directory in {}", parent.display()))?;
        Ok(OutputDir {
            staging,
            target: target.to_path_buf(),
            force,
        })
    }

    pub fn path(&self) -> &Path {
        self.staging.path()
    }

    /// Path of `relative` inside the staging directory, creating parents.
    pub fn file(&self, relative: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.staging.path().join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(path)
    }

    pub fn write(&self, relative: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.file(relative)?;
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    /// Writes through a closure that receives a buffered writer.
    pub fn write_with<F>(&self, relative: impl AsRef<Path>, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(relative, buf)
    }

    pub fn commit(self) -> Result<PathBuf> {
        if self.target.exists() {
            if !self.force && !is_empty_dir(&self.target)? {
                bail!("output directory {} appeared during the run", self.target.display());
            }
            fs::remove_dir_all(&self.target)
                .with_context(|| format!("removing {}", self.target.display()))?;
        }
        let staged = self.staging.keep();
        fs::rename(&staged, &self.target).with_context(|| {
            format!("moving {} to {}", staged.display(), self.target.display())
        })?;
        Ok(self.target)
    }
}

fn is_empty_dir(path: &Path) -> Result<bool> {
    if !path.is_dir() {
        bail!("{} exists and is not a directory", path.display());
    }
    Ok(fs::read_dir(path)?.next().is_none())
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.write_all(b"\n")?;
    Ok(out)
}
