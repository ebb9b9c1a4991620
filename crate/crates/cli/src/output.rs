//! Output directories written to a sibling temp dir and renamed into place.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

pub struct OutDir {
    tmp: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl OutDir {
    /// Refuses to replace an existing directory that was not produced by a
    /// previous run (no `metadata.json`).
    pub fn create(target: &Path) -> Result<Self> {
        if target.exists() && !target.join("metadata.json").is_file() {
            bail!(
                "{} exists and is not a previous output directory",
                target.display()
            );
        }
        let name = target
            .file_name()
            .context("output path has no final component")?
            .to_string_lossy()
            .into_owned();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(OutDir {
            tmp,
            target: target.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn text(&self, name: &str, body: &str) -> Result<()> {
        fs::write(self.path(name), body)?;
        Ok(())
    }

    pub fn csv(&self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        Ok(csv_writer(
            BufWriter::new(File::create(self.path(name))?),
            false,
        ))
    }

    /// Rows with a variable number of trailing fields.
    pub fn csv_flexible(&self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        Ok(csv_writer(
            BufWriter::new(File::create(self.path(name))?),
            true,
        ))
    }

    pub fn commit(mut self) -> Result<PathBuf> {
        if self.target.exists() {
            let old = self.tmp.with_extension("old");
            fs::rename(&self.target, &old)?;
            fs::rename(&self.tmp, &self.target)?;
            fs::remove_dir_all(&old)?;
        } else {
            fs::rename(&self.tmp, &self.target)?;
        }
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

fn csv_writer<W: Write>(w: W, flexible: bool) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .flexible(flexible)
        .from_writer(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_dir_is_removed() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        let tmp = {
            let o = OutDir::create(&target).unwrap();
            o.text("a.txt", "x").unwrap();
            o.tmp.clone()
        };
        assert!(!tmp.exists());
        assert!(!target.exists());
    }

    #[test]
    fn commit_replaces_previous_run_only() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        let o = OutDir::create(&target).unwrap();
        o.text("metadata.json", "{}").unwrap();
        o.commit().unwrap();
        let o = OutDir::create(&target).unwrap();
        o.text("metadata.json", "{}").unwrap();
        o.text("b.txt", "y").unwrap();
        o.commit().unwrap();
        assert!(target.join("b.txt").is_file());

        let foreign = root.path().join("mine");
        fs::create_dir(&foreign).unwrap();
        assert!(OutDir::create(&foreign).is_err());
    }

    #[test]
    fn csv_uses_unix_newlines() {
        let root = tempfile::tempdir().unwrap();
        let o = OutDir::create(&root.path().join("r")).unwrap();
        {
            let mut w = o.csv("t.csv").unwrap();
            w.write_record(["a", "b"]).unwrap();
            w.write_record(["1", "2"]).unwrap();
            w.flush().unwrap();
        }
        assert_eq!(fs::read_to_string(o.path("t.csv")).unwrap(), "a,b\n1,2\n");
    }
}
