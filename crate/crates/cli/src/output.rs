//! All-or-nothing output directories: files are written into a hidden
//! staging directory next to the target and renamed into place at the end.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kto_core::changepoint::timescale;
use kto_core::c64;

pub struct Staging {
    dir: PathBuf,
    target: PathBuf,
    force: bool,
    committed: bool,
}

impl Staging {
    pub fn new(target: &Path, force: bool) -> Result<Self> {
        if target.exists() && !force {
            bail!("output directory {} already exists (use --force to replace it)", target.display());
        }
        let name = target
            .file_name()
            .with_context(|| format!("invalid output directory {}", target.display()))?
            .to_string_lossy()
            .into_owned();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        if !parent.is_dir() {
            bail!("parent directory {} does not exist", parent.display());
        }
        let dir = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            force,
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    pub fn commit(mut self) -> Result<PathBuf> {
        if self.target.exists() && self.force {
            if self.target.is_dir() {
                fs::remove_dir_all(&self.target)?;
            } else {
                fs::remove_file(&self.target)?;
            }
        }
        fs::rename(&self.dir, &self.target)
            .with_context(|| format!("moving outputs to {}", self.target.display()))?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

/// `index,re,im,modulus,timescale`, with 1-based indices and timescales in
/// the units of `lag_time`. A unit-modulus eigenvalue has timescale `inf`.
pub fn eigenvalue_csv(values: &[c64], lag_time: f64) -> String {
    let mut out = String::from("index,re,im,modulus,timescale\n");
    for (i, l) in values.iter().enumerate() {
        let t = timescale(*l, lag_time);
        out.push_str(&format!("{},{},{},{},{}\n", i + 1, l.re, l.im, l.norm(), t));
    }
    out
}

/// `time_index,phi<k>_re,phi<k>_im,...` with one row per snapshot.
pub fn series_csv(indices: &[usize], series: &[Vec<c64>]) -> String {
    let mut out = String::from("time_index");
    for k in indices {
        out.push_str(&format!(",phi{k}_re,phi{k}_im"));
    }
    out.push('\n');
    let rows = series.first().map_or(0, Vec::len);
    for t in 0..rows {
        out.push_str(&t.to_string());
        for s in series {
            out.push_str(&format!(",{},{}", s[t].re, s[t].im));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staging_commits_or_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        {
            let s = Staging::new(&target, false).unwrap();
            s.write("a.txt", "x").unwrap();
        }
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);

        let s = Staging::new(&target, false).unwrap();
        s.write("a.txt", "x").unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read_to_string(target.join("a.txt")).unwrap(), "x");
        assert!(Staging::new(&target, false).is_err());

        let s = Staging::new(&target, true).unwrap();
        s.write("b.txt", "y").unwrap();
        s.commit().unwrap();
        assert!(!target.join("a.txt").exists());
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 1);
    }

    #[test]
    fn csv_tables() {
        let csv = eigenvalue_csv(&[c64::new(1.0, 0.0), c64::new(0.5, 0.0)], 2.0);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "1,1,0,1,inf");
        let t: f64 = lines[2].split(',').nth(4).unwrap().parse().unwrap();
        assert!((t - 2.0 / 2f64.ln()).abs() < 1e-12);

        let s = series_csv(&[2], &[vec![c64::new(0.5, -1.0)]]);
        assert_eq!(s, "time_index,phi2_re,phi2_im\n0,0.5,-1\n");
    }
}
