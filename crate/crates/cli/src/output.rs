//! Output directory: CSV tables, JSON summaries and text files, with a record of what was written.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
    }
}

/// Table cell formatting: shortest round-trip decimal, with an exponent for very small or large floats.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        let a = self.abs();
        if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
            format!("{self:e}")
        } else {
            self.to_string()
        }
    }
}

macro_rules! plain_cells {
    ($($t:ty),*) => { $(impl Cell for $t { fn cell(&self) -> String { self.to_string() } })* };
}
plain_cells!(u8, u64, i64, usize, bool, str, String);

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

pub fn cell<T: Cell>(v: T) -> String {
    v.cell()
}

#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$($crate::output::cell($v)),*] };
}
