//! Output formatting: CSV files with a mandatory header row and numeric
//! fields at full round-trip precision (17 significant digits, scientific
//! notation); undefined values serialize as `NA`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => fmt_f64(v),
        None => "NA".to_string(),
    }
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<OutputDir> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> CliResult<PathBuf> {
        let path = self.path(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>, line: &str| {
            writeln!(out, "{line}")
                .map_err(|e| CliError::Data(format!("write {}: {e}", path.display())))
        };
        write(&mut out, header)?;
        for row in rows {
            write(&mut out, row)?;
        }
        out.flush()
            .map_err(|e| CliError::Data(format!("write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let path = self.path(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, value)
            .map_err(|e| CliError::Data(format!("serialize {}: {e}", path.display())))?;
        out.write_all(b"\n")
            .and_then(|()| out.flush())
            .map_err(|e| CliError::Data(format!("write {}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_precision_round_trip() {
        for v in [1.0 / 3.0, 0.1 + 0.2, 1e-300, -2.5, 135.00731] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "NA");
        assert_eq!(fmt_opt(None), "NA");
    }
}
