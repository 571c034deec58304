use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts { dir, files: Vec::new() })
    }

    pub fn push(&mut self, path: PathBuf) {
        self.files.push(path);
    }
}

/// One header row, then rows of floats with 17 significant digits.
pub fn write_csv(dir: &Path, file: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                text.push(',');
            }
            write!(text, "{v:.16e}").expect("writing to a String");
        }
        text.push('\n');
    }
    let path = dir.join(file);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn write_json(dir: &Path, file: &str, value: &impl Serialize) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let path = dir.join(file);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_doubles() {
        let dir = tempfile::tempdir().unwrap();
        let values = [0.1 + 0.2, -1.0 / 3.0, 1e-300, 6.02214076e23];
        let path = write_csv(dir.path(), "a.csv", &["v"], &values.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let parsed: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        assert_eq!(parsed, values);
    }
}
