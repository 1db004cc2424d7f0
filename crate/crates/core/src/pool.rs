//! On-disk pattern and seed pools.
//!
//! Patterns live in `<dir>/<canonical hash>.json`; seeds in
//! `<dir>/seed-<index>.cg.json`. Both load in file-name order.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::extract::Pattern;
use crate::graph::{natural_cmp, validate, Graph};
use crate::serial;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {cause}")]
    Corrupt { path: PathBuf, cause: String },
    #[error("{0} already exists (pass --force to overwrite)")]
    Exists(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PoolError + '_ {
    move |source| PoolError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn list(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, PoolError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter(|n| n.ends_with(suffix))
        .collect();
    names.sort_by(|a, b| natural_cmp(a, b));
    Ok(names.into_iter().map(|n| dir.join(n)).collect())
}

fn write_new(path: &Path, text: &str, force: bool) -> Result<(), PoolError> {
    if !force && path.exists() {
        return Err(PoolError::Exists(path.to_path_buf()));
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_patterns(dir: &Path, patterns: &[Pattern], force: bool) -> Result<(), PoolError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for p in patterns {
        let path = dir.join(format!("{}.json", p.canonical_hash()));
        write_new(&path, &p.to_json(), force)?;
    }
    Ok(())
}

/// Loads every pattern in `dir`, checking that each file name matches its
/// content hash.
pub fn read_patterns(dir: &Path) -> Result<Vec<Pattern>, PoolError> {
    list(dir, ".json")?
        .into_iter()
        .filter(|p| is_pattern_file(p))
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let corrupt = |cause: String| PoolError::Corrupt {
                path: path.clone(),
                cause,
            };
            let p = Pattern::from_json(&text).map_err(|e| corrupt(e.to_string()))?;
            let stem = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".json"))
                .unwrap_or_default();
            if p.canonical_hash() != stem {
                return Err(corrupt("content hash does not match file name".into()));
            }
            Ok(p)
        })
        .collect()
}

/// Pattern files are named by a 64-digit hex hash; anything else in the
/// directory (such as an extraction report) is ignored.
fn is_pattern_file(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_suffix(".json"))
        .is_some_and(|stem| stem.len() == 64 && stem.bytes().all(|b| b.is_ascii_hexdigit()))
}

pub fn seed_file_name(index: usize) -> String {
    format!("seed-{index:05}.cg.json")
}

pub fn write_seeds(dir: &Path, seeds: &[Graph], force: bool) -> Result<(), PoolError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, g) in seeds.iter().enumerate() {
        write_new(&dir.join(seed_file_name(i)), &serial::serialize(g), force)?;
    }
    Ok(())
}

pub fn read_seeds(dir: &Path) -> Result<Vec<Graph>, PoolError> {
    list(dir, ".cg.json")?
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let corrupt = |cause: String| PoolError::Corrupt {
                path: path.clone(),
                cause,
            };
            let g = serial::parse(&text).map_err(|e| corrupt(e.to_string()))?;
            if let Some(v) = validate(&g).first() {
                return Err(corrupt(format!("invalid seed: {v}")));
            }
            Ok(g)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{collect_pairs, generate_corpus};
    use crate::extract::{extract_all, ExtractionMode};
    use crate::seedgen::gen_seed_pool;

    #[test]
    fn pools_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = collect_pairs(&generate_corpus(5)).unwrap();
        let patterns = extract_all(&pairs, ExtractionMode::Adaptive);
        write_patterns(&dir.path().join("p"), &patterns, false).unwrap();
        let mut back = read_patterns(&dir.path().join("p")).unwrap();
        let mut want = patterns.clone();
        back.sort_by_key(|p| p.canonical_hash());
        want.sort_by_key(|p| p.canonical_hash());
        assert_eq!(back, want);
        assert!(matches!(
            write_patterns(&dir.path().join("p"), &patterns, false),
            Err(PoolError::Exists(_))
        ));

        let seeds = gen_seed_pool(3, 12);
        write_seeds(&dir.path().join("s"), &seeds, false).unwrap();
        assert_eq!(read_seeds(&dir.path().join("s")).unwrap(), seeds);
    }
}
