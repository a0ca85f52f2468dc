//! Instance files and their reference-solution sidecars.
//!
//! `DIR/<instance_id>.json` holds the instance, `DIR/<instance_id>.ref.json`
//! the optimum.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::instgen::{Generated, Instance, ReferenceSidecar};
use crate::solver::{solve_dp, ReferenceSolution};

pub const SIDECAR_SUFFIX: &str = ".ref.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid json in {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("sidecar {path} belongs to instance {found}, expected {expected}")]
    Mismatch { path: String, expected: String, found: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError {
    let path = path.display().to_string();
    move |source| StoreError::Io { path, source }
}

fn json(path: &Path) -> impl FnOnce(serde_json::Error) -> StoreError {
    let path = path.display().to_string();
    move |source| StoreError::Json { path, source }
}

pub fn instance_path(dir: &Path, instance_id: &str) -> PathBuf {
    dir.join(format!("{instance_id}.json"))
}

pub fn sidecar_path(instance_file: &Path) -> PathBuf {
    let name = instance_file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".json").unwrap_or(&name);
    instance_file.with_file_name(format!("{stem}{SIDECAR_SUFFIX}"))
}

/// Writes the instance and its sidecar; returns both paths.
pub fn write_generated(dir: &Path, g: &Generated) -> Result<(PathBuf, PathBuf), StoreError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let inst = instance_path(dir, &g.instance.instance_id);
    let side = sidecar_path(&inst);
    let body = serde_json::to_string_pretty(&g.instance).map_err(json(&inst))?;
    fs::write(&inst, body + "\n").map_err(io(&inst))?;
    let sidecar = ReferenceSidecar::new(&g.instance.instance_id, &g.reference);
    let body = serde_json::to_string_pretty(&sidecar).map_err(json(&side))?;
    fs::write(&side, body + "\n").map_err(io(&side))?;
    Ok((inst, side))
}

pub fn read_instance(path: &Path) -> Result<Instance, StoreError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(json(path))
}

/// Reads the sidecar next to `instance_file`, solving afresh when absent.
pub fn read_reference(instance_file: &Path, instance: &Instance) -> Result<ReferenceSolution, StoreError> {
    let side = sidecar_path(instance_file);
    if !side.exists() {
        return Ok(solve_dp(&instance.view()));
    }
    let text = fs::read_to_string(&side).map_err(io(&side))?;
    let sidecar: ReferenceSidecar = serde_json::from_str(&text).map_err(json(&side))?;
    if sidecar.instance_id != instance.instance_id {
        return Err(StoreError::Mismatch {
            path: side.display().to_string(),
            expected: instance.instance_id.clone(),
            found: sidecar.instance_id,
        });
    }
    Ok(sidecar.solution())
}

/// Instance files (sidecars excluded) under `dir`, sorted by name.
pub fn list_instance_files(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let p = entry.map_err(io(dir))?.path();
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if p.is_file() && name.ends_with(".json") && !name.ends_with(SIDECAR_SUFFIX) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{generate_seeded, DifficultyConfig};

    #[test]
    fn round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_seeded(&DifficultyConfig::easy(), 5).unwrap();
        let (inst, side) = write_generated(dir.path(), &g).unwrap();
        assert_eq!(side, dir.path().join("easy_5.ref.json"));
        let back = read_instance(&inst).unwrap();
        assert_eq!(back, g.instance);
        assert_eq!(read_reference(&inst, &back).unwrap(), g.reference);
        assert_eq!(list_instance_files(dir.path()).unwrap(), vec![inst]);
    }

    #[test]
    fn missing_sidecar_is_solved() {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_seeded(&DifficultyConfig::easy(), 6).unwrap();
        let (inst, side) = write_generated(dir.path(), &g).unwrap();
        fs::remove_file(side).unwrap();
        assert_eq!(read_reference(&inst, &g.instance).unwrap().total_value, g.reference.total_value);
    }

    #[test]
    fn mismatched_sidecar_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = generate_seeded(&DifficultyConfig::easy(), 7).unwrap();
        let b = generate_seeded(&DifficultyConfig::easy(), 8).unwrap();
        let (inst, side) = write_generated(dir.path(), &a).unwrap();
        let (_, other) = write_generated(dir.path(), &b).unwrap();
        fs::copy(other, side).unwrap();
        assert!(matches!(read_reference(&inst, &a.instance), Err(StoreError::Mismatch { .. })));
    }
}
