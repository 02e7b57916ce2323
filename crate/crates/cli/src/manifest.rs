//! Content hashes of every artifact written under an experiment directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Relative path (forward slashes) to lowercase hex SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Regular files under `path` (or `path` itself), sorted.
pub fn files_under(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    if !path.is_dir() {
        return Ok(out);
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(path, err)))
        .collect::<CliResult<_>>()?;
    entries.sort();
    for e in entries {
        out.extend(files_under(&e)?);
    }
    Ok(out)
}

fn key(root: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(root).unwrap_or(file);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

impl Manifest {
    pub fn load(root: &Path) -> CliResult<Manifest> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Mismatch(format!("unreadable manifest {}: {e}", path.display())))
    }

    pub fn save(&self, root: &Path) -> CliResult<()> {
        let path = root.join(MANIFEST_FILE);
        let text = toml::to_string(self).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// Hashes every file under each relative path and stores the result,
    /// dropping stale entries below those paths.
    pub fn record(root: &Path, rel: &[&str]) -> CliResult<()> {
        let mut m = Manifest::load(root)?;
        for r in rel {
            let prefix = r.trim_end_matches('/');
            m.artifacts
                .retain(|k, _| k != prefix && !k.starts_with(&format!("{prefix}/")));
            for f in files_under(&root.join(r))? {
                m.artifacts.insert(key(root, &f), sha256_file(&f)?);
            }
        }
        m.save(root)
    }

    /// Checks every recorded file below each relative path against its hash
    /// and rejects files that were never recorded.
    pub fn verify(root: &Path, rel: &[&str]) -> CliResult<()> {
        let m = Manifest::load(root)?;
        for r in rel {
            let prefix = r.trim_end_matches('/');
            let files = files_under(&root.join(r))?;
            if files.is_empty() {
                return Err(CliError::Missing(format!("{}", root.join(r).display())));
            }
            for f in &files {
                let k = key(root, f);
                match m.artifacts.get(&k) {
                    None => return Err(CliError::Mismatch(format!("{k} is not recorded in the manifest"))),
                    Some(h) if *h != sha256_file(f)? => {
                        return Err(CliError::Mismatch(format!("{k} changed since it was recorded")))
                    }
                    Some(_) => {}
                }
            }
            for k in m.artifacts.keys().filter(|k| *k == prefix || k.starts_with(&format!("{prefix}/"))) {
                if !root.join(k).exists() {
                    return Err(CliError::Mismatch(format!("{k} is recorded but missing")));
                }
            }
        }
        Ok(())
    }
}
