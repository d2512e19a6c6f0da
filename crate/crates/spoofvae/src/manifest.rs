//! Run manifests: settings plus a SHA-256 for every output file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsx;

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fsx::read_bytes(path)?))
}

/// Files under `root`, relative and sorted, skipping `exclude` subtrees.
pub fn list_files(root: &Path, exclude: &[PathBuf]) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, root: &Path, exclude: &[PathBuf], out: &mut Vec<PathBuf>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if exclude.iter().any(|x| path.starts_with(x)) {
                continue;
            }
            let ty = entry.file_type().map_err(|e| Error::io(&path, e))?;
            if ty.is_dir() {
                walk(&path, root, exclude, out)?;
            } else if ty.is_file() {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, exclude, &mut out)?;
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    /// `key = value` settings lines, in insertion order.
    pub settings: Vec<(String, String)>,
    /// `(sha256, relative path)` per output.
    pub files: Vec<(String, String)>,
}

impl Manifest {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.settings.push((key.into(), value.to_string()));
    }

    /// Hash every file under `root` except the manifest itself and
    /// `exclude`.
    pub fn collect(&mut self, root: &Path, exclude: &[PathBuf]) -> Result<()> {
        let mut skip = exclude.to_vec();
        skip.push(root.join(MANIFEST_FILE));
        for rel in list_files(root, &skip)? {
            let name = rel.to_string_lossy().replace('\\', "/");
            if name.ends_with(".partial") || name == crate::lock::LOCK_FILE {
                continue;
            }
            self.files.push((hash_file(&root.join(&rel))?, name));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# spoofvae run manifest v1\n");
        for (k, v) in &self.settings {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("# sha256 path\n");
        for (h, p) in &self.files {
            let _ = writeln!(out, "{h} {p}");
        }
        out
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        fsx::write_bytes(&root.join(MANIFEST_FILE), self.render().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn lists_every_file_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir_all(root.join("b/c")).unwrap();
        std::fs::create_dir_all(root.join("cache")).unwrap();
        std::fs::write(root.join("b/c/x.txt"), "x").unwrap();
        std::fs::write(root.join("a.txt"), "a").unwrap();
        std::fs::write(root.join("cache/big"), "skip").unwrap();
        let mut m = Manifest::default();
        m.set("seed", 3);
        m.collect(root, &[root.join("cache")]).unwrap();
        m.write(root).unwrap();
        let text = std::fs::read_to_string(root.join(MANIFEST_FILE)).unwrap();
        assert!(text.contains("seed = 3"));
        let files: Vec<&str> = m.files.iter().map(|(_, p)| p.as_str()).collect();
        assert_eq!(files, ["a.txt", "b/c/x.txt"]);
        assert_eq!(m.files[0].0, sha256_hex(b"a"));
    }
}
