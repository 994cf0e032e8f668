//! `manifest.json`: what produced an output directory and a checksum of every
//! file in it.
//!
//! The manifest is rebuilt from the directory contents after each subcommand,
//! so it lists every file exactly once, including those of earlier
//! subcommands. It carries no timestamps; identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT: &str = "flatgrav-manifest v1";

/// Names starting with this prefix are scratch files and never listed.
const SCRATCH: &str = ".flatgrav-";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub subcommand: String,
    /// Archived copy of the configuration, relative to the output directory.
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Derived stream seeds by name.
    pub streams: BTreeMap<String, u64>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub versions: BTreeMap<String, String>,
    /// Latest run of each subcommand, sorted by name.
    pub runs: Vec<RunRecord>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> io::Result<(u64, String)> {
    let mut file = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let k = file.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
        total += k as u64;
    }
    Ok((total, hex::encode(h.finalize())))
}

/// Creates `dir` and proves it accepts a file, before any work is done.
pub fn ensure_writable(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(format!("{SCRATCH}probe"));
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)
}

/// Every regular file below `root` except the manifest and scratch files,
/// sorted by relative path.
pub fn list_files(root: &Path) -> io::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let path = entry.path();
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name.starts_with(SCRATCH) {
                continue;
            }
            let kind = entry.file_type()?;
            if kind.is_dir() {
                stack.push(path);
            } else if kind.is_file() {
                let rel = path.strip_prefix(root).expect("below root");
                let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                let rel = rel.join("/");
                if rel != MANIFEST {
                    out.push((rel, path));
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_manifest(root: &Path) -> io::Result<Manifest> {
    let text = fs::read_to_string(root.join(MANIFEST))?;
    serde_json::from_str(&text).map_err(io::Error::other)
}

/// Records `run`, replacing an earlier run of the same subcommand, rescans
/// `root` and replaces the manifest atomically.
pub fn update_manifest(root: &Path, run: RunRecord) -> io::Result<Manifest> {
    let mut runs = match read_manifest(root) {
        Ok(m) => m.runs,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => {
            log::warn!("ignoring unreadable {MANIFEST}: {e}");
            Vec::new()
        }
    };
    runs.retain(|r| r.subcommand != run.subcommand);
    runs.push(run);
    runs.sort_by(|a, b| a.subcommand.cmp(&b.subcommand));
    let files = list_files(root)?
        .into_iter()
        .map(|(rel, path)| {
            let (bytes, sha256) = sha256_file(&path)?;
            Ok(FileEntry { path: rel, bytes, sha256 })
        })
        .collect::<io::Result<Vec<_>>>()?;
    let manifest = Manifest {
        format: FORMAT.into(),
        versions: BTreeMap::from([
            ("flatgrav-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("flatgrav-core".to_string(), flatgrav_core::VERSION.to_string()),
        ]),
        runs,
        files,
    };
    let tmp = root.join(format!("{SCRATCH}{MANIFEST}"));
    {
        let mut out = fs::File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut out, &manifest).map_err(io::Error::other)?;
        out.write_all(b"\n")?;
        out.sync_all()?;
    }
    fs::rename(&tmp, root.join(MANIFEST))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(name: &str) -> RunRecord {
        RunRecord {
            subcommand: name.into(),
            config: format!("configs/{name}.toml"),
            config_sha256: sha256_hex(name.as_bytes()),
            seed: 1,
            streams: BTreeMap::new(),
            exit_code: 0,
        }
    }

    #[test]
    fn lists_every_file_once_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("a/b")).unwrap();
        fs::write(dir.path().join("a/b/x.csv"), "1\n").unwrap();
        fs::write(dir.path().join("top.json"), "{}").unwrap();
        let first = update_manifest(dir.path(), run("solve")).unwrap();
        let bytes = fs::read(dir.path().join(MANIFEST)).unwrap();
        let second = update_manifest(dir.path(), run("solve")).unwrap();
        assert_eq!(first, second);
        assert_eq!(bytes, fs::read(dir.path().join(MANIFEST)).unwrap());
        let paths: Vec<&str> = first.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, vec!["a/b/x.csv", "top.json"]);
        assert_eq!(first.files[0].sha256, sha256_hex(b"1\n"));
    }

    #[test]
    fn runs_accumulate_by_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        update_manifest(dir.path(), run("solve")).unwrap();
        update_manifest(dir.path(), run("lift")).unwrap();
        let m = update_manifest(dir.path(), run("solve")).unwrap();
        let names: Vec<&str> = m.runs.iter().map(|r| r.subcommand.as_str()).collect();
        assert_eq!(names, vec!["lift", "solve"]);
    }

    #[test]
    fn unwritable_directory_fails_early() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        assert!(ensure_writable(&blocker.join("out")).is_err());
        assert!(update_manifest(&blocker, run("solve")).is_err());
        assert!(!blocker.join(MANIFEST).exists());
    }
}
