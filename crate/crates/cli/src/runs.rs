//! Output root, run directories and lookup of earlier runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DEFAULT_OUT: &str = "runs";
pub const CONFIG_FILE: &str = "config.json";

/// Resolves the output root. An explicit `--out` (or `PILNM_OUT`) must
/// already exist; the default `./runs` is created on demand.
pub fn output_root(out: Option<&Path>) -> Result<PathBuf, CliError> {
    match out {
        Some(dir) if dir.is_dir() => Ok(dir.to_path_buf()),
        Some(dir) => Err(CliError::Config(format!(
            "output directory {} does not exist (set by --out or PILNM_OUT)",
            dir.display()
        ))),
        None => {
            let dir = PathBuf::from(DEFAULT_OUT);
            fs::create_dir_all(&dir)
                .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
            Ok(dir)
        }
    }
}

/// Creates a fresh run directory under `root`: `name` if given, else
/// `<prefix>-<local timestamp>`, with a numeric suffix on collisions.
pub fn create_run_dir(root: &Path, prefix: &str, name: Option<&str>) -> Result<PathBuf, CliError> {
    if let Some(name) = name {
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(CliError::Config(format!("--run-name '{name}' must be a plain directory name")));
        }
        let dir = root.join(name);
        if dir.exists() {
            return Err(CliError::Config(format!("run directory {} already exists", dir.display())));
        }
        return make(dir);
    }
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{prefix}-{stamp}");
    let mut dir = root.join(&base);
    let mut n = 2;
    while dir.exists() {
        dir = root.join(format!("{base}-{n}"));
        n += 1;
    }
    make(dir)
}

fn make(dir: PathBuf) -> Result<PathBuf, CliError> {
    fs::create_dir(&dir).map_err(|e| CliError::Config(format!("cannot create run directory {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Most recently written run directory under `root` containing `marker`
/// and accepted by `filter`.
pub fn latest_run(root: &Path, marker: &str, filter: impl Fn(&Path) -> bool) -> Option<PathBuf> {
    let entries = fs::read_dir(root).ok()?;
    let mut best: Option<(SystemTime, PathBuf)> = None;
    for entry in entries.flatten() {
        let dir = entry.path();
        let Ok(meta) = fs::metadata(dir.join(marker)) else {
            continue;
        };
        let Ok(modified) = meta.modified() else {
            continue;
        };
        if !filter(&dir) {
            continue;
        }
        // ties go to the lexicographically later name, which for timestamped
        // directories is the later run
        if best.as_ref().is_none_or(|(t, p)| (modified, &dir) > (*t, p)) {
            best = Some((modified, dir));
        }
    }
    best.map(|(_, p)| p)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// SHA-256 over a dataset directory: every file's relative path and
/// contents, in sorted path order.
pub fn dataset_digest(dir: &Path) -> Result<String, CliError> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        if rel == Path::new(CONFIG_FILE) {
            continue;
        }
        let bytes = fs::read(dir.join(&rel))
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", rel.display())))?;
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0u8]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Runtime(format!("cannot list {}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::Runtime(e.to_string()))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_path_buf());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_missing_root_is_a_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let err = output_root(Some(&tmp.path().join("nope"))).unwrap_err();
        assert!(matches!(err, CliError::Config(ref m) if m.contains("--out")));
    }

    #[test]
    fn run_names_do_not_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let a = create_run_dir(tmp.path(), "generate", None).unwrap();
        let b = create_run_dir(tmp.path(), "generate", None).unwrap();
        assert_ne!(a, b);
        assert!(create_run_dir(tmp.path(), "x", Some("fixed")).is_ok());
        assert!(create_run_dir(tmp.path(), "x", Some("fixed")).is_err());
        assert!(create_run_dir(tmp.path(), "x", Some("../up")).is_err());
    }

    #[test]
    fn latest_run_respects_marker_and_filter() {
        let tmp = tempfile::tempdir().unwrap();
        for name in ["a", "b", "c"] {
            fs::create_dir(tmp.path().join(name)).unwrap();
        }
        fs::write(tmp.path().join("a/m"), "").unwrap();
        fs::write(tmp.path().join("b/m"), "").unwrap();
        let found = latest_run(tmp.path(), "m", |_| true).unwrap();
        assert!(found.ends_with("a") || found.ends_with("b"));
        assert!(latest_run(tmp.path(), "m", |p| p.ends_with("a")).unwrap().ends_with("a"));
        assert!(latest_run(tmp.path(), "zzz", |_| true).is_none());
    }

    #[test]
    fn digest_ignores_config_and_tracks_content() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir(tmp.path().join("sub")).unwrap();
        fs::write(tmp.path().join("sub/x.csv"), "1,2").unwrap();
        let d0 = dataset_digest(tmp.path()).unwrap();
        fs::write(tmp.path().join(CONFIG_FILE), "{}").unwrap();
        assert_eq!(dataset_digest(tmp.path()).unwrap(), d0);
        fs::write(tmp.path().join("sub/x.csv"), "1,3").unwrap();
        assert_ne!(dataset_digest(tmp.path()).unwrap(), d0);
        assert_eq!(d0.len(), 64);
    }
}
