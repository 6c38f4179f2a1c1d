use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    /// Hash of the stage inputs (settings plus upstream content hash).
    pub key: String,
    /// Hash of the artifact bytes.
    pub hash: String,
}

/// A directory of stage artifacts indexed by `manifest.json`.
#[derive(Debug)]
pub struct ArtifactStore {
    dir: PathBuf,
    manifest: BTreeMap<String, ManifestEntry>,
    /// Stages whose artifact came from the cache in this run.
    pub reused: Vec<String>,
}

impl ArtifactStore {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        let manifest = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
            Err(_) => BTreeMap::new(),
        };
        Ok(ArtifactStore {
            dir: dir.to_path_buf(),
            manifest,
            reused: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry(&self, stage: &str) -> Option<&ManifestEntry> {
        self.manifest.get(stage)
    }

    /// Cached bytes of `stage` when its key matches and the file is intact.
    pub fn cached(&mut self, stage: &str, key: &str) -> Option<Vec<u8>> {
        let e = self.manifest.get(stage)?;
        if e.key != key {
            return None;
        }
        let bytes = std::fs::read(self.dir.join(&e.file)).ok()?;
        if sha256_hex(&bytes) != e.hash {
            return None;
        }
        self.reused.push(stage.to_string());
        Some(bytes)
    }

    /// Writes an artifact and records it; returns its content hash.
    pub fn put(&mut self, stage: &str, file: &str, key: &str, bytes: &[u8]) -> Result<String> {
        std::fs::write(self.dir.join(file), bytes)?;
        let hash = sha256_hex(bytes);
        self.manifest.insert(
            stage.to_string(),
            ManifestEntry {
                file: file.to_string(),
                key: key.to_string(),
                hash: hash.clone(),
            },
        );
        self.flush()?;
        Ok(hash)
    }

    /// Writes a plain output file that takes no part in caching.
    pub fn write_extra(&self, file: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(file), bytes)?;
        Ok(())
    }

    fn flush(&self) -> Result<()> {
        let text = serde_json::to_vec_pretty(&self.manifest)?;
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

/// Stage key from a serializable settings value and the upstream hash.
pub fn stage_key<T: Serialize>(stage: &str, settings: &T, upstream: &str) -> Result<String> {
    let mut bytes = stage.as_bytes().to_vec();
    bytes.push(0);
    bytes.extend(serde_json::to_vec(settings)?);
    bytes.push(0);
    bytes.extend(upstream.as_bytes());
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip_and_invalidation() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ArtifactStore::open(dir.path()).unwrap();
        let key = stage_key("s", &42, "").unwrap();
        assert!(store.cached("s", &key).is_none());
        store.put("s", "s.txt", &key, b"hello").unwrap();
        let mut again = ArtifactStore::open(dir.path()).unwrap();
        assert_eq!(again.cached("s", &key).unwrap(), b"hello");
        assert!(again.cached("s", &stage_key("s", &43, "").unwrap()).is_none());
        std::fs::write(dir.path().join("s.txt"), b"tampered").unwrap();
        assert!(again.cached("s", &key).is_none());
    }
}
