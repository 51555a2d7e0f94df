//! On-disk store: one JSON document per session and per job.

use std::fs;
use std::path::{Path, PathBuf};

use boom_core::io::{read_json, to_json};
use boom_core::pes::PesSession;
use boom_core::report::McmcConfig;
use boom_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::job::Job;

/// A session together with the sampler settings it was created with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDoc {
    pub session: PesSession,
    pub mcmc: McmcConfig,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Ids are generated server-side; anything else never touches the filesystem.
fn safe_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["sessions", "jobs"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, kind: &str, id: &str) -> Option<PathBuf> {
        safe_id(id).then(|| self.root.join(kind).join(format!("{id}.json")))
    }

    fn write<T: Serialize>(&self, kind: &str, id: &str, value: &T) -> Result<()> {
        let path = self
            .path(kind, id)
            .ok_or_else(|| Error::Session(format!("invalid id {id:?}")))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, to_json(value)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn read<T: serde::de::DeserializeOwned>(&self, kind: &str, id: &str) -> Result<Option<T>> {
        match self.path(kind, id) {
            Some(path) if path.exists() => read_json(&path).map(Some),
            _ => Ok(None),
        }
    }

    pub fn save_session(&self, id: &str, doc: &SessionDoc) -> Result<()> {
        self.write("sessions", id, doc)
    }

    pub fn load_session(&self, id: &str) -> Result<Option<SessionDoc>> {
        self.read("sessions", id)
    }

    pub fn save_job(&self, job: &Job) -> Result<()> {
        self.write("jobs", &job.id, job)
    }

    pub fn load_job(&self, id: &str) -> Result<Option<Job>> {
        self.read("jobs", id)
    }

    /// All persisted jobs, in no particular order.
    pub fn jobs(&self) -> Result<Vec<Job>> {
        let dir = self.root.join("jobs");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                out.push(read_json(&path)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_path_like_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.load_session("../etc/passwd").unwrap().is_none());
        assert!(store.load_job("").unwrap().is_none());
        assert!(store.load_session("a/b").unwrap().is_none());
    }
}
