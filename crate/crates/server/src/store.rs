//! File-backed, append-only persistence for sizing runs and calibrated
//! coefficient profiles.
//!
//! Layout under the data directory:
//!
//! ```text
//! runs/<run_id>.json       one RunRecord per file
//! profiles/<name>.json     one ModelCoefficients per file
//! tmp/                     staging area for atomic commits
//! ```
//!
//! A commit writes the document to `tmp/`, syncs it, then hard-links it into
//! place. The link fails if the target exists, so a record can never be
//! overwritten and a reader never sees a partial file.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sizer_core::{ModelCoefficients, SizingRequest, SizingResult};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0} already exists")]
    Exists(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt record {0}: {1}")]
    Corrupt(String, serde_json::Error),
}

/// One persisted sizing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub request: SizingRequest,
    pub result: SizingResult,
    pub created_at: DateTime<Utc>,
}

/// Time-ordered run identifier: UTC timestamp to the microsecond plus a
/// random suffix, e.g. `20261016T093015123456Z-8f3a9c21`.
pub fn new_run_id(now: DateTime<Utc>) -> String {
    let suffix: u32 = rand::thread_rng().gen();
    format!("{}-{suffix:08x}", now.format("%Y%m%dT%H%M%S%6fZ"))
}

/// Store keys are restricted to characters that are safe as file names.
pub fn is_valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.len() <= sizer_core::MAX_IDENTIFIER_LEN
        && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

struct Dirs {
    runs: PathBuf,
    profiles: PathBuf,
    tmp: PathBuf,
}

impl Dirs {
    fn create(root: &Path) -> io::Result<Self> {
        let dirs = Self { runs: root.join("runs"), profiles: root.join("profiles"), tmp: root.join("tmp") };
        for d in [&dirs.runs, &dirs.profiles, &dirs.tmp] {
            fs::create_dir_all(d)?;
        }
        Ok(dirs)
    }
}

fn commit(tmp_dir: &Path, target: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("record").to_string();
    let staged = tmp_dir.join(format!("{name}.{:016x}.tmp", rand::thread_rng().gen::<u64>()));
    {
        let mut f = File::create(&staged)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    let linked = fs::hard_link(&staged, target);
    let _ = fs::remove_file(&staged);
    match linked {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Exists(name)),
        Err(e) => Err(e.into()),
    }
}

pub struct RunStore {
    dirs: Dirs,
    commit_lock: Mutex<()>,
}

impl RunStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        Ok(Self { dirs: Dirs::create(root.as_ref())?, commit_lock: Mutex::new(()) })
    }

    fn path(&self, run_id: &str) -> PathBuf {
        self.dirs.runs.join(format!("{run_id}.json"))
    }

    /// Writes `record` once; a second write of the same id fails.
    pub fn put(&self, record: &RunRecord) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(record).map_err(|e| StoreError::Corrupt(record.run_id.clone(), e))?;
        let _guard = self.commit_lock.lock().unwrap_or_else(|p| p.into_inner());
        commit(&self.dirs.tmp, &self.path(&record.run_id), &bytes)
    }

    /// Stored bytes of a run, exactly as committed.
    pub fn get_raw(&self, run_id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        if !is_valid_key(run_id) {
            return Ok(None);
        }
        match fs::read(self.path(run_id)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn get(&self, run_id: &str) -> Result<Option<RunRecord>, StoreError> {
        self.get_raw(run_id)?
            .map(|bytes| serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(run_id.to_string(), e)))
            .transpose()
    }
}

/// Named coefficient sets produced by calibration. Loaded at open; writes
/// go to disk first and then into the in-memory map.
pub struct ProfileRegistry {
    dirs: Dirs,
    profiles: RwLock<HashMap<String, ModelCoefficients>>,
}

impl ProfileRegistry {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dirs = Dirs::create(root.as_ref())?;
        let mut profiles = HashMap::new();
        for entry in fs::read_dir(&dirs.profiles)? {
            let path = entry?.path();
            let Some(name) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else { continue };
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bytes = fs::read(&path)?;
            let coeffs = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(name.clone(), e))?;
            profiles.insert(name, coeffs);
        }
        Ok(Self { dirs, profiles: RwLock::new(profiles) })
    }

    pub fn get(&self, name: &str) -> Option<ModelCoefficients> {
        self.profiles.read().unwrap_or_else(|p| p.into_inner()).get(name).cloned()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.profiles.read().unwrap_or_else(|p| p.into_inner()).contains_key(name)
    }

    pub fn insert(&self, name: &str, coeffs: &ModelCoefficients) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(coeffs).map_err(|e| StoreError::Corrupt(name.to_string(), e))?;
        let mut profiles = self.profiles.write().unwrap_or_else(|p| p.into_inner());
        if profiles.contains_key(name) {
            return Err(StoreError::Exists(name.to_string()));
        }
        commit(&self.dirs.tmp, &self.dirs.profiles.join(format!("{name}.json")), &bytes)?;
        profiles.insert(name.to_string(), coeffs.clone());
        Ok(())
    }
}
