use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WORLD_FILE: &str = "world.json";
pub const DOMAIN_TRAIN_FILE: &str = "domain_train.json";
/// Second, independent rendering of the training conditions; training
/// episodes observe this one while matching against the map.
pub const DOMAIN_TRAIN_QUERY_FILE: &str = "domain_train_query.json";
pub const DOMAIN_TEST_FILE: &str = "domain_test.json";
pub const CODEBOOK_FILE: &str = "codebook.json";
pub const INDEX_FILE: &str = "index.sbwi";
pub const TABLE_TRAIN_FILE: &str = "table_train.sblt";
pub const TABLE_TEST_FILE: &str = "table_test.sblt";
pub const CONSTANTS_FILE: &str = "constants.json";
pub const PLANNER_FILE: &str = "q.json";
pub const CURVE_FILE: &str = "training_curve.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const PLOT_FILE: &str = "report.svg";

/// Artifacts derived from the test domain.
pub const TEST_DOMAIN_FILES: [&str; 2] = [DOMAIN_TEST_FILE, TABLE_TEST_FILE];

pub fn pair_dir(pair_id: &str) -> PathBuf {
    PathBuf::from(format!("pair-{pair_id}"))
}

pub fn is_test_domain_artifact(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| TEST_DOMAIN_FILES.contains(&n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub kind: AccessKind,
    /// Relative to the store root.
    pub path: PathBuf,
}

/// File access rooted at an output directory. Every read and write is
/// recorded so that stage boundaries can be audited.
#[derive(Debug)]
pub struct ArtifactStore {
    root: PathBuf,
    log: Mutex<Vec<Access>>,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &Path) -> bool {
        self.path(rel).is_file()
    }

    fn record(&self, kind: AccessKind, rel: &Path) {
        self.log
            .lock()
            .expect("access log poisoned")
            .push(Access {
                kind,
                path: rel.to_path_buf(),
            });
    }

    pub fn accesses(&self) -> Vec<Access> {
        self.log.lock().expect("access log poisoned").clone()
    }

    /// Read an artifact produced by `stage`; absence is a named error.
    pub fn read(&self, rel: &Path, stage: &'static str) -> Result<Vec<u8>> {
        self.record(AccessKind::Read, rel);
        let full = self.path(rel);
        match std::fs::read(&full) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(Error::MissingArtifact { path: full, stage })
            }
            Err(e) => Err(Error::io(full, e)),
        }
    }

    pub fn read_string(&self, rel: &Path, stage: &'static str) -> Result<String> {
        let bytes = self.read(rel, stage)?;
        String::from_utf8(bytes).map_err(|_| {
            crate::error::FormatError::invalid("artifact", format!("{} is not UTF-8", rel.display()))
                .into()
        })
    }

    pub fn write(&self, rel: &Path, bytes: &[u8]) -> Result<()> {
        self.record(AccessKind::Write, rel);
        let full = self.path(rel);
        if let Some(dir) = full.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&full, bytes).map_err(|e| Error::io(full, e))
    }

    /// Log lines `read <path>` / `write <path>` in access order.
    pub fn access_log_text(&self) -> String {
        let mut out = String::new();
        for a in self.accesses() {
            let kind = match a.kind {
                AccessKind::Read => "read",
                AccessKind::Write => "write",
            };
            out.push_str(&format!("{kind} {}\n", a.path.display()));
        }
        out
    }
}
