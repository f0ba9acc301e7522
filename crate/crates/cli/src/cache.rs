//! Content-addressed artifact cache keyed by configuration digests.

use sha2::{Digest, Sha256};
use std::cell::RefCell;
use std::fs;
use std::io;
use std::path::PathBuf;

/// Disk cache for mesh and model artifacts; `None` directory disables it.
pub struct Cache {
    dir: Option<PathBuf>,
    hits: RefCell<Vec<String>>,
}

/// Hex SHA-256 of the given text.
pub fn digest(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    format!("{:x}", h.finalize())
}

impl Cache {
    /// Cache under `dir`; created on first store.
    pub fn new(dir: Option<PathBuf>) -> Cache {
        Cache {
            dir,
            hits: RefCell::new(Vec::new()),
        }
    }

    pub fn disabled() -> Cache {
        Cache::new(None)
    }

    pub fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    fn path(&self, key: &str, ext: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.{ext}")))
    }

    /// Cached contents for `key`, if present.
    pub fn get(&self, key: &str, ext: &str) -> Option<String> {
        let p = self.path(key, ext)?;
        let text = fs::read_to_string(&p).ok()?;
        self.hits.borrow_mut().push(format!("{key}.{ext}"));
        Some(text)
    }

    /// Store contents under `key`; write goes through a temporary file so a
    /// concurrent reader never sees a torn entry.
    pub fn put(&self, key: &str, ext: &str, contents: &str) -> io::Result<()> {
        let Some(p) = self.path(key, ext) else {
            return Ok(());
        };
        let dir = p.parent().expect("cache path has a parent");
        fs::create_dir_all(dir)?;
        let tmp = p.with_extension(format!("{ext}.tmp{}", std::process::id()));
        fs::write(&tmp, contents)?;
        fs::rename(&tmp, &p)?;
        Ok(())
    }

    /// Keys served from disk so far.
    pub fn hits(&self) -> Vec<String> {
        self.hits.borrow().clone()
    }
}
