//! Cached treebank download with an FNV-1a integrity manifest.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{fnv1a64, hex64};

/// Sidecar record written next to every fetched file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchManifest {
    pub url: String,
    /// Hex-encoded 64-bit FNV-1a over the file bytes.
    pub fnv1a64: String,
    pub bytes: u64,
    /// Seconds since the Unix epoch.
    pub retrieved_at: u64,
}

/// Byte source for [`fetch_treebank_with`].
pub trait Transport {
    fn get(&self, url: &str) -> std::result::Result<Vec<u8>, String>;
}

/// Reads `file://` URLs and bare paths from disk, everything else over HTTP(S).
#[derive(Debug, Default, Clone, Copy)]
pub struct DefaultTransport;

impl Transport for DefaultTransport {
    fn get(&self, url: &str) -> std::result::Result<Vec<u8>, String> {
        if url.starts_with("http://") || url.starts_with("https://") {
            let mut body = ureq::get(url).call().map_err(|e| e.to_string())?.into_body();
            let mut buf = Vec::new();
            body.as_reader()
                .read_to_end(&mut buf)
                .map_err(|e| e.to_string())?;
            return Ok(buf);
        }
        let path = url.strip_prefix("file://").unwrap_or(url);
        fs::read(path).map_err(|e| e.to_string())
    }
}

pub fn fetch_treebank(url: &str, cache_dir: &Path) -> Result<PathBuf> {
    fetch_treebank_with(&DefaultTransport, url, cache_dir)
}

/// Cache location for `url` inside `cache_dir`.
pub fn cache_path(url: &str, cache_dir: &Path) -> PathBuf {
    let base = url
        .rsplit('/')
        .find(|s| !s.is_empty())
        .unwrap_or("treebank.conllu");
    let base: String = base
        .chars()
        .map(|c| if c.is_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    cache_dir.join(format!("{}-{}", hex64(fnv1a64(url.as_bytes())), base))
}

pub fn manifest_path(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

/// Return a local copy of `url`, downloading it only on a cache miss.
///
/// A cached file whose bytes no longer match its manifest is an integrity
/// error, never a silent re-download.
pub fn fetch_treebank_with(
    transport: &dyn Transport,
    url: &str,
    cache_dir: &Path,
) -> Result<PathBuf> {
    let target = cache_path(url, cache_dir);
    let lock = path_lock(&target);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

    let manifest_file = manifest_path(&target);
    if target.exists() && manifest_file.exists() {
        verify_cached(&target, &manifest_file)?;
        return Ok(target);
    }

    let bytes = transport.get(url).map_err(|reason| Error::Fetch {
        url: url.to_string(),
        reason,
    })?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let tmp = target.with_extension("partial");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;

    let manifest = FetchManifest {
        url: url.to_string(),
        fnv1a64: hex64(fnv1a64(&bytes)),
        bytes: bytes.len() as u64,
        retrieved_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_file, json + "\n").map_err(|e| Error::io(&manifest_file, e))?;
    log::info!("fetched {url} -> {}", target.display());
    Ok(target)
}

fn verify_cached(target: &Path, manifest_file: &Path) -> Result<()> {
    let raw = fs::read_to_string(manifest_file).map_err(|e| Error::io(manifest_file, e))?;
    let manifest: FetchManifest = serde_json::from_str(&raw)?;
    let bytes = fs::read(target).map_err(|e| Error::io(target, e))?;
    let found = hex64(fnv1a64(&bytes));
    if found != manifest.fnv1a64 {
        return Err(Error::Integrity {
            path: target.to_path_buf(),
            expected: manifest.fnv1a64,
            found,
        });
    }
    Ok(())
}

fn path_lock(path: &Path) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    map.entry(path.to_path_buf()).or_default().clone()
}
