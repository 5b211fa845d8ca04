//! Treebank ingestion: CoNLL-U parsing and cached fetching.

mod conllu;
mod fetch;

pub use conllu::{
    format_feats, parse_conllu, Features, MultiWordSpan, Sentence, Treebank, Word,
};
pub use fetch::{
    cache_path, fetch_treebank, fetch_treebank_with, manifest_path, DefaultTransport,
    FetchManifest, Transport,
};

use std::path::Path;

use crate::error::{Error, Result};

/// Read and parse a CoNLL-U file; the treebank is named after the file stem.
pub fn read_treebank(path: &Path) -> Result<Treebank> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Treebank::parse(name, &text)
}
