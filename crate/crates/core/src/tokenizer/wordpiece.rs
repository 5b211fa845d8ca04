//! Greedy longest-match-first subword segmentation.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use indexmap::IndexSet;
use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const CONTINUATION: &str = "##";
pub const DEFAULT_UNK: &str = "[UNK]";
/// Words longer than this many characters map straight to the unknown token.
pub const MAX_INPUT_CHARS_PER_WORD: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub name: String,
    entries: IndexSet<String>,
    unk_token: String,
    /// Apply NFC before segmentation.
    pub nfc: bool,
    max_piece_chars: usize,
}

impl Vocabulary {
    pub fn new<I, S>(name: impl Into<String>, entries: I, unk_token: &str) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = IndexSet::new();
        for e in entries {
            let e = e.into();
            if e.is_empty() {
                return Err(Error::Argument("empty vocabulary entry".into()));
            }
            if !set.insert(e.clone()) {
                return Err(Error::Argument(format!("duplicate vocabulary entry {e:?}")));
            }
        }
        if !set.contains(unk_token) {
            return Err(Error::Argument(format!(
                "unknown token {unk_token:?} missing from vocabulary"
            )));
        }
        let max_piece_chars = set
            .iter()
            .map(|e| e.strip_prefix(CONTINUATION).unwrap_or(e).chars().count())
            .max()
            .unwrap_or(0);
        Ok(Vocabulary {
            name: name.into(),
            entries: set,
            unk_token: unk_token.to_string(),
            nfc: false,
            max_piece_chars,
        })
    }

    /// One token per line, line number = token id; `[UNK]` must be present.
    pub fn from_lines(name: impl Into<String>, text: &str) -> Result<Self> {
        Self::new(
            name,
            text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()),
            DEFAULT_UNK,
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_lines(name, &text)
    }

    /// All single characters of `alphabet` plus their `##` forms.
    pub fn characters(name: impl Into<String>, alphabet: &str) -> Self {
        let chars: Vec<char> = {
            let mut seen = HashSet::new();
            alphabet.chars().filter(|c| !c.is_whitespace() && seen.insert(*c)).collect()
        };
        let entries = std::iter::once(DEFAULT_UNK.to_string())
            .chain(chars.iter().map(|c| c.to_string()))
            .chain(chars.iter().map(|c| format!("{CONTINUATION}{c}")));
        Self::new(name, entries, DEFAULT_UNK).expect("character vocabulary is well formed")
    }

    pub fn with_nfc(mut self, nfc: bool) -> Self {
        self.nfc = nfc;
        self
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains(token)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.entries.get_index_of(token)
    }

    pub fn unk_token(&self) -> &str {
        &self.unk_token
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn to_lines(&self) -> String {
        self.entries.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Segment one whitespace-free word.
///
/// After the first piece every candidate is looked up with the `##` prefix.
/// If some position admits no piece at all, the whole word becomes the
/// unknown token.
pub fn tokenize_word(vocab: &Vocabulary, word: &str) -> Result<Vec<String>> {
    if word.is_empty() {
        return Err(Error::Argument("cannot tokenize an empty word".into()));
    }
    if word.chars().any(char::is_whitespace) {
        return Err(Error::Argument(format!("word {word:?} contains whitespace")));
    }
    let normalized;
    let word = if vocab.nfc {
        normalized = word.nfc().collect::<String>();
        normalized.as_str()
    } else {
        word
    };
    Ok(segment(vocab, word))
}

fn segment(vocab: &Vocabulary, word: &str) -> Vec<String> {
    let unk = || vec![vocab.unk_token.clone()];
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    if n_chars > MAX_INPUT_CHARS_PER_WORD {
        return unk();
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + 2);
    while start < n_chars {
        let longest = (start + vocab.max_piece_chars).min(n_chars);
        let mut found = None;
        for end in (start + 1..=longest).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if vocab.entries.contains(candidate.as_str()) {
                found = Some(end);
                break;
            }
        }
        match found {
            Some(end) => {
                pieces.push(candidate.clone());
                start = end;
            }
            None => return unk(),
        }
    }
    pieces
}

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[\p{P}]$").expect("valid regex"))
}

/// Whitespace, Unicode punctuation (incl. hyphen and maqaf) and ASCII
/// symbols are unit boundaries; punctuation becomes a unit of its own.
pub fn is_split_punctuation(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    let mut buf = [0u8; 4];
    punctuation().is_match(c.encode_utf8(&mut buf))
}

/// Pre-split `text` into the units fed to [`tokenize_word`].
pub fn pre_split(text: &str) -> Vec<&str> {
    let mut units = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() || is_split_punctuation(c) {
            if let Some(s) = start.take() {
                units.push(&text[s..i]);
            }
            if !c.is_whitespace() {
                units.push(&text[i..i + c.len_utf8()]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        units.push(&text[s..]);
    }
    units
}

pub fn tokenize_text(vocab: &Vocabulary, text: &str) -> Vec<String> {
    let normalized;
    let text = if vocab.nfc {
        normalized = text.nfc().collect::<String>();
        normalized.as_str()
    } else {
        text
    };
    pre_split(text)
        .into_iter()
        .flat_map(|unit| segment(vocab, unit))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(entries: &[&str]) -> Vocabulary {
        Vocabulary::new("t", entries.iter().copied(), DEFAULT_UNK).unwrap()
    }

    #[test]
    fn two_piece_cover() {
        let v = vocab(&["yaz", "##ıldı", "[UNK]"]);
        assert_eq!(tokenize_word(&v, "yazıldı").unwrap(), ["yaz", "##ıldı"]);
    }

    #[test]
    fn missing_continuation_falls_back_to_unk() {
        let v = vocab(&["a", "[UNK]"]);
        assert_eq!(tokenize_word(&v, "ab").unwrap(), ["[UNK]"]);
    }

    #[test]
    fn prefers_longest_prefix() {
        let v = vocab(&["y", "ya", "yaz", "##d", "##dı", "##ı", "[UNK]"]);
        assert_eq!(tokenize_word(&v, "yazdı").unwrap(), ["yaz", "##dı"]);
    }

    #[test]
    fn empty_word_is_error() {
        let v = vocab(&["[UNK]"]);
        assert!(matches!(tokenize_word(&v, ""), Err(Error::Argument(_))));
    }

    #[test]
    fn overlong_word_is_unk() {
        let v = Vocabulary::characters("c", "a");
        let long = "a".repeat(MAX_INPUT_CHARS_PER_WORD + 1);
        assert_eq!(tokenize_word(&v, &long).unwrap(), ["[UNK]"]);
        let ok = "a".repeat(MAX_INPUT_CHARS_PER_WORD);
        assert_eq!(tokenize_word(&v, &ok).unwrap().len(), MAX_INPUT_CHARS_PER_WORD);
    }

    #[test]
    fn vocabulary_requires_unk_and_unique_entries() {
        assert!(Vocabulary::new("x", ["a"], DEFAULT_UNK).is_err());
        assert!(Vocabulary::new("x", ["a", "a", "[UNK]"], DEFAULT_UNK).is_err());
        let v = Vocabulary::from_lines("x", "[PAD]\n[UNK]\nab\n##c\n").unwrap();
        assert_eq!(v.id("[UNK]"), Some(1));
        assert_eq!(v.id("##c"), Some(3));
    }

    #[test]
    fn pre_split_hebrew_and_punctuation() {
        assert_eq!(
            pre_split("ha-sefer niktav."),
            ["ha", "-", "sefer", "niktav", "."]
        );
        // Maqaf (U+05BE) is a dash punctuation.
        assert_eq!(pre_split("על\u{05BE}ידי"), ["על", "\u{05BE}", "ידי"]);
        assert!(pre_split("").is_empty());
        assert!(pre_split("   ").is_empty());
    }

    #[test]
    fn text_of_one_word_equals_word() {
        let v = vocab(&["yaz", "##ıldı", "[UNK]"]);
        assert_eq!(
            tokenize_text(&v, "yazıldı"),
            tokenize_word(&v, "yazıldı").unwrap()
        );
        assert!(tokenize_text(&v, "").is_empty());
    }

    #[test]
    fn nfc_flag_composes_before_matching() {
        // "ı" is not decomposable; use "ö" = o + U+0308.
        let v = vocab(&["gör", "##dü", "[UNK]"]).with_nfc(true);
        assert_eq!(tokenize_word(&v, "go\u{308}rdü").unwrap(), ["gör", "##dü"]);
        let raw = vocab(&["gör", "##dü", "[UNK]"]);
        assert_eq!(tokenize_word(&raw, "go\u{308}rdü").unwrap(), ["[UNK]"]);
    }
}
