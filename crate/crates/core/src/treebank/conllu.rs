//! Strict CoNLL-U reader and writer.
//!
//! One sentence per blank-line-delimited block. Multiword token lines
//! (`a-b`) become [`MultiWordSpan`]s, empty nodes (`3.1`) are skipped and
//! counted, and every basic word line must carry exactly ten tab-separated
//! columns.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Features = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: Features,
    pub head: usize,
    pub deprel: String,
    /// Enhanced dependencies, kept verbatim.
    pub deps: String,
    pub misc: IndexMap<String, String>,
}

impl Word {
    pub fn feat(&self, name: &str) -> Option<&str> {
        self.feats.get(name).map(String::as_str)
    }
}

/// A surface token covering the syntactic words `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiWordSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub misc: IndexMap<String, String>,
}

impl MultiWordSpan {
    pub fn contains(&self, index: usize) -> bool {
        (self.start..=self.end).contains(&index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sent_id: String,
    pub text: String,
    pub words: Vec<Word>,
    pub mwt: Vec<MultiWordSpan>,
    pub source: String,
}

impl Sentence {
    pub fn word(&self, index: usize) -> Option<&Word> {
        index.checked_sub(1).and_then(|i| self.words.get(i))
    }

    /// The form a reader sees for word `index`: the fused multiword surface
    /// when the word lies inside a span, otherwise the word's own form.
    pub fn surface_form(&self, index: usize) -> Result<&str> {
        let word = self.word(index).ok_or_else(|| {
            Error::Argument(format!(
                "word index {index} out of range 1..={} in sentence {}",
                self.words.len(),
                self.sent_id
            ))
        })?;
        Ok(self
            .mwt
            .iter()
            .find(|span| span.contains(index))
            .map_or(word.form.as_str(), |span| span.surface.as_str()))
    }

    /// Sentence text rebuilt from surface tokens, honouring `SpaceAfter=No`.
    pub fn reconstruct_text(&self) -> String {
        let mut out = String::new();
        let mut i = 1;
        while i <= self.words.len() {
            let (surface, misc, next) = match self.mwt.iter().find(|s| s.start == i) {
                Some(span) => (span.surface.as_str(), &span.misc, span.end + 1),
                None => {
                    let w = &self.words[i - 1];
                    (w.form.as_str(), &w.misc, i + 1)
                }
            };
            out.push_str(surface);
            let no_space = misc.get("SpaceAfter").is_some_and(|v| v == "No");
            if !no_space && next <= self.words.len() {
                out.push(' ');
            }
            i = next;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Treebank {
    pub name: String,
    pub sentences: Vec<Sentence>,
    pub token_count: usize,
    pub tree_count: usize,
    /// Empty nodes (decimal ids) dropped while parsing.
    pub skipped_empty_nodes: usize,
}

impl Treebank {
    pub fn from_sentences(name: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        let token_count = sentences.iter().map(|s| s.words.len()).sum();
        Treebank {
            name: name.into(),
            tree_count: sentences.len(),
            token_count,
            sentences,
            skipped_empty_nodes: 0,
        }
    }

    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let name = name.into();
        let mut parser = BlockParser::new(&name);
        for (lineno, line) in text.lines().enumerate() {
            parser.line(lineno + 1, line)?;
        }
        parser.finish(text.lines().count() + 1)?;
        if parser.skipped_empty > 0 {
            log::warn!(
                "{}: skipped {} empty nodes",
                if name.is_empty() { "<treebank>" } else { &name },
                parser.skipped_empty
            );
        }
        let skipped = parser.skipped_empty;
        let sentences = parser.sentences;
        let mut tb = Treebank::from_sentences(name, sentences);
        tb.skipped_empty_nodes = skipped;
        Ok(tb)
    }

    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            write_sentence(&mut out, sentence);
        }
        out
    }
}

/// Parse CoNLL-U text into an unnamed treebank.
pub fn parse_conllu(text: &str) -> Result<Treebank> {
    Treebank::parse("", text)
}

struct BlockParser<'a> {
    source: &'a str,
    sentences: Vec<Sentence>,
    seen_ids: std::collections::HashSet<String>,
    skipped_empty: usize,
    // current block
    start_line: usize,
    sent_id: Option<String>,
    text: Option<String>,
    words: Vec<Word>,
    mwt: Vec<MultiWordSpan>,
    in_block: bool,
}

impl<'a> BlockParser<'a> {
    fn new(source: &'a str) -> Self {
        BlockParser {
            source,
            sentences: Vec::new(),
            seen_ids: Default::default(),
            skipped_empty: 0,
            start_line: 0,
            sent_id: None,
            text: None,
            words: Vec::new(),
            mwt: Vec::new(),
            in_block: false,
        }
    }

    fn line(&mut self, lineno: usize, line: &str) -> Result<()> {
        if line.trim().is_empty() {
            return self.finish(lineno);
        }
        if !self.in_block {
            self.in_block = true;
            self.start_line = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "sent_id" => self.sent_id = Some(value.trim().to_string()),
                    "text" => self.text = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            return Ok(());
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('.') {
            self.skipped_empty += 1;
            return Ok(());
        }
        if let Some((a, b)) = id.split_once('-') {
            let start = parse_index(lineno, a)?;
            let end = parse_index(lineno, b)?;
            if start > end {
                return Err(structure_err(
                    lineno,
                    format!("multiword range {start}-{end} is reversed"),
                ));
            }
            if let Some(prev) = self.mwt.last() {
                if start <= prev.end {
                    return Err(structure_err(
                        lineno,
                        format!(
                            "multiword range {start}-{end} overlaps {}-{}",
                            prev.start, prev.end
                        ),
                    ));
                }
            }
            if start != self.words.len() + 1 {
                return Err(structure_err(
                    lineno,
                    format!("multiword range {start}-{end} does not precede word {start}"),
                ));
            }
            self.mwt.push(MultiWordSpan {
                start,
                end,
                surface: non_empty(lineno, "FORM", cols[1])?.to_string(),
                misc: parse_misc(lineno, cols[9])?,
            });
            return Ok(());
        }

        let index = parse_index(lineno, id)?;
        let expected = self.words.len() + 1;
        if index != expected {
            let message = if index < expected {
                format!("duplicate word index {index}")
            } else {
                format!("word index {index} skips expected index {expected}")
            };
            return Err(structure_err(lineno, message));
        }
        let head = cols[6]
            .parse::<usize>()
            .map_err(|_| parse_err(lineno, format!("invalid HEAD {:?}", cols[6])))?;
        self.words.push(Word {
            index,
            form: non_empty(lineno, "FORM", cols[1])?.to_string(),
            lemma: cols[2].to_string(),
            upos: non_empty(lineno, "UPOS", cols[3])?.to_string(),
            xpos: cols[4].to_string(),
            feats: parse_feats(lineno, cols[5])?,
            head,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: parse_misc(lineno, cols[9])?,
        });
        Ok(())
    }

    fn finish(&mut self, lineno: usize) -> Result<()> {
        if !self.in_block {
            return Ok(());
        }
        self.in_block = false;
        let words = std::mem::take(&mut self.words);
        let mwt = std::mem::take(&mut self.mwt);
        let sent_id = self.sent_id.take();
        let text = self.text.take();
        if words.is_empty() {
            // A comment-only block carries no tree.
            if mwt.is_empty() {
                return Ok(());
            }
            return Err(structure_err(lineno, "multiword token without words"));
        }
        if let Some(span) = mwt.iter().find(|s| s.end > words.len()) {
            return Err(structure_err(
                lineno,
                format!(
                    "multiword range {}-{} exceeds sentence length {}",
                    span.start,
                    span.end,
                    words.len()
                ),
            ));
        }
        let sent_id = sent_id.unwrap_or_else(|| format!("{}", self.sentences.len() + 1));
        if !self.seen_ids.insert(sent_id.clone()) {
            return Err(structure_err(
                self.start_line,
                format!("duplicate sent_id {sent_id}"),
            ));
        }
        let mut sentence = Sentence {
            sent_id,
            text: String::new(),
            words,
            mwt,
            source: self.source.to_string(),
        };
        sentence.text = text.unwrap_or_else(|| sentence.reconstruct_text());
        self.sentences.push(sentence);
        Ok(())
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::ConlluParse {
        line,
        message: message.into(),
    }
}

fn structure_err(line: usize, message: impl Into<String>) -> Error {
    Error::ConlluStructure {
        line,
        message: message.into(),
    }
}

fn parse_index(line: usize, s: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(parse_err(line, format!("invalid word id {s:?}"))),
    }
}

fn non_empty<'s>(line: usize, column: &str, s: &'s str) -> Result<&'s str> {
    if s.is_empty() {
        Err(parse_err(line, format!("empty {column} column")))
    } else {
        Ok(s)
    }
}

fn parse_feats(line: usize, column: &str) -> Result<Features> {
    let mut feats = Features::new();
    if column == "_" {
        return Ok(feats);
    }
    for item in column.split('|') {
        match item.split_once('=') {
            Some((name, value)) if !name.is_empty() && !value.is_empty() => {
                feats.insert(name.to_string(), value.to_string());
            }
            _ => return Err(parse_err(line, format!("malformed feature {item:?}"))),
        }
    }
    Ok(feats)
}

fn parse_misc(line: usize, column: &str) -> Result<IndexMap<String, String>> {
    let mut misc = IndexMap::new();
    if column == "_" {
        return Ok(misc);
    }
    for item in column.split('|') {
        if item.is_empty() {
            return Err(parse_err(line, "empty MISC item"));
        }
        let (k, v) = item.split_once('=').unwrap_or((item, ""));
        misc.insert(k.to_string(), v.to_string());
    }
    Ok(misc)
}

/// `Name=Value|...`, or `_` when empty.
pub fn format_feats(feats: &Features) -> String {
    if feats.is_empty() {
        return "_".to_string();
    }
    feats
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("|")
}

fn format_misc(misc: &IndexMap<String, String>) -> String {
    if misc.is_empty() {
        return "_".to_string();
    }
    misc.iter()
        .map(|(k, v)| {
            if v.is_empty() {
                k.clone()
            } else {
                format!("{k}={v}")
            }
        })
        .collect::<Vec<_>>()
        .join("|")
}

fn write_sentence(out: &mut String, s: &Sentence) {
    let _ = writeln!(out, "# sent_id = {}", s.sent_id);
    let _ = writeln!(out, "# text = {}", s.text);
    for w in &s.words {
        if let Some(span) = s.mwt.iter().find(|sp| sp.start == w.index) {
            let _ = writeln!(
                out,
                "{}-{}\t{}\t_\t_\t_\t_\t_\t_\t_\t{}",
                span.start,
                span.end,
                span.surface,
                format_misc(&span.misc)
            );
        }
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            w.index,
            w.form,
            w.lemma,
            w.upos,
            w.xpos,
            format_feats(&w.feats),
            w.head,
            w.deprel,
            w.deps,
            format_misc(&w.misc)
        );
    }
    out.push('\n');
}
