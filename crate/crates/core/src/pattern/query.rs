//! A single-node subset of the grew query language.
//!
//! ```text
//! pattern X [upos="VERB"]; X [VerbForm="Fin"] without X [Voice="Cau"|"Pass"]
//! ```
//!
//! Clauses joined by `;` are conjunctive, `,` separates constraints inside a
//! bracket, `|` separates alternative values. Every clause must name the
//! same variable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::treebank::{Sentence, Word};

pub type Constraints = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub var: String,
    pub constraints: Constraints,
    pub withouts: Vec<Constraints>,
}

impl Pattern {
    /// True when every positive constraint holds on `word` and no `without`
    /// clause holds in full.
    pub fn matches_word(&self, word: &Word) -> bool {
        holds(&self.constraints, word) && !self.withouts.iter().any(|w| holds(w, word))
    }

    /// Ascending indices of the words in `sentence` matched by this pattern.
    pub fn match_sentence(&self, sentence: &Sentence) -> Vec<usize> {
        sentence
            .words
            .iter()
            .filter(|w| self.matches_word(w))
            .map(|w| w.index)
            .collect()
    }
}

pub fn match_sentence(pattern: &Pattern, sentence: &Sentence) -> Vec<usize> {
    pattern.match_sentence(sentence)
}

/// `upos` reads the UPOS column; every other attribute is a feature name.
pub fn attribute<'w>(word: &'w Word, name: &str) -> Option<&'w str> {
    if name == "upos" {
        Some(word.upos.as_str())
    } else {
        word.feat(name)
    }
}

fn holds(constraints: &Constraints, word: &Word) -> bool {
    constraints
        .iter()
        .all(|(attr, values)| attribute(word, attr).is_some_and(|v| values.contains(v)))
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pattern ")?;
        write_clause(f, &self.var, &self.constraints)?;
        for without in &self.withouts {
            write!(f, " without ")?;
            write_clause(f, &self.var, without)?;
        }
        Ok(())
    }
}

fn write_clause(f: &mut fmt::Formatter<'_>, var: &str, c: &Constraints) -> fmt::Result {
    write!(f, "{var} [")?;
    for (i, (attr, values)) in c.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        let alts: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
        write!(f, "{attr}={}", alts.join("|"))?;
    }
    write!(f, "]")
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_pattern(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Punct(char),
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::PatternSyntax {
        offset,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(at, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if "[];,|=".contains(c) {
            chars.next();
            out.push((at, Tok::Punct(c)));
        } else if c == '"' {
            chars.next();
            let mut value = String::new();
            let mut closed = false;
            for (_, c) in chars.by_ref() {
                if c == '"' {
                    closed = true;
                    break;
                }
                value.push(c);
            }
            if !closed {
                return Err(syntax(at, "unterminated string literal"));
            }
            out.push((at, Tok::Str(value)));
        } else if c.is_alphanumeric() || c == '_' {
            let mut ident = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_alphanumeric() || "_-.:".contains(c) {
                    ident.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push((at, Tok::Ident(ident)));
        } else {
            return Err(syntax(at, format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect_punct(&mut self, p: char) -> Result<()> {
        let at = self.offset();
        match self.next() {
            Some(Tok::Punct(c)) if c == p => Ok(()),
            other => Err(syntax(at, format!("expected '{p}', found {}", describe(&other)))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        let at = self.offset();
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => Err(syntax(at, format!("expected {what}, found {}", describe(&other)))),
        }
    }

    /// `VAR [ attr = "v" ("|" "v")* ("," ...)* ]`
    fn clause(&mut self) -> Result<(usize, String, Constraints)> {
        let at = self.offset();
        let var = self.ident("variable")?;
        self.expect_punct('[')?;
        let mut constraints = Constraints::new();
        if self.peek() == Some(&Tok::Punct(']')) {
            return Err(syntax(self.offset(), "empty constraint list"));
        }
        loop {
            let attr_at = self.offset();
            let attr = self.ident("attribute name")?;
            self.expect_punct('=')?;
            let mut values = BTreeSet::new();
            loop {
                let v_at = self.offset();
                match self.next() {
                    Some(Tok::Str(v)) if !v.is_empty() => {
                        values.insert(v);
                    }
                    Some(Tok::Str(_)) => return Err(syntax(v_at, "empty value")),
                    other => {
                        return Err(syntax(
                            v_at,
                            format!("expected quoted value, found {}", describe(&other)),
                        ))
                    }
                }
                if self.peek() == Some(&Tok::Punct('|')) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            merge(&mut constraints, attr, values, attr_at)?;
            match self.next() {
                Some(Tok::Punct(',')) => continue,
                Some(Tok::Punct(']')) => break,
                other => {
                    return Err(syntax(
                        self.toks.get(self.pos - 1).map_or(self.end, |(o, _)| *o),
                        format!("expected ',' or ']', found {}", describe(&other)),
                    ))
                }
            }
        }
        Ok((at, var, constraints))
    }
}

fn merge(
    into: &mut Constraints,
    attr: String,
    values: BTreeSet<String>,
    at: usize,
) -> Result<()> {
    match into.get_mut(&attr) {
        Some(existing) => {
            existing.retain(|v| values.contains(v));
            if existing.is_empty() {
                return Err(syntax(at, format!("contradictory constraints on {attr}")));
            }
        }
        None => {
            into.insert(attr, values);
        }
    }
    Ok(())
}

fn describe(t: &Option<Tok>) -> String {
    match t {
        None => "end of input".into(),
        Some(Tok::Ident(s)) => format!("'{s}'"),
        Some(Tok::Str(s)) => format!("\"{s}\""),
        Some(Tok::Punct(c)) => format!("'{c}'"),
    }
}

/// Parse one `pattern ...` query.
pub fn parse_pattern(text: &str) -> Result<Pattern> {
    let mut patterns = parse_patterns(text)?;
    match patterns.len() {
        1 => Ok(patterns.remove(0)),
        0 => Err(syntax(0, "no pattern found")),
        n => Err(syntax(0, format!("expected one pattern, found {n}"))),
    }
}

/// Parse a file holding any number of patterns, each introduced by the
/// `pattern` keyword.
pub fn parse_patterns(text: &str) -> Result<Vec<Pattern>> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        end: text.len(),
    };
    let mut out = Vec::new();
    while p.peek().is_some() {
        let at = p.offset();
        match p.next() {
            Some(Tok::Ident(k)) if k == "pattern" => {}
            other => {
                return Err(syntax(
                    at,
                    format!("expected keyword 'pattern', found {}", describe(&other)),
                ))
            }
        }
        let (_, var, mut constraints) = p.clause()?;
        let mut withouts = Vec::new();
        loop {
            match p.peek() {
                Some(Tok::Punct(';')) => {
                    p.pos += 1;
                    // Trailing `;` before end, `without` or the next pattern.
                    match p.peek() {
                        None => break,
                        Some(Tok::Ident(k)) if k == "without" || k == "pattern" => continue,
                        _ => {}
                    }
                    let (at, v, c) = p.clause()?;
                    if v != var {
                        return Err(syntax(
                            at,
                            format!("variable {v} differs from {var}; only single-node patterns are supported"),
                        ));
                    }
                    for (attr, values) in c {
                        merge(&mut constraints, attr, values, at)?;
                    }
                }
                Some(Tok::Ident(k)) if k == "without" => {
                    p.pos += 1;
                    let (at, v, c) = p.clause()?;
                    if v != var {
                        return Err(syntax(
                            at,
                            format!("variable {v} differs from {var}; only single-node patterns are supported"),
                        ));
                    }
                    withouts.push(c);
                }
                Some(Tok::Ident(k)) if k == "pattern" => break,
                None => break,
                Some(other) => {
                    let other = Some(other.clone());
                    return Err(syntax(
                        p.offset(),
                        format!("expected ';', 'without' or 'pattern', found {}", describe(&other)),
                    ));
                }
            }
        }
        out.push(Pattern {
            var,
            constraints,
            withouts,
        });
    }
    Ok(out)
}
