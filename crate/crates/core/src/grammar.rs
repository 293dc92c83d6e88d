//! Declarative memory content: lexical chunks, null elements and the
//! line-oriented grammar file format.
//!
//! ```text
//! THEORY participial-phase
//! ATOMS
//! DP NP TP
//! LEXICON
//! the : DP/NP
//! sent : ((TP/PP)/DP)=3 ((TP/DP)/DP)=1
//! NULLS
//! null-wh-object : CP/DP : DP/CP
//! ```
//!
//! `#` starts a comment. Lexicon counts are optional (`=count`, default 0).
//! Null lines are `name : category : licensing-state ...`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use crate::ccg::{compose_with_raising, AtomInventory, Category};
use crate::error::{Error, Result};

pub const WHIZ_DELETION_TEXT: &str = include_str!("../grammars/whiz-deletion.grammar");
pub const PARTICIPIAL_PHASE_TEXT: &str = include_str!("../grammars/participial-phase.grammar");

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Theory {
    WhizDeletion,
    ParticipialPhase,
    Other(String),
}

impl Theory {
    pub fn name(&self) -> &str {
        match self {
            Theory::WhizDeletion => "whiz-deletion",
            Theory::ParticipialPhase => "participial-phase",
            Theory::Other(s) => s,
        }
    }

    fn from_name(name: &str) -> Theory {
        match name {
            "whiz-deletion" => Theory::WhizDeletion,
            "participial-phase" => Theory::ParticipialPhase,
            other => Theory::Other(other.to_string()),
        }
    }
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexicalChunk {
    pub word: String,
    /// Candidate categories with their counts, in tie-break order.
    pub candidates: Vec<(Category, f64)>,
}

impl LexicalChunk {
    /// `count(w,c) / sum count(w,.)`, uniform when every count is zero.
    pub fn priors(&self) -> Vec<f64> {
        normalize_counts(self.candidates.iter().map(|(_, n)| *n))
    }
}

pub(crate) fn normalize_counts(counts: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let total: f64 = counts.clone().sum();
    let n = counts.clone().count();
    if total > 0.0 {
        counts.map(|c| c / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NullElementSpec {
    pub name: String,
    pub category: Category,
    pub licensing: Vec<Category>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grammar {
    pub theory: Theory,
    pub atoms: AtomInventory,
    lexicon: Vec<LexicalChunk>,
    index: HashMap<String, usize>,
    nulls: Vec<NullElementSpec>,
}

impl Grammar {
    pub fn whiz_deletion() -> Grammar {
        Grammar::parse(WHIZ_DELETION_TEXT).expect("bundled whiz-deletion grammar is valid")
    }

    pub fn participial_phase() -> Grammar {
        Grammar::parse(PARTICIPIAL_PHASE_TEXT).expect("bundled participial-phase grammar is valid")
    }

    /// Bundled grammar by theory name, if there is one.
    pub fn bundled(name: &str) -> Option<Grammar> {
        match name {
            "whiz-deletion" => Some(Grammar::whiz_deletion()),
            "participial-phase" => Some(Grammar::participial_phase()),
            _ => None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Grammar> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Grammar::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Grammar> {
        #[derive(PartialEq)]
        enum Section {
            Header,
            Atoms,
            Lexicon,
            Nulls,
        }
        let mut section = Section::Header;
        let mut theory = None;
        let mut atom_names: Vec<String> = Vec::new();
        let mut lexicon = Vec::new();
        let mut index = HashMap::new();
        let mut nulls: Vec<NullElementSpec> = Vec::new();
        let mut atoms = AtomInventory::default();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let syntax = |message: String| Error::GrammarSyntax {
                line: line_no,
                message,
            };
            let with_line = |e: Error| match e {
                Error::UndeclaredAtom { .. } => e,
                other => syntax(other.to_string()),
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "ATOMS" => {
                    section = Section::Atoms;
                    continue;
                }
                "LEXICON" => {
                    atoms = AtomInventory::new(atom_names.iter().map(String::as_str));
                    section = Section::Lexicon;
                    continue;
                }
                "NULLS" => {
                    section = Section::Nulls;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::Header => {
                    let rest = line
                        .strip_prefix("THEORY")
                        .ok_or_else(|| syntax(format!("expected THEORY or a section, got '{line}'")))?
                        .trim();
                    if rest.is_empty() {
                        return Err(syntax("THEORY needs a name".into()));
                    }
                    theory = Some(Theory::from_name(rest));
                }
                Section::Atoms => {
                    for name in line.split_whitespace() {
                        if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                            || !name.starts_with(|c: char| c.is_ascii_alphabetic())
                        {
                            return Err(syntax(format!("bad atom name '{name}'")));
                        }
                        atom_names.push(name.to_string());
                    }
                }
                Section::Lexicon => {
                    let (word, cats) = line
                        .split_once(" : ")
                        .ok_or_else(|| syntax(format!("expected 'word : categories', got '{line}'")))?;
                    let word = word.trim().to_string();
                    if index.contains_key(&word) {
                        return Err(syntax(format!("duplicate word '{word}'")));
                    }
                    let mut candidates: Vec<(Category, f64)> = Vec::new();
                    for item in cats.split_whitespace() {
                        let (cat_text, count) = match item.rsplit_once('=') {
                            Some((c, n)) => {
                                let n: f64 = n
                                    .parse()
                                    .map_err(|_| syntax(format!("bad count in '{item}'")))?;
                                (c, n)
                            }
                            None => (item, 0.0),
                        };
                        if !(count.is_finite() && count >= 0.0) {
                            return Err(syntax(format!("count must be non-negative in '{item}'")));
                        }
                        let cat = Category::parse_in(cat_text, &atoms).map_err(with_line)?;
                        if candidates.iter().any(|(c, _)| *c == cat) {
                            return Err(syntax(format!("duplicate category {cat} for '{word}'")));
                        }
                        candidates.push((cat, count));
                    }
                    if candidates.is_empty() {
                        return Err(syntax(format!("word '{word}' has no categories")));
                    }
                    index.insert(word.clone(), lexicon.len());
                    lexicon.push(LexicalChunk { word, candidates });
                }
                Section::Nulls => {
                    let parts: Vec<&str> = line.split(" : ").map(str::trim).collect();
                    if parts.len() != 3 {
                        return Err(syntax(format!(
                            "expected 'name : category : states', got '{line}'"
                        )));
                    }
                    let category = Category::parse_in(parts[1], &atoms).map_err(with_line)?;
                    let licensing = parts[2]
                        .split_whitespace()
                        .map(|s| Category::parse_in(s, &atoms).map_err(with_line))
                        .collect::<Result<Vec<_>>>()?;
                    if licensing.is_empty() {
                        return Err(syntax(format!("null element '{}' has no licensing states", parts[0])));
                    }
                    if nulls.iter().any(|n| n.name == parts[0]) {
                        return Err(syntax(format!("duplicate null element '{}'", parts[0])));
                    }
                    nulls.push(NullElementSpec {
                        name: parts[0].to_string(),
                        category,
                        licensing,
                    });
                }
            }
        }

        let grammar = Grammar {
            theory: theory.ok_or_else(|| Error::GrammarSyntax {
                line: 1,
                message: "missing THEORY line".into(),
            })?,
            atoms,
            lexicon,
            index,
            nulls,
        };
        grammar.validate()?;
        Ok(grammar)
    }

    fn validate(&self) -> Result<()> {
        if self.lexicon.is_empty() {
            return Err(Error::GrammarValidation("empty lexicon".into()));
        }
        for null in &self.nulls {
            for state in &null.licensing {
                if compose_with_raising(state, &null.category).is_none() {
                    return Err(Error::GrammarValidation(format!(
                        "null element '{}' ({}) cannot combine with its licensing state {}",
                        null.name, null.category, state
                    )));
                }
            }
        }

        let has_noun_cat = |text: &str| {
            let cat = Category::parse(text).expect("literal category");
            self.lexicon
                .iter()
                .any(|chunk| chunk.candidates.iter().any(|(c, _)| *c == cat))
        };
        let has_null_cat = |text: &str| {
            let cat = Category::parse(text).expect("literal category");
            self.nulls.iter().any(|n| n.category == cat)
        };
        let subject_rc_nulls = ["CP/(TP\\DP)", "(TP\\DP)/VoiceP", "(TP\\DP)/(VoiceP/ProgP)"];
        let reduced_heads = ["NP/VoiceP", "NP/(VoiceP/ProgP)"];
        let fail = |msg: String| Err(Error::GrammarValidation(format!("{}: {msg}", self.theory)));
        match self.theory {
            Theory::WhizDeletion => {
                if !has_noun_cat("NP/CP") {
                    return fail("relative-clause nouns must carry NP/CP".into());
                }
                for c in reduced_heads {
                    if has_noun_cat(c) {
                        return fail(format!("reduced relatives are CP-headed; {c} is not allowed"));
                    }
                }
                for c in subject_rc_nulls {
                    if !has_null_cat(c) {
                        return fail(format!("missing subject-relative null element {c}"));
                    }
                }
            }
            Theory::ParticipialPhase => {
                for c in ["NP/CP", "NP/VoiceP", "NP/(VoiceP/ProgP)"] {
                    if !has_noun_cat(c) {
                        return fail(format!("relative-clause nouns must include {c}"));
                    }
                }
                for c in subject_rc_nulls {
                    if has_null_cat(c) {
                        return fail(format!("subject-relative null element {c} is not allowed"));
                    }
                }
            }
            Theory::Other(_) => {}
        }
        Ok(())
    }

    pub fn lexicon(&self) -> &[LexicalChunk] {
        &self.lexicon
    }

    pub fn nulls(&self) -> &[NullElementSpec] {
        &self.nulls
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn chunk(&self, word: &str) -> Result<&LexicalChunk> {
        self.word_id(word)
            .map(|i| &self.lexicon[i])
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    /// Candidate categories of `word` with their prior probabilities.
    pub fn candidates_for(&self, word: &str) -> Result<Vec<(Category, f64)>> {
        let chunk = self.chunk(word)?;
        Ok(chunk
            .candidates
            .iter()
            .map(|(c, _)| c.clone())
            .zip(chunk.priors())
            .collect())
    }

    /// Indices into [`Grammar::nulls`] licensed after `state` (exact match).
    pub fn licensed_null_ids(&self, state: &Category) -> Vec<usize> {
        self.nulls
            .iter()
            .enumerate()
            .filter(|(_, n)| n.licensing.iter().any(|s| s == state))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn licensed_nulls(&self, state: &Category) -> Vec<&NullElementSpec> {
        self.licensed_null_ids(state)
            .into_iter()
            .map(|i| &self.nulls[i])
            .collect()
    }

    /// Serialises back to the grammar text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "THEORY {}", self.theory);
        out.push_str("ATOMS\n");
        let atoms: Vec<&str> = self.atoms.iter().map(|a| a.as_str()).collect();
        let _ = writeln!(out, "{}", atoms.join(" "));
        out.push_str("LEXICON\n");
        for chunk in &self.lexicon {
            let cats: Vec<String> = chunk
                .candidates
                .iter()
                .map(|(c, n)| if *n == 0.0 { c.to_string() } else { format!("{c}={n}") })
                .collect();
            let _ = writeln!(out, "{} : {}", chunk.word, cats.join(" "));
        }
        out.push_str("NULLS\n");
        for null in &self.nulls {
            let states: Vec<String> = null.licensing.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{} : {} : {}", null.name, null.category, states.join(" "));
        }
        out
    }

    /// Stable content hash used in run manifests.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_text().as_bytes()))[..16].to_string()
    }
}
