//! Category algebra: CCG categories, the six composition rules and the
//! single DP type-raising rule.
//!
//! Categories print in the usual slash notation, with every functor operand
//! parenthesised: `(TP\DP)/DP`, `NP/(VoiceP/ProgP)`.

use std::collections::BTreeSet;
use std::collections::HashSet;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

/// An interned atomic symbol such as `DP` or `eos`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom(&'static str);

impl Atom {
    pub fn new(name: &str) -> Atom {
        static TABLE: OnceLock<Mutex<HashSet<&'static str>>> = OnceLock::new();
        let mut table = TABLE
            .get_or_init(|| Mutex::new(HashSet::new()))
            .lock()
            .expect("atom table poisoned");
        if let Some(&s) = table.get(name) {
            return Atom(s);
        }
        let leaked: &'static str = Box::leak(name.to_owned().into_boxed_str());
        table.insert(leaked);
        Atom(leaked)
    }

    pub fn as_str(&self) -> &'static str {
        self.0
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slash {
    /// `/`: argument expected on the right.
    Forward,
    /// `\`: argument expected on the left.
    Backward,
}

impl Slash {
    fn symbol(self) -> char {
        match self {
            Slash::Forward => '/',
            Slash::Backward => '\\',
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Atom(Atom),
    Functor(Box<Functor>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Functor {
    pub result: Category,
    pub slash: Slash,
    pub argument: Category,
}

impl Category {
    pub fn atom(name: &str) -> Category {
        Category::Atom(Atom::new(name))
    }

    pub fn functor(result: Category, slash: Slash, argument: Category) -> Category {
        Category::Functor(Box::new(Functor {
            result,
            slash,
            argument,
        }))
    }

    pub fn forward(result: Category, argument: Category) -> Category {
        Category::functor(result, Slash::Forward, argument)
    }

    pub fn backward(result: Category, argument: Category) -> Category {
        Category::functor(result, Slash::Backward, argument)
    }

    /// Parses slash notation without checking atoms against an inventory.
    /// Unparenthesised chains associate to the left, so `A/B/C` is `(A/B)/C`.
    pub fn parse(text: &str) -> Result<Category> {
        let mut p = CategoryParser {
            src: text,
            chars: text.char_indices().peekable(),
        };
        let cat = p.expr()?;
        p.skip_ws();
        if let Some(&(i, c)) = p.chars.peek() {
            return Err(Error::Category(format!(
                "unexpected '{c}' at offset {i} in '{text}'"
            )));
        }
        Ok(cat)
    }

    /// Parses and checks every atom against `atoms`.
    pub fn parse_in(text: &str, atoms: &AtomInventory) -> Result<Category> {
        let cat = Category::parse(text)?;
        atoms.check(&cat)?;
        Ok(cat)
    }

    pub fn is_atom(&self, name: &str) -> bool {
        matches!(self, Category::Atom(a) if a.as_str() == name)
    }

    pub fn as_functor(&self) -> Option<&Functor> {
        match self {
            Category::Functor(f) => Some(f),
            Category::Atom(_) => None,
        }
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Category::Atom(a) => {
                out.insert(*a);
            }
            Category::Functor(f) => {
                f.result.collect_atoms(out);
                f.argument.collect_atoms(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Category::Atom(_) => 0,
            Category::Functor(f) => 1 + f.result.depth().max(f.argument.depth()),
        }
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Atom(a) => write!(f, "{a}"),
            Category::Functor(_) => write!(f, "({self})"),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Atom(a) => write!(f, "{a}"),
            Category::Functor(func) => {
                func.result.fmt_operand(f)?;
                write!(f, "{}", func.slash.symbol())?;
                func.argument.fmt_operand(f)
            }
        }
    }
}

impl fmt::Debug for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Category> {
        Category::parse(s)
    }
}

struct CategoryParser<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

impl CategoryParser<'_> {
    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn expr(&mut self) -> Result<Category> {
        let mut left = self.primary()?;
        loop {
            self.skip_ws();
            let slash = match self.chars.peek() {
                Some((_, '/')) => Slash::Forward,
                Some((_, '\\')) => Slash::Backward,
                _ => return Ok(left),
            };
            self.chars.next();
            let right = self.primary()?;
            left = Category::functor(left, slash, right);
        }
    }

    fn primary(&mut self) -> Result<Category> {
        self.skip_ws();
        match self.chars.peek().copied() {
            Some((_, '(')) => {
                self.chars.next();
                let inner = self.expr()?;
                self.skip_ws();
                match self.chars.next() {
                    Some((_, ')')) => Ok(inner),
                    _ => Err(Error::Category(format!("unbalanced '(' in '{}'", self.src))),
                }
            }
            Some((start, c)) if c.is_ascii_alphabetic() => {
                let mut end = start;
                while let Some(&(i, c)) = self.chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                        end = i + c.len_utf8();
                        self.chars.next();
                    } else {
                        break;
                    }
                }
                Ok(Category::atom(&self.src[start..end]))
            }
            Some((i, c)) => Err(Error::Category(format!(
                "unexpected '{c}' at offset {i} in '{}'",
                self.src
            ))),
            None => Err(Error::Category(format!("truncated category '{}'", self.src))),
        }
    }
}

/// The atomic symbols a grammar declares.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AtomInventory {
    atoms: BTreeSet<Atom>,
}

impl AtomInventory {
    pub fn new<'a>(names: impl IntoIterator<Item = &'a str>) -> AtomInventory {
        AtomInventory {
            atoms: names.into_iter().map(Atom::new).collect(),
        }
    }

    pub fn contains(&self, atom: Atom) -> bool {
        self.atoms.contains(&atom)
    }

    pub fn check(&self, cat: &Category) -> Result<()> {
        for atom in cat.atoms() {
            if !self.contains(atom) {
                return Err(Error::UndeclaredAtom {
                    atom: atom.to_string(),
                    category: cat.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = Atom> + '_ {
        self.atoms.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// The six composition rules, in the order they are attempted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CombinationRule {
    /// `X/Y  Y  => X`
    ForwardComposition,
    /// `Y  X\Y  => X`
    BackwardComposition,
    /// `X/Y  Y/Z  => X/Z`
    ForwardHarmonicComposition,
    /// `Y\Z  X\Y  => X\Z`
    BackwardHarmonicComposition,
    /// `X/Y  Y\Z  => X\Z`
    ForwardCrossedComposition,
    /// `Y/Z  X\Y  => X/Z`
    BackwardCrossedComposition,
}

impl CombinationRule {
    pub const ALL: [CombinationRule; 6] = [
        CombinationRule::ForwardComposition,
        CombinationRule::BackwardComposition,
        CombinationRule::ForwardHarmonicComposition,
        CombinationRule::BackwardHarmonicComposition,
        CombinationRule::ForwardCrossedComposition,
        CombinationRule::BackwardCrossedComposition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CombinationRule::ForwardComposition => "forward composition",
            CombinationRule::BackwardComposition => "backward composition",
            CombinationRule::ForwardHarmonicComposition => "forward harmonic composition",
            CombinationRule::BackwardHarmonicComposition => "backward harmonic composition",
            CombinationRule::ForwardCrossedComposition => "forward crossed composition",
            CombinationRule::BackwardCrossedComposition => "backward crossed composition",
        }
    }

    /// Applies this rule to `(left, right)` where `left` is the parse state
    /// and `right` the incoming category.
    pub fn apply(self, left: &Category, right: &Category) -> Option<Category> {
        use CombinationRule::*;
        let lf = left.as_functor();
        let rf = right.as_functor();
        match self {
            ForwardComposition => {
                let l = lf.filter(|l| l.slash == Slash::Forward)?;
                (l.argument == *right).then(|| l.result.clone())
            }
            BackwardComposition => {
                let r = rf.filter(|r| r.slash == Slash::Backward)?;
                (r.argument == *left).then(|| r.result.clone())
            }
            ForwardHarmonicComposition => {
                let l = lf.filter(|l| l.slash == Slash::Forward)?;
                let r = rf.filter(|r| r.slash == Slash::Forward)?;
                (l.argument == r.result)
                    .then(|| Category::forward(l.result.clone(), r.argument.clone()))
            }
            BackwardHarmonicComposition => {
                let l = lf.filter(|l| l.slash == Slash::Backward)?;
                let r = rf.filter(|r| r.slash == Slash::Backward)?;
                (l.result == r.argument)
                    .then(|| Category::backward(r.result.clone(), l.argument.clone()))
            }
            ForwardCrossedComposition => {
                let l = lf.filter(|l| l.slash == Slash::Forward)?;
                let r = rf.filter(|r| r.slash == Slash::Backward)?;
                (l.argument == r.result)
                    .then(|| Category::backward(l.result.clone(), r.argument.clone()))
            }
            BackwardCrossedComposition => {
                let l = lf.filter(|l| l.slash == Slash::Forward)?;
                let r = rf.filter(|r| r.slash == Slash::Backward)?;
                (l.result == r.argument)
                    .then(|| Category::forward(r.result.clone(), l.argument.clone()))
            }
        }
    }
}

impl fmt::Display for CombinationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tries the six rules in order and returns the first success.
pub fn compose(left: &Category, right: &Category) -> Option<(Category, CombinationRule)> {
    CombinationRule::ALL
        .iter()
        .find_map(|rule| rule.apply(left, right).map(|c| (c, *rule)))
}

/// `DP => TP/(TP\DP)`; nothing else raises.
pub fn type_raise(cat: &Category) -> Option<Category> {
    if cat.is_atom("DP") {
        let tp = Category::atom("TP");
        Some(Category::forward(
            tp.clone(),
            Category::backward(tp, Category::atom("DP")),
        ))
    } else {
        None
    }
}

/// Which operand, if any, was type-raised before composition succeeded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Raised {
    None,
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Combination {
    pub result: Category,
    pub rule: CombinationRule,
    pub raised: Raised,
}

/// Plain composition first, then raising the left operand, then the right.
/// At most one operand is raised per attempt.
pub fn compose_with_raising(left: &Category, right: &Category) -> Option<Combination> {
    if let Some((result, rule)) = compose(left, right) {
        return Some(Combination {
            result,
            rule,
            raised: Raised::None,
        });
    }
    if let Some(raised) = type_raise(left) {
        if let Some((result, rule)) = compose(&raised, right) {
            return Some(Combination {
                result,
                rule,
                raised: Raised::Left,
            });
        }
    }
    if let Some(raised) = type_raise(right) {
        if let Some((result, rule)) = compose(left, &raised) {
            return Some(Combination {
                result,
                rule,
                raised: Raised::Right,
            });
        }
    }
    None
}
