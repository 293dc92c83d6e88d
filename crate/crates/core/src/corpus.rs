//! Template-generated training corpora and priming stimuli.
//!
//! Training sentences are drawn from twelve structure templates whose
//! relative frequencies follow published corpus counts for relative
//! clauses. Stimuli follow the four-version pattern of the priming
//! experiment: reduced passive, full passive and reduced progressive
//! relative clauses, and an active main-verb control.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::grammar::Grammar;

pub const ANIMATE_NOUNS: &[&str] = &[
    "dog", "boy", "cat", "doctor", "thief", "monkey", "hatter", "dentist", "defendant", "lawyer",
    "teacher", "student", "nurse", "girl", "man", "woman", "child", "farmer", "baker", "singer",
    "pilot", "king", "queen", "soldier", "officer", "chef", "clerk", "judge", "witness", "artist",
    "sailor", "tourist",
];

pub const PLACES: &[&str] = &["store", "park", "house", "school", "market"];

/// Verbs with transitive, passive-participle and object-gap uses. These are
/// also the experiment's target verbs.
pub const TARGET_VERBS: &[&str] = &[
    "chased", "examined", "followed", "pushed", "watched", "visited", "called", "helped",
    "kicked", "pulled", "hugged", "carried", "attacked", "rescued", "greeted", "tickled",
    "scolded", "photographed", "interviewed", "questioned", "admired", "ignored", "thanked",
    "punished",
];

pub const INTRANSITIVES: &[&str] = &["ran", "sang", "danced", "slept", "laughed", "smiled", "cried", "waited"];
pub const ADVERBS: &[&str] = &["away", "joyfully", "quickly", "loudly"];
pub const ADJECTIVES: &[&str] = &["happy", "skittish", "tired", "angry", "calm", "nervous"];

/// The twelve training structures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Structure {
    SubjectRc,
    FullObjectRc,
    ReducedObjectRc,
    FullPassiveRc,
    ReducedPassiveRc,
    FullProgressiveRc,
    ReducedProgressiveRc,
    TransitiveNpObject,
    TransitivePpObject,
    Intransitive,
    Copular,
    Coordination,
}

/// Structures with their published relative frequencies. These sum to
/// 1.0022; sampling uses the normalised values from [`probabilities`].
pub const TEMPLATE_TABLE: [(Structure, f64); 12] = [
    (Structure::SubjectRc, 0.016),
    (Structure::FullObjectRc, 0.002),
    (Structure::ReducedObjectRc, 0.005),
    (Structure::FullPassiveRc, 0.002),
    (Structure::ReducedPassiveRc, 0.011),
    (Structure::FullProgressiveRc, 0.0002),
    (Structure::ReducedProgressiveRc, 0.005),
    (Structure::TransitiveNpObject, 0.321),
    (Structure::TransitivePpObject, 0.080),
    (Structure::Intransitive, 0.240),
    (Structure::Copular, 0.240),
    (Structure::Coordination, 0.080),
];

impl Structure {
    pub const ALL: [Structure; 12] = [
        Structure::SubjectRc,
        Structure::FullObjectRc,
        Structure::ReducedObjectRc,
        Structure::FullPassiveRc,
        Structure::ReducedPassiveRc,
        Structure::FullProgressiveRc,
        Structure::ReducedProgressiveRc,
        Structure::TransitiveNpObject,
        Structure::TransitivePpObject,
        Structure::Intransitive,
        Structure::Copular,
        Structure::Coordination,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Structure::SubjectRc => "Subject RC",
            Structure::FullObjectRc => "Full object RC",
            Structure::ReducedObjectRc => "Reduced object RC",
            Structure::FullPassiveRc => "Full passive RC",
            Structure::ReducedPassiveRc => "Reduced passive RC",
            Structure::FullProgressiveRc => "Full progressive RC",
            Structure::ReducedProgressiveRc => "Reduced progressive RC",
            Structure::TransitiveNpObject => "Transitive NP object",
            Structure::TransitivePpObject => "Transitive PP object",
            Structure::Intransitive => "Intransitive",
            Structure::Copular => "Copular",
            Structure::Coordination => "Coordination",
        }
    }

    pub fn from_label(label: &str) -> Result<Structure> {
        Structure::ALL
            .into_iter()
            .find(|s| s.label() == label)
            .ok_or_else(|| Error::Invalid(format!("unknown structure label '{label}'")))
    }

    /// Draws one sentence of this structure.
    pub fn generate<R: Rng + ?Sized>(self, rng: &mut R) -> Vec<String> {
        let mut out: Vec<&str> = vec!["the", pick(ANIMATE_NOUNS, rng)];
        let verb = pick(TARGET_VERBS, rng);
        let other = pick(ANIMATE_NOUNS, rng);
        match self {
            Structure::SubjectRc => out.extend(["who", verb, "the", other]),
            Structure::FullObjectRc => out.extend(["who", "the", other, verb]),
            Structure::ReducedObjectRc => out.extend(["the", other, verb]),
            Structure::FullPassiveRc => out.extend(["who", "was", verb, "by", "the", other]),
            Structure::ReducedPassiveRc => out.extend([verb, "by", "the", other]),
            Structure::FullProgressiveRc => out.extend(["who", "was", "being", verb, "by", "the", other]),
            Structure::ReducedProgressiveRc => out.extend(["being", verb, "by", "the", other]),
            Structure::TransitiveNpObject => out.extend([verb, "the", other]),
            Structure::TransitivePpObject => out.extend(["went", "to", "the", pick(PLACES, rng)]),
            Structure::Intransitive => out.extend(intransitive(rng)),
            Structure::Copular => out.extend(["was", pick(ADJECTIVES, rng)]),
            Structure::Coordination => {
                let conjuncts = if rng.random_bool(0.75) { 2 } else { 4 };
                for i in 0..conjuncts {
                    if i > 0 {
                        out.push("and");
                    }
                    out.extend(predicate(rng));
                }
            }
        }
        if self.is_rc() {
            out.extend(predicate(rng));
        }
        out.push(".");
        out.into_iter().map(String::from).collect()
    }

    pub fn is_rc(self) -> bool {
        matches!(
            self,
            Structure::SubjectRc
                | Structure::FullObjectRc
                | Structure::ReducedObjectRc
                | Structure::FullPassiveRc
                | Structure::ReducedPassiveRc
                | Structure::FullProgressiveRc
                | Structure::ReducedProgressiveRc
        )
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn pick<'a, R: Rng + ?Sized>(words: &[&'a str], rng: &mut R) -> &'a str {
    words.choose(rng).expect("non-empty vocabulary")
}

fn intransitive<R: Rng + ?Sized>(rng: &mut R) -> Vec<&'static str> {
    let mut out = vec![pick(INTRANSITIVES, rng)];
    if rng.random_bool(0.5) {
        out.push(pick(ADVERBS, rng));
    }
    out
}

/// A main-clause predicate without relative clauses.
fn predicate<R: Rng + ?Sized>(rng: &mut R) -> Vec<&'static str> {
    match rng.random_range(0..4) {
        0 => vec![pick(TARGET_VERBS, rng), "the", pick(ANIMATE_NOUNS, rng)],
        1 => vec!["went", "to", "the", pick(PLACES, rng)],
        2 => intransitive(rng),
        _ => vec!["was", pick(ADJECTIVES, rng)],
    }
}

/// Normalised template probabilities in [`Structure::ALL`] order.
pub fn probabilities() -> [f64; 12] {
    let total: f64 = TEMPLATE_TABLE.iter().map(|(_, p)| p).sum();
    TEMPLATE_TABLE.map(|(_, p)| p / total)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub structure: Structure,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Draws `n` sentences i.i.d. from the template distribution.
pub fn generate_corpus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Sentence> {
    let weights = WeightedIndex::new(probabilities()).expect("positive template weights");
    (0..n)
        .map(|_| {
            let structure = Structure::ALL[weights.sample(rng)];
            Sentence {
                structure,
                tokens: structure.generate(rng),
            }
        })
        .collect()
}

/// Checks that every word of every sentence is in each grammar's lexicon.
pub fn validate_vocabulary(sentences: &[Sentence], grammars: &[&Grammar]) -> Result<()> {
    for s in sentences {
        for g in grammars {
            if let Some(word) = s.tokens.iter().find(|w| g.word_id(w).is_none()) {
                return Err(Error::Invalid(format!(
                    "{} template produced '{word}', which the {} grammar lacks: {}",
                    s.structure,
                    g.theory.name(),
                    s.text()
                )));
            }
        }
    }
    Ok(())
}

/// Uniform sample of `size` sentences without replacement.
pub fn sample_training_set<R: Rng + ?Sized>(corpus: &[Sentence], size: usize, rng: &mut R) -> Result<Vec<Sentence>> {
    if size > corpus.len() {
        return Err(Error::Invalid(format!(
            "training size {size} exceeds corpus size {}",
            corpus.len()
        )));
    }
    Ok(rand::seq::index::sample(rng, corpus.len(), size)
        .into_iter()
        .map(|i| corpus[i].clone())
        .collect())
}

/// Structure counts in [`Structure::ALL`] order.
pub fn structure_counts(sentences: &[Sentence]) -> [usize; 12] {
    let mut counts = [0; 12];
    for s in sentences {
        counts[s.structure as usize] += 1;
    }
    counts
}

/// Pearson chi-square goodness of fit against the normalised template
/// probabilities. Returns the statistic and its p-value (11 d.f.).
pub fn chi_square_fit(counts: &[usize; 12]) -> (f64, f64) {
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probabilities())
        .map(|(&o, p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new(11.0).expect("valid degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

pub fn write_corpus(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut out = String::from("structure\tsentence\n");
    for s in sentences {
        out.push_str(&format!("{}\t{}\n", s.structure, s.text()));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| Error::Invalid(format!("{}:{}: expected two columns", path.display(), i + 1)))?;
        out.push(Sentence {
            structure: Structure::from_label(label)?,
            tokens: sentence.split_whitespace().map(String::from).collect(),
        });
    }
    Ok(out)
}

/// Prime conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Amv,
    Rrc,
    Frc,
    ProgRrc,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::Amv, Condition::Rrc, Condition::Frc, Condition::ProgRrc];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Amv => "AMV",
            Condition::Rrc => "RRC",
            Condition::Frc => "FRC",
            Condition::ProgRrc => "ProgRRC",
        }
    }

    pub fn from_name(name: &str) -> Result<Condition> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::Invalid(format!("unknown condition '{name}'")))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One item: a verb with a subject, a by-phrase/object noun and an ending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StimulusItem {
    pub verb: String,
    pub subject: String,
    pub agent: String,
    pub ending: Vec<String>,
}

impl StimulusItem {
    pub fn version(&self, condition: Condition) -> String {
        let (s, v, a, end) = (&self.subject, &self.verb, &self.agent, self.ending.join(" "));
        match condition {
            Condition::Rrc => format!("the {s} {v} by the {a} {end} ."),
            Condition::Frc => format!("the {s} who was {v} by the {a} {end} ."),
            Condition::ProgRrc => format!("the {s} being {v} by the {a} {end} ."),
            Condition::Amv => format!("the {s} {v} the {a} and {end} ."),
        }
    }

    pub fn prompt(&self) -> String {
        format!("the {} {}", self.subject, self.verb)
    }
}

pub const ITEMS_PER_VERB: usize = 4;
pub const LIST_COUNT: usize = 4;

/// Four items for each target verb, with distinct subject nouns per verb.
pub fn generate_items<R: Rng + ?Sized>(rng: &mut R) -> Vec<StimulusItem> {
    let mut items = Vec::with_capacity(TARGET_VERBS.len() * ITEMS_PER_VERB);
    for verb in TARGET_VERBS {
        let mut nouns = ANIMATE_NOUNS.to_vec();
        nouns.shuffle(rng);
        for k in 0..ITEMS_PER_VERB {
            let ending = if rng.random_bool(0.5) {
                intransitive(rng)
            } else {
                vec!["was", pick(ADJECTIVES, rng)]
            };
            items.push(StimulusItem {
                verb: verb.to_string(),
                subject: nouns[2 * k].to_string(),
                agent: nouns[2 * k + 1].to_string(),
                ending: ending.into_iter().map(String::from).collect(),
            });
        }
    }
    items
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub verb: String,
    pub condition: Condition,
    pub primes: [String; 3],
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StimulusList {
    pub id: usize,
    pub trials: Vec<Trial>,
}

/// Latin-square lists. In list `l`, verb `v` is primed in condition
/// `(l + v) mod 4`, item `l` becomes the target prompt and the other three
/// items are the primes. Trial order is shuffled per list.
pub fn build_lists<R: Rng + ?Sized>(items: &[StimulusItem], rng: &mut R) -> Result<Vec<StimulusList>> {
    let mut by_verb: Vec<Vec<&StimulusItem>> = Vec::new();
    for verb in TARGET_VERBS {
        let group: Vec<&StimulusItem> = items.iter().filter(|i| i.verb == *verb).collect();
        if group.len() != ITEMS_PER_VERB {
            return Err(Error::Invalid(format!(
                "verb '{verb}' has {} items, expected {ITEMS_PER_VERB}",
                group.len()
            )));
        }
        by_verb.push(group);
    }
    if let Some(extra) = items.iter().find(|i| !TARGET_VERBS.contains(&i.verb.as_str())) {
        return Err(Error::Invalid(format!("item for unknown verb '{}'", extra.verb)));
    }
    let mut lists = Vec::with_capacity(LIST_COUNT);
    for l in 0..LIST_COUNT {
        let mut trials: Vec<Trial> = by_verb
            .iter()
            .enumerate()
            .map(|(v, group)| {
                let condition = Condition::ALL[(l + v) % 4];
                let primes: Vec<String> = (0..ITEMS_PER_VERB)
                    .filter(|&k| k != l)
                    .map(|k| group[k].version(condition))
                    .collect();
                Trial {
                    verb: group[l].verb.clone(),
                    condition,
                    primes: primes.try_into().expect("three primes"),
                    target: group[l].prompt(),
                }
            })
            .collect();
        trials.shuffle(rng);
        lists.push(StimulusList { id: l, trials });
    }
    Ok(lists)
}

pub const LIST_HEADER: &str = "list\ttrial\tverb\tcondition\tprime1\tprime2\tprime3\ttarget";

pub fn write_lists(path: &Path, lists: &[StimulusList]) -> Result<()> {
    let mut out = Vec::new();
    let mut line = |s: String| writeln!(out, "{s}").expect("write to memory");
    line(LIST_HEADER.to_string());
    for list in lists {
        for (n, t) in list.trials.iter().enumerate() {
            line(format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                list.id, n, t.verb, t.condition, t.primes[0], t.primes[1], t.primes[2], t.target
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_lists(path: &Path) -> Result<Vec<StimulusList>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lists: Vec<StimulusList> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Invalid(format!("{}:{}: malformed list row", path.display(), i + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            return Err(bad());
        }
        let id: usize = cols[0].parse().map_err(|_| bad())?;
        let trial = Trial {
            verb: cols[2].to_string(),
            condition: Condition::from_name(cols[3])?,
            primes: [cols[4].to_string(), cols[5].to_string(), cols[6].to_string()],
            target: cols[7].to_string(),
        };
        match lists.iter_mut().find(|l| l.id == id) {
            Some(list) => list.trials.push(trial),
            None => lists.push(StimulusList {
                id,
                trials: vec![trial],
            }),
        }
    }
    lists.sort_by_key(|l| l.id);
    Ok(lists)
}
