//! The serial parsing loop: retrieve a category for the next token,
//! integrate it with the parse state, decide on null tokens, and
//! backtrack when nothing integrates.
//!
//! Each overt token is processed by scoring all of its candidates once,
//! then trying them in descending activation order until one composes
//! with the current state. Every attempt is a chunk retrieval and adds
//! `F * exp(-f * A)` to the word's latency; the clock advances by the
//! word's total when the word is done. When every candidate fails (or the
//! input ends in a state that is not acceptable), a backtrack index `z` is
//! chosen, every category and null choice made for words `z..=i` is
//! logged as discarded, and parsing resumes at `z` from the saved state.
//!
//! Discards are stamped with the clock reading at which the triggering
//! word started, so the next retrieval always sees a positive elapsed time.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ccg::{compose_with_raising, Category};
use crate::error::{Error, Result};
use crate::grammar::Grammar;
use crate::memory::{ActivationParts, LearnedCategory, Memory, NullChoice};

/// Reanalysis strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Always restart from the first word.
    BackToStart,
    /// Sample an earlier word with probability proportional to its number
    /// of candidate categories.
    UncertaintyWeighted,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::BackToStart => "back-to-start",
            Strategy::UncertaintyWeighted => "uncertainty-weighted",
        }
    }

    pub fn from_name(name: &str) -> Result<Strategy> {
        match name {
            "back-to-start" => Ok(Strategy::BackToStart),
            "uncertainty-weighted" => Ok(Strategy::UncertaintyWeighted),
            other => Err(Error::Invalid(format!("unknown reanalysis strategy '{other}'"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lower-cases and splits a sentence, detaching a final period.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in sentence.split_whitespace() {
        let word = raw.to_lowercase();
        match word.strip_suffix('.') {
            Some(stem) if !stem.is_empty() => {
                out.push(stem.to_string());
                out.push(".".to_string());
            }
            _ => out.push(word),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum TokenKind {
    Overt { word_id: usize },
    Null { null_id: usize },
}

/// One committed token of the current parse.
#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Surface form; empty for null tokens.
    pub text: String,
    /// Overt word position; null tokens carry the position of the word
    /// they follow.
    pub word_index: usize,
    pub category: Category,
    /// Parse state before this token was integrated (`None` at the start).
    pub state_before: Option<Category>,
    pub state_after: Category,
    pub retrieved_at: f64,
    /// Every category retrieved for this token in the current pass,
    /// including the failed attempts that preceded the committed one.
    pub retrieved: Vec<Category>,
}

impl Token {
    pub fn is_null(&self) -> bool {
        matches!(self.kind, TokenKind::Null { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NullDecision {
    pub word_index: usize,
    pub state: Category,
    pub choice: NullChoice,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReanalysisEvent {
    pub trigger: usize,
    pub backtrack: usize,
    pub discarded: Vec<(usize, Category)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TraceEvent {
    Retrieval {
        word_index: usize,
        token: String,
        candidate: Category,
        parts: ActivationParts,
        latency: f64,
        integrated: bool,
    },
    Null {
        word_index: usize,
        state: Category,
        choice: String,
        parts: ActivationParts,
        latency: f64,
    },
    Commit {
        word_index: usize,
        token: String,
        category: Category,
        state: Category,
        word_latency: f64,
    },
    Reanalysis(ReanalysisEvent),
}

impl TraceEvent {
    /// One tab-separated line.
    pub fn to_tsv(&self) -> String {
        match self {
            TraceEvent::Retrieval {
                word_index,
                token,
                candidate,
                parts,
                latency,
                integrated,
            } => format!(
                "retrieve\t{word_index}\t{token}\t{candidate}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{latency:.6}\t{}",
                parts.base,
                parts.lexical,
                parts.inhibition,
                parts.noise,
                parts.total,
                if *integrated { "ok" } else { "fail" }
            ),
            TraceEvent::Null {
                word_index,
                state,
                choice,
                parts,
                latency,
            } => format!(
                "null\t{word_index}\t{choice}\t{state}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{latency:.6}\t-",
                parts.base, parts.lexical, parts.inhibition, parts.noise, parts.total
            ),
            TraceEvent::Commit {
                word_index,
                token,
                category,
                state,
                word_latency,
            } => format!(
                "commit\t{word_index}\t{token}\t{category}\t-\t-\t-\t-\t-\t{word_latency:.6}\t{state}"
            ),
            TraceEvent::Reanalysis(ev) => {
                let discarded: Vec<String> = ev
                    .discarded
                    .iter()
                    .map(|(i, c)| format!("{i}:{c}"))
                    .collect();
                format!(
                    "reanalyze\t{}\t-\t-\t-\t-\t-\t-\t-\t-\t{}>{}",
                    ev.trigger,
                    discarded.join(","),
                    ev.backtrack
                )
            }
        }
    }

    pub const TSV_HEADER: &'static str =
        "event\tindex\ttoken\tcategory\tbase\tlexical\tinhibition\tnoise\ttotal\tlatency\tinfo";
}

/// Current category plus committed tokens; the tokens double as snapshots.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParseState {
    pub current: Option<Category>,
    pub tokens: Vec<Token>,
    pub decisions: Vec<NullDecision>,
}

impl ParseState {
    /// Index of the next overt word to process.
    pub fn next_word(&self) -> usize {
        self.tokens
            .iter()
            .rev()
            .find(|t| !t.is_null())
            .map(|t| t.word_index + 1)
            .unwrap_or(0)
    }

    pub fn null_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_null()).count()
    }

    /// Overt tokens with their committed categories.
    pub fn overt(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| !t.is_null())
    }
}

/// Result of processing one overt token.
#[derive(Clone, Debug, PartialEq)]
pub enum TokenOutcome {
    Integrated,
    /// No candidate integrated; carries the categories that were tried.
    ReanalysisNeeded(Vec<Category>),
}

#[derive(Clone, Debug)]
pub struct ParseOutcome {
    pub state: ParseState,
    pub reanalyses: usize,
    pub gave_up: bool,
    pub started_at: f64,
    pub finished_at: f64,
    pub trace: Vec<TraceEvent>,
}

impl ParseOutcome {
    pub fn final_state(&self) -> Option<&Category> {
        self.state.current.as_ref()
    }

    pub fn duration(&self) -> f64 {
        self.finished_at - self.started_at
    }

    pub fn learned_categories(&self) -> Vec<LearnedCategory> {
        self.state
            .tokens
            .iter()
            .filter_map(|t| match t.kind {
                TokenKind::Overt { word_id } => Some(LearnedCategory {
                    word_id,
                    category: t.category.clone(),
                    retrieved_at: t.retrieved_at,
                }),
                TokenKind::Null { .. } => None,
            })
            .collect()
    }

    pub fn null_choices(&self) -> Vec<(Category, NullChoice)> {
        self.state
            .decisions
            .iter()
            .map(|d| (d.state.clone(), d.choice))
            .collect()
    }
}

/// Maps an integer draw `r` in `[0, sum(weights))` to the index whose
/// cumulative weight bracket contains it.
pub fn index_for_draw(weights: &[usize], r: usize) -> usize {
    let mut acc = 0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[derive(Clone, Copy, Debug)]
pub struct Parser<'g> {
    pub grammar: &'g Grammar,
    pub strategy: Strategy,
    pub trace: bool,
}

/// Working data for one sentence.
struct Run<'a> {
    words: Vec<(usize, &'a str)>,
    state: ParseState,
    reanalyses: usize,
    gave_up: bool,
    trace: Vec<TraceEvent>,
}

impl<'g> Parser<'g> {
    pub fn new(grammar: &'g Grammar, strategy: Strategy) -> Parser<'g> {
        Parser {
            grammar,
            strategy,
            trace: false,
        }
    }

    pub fn with_trace(mut self, on: bool) -> Parser<'g> {
        self.trace = on;
        self
    }

    fn hard_cap(&self, memory: &Memory) -> usize {
        memory.params.give_up_after * 10
    }

    fn noise<R: Rng + ?Sized>(memory: &Memory, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        memory.params.noise_sd * z
    }

    /// Parses a full sentence; the final state must be atomic.
    pub fn parse_sentence<S: AsRef<str>, R: Rng + ?Sized>(
        &self,
        tokens: &[S],
        memory: &mut Memory,
        rng: &mut R,
    ) -> Result<ParseOutcome> {
        self.run(tokens, memory, rng, |c| matches!(c, Category::Atom(_)))
    }

    /// Parses a prefix; reanalysis continues until the state after the last
    /// token is one of `allowed`.
    pub fn parse_prefix<S: AsRef<str>, R: Rng + ?Sized>(
        &self,
        tokens: &[S],
        memory: &mut Memory,
        rng: &mut R,
        allowed: &[Category],
    ) -> Result<ParseOutcome> {
        if allowed.is_empty() {
            return Err(Error::Invalid("empty set of allowed final states".into()));
        }
        self.run(tokens, memory, rng, |c| allowed.contains(c))
    }

    fn run<S: AsRef<str>, R: Rng + ?Sized>(
        &self,
        tokens: &[S],
        memory: &mut Memory,
        rng: &mut R,
        accept: impl Fn(&Category) -> bool,
    ) -> Result<ParseOutcome> {
        let words = tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                self.grammar
                    .word_id(t)
                    .map(|id| (id, t))
                    .ok_or_else(|| Error::UnknownWord(t.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        memory.begin_sentence();
        let started_at = memory.now();
        let mut run = Run {
            words,
            state: ParseState::default(),
            reanalyses: 0,
            gave_up: false,
            trace: Vec::new(),
        };
        let n = run.words.len();
        let sentence = || {
            tokens
                .iter()
                .map(|t| t.as_ref())
                .collect::<Vec<_>>()
                .join(" ")
        };

        while n > 0 {
            let pos = run.state.next_word();
            if pos == n {
                let done = run.state.current.as_ref().is_some_and(&accept);
                if done {
                    break;
                }
                // the last word ended in an unacceptable state
                let stamp = run
                    .state
                    .overt()
                    .last()
                    .map(|t| t.retrieved_at)
                    .unwrap_or(started_at);
                self.backtrack(&mut run, memory, rng, n, Vec::new(), stamp)?;
            } else {
                let word_start = memory.now();
                match self.process_token(&mut run, memory, rng, pos)? {
                    TokenOutcome::Integrated => {}
                    TokenOutcome::ReanalysisNeeded(tried) => {
                        self.backtrack(&mut run, memory, rng, pos, tried, word_start)?;
                    }
                }
            }
            if run.reanalyses > self.hard_cap(memory) {
                return Err(Error::HardCap {
                    sentence: sentence(),
                    reanalyses: run.reanalyses,
                });
            }
        }

        Ok(ParseOutcome {
            state: run.state,
            reanalyses: run.reanalyses,
            gave_up: run.gave_up,
            started_at,
            finished_at: memory.now(),
            trace: run.trace,
        })
    }

    fn give_up(&self, run: &mut Run, memory: &Memory) -> bool {
        let on = run.reanalyses >= memory.params.give_up_after;
        run.gave_up |= on;
        on
    }

    /// Retrieves and integrates a category for word `pos`, then makes the
    /// null decisions that follow it. Charges the word's latency.
    fn process_token<R: Rng + ?Sized>(
        &self,
        run: &mut Run,
        memory: &mut Memory,
        rng: &mut R,
        pos: usize,
    ) -> Result<TokenOutcome> {
        let give_up = self.give_up(run, memory);
        let (word_id, text) = run.words[pos];
        let chunk = &self.grammar.lexicon()[word_id];
        let word_start = memory.now();

        let mut scored = Vec::with_capacity(chunk.candidates.len());
        for (idx, (cat, _)) in chunk.candidates.iter().enumerate() {
            let noise = Self::noise(memory, rng);
            let parts = memory.category_activation(word_id, pos, idx, cat, noise, give_up)?;
            scored.push((idx, parts));
        }
        // stable: ties keep lexicon order
        scored.sort_by(|a, b| b.1.total.total_cmp(&a.1.total));

        let mut activations = Vec::new();
        let mut retrieved = Vec::new();
        let mut committed = None;
        for (idx, parts) in scored {
            let cat = &chunk.candidates[idx].0;
            activations.push(parts.total);
            retrieved.push(cat.clone());
            let next = match &run.state.current {
                None => Some(cat.clone()),
                Some(state) => compose_with_raising(state, cat).map(|c| c.result),
            };
            if self.trace {
                run.trace.push(TraceEvent::Retrieval {
                    word_index: pos,
                    token: text.to_string(),
                    candidate: cat.clone(),
                    parts,
                    latency: memory.latency(&[parts.total]),
                    integrated: next.is_some(),
                });
            }
            if let Some(next) = next {
                committed = Some((cat.clone(), next));
                break;
            }
        }

        let Some((category, next)) = committed else {
            memory.clock.advance(memory.latency(&activations));
            return Ok(TokenOutcome::ReanalysisNeeded(retrieved));
        };
        run.state.tokens.push(Token {
            kind: TokenKind::Overt { word_id },
            text: text.to_string(),
            word_index: pos,
            category: category.clone(),
            state_before: run.state.current.take(),
            state_after: next.clone(),
            retrieved_at: word_start,
            retrieved,
        });
        run.state.current = Some(next.clone());

        self.insert_nulls(run, memory, rng, pos, give_up, &mut activations)?;

        let latency = memory.latency(&activations);
        if self.trace {
            run.trace.push(TraceEvent::Commit {
                word_index: pos,
                token: text.to_string(),
                category,
                state: run.state.current.clone().expect("state set above"),
                word_latency: latency,
            });
        }
        memory.clock.advance(latency);
        Ok(TokenOutcome::Integrated)
    }

    /// Null decisions after word `pos`. Unlicensed states cost nothing.
    /// Decisions repeat after each inserted null, at most once per null
    /// element in the inventory.
    fn insert_nulls<R: Rng + ?Sized>(
        &self,
        run: &mut Run,
        memory: &mut Memory,
        rng: &mut R,
        pos: usize,
        give_up: bool,
        activations: &mut Vec<f64>,
    ) -> Result<()> {
        for _ in 0..self.grammar.nulls().len() {
            let state = run.state.current.clone().expect("null decisions follow a token");
            let Some((choice, parts)) = self.choose_null(memory, rng, pos, &state, give_up)? else {
                return Ok(());
            };
            activations.push(parts.total);
            if self.trace {
                run.trace.push(TraceEvent::Null {
                    word_index: pos,
                    state: state.clone(),
                    choice: self.choice_name(choice).to_string(),
                    parts,
                    latency: memory.latency(&[parts.total]),
                });
            }
            run.state.decisions.push(NullDecision {
                word_index: pos,
                state: state.clone(),
                choice,
            });
            let NullChoice::Null(null_id) = choice else {
                return Ok(());
            };
            let null = &self.grammar.nulls()[null_id];
            let next = compose_with_raising(&state, &null.category)
                .ok_or_else(|| {
                    Error::Internal(format!("licensed null {} does not combine with {state}", null.name))
                })?
                .result;
            run.state.tokens.push(Token {
                kind: TokenKind::Null { null_id },
                text: String::new(),
                word_index: pos,
                category: null.category.clone(),
                state_before: Some(state),
                state_after: next.clone(),
                retrieved_at: memory.now(),
                retrieved: vec![null.category.clone()],
            });
            run.state.current = Some(next);
        }
        Ok(())
    }

    /// Scores every licensed null and `not-null`, returning the winner, or
    /// `None` when the state licenses no null element.
    pub fn choose_null<R: Rng + ?Sized>(
        &self,
        memory: &Memory,
        rng: &mut R,
        word_index: usize,
        state: &Category,
        give_up: bool,
    ) -> Result<Option<(NullChoice, ActivationParts)>> {
        let ids = self.grammar.licensed_null_ids(state);
        if ids.is_empty() {
            return Ok(None);
        }
        let mut options = vec![NullChoice::NotNull];
        options.extend(ids.into_iter().map(NullChoice::Null));
        let mut best: Option<(NullChoice, ActivationParts)> = None;
        for &opt in &options {
            let noise = Self::noise(memory, rng);
            let parts = memory.null_choice_activation(word_index, state, opt, &options, noise, give_up)?;
            if best.as_ref().is_none_or(|(_, b)| parts.total > b.total) {
                best = Some((opt, parts));
            }
        }
        Ok(best)
    }

    pub fn choice_name(&self, choice: NullChoice) -> &str {
        match choice {
            NullChoice::NotNull => "not-null",
            NullChoice::Null(i) => &self.grammar.nulls()[i].name,
        }
    }

    /// Backtrack index for a failure at word `trigger` (`trigger` equals the
    /// sentence length when the complete input ended in a bad state).
    pub fn select_reanalysis_index<R: Rng + ?Sized>(
        &self,
        candidate_counts: &[usize],
        trigger: usize,
        rng: &mut R,
    ) -> usize {
        assert!(trigger >= 1, "reanalysis needs an earlier word");
        match self.strategy {
            Strategy::BackToStart => 0,
            Strategy::UncertaintyWeighted => {
                let weights = &candidate_counts[..trigger];
                let total: usize = weights.iter().sum();
                index_for_draw(weights, rng.random_range(0..total))
            }
        }
    }

    fn backtrack<R: Rng + ?Sized>(
        &self,
        run: &mut Run,
        memory: &mut Memory,
        rng: &mut R,
        trigger: usize,
        tried: Vec<Category>,
        stamp: f64,
    ) -> Result<()> {
        let counts: Vec<usize> = run
            .words
            .iter()
            .map(|(id, _)| self.grammar.lexicon()[*id].candidates.len())
            .collect();
        let z = self.select_reanalysis_index(&counts, trigger, rng);
        let mut discarded = reanalyze(&mut run.state, memory, z, stamp)?;
        for cat in tried {
            memory.discard_log_mut().discard_category(trigger, cat.clone(), stamp);
            discarded.push((trigger, cat));
        }
        run.reanalyses += 1;
        if self.trace {
            run.trace.push(TraceEvent::Reanalysis(ReanalysisEvent {
                trigger,
                backtrack: z,
                discarded,
            }));
        }
        Ok(())
    }
}

/// Restores `state` to just before overt word `z`, logging every category
/// retrieved and every null choice made for words `z..` as discarded at
/// time `stamp`. Returns the discarded `(word index, category)` pairs.
pub fn reanalyze(
    state: &mut ParseState,
    memory: &mut Memory,
    z: usize,
    stamp: f64,
) -> Result<Vec<(usize, Category)>> {
    let cut = state
        .tokens
        .iter()
        .position(|t| t.word_index >= z && !t.is_null());
    let Some(cut) = cut else {
        if state.tokens.iter().any(|t| t.word_index >= z) || z > state.next_word() {
            return Err(Error::Internal(format!("no snapshot for word {z}")));
        }
        // nothing committed at or after z yet
        return Ok(Vec::new());
    };
    let restored = state.tokens[cut].state_before.clone();
    let mut discarded = Vec::new();
    for token in state.tokens.drain(cut..) {
        if token.is_null() {
            continue;
        }
        for cat in token.retrieved {
            memory
                .discard_log_mut()
                .discard_category(token.word_index, cat.clone(), stamp);
            discarded.push((token.word_index, cat));
        }
    }
    let log = memory.discard_log_mut();
    state.decisions.retain(|d| {
        if d.word_index >= z {
            log.discard_null_choice(d.word_index, d.state.clone(), d.choice, stamp);
            false
        } else {
            true
        }
    });
    state.current = restored;
    Ok(discarded)
}
