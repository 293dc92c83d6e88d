//! ACT-R memory dynamics for one model instance.
//!
//! All activations are built from the same decayed sum: for timestamps
//! `t_k` and the current time `now`, `log sum_k (now - t_k)^(-d)`. Base-level
//! activation applies it to past encounters of a category, inhibition to
//! discards of a category at one word position within the current sentence.
//! An empty history yields exactly 0.

use std::collections::HashMap;

use crate::ccg::Category;
use crate::error::{Error, Result};
use crate::grammar::{normalize_counts, Grammar};

/// Decay exponent.
pub const DECAY: f64 = 0.5;
/// Latency exponent.
pub const LATENCY_EXPONENT: f64 = 1.0;
/// Maximum lexical spreading activation.
pub const MAX_SPREAD: f64 = 1.5;
/// Reanalyses after which retrieval ignores base-level and lexical terms.
pub const GIVE_UP_AFTER: usize = 2000;
/// Clock reading of a freshly created instance, in seconds.
pub const START_TIME: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceParams {
    pub decay: f64,
    /// Latency factor `F`, seconds.
    pub latency_factor: f64,
    pub latency_exponent: f64,
    pub max_spread: f64,
    /// Standard deviation of the zero-mean activation noise.
    pub noise_sd: f64,
    pub give_up_after: usize,
    pub seed: u64,
}

impl InstanceParams {
    pub fn new(latency_factor: f64, noise_sd: f64, seed: u64) -> InstanceParams {
        assert!(latency_factor > 0.0, "latency factor must be positive");
        assert!(noise_sd >= 0.0, "noise sd must be non-negative");
        InstanceParams {
            decay: DECAY,
            latency_factor,
            latency_exponent: LATENCY_EXPONENT,
            max_spread: MAX_SPREAD,
            noise_sd,
            give_up_after: GIVE_UP_AFTER,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clock {
    now: f64,
}

impl Clock {
    pub fn starting_at(now: f64) -> Clock {
        Clock { now }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn advance(&mut self, seconds: f64) {
        assert!(seconds >= 0.0 && seconds.is_finite(), "clock step {seconds}");
        self.now += seconds;
    }
}

impl Default for Clock {
    fn default() -> Clock {
        Clock::starting_at(START_TIME)
    }
}

/// `log sum (now - t)^(-d)`; 0 for an empty history. Every timestamp must
/// lie strictly before `now`.
pub fn decayed_log_sum(times: &[f64], now: f64, decay: f64) -> Result<f64> {
    if times.is_empty() {
        return Ok(0.0);
    }
    let earliest_bad = times.iter().copied().find(|&t| now - t <= 0.0);
    if let Some(t) = earliest_bad {
        return Err(Error::Internal(format!(
            "zero elapsed time: event at {t} evaluated at {now}"
        )));
    }
    let sum: f64 = if decay == 0.5 {
        times.iter().map(|&t| (now - t).sqrt().recip()).sum()
    } else {
        times.iter().map(|&t| (now - t).powf(-decay)).sum()
    };
    Ok(sum.ln())
}

pub fn base_level_activation(stats: &SyntaxChunkStats, now: f64, decay: f64) -> Result<f64> {
    decayed_log_sum(&stats.encounters, now, decay)
}

/// `M * P(c | w)`.
pub fn lexical_activation(prior: f64, max_spread: f64) -> f64 {
    max_spread * prior
}

pub fn inhibition(discards: &[f64], now: f64, decay: f64) -> Result<f64> {
    decayed_log_sum(discards, now, decay)
}

/// Inhibition as it enters an activation. The log sum turns negative once
/// every discard is more than a second old; it is floored at zero so an old
/// discard never makes a category easier to retrieve than an untried one.
pub fn effective_inhibition(discards: &[f64], now: f64, decay: f64) -> Result<f64> {
    Ok(inhibition(discards, now, decay)?.max(0.0))
}

pub fn total_activation(base: f64, lexical: f64, inhibition: f64, noise: f64) -> f64 {
    base + lexical - inhibition + noise
}

/// `sum_n F * exp(-f * A_n)` over the chunks retrieved for one word.
pub fn retrieval_latency(activations: &[f64], latency_factor: f64, latency_exponent: f64) -> f64 {
    activations
        .iter()
        .map(|a| latency_factor * (-latency_exponent * a).exp())
        .sum()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SyntaxChunkStats {
    pub category: Option<Category>,
    /// One timestamp per past encounter, non-decreasing.
    pub encounters: Vec<f64>,
}

impl SyntaxChunkStats {
    pub fn count(&self) -> usize {
        self.encounters.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NullChoice {
    /// Index into the grammar's null inventory.
    Null(usize),
    NotNull,
}

/// Per-sentence record of discarded categories and null choices.
#[derive(Clone, Debug, Default)]
pub struct SentenceDiscardLog {
    categories: HashMap<usize, HashMap<Category, Vec<f64>>>,
    nulls: HashMap<(usize, NullChoice), HashMap<Category, Vec<f64>>>,
}

impl SentenceDiscardLog {
    pub fn discard_category(&mut self, word_index: usize, cat: Category, at: f64) {
        self.categories
            .entry(word_index)
            .or_default()
            .entry(cat)
            .or_default()
            .push(at);
    }

    pub fn discard_null_choice(&mut self, word_index: usize, state: Category, choice: NullChoice, at: f64) {
        self.nulls
            .entry((word_index, choice))
            .or_default()
            .entry(state)
            .or_default()
            .push(at);
    }

    pub fn category_discards(&self, word_index: usize, cat: &Category) -> &[f64] {
        self.categories
            .get(&word_index)
            .and_then(|m| m.get(cat))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn null_discards(&self, word_index: usize, state: &Category, choice: NullChoice) -> &[f64] {
        self.nulls
            .get(&(word_index, choice))
            .and_then(|m| m.get(state))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty() && self.nulls.is_empty()
    }

    pub fn clear(&mut self) {
        self.categories.clear();
        self.nulls.clear();
    }
}

/// Counts of null decisions, keyed by the licensing parse state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NullChoiceStats {
    counts: HashMap<(Category, NullChoice), f64>,
}

impl NullChoiceStats {
    pub fn count(&self, state: &Category, choice: NullChoice) -> f64 {
        self.counts
            .get(&(state.clone(), choice))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn increment(&mut self, state: &Category, choice: NullChoice) {
        *self.counts.entry((state.clone(), choice)).or_insert(0.0) += 1.0;
    }

    /// `P(choice | state)` over `options`; uniform while all counts are zero.
    pub fn probability(&self, state: &Category, choice: NullChoice, options: &[NullChoice]) -> f64 {
        let probs = normalize_counts(options.iter().map(|o| self.count(state, *o)));
        options
            .iter()
            .position(|o| *o == choice)
            .map(|i| probs[i])
            .unwrap_or(0.0)
    }
}

/// Components of one activation value, kept for traces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationParts {
    pub base: f64,
    pub lexical: f64,
    pub inhibition: f64,
    pub noise: f64,
    pub total: f64,
}

/// A committed overt category, as consumed by [`Memory::learn_from_parse`].
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedCategory {
    pub word_id: usize,
    pub category: Category,
    /// Clock reading when the category was retrieved.
    pub retrieved_at: f64,
}

/// Mutable declarative memory of one model instance.
#[derive(Clone, Debug)]
pub struct Memory {
    pub params: InstanceParams,
    pub clock: Clock,
    lexical_counts: Vec<Vec<f64>>,
    syntax: HashMap<Category, SyntaxChunkStats>,
    null_stats: NullChoiceStats,
    discards: SentenceDiscardLog,
    base_cache: HashMap<Category, (f64, f64)>,
}

impl Memory {
    pub fn new(grammar: &Grammar, params: InstanceParams) -> Memory {
        Memory {
            params,
            clock: Clock::default(),
            lexical_counts: grammar
                .lexicon()
                .iter()
                .map(|chunk| chunk.candidates.iter().map(|(_, n)| *n).collect())
                .collect(),
            syntax: HashMap::new(),
            null_stats: NullChoiceStats::default(),
            discards: SentenceDiscardLog::default(),
            base_cache: HashMap::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn syntax_stats(&self, cat: &Category) -> Option<&SyntaxChunkStats> {
        self.syntax.get(cat)
    }

    pub fn null_stats(&self) -> &NullChoiceStats {
        &self.null_stats
    }

    pub fn discard_log(&self) -> &SentenceDiscardLog {
        &self.discards
    }

    pub fn discard_log_mut(&mut self) -> &mut SentenceDiscardLog {
        &mut self.discards
    }

    pub fn lexical_counts(&self, word_id: usize) -> &[f64] {
        &self.lexical_counts[word_id]
    }

    /// `P(c | w)` for every candidate of `word_id`, in grammar order.
    pub fn priors(&self, word_id: usize) -> Vec<f64> {
        normalize_counts(self.lexical_counts[word_id].iter().copied())
    }

    /// `P(c | w)` for candidate `index` of `word_id`.
    pub fn prior(&self, word_id: usize, index: usize) -> f64 {
        let counts = &self.lexical_counts[word_id];
        let total: f64 = counts.iter().sum();
        if total > 0.0 {
            counts[index] / total
        } else {
            1.0 / counts.len() as f64
        }
    }

    /// Records an encounter directly; training and tests use this to shape
    /// histories without parsing.
    pub fn record_encounter(&mut self, cat: &Category, at: f64) {
        let stats = self.syntax.entry(cat.clone()).or_insert_with(|| SyntaxChunkStats {
            category: Some(cat.clone()),
            encounters: Vec::new(),
        });
        debug_assert!(stats.encounters.last().is_none_or(|&t| t <= at));
        stats.encounters.push(at);
        self.base_cache.remove(cat);
    }

    pub fn base_level(&mut self, cat: &Category) -> Result<f64> {
        let now = self.clock.now();
        if let Some(&(at, value)) = self.base_cache.get(cat) {
            if at == now {
                return Ok(value);
            }
        }
        let value = match self.syntax.get(cat) {
            Some(stats) => base_level_activation(stats, now, self.params.decay)?,
            None => 0.0,
        };
        self.base_cache.insert(cat.clone(), (now, value));
        Ok(value)
    }

    /// Activation of candidate `index` of `word_id` at `word_index` in the
    /// current sentence. In give-up mode only inhibition and noise count.
    pub fn category_activation(
        &mut self,
        word_id: usize,
        word_index: usize,
        index: usize,
        cat: &Category,
        noise: f64,
        give_up: bool,
    ) -> Result<ActivationParts> {
        let now = self.clock.now();
        let inhibition = effective_inhibition(
            self.discards.category_discards(word_index, cat),
            now,
            self.params.decay,
        )?;
        let (base, lexical) = if give_up {
            (0.0, 0.0)
        } else {
            let prior = self.prior(word_id, index);
            (
                self.base_level(cat)?,
                lexical_activation(prior, self.params.max_spread),
            )
        };
        Ok(ActivationParts {
            base,
            lexical,
            inhibition,
            noise,
            total: total_activation(base, lexical, inhibition, noise),
        })
    }

    /// Activation of one option of a null decision: lexical-style
    /// spreading from the licensing state, minus inhibition, plus noise.
    /// There is no base-level term.
    pub fn null_choice_activation(
        &self,
        word_index: usize,
        state: &Category,
        choice: NullChoice,
        options: &[NullChoice],
        noise: f64,
        give_up: bool,
    ) -> Result<ActivationParts> {
        let inhibition = effective_inhibition(
            self.discards.null_discards(word_index, state, choice),
            self.clock.now(),
            self.params.decay,
        )?;
        let lexical = if give_up {
            0.0
        } else {
            lexical_activation(
                self.null_stats.probability(state, choice, options),
                self.params.max_spread,
            )
        };
        Ok(ActivationParts {
            base: 0.0,
            lexical,
            inhibition,
            noise,
            total: total_activation(0.0, lexical, inhibition, noise),
        })
    }

    pub fn latency(&self, activations: &[f64]) -> f64 {
        retrieval_latency(
            activations,
            self.params.latency_factor,
            self.params.latency_exponent,
        )
    }

    /// End-of-sentence update from the final parse: one encounter per
    /// committed overt category, one lexical count per (word, category),
    /// one null-choice count per decision. Clears the discard log.
    pub fn learn_from_parse(
        &mut self,
        grammar: &Grammar,
        categories: &[LearnedCategory],
        null_choices: &[(Category, NullChoice)],
    ) -> Result<()> {
        for learned in categories {
            let chunk = &grammar.lexicon()[learned.word_id];
            let idx = chunk
                .candidates
                .iter()
                .position(|(c, _)| *c == learned.category)
                .ok_or_else(|| {
                    Error::Internal(format!(
                        "{} is not a candidate of '{}'",
                        learned.category, chunk.word
                    ))
                })?;
            self.lexical_counts[learned.word_id][idx] += 1.0;
        }
        let mut stamped: Vec<&LearnedCategory> = categories.iter().collect();
        stamped.sort_by(|a, b| a.retrieved_at.total_cmp(&b.retrieved_at));
        for learned in stamped {
            self.record_encounter(&learned.category, learned.retrieved_at);
        }
        for (state, choice) in null_choices {
            self.null_stats.increment(state, *choice);
        }
        self.discards.clear();
        Ok(())
    }

    /// Starts a new sentence: inhibition never carries across sentences.
    pub fn begin_sentence(&mut self) {
        self.discards.clear();
    }
}
