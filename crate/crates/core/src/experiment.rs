//! Model instances, training and priming trials.
//!
//! A model type fixes the grammar, the amount of training and the
//! reanalysis strategy. Each instance of a type draws its own latency
//! factor and noise level from a seed derived from its id, optionally
//! learns from a sample of the training corpus, and then works through one
//! stimulus list: three primes parsed with learning, then the target
//! prompt, whose final state is constrained to DP/PP (reduced relative) or
//! TP/DP (active main verb).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ccg::Category;
use crate::corpus::{Condition, Sentence, StimulusList};
use crate::error::{Error, Result};
use crate::grammar::Grammar;
use crate::memory::{InstanceParams, Memory};
use crate::parser::{tokenize, ParseOutcome, Parser, Strategy};

/// Final state of a target parsed as a reduced relative clause.
pub const RRC_STATE: &str = "DP/PP";
/// Final state of a target parsed as an active main verb.
pub const ACTIVE_STATE: &str = "TP/DP";

pub fn target_states() -> Vec<Category> {
    vec![
        Category::parse(RRC_STATE).expect("valid category"),
        Category::parse(ACTIVE_STATE).expect("valid category"),
    ]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelTypeConfig {
    /// Bundled grammar name or path to a grammar file.
    pub grammar: String,
    pub training_size: usize,
    pub strategy: Strategy,
    pub instances: usize,
    pub base_seed: u64,
    /// Whether target parses update memory.
    pub learn_from_targets: bool,
}

impl ModelTypeConfig {
    /// `grammar/training/strategy`, used to name output files.
    pub fn label(&self) -> String {
        let grammar = Path::new(&self.grammar)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&self.grammar);
        format!("{grammar}-{}-{}", self.training_size, self.strategy)
    }

    pub fn instance_seed(&self, id: usize) -> u64 {
        self.base_seed.wrapping_add(id as u64)
    }
}

/// Bundled grammar by name, otherwise a grammar file.
pub fn resolve_grammar(name_or_path: &str) -> Result<Grammar> {
    match Grammar::bundled(name_or_path) {
        Some(g) => Ok(g),
        None => Grammar::load(name_or_path),
    }
}

/// Latency factor from Beta(2, 6), noise sd from |Normal(0.35, 1)|.
pub fn sample_instance_params<R: Rng + ?Sized>(rng: &mut R, seed: u64) -> InstanceParams {
    let beta = Beta::new(2.0, 6.0).expect("valid beta parameters");
    let normal = Normal::new(0.35, 1.0).expect("valid normal parameters");
    let mut latency_factor: f64 = beta.sample(rng);
    // a draw of exactly 0 is possible in floating point but meaningless
    while latency_factor <= 0.0 {
        latency_factor = beta.sample(rng);
    }
    let noise: f64 = normal.sample(rng);
    InstanceParams::new(latency_factor, noise.abs(), seed)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainingReport {
    pub parsed: usize,
    pub skipped: usize,
}

/// Parses each sentence in order and learns from the instance's own final
/// parse. Sentences that exhaust the reanalysis cap are skipped.
pub fn train_instance<R: Rng + ?Sized>(
    memory: &mut Memory,
    parser: &Parser,
    sentences: &[Sentence],
    rng: &mut R,
) -> Result<TrainingReport> {
    let mut report = TrainingReport::default();
    for s in sentences {
        match parser.parse_sentence(&s.tokens, memory, rng) {
            Ok(out) => {
                learn(memory, parser.grammar, &out)?;
                report.parsed += 1;
            }
            Err(e @ Error::HardCap { .. }) => {
                log::warn!("skipping training sentence: {e}");
                memory.begin_sentence();
                report.skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

fn learn(memory: &mut Memory, grammar: &Grammar, out: &ParseOutcome) -> Result<()> {
    memory.learn_from_parse(grammar, &out.learned_categories(), &out.null_choices())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classification {
    Rrc,
    NonRrc,
    /// A prime or the target hit the reanalysis cap.
    Invalid,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::Rrc => "RRC",
            Classification::NonRrc => "non-RRC",
            Classification::Invalid => "invalid",
        }
    }

    pub fn from_name(name: &str) -> Result<Classification> {
        match name {
            "RRC" => Ok(Classification::Rrc),
            "non-RRC" => Ok(Classification::NonRrc),
            "invalid" => Ok(Classification::Invalid),
            other => Err(Error::Invalid(format!("unknown classification '{other}'"))),
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub model: String,
    pub instance: usize,
    pub list: usize,
    pub trial: usize,
    pub verb: String,
    pub condition: Condition,
    /// Final target state; `None` for invalid trials.
    pub state: Option<Category>,
    pub classification: Classification,
    pub reanalyses: usize,
    pub duration: f64,
    pub prime_reanalyses: usize,
    pub latency_factor: f64,
    pub noise_sd: f64,
}

impl TrialRecord {
    pub const TSV_HEADER: &'static str = "model\tinstance\tlist\ttrial\tverb\tcondition\tstate\tclass\treanalyses\tduration\tprime_reanalyses\tlatency_factor\tnoise_sd";

    pub fn is_valid(&self) -> bool {
        self.classification != Classification::Invalid
    }

    pub fn is_rrc(&self) -> bool {
        self.classification == Classification::Rrc
    }

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{:.6}\t{:.6}",
            self.model,
            self.instance,
            self.list,
            self.trial,
            self.verb,
            self.condition,
            self.state.as_ref().map_or("-".to_string(), Category::to_string),
            self.classification,
            self.reanalyses,
            self.duration,
            self.prime_reanalyses,
            self.latency_factor,
            self.noise_sd
        )
    }

    pub fn from_tsv(line: &str) -> Result<TrialRecord> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 13 {
            return Err(Error::Invalid(format!("expected 13 columns, got {}: {line}", cols.len())));
        }
        let num = |i: usize| -> Result<usize> {
            cols[i]
                .parse()
                .map_err(|_| Error::Invalid(format!("bad integer '{}' in column {}", cols[i], i + 1)))
        };
        let real = |i: usize| -> Result<f64> {
            cols[i]
                .parse()
                .map_err(|_| Error::Invalid(format!("bad number '{}' in column {}", cols[i], i + 1)))
        };
        Ok(TrialRecord {
            model: cols[0].to_string(),
            instance: num(1)?,
            list: num(2)?,
            trial: num(3)?,
            verb: cols[4].to_string(),
            condition: Condition::from_name(cols[5])?,
            state: match cols[6] {
                "-" => None,
                s => Some(Category::parse(s)?),
            },
            classification: Classification::from_name(cols[7])?,
            reanalyses: num(8)?,
            duration: real(9)?,
            prime_reanalyses: num(10)?,
            latency_factor: real(11)?,
            noise_sd: real(12)?,
        })
    }
}

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut out = String::with_capacity(records.len() * 96);
    out.push_str(TrialRecord::TSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_tsv());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TrialRecord::TSV_HEADER => {}
        None => return Ok(Vec::new()),
        Some(_) => return Err(Error::Invalid(format!("{}: not a trial record file", path.display()))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(TrialRecord::from_tsv)
        .collect()
}

/// Identifies the trial being run; metadata only, never seen by the parser.
#[derive(Clone, Debug)]
pub struct TrialContext<'a> {
    pub model: &'a str,
    pub instance: usize,
    pub list: usize,
    pub trial: usize,
}

/// Three primes with learning, then the target prompt.
pub fn run_trial<R: Rng + ?Sized>(
    memory: &mut Memory,
    parser: &Parser,
    ctx: TrialContext,
    trial: &crate::corpus::Trial,
    learn_from_target: bool,
    rng: &mut R,
) -> Result<TrialRecord> {
    let mut record = TrialRecord {
        model: ctx.model.to_string(),
        instance: ctx.instance,
        list: ctx.list,
        trial: ctx.trial,
        verb: trial.verb.clone(),
        condition: trial.condition,
        state: None,
        classification: Classification::Invalid,
        reanalyses: 0,
        duration: 0.0,
        prime_reanalyses: 0,
        latency_factor: memory.params.latency_factor,
        noise_sd: memory.params.noise_sd,
    };
    for prime in &trial.primes {
        match parser.parse_sentence(&tokenize(prime), memory, rng) {
            Ok(out) => {
                record.prime_reanalyses += out.reanalyses;
                learn(memory, parser.grammar, &out)?;
            }
            Err(e @ Error::HardCap { .. }) => {
                log::warn!("instance {}, trial {}: {e}", ctx.instance, ctx.trial);
                memory.begin_sentence();
                return Ok(record);
            }
            Err(e) => return Err(e),
        }
    }
    let allowed = target_states();
    match parser.parse_prefix(&tokenize(&trial.target), memory, rng, &allowed) {
        Ok(out) => {
            let state = out.final_state().cloned().expect("accepted prefix has a state");
            record.classification = if state == allowed[0] {
                Classification::Rrc
            } else {
                Classification::NonRrc
            };
            record.state = Some(state);
            record.reanalyses = out.reanalyses;
            record.duration = out.duration();
            if learn_from_target {
                learn(memory, parser.grammar, &out)?;
            } else {
                memory.begin_sentence();
            }
        }
        Err(e @ Error::HardCap { .. }) => {
            log::warn!("instance {}, target {}: {e}", ctx.instance, ctx.trial);
            memory.begin_sentence();
        }
        Err(e) => return Err(e),
    }
    Ok(record)
}

/// Everything a model type's instances share.
#[derive(Clone, Copy, Debug)]
pub struct Setup<'a> {
    pub config: &'a ModelTypeConfig,
    pub grammar: &'a Grammar,
    pub lists: &'a [StimulusList],
    /// Sentences training sets are drawn from.
    pub corpus: &'a [Sentence],
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceResult {
    pub records: Vec<TrialRecord>,
    pub training: TrainingReport,
}

/// One instance: parameters, training, then its list (round-robin by id).
pub fn run_instance(setup: Setup, id: usize) -> Result<InstanceResult> {
    let config = setup.config;
    if setup.lists.is_empty() {
        return Err(Error::Invalid("no stimulus lists".into()));
    }
    let seed = config.instance_seed(id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = sample_instance_params(&mut rng, seed);
    let mut memory = Memory::new(setup.grammar, params);
    let parser = Parser::new(setup.grammar, config.strategy);

    let training = crate::corpus::sample_training_set(setup.corpus, config.training_size, &mut rng)?;
    let report = train_instance(&mut memory, &parser, &training, &mut rng)?;

    let list = &setup.lists[id % setup.lists.len()];
    let model = config.label();
    let mut records = Vec::with_capacity(list.trials.len());
    for (n, trial) in list.trials.iter().enumerate() {
        let ctx = TrialContext {
            model: &model,
            instance: id,
            list: list.id,
            trial: n,
        };
        records.push(run_trial(&mut memory, &parser, ctx, trial, config.learn_from_targets, &mut rng)?);
    }
    Ok(InstanceResult {
        records,
        training: report,
    })
}

fn merge(results: Vec<Result<InstanceResult>>) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    for r in results {
        records.extend(r?.records);
    }
    Ok(records)
}

/// Runs every instance one after another.
pub fn run_model_type_sequential(setup: Setup) -> Result<Vec<TrialRecord>> {
    merge((0..setup.config.instances).map(|id| run_instance(setup, id)).collect())
}

/// Runs instances on the current rayon pool; records come back in id order.
#[cfg(feature = "parallel")]
pub fn run_model_type_parallel(setup: Setup) -> Result<Vec<TrialRecord>> {
    use rayon::prelude::*;
    merge(
        (0..setup.config.instances)
            .into_par_iter()
            .map(|id| run_instance(setup, id))
            .collect(),
    )
}

/// All instances of one model type, in parallel when built with the
/// `parallel` feature.
pub fn run_model_type(setup: Setup) -> Result<Vec<TrialRecord>> {
    #[cfg(feature = "parallel")]
    {
        run_model_type_parallel(setup)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_model_type_sequential(setup)
    }
}

/// Runs `f` with at most `workers` threads (`None` = all available).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}

fn default_instances() -> usize {
    1280
}
fn default_corpus_size() -> usize {
    10_000
}
fn default_true() -> bool {
    true
}
fn default_grammars() -> Vec<String> {
    vec!["whiz-deletion".into(), "participial-phase".into()]
}
fn default_training() -> Vec<usize> {
    vec![0, 100, 500]
}
fn default_strategies() -> Vec<String> {
    vec!["back-to-start".into(), "uncertainty-weighted".into()]
}

/// Experiment configuration file. Every field has a default, so an empty
/// file describes the full twelve-type grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_grammars")]
    pub grammars: Vec<String>,
    #[serde(default = "default_training")]
    pub training_sizes: Vec<usize>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default = "default_corpus_size")]
    pub corpus_size: usize,
    #[serde(default)]
    pub corpus_seed: u64,
    /// Seed for generated stimuli when `lists` is not given.
    #[serde(default)]
    pub list_seed: u64,
    /// Stimulus list file; generated from `list_seed` when absent.
    #[serde(default)]
    pub lists: Option<PathBuf>,
    /// Training corpus file; generated from `corpus_seed` when absent.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub learn_from_targets: bool,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        config.model_types()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = ExperimentConfig::from_toml(&text)?;
        // relative file references are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.lists, &mut config.corpus].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for g in &mut config.grammars {
            if Grammar::bundled(g).is_none() && Path::new(g).is_relative() {
                *g = base.join(&*g).to_string_lossy().into_owned();
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The grammar x training x strategy grid, in that nesting order.
    pub fn model_types(&self) -> Result<Vec<ModelTypeConfig>> {
        let strategies = self
            .strategies
            .iter()
            .map(|s| Strategy::from_name(s))
            .collect::<Result<Vec<_>>>()?;
        if let Some(&too_big) = self.training_sizes.iter().find(|&&n| n > self.corpus_size && self.corpus.is_none()) {
            return Err(Error::Invalid(format!(
                "training size {too_big} exceeds corpus size {}",
                self.corpus_size
            )));
        }
        let mut out = Vec::new();
        for grammar in &self.grammars {
            for &training_size in &self.training_sizes {
                for &strategy in &strategies {
                    out.push(ModelTypeConfig {
                        grammar: grammar.clone(),
                        training_size,
                        strategy,
                        instances: self.instances,
                        base_seed: self.base_seed,
                        learn_from_targets: self.learn_from_targets,
                    });
                }
            }
        }
        Ok(out)
    }
}
