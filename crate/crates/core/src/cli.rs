//! Command-line front end.
//!
//! Subcommands: `gen-corpus`, `gen-lists`, `parse`, `run`, `analyze`.
//! Outputs are tab-separated text. Relative output paths land in the
//! directory named by `CCG_PRIMING_OUT` (default: the working directory).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser as ClapParser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis;
use crate::ccg::Category;
use crate::corpus::{self, Sentence, StimulusList};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig, Setup};
use crate::memory::{InstanceParams, Memory};
use crate::parser::{tokenize, Parser, Strategy, TokenKind, TraceEvent};

pub const OUT_DIR_ENV: &str = "CCG_PRIMING_OUT";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, ClapParser)]
#[command(name = "ccg-priming", version, about = "Serial CCG parser and structural priming simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled training corpus.
    GenCorpus {
        #[arg(long, default_value_t = 10_000)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "corpus.tsv")]
        out: PathBuf,
    },
    /// Generate the four counterbalanced stimulus lists.
    GenLists {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "lists.tsv")]
        out: PathBuf,
    },
    /// Parse one sentence with a fresh instance and print the result.
    Parse(ParseArgs),
    /// Run every model type in an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to all available cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Override the instance count of every model type.
        #[arg(long)]
        instances: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Summarize one or more record files.
    Analyze {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long, default_value_t = analysis::DEFAULT_REPS)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Summary file.
        #[arg(long, default_value = "summary.tsv")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Bundled grammar name or grammar file.
    #[arg(long, default_value = "participial-phase")]
    pub grammar: String,
    #[arg(long, default_value = "back-to-start")]
    pub strategy: String,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.2)]
    pub latency_factor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print one line per retrieval, null decision and reanalysis.
    #[arg(long)]
    pub trace: bool,
    /// Treat the input as a prefix that must end in one of these states
    /// (comma separated), e.g. `DP/PP,TP/DP`.
    #[arg(long, value_delimiter = ',')]
    pub prefix_states: Vec<String>,
    #[arg(required = true, num_args = 1..)]
    pub sentence: Vec<String>,
}

/// Record of what a `run` produced and how to reproduce it.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub base_seed: u64,
    pub corpus_seed: u64,
    pub list_seed: u64,
    pub instances: usize,
    pub grammars: Vec<GrammarVersion>,
    pub outputs: Vec<String>,
    /// The effective configuration, overrides applied.
    pub config: ExperimentConfig,
}

#[derive(Debug, Serialize)]
pub struct GrammarVersion {
    pub grammar: String,
    pub theory: String,
    pub fingerprint: String,
}

/// Parses arguments and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{rendered}")
            } else {
                write!(stderr, "{rendered}")
            };
            return code;
        }
    };
    match execute(cli.command, &output_dir(), stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn output_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

pub fn execute(command: Command, out_dir: &Path, stdout: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match command {
        Command::GenCorpus { size, seed, out } => {
            let path = resolve(out_dir, &out);
            let sentences = corpus::generate_corpus(size, &mut ChaCha8Rng::seed_from_u64(seed));
            ensure_parent(&path)?;
            corpus::write_corpus(&path, &sentences)?;
            writeln!(stdout, "wrote {} sentences to {}", sentences.len(), path.display()).map_err(io)
        }
        Command::GenLists { seed, out } => {
            let path = resolve(out_dir, &out);
            let lists = generate_lists(seed)?;
            ensure_parent(&path)?;
            corpus::write_lists(&path, &lists)?;
            writeln!(stdout, "wrote {} lists to {}", lists.len(), path.display()).map_err(io)
        }
        Command::Parse(args) => cmd_parse(&args, stdout),
        Command::Run {
            config,
            workers,
            instances,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(n) = instances {
                cfg.instances = n;
            }
            let dir = resolve(out_dir, &out);
            let manifest = cmd_run(&cfg, workers, &dir)?;
            for o in &manifest.outputs {
                writeln!(stdout, "wrote {}", dir.join(o).display()).map_err(io)?;
            }
            Ok(())
        }
        Command::Analyze {
            records,
            reps,
            seed,
            out,
        } => {
            let mut all = Vec::new();
            for p in &records {
                all.extend(experiment::read_records(p)?);
            }
            let summaries = analysis::summarize(&all, reps, seed);
            let path = resolve(out_dir, &out);
            write_file(&path, &analysis::summary_tsv(&summaries))?;
            if summaries.is_empty() {
                writeln!(stdout, "no records: empty summary").map_err(io)?;
            }
            write!(stdout, "{}", analysis::console_table(&summaries)).map_err(io)?;
            writeln!(stdout, "wrote {}", path.display()).map_err(io)
        }
    }
}

pub fn generate_lists(seed: u64) -> Result<Vec<StimulusList>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = corpus::generate_items(&mut rng);
    corpus::build_lists(&items, &mut rng)
}

pub fn cmd_parse(args: &ParseArgs, out: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    let grammar = experiment::resolve_grammar(&args.grammar)?;
    let strategy = Strategy::from_name(&args.strategy)?;
    if !(args.noise >= 0.0) || !(args.latency_factor > 0.0) {
        return Err(Error::Invalid("noise must be >= 0 and latency factor > 0".into()));
    }
    let tokens = tokenize(&args.sentence.join(" "));
    let mut memory = Memory::new(&grammar, InstanceParams::new(args.latency_factor, args.noise, args.seed));
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let parser = Parser::new(&grammar, strategy).with_trace(args.trace);
    let outcome = if args.prefix_states.is_empty() {
        parser.parse_sentence(&tokens, &mut memory, &mut rng)?
    } else {
        let allowed = args
            .prefix_states
            .iter()
            .map(|s| Category::parse(s.trim()))
            .collect::<Result<Vec<_>>>()?;
        parser.parse_prefix(&tokens, &mut memory, &mut rng, &allowed)?
    };

    if args.trace {
        writeln!(out, "{}", TraceEvent::TSV_HEADER).map_err(io)?;
        for e in &outcome.trace {
            writeln!(out, "{}", e.to_tsv()).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    let mut nulls = 0;
    for t in &outcome.state.tokens {
        match t.kind {
            TokenKind::Overt { .. } => writeln!(out, "{}\t{}\t{}", t.text, t.category, t.state_after),
            TokenKind::Null { null_id } => {
                nulls += 1;
                writeln!(
                    out,
                    "<{}>\t{}\t{}",
                    grammar.nulls()[null_id].name,
                    t.category,
                    t.state_after
                )
            }
        }
        .map_err(io)?;
    }
    writeln!(
        out,
        "final state: {}",
        outcome.final_state().map_or("-".to_string(), Category::to_string)
    )
    .map_err(io)?;
    writeln!(out, "null tokens: {nulls}").map_err(io)?;
    writeln!(out, "reanalyses: {}", outcome.reanalyses).map_err(io)?;
    writeln!(out, "simulated time: {:.6} s", outcome.duration()).map_err(io)
}

fn load_inputs(cfg: &ExperimentConfig) -> Result<(Vec<Sentence>, Vec<StimulusList>)> {
    let sentences = match &cfg.corpus {
        Some(p) => corpus::read_corpus(p)?,
        None => corpus::generate_corpus(cfg.corpus_size, &mut ChaCha8Rng::seed_from_u64(cfg.corpus_seed)),
    };
    let lists = match &cfg.lists {
        Some(p) => corpus::read_lists(p)?,
        None => generate_lists(cfg.list_seed)?,
    };
    if let Some(&n) = cfg.training_sizes.iter().find(|&&n| n > sentences.len()) {
        return Err(Error::Invalid(format!(
            "training size {n} exceeds the {} corpus sentences",
            sentences.len()
        )));
    }
    Ok((sentences, lists))
}

/// `path` expressed relative to the directory `base`, or unchanged when
/// either cannot be resolved.
fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let (Ok(path), Ok(base)) = (path.canonicalize(), base.canonicalize()) else {
        return path.to_path_buf();
    };
    let p: Vec<_> = path.components().collect();
    let b: Vec<_> = base.components().collect();
    let common = p.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for c in &p[common..] {
        out.push(c);
    }
    out
}

/// Fails on the first stimulus word the grammar does not know.
fn check_stimuli(lists: &[StimulusList], grammar: &crate::grammar::Grammar) -> Result<()> {
    let texts = lists
        .iter()
        .flat_map(|l| &l.trials)
        .flat_map(|t| t.primes.iter().chain(std::iter::once(&t.target)));
    for text in texts {
        if let Some(word) = tokenize(text).into_iter().find(|w| grammar.word_id(w).is_none()) {
            return Err(Error::Invalid(format!(
                "stimulus '{text}' uses '{word}', which the {} grammar lacks",
                grammar.theory
            )));
        }
    }
    Ok(())
}

/// Runs every model type, writing `<label>.tsv` per type and a manifest.
pub fn cmd_run(cfg: &ExperimentConfig, workers: Option<usize>, dir: &Path) -> Result<RunManifest> {
    let model_types = cfg.model_types()?;
    let (sentences, lists) = load_inputs(cfg)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut grammars = Vec::new();
    let mut outputs = Vec::new();
    for name in &cfg.grammars {
        let g = experiment::resolve_grammar(name)?;
        check_stimuli(&lists, &g)?;
        corpus::validate_vocabulary(&sentences, &[&g])?;
        grammars.push(GrammarVersion {
            grammar: name.clone(),
            theory: g.theory.name().to_string(),
            fingerprint: g.fingerprint(),
        });
    }
    for mt in &model_types {
        let grammar = experiment::resolve_grammar(&mt.grammar)?;
        let setup = Setup {
            config: mt,
            grammar: &grammar,
            lists: &lists,
            corpus: &sentences,
        };
        log::info!("running {} ({} instances)", mt.label(), mt.instances);
        let records = experiment::with_workers(workers, || experiment::run_model_type(setup))??;
        let file = format!("{}.tsv", mt.label());
        experiment::write_records(&dir.join(&file), &records)?;
        outputs.push(file);
    }

    // paths relative to the output directory keep the manifest relocatable
    let mut recorded = cfg.clone();
    for p in [&mut recorded.lists, &mut recorded.corpus].into_iter().flatten() {
        *p = relative_to(p, dir);
    }
    for g in &mut recorded.grammars {
        if Path::new(g.as_str()).exists() {
            *g = relative_to(Path::new(g.as_str()), dir).to_string_lossy().into_owned();
        }
    }
    let config_text = recorded.to_toml();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: hex::encode(Sha256::digest(config_text.as_bytes())),
        base_seed: cfg.base_seed,
        corpus_seed: cfg.corpus_seed,
        list_seed: cfg.list_seed,
        instances: cfg.instances,
        grammars,
        outputs,
        config: recorded,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Internal(format!("manifest: {e}")))?;
    write_file(&dir.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}
