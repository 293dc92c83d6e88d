//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.
//!
//! Criteria 6 to 9 share model-type runs (256 instances each), computed
//! once per process. Run with `cargo test --release --test acceptance --
//! --nocapture --test-threads 1` to see the lines in order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use ccg_priming::analysis::{self, ModelSummary};
use ccg_priming::corpus::{self, Condition, Sentence, StimulusList};
use ccg_priming::experiment::{self, ModelTypeConfig, Setup, TrialRecord};
use ccg_priming::memory::{self, InstanceParams, Memory, NullChoice, SyntaxChunkStats};
use ccg_priming::parser::{tokenize, TraceEvent};
use ccg_priming::{compose, type_raise, Category, CombinationRule, Grammar, Parser, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 256;
const REPS: usize = 2000;
const BASE_SEED: u64 = 20_240_601;

fn c(s: &str) -> Category {
    Category::parse(s).unwrap()
}

fn report(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_01_rule_table() {
    let rows = [
        ("DP/NP", "NP", "DP", CombinationRule::ForwardComposition),
        ("DP", "TP\\DP", "TP", CombinationRule::BackwardComposition),
        ("DP/VoiceP", "VoiceP/PP", "DP/PP", CombinationRule::ForwardHarmonicComposition),
        ("TP\\DP", "eos\\TP", "eos\\DP", CombinationRule::BackwardHarmonicComposition),
        ("CP/TP", "TP\\DP", "CP\\DP", CombinationRule::ForwardCrossedComposition),
        ("TP/VoiceP", "eos\\TP", "eos/VoiceP", CombinationRule::BackwardCrossedComposition),
    ];
    let mut failures = Vec::new();
    for (state, tag, expected, rule) in rows {
        match compose(&c(state), &c(tag)) {
            Some((got, r)) if got == c(expected) && r == rule => {}
            other => failures.push(format!("{state} + {tag}: {other:?}")),
        }
    }
    let raised = type_raise(&c("DP")) == Some(c("TP/(TP\\DP)")) && type_raise(&c("NP")).is_none();
    let pass = failures.is_empty() && raised;
    report(1, pass, &format!("6 rows, raising ok: {raised}, failures: {failures:?}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Direct log-sum of power-law decayed traces, 0 for an empty history.
fn direct_log_sum(times: &[f64], now: f64, d: f64) -> f64 {
    if times.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for t in times {
        s += (now - t).powf(-d);
    }
    s.ln()
}

#[test]
fn criterion_02_closed_form_activation() {
    let started = Instant::now();
    let g = Grammar::parse(
        "THEORY toy\nATOMS\nS A B C\nLEXICON\nw : S/A=2 S/B=5 S/C\nv : A\n\
         NULLS\nn1 : A : S/A\nn2 : A : S/A\n",
    )
    .unwrap();
    let w = g.word_id("w").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = Vec::new();
    let mut check = |what: &str, got: f64, want: f64| {
        if !close(got, want) {
            mismatches.push(format!("{what}: {got} vs {want}"));
        }
    };
    for h in 0..1000 {
        let d = 0.5;
        let now: f64 = rng.random_range(5.0..500.0);
        let n_enc = rng.random_range(0..30);
        let mut enc: Vec<f64> = (0..n_enc).map(|_| rng.random_range(0.0..now - 1e-3)).collect();
        enc.sort_by(f64::total_cmp);
        let n_dis = rng.random_range(0..10);
        let dis: Vec<f64> = (0..n_dis).map(|_| rng.random_range(now - 4.0..now - 1e-3)).collect();
        let prior: f64 = rng.random_range(0.0..=1.0);
        let acts: Vec<f64> = (0..rng.random_range(0..6)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f: f64 = rng.random_range(0.01..1.0);
        let noise: f64 = rng.random_range(-1.0..1.0);

        // base level
        let stats = SyntaxChunkStats {
            category: None,
            encounters: enc.clone(),
        };
        let b = memory::base_level_activation(&stats, now, d).unwrap();
        check("base", b, direct_log_sum(&enc, now, d));
        // lexical
        check("lexical", memory::lexical_activation(prior, 1.5), 1.5 * prior);
        // inhibition, exact log-sum
        let i = memory::inhibition(&dis, now, d).unwrap();
        check("inhibition", i, direct_log_sum(&dis, now, d));
        // latency
        let direct_latency: f64 = acts.iter().map(|a| f * (-a).exp()).sum();
        check("latency", memory::retrieval_latency(&acts, f, 1.0), direct_latency);
        // total
        check("total", memory::total_activation(b, 1.5 * prior, i, noise), b + 1.5 * prior - i + noise);

        // the same quantities through an instance's memory
        let mut m = Memory::new(&g, InstanceParams::new(f, 0.0, h));
        let cat = c("S/B");
        for &t in &enc {
            m.record_encounter(&cat, t);
        }
        for &t in &dis {
            m.discard_log_mut().discard_category(0, cat.clone(), t);
        }
        m.clock.advance(now - m.now());
        let parts = m.category_activation(w, 0, 1, &cat, noise, false).unwrap();
        let i_used = direct_log_sum(&dis, now, d).max(0.0);
        check("memory base", parts.base, direct_log_sum(&enc, now, d));
        check("memory lexical", parts.lexical, 1.5 * 5.0 / 7.0);
        check("memory total", parts.total, direct_log_sum(&enc, now, d) + 1.5 * 5.0 / 7.0 - i_used + noise);
        let give_up = m.category_activation(w, 0, 1, &cat, noise, true).unwrap();
        check("give-up total", give_up.total, noise - i_used);

        // null choice: counts from random prior decisions
        let state = c("S/A");
        let options = [NullChoice::NotNull, NullChoice::Null(0), NullChoice::Null(1)];
        let mut counts = [0usize; 3];
        let mut decisions = Vec::new();
        for _ in 0..rng.random_range(0..8) {
            let k = rng.random_range(0..3);
            counts[k] += 1;
            decisions.push((state.clone(), options[k]));
        }
        m.learn_from_parse(&g, &[], &decisions).unwrap();
        for &t in &dis {
            m.discard_log_mut().discard_null_choice(0, state.clone(), options[1], t);
        }
        let total: usize = counts.iter().sum();
        let p = if total == 0 { 1.0 / 3.0 } else { counts[1] as f64 / total as f64 };
        let nc = m.null_choice_activation(0, &state, options[1], &options, noise, false).unwrap();
        check("null lexical", nc.lexical, 1.5 * p);
        check("null total", nc.total, 1.5 * p - i_used + noise);
        check("null base", nc.base, 0.0);
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = mismatches.is_empty() && secs < 10.0;
    report(
        2,
        pass,
        &format!("1000 histories, {} mismatches, {secs:.2} s; first: {:?}", mismatches.len(), mismatches.first()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_untrained_baseline() {
    let corpus = corpus::generate_corpus(200, &mut ChaCha8Rng::seed_from_u64(3));
    let mut nonzero = Vec::new();
    for g in [Grammar::whiz_deletion(), Grammar::participial_phase()] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = experiment::sample_instance_params(&mut rng, 3);
        let mut m = Memory::new(&g, params);
        let sample = corpus::sample_training_set(&corpus, 0, &mut rng).unwrap();
        let parser = Parser::new(&g, Strategy::BackToStart);
        experiment::train_instance(&mut m, &parser, &sample, &mut rng).unwrap();
        let cats = g
            .lexicon()
            .iter()
            .flat_map(|ch| ch.candidates.iter().map(|(c, _)| c.clone()))
            .chain(g.nulls().iter().map(|n| n.category.clone()));
        for cat in cats {
            let b = m.base_level(&cat).unwrap();
            if b != 0.0 {
                nonzero.push(format!("{}: {cat} = {b}", g.theory));
            }
        }
    }
    let pass = nonzero.is_empty();
    report(3, pass, &format!("nonzero base levels: {nonzero:?}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_corpus_fidelity() {
    let started = Instant::now();
    let sentences = corpus::generate_corpus(10_000, &mut ChaCha8Rng::seed_from_u64(4));
    let counts = corpus::structure_counts(&sentences);
    let (stat, p) = corpus::chi_square_fit(&counts);
    let freq = |s: corpus::Structure| {
        let i = corpus::Structure::ALL.iter().position(|&x| x == s).unwrap();
        counts[i] as f64 / 10_000.0
    };
    let secs = started.elapsed().as_secs_f64();
    let pass = sentences.len() == 10_000 && p > 0.001 && secs < 30.0;
    report(
        4,
        pass,
        &format!(
            "chi2 {stat:.2}, p {p:.4}; reduced passive RC {:.4}, full progressive RC {:.4}; {secs:.2} s",
            freq(corpus::Structure::ReducedPassiveRc),
            freq(corpus::Structure::FullProgressiveRc)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

const DATIVE: &str = "THEORY dative
ATOMS
DP NP TP PP PO DO eos
LEXICON
the : DP/NP
boy : NP
man : NP
gave : (TP\\DP)/PO (TP\\DP)/DO
books : NP PO/PP DO/NP
girls : NP PO/PP DO/NP
to : PP/NP
. : eos\\TP
";

#[test]
fn criterion_05_priming_emergence() {
    let started = Instant::now();
    let g = Grammar::parse(DATIVE).unwrap();
    let po = c("(TP\\DP)/PO");
    let primed = |prime: &str| {
        let mut m = Memory::new(&g, InstanceParams::new(0.2, 0.0, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = Parser::new(&g, Strategy::BackToStart)
            .parse_sentence(&tokenize(prime), &mut m, &mut rng)
            .unwrap();
        m.learn_from_parse(&g, &out.learned_categories(), &out.null_choices()).unwrap();
        m
    };
    let mut after_po = primed("the boy gave books to girls .");
    let mut after_do = primed("the boy gave girls books .");
    // measure both at the same moment
    let t = after_po.now().max(after_do.now()) + 0.5;
    after_po.clock.advance(t - after_po.now());
    after_do.clock.advance(t - after_do.now());
    let gave = g.word_id("gave").unwrap();
    let a_po = after_po.category_activation(gave, 2, 0, &po, 0.0, false).unwrap().total;
    let a_do = after_do.category_activation(gave, 2, 0, &po, 0.0, false).unwrap().total;

    let allowed = [c("TP/PO"), c("TP/DO")];
    let target = |m: &mut Memory| {
        Parser::new(&g, Strategy::BackToStart)
            .parse_prefix(&tokenize("the man gave"), m, &mut ChaCha8Rng::seed_from_u64(6), &allowed)
            .unwrap()
            .final_state()
            .cloned()
            .unwrap()
    };
    let po_target = target(&mut after_po);
    let do_target = target(&mut after_do);
    let secs = started.elapsed().as_secs_f64();
    let pass = a_po > a_do && po_target == allowed[0] && do_target == allowed[1] && secs < 5.0;
    report(
        5,
        pass,
        &format!("PO activation {a_po:.4} after PO prime vs {a_do:.4} after DO prime; targets {po_target} / {do_target}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6 to 9

struct Inputs {
    lists: Vec<StimulusList>,
    corpus: Vec<Sentence>,
}

fn inputs() -> &'static Inputs {
    static INPUTS: OnceLock<Inputs> = OnceLock::new();
    INPUTS.get_or_init(|| Inputs {
        lists: ccg_priming::cli::generate_lists(0).unwrap(),
        corpus: corpus::generate_corpus(10_000, &mut ChaCha8Rng::seed_from_u64(0)),
    })
}

/// Records for one model type, run once per process.
fn records(grammar: &str, training: usize, strategy: Strategy) -> Arc<Vec<TrialRecord>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<Vec<TrialRecord>>>>> = OnceLock::new();
    let config = ModelTypeConfig {
        grammar: grammar.into(),
        training_size: training,
        strategy,
        instances: INSTANCES,
        base_seed: BASE_SEED,
        learn_from_targets: true,
    };
    let mut cache = CACHE.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry(config.label())
        .or_insert_with(|| {
            let started = Instant::now();
            let g = experiment::resolve_grammar(grammar).unwrap();
            let input = inputs();
            let setup = Setup {
                config: &config,
                grammar: &g,
                lists: &input.lists,
                corpus: &input.corpus,
            };
            let recs = experiment::run_model_type(setup).unwrap();
            println!("  ran {} in {:.1} s", config.label(), started.elapsed().as_secs_f64());
            Arc::new(recs)
        })
        .clone()
}

fn summary(grammar: &str, training: usize, strategy: Strategy) -> ModelSummary {
    let recs = records(grammar, training, strategy);
    let s = analysis::summarize(&recs, REPS, 1);
    assert_eq!(s.len(), 1);
    s.into_iter().next().unwrap()
}

fn proportion(m: &ModelSummary, cond: Condition) -> (f64, f64, f64) {
    m.condition(cond)
        .map_or((f64::NAN, f64::NAN, f64::NAN), |c| (c.proportion, c.ci_low, c.ci_high))
}

const STRATEGIES: [Strategy; 2] = [Strategy::UncertaintyWeighted, Strategy::BackToStart];

#[test]
fn criterion_06_participial_phase_pattern() {
    let mut pass = true;
    let mut detail = Vec::new();
    for strategy in STRATEGIES {
        let m = summary("participial-phase", 0, strategy);
        let (rrc, rrc_lo, _) = proportion(&m, Condition::Rrc);
        let (amv, _, amv_hi) = proportion(&m, Condition::Amv);
        let (c3, c3_lo, c3_hi) = m
            .contrasts
            .as_ref()
            .map_or((f64::NAN, f64::NAN, f64::NAN), |cs| (cs.estimate.c3, cs.ci[2].0, cs.ci[2].1));
        let ok = rrc > amv && rrc_lo > amv_hi && c3_lo <= 0.0 && 0.0 <= c3_hi;
        pass &= ok;
        detail.push(format!(
            "{strategy}: RRC {rrc:.3} (low {rrc_lo:.3}) vs AMV {amv:.3} (high {amv_hi:.3}), C3 {c3:+.3} [{c3_lo:+.3}, {c3_hi:+.3}]"
        ));
    }
    report(6, pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_07_whiz_deletion_divergence() {
    let mut pass = true;
    let mut detail = Vec::new();
    for strategy in STRATEGIES {
        let m = summary("whiz-deletion", 0, strategy);
        let (c3, lo, hi) = m
            .contrasts
            .as_ref()
            .map_or((f64::NAN, f64::NAN, f64::NAN), |cs| (cs.estimate.c3, cs.ci[2].0, cs.ci[2].1));
        let ok = c3 > 0.0 && lo > 0.0;
        pass &= ok;
        detail.push(format!(
            "{strategy}: C3 {c3:+.3} [{lo:+.3}, {hi:+.3}], ProgRRC {:.3} vs FRC {:.3}",
            proportion(&m, Condition::ProgRrc).0,
            proportion(&m, Condition::Frc).0
        ));
    }
    report(7, pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_08_exclusion_magnitude() {
    let mut fractions = Vec::new();
    let mut detail = Vec::new();
    for grammar in ["participial-phase", "whiz-deletion"] {
        for strategy in STRATEGIES {
            let m = summary(grammar, 0, strategy);
            fractions.push(m.excluded_fraction());
            detail.push(format!("{}: {:.3}", m.model, m.excluded_fraction()));
        }
    }
    fractions.sort_by(f64::total_cmp);
    let median = (fractions[1] + fractions[2]) / 2.0;
    let pass = median >= 0.40;
    report(8, pass, &format!("median excluded {median:.3}; {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_09_training_attenuation() {
    let mut pass = true;
    let mut detail = Vec::new();
    for strategy in STRATEGIES {
        let gap = |training| {
            let m = summary("participial-phase", training, strategy);
            proportion(&m, Condition::Rrc).0 - proportion(&m, Condition::Amv).0
        };
        let (g0, g500) = (gap(0), gap(500));
        // an all-excluded model has no gap at all, which is not smaller
        let ok = g500 < g0;
        pass &= ok;
        detail.push(format!("{strategy}: gap {g0:.3} at 0, {g500:.3} at 500"));
    }
    report(9, pass, &detail.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 10

fn run_cli(args: &[&str]) -> i32 {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = ccg_priming::cli::main_with_args(
        std::iter::once("ccg-priming").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    assert_eq!(code, 0, "{args:?}: {}", String::from_utf8_lossy(&err));
    code
}

fn pipeline(dir: &std::path::Path, workers: &str) -> Vec<(String, Vec<u8>)> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    run_cli(&["gen-corpus", "--size", "2000", "--seed", "7", "--out", &p("corpus.tsv")]);
    run_cli(&["gen-lists", "--seed", "7", "--out", &p("lists.tsv")]);
    std::fs::write(
        dir.join("experiment.toml"),
        "base_seed = 11\ninstances = 2\ntraining_sizes = [0, 10]\nstrategies = [\"uncertainty-weighted\"]\n\
         corpus = \"corpus.tsv\"\nlists = \"lists.tsv\"\n",
    )
    .unwrap();
    run_cli(&["run", "--config", &p("experiment.toml"), "--workers", workers, "--out", &p("run")]);
    run_cli(&[
        "parse",
        "--noise",
        "0.4",
        "--seed",
        "9",
        "--trace",
        "the cat chased by the dog ran .",
    ]);
    let mut records: Vec<String> = std::fs::read_dir(dir.join("run"))
        .unwrap()
        .map(|e| e.unwrap().path().to_str().unwrap().to_string())
        .filter(|p| p.ends_with(".tsv"))
        .collect();
    records.sort();
    let mut args = vec!["analyze", "--reps", "200", "--out"];
    let summary = p("summary.tsv");
    args.push(&summary);
    args.extend(records.iter().map(String::as_str));
    run_cli(&args);

    let mut files = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("run")] {
        for e in std::fs::read_dir(sub).unwrap() {
            let path = e.unwrap().path();
            if path.is_file() {
                let name = path.strip_prefix(dir).unwrap().to_str().unwrap().to_string();
                files.push((name, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_10_determinism() {
    let started = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path(), "1");
    let second = pipeline(b.path(), "2");
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let secs = started.elapsed().as_secs_f64();
    let pass = first.len() == second.len() && first.len() >= 7 && differing.is_empty() && secs < 60.0;
    report(10, pass, &format!("{} files compared {names:?}, differing {differing:?}, {secs:.1} s", first.len()));
    assert!(pass);
}

// ---------------------------------------------------------------- 11

#[test]
fn criterion_11_give_up_termination() {
    let started = Instant::now();
    // `hot` strongly prefers a category that can never integrate
    let g = Grammar::parse(
        "THEORY adversarial\nATOMS\nS A B\nLEXICON\nhot : S/A=50 S/B\ncold : B\n",
    )
    .unwrap();
    let mut m = Memory::new(&g, InstanceParams::new(0.05, 0.2, 11));
    for k in 0..20_000 {
        m.record_encounter(&c("S/A"), 0.9 * k as f64 / 20_000.0);
    }
    let out = Parser::new(&g, Strategy::BackToStart)
        .with_trace(true)
        .parse_sentence(&["hot", "cold"], &mut m, &mut ChaCha8Rng::seed_from_u64(11))
        .unwrap();
    let mut reanalyses = 0;
    let mut first_give_up = None;
    for e in &out.trace {
        match e {
            TraceEvent::Reanalysis(_) => reanalyses += 1,
            TraceEvent::Retrieval { parts, .. } if parts.base == 0.0 && parts.lexical == 0.0 => {
                first_give_up.get_or_insert(reanalyses);
            }
            _ => {}
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = out.gave_up
        && first_give_up == Some(2000)
        && out.final_state() == Some(&c("S"))
        && secs < 60.0;
    report(
        11,
        pass,
        &format!(
            "completed with {} reanalyses, give-up first used after {first_give_up:?}, final {:?}, {secs:.1} s",
            out.reanalyses,
            out.final_state().map(Category::to_string)
        ),
    );
    assert!(pass);
}
