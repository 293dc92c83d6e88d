//! Exclusion, per-condition RRC proportions and contrasts.
//!
//! Instances that never produced an RRC parse are dropped before anything
//! is estimated. Intervals come from a cluster bootstrap over instances:
//! each replicate resamples instance ids with replacement and recomputes
//! every proportion and contrast from the pooled trial counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Condition;
use crate::error::{Error, Result};
use crate::experiment::TrialRecord;

pub const DEFAULT_REPS: usize = 2000;
/// Count added to both cells of a condition whose proportion is 0 or 1.
pub const SMOOTHING: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Exclusion {
    pub kept: Vec<TrialRecord>,
    pub instances: usize,
    pub excluded: usize,
}

impl Exclusion {
    pub fn excluded_fraction(&self) -> f64 {
        if self.instances == 0 {
            0.0
        } else {
            self.excluded as f64 / self.instances as f64
        }
    }
}

/// Drops every record of each (model, instance) with no RRC classification.
pub fn apply_exclusion(records: &[TrialRecord]) -> Exclusion {
    let mut seen = BTreeSet::new();
    let mut with_rrc = BTreeSet::new();
    for r in records {
        seen.insert((r.model.as_str(), r.instance));
        if r.is_rrc() {
            with_rrc.insert((r.model.as_str(), r.instance));
        }
    }
    let kept = records
        .iter()
        .filter(|r| with_rrc.contains(&(r.model.as_str(), r.instance)))
        .cloned()
        .collect();
    Exclusion {
        kept,
        instances: seen.len(),
        excluded: seen.len() - with_rrc.len(),
    }
}

/// RRC and total valid-trial counts for one condition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub rrc: usize,
    pub trials: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.rrc += other.rrc;
        self.trials += other.trials;
    }

    pub fn proportion(self) -> Option<f64> {
        (self.trials > 0).then(|| self.rrc as f64 / self.trials as f64)
    }
}

/// Log-odds of an RRC parse, smoothed when the proportion is 0 or 1.
pub fn log_odds(c: Counts) -> Result<f64> {
    if c.trials == 0 {
        return Err(Error::Invalid("log-odds of a condition with no trials".into()));
    }
    let (yes, no) = (c.rrc as f64, (c.trials - c.rrc) as f64);
    Ok(if c.rrc == 0 || c.rrc == c.trials {
        ((yes + SMOOTHING) / (no + SMOOTHING)).ln()
    } else {
        (yes / no).ln()
    })
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contrasts {
    /// Mean of the three RC conditions minus AMV.
    pub c1: f64,
    /// RRC minus the mean of ProgRRC and FRC.
    pub c2: f64,
    /// ProgRRC minus FRC.
    pub c3: f64,
}

impl Contrasts {
    /// From log-odds in `Condition::ALL` order (AMV, RRC, FRC, ProgRRC).
    pub fn from_log_odds(lo: [f64; 4]) -> Contrasts {
        let [amv, rrc, frc, prog] = lo;
        Contrasts {
            c1: ((rrc - amv) + (frc - amv) + (prog - amv)) / 3.0,
            c2: rrc - (prog + frc) / 2.0,
            c3: prog - frc,
        }
    }

    /// From proportions strictly inside (0, 1), in `Condition::ALL` order.
    pub fn from_proportions(p: [f64; 4]) -> Result<Contrasts> {
        if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::Invalid(format!("proportion {bad} is not strictly inside (0, 1)")));
        }
        Ok(Contrasts::from_log_odds(p.map(logit)))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.c1, self.c2, self.c3]
    }
}

fn condition_slot(c: Condition) -> usize {
    Condition::ALL.iter().position(|&x| x == c).expect("condition listed")
}

/// Contrasts from per-condition counts, in `Condition::ALL` order.
pub fn contrasts_from_counts(counts: &[Counts; 4]) -> Result<Contrasts> {
    let mut lo = [0.0; 4];
    for (slot, c) in counts.iter().enumerate() {
        lo[slot] = log_odds(*c).map_err(|_| {
            Error::Invalid(format!("condition {} has no trials", Condition::ALL[slot]))
        })?;
    }
    Ok(Contrasts::from_log_odds(lo))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSummary {
    pub model: String,
    pub condition: Condition,
    /// Included instances contributing at least one valid trial.
    pub instances: usize,
    pub counts: Counts,
    pub proportion: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Contrasts from a full set of condition summaries.
pub fn helmert_contrasts(summaries: &[ConditionSummary]) -> Result<Contrasts> {
    let mut counts: [Option<Counts>; 4] = [None; 4];
    for s in summaries {
        counts[condition_slot(s.condition)] = Some(s.counts);
    }
    let mut full = [Counts::default(); 4];
    for (slot, c) in counts.iter().enumerate() {
        full[slot] = c.ok_or_else(|| Error::Invalid(format!("no summary for {}", Condition::ALL[slot])))?;
    }
    contrasts_from_counts(&full)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastSummary {
    pub estimate: Contrasts,
    /// Percentile intervals for c1, c2, c3.
    pub ci: [(f64, f64); 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSummary {
    pub model: String,
    pub instances: usize,
    pub excluded: usize,
    /// Set when no instance survived exclusion; `conditions` is then empty.
    pub empty: bool,
    pub conditions: Vec<ConditionSummary>,
    pub contrasts: Option<ContrastSummary>,
}

impl ModelSummary {
    pub fn excluded_fraction(&self) -> f64 {
        if self.instances == 0 {
            0.0
        } else {
            self.excluded as f64 / self.instances as f64
        }
    }

    pub fn condition(&self, c: Condition) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|s| s.condition == c)
    }
}

/// Per-instance counts, instances in id order.
fn instance_counts(records: &[TrialRecord]) -> Vec<[Counts; 4]> {
    let mut by_instance: BTreeMap<usize, [Counts; 4]> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_valid()) {
        let slot = &mut by_instance.entry(r.instance).or_default()[condition_slot(r.condition)];
        slot.trials += 1;
        slot.rrc += usize::from(r.is_rrc());
    }
    by_instance.into_values().collect()
}

fn pooled<'a>(rows: impl Iterator<Item = &'a [Counts; 4]>) -> [Counts; 4] {
    let mut total = [Counts::default(); 4];
    for row in rows {
        for (t, c) in total.iter_mut().zip(row) {
            t.add(*c);
        }
    }
    total
}

/// Value at quantile `q` of sorted data, linearly interpolated.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn percentile_interval(mut values: Vec<f64>) -> (f64, f64) {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    values.sort_by(f64::total_cmp);
    (quantile(&values, 0.025), quantile(&values, 0.975))
}

/// One bootstrap replicate: pooled counts over resampled instances.
fn replicate(rows: &[[Counts; 4]], seed: u64, rep: usize) -> [Counts; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    pooled((0..rows.len()).map(|_| &rows[rng.random_range(0..rows.len())]))
}

fn replicates(rows: &[[Counts; 4]], reps: usize, seed: u64) -> Vec<[Counts; 4]> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..reps).into_par_iter().map(|rep| replicate(rows, seed, rep)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..reps).map(|rep| replicate(rows, seed, rep)).collect()
    }
}

/// Proportions with cluster-bootstrap intervals for one model's included
/// records. Conditions without valid trials are left out.
pub fn condition_proportions(
    model: &str,
    records: &[TrialRecord],
    reps: usize,
    seed: u64,
) -> (Vec<ConditionSummary>, Vec<[Counts; 4]>) {
    let rows = instance_counts(records);
    if rows.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let total = pooled(rows.iter());
    let boot = replicates(&rows, reps.max(1), seed);
    let mut out = Vec::new();
    for (slot, &condition) in Condition::ALL.iter().enumerate() {
        let Some(proportion) = total[slot].proportion() else {
            continue;
        };
        let (lo, hi) = percentile_interval(boot.iter().filter_map(|b| b[slot].proportion()).collect());
        out.push(ConditionSummary {
            model: model.to_string(),
            condition,
            instances: rows.iter().filter(|r| r[slot].trials > 0).count(),
            counts: total[slot],
            proportion,
            // interpolated percentiles can miss the estimate by rounding
            ci_low: lo.min(proportion),
            ci_high: hi.max(proportion),
        });
    }
    (out, boot)
}

/// Exclusion, proportions and contrasts for every model in `records`.
pub fn summarize(records: &[TrialRecord], reps: usize, seed: u64) -> Vec<ModelSummary> {
    let mut models: BTreeMap<&str, Vec<TrialRecord>> = BTreeMap::new();
    for r in records {
        models.entry(r.model.as_str()).or_default().push(r.clone());
    }
    models
        .into_iter()
        .map(|(model, recs)| summarize_model(model, &recs, reps, seed))
        .collect()
}

pub fn summarize_model(model: &str, records: &[TrialRecord], reps: usize, seed: u64) -> ModelSummary {
    let exclusion = apply_exclusion(records);
    let (conditions, boot) = condition_proportions(model, &exclusion.kept, reps, seed);
    let contrasts = (conditions.len() == 4).then(|| {
        let estimate = helmert_contrasts(&conditions).expect("all conditions present");
        let per_rep: Vec<[f64; 3]> = boot
            .iter()
            .filter_map(|b| contrasts_from_counts(b).ok())
            .map(|c| c.as_array())
            .collect();
        let ci = [0, 1, 2].map(|k| percentile_interval(per_rep.iter().map(|c| c[k]).collect()));
        ContrastSummary { estimate, ci }
    });
    ModelSummary {
        model: model.to_string(),
        instances: exclusion.instances,
        excluded: exclusion.excluded,
        empty: conditions.is_empty(),
        conditions,
        contrasts,
    }
}

pub const SUMMARY_HEADER: &str =
    "model\trow\tinstances\texcluded_fraction\trrc\ttrials\testimate\tci_low\tci_high";

/// One row per condition and one per contrast; an empty model gets a
/// single `empty` row.
pub fn summary_tsv(summaries: &[ModelSummary]) -> String {
    let mut out = String::new();
    writeln!(out, "{SUMMARY_HEADER}").unwrap();
    for m in summaries {
        let ex = m.excluded_fraction();
        if m.empty {
            writeln!(out, "{}\tempty\t0\t{ex:.6}\t0\t0\tNA\tNA\tNA", m.model).unwrap();
            continue;
        }
        for c in &m.conditions {
            writeln!(
                out,
                "{}\t{}\t{}\t{ex:.6}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                m.model, c.condition, c.instances, c.counts.rrc, c.counts.trials, c.proportion, c.ci_low, c.ci_high
            )
            .unwrap();
        }
        if let Some(cs) = &m.contrasts {
            let n = m.instances - m.excluded;
            for (k, (name, est)) in ["C1", "C2", "C3"].iter().zip(cs.estimate.as_array()).enumerate() {
                let (lo, hi) = cs.ci[k];
                writeln!(out, "{}\t{name}\t{n}\t{ex:.6}\tNA\tNA\t{est:.6}\t{lo:.6}\t{hi:.6}", m.model).unwrap();
            }
        }
    }
    out
}

/// Fixed-width table for the terminal.
pub fn console_table(summaries: &[ModelSummary]) -> String {
    let mut out = String::new();
    for m in summaries {
        writeln!(
            out,
            "{}  ({} instances, {:.1}% excluded)",
            m.model,
            m.instances,
            100.0 * m.excluded_fraction()
        )
        .unwrap();
        if m.empty {
            writeln!(out, "  no instance produced an RRC parse").unwrap();
            continue;
        }
        writeln!(out, "  {:<10} {:>6} {:>9}  {:<22}", "condition", "n", "P(RRC)", "95% bootstrap CI").unwrap();
        for c in &m.conditions {
            writeln!(
                out,
                "  {:<10} {:>6} {:>9.3}  [{:.3}, {:.3}]",
                c.condition.to_string(),
                c.counts.trials,
                c.proportion,
                c.ci_low,
                c.ci_high
            )
            .unwrap();
        }
        if let Some(cs) = &m.contrasts {
            for (k, (name, est)) in ["C1 RC-AMV", "C2 RRC-rest", "C3 Prog-FRC"].iter().zip(cs.estimate.as_array()).enumerate() {
                writeln!(out, "  {:<12} {:>+8.3}  [{:+.3}, {:+.3}]", name, est, cs.ci[k].0, cs.ci[k].1).unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccg::Category;
    use crate::experiment::Classification;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn record(instance: usize, condition: Condition, rrc: bool) -> TrialRecord {
        let state = if rrc { "DP/PP" } else { "TP/DP" };
        TrialRecord {
            model: "m".into(),
            instance,
            list: instance % 4,
            trial: 0,
            verb: "chased".into(),
            condition,
            state: Some(Category::parse(state).unwrap()),
            classification: if rrc { Classification::Rrc } else { Classification::NonRrc },
            reanalyses: 0,
            duration: 1.0,
            prime_reanalyses: 0,
            latency_factor: 0.2,
            noise_sd: 0.3,
        }
    }

    /// `n` instances, each with `per` trials per condition; RRC decided by `f`.
    fn synthetic(n: usize, per: usize, mut f: impl FnMut(usize, Condition, usize) -> bool) -> Vec<TrialRecord> {
        let mut out = Vec::new();
        for i in 0..n {
            for c in Condition::ALL {
                for k in 0..per {
                    out.push(record(i, c, f(i, c, k)));
                }
            }
        }
        out
    }

    #[test]
    fn instances_without_rrc_are_removed_entirely() {
        let mut recs = synthetic(3, 6, |i, c, k| i == 1 && c == Condition::Rrc && k == 0);
        recs.extend(synthetic(1, 6, |_, _, _| false).into_iter().map(|mut r| {
            r.instance = 7;
            r
        }));
        let ex = apply_exclusion(&recs);
        assert_eq!(ex.instances, 4);
        assert_eq!(ex.excluded, 3);
        assert_eq!(ex.kept.len(), 24);
        assert!(ex.kept.iter().all(|r| r.instance == 1));
        assert_eq!(ex.excluded_fraction(), 0.75);
    }

    #[test]
    fn exclusion_is_idempotent() {
        let recs = synthetic(10, 6, |i, _, k| i % 3 == 0 && k == 2);
        let once = apply_exclusion(&recs);
        let twice = apply_exclusion(&once.kept);
        assert_eq!(once.kept, twice.kept);
        assert_eq!(twice.excluded, 0);
    }

    #[test]
    fn invalid_trials_count_toward_nothing() {
        let mut recs = synthetic(1, 2, |_, _, k| k == 0);
        recs.push(TrialRecord {
            classification: Classification::Invalid,
            state: None,
            ..record(0, Condition::Amv, false)
        });
        let (s, _) = condition_proportions("m", &recs, 10, 0);
        assert_eq!(s[0].counts, Counts { rrc: 1, trials: 2 });
    }

    #[test]
    fn all_rrc_condition_has_a_degenerate_interval() {
        let recs = synthetic(5, 6, |_, c, _| c == Condition::Rrc);
        let (s, _) = condition_proportions("m", &recs, 200, 1);
        let rrc = s.iter().find(|x| x.condition == Condition::Rrc).unwrap();
        assert_eq!((rrc.proportion, rrc.ci_low, rrc.ci_high), (1.0, 1.0, 1.0));
    }

    #[test]
    fn proportions_ignore_record_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut recs = synthetic(20, 6, |i, c, k| (i + k + condition_slot(c)) % 3 == 0);
        let a = summarize(&recs, 300, 9);
        recs.shuffle(&mut rng);
        assert_eq!(a, summarize(&recs, 300, 9));
    }

    #[test]
    fn interval_brackets_the_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let recs = synthetic(40, 6, |_, _, _| rng.random_bool(0.3));
        let (s, _) = condition_proportions("m", &recs, 2000, 5);
        for c in s {
            assert!(0.0 <= c.ci_low && c.ci_low <= c.proportion && c.proportion <= c.ci_high && c.ci_high <= 1.0);
            assert!(c.ci_high > c.ci_low);
        }
    }

    #[test]
    fn intervals_cover_the_true_proportion() {
        let p = 0.3;
        let mut covered = 0;
        for sim in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(sim);
            let recs = synthetic(30, 6, |_, _, _| rng.random_bool(p));
            let (s, _) = condition_proportions("m", &recs, 500, sim);
            let amv = &s[0];
            covered += usize::from(amv.ci_low <= p && p <= amv.ci_high);
        }
        assert!(covered >= 180, "coverage {covered}/200");
    }

    #[test]
    fn contrast_examples() {
        let equal = Contrasts::from_proportions([0.4; 4]).unwrap();
        assert_eq!(equal.as_array(), [0.0; 3]);
        let c = Contrasts::from_proportions([0.1, 0.3, 0.2, 0.2]).unwrap();
        assert_eq!(c.c3, 0.0);
        let l = |p: f64| (p / (1.0 - p)).ln();
        assert!((c.c1 - ((l(0.3) + 2.0 * l(0.2)) / 3.0 - l(0.1))).abs() < 1e-12);
        assert!((c.c2 - (l(0.3) - l(0.2))).abs() < 1e-12);
        assert!(Contrasts::from_proportions([0.0, 0.3, 0.2, 0.2]).is_err());
    }

    #[test]
    fn boundary_counts_are_smoothed() {
        assert_eq!(log_odds(Counts { rrc: 0, trials: 4 }).unwrap(), (0.5f64 / 4.5).ln());
        assert_eq!(log_odds(Counts { rrc: 4, trials: 4 }).unwrap(), (4.5f64 / 0.5).ln());
        assert_eq!(log_odds(Counts { rrc: 1, trials: 4 }).unwrap(), (1.0f64 / 3.0).ln());
        assert!(log_odds(Counts::default()).is_err());
    }

    #[test]
    fn missing_condition_is_an_error() {
        let recs: Vec<TrialRecord> = synthetic(3, 2, |_, _, k| k == 0)
            .into_iter()
            .filter(|r| r.condition != Condition::Frc)
            .collect();
        let (s, _) = condition_proportions("m", &recs, 10, 0);
        assert_eq!(s.len(), 3);
        assert!(helmert_contrasts(&s).is_err());
        assert!(summarize_model("m", &recs, 10, 0).contrasts.is_none());
    }

    #[test]
    fn empty_model_is_flagged() {
        let recs = synthetic(4, 6, |_, _, _| false);
        let m = summarize_model("m", &recs, 10, 0);
        assert!(m.empty && m.conditions.is_empty() && m.contrasts.is_none());
        assert_eq!(m.excluded_fraction(), 1.0);
        let tsv = summary_tsv(&[m]);
        assert_eq!(tsv.lines().count(), 2);
        assert!(tsv.lines().nth(1).unwrap().starts_with("m\tempty"));
        assert!(summarize(&[], 10, 0).is_empty());
    }

    #[test]
    fn summary_tsv_has_conditions_and_contrasts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let recs = synthetic(12, 6, |_, c, _| rng.random_bool(if c == Condition::Rrc { 0.6 } else { 0.2 }));
        let s = summarize(&recs, 200, 1);
        let tsv = summary_tsv(&s);
        let rows: Vec<&str> = tsv.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap()).collect();
        assert_eq!(rows, ["AMV", "RRC", "FRC", "ProgRRC", "C1", "C2", "C3"]);
        let cs = s[0].contrasts.as_ref().unwrap();
        assert!(cs.ci.iter().all(|(lo, hi)| lo <= hi));
        assert!(console_table(&s).contains("C3 Prog-FRC"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn adding_uniform_trials_keeps_contrast_signs(
            base in prop::array::uniform4(1usize..40),
            extra in 0usize..50,
        ) {
            // strict ordering AMV < FRC < ProgRRC < RRC out of 100 trials each
            let mut rrc = base;
            rrc.sort();
            prop_assume!(rrc[0] < rrc[1] && rrc[1] < rrc[2] && rrc[2] < rrc[3]);
            let counts = |add: usize| -> [Counts; 4] {
                let by_slot = [rrc[0], rrc[3], rrc[1], rrc[2]];
                by_slot.map(|r| Counts { rrc: r + add, trials: 100 + 2 * add })
            };
            let before = contrasts_from_counts(&counts(0)).unwrap().as_array();
            let after = contrasts_from_counts(&counts(extra)).unwrap().as_array();
            for (b, a) in before.iter().zip(after) {
                prop_assert_eq!(b.signum(), a.signum());
            }
        }
    }
}
