use std::collections::BTreeMap;

use rayon::prelude::*;

use super::ks::ks_test;
use super::trajectory::Trajectory;
use super::trial::{run_trial_with, TrialError, TrialOptions};
use crate::experience::{check_no_paradox, extract_experiences, ExperienceRules};
use crate::scenarios::{build, Scenario, ScenarioSpec};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of trial `index` in a batch: the SplitMix64 output at position
/// `index + 1` of the sequence started at `base`.
///
/// Distinct indices give well-mixed, unrelated seeds, so trials can be run in
/// any order or on any thread.
pub fn split_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a batch keeps of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDigest {
    pub hit_time: Option<f64>,
    pub terminal: String,
    pub paradox: bool,
}

impl TrialDigest {
    pub fn of(trajectory: &Trajectory, rules: &ExperienceRules) -> Self {
        Self {
            hit_time: trajectory.hit_time_since_interaction(),
            terminal: trajectory.terminal_key(),
            paradox: check_no_paradox(&extract_experiences(trajectory), rules).is_err(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            counts: vec![0; bins],
        }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    /// Values outside `[lo, hi]` are clamped into the edge bins.
    pub fn add(&mut self, x: f64) {
        let n = self.counts.len();
        let k = ((x - self.lo) / self.width()).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(n - 1) };
        self.counts[k] += 1;
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        let w = self.width();
        self.counts
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w, c))
    }
}

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub scenario: String,
    pub n_trials: u64,
    pub hits: u64,
    pub hit_fraction: f64,
    /// Hit times measured from the start of the feeding interaction, in trial order.
    pub hit_times: Vec<f64>,
    pub histogram: Histogram,
    pub outcome_counts: BTreeMap<String, u64>,
    /// `None` when no trial hit.
    pub ks_statistic: Option<f64>,
    pub paradox_violations: u64,
}

impl BatchSummary {
    /// Folds digests in the given order.
    pub fn from_digests<'a>(
        scenario: &ScenarioSpec,
        digests: impl IntoIterator<Item = &'a TrialDigest>,
    ) -> Self {
        let lambda = scenario.lambda.unwrap_or(f64::NAN);
        let cutoff = scenario.t_half().unwrap_or(f64::NAN);
        let mut s = Self {
            scenario: scenario.name.clone(),
            n_trials: 0,
            hits: 0,
            hit_fraction: 0.0,
            hit_times: Vec::new(),
            histogram: Histogram::new(0.0, cutoff, HISTOGRAM_BINS),
            outcome_counts: BTreeMap::new(),
            ks_statistic: None,
            paradox_violations: 0,
        };
        for d in digests {
            s.n_trials += 1;
            if let Some(t) = d.hit_time {
                s.hits += 1;
                s.hit_times.push(t);
                s.histogram.add(t);
            }
            *s.outcome_counts.entry(d.terminal.clone()).or_default() += 1;
            s.paradox_violations += d.paradox as u64;
        }
        if s.n_trials > 0 {
            s.hit_fraction = s.hits as f64 / s.n_trials as f64;
        }
        s.ks_statistic = ks_test(&s.hit_times, lambda, cutoff).ok();
        s
    }
}

pub fn run_batch(
    spec: &ScenarioSpec,
    n: u64,
    base_seed: u64,
    dt: f64,
) -> Result<BatchSummary, TrialError> {
    let scenario = build(spec)?;
    run_batch_with(&scenario, n, base_seed, dt, TrialOptions::default())
}

/// Runs `n` trials in parallel on the current rayon pool. Results are
/// aggregated in trial-index order, so the summary does not depend on
/// scheduling.
pub fn run_batch_with(
    scenario: &Scenario,
    n: u64,
    base_seed: u64,
    dt: f64,
    options: TrialOptions,
) -> Result<BatchSummary, TrialError> {
    if n == 0 {
        return Err(TrialError::Scenario(
            crate::scenarios::ScenarioError::Schema("a batch needs at least one trial".into()),
        ));
    }
    let digests: Vec<TrialDigest> = (0..n)
        .into_par_iter()
        .map(|i| {
            let tr = run_trial_with(scenario, split_seed(base_seed, i), dt, options)?;
            Ok(TrialDigest::of(&tr, &scenario.rules))
        })
        .collect::<Result<_, TrialError>>()?;
    Ok(BatchSummary::from_digests(&scenario.spec, &digests))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::run_trial;
    use crate::scenarios::Version;

    #[test]
    fn split_seed_is_injective_on_a_range() {
        let mut seen: Vec<u64> = (0..10_000).map(|i| split_seed(7, i)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 10_000);
        assert_ne!(split_seed(7, 0), split_seed(8, 0));
    }

    #[test]
    fn single_trial_batch_matches_the_trajectory() {
        let spec = ScenarioSpec::builtin(Version::Cat1);
        let summary = run_batch(&spec, 1, 11, 1e-3).unwrap();
        let tr = run_trial(&spec, split_seed(11, 0), 1e-3).unwrap();
        assert_eq!(summary.n_trials, 1);
        assert_eq!(summary.hits, tr.hit().is_some() as u64);
        assert_eq!(summary.outcome_counts.get(&tr.terminal_key()), Some(&1));
        assert_eq!(summary.paradox_violations, 0);
    }

    #[test]
    fn batch_is_the_fold_of_its_trials() {
        let spec = ScenarioSpec::builtin(Version::Apparatus);
        let scenario = build(&spec).unwrap();
        let summary = run_batch(&spec, 40, 5, 1e-3).unwrap();
        let digests: Vec<TrialDigest> = (0..40)
            .map(|i| {
                let tr = run_trial(&spec, split_seed(5, i), 1e-3).unwrap();
                TrialDigest::of(&tr, &scenario.rules)
            })
            .collect();
        assert_eq!(summary, BatchSummary::from_digests(&spec, &digests));
        assert_eq!(summary.outcome_counts.values().sum::<u64>(), 40);
        assert_eq!(summary.histogram.counts.iter().sum::<u64>(), summary.hits);
    }

    #[test]
    fn zero_trials_is_an_error() {
        assert!(run_batch(&ScenarioSpec::builtin(Version::Apparatus), 0, 0, 1e-3).is_err());
    }

    #[test]
    fn histogram_binning() {
        let mut h = Histogram::new(0.0, 1.0, 4);
        for x in [0.0, 0.1, 0.25, 0.99, 1.0, 1.2, -0.1] {
            h.add(x);
        }
        assert_eq!(h.counts, vec![3, 1, 0, 3]);
        let first = h.bins().next().unwrap();
        assert_eq!(first, (0.0, 0.25, 3));
    }
}
