//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;

use nrules::cli::{emit_events, Format};
use nrules::dynamics::{ready_currents, DynamicsError};
use nrules::experience::{check_no_paradox, extract_experiences, Agent};
use nrules::model::Kind;
use nrules::montecarlo::{
    ks_test, run_batch, run_trial_with, split_seed, EventKind, Forcing, Trajectory, Trial,
    TrialError, TrialOptions,
};
use nrules::scenarios::{build, Ordering, Scenario, ScenarioSpec, Version};

const DT: f64 = 1e-3;
const T_HALF: f64 = 1.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn six() -> Vec<ScenarioSpec> {
    [
        Version::Apparatus,
        Version::ApparatusObserver,
        Version::Cat1,
        Version::Cat1Observer,
        Version::Cat2,
        Version::Cat2Observer,
    ]
    .into_iter()
    .map(ScenarioSpec::builtin)
    .collect()
}

fn every_scenario() -> Vec<ScenarioSpec> {
    let mut all = six();
    all.push(ScenarioSpec::natural(Ordering::ExternalFirst));
    all.push(ScenarioSpec::natural(Ordering::InternalFirst));
    all
}

/// End states written out independently of the builders.
fn expected_end_states(name: &str) -> [&'static str; 2] {
    match name {
        "apparatus" => ["d1·M(t_f)·i1", "d0·M(t_0)·i0"],
        "apparatus+observer" => ["d1·M(t_f)·I1·B1", "d0·M(t_0)·I0·B0"],
        "cat1" => ["d1·M(t_f)·U", "d0·M(t_0)·C"],
        "cat1+observer" => ["d1·M(t_f)·U·B_U", "d0·M(t_0)·C·B_C"],
        "cat2" => ["d1·M(t_f)·C", "d0·M(t_0)·U"],
        "cat2+observer" => ["d1·M(t_f)·C·B_C", "d0·M(t_0)·U·B_U"],
        "cat2-natural/external-first" | "cat2-natural/internal-first" => {
            ["d1·M(t_f)·N(t_ff)·C", "d0·M(t_0)·N(t_ff)·C"]
        }
        other => panic!("no end states for {other}"),
    }
}

fn trials(scenario: &Scenario, n: u64, base: u64, options: TrialOptions) -> Vec<Trajectory> {
    (0..n)
        .into_par_iter()
        .map(|i| run_trial_with(scenario, split_seed(base, i), DT, options).unwrap())
        .collect()
}

/// Half-life law conditioned on a hit before `T_HALF`, written in base 2.
fn oracle_cdf(tau: f64) -> f64 {
    (1.0 - 2f64.powf(-tau / T_HALF)) / 0.5
}

fn oracle_ks(samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = oracle_cdf(x.min(T_HALF));
            ((i + 1) as f64 / n - f).abs().max((f - i as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, spec) in six().into_iter().enumerate() {
        let s = run_batch(&spec, 100_000, 100 + i as u64, DT).unwrap();
        let ok = (0.49..=0.51).contains(&s.hit_fraction);
        pass &= ok;
        parts.push(format!("{}={:.4}", spec.name, s.hit_fraction));
    }
    outcome(pass, parts.join(" "))
}

fn criterion_2() -> Outcome {
    let n = 10_000;
    let bound = 1.63 / (n as f64).sqrt();
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, spec) in every_scenario().into_iter().enumerate() {
        let s = run_batch(&spec, 2 * n as u64 + 2_000, 200 + i as u64, DT).unwrap();
        if s.hit_times.len() < n {
            return outcome(
                false,
                format!("{}: only {} hits", spec.name, s.hit_times.len()),
            );
        }
        let sample = &s.hit_times[..n];
        let d = oracle_ks(sample);
        let engine_d = ks_test(sample, spec.lambda.unwrap(), T_HALF).unwrap();
        let ok = d < bound && (d - engine_d).abs() < 1e-9;
        pass &= ok;
        parts.push(format!("{}={d:.4}", spec.name));
    }
    outcome(pass, format!("bound {bound:.4}: {}", parts.join(" ")))
}

/// Distinct states of one agent at one timestamp, checked without the
/// library's paradox checker.
fn simultaneous_states(tr: &Trajectory) -> bool {
    let mut at: BTreeMap<(Agent, u64), BTreeSet<String>> = BTreeMap::new();
    for r in extract_experiences(tr) {
        at.entry((r.agent, r.time.to_bits()))
            .or_default()
            .insert(r.state);
    }
    at.values().any(|s| s.len() > 1)
}

fn criteria_3_and_4() -> (Outcome, Outcome) {
    let mut bad3 = Vec::new();
    let mut bad4 = Vec::new();
    for spec in every_scenario() {
        let scenario = build(&spec).unwrap();
        let trs = trials(&scenario, 10_000, 3, TrialOptions::default());
        let paradoxes = trs
            .iter()
            .filter(|tr| {
                check_no_paradox(&extract_experiences(tr), &scenario.rules).is_err()
                    || simultaneous_states(tr)
            })
            .count();
        if paradoxes > 0 {
            bad3.push(format!("{}: {paradoxes}", spec.name));
        }
        let seen: BTreeSet<String> = trs.iter().map(|t| t.terminal_key()).collect();
        let want: BTreeSet<String> = expected_end_states(&spec.name)
            .iter()
            .map(|s| s.to_string())
            .collect();
        if seen != want {
            bad4.push(format!("{}: {seen:?}", spec.name));
        }
    }
    let n = every_scenario().len();
    (
        outcome(
            bad3.is_empty(),
            if bad3.is_empty() {
                format!("{n} scenarios x 10000 trials, 0 violations")
            } else {
                bad3.join(", ")
            },
        ),
        outcome(
            bad4.is_empty(),
            if bad4.is_empty() {
                format!("{n} scenarios x 10000 trials, exactly two end states each")
            } else {
                bad4.join(", ")
            },
        ),
    )
}

fn criterion_5() -> Outcome {
    let want = "d1·M(t_f)·N(t_ff)·C";
    let mut per: Vec<BTreeMap<u64, String>> = Vec::new();
    for o in [Ordering::ExternalFirst, Ordering::InternalFirst] {
        let scenario = build(&ScenarioSpec::natural(o)).unwrap();
        let trs = trials(&scenario, 10_000, 5, TrialOptions::default());
        per.push(
            trs.into_iter()
                .filter(|t| t.hit().is_some())
                .map(|t| (t.seed, t.terminal_key()))
                .collect(),
        );
    }
    let all_ok = per.iter().all(|m| m.values().all(|k| k == want));
    let both: Vec<&u64> = per[0].keys().filter(|s| per[1].contains_key(s)).collect();
    let same = both.iter().all(|s| per[0][s] == per[1][s]);
    outcome(
        all_ok && same && !both.is_empty(),
        format!(
            "hits: external-first {}, internal-first {}, common seeds {}",
            per[0].len(),
            per[1].len(),
            both.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let (look, pi) = (0.3, 0.05);
    let scenario = build(&ScenarioSpec::builtin(Version::ApparatusObserver)).unwrap();
    let mut found = 0;
    let mut wrong = Vec::new();
    let mut seed = 0u64;
    while found < 25 && seed < 100_000 {
        let tr = run_trial_with(&scenario, seed, DT, TrialOptions::default()).unwrap();
        seed += 1;
        let Some(t) = tr.hit_time() else { continue };
        if !(look < t && t < look + pi) {
            continue;
        }
        found += 1;
        let kinds = tr.kinds();
        let pos = |k| kinds.iter().position(|x| *x == k).unwrap();
        let ordered = pos(EventKind::ObservationStart) < pos(EventKind::Hit)
            && pos(EventKind::Hit) < pos(EventKind::ObservationComplete);
        if tr.terminal_key() != "d1·M(t_f)·I1·B1" || !ordered {
            wrong.push(format!("seed {}: {}", tr.seed, tr.terminal_key()));
        }
    }
    outcome(
        found == 25 && wrong.is_empty(),
        format!(
            "{found} mid-observation hits found in {seed} seeds, {} wrong",
            wrong.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut steps = 0u64;
    for spec in every_scenario() {
        let scenario = build(&spec).unwrap();
        let forced = TrialOptions {
            forcing: Forcing::NoHit,
            ..Default::default()
        };
        let mut runs = vec![(0u64, forced)];
        runs.extend((0..200).map(|s| (s, TrialOptions::default())));
        for (seed, options) in runs {
            let mut trial = Trial::new(&scenario, seed, DT, options).unwrap();
            loop {
                let done = trial.step().unwrap();
                if trial.has_hit() {
                    break;
                }
                steps += 1;
                worst = worst.max((trial.superposition().total_modulus() - 1.0).abs());
                if done {
                    break;
                }
            }
        }
    }
    outcome(
        worst < 1e-6,
        format!("max |total - 1| = {worst:.2e} over {steps} pre-reduction steps"),
    )
}

fn criterion_8() -> Outcome {
    let mut violations = 0u64;
    let mut checked = 0u64;
    for spec in every_scenario() {
        let scenario = build(&spec).unwrap();
        let options = TrialOptions {
            validate_each_step: true,
            ..Default::default()
        };
        for seed in 0..300 {
            let mut trial = Trial::new(&scenario, seed, DT, options).unwrap();
            loop {
                let r = trial.step();
                let sup = trial.superposition();
                checked += 1;
                let ready_source = sup
                    .edges
                    .iter()
                    .any(|e| e.active && sup.get(e.from).is_some_and(|c| c.kind != Kind::Realized));
                let t = trial.time();
                let phantom_fed = ready_currents(sup, t)
                    .iter()
                    .any(|(id, _)| sup.get(*id).is_some_and(|c| c.kind == Kind::Phantom));
                if ready_source || phantom_fed {
                    violations += 1;
                }
                match r {
                    Ok(true) => break,
                    Ok(false) => {}
                    Err(TrialError::Dynamics(DynamicsError::SinkViolation { .. }))
                    | Err(TrialError::Invalid { .. }) => {
                        violations += 1;
                        break;
                    }
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in {checked} checked steps"),
    )
}

fn log(tr: &Trajectory) -> String {
    let mut buf = Vec::new();
    emit_events(tr, Format::Jsonl, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn criterion_9() -> Outcome {
    let mut mismatches = Vec::new();
    let mut pruned_lines = 0usize;
    for spec in every_scenario() {
        let scenario = build(&spec).unwrap();
        for seed in 0..50 {
            let off = TrialOptions::default();
            let on = TrialOptions {
                prune: true,
                ..Default::default()
            };
            let a = log(&run_trial_with(&scenario, seed, DT, off).unwrap());
            let b = log(&run_trial_with(&scenario, seed, DT, on).unwrap());
            let b_again = log(&run_trial_with(&scenario, seed, DT, on).unwrap());
            let a_again = log(&run_trial_with(&scenario, seed, DT, off).unwrap());
            let kept: Vec<&str> = b
                .lines()
                .filter(|l| !l.contains("\"kind\":\"pruned\""))
                .collect();
            pruned_lines += b.lines().count() - kept.len();
            let a_lines: Vec<&str> = a.lines().collect();
            if a_lines != kept || a != a_again || b != b_again {
                mismatches.push(format!("{} seed {seed}", spec.name));
            }
        }
    }
    outcome(
        mismatches.is_empty() && pruned_lines > 0,
        format!(
            "{} mismatches, {pruned_lines} prune events filtered",
            mismatches.len()
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!(
            "{verdict} criterion {n} ({name}): {} [{:.1}s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "hit fraction", &mut criterion_1);
    report(2, "hit-time law", &mut criterion_2);
    let mut c4 = None;
    report(3, "paradox freedom", &mut || {
        let (c3, terminal) = criteria_3_and_4();
        c4 = Some(terminal);
        c3
    });
    report(4, "terminal-state exactness", &mut || c4.take().unwrap());
    report(5, "natural wake-up equivalence", &mut criterion_5);
    report(6, "mid-observation hit", &mut criterion_6);
    report(7, "conservation", &mut criterion_7);
    report(8, "sink check", &mut criterion_8);
    report(9, "pruning neutrality and determinism", &mut criterion_9);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
