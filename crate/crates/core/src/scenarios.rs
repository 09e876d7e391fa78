//! Builders for the seven experimental configurations.
//!
//! Each builder turns a [`ScenarioSpec`] into an initial [`Superposition`]
//! plus an [`InteractionSchedule`] that the trial loop replays. Time starts
//! at `t0 = 0` and the initial square modulus is 1.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dynamics::{spawn_ready, DynamicsError, RateFunction};
use crate::experience::{Agent, ExperienceRules};
use crate::model::{
    Interaction, Kind, Layout, ModelError, ObserverCoupling, Process, ProcessKind, ProcessStatus,
    Rewrite, Slot, StateLabel, Subsystem, Superposition,
};

pub const DEFAULT_T_HALF: f64 = 1.0;
pub const DEFAULT_MECH_DURATION: f64 = 0.2;
pub const DEFAULT_OBS_PI: f64 = 0.05;
pub const DEFAULT_OBS_LOOK_TIME: f64 = 0.3;
pub const DEFAULT_INTERNAL_DURATION: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Version {
    Apparatus,
    ApparatusObserver,
    Cat1,
    Cat1Observer,
    Cat2,
    Cat2Observer,
    Cat2Natural,
}

impl Version {
    pub const ALL: [Version; 7] = [
        Version::Apparatus,
        Version::ApparatusObserver,
        Version::Cat1,
        Version::Cat1Observer,
        Version::Cat2,
        Version::Cat2Observer,
        Version::Cat2Natural,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Version::Apparatus => "apparatus",
            Version::ApparatusObserver => "apparatus+observer",
            Version::Cat1 => "cat1",
            Version::Cat1Observer => "cat1+observer",
            Version::Cat2 => "cat2",
            Version::Cat2Observer => "cat2+observer",
            Version::Cat2Natural => "cat2-natural",
        }
    }

    pub fn has_observer(self) -> bool {
        matches!(
            self,
            Version::ApparatusObserver | Version::Cat1Observer | Version::Cat2Observer
        )
    }

    pub fn with_observer(self) -> Option<Version> {
        match self {
            Version::Apparatus => Some(Version::ApparatusObserver),
            Version::Cat1 => Some(Version::Cat1Observer),
            Version::Cat2 => Some(Version::Cat2Observer),
            _ => None,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Version::Apparatus => "detector and mechanism with an indicator, no cat or observer",
            Version::ApparatusObserver => "apparatus watched by an observer who looks at t_look",
            Version::Cat1 => "conscious cat made unconscious by the mechanism",
            Version::Cat1Observer => "cat1 checked by an outside observer",
            Version::Cat2 => "unconscious cat woken by an alarm clock",
            Version::Cat2Observer => "cat2 checked by an outside observer",
            Version::Cat2Natural => "cat2 that also wakes on its own internal clock",
        }
    }

    /// Terminal label products after a hit and without one.
    pub fn end_states(self) -> (&'static str, &'static str) {
        match self {
            Version::Apparatus => ("d1·M(t_f)·i1", "d0·M(t_0)·i0"),
            Version::ApparatusObserver => ("d1·M(t_f)·I1·B1", "d0·M(t_0)·I0·B0"),
            Version::Cat1 => ("d1·M(t_f)·U", "d0·M(t_0)·C"),
            Version::Cat1Observer => ("d1·M(t_f)·U·B_U", "d0·M(t_0)·C·B_C"),
            Version::Cat2 => ("d1·M(t_f)·C", "d0·M(t_0)·U"),
            Version::Cat2Observer => ("d1·M(t_f)·C·B_C", "d0·M(t_0)·U·B_U"),
            Version::Cat2Natural => ("d1·M(t_f)·N(t_ff)·C", "d0·M(t_0)·N(t_ff)·C"),
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Version {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Version::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| ScenarioError::Schema(format!("unknown version {s:?}")))
    }
}

/// Relative order of the external capture and the cat's internal clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ordering {
    /// The capture decision precedes the internal clock: `N` stays dormant
    /// until the hit, or until cutoff when there is none.
    ExternalFirst,
    /// The internal clock runs from `t0`; the detector is exposed when it
    /// completes.
    InternalFirst,
    /// Both run from `t0` and the ready row is frozen at `t0`. This is the
    /// unresolved product of the two developments and produces C/U
    /// conflicts.
    Unordered,
}

impl Ordering {
    pub fn as_str(self) -> &'static str {
        match self {
            Ordering::ExternalFirst => "external-first",
            Ordering::InternalFirst => "internal-first",
            Ordering::Unordered => "unordered",
        }
    }
}

impl FromStr for Ordering {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "external-first" => Ok(Ordering::ExternalFirst),
            "internal-first" => Ok(Ordering::InternalFirst),
            "unordered" => Ok(Ordering::Unordered),
            _ => Err(ScenarioError::Schema(format!("unknown ordering {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub version: Version,
    /// Decay constant in 1/s; the detector is shut off at `ln 2 / lambda`.
    pub lambda: Option<f64>,
    pub mech_duration: f64,
    pub internal_duration: f64,
    pub obs_look_time: Option<f64>,
    pub obs_pi: Option<f64>,
    pub ordering: Option<Ordering>,
}

impl ScenarioSpec {
    /// Built-in configuration with the default parameters.
    pub fn builtin(version: Version) -> Self {
        let observed = version.has_observer();
        Self {
            name: version.as_str().to_string(),
            version,
            lambda: Some(LN_2 / DEFAULT_T_HALF),
            mech_duration: DEFAULT_MECH_DURATION,
            internal_duration: DEFAULT_INTERNAL_DURATION,
            obs_look_time: observed.then_some(DEFAULT_OBS_LOOK_TIME),
            obs_pi: observed.then_some(DEFAULT_OBS_PI),
            ordering: (version == Version::Cat2Natural).then_some(Ordering::ExternalFirst),
        }
    }

    pub fn natural(ordering: Ordering) -> Self {
        let mut spec = Self::builtin(Version::Cat2Natural);
        spec.ordering = Some(ordering);
        spec.name = format!("cat2-natural/{}", ordering.as_str());
        spec
    }

    pub fn t_half(&self) -> Option<f64> {
        self.lambda.map(|l| LN_2 / l)
    }

    pub fn lambda(&self) -> Result<f64, ScenarioError> {
        self.lambda
            .ok_or_else(|| ScenarioError::Schema("lambda (or t_half) is required".into()))
    }

    /// Default step: one thousandth of the half-life.
    pub fn default_dt(&self) -> Result<f64, ScenarioError> {
        Ok(1e-3 * LN_2 / self.lambda()?)
    }

    /// Checks every field constraint shared by the file parser and the builders.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let lambda = self.lambda()?;
        positive("lambda", lambda)?;
        positive("mech_duration", self.mech_duration)?;
        positive("internal_duration", self.internal_duration)?;
        match (self.obs_look_time, self.obs_pi) {
            (Some(look), Some(pi)) => {
                if !self.version.has_observer() {
                    return Err(ScenarioError::Schema(format!(
                        "{} has no observer; obs_look_time/obs_pi not allowed",
                        self.version
                    )));
                }
                if !look.is_finite() || look < 0.0 {
                    return Err(ScenarioError::Schema(format!(
                        "obs_look_time {look} is before t0"
                    )));
                }
                positive("obs_pi", pi)?;
            }
            (None, None) => {
                if self.version.has_observer() {
                    return Err(ScenarioError::Schema(format!(
                        "{} needs obs_look_time and obs_pi",
                        self.version
                    )));
                }
            }
            _ => {
                return Err(ScenarioError::Schema(
                    "obs_pi and obs_look_time must be given together".into(),
                ))
            }
        }
        match (self.version, self.ordering) {
            (Version::Cat2Natural, None) => Err(ScenarioError::Schema(
                "cat2-natural needs an ordering".into(),
            )),
            (Version::Cat2Natural, Some(_)) | (_, None) => Ok(()),
            (v, Some(_)) => Err(ScenarioError::Schema(format!(
                "ordering only applies to cat2-natural, not {v}"
            ))),
        }
    }
}

fn positive(what: &str, value: f64) -> Result<(), ScenarioError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::Schema(format!(
            "{what} must be positive and finite, got {value}"
        )))
    }
}

/// Returns `base` with an observer who looks at `t_look` for `pi` seconds.
pub fn attach_observer(
    base: &ScenarioSpec,
    t_look: f64,
    pi: f64,
) -> Result<ScenarioSpec, ScenarioError> {
    if !t_look.is_finite() || t_look < 0.0 {
        return Err(ScenarioError::Schema(format!(
            "t_look {t_look} is before t0"
        )));
    }
    let version = base.version.with_observer().ok_or_else(|| {
        ScenarioError::Schema(format!("cannot attach an observer to {}", base.version))
    })?;
    let mut spec = base.clone();
    if spec.name == base.version.as_str() {
        spec.name = version.as_str().to_string();
    }
    spec.version = version;
    spec.obs_look_time = Some(t_look);
    spec.obs_pi = Some(pi);
    spec.check()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trigger {
    At(f64),
    OnHit,
    OnPhaseComplete(ProcessKind),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Expose each realized component to a discontinuous interaction. The
    /// interaction's rate is moved to start at the firing time.
    SpawnReady(Interaction),
    BeginObservation(Process),
    BeginInternalClock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    pub trigger: Trigger,
    pub action: Action,
}

/// Time-triggered entries first, in time order, then event-triggered ones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionSchedule {
    pub entries: Vec<ScheduleEntry>,
}

impl InteractionSchedule {
    pub fn new(mut entries: Vec<ScheduleEntry>) -> Self {
        entries.sort_by(|a, b| {
            let key = |e: &ScheduleEntry| match e.trigger {
                Trigger::At(t) => (0, t),
                _ => (1, 0.0),
            };
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        });
        Self { entries }
    }

    /// Event-triggered entries must refer to processes that can exist.
    pub fn check(&self, initial: &Superposition) -> Result<(), ScenarioError> {
        let mut known: Vec<ProcessKind> = initial
            .components
            .iter()
            .flat_map(|c| c.processes.iter().map(|p| p.kind))
            .collect();
        for e in &initial.edges {
            known.extend(e.interaction.armed.iter().map(|p| p.kind));
        }
        for entry in &self.entries {
            match &entry.action {
                Action::SpawnReady(i) => known.extend(i.armed.iter().map(|p| p.kind)),
                Action::BeginObservation(p) => known.push(p.kind),
                Action::BeginInternalClock => {}
            }
        }
        for entry in &self.entries {
            if let Trigger::OnPhaseComplete(kind) = entry.trigger {
                if !known.contains(&kind) {
                    return Err(ScenarioError::Schema(format!(
                        "schedule waits on {} completing, but no such process exists",
                        kind.as_str()
                    )));
                }
            }
            if let Trigger::At(t) = entry.trigger {
                if !t.is_finite() || t < 0.0 {
                    return Err(ScenarioError::Schema(format!("bad trigger time {t}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioFlag {
    /// The observation window is not over before the detector is shut off.
    ObservationStraddlesCutoff,
}

impl ScenarioFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioFlag::ObservationStraddlesCutoff => "observation-straddles-cutoff",
        }
    }
}

/// A built scenario, ready to be stepped by a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub initial: Superposition,
    pub schedule: InteractionSchedule,
    pub rules: ExperienceRules,
    pub flags: Vec<ScenarioFlag>,
}

/// Builds whichever configuration `spec.version` names.
pub fn build(spec: &ScenarioSpec) -> Result<Scenario, ScenarioError> {
    match spec.version {
        Version::Apparatus | Version::ApparatusObserver => build_apparatus(spec),
        Version::Cat1 => build_cat_v1(spec, false),
        Version::Cat1Observer => build_cat_v1(spec, true),
        Version::Cat2 => build_cat_v2(spec, false),
        Version::Cat2Observer => build_cat_v2(spec, true),
        Version::Cat2Natural => build_natural_wakeup(spec, spec.ordering),
    }
}

fn detector(symbol: &'static str) -> StateLabel {
    StateLabel::new(Subsystem::Detector, symbol)
}

fn mechanism_label() -> StateLabel {
    StateLabel::new(Subsystem::Mechanism, "M")
}

fn capture(spec: &ScenarioSpec, rewrites: Vec<Rewrite>) -> Result<Interaction, ScenarioError> {
    let lambda = spec.lambda()?;
    let mut mechanism = Process::new(
        ProcessKind::Mechanism,
        spec.mech_duration,
        ProcessStatus::Armed,
    );
    mechanism.rewrites = rewrites;
    Ok(Interaction {
        new_labels: vec![detector("d1")],
        armed: vec![mechanism],
        rate: RateFunction::exponential_decay(lambda, 0.0, LN_2 / lambda),
        tracks_source: true,
    })
}

/// Shared wiring: one realized row, an optional capture spawned at `t0`,
/// and the observer's look when there is one.
struct Wiring {
    layout: Layout,
    labels: Vec<StateLabel>,
    row_processes: Vec<Process>,
    capture_at_t0: Option<Interaction>,
    coupling: Option<ObserverCoupling>,
    observation_rewrites: Vec<Rewrite>,
    entries: Vec<ScheduleEntry>,
    rules: ExperienceRules,
}

fn assemble(spec: &ScenarioSpec, w: Wiring) -> Result<Scenario, ScenarioError> {
    spec.check()?;
    let mut sup = Superposition::new(w.layout);
    if let Some(c) = w.coupling {
        sup = sup.with_coupling(c);
    }
    let mut row = sup.make_component(w.labels, 1.0, Kind::Realized, &[], 0.0)?;
    row.processes = w.row_processes;
    let row = sup.insert(row);
    if let Some(interaction) = &w.capture_at_t0 {
        spawn_ready(&mut sup, row, interaction, 0.0)?;
    }

    let mut entries = w.entries;
    let mut flags = Vec::new();
    if let (Some(look), Some(pi)) = (spec.obs_look_time, spec.obs_pi) {
        let mut observation = Process::new(ProcessKind::Observation, pi, ProcessStatus::Running);
        observation.rewrites = w.observation_rewrites;
        entries.push(ScheduleEntry {
            trigger: Trigger::At(look),
            action: Action::BeginObservation(observation),
        });
        if look + pi >= spec.t_half().unwrap_or(f64::INFINITY) {
            flags.push(ScenarioFlag::ObservationStraddlesCutoff);
        }
    }
    let schedule = InteractionSchedule::new(entries);
    schedule.check(&sup)?;
    sup.validate().map_err(|v| {
        ScenarioError::Schema(format!(
            "built superposition is invalid: {}",
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        ))
    })?;
    Ok(Scenario {
        spec: spec.clone(),
        initial: sup,
        schedule,
        rules: w.rules,
        flags,
    })
}

fn expect_version(spec: &ScenarioSpec, allowed: &[Version]) -> Result<(), ScenarioError> {
    if allowed.contains(&spec.version) {
        Ok(())
    } else {
        Err(ScenarioError::Schema(format!(
            "builder for {} cannot build {}",
            allowed[0], spec.version
        )))
    }
}

/// Detector, mechanism and indicator; the observer variant adds a look.
pub fn build_apparatus(spec: &ScenarioSpec) -> Result<Scenario, ScenarioError> {
    expect_version(spec, &[Version::Apparatus, Version::ApparatusObserver])?;
    let observed = spec.version.has_observer();
    let mut layout = Layout::default()
        .declare(Slot::Detector, &["d0", "d1"])
        .declare(Slot::Mechanism, &["M"])
        .declare(Slot::Indicator, &["i0", "i1", "I0", "I1"]);
    let mut labels = vec![
        detector("d0"),
        mechanism_label(),
        StateLabel::new(Subsystem::Indicator, "i0"),
    ];
    let mut rules = ExperienceRules::default();
    let mut coupling = None;
    if observed {
        layout = layout.declare(Slot::Observer, &["X", "B0", "B1"]);
        labels.push(StateLabel::new(Subsystem::ObserverRaw, "X"));
        coupling = Some(ObserverCoupling {
            watched: Slot::Indicator,
            brains: vec![("I0", "B0"), ("I1", "B1")],
        });
        rules = rules.with(Agent::Observer, &["B0:I0", "B1:I1"]);
    }
    let rewrites = vec![
        Rewrite::new(Slot::Indicator, "i0", "i1"),
        Rewrite::new(Slot::Indicator, "I0", "I1"),
    ];
    assemble(
        spec,
        Wiring {
            layout,
            labels,
            row_processes: vec![],
            capture_at_t0: Some(capture(spec, rewrites)?),
            coupling,
            observation_rewrites: vec![
                Rewrite::new(Slot::Indicator, "i0", "I0"),
                Rewrite::new(Slot::Indicator, "i1", "I1"),
            ],
            entries: vec![],
            rules,
        },
    )
}

fn build_cat(
    spec: &ScenarioSpec,
    with_observer: bool,
    start: &'static str,
    end: &'static str,
) -> Result<Scenario, ScenarioError> {
    let mut layout = Layout::default()
        .declare(Slot::Detector, &["d0", "d1"])
        .declare(Slot::Mechanism, &["M"])
        .declare(Slot::Cat, &["C", "U"]);
    let mut labels = vec![
        detector("d0"),
        mechanism_label(),
        StateLabel::new(Subsystem::Cat, start),
    ];
    let mut rules = ExperienceRules::default().with(Agent::Cat, &[start, end]);
    let mut coupling = None;
    if with_observer {
        layout = layout.declare(Slot::Observer, &["X", "B_C", "B_U"]);
        labels.push(StateLabel::new(Subsystem::ObserverRaw, "X"));
        coupling = Some(ObserverCoupling {
            watched: Slot::Cat,
            brains: vec![("C", "B_C"), ("U", "B_U")],
        });
        let brain = |s: &str| if s == "C" { "B_C" } else { "B_U" };
        rules = rules.with(Agent::Observer, &[brain(start), brain(end)]);
    }
    assemble(
        spec,
        Wiring {
            layout,
            labels,
            row_processes: vec![],
            capture_at_t0: Some(capture(spec, vec![Rewrite::new(Slot::Cat, start, end)])?),
            coupling,
            observation_rewrites: vec![],
            entries: vec![],
            rules,
        },
    )
}

/// cat1: the mechanism renders the conscious cat unconscious.
pub fn build_cat_v1(spec: &ScenarioSpec, with_observer: bool) -> Result<Scenario, ScenarioError> {
    let want = if with_observer {
        Version::Cat1Observer
    } else {
        Version::Cat1
    };
    expect_version(spec, &[want])?;
    build_cat(spec, with_observer, "C", "U")
}

/// cat2: the alarm wakes the unconscious cat.
pub fn build_cat_v2(spec: &ScenarioSpec, with_observer: bool) -> Result<Scenario, ScenarioError> {
    let want = if with_observer {
        Version::Cat2Observer
    } else {
        Version::Cat2
    };
    expect_version(spec, &[want])?;
    build_cat(spec, with_observer, "U", "C")
}

/// cat2 with the cat's own clock `N` running alongside the alarm.
pub fn build_natural_wakeup(
    spec: &ScenarioSpec,
    ordering: Option<Ordering>,
) -> Result<Scenario, ScenarioError> {
    expect_version(spec, &[Version::Cat2Natural])?;
    let ordering =
        ordering.ok_or_else(|| ScenarioError::Schema("cat2-natural needs an ordering".into()))?;
    let layout = Layout::default()
        .declare(Slot::Detector, &["d0", "d1"])
        .declare(Slot::Mechanism, &["M"])
        .declare(Slot::InternalClock, &["N"])
        .declare(Slot::Cat, &["C", "U"]);
    let labels = vec![
        detector("d0"),
        mechanism_label(),
        StateLabel::new(Subsystem::InternalClock, "N"),
        StateLabel::new(Subsystem::Cat, "U"),
    ];
    let wake = Rewrite::new(Slot::Cat, "U", "C");
    let mut capture = capture(spec, vec![wake.clone()])?;
    let clock = |status| {
        Process::new(ProcessKind::InternalClock, spec.internal_duration, status)
            .with_rewrite(wake.clone())
    };
    let t_half = LN_2 / spec.lambda()?;
    let (row_processes, capture_at_t0, entries) = match ordering {
        Ordering::ExternalFirst => (
            vec![clock(ProcessStatus::Dormant)],
            Some(capture),
            vec![
                ScheduleEntry {
                    trigger: Trigger::OnHit,
                    action: Action::BeginInternalClock,
                },
                ScheduleEntry {
                    trigger: Trigger::At(t_half),
                    action: Action::BeginInternalClock,
                },
            ],
        ),
        Ordering::InternalFirst => (
            vec![clock(ProcessStatus::Running)],
            None,
            vec![ScheduleEntry {
                trigger: Trigger::OnPhaseComplete(ProcessKind::InternalClock),
                action: Action::SpawnReady(capture),
            }],
        ),
        Ordering::Unordered => {
            capture.tracks_source = false;
            (vec![clock(ProcessStatus::Running)], Some(capture), vec![])
        }
    };
    let mut spec = spec.clone();
    spec.ordering = Some(ordering);
    assemble(
        &spec,
        Wiring {
            layout,
            labels,
            row_processes,
            capture_at_t0,
            coupling: None,
            observation_rewrites: vec![],
            entries,
            rules: ExperienceRules::default().with(Agent::Cat, &["U", "C"]),
        },
    )
}
