use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::trajectory::{Event, EventKind, Payload, SnapshotEntry, Trajectory};
use crate::dynamics::{
    advance, attach_process, begin_processes, continue_continuum, expire_edges, phantomize,
    pick_proportional, prune_phantoms, ready_currents, reduce, sample_hit_with, spawn_ready,
    DynamicsError, HitEvent, Normalization,
};
use crate::experience::ExperienceTracker;
use crate::model::{Kind, ProcessKind, ProcessStatus, Superposition, Violation};
use crate::scenarios::{build, Action, Scenario, ScenarioError, ScenarioSpec, Trigger};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrialError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("dt = {0} must be positive and finite")]
    BadStep(f64),
    #[error("trial did not settle within {0} steps")]
    DidNotTerminate(u64),
    #[error("invalid superposition at t = {t}: {violations:?}")]
    Invalid { t: f64, violations: Vec<Violation> },
}

/// How the stochastic hit is decided.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Forcing {
    #[default]
    Sampled,
    NoHit,
    /// Hit at the first step ending at or after the given time while a
    /// ready component is receiving current.
    HitAt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialOptions {
    pub prune: bool,
    pub forcing: Forcing,
    pub normalization: Normalization,
    /// Run the structural validation after every step (slow).
    pub validate_each_step: bool,
}

/// Step-by-step execution of one scenario.
///
/// Each step covers `[k dt, (k + 1) dt]`: currents and classical processes
/// advance, a hit is sampled and, if it occurs, the reduction completes
/// before anything else. Then cutoffs, scheduled interactions, the ready
/// continuum behind evolving rows and optional pruning follow. The trial
/// ends one step after the last cutoff or process completion.
pub struct Trial<'s> {
    scenario: &'s Scenario,
    sup: Superposition,
    rng: ChaCha8Rng,
    seed: u64,
    dt: f64,
    step: u64,
    max_steps: u64,
    options: TrialOptions,
    fired: Vec<bool>,
    events: Vec<Event>,
    initial: Vec<SnapshotEntry>,
    next_id: u64,
    tracker: ExperienceTracker,
    hit: Option<HitEvent>,
    interaction_start: f64,
    /// Latest cutoff of any interaction so far.
    horizon: f64,
    settled_before: bool,
    finished_at: Option<f64>,
}

fn snapshot(sup: &Superposition) -> Vec<SnapshotEntry> {
    sup.live().map(SnapshotEntry::of).collect()
}

impl<'s> Trial<'s> {
    pub fn new(
        scenario: &'s Scenario,
        seed: u64,
        dt: f64,
        options: TrialOptions,
    ) -> Result<Self, TrialError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(TrialError::BadStep(dt));
        }
        let spec = &scenario.spec;
        let horizon = spec.t_half().unwrap_or(1.0)
            + spec.mech_duration
            + spec.internal_duration
            + spec.obs_look_time.unwrap_or(0.0)
            + spec.obs_pi.unwrap_or(0.0);
        let max_steps = (3.0 * horizon / dt).ceil() as u64 + 10;
        let sup = scenario.initial.clone();
        let initial = snapshot(&sup);
        let horizon = sup.edges.iter().map(|e| e.active_until).fold(0.0, f64::max);
        let mut trial = Self {
            scenario,
            sup,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            dt,
            step: 0,
            max_steps,
            options,
            fired: vec![false; scenario.schedule.entries.len()],
            events: Vec::new(),
            initial,
            next_id: 0,
            tracker: ExperienceTracker::default(),
            hit: None,
            interaction_start: 0.0,
            horizon,
            settled_before: false,
            finished_at: None,
        };
        for r in trial.tracker.observe(0.0, &trial.initial, None) {
            let snapshot = trial.initial.clone();
            trial.push_raw(
                EventKind::Experience,
                0.0,
                Payload::Experience {
                    agent: r.agent,
                    state: r.state,
                    cause: None,
                },
                snapshot,
            );
        }
        Ok(trial)
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn superposition(&self) -> &Superposition {
        &self.sup
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn has_hit(&self) -> bool {
        self.hit.is_some()
    }

    pub fn is_finished(&self) -> bool {
        self.finished_at.is_some()
    }

    fn push_raw(
        &mut self,
        kind: EventKind,
        t: f64,
        payload: Payload,
        snapshot: Vec<SnapshotEntry>,
    ) {
        let id = if kind == EventKind::Pruned {
            None
        } else {
            let id = self.next_id;
            self.next_id += 1;
            Some(id)
        };
        self.events.push(Event {
            id,
            t,
            kind,
            payload,
            snapshot,
        });
    }

    fn push(&mut self, kind: EventKind, t: f64, payload: Payload) {
        let snap = snapshot(&self.sup);
        let cause = if kind == EventKind::Pruned {
            None
        } else {
            Some(self.next_id)
        };
        self.push_raw(kind, t, payload, snap.clone());
        if kind == EventKind::Pruned {
            return;
        }
        for r in self.tracker.observe(t, &snap, cause) {
            self.push_raw(
                EventKind::Experience,
                t,
                Payload::Experience {
                    agent: r.agent,
                    state: r.state,
                    cause,
                },
                snap.clone(),
            );
        }
    }

    fn decide_hit(&mut self, t: f64) -> Result<Option<HitEvent>, TrialError> {
        let dt = self.dt;
        match self.options.forcing {
            Forcing::Sampled => Ok(sample_hit_with(
                &self.sup,
                t,
                dt,
                &mut self.rng,
                self.options.normalization,
            )?),
            Forcing::NoHit => Ok(None),
            Forcing::HitAt(target) => {
                if self.hit.is_some() || t + dt < target - TIME_EPS {
                    return Ok(None);
                }
                let currents = ready_currents(&self.sup, t + 0.5 * dt);
                if currents.is_empty() {
                    return Ok(None);
                }
                let u: f64 = rand::Rng::gen(&mut self.rng);
                Ok(Some(HitEvent {
                    time: target.clamp(t, t + dt),
                    chosen: pick_proportional(&currents, u),
                    rate_at_hit: crate::dynamics::hit_rate_with(
                        &self.sup,
                        t + 0.5 * dt,
                        self.options.normalization,
                    )?,
                }))
            }
        }
    }

    /// Advances one step. Returns `true` once the trial has settled.
    pub fn step(&mut self) -> Result<bool, TrialError> {
        if self.finished_at.is_some() {
            return Ok(true);
        }
        let dt = self.dt;
        let t = self.step as f64 * dt;
        let t1 = (self.step + 1) as f64 * dt;

        let report = advance(&mut self.sup, t, dt)?;
        let mut evolved = report.evolved.clone();
        for clamp in &report.clamps {
            self.push(
                EventKind::Warning,
                t1,
                Payload::Warning {
                    message: format!(
                        "edge {} transfer {:.3e} clamped to the available {:.3e}",
                        clamp.edge, clamp.requested, clamp.available
                    ),
                },
            );
        }
        let mut completed: Vec<ProcessKind> = Vec::new();
        for &(component, process) in &report.completions {
            completed.push(process);
            if process == ProcessKind::Observation {
                self.push(
                    EventKind::ObservationComplete,
                    t1,
                    Payload::ObservationComplete { component },
                );
            } else {
                self.push(
                    EventKind::PhaseComplete,
                    t1,
                    Payload::PhaseComplete { component, process },
                );
            }
        }

        let mut hit_now = false;
        if let Some(hit) = self.decide_hit(t)? {
            reduce(&mut self.sup, &hit)?;
            evolved.clear();
            hit_now = true;
            let since_interaction = hit.time - self.interaction_start;
            self.push(
                EventKind::Hit,
                t1,
                Payload::Hit {
                    component: hit.chosen,
                    rate: hit.rate_at_hit,
                    since_interaction,
                },
            );
            self.hit = Some(hit);
        }

        for i in expire_edges(&mut self.sup, t1) {
            let (from, to) = (self.sup.edges[i].from, self.sup.edges[i].to);
            self.push(EventKind::Cutoff, t1, Payload::Cutoff { from, to });
        }
        for (component, modulus) in phantomize(&mut self.sup, t1) {
            self.push(
                EventKind::Phantomized,
                t1,
                Payload::Phantomized {
                    component,
                    modulus,
                    superseded_by: None,
                },
            );
        }

        let scenario = self.scenario;
        for (i, entry) in scenario.schedule.entries.iter().enumerate() {
            if self.fired[i] {
                continue;
            }
            let due = match entry.trigger {
                Trigger::At(at) => at <= t1 + TIME_EPS,
                Trigger::OnHit => hit_now,
                Trigger::OnPhaseComplete(kind) => completed.contains(&kind),
            };
            if !due {
                continue;
            }
            self.fired[i] = true;
            match &entry.action {
                Action::SpawnReady(interaction) => {
                    let mut interaction = interaction.clone();
                    interaction.rate = interaction.rate.starting_at(t1);
                    self.horizon = self.horizon.max(interaction.rate.cutoff);
                    let sources: Vec<_> = self.sup.realized().map(|c| c.id).collect();
                    for source in sources {
                        let ready = spawn_ready(&mut self.sup, source, &interaction, t1)?;
                        self.interaction_start = t1;
                        self.push(
                            EventKind::InteractionStart,
                            t1,
                            Payload::InteractionStart { source, ready },
                        );
                    }
                }
                Action::BeginObservation(process) => {
                    let components = attach_process(&mut self.sup, process);
                    evolved.extend(components.iter().copied());
                    self.push(
                        EventKind::ObservationStart,
                        t1,
                        Payload::ObservationStart { components },
                    );
                }
                Action::BeginInternalClock => {
                    let started = begin_processes(&mut self.sup, ProcessKind::InternalClock);
                    evolved.extend(started);
                }
            }
        }

        for s in continue_continuum(&mut self.sup, t1, &evolved)? {
            self.push(
                EventKind::Phantomized,
                t1,
                Payload::Phantomized {
                    component: s.phantom,
                    modulus: s.modulus,
                    superseded_by: Some(s.live),
                },
            );
        }

        if self.options.prune {
            for (component, modulus) in prune_phantoms(&mut self.sup) {
                self.push(
                    EventKind::Pruned,
                    t1,
                    Payload::Pruned { component, modulus },
                );
            }
        }

        if self.options.validate_each_step {
            self.sup
                .validate()
                .map_err(|violations| TrialError::Invalid { t: t1, violations })?;
        }

        self.step += 1;
        // stop one idle step after the last cutoff or completion
        let settled = self.settled();
        if settled && self.settled_before && t1 >= self.horizon + dt - TIME_EPS {
            self.finished_at = Some(t1);
            return Ok(true);
        }
        self.settled_before = settled;
        if self.step >= self.max_steps {
            return Err(TrialError::DidNotTerminate(self.step));
        }
        Ok(false)
    }

    fn settled(&self) -> bool {
        if self.sup.has_active_edges() {
            return false;
        }
        let running = self
            .sup
            .components
            .iter()
            .filter(|c| c.kind == Kind::Realized)
            .flat_map(|c| c.processes.iter())
            .any(|p| p.status == ProcessStatus::Running);
        if running {
            return false;
        }
        !self
            .scenario
            .schedule
            .entries
            .iter()
            .zip(&self.fired)
            .any(|(e, fired)| !fired && matches!(e.trigger, Trigger::At(_)))
    }

    /// Steps to completion and returns the trajectory.
    pub fn run(mut self) -> Result<Trajectory, TrialError> {
        while !self.step()? {}
        Ok(self.finish())
    }

    pub fn finish(self) -> Trajectory {
        let terminal_labels = self.sup.live().map(|c| c.display_labels()).collect();
        Trajectory {
            scenario: self.scenario.spec.name.clone(),
            seed: self.seed,
            dt: self.dt,
            t0: 0.0,
            initial: self.initial,
            events: self.events,
            terminal_labels,
            terminal_time: self.finished_at.unwrap_or(self.step as f64 * self.dt),
            flags: self
                .scenario
                .flags
                .iter()
                .map(|f| f.as_str().to_string())
                .collect(),
        }
    }
}

/// One sampled trial with default options.
pub fn run_trial(spec: &ScenarioSpec, seed: u64, dt: f64) -> Result<Trajectory, TrialError> {
    let scenario = build(spec)?;
    run_trial_with(&scenario, seed, dt, TrialOptions::default())
}

pub fn run_trial_with(
    scenario: &Scenario,
    seed: u64,
    dt: f64,
    options: TrialOptions,
) -> Result<Trajectory, TrialError> {
    Trial::new(scenario, seed, dt, options)?.run()
}
