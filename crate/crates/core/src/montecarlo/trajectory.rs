use crate::experience::Agent;
use crate::model::{format_labels, Component, ComponentId, Kind, ProcessKind, StateLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Hit,
    PhaseComplete,
    Phantomized,
    Pruned,
    Cutoff,
    Experience,
    ObservationStart,
    ObservationComplete,
    InteractionStart,
    Warning,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Hit => "hit",
            EventKind::PhaseComplete => "phase-complete",
            EventKind::Phantomized => "phantomized",
            EventKind::Pruned => "pruned",
            EventKind::Cutoff => "cutoff",
            EventKind::Experience => "experience",
            EventKind::ObservationStart => "observation-start",
            EventKind::ObservationComplete => "observation-complete",
            EventKind::InteractionStart => "interaction-start",
            EventKind::Warning => "warning",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Hit {
        component: ComponentId,
        rate: f64,
        /// From the start of the feeding interaction to the hit instant; the
        /// event itself is logged at the end of the step.
        since_interaction: f64,
    },
    PhaseComplete {
        component: ComponentId,
        process: ProcessKind,
    },
    Phantomized {
        component: ComponentId,
        modulus: f64,
        /// Live ready component that took over the current, if any.
        superseded_by: Option<ComponentId>,
    },
    Pruned {
        component: ComponentId,
        modulus: f64,
    },
    Cutoff {
        from: ComponentId,
        to: ComponentId,
    },
    Experience {
        agent: Agent,
        state: String,
        cause: Option<u64>,
    },
    ObservationStart {
        components: Vec<ComponentId>,
    },
    ObservationComplete {
        component: ComponentId,
    },
    InteractionStart {
        source: ComponentId,
        ready: ComponentId,
    },
    Warning {
        message: String,
    },
}

/// A live (non-phantom) component as seen right after an event.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEntry {
    pub id: ComponentId,
    pub kind: Kind,
    pub labels: Vec<StateLabel>,
}

impl SnapshotEntry {
    pub fn of(c: &Component) -> Self {
        Self {
            id: c.id,
            kind: c.kind,
            labels: c.labels.clone(),
        }
    }

    pub fn display_labels(&self) -> String {
        format_labels(&self.labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// Sequential id; pruning events carry none so that logs with and
    /// without pruning line up.
    pub id: Option<u64>,
    pub t: f64,
    pub kind: EventKind,
    pub payload: Payload,
    pub snapshot: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub t0: f64,
    pub initial: Vec<SnapshotEntry>,
    pub events: Vec<Event>,
    /// Label products of the surviving components, phantoms excluded.
    pub terminal_labels: Vec<String>,
    pub terminal_time: f64,
    pub flags: Vec<String>,
}

impl Trajectory {
    pub fn hit(&self) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == EventKind::Hit)
    }

    pub fn hit_time(&self) -> Option<f64> {
        self.hit().map(|e| e.t)
    }

    /// Hit time measured from the start of the interaction that fed it.
    pub fn hit_time_since_interaction(&self) -> Option<f64> {
        match self.hit()?.payload {
            Payload::Hit {
                since_interaction, ..
            } => Some(since_interaction),
            _ => None,
        }
    }

    /// Canonical key for the terminal label set.
    pub fn terminal_key(&self) -> String {
        self.terminal_labels.join(" + ")
    }

    pub fn kinds(&self) -> Vec<EventKind> {
        self.events.iter().map(|e| e.kind).collect()
    }
}
