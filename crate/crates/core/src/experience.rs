//! Conscious-experience timelines and the no-paradox check.
//!
//! Experience is read off realized components only. Ready and phantom
//! components are candidates or leftovers and are never experienced.

use std::fmt;

use crate::model::{Kind, Slot, Subsystem};
use crate::montecarlo::{EventKind, SnapshotEntry, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Agent {
    Cat,
    Observer,
}

impl Agent {
    pub fn as_str(self) -> &'static str {
        match self {
            Agent::Cat => "cat",
            Agent::Observer => "observer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceRecord {
    pub time: f64,
    pub agent: Agent,
    pub state: String,
    /// Id of the event that produced the change; `None` for the state at t0.
    pub cause: Option<u64>,
}

/// Allowed order of states per agent, e.g. `C` then `U` in cat1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperienceRules {
    pub orders: Vec<(Agent, Vec<String>)>,
}

impl ExperienceRules {
    pub fn with(mut self, agent: Agent, order: &[&str]) -> Self {
        self.orders
            .push((agent, order.iter().map(|s| s.to_string()).collect()));
        self
    }

    pub fn order(&self, agent: Agent) -> Option<&[String]> {
        self.orders
            .iter()
            .find(|(a, _)| *a == agent)
            .map(|(_, o)| o.as_slice())
    }
}

fn observer_token(entry: &SnapshotEntry) -> Option<String> {
    let brain = entry
        .labels
        .iter()
        .find(|l| l.subsystem == Subsystem::ObserverBrain)?;
    // Awareness of an indicator is bound to the brain state, as in I0B0.
    match entry.labels.iter().find(|l| l.slot() == Slot::Indicator) {
        Some(ind) => Some(format!("{}:{}", brain.symbol, ind.symbol)),
        None => Some(brain.symbol.to_string()),
    }
}

/// Distinct experienced state tokens per agent across realized components.
pub fn agent_states(entries: &[SnapshotEntry]) -> Vec<(Agent, Vec<String>)> {
    let mut cat: Vec<String> = Vec::new();
    let mut observer: Vec<String> = Vec::new();
    for e in entries.iter().filter(|e| e.kind == Kind::Realized) {
        if let Some(l) = e.labels.iter().find(|l| l.subsystem == Subsystem::Cat) {
            if !cat.iter().any(|s| s == l.symbol) {
                cat.push(l.symbol.to_string());
            }
        }
        if let Some(tok) = observer_token(e) {
            if !observer.contains(&tok) {
                observer.push(tok);
            }
        }
    }
    cat.sort();
    observer.sort();
    vec![(Agent::Cat, cat), (Agent::Observer, observer)]
}

/// Turns a sequence of snapshots into experience-change records.
#[derive(Debug, Clone, Default)]
pub struct ExperienceTracker {
    last: Vec<(Agent, Vec<String>)>,
}

impl ExperienceTracker {
    pub fn observe(
        &mut self,
        time: f64,
        entries: &[SnapshotEntry],
        cause: Option<u64>,
    ) -> Vec<ExperienceRecord> {
        let now = agent_states(entries);
        let mut out = Vec::new();
        for (agent, states) in &now {
            let before = self
                .last
                .iter()
                .find(|(a, _)| a == agent)
                .map(|(_, s)| s.as_slice())
                .unwrap_or(&[]);
            if states.as_slice() != before {
                out.extend(states.iter().map(|s| ExperienceRecord {
                    time,
                    agent: *agent,
                    state: s.clone(),
                    cause,
                }));
            }
        }
        self.last = now;
        out
    }
}

/// Rebuilds the experience timeline from a trajectory's snapshots.
pub fn extract_experiences(trajectory: &Trajectory) -> Vec<ExperienceRecord> {
    let mut tracker = ExperienceTracker::default();
    let mut out = tracker.observe(trajectory.t0, &trajectory.initial, None);
    for e in &trajectory.events {
        if matches!(e.kind, EventKind::Experience | EventKind::Pruned) {
            continue;
        }
        out.extend(tracker.observe(e.t, &e.snapshot, e.id));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParadoxViolation {
    /// One agent held two distinct states at the same time.
    Simultaneous {
        agent: Agent,
        time: f64,
        states: (String, String),
    },
    WrongOrder {
        agent: Agent,
        from: String,
        to: String,
    },
    UnknownState {
        agent: Agent,
        state: String,
    },
    TimeReversal {
        agent: Agent,
        time: f64,
    },
}

impl fmt::Display for ParadoxViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParadoxViolation::Simultaneous {
                agent,
                time,
                states,
            } => write!(
                f,
                "{} is both {} and {} at t = {time}",
                agent.as_str(),
                states.0,
                states.1
            ),
            ParadoxViolation::WrongOrder { agent, from, to } => {
                write!(f, "{} went from {from} to {to}", agent.as_str())
            }
            ParadoxViolation::UnknownState { agent, state } => {
                write!(f, "{} has no state {state}", agent.as_str())
            }
            ParadoxViolation::TimeReversal { agent, time } => {
                write!(
                    f,
                    "{} record at t = {time} goes back in time",
                    agent.as_str()
                )
            }
        }
    }
}

/// Ok iff no agent holds two states at once and each agent's states follow
/// its allowed order.
pub fn check_no_paradox(
    records: &[ExperienceRecord],
    rules: &ExperienceRules,
) -> Result<(), ParadoxViolation> {
    for agent in [Agent::Cat, Agent::Observer] {
        let mine: Vec<&ExperienceRecord> = records.iter().filter(|r| r.agent == agent).collect();
        for pair in mine.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.time < a.time {
                return Err(ParadoxViolation::TimeReversal {
                    agent,
                    time: b.time,
                });
            }
            if b.time == a.time && a.state != b.state {
                return Err(ParadoxViolation::Simultaneous {
                    agent,
                    time: a.time,
                    states: (a.state.clone(), b.state.clone()),
                });
            }
        }
        let Some(order) = rules.order(agent) else {
            continue;
        };
        let mut position: Option<usize> = None;
        let mut previous: Option<&str> = None;
        for r in &mine {
            let idx = order.iter().position(|s| *s == r.state).ok_or_else(|| {
                ParadoxViolation::UnknownState {
                    agent,
                    state: r.state.clone(),
                }
            })?;
            if previous == Some(r.state.as_str()) {
                continue;
            }
            if let Some(p) = position {
                if idx <= p {
                    return Err(ParadoxViolation::WrongOrder {
                        agent,
                        from: previous.unwrap_or_default().to_string(),
                        to: r.state.clone(),
                    });
                }
            }
            position = Some(idx);
            previous = Some(r.state.as_str());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: f64, agent: Agent, state: &str) -> ExperienceRecord {
        ExperienceRecord {
            time,
            agent,
            state: state.into(),
            cause: None,
        }
    }

    fn cat1_rules() -> ExperienceRules {
        ExperienceRules::default()
            .with(Agent::Cat, &["C", "U"])
            .with(Agent::Observer, &["B_C", "B_U"])
    }

    #[test]
    fn ordered_sequence_is_ok() {
        let records = vec![
            rec(0.0, Agent::Cat, "C"),
            rec(0.35, Agent::Observer, "B_C"),
            rec(0.6, Agent::Cat, "U"),
            rec(0.6, Agent::Observer, "B_U"),
        ];
        assert_eq!(check_no_paradox(&records, &cat1_rules()), Ok(()));
    }

    #[test]
    fn partial_sequences_are_ok() {
        assert_eq!(check_no_paradox(&[], &cat1_rules()), Ok(()));
        let records = vec![rec(0.0, Agent::Cat, "C"), rec(0.4, Agent::Observer, "B_U")];
        assert_eq!(check_no_paradox(&records, &cat1_rules()), Ok(()));
    }

    #[test]
    fn simultaneous_states_are_a_violation() {
        let records = vec![rec(0.5, Agent::Cat, "C"), rec(0.5, Agent::Cat, "U")];
        assert!(matches!(
            check_no_paradox(&records, &cat1_rules()),
            Err(ParadoxViolation::Simultaneous {
                agent: Agent::Cat,
                ..
            })
        ));
        // no rules for the agent: simultaneity is still caught
        assert!(check_no_paradox(&records, &ExperienceRules::default()).is_err());
    }

    #[test]
    fn wrong_order_is_a_violation() {
        let records = vec![rec(0.0, Agent::Cat, "U"), rec(0.5, Agent::Cat, "C")];
        assert_eq!(
            check_no_paradox(&records, &cat1_rules()),
            Err(ParadoxViolation::WrongOrder {
                agent: Agent::Cat,
                from: "U".into(),
                to: "C".into()
            })
        );
        let back_and_forth = vec![
            rec(0.0, Agent::Cat, "C"),
            rec(0.5, Agent::Cat, "U"),
            rec(0.7, Agent::Cat, "C"),
        ];
        assert!(check_no_paradox(&back_and_forth, &cat1_rules()).is_err());
    }

    #[test]
    fn unknown_state_and_time_reversal() {
        let records = vec![rec(0.0, Agent::Cat, "Z")];
        assert!(matches!(
            check_no_paradox(&records, &cat1_rules()),
            Err(ParadoxViolation::UnknownState { .. })
        ));
        let records = vec![rec(0.5, Agent::Cat, "C"), rec(0.2, Agent::Cat, "C")];
        assert!(matches!(
            check_no_paradox(&records, &cat1_rules()),
            Err(ParadoxViolation::TimeReversal { .. })
        ));
    }
}
