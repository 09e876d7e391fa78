//! Labeled components, current edges and superpositions.
//!
//! A [`Superposition`] only tracks square moduli (probability mass) and the
//! currents moving mass between components. There are no amplitudes or
//! phases; interference is outside the model.

use std::fmt;

use thiserror::Error;

use crate::dynamics::RateFunction;

/// Tolerance used by [`Superposition::validate`] for mass accounting.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Physical role of a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subsystem {
    Detector,
    Mechanism,
    InternalClock,
    Indicator,
    Cat,
    ObserverBrain,
    ObserverRaw,
}

impl Subsystem {
    /// The slot this role occupies. The unknown observer `X` and the brain
    /// state it morphs into share one slot.
    pub fn slot(self) -> Slot {
        match self {
            Subsystem::Detector => Slot::Detector,
            Subsystem::Mechanism => Slot::Mechanism,
            Subsystem::InternalClock => Slot::InternalClock,
            Subsystem::Indicator => Slot::Indicator,
            Subsystem::Cat => Slot::Cat,
            Subsystem::ObserverBrain | Subsystem::ObserverRaw => Slot::Observer,
        }
    }

    pub fn is_phased(self) -> bool {
        matches!(self, Subsystem::Mechanism | Subsystem::InternalClock)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subsystem::Detector => "detector",
            Subsystem::Mechanism => "mechanism",
            Subsystem::InternalClock => "internal-clock",
            Subsystem::Indicator => "indicator",
            Subsystem::Cat => "cat",
            Subsystem::ObserverBrain => "observer-brain",
            Subsystem::ObserverRaw => "observer-raw",
        }
    }
}

/// A position in a component's label product. Labels are kept in slot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Detector,
    Mechanism,
    InternalClock,
    Indicator,
    Cat,
    Observer,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Detector => "detector",
            Slot::Mechanism => "mechanism",
            Slot::InternalClock => "internal-clock",
            Slot::Indicator => "indicator",
            Slot::Cat => "cat",
            Slot::Observer => "observer",
        }
    }
}

/// One subsystem's state symbol, e.g. `d1`, `M(t)` or `B_C`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLabel {
    pub subsystem: Subsystem,
    pub symbol: &'static str,
    /// Position along a classical mechanism, 0 at the initial configuration
    /// and 1 at the final one. Only mechanisms and internal clocks have one.
    pub phase: Option<f64>,
}

impl StateLabel {
    pub fn new(subsystem: Subsystem, symbol: &'static str) -> Self {
        let phase = subsystem.is_phased().then_some(0.0);
        Self {
            subsystem,
            symbol,
            phase,
        }
    }

    pub fn phased(subsystem: Subsystem, symbol: &'static str, phase: f64) -> Self {
        Self {
            subsystem,
            symbol,
            phase: Some(phase),
        }
    }

    pub fn slot(&self) -> Slot {
        self.subsystem.slot()
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.subsystem, self.phase) {
            (Subsystem::Mechanism, Some(p)) if p <= 0.0 => write!(f, "{}(t_0)", self.symbol),
            (Subsystem::Mechanism, Some(p)) if p >= 1.0 => write!(f, "{}(t_f)", self.symbol),
            (Subsystem::InternalClock, Some(p)) if p <= 0.0 => write!(f, "{}(t_0)", self.symbol),
            (Subsystem::InternalClock, Some(p)) if p >= 1.0 => {
                write!(f, "{}(t_ff)", self.symbol)
            }
            (_, Some(p)) => write!(f, "{}({:.3})", self.symbol, p),
            (_, None) => f.write_str(self.symbol),
        }
    }
}

/// Renders a label product the way it is written by hand: `d1·M(t_f)·i1`.
pub fn format_labels(labels: &[StateLabel]) -> String {
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        if i > 0 {
            out.push('·');
        }
        out.push_str(&label.to_string());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentId(pub u64);

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Realized,
    Ready,
    Phantom,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Realized => "realized",
            Kind::Ready => "ready",
            Kind::Phantom => "phantom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessKind {
    /// The device `M(t)` started by a detector capture.
    Mechanism,
    /// The cat's own alarm `N(t)`.
    InternalClock,
    /// The observer's look, lasting `obs_pi` seconds.
    Observation,
}

impl ProcessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessKind::Mechanism => "M",
            ProcessKind::InternalClock => "N",
            ProcessKind::Observation => "observation",
        }
    }

    /// Slot whose label phase mirrors the process progress.
    pub fn phase_slot(self) -> Option<Slot> {
        match self {
            ProcessKind::Mechanism => Some(Slot::Mechanism),
            ProcessKind::InternalClock => Some(Slot::InternalClock),
            ProcessKind::Observation => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessStatus {
    /// Waits for a schedule entry to start it.
    Dormant,
    /// Starts when its component is realized by a reduction.
    Armed,
    Running,
    Complete,
}

/// Relabels `slot` from `from` to `to` when a process completes.
#[derive(Debug, Clone, PartialEq)]
pub struct Rewrite {
    pub slot: Slot,
    pub from: &'static str,
    pub to: &'static str,
}

impl Rewrite {
    pub fn new(slot: Slot, from: &'static str, to: &'static str) -> Self {
        Self { slot, from, to }
    }
}

/// A classical, continuous development attached to a component.
///
/// Processes only advance while their component is realized; ready and
/// phantom components cannot evolve on their own.
#[derive(Debug, Clone, PartialEq)]
pub struct Process {
    pub kind: ProcessKind,
    pub duration: f64,
    pub progress: f64,
    pub status: ProcessStatus,
    pub rewrites: Vec<Rewrite>,
}

impl Process {
    pub fn new(kind: ProcessKind, duration: f64, status: ProcessStatus) -> Self {
        Self {
            kind,
            duration,
            progress: 0.0,
            status,
            rewrites: Vec::new(),
        }
    }

    pub fn with_rewrite(mut self, rewrite: Rewrite) -> Self {
        self.rewrites.push(rewrite);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: ComponentId,
    /// One label per declared slot, in slot order.
    pub labels: Vec<StateLabel>,
    pub modulus: f64,
    pub kind: Kind,
    pub born_at: f64,
    /// Slots holding underlined (ready) states.
    pub ready_symbols: Vec<Slot>,
    pub processes: Vec<Process>,
}

impl Component {
    pub fn label(&self, slot: Slot) -> Option<&StateLabel> {
        self.labels.iter().find(|l| l.slot() == slot)
    }

    pub fn label_mut(&mut self, slot: Slot) -> Option<&mut StateLabel> {
        self.labels.iter_mut().find(|l| l.slot() == slot)
    }

    pub fn symbol(&self, slot: Slot) -> Option<&'static str> {
        self.label(slot).map(|l| l.symbol)
    }

    pub fn has_running_process(&self) -> bool {
        self.processes
            .iter()
            .any(|p| p.status == ProcessStatus::Running)
    }

    pub fn display_labels(&self) -> String {
        format_labels(&self.labels)
    }

    /// Labels with ready states underlined as `_d1_`, for diagnostics.
    pub fn display_marked(&self) -> String {
        let mut out = String::new();
        for (i, label) in self.labels.iter().enumerate() {
            if i > 0 {
                out.push('·');
            }
            if self.ready_symbols.contains(&label.slot()) {
                out.push_str(&format!("_{label}_"));
            } else {
                out.push_str(&label.to_string());
            }
        }
        out
    }
}

/// Declared slot plus the symbols it may hold.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecl {
    pub slot: Slot,
    pub alphabet: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layout {
    pub slots: Vec<SlotDecl>,
}

impl Layout {
    pub fn new(slots: Vec<SlotDecl>) -> Self {
        Self { slots }
    }

    pub fn declare(mut self, slot: Slot, alphabet: &[&'static str]) -> Self {
        self.slots.push(SlotDecl {
            slot,
            alphabet: alphabet.to_vec(),
        });
        self
    }

    pub fn has(&self, slot: Slot) -> bool {
        self.slots.iter().any(|d| d.slot == slot)
    }

    /// Checks one-label-per-slot and alphabets; returns the labels in slot order.
    pub fn arrange(&self, labels: Vec<StateLabel>) -> Result<Vec<StateLabel>, ModelError> {
        let mut ordered: Vec<Option<StateLabel>> = vec![None; self.slots.len()];
        for label in labels {
            let slot = label.slot();
            let idx = self
                .slots
                .iter()
                .position(|d| d.slot == slot)
                .ok_or_else(|| {
                    ModelError::Schema(format!("undeclared subsystem {}", slot.as_str()))
                })?;
            if ordered[idx].is_some() {
                return Err(ModelError::Schema(format!(
                    "duplicate subsystem {}",
                    slot.as_str()
                )));
            }
            check_label(&self.slots[idx], &label)?;
            ordered[idx] = Some(label);
        }
        ordered
            .into_iter()
            .zip(&self.slots)
            .map(|(l, d)| {
                l.ok_or_else(|| {
                    ModelError::Schema(format!("missing subsystem {}", d.slot.as_str()))
                })
            })
            .collect()
    }
}

fn check_label(decl: &SlotDecl, label: &StateLabel) -> Result<(), ModelError> {
    if !decl.alphabet.contains(&label.symbol) {
        return Err(ModelError::Schema(format!(
            "symbol {} not in the {} alphabet",
            label.symbol,
            decl.slot.as_str()
        )));
    }
    match (label.subsystem.is_phased(), label.phase) {
        (true, Some(p)) if (0.0..=1.0).contains(&p) => Ok(()),
        (true, Some(p)) => Err(ModelError::Domain(format!("phase {p} outside [0, 1]"))),
        (true, None) => Err(ModelError::Schema(format!(
            "{} label {} needs a phase",
            label.subsystem.as_str(),
            label.symbol
        ))),
        (false, Some(_)) => Err(ModelError::Schema(format!(
            "{} label {} cannot carry a phase",
            label.subsystem.as_str(),
            label.symbol
        ))),
        (false, None) => Ok(()),
    }
}

/// What a spawn creates: the labels that change and the processes waiting
/// for the new component to be realized.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    /// Labels replacing the source's labels in their slots. All of them are
    /// new states and therefore ready.
    pub new_labels: Vec<StateLabel>,
    pub armed: Vec<Process>,
    pub rate: RateFunction,
    /// Re-create the ready component whenever the source row evolves,
    /// leaving a phantom behind each time.
    pub tracks_source: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentEdge {
    pub from: ComponentId,
    pub to: ComponentId,
    pub interaction: Interaction,
    pub active_until: f64,
    pub active: bool,
    /// Number of ready components this edge has superseded.
    pub phantom_count: u64,
}

impl CurrentEdge {
    pub fn rate(&self) -> &RateFunction {
        &self.interaction.rate
    }
}

/// Maps the observed subsystem to the brain state that is conscious of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverCoupling {
    pub watched: Slot,
    pub brains: Vec<(&'static str, &'static str)>,
}

impl ObserverCoupling {
    pub fn brain_for(&self, watched_symbol: &str) -> Option<&'static str> {
        self.brains
            .iter()
            .find(|(w, _)| *w == watched_symbol)
            .map(|(_, b)| *b)
    }

    /// Replaces the raw observer with the brain state for what it watches.
    pub fn board(&self, component: &mut Component) {
        let watched = component.symbol(self.watched);
        let brain = watched.and_then(|w| self.brain_for(w));
        if let (Some(brain), Some(label)) = (brain, component.label_mut(Slot::Observer)) {
            *label = StateLabel::new(Subsystem::ObserverBrain, brain);
        }
    }

    /// Keeps an on-board observer's brain in step with what it watches.
    pub fn sync(&self, component: &mut Component) {
        let on_board = component
            .label(Slot::Observer)
            .is_some_and(|l| l.subsystem == Subsystem::ObserverBrain);
        if on_board {
            self.board(component);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ReadyEmitsCurrent {
        edge: usize,
        from: ComponentId,
    },
    PhantomEmitsCurrent {
        edge: usize,
        from: ComponentId,
    },
    DanglingEdge {
        edge: usize,
    },
    MassAccounting {
        recorded: f64,
        summed: f64,
    },
    NegativeModulus {
        component: ComponentId,
    },
    DuplicateId {
        component: ComponentId,
    },
    Labels {
        component: ComponentId,
        reason: String,
    },
    KindMismatch {
        component: ComponentId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ReadyEmitsCurrent { edge, from } => {
                write!(f, "ready component emits current (edge {edge} from {from})")
            }
            Violation::PhantomEmitsCurrent { edge, from } => {
                write!(
                    f,
                    "phantom component emits current (edge {edge} from {from})"
                )
            }
            Violation::DanglingEdge { edge } => {
                write!(f, "edge {edge} references a missing component")
            }
            Violation::MassAccounting { recorded, summed } => {
                write!(
                    f,
                    "mass accounting: total_s {recorded} but components sum to {summed}"
                )
            }
            Violation::NegativeModulus { component } => {
                write!(f, "negative modulus on {component}")
            }
            Violation::DuplicateId { component } => write!(f, "duplicate id {component}"),
            Violation::Labels { component, reason } => write!(f, "labels of {component}: {reason}"),
            Violation::KindMismatch { component } => {
                write!(f, "{component}: kind disagrees with its ready states")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Superposition {
    pub layout: Layout,
    pub components: Vec<Component>,
    pub edges: Vec<CurrentEdge>,
    /// Recorded total square modulus `s`. Operations keep it in step with the
    /// components; [`Superposition::validate`] checks that they agree.
    pub total_s: f64,
    pub coupling: Option<ObserverCoupling>,
    /// Mass removed by pruning phantoms.
    pub pruned_mass: f64,
    next_id: u64,
}

impl Superposition {
    pub fn new(layout: Layout) -> Self {
        Self {
            layout,
            components: Vec::new(),
            edges: Vec::new(),
            total_s: 0.0,
            coupling: None,
            pruned_mass: 0.0,
            next_id: 0,
        }
    }

    pub fn with_coupling(mut self, coupling: ObserverCoupling) -> Self {
        self.coupling = Some(coupling);
        self
    }

    pub fn fresh_id(&mut self) -> ComponentId {
        let id = ComponentId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Builds a component with a fresh id. `underlined` lists the slots that
    /// hold ready states; it must be nonempty exactly when `kind` is ready.
    pub fn make_component(
        &mut self,
        labels: Vec<StateLabel>,
        modulus: f64,
        kind: Kind,
        underlined: &[Slot],
        born_at: f64,
    ) -> Result<Component, ModelError> {
        if !modulus.is_finite() || modulus < 0.0 {
            return Err(ModelError::Domain(format!(
                "modulus {modulus} must be >= 0"
            )));
        }
        let labels = self.layout.arrange(labels)?;
        match kind {
            Kind::Ready if underlined.is_empty() => {
                return Err(ModelError::Schema(
                    "a ready component needs at least one ready state".into(),
                ))
            }
            Kind::Realized if !underlined.is_empty() => {
                return Err(ModelError::Schema(
                    "a realized component has no ready states".into(),
                ))
            }
            _ => {}
        }
        for slot in underlined {
            if !self.layout.has(*slot) {
                return Err(ModelError::Schema(format!(
                    "ready state in undeclared subsystem {}",
                    slot.as_str()
                )));
            }
        }
        Ok(Component {
            id: self.fresh_id(),
            labels,
            modulus,
            kind,
            born_at,
            ready_symbols: underlined.to_vec(),
            processes: Vec::new(),
        })
    }

    /// Adds a component and accounts for its mass.
    pub fn insert(&mut self, component: Component) -> ComponentId {
        let id = component.id;
        self.total_s += component.modulus;
        self.components.push(component);
        id
    }

    pub fn get(&self, id: ComponentId) -> Option<&Component> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn get_mut(&mut self, id: ComponentId) -> Option<&mut Component> {
        self.components.iter_mut().find(|c| c.id == id)
    }

    pub fn index_of(&self, id: ComponentId) -> Option<usize> {
        self.components.iter().position(|c| c.id == id)
    }

    pub fn realized(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| c.kind == Kind::Realized)
    }

    /// Components that are not phantoms.
    pub fn live(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| c.kind != Kind::Phantom)
    }

    pub fn has_active_edges(&self) -> bool {
        self.edges.iter().any(|e| e.active)
    }

    /// Σ modulus over all components, phantoms included until pruned.
    pub fn total_modulus(&self) -> f64 {
        total_modulus(self)
    }

    /// Checks every structural invariant; violations are returned as data.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let mut seen = Vec::with_capacity(self.components.len());
        for c in &self.components {
            if seen.contains(&c.id) {
                out.push(Violation::DuplicateId { component: c.id });
            }
            seen.push(c.id);
            if c.modulus.is_nan() || c.modulus < 0.0 {
                out.push(Violation::NegativeModulus { component: c.id });
            }
            if let Err(e) = self.layout.arrange(c.labels.clone()) {
                out.push(Violation::Labels {
                    component: c.id,
                    reason: e.to_string(),
                });
            }
            let kind_ok = match c.kind {
                Kind::Ready => !c.ready_symbols.is_empty(),
                Kind::Realized => c.ready_symbols.is_empty(),
                Kind::Phantom => true,
            };
            if !kind_ok {
                out.push(Violation::KindMismatch { component: c.id });
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            let (Some(from), Some(_)) = (self.get(e.from), self.get(e.to)) else {
                out.push(Violation::DanglingEdge { edge: i });
                continue;
            };
            if !e.active || e.rate().is_identically_zero() {
                continue;
            }
            match from.kind {
                Kind::Ready => out.push(Violation::ReadyEmitsCurrent {
                    edge: i,
                    from: e.from,
                }),
                Kind::Phantom => out.push(Violation::PhantomEmitsCurrent {
                    edge: i,
                    from: e.from,
                }),
                Kind::Realized => {}
            }
        }
        let summed = total_modulus(self);
        if (summed - self.total_s).abs() > MASS_TOLERANCE {
            out.push(Violation::MassAccounting {
                recorded: self.total_s,
                summed,
            });
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

pub fn total_modulus(sup: &Superposition) -> f64 {
    sup.components.iter().map(|c| c.modulus).sum()
}
